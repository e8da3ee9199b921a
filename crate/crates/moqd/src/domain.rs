//! Analytic crystal evaluation domain: genotype encoding, periodic
//! Lennard-Jones energy and forces (minimum-image convention), a
//! coordination-based magnetism score that trades off against packing
//! density, two structural feature descriptors, template initialization,
//! gradient relaxation and offspring filtering.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::archive::{FeatureBounds, FeatureVector};
use crate::pareto::ObjectiveVector;
use crate::{Error, Result};

/// Hard overlap rejection distance in Angstrom.
pub const OVERLAP_DISTANCE: f64 = 0.1;

/// Width of the smooth coordination sigmoid.
const COORDINATION_WIDTH: f64 = 0.1;

/// Decay constant of the magnetism weight w(c) = exp(-c / 4).
const MAGNETISM_DECAY: f64 = 4.0;

/// Unit-cell parameterization of a crystal structure: three lattice
/// lengths (Angstrom), three lattice angles (degrees) and fractional
/// atom coordinates with per-atom species labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalGenotype {
    pub lengths: [f64; 3],
    pub angles: [f64; 3],
    pub frac_coords: Vec<[f64; 3]>,
    pub species: Vec<String>,
}

impl CrystalGenotype {
    pub fn atom_count(&self) -> usize {
        self.frac_coords.len()
    }

    /// Lattice vectors as rows, standard crystallographic convention
    /// (a along x, b in the xy-plane).
    pub fn lattice_matrix(&self) -> [[f64; 3]; 3] {
        let [a, b, c] = self.lengths;
        let [alpha, beta, gamma] = self.angles.map(|d| d.to_radians());
        let (ca, cb, cg) = (alpha.cos(), beta.cos(), gamma.cos());
        let sg = gamma.sin();
        let cx = c * cb;
        let cy = c * (ca - cb * cg) / sg;
        let cz2 = c * c - cx * cx - cy * cy;
        let cz = cz2.max(0.0).sqrt();
        [[a, 0.0, 0.0], [b * cg, b * sg, 0.0], [cx, cy, cz]]
    }

    pub fn volume(&self) -> f64 {
        let m = self.lattice_matrix();
        (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
            .abs()
    }

    pub fn cartesian_coords(&self) -> Vec<[f64; 3]> {
        let m = self.lattice_matrix();
        self.frac_coords.iter().map(|f| frac_to_cart(f, &m)).collect()
    }

    /// Structural validity per the domain rules.
    pub fn validate(&self, params: &DomainParams) -> Result<()> {
        if self.frac_coords.len() != self.species.len() {
            return Err(Error::InvalidGenotype(format!(
                "{} coordinates vs {} species labels",
                self.frac_coords.len(),
                self.species.len()
            )));
        }
        if self.lengths.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidGenotype("non-positive lattice length".into()));
        }
        if self.angles.iter().any(|&a| a <= 20.0 || a >= 160.0) {
            return Err(Error::InvalidGenotype("lattice angle outside (20, 160)".into()));
        }
        let n = self.atom_count().max(1);
        let floor = params.min_volume_per_atom * n as f64;
        if self.volume() < floor {
            return Err(Error::InvalidGenotype(format!(
                "volume {:.3} below floor {:.3}",
                self.volume(),
                floor
            )));
        }
        for s in &self.species {
            params.species_index(s)?;
        }
        Ok(())
    }
}

fn frac_to_cart(f: &[f64; 3], m: &[[f64; 3]; 3]) -> [f64; 3] {
    [
        f[0] * m[0][0] + f[1] * m[1][0] + f[2] * m[2][0],
        f[0] * m[0][1] + f[1] * m[1][1] + f[2] * m[2][1],
        f[0] * m[0][2] + f[1] * m[1][2] + f[2] * m[2][2],
    ]
}

/// Minimum-image displacement from atom i to atom j (single periodic
/// image, searched over the 27 neighbor cells).
pub fn min_image(delta_frac: [f64; 3], m: &[[f64; 3]; 3]) -> ([f64; 3], f64) {
    // wrap the fractional delta into [-0.5, 0.5) first
    let base = delta_frac.map(|d| d - d.round());
    let mut best = frac_to_cart(&base, m);
    let mut best_r2 = best[0] * best[0] + best[1] * best[1] + best[2] * best[2];
    for sx in -1..=1 {
        for sy in -1..=1 {
            for sz in -1..=1 {
                if sx == 0 && sy == 0 && sz == 0 {
                    continue;
                }
                let f = [
                    base[0] + sx as f64,
                    base[1] + sy as f64,
                    base[2] + sz as f64,
                ];
                let v = frac_to_cart(&f, m);
                let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                if r2 < best_r2 {
                    best_r2 = r2;
                    best = v;
                }
            }
        }
    }
    (best, best_r2.sqrt())
}

/// Per-species interaction and magnetic parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeciesParams {
    pub label: String,
    pub epsilon: f64,
    pub sigma: f64,
    /// magnetic moment mu_s
    pub moment: f64,
}

/// Parameters of the analytic evaluation domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainParams {
    pub species: Vec<SpeciesParams>,
    /// species label for each atom site in a cell
    pub composition: Vec<String>,
    /// pair-interaction cutoff radius (Angstrom)
    pub cutoff: f64,
    /// coordination cutoff r_c for the magnetism score
    pub coordination_cutoff: f64,
    pub feature_bounds: FeatureBounds,
    /// volume floor in Angstrom^3 per atom
    pub min_volume_per_atom: f64,
    /// target total cell volume for initialization (Angstrom^3)
    pub initial_cell_volume: f64,
    /// relative std of the sampled initial volume
    pub initial_volume_spread: f64,
    /// std of the Gaussian jitter on initial fractional coordinates
    pub initial_jitter: f64,
    /// Pair-summation convention. `true` keeps only the single nearest
    /// periodic image of each pair; `false` sums every image within the
    /// cutoff. The two agree when the cell is at least twice the cutoff
    /// wide; for smaller cells the nearest-image-only energy has kinks at
    /// image ties (forces do not vanish on perfect lattices), so the full
    /// image sum is the default.
    #[serde(default)]
    pub min_image: bool,
}

impl Default for DomainParams {
    /// Desk-scale single-species system: 8 Lennard-Jones atoms.
    fn default() -> Self {
        Self {
            species: vec![SpeciesParams {
                label: "A".into(),
                epsilon: 1.0,
                sigma: 1.0,
                moment: 1.0,
            }],
            composition: vec!["A".into(); 8],
            cutoff: 2.0,
            coordination_cutoff: 1.5,
            feature_bounds: FeatureBounds::new([0.6, 0.5], [3.0, 12.0]),
            min_volume_per_atom: 0.5,
            initial_cell_volume: 12.0,
            initial_volume_spread: 0.1,
            initial_jitter: 0.02,
            min_image: false,
        }
    }
}

impl DomainParams {
    pub fn species_index(&self, label: &str) -> Result<usize> {
        self.species
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| Error::UnknownSpecies(label.to_string()))
    }

    /// Lorentz-Berthelot mixing for a species pair.
    pub fn pair_params(&self, i: usize, j: usize) -> (f64, f64) {
        let (si, sj) = (&self.species[i], &self.species[j]);
        ((si.epsilon * sj.epsilon).sqrt(), 0.5 * (si.sigma + sj.sigma))
    }

    pub fn distinct_species_count(&self) -> usize {
        let mut labels: Vec<&str> = self.composition.iter().map(|s| s.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        labels.len()
    }

    fn species_indices(&self, g: &CrystalGenotype) -> Result<Vec<usize>> {
        g.species.iter().map(|s| self.species_index(s)).collect()
    }
}

/// Where a solution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorTag {
    Init,
    Strain,
    Permutation,
}

impl std::fmt::Display for OperatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatorTag::Init => write!(f, "init"),
            OperatorTag::Strain => write!(f, "strain"),
            OperatorTag::Permutation => write!(f, "permutation"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub iteration: usize,
    pub parent: Option<u64>,
    pub operator: OperatorTag,
}

/// A fully evaluated genotype: the unit stored in archives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluatedSolution {
    pub id: u64,
    pub genotype: CrystalGenotype,
    pub objectives: ObjectiveVector,
    pub features: FeatureVector,
    /// max per-atom force magnitude after relaxation (eV/Angstrom analog)
    pub force_norm: f64,
    pub provenance: Provenance,
}

/// Perpendicular width of the cell along each lattice direction: the
/// distance between the two cell faces spanned by the other two vectors.
fn perpendicular_widths(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let bc = cross(m[1], m[2]);
    let volume = (m[0][0] * bc[0] + m[0][1] * bc[1] + m[0][2] * bc[2]).abs();
    [
        volume / norm(bc),
        volume / norm(cross(m[2], m[0])),
        volume / norm(cross(m[0], m[1])),
    ]
}

/// Visit every periodic image of the fractional separation `delta` whose
/// Cartesian distance is below `reach`. The per-axis translation ranges
/// are bounded through the perpendicular widths, so only candidate
/// images are examined. Calls `visit(cartesian_separation, distance)`;
/// the zero-distance image (a pair of coincident sites) is skipped.
fn for_each_image(
    delta: [f64; 3],
    m: &[[f64; 3]; 3],
    widths: &[f64; 3],
    reach: f64,
    visit: &mut impl FnMut([f64; 3], f64),
) {
    let wrapped = [
        delta[0] - delta[0].round(),
        delta[1] - delta[1].round(),
        delta[2] - delta[2].round(),
    ];
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for k in 0..3 {
        // |wrapped_k + t_k| * width_k < reach bounds the k-th component
        let max_off = reach / widths[k];
        lo[k] = (-max_off - wrapped[k]).ceil() as i64;
        hi[k] = (max_off - wrapped[k]).floor() as i64;
    }
    for tx in lo[0]..=hi[0] {
        for ty in lo[1]..=hi[1] {
            for tz in lo[2]..=hi[2] {
                let df = [
                    wrapped[0] + tx as f64,
                    wrapped[1] + ty as f64,
                    wrapped[2] + tz as f64,
                ];
                let mut d = [0.0; 3];
                for (k, dk) in d.iter_mut().enumerate() {
                    *dk = df[0] * m[0][k] + df[1] * m[1][k] + df[2] * m[2][k];
                }
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if r < reach && r > 1e-12 {
                    visit(d, r);
                }
            }
        }
    }
}

/// Total shifted Lennard-Jones energy over unique atom pairs, using the
/// pair-summation convention selected by `DomainParams::min_image`.
pub fn lj_energy(g: &CrystalGenotype, p: &DomainParams) -> Result<f64> {
    let m = g.lattice_matrix();
    let idx = p.species_indices(g)?;
    lj_energy_inner(&g.frac_coords, &idx, &m, p)
}

fn lj_pair_energy(r: f64, eps: f64, sigma: f64, cutoff: f64) -> f64 {
    if r >= cutoff {
        return 0.0;
    }
    let s6 = (sigma / r).powi(6);
    let sc6 = (sigma / cutoff).powi(6);
    4.0 * eps * (s6 * s6 - s6) - 4.0 * eps * (sc6 * sc6 - sc6)
}

fn lj_energy_inner(
    frac: &[[f64; 3]],
    species_idx: &[usize],
    m: &[[f64; 3]; 3],
    p: &DomainParams,
) -> Result<f64> {
    let n = frac.len();
    let widths = perpendicular_widths(m);
    let mut energy = 0.0;
    for i in 0..n {
        for j in i..n {
            let delta = [
                frac[j][0] - frac[i][0],
                frac[j][1] - frac[i][1],
                frac[j][2] - frac[i][2],
            ];
            if i != j {
                let (_, r) = min_image(delta, m);
                if r < OVERLAP_DISTANCE {
                    return Err(Error::Overlap { i, j, distance: r });
                }
            }
            let (eps, sigma) = p.pair_params(species_idx[i], species_idx[j]);
            if p.min_image {
                if i != j {
                    let (_, r) = min_image(delta, m);
                    energy += lj_pair_energy(r, eps, sigma, p.cutoff);
                }
            } else {
                let mut acc = 0.0;
                for_each_image(delta, m, &widths, p.cutoff, &mut |_, r| {
                    acc += lj_pair_energy(r, eps, sigma, p.cutoff);
                });
                // a site's interactions with its own images come in
                // (+t, -t) pairs, each visited once per direction
                energy += if i == j { 0.5 * acc } else { acc };
            }
        }
    }
    Ok(energy)
}

/// Analytic negative gradient of `lj_energy` with respect to Cartesian
/// atom positions. The net force sums to zero by construction.
pub fn lj_forces(g: &CrystalGenotype, p: &DomainParams) -> Result<Vec<[f64; 3]>> {
    let m = g.lattice_matrix();
    let idx = p.species_indices(g)?;
    lj_forces_inner(&g.frac_coords, &idx, &m, p)
}

fn lj_forces_inner(
    frac: &[[f64; 3]],
    species_idx: &[usize],
    m: &[[f64; 3]; 3],
    p: &DomainParams,
) -> Result<Vec<[f64; 3]>> {
    let n = frac.len();
    let widths = perpendicular_widths(m);
    let mut forces = vec![[0.0; 3]; n];
    // a site's interaction with its own periodic images depends only on
    // the lattice, not on the site position, so self terms carry no force
    for i in 0..n {
        for j in i + 1..n {
            let delta = [
                frac[j][0] - frac[i][0],
                frac[j][1] - frac[i][1],
                frac[j][2] - frac[i][2],
            ];
            let (dmin, rmin) = min_image(delta, m);
            if rmin < OVERLAP_DISTANCE {
                return Err(Error::Overlap { i, j, distance: rmin });
            }
            let (eps, sigma) = p.pair_params(species_idx[i], species_idx[j]);
            // F_i = dE/dr * d / r with d pointing from i to j
            let mut add_pair = |d: [f64; 3], r: f64| {
                let s6 = (sigma / r).powi(6);
                let de_dr = 4.0 * eps * (-12.0 * s6 * s6 + 6.0 * s6) / r;
                for k in 0..3 {
                    let f = de_dr * d[k] / r;
                    forces[i][k] += f;
                    forces[j][k] -= f;
                }
            };
            if p.min_image {
                if rmin < p.cutoff {
                    add_pair(dmin, rmin);
                }
            } else {
                for_each_image(delta, m, &widths, p.cutoff, &mut add_pair);
            }
        }
    }
    Ok(forces)
}

pub fn max_force_norm(forces: &[[f64; 3]]) -> f64 {
    forces
        .iter()
        .map(|f| (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt())
        .fold(0.0, f64::max)
}

/// Magnetism score: |sum_i mu_i * w(c_i)| with a smooth coordination
/// count c_i and w(c) = exp(-c/4), so dense packings score low.
pub fn magnetism(g: &CrystalGenotype, p: &DomainParams) -> Result<f64> {
    let m = g.lattice_matrix();
    let idx = p.species_indices(g)?;
    let n = g.frac_coords.len();
    let widths = perpendicular_widths(&m);
    // beyond this distance the logistic weight is below ~2e-9
    let reach = p.coordination_cutoff + 20.0 * COORDINATION_WIDTH;
    let weight = |r: f64| 1.0 / (1.0 + ((r - p.coordination_cutoff) / COORDINATION_WIDTH).exp());
    let mut coordination = vec![0.0_f64; n];
    for i in 0..n {
        for j in i..n {
            let delta = [
                g.frac_coords[j][0] - g.frac_coords[i][0],
                g.frac_coords[j][1] - g.frac_coords[i][1],
                g.frac_coords[j][2] - g.frac_coords[i][2],
            ];
            if i != j {
                let (_, r) = min_image(delta, &m);
                if r < OVERLAP_DISTANCE {
                    return Err(Error::Overlap { i, j, distance: r });
                }
            }
            if p.min_image {
                if i != j {
                    let (_, r) = min_image(delta, &m);
                    let w = weight(r);
                    coordination[i] += w;
                    coordination[j] += w;
                }
            } else {
                // every image of j within reach is one neighbor of i and
                // vice versa; a site's own images count toward its own
                // coordination, one neighbor per image
                let mut acc = 0.0;
                for_each_image(delta, &m, &widths, reach, &mut |_, r| {
                    acc += weight(r);
                });
                coordination[i] += acc;
                if i != j {
                    coordination[j] += acc;
                }
            }
        }
    }
    let total: f64 = (0..n)
        .map(|i| p.species[idx[i]].moment * (-coordination[i] / MAGNETISM_DECAY).exp())
        .sum();
    Ok(total.abs())
}

/// Feature descriptors: mean nearest-neighbor distance (band-gap analog)
/// and cell volume per atom (stiffness analog), clamped to bounds.
pub fn compute_features(g: &CrystalGenotype, p: &DomainParams) -> Result<FeatureVector> {
    let m = g.lattice_matrix();
    let n = g.frac_coords.len();
    let d1 = if n < 2 {
        // degenerate single-atom cell: nearest periodic copy
        g.lengths.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        let mut sum = 0.0;
        for i in 0..n {
            let mut nearest = f64::INFINITY;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let delta = [
                    g.frac_coords[j][0] - g.frac_coords[i][0],
                    g.frac_coords[j][1] - g.frac_coords[i][1],
                    g.frac_coords[j][2] - g.frac_coords[i][2],
                ];
                let (_, r) = min_image(delta, &m);
                nearest = nearest.min(r);
            }
            sum += nearest;
        }
        sum / n as f64
    };
    let d2 = g.volume() / n.max(1) as f64;
    Ok(FeatureVector::clamped([d1, d2], &p.feature_bounds))
}

/// Evaluate a genotype into the archive-ready record.
pub fn evaluate(
    g: CrystalGenotype,
    p: &DomainParams,
    id: u64,
    provenance: Provenance,
) -> Result<EvaluatedSolution> {
    let energy = lj_energy(&g, p)?;
    let mag = magnetism(&g, p)?;
    let features = compute_features(&g, p)?;
    let force_norm = max_force_norm(&lj_forces(&g, p)?);
    Ok(EvaluatedSolution {
        id,
        genotype: g,
        objectives: ObjectiveVector::pair(-energy, mag)?,
        features,
        force_norm,
        provenance,
    })
}

/// Keep a solution iff its residual force is at or below the threshold
/// and every objective is at or above the reference point.
pub fn filter_solution(
    s: &EvaluatedSolution,
    force_threshold: f64,
    reference: &ObjectiveVector,
) -> bool {
    s.force_norm <= force_threshold
        && s.objectives
            .values()
            .iter()
            .zip(reference.values())
            .all(|(o, r)| o >= r)
}

// ---------------------------------------------------------------------------
// initialization templates

struct Template {
    name: &'static str,
    /// fractional positions in the cubic basis cell with a two-role
    /// species assignment (rocksalt / zincblende style)
    sites: Vec<([f64; 3], usize)>,
}

fn templates(two_species: bool) -> Vec<Template> {
    let mut t = vec![
        Template {
            name: "sc",
            sites: vec![([0.0, 0.0, 0.0], 0)],
        },
        Template {
            name: "bcc",
            sites: vec![([0.0, 0.0, 0.0], 0), ([0.5, 0.5, 0.5], 1)],
        },
        Template {
            name: "fcc",
            sites: vec![
                ([0.0, 0.0, 0.0], 0),
                ([0.5, 0.5, 0.0], 0),
                ([0.5, 0.0, 0.5], 0),
                ([0.0, 0.5, 0.5], 0),
            ],
        },
        Template {
            name: "diamond",
            sites: vec![
                ([0.0, 0.0, 0.0], 0),
                ([0.5, 0.5, 0.0], 0),
                ([0.5, 0.0, 0.5], 0),
                ([0.0, 0.5, 0.5], 0),
                ([0.25, 0.25, 0.25], 1),
                ([0.75, 0.75, 0.25], 1),
                ([0.75, 0.25, 0.75], 1),
                ([0.25, 0.75, 0.75], 1),
            ],
        },
    ];
    if two_species {
        // rocksalt assignment: interpenetrating fcc sublattices
        t.push(Template {
            name: "rocksalt",
            sites: vec![
                ([0.0, 0.0, 0.0], 0),
                ([0.5, 0.5, 0.0], 0),
                ([0.5, 0.0, 0.5], 0),
                ([0.0, 0.5, 0.5], 0),
                ([0.5, 0.0, 0.0], 1),
                ([0.0, 0.5, 0.0], 1),
                ([0.0, 0.0, 0.5], 1),
                ([0.5, 0.5, 0.5], 1),
            ],
        });
    }
    t
}

/// Most cubic factorization of `m` into three factors, largest first.
fn supercell_factors(m: usize) -> [usize; 3] {
    let mut best = [m, 1, 1];
    let mut best_spread = m as f64;
    for x in 1..=m {
        if m % x != 0 {
            continue;
        }
        let rest = m / x;
        for y in 1..=rest {
            if rest % y != 0 {
                continue;
            }
            let z = rest / y;
            let hi = x.max(y).max(z) as f64;
            let lo = x.min(y).min(z) as f64;
            if hi / lo < best_spread {
                best_spread = hi / lo;
                best = [x, y, z];
            }
        }
    }
    best.sort_unstable_by(|a, b| b.cmp(a));
    best
}

/// Expand a template into an `n`-atom genotype with the requested cell
/// volume; species roles are mapped onto the composition multiset.
fn instantiate_template(
    template: &Template,
    composition: &[String],
    volume: f64,
) -> CrystalGenotype {
    let n = composition.len();
    let k = template.sites.len();
    debug_assert_eq!(n % k, 0);
    let reps = supercell_factors(n / k);
    let mut sites: Vec<([f64; 3], usize)> = Vec::with_capacity(n);
    for ix in 0..reps[0] {
        for iy in 0..reps[1] {
            for iz in 0..reps[2] {
                for (pos, role) in &template.sites {
                    sites.push((
                        [
                            (pos[0] + ix as f64) / reps[0] as f64,
                            (pos[1] + iy as f64) / reps[1] as f64,
                            (pos[2] + iz as f64) / reps[2] as f64,
                        ],
                        *role,
                    ));
                }
            }
        }
    }
    // species counts, most common label first, mapped onto roles
    let mut counts: Vec<(String, usize)> = Vec::new();
    for label in composition {
        match counts.iter_mut().find(|(l, _)| l == label) {
            Some((_, c)) => *c += 1,
            None => counts.push((label.clone(), 1)),
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut pool: Vec<String> = Vec::with_capacity(n);
    for (label, c) in &counts {
        pool.extend(std::iter::repeat(label.clone()).take(*c));
    }
    // stable order: role-0 sites first consume the most common species
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| sites[i].1);
    let mut species = vec![String::new(); n];
    for (slot, &site_idx) in order.iter().enumerate() {
        species[site_idx] = pool[slot].clone();
    }
    // cube side so that the supercell reaches the target volume
    let cells: f64 = (reps[0] * reps[1] * reps[2]) as f64;
    let basis_edge = (volume / cells).cbrt();
    CrystalGenotype {
        lengths: [
            basis_edge * reps[0] as f64,
            basis_edge * reps[1] as f64,
            basis_edge * reps[2] as f64,
        ],
        angles: [90.0, 90.0, 90.0],
        frac_coords: sites.iter().map(|(p, _)| *p).collect(),
        species,
    }
}

/// A single template genotype at the exact target volume, no jitter.
/// Used to build reference structures and in tests.
pub fn template_genotype(name: &str, p: &DomainParams, volume: f64) -> Result<CrystalGenotype> {
    let two = p.distinct_species_count() >= 2;
    let n = p.composition.len();
    templates(two)
        .iter()
        .find(|t| t.name == name && n % t.sites.len() == 0)
        .map(|t| instantiate_template(t, &p.composition, volume))
        .ok_or_else(|| Error::Usage(format!("no template `{name}` for {n} atoms")))
}

/// Draw `n` genotypes from jittered lattice templates scaled to a volume
/// sampled around the configured initial cell volume.
pub fn initialize_population<R: Rng>(
    n: usize,
    p: &DomainParams,
    rng: &mut R,
) -> Vec<CrystalGenotype> {
    let two = p.distinct_species_count() >= 2;
    let atoms = p.composition.len();
    let usable: Vec<Template> = templates(two)
        .into_iter()
        .filter(|t| atoms % t.sites.len() == 0)
        .collect();
    assert!(!usable.is_empty(), "no lattice template divides {atoms} atoms");
    let jitter = Normal::new(0.0, p.initial_jitter).unwrap();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let template = &usable[rng.gen_range(0..usable.len())];
        let spread: f64 = Normal::new(0.0, p.initial_volume_spread)
            .unwrap()
            .sample(rng);
        let volume = (p.initial_cell_volume * (1.0 + spread))
            .max(p.min_volume_per_atom * atoms as f64 * 1.5);
        let mut g = instantiate_template(template, &p.composition, volume);
        for coord in &mut g.frac_coords {
            for x in coord.iter_mut() {
                *x = (*x + jitter.sample(rng)).rem_euclid(1.0);
            }
        }
        out.push(g);
    }
    out
}

// ---------------------------------------------------------------------------
// variation operators

fn decompose_lattice(m: &[[f64; 3]; 3]) -> ([f64; 3], [f64; 3]) {
    let norm = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let dot = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let lengths = [norm(&m[0]), norm(&m[1]), norm(&m[2])];
    let angle = |u: &[f64; 3], v: &[f64; 3]| {
        (dot(u, v) / (norm(u) * norm(v))).clamp(-1.0, 1.0).acos().to_degrees()
    };
    // alpha between b and c, beta between a and c, gamma between a and b
    let angles = [angle(&m[1], &m[2]), angle(&m[0], &m[2]), angle(&m[0], &m[1])];
    (lengths, angles)
}

fn apply_strain(g: &CrystalGenotype, eps: &[[f64; 3]; 3]) -> CrystalGenotype {
    let m = g.lattice_matrix();
    let mut strained = [[0.0; 3]; 3];
    for (row, out) in m.iter().zip(strained.iter_mut()) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = row[0] * delta(0, k, eps) + row[1] * delta(1, k, eps) + row[2] * delta(2, k, eps);
        }
    }
    let (lengths, angles) = decompose_lattice(&strained);
    CrystalGenotype {
        lengths,
        angles,
        frac_coords: g.frac_coords.clone(),
        species: g.species.clone(),
    }
}

fn delta(i: usize, j: usize, eps: &[[f64; 3]; 3]) -> f64 {
    let id = if i == j { 1.0 } else { 0.0 };
    id + eps[i][j]
}

/// Multiply the lattice vectors by (I + eps) with a random symmetric
/// strain (diagonal std `sigma_strain`, off-diagonals halved). Fractional
/// coordinates are unchanged. Invalid cells are retried up to 10 times,
/// then the parent is returned unchanged.
pub fn strain_mutation<R: Rng>(
    g: &CrystalGenotype,
    sigma_strain: f64,
    p: &DomainParams,
    rng: &mut R,
) -> CrystalGenotype {
    if sigma_strain == 0.0 {
        return g.clone();
    }
    let normal = Normal::new(0.0, sigma_strain).unwrap();
    for _ in 0..10 {
        let mut eps = [[0.0; 3]; 3];
        for (i, row) in eps.iter_mut().enumerate() {
            row[i] = normal.sample(rng);
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let o = normal.sample(rng) * 0.5;
            eps[i][j] = o;
            eps[j][i] = o;
        }
        let child = apply_strain(g, &eps);
        if child.validate(p).is_ok() {
            return child;
        }
    }
    g.clone()
}

/// Swap the species labels of a uniformly chosen cross-species atom pair.
pub fn permutation_mutation<R: Rng>(g: &CrystalGenotype, rng: &mut R) -> Result<CrystalGenotype> {
    let n = g.species.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if g.species[i] != g.species[j] {
                pairs.push((i, j));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::SingleSpecies);
    }
    let (i, j) = pairs[rng.gen_range(0..pairs.len())];
    let mut child = g.clone();
    child.species.swap(i, j);
    Ok(child)
}

// ---------------------------------------------------------------------------
// relaxation

/// Outcome of a relaxation: the relaxed genotype, the final max per-atom
/// force norm, and the number of energy-function calls consumed.
#[derive(Debug, Clone)]
pub struct RelaxOutcome {
    pub genotype: CrystalGenotype,
    pub force_norm: f64,
    pub energy_calls: usize,
}

const RELAX_INITIAL_STEP: f64 = 0.05;
const RELAX_ARMIJO_C1: f64 = 1e-4;
const RELAX_MAX_HALVINGS: usize = 20;
const RELAX_FORCE_TOLERANCE: f64 = 0.01;

/// Gradient descent on Cartesian atom positions with a backtracking
/// Armijo line search; the lattice stays fixed. Stops early when the max
/// per-atom force drops below 0.01. On an overlap error the last valid
/// iterate is returned.
pub fn relax(g: &CrystalGenotype, max_steps: usize, p: &DomainParams) -> Result<RelaxOutcome> {
    let m = g.lattice_matrix();
    let inv = invert3(&m);
    let idx = p.species_indices(g)?;
    let mut frac: Vec<[f64; 3]> = g.frac_coords.clone();
    let mut calls = 0;

    let mut energy = match lj_energy_inner(&frac, &idx, &m, p) {
        Ok(e) => {
            calls += 1;
            e
        }
        Err(e) => return Err(e),
    };
    let mut forces = lj_forces_inner(&frac, &idx, &m, p)?;
    let mut fnorm = max_force_norm(&forces);

    for _ in 0..max_steps {
        if fnorm < RELAX_FORCE_TOLERANCE {
            break;
        }
        let grad_sq: f64 = forces
            .iter()
            .map(|f| f[0] * f[0] + f[1] * f[1] + f[2] * f[2])
            .sum();
        let cart: Vec<[f64; 3]> = frac.iter().map(|f| frac_to_cart(f, &m)).collect();
        let mut step = RELAX_INITIAL_STEP;
        let mut accepted = None;
        for _ in 0..=RELAX_MAX_HALVINGS {
            let trial_frac: Vec<[f64; 3]> = cart
                .iter()
                .zip(&forces)
                .map(|(x, f)| {
                    let moved = [x[0] + step * f[0], x[1] + step * f[1], x[2] + step * f[2]];
                    cart_to_frac(&moved, &inv)
                })
                .collect();
            match lj_energy_inner(&trial_frac, &idx, &m, p) {
                Ok(trial_energy) => {
                    calls += 1;
                    if trial_energy <= energy - RELAX_ARMIJO_C1 * step * grad_sq {
                        accepted = Some((trial_frac, trial_energy));
                        break;
                    }
                }
                Err(Error::Overlap { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        match accepted {
            Some((new_frac, new_energy)) => {
                frac = new_frac;
                energy = new_energy;
                match lj_forces_inner(&frac, &idx, &m, p) {
                    Ok(f) => forces = f,
                    Err(Error::Overlap { .. }) => break,
                    Err(e) => return Err(e),
                }
                fnorm = max_force_norm(&forces);
            }
            None => break, // line search exhausted
        }
    }

    let wrapped: Vec<[f64; 3]> = frac
        .iter()
        .map(|f| f.map(|x| x.rem_euclid(1.0)))
        .collect();
    Ok(RelaxOutcome {
        genotype: CrystalGenotype {
            lengths: g.lengths,
            angles: g.angles,
            frac_coords: wrapped,
            species: g.species.clone(),
        },
        force_norm: fnorm,
        energy_calls: calls,
    })
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let c = |a: usize, b: usize| {
        let (r0, r1) = match a {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (c0, c1) = match b {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let minor = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor
    };
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = c(j, i) / det;
        }
    }
    inv
}

fn cart_to_frac(x: &[f64; 3], inv: &[[f64; 3]; 3]) -> [f64; 3] {
    [
        x[0] * inv[0][0] + x[1] * inv[1][0] + x[2] * inv[2][0],
        x[0] * inv[0][1] + x[1] * inv[1][1] + x[2] * inv[2][1],
        x[0] * inv[0][2] + x[1] * inv[1][2] + x[2] * inv[2][2],
    ]
}

// ---------------------------------------------------------------------------

/// Helpers for building solutions in tests.
pub mod test_support {
    use super::*;

    /// A throwaway solution carrying only meaningful objectives.
    pub fn solution_with_objectives(a: f64, b: f64) -> EvaluatedSolution {
        solution_with(a, b, [0.5, 0.5])
    }

    pub fn solution_with(a: f64, b: f64, features: [f64; 2]) -> EvaluatedSolution {
        EvaluatedSolution {
            id: 0,
            genotype: CrystalGenotype {
                lengths: [3.0, 3.0, 3.0],
                angles: [90.0, 90.0, 90.0],
                frac_coords: vec![[0.0, 0.0, 0.0]],
                species: vec!["A".into()],
            },
            objectives: ObjectiveVector::pair(a, b).unwrap(),
            features: FeatureVector::unchecked(features),
            force_norm: 0.0,
            provenance: Provenance {
                iteration: 0,
                parent: None,
                operator: OperatorTag::Init,
            },
        }
    }

    /// A dimer in a large cubic cell at separation `r` along x.
    pub fn dimer(r: f64, cell: f64) -> CrystalGenotype {
        CrystalGenotype {
            lengths: [cell, cell, cell],
            angles: [90.0, 90.0, 90.0],
            frac_coords: vec![[0.1, 0.1, 0.1], [0.1 + r / cell, 0.1, 0.1]],
            species: vec!["A".into(), "A".into()],
        }
    }

    /// Domain with a single species and a long cutoff, for dimer tests.
    pub fn dimer_params(cutoff: f64) -> DomainParams {
        DomainParams {
            composition: vec!["A".into(); 2],
            cutoff,
            ..DomainParams::default()
        }
    }
}
