//! Simplified structure matching against local reference structures and
//! the same-cell outperform analysis.

use crate::archive::MomeArchive;
use crate::domain::{self, CrystalGenotype, DomainParams, OperatorTag, Provenance};
use crate::Result;

/// Tolerances of the structural match.
#[derive(Debug, Clone)]
pub struct MatchTolerances {
    /// fractional lattice-length tolerance
    pub ltol: f64,
    /// angle tolerance in degrees
    pub atol: f64,
    /// site displacement tolerance, as a fraction of the target's mean
    /// nearest-neighbor distance
    pub stol: f64,
}

impl Default for MatchTolerances {
    fn default() -> Self {
        Self {
            ltol: 0.2,
            atol: 5.0,
            stol: 0.3,
        }
    }
}

/// A named reference structure, optionally with known objective values.
#[derive(Debug, Clone)]
pub struct ReferenceStructure {
    pub name: String,
    pub genotype: CrystalGenotype,
    pub objectives: Option<[f64; 2]>,
}

fn sorted3(v: [f64; 3]) -> [f64; 3] {
    let mut s = v;
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s
}

fn species_multisets_equal(a: &CrystalGenotype, b: &CrystalGenotype) -> bool {
    if a.species.len() != b.species.len() {
        return false;
    }
    let mut sa = a.species.clone();
    let mut sb = b.species.clone();
    sa.sort();
    sb.sort();
    sa == sb
}

fn mean_nearest_neighbor(g: &CrystalGenotype) -> f64 {
    let m = g.lattice_matrix();
    let n = g.atom_count();
    if n < 2 {
        return g.lengths.iter().cloned().fold(f64::INFINITY, f64::min);
    }
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
            let (_, r) = domain::min_image(delta, &m);
            nearest = nearest.min(r);
        }
        sum += nearest;
    }
    sum / n as f64
}

fn rarest_species(g: &CrystalGenotype) -> &str {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for s in &g.species {
        match counts.iter_mut().find(|(l, _)| *l == s.as_str()) {
            Some((_, c)) => *c += 1,
            None => counts.push((s, 1)),
        }
    }
    counts
        .iter()
        .min_by_key(|(label, c)| (*c, *label))
        .map(|(label, _)| *label)
        .unwrap()
}

/// One-directional site check: does every atom of `a`, after an origin
/// shift anchored on the rarest species, land within `threshold` of a
/// distinct same-species atom of `b`? Distances are measured with `b`'s
/// lattice, minimum-image convention, greedy nearest assignment.
fn sites_match_directed(a: &CrystalGenotype, b: &CrystalGenotype, threshold: f64) -> bool {
    let n = a.atom_count();
    if n == 0 {
        return true;
    }
    let m = b.lattice_matrix();
    let anchor_species = rarest_species(b);
    let Some(anchor_a) = a.species.iter().position(|s| s == anchor_species) else {
        return false;
    };
    'shifts: for anchor_b in 0..n {
        if b.species[anchor_b] != anchor_species {
            continue;
        }
        let shift = [
            b.frac_coords[anchor_b][0] - a.frac_coords[anchor_a][0],
            b.frac_coords[anchor_b][1] - a.frac_coords[anchor_a][1],
            b.frac_coords[anchor_b][2] - a.frac_coords[anchor_a][2],
        ];
        let mut used = vec![false; n];
        for i in 0..n {
            let shifted = [
                a.frac_coords[i][0] + shift[0],
                a.frac_coords[i][1] + shift[1],
                a.frac_coords[i][2] + shift[2],
            ];
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if used[j] || b.species[j] != a.species[i] {
                    continue;
                }
                let delta = [
                    b.frac_coords[j][0] - shifted[0],
                    b.frac_coords[j][1] - shifted[1],
                    b.frac_coords[j][2] - shifted[2],
                ];
                let (_, r) = domain::min_image(delta, &m);
                if best.map_or(true, |(_, br)| r < br) {
                    best = Some((j, r));
                }
            }
            match best {
                Some((j, r)) if r <= threshold => used[j] = true,
                _ => continue 'shifts,
            }
        }
        return true;
    }
    false
}

/// Structural match: same species multiset, sorted lattice lengths within
/// `ltol` (relative) and sorted angles within `atol`, and a site
/// assignment within `stol` of the mean nearest-neighbor distance. The
/// site check runs in both directions to make the predicate symmetric.
pub fn structures_match(
    a: &CrystalGenotype,
    b: &CrystalGenotype,
    tol: &MatchTolerances,
) -> bool {
    if !species_multisets_equal(a, b) {
        return false;
    }
    let la = sorted3(a.lengths);
    let lb = sorted3(b.lengths);
    for (x, y) in la.iter().zip(&lb) {
        let scale = x.abs().max(y.abs());
        if (x - y).abs() > tol.ltol * scale {
            return false;
        }
    }
    let aa = sorted3(a.angles);
    let ab = sorted3(b.angles);
    if aa.iter().zip(&ab).any(|(x, y)| (x - y).abs() > tol.atol) {
        return false;
    }
    sites_match_directed(a, b, tol.stol * mean_nearest_neighbor(b))
        && sites_match_directed(b, a, tol.stol * mean_nearest_neighbor(a))
}

/// Match result for one reference structure.
#[derive(Debug, Clone)]
pub struct ReferenceMatch {
    pub name: String,
    /// cell the reference's features map to
    pub cell_index: usize,
    pub reference_objectives: [f64; 2],
    /// ids of same-cell solutions that also match structurally
    pub matching_ids: Vec<u64>,
    /// a same-cell solution strictly exceeds the reference on stability
    pub outperform_stability: bool,
    /// a same-cell solution strictly exceeds the reference on magnetism
    pub outperform_magnetism: bool,
}

#[derive(Debug, Clone)]
pub struct MatchReport {
    pub per_reference: Vec<ReferenceMatch>,
}

impl MatchReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "# reference\tcell_index\tref_stability\tref_magnetism\tmatch_count\tmatching_ids\toutperform_stability\toutperform_magnetism\n",
        );
        for r in &self.per_reference {
            let ids = if r.matching_ids.is_empty() {
                "-".to_string()
            } else {
                r.matching_ids
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.name,
                r.cell_index,
                r.reference_objectives[0],
                r.reference_objectives[1],
                r.matching_ids.len(),
                ids,
                r.outperform_stability,
                r.outperform_magnetism
            ));
        }
        out
    }
}

/// Match an archive against reference structures: a solution counts iff
/// it matches structurally and shares the reference's feature cell; the
/// outperform flags consider every same-cell solution.
pub fn match_archive(
    archive: &MomeArchive,
    references: &[ReferenceStructure],
    tol: &MatchTolerances,
    params: &DomainParams,
) -> Result<MatchReport> {
    let mut per_reference = Vec::with_capacity(references.len());
    for reference in references {
        let evaluated = domain::evaluate(
            reference.genotype.clone(),
            params,
            0,
            Provenance {
                iteration: 0,
                parent: None,
                operator: OperatorTag::Init,
            },
        )?;
        let objectives = reference
            .objectives
            .unwrap_or([evaluated.objectives[0], evaluated.objectives[1]]);
        let cell_index = archive
            .tessellation()
            .assign_cell(evaluated.features.values());
        let mut matching_ids = Vec::new();
        let mut outperform_stability = false;
        let mut outperform_magnetism = false;
        for solution in archive.cell(cell_index).solutions() {
            if solution.objectives[0] > objectives[0] {
                outperform_stability = true;
            }
            if solution.objectives[1] > objectives[1] {
                outperform_magnetism = true;
            }
            if structures_match(&solution.genotype, &reference.genotype, tol) {
                matching_ids.push(solution.id);
            }
        }
        matching_ids.sort_unstable();
        per_reference.push(ReferenceMatch {
            name: reference.name.clone(),
            cell_index,
            reference_objectives: objectives,
            matching_ids,
            outperform_stability,
            outperform_magnetism,
        });
    }
    Ok(MatchReport { per_reference })
}
