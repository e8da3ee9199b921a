//! Feature-space archives: CVT tessellation construction (seeded Lloyd
//! k-means over uniform samples), the MOME archive (one bounded Pareto
//! front per cell), the single-solution MAP-Elites archive, and the
//! passive shadow sync used to score baselines on a common grid.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::EvaluatedSolution;
use crate::pareto::{InsertOutcome, ParetoFront};
use crate::{Error, Result};

/// Per-dimension bounds of the 2-D feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBounds {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl FeatureBounds {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        assert!(lo[0] < hi[0] && lo[1] < hi[1], "degenerate feature bounds");
        Self { lo, hi }
    }
}

/// A 2-D feature descriptor, clamped to bounds at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: [f64; 2],
    clamped: bool,
}

impl FeatureVector {
    /// Clamp raw descriptor values into bounds, recording whether
    /// clamping occurred.
    pub fn clamped(raw: [f64; 2], bounds: &FeatureBounds) -> Self {
        let values = [
            raw[0].clamp(bounds.lo[0], bounds.hi[0]),
            raw[1].clamp(bounds.lo[1], bounds.hi[1]),
        ];
        Self {
            clamped: values != raw,
            values,
        }
    }

    /// Trusted constructor for deserialization and tests.
    pub fn unchecked(values: [f64; 2]) -> Self {
        Self {
            values,
            clamped: false,
        }
    }

    pub fn values(&self) -> [f64; 2] {
        self.values
    }

    pub fn was_clamped(&self) -> bool {
        self.clamped
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// A centroidal Voronoi tessellation of the feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvtTessellation {
    centroids: Vec<[f64; 2]>,
    bounds: FeatureBounds,
    seed: u64,
}

const LLOYD_TOLERANCE: f64 = 1e-6;
const LLOYD_MAX_ITERATIONS: usize = 200;

/// Build a CVT by running seeded Lloyd k-means on uniform samples until
/// the max centroid movement drops below 1e-6 or 200 iterations elapse.
/// Deterministic for a fixed seed.
pub fn build_cvt(
    cells: usize,
    bounds: &FeatureBounds,
    n_samples: usize,
    seed: u64,
) -> Result<CvtTessellation> {
    if cells == 0 {
        return Err(Error::Usage("cell count must be at least 1".into()));
    }
    if cells > n_samples {
        return Err(Error::Usage(format!(
            "cannot place {cells} centroids from {n_samples} samples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<[f64; 2]> = (0..n_samples)
        .map(|_| {
            [
                rng.gen_range(bounds.lo[0]..bounds.hi[0]),
                rng.gen_range(bounds.lo[1]..bounds.hi[1]),
            ]
        })
        .collect();
    let mut indices: Vec<usize> = (0..n_samples).collect();
    indices.shuffle(&mut rng);
    let mut centroids: Vec<[f64; 2]> = indices[..cells].iter().map(|&i| samples[i]).collect();

    let mut assignment = vec![0usize; n_samples];
    for _ in 0..LLOYD_MAX_ITERATIONS {
        for (s, a) in samples.iter().zip(assignment.iter_mut()) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = dist2(*s, *centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            *a = best;
        }
        let mut sums = vec![[0.0f64; 2]; cells];
        let mut counts = vec![0usize; cells];
        for (s, &a) in samples.iter().zip(&assignment) {
            sums[a][0] += s[0];
            sums[a][1] += s[1];
            counts[a] += 1;
        }
        let mut movement = 0.0f64;
        for c in 0..cells {
            let new = if counts[c] > 0 {
                [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64]
            } else {
                // re-seed an empty cluster from a random sample
                samples[rng.gen_range(0..n_samples)]
            };
            movement = movement.max(dist2(new, centroids[c]).sqrt());
            centroids[c] = new;
        }
        if movement < LLOYD_TOLERANCE {
            break;
        }
    }
    Ok(CvtTessellation {
        centroids,
        bounds: bounds.clone(),
        seed,
    })
}

impl CvtTessellation {
    pub fn cell_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[[f64; 2]] {
        &self.centroids
    }

    pub fn bounds(&self) -> &FeatureBounds {
        &self.bounds
    }

    /// Index of the nearest centroid, ties broken by lowest index.
    pub fn assign_cell(&self, feature: [f64; 2]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let d = dist2(feature, *c);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// CVT centroids mapped to cells each holding a bounded Pareto front.
#[derive(Debug, Clone)]
pub struct MomeArchive {
    tessellation: CvtTessellation,
    cells: Vec<ParetoFront>,
    front_size: usize,
}

impl MomeArchive {
    pub fn new(tessellation: CvtTessellation, front_size: usize) -> Self {
        let cells = (0..tessellation.cell_count())
            .map(|_| ParetoFront::new(front_size))
            .collect();
        Self {
            tessellation,
            cells,
            front_size,
        }
    }

    pub fn tessellation(&self) -> &CvtTessellation {
        &self.tessellation
    }

    pub fn front_size(&self) -> usize {
        self.front_size
    }

    pub fn cell(&self, index: usize) -> &ParetoFront {
        &self.cells[index]
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, &ParetoFront)> {
        self.cells.iter().enumerate()
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, &ParetoFront)> {
        self.cells.iter().enumerate().filter(|(_, f)| !f.is_empty())
    }

    pub fn occupied_cell_count(&self) -> usize {
        self.cells.iter().filter(|f| !f.is_empty()).count()
    }

    pub fn solution_count(&self) -> usize {
        self.cells.iter().map(|f| f.len()).sum()
    }

    pub fn solutions(&self) -> impl Iterator<Item = (usize, &EvaluatedSolution)> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.solutions().map(move |s| (i, s)))
    }

    /// Offer a solution to the front of its feature cell.
    pub fn insert(&mut self, solution: EvaluatedSolution) -> InsertOutcome {
        let cell = self.tessellation.assign_cell(solution.features.values());
        self.cells[cell].insert(solution)
    }
}

/// Scalar fitness used by the MAP-Elites baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarFitnessRule {
    Stability,
    Magnetism,
    Sum,
}

impl ScalarFitnessRule {
    pub fn fitness(&self, s: &EvaluatedSolution) -> f64 {
        match self {
            ScalarFitnessRule::Stability => s.objectives[0],
            ScalarFitnessRule::Magnetism => s.objectives[1],
            ScalarFitnessRule::Sum => s.objectives[0] + s.objectives[1],
        }
    }
}

/// One-solution-per-cell archive for the MAP-Elites baselines.
#[derive(Debug, Clone)]
pub struct MapElitesArchive {
    tessellation: CvtTessellation,
    cells: Vec<Option<EvaluatedSolution>>,
    rule: ScalarFitnessRule,
}

impl MapElitesArchive {
    pub fn new(tessellation: CvtTessellation, rule: ScalarFitnessRule) -> Self {
        let cells = vec![None; tessellation.cell_count()];
        Self {
            tessellation,
            cells,
            rule,
        }
    }

    pub fn tessellation(&self) -> &CvtTessellation {
        &self.tessellation
    }

    pub fn rule(&self) -> ScalarFitnessRule {
        self.rule
    }

    pub fn solutions(&self) -> impl Iterator<Item = (usize, &EvaluatedSolution)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
    }

    pub fn occupied_cell_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn cell_fitness(&self, index: usize) -> Option<f64> {
        self.cells[index].as_ref().map(|s| self.rule.fitness(s))
    }

    /// Replace the incumbent iff the newcomer's scalar fitness is
    /// strictly greater; ties keep the incumbent.
    pub fn insert(&mut self, solution: EvaluatedSolution) -> InsertOutcome {
        let cell = self.tessellation.assign_cell(solution.features.values());
        match &self.cells[cell] {
            None => {
                self.cells[cell] = Some(solution);
                InsertOutcome::Added
            }
            Some(incumbent) => {
                if self.rule.fitness(&solution) > self.rule.fitness(incumbent) {
                    let old = self.cells[cell].take().unwrap();
                    self.cells[cell] = Some(solution);
                    InsertOutcome::AddedWithEviction(Box::new(old))
                } else {
                    InsertOutcome::Discarded
                }
            }
        }
    }
}

/// Offer every solution of a MAP-Elites archive to a passive MOME
/// archive; returns the number of accepted insertions. The passive
/// archive never feeds back into the source.
pub fn passive_sync(passive: &mut MomeArchive, source: &MapElitesArchive) -> usize {
    let mut accepted = 0;
    for (_, solution) in source.solutions() {
        if passive.insert(solution.clone()).accepted() {
            accepted += 1;
        }
    }
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::test_support::solution_with;
    use crate::pareto::dominates;

    fn unit_bounds() -> FeatureBounds {
        FeatureBounds::new([0.0, 0.0], [1.0, 1.0])
    }

    #[test]
    fn single_cell_centroid_near_midpoint() {
        let t = build_cvt(1, &unit_bounds(), 100_000, 1).unwrap();
        let c = t.centroids()[0];
        assert!((c[0] - 0.5).abs() < 0.025 && (c[1] - 0.5).abs() < 0.025);
    }

    #[test]
    fn two_hundred_distinct_in_bounds_centroids() {
        let t = build_cvt(200, &unit_bounds(), 10_000, 7).unwrap();
        assert_eq!(t.cell_count(), 200);
        for (i, a) in t.centroids().iter().enumerate() {
            assert!(a[0] >= 0.0 && a[0] <= 1.0 && a[1] >= 0.0 && a[1] <= 1.0);
            for b in &t.centroids()[i + 1..] {
                assert!(a != b);
            }
        }
    }

    #[test]
    fn build_cvt_is_deterministic() {
        let a = build_cvt(50, &unit_bounds(), 5_000, 3).unwrap();
        let b = build_cvt(50, &unit_bounds(), 5_000, 3).unwrap();
        assert_eq!(a.centroids(), b.centroids());
    }

    #[test]
    fn build_cvt_rejects_more_cells_than_samples() {
        assert!(build_cvt(100, &unit_bounds(), 10, 0).is_err());
    }

    #[test]
    fn assign_cell_exact_and_tie_rule() {
        let t = CvtTessellation {
            centroids: vec![[0.0, 0.0], [0.2, 0.2], [1.0, 1.0], [0.5, 0.5], [0.2, 0.2]],
            bounds: unit_bounds(),
            seed: 0,
        };
        assert_eq!(t.assign_cell([1.0, 1.0]), 2);
        // centroids 1 and 4 are identical: lowest index wins
        assert_eq!(t.assign_cell([0.2, 0.2]), 1);
    }

    #[test]
    fn mome_insert_routes_to_nearest_centroid() {
        let t = build_cvt(10, &unit_bounds(), 1_000, 5).unwrap();
        let mut archive = MomeArchive::new(t, 10);
        let s = solution_with(1.0, 1.0, [0.3, 0.7]);
        let expected = archive.tessellation().assign_cell([0.3, 0.7]);
        assert!(archive.insert(s).accepted());
        assert_eq!(archive.cell(expected).len(), 1);
    }

    #[test]
    fn mome_insert_discards_dominated() {
        let t = build_cvt(4, &unit_bounds(), 400, 5).unwrap();
        let mut archive = MomeArchive::new(t, 10);
        archive.insert(solution_with(5.0, 5.0, [0.5, 0.5]));
        assert!(matches!(
            archive.insert(solution_with(4.0, 4.0, [0.5, 0.5])),
            InsertOutcome::Discarded
        ));
    }

    #[test]
    fn eleventh_front_member_triggers_eviction() {
        let t = build_cvt(1, &unit_bounds(), 100, 5).unwrap();
        let mut archive = MomeArchive::new(t, 10);
        for i in 0..10 {
            let x = i as f64;
            assert!(matches!(
                archive.insert(solution_with(x, 10.0 - x, [0.5, 0.5])),
                InsertOutcome::Added
            ));
        }
        assert!(matches!(
            archive.insert(solution_with(5.5, 10.0 - 5.5, [0.5, 0.5])),
            InsertOutcome::AddedWithEviction(_)
        ));
        assert_eq!(archive.cell(0).len(), 10);
    }

    #[test]
    fn me_insert_tie_keeps_incumbent() {
        let t = build_cvt(4, &unit_bounds(), 400, 5).unwrap();
        let mut archive = MapElitesArchive::new(t, ScalarFitnessRule::Stability);
        assert!(archive.insert(solution_with(5.0, 0.0, [0.5, 0.5])).accepted());
        assert!(matches!(
            archive.insert(solution_with(5.0, 9.0, [0.5, 0.5])),
            InsertOutcome::Discarded
        ));
    }

    #[test]
    fn me_sum_rule_prefers_larger_sum() {
        let t = build_cvt(1, &unit_bounds(), 100, 5).unwrap();
        let mut archive = MapElitesArchive::new(t, ScalarFitnessRule::Sum);
        archive.insert(solution_with(3.0, 1.0, [0.5, 0.5]));
        assert!(matches!(
            archive.insert(solution_with(1.0, 4.0, [0.5, 0.5])),
            InsertOutcome::AddedWithEviction(_)
        ));
    }

    #[test]
    fn passive_sync_counts_and_is_idempotent() {
        let t = build_cvt(8, &unit_bounds(), 800, 5).unwrap();
        let mut passive = MomeArchive::new(t.clone(), 10);
        let mut source = MapElitesArchive::new(
            build_cvt(16, &unit_bounds(), 1_600, 6).unwrap(),
            ScalarFitnessRule::Stability,
        );
        assert_eq!(passive_sync(&mut passive, &source), 0);
        source.insert(solution_with(1.0, 1.0, [0.1, 0.1]));
        assert_eq!(passive_sync(&mut passive, &source), 1);
        assert_eq!(passive_sync(&mut passive, &source), 0);
    }

    #[test]
    fn archive_scan_invariants_hold() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let t = build_cvt(16, &unit_bounds(), 1_600, 2).unwrap();
        let mut archive = MomeArchive::new(t, 3);
        for _ in 0..500 {
            let s = solution_with(
                rng.gen::<f64>() * 10.0,
                rng.gen::<f64>() * 10.0,
                [rng.gen(), rng.gen()],
            );
            archive.insert(s);
        }
        for (cell, front) in archive.occupied_cells() {
            assert!(front.len() <= 3);
            let vs = front.objective_vectors();
            for i in 0..vs.len() {
                for j in 0..vs.len() {
                    if i != j {
                        assert!(!dominates(&vs[i], &vs[j]).unwrap());
                    }
                }
            }
            for s in front.solutions() {
                assert_eq!(
                    archive.tessellation().assign_cell(s.features.values()),
                    cell
                );
            }
        }
    }

    #[test]
    fn uniform_tessellation_leaves_no_empty_cell() {
        use rand::Rng;
        use rand::SeedableRng;
        let t = build_cvt(200, &unit_bounds(), 50_000, 11).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut hits = vec![0usize; 200];
        for _ in 0..10_000 {
            hits[t.assign_cell([rng.gen(), rng.gen()])] += 1;
        }
        assert!(hits.iter().all(|&h| h > 0));
    }
}
