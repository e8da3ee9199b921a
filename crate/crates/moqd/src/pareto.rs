//! Pure multi-objective mathematics: dominance, bounded Pareto-front
//! maintenance, 2-D hypervolume and NSGA-II crowding distances.
//!
//! Everything here follows the maximization convention: objective index 0
//! is the stability fitness (negative energy), index 1 the magnetism score.

use serde::{Deserialize, Serialize};

use crate::domain::EvaluatedSolution;
use crate::{Error, Result};

/// An ordered vector of k real objective scores (k = 2 in all experiments).
///
/// NaN and infinite values are rejected at construction so that dominance
/// and hypervolume never have to reason about them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector(Vec<f64>);

impl ObjectiveVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "objective vector",
            });
        }
        Ok(Self(values))
    }

    /// Bi-objective shorthand used throughout the experiments.
    pub fn pair(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a, b])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for ObjectiveVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// True iff `a` is at least as good as `b` on every objective and strictly
/// better on at least one.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::ObjectiveLengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut strictly_better = false;
    for (x, y) in a.values().iter().zip(b.values()) {
        if x < y {
            return Ok(false);
        }
        if x > y {
            strictly_better = true;
        }
    }
    Ok(strictly_better)
}

/// Exact area dominated by a bi-objective front relative to `reference`.
///
/// Points below the reference are clipped to it (contributing zero area)
/// rather than rejected. Computed by a sort-and-sweep over the union of
/// rectangles `[reference, point]`.
pub fn hypervolume2d(front: &[ObjectiveVector], reference: &ObjectiveVector) -> Result<f64> {
    if reference.len() != 2 {
        return Err(Error::UnsupportedDimension(reference.len()));
    }
    for p in front {
        if p.len() != 2 {
            return Err(Error::UnsupportedDimension(p.len()));
        }
    }
    let (rx, ry) = (reference[0], reference[1]);
    let mut clipped: Vec<(f64, f64)> = front
        .iter()
        .map(|p| (p[0].max(rx), p[1].max(ry)))
        .collect();
    clipped.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut area = 0.0;
    let mut highest_y = ry;
    for (x, y) in clipped {
        if y > highest_y {
            area += (x - rx) * (y - highest_y);
            highest_y = y;
        }
    }
    Ok(area)
}

/// NSGA-II crowding distances for a front of objective vectors.
///
/// Objective-wise extreme solutions get `+inf`; interior solutions
/// accumulate `(next - prev) / (max - min)` per objective. An objective
/// whose values are all equal contributes nothing.
pub fn crowding_distances(front: &[ObjectiveVector]) -> Vec<f64> {
    let n = front.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![f64::INFINITY];
    }
    let k = front[0].len();
    let mut distances = vec![0.0_f64; n];
    for obj in 0..k {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| front[i][obj].partial_cmp(&front[j][obj]).unwrap());
        let lo = front[order[0]][obj];
        let hi = front[order[n - 1]][obj];
        if hi <= lo {
            continue;
        }
        distances[order[0]] = f64::INFINITY;
        distances[order[n - 1]] = f64::INFINITY;
        for w in 1..n - 1 {
            let idx = order[w];
            if distances[idx].is_finite() {
                distances[idx] += (front[order[w + 1]][obj] - front[order[w - 1]][obj]) / (hi - lo);
            }
        }
    }
    distances
}

/// Result of offering a solution to a front or archive.
#[derive(Debug, Clone)]
pub enum InsertOutcome {
    Added,
    AddedWithEviction(Box<EvaluatedSolution>),
    Discarded,
}

impl InsertOutcome {
    /// True for `Added` and `AddedWithEviction`.
    pub fn accepted(&self) -> bool {
        !matches!(self, InsertOutcome::Discarded)
    }
}

#[derive(Debug, Clone)]
struct Member {
    solution: EvaluatedSolution,
    insertion_id: u64,
}

/// A bounded set of mutually non-dominated solutions.
///
/// Exact duplicates (identical objective vectors) are discarded. When an
/// insertion pushes the front past `max_size`, the member with the
/// smallest crowding distance is evicted, ties broken by earliest
/// insertion; objective-wise extremes are never evicted while a
/// finite-distance member exists.
#[derive(Debug, Clone)]
pub struct ParetoFront {
    members: Vec<Member>,
    max_size: usize,
    next_id: u64,
}

impl ParetoFront {
    pub fn new(max_size: usize) -> Self {
        assert!(max_size >= 1, "front max_size must be positive");
        Self {
            members: Vec::new(),
            max_size,
            next_id: 0,
        }
    }

    /// A front that never evicts, used by oracles and shadow archives.
    pub fn unbounded() -> Self {
        Self::new(usize::MAX)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn solutions(&self) -> impl Iterator<Item = &EvaluatedSolution> {
        self.members.iter().map(|m| &m.solution)
    }

    pub fn objective_vectors(&self) -> Vec<ObjectiveVector> {
        self.members
            .iter()
            .map(|m| m.solution.objectives.clone())
            .collect()
    }

    pub fn insert(&mut self, solution: EvaluatedSolution) -> InsertOutcome {
        for m in &self.members {
            if m.solution.objectives == solution.objectives {
                return InsertOutcome::Discarded;
            }
            if dominates(&m.solution.objectives, &solution.objectives).unwrap_or(false) {
                return InsertOutcome::Discarded;
            }
        }
        self.members
            .retain(|m| !dominates(&solution.objectives, &m.solution.objectives).unwrap_or(false));
        self.members.push(Member {
            solution,
            insertion_id: self.next_id,
        });
        self.next_id += 1;

        if self.members.len() <= self.max_size {
            return InsertOutcome::Added;
        }
        let vectors: Vec<ObjectiveVector> = self
            .members
            .iter()
            .map(|m| m.solution.objectives.clone())
            .collect();
        let distances = crowding_distances(&vectors);
        let any_finite = distances.iter().any(|d| d.is_finite());
        let mut evict = 0;
        for i in 1..self.members.len() {
            // Infinite-distance extremes survive while a finite member exists.
            let (di, de) = (distances[i], distances[evict]);
            let better = if any_finite && di.is_infinite() != de.is_infinite() {
                de.is_infinite()
            } else {
                di < de
                    || (di == de && self.members[i].insertion_id < self.members[evict].insertion_id)
            };
            if better {
                evict = i;
            }
        }
        let removed = self.members.remove(evict);
        InsertOutcome::AddedWithEviction(Box::new(removed.solution))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::test_support::solution_with_objectives;

    fn ov(a: f64, b: f64) -> ObjectiveVector {
        ObjectiveVector::pair(a, b).unwrap()
    }

    #[test]
    fn objective_vector_rejects_non_finite() {
        assert!(ObjectiveVector::pair(f64::NAN, 1.0).is_err());
        assert!(ObjectiveVector::pair(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn dominance_basic_cases() {
        assert!(dominates(&ov(2.0, 3.0), &ov(1.0, 3.0)).unwrap());
        assert!(!dominates(&ov(1.0, 3.0), &ov(3.0, 1.0)).unwrap());
        assert!(!dominates(&ov(3.0, 1.0), &ov(1.0, 3.0)).unwrap());
        assert!(!dominates(&ov(2.0, 2.0), &ov(2.0, 2.0)).unwrap());
    }

    #[test]
    fn dominance_length_mismatch_is_usage_error() {
        let a = ObjectiveVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(dominates(&a, &ov(1.0, 2.0)).is_err());
    }

    #[test]
    fn hypervolume_single_rectangle() {
        let hv = hypervolume2d(&[ov(1.0, 2.0)], &ov(0.0, 0.0)).unwrap();
        assert!((hv - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_two_point_front() {
        // inclusion-exclusion by hand: 2 + 2 - 1 = 3
        let hv = hypervolume2d(&[ov(1.0, 2.0), ov(2.0, 1.0)], &ov(0.0, 0.0)).unwrap();
        assert!((hv - 3.0).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_empty_front() {
        assert_eq!(hypervolume2d(&[], &ov(0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn hypervolume_clips_points_below_reference() {
        let hv = hypervolume2d(&[ov(-1.0, -1.0), ov(1.0, 1.0)], &ov(0.0, 0.0)).unwrap();
        assert!((hv - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_rejects_higher_dimensions() {
        let r = ObjectiveVector::new(vec![0.0, 0.0, 0.0]).unwrap();
        assert!(hypervolume2d(&[], &r).is_err());
    }

    #[test]
    fn crowding_three_points() {
        let d = crowding_distances(&[ov(0.0, 10.0), ov(5.0, 5.0), ov(10.0, 0.0)]);
        assert!(d[0].is_infinite());
        assert!((d[1] - 2.0).abs() < 1e-12);
        assert!(d[2].is_infinite());
    }

    #[test]
    fn crowding_singleton_and_pair() {
        assert!(crowding_distances(&[ov(1.0, 1.0)])[0].is_infinite());
        let d = crowding_distances(&[ov(0.0, 0.0), ov(1.0, 1.0)]);
        assert!(d[0].is_infinite() && d[1].is_infinite());
    }

    #[test]
    fn front_insert_into_empty() {
        let mut front = ParetoFront::new(10);
        assert!(front.insert(solution_with_objectives(1.0, 1.0)).accepted());
        assert_eq!(front.len(), 1);
    }

    #[test]
    fn front_insert_dominated_is_discarded() {
        let mut front = ParetoFront::new(10);
        front.insert(solution_with_objectives(5.0, 5.0));
        assert!(matches!(
            front.insert(solution_with_objectives(4.0, 4.0)),
            InsertOutcome::Discarded
        ));
        assert_eq!(front.len(), 1);
    }

    #[test]
    fn front_insert_duplicate_is_discarded() {
        let mut front = ParetoFront::new(10);
        front.insert(solution_with_objectives(5.0, 5.0));
        assert!(matches!(
            front.insert(solution_with_objectives(5.0, 5.0)),
            InsertOutcome::Discarded
        ));
    }

    #[test]
    fn front_insert_removes_dominated_members() {
        let mut front = ParetoFront::new(10);
        front.insert(solution_with_objectives(1.0, 1.0));
        front.insert(solution_with_objectives(0.5, 2.0));
        front.insert(solution_with_objectives(2.0, 2.0));
        assert_eq!(front.len(), 1);
    }

    #[test]
    fn full_front_evicts_min_crowding_interior_member() {
        // 10 collinear points; the crowding-minimal interior point lies in
        // the densest region. Verify the evicted member against a
        // brute-force crowding computation over the would-be 11-point front.
        let mut points: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 9.0 - i as f64)).collect();
        // densify around x = 4
        points[5] = (4.2, 9.0 - 4.2);
        let mut front = ParetoFront::new(10);
        for &(a, b) in &points {
            assert!(front.insert(solution_with_objectives(a, b)).accepted());
        }
        let newcomer = (4.1, 9.0 - 4.1);
        let mut all = points.clone();
        all.push(newcomer);
        let vectors: Vec<ObjectiveVector> = all.iter().map(|&(a, b)| ov(a, b)).collect();
        let d = crowding_distances(&vectors);
        let expected_evict = (0..all.len())
            .filter(|&i| d[i].is_finite())
            .min_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap())
            .unwrap();
        match front.insert(solution_with_objectives(newcomer.0, newcomer.1)) {
            InsertOutcome::AddedWithEviction(evicted) => {
                assert_eq!(evicted.objectives[0], all[expected_evict].0);
            }
            other => panic!("expected eviction, got {other:?}"),
        }
        assert_eq!(front.len(), 10);
    }

    #[test]
    fn front_never_holds_dominating_pair() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut front = ParetoFront::new(5);
        for _ in 0..200 {
            front.insert(solution_with_objectives(rng.gen::<f64>(), rng.gen::<f64>()));
            let vs = front.objective_vectors();
            for i in 0..vs.len() {
                for j in 0..vs.len() {
                    if i != j {
                        assert!(!dominates(&vs[i], &vs[j]).unwrap());
                    }
                }
            }
        }
    }
}
