//! MOQD metrics over archives and the statistical comparison machinery:
//! Wilcoxon signed-rank (exact for small n) with Holm-Bonferroni
//! correction, plus median/IQR summaries across seeded runs.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::archive::MomeArchive;
use crate::engine::{Algorithm, RunRecord};
use crate::pareto::{hypervolume2d, ObjectiveVector};
use crate::{Error, Result};

/// One per-iteration metrics sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub evaluations: usize,
    pub moqd_score: f64,
    pub energy_qd_score: f64,
    pub magnetism_qd_score: f64,
    pub coverage: f64,
    pub global_hypervolume: f64,
}

/// Sum of the hypervolumes of every cell's Pareto front.
pub fn moqd_score(archive: &MomeArchive, reference: &ObjectiveVector) -> Result<f64> {
    let mut total = 0.0;
    for (_, front) in archive.occupied_cells() {
        total += hypervolume2d(&front.objective_vectors(), reference)?;
    }
    Ok(total)
}

/// How solutions are aggregated into a per-objective QD-score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QdScoreVariant {
    /// Sum over every stored solution (the default).
    AllSolutions,
    /// Sum of the per-cell best value, the conventional QD-score.
    CellBest,
}

/// Sum of one objective's values over the archive.
pub fn objective_qd_score(
    archive: &MomeArchive,
    objective_index: usize,
    variant: QdScoreVariant,
) -> f64 {
    match variant {
        QdScoreVariant::AllSolutions => archive
            .solutions()
            .map(|(_, s)| s.objectives[objective_index])
            .sum(),
        QdScoreVariant::CellBest => archive
            .occupied_cells()
            .map(|(_, front)| {
                front
                    .solutions()
                    .map(|s| s.objectives[objective_index])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum(),
    }
}

/// Fraction of cells holding at least one solution.
pub fn coverage(archive: &MomeArchive) -> f64 {
    archive.occupied_cell_count() as f64 / archive.tessellation().cell_count() as f64
}

/// Non-dominated subset of a pooled set of bi-objective vectors,
/// computed by a descending sweep on objective 0.
pub fn non_dominated(points: &[ObjectiveVector]) -> Vec<ObjectiveVector> {
    let mut sorted: Vec<&ObjectiveVector> = points.iter().collect();
    sorted.sort_by(|a, b| {
        b[0].partial_cmp(&a[0])
            .unwrap()
            .then(b[1].partial_cmp(&a[1]).unwrap())
    });
    let mut front: Vec<ObjectiveVector> = Vec::new();
    let mut best_y = f64::NEG_INFINITY;
    for p in sorted {
        if p[1] > best_y {
            best_y = p[1];
            front.push(p.clone());
        }
    }
    // drop duplicates of the same point kept by the strict sweep
    front.dedup();
    front
}

/// Hypervolume of the Pareto front of all solutions pooled across cells.
pub fn global_hypervolume(archive: &MomeArchive, reference: &ObjectiveVector) -> Result<f64> {
    let pooled: Vec<ObjectiveVector> = archive
        .solutions()
        .map(|(_, s)| s.objectives.clone())
        .collect();
    hypervolume2d(&non_dominated(&pooled), reference)
}

/// Compute the full metrics row for an archive at a given budget.
pub fn metrics_row(
    archive: &MomeArchive,
    reference: &ObjectiveVector,
    evaluations: usize,
    variant: QdScoreVariant,
) -> Result<MetricsRow> {
    Ok(MetricsRow {
        evaluations,
        moqd_score: moqd_score(archive, reference)?,
        energy_qd_score: objective_qd_score(archive, 0, variant),
        magnetism_qd_score: objective_qd_score(archive, 1, variant),
        coverage: coverage(archive),
        global_hypervolume: global_hypervolume(archive, reference)?,
    })
}

// ---------------------------------------------------------------------------
// statistics

const WILCOXON_EXACT_LIMIT: usize = 20;

/// Two-sided Wilcoxon signed-rank p-value for paired samples.
///
/// Zero differences are dropped; |differences| receive average ranks on
/// ties. For n <= 20 the null distribution is enumerated exactly,
/// beyond that a tie-corrected normal approximation with continuity
/// correction is used.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Usage(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Ok(1.0);
    }
    let n = diffs.len();
    if n < 5 {
        return Err(Error::Usage(format!(
            "need at least 5 non-zero differences, got {n}"
        )));
    }

    // average ranks of |d|, doubled so that tied midranks stay integral
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut doubled_ranks = vec![0u64; n];
    let mut tie_sizes: Vec<usize> = Vec::new();
    let mut pos = 0;
    while pos < n {
        let mut end = pos + 1;
        while end < n && diffs[order[end]].abs() == diffs[order[pos]].abs() {
            end += 1;
        }
        // ranks pos+1 ..= end, averaged, times two
        let doubled_avg = (pos + 1 + end) as u64;
        for &idx in &order[pos..end] {
            doubled_ranks[idx] = doubled_avg;
        }
        tie_sizes.push(end - pos);
        pos = end;
    }
    let w_plus_doubled: u64 = diffs
        .iter()
        .zip(&doubled_ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    if n <= WILCOXON_EXACT_LIMIT {
        Ok(exact_two_sided_p(&doubled_ranks, w_plus_doubled))
    } else {
        Ok(normal_two_sided_p(n, &tie_sizes, w_plus_doubled))
    }
}

/// Exact two-sided p by dynamic programming over all 2^n sign patterns.
fn exact_two_sided_p(doubled_ranks: &[u64], w_plus_doubled: u64) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    for &r in doubled_ranks {
        for s in (r as usize..counts.len()).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    let all: u64 = counts.iter().sum();
    let cdf: u64 = counts[..=w_plus_doubled as usize].iter().sum();
    let sf: u64 = counts[w_plus_doubled as usize..].iter().sum();
    let p = 2.0 * (cdf.min(sf) as f64) / all as f64;
    p.min(1.0)
}

/// Tie-corrected normal approximation with continuity correction.
fn normal_two_sided_p(n: usize, tie_sizes: &[usize], w_plus_doubled: u64) -> f64 {
    let nf = n as f64;
    let w_plus = w_plus_doubled as f64 / 2.0;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_sizes
        .iter()
        .map(|&t| {
            let tf = t as f64;
            tf * tf * tf - tf
        })
        .sum();
    let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    if variance <= 0.0 {
        return 1.0;
    }
    let deviation = (w_plus - mean).abs() - 0.5;
    let z = deviation.max(0.0) / variance.sqrt();
    (2.0 * normal_cdf(-z)).min(1.0)
}

/// Standard normal CDF via an erfc rational approximation (|err| < 1.2e-7).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Holm-Bonferroni step-down adjustment.
///
/// Returns `(adjusted_p, reject)` in the original order of `p_values`.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Vec<(f64, bool)> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].partial_cmp(&p_values[j]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running_max = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let adj = ((m - rank) as f64 * p_values[idx]).min(1.0);
        running_max = running_max.max(adj);
        adjusted[idx] = running_max;
    }
    adjusted.iter().map(|&p| (p, p <= alpha)).collect()
}

// ---------------------------------------------------------------------------
// run comparison

/// The metrics a comparison can rank algorithms on.
pub const METRIC_NAMES: [&str; 5] = [
    "moqd_score",
    "energy_qd_score",
    "magnetism_qd_score",
    "coverage",
    "global_hypervolume",
];

fn metric_value(row: &MetricsRow, name: &str) -> f64 {
    match name {
        "moqd_score" => row.moqd_score,
        "energy_qd_score" => row.energy_qd_score,
        "magnetism_qd_score" => row.magnetism_qd_score,
        "coverage" => row.coverage,
        "global_hypervolume" => row.global_hypervolume,
        other => panic!("unknown metric {other}"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub median: f64,
    pub iqr_low: f64,
    pub iqr_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairwiseTest {
    pub baseline: Algorithm,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricComparison {
    pub metric: String,
    pub summaries: Vec<AlgorithmSummary>,
    /// MOME-X vs each baseline; empty when MOME-X or baselines are absent.
    pub tests: Vec<PairwiseTest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonTable {
    pub alpha: f64,
    pub metrics: Vec<MetricComparison>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn quartile(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between closest ranks
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Final-budget comparison of seeded runs: per-algorithm median and IQR
/// for every metric, plus Wilcoxon tests of MOME-X against each
/// baseline with Holm-Bonferroni adjustment (per metric).
pub fn compare_runs(records: &[RunRecord], alpha: f64) -> Result<ComparisonTable> {
    if records.is_empty() {
        return Err(Error::Usage("no run records to compare".into()));
    }
    // algorithm -> seed -> final row
    let mut grouped: BTreeMap<Algorithm, BTreeMap<u64, &MetricsRow>> = BTreeMap::new();
    for r in records {
        let last = r
            .rows
            .last()
            .ok_or_else(|| Error::Usage(format!("run {} has no metric rows", r.run_id())))?;
        let prev = grouped
            .entry(r.algorithm)
            .or_default()
            .insert(r.seed, last);
        if prev.is_some() {
            return Err(Error::Usage(format!(
                "duplicate record for {}",
                r.run_id()
            )));
        }
    }
    let seed_sets: Vec<Vec<u64>> = grouped
        .values()
        .map(|m| m.keys().cloned().collect())
        .collect();
    for s in &seed_sets[1..] {
        if *s != seed_sets[0] {
            return Err(Error::Usage(
                "algorithms are not paired on identical seed sets".into(),
            ));
        }
    }
    let seeds = &seed_sets[0];

    let mut metrics = Vec::new();
    for name in METRIC_NAMES {
        let mut summaries = Vec::new();
        for (alg, by_seed) in &grouped {
            let mut values: Vec<f64> = by_seed.values().map(|r| metric_value(r, name)).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            summaries.push(AlgorithmSummary {
                algorithm: *alg,
                median: median(&values),
                iqr_low: quartile(&values, 0.25),
                iqr_high: quartile(&values, 0.75),
            });
        }
        let mut tests = Vec::new();
        if let Some(momex) = grouped.get(&Algorithm::MomeX) {
            let baselines: Vec<Algorithm> = grouped
                .keys()
                .filter(|a| **a != Algorithm::MomeX)
                .cloned()
                .collect();
            let mut raw = Vec::new();
            let mut tested = Vec::new();
            for b in &baselines {
                let other = &grouped[b];
                let x: Vec<f64> = seeds
                    .iter()
                    .map(|s| metric_value(momex[s], name))
                    .collect();
                let y: Vec<f64> = seeds.iter().map(|s| metric_value(other[s], name)).collect();
                // too few paired differences (< 5 non-zero): summaries
                // are still reported, the significance test is skipped
                match wilcoxon_signed_rank(&x, &y) {
                    Ok(p) => {
                        raw.push(p);
                        tested.push(*b);
                    }
                    Err(Error::Usage(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            let baselines = tested;
            let adjusted = holm_bonferroni(&raw, alpha);
            for ((b, p), (adj, reject)) in baselines.iter().zip(&raw).zip(&adjusted) {
                tests.push(PairwiseTest {
                    baseline: *b,
                    raw_p: *p,
                    adjusted_p: *adj,
                    reject: *reject,
                });
            }
        }
        metrics.push(MetricComparison {
            metric: name.to_string(),
            summaries,
            tests,
        });
    }
    Ok(ComparisonTable { alpha, metrics })
}

impl ComparisonTable {
    /// Tabular text rendering for external consumption.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "# metric\talgorithm\tmedian\tiqr_low\tiqr_high\traw_p\tadjusted_p\treject\n",
        );
        for m in &self.metrics {
            for s in &m.summaries {
                let test = m.tests.iter().find(|t| t.baseline == s.algorithm);
                let (raw, adj, rej) = match test {
                    Some(t) => (
                        format!("{}", t.raw_p),
                        format!("{}", t.adjusted_p),
                        format!("{}", t.reject),
                    ),
                    None => ("-".into(), "-".into(), "-".into()),
                };
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    m.metric, s.algorithm, s.median, s.iqr_low, s.iqr_high, raw, adj, rej
                ));
            }
        }
        out
    }
}

/// Per-iteration median and IQR traces for one algorithm, for plotting.
pub fn median_trace(records: &[RunRecord], metric: &str) -> Vec<(usize, f64, f64, f64)> {
    if records.is_empty() {
        return Vec::new();
    }
    let len = records.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let mut values: Vec<f64> = records
            .iter()
            .map(|r| metric_value(&r.rows[i], metric))
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push((
            records[0].rows[i].evaluations,
            median(&values),
            quartile(&values, 0.25),
            quartile(&values, 0.75),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{build_cvt, FeatureBounds, MomeArchive};
    use crate::domain::test_support::solution_with;
    use crate::pareto::dominates;

    fn reference() -> ObjectiveVector {
        ObjectiveVector::pair(0.0, 0.0).unwrap()
    }

    fn small_archive() -> MomeArchive {
        let bounds = FeatureBounds::new([0.0, 0.0], [1.0, 1.0]);
        let t = build_cvt(4, &bounds, 400, 1).unwrap();
        MomeArchive::new(t, 10)
    }

    #[test]
    fn moqd_score_empty_archive_is_zero() {
        assert_eq!(moqd_score(&small_archive(), &reference()).unwrap(), 0.0);
    }

    #[test]
    fn moqd_score_is_additive_over_cells() {
        let mut a = small_archive();
        // two distant features so the pairs land in different cells
        let cells: Vec<usize> = [[0.05, 0.05], [0.95, 0.95]]
            .iter()
            .map(|f| a.tessellation().assign_cell(*f))
            .collect();
        assert_ne!(cells[0], cells[1]);
        for f in [[0.05, 0.05], [0.95, 0.95]] {
            a.insert(solution_with(1.0, 2.0, f));
            a.insert(solution_with(2.0, 1.0, f));
        }
        let score = moqd_score(&a, &reference()).unwrap();
        assert!((score - 6.0).abs() < 1e-12);
    }

    #[test]
    fn objective_qd_score_literal_sum() {
        let mut a = small_archive();
        a.insert(solution_with(1.0, 0.5, [0.1, 0.1]));
        a.insert(solution_with(2.5, 0.25, [0.9, 0.9]));
        assert!(
            (objective_qd_score(&a, 0, QdScoreVariant::AllSolutions) - 3.5).abs() < 1e-12
        );
        assert!(
            (objective_qd_score(&a, 1, QdScoreVariant::AllSolutions) - 0.75).abs() < 1e-12
        );
    }

    #[test]
    fn cell_best_variant_takes_per_cell_maximum() {
        let mut a = small_archive();
        let f = [0.1, 0.1];
        a.insert(solution_with(3.0, 1.0, f));
        a.insert(solution_with(1.0, 3.0, f));
        assert!((objective_qd_score(&a, 0, QdScoreVariant::CellBest) - 3.0).abs() < 1e-12);
        assert!(
            (objective_qd_score(&a, 0, QdScoreVariant::AllSolutions) - 4.0).abs() < 1e-12
        );
    }

    #[test]
    fn coverage_fractions() {
        let mut a = small_archive();
        assert_eq!(coverage(&a), 0.0);
        a.insert(solution_with(1.0, 1.0, [0.05, 0.05]));
        assert!((coverage(&a) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn global_hypervolume_single_solution() {
        let mut a = small_archive();
        a.insert(solution_with(2.0, 3.0, [0.5, 0.5]));
        let hv = global_hypervolume(&a, &reference()).unwrap();
        assert!((hv - 6.0).abs() < 1e-12);
    }

    #[test]
    fn non_dominated_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let points: Vec<ObjectiveVector> = (0..30)
                .map(|_| ObjectiveVector::pair(rng.gen(), rng.gen()).unwrap())
                .collect();
            let mut fast = non_dominated(&points);
            let mut brute: Vec<ObjectiveVector> = points
                .iter()
                .filter(|p| {
                    !points
                        .iter()
                        .any(|q| dominates(q, p).unwrap())
                })
                .cloned()
                .collect();
            let key = |v: &ObjectiveVector| (v[0], v[1]);
            fast.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            brute.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            assert_eq!(fast, brute);
        }
    }

    #[test]
    fn wilcoxon_identical_samples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(wilcoxon_signed_rank(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn wilcoxon_exact_six_positive_differences() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [0.0; 6];
        let p = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!((p - 0.03125).abs() < 1e-12, "p = {p}");
    }

    #[test]
    fn wilcoxon_is_symmetric_in_arguments() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let x: Vec<f64> = (0..15).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..15).map(|_| rng.gen::<f64>()).collect();
            let p1 = wilcoxon_signed_rank(&x, &y).unwrap();
            let p2 = wilcoxon_signed_rank(&y, &x).unwrap();
            assert!((p1 - p2).abs() < 1e-12);
        }
    }

    #[test]
    fn wilcoxon_exact_close_to_normal_approximation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let x: Vec<f64> = (0..15).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..15).map(|_| rng.gen::<f64>() + 0.2).collect();
            let diffs: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            // recompute both paths on the same data
            let exact = wilcoxon_signed_rank(&x, &y).unwrap();
            let n = diffs.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
            let w2: u64 = order
                .iter()
                .enumerate()
                .filter(|(_, &i)| diffs[i] > 0.0)
                .map(|(rank, _)| 2 * (rank as u64 + 1))
                .sum();
            let approx = super::normal_two_sided_p(n, &vec![1; n], w2);
            assert!((exact - approx).abs() < 0.02, "{exact} vs {approx}");
        }
    }

    #[test]
    fn holm_single_p_unchanged() {
        let out = holm_bonferroni(&[0.02], 0.05);
        assert_eq!(out, vec![(0.02, true)]);
    }

    #[test]
    fn holm_step_down_example() {
        let out = holm_bonferroni(&[0.01, 0.04, 0.03], 0.05);
        assert!((out[0].0 - 0.03).abs() < 1e-12 && out[0].1);
        assert!((out[1].0 - 0.06).abs() < 1e-12 && !out[1].1);
        assert!((out[2].0 - 0.06).abs() < 1e-12 && !out[2].1);
    }

    #[test]
    fn holm_all_ones_no_rejections() {
        let out = holm_bonferroni(&[1.0, 1.0, 1.0], 0.05);
        assert!(out.iter().all(|(p, r)| *p == 1.0 && !r));
    }

    #[test]
    fn holm_adjusted_monotone_and_at_least_raw() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let ps: Vec<f64> = (0..10).map(|_| rng.gen::<f64>()).collect();
        let out = holm_bonferroni(&ps, 0.05);
        for (raw, (adj, _)) in ps.iter().zip(&out) {
            assert!(*adj >= *raw - 1e-15);
        }
        let mut order: Vec<usize> = (0..ps.len()).collect();
        order.sort_by(|&i, &j| ps[i].partial_cmp(&ps[j]).unwrap());
        for w in order.windows(2) {
            assert!(out[w[0]].0 <= out[w[1]].0 + 1e-15);
        }
    }
}
