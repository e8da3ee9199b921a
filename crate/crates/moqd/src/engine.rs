//! The seeded optimization loop: MOME-X with crowding-based selection
//! and the three MAP-Elites baselines, sharing initialization, variation,
//! relaxation and filtering. Runs are fully deterministic per seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::archive::{
    build_cvt, passive_sync, CvtTessellation, MapElitesArchive, MomeArchive, ScalarFitnessRule,
};
use crate::domain::{
    evaluate, filter_solution, initialize_population, permutation_mutation, relax,
    strain_mutation, CrystalGenotype, DomainParams, EvaluatedSolution, OperatorTag, Provenance,
};
use crate::metrics::{metrics_row, MetricsRow, QdScoreVariant};
use crate::pareto::{crowding_distances, ObjectiveVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    MomeX,
    MeStability,
    MeMagnetism,
    MeSum,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::MomeX,
        Algorithm::MeStability,
        Algorithm::MeMagnetism,
        Algorithm::MeSum,
    ];

    pub fn scalar_rule(&self) -> Option<ScalarFitnessRule> {
        match self {
            Algorithm::MomeX => None,
            Algorithm::MeStability => Some(ScalarFitnessRule::Stability),
            Algorithm::MeMagnetism => Some(ScalarFitnessRule::Magnetism),
            Algorithm::MeSum => Some(ScalarFitnessRule::Sum),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Algorithm::MomeX => "mome_x",
            Algorithm::MeStability => "me_stability",
            Algorithm::MeMagnetism => "me_magnetism",
            Algorithm::MeSum => "me_sum",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mome_x" | "mome-x" | "momex" => Ok(Algorithm::MomeX),
            "me_stability" | "me-stability" => Ok(Algorithm::MeStability),
            "me_magnetism" | "me-magnetism" => Ok(Algorithm::MeMagnetism),
            "me_sum" | "me-sum" => Ok(Algorithm::MeSum),
            other => Err(Error::Parse(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Full configuration of one seeded run. Defaults follow the reference
/// hyperparameters: 5000 evaluations in batches of 100, 200 CVT cells
/// with front length 10 (baselines tessellate into 2000 cells), 100
/// relaxation steps, force threshold 1.0 and reference point [0, 0].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub total_evaluations: usize,
    pub batch_size: usize,
    /// MOME cell count c
    pub cells: usize,
    /// max Pareto front length p; baselines use c*p cells
    pub front_size: usize,
    pub sigma_strain: f64,
    /// probability of strain (vs permutation) for multi-species systems
    pub strain_probability: f64,
    pub relax_steps: usize,
    pub force_threshold: f64,
    pub reference_point: [f64; 2],
    /// uniform samples for CVT construction
    pub cvt_samples: usize,
    /// tessellation seed, shared across a comparison suite
    pub cvt_seed: u64,
    /// charge relaxation-internal energy calls to the evaluation budget
    pub charge_relaxation_evals: bool,
    pub domain: DomainParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::MomeX,
            seed: 0,
            total_evaluations: 5000,
            batch_size: 100,
            cells: 200,
            front_size: 10,
            sigma_strain: 0.08,
            strain_probability: 0.5,
            relax_steps: 100,
            force_threshold: 1.0,
            reference_point: [0.0, 0.0],
            cvt_samples: 50_000,
            cvt_seed: 42,
            charge_relaxation_evals: false,
            domain: DomainParams::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.total_evaluations < self.batch_size {
            return Err(Error::Usage(
                "need total_evaluations >= batch_size >= 1".into(),
            ));
        }
        if self.cells == 0 || self.front_size == 0 {
            return Err(Error::Usage("cells and front_size must be >= 1".into()));
        }
        let baseline_cells = self.cells * self.front_size;
        if self.cvt_samples < 10 * baseline_cells {
            return Err(Error::Usage(format!(
                "cvt_samples must be at least 10x the largest cell count ({})",
                baseline_cells
            )));
        }
        if !(0.0..=1.0).contains(&self.strain_probability) {
            return Err(Error::Usage("strain_probability must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn run_id(&self) -> String {
        format!("{}_{}", self.algorithm, self.seed)
    }

    pub fn reference(&self) -> ObjectiveVector {
        ObjectiveVector::pair(self.reference_point[0], self.reference_point[1]).unwrap()
    }
}

/// Per-iteration trace plus the final archive of one seeded run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config: RunConfig,
    pub rows: Vec<MetricsRow>,
    /// path of the written archive snapshot, when persisted
    pub snapshot_path: Option<std::path::PathBuf>,
}

impl RunRecord {
    pub fn run_id(&self) -> String {
        format!("{}_{}", self.algorithm, self.seed)
    }
}

/// Everything a finished run produces in memory.
pub struct RunOutput {
    pub record: RunRecord,
    /// the MOME archive metrics are computed on (operational for MOME-X,
    /// passive for baselines)
    pub metrics_archive: MomeArchive,
    /// the operational MAP-Elites archive, baselines only
    pub me_archive: Option<MapElitesArchive>,
}

// Tessellations are deterministic functions of (cells, bounds, samples,
// seed); cache them so a comparison suite builds each grid once.
type CvtKey = (usize, usize, u64, [u64; 4]);

fn cvt_cache() -> &'static Mutex<HashMap<CvtKey, Arc<CvtTessellation>>> {
    static CACHE: OnceLock<Mutex<HashMap<CvtKey, Arc<CvtTessellation>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Tessellation for a config, built once per (cells, bounds, samples,
/// seed) and shared across runs.
pub fn tessellation_for(config: &RunConfig, cells: usize) -> Result<Arc<CvtTessellation>> {
    let b = &config.domain.feature_bounds;
    let key: CvtKey = (
        cells,
        config.cvt_samples,
        config.cvt_seed,
        [
            b.lo[0].to_bits(),
            b.lo[1].to_bits(),
            b.hi[0].to_bits(),
            b.hi[1].to_bits(),
        ],
    );
    if let Some(t) = cvt_cache().lock().unwrap().get(&key) {
        return Ok(t.clone());
    }
    let t = Arc::new(build_cvt(cells, b, config.cvt_samples, config.cvt_seed)?);
    cvt_cache()
        .lock()
        .unwrap()
        .entry(key)
        .or_insert_with(|| t.clone());
    Ok(t)
}

enum ArchiveRef<'a> {
    Mome(&'a MomeArchive),
    MapElites(&'a MapElitesArchive),
}

struct Candidate {
    genotype: CrystalGenotype,
    parent: Option<u64>,
    operator: OperatorTag,
}

/// Select a batch of parent genotypes (with replacement).
///
/// MOME-X picks a non-empty cell uniformly, then a front member with
/// probability proportional to crowding distance (infinite distances
/// stand in as twice the largest finite distance; all-infinite fronts
/// fall back to uniform). Baselines pick occupied cells uniformly.
fn select_batch<R: Rng>(
    archive: ArchiveRef<'_>,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<(CrystalGenotype, u64)>> {
    let mut out = Vec::with_capacity(batch_size);
    match archive {
        ArchiveRef::Mome(a) => {
            let occupied: Vec<usize> = a.occupied_cells().map(|(i, _)| i).collect();
            if occupied.is_empty() {
                return Err(Error::Usage("cannot select from an empty archive".into()));
            }
            for _ in 0..batch_size {
                let cell = occupied[rng.gen_range(0..occupied.len())];
                let front = a.cell(cell);
                let solutions: Vec<&EvaluatedSolution> = front.solutions().collect();
                let weights = selection_weights(&front.objective_vectors());
                let chosen = weighted_choice(&weights, rng);
                let s = solutions[chosen];
                out.push((s.genotype.clone(), s.id));
            }
        }
        ArchiveRef::MapElites(a) => {
            let occupied: Vec<&EvaluatedSolution> = a.solutions().map(|(_, s)| s).collect();
            if occupied.is_empty() {
                return Err(Error::Usage("cannot select from an empty archive".into()));
            }
            for _ in 0..batch_size {
                let s = occupied[rng.gen_range(0..occupied.len())];
                out.push((s.genotype.clone(), s.id));
            }
        }
    }
    Ok(out)
}

/// Crowding-based selection weights for one front.
pub fn selection_weights(vectors: &[ObjectiveVector]) -> Vec<f64> {
    let distances = crowding_distances(vectors);
    let largest_finite = distances
        .iter()
        .filter(|d| d.is_finite())
        .fold(0.0f64, |m, &d| m.max(d));
    if largest_finite <= 0.0 {
        return vec![1.0; vectors.len()];
    }
    distances
        .iter()
        .map(|&d| if d.is_finite() { d } else { 2.0 * largest_finite })
        .collect()
}

fn weighted_choice<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.gen_range(0..weights.len());
    }
    let mut ticket = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        ticket -= w;
        if ticket <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Observer invoked at every iteration boundary with the metrics archive.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &MomeArchive, &MetricsRow);

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    run_with_observer(config, &mut |_, _, _| {})
}

pub fn run_with_observer(config: &RunConfig, observer: Observer<'_>) -> Result<RunOutput> {
    config.validate()?;
    let reference = config.reference();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mome_tess = tessellation_for(config, config.cells)?;
    let mut metrics_archive = MomeArchive::new((*mome_tess).clone(), config.front_size);
    let mut operational = match config.algorithm.scalar_rule() {
        None => None,
        Some(rule) => {
            let me_tess = tessellation_for(config, config.cells * config.front_size)?;
            Some(MapElitesArchive::new((*me_tess).clone(), rule))
        }
    };

    let multi_species = config.domain.distinct_species_count() >= 2;
    let mut evals_used = 0usize;
    let mut next_id = 0u64;
    let mut rows: Vec<MetricsRow> = Vec::new();

    let process_batch = |candidates: Vec<Candidate>,
                             iteration: usize,
                             metrics_archive: &mut MomeArchive,
                             operational: &mut Option<MapElitesArchive>,
                             evals_used: &mut usize,
                             next_id: &mut u64|
     -> Result<()> {
        let ids: Vec<u64> = candidates
            .iter()
            .enumerate()
            .map(|(i, _)| *next_id + i as u64)
            .collect();
        *next_id += candidates.len() as u64;

        // pure per-candidate work runs in parallel; results are collected
        // in submission order so the insertion sequence is deterministic
        let evaluated: Vec<(Option<EvaluatedSolution>, usize)> = candidates
            .into_par_iter()
            .zip(ids.into_par_iter())
            .map(|(c, id)| {
                let provenance = Provenance {
                    iteration,
                    parent: c.parent,
                    operator: c.operator,
                };
                match relax(&c.genotype, config.relax_steps, &config.domain) {
                    Ok(relaxed) => {
                        match evaluate(relaxed.genotype, &config.domain, id, provenance) {
                            Ok(mut s) => {
                                s.force_norm = relaxed.force_norm;
                                (Some(s), relaxed.energy_calls)
                            }
                            Err(_) => (None, relaxed.energy_calls),
                        }
                    }
                    // unrelaxable candidates (e.g. overlap at entry) are
                    // still charged as one evaluation and dropped
                    Err(_) => (None, 0),
                }
            })
            .collect();

        for (solution, energy_calls) in evaluated {
            *evals_used += 1;
            if config.charge_relaxation_evals {
                *evals_used += energy_calls;
            }
            let Some(solution) = solution else { continue };
            if !filter_solution(&solution, config.force_threshold, &reference) {
                continue;
            }
            match operational {
                None => {
                    metrics_archive.insert(solution);
                }
                Some(me) => {
                    me.insert(solution);
                }
            }
        }
        Ok(())
    };

    // initialization round: population size equals batch_size
    let init_count = config.batch_size.min(config.total_evaluations);
    let initial = initialize_population(init_count, &config.domain, &mut rng)
        .into_iter()
        .map(|genotype| Candidate {
            genotype,
            parent: None,
            operator: OperatorTag::Init,
        })
        .collect();
    process_batch(
        initial,
        0,
        &mut metrics_archive,
        &mut operational,
        &mut evals_used,
        &mut next_id,
    )?;
    if let Some(me) = &operational {
        passive_sync(&mut metrics_archive, me);
    }
    let row = metrics_row(
        &metrics_archive,
        &reference,
        evals_used,
        QdScoreVariant::AllSolutions,
    )?;
    observer(0, &metrics_archive, &row);
    rows.push(row);

    let mut iteration = 0usize;
    while evals_used < config.total_evaluations {
        iteration += 1;
        let batch = config
            .batch_size
            .min(config.total_evaluations - evals_used);
        let selection_archive = match &operational {
            None => ArchiveRef::Mome(&metrics_archive),
            Some(me) => ArchiveRef::MapElites(me),
        };
        let parents = select_batch(selection_archive, batch, &mut rng)?;
        let mut offspring = Vec::with_capacity(batch);
        for (genotype, parent_id) in parents {
            let use_strain = !multi_species || rng.gen::<f64>() < config.strain_probability;
            let (child, operator) = if use_strain {
                (
                    strain_mutation(&genotype, config.sigma_strain, &config.domain, &mut rng),
                    OperatorTag::Strain,
                )
            } else {
                match permutation_mutation(&genotype, &mut rng) {
                    Ok(c) => (c, OperatorTag::Permutation),
                    // genotype degenerated to one species: fall back to strain
                    Err(Error::SingleSpecies) => (
                        strain_mutation(&genotype, config.sigma_strain, &config.domain, &mut rng),
                        OperatorTag::Strain,
                    ),
                    Err(e) => return Err(e),
                }
            };
            offspring.push(Candidate {
                genotype: child,
                parent: Some(parent_id),
                operator,
            });
        }
        process_batch(
            offspring,
            iteration,
            &mut metrics_archive,
            &mut operational,
            &mut evals_used,
            &mut next_id,
        )?;
        if let Some(me) = &operational {
            passive_sync(&mut metrics_archive, me);
        }
        let row = metrics_row(
            &metrics_archive,
            &reference,
            evals_used,
            QdScoreVariant::AllSolutions,
        )?;
        observer(iteration, &metrics_archive, &row);
        rows.push(row);
    }

    Ok(RunOutput {
        record: RunRecord {
            algorithm: config.algorithm,
            seed: config.seed,
            config: config.clone(),
            rows,
            snapshot_path: None,
        },
        metrics_archive,
        me_archive: operational,
    })
}

/// Outcome of one run inside a suite.
pub struct SuiteEntry {
    pub config: RunConfig,
    pub result: Result<RunOutput>,
}

/// Execute a list of configured runs independently. Failures are
/// recorded per run without aborting the suite.
pub fn run_suite(configs: &[RunConfig]) -> Result<Vec<SuiteEntry>> {
    if configs.is_empty() {
        return Err(Error::Usage("empty suite".into()));
    }
    // tessellations are shared; warm the cache serially first
    for c in configs {
        tessellation_for(c, c.cells)?;
        if c.algorithm != Algorithm::MomeX {
            tessellation_for(c, c.cells * c.front_size)?;
        }
    }
    Ok(configs
        .iter()
        .map(|c| SuiteEntry {
            config: c.clone(),
            result: run(c),
        })
        .collect())
}

/// The seeds-times-algorithms cross product with shared tessellation.
pub fn suite_configs(base: &RunConfig, algorithms: &[Algorithm], seeds: &[u64]) -> Vec<RunConfig> {
    let mut out = Vec::with_capacity(algorithms.len() * seeds.len());
    for &algorithm in algorithms {
        for &seed in seeds {
            let mut c = base.clone();
            c.algorithm = algorithm;
            c.seed = seed;
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::test_support::solution_with;

    fn quick_config(algorithm: Algorithm) -> RunConfig {
        RunConfig {
            algorithm,
            total_evaluations: 60,
            batch_size: 20,
            cells: 8,
            front_size: 3,
            relax_steps: 50,
            cvt_samples: 1000,
            ..RunConfig::default()
        }
    }

    #[test]
    fn selection_weights_follow_stated_rule() {
        // extremes weighted 2x the largest finite distance (2.0 -> 4.0),
        // the interior member keeps its finite distance
        let vectors: Vec<ObjectiveVector> = [(0.0, 10.0), (5.0, 5.0), (10.0, 0.0)]
            .iter()
            .map(|&(a, b)| ObjectiveVector::pair(a, b).unwrap())
            .collect();
        let w = selection_weights(&vectors);
        assert_eq!(w, vec![4.0, 2.0, 4.0]);
    }

    #[test]
    fn selection_weights_all_infinite_fall_back_to_uniform() {
        let vectors: Vec<ObjectiveVector> = [(0.0, 1.0), (1.0, 0.0)]
            .iter()
            .map(|&(a, b)| ObjectiveVector::pair(a, b).unwrap())
            .collect();
        assert_eq!(selection_weights(&vectors), vec![1.0, 1.0]);
    }

    #[test]
    fn select_from_single_solution_archive_repeats_it() {
        let t = build_cvt(
            4,
            &crate::archive::FeatureBounds::new([0.0, 0.0], [1.0, 1.0]),
            400,
            1,
        )
        .unwrap();
        let mut a = MomeArchive::new(t, 5);
        a.insert(solution_with(1.0, 1.0, [0.5, 0.5]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = select_batch(ArchiveRef::Mome(&a), 7, &mut rng).unwrap();
        assert_eq!(batch.len(), 7);
        assert!(batch.iter().all(|(_, id)| *id == batch[0].1));
    }

    #[test]
    fn empty_archive_selection_is_usage_error() {
        let t = build_cvt(
            4,
            &crate::archive::FeatureBounds::new([0.0, 0.0], [1.0, 1.0]),
            400,
            1,
        )
        .unwrap();
        let a = MomeArchive::new(t, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(select_batch(ArchiveRef::Mome(&a), 1, &mut rng).is_err());
    }

    #[test]
    fn budget_equal_to_batch_runs_zero_iterations() {
        let mut c = quick_config(Algorithm::MomeX);
        c.total_evaluations = c.batch_size;
        let out = run(&c).unwrap();
        assert_eq!(out.record.rows.len(), 1);
        assert_eq!(out.record.rows[0].evaluations, c.batch_size);
    }

    #[test]
    fn budget_accounting_is_exact() {
        for algorithm in Algorithm::ALL {
            let out = run(&quick_config(algorithm)).unwrap();
            assert_eq!(out.record.rows.last().unwrap().evaluations, 60);
        }
    }

    #[test]
    fn same_seed_reproduces_identical_records() {
        let c = quick_config(Algorithm::MomeX);
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert_eq!(a.record.rows, b.record.rows);
    }

    #[test]
    fn coverage_and_me_fitness_are_monotone() {
        let c = quick_config(Algorithm::MeStability);
        let mut coverages = Vec::new();
        let out = run_with_observer(&c, &mut |_, archive, row| {
            coverages.push((crate::metrics::coverage(archive), row.coverage));
        })
        .unwrap();
        for w in coverages.windows(2) {
            assert!(w[1].0 >= w[0].0);
        }
        // ME per-cell fitness never decreases: final scan only (history
        // covered by the insert rule test)
        assert!(out.me_archive.is_some());
    }

    #[test]
    fn suite_produces_one_record_per_config() {
        let configs = suite_configs(
            &quick_config(Algorithm::MomeX),
            &[Algorithm::MomeX, Algorithm::MeSum],
            &[1, 2],
        );
        let entries = run_suite(&configs).unwrap();
        assert_eq!(entries.len(), 4);
        assert!(entries.iter().all(|e| e.result.is_ok()));
    }
}
