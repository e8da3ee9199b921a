//! A small replication suite across algorithms and seeds, followed by
//! the statistical comparison table (medians, IQR, Wilcoxon signed-rank
//! with Holm-Bonferroni correction).

use moqd::engine::{run_suite, suite_configs, Algorithm, RunConfig};
use moqd::metrics::compare_runs;

fn main() {
    let base = RunConfig {
        total_evaluations: 1500,
        ..RunConfig::default()
    };
    let seeds: Vec<u64> = (0..5).collect();
    let configs = suite_configs(&base, &Algorithm::ALL, &seeds);
    println!("running {} configurations...", configs.len());
    let records: Vec<_> = run_suite(&configs)
        .unwrap()
        .into_iter()
        .map(|e| e.result.unwrap().record)
        .collect();

    let table = compare_runs(&records, 0.05).unwrap();
    print!("{}", table.to_tsv());
}
