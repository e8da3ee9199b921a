//! One multi-objective quality-diversity run with a live observer
//! printing the metrics trace.

use moqd::engine::{run_with_observer, RunConfig};

fn main() {
    let config = RunConfig {
        total_evaluations: 2000,
        ..RunConfig::default()
    };
    println!("iter  evals  moqd-score  coverage  global-hv");
    let output = run_with_observer(&config, &mut |iteration, _archive, row| {
        println!(
            "{iteration:4}  {:5}  {:10.2}  {:8.3}  {:9.3}",
            row.evaluations, row.moqd_score, row.coverage, row.global_hypervolume
        );
    })
    .unwrap();
    println!(
        "\nfinal archive: {} solutions across {} cells",
        output.metrics_archive.solution_count(),
        output.metrics_archive.occupied_cell_count()
    );
}
