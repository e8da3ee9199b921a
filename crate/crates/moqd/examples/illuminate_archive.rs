//! Archive illumination: for a range of minimum-stability thresholds,
//! the best magnetism reachable in each feature cell. Raising the
//! threshold never increases any cell's value.

use moqd::engine::{run, RunConfig};
use moqd::illumination::illuminate;

fn main() {
    let config = RunConfig {
        total_evaluations: 2000,
        ..RunConfig::default()
    };
    let output = run(&config).unwrap();
    let levels = [0.0, 0.5, 0.85, 0.9, 0.95];
    let table = illuminate(&output.metrics_archive, &levels).unwrap();
    println!(
        "stability range in archive: [{:.3}, {:.3}]\n",
        table.stability_min, table.stability_max
    );
    println!("level  threshold  populated cells  best magnetism");
    for (i, level) in table.levels.iter().enumerate() {
        let best = table.tables[i]
            .iter()
            .flatten()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        println!(
            "{level:5}  {:9.3}  {:15}  {best:.4}",
            table.threshold(*level),
            table.populated_count(i)
        );
    }
}
