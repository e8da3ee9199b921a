//! Structure matching: does the optimizer re-discover the known
//! relaxed lattice templates bundled in data/references.tsv?

use std::path::Path;

use moqd::engine::{run, RunConfig};
use moqd::matcher::{match_archive, MatchTolerances, ReferenceStructure};
use moqd::snapshot::read_references;

fn main() {
    let config = RunConfig::default();
    let output = run(&config).unwrap();

    let path = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/references.tsv"));
    let references: Vec<ReferenceStructure> = read_references(path)
        .unwrap()
        .into_iter()
        .map(|(name, genotype)| ReferenceStructure {
            name,
            genotype,
            objectives: None,
        })
        .collect();

    let tol = MatchTolerances::default();
    let report = match_archive(&output.metrics_archive, &references, &tol, &config.domain).unwrap();
    println!("reference  cell  matches  outperformed(stability/magnetism)");
    for m in &report.per_reference {
        println!(
            "{:<9}  {:4}  {:7}  {}/{}",
            m.name,
            m.cell_index,
            m.matching_ids.len(),
            m.outperform_stability,
            m.outperform_magnetism
        );
    }
}
