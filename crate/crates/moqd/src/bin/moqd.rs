//! File-based workflow around the library: execute runs and suites,
//! compare run directories, illuminate and match archive snapshots.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use moqd::engine::{self, Algorithm, RunConfig};
use moqd::illumination;
use moqd::matcher::{self, MatchTolerances, ReferenceStructure};
use moqd::metrics;
use moqd::snapshot;

#[derive(Parser)]
#[command(name = "moqd", about = "Multi-objective quality-diversity optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one configured run and write its record and snapshot
    Run {
        /// TOML run configuration; defaults apply for absent keys
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// override the config's seed
        #[arg(long)]
        seed: Option<u64>,
        /// override the config's evaluation budget
        #[arg(long)]
        budget: Option<usize>,
        /// override the config's algorithm
        #[arg(long)]
        algorithm: Option<Algorithm>,
        #[arg(long)]
        force: bool,
    },
    /// Execute seeds x algorithms and write one record per run
    Suite {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// number of seeded replications (seeds 0..n)
        #[arg(long, default_value_t = 15)]
        seeds: u64,
        /// comma-separated algorithms
        #[arg(long, value_delimiter = ',', default_values_t = Algorithm::ALL)]
        algorithms: Vec<Algorithm>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Compare a directory of finished runs: medians, IQR, Wilcoxon +
    /// Holm-Bonferroni, and per-iteration median traces
    Compare {
        /// directory produced by `suite`
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// where to write the table and traces (stdout if omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-cell best magnetism under stability thresholds
    Illuminate {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 0.85, 0.9, 0.95])]
        levels: Vec<f64>,
        /// output directory, one tabular file per level
        #[arg(long)]
        out: PathBuf,
    },
    /// Match archive solutions against reference structures
    Match {
        #[arg(long)]
        snapshot: PathBuf,
        /// reference file: `name<TAB>genotype` per line
        #[arg(long)]
        refs: PathBuf,
        /// run config used to rebuild the tessellation and evaluate refs
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        ltol: f64,
        #[arg(long, default_value_t = 5.0)]
        atol: f64,
        #[arg(long, default_value_t = 0.3)]
        stol: f64,
        /// output file (stdout if omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => snapshot::read_config(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            budget,
            algorithm,
            force,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(b) = budget {
                cfg.total_evaluations = b;
            }
            if let Some(a) = algorithm {
                cfg.algorithm = a;
            }
            std::fs::create_dir_all(&out)?;
            let mut output = engine::run(&cfg)?;
            let run_dir = snapshot::write_run(&out, &mut output, force)?;
            let last = output.record.rows.last().unwrap();
            println!(
                "{}: {} evaluations, moqd_score {:.4}, coverage {:.3} -> {}",
                output.record.run_id(),
                last.evaluations,
                last.moqd_score,
                last.coverage,
                run_dir.display()
            );
        }
        Command::Suite {
            config,
            out,
            seeds,
            algorithms,
            budget,
            force,
        } => {
            let mut base = load_config(&config)?;
            if let Some(b) = budget {
                base.total_evaluations = b;
            }
            if algorithms.is_empty() {
                bail!("no algorithms requested");
            }
            let seed_list: Vec<u64> = (0..seeds).collect();
            let configs = engine::suite_configs(&base, &algorithms, &seed_list);
            std::fs::create_dir_all(&out)?;
            let entries = engine::run_suite(&configs)?;
            let mut failures = 0;
            for entry in entries {
                match entry.result {
                    Ok(mut output) => {
                        snapshot::write_run(&out, &mut output, force)?;
                        let last = output.record.rows.last().unwrap();
                        println!(
                            "{}: moqd_score {:.4}, coverage {:.3}",
                            output.record.run_id(),
                            last.moqd_score,
                            last.coverage
                        );
                    }
                    Err(e) => {
                        failures += 1;
                        eprintln!("{} failed: {e}", entry.config.run_id());
                    }
                }
            }
            if failures > 0 {
                bail!("{failures} run(s) failed");
            }
        }
        Command::Compare { runs, alpha, out } => {
            let records = snapshot::load_records(&runs)?;
            let table = metrics::compare_runs(&records, alpha)?;
            let tsv = table.to_tsv();
            match out {
                None => print!("{tsv}"),
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("comparison.tsv"), &tsv)?;
                    // per-iteration median/IQR traces for plotting
                    let mut algorithms: Vec<Algorithm> =
                        records.iter().map(|r| r.algorithm).collect();
                    algorithms.sort();
                    algorithms.dedup();
                    for metric in metrics::METRIC_NAMES {
                        let mut text = String::from(
                            "# algorithm\tevaluations\tmedian\tiqr_low\tiqr_high\n",
                        );
                        for alg in &algorithms {
                            let group: Vec<_> = records
                                .iter()
                                .filter(|r| r.algorithm == *alg)
                                .cloned()
                                .collect();
                            for (evals, med, lo, hi) in metrics::median_trace(&group, metric) {
                                text.push_str(&format!(
                                    "{alg}\t{evals}\t{med}\t{lo}\t{hi}\n"
                                ));
                            }
                        }
                        std::fs::write(dir.join(format!("trace_{metric}.tsv")), text)?;
                    }
                    println!("comparison written to {}", dir.display());
                }
            }
        }
        Command::Illuminate {
            snapshot: snapshot_path,
            levels,
            out,
        } => {
            let rows = snapshot::read_snapshot(&snapshot_path)?;
            let table = illumination::illuminate_snapshot(&rows, &levels)?;
            // centroids of cells seen in the snapshot; unseen cells have
            // no solutions at any level, so a zero placeholder is fine
            let mut centroids = vec![[0.0, 0.0]; table.cell_count];
            for r in &rows {
                centroids[r.cell_index] = r.centroid;
            }
            std::fs::create_dir_all(&out)?;
            for (i, level) in table.levels.iter().enumerate() {
                let path = out.join(format!("illumination_{level}.tsv"));
                std::fs::write(&path, table.level_to_tsv(i, &centroids))?;
            }
            println!(
                "{} levels written to {} (stability range [{:.4}, {:.4}])",
                table.levels.len(),
                out.display(),
                table.stability_min,
                table.stability_max
            );
        }
        Command::Match {
            snapshot: snapshot_path,
            refs,
            config,
            ltol,
            atol,
            stol,
            out,
        } => {
            let cfg = load_config(&config)?;
            let rows = snapshot::read_snapshot(&snapshot_path)?;
            let archive = snapshot::archive_from_snapshot(&rows, &cfg)?;
            let references: Vec<ReferenceStructure> = snapshot::read_references(&refs)?
                .into_iter()
                .map(|(name, genotype)| ReferenceStructure {
                    name,
                    genotype,
                    objectives: None,
                })
                .collect();
            let tol = MatchTolerances { ltol, atol, stol };
            let report = matcher::match_archive(&archive, &references, &tol, &cfg.domain)?;
            let tsv = report.to_tsv();
            match out {
                None => print!("{tsv}"),
                Some(path) => {
                    std::fs::write(&path, &tsv)?;
                    println!("match report written to {}", path.display());
                }
            }
        }
    }
    Ok(())
}
