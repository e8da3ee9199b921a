//! Flat-text persistence: genotype serialization, archive snapshots
//! (one row per stored solution), per-iteration metric traces and whole
//! suite output directories. All floats use Rust's shortest round-trip
//! formatting, so reading back is bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use crate::archive::{FeatureVector, MomeArchive};
use crate::domain::{CrystalGenotype, EvaluatedSolution, OperatorTag, Provenance};
use crate::engine::{RunConfig, RunRecord, RunOutput};
use crate::metrics::MetricsRow;
use crate::pareto::ObjectiveVector;
use crate::{Error, Result};

pub const SNAPSHOT_HEADER: &str = "# run_id\titeration\tsolution_id\tcell_index\tcentroid_0\tcentroid_1\tfeature_0\tfeature_1\tobjective_0\tobjective_1\tforce_norm\tgenotype";
pub const METRICS_HEADER: &str =
    "# evaluations\tmoqd_score\tenergy_qd_score\tmagnetism_qd_score\tcoverage\tglobal_hypervolume";

/// Serialize a genotype to a single-line record:
/// `a,b,c;alpha,beta,gamma;Sp:x:y:z|Sp:x:y:z|...`
pub fn genotype_to_string(g: &CrystalGenotype) -> String {
    let lengths = g
        .lengths
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let angles = g
        .angles
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let atoms = g
        .species
        .iter()
        .zip(&g.frac_coords)
        .map(|(s, c)| format!("{s}:{}:{}:{}", c[0], c[1], c[2]))
        .collect::<Vec<_>>()
        .join("|");
    format!("{lengths};{angles};{atoms}")
}

pub fn genotype_from_str(s: &str) -> Result<CrystalGenotype> {
    let parts: Vec<&str> = s.split(';').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("genotype record has {} sections, expected 3", parts.len())));
    }
    let triple = |text: &str, what: &str| -> Result<[f64; 3]> {
        let vals: Vec<f64> = text
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("{what}: {e}"))))
            .collect::<Result<_>>()?;
        vals.try_into()
            .map_err(|_| Error::Parse(format!("{what}: expected 3 values")))
    };
    let lengths = triple(parts[0], "lattice lengths")?;
    let angles = triple(parts[1], "lattice angles")?;
    let mut species = Vec::new();
    let mut frac_coords = Vec::new();
    if !parts[2].is_empty() {
        for atom in parts[2].split('|') {
            let fields: Vec<&str> = atom.split(':').collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!("bad atom record `{atom}`")));
            }
            species.push(fields[0].to_string());
            let mut coord = [0.0; 3];
            for (k, c) in coord.iter_mut().enumerate() {
                *c = fields[k + 1]
                    .parse()
                    .map_err(|e| Error::Parse(format!("atom coordinate: {e}")))?;
            }
            frac_coords.push(coord);
        }
    }
    Ok(CrystalGenotype {
        lengths,
        angles,
        frac_coords,
        species,
    })
}

/// One parsed archive snapshot row.
#[derive(Debug, Clone)]
pub struct SnapshotRow {
    pub run_id: String,
    pub iteration: usize,
    pub solution_id: u64,
    pub cell_index: usize,
    pub centroid: [f64; 2],
    pub features: [f64; 2],
    pub objectives: [f64; 2],
    pub force_norm: f64,
    pub genotype: CrystalGenotype,
}

impl SnapshotRow {
    /// Rehydrate into an archive-ready solution.
    pub fn to_solution(&self) -> Result<EvaluatedSolution> {
        Ok(EvaluatedSolution {
            id: self.solution_id,
            genotype: self.genotype.clone(),
            objectives: ObjectiveVector::pair(self.objectives[0], self.objectives[1])?,
            features: FeatureVector::unchecked(self.features),
            force_norm: self.force_norm,
            provenance: Provenance {
                iteration: self.iteration,
                parent: None,
                operator: OperatorTag::Init,
            },
        })
    }
}

pub fn snapshot_to_string(archive: &MomeArchive, run_id: &str, iteration: usize) -> String {
    let mut out = String::from(SNAPSHOT_HEADER);
    out.push('\n');
    for (cell, solution) in archive.solutions() {
        let centroid = archive.tessellation().centroids()[cell];
        let f = solution.features.values();
        out.push_str(&format!(
            "{run_id}\t{iteration}\t{}\t{cell}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            solution.id,
            centroid[0],
            centroid[1],
            f[0],
            f[1],
            solution.objectives[0],
            solution.objectives[1],
            solution.force_norm,
            genotype_to_string(&solution.genotype),
        ));
    }
    out
}

pub fn write_snapshot(
    path: &Path,
    archive: &MomeArchive,
    run_id: &str,
    iteration: usize,
) -> Result<()> {
    fs::write(path, snapshot_to_string(archive, run_id, iteration))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Vec<SnapshotRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 12 {
            return Err(Error::Parse(format!(
                "snapshot line {}: {} fields, expected 12",
                lineno + 1,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|e| Error::Parse(format!("snapshot line {}: {e}", lineno + 1)))
        };
        rows.push(SnapshotRow {
            run_id: fields[0].to_string(),
            iteration: fields[1]
                .parse()
                .map_err(|e| Error::Parse(format!("iteration: {e}")))?,
            solution_id: fields[2]
                .parse()
                .map_err(|e| Error::Parse(format!("solution id: {e}")))?,
            cell_index: fields[3]
                .parse()
                .map_err(|e| Error::Parse(format!("cell index: {e}")))?,
            centroid: [num(4)?, num(5)?],
            features: [num(6)?, num(7)?],
            objectives: [num(8)?, num(9)?],
            force_norm: num(10)?,
            genotype: genotype_from_str(fields[11])?,
        });
    }
    Ok(rows)
}

pub fn metrics_to_string(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.evaluations,
            r.moqd_score,
            r.energy_qd_score,
            r.magnetism_qd_score,
            r.coverage,
            r.global_hypervolume
        ));
    }
    out
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    fs::write(path, metrics_to_string(rows))?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::Parse(format!(
                "metrics line {}: {} fields, expected 6",
                lineno + 1,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|e| Error::Parse(format!("metrics line {}: {e}", lineno + 1)))
        };
        rows.push(MetricsRow {
            evaluations: fields[0]
                .parse()
                .map_err(|e| Error::Parse(format!("evaluations: {e}")))?,
            moqd_score: num(1)?,
            energy_qd_score: num(2)?,
            magnetism_qd_score: num(3)?,
            coverage: num(4)?,
            global_hypervolume: num(5)?,
        });
    }
    Ok(rows)
}

pub fn write_config(path: &Path, config: &RunConfig) -> Result<()> {
    let text = toml::to_string_pretty(config).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

/// Persist one finished run under `dir/<algorithm>_<seed>/`.
/// Refuses to overwrite an existing run directory unless `force`.
pub fn write_run(dir: &Path, output: &mut RunOutput, force: bool) -> Result<PathBuf> {
    let run_dir = dir.join(output.record.run_id());
    if run_dir.exists() && !force {
        return Err(Error::Usage(format!(
            "{} already exists (use --force to overwrite)",
            run_dir.display()
        )));
    }
    fs::create_dir_all(&run_dir)?;
    write_config(&run_dir.join("config.toml"), &output.record.config)?;
    write_metrics(&run_dir.join("metrics.tsv"), &output.record.rows)?;
    let snapshot = run_dir.join("snapshot.tsv");
    let final_iteration = output.record.rows.len().saturating_sub(1);
    write_snapshot(
        &snapshot,
        &output.metrics_archive,
        &output.record.run_id(),
        final_iteration,
    )?;
    output.record.snapshot_path = Some(snapshot);
    Ok(run_dir)
}

/// Load every run record (config + metric trace) found under `dir`.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("config.toml").exists())
        .collect();
    entries.sort();
    for run_dir in entries {
        let config = read_config(&run_dir.join("config.toml"))?;
        let rows = read_metrics(&run_dir.join("metrics.tsv"))?;
        let snapshot = run_dir.join("snapshot.tsv");
        records.push(RunRecord {
            algorithm: config.algorithm,
            seed: config.seed,
            config,
            rows,
            snapshot_path: snapshot.exists().then_some(snapshot),
        });
    }
    if records.is_empty() {
        return Err(Error::Usage(format!(
            "no run directories found under {}",
            dir.display()
        )));
    }
    Ok(records)
}

/// Rebuild a MOME archive from snapshot rows using the tessellation
/// implied by a run config.
pub fn archive_from_snapshot(rows: &[SnapshotRow], config: &RunConfig) -> Result<MomeArchive> {
    let tess = crate::engine::tessellation_for(config, config.cells)?;
    let mut archive = MomeArchive::new((*tess).clone(), config.front_size);
    for row in rows {
        archive.insert(row.to_solution()?);
    }
    Ok(archive)
}

/// Read a named-reference file: `name<TAB>genotype` per line.
pub fn read_references(path: &Path) -> Result<Vec<(String, CrystalGenotype)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let (name, genotype) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("bad reference line `{line}`")))?;
        out.push((name.to_string(), genotype_from_str(genotype)?));
    }
    Ok(out)
}

pub fn write_references(path: &Path, refs: &[(String, CrystalGenotype)]) -> Result<()> {
    let mut text = String::from("# name\tgenotype\n");
    for (name, g) in refs {
        text.push_str(&format!("{name}\t{}\n", genotype_to_string(g)));
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::test_support::solution_with;
    use crate::domain::{initialize_population, DomainParams};
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn genotype_roundtrip_is_bit_exact() {
        let p = DomainParams::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for g in initialize_population(20, &p, &mut rng) {
            let parsed = genotype_from_str(&genotype_to_string(&g)).unwrap();
            assert_eq!(parsed, g);
        }
    }

    #[test]
    fn snapshot_roundtrip_preserves_rows() {
        use crate::archive::{build_cvt, FeatureBounds, MomeArchive};
        let t = build_cvt(4, &FeatureBounds::new([0.0, 0.0], [1.0, 1.0]), 400, 1).unwrap();
        let mut archive = MomeArchive::new(t, 5);
        archive.insert(solution_with(1.25, 2.5, [0.3, 0.8]));
        archive.insert(solution_with(2.5, 1.25, [0.9, 0.1]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshot.tsv");
        write_snapshot(&path, &archive, "test_0", 3).unwrap();
        let rows = read_snapshot(&path).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.run_id, "test_0");
            assert_eq!(r.iteration, 3);
            assert_eq!(
                archive.tessellation().assign_cell(r.features),
                r.cell_index
            );
        }
    }

    #[test]
    fn metrics_roundtrip() {
        let rows = vec![crate::metrics::MetricsRow {
            evaluations: 100,
            moqd_score: 1.5,
            energy_qd_score: 0.25,
            magnetism_qd_score: 7.125,
            coverage: 0.5,
            global_hypervolume: 3.0,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.tsv");
        write_metrics(&path, &rows).unwrap();
        assert_eq!(read_metrics(&path).unwrap(), rows);
    }

    #[test]
    fn config_roundtrip_via_toml() {
        let config = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        write_config(&path, &config).unwrap();
        let parsed = read_config(&path).unwrap();
        assert_eq!(parsed.algorithm, config.algorithm);
        assert_eq!(parsed.total_evaluations, config.total_evaluations);
        assert_eq!(parsed.domain.cutoff, config.domain.cutoff);
    }

    proptest! {
        #[test]
        fn genotype_roundtrip_random_values(
            lengths in prop::array::uniform3(0.1f64..50.0),
            angles in prop::array::uniform3(21.0f64..159.0),
            coords in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 1..6),
        ) {
            let g = CrystalGenotype {
                lengths,
                angles,
                species: vec!["A".to_string(); coords.len()],
                frac_coords: coords,
            };
            let parsed = genotype_from_str(&genotype_to_string(&g)).unwrap();
            prop_assert_eq!(parsed, g);
        }
    }
}
