//! Objective-space illumination: per-cell best magnetism under
//! progressively stricter stability thresholds, interpolated between the
//! archive-wide minimum and maximum stability.

use crate::archive::MomeArchive;
use crate::snapshot::SnapshotRow;
use crate::{Error, Result};

/// Per-level maps from cell index to the best qualifying secondary
/// objective; cells with no qualifying solution are absent.
#[derive(Debug, Clone)]
pub struct IlluminationTable {
    pub levels: Vec<f64>,
    pub stability_min: f64,
    pub stability_max: f64,
    /// one entry per level, indexed by cell; `None` marks an empty cell
    pub tables: Vec<Vec<Option<f64>>>,
    pub cell_count: usize,
}

impl IlluminationTable {
    pub fn threshold(&self, level: f64) -> f64 {
        self.stability_min + level * (self.stability_max - self.stability_min)
    }

    pub fn populated_count(&self, level_index: usize) -> usize {
        self.tables[level_index].iter().filter(|v| v.is_some()).count()
    }

    /// Tabular rendering of one level: cell index, centroid, best f2.
    pub fn level_to_tsv(&self, level_index: usize, centroids: &[[f64; 2]]) -> String {
        let mut out = format!(
            "# level\t{}\n# threshold\t{}\n# cell_index\tcentroid_0\tcentroid_1\tbest_magnetism\n",
            self.levels[level_index],
            self.threshold(self.levels[level_index])
        );
        for (cell, value) in self.tables[level_index].iter().enumerate() {
            let c = centroids[cell];
            match value {
                Some(v) => out.push_str(&format!("{cell}\t{}\t{}\t{v}\n", c[0], c[1])),
                None => out.push_str(&format!("{cell}\t{}\t{}\tempty\n", c[0], c[1])),
            }
        }
        out
    }
}

fn illuminate_rows(
    rows: &[(usize, [f64; 2])],
    cell_count: usize,
    levels: &[f64],
) -> Result<IlluminationTable> {
    if rows.is_empty() {
        return Err(Error::Usage("cannot illuminate an empty archive".into()));
    }
    for &l in levels {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::Usage(format!("level {l} outside [0, 1]")));
        }
    }
    let stability_min = rows.iter().map(|r| r.1[0]).fold(f64::INFINITY, f64::min);
    let stability_max = rows
        .iter()
        .map(|r| r.1[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut tables = Vec::with_capacity(levels.len());
    for &level in levels {
        let threshold = stability_min + level * (stability_max - stability_min);
        let mut table: Vec<Option<f64>> = vec![None; cell_count];
        for &(cell, [stability, magnetism]) in rows {
            if stability >= threshold {
                let slot = &mut table[cell];
                *slot = Some(match slot {
                    Some(prev) => prev.max(magnetism),
                    None => magnetism,
                });
            }
        }
        tables.push(table);
    }
    Ok(IlluminationTable {
        levels: levels.to_vec(),
        stability_min,
        stability_max,
        tables,
        cell_count,
    })
}

/// Illuminate a live archive.
pub fn illuminate(archive: &MomeArchive, levels: &[f64]) -> Result<IlluminationTable> {
    let rows: Vec<(usize, [f64; 2])> = archive
        .solutions()
        .map(|(cell, s)| (cell, [s.objectives[0], s.objectives[1]]))
        .collect();
    illuminate_rows(&rows, archive.tessellation().cell_count(), levels)
}

/// Illuminate a parsed snapshot.
pub fn illuminate_snapshot(
    rows: &[SnapshotRow],
    levels: &[f64],
) -> Result<IlluminationTable> {
    let cell_count = rows.iter().map(|r| r.cell_index + 1).max().unwrap_or(0);
    let data: Vec<(usize, [f64; 2])> = rows
        .iter()
        .map(|r| (r.cell_index, r.objectives))
        .collect();
    illuminate_rows(&data, cell_count, levels)
}
