//! Batch evaluation of responses against a manifest.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ResponseRecord};
use crate::puzzle::GridSpec;
use crate::scoring::{score_response, EvalMetric, RewardBreakdown};
use crate::taskgen::{Mode, TaskKind};

/// Scores of one manifest question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub kind: TaskKind,
    pub mode: Mode,
    pub grid: GridSpec,
    pub reward: RewardBreakdown,
    pub eval: EvalMetric,
    /// No response was supplied; scored as an empty completion.
    pub missing: bool,
}

/// One table cell: accuracy over the questions of a (kind, mode, grid).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub n: usize,
    pub correct: usize,
    /// Percentage rounded to two decimals.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub kind: TaskKind,
    pub mode: Mode,
    /// Aligned with [`EvalTable::grids`]; `None` where no question exists.
    pub cells: Vec<Option<EvalCell>>,
    /// Unweighted mean of the present cells, rounded to two decimals.
    pub avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub grids: Vec<GridSpec>,
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by id.
    pub records: Vec<EvalRecord>,
    pub table: EvalTable,
    /// Response ids not present in the manifest.
    pub unknown_ids: Vec<String>,
    /// Ids with more than one response; the last one is used.
    pub duplicate_ids: Vec<String>,
    pub mean_reward: RewardBreakdown,
}

/// Rounds half away from zero to two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Table column order: by piece count, then taller grids first
/// (2x1 before 1x2, 4x1 before 2x2).
pub fn column_order(a: &GridSpec, b: &GridSpec) -> std::cmp::Ordering {
    a.piece_count()
        .cmp(&b.piece_count())
        .then(b.rows().cmp(&a.rows()))
}

pub fn evaluate(manifest: &Manifest, responses: &[ResponseRecord]) -> EvalReport {
    let index = manifest.index();
    let mut latest: HashMap<&str, &str> = HashMap::new();
    let mut unknown = Vec::new();
    let mut duplicates = Vec::new();
    for r in responses {
        if !index.contains_key(r.id.as_str()) {
            unknown.push(r.id.clone());
            continue;
        }
        if latest.insert(r.id.as_str(), r.raw_text.as_str()).is_some() {
            duplicates.push(r.id.clone());
        }
    }
    unknown.sort();
    unknown.dedup();
    duplicates.sort();
    duplicates.dedup();

    let mut records: Vec<EvalRecord> = manifest
        .records
        .par_iter()
        .map(|rec| {
            let raw = latest.get(rec.id.as_str()).copied();
            let scored = score_response(raw.unwrap_or(""), rec.mode, &rec.ground_truth);
            EvalRecord {
                id: rec.id.clone(),
                kind: rec.kind,
                mode: rec.mode,
                grid: rec.grid,
                reward: scored.reward,
                eval: scored.eval,
                missing: raw.is_none(),
            }
        })
        .collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let mean_reward = if records.is_empty() {
        RewardBreakdown::new(0.0, 0.0)
    } else {
        let n = records.len() as f64;
        RewardBreakdown::new(
            records.iter().map(|r| r.reward.accuracy).sum::<f64>() / n,
            records.iter().map(|r| r.reward.format).sum::<f64>() / n,
        )
    };

    EvalReport {
        table: tabulate(&records),
        records,
        unknown_ids: unknown,
        duplicate_ids: duplicates,
        mean_reward,
    }
}

pub fn tabulate(records: &[EvalRecord]) -> EvalTable {
    let mut grids: Vec<GridSpec> = records.iter().map(|r| r.grid).collect();
    grids.sort_by(column_order);
    grids.dedup();

    let mut counts: BTreeMap<(TaskKind, Mode), HashMap<GridSpec, (usize, usize)>> = BTreeMap::new();
    for r in records {
        let cell = counts.entry((r.kind, r.mode)).or_default().entry(r.grid).or_default();
        cell.0 += 1;
        cell.1 += usize::from(r.eval.correct);
    }
    let rows = counts
        .into_iter()
        .map(|((kind, mode), by_grid)| {
            let cells: Vec<Option<EvalCell>> = grids
                .iter()
                .map(|g| {
                    by_grid.get(g).map(|&(n, correct)| EvalCell {
                        n,
                        correct,
                        accuracy: round2(100.0 * correct as f64 / n as f64),
                    })
                })
                .collect();
            let present: Vec<f64> = cells
                .iter()
                .flatten()
                .map(|c| 100.0 * c.correct as f64 / c.n as f64)
                .collect();
            let avg = round2(present.iter().sum::<f64>() / present.len() as f64);
            EvalRow { kind, mode, cells, avg }
        })
        .collect();
    EvalTable { grids, rows }
}

impl EvalTable {
    /// Cell for a (kind, mode, grid), if present.
    pub fn cell(&self, kind: TaskKind, mode: Mode, grid: GridSpec) -> Option<EvalCell> {
        let col = self.grids.iter().position(|&g| g == grid)?;
        self.rows
            .iter()
            .find(|r| r.kind == kind && r.mode == mode)
            .and_then(|r| r.cells[col])
    }

    /// Whitespace-aligned text table with an AVG column.
    pub fn render(&self) -> String {
        let mut header = vec!["kind".to_owned(), "mode".to_owned()];
        header.extend(self.grids.iter().map(|g| g.to_string()));
        header.push("AVG".to_owned());
        let mut lines = vec![header];
        for row in &self.rows {
            let mut line = vec![row.kind.to_string(), row.mode.to_string()];
            line.extend(row.cells.iter().map(|c| match c {
                Some(c) => format!("{:.2}", c.accuracy),
                None => "-".to_owned(),
            }));
            line.push(format!("{:.2}", row.avg));
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in lines {
            let mut text = String::new();
            for (i, cell) in line.iter().enumerate() {
                if i > 0 {
                    text.push_str("  ");
                }
                if i < 2 {
                    let _ = write!(text, "{cell:<w$}", w = widths[i]);
                } else {
                    let _ = write!(text, "{cell:>w$}", w = widths[i]);
                }
            }
            out.push_str(text.trim_end());
            out.push('\n');
        }
        out
    }
}
