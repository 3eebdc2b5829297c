use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::StrategyResult;
use crate::datagen::MultimodalDataset;
use crate::error::{Error, Result};
use crate::flcore::{RunConfig, Strategy};
use crate::metrics::{f1_diff_report, write_csv_rows, ClassReport};

/// Per-class results of one cell, tagged with the test split they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub strategy: Strategy,
    pub missing_rate: f64,
    pub seed: u64,
    /// SHA-256 of the test split.
    pub test_fingerprint: String,
    pub audio_ambiguous_pairs: Vec<(usize, usize)>,
    pub report: ClassReport,
}

impl CellReport {
    pub fn new(cfg: &RunConfig, data: &MultimodalDataset, result: &StrategyResult) -> Self {
        Self {
            strategy: cfg.strategy,
            missing_rate: cfg.missing_rate,
            seed: cfg.seed,
            test_fingerprint: data.test_fingerprint(),
            audio_ambiguous_pairs: data.spec.audio_ambiguous_pairs.clone(),
            report: result.class_report.clone(),
        }
    }

    fn is_ambiguous(&self, class: usize) -> bool {
        self.audio_ambiguous_pairs.iter().any(|&(a, b)| a == class || b == class)
    }
}

/// Reads `class_report.json`, given either the file or its cell directory.
pub fn load_cell_report(path: &Path) -> Result<CellReport> {
    let file = if path.is_dir() { path.join("class_report.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", file.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1DiffRow {
    pub rank: usize,
    pub class: usize,
    pub class_name: String,
    pub audio_ambiguous: bool,
    pub f1_a: f64,
    pub f1_b: f64,
    pub delta: f64,
}

/// Ranked per-class F1 differences `a − b`. Both runs must share a test split.
pub fn emit_f1diff_report(a: &CellReport, b: &CellReport, top_n: usize) -> Result<Vec<F1DiffRow>> {
    if a.test_fingerprint != b.test_fingerprint {
        return Err(Error::invalid(format!(
            "runs were evaluated on different test splits ({} vs {})",
            a.test_fingerprint, b.test_fingerprint
        )));
    }
    let deltas = f1_diff_report(&a.report, &b.report, top_n)?;
    Ok(deltas
        .into_iter()
        .enumerate()
        .map(|(i, d)| F1DiffRow {
            rank: i + 1,
            class: d.class,
            class_name: format!("class_{:02}", d.class),
            audio_ambiguous: a.is_ambiguous(d.class),
            f1_a: d.f1_a,
            f1_b: d.f1_b,
            delta: d.delta,
        })
        .collect())
}

pub fn write_f1diff_csv<W: Write>(w: W, rows: &[F1DiffRow]) -> Result<()> {
    write_csv_rows(w, rows)
}
