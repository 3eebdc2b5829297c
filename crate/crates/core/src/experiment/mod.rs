//! Experiment plans over config files, with their on-disk result layout.

mod report;

pub use report::{emit_f1diff_report, load_cell_report, write_f1diff_csv, CellReport, F1DiffRow};

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_on, StrategyResult};
use crate::datagen::{generate_dataset, MultimodalDataset};
use crate::error::{Error, FieldError, Result};
use crate::flcore::{save_checkpoint, Federation, RunConfig, Strategy};
use crate::metrics::{write_csv_rows, write_rounds_csv};

/// Parses TOML into a config with defaults filled. No semantic checks.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| {
        let path = e
            .span()
            .map(|s| text[s].trim().trim_matches('"').to_string())
            .filter(|k| !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.'))
            .unwrap_or_else(|| "config".to_string());
        Error::Config(vec![FieldError::new(path, e.message().to_string())])
    })
}

/// Reports every violated invariant, or returns the config unchanged.
pub fn check_config(cfg: RunConfig) -> Result<RunConfig> {
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

/// Parse plus full validation. An empty document yields the defaults.
pub fn validate_config(text: &str) -> Result<RunConfig> {
    check_config(parse_config(text)?)
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub strategy: Option<Strategy>,
    pub missing_rate: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s;
        }
        if let Some(r) = self.missing_rate {
            cfg.missing_rate = r;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub base: RunConfig,
    pub strategies: Vec<Strategy>,
    pub missing_rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
}

impl ExperimentPlan {
    /// Every (strategy, missing rate, seed) cell in plan order.
    pub fn cells(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &missing_rate in &self.missing_rates {
                for &seed in &self.seeds {
                    out.push(RunConfig {
                        strategy,
                        missing_rate,
                        seed,
                        ..self.base.clone()
                    });
                }
            }
        }
        out
    }

    fn check(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, empty) in [
            ("strategies", self.strategies.is_empty()),
            ("missing_rates", self.missing_rates.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                errs.push(FieldError::new(name, "must not be empty"));
            }
        }
        for cell in self.cells() {
            for e in cell.validate() {
                let path = format!("{}@{:.2}/{}.{}", cell.strategy, cell.missing_rate, cell.seed, e.path);
                errs.push(FieldError::new(path, e.message));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Directory of one cell: `<out>/<strategy>/<rate>/<seed>`.
pub fn cell_dir(out: &Path, cfg: &RunConfig) -> PathBuf {
    out.join(cfg.strategy.name())
        .join(format!("{:.2}", cfg.missing_rate))
        .join(cfg.seed.to_string())
}

/// Final-round numbers of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub strategy: Strategy,
    pub missing_rate: f64,
    pub seed: u64,
    pub audio_top1: f64,
    pub audio_topk: f64,
    pub multimodal_top1: Option<f64>,
}

/// Mean and sample variance over seeds for one (strategy, missing rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub missing_rate: f64,
    pub seeds: usize,
    pub audio_top1_mean: f64,
    pub audio_top1_var: f64,
    pub audio_topk_mean: f64,
    pub audio_topk_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub cells: Vec<CellResult>,
}

impl Summary {
    pub fn row(&self, strategy: Strategy, missing_rate: f64) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.missing_rate == missing_rate)
    }
}

/// Mean and sample variance (n − 1 denominator; zero for a single value).
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn summarize(cells: Vec<CellResult>) -> Summary {
    let mut rows: Vec<SummaryRow> = Vec::new();
    for c in &cells {
        if rows
            .iter()
            .any(|r| r.strategy == c.strategy && r.missing_rate == c.missing_rate)
        {
            continue;
        }
        let group: Vec<&CellResult> = cells
            .iter()
            .filter(|d| d.strategy == c.strategy && d.missing_rate == c.missing_rate)
            .collect();
        let (audio_top1_mean, audio_top1_var) = mean_var(&group.iter().map(|d| d.audio_top1).collect::<Vec<_>>());
        let (audio_topk_mean, audio_topk_var) = mean_var(&group.iter().map(|d| d.audio_topk).collect::<Vec<_>>());
        rows.push(SummaryRow {
            strategy: c.strategy,
            missing_rate: c.missing_rate,
            seeds: group.len(),
            audio_top1_mean,
            audio_top1_var,
            audio_topk_mean,
            audio_topk_var,
        });
    }
    Summary { rows, cells }
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every output file of one cell.
pub fn write_cell(dir: &Path, fed: &Federation, result: &StrategyResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rounds_csv(create(&dir.join("rounds.csv"))?, &result.history)?;
    let report = CellReport::new(&fed.cfg, fed.data, result);
    write_json(&dir.join("class_report.json"), &report)?;
    result.class_report.write_csv(create(&dir.join("class_report.csv"))?)?;
    save_checkpoint(&result.audio_model, &fed.topology, &dir.join("audio_model.bin"))?;
    if let Some(m) = &result.multimodal_model {
        save_checkpoint(m, &fed.topology, &dir.join("multimodal_model.bin"))?;
    }
    Ok(())
}

/// Runs one cell and writes its outputs under `out`.
pub fn run_cell(cfg: &RunConfig, data: &MultimodalDataset, out: &Path) -> Result<CellResult> {
    let fed = Federation::new(cfg, data)?;
    let result = run_on(&fed)?;
    write_cell(&cell_dir(out, cfg), &fed, &result)?;
    let last = result
        .history
        .last()
        .ok_or_else(|| Error::InvalidState("run produced no rounds".into()))?;
    Ok(CellResult {
        strategy: cfg.strategy,
        missing_rate: cfg.missing_rate,
        seed: cfg.seed,
        audio_top1: last.audio_top1,
        audio_topk: last.audio_topk,
        multimodal_top1: last.multimodal_top1,
    })
}

/// Runs every cell on a bounded pool and writes `summary.{csv,json}`.
/// The output directory is checked for writability before any training.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Summary> {
    plan.check()?;
    ensure_writable(&plan.out_dir)?;
    let data = generate_dataset(&plan.base.dataset)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::InvalidState(format!("cannot start worker pool: {e}")))?;
    let cells = plan.cells();
    let results = pool.install(|| {
        cells
            .par_iter()
            .map(|cfg| run_cell(cfg, &data, &plan.out_dir))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(results);
    write_csv_rows(create(&plan.out_dir.join("summary.csv"))?, &summary.rows)?;
    write_json(&plan.out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}
