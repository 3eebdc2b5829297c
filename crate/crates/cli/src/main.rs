//! `mmirror` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mmirror::datagen::{generate_dataset, write_dataset, write_dataset_csv};
use mmirror::experiment::{
    emit_f1diff_report, load_cell_report, parse_config, run_plan, write_f1diff_csv, check_config, ExperimentPlan,
    Overrides,
};
use mmirror::flcore::{RunConfig, Strategy};
use mmirror::nnkit::gradcheck::{run_suite, SuiteConfig};
use mmirror::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "mmirror", version, about = "Federated learning simulator for clients with missing visual data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML run configuration. Unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    missing_rate: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single (strategy, missing rate, seed) cell.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Run the cross product of strategies, missing rates and seeds.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = Strategy::ALL.to_vec())]
        strategies: Vec<Strategy>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
        missing_rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Rank per-class F1 differences between two runs (a minus b).
    ReportF1diff {
        /// Cell directory or class_report.json of run a.
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Materialize the configured synthetic dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = DataFormat::Jsonl)]
        format: DataFormat,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        /// Number of random models.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DataFormat {
    Jsonl,
    Csv,
}

fn load_config(path: Option<&Path>) -> mmirror::Result<RunConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?,
        None => String::new(),
    };
    parse_config(&text)
}

fn resolve(args: &ConfigArgs) -> mmirror::Result<RunConfig> {
    let overrides = Overrides {
        seed: args.seed,
        strategy: args.strategy,
        missing_rate: args.missing_rate,
    };
    check_config(overrides.apply(load_config(args.config.as_deref())?))
}

fn print_json(value: &serde_json::Value) {
    // A closed pipe downstream is not an error worth reporting.
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn execute(command: Command) -> mmirror::Result<bool> {
    match command {
        Command::Run { cfg, out, workers } => {
            let base = resolve(&cfg)?;
            let plan = ExperimentPlan {
                strategies: vec![base.strategy],
                missing_rates: vec![base.missing_rate],
                seeds: vec![base.seed],
                base,
                out_dir: out,
                workers,
            };
            let summary = run_plan(&plan)?;
            print_json(&json!(summary.cells[0]));
        }
        Command::Sweep {
            cfg,
            strategies,
            missing_rates,
            seeds,
            out,
            workers,
        } => {
            let plan = ExperimentPlan {
                base: resolve(&cfg)?,
                strategies,
                missing_rates,
                seeds,
                out_dir: out,
                workers,
            };
            let summary = run_plan(&plan)?;
            print_json(&json!(summary.rows));
        }
        Command::ReportF1diff { a, b, top_n, out } => {
            let rows = emit_f1diff_report(&load_cell_report(&a)?, &load_cell_report(&b)?, top_n)?;
            match out {
                Some(path) => {
                    let file = fs::File::create(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                    write_f1diff_csv(file, &rows)?;
                }
                None => write_f1diff_csv(std::io::stdout().lock(), &rows)?,
            }
        }
        Command::GenData {
            config,
            seed,
            out,
            format,
        } => {
            let mut spec = load_config(config.as_deref())?.dataset;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let data = generate_dataset(&spec)?;
            match format {
                DataFormat::Jsonl => write_dataset(&data, &out)?,
                DataFormat::Csv => write_dataset_csv(&data, &out)?,
            }
            print_json(&json!({
                "path": out,
                "train": data.train.len(),
                "test": data.test.len(),
                "test_fingerprint": data.test_fingerprint(),
            }));
        }
        Command::Gradcheck { seeds } => {
            let cfg = SuiteConfig {
                seeds: (0..seeds).collect(),
                ..SuiteConfig::default()
            };
            let entries = run_suite(&cfg)?;
            let max_rel = entries.iter().map(|e| e.result.max_rel_error).fold(0.0, f64::max);
            let failures: usize = entries.iter().map(|e| e.result.failures).sum();
            let coordinates: usize = entries.iter().map(|e| e.result.coordinates).sum();
            print_json(&json!({
                "checks": entries.len(),
                "coordinates": coordinates,
                "max_rel_error": max_rel,
                "failures": failures,
                "passed": failures == 0,
            }));
            return Ok(failures == 0);
        }
    }
    Ok(true)
}

fn report_error(kind: &str, message: String, fields: serde_json::Value) {
    let body = json!({ "error": kind, "message": message, "fields": fields });
    let _ = writeln!(std::io::stderr(), "{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            report_error("usage", e.to_string().trim().to_string(), json!([]));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let fields = match &e {
                Error::Config(f) => json!(f),
                _ => json!([]),
            };
            report_error(e.kind(), e.to_string(), fields);
            ExitCode::from(1)
        }
    }
}
