//! Command-line driver: parses experiment configs, runs them and verifies the acceptance battery.

pub mod config;
pub mod run;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use gaussloss::acceptance;
use serde_json::json;

use crate::config::{ExperimentConfig, Format, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gaussloss", version, about = "Loss mitigation for Gaussian boson samplers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory for datasets and metadata.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomly drawn loss models.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fixed total-photon cutoff.
    #[arg(long, global = true)]
    pub cutoff: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a benchmark or sweep described by a config file.
    Run { config: PathBuf },
    /// Run the acceptance battery.
    Verify {
        /// Criterion number, tag or name fragment.
        #[arg(long)]
        filter: Option<String>,
    },
}

fn report_error(err: &mut dyn Write, kind: &str, operation: &str, message: &str) {
    let report = json!({ "error": kind, "operation": operation, "message": message });
    let _ = writeln!(err, "{report}");
}

/// Runs the parsed command, writing to the given streams; returns the exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if let Some(n) = cli.threads {
        if n == 0 {
            report_error(err, "schema", "threads", "--threads must be at least 1");
            return EXIT_SCHEMA;
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Run { config } => run_config(cli, config, out, err),
        Command::Verify { filter } => verify(filter.as_deref(), out, err),
    }
}

fn run_config(cli: &Cli, path: &std::path::Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            report_error(err, "schema", "parse", &e);
            return EXIT_SCHEMA;
        }
    };
    let overrides = Overrides { out: cli.out.clone(), seed: cli.seed, cutoff: cli.cutoff, format: cli.format.map(Format::from) };
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let plan = match cfg.resolve(stem, &overrides) {
        Ok(p) => p,
        Err(e) => {
            report_error(err, "schema", "resolve", &e.to_string());
            return EXIT_SCHEMA;
        }
    };
    let output = match run::execute(&plan) {
        Ok(o) => o,
        Err(f) => {
            report_error(err, "numerical", f.operation, &f.error.to_string());
            return EXIT_NUMERICAL;
        }
    };
    let _ = out.write_all(run::display(&output.table).as_bytes());
    match run::write_outputs(&output, &plan) {
        Ok(Some(p)) => {
            let _ = writeln!(err, "wrote {}", p.display());
            EXIT_OK
        }
        Ok(None) => EXIT_OK,
        Err(e) => {
            report_error(err, "io", "write_outputs", &e.to_string());
            EXIT_NUMERICAL
        }
    }
}

fn verify(filter: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let selected = acceptance::select(filter);
    if selected.is_empty() {
        report_error(err, "schema", "verify", &format!("no criterion matches {:?}", filter.unwrap_or("")));
        return EXIT_SCHEMA;
    }
    let mut failed = 0;
    for c in &selected {
        let r = c.run();
        failed += usize::from(!r.passed);
        let _ = writeln!(out, "{}", r.line());
    }
    let _ = writeln!(out, "{} of {} criteria passed", selected.len() - failed, selected.len());
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    }
}
