//! Declarative experiment runner.

pub mod config;
pub mod fuzz;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
pub use config::ExperimentConfig;
pub use report::RunReport;
pub use run::run_config;

/// Bundled configurations, addressable by name wherever a path is accepted.
pub const PRESETS: &[(&str, &str)] = &[
    ("z-symmetric", include_str!("../../presets/z-symmetric.toml")),
    ("z-initial", include_str!("../../presets/z-initial.toml")),
    ("z2-squares", include_str!("../../presets/z2-squares.toml")),
    ("scaled-ball", include_str!("../../presets/scaled-ball.toml")),
    ("bernoulli", include_str!("../../presets/bernoulli.toml")),
    ("rotation", include_str!("../../presets/rotation.toml")),
    ("catmap", include_str!("../../presets/catmap.toml")),
    ("product", include_str!("../../presets/product.toml")),
    ("bernoulli-z-order3", include_str!("../../presets/bernoulli-z-order3.toml")),
    ("rotation-negative-control", include_str!("../../presets/rotation-negative-control.toml")),
    ("inequality-fuzz", include_str!("../../presets/inequality-fuzz.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// A preset name or a file path.
pub fn load_config(source: &str) -> Result<ExperimentConfig> {
    match preset(source) {
        Some(text) => ExperimentConfig::from_toml(text),
        None => ExperimentConfig::load(Path::new(source)),
    }
}

#[derive(Parser, Debug)]
#[command(name = "weakmix", version, about = "Følner averages and weak mixing diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    /// Output directory for series and summaries.
    #[arg(long, global = true, default_value = "weakmix-out")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub list_presets: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run an experiment from a config file or preset name.
    Run { config: String },
    /// Run randomized inequality trials.
    Fuzz { config: String },
}

/// Parses arguments, runs, writes outputs and returns the exit code.
pub fn main_with_args(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if cli.list_presets {
        for (name, _) in PRESETS {
            println!("{name}");
        }
        return 0;
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("--threads: {e}")))?;
    }
    let Some(cmd) = &cli.command else {
        return Err(Error::config("expected `run <config>` or `fuzz <config>`"));
    };
    let (source, fuzz) = match cmd {
        Command::Run { config } => (config, false),
        Command::Fuzz { config } => (config, true),
    };
    let cfg = load_config(source)?;
    if fuzz && cfg.experiment != config::ExperimentKind::InequalityFuzz {
        return Err(Error::config("`fuzz` needs an inequality-fuzz config"));
    }
    let start = Instant::now();
    let report = run_config(&cfg, cli.seed)?;
    report.write(&cli.out, Some(start.elapsed()))?;
    print!("{}", report.summary(Some(start.elapsed())));
    Ok(report.exit_code())
}
