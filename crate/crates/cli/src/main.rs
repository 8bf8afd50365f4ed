use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cfisac::experiments::{preset, run_experiment, ExperimentError, ExperimentSpec};
use cfisac::scenario::ScenarioConfig;

/// Runs a detection-probability sweep and writes the result table as CSV.
#[derive(Debug, Parser)]
#[command(name = "isac-sim", version)]
struct Args {
    /// Sweep preset: fig3, fig4, fig5 or fig6.
    #[arg(long, short = 'e')]
    experiment: String,

    /// Base scenario configuration (TOML). Defaults are used when omitted.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,

    /// Master seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,

    /// Output CSV path; stdout when omitted.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,

    /// Number of UE drops.
    #[arg(long)]
    drops: Option<usize>,

    /// Channel realizations per drop for the SINR coefficient ensemble.
    #[arg(long)]
    realizations: Option<usize>,

    /// `key=value` applied to the scenario after the preset. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn build_spec(args: &Args) -> Result<ExperimentSpec, ExperimentError> {
    let base = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let mut spec = preset(&args.experiment, &base)?;
    for o in &args.overrides {
        spec.base.apply_override(o)?;
    }
    spec.seed = args.seed.unwrap_or(spec.base.seed);
    spec.base.seed = spec.seed;
    if let Some(d) = args.drops {
        spec.counts.drops = d;
    }
    if let Some(r) = args.realizations {
        spec.counts.realizations = r;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(args: &Args) -> Result<bool, ExperimentError> {
    let spec = build_spec(args)?;
    let result = run_experiment(&spec)?;
    match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(ExperimentError::Io)?;
            result.write_csv(BufWriter::new(file))?;
        }
        None => result.write_csv(io::stdout().lock())?,
    }
    for (drop, reason) in &result.failed_drops {
        eprintln!("warning: drop {drop} infeasible: {reason}");
    }
    Ok(result.failed_drops.is_empty() && !result.any_infeasible())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e}");
            ExitCode::from(1)
        }
    }
}
