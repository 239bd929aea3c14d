use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sbc_cli::{apply_overrides, error_json, run, Command, Overrides, RunConfig};
use sbc_core::sim::{Drift, LoadingScale, Model};

/// Synthetic business cycle and synthetic control estimators.
#[derive(Debug, Parser)]
#[command(name = "sbc", version)]
struct Cli {
    /// Subcommand to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Long-format panel CSV with header `unit,period,value`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Label of the treated unit.
    #[arg(long)]
    treated: Option<String>,
    /// Last pre-treatment period label; for `simulate`, the pre-treatment length.
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<i64>,
    /// Placebo treatment period label (must precede `--t0`).
    #[arg(long, allow_hyphen_values = true)]
    placebo: Option<i64>,
    /// Filter horizon.
    #[arg(long)]
    h: Option<usize>,
    /// Number of filter lags.
    #[arg(long)]
    p: Option<usize>,
    /// Weight regime: unrestricted, signed or nonnegative.
    #[arg(long)]
    regime: Option<String>,
    /// Drop the intercept from unrestricted weights.
    #[arg(long)]
    no_intercept: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Master seed for `simulate`.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation model: model1, model2 or model3.
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    /// AR(1) coefficient of the stationary factors.
    #[arg(long)]
    phi: Option<f64>,
    /// Model 1 drift: `zero`, `fixed:<mu>` or `gaussian:<sd>`.
    #[arg(long, value_parser = parse_drift)]
    drift: Option<Drift>,
    /// Monte Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Units per simulated panel, treated included.
    #[arg(long)]
    n_units: Option<usize>,
    /// Reading of the Model 3 loading scale: variance or stddev.
    #[arg(long, value_parser = parse_loading_scale)]
    loading_scale: Option<LoadingScale>,
}

fn parse_model(s: &str) -> Result<Model, String> {
    match s.to_ascii_lowercase().as_str() {
        "model1" | "1" => Ok(Model::Model1),
        "model2" | "2" => Ok(Model::Model2),
        "model3" | "3" => Ok(Model::Model3),
        _ => Err(format!("unknown model {s:?}")),
    }
}

fn parse_drift(s: &str) -> Result<Drift, String> {
    let (kind, value) = s.split_once(':').unwrap_or((s, ""));
    let num = || value.parse::<f64>().map_err(|_| format!("bad drift value in {s:?}"));
    match kind {
        "zero" => Ok(Drift::Zero),
        "fixed" => Ok(Drift::Fixed { value: num()? }),
        "gaussian" => Ok(Drift::Gaussian { sd: num()? }),
        _ => Err(format!("unknown drift {s:?}")),
    }
}

fn parse_loading_scale(s: &str) -> Result<LoadingScale, String> {
    match s {
        "variance" => Ok(LoadingScale::Variance),
        "stddev" | "sd" => Ok(LoadingScale::StdDev),
        _ => Err(format!("unknown loading scale {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_json("USAGE", e.to_string().trim_end()));
            return ExitCode::from(2);
        }
    };
    let result = load_config(&cli).and_then(|cfg| run(&cfg));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(e.code(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> sbc_core::Result<RunConfig> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        input_path: cli.input.clone(),
        treated_label: cli.treated.clone(),
        t0: cli.t0,
        placebo_label: cli.placebo,
        h: cli.h,
        p: cli.p,
        regime: cli.regime.clone(),
        no_intercept: cli.no_intercept,
        output_dir: cli.output_dir.clone(),
        seed: cli.seed,
        model: cli.model,
        phi: cli.phi,
        drift: cli.drift,
        replications: cli.reps,
        n_units: cli.n_units,
        loading_scale: cli.loading_scale,
    };
    apply_overrides(cfg, cli.command, overrides)
}
