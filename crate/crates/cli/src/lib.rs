//! Run configuration and subcommand dispatch for the `sbc` binary.
//!
//! A run is described by one JSON document (`RunConfig`); command-line flags
//! are applied on top of it before validation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sbc_core::io::{
    decomposition_csv, load_panel_csv, report_value_json, series_csv, table_csv, to_json_string, weights_csv,
    write_atomic,
};
use sbc_core::sim::{run_monte_carlo_with_threads, MseRatioReport, SimulationSpec};
use sbc_core::{
    decompose_panel, sbc_estimate, sc_estimate, validate_panel, weight_comparison, Error, FilterSpec, PanelData,
    Result, WeightRegime,
};

/// Environment variable capping the simulation worker count.
pub const THREADS_ENV: &str = "SBC_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Decompose,
    Estimate,
    Placebo,
    Simulate,
    Weights,
}

/// A regime given either by name (`"nonnegative"`) or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegimeConfig {
    Name(String),
    Full(WeightRegime),
}

impl RegimeConfig {
    pub fn resolve(&self) -> Result<WeightRegime> {
        match self {
            RegimeConfig::Name(n) => WeightRegime::parse(n),
            RegimeConfig::Full(r) => WeightRegime::new(r.variant, r.include_intercept),
        }
    }
}

/// One simulation cell or a list of cells; each becomes a row of `table.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SimConfig {
    One(Box<SimulationSpec>),
    Many(Vec<SimulationSpec>),
}

impl SimConfig {
    pub fn cells(&self) -> Vec<SimulationSpec> {
        match self {
            SimConfig::One(s) => vec![(**s).clone()],
            SimConfig::Many(v) => v.clone(),
        }
    }

    fn cells_mut(&mut self) -> Vec<&mut SimulationSpec> {
        match self {
            SimConfig::One(s) => vec![&mut **s],
            SimConfig::Many(v) => v.iter_mut().collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    #[serde(default)]
    pub input_path: Option<PathBuf>,
    #[serde(default)]
    pub filter: Option<FilterSpec>,
    #[serde(default)]
    pub regime: Option<RegimeConfig>,
    #[serde(default)]
    pub treated_label: Option<String>,
    #[serde(default)]
    pub t0_label: Option<i64>,
    #[serde(default)]
    pub placebo_label: Option<i64>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Default filter for annual data.
pub const DEFAULT_FILTER: FilterSpec = FilterSpec { h: 4, p: 2 };

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn filter_spec(&self) -> Result<FilterSpec> {
        let f = self.filter.unwrap_or(DEFAULT_FILTER);
        f.validate()?;
        Ok(f)
    }

    pub fn weight_regime(&self) -> Result<WeightRegime> {
        self.regime
            .as_ref()
            .map_or(Ok(WeightRegime::unrestricted(true)), RegimeConfig::resolve)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn require<'a, T>(&self, field: &'a Option<T>, name: &str) -> Result<&'a T> {
        field.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "{name} is required for {}",
                self.command.map_or("this command".into(), |c| format!("{c:?}").to_lowercase())
            ))
        })
    }

    /// Checks required fields for the command without touching the file
    /// system.
    pub fn validate(&self) -> Result<Command> {
        let command = self
            .command
            .ok_or_else(|| Error::Config("no command given".into()))?;
        self.filter_spec()?;
        self.weight_regime()?;
        match command {
            Command::Simulate => {
                let sim = self.require(&self.sim, "sim")?;
                let cells = sim.cells();
                if cells.is_empty() {
                    return Err(Error::Config("sim lists no cells".into()));
                }
                for cell in &cells {
                    cell.validate()?;
                }
            }
            _ => {
                self.require(&self.input_path, "input_path")?;
                self.require(&self.treated_label, "treated_label")?;
                let t0 = *self.require(&self.t0_label, "t0_label")?;
                if command == Command::Placebo {
                    let placebo = *self.require(&self.placebo_label, "placebo_label")?;
                    if placebo >= t0 {
                        return Err(Error::Config(format!(
                            "placebo_label {placebo} must be earlier than t0_label {t0}"
                        )));
                    }
                }
            }
        }
        Ok(command)
    }
}

/// Command-line overrides; every field left `None` keeps the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input_path: Option<PathBuf>,
    pub treated_label: Option<String>,
    pub t0: Option<i64>,
    pub placebo_label: Option<i64>,
    pub h: Option<usize>,
    pub p: Option<usize>,
    pub regime: Option<String>,
    pub no_intercept: bool,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub model: Option<sbc_core::sim::Model>,
    pub phi: Option<f64>,
    pub drift: Option<sbc_core::sim::Drift>,
    pub replications: Option<usize>,
    pub n_units: Option<usize>,
    pub loading_scale: Option<sbc_core::sim::LoadingScale>,
}

/// Applies flag overrides. For `simulate`, `--t0`, `--h`, `--p` and the
/// regime flags act on every simulation cell; a simulation is created from
/// the flags alone when the config has none.
pub fn apply_overrides(mut cfg: RunConfig, command: Command, o: Overrides) -> Result<RunConfig> {
    cfg.command = Some(command);
    let regime = match &o.regime {
        Some(name) => Some(WeightRegime::parse(name)?),
        None => None,
    };
    if command == Command::Simulate {
        if cfg.sim.is_none() {
            let model = o
                .model
                .ok_or_else(|| Error::Config("simulate needs --model or a sim section".into()))?;
            let t0 = o
                .t0
                .ok_or_else(|| Error::Config("simulate needs --t0 or a sim section".into()))?;
            let base = SimulationSpec::new(model, to_usize(t0, "t0")?, WeightRegime::unrestricted(true));
            cfg.sim = Some(SimConfig::One(Box::new(base)));
        }
        let sim = cfg.sim.as_mut().expect("set above");
        for cell in sim.cells_mut() {
            if let Some(m) = o.model {
                cell.model = m;
            }
            if let Some(t0) = o.t0 {
                cell.t0 = to_usize(t0, "t0")?;
            }
            if let Some(h) = o.h {
                cell.h = h;
            }
            if let Some(p) = o.p {
                cell.p = p;
            }
            if let Some(r) = regime {
                cell.regime = r;
            }
            if o.no_intercept {
                cell.regime = cell.regime.without_intercept();
            }
            if let Some(seed) = o.seed {
                cell.master_seed = seed;
            }
            if let Some(phi) = o.phi {
                cell.phi = phi;
            }
            if let Some(d) = o.drift {
                cell.drift = d;
            }
            if let Some(r) = o.replications {
                cell.replications = r;
            }
            if let Some(n) = o.n_units {
                cell.n_units = n;
            }
            if let Some(s) = o.loading_scale {
                cell.loading_scale = s;
            }
        }
    } else {
        if o.t0.is_some() {
            cfg.t0_label = o.t0;
        }
        if let Some(h) = o.h {
            cfg.filter.get_or_insert(DEFAULT_FILTER).h = h;
        }
        if let Some(p) = o.p {
            cfg.filter.get_or_insert(DEFAULT_FILTER).p = p;
        }
        if let Some(r) = regime {
            cfg.regime = Some(RegimeConfig::Full(r));
        }
        if o.no_intercept {
            let r = cfg.weight_regime()?.without_intercept();
            cfg.regime = Some(RegimeConfig::Full(r));
        }
    }
    if o.input_path.is_some() {
        cfg.input_path = o.input_path;
    }
    if o.treated_label.is_some() {
        cfg.treated_label = o.treated_label;
    }
    if o.placebo_label.is_some() {
        cfg.placebo_label = o.placebo_label;
    }
    if o.output_dir.is_some() {
        cfg.output_dir = o.output_dir;
    }
    Ok(cfg)
}

fn to_usize(v: i64, name: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Config(format!("{name} must be non-negative, got {v}")))
}

/// Reads `SBC_THREADS`; unset or empty means the rayon default.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(s) if s.trim().is_empty() => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {s:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Executes a validated config and returns the files written.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let command = cfg.validate()?;
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out)?;
    match command {
        Command::Simulate => run_simulate(cfg, &out),
        _ => {
            let panel = load(cfg)?;
            let spec = cfg.filter_spec()?;
            let regime = cfg.weight_regime()?;
            match command {
                Command::Decompose => {
                    let fits = decompose_panel(&panel, &spec)?;
                    write_all(&out, vec![("decomposition.csv", decomposition_csv(&panel, &fits))])
                }
                Command::Weights => {
                    let cmp = weight_comparison(&panel, &spec, regime)?;
                    write_all(&out, vec![("weights.csv", weights_csv(&cmp))])
                }
                Command::Estimate => estimate_files(&panel, &spec, regime, None).and_then(|f| write_all(&out, f)),
                Command::Placebo => {
                    let label = cfg.placebo_label.expect("validated");
                    let first = panel.period_labels()[0];
                    if label < first {
                        return Err(Error::UnknownPeriodLabel(label));
                    }
                    let shifted = panel.with_t0((label - first + 1) as usize)?;
                    estimate_files(&shifted, &spec, regime, Some(panel.period_label(panel.t0())))
                        .and_then(|f| write_all(&out, f))
                }
                Command::Simulate => unreachable!(),
            }
        }
    }
}

fn load(cfg: &RunConfig) -> Result<PanelData> {
    load_panel_csv(
        cfg.input_path.as_ref().expect("validated"),
        cfg.treated_label.as_ref().expect("validated"),
        cfg.t0_label.expect("validated"),
    )
}

fn estimate_files(
    panel: &PanelData,
    spec: &FilterSpec,
    regime: WeightRegime,
    actual_t0: Option<i64>,
) -> Result<Vec<(&'static str, String)>> {
    let window = validate_panel(panel, spec)?;
    let sc = sc_estimate(panel, regime, window, spec.h)?;
    let sbc = sbc_estimate(panel, spec, regime)?;
    let cmp = weight_comparison(panel, spec, regime)?;
    let mut report = json!({
        "treated": panel.unit_labels()[0],
        "donors": panel.donor_labels(),
        "t0_period": panel.period_label(panel.t0()),
        "filter": spec,
        "regime": regime,
        "sc": report_value_json(panel, &sc),
        "sbc": report_value_json(panel, &sbc),
    });
    if let Some(t0) = actual_t0 {
        report["placebo"] = json!({ "placebo_period": panel.period_label(panel.t0()), "actual_t0_period": t0 });
    }
    Ok(vec![
        ("report.json", to_json_string(&report)?),
        ("series.csv", series_csv(panel, &sc, &sbc)),
        ("weights.csv", weights_csv(&cmp)),
    ])
}

fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let threads = threads_from_env()?;
    let cells = cfg.sim.as_ref().expect("validated").cells();
    let start = Instant::now();
    let mut reports: Vec<MseRatioReport> = Vec::with_capacity(cells.len());
    for cell in &cells {
        reports.push(run_monte_carlo_with_threads(cell, threads)?);
    }
    let wall = start.elapsed().as_secs_f64();
    let cell_meta: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "spec": r.spec,
                "master_seed": r.spec.master_seed,
                "completed": r.completed,
                "failures": r.failures,
                "pre_ratio": r.pre_ratio,
                "post_ratio": r.post_ratio,
                "median_pre_ratio": r.median_pre_ratio,
                "median_post_ratio": r.median_post_ratio,
                "sbc_post_bias": r.sbc_post_bias,
                "sbc_post_bias_se": r.sbc_post_bias_se,
            })
        })
        .collect();
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "cells": cell_meta,
        "failures": reports.iter().map(|r| r.failures).sum::<usize>(),
        "wall_time_seconds": wall,
    });
    write_all(
        out,
        vec![("table.csv", table_csv(&reports)), ("manifest.json", to_json_string(&manifest)?)],
    )
}

fn write_all(dir: &Path, files: Vec<(&str, String)>) -> Result<Vec<PathBuf>> {
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes())?;
            Ok(path)
        })
        .collect()
}

/// Machine-readable error body written to stderr.
pub fn error_json(code: &str, message: &str) -> String {
    json!({ "code": code, "message": message }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(command: Command) -> RunConfig {
        RunConfig {
            command: Some(command),
            input_path: Some("panel.csv".into()),
            treated_label: Some("A".into()),
            t0_label: Some(1990),
            ..RunConfig::default()
        }
    }

    #[test]
    fn placebo_must_precede_t0() {
        let mut cfg = base(Command::Placebo);
        cfg.placebo_label = Some(1990);
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.code(), "INVALID_CONFIG");
        cfg.placebo_label = Some(1975);
        assert_eq!(cfg.validate().unwrap(), Command::Placebo);
    }

    #[test]
    fn missing_fields_rejected() {
        let mut cfg = base(Command::Estimate);
        cfg.input_path = None;
        assert!(cfg.validate().is_err());
        assert!(base(Command::Simulate).validate().is_err());
        assert!(base(Command::Placebo).validate().is_err());
    }

    #[test]
    fn config_json_parses_both_regime_forms() {
        let a: RunConfig = serde_json::from_str(
            r#"{"command":"estimate","regime":"nonnegative","filter":{"h":4,"p":2}}"#,
        )
        .unwrap();
        assert_eq!(a.weight_regime().unwrap(), WeightRegime::non_negative());
        let b: RunConfig = serde_json::from_str(
            r#"{"command":"estimate","regime":{"variant":"unrestricted","include_intercept":false}}"#,
        )
        .unwrap();
        assert_eq!(b.weight_regime().unwrap(), WeightRegime::unrestricted(false));
        let bad: std::result::Result<RunConfig, _> = serde_json::from_str(r#"{"comand":"estimate"}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = base(Command::Estimate);
        cfg.filter = Some(FilterSpec { h: 2, p: 1 });
        let o = Overrides {
            h: Some(4),
            regime: Some("signed".into()),
            t0: Some(1985),
            ..Overrides::default()
        };
        let cfg = apply_overrides(cfg, Command::Estimate, o).unwrap();
        assert_eq!(cfg.filter, Some(FilterSpec { h: 4, p: 1 }));
        assert_eq!(cfg.weight_regime().unwrap(), WeightRegime::signed());
        assert_eq!(cfg.t0_label, Some(1985));
    }

    #[test]
    fn simulate_built_from_flags() {
        let o = Overrides {
            model: Some(sbc_core::sim::Model::Model2),
            t0: Some(50),
            phi: Some(0.8),
            seed: Some(7),
            replications: Some(10),
            no_intercept: true,
            ..Overrides::default()
        };
        let cfg = apply_overrides(RunConfig::default(), Command::Simulate, o).unwrap();
        let cell = &cfg.sim.as_ref().unwrap().cells()[0];
        assert_eq!((cell.t0, cell.phi, cell.master_seed, cell.replications), (50, 0.8, 7, 10));
        assert_eq!(cell.regime, WeightRegime::unrestricted(false));
        assert_eq!(cfg.validate().unwrap(), Command::Simulate);
    }
}
