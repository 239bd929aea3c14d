//! Monte Carlo comparison of the SBC and SC estimators on three data
//! generating processes: independent random walks with drift, unit-root
//! trends with common AR(1) factors, and a partially cointegrated panel.
//!
//! Every random component of replication `i` is drawn from its own ChaCha20
//! stream keyed by `(master_seed, i, component)`, so a replication's data do
//! not depend on which worker runs it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{sbc_estimate, sc_estimate};
use crate::filter::FilterSpec;
use crate::panel::{validate_panel, PanelData};
use crate::solver::WeightRegime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Model1,
    Model2,
    Model3,
}

/// Drift of the Model 1 random walks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Drift {
    Zero,
    Fixed { value: f64 },
    /// One draw per unit per replication from `N(0, sd^2)`.
    Gaussian { sd: f64 },
}

/// How the `T0^{-1/3}` scale of the Model 3 random-walk loadings is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadingScale {
    #[default]
    Variance,
    StdDev,
}

/// Switches that force parts of a DGP to degenerate values. Random draws
/// still happen, so the remaining components keep their values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpHooks {
    pub zero_noise: bool,
    pub zero_ar_loadings: bool,
    pub zero_rw_loadings: bool,
    /// Overwrite the last donor with the treated unit's path.
    pub duplicate_treated_donor: bool,
    /// Units 1 and 2 share all factor loadings.
    pub shared_loadings: bool,
}

fn default_n_units() -> usize {
    12
}
fn default_two() -> usize {
    2
}
fn default_drift() -> Drift {
    Drift::Zero
}
fn default_phi() -> f64 {
    0.5
}
fn default_regime() -> WeightRegime {
    WeightRegime::unrestricted(true)
}
fn default_reps() -> usize {
    2_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub model: Model,
    /// Total units `N + 1`, treated included.
    #[serde(default = "default_n_units")]
    pub n_units: usize,
    pub t0: usize,
    #[serde(default = "default_two")]
    pub h: usize,
    #[serde(default = "default_two")]
    pub p: usize,
    #[serde(default = "default_drift")]
    pub drift: Drift,
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default = "default_regime")]
    pub regime: WeightRegime,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub loading_scale: LoadingScale,
    #[serde(default)]
    pub hooks: DgpHooks,
}

impl SimulationSpec {
    /// Defaults used in the simulation table: 12 units, `h = p = 2`.
    pub fn new(model: Model, t0: usize, regime: WeightRegime) -> Self {
        Self {
            model,
            n_units: 12,
            t0,
            h: 2,
            p: 2,
            drift: Drift::Zero,
            phi: 0.5,
            regime,
            replications: 2_000,
            master_seed: 0,
            loading_scale: LoadingScale::Variance,
            hooks: DgpHooks::default(),
        }
    }

    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn filter_spec(&self) -> Result<FilterSpec> {
        FilterSpec::new(self.h, self.p)
    }

    pub fn periods(&self) -> usize {
        self.t0 + self.h
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSimulation(m));
        if self.n_units < 3 {
            return bad(format!("n_units must be at least 3, got {}", self.n_units));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.phi > -1.0 && self.phi < 1.0) {
            return bad(format!("phi must lie in (-1, 1), got {}", self.phi));
        }
        match self.drift {
            Drift::Fixed { value } if !value.is_finite() => return bad("drift must be finite".into()),
            Drift::Gaussian { sd } if !(sd.is_finite() && sd >= 0.0) => {
                return bad("drift sd must be finite and non-negative".into())
            }
            _ => {}
        }
        WeightRegime::new(self.regime.variant, self.regime.include_intercept)?;
        let filter = self.filter_spec()?;
        crate::panel::EstimationWindow::new(self.t0, &filter)?;
        Ok(())
    }

    /// Column label for the DGP parameter, e.g. `mu=0` or `phi=0.8`.
    pub fn parameter_label(&self) -> String {
        match self.model {
            Model::Model1 => match self.drift {
                Drift::Zero => "mu=0".into(),
                Drift::Fixed { value } => format!("mu={value}"),
                Drift::Gaussian { sd } => format!("mu~N(0,{})", sd * sd),
            },
            Model::Model2 | Model::Model3 => format!("phi={}", self.phi),
        }
    }

    pub fn model_label(&self) -> &'static str {
        match self.model {
            Model::Model1 => "model1",
            Model::Model2 => "model2",
            Model::Model3 => "model3",
        }
    }
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Noise = 0,
    Drift = 1,
    ArLoadings = 2,
    ArFactors = 3,
    RwLoadings = 4,
    RwFactors = 5,
}

/// Generator for one random component of replication `index`.
fn stream(master_seed: u64, index: u64, component: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream((index << 3) | component as u64);
    rng
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Two-factor AR(1) paths over `periods`, each started from its stationary
/// law `N(0, 1 / (1 - phi^2))`.
pub fn simulate_ar_factors(phi: f64, periods: usize, rng: &mut impl Rng) -> [Vec<f64>; 2] {
    let sd0 = (1.0 / (1.0 - phi * phi)).sqrt();
    std::array::from_fn(|_| {
        let mut f = sd0 * normal(rng);
        (0..periods)
            .map(|_| {
                f = phi * f + normal(rng);
                f
            })
            .collect()
    })
}

/// Two random walks started at zero.
pub fn simulate_rw_factors(periods: usize, rng: &mut impl Rng) -> [Vec<f64>; 2] {
    std::array::from_fn(|_| {
        let mut f = 0.0;
        (0..periods)
            .map(|_| {
                f += normal(rng);
                f
            })
            .collect()
    })
}

/// Loadings on the random-walk factors with scale `t0^{-1/3}`.
pub fn draw_rw_loading(t0: usize, scale: LoadingScale, rng: &mut impl Rng) -> f64 {
    let s = (t0 as f64).powf(-1.0 / 3.0);
    let sd = match scale {
        LoadingScale::Variance => s.sqrt(),
        LoadingScale::StdDev => s,
    };
    sd * normal(rng)
}

/// A simulated panel. No treatment is applied, so the observed post-period
/// outcomes of the treated unit are its untreated outcomes.
#[derive(Debug, Clone)]
pub struct SimPanel {
    pub panel: PanelData,
    pub untreated_post: Vec<f64>,
}

fn noise_paths(spec: &SimulationSpec, index: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(spec.master_seed, index, Stream::Noise);
    let periods = spec.periods();
    (0..spec.n_units)
        .map(|_| {
            (0..periods)
                .map(|_| if spec.hooks.zero_noise { 0.0 } else { normal(&mut rng) })
                .collect()
        })
        .collect()
}

fn ar_loadings(spec: &SimulationSpec, index: u64) -> Vec<[f64; 2]> {
    let mut rng = stream(spec.master_seed, index, Stream::ArLoadings);
    let mut out: Vec<[f64; 2]> = (0..spec.n_units).map(|_| [normal(&mut rng), normal(&mut rng)]).collect();
    if spec.hooks.zero_ar_loadings {
        out.iter_mut().for_each(|l| *l = [0.0; 2]);
    }
    if spec.hooks.shared_loadings {
        out[1] = out[0];
    }
    out
}

fn finish(spec: &SimulationSpec, mut rows: Vec<Vec<f64>>) -> Result<SimPanel> {
    if spec.hooks.duplicate_treated_donor {
        let last = rows.len() - 1;
        rows[last] = rows[0].clone();
    }
    let untreated_post = rows[0][spec.t0..].to_vec();
    let panel = PanelData::from_rows(rows, spec.t0)?;
    Ok(SimPanel { panel, untreated_post })
}

fn check_model(spec: &SimulationSpec, model: Model) -> Result<()> {
    spec.validate()?;
    if spec.model != model {
        return Err(Error::InvalidSimulation(format!(
            "spec is for {:?}, generator is {model:?}",
            spec.model
        )));
    }
    Ok(())
}

/// Independent random walks with drift, `Y_0 = 0`.
pub fn gen_model1(spec: &SimulationSpec, index: u64) -> Result<SimPanel> {
    check_model(spec, Model::Model1)?;
    let mut drift_rng = stream(spec.master_seed, index, Stream::Drift);
    let noise = noise_paths(spec, index);
    let rows = noise
        .into_iter()
        .map(|eps| {
            let mu = match spec.drift {
                Drift::Zero => 0.0,
                Drift::Fixed { value } => value,
                Drift::Gaussian { sd } => sd * normal(&mut drift_rng),
            };
            let mut y = 0.0;
            eps.into_iter()
                .map(|e| {
                    y += mu + e;
                    y
                })
                .collect()
        })
        .collect();
    finish(spec, rows)
}

/// Random-walk levels whose increments load on two common AR(1) factors.
fn model2_row(loading: [f64; 2], factors: &[Vec<f64>; 2], eps: &[f64]) -> Vec<f64> {
    let mut y = 0.0;
    eps.iter()
        .enumerate()
        .map(|(t, e)| {
            y += loading[0] * factors[0][t] + loading[1] * factors[1][t] + e;
            y
        })
        .collect()
}

/// Idiosyncratic unit-root trends with common stationary factors, no drift.
pub fn gen_model2(spec: &SimulationSpec, index: u64) -> Result<SimPanel> {
    check_model(spec, Model::Model2)?;
    let factors = simulate_ar_factors(spec.phi, spec.periods(), &mut stream(spec.master_seed, index, Stream::ArFactors));
    let loadings = ar_loadings(spec, index);
    let rows = noise_paths(spec, index)
        .iter()
        .zip(&loadings)
        .map(|(eps, l)| model2_row(*l, &factors, eps))
        .collect();
    finish(spec, rows)
}

/// The first `floor(n_units / 2)` units (treated included) load on two common
/// random walks and two AR(1) factors in levels; the rest follow Model 2 with
/// the same AR factors.
pub fn gen_model3(spec: &SimulationSpec, index: u64) -> Result<SimPanel> {
    check_model(spec, Model::Model3)?;
    let periods = spec.periods();
    let ar = simulate_ar_factors(spec.phi, periods, &mut stream(spec.master_seed, index, Stream::ArFactors));
    let rw = simulate_rw_factors(periods, &mut stream(spec.master_seed, index, Stream::RwFactors));
    let ar_load = ar_loadings(spec, index);
    let mut rw_rng = stream(spec.master_seed, index, Stream::RwLoadings);
    let mut rw_load: Vec<[f64; 2]> = (0..spec.n_units)
        .map(|_| {
            [
                draw_rw_loading(spec.t0, spec.loading_scale, &mut rw_rng),
                draw_rw_loading(spec.t0, spec.loading_scale, &mut rw_rng),
            ]
        })
        .collect();
    if spec.hooks.zero_rw_loadings {
        rw_load.iter_mut().for_each(|l| *l = [0.0; 2]);
    }
    if spec.hooks.shared_loadings {
        rw_load[1] = rw_load[0];
    }
    let cointegrated = spec.n_units / 2;
    let rows = noise_paths(spec, index)
        .iter()
        .enumerate()
        .map(|(i, eps)| {
            if i < cointegrated {
                (0..periods)
                    .map(|t| {
                        rw_load[i][0] * rw[0][t]
                            + rw_load[i][1] * rw[1][t]
                            + ar_load[i][0] * ar[0][t]
                            + ar_load[i][1] * ar[1][t]
                            + eps[t]
                    })
                    .collect()
            } else {
                model2_row(ar_load[i], &ar, eps)
            }
        })
        .collect();
    finish(spec, rows)
}

/// Panel for replication `index` of `spec`.
pub fn generate(spec: &SimulationSpec, index: u64) -> Result<SimPanel> {
    match spec.model {
        Model::Model1 => gen_model1(spec, index),
        Model::Model2 => gen_model2(spec, index),
        Model::Model3 => gen_model3(spec, index),
    }
}

/// Squared-error sums for one replication. Pre sums run over `[h+p, t0]`
/// against observed outcomes, post sums over `t0+1 ..= t0+h` against the
/// untreated outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub pre_sbc_sse: f64,
    pub pre_sc_sse: f64,
    pub post_sbc_sse: f64,
    pub post_sc_sse: f64,
    /// Mean signed SBC prediction error (prediction minus truth) over the horizon.
    pub post_sbc_mean_error: f64,
    pub post_sc_mean_error: f64,
}

fn sse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn mean_error(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| p - t).sum::<f64>() / pred.len() as f64
}

pub fn run_replication(spec: &SimulationSpec, index: u64) -> Result<ReplicationOutcome> {
    let sim = generate(spec, index)?;
    let filter = spec.filter_spec()?;
    let window = validate_panel(&sim.panel, &filter)?;
    let sc = sc_estimate(&sim.panel, spec.regime, window, spec.h)?;
    let sbc = sbc_estimate(&sim.panel, &filter, spec.regime)?;
    Ok(ReplicationOutcome {
        pre_sbc_sse: sse(&sbc.pre_fitted, &sbc.pre_actual),
        pre_sc_sse: sse(&sc.pre_fitted, &sc.pre_actual),
        post_sbc_sse: sse(&sbc.post_counterfactual, &sim.untreated_post),
        post_sc_sse: sse(&sc.post_counterfactual, &sim.untreated_post),
        post_sbc_mean_error: mean_error(&sbc.post_counterfactual, &sim.untreated_post),
        post_sc_mean_error: mean_error(&sc.post_counterfactual, &sim.untreated_post),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRatioReport {
    pub spec: SimulationSpec,
    /// Summed SBC pre-period SSE over summed SC pre-period SSE.
    pub pre_ratio: f64,
    pub post_ratio: f64,
    /// Medians of per-replication ratios, as a diagnostic.
    pub median_pre_ratio: f64,
    pub median_post_ratio: f64,
    /// Mean and Monte Carlo standard error of the per-replication mean signed
    /// SBC post error.
    pub sbc_post_bias: f64,
    pub sbc_post_bias_se: f64,
    pub completed: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_replication: Option<Vec<ReplicationOutcome>>,
}

/// Pairwise (cascade) summation in slice order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs all replications on the current rayon pool.
pub fn run_monte_carlo(spec: &SimulationSpec) -> Result<MseRatioReport> {
    spec.validate()?;
    let results: Vec<Result<ReplicationOutcome>> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|i| run_replication(spec, i))
        .collect();
    aggregate(spec, results)
}

/// Runs on a dedicated pool of `threads` workers (`None` = rayon default).
pub fn run_monte_carlo_with_threads(spec: &SimulationSpec, threads: Option<usize>) -> Result<MseRatioReport> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_monte_carlo(spec))
}

fn aggregate(spec: &SimulationSpec, results: Vec<Result<ReplicationOutcome>>) -> Result<MseRatioReport> {
    let total = results.len();
    let ok: Vec<ReplicationOutcome> = results.into_iter().filter_map(|r| r.ok()).collect();
    let failures = total - ok.len();
    if failures * 100 > total || ok.is_empty() {
        return Err(Error::FailureRateExceeded { failed: failures, total });
    }
    let col = |f: fn(&ReplicationOutcome) -> f64| ok.iter().map(f).collect::<Vec<f64>>();
    let ratio = |num: &[f64], den: &[f64]| pairwise_sum(num) / pairwise_sum(den);
    let (pre_sbc, pre_sc) = (col(|r| r.pre_sbc_sse), col(|r| r.pre_sc_sse));
    let (post_sbc, post_sc) = (col(|r| r.post_sbc_sse), col(|r| r.post_sc_sse));
    let bias = col(|r| r.post_sbc_mean_error);
    let n = ok.len() as f64;
    let mean_bias = pairwise_sum(&bias) / n;
    let var = if ok.len() > 1 {
        pairwise_sum(&bias.iter().map(|b| (b - mean_bias).powi(2)).collect::<Vec<_>>()) / (n - 1.0)
    } else {
        0.0
    };
    Ok(MseRatioReport {
        spec: spec.clone(),
        pre_ratio: ratio(&pre_sbc, &pre_sc),
        post_ratio: ratio(&post_sbc, &post_sc),
        median_pre_ratio: median(pre_sbc.iter().zip(&pre_sc).map(|(a, b)| a / b).collect()),
        median_post_ratio: median(post_sbc.iter().zip(&post_sc).map(|(a, b)| a / b).collect()),
        sbc_post_bias: mean_bias,
        sbc_post_bias_se: (var / n).sqrt(),
        completed: ok.len(),
        failures,
        per_replication: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(model: Model, t0: usize) -> SimulationSpec {
        SimulationSpec::new(model, t0, WeightRegime::unrestricted(true)).with_seed(11)
    }

    fn variance(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    }

    #[test]
    fn model1_degenerate_paths() {
        let mut s = spec(Model::Model1, 50);
        s.hooks.zero_noise = true;
        let sim = gen_model1(&s, 0).unwrap();
        assert!((0..12).all(|i| sim.panel.series(i).iter().all(|&v| v == 0.0)));

        s.drift = Drift::Fixed { value: 0.5 };
        let sim = gen_model1(&s, 0).unwrap();
        for i in 0..12 {
            for (t, v) in sim.panel.series(i).iter().enumerate() {
                assert!((v - 0.5 * (t + 1) as f64).abs() < 1e-12);
            }
        }
        assert_eq!(sim.panel.n_periods(), 52);
        assert_eq!(sim.untreated_post, sim.panel.treated()[50..].to_vec());
    }

    #[test]
    fn model1_increment_variance() {
        let s = SimulationSpec { n_units: 3, ..spec(Model::Model1, 10_000) };
        let sim = gen_model1(&s, 3).unwrap();
        let y = sim.panel.series(1);
        let diffs: Vec<f64> = std::iter::once(y[0]).chain(y.windows(2).map(|w| w[1] - w[0])).take(10_000).collect();
        let v = variance(&diffs);
        assert!((v - 1.0).abs() < 0.03, "variance {v}");
    }

    #[test]
    fn model1_gaussian_drift_varies_by_unit() {
        let s = spec(Model::Model1, 50).with_drift(Drift::Gaussian { sd: 0.5 });
        let mut z = s.clone();
        z.hooks.zero_noise = true;
        let sim = gen_model1(&z, 0).unwrap();
        let drifts: Vec<f64> = (0..12).map(|i| sim.panel.value(i, 1)).collect();
        assert!(drifts.windows(2).all(|w| w[0] != w[1]));
        for i in 0..12 {
            assert!((sim.panel.value(i, 10) - 10.0 * drifts[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn model2_without_loadings_is_model1() {
        let mut s2 = spec(Model::Model2, 60);
        s2.hooks.zero_ar_loadings = true;
        let s1 = spec(Model::Model1, 60);
        let a = gen_model2(&s2, 5).unwrap();
        let b = gen_model1(&s1, 5).unwrap();
        assert_eq!(a.panel, b.panel);
    }

    #[test]
    fn ar_factor_moments() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let [f, _] = simulate_ar_factors(0.0, 10_000, &mut rng);
        let m = f.iter().sum::<f64>() / f.len() as f64;
        let c0: f64 = f.iter().map(|x| (x - m).powi(2)).sum();
        let c1: f64 = f.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((c1 / c0).abs() < 0.02, "lag-1 autocorrelation {}", c1 / c0);

        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let [f, g] = simulate_ar_factors(0.8, 50_000, &mut rng);
        let target = 1.0 / (1.0 - 0.64);
        for v in [variance(&f), variance(&g)] {
            assert!((v / target - 1.0).abs() < 0.05, "variance {v} vs {target}");
        }
    }

    #[test]
    fn model3_nesting_and_cointegration() {
        let mut s = spec(Model::Model3, 80).with_phi(0.8);
        s.hooks.zero_rw_loadings = true;
        let sim = gen_model3(&s, 1).unwrap();
        // Stationary levels for the first half: no unit-root drift away.
        let y = sim.panel.series(0);
        assert!(y.iter().all(|v| v.abs() < 40.0));

        let mut s = spec(Model::Model3, 80).with_phi(0.8);
        s.hooks.zero_noise = true;
        s.hooks.shared_loadings = true;
        let sim = gen_model3(&s, 1).unwrap();
        assert_eq!(sim.panel.series(0), sim.panel.series(1));
        assert_ne!(sim.panel.series(0), sim.panel.series(2));
    }

    #[test]
    fn rw_loading_variance() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let draws: Vec<f64> = (0..100_000).map(|_| draw_rw_loading(200, LoadingScale::Variance, &mut rng)).collect();
        let target = 200f64.powf(-1.0 / 3.0);
        assert!((variance(&draws) / target - 1.0).abs() < 0.03);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let sd: Vec<f64> = (0..100_000).map(|_| draw_rw_loading(200, LoadingScale::StdDev, &mut rng)).collect();
        assert!((variance(&sd) / (target * target) - 1.0).abs() < 0.03);
    }

    #[test]
    fn duplicated_treated_donor_gives_zero_post_error() {
        for model in [Model::Model1, Model::Model2, Model::Model3] {
            for regime in [WeightRegime::unrestricted(true), WeightRegime::signed(), WeightRegime::non_negative()] {
                let mut s = SimulationSpec::new(model, 60, regime).with_phi(0.5);
                s.hooks.duplicate_treated_donor = true;
                let r = run_replication(&s, 2).unwrap();
                assert!(r.post_sbc_sse < 1e-12, "{model:?} {regime}: {r:?}");
                assert!(r.post_sc_sse < 1e-12, "{model:?} {regime}: {r:?}");
            }
        }
    }

    #[test]
    fn replication_is_deterministic() {
        let s = spec(Model::Model2, 50).with_phi(0.8);
        assert_eq!(run_replication(&s, 7).unwrap(), run_replication(&s, 7).unwrap());
        assert_ne!(run_replication(&s, 7).unwrap(), run_replication(&s, 8).unwrap());
    }

    #[test]
    fn report_independent_of_thread_count() {
        let s = spec(Model::Model1, 50).with_replications(40);
        let a = run_monte_carlo_with_threads(&s, Some(1)).unwrap();
        let b = run_monte_carlo_with_threads(&s, Some(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.completed, 40);
    }

    #[test]
    fn validation() {
        let mut s = spec(Model::Model2, 50);
        s.phi = 1.0;
        assert!(s.validate().is_err());
        let s = SimulationSpec { n_units: 2, ..spec(Model::Model1, 50) };
        assert!(s.validate().is_err());
        let s = spec(Model::Model1, 5);
        assert!(matches!(s.validate(), Err(Error::WindowTooShort { .. })));
        assert!(gen_model2(&spec(Model::Model1, 50), 0).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), v.iter().sum::<f64>());
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn labels() {
        assert_eq!(spec(Model::Model1, 50).parameter_label(), "mu=0");
        assert_eq!(
            spec(Model::Model1, 50).with_drift(Drift::Gaussian { sd: 0.5 }).parameter_label(),
            "mu~N(0,0.25)"
        );
        assert_eq!(spec(Model::Model2, 50).with_phi(0.8).parameter_label(), "phi=0.8");
    }
}
