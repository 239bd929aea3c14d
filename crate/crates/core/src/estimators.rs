//! Conventional synthetic control (SC) and synthetic business cycle (SBC)
//! counterfactuals, placebo re-runs, and weight comparisons.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{decompose_panel, extrapolate_cycles, FilterFit, FilterSpec};
use crate::panel::{validate_panel, EstimationWindow, PanelData};
use crate::solver::{solve, WeightRegime, WeightSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SC")]
    Sc,
    #[serde(rename = "SBC")]
    Sbc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    pub method: Method,
    pub regime: WeightRegime,
    pub weights: WeightSolution,
    /// Last pre-treatment period (1-based) the estimator was run at.
    pub t0: usize,
    pub window: EstimationWindow,
    pub pre_actual: Vec<f64>,
    /// In-window fitted values of the treated outcome.
    pub pre_fitted: Vec<f64>,
    pub post_actual: Vec<f64>,
    /// Predicted untreated outcome over `t0+1 ..= t0+horizon`.
    pub post_counterfactual: Vec<f64>,
    /// Observed minus counterfactual.
    pub effects: Vec<f64>,
    pub pre_mse: f64,
    /// Mean squared effect. Equals the prediction MSE when the panel carries
    /// no treatment (simulations, placebo dates).
    pub post_mse_vs_actual: f64,
    /// SBC only: treated-unit trend forecast over the horizon.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trend_forecast: Option<Vec<f64>>,
}

impl CounterfactualReport {
    pub fn horizon(&self) -> usize {
        self.post_counterfactual.len()
    }

    /// Sum of squared in-window fit errors.
    pub fn pre_sse(&self) -> f64 {
        self.pre_mse * self.pre_fitted.len() as f64
    }

    /// Sum of squared post-treatment errors.
    pub fn post_sse(&self) -> f64 {
        self.effects.iter().map(|e| e * e).sum()
    }
}

fn mean_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

fn check_horizon(panel: &PanelData, horizon: usize) -> Result<()> {
    if horizon == 0 || panel.t0() + horizon > panel.n_periods() {
        return Err(Error::HorizonExceedsPanel {
            t0: panel.t0(),
            horizon,
            periods: panel.n_periods(),
        });
    }
    Ok(())
}

/// Donor outcomes over 1-based `periods`, one row per period.
fn donor_matrix(panel: &PanelData, periods: std::ops::RangeInclusive<usize>) -> DMatrix<f64> {
    let periods: Vec<usize> = periods.collect();
    DMatrix::from_fn(periods.len(), panel.n_donors(), |r, c| panel.value(c + 1, periods[r]))
}

fn treated_vec(panel: &PanelData, periods: std::ops::RangeInclusive<usize>) -> Vec<f64> {
    periods.map(|t| panel.value(0, t)).collect()
}

fn fits_matrix(fits: &[FilterFit], rows: usize, pick: impl Fn(&FilterFit) -> &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, fits.len(), |r, c| pick(&fits[c])[r])
}

#[allow(clippy::too_many_arguments)]
fn report(
    method: Method,
    regime: WeightRegime,
    weights: WeightSolution,
    panel: &PanelData,
    window: EstimationWindow,
    pre_fitted: Vec<f64>,
    post_counterfactual: Vec<f64>,
    trend_forecast: Option<Vec<f64>>,
) -> CounterfactualReport {
    let t0 = panel.t0();
    let pre_actual = treated_vec(panel, window.periods());
    let post_actual = treated_vec(panel, t0 + 1..=t0 + post_counterfactual.len());
    let effects: Vec<f64> = post_actual.iter().zip(&post_counterfactual).map(|(y, c)| y - c).collect();
    CounterfactualReport {
        method,
        regime,
        weights,
        t0,
        window,
        pre_mse: mean_sq(&pre_actual, &pre_fitted),
        post_mse_vs_actual: effects.iter().map(|e| e * e).sum::<f64>() / effects.len() as f64,
        pre_actual,
        pre_fitted,
        post_actual,
        post_counterfactual,
        effects,
        trend_forecast,
    }
}

/// Synthetic control on raw outcomes: weights fitted over `window`, the
/// counterfactual is the weighted donor path over `t0+1 ..= t0+horizon`.
pub fn sc_estimate(
    panel: &PanelData,
    regime: WeightRegime,
    window: EstimationWindow,
    horizon: usize,
) -> Result<CounterfactualReport> {
    check_horizon(panel, horizon)?;
    if window.last_fit_period != panel.t0() {
        return Err(Error::Config(format!(
            "window ends at {} but t0 is {}",
            window.last_fit_period,
            panel.t0()
        )));
    }
    let t0 = panel.t0();
    let x = donor_matrix(panel, window.periods());
    let y = DVector::from_vec(treated_vec(panel, window.periods()));
    let sol = solve(&x, &y, &regime)?;
    let pre_fitted = sol.predict(&x).iter().copied().collect();
    let post = sol.predict(&donor_matrix(panel, t0 + 1..=t0 + horizon)).iter().copied().collect();
    Ok(report(Method::Sc, regime, sol, panel, window, pre_fitted, post, None))
}

/// Synthetic business cycle over the default horizon `h`.
pub fn sbc_estimate(panel: &PanelData, spec: &FilterSpec, regime: WeightRegime) -> Result<CounterfactualReport> {
    sbc_estimate_with_horizon(panel, spec, regime, spec.h)
}

/// Synthetic business cycle over `t0+1 ..= t0+horizon`. Horizons beyond `h`
/// feed the predicted counterfactual back in as the treated unit's lags;
/// donor cycles always use observed donor outcomes.
pub fn sbc_estimate_with_horizon(
    panel: &PanelData,
    spec: &FilterSpec,
    regime: WeightRegime,
    horizon: usize,
) -> Result<CounterfactualReport> {
    let window = validate_panel(panel, spec)?;
    check_horizon(panel, horizon)?;
    let t0 = panel.t0();
    let fits = decompose_panel(panel, spec)?;
    let (treated, donors) = fits.split_first().expect("panel has a treated unit");

    // No intercept: in-window cycles are mean zero.
    let x = fits_matrix(donors, window.effective_size, |f| &f.cycle);
    let y = DVector::from_column_slice(&treated.cycle);
    let sol = solve(&x, &y, &regime.without_intercept())?;

    let synthetic_pre = sol.predict(&x);
    let pre_fitted = treated.trend.iter().zip(synthetic_pre.iter()).map(|(t, c)| t + c).collect();

    let donor_post = extrapolate_cycles(donors, panel, spec, horizon)?;
    let synthetic_post: Vec<f64> = (0..horizon)
        .map(|k| donor_post.iter().zip(&sol.weights).map(|(c, w)| w * c[k]).sum())
        .collect();

    let y1 = panel.treated();
    let mut trend = Vec::with_capacity(horizon);
    let mut counterfactual: Vec<f64> = Vec::with_capacity(horizon);
    for (k, t) in (t0 + 1..=t0 + horizon).enumerate() {
        let tau = treated.project(spec, t, |s| if s <= t0 { y1[s - 1] } else { counterfactual[s - t0 - 1] })?;
        trend.push(tau);
        counterfactual.push(tau + synthetic_post[k]);
    }
    Ok(report(
        Method::Sbc,
        regime,
        sol,
        panel,
        window,
        pre_fitted,
        counterfactual,
        Some(trend),
    ))
}

/// Re-runs both estimators with the treatment date moved back to
/// `placebo_t0`. Returns `(SC, SBC)`.
pub fn placebo_run(
    panel: &PanelData,
    placebo_t0: usize,
    spec: &FilterSpec,
    regime: WeightRegime,
) -> Result<(CounterfactualReport, CounterfactualReport)> {
    if placebo_t0 >= panel.t0() {
        return Err(Error::Config(format!(
            "placebo date {placebo_t0} must precede t0={}",
            panel.t0()
        )));
    }
    let shifted = panel.with_t0(placebo_t0)?;
    let window = validate_panel(&shifted, spec)?;
    let sc = sc_estimate(&shifted, regime, window, spec.h)?;
    let sbc = sbc_estimate(&shifted, spec, regime)?;
    Ok((sc, sbc))
}

/// Donor weights fitted on raw outcomes, trend components, and cycle
/// components over the same window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightComparison {
    pub donors: Vec<String>,
    pub raw: WeightSolution,
    pub trend: WeightSolution,
    pub cycle: WeightSolution,
}

pub fn weight_comparison(panel: &PanelData, spec: &FilterSpec, regime: WeightRegime) -> Result<WeightComparison> {
    let window = validate_panel(panel, spec)?;
    let fits = decompose_panel(panel, spec)?;
    let (treated, donors) = fits.split_first().expect("panel has a treated unit");
    let rows = window.effective_size;

    let raw = solve(
        &donor_matrix(panel, window.periods()),
        &DVector::from_vec(treated_vec(panel, window.periods())),
        &regime,
    )?;
    let trend = solve(
        &fits_matrix(donors, rows, |f| &f.trend),
        &DVector::from_column_slice(&treated.trend),
        &regime,
    )?;
    let cycle = solve(
        &fits_matrix(donors, rows, |f| &f.cycle),
        &DVector::from_column_slice(&treated.cycle),
        &regime.without_intercept(),
    )?;
    Ok(WeightComparison {
        donors: panel.donor_labels().to_vec(),
        raw,
        trend,
        cycle,
    })
}
