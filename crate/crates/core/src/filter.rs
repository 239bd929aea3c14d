//! One-sided regression filter: each unit's outcome is projected on a
//! constant and `p` of its own values dated `t - h` and earlier. The fitted
//! value is the trend and the residual is the cycle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::{validate_panel, EstimationWindow, PanelData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// Forecast horizon in periods.
    pub h: usize,
    /// Number of own lags.
    pub p: usize,
}

impl FilterSpec {
    pub fn new(h: usize, p: usize) -> Result<Self> {
        let spec = Self { h, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.p == 0 {
            return Err(Error::InvalidFilterSpec(format!(
                "h and p must be positive, got h={}, p={}",
                self.h, self.p
            )));
        }
        Ok(())
    }
}

/// Filter output for one unit over the estimation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFit {
    /// Storage row of the unit (0 = treated).
    pub unit: usize,
    /// Intercept first, then the coefficients on lags `t-h, ..., t-h-p+1`.
    pub alpha: Vec<f64>,
    pub trend: Vec<f64>,
    pub cycle: Vec<f64>,
    pub window: EstimationWindow,
    /// Lag design was rank deficient and solved by minimum norm.
    pub rank_deficient: bool,
}

impl FilterFit {
    /// Trend value at 1-based period `t`, reading lagged outcomes from `lag`.
    pub fn project<F: Fn(usize) -> f64>(&self, spec: &FilterSpec, t: usize, lag: F) -> Result<f64> {
        project(&self.alpha, spec, t, lag)
    }
}

fn lag_index(spec: &FilterSpec, t: usize, j: usize) -> Result<usize> {
    let idx = t as i64 - spec.h as i64 - j as i64;
    if idx < 1 {
        return Err(Error::LagOutOfRange {
            period: t as i64,
            index: idx,
        });
    }
    Ok(idx as usize)
}

fn project<F: Fn(usize) -> f64>(alpha: &[f64], spec: &FilterSpec, t: usize, lag: F) -> Result<f64> {
    let mut v = alpha[0];
    for j in 0..spec.p {
        v += alpha[j + 1] * lag(lag_index(spec, t, j)?);
    }
    Ok(v)
}

/// Regresses `series[t]` on `(1, series[t-h], ..., series[t-h-p+1])` over the
/// window.
pub fn fit_filter(series: &[f64], window: &EstimationWindow, spec: &FilterSpec) -> Result<FilterFit> {
    fit_filter_unit(0, series, window, spec)
}

pub(crate) fn fit_filter_unit(
    unit: usize,
    series: &[f64],
    window: &EstimationWindow,
    spec: &FilterSpec,
) -> Result<FilterFit> {
    spec.validate()?;
    if series.len() < window.last_fit_period {
        return Err(Error::DimensionMismatch(format!(
            "series has {} values, window ends at period {}",
            series.len(),
            window.last_fit_period
        )));
    }
    let rows = window.effective_size;
    let cols = spec.p + 1;
    let mut design = DMatrix::zeros(rows, cols);
    let mut target = DVector::zeros(rows);
    for (r, t) in window.periods().enumerate() {
        design[(r, 0)] = 1.0;
        for j in 0..spec.p {
            design[(r, j + 1)] = series[lag_index(spec, t, j)? - 1];
        }
        target[r] = series[t - 1];
    }
    let sol = linalg::lstsq(&design, &target);
    let fitted = &design * &sol.x;
    let trend: Vec<f64> = fitted.iter().copied().collect();
    let cycle: Vec<f64> = target.iter().zip(&trend).map(|(y, tr)| y - tr).collect();
    Ok(FilterFit {
        unit,
        alpha: sol.x.iter().copied().collect(),
        trend,
        cycle,
        window: *window,
        rank_deficient: sol.rank_deficient,
    })
}

/// Fits the filter to every unit on pre-treatment data only.
pub fn decompose_panel(panel: &PanelData, spec: &FilterSpec) -> Result<Vec<FilterFit>> {
    let window = validate_panel(panel, spec)?;
    (0..panel.n_units())
        .map(|i| fit_filter_unit(i, panel.series(i), &window, spec))
        .collect()
}

/// Trend forecast for periods `t0+1 ..= t0+h`. Every lag used is dated at or
/// before `t0`.
pub fn forecast_trend(fit: &FilterFit, series: &[f64], t0: usize, spec: &FilterSpec) -> Result<Vec<f64>> {
    if series.len() < t0 {
        return Err(Error::DimensionMismatch(format!(
            "series has {} values, need observations through t0={t0}",
            series.len()
        )));
    }
    (t0 + 1..=t0 + spec.h)
        .map(|t| fit.project(spec, t, |s| series[s - 1]))
        .collect()
}

/// Out-of-sample donor cycles `Y - trend` over `t0+1 ..= t0+horizon`, using
/// coefficients estimated before treatment and observed donor outcomes.
/// Rows follow the order of `fits`.
pub fn extrapolate_cycles(
    fits: &[FilterFit],
    panel: &PanelData,
    spec: &FilterSpec,
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    let t0 = panel.t0();
    if t0 + horizon > panel.n_periods() {
        return Err(Error::HorizonExceedsPanel {
            t0,
            horizon,
            periods: panel.n_periods(),
        });
    }
    fits.iter()
        .map(|fit| {
            let y = panel.series(fit.unit);
            (t0 + 1..=t0 + horizon)
                .map(|t| Ok(y[t - 1] - fit.project(spec, t, |s| y[s - 1])?))
                .collect()
        })
        .collect()
}
