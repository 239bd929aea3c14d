//! Treated/donor panel model and the estimation window shared by every
//! estimator.
//!
//! Units are stored with the treated unit first. Periods are 1-based at the
//! public surface (`t0`, window bounds) to line up with calendar labels; the
//! `index0` helpers convert to storage offsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterSpec;

/// Outcomes for `N + 1` units over `T` periods. Unit 0 in storage (unit 1 in
/// reports) is the treated unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    outcomes: Vec<Vec<f64>>,
    t0: usize,
    unit_labels: Vec<String>,
    period_labels: Vec<i64>,
}

impl PanelData {
    /// Builds a panel whose first row is the treated unit.
    pub fn new(
        outcomes: Vec<Vec<f64>>,
        t0: usize,
        unit_labels: Vec<String>,
        period_labels: Vec<i64>,
    ) -> Result<Self> {
        Self::with_treated(outcomes, 1, t0, unit_labels, period_labels)
    }

    /// Builds a panel from rows in arbitrary order, moving the 1-based
    /// `treated` row to the front.
    pub fn with_treated(
        mut outcomes: Vec<Vec<f64>>,
        treated: usize,
        t0: usize,
        mut unit_labels: Vec<String>,
        period_labels: Vec<i64>,
    ) -> Result<Self> {
        let n_units = outcomes.len();
        if treated == 0 || treated > n_units {
            return Err(Error::BadTreatedIndex {
                index: treated,
                n_units,
            });
        }
        if n_units < 2 {
            return Err(Error::InvalidPanel(format!(
                "need a treated unit and at least one donor, got {n_units} unit(s)"
            )));
        }
        if unit_labels.len() != n_units {
            return Err(Error::InvalidPanel(format!(
                "{} unit labels for {} units",
                unit_labels.len(),
                n_units
            )));
        }
        let periods = period_labels.len();
        if let Some((i, row)) = outcomes.iter().enumerate().find(|(_, r)| r.len() != periods) {
            return Err(Error::InvalidPanel(format!(
                "unit {:?} has {} periods, expected {}",
                unit_labels[i],
                row.len(),
                periods
            )));
        }
        if let Some(w) = period_labels.windows(2).find(|w| w[1] != w[0] + 1) {
            return Err(Error::NonContiguousPeriods(format!(
                "period {} followed by {}",
                w[0], w[1]
            )));
        }
        if t0 < 2 || t0 > periods {
            return Err(Error::InvalidPanel(format!(
                "t0 must satisfy 1 < t0 <= T, got t0={t0}, T={periods}"
            )));
        }
        for (row, label) in outcomes.iter().zip(&unit_labels) {
            if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidPanel(format!(
                    "non-finite outcome for unit {label:?} at period {}",
                    period_labels[t]
                )));
            }
        }
        let row = outcomes.remove(treated - 1);
        outcomes.insert(0, row);
        let label = unit_labels.remove(treated - 1);
        unit_labels.insert(0, label);
        Ok(Self {
            outcomes,
            t0,
            unit_labels,
            period_labels,
        })
    }

    /// Panel with default labels `unit1..` and periods `1..=T`.
    pub fn from_rows(outcomes: Vec<Vec<f64>>, t0: usize) -> Result<Self> {
        let n = outcomes.len();
        let t = outcomes.first().map_or(0, Vec::len);
        Self::new(
            outcomes,
            t0,
            (1..=n).map(|i| format!("unit{i}")).collect(),
            (1..=t as i64).collect(),
        )
    }

    pub fn n_units(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_donors(&self) -> usize {
        self.outcomes.len() - 1
    }

    pub fn n_periods(&self) -> usize {
        self.period_labels.len()
    }

    /// Last pre-treatment period, 1-based.
    pub fn t0(&self) -> usize {
        self.t0
    }

    /// Series for storage row `unit` (0 = treated).
    pub fn series(&self, unit: usize) -> &[f64] {
        &self.outcomes[unit]
    }

    pub fn treated(&self) -> &[f64] {
        &self.outcomes[0]
    }

    /// Outcome of storage row `unit` at 1-based period `t`.
    pub fn value(&self, unit: usize, t: usize) -> f64 {
        self.outcomes[unit][t - 1]
    }

    pub fn unit_labels(&self) -> &[String] {
        &self.unit_labels
    }

    pub fn donor_labels(&self) -> &[String] {
        &self.unit_labels[1..]
    }

    pub fn period_labels(&self) -> &[i64] {
        &self.period_labels
    }

    /// Calendar label of 1-based period `t`.
    pub fn period_label(&self, t: usize) -> i64 {
        self.period_labels[t - 1]
    }

    /// Same data with the treatment date moved to `t0`.
    pub fn with_t0(&self, t0: usize) -> Result<Self> {
        if t0 < 2 || t0 > self.n_periods() {
            return Err(Error::InvalidPanel(format!(
                "t0 must satisfy 1 < t0 <= T, got t0={t0}, T={}",
                self.n_periods()
            )));
        }
        Ok(Self { t0, ..self.clone() })
    }
}

/// Pre-treatment periods `[h + p, t0]` over which every fit is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationWindow {
    pub first_fit_period: usize,
    pub last_fit_period: usize,
    pub effective_size: usize,
}

impl EstimationWindow {
    /// Window for treatment date `t0`; requires at least `p + 2` observations.
    pub fn new(t0: usize, spec: &FilterSpec) -> Result<Self> {
        let first = spec.h + spec.p;
        let effective = t0 as i64 - first as i64 + 1;
        let required = spec.p + 2;
        if effective < required as i64 {
            return Err(Error::WindowTooShort {
                t0,
                h: spec.h,
                p: spec.p,
                effective,
                required,
            });
        }
        Ok(Self {
            first_fit_period: first,
            last_fit_period: t0,
            effective_size: effective as usize,
        })
    }

    /// 1-based periods in the window.
    pub fn periods(&self) -> std::ops::RangeInclusive<usize> {
        self.first_fit_period..=self.last_fit_period
    }

    /// Storage offsets of the window.
    pub fn index0(&self) -> std::ops::Range<usize> {
        self.first_fit_period - 1..self.last_fit_period
    }
}

/// Checks the panel against a filter spec and returns the shared fit window.
pub fn validate_panel(panel: &PanelData, spec: &FilterSpec) -> Result<EstimationWindow> {
    spec.validate()?;
    EstimationWindow::new(panel.t0(), spec)
}
