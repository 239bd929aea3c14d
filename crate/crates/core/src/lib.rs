//! Counterfactual prediction for a single treated unit in a panel of
//! nonstationary outcomes.
//!
//! Two estimators are provided. The conventional synthetic control fits donor
//! weights on raw outcome levels. The synthetic business cycle estimator first
//! splits every series into a trend and a cycle with a one-sided regression
//! filter, forecasts the treated unit's trend from its own history, and fits
//! donor weights on cycles only. The [`sim`] module reproduces the Monte Carlo
//! comparison of the two on random-walk and factor designs.

pub mod error;
pub mod estimators;
pub mod filter;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod panel;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use estimators::{
    placebo_run, sbc_estimate, sbc_estimate_with_horizon, sc_estimate, weight_comparison, CounterfactualReport,
    Method, WeightComparison,
};
pub use filter::{decompose_panel, extrapolate_cycles, fit_filter, forecast_trend, FilterFit, FilterSpec};
pub use panel::{validate_panel, EstimationWindow, PanelData};
pub use solver::{solve, solve_simplex, solve_sum_one, solve_unrestricted, RegimeVariant, WeightRegime, WeightSolution};
