//! Donor-weight least squares under three constraint regimes: unrestricted
//! (optionally with an intercept), signed weights summing to one, and
//! non-negative weights summing to one (the probability simplex).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Decomposition};

pub const MAX_ITERATIONS: usize = 100_000;
/// Relative objective decrease at which projected gradient stops.
pub const OBJECTIVE_TOL: f64 = 1e-12;
pub const KKT_TOL: f64 = 1e-8;
const COLLINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeVariant {
    Unrestricted,
    SignedSumOne,
    NonNegativeSumOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeightRegime {
    pub variant: RegimeVariant,
    pub include_intercept: bool,
}

impl WeightRegime {
    pub fn new(variant: RegimeVariant, include_intercept: bool) -> Result<Self> {
        if include_intercept && variant != RegimeVariant::Unrestricted {
            return Err(Error::InvalidRegime(format!(
                "{variant:?} weights cannot carry an intercept"
            )));
        }
        Ok(Self {
            variant,
            include_intercept,
        })
    }

    pub fn unrestricted(include_intercept: bool) -> Self {
        Self {
            variant: RegimeVariant::Unrestricted,
            include_intercept,
        }
    }

    pub fn signed() -> Self {
        Self {
            variant: RegimeVariant::SignedSumOne,
            include_intercept: false,
        }
    }

    pub fn non_negative() -> Self {
        Self {
            variant: RegimeVariant::NonNegativeSumOne,
            include_intercept: false,
        }
    }

    /// Same constraint set with the intercept dropped.
    pub fn without_intercept(self) -> Self {
        Self {
            include_intercept: false,
            ..self
        }
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            RegimeVariant::Unrestricted => "unrestricted",
            RegimeVariant::SignedSumOne => "signed",
            RegimeVariant::NonNegativeSumOne => "nonnegative",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "unrestricted" => Ok(Self::unrestricted(true)),
            "signed" | "signed_sum_one" => Ok(Self::signed()),
            "nonnegative" | "non_negative" | "non_negative_sum_one" | "simplex" => {
                Ok(Self::non_negative())
            }
            other => Err(Error::InvalidRegime(format!("unknown regime {other:?}"))),
        }
    }
}

impl fmt::Display for WeightRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution {
    pub weights: Vec<f64>,
    pub intercept: Option<f64>,
    /// Residual sum of squares over the fit window.
    pub objective: f64,
    pub regime: WeightRegime,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Smallest singular value of the active donor columns is numerically zero,
    /// so the optimal weights are not unique.
    pub collinear: bool,
}

impl WeightSolution {
    /// `intercept + X w` row by row.
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let w = DVector::from_column_slice(&self.weights);
        let mut out = x * w;
        if let Some(b) = self.intercept {
            out.add_scalar_mut(b);
        }
        out
    }
}

fn check_dims(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows but y has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::DimensionMismatch("X has no donor columns".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::DimensionMismatch("non-finite entries in X or y".into()));
    }
    Ok(())
}

fn rss(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, intercept: f64) -> f64 {
    let mut r = y - x * w;
    r.add_scalar_mut(-intercept);
    r.norm_squared()
}

/// `2 X'(Xw + b - y)`.
fn gradient(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, intercept: f64) -> DVector<f64> {
    let mut r = x * w - y;
    r.add_scalar_mut(intercept);
    x.tr_mul(&r) * 2.0
}

fn collinear(x: &DMatrix<f64>, active: &[usize]) -> bool {
    if active.is_empty() {
        return false;
    }
    let sub = x.select_columns(active);
    let d = Decomposition::new(&sub);
    let scale = Decomposition::new(x).largest_singular_value().max(1.0);
    d.smallest_singular_value() < COLLINEAR_TOL * scale
}

/// Ordinary least squares, minimum norm when the design is rank deficient.
pub fn solve_unrestricted(x: &DMatrix<f64>, y: &DVector<f64>, intercept: bool) -> Result<WeightSolution> {
    check_dims(x, y)?;
    let n = x.ncols();
    let design = if intercept {
        x.clone().insert_column(0, 1.0)
    } else {
        x.clone()
    };
    let sol = linalg::lstsq(&design, y);
    let (b, w) = if intercept {
        (sol.x[0], sol.x.rows(1, n).into_owned())
    } else {
        (0.0, sol.x.clone())
    };
    let mut r = &design * &sol.x - y;
    let objective = r.norm_squared();
    r *= 2.0;
    let kkt = design.tr_mul(&r).amax();
    Ok(WeightSolution {
        weights: w.iter().copied().collect(),
        intercept: intercept.then_some(b),
        objective,
        regime: WeightRegime::unrestricted(intercept),
        kkt_residual: kkt,
        iterations: 1,
        collinear: collinear(x, &(0..n).collect::<Vec<_>>()),
    })
}

/// Raw sum-to-one solve on a column subset, used by the simplex polish.
fn sum_one_weights(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = x.ncols();
    let d = Decomposition::new(x);
    let w_u = d.solve(y);
    let ones = DVector::from_element(n, 1.0);
    let slack = 1.0 - w_u.sum();
    let null = d.null_component(&ones);
    let null_sq = null.norm_squared();
    if null_sq > 1e-12 * n as f64 {
        // The constraint can be met along a direction X does not see.
        return Ok(w_u + null * (slack / null_sq));
    }
    let g1 = d.gram_pinv_apply(&ones);
    let denom = g1.sum();
    if denom.abs() <= 1e-14 {
        return Err(Error::DegenerateConstraint(denom));
    }
    Ok(w_u + g1 * (slack / denom))
}

fn sum_one_kkt(g: &DVector<f64>) -> f64 {
    let mean = g.mean();
    g.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
}

/// Least squares subject to `sum(w) = 1`, via the Lagrangian closed form.
pub fn solve_sum_one(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<WeightSolution> {
    check_dims(x, y)?;
    let w = sum_one_weights(x, y)?;
    let g = gradient(x, y, &w, 0.0);
    Ok(WeightSolution {
        objective: rss(x, y, &w, 0.0),
        kkt_residual: sum_one_kkt(&g),
        weights: w.iter().copied().collect(),
        intercept: None,
        regime: WeightRegime::signed(),
        iterations: 1,
        collinear: collinear(x, &(0..x.ncols()).collect::<Vec<_>>()),
    })
}

/// Euclidean projection onto `{w >= 0, sum(w) = 1}` (sort-based).
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}

/// KKT residual on the simplex: active gradient entries must agree and
/// inactive ones must not fall below the common value.
pub fn simplex_kkt(g: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let active: Vec<f64> = g.iter().zip(w.iter()).filter(|(_, &wi)| wi > 0.0).map(|(&gi, _)| gi).collect();
    if active.is_empty() {
        return f64::INFINITY;
    }
    let nu = active.iter().sum::<f64>() / active.len() as f64;
    let spread = active.iter().map(|v| (v - nu).abs()).fold(0.0, f64::max);
    let dual = g
        .iter()
        .zip(w.iter())
        .filter(|(_, &wi)| wi <= 0.0)
        .map(|(&gi, _)| (nu - gi).max(0.0))
        .fold(0.0, f64::max);
    spread.max(dual)
}

struct Quadratic<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl<'a> Quadratic<'a> {
    fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>) -> Self {
        Self {
            x,
            y,
            gram: x.tr_mul(x),
            xty: x.tr_mul(y),
        }
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        rss(self.x, self.y, w, 0.0)
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        (&self.gram * w - &self.xty) * 2.0
    }
}

/// Projected gradient with Barzilai-Borwein steps and an exact line search
/// along the projected direction. Returns the iterate, iteration count, and
/// whether the stopping rule fired before the cap.
fn projected_gradient(q: &Quadratic<'_>, n: usize) -> (DVector<f64>, usize, bool) {
    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut f = q.value(&w);
    let mut g = q.gradient(&w);
    let norm = q.gram.norm();
    let mut step = if norm > 0.0 { 1.0 / (2.0 * norm) } else { 1.0 };
    for it in 1..=MAX_ITERATIONS {
        let d = project_simplex(&(&w - &g * step)) - &w;
        let slope = g.dot(&d);
        if d.amax() == 0.0 || slope >= 0.0 {
            return (w, it, true);
        }
        let curvature = d.dot(&(&q.gram * &d));
        let theta = if curvature > 0.0 {
            (-slope / (2.0 * curvature)).min(1.0)
        } else {
            1.0
        };
        let w_new = &w + &d * theta;
        let f_new = q.value(&w_new);
        let g_new = q.gradient(&w_new);
        let s = &w_new - &w;
        let sy = s.dot(&(&g_new - &g));
        step = if sy > 0.0 {
            (s.norm_squared() / sy).clamp(1e-30, 1e30)
        } else {
            1e30_f64.min(step * 10.0)
        };
        let decrease = f - f_new;
        w = w_new;
        g = g_new;
        let done = f_new <= 0.0 || decrease <= OBJECTIVE_TOL * f.abs();
        f = f_new;
        if done {
            return (w, it, true);
        }
    }
    (w, MAX_ITERATIONS, false)
}

/// Primal active-set refinement started from a feasible point. Each pass solves
/// the sum-to-one problem on the current support, steps back to feasibility if
/// a weight turns negative, and otherwise frees the coordinate with the most
/// negative reduced gradient.
fn active_set_polish(q: &Quadratic<'_>, start: &DVector<f64>) -> Option<(DVector<f64>, usize)> {
    let n = start.len();
    let mut z = start.clone();
    let mut support: Vec<usize> = (0..n).filter(|&i| z[i] > 0.0).collect();
    let max_passes = 10 * n + 20;
    for pass in 1..=max_passes {
        if support.is_empty() {
            return None;
        }
        let sub = q.x.select_columns(&support);
        let v_sub = sum_one_weights(&sub, q.y).ok()?;
        if v_sub.iter().any(|&v| v <= 0.0) {
            // Walk from z toward v until the first support weight hits zero.
            let mut t = 1.0_f64;
            let mut blocking = support[0];
            for (k, &i) in support.iter().enumerate() {
                if v_sub[k] <= 0.0 {
                    let ratio = z[i] / (z[i] - v_sub[k]);
                    if ratio < t {
                        t = ratio;
                        blocking = i;
                    }
                }
            }
            for (k, &i) in support.iter().enumerate() {
                z[i] += t * (v_sub[k] - z[i]);
            }
            z[blocking] = 0.0;
            let blocked: Vec<usize> = support.iter().copied().filter(|&i| z[i] <= 0.0).collect();
            for &i in &blocked {
                z[i] = 0.0;
            }
            support.retain(|i| !blocked.contains(i));
            let total = z.sum();
            if total <= 0.0 {
                return None;
            }
            z /= total;
            continue;
        }
        z.fill(0.0);
        for (k, &i) in support.iter().enumerate() {
            z[i] = v_sub[k];
        }
        let g = q.gradient(&z);
        let nu = support.iter().map(|&i| g[i]).sum::<f64>() / support.len() as f64;
        let tol = 1e-12 * (1.0 + g.amax());
        let entering = (0..n)
            .filter(|i| !support.contains(i))
            .filter(|&i| g[i] < nu - tol)
            .min_by(|&a, &b| g[a].total_cmp(&g[b]));
        match entering {
            Some(j) => {
                support.push(j);
                support.sort_unstable();
            }
            None => return Some((z, pass)),
        }
    }
    None
}

/// Least squares over the probability simplex.
pub fn solve_simplex(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<WeightSolution> {
    check_dims(x, y)?;
    let n = x.ncols();
    let q = Quadratic::new(x, y);
    let (pg, iterations, converged) = projected_gradient(&q, n);
    let mut w = pg;
    let mut passes = 0;
    if let Some((z, k)) = active_set_polish(&q, &w) {
        let (fz, fw) = (q.value(&z), q.value(&w));
        let kz = simplex_kkt(&q.gradient(&z), &z);
        let kw = simplex_kkt(&q.gradient(&w), &w);
        if fz <= fw + 1e-14 * (1.0 + fw) || (kz < kw && fz <= fw + 1e-10 * (1.0 + fw)) {
            w = z;
            passes = k;
        }
    }
    // Clamp and renormalize so the constraints hold exactly on output.
    w.apply(|v| *v = v.max(0.0));
    let total = w.sum();
    w /= total;
    let g = q.gradient(&w);
    let kkt = simplex_kkt(&g, &w);
    let active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    let solution = WeightSolution {
        objective: q.value(&w),
        kkt_residual: kkt,
        weights: w.iter().copied().collect(),
        intercept: None,
        regime: WeightRegime::non_negative(),
        iterations: iterations + passes,
        collinear: collinear(x, &active),
    };
    if !converged && kkt > KKT_TOL {
        return Err(Error::MaxIterations {
            iterations,
            best: Box::new(solution),
        });
    }
    Ok(solution)
}

/// Dispatches on the regime.
pub fn solve(x: &DMatrix<f64>, y: &DVector<f64>, regime: &WeightRegime) -> Result<WeightSolution> {
    match regime.variant {
        RegimeVariant::Unrestricted => solve_unrestricted(x, y, regime.include_intercept),
        RegimeVariant::SignedSumOne => solve_sum_one(x, y),
        RegimeVariant::NonNegativeSumOne => solve_simplex(x, y),
    }
}
