//! Minimum-norm least squares through the SVD.
//!
//! The SVD is a one-sided (Hestenes) Jacobi iteration. It keeps high relative
//! accuracy on exactly rank-deficient designs such as constant series, where
//! the bidiagonal QR route in nalgebra 0.35 returns wrong singular values.

use nalgebra::{DMatrix, DVector};

/// Singular values below `RCOND * sigma_max` are treated as zero.
pub const RCOND: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Lstsq {
    pub x: DVector<f64>,
    pub rank: usize,
    /// True when at least one singular value fell under the cutoff.
    pub rank_deficient: bool,
}

/// Thin SVD pieces kept for reuse by the constrained solvers.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
    pub rank: usize,
}

impl Decomposition {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let cols = a.ncols();
        if a.nrows() == 0 || cols == 0 {
            return Self {
                u: DMatrix::zeros(a.nrows(), 0),
                singular_values: DVector::zeros(0),
                v: DMatrix::zeros(cols, 0),
                rank: 0,
            };
        }
        let (u, s, v) = jacobi_svd(a);
        let smax = s.iter().cloned().fold(0.0, f64::max);
        let cutoff = RCOND * smax;
        let rank = s.iter().filter(|&&v| v > cutoff && v > 0.0).count();
        Self {
            u,
            singular_values: s,
            v,
            rank,
        }
    }

    fn kept(&self) -> impl Iterator<Item = usize> + '_ {
        let smax = self.singular_values.iter().cloned().fold(0.0, f64::max);
        let cutoff = RCOND * smax;
        (0..self.singular_values.len()).filter(move |&k| {
            let s = self.singular_values[k];
            s > cutoff && s > 0.0
        })
    }

    /// `A^+ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.v.nrows());
        for k in self.kept() {
            let coef = self.u.column(k).dot(b) / self.singular_values[k];
            x.axpy(coef, &self.v.column(k), 1.0);
        }
        x
    }

    /// `(A'A)^+ z`.
    pub fn gram_pinv_apply(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.v.nrows());
        for k in self.kept() {
            let s = self.singular_values[k];
            let coef = self.v.column(k).dot(z) / (s * s);
            x.axpy(coef, &self.v.column(k), 1.0);
        }
        x
    }

    /// Component of `z` in the null space of `A`.
    pub fn null_component(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut r = z.clone();
        for k in self.kept() {
            let coef = self.v.column(k).dot(z);
            r.axpy(-coef, &self.v.column(k), 1.0);
        }
        r
    }

    pub fn smallest_singular_value(&self) -> f64 {
        self.singular_values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn largest_singular_value(&self) -> f64 {
        self.singular_values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Thin SVD `A = U diag(s) V'` by one-sided Jacobi rotations on the columns
/// of `A`. Columns of `U` for zero singular values are left at zero.
fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n = a.ncols();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut w, &mut v] {
                    for r in 0..m.nrows() {
                        let (xp, xq) = (m[(r, p)], m[(r, q)]);
                        m[(r, p)] = c * xp - s * xq;
                        m[(r, q)] = s * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s = DVector::from_fn(n, |j, _| w.column(j).norm());
    for j in 0..n {
        if s[j] > 0.0 {
            let sj = s[j];
            w.column_mut(j).scale_mut(1.0 / sj);
        }
    }
    (w, s, v)
}

/// Minimum-norm solution of `min ||A x - b||`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Lstsq {
    let d = Decomposition::new(a);
    let x = d.solve(b);
    Lstsq {
        x,
        rank: d.rank,
        rank_deficient: d.rank < a.ncols(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rank_matches_normal_equations() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 3.0, 2.0, 5.0]);
        let sol = lstsq(&a, &b);
        let ata = a.transpose() * &a;
        let expected = ata.try_inverse().unwrap() * a.transpose() * &b;
        assert!((sol.x - expected).amax() < 1e-12);
        assert_eq!(sol.rank, 2);
        assert!(!sol.rank_deficient);
    }

    #[test]
    fn duplicate_columns_give_minimum_norm() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DVector::from_vec(vec![2.0, 4.0, 6.0]);
        let sol = lstsq(&a, &b);
        assert!(sol.rank_deficient);
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let a = DMatrix::zeros(3, 2);
        let sol = lstsq(&a, &DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert_eq!(sol.rank, 0);
        assert_eq!(sol.x, DVector::zeros(2));
    }
}

#[cfg(test)]
mod svd_tests {
    use super::*;

    #[test]
    fn rank_one_constant_design() {
        for rows in [20, 36, 40] {
            let a = DMatrix::from_fn(rows, 4, |_, c| if c == 0 { 1.0 } else { 5.0 });
            let d = Decomposition::new(&a);
            assert_eq!(d.rank, 1);
            assert!((d.largest_singular_value() - (76.0 * rows as f64).sqrt()).abs() < 1e-10);
            let b = DVector::from_element(rows, 5.0);
            assert!((&a * d.solve(&b) - b).amax() < 1e-12);
        }
    }

    #[test]
    fn reconstructs_wide_matrix() {
        let a = DMatrix::from_fn(3, 5, |r, c| ((r * 7 + c * 3) % 5) as f64 - 1.5);
        let (u, s, v) = jacobi_svd(&a);
        let back = u * DMatrix::from_diagonal(&s) * v.transpose();
        assert!((back - &a).amax() < 1e-12);
    }
}
