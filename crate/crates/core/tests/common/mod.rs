//! Independent reference computations for integration tests. Nothing here
//! calls into the crate's linear algebra.

#![allow(dead_code)]

/// OLS via normal equations and Gauss-Jordan elimination with partial
/// pivoting. `cols` are regressors, each of length `y.len()`.
pub fn ols(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = cols.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = cols[i].iter().zip(&cols[j]).map(|(u, v)| u * v).sum();
        }
        a[i][k] = cols[i].iter().zip(y).map(|(u, v)| u * v).sum();
    }
    for c in 0..k {
        let piv = (c..k)
            .max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs()))
            .unwrap();
        a.swap(c, piv);
        let d = a[c][c];
        assert!(d.abs() > 1e-12, "singular normal equations");
        for v in a[c].iter_mut() {
            *v /= d;
        }
        for r in 0..k {
            if r != c {
                let f = a[r][c];
                for j in 0..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    a.iter().map(|row| row[k]).collect()
}

/// Slope of `y` on `1, t` with a Newey-West (Bartlett) t-statistic.
pub fn trend_slope_t(y: &[f64], lags: usize) -> (f64, f64) {
    let n = y.len() as f64;
    let t: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let slope = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum::<f64>() / sxx;
    let intercept = ym - slope * tm;
    let u: Vec<f64> = t
        .iter()
        .zip(y)
        .map(|(a, b)| (a - tm) * (b - intercept - slope * a))
        .collect();
    let mut s = u.iter().map(|v| v * v).sum::<f64>();
    for l in 1..=lags {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        let g: f64 = u[l..].iter().zip(&u[..u.len() - l]).map(|(a, b)| a * b).sum();
        s += 2.0 * w * g;
    }
    let se = s.sqrt() / sxx;
    (slope, slope / se)
}

pub fn sse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}
