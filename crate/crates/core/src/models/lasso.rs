//! L1-penalized least squares by cyclic coordinate descent.
//!
//! The objective is `sum (y - x'beta)^2 + lambda * sum |beta_j|`, solved on
//! the design exactly as given. [`fit_lasso_centered`] wraps the same solver
//! with an unpenalized intercept via centering, which is what the bandit
//! regressions use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl LassoFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

fn validate(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Result<usize> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::invalid("lasso needs matching, non-empty x and y"));
    }
    let p = xs[0].len();
    if xs.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("ragged design matrix"));
    }
    if xs.iter().flatten().any(|v| !v.is_finite()) || ys.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite values in lasso inputs"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lasso penalty must be non-negative"));
    }
    Ok(p)
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on column-major data, warm-started from `beta`.
fn cd_solve(cols: &[Vec<f64>], ys: &[f64], lambda: f64, beta: &mut [f64]) {
    let p = cols.len();
    let col_norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    // residual r = y - X beta
    let mut r: Vec<f64> = ys.to_vec();
    for j in 0..p {
        if beta[j] != 0.0 {
            for (ri, xij) in r.iter_mut().zip(&cols[j]) {
                *ri -= beta[j] * xij;
            }
        }
    }
    let scale = 1.0 + beta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut tol = 1e-13 * scale;
    for _pass in 0..100_000 {
        let mut max_change = 0.0f64;
        for j in 0..p {
            if col_norms[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let old = beta[j];
            let z = cols[j].iter().zip(&r).map(|(x, ri)| x * ri).sum::<f64>() + col_norms[j] * old;
            let new = soft_threshold(z, lambda / 2.0) / col_norms[j];
            if new != old {
                let delta = new - old;
                for (ri, xij) in r.iter_mut().zip(&cols[j]) {
                    *ri -= delta * xij;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        tol = tol.max(1e-13 * (1.0 + beta.iter().fold(0.0f64, |a, b| a.max(b.abs()))));
        if max_change <= tol {
            break;
        }
    }
}

fn to_columns(xs: &[Vec<f64>], p: usize) -> Vec<Vec<f64>> {
    (0..p).map(|j| xs.iter().map(|r| r[j]).collect()).collect()
}

/// Minimize the stated objective on the given design. The returned intercept
/// is zero; use [`fit_lasso_centered`] for an unpenalized intercept.
pub fn fit_lasso(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Result<LassoFit> {
    let p = validate(xs, ys, lambda)?;
    let cols = to_columns(xs, p);
    let mut beta = vec![0.0; p];
    cd_solve(&cols, ys, lambda, &mut beta);
    Ok(LassoFit { beta, intercept: 0.0, lambda })
}

/// Lasso with an unpenalized intercept: columns and response are centered
/// before the penalized solve, and the intercept is recovered afterwards.
/// Constant feature columns therefore get a zero coefficient.
pub fn fit_lasso_centered(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Result<LassoFit> {
    let p = validate(xs, ys, lambda)?;
    let n = xs.len() as f64;
    let xbar: Vec<f64> = (0..p).map(|j| xs.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let ybar = ys.iter().sum::<f64>() / n;
    let cols: Vec<Vec<f64>> =
        (0..p).map(|j| xs.iter().map(|r| r[j] - xbar[j]).collect()).collect();
    let yc: Vec<f64> = ys.iter().map(|y| y - ybar).collect();
    let mut beta = vec![0.0; p];
    cd_solve(&cols, &yc, lambda, &mut beta);
    let intercept = ybar - beta.iter().zip(&xbar).map(|(b, m)| b * m).sum::<f64>();
    Ok(LassoFit { beta, intercept, lambda })
}

/// Smallest penalty at which the all-zero coefficient vector is optimal:
/// `max_j |2 x_j'y|` (on centered data for the intercept variant).
pub fn lasso_lambda_max(xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
    let p = validate(xs, ys, 0.0)?;
    Ok((0..p)
        .map(|j| 2.0 * xs.iter().zip(ys).map(|(r, y)| r[j] * y).sum::<f64>().abs())
        .fold(0.0, f64::max))
}

/// 20 log-spaced penalties from `lambda_max` down to `lambda_max / 1000`.
fn lambda_path(lambda_max: f64) -> Vec<f64> {
    (0..20).map(|i| lambda_max * 10f64.powf(-3.0 * i as f64 / 19.0)).collect()
}

/// Pick the penalty by k-fold cross-validation (contiguous folds in input
/// order) over the descending lambda path, using centered fits. Ties prefer
/// the larger (sparser) penalty.
pub fn select_lasso_lambda_cv(xs: &[Vec<f64>], ys: &[f64], folds: usize) -> Result<f64> {
    let p = validate(xs, ys, 0.0)?;
    let n = xs.len();
    if folds < 2 || n < folds {
        return Err(Error::invalid(format!("need at least {folds} rows for {folds}-fold CV")));
    }
    let n_f = n as f64;
    let xbar: Vec<f64> = (0..p).map(|j| xs.iter().map(|r| r[j]).sum::<f64>() / n_f).collect();
    let xc: Vec<Vec<f64>> =
        xs.iter().map(|r| r.iter().zip(&xbar).map(|(v, m)| v - m).collect()).collect();
    let ybar = ys.iter().sum::<f64>() / n_f;
    let yc: Vec<f64> = ys.iter().map(|y| y - ybar).collect();
    let lmax = lasso_lambda_max(&xc, &yc)?;
    if lmax == 0.0 {
        return Ok(0.0);
    }
    let path = lambda_path(lmax);
    let mut cv = vec![0.0f64; path.len()];
    for fold in 0..folds {
        let lo = fold * n / folds;
        let hi = (fold + 1) * n / folds;
        let train: Vec<usize> = (0..n).filter(|i| *i < lo || *i >= hi).collect();
        let tx: Vec<Vec<f64>> = train.iter().map(|&i| xs[i].clone()).collect();
        let ty: Vec<f64> = train.iter().map(|&i| ys[i]).collect();
        // warm-start down the path on this fold
        let tn = tx.len() as f64;
        let txbar: Vec<f64> = (0..p).map(|j| tx.iter().map(|r| r[j]).sum::<f64>() / tn).collect();
        let tybar = ty.iter().sum::<f64>() / tn;
        let cols: Vec<Vec<f64>> =
            (0..p).map(|j| tx.iter().map(|r| r[j] - txbar[j]).collect()).collect();
        let tyc: Vec<f64> = ty.iter().map(|y| y - tybar).collect();
        let mut beta = vec![0.0; p];
        for (li, &lambda) in path.iter().enumerate() {
            cd_solve(&cols, &tyc, lambda, &mut beta);
            let intercept =
                tybar - beta.iter().zip(&txbar).map(|(b, m)| b * m).sum::<f64>();
            let mse: f64 = (lo..hi)
                .map(|i| {
                    let pred = intercept
                        + beta.iter().zip(&xs[i]).map(|(b, v)| b * v).sum::<f64>();
                    (ys[i] - pred).powi(2)
                })
                .sum::<f64>()
                / (hi - lo) as f64;
            cv[li] += mse / folds as f64;
        }
    }
    let mut best = 0usize;
    for (i, score) in cv.iter().enumerate() {
        if *score < cv[best] {
            best = i;
        }
    }
    Ok(path[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_feature_soft_threshold_closed_form() {
        // x=(1,1), y=(1,3), lambda=2 -> beta = soft(4, 1) / 2 = 1.5
        let fit = fit_lasso(&[vec![1.0], vec![1.0]], &[1.0, 3.0], 2.0).unwrap();
        assert_abs_diff_eq!(fit.beta[0], 1.5, epsilon = 1e-8);
        assert_eq!(fit.intercept, 0.0);
    }

    #[test]
    fn zero_penalty_recovers_ols() {
        // square full-rank system: exact solve
        let xs = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let ys = vec![2.0, 5.0];
        let fit = fit_lasso(&xs, &ys, 0.0).unwrap();
        assert_abs_diff_eq!(fit.beta[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.beta[1], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn huge_penalty_zeroes_out() {
        let xs = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![1.5, 0.5]];
        let ys = vec![1.0, 2.0, 1.2];
        let fit = fit_lasso(&xs, &ys, 1e9).unwrap();
        assert_eq!(fit.beta, vec![0.0, 0.0]);
    }

    #[test]
    fn centered_fit_zeroes_constant_columns() {
        let xs = vec![vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 3.0], vec![3.0, 4.0]];
        let ys = vec![2.0, 4.0, 6.0, 8.0];
        let fit = fit_lasso_centered(&xs, &ys, 0.0).unwrap();
        assert_eq!(fit.beta[0], 0.0);
        assert_abs_diff_eq!(fit.beta[1], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.predict(&[3.0, 2.5]), 5.0, epsilon = 1e-9);
    }

    fn kkt_residuals(xs: &[Vec<f64>], ys: &[f64], fit: &LassoFit) -> f64 {
        // worst-case violation of the subgradient conditions
        let p = fit.beta.len();
        let r: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - fit.predict(x)).collect();
        let mut worst = 0.0f64;
        for j in 0..p {
            let g = 2.0 * xs.iter().zip(&r).map(|(x, ri)| x[j] * ri).sum::<f64>();
            let v = if fit.beta[j] == 0.0 {
                (g.abs() - fit.lambda).max(0.0)
            } else {
                (g - fit.lambda * fit.beta[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    #[test]
    fn kkt_conditions_hold_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..100 {
            let n = rng.random_range(5..40);
            let p = rng.random_range(1..8);
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let lambda = rng.random_range(0.01..5.0);
            let fit = fit_lasso(&xs, &ys, lambda).unwrap();
            let worst = kkt_residuals(&xs, &ys, &fit);
            assert!(worst <= 1e-6, "case {case}: KKT violation {worst}");
        }
    }

    #[test]
    fn cv_prefers_signal_recovery() {
        // strong linear signal: CV should land on a small penalty and the
        // refit should recover the slope roughly
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let ys: Vec<f64> =
            xs.iter().map(|x| 3.0 * x[0] + rng.random_range(-0.05..0.05)).collect();
        let lambda = select_lasso_lambda_cv(&xs, &ys, 5).unwrap();
        let fit = fit_lasso_centered(&xs, &ys, lambda).unwrap();
        assert!((fit.beta[0] - 3.0).abs() < 0.2, "beta={:?} lambda={lambda}", fit.beta);
        assert!(select_lasso_lambda_cv(&xs[..3], &ys[..3], 5).is_err());
    }
}
