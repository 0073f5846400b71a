//! Ridge regression and the cross-fitted per-arm outcome model.
//!
//! Cross-fitting divides the log chronologically into subsets S_1, S_2, ...;
//! rows in S_m are scored with models fit only on S_1..S_{m-1}, so estimates
//! stay independent of the outcome they correct.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Observation;

/// Solve the penalized normal equations `(X'X + lambda*I) beta = X'y` on the
/// design exactly as given (no intercept, no standardization).
pub fn ridge_closed_form(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let n = xs.len();
    if n == 0 || n != ys.len() {
        return Err(Error::invalid("ridge needs matching, non-empty x and y"));
    }
    let p = xs[0].len();
    if xs.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("ragged design matrix"));
    }
    if lambda < 0.0 {
        return Err(Error::invalid("ridge penalty must be non-negative"));
    }
    let x = DMatrix::from_fn(n, p, |i, j| xs[i][j]);
    let y = DVector::from_column_slice(ys);
    let mut a = x.transpose() * &x;
    for i in 0..p {
        a[(i, i)] += lambda;
    }
    let xty = x.transpose() * y;
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&xty).iter().copied().collect());
    }
    a.lu()
        .solve(&xty)
        .map(|b| b.iter().copied().collect())
        .ok_or_else(|| Error::invalid("singular ridge system (lambda = 0 on rank-deficient design)"))
}

/// Pick the ridge penalty by generalized cross-validation on a centered,
/// standardized design. Returns the grid minimizer.
fn gcv_lambda(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    let xtx = x.transpose() * x;
    let eig = xtx.clone().symmetric_eigen();
    let xty = x.transpose() * y;
    // rotate X'y into the eigenbasis
    let vty = eig.eigenvectors.transpose() * &xty;
    let d_mean = (eig.eigenvalues.iter().sum::<f64>() / eig.eigenvalues.len() as f64).max(1e-12);
    let mut best = (f64::INFINITY, d_mean);
    for i in 0..13 {
        let lambda = d_mean * 10f64.powf(-4.0 + 6.0 * i as f64 / 12.0);
        let coeffs =
            DVector::from_fn(vty.len(), |j, _| vty[j] / (eig.eigenvalues[j] + lambda));
        let beta = &eig.eigenvectors * coeffs;
        let resid = y - x * &beta;
        let rss = resid.dot(&resid);
        let df: f64 = eig.eigenvalues.iter().map(|d| d / (d + lambda)).sum();
        // +1 effective parameter for the intercept handled by centering
        let denom = n - df - 1.0;
        if denom <= 0.0 {
            continue;
        }
        let gcv = n * rss / (denom * denom);
        if gcv < best.0 {
            best = (gcv, lambda);
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ArmPredictor {
    /// No prior data: predict zero.
    Zero,
    /// Too few prior rows for a regression: prior-subset arm mean.
    Mean(f64),
    Ridge { means: Vec<f64>, sds: Vec<f64>, beta: Vec<f64>, intercept: f64, lambda: f64 },
}

impl ArmPredictor {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            ArmPredictor::Zero => 0.0,
            ArmPredictor::Mean(m) => *m,
            ArmPredictor::Ridge { means, sds, beta, intercept, .. } => {
                let mut out = *intercept;
                for j in 0..beta.len() {
                    if sds[j] > 0.0 {
                        out += beta[j] * (x[j] - means[j]) / sds[j];
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossFitConfig {
    pub subset_size: usize,
    /// Fixed ridge penalty; `None` selects by GCV per (subset, arm) fit.
    pub ridge_lambda: Option<f64>,
}

impl Default for CrossFitConfig {
    fn default() -> Self {
        CrossFitConfig { subset_size: 50, ridge_lambda: None }
    }
}

/// Cross-fitted per-arm outcome model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFitMuHat {
    subset_size: usize,
    n_rows: usize,
    predictors: Vec<Vec<ArmPredictor>>, // [subset][arm]
}

impl CrossFitMuHat {
    pub fn subset_of(&self, row: usize) -> usize {
        row / self.subset_size
    }

    pub fn n_subsets(&self) -> usize {
        self.predictors.len()
    }

    /// Estimate for row `row` (which determines the training window) at
    /// context `x` under arm `arm`.
    pub fn predict(&self, row: usize, x: &[f64], arm: usize) -> f64 {
        self.predictors[self.subset_of(row)][arm].predict(x)
    }
}

/// Fit the cross-fitted model: for each subset, per-arm ridge regressions on
/// all prior-subset rows of that arm. Arms with fewer than p+1 prior rows fall
/// back to the prior arm mean; arms with no prior rows predict zero. Subset
/// S_1 always predicts zero.
pub fn fit_crossfit_mu(rows: &[Observation], k: usize, cfg: &CrossFitConfig) -> Result<CrossFitMuHat> {
    if cfg.subset_size == 0 {
        return Err(Error::invalid("subset size must be at least 1"));
    }
    if rows.is_empty() {
        return Err(Error::invalid("cannot cross-fit an empty log"));
    }
    let p = rows[0].context.len();
    let n_subsets = rows.len().div_ceil(cfg.subset_size);
    let mut predictors = Vec::with_capacity(n_subsets);
    for m in 0..n_subsets {
        let prior = &rows[..m * cfg.subset_size];
        let mut per_arm = Vec::with_capacity(k);
        for arm in 0..k {
            let arm_rows: Vec<&Observation> = prior.iter().filter(|o| o.arm == arm).collect();
            per_arm.push(fit_arm_predictor(&arm_rows, p, cfg)?);
        }
        predictors.push(per_arm);
    }
    Ok(CrossFitMuHat { subset_size: cfg.subset_size, n_rows: rows.len(), predictors })
}

fn fit_arm_predictor(rows: &[&Observation], p: usize, cfg: &CrossFitConfig) -> Result<ArmPredictor> {
    let n = rows.len();
    if n == 0 {
        return Ok(ArmPredictor::Zero);
    }
    let ybar = rows.iter().map(|o| o.outcome).sum::<f64>() / n as f64;
    if n < p + 1 {
        return Ok(ArmPredictor::Mean(ybar));
    }
    // standardize columns, center the response
    let mut means = vec![0.0; p];
    for o in rows {
        for j in 0..p {
            means[j] += o.context[j];
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    let mut sds = vec![0.0; p];
    for o in rows {
        for j in 0..p {
            let d = o.context[j] - means[j];
            sds[j] += d * d;
        }
    }
    for s in sds.iter_mut() {
        *s = (*s / n as f64).sqrt();
    }
    let x = DMatrix::from_fn(n, p, |i, j| {
        if sds[j] > 0.0 {
            (rows[i].context[j] - means[j]) / sds[j]
        } else {
            0.0
        }
    });
    let y = DVector::from_fn(n, |i, _| rows[i].outcome - ybar);
    let lambda = cfg.ridge_lambda.unwrap_or_else(|| gcv_lambda(&x, &y));
    let xs: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let ys: Vec<f64> = y.iter().copied().collect();
    let beta = ridge_closed_form(&xs, &ys, lambda)?;
    Ok(ArmPredictor::Ridge { means, sds, beta, intercept: ybar, lambda })
}
