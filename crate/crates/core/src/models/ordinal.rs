//! Penalized proportional-odds ordinal regression and the (context, arm)
//! feature map used by the semi-synthetic outcome model.
//!
//! The cumulative model is `P(Y <= j | x) = sigmoid(theta_j - x'beta)` with
//! strictly increasing thresholds; fitting maximizes the log-likelihood minus
//! `lambda * ||beta||^2`. Thresholds play the role of intercepts and are not
//! penalized.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::lbfgs::{self, LbfgsOptions};

/// Length of [`ordinal_feature_map`] output for p covariates and K arms.
pub fn ordinal_feature_dim(p: usize, k: usize) -> usize {
    2 * p + (k - 1) + p * (k - 1)
}

/// Covariates, their squares, K-1 treatment dummies (arm 0 is the baseline),
/// and covariate-by-dummy interactions, in that fixed order. Interactions are
/// grouped dummy-major.
pub fn ordinal_feature_map(x: &[f64], arm: usize, k: usize) -> Vec<f64> {
    let p = x.len();
    let mut out = Vec::with_capacity(ordinal_feature_dim(p, k));
    out.extend_from_slice(x);
    out.extend(x.iter().map(|v| v * v));
    for d in 1..k {
        out.push(if arm == d { 1.0 } else { 0.0 });
    }
    for d in 1..k {
        let ind = if arm == d { 1.0 } else { 0.0 };
        out.extend(x.iter().map(|v| v * ind));
    }
    out
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Penalized negative log-likelihood and its gradient in the original
/// (thresholds, beta) parameterization. The gradient vector is laid out as
/// [d/d theta_1 .. d/d theta_{L-1}, d/d beta_1 ..].
pub fn penalized_nll_grad(
    thresholds: &[f64],
    beta: &[f64],
    features: &[Vec<f64>],
    levels: &[usize],
    lambda: f64,
    n_levels: usize,
) -> (f64, Vec<f64>) {
    let m = thresholds.len();
    debug_assert_eq!(m, n_levels - 1);
    let p = beta.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; m + p];
    for (x, &level) in features.iter().zip(levels) {
        let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        let j = level - 1; // 0-based class
        // cumulative terms bracketing class j: sigma_hi = P(Y <= j+1), sigma_lo = P(Y <= j)
        let (s_hi, d_hi) = if j < m {
            let s = sigmoid(thresholds[j] - eta);
            (s, s * (1.0 - s))
        } else {
            (1.0, 0.0)
        };
        let (s_lo, d_lo) = if j > 0 {
            let s = sigmoid(thresholds[j - 1] - eta);
            (s, s * (1.0 - s))
        } else {
            (0.0, 0.0)
        };
        let prob = (s_hi - s_lo).max(1e-300);
        value -= prob.ln();
        // d nll / d theta_j = -d_hi / prob ; d nll / d theta_{j-1} = +d_lo / prob
        if j < m {
            grad[j] -= d_hi / prob;
        }
        if j > 0 {
            grad[j - 1] += d_lo / prob;
        }
        // d nll / d eta = (d_hi - d_lo) / prob ; eta = x'beta
        let deta = (d_hi - d_lo) / prob;
        for (g, xv) in grad[m..].iter_mut().zip(x) {
            *g += deta * xv;
        }
    }
    for (g, b) in grad[m..].iter_mut().zip(beta) {
        *g += 2.0 * lambda * b;
    }
    value += lambda * beta.iter().map(|b| b * b).sum::<f64>();
    (value, grad)
}

/// A fitted proportional-odds model over generic feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionalOdds {
    pub thresholds: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub n_levels: usize,
    /// Euclidean gradient norm at the solution (diagnostic).
    pub grad_norm: f64,
}

impl ProportionalOdds {
    /// Class probabilities over the L levels at a feature vector.
    pub fn class_probabilities(&self, features: &[f64]) -> Vec<f64> {
        let eta: f64 = features.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        let mut out = Vec::with_capacity(self.n_levels);
        let mut prev = 0.0;
        for theta in &self.thresholds {
            let c = sigmoid(theta - eta);
            out.push((c - prev).max(0.0));
            prev = c;
        }
        out.push((1.0 - prev).max(0.0));
        out
    }
}

/// Fit a proportional-odds model on (feature vector, level) pairs with levels
/// in 1..=n_levels. Optimization runs in a reparameterized space that keeps
/// thresholds strictly increasing; convergence is checked on the gradient in
/// the original parameterization.
pub fn fit_ordinal(
    features: &[Vec<f64>],
    levels: &[usize],
    lambda: f64,
    n_levels: usize,
) -> Result<ProportionalOdds> {
    if features.is_empty() || features.len() != levels.len() {
        return Err(Error::invalid("ordinal fit needs matching, non-empty features and levels"));
    }
    if n_levels < 2 {
        return Err(Error::invalid("need at least two outcome levels"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("ordinal penalty must be positive"));
    }
    let p = features[0].len();
    if features.iter().any(|f| f.len() != p) {
        return Err(Error::invalid("ragged feature matrix"));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    if levels.iter().any(|&l| l < 1 || l > n_levels) {
        return Err(Error::invalid(format!("levels must lie in 1..={n_levels}")));
    }
    let m = n_levels - 1;

    // Initialize thresholds at the logits of the empirical cumulative shares.
    let mut counts = vec![0usize; n_levels];
    for &l in levels {
        counts[l - 1] += 1;
    }
    let n = levels.len() as f64;
    let mut theta0 = Vec::with_capacity(m);
    let mut cum = 0.0;
    for count in counts.iter().take(m) {
        cum += *count as f64 / n;
        let c = cum.clamp(1e-3, 1.0 - 1e-3);
        let mut t = (c / (1.0 - c)).ln();
        if let Some(&prev) = theta0.last() {
            if t <= prev + 1e-4 {
                t = prev + 1e-4;
            }
        }
        theta0.push(t);
    }

    // Reparameterize: theta_1 = a_1, theta_j = theta_{j-1} + exp(a_j).
    let mut z0 = Vec::with_capacity(m + p);
    z0.push(theta0[0]);
    for j in 1..m {
        z0.push((theta0[j] - theta0[j - 1]).ln());
    }
    z0.extend(std::iter::repeat_n(0.0, p));

    let unpack = |z: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut thresholds = Vec::with_capacity(m);
        let mut t = z[0];
        thresholds.push(t);
        for zj in z.iter().take(m).skip(1) {
            t += zj.exp();
            thresholds.push(t);
        }
        (thresholds, z[m..].to_vec())
    };

    let objective = |z: &[f64]| -> (f64, Vec<f64>) {
        let (thresholds, beta) = unpack(z);
        let (value, grad_orig) =
            penalized_nll_grad(&thresholds, &beta, features, levels, lambda, n_levels);
        // Chain rule into the reparameterized space:
        // d/d a_1 = sum_j d/d theta_j; d/d a_j = exp(a_j) * sum_{i >= j} d/d theta_i.
        let mut grad = vec![0.0; m + p];
        let mut suffix = 0.0;
        for j in (0..m).rev() {
            suffix += grad_orig[j];
            grad[j] = if j == 0 { suffix } else { z[j].exp() * suffix };
        }
        grad[m..].copy_from_slice(&grad_orig[m..]);
        (value, grad)
    };

    let mut result = lbfgs::minimize(
        &objective,
        z0,
        &LbfgsOptions { memory: 12, max_iters: 600, grad_tol: 1e-8 },
    );
    // The contract is on the original-space gradient; polish if needed.
    let mut tries = 0;
    loop {
        let (thresholds, beta) = unpack(&result.x);
        let (_, grad_orig) =
            penalized_nll_grad(&thresholds, &beta, features, levels, lambda, n_levels);
        let grad_norm = grad_orig.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm <= 1e-6 || tries >= 3 {
            if grad_norm > 1e-6 {
                return Err(Error::NoConvergence(format!(
                    "ordinal fit gradient norm {grad_norm:.2e} after {} iterations",
                    result.iterations
                )));
            }
            return Ok(ProportionalOdds { thresholds, beta, lambda, n_levels, grad_norm });
        }
        result = lbfgs::minimize(
            &objective,
            result.x,
            &LbfgsOptions { memory: 12, max_iters: 2000, grad_tol: 1e-9 },
        );
        tries += 1;
    }
}

/// The semi-synthetic outcome model: a proportional-odds fit over the
/// (standardized covariates, arm) feature map, plus the level-to-value grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalModel {
    pub fit: ProportionalOdds,
    pub p: usize,
    pub k: usize,
    pub covariate_means: Vec<f64>,
    pub covariate_sds: Vec<f64>,
    /// Outcome value for each level, evenly spaced over the outcome range.
    pub level_values: Vec<f64>,
}

impl OrdinalModel {
    /// Fit on (context, arm, level) triples. Covariates are standardized to
    /// zero mean and unit variance before entering the feature map.
    pub fn fit(
        contexts: &[Vec<f64>],
        arms: &[usize],
        levels: &[usize],
        k: usize,
        lambda: f64,
        n_levels: usize,
        outcome_range: (f64, f64),
    ) -> Result<OrdinalModel> {
        if contexts.is_empty() || contexts.len() != arms.len() || contexts.len() != levels.len() {
            return Err(Error::invalid("ordinal outcome model needs aligned non-empty inputs"));
        }
        let p = contexts[0].len();
        let n = contexts.len() as f64;
        let mut means = vec![0.0; p];
        for x in contexts {
            for j in 0..p {
                means[j] += x[j];
            }
        }
        for v in means.iter_mut() {
            *v /= n;
        }
        let mut sds = vec![0.0; p];
        for x in contexts {
            for j in 0..p {
                let d = x[j] - means[j];
                sds[j] += d * d;
            }
        }
        for v in sds.iter_mut() {
            *v = (*v / n).sqrt();
        }
        let model = OrdinalModel {
            fit: ProportionalOdds {
                thresholds: vec![],
                beta: vec![],
                lambda,
                n_levels,
                grad_norm: f64::NAN,
            },
            p,
            k,
            covariate_means: means,
            covariate_sds: sds,
            level_values: level_grid(outcome_range, n_levels),
        };
        let features: Vec<Vec<f64>> = contexts
            .iter()
            .zip(arms)
            .map(|(x, &w)| ordinal_feature_map(&model.standardize(x), w, k))
            .collect();
        let fit = fit_ordinal(&features, levels, lambda, n_levels)?;
        Ok(OrdinalModel { fit, ..model })
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.covariate_means.iter().zip(&self.covariate_sds))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    pub fn class_probabilities(&self, x: &[f64], arm: usize) -> Vec<f64> {
        let features = ordinal_feature_map(&self.standardize(x), arm, self.k);
        self.fit.class_probabilities(&features)
    }

    /// Probability-weighted mean outcome: the exact conditional mean under
    /// the model, used as ground truth for regret accounting.
    pub fn conditional_mean(&self, x: &[f64], arm: usize) -> f64 {
        self.class_probabilities(x, arm)
            .iter()
            .zip(&self.level_values)
            .map(|(p, v)| p * v)
            .sum()
    }

    /// Draw an outcome value from the model's categorical distribution.
    pub fn sample_outcome<R: Rng>(&self, x: &[f64], arm: usize, rng: &mut R) -> f64 {
        let probs = self.class_probabilities(x, arm);
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (p, v) in probs.iter().zip(&self.level_values) {
            cum += p;
            if u < cum {
                return *v;
            }
        }
        *self.level_values.last().unwrap()
    }
}

/// Evenly spaced level values over the outcome range; for 21 levels on
/// [-10, 10] this is the integer grid.
pub fn level_grid(outcome_range: (f64, f64), n_levels: usize) -> Vec<f64> {
    let (lo, hi) = outcome_range;
    (0..n_levels)
        .map(|j| lo + (hi - lo) * j as f64 / (n_levels - 1) as f64)
        .collect()
}

/// Map an on-grid outcome value back to its 1-based level.
pub fn level_of_outcome(y: f64, outcome_range: (f64, f64), n_levels: usize) -> Result<usize> {
    let (lo, hi) = outcome_range;
    let pos = (y - lo) / (hi - lo) * (n_levels - 1) as f64;
    let level = pos.round();
    if (pos - level).abs() > 1e-9 || level < 0.0 || level >= n_levels as f64 {
        return Err(Error::invalid(format!("outcome {y} is not on the {n_levels}-level grid")));
    }
    Ok(level as usize + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn feature_map_shape_and_injectivity() {
        // p=2, K=3 -> 2 + 2 + 2 + 4 = 10
        let x = [1.5, -2.0];
        let f = ordinal_feature_map(&x, 0, 3);
        assert_eq!(f.len(), 10);
        assert_eq!(f.len(), ordinal_feature_dim(2, 3));
        // baseline arm with zero covariates maps to all zeros
        assert!(ordinal_feature_map(&[0.0, 0.0], 0, 3).iter().all(|v| *v == 0.0));
        // arm identity is visible in the dummy block even with fixed covariates
        let f1 = ordinal_feature_map(&x, 1, 3);
        let f2 = ordinal_feature_map(&x, 2, 3);
        assert_ne!(f, f1);
        assert_ne!(f1, f2);
        assert_eq!(f[..4], f1[..4]);
    }

    #[test]
    fn class_probabilities_reference_point() {
        // beta = 0, L = 3, thresholds (0, 1): (0.5, 0.2311, 0.2689)
        let model = ProportionalOdds {
            thresholds: vec![0.0, 1.0],
            beta: vec![0.0, 0.0],
            lambda: 1.0,
            n_levels: 3,
            grad_norm: 0.0,
        };
        let p = model.class_probabilities(&[3.0, -1.0]);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(p[1], 0.2311, epsilon = 1e-4);
        assert_abs_diff_eq!(p[2], 0.2689, epsilon = 1e-4);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        p: usize,
        l: usize,
    ) -> (Vec<Vec<f64>>, Vec<usize>) {
        let features: Vec<Vec<f64>> =
            (0..n).map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let levels: Vec<usize> = (0..n).map(|_| rng.random_range(1..=l)).collect();
        (features, levels)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _case in 0..50 {
            let p = rng.random_range(1..4);
            let l = rng.random_range(3..6);
            let (features, levels) = random_instance(&mut rng, 30, p, l);
            let lambda = rng.random_range(0.1..2.0);
            let mut thresholds: Vec<f64> = Vec::new();
            let mut t = rng.random_range(-1.0..0.0);
            for _ in 0..l - 1 {
                thresholds.push(t);
                t += rng.random_range(0.2..1.0);
            }
            let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, grad) =
                penalized_nll_grad(&thresholds, &beta, &features, &levels, lambda, l);
            let m = thresholds.len();
            let eval = |th: &[f64], b: &[f64]| {
                penalized_nll_grad(th, b, &features, &levels, lambda, l).0
            };
            for i in 0..m + p {
                let mut th_p = thresholds.clone();
                let mut th_m = thresholds.clone();
                let mut b_p = beta.clone();
                let mut b_m = beta.clone();
                if i < m {
                    th_p[i] += h;
                    th_m[i] -= h;
                } else {
                    b_p[i - m] += h;
                    b_m[i - m] -= h;
                }
                let fd = (eval(&th_p, &b_p) - eval(&th_m, &b_m)) / (2.0 * h);
                let denom = grad[i].abs().max(1.0);
                assert!(
                    ((grad[i] - fd) / denom).abs() <= 1e-4,
                    "component {i}: analytic {} vs fd {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn fit_converges_and_larger_penalty_shrinks_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200;
        let features: Vec<Vec<f64>> =
            (0..n).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let levels: Vec<usize> = features
            .iter()
            .map(|x| {
                let latent = 1.5 * x[0] + rng.random_range(-1.0..1.0);
                if latent < -1.0 {
                    1
                } else if latent < 1.0 {
                    2
                } else {
                    3
                }
            })
            .collect();
        let mut prev_norm = f64::INFINITY;
        for lambda in [10.0, 50.0, 100.0, 500.0] {
            let fit = fit_ordinal(&features, &levels, lambda, 3).unwrap();
            assert!(fit.grad_norm <= 1e-6);
            assert!(fit.thresholds.windows(2).all(|w| w[0] < w[1]));
            let norm: f64 = fit.beta.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(norm < prev_norm, "lambda={lambda}: {norm} !< {prev_norm}");
            prev_norm = norm;
        }
    }

    #[test]
    fn probabilities_are_a_distribution_with_monotone_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (features, levels) = random_instance(&mut rng, 120, 2, 5);
        let fit = fit_ordinal(&features, &levels, 1.0, 5).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let f = ordinal_feature_map(&x, 0, 1);
            let probs = fit.class_probabilities(&f);
            assert_abs_diff_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            let mut cum = 0.0;
            let mut prev = 0.0;
            for p in &probs {
                assert!(*p >= 0.0);
                cum += p;
                assert!(cum >= prev - 1e-12);
                prev = cum;
            }
        }
    }

    #[test]
    fn sampling_matches_model_frequencies() {
        let model = OrdinalModel {
            fit: ProportionalOdds {
                thresholds: vec![-0.5, 0.8],
                beta: vec![0.4, 0.0, -0.2, 0.1],
                lambda: 1.0,
                n_levels: 3,
                grad_norm: 0.0,
            },
            p: 1,
            k: 2,
            covariate_means: vec![0.0],
            covariate_sds: vec![1.0],
            level_values: level_grid((-10.0, 10.0), 3),
        };
        let x = vec![0.7];
        let probs = model.class_probabilities(&x, 1);
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = vec![0usize; 3];
        for _ in 0..n {
            let y = model.sample_outcome(&x, 1, &mut rng);
            let level = level_of_outcome(y, (-10.0, 10.0), 3).unwrap();
            counts[level - 1] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let freq = *c as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * se.max(1e-9),
                "freq {freq} vs prob {p} (se {se})"
            );
        }
        // conditional mean equals the probability-weighted level sum
        let mean = model.conditional_mean(&x, 1);
        let expect: f64 =
            probs.iter().zip(&model.level_values).map(|(p, v)| p * v).sum();
        assert_abs_diff_eq!(mean, expect, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_model_always_returns_top_level() {
        // enormous negative thresholds push all mass to the last level
        let model = OrdinalModel {
            fit: ProportionalOdds {
                thresholds: vec![-200.0, -100.0],
                beta: vec![0.0, 0.0, 0.0, 0.0],
                lambda: 1.0,
                n_levels: 3,
                grad_norm: 0.0,
            },
            p: 1,
            k: 2,
            covariate_means: vec![0.0],
            covariate_sds: vec![1.0],
            level_values: level_grid((-10.0, 10.0), 3),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(model.sample_outcome(&[0.0], 0, &mut rng), 10.0);
        }
    }

    #[test]
    fn level_grid_is_the_survey_integer_scale() {
        let g = level_grid((-10.0, 10.0), 21);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], -10.0);
        assert_eq!(g[10], 0.0);
        assert_eq!(g[20], 10.0);
        assert_eq!(level_of_outcome(-10.0, (-10.0, 10.0), 21).unwrap(), 1);
        assert_eq!(level_of_outcome(10.0, (-10.0, 10.0), 21).unwrap(), 21);
        assert!(level_of_outcome(0.5, (-10.0, 10.0), 21).is_err());
    }
}
