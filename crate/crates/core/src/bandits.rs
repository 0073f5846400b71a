//! Batch assignment algorithms behind a uniform interface: given the log so
//! far and a batch of new contexts, emit a propensity row per context.
//!
//! Five algorithms are provided: uniform randomization, tree bagging with a
//! decaying probability floor, and three bootstrap-Thompson variants (plain,
//! exploration sampling, top-two). The first batch of any experiment is
//! assigned uniformly. All stochastic steps draw from streams derived from
//! (seed, batch, purpose, replicate index), so identical inputs produce
//! identical propensities regardless of worker count.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::models::lasso::{fit_lasso_centered, select_lasso_lambda_cv, LassoFit};
use crate::models::ridge::{fit_crossfit_mu, CrossFitConfig};
use crate::policy::{Policy, TreePolicy};
use crate::scores::{aipw_scores, apply_probability_floor, floor_schedule, AipwScoreTable};
use crate::seed::{purpose, SeedStream};
use crate::tree::solve_tree;
use crate::types::{Observation, ObservationLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Uniform,
    TreeBagging,
    BootstrapThompson,
    BootstrapEs,
    BootstrapTtts,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Uniform => "Uniform",
            Algorithm::TreeBagging => "TreeBagging",
            Algorithm::BootstrapThompson => "BootstrapThompson",
            Algorithm::BootstrapEs => "BootstrapES",
            Algorithm::BootstrapTtts => "BootstrapTTTS",
        }
    }
}

fn default_ensemble_size() -> usize {
    50
}
fn default_floor_alpha() -> f64 {
    1.0 / 16.0
}
fn default_bootstrap_fits() -> usize {
    50
}
fn default_posterior_draws() -> usize {
    1000
}
fn default_top_two_beta() -> f64 {
    0.5
}
fn default_min_propensity() -> f64 {
    1e-3
}
fn default_batch_size() -> usize {
    150
}
fn default_ensemble_depth() -> usize {
    2
}
fn default_threshold_budget() -> usize {
    16
}
fn default_subset_size() -> usize {
    50
}

/// Algorithm choice plus tuning parameters, readable from a JSON config file.
/// Defaults follow the experiment's deployed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub algorithm: Algorithm,
    /// S: tree-bagging ensemble size.
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    /// Decay exponent of the assignment-probability floor.
    #[serde(default = "default_floor_alpha")]
    pub floor_alpha: f64,
    /// M: bootstrap regression fits for the Thompson variants.
    #[serde(default = "default_bootstrap_fits")]
    pub bootstrap_fits: usize,
    /// N: posterior draws per context for the Thompson variants.
    #[serde(default = "default_posterior_draws")]
    pub posterior_draws: usize,
    /// Top-two mixing weight.
    #[serde(default = "default_top_two_beta")]
    pub top_two_beta: f64,
    /// Propensity clip for the Thompson variants (tree bagging uses the
    /// decaying floor instead).
    #[serde(default = "default_min_propensity")]
    pub min_propensity: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Maximal depth of the in-loop ensemble policies.
    #[serde(default = "default_ensemble_depth")]
    pub ensemble_depth: usize,
    /// Candidate-threshold budget per feature for tree search.
    #[serde(default = "default_threshold_budget")]
    pub threshold_budget: usize,
    /// Cross-fitting subset size for in-loop AIPW scores.
    #[serde(default = "default_subset_size")]
    pub subset_size: usize,
    /// Fixed L1 penalty for the Thompson regressions; `None` selects by
    /// 5-fold CV on each arm's current data every batch.
    #[serde(default)]
    pub lasso_lambda: Option<f64>,
}

impl BanditConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        BanditConfig {
            algorithm,
            ensemble_size: default_ensemble_size(),
            floor_alpha: default_floor_alpha(),
            bootstrap_fits: default_bootstrap_fits(),
            posterior_draws: default_posterior_draws(),
            top_two_beta: default_top_two_beta(),
            min_propensity: default_min_propensity(),
            batch_size: default_batch_size(),
            seed: 0,
            ensemble_depth: default_ensemble_depth(),
            threshold_budget: default_threshold_budget(),
            subset_size: default_subset_size(),
            lasso_lambda: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 || self.bootstrap_fits == 0 || self.posterior_draws == 0 {
            return Err(Error::invalid("S, M, and N must all be at least 1"));
        }
        if !(self.floor_alpha > 0.0) {
            return Err(Error::invalid("floor exponent must be positive"));
        }
        if !(0.0..=1.0).contains(&self.top_two_beta) {
            return Err(Error::invalid("top-two beta must lie in [0, 1]"));
        }
        if !(self.min_propensity >= 0.0) {
            return Err(Error::invalid("min propensity must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.subset_size == 0 {
            return Err(Error::invalid("cross-fitting subset size must be at least 1"));
        }
        Ok(())
    }
}

/// Propensities for a batch, plus the policy ensemble that produced them when
/// the algorithm is tree bagging (needed later for frequency scores).
#[derive(Debug, Clone)]
pub struct BatchAssignment {
    pub propensities: Vec<Vec<f64>>,
    pub ensemble: Option<Vec<TreePolicy>>,
}

/// Equal-probability assignment: every entry is 1/K.
pub fn uniform_assign(n_contexts: usize, k: usize) -> Result<Vec<Vec<f64>>> {
    if k < 2 {
        return Err(Error::invalid("uniform assignment needs K >= 2"));
    }
    Ok(vec![vec![1.0 / k as f64; k]; n_contexts])
}

/// Compute the batch's propensities under the configured algorithm.
/// `batch_index` is 1-based; the first batch (or an empty log) is uniform.
pub fn assign_batch(
    log: &ObservationLog,
    contexts: &[Vec<f64>],
    cfg: &BanditConfig,
    batch_index: usize,
) -> Result<BatchAssignment> {
    cfg.validate()?;
    let k = log.arms().k();
    for x in contexts {
        log.schema().validate_context(x)?;
    }
    if cfg.min_propensity > 1.0 / k as f64 {
        return Err(Error::invalid("min propensity exceeds 1/K"));
    }
    if log.is_empty() || matches!(cfg.algorithm, Algorithm::Uniform) {
        return Ok(BatchAssignment { propensities: uniform_assign(contexts.len(), k)?, ensemble: None });
    }
    let stream = SeedStream::new(cfg.seed).child(batch_index as u64);
    match cfg.algorithm {
        Algorithm::Uniform => unreachable!(),
        Algorithm::TreeBagging => treebagging_assign(log, contexts, cfg, stream),
        Algorithm::BootstrapThompson | Algorithm::BootstrapEs | Algorithm::BootstrapTtts => {
            thompson_family_assign(log, contexts, cfg, stream)
        }
    }
}

/// Fit the bagging ensemble: cross-fitted AIPW scores over all arms, then
/// one exact tree per bootstrap resample of (contexts, score rows).
pub fn fit_bagging_ensemble(
    rows: &[Observation],
    k: usize,
    cfg: &BanditConfig,
    stream: SeedStream,
) -> Result<Vec<TreePolicy>> {
    let crossfit = fit_crossfit_mu(
        rows,
        k,
        &CrossFitConfig { subset_size: cfg.subset_size, ridge_lambda: None },
    )?;
    let eligible: Vec<usize> = (0..k).collect();
    let mu: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(i, o)| (0..k).map(|w| crossfit.predict(i, &o.context, w)).collect())
        .collect();
    let props: Vec<Vec<f64>> = rows.iter().map(|o| o.propensities.clone()).collect();
    let scores = aipw_scores(rows, &eligible, &mu, &props)?;
    let contexts: Vec<Vec<f64>> = rows.iter().map(|o| o.context.clone()).collect();

    let n = rows.len();
    let boot = stream.child(purpose::BOOTSTRAP);
    let fits = exec::par_map_indexed(cfg.ensemble_size, |s| {
        let mut rng = boot.child(s as u64).rng();
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let bctx: Vec<Vec<f64>> = idx.iter().map(|&i| contexts[i].clone()).collect();
        let brows: Vec<Vec<f64>> = idx.iter().map(|&i| scores.rows()[i].clone()).collect();
        let btable = AipwScoreTable::new(eligible.clone(), brows)?;
        solve_tree(&btable, &bctx, cfg.ensemble_depth, cfg.threshold_budget)
    });
    fits.into_iter().collect()
}

fn treebagging_assign(
    log: &ObservationLog,
    contexts: &[Vec<f64>],
    cfg: &BanditConfig,
    stream: SeedStream,
) -> Result<BatchAssignment> {
    let k = log.arms().k();
    let ensemble = fit_bagging_ensemble(log.rows(), k, cfg, stream)?;
    let t_first = log.len() + 1;
    let floor = floor_schedule(t_first, cfg.floor_alpha, k)?;
    let (distinct, index_of) = dedup_contexts(contexts);
    let mut distinct_rows = Vec::with_capacity(distinct.len());
    for x in &distinct {
        let mut votes = vec![0usize; k];
        for policy in &ensemble {
            votes[policy.assign(x)] += 1;
        }
        let raw: Vec<f64> =
            votes.iter().map(|v| *v as f64 / cfg.ensemble_size as f64).collect();
        distinct_rows.push(apply_probability_floor(&raw, floor)?);
    }
    let propensities = index_of.iter().map(|&i| distinct_rows[i].clone()).collect();
    Ok(BatchAssignment { propensities, ensemble: Some(ensemble) })
}

/// Deduplicate contexts by exact value, preserving first-occurrence order.
fn dedup_contexts(contexts: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    let mut index_of = Vec::with_capacity(contexts.len());
    let mut seen: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    for x in contexts {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        let idx = *seen.entry(key).or_insert_with(|| {
            distinct.push(x.clone());
            distinct.len() - 1
        });
        index_of.push(idx);
    }
    (distinct, index_of)
}

/// Posterior mean/variance of the expected reward per arm at one context,
/// aggregated across bootstrap fits. Arms absent from every bootstrap sample
/// default to mean 0, variance 1 to keep exploration alive.
fn arm_moments(fits: &[Vec<Option<LassoFit>>], x_std: &[f64], k: usize) -> Vec<(f64, f64)> {
    (0..k)
        .map(|w| {
            let preds: Vec<f64> =
                fits.iter().filter_map(|per_arm| per_arm[w].as_ref()).map(|f| f.predict(x_std)).collect();
            if preds.is_empty() {
                return (0.0, 1.0);
            }
            let m = preds.iter().sum::<f64>() / preds.len() as f64;
            let var = preds.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / preds.len() as f64;
            (m, var)
        })
        .collect()
}

/// Monte-Carlo tallies over N joint draws: p[w] is how often arm w's draw is
/// largest; q[w] how often it is largest among the remaining arms. Exact ties
/// go to the lower arm index.
fn thompson_tally<R: Rng>(
    moments: &[(f64, f64)],
    n_draws: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let k = moments.len();
    let dists: Vec<Option<Normal<f64>>> = moments
        .iter()
        .map(|&(m, v)| if v > 0.0 { Some(Normal::new(m, v.sqrt()).unwrap()) } else { None })
        .collect();
    let mut first = vec![0u32; k];
    let mut second = vec![0u32; k];
    let mut draw = vec![0.0f64; k];
    for _ in 0..n_draws {
        for w in 0..k {
            draw[w] = match &dists[w] {
                Some(d) => d.sample(rng),
                None => moments[w].0,
            };
        }
        let mut best = 0usize;
        for w in 1..k {
            if draw[w] > draw[best] {
                best = w;
            }
        }
        first[best] += 1;
        let mut runner = usize::MAX;
        for w in 0..k {
            if w != best && (runner == usize::MAX || draw[w] > draw[runner]) {
                runner = w;
            }
        }
        second[runner] += 1;
    }
    let p = first.iter().map(|c| *c as f64 / n_draws as f64).collect();
    let q = second.iter().map(|c| *c as f64 / n_draws as f64).collect();
    (p, q)
}

fn thompson_family_assign(
    log: &ObservationLog,
    contexts: &[Vec<f64>],
    cfg: &BanditConfig,
    stream: SeedStream,
) -> Result<BatchAssignment> {
    let k = log.arms().k();
    let rows = log.rows();
    let n = rows.len();
    let p = log.schema().p();

    // Standardize covariates on the current log.
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
    let standardize = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(means.iter().zip(&sds))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    };
    let x_std: Vec<Vec<f64>> = rows.iter().map(|o| standardize(&o.context)).collect();
    let ys: Vec<f64> = rows.iter().map(|o| o.outcome).collect();

    // Penalty per arm: configured, or 5-fold CV on the arm's current data.
    let mut lambdas = vec![0.0f64; k];
    for w in 0..k {
        let arm_idx: Vec<usize> = (0..n).filter(|&i| rows[i].arm == w).collect();
        lambdas[w] = match cfg.lasso_lambda {
            Some(l) => l,
            None if arm_idx.len() >= 5 => {
                let ax: Vec<Vec<f64>> = arm_idx.iter().map(|&i| x_std[i].clone()).collect();
                let ay: Vec<f64> = arm_idx.iter().map(|&i| ys[i]).collect();
                select_lasso_lambda_cv(&ax, &ay, 5)?
            }
            // too little data for CV: unpenalized fit, bootstrap spread
            // still drives exploration
            None => 0.0,
        };
    }

    // M bootstrap resamples of the full data; per arm, fit on the resampled
    // rows that landed on that arm.
    let boot = stream.child(purpose::BOOTSTRAP);
    let fits: Vec<Vec<Option<LassoFit>>> = exec::par_map_indexed(cfg.bootstrap_fits, |m| {
        let mut rng = boot.child(m as u64).rng();
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        (0..k)
            .map(|w| {
                let sel: Vec<usize> = idx.iter().copied().filter(|&i| rows[i].arm == w).collect();
                if sel.is_empty() {
                    return None;
                }
                let ax: Vec<Vec<f64>> = sel.iter().map(|&i| x_std[i].clone()).collect();
                let ay: Vec<f64> = sel.iter().map(|&i| ys[i]).collect();
                fit_lasso_centered(&ax, &ay, lambdas[w]).ok()
            })
            .collect()
    });

    let (distinct, index_of) = dedup_contexts(contexts);
    let posterior = stream.child(purpose::POSTERIOR);
    let distinct_rows: Vec<Result<Vec<f64>>> = exec::par_map_indexed(distinct.len(), |i| {
        let moments = arm_moments(&fits, &standardize(&distinct[i]), k);
        let mut rng = posterior.child(i as u64).rng();
        let (p_best, q_second) = thompson_tally(&moments, cfg.posterior_draws, &mut rng);
        let raw = match cfg.algorithm {
            Algorithm::BootstrapThompson => p_best,
            Algorithm::BootstrapEs => {
                // exploration sampling: proportional to p(1-p), except the
                // degenerate point mass where the raw tally is kept
                if p_best.iter().any(|v| *v == 1.0) {
                    p_best
                } else {
                    let u: Vec<f64> = p_best.iter().map(|v| v * (1.0 - v)).collect();
                    let total: f64 = u.iter().sum();
                    u.iter().map(|v| v / total).collect()
                }
            }
            Algorithm::BootstrapTtts => p_best
                .iter()
                .zip(&q_second)
                .map(|(pw, qw)| cfg.top_two_beta * pw + (1.0 - cfg.top_two_beta) * qw)
                .collect(),
            _ => unreachable!(),
        };
        apply_probability_floor(&raw, cfg.min_propensity)
    });
    let distinct_rows: Vec<Vec<f64>> = distinct_rows.into_iter().collect::<Result<_>>()?;
    let propensities = index_of.iter().map(|&i| distinct_rows[i].clone()).collect();
    Ok(BatchAssignment { propensities, ensemble: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ArmSet, ContextSchema, Feature, FeatureKind};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schema(p: usize) -> ContextSchema {
        ContextSchema::new(
            (0..p).map(|j| Feature::new(format!("x{j}"), FeatureKind::Real, -100.0, 100.0)).collect(),
            -100.0,
            100.0,
        )
        .unwrap()
    }

    fn arms(k: usize) -> ArmSet {
        ArmSet::new((0..k).map(|i| format!("arm{i}")).collect()).unwrap()
    }

    fn seeded_log(k: usize, n: usize, seed: u64, signal: impl Fn(&[f64], usize) -> f64) -> ObservationLog {
        let mut log = ObservationLog::new(schema(2), arms(k));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in 1..=n {
            let x = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let arm = rng.random_range(0..k);
            let y = signal(&x, arm) + rng.random_range(-0.5..0.5);
            log.append(Observation {
                t,
                batch: 1 + (t - 1) / 50,
                context: x,
                arm,
                outcome: y,
                propensities: vec![1.0 / k as f64; k],
            })
            .unwrap();
        }
        log
    }

    #[test]
    fn uniform_rows() {
        let rows = uniform_assign(3, 8).unwrap();
        for r in &rows {
            assert_eq!(r, &vec![0.125; 8]);
            assert_abs_diff_eq!(r.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(uniform_assign(2, 1).is_err());
    }

    #[test]
    fn uniform_sampling_frequencies() {
        // 80,000 draws from the uniform row: each arm within 3 binomial SEs of 1/8
        let k = 8;
        let row = &uniform_assign(1, k).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 80_000;
        let mut counts = vec![0usize; k];
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut cum = 0.0;
            for (w, e) in row.iter().enumerate() {
                cum += e;
                if u < cum {
                    counts[w] += 1;
                    break;
                }
            }
        }
        let p = 1.0 / k as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - p).abs() <= 3.0 * se);
        }
    }

    #[test]
    fn first_batch_is_uniform_for_every_algorithm() {
        let log = ObservationLog::new(schema(2), arms(4));
        let ctx = vec![vec![0.0, 0.0], vec![1.0, -1.0]];
        for alg in [
            Algorithm::Uniform,
            Algorithm::TreeBagging,
            Algorithm::BootstrapThompson,
            Algorithm::BootstrapEs,
            Algorithm::BootstrapTtts,
        ] {
            let cfg = BanditConfig { seed: 5, ..BanditConfig::new(alg) };
            let out = assign_batch(&log, &ctx, &cfg, 1).unwrap();
            for r in &out.propensities {
                assert_eq!(r, &vec![0.25; 4]);
            }
        }
    }

    #[test]
    fn treebagging_emits_floored_rows_and_ensemble() {
        let log = seeded_log(4, 100, 3, |x, w| if w == 0 { 2.0 * x[0] } else { 0.0 });
        let cfg = BanditConfig {
            ensemble_size: 10,
            ensemble_depth: 1,
            seed: 11,
            ..BanditConfig::new(Algorithm::TreeBagging)
        };
        let ctx = vec![vec![1.5, 0.0], vec![-1.5, 0.0], vec![1.5, 0.0]];
        let out = assign_batch(&log, &ctx, &cfg, 2).unwrap();
        let floor = floor_schedule(101, cfg.floor_alpha, 4).unwrap();
        for r in &out.propensities {
            assert_abs_diff_eq!(r.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            for e in r {
                assert!(*e >= floor - 1e-12);
            }
        }
        // identical contexts share identical rows
        assert_eq!(out.propensities[0], out.propensities[2]);
        assert_eq!(out.ensemble.as_ref().unwrap().len(), 10);
    }

    #[test]
    fn assignments_are_deterministic() {
        let log = seeded_log(3, 120, 7, |x, w| x[0] * (w as f64 - 1.0));
        let ctx = vec![vec![0.5, 0.5], vec![-0.5, 0.3]];
        for alg in [Algorithm::TreeBagging, Algorithm::BootstrapThompson, Algorithm::BootstrapTtts] {
            let cfg = BanditConfig {
                ensemble_size: 8,
                bootstrap_fits: 8,
                posterior_draws: 200,
                ensemble_depth: 1,
                seed: 21,
                ..BanditConfig::new(alg)
            };
            let a = assign_batch(&log, &ctx, &cfg, 3).unwrap();
            let b = assign_batch(&log, &ctx, &cfg, 3).unwrap();
            assert_eq!(a.propensities, b.propensities, "{alg:?}");
        }
    }

    #[test]
    fn tally_deterministic_when_variance_is_zero() {
        let moments = vec![(1.0, 0.0), (0.5, 0.0), (-2.0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (p, q) = thompson_tally(&moments, 500, &mut rng);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        assert_eq!(q, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn tally_symmetric_two_arms() {
        let moments = vec![(0.3, 0.4), (0.3, 0.4)];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 4000;
        let (p, _) = thompson_tally(&moments, n, &mut rng);
        let se = (0.5f64 * 0.5 / n as f64).sqrt();
        assert!((p[0] - 0.5).abs() <= 3.0 * se, "p={p:?}");
    }

    #[test]
    fn tally_matches_gaussian_orthant_probability() {
        // P(X1 > X2) = Phi((mu1 - mu2) / sqrt(v1 + v2))
        let (m1, v1, m2, v2) = (0.4, 0.3, 0.1, 0.5);
        let z = (m1 - m2) / (v1 + v2 as f64).sqrt();
        let expect = crate::stats::normal_cdf(z);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let (p, _) = thompson_tally(&[(m1, v1), (m2, v2)], n, &mut rng);
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((p[0] - expect).abs() <= 3.0 * se, "tally {} expect {expect}", p[0]);
    }

    #[test]
    fn exploration_sampling_transform() {
        // p=(0.8,0.2) -> u=(0.16,0.16) -> (0.5,0.5)
        let u: Vec<f64> = [0.8f64, 0.2].iter().map(|v| v * (1.0 - v)).collect();
        let total: f64 = u.iter().sum();
        let e: Vec<f64> = u.iter().map(|v| v / total).collect();
        assert_abs_diff_eq!(e[0], 0.5, epsilon = 1e-12);
        // p=(0.9,0.05,0.05) -> (0.486, 0.257, 0.257)
        let p = [0.9f64, 0.05, 0.05];
        let u: Vec<f64> = p.iter().map(|v| v * (1.0 - v)).collect();
        let total: f64 = u.iter().sum();
        let e: Vec<f64> = u.iter().map(|v| v / total).collect();
        assert_abs_diff_eq!(e[0], 0.486, epsilon = 5e-4);
        assert_abs_diff_eq!(e[1], 0.257, epsilon = 5e-4);
    }

    #[test]
    fn ttts_mixes_first_and_second_tallies() {
        // deterministic draws: p=(1,0), q=(0,1) -> beta*p + (1-beta)*q = (0.5, 0.5)
        let log = seeded_log(2, 80, 13, |_, w| if w == 0 { 5.0 } else { 0.0 });
        let cfg = BanditConfig {
            bootstrap_fits: 6,
            posterior_draws: 400,
            lasso_lambda: Some(1.0),
            seed: 31,
            ..BanditConfig::new(Algorithm::BootstrapTtts)
        };
        let out = assign_batch(&log, &[vec![0.0, 0.0]], &cfg, 2).unwrap();
        let row = &out.propensities[0];
        // arm 0 is clearly best: p ~ (1,0); the second-best tally is all arm 1
        assert!(row[0] < 0.65 && row[0] > 0.35, "row={row:?}");
        assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn thompson_rows_respect_min_propensity() {
        let log = seeded_log(3, 150, 17, |_, w| if w == 1 { 10.0 } else { -10.0 });
        let cfg = BanditConfig {
            bootstrap_fits: 10,
            posterior_draws: 500,
            seed: 41,
            ..BanditConfig::new(Algorithm::BootstrapThompson)
        };
        let out = assign_batch(&log, &[vec![0.2, -0.4]], &cfg, 2).unwrap();
        let row = &out.propensities[0];
        assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        for e in row {
            assert!(*e >= cfg.min_propensity - 1e-12);
        }
        // the dominant arm carries nearly all the mass
        assert!(row[1] > 0.99 - 2.0 * cfg.min_propensity, "row={row:?}");
    }

    #[test]
    fn config_json_defaults() {
        let cfg: BanditConfig = serde_json::from_str(r#"{"algorithm":"TreeBagging"}"#).unwrap();
        assert_eq!(cfg.ensemble_size, 50);
        assert_abs_diff_eq!(cfg.floor_alpha, 0.0625, epsilon = 1e-15);
        assert_eq!(cfg.bootstrap_fits, 50);
        assert_eq!(cfg.posterior_draws, 1000);
        assert_abs_diff_eq!(cfg.top_two_beta, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cfg.min_propensity, 1e-3, epsilon = 1e-15);
        assert_eq!(cfg.batch_size, 150);
        assert!(cfg.lasso_lambda.is_none());
    }
}
