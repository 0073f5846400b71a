//! Data-generating processes for the simulation engine.
//!
//! The semi-synthetic DGP mirrors the calibration procedure: resample the
//! seed corpus, fit a penalized ordinal outcome model on the resample, and
//! simulate contexts by drawing from the original corpus pool. Conditional
//! means come from the fitted model exactly, so regret accounting has known
//! ground truth. A directly planted DGP is also provided for analytic checks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::models::ordinal::{level_of_outcome, OrdinalModel};
use crate::seed::SeedStream;
use crate::types::{ArmSet, ContextSchema, ObservationLog};

/// A simulated environment: a context pool to resample, exact conditional
/// mean rewards, and an outcome sampler.
pub trait Dgp: Sync {
    fn schema(&self) -> &ContextSchema;
    fn arms(&self) -> &ArmSet;
    fn context_pool(&self) -> &[Vec<f64>];
    fn mean_reward(&self, x: &[f64], arm: usize) -> f64;
    fn sample_outcome(&self, x: &[f64], arm: usize, rng: &mut ChaCha8Rng) -> f64;

    /// Arm maximizing the conditional mean; ties go to the lower index.
    fn optimal_arm(&self, x: &[f64]) -> usize {
        let k = self.arms().k();
        let mut best = 0usize;
        let mut best_value = self.mean_reward(x, 0);
        for w in 1..k {
            let v = self.mean_reward(x, w);
            if v > best_value {
                best_value = v;
                best = w;
            }
        }
        best
    }

    fn optimal_value(&self, x: &[f64]) -> f64 {
        self.mean_reward(x, self.optimal_arm(x))
    }
}

/// Ordinal-model DGP fit to a (resampled) seed corpus.
#[derive(Debug, Clone)]
pub struct SemiSyntheticDgp {
    schema: ContextSchema,
    arms: ArmSet,
    contexts: Vec<Vec<f64>>,
    pub model: OrdinalModel,
    pub lambda: f64,
}

impl Dgp for SemiSyntheticDgp {
    fn schema(&self) -> &ContextSchema {
        &self.schema
    }

    fn arms(&self) -> &ArmSet {
        &self.arms
    }

    fn context_pool(&self) -> &[Vec<f64>] {
        &self.contexts
    }

    fn mean_reward(&self, x: &[f64], arm: usize) -> f64 {
        self.model.conditional_mean(x, arm)
    }

    fn sample_outcome(&self, x: &[f64], arm: usize, rng: &mut ChaCha8Rng) -> f64 {
        self.model.sample_outcome(x, arm, rng)
    }
}

/// Build a semi-synthetic DGP: draw the regularization penalty uniformly from
/// the candidate set, bootstrap-resample the corpus, and fit the ordinal
/// outcome model on the resample. Contexts are drawn from the original
/// corpus, not the resample.
pub fn build_dgp(
    corpus: &ObservationLog,
    lambdas: &[f64],
    n_levels: usize,
    stream: SeedStream,
) -> Result<SemiSyntheticDgp> {
    if lambdas.is_empty() {
        return Err(Error::invalid("empty regularization set"));
    }
    let rows = corpus.rows();
    let n = rows.len();
    if n < 10 {
        return Err(Error::invalid(format!("corpus of {n} rows is too small to fit a DGP")));
    }
    let range = (corpus.schema().outcome_min, corpus.schema().outcome_max);
    let mut rng = stream.rng();
    let lambda = lambdas[rng.random_range(0..lambdas.len())];
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let contexts_fit: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].context.clone()).collect();
    let arms_fit: Vec<usize> = idx.iter().map(|&i| rows[i].arm).collect();
    let levels_fit: Vec<usize> = idx
        .iter()
        .map(|&i| level_of_outcome(rows[i].outcome, range, n_levels))
        .collect::<Result<_>>()?;
    let model = OrdinalModel::fit(
        &contexts_fit,
        &arms_fit,
        &levels_fit,
        corpus.arms().k(),
        lambda,
        n_levels,
        range,
    )?;
    Ok(SemiSyntheticDgp {
        schema: corpus.schema().clone(),
        arms: corpus.arms().clone(),
        contexts: rows.iter().map(|o| o.context.clone()).collect(),
        model,
        lambda,
    })
}

/// An additive effect: contexts with `x[feature] > threshold` gain `delta`
/// on `arm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedEffect {
    pub feature: usize,
    pub threshold: f64,
    pub arm: usize,
    pub delta: f64,
}

/// A DGP with directly stated conditional means: per-arm baselines plus
/// threshold effects, and Gaussian outcome noise clipped to the schema range.
#[derive(Debug, Clone)]
pub struct PlantedDgp {
    schema: ContextSchema,
    arms: ArmSet,
    contexts: Vec<Vec<f64>>,
    pub arm_means: Vec<f64>,
    pub effects: Vec<PlantedEffect>,
    pub noise_sd: f64,
}

impl PlantedDgp {
    pub fn new(
        schema: ContextSchema,
        arms: ArmSet,
        contexts: Vec<Vec<f64>>,
        arm_means: Vec<f64>,
        effects: Vec<PlantedEffect>,
        noise_sd: f64,
    ) -> Result<Self> {
        if arm_means.len() != arms.k() {
            return Err(Error::invalid("need one baseline mean per arm"));
        }
        if contexts.is_empty() {
            return Err(Error::invalid("empty context pool"));
        }
        for x in &contexts {
            schema.validate_context(x)?;
        }
        Ok(PlantedDgp { schema, arms, contexts, arm_means, effects, noise_sd })
    }
}

impl Dgp for PlantedDgp {
    fn schema(&self) -> &ContextSchema {
        &self.schema
    }

    fn arms(&self) -> &ArmSet {
        &self.arms
    }

    fn context_pool(&self) -> &[Vec<f64>] {
        &self.contexts
    }

    fn mean_reward(&self, x: &[f64], arm: usize) -> f64 {
        let mut m = self.arm_means[arm];
        for e in &self.effects {
            if e.arm == arm && x[e.feature] > e.threshold {
                m += e.delta;
            }
        }
        m
    }

    fn sample_outcome(&self, x: &[f64], arm: usize, rng: &mut ChaCha8Rng) -> f64 {
        let mean = self.mean_reward(x, arm);
        let y = if self.noise_sd > 0.0 {
            Normal::new(mean, self.noise_sd).unwrap().sample(rng)
        } else {
            mean
        };
        y.clamp(self.schema.outcome_min, self.schema.outcome_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Feature, FeatureKind, Observation};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn tiny_schema() -> ContextSchema {
        ContextSchema::new(
            vec![Feature::new("x", FeatureKind::Real, -5.0, 5.0)],
            -10.0,
            10.0,
        )
        .unwrap()
    }

    fn tiny_arms() -> ArmSet {
        ArmSet::new(vec!["a", "b"]).unwrap()
    }

    #[test]
    fn planted_dgp_means_and_optimum() {
        let dgp = PlantedDgp::new(
            tiny_schema(),
            tiny_arms(),
            vec![vec![0.0], vec![2.0]],
            vec![1.0, 1.0],
            vec![PlantedEffect { feature: 0, threshold: 1.0, arm: 1, delta: 3.0 }],
            0.0,
        )
        .unwrap();
        assert_eq!(dgp.mean_reward(&[0.0], 1), 1.0);
        assert_eq!(dgp.mean_reward(&[2.0], 1), 4.0);
        // equal means tie to the lower index
        assert_eq!(dgp.optimal_arm(&[0.0]), 0);
        assert_eq!(dgp.optimal_arm(&[2.0]), 1);
        assert_eq!(dgp.optimal_value(&[2.0]), 4.0);
        // zero-noise outcomes equal the mean
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dgp.sample_outcome(&[2.0], 1, &mut rng), 4.0);
    }

    fn on_grid_corpus(n: usize, seed: u64) -> ObservationLog {
        let mut log = ObservationLog::new(tiny_schema(), tiny_arms());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in 1..=n {
            let x = rng.random_range(-20..=20) as f64 / 10.0;
            let arm = rng.random_range(0..2usize);
            let latent = if arm == 1 { 2.0 * x } else { -x } + rng.random_range(-2.0..2.0);
            let y = (latent.round()).clamp(-10.0, 10.0);
            log.append(Observation {
                t,
                batch: 1,
                context: vec![x],
                arm,
                outcome: y,
                propensities: vec![0.5, 0.5],
            })
            .unwrap();
        }
        log
    }

    #[test]
    fn build_dgp_is_deterministic_and_on_pool() {
        let corpus = on_grid_corpus(120, 5);
        let stream = SeedStream::new(7).child(1);
        let d1 = build_dgp(&corpus, &[10.0, 50.0], 21, stream).unwrap();
        let d2 = build_dgp(&corpus, &[10.0, 50.0], 21, stream).unwrap();
        assert_eq!(d1.lambda, d2.lambda);
        assert_eq!(d1.model, d2.model);
        assert_eq!(d1.context_pool().len(), 120);
        // conditional means live on the outcome scale
        for x in d1.context_pool().iter().take(10) {
            let m = d1.mean_reward(x, 0);
            assert!((-10.0..=10.0).contains(&m));
        }
        assert!(build_dgp(&corpus, &[], 21, stream).is_err());
        let tiny = on_grid_corpus(5, 6);
        assert!(build_dgp(&tiny, &[10.0], 21, stream).is_err());
    }

    #[test]
    fn heavier_penalty_flattens_heterogeneity() {
        let corpus = on_grid_corpus(300, 9);
        let stream = SeedStream::new(3).child(2);
        let low = build_dgp(&corpus, &[1.0], 21, stream).unwrap();
        let high = build_dgp(&corpus, &[5000.0], 21, stream).unwrap();
        let spread = |d: &SemiSyntheticDgp| {
            let tips: Vec<f64> = d
                .context_pool()
                .iter()
                .map(|x| (d.mean_reward(x, 0) - d.mean_reward(x, 1)).abs())
                .collect();
            tips.iter().sum::<f64>() / tips.len() as f64
        };
        assert!(spread(&high) < spread(&low));
        // in the heavy-penalty limit the optimal arm is nearly constant
        let first = high.optimal_arm(&high.context_pool()[0]);
        let frac_same = high
            .context_pool()
            .iter()
            .filter(|x| high.optimal_arm(x) == first)
            .count() as f64
            / high.context_pool().len() as f64;
        assert!(frac_same > 0.95, "frac_same={frac_same}");
        let _ = assert_abs_diff_eq!(1.0, 1.0);
    }
}
