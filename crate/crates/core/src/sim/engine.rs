//! The batched experiment loop: learning phase under a bandit, policy
//! learning at the phase boundary, a non-adaptive evaluation phase, and
//! regret accounting against the DGP's known conditional means.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandits::{assign_batch, Algorithm, BanditConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluation_mixture_propensity, test_value_difference, ContrastEstimate};
use crate::pipeline::{run_learning_pipeline, PipelineConfig, PipelineReport};
use crate::policy::Policy;
use crate::seed::{purpose, SeedStream};
use crate::sim::dgp::Dgp;
use crate::types::{Observation, ObservationLog};

fn default_total_periods() -> usize {
    3000
}
fn default_learning_fraction() -> f64 {
    0.5
}
fn default_batch_size() -> usize {
    150
}
fn default_epsilon() -> f64 {
    0.3
}
fn default_replicates() -> usize {
    200
}
fn default_value_sample() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_total_periods")]
    pub total_periods: usize,
    #[serde(default = "default_learning_fraction")]
    pub learning_fraction: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub bandit: BanditConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default = "default_epsilon")]
    pub evaluation_epsilon: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Size of the fixed context draw used to score learned policies exactly.
    #[serde(default = "default_value_sample")]
    pub value_sample: usize,
}

impl ExperimentConfig {
    pub fn new(bandit: BanditConfig) -> Self {
        ExperimentConfig {
            total_periods: default_total_periods(),
            learning_fraction: default_learning_fraction(),
            batch_size: default_batch_size(),
            bandit,
            pipeline: PipelineConfig::default(),
            evaluation_epsilon: default_epsilon(),
            replicates: default_replicates(),
            seed: 0,
            value_sample: default_value_sample(),
        }
    }

    pub fn learning_periods(&self) -> usize {
        (self.total_periods as f64 * self.learning_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.bandit.validate()?;
        let t_learn = self.learning_periods();
        if t_learn == 0 || t_learn > self.total_periods {
            return Err(Error::invalid("learning fraction leaves no learning phase"));
        }
        if t_learn % self.batch_size != 0 {
            return Err(Error::invalid(format!(
                "learning phase of {t_learn} periods does not divide into batches of {}",
                self.batch_size
            )));
        }
        if !(self.evaluation_epsilon > 0.0 && self.evaluation_epsilon <= 1.0) {
            return Err(Error::invalid("evaluation epsilon must lie in (0, 1]"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("need at least one replicate"));
        }
        Ok(())
    }
}

/// Per-replicate outputs: true policy values under the DGP, per-period
/// regret, the evaluation-phase contrast test, and pipeline diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub replicate: usize,
    pub algorithm: Algorithm,
    pub lambda: f64,
    /// True value of the learned tree policy: mean of mu(x, pi_C(x)) over the
    /// shared context draw.
    pub learned_policy_value: f64,
    pub fixed_policy_value: f64,
    pub optimal_value: f64,
    /// Per-period expected regret over the whole experiment.
    pub avg_regret_overall: f64,
    /// Per-period expected regret over the learning phase only.
    pub avg_regret_learning: f64,
    /// Evaluation-phase contrast of the tree vs fixed policy, when an
    /// evaluation phase exists.
    pub contrast: Option<ContrastEstimate>,
    pub chosen_depth: usize,
    pub selected_arms: Vec<usize>,
}

fn sample_categorical(e: &[f64], rng: &mut ChaCha8Rng) -> usize {
    use rand::Rng;
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (w, p) in e.iter().enumerate() {
        cum += p;
        if u < cum {
            return w;
        }
    }
    e.len() - 1
}

fn draw_contexts(pool: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    use rand::Rng;
    (0..n).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect()
}

/// Run one full experiment against the DGP. `value_contexts` is the shared
/// context draw for exact policy values; `ctx_stream` seeds the per-batch
/// context draws (shared across paired algorithms) while `run_stream` seeds
/// everything algorithm-specific.
pub fn run_replicate(
    dgp: &dyn Dgp,
    cfg: &ExperimentConfig,
    value_contexts: &[Vec<f64>],
    ctx_stream: SeedStream,
    run_stream: SeedStream,
) -> Result<(SimSummary, PipelineReport, ObservationLog)> {
    cfg.validate()?;
    if value_contexts.is_empty() {
        return Err(Error::invalid("empty value-context sample"));
    }
    let k = dgp.arms().k();
    let pool = dgp.context_pool();
    let t_learn = cfg.learning_periods();
    let n_batches = t_learn / cfg.batch_size;

    let mut bandit_cfg = cfg.bandit.clone();
    bandit_cfg.batch_size = cfg.batch_size;
    bandit_cfg.seed = run_stream.child(purpose::RUN).raw();

    let mut log = ObservationLog::new(dgp.schema().clone(), dgp.arms().clone());
    let mut regret_total = 0.0;
    let mut regret_learning = 0.0;
    let mut last_ensemble = None;

    for b in 1..=n_batches {
        let contexts = draw_contexts(pool, cfg.batch_size, &mut ctx_stream.child(b as u64).rng());
        let assignment = assign_batch(&log, &contexts, &bandit_cfg, b)?;
        last_ensemble = assignment.ensemble;
        let mut arm_rng = run_stream.child(b as u64).child(purpose::ARMS).rng();
        let mut outcome_rng = run_stream.child(b as u64).child(purpose::OUTCOMES).rng();
        for (x, e) in contexts.into_iter().zip(assignment.propensities) {
            let arm = sample_categorical(&e, &mut arm_rng);
            let y = dgp.sample_outcome(&x, arm, &mut outcome_rng);
            let regret = dgp.optimal_value(&x) - dgp.mean_reward(&x, arm);
            regret_total += regret;
            regret_learning += regret;
            log.append(Observation {
                t: log.len() + 1,
                batch: b,
                context: x,
                arm,
                outcome: y,
                propensities: e,
            })?;
        }
    }

    let mut pipeline_cfg = cfg.pipeline.clone();
    pipeline_cfg.seed = run_stream.child(purpose::PIPELINE).raw();
    let report = run_learning_pipeline(&log, last_ensemble.as_deref(), &pipeline_cfg)?;

    // evaluation phase: non-adaptive mixture of the learned policies
    let t_eval = cfg.total_periods - t_learn;
    let mut b = n_batches;
    let mut assigned = 0usize;
    while assigned < t_eval {
        b += 1;
        let m = cfg.batch_size.min(t_eval - assigned);
        let contexts = draw_contexts(pool, m, &mut ctx_stream.child(b as u64).rng());
        let mut arm_rng = run_stream.child(b as u64).child(purpose::ARMS).rng();
        let mut outcome_rng = run_stream.child(b as u64).child(purpose::OUTCOMES).rng();
        for x in contexts {
            let e = evaluation_mixture_propensity(
                &x,
                &report.tree_policy,
                &report.fixed_policy,
                cfg.evaluation_epsilon,
                k,
            )?;
            let arm = sample_categorical(&e, &mut arm_rng);
            let y = dgp.sample_outcome(&x, arm, &mut outcome_rng);
            regret_total += dgp.optimal_value(&x) - dgp.mean_reward(&x, arm);
            log.append(Observation {
                t: log.len() + 1,
                batch: b,
                context: x,
                arm,
                outcome: y,
                propensities: e,
            })?;
        }
        assigned += m;
    }
    log.set_learning_end(t_learn)?;

    let contrast = if t_eval >= 2 {
        Some(test_value_difference(
            log.evaluation_rows(),
            &report.tree_policy,
            &report.fixed_policy,
        )?)
    } else {
        None
    };

    // exact policy values under the DGP
    let mut learned = 0.0;
    let mut fixed = 0.0;
    let mut optimal = 0.0;
    for x in value_contexts {
        learned += dgp.mean_reward(x, report.tree_policy.assign(x));
        fixed += dgp.mean_reward(x, report.fixed_policy.assign(x));
        optimal += dgp.optimal_value(x);
    }
    let n_value = value_contexts.len() as f64;

    let summary = SimSummary {
        replicate: 0,
        algorithm: cfg.bandit.algorithm,
        lambda: f64::NAN,
        learned_policy_value: learned / n_value,
        fixed_policy_value: fixed / n_value,
        optimal_value: optimal / n_value,
        avg_regret_overall: regret_total / cfg.total_periods as f64,
        avg_regret_learning: regret_learning / t_learn as f64,
        contrast,
        chosen_depth: report.chosen_depth,
        selected_arms: report.selected_arms.clone(),
    };
    Ok((summary, report, log))
}
