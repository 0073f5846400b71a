//! Evaluation-phase assignment mixture, IPW policy-value estimation,
//! hypothesis tests, per-region contrasts, subgroup tables, and per-batch
//! descriptive statistics.
//!
//! Evaluation-phase propensities are known exactly and bounded below by
//! epsilon/K, so plain IPW is unbiased; all standard errors are plug-in
//! sampling SEs and the tests are one-sided normal tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{FixedPolicy, Policy, TreePolicy};
use crate::stats;
use crate::types::{ContextSchema, Observation, ObservationLog};

/// Evaluation-phase assignment probabilities: uniform with probability
/// epsilon, otherwise split evenly between the two learned policies.
pub fn evaluation_mixture_propensity(
    x: &[f64],
    tree: &TreePolicy,
    fixed: &FixedPolicy,
    epsilon: f64,
    k: usize,
) -> Result<Vec<f64>> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1]"));
    }
    let mut e = vec![epsilon / k as f64; k];
    let half = (1.0 - epsilon) / 2.0;
    e[tree.assign(x)] += half;
    e[fixed.assign(x)] += half;
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

/// Per-observation IPW score of a policy:
/// `1{W_t = pi(x_t)} * Y_t / e_t(x_t, pi(x_t))`.
fn ipw_scores(rows: &[Observation], policy: &dyn Policy) -> Result<Vec<f64>> {
    rows.iter()
        .enumerate()
        .map(|(i, o)| {
            let arm = policy.assign(&o.context);
            let e = o.propensities[arm];
            if !(e > 0.0) {
                return Err(Error::row(i, format!("zero propensity on policy arm {arm}")));
            }
            Ok(if o.arm == arm { o.outcome / e } else { 0.0 })
        })
        .collect()
}

/// IPW estimate of a policy's value on logged (typically evaluation-phase)
/// data, with its plug-in standard error.
pub fn estimate_policy_value(rows: &[Observation], policy: &dyn Policy) -> Result<ValueEstimate> {
    if rows.is_empty() {
        return Err(Error::invalid("no rows to evaluate"));
    }
    let scores = ipw_scores(rows, policy)?;
    let (value, se) = stats::mean_se(&scores);
    Ok(ValueEstimate { value, se, n: rows.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastEstimate {
    pub diff: f64,
    pub se: f64,
    /// One-sided upper-tail p-value for H0: E[Y(a)] <= E[Y(b)].
    pub p_value: f64,
    pub n: usize,
}

/// Test H0: E[Y(pi_a(X))] <= E[Y(pi_b(X))] by differencing per-observation
/// IPW scores.
pub fn test_value_difference(
    rows: &[Observation],
    policy_a: &dyn Policy,
    policy_b: &dyn Policy,
) -> Result<ContrastEstimate> {
    if rows.len() < 2 {
        return Err(Error::invalid("need at least two rows to test a difference"));
    }
    let a = ipw_scores(rows, policy_a)?;
    let b = ipw_scores(rows, policy_b)?;
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let (diff, se) = stats::mean_se(&diffs);
    let p_value = stats::one_sided_upper_p(stats::z_statistic(diff, se));
    Ok(ContrastEstimate { diff, se, p_value, n: rows.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionContrast {
    pub arm: usize,
    pub n: usize,
    /// Missing when the region holds fewer than two evaluation rows.
    pub estimate: Option<ContrastEstimate>,
}

/// The per-region hypothesis tests: within each region R_w = {x : tree(x)=w},
/// contrast the tree policy against the fixed policy. Empty regions are
/// reported with n = 0 and no estimate.
pub fn contrast_per_region(
    rows: &[Observation],
    tree: &TreePolicy,
    fixed: &FixedPolicy,
    k: usize,
) -> Result<Vec<RegionContrast>> {
    let mut out = Vec::with_capacity(k);
    for arm in 0..k {
        let region_rows: Vec<Observation> = rows
            .iter()
            .filter(|o| tree.assign(&o.context) == arm)
            .cloned()
            .collect();
        let n = region_rows.len();
        let estimate =
            if n >= 2 { Some(test_value_difference(&region_rows, tree, fixed)?) } else { None };
        out.push(RegionContrast { arm, n, estimate });
    }
    Ok(out)
}

/// A named predicate over one context feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgroup {
    pub name: String,
    pub feature: usize,
    pub op: SubgroupOp,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubgroupOp {
    Lt,
    Le,
    Ge,
    Gt,
}

impl Subgroup {
    pub fn new(name: impl Into<String>, feature: usize, op: SubgroupOp, threshold: f64) -> Self {
        Subgroup { name: name.into(), feature, op, threshold }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let v = x[self.feature];
        match self.op {
            SubgroupOp::Lt => v < self.threshold,
            SubgroupOp::Le => v <= self.threshold,
            SubgroupOp::Ge => v >= self.threshold,
            SubgroupOp::Gt => v > self.threshold,
        }
    }
}

/// The standard survey subgroups, for schemas that carry the relevant
/// features: liberals/conservatives by political leaning, young/older by age,
/// pro/anti-choice by abortion views.
pub fn standard_subgroups(schema: &ContextSchema) -> Vec<Subgroup> {
    let mut out = Vec::new();
    if let Some(f) = schema.feature_index("political_leaning") {
        out.push(Subgroup::new("liberals", f, SubgroupOp::Lt, 4.0));
        out.push(Subgroup::new("conservatives", f, SubgroupOp::Ge, 4.0));
    }
    if let Some(f) = schema.feature_index("age") {
        out.push(Subgroup::new("age_below_30", f, SubgroupOp::Lt, 30.0));
        out.push(Subgroup::new("age_above_30", f, SubgroupOp::Ge, 30.0));
    }
    if let Some(f) = schema.feature_index("views_abortion") {
        out.push(Subgroup::new("pro_choice", f, SubgroupOp::Le, 3.0));
        out.push(Subgroup::new("anti_choice", f, SubgroupOp::Gt, 3.0));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCell {
    pub subgroup: String,
    pub arm: usize,
    pub n: usize,
    pub mean: Option<f64>,
    /// Missing for cells with fewer than two rows.
    pub se: Option<f64>,
}

/// Conditional sample means of the realized outcome per (subgroup, arm) over
/// all given rows. Empty cells report n = 0 with no mean.
pub fn subgroup_means(rows: &[Observation], subgroups: &[Subgroup], k: usize) -> Vec<SubgroupCell> {
    let mut out = Vec::with_capacity(subgroups.len() * k);
    for sg in subgroups {
        for arm in 0..k {
            let ys: Vec<f64> = rows
                .iter()
                .filter(|o| o.arm == arm && sg.contains(&o.context))
                .map(|o| o.outcome)
                .collect();
            let n = ys.len();
            let (mean, se) = match n {
                0 => (None, None),
                1 => (Some(ys[0]), None),
                _ => {
                    let (m, s) = stats::mean_se(&ys);
                    (Some(m), Some(s))
                }
            };
            out.push(SubgroupCell { subgroup: sg.name.clone(), arm, n, mean, se });
        }
    }
    out
}

/// Recomputes the assignment-probability function at an arbitrary context,
/// as it stood at a given period. Implemented by replaying the bandit on the
/// logged history; available in simulation and service contexts.
pub trait PropensityOracle {
    fn propensities_at(&self, t_first: usize, x: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRewardRow {
    pub batch: usize,
    pub subgroup: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchArmProbabilityRow {
    pub batch: usize,
    pub arm: usize,
    pub mean_propensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedProbabilityRow {
    pub batch: usize,
    pub mean_propensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianTrajectoryRow {
    pub subgroup: String,
    pub batch: usize,
    pub arm: usize,
    pub propensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDescriptives {
    pub rewards: Vec<BatchRewardRow>,
    pub arm_probabilities: Vec<BatchArmProbabilityRow>,
    /// Mean probability of the tree-recommended arm, when a tree is given.
    pub recommended: Vec<RecommendedProbabilityRow>,
    /// Propensities at each subgroup's coordinatewise-median context, at the
    /// first period of each batch. Requires a propensity oracle.
    pub median_trajectories: Vec<MedianTrajectoryRow>,
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Per-batch descriptive statistics: mean reward overall and per subgroup,
/// mean assignment probability per arm, mean probability of the recommended
/// arm, and (with an oracle) median-context propensity trajectories.
pub fn batch_descriptives(
    log: &ObservationLog,
    tree: Option<&TreePolicy>,
    subgroups: &[Subgroup],
    oracle: Option<&dyn PropensityOracle>,
) -> Result<BatchDescriptives> {
    let rows = log.rows();
    if rows.is_empty() {
        return Err(Error::invalid("empty log"));
    }
    let k = log.arms().k();
    let p = log.schema().p();
    let mut rewards = Vec::new();
    let mut arm_probabilities = Vec::new();
    let mut recommended = Vec::new();
    let mut median_trajectories = Vec::new();

    for batch in log.batch_ids() {
        let batch_rows: Vec<&Observation> = rows.iter().filter(|o| o.batch == batch).collect();
        let n = batch_rows.len();
        // overall + per-subgroup mean reward
        let mut groups: Vec<(String, Vec<f64>)> =
            vec![("all".to_string(), batch_rows.iter().map(|o| o.outcome).collect())];
        for sg in subgroups {
            let ys: Vec<f64> = batch_rows
                .iter()
                .filter(|o| sg.contains(&o.context))
                .map(|o| o.outcome)
                .collect();
            groups.push((sg.name.clone(), ys));
        }
        for (name, ys) in groups {
            let (mean, se) = match ys.len() {
                0 => (None, None),
                1 => (Some(ys[0]), None),
                _ => {
                    let (m, s) = stats::mean_se(&ys);
                    (Some(m), Some(s))
                }
            };
            rewards.push(BatchRewardRow { batch, subgroup: name, n: ys.len(), mean, se });
        }
        // mean assignment probability per arm
        for arm in 0..k {
            let mean_e =
                batch_rows.iter().map(|o| o.propensities[arm]).sum::<f64>() / n as f64;
            arm_probabilities.push(BatchArmProbabilityRow { batch, arm, mean_propensity: mean_e });
        }
        // mean probability of the recommended arm
        if let Some(tree) = tree {
            let mean_e = batch_rows
                .iter()
                .map(|o| o.propensities[tree.assign(&o.context)])
                .sum::<f64>()
                / n as f64;
            recommended.push(RecommendedProbabilityRow { batch, mean_propensity: mean_e });
        }
        // median-context trajectories
        if let Some(oracle) = oracle {
            let t_first = batch_rows.iter().map(|o| o.t).min().unwrap();
            for sg in subgroups {
                let members: Vec<&&Observation> =
                    batch_rows.iter().filter(|o| sg.contains(&o.context)).collect();
                if members.is_empty() {
                    continue;
                }
                let x_med: Vec<f64> = (0..p)
                    .map(|j| {
                        let mut col: Vec<f64> =
                            members.iter().map(|o| o.context[j]).collect();
                        median(&mut col)
                    })
                    .collect();
                let e = oracle.propensities_at(t_first, &x_med)?;
                for (arm, prop) in e.into_iter().enumerate() {
                    median_trajectories.push(MedianTrajectoryRow {
                        subgroup: sg.name.clone(),
                        batch,
                        arm,
                        propensity: prop,
                    });
                }
            }
        }
    }
    Ok(BatchDescriptives { rewards, arm_probabilities, recommended, median_trajectories })
}

/// Fraction of replicates whose p-value falls below alpha.
pub fn power_across_sims(p_values: &[f64], alpha: f64) -> Result<f64> {
    if p_values.is_empty() {
        return Err(Error::invalid("no replicates"));
    }
    Ok(p_values.iter().filter(|p| **p < alpha).count() as f64 / p_values.len() as f64)
}
