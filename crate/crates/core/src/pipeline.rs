//! End-of-learning-phase policy learning.
//!
//! The procedure: score arms by ensemble frequency and keep the top k, drop
//! observations assigned to pruned arms, renormalize each retained row's
//! propensities over the kept arms, cross-fit outcome models, build AIPW
//! scores, select a tree depth on a chronological 80/20 split, refit on all
//! retained rows, and extract the best single arm as the non-contextual
//! policy.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bandits::{fit_bagging_ensemble, Algorithm, BanditConfig};
use crate::error::{Error, Result};
use crate::models::ridge::{fit_crossfit_mu, CrossFitConfig};
use crate::policy::{FixedPolicy, TreeNode, TreePolicy};
use crate::scores::{aipw_scores, frequency_scores};
use crate::seed::{purpose, SeedStream};
use crate::tree::select_depth_by_cv;
use crate::types::{ArmSet, ContextSchema, Observation, ObservationLog};

/// Which contexts enter the frequency-score sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FrequencySpan {
    /// All learning-phase contexts.
    #[default]
    WholePhase,
    /// Only the last learning batch's contexts.
    LastBatch,
}

fn default_top_k() -> usize {
    4
}
fn default_subset_size() -> usize {
    50
}
fn default_depths() -> Vec<usize> {
    vec![1, 2]
}
fn default_threshold_budget() -> usize {
    16
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_ensemble_size() -> usize {
    50
}
fn default_ensemble_depth() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Number of arms kept by frequency score.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_subset_size")]
    pub subset_size: usize,
    /// Candidate tree depths for cross-validated selection.
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    #[serde(default = "default_threshold_budget")]
    pub threshold_budget: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Fixed ridge penalty for cross-fitting; `None` selects by GCV.
    #[serde(default)]
    pub ridge_lambda: Option<f64>,
    #[serde(default)]
    pub frequency_span: FrequencySpan,
    /// Ensemble shape used when the caller provides none (logs collected by
    /// algorithms other than tree bagging).
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default = "default_ensemble_depth")]
    pub ensemble_depth: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            top_k: default_top_k(),
            subset_size: default_subset_size(),
            depths: default_depths(),
            threshold_budget: default_threshold_budget(),
            train_fraction: default_train_fraction(),
            ridge_lambda: None,
            frequency_span: FrequencySpan::WholePhase,
            ensemble_size: default_ensemble_size(),
            ensemble_depth: default_ensemble_depth(),
            seed: 0,
        }
    }
}

/// Everything the learning phase produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Arms kept by frequency score, ascending by arm index.
    pub selected_arms: Vec<usize>,
    /// Frequency score per arm (all K arms).
    pub frequency_scores: Vec<f64>,
    pub chosen_depth: usize,
    pub tree_policy: TreePolicy,
    pub fixed_policy: FixedPolicy,
    /// Mean AIPW score per selected arm over the retained rows.
    pub arm_mean_scores: Vec<(usize, f64)>,
    pub retained_rows: usize,
}

impl PipelineReport {
    /// Operator-facing JSON with aliases and feature names.
    pub fn to_named_json(&self, schema: &ContextSchema, arms: &ArmSet) -> Value {
        json!({
            "selected_arms": self.selected_arms.iter().map(|&w| json!({
                "arm": arms.alias(w),
                "frequency_score": self.frequency_scores[w],
            })).collect::<Vec<_>>(),
            "frequency_scores": arms.aliases().iter().enumerate().map(|(w, a)| {
                json!({ "arm": a, "score": self.frequency_scores[w] })
            }).collect::<Vec<_>>(),
            "chosen_depth": self.chosen_depth,
            "contextual_policy": self.tree_policy.to_named_json(schema, arms),
            "contextual_policy_text": self.tree_policy.render_text(schema, arms),
            "fixed_policy": arms.alias(self.fixed_policy.arm),
            "arm_mean_aipw": self.arm_mean_scores.iter().map(|&(w, v)| {
                json!({ "arm": arms.alias(w), "mean_score": v })
            }).collect::<Vec<_>>(),
            "retained_rows": self.retained_rows,
        })
    }

    pub fn from_named_json(v: &Value, schema: &ContextSchema, arms: &ArmSet) -> Result<Self> {
        let tree = TreePolicy::from_named_json(
            v.get("contextual_policy").ok_or_else(|| Error::invalid("missing contextual_policy"))?,
            schema,
            arms,
        )?;
        let fixed_alias = v
            .get("fixed_policy")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::invalid("missing fixed_policy"))?;
        let fixed = FixedPolicy {
            arm: arms
                .index_of(fixed_alias)
                .ok_or_else(|| Error::invalid(format!("unknown arm `{fixed_alias}`")))?,
        };
        let mut frequency_scores = vec![0.0; arms.k()];
        for entry in v
            .get("frequency_scores")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::invalid("missing frequency_scores"))?
        {
            let alias = entry.get("arm").and_then(Value::as_str).unwrap_or_default();
            let w = arms
                .index_of(alias)
                .ok_or_else(|| Error::invalid(format!("unknown arm `{alias}`")))?;
            frequency_scores[w] = entry.get("score").and_then(Value::as_f64).unwrap_or_default();
        }
        let selected_arms = v
            .get("selected_arms")
            .and_then(Value::as_array)
            .map(|entries| {
                entries
                    .iter()
                    .filter_map(|e| e.get("arm").and_then(Value::as_str))
                    .filter_map(|a| arms.index_of(a))
                    .collect()
            })
            .unwrap_or_default();
        let arm_mean_scores = v
            .get("arm_mean_aipw")
            .and_then(Value::as_array)
            .map(|entries| {
                entries
                    .iter()
                    .filter_map(|e| {
                        let w = arms.index_of(e.get("arm")?.as_str()?)?;
                        Some((w, e.get("mean_score")?.as_f64()?))
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(PipelineReport {
            selected_arms,
            frequency_scores,
            chosen_depth: v.get("chosen_depth").and_then(Value::as_u64).unwrap_or(0) as usize,
            tree_policy: tree,
            fixed_policy: fixed,
            arm_mean_scores,
            retained_rows: v.get("retained_rows").and_then(Value::as_u64).unwrap_or(0) as usize,
        })
    }
}

/// Run the full procedure on a learning-phase log. `ensemble` is the bagging
/// ensemble used during the last learning batch; logs collected by other
/// algorithms pass `None` and a fresh ensemble is fit on the whole phase.
pub fn run_learning_pipeline(
    log: &ObservationLog,
    ensemble: Option<&[TreePolicy]>,
    cfg: &PipelineConfig,
) -> Result<PipelineReport> {
    let rows = log.learning_rows();
    if rows.is_empty() {
        return Err(Error::invalid("empty learning log"));
    }
    let k = log.arms().k();
    if cfg.top_k == 0 || cfg.top_k > k {
        return Err(Error::invalid(format!("top_k must lie in 1..={k}")));
    }

    // 1. frequency scores from the ensemble
    let owned_ensemble;
    let ensemble = match ensemble {
        Some(e) if !e.is_empty() => e,
        _ => {
            let bandit_cfg = BanditConfig {
                ensemble_size: cfg.ensemble_size,
                ensemble_depth: cfg.ensemble_depth,
                subset_size: cfg.subset_size,
                threshold_budget: cfg.threshold_budget,
                ..BanditConfig::new(Algorithm::TreeBagging)
            };
            owned_ensemble = fit_bagging_ensemble(
                rows,
                k,
                &bandit_cfg,
                SeedStream::new(cfg.seed).child(purpose::PIPELINE),
            )?;
            &owned_ensemble
        }
    };
    let freq_contexts: Vec<Vec<f64>> = match cfg.frequency_span {
        FrequencySpan::WholePhase => rows.iter().map(|o| o.context.clone()).collect(),
        FrequencySpan::LastBatch => {
            let last = rows.last().unwrap().batch;
            rows.iter().filter(|o| o.batch == last).map(|o| o.context.clone()).collect()
        }
    };
    let freq = frequency_scores(ensemble, &freq_contexts, k)?;

    // top-k arms by descending score; ties at the boundary go to the lower index
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| freq[b].partial_cmp(&freq[a]).unwrap().then(a.cmp(&b)));
    let mut selected: Vec<usize> = order[..cfg.top_k].to_vec();
    selected.sort_unstable();

    // 2. drop observations on pruned arms
    let retained: Vec<&Observation> =
        rows.iter().filter(|o| selected.binary_search(&o.arm).is_ok()).collect();
    for &w in &selected {
        if !retained.iter().any(|o| o.arm == w) {
            return Err(Error::invalid(format!(
                "selected arm `{w}` has no retained observations to score"
            )));
        }
    }

    // 3. renormalize propensities over the selected arms
    let renorm: Vec<Vec<f64>> = retained
        .iter()
        .map(|o| {
            let total: f64 = selected.iter().map(|&w| o.propensities[w]).sum();
            selected.iter().map(|&w| o.propensities[w] / total).collect()
        })
        .collect();

    // 4. cross-fitted outcome model on the retained rows
    let retained_owned: Vec<Observation> = retained.iter().map(|o| (*o).clone()).collect();
    let crossfit = fit_crossfit_mu(
        &retained_owned,
        k,
        &CrossFitConfig { subset_size: cfg.subset_size, ridge_lambda: cfg.ridge_lambda },
    )?;
    let mu: Vec<Vec<f64>> = retained_owned
        .iter()
        .enumerate()
        .map(|(i, o)| selected.iter().map(|&w| crossfit.predict(i, &o.context, w)).collect())
        .collect();

    // 5. AIPW scores over the selected arms
    let scores = aipw_scores(&retained_owned, &selected, &mu, &renorm)?;
    let contexts: Vec<Vec<f64>> = retained_owned.iter().map(|o| o.context.clone()).collect();

    // 6-9. depth selection and refit
    let (chosen_depth, tree_policy) = select_depth_by_cv(
        &scores,
        &contexts,
        &cfg.depths,
        cfg.threshold_budget,
        cfg.train_fraction,
    )?;

    // 10. best single arm by mean AIPW score
    let arm_mean_scores: Vec<(usize, f64)> =
        selected.iter().map(|&w| (w, scores.column_mean(w).unwrap())).collect();
    let best = arm_mean_scores
        .iter()
        .fold(arm_mean_scores[0], |acc, &(w, v)| if v > acc.1 { (w, v) } else { acc });

    Ok(PipelineReport {
        selected_arms: selected,
        frequency_scores: freq,
        chosen_depth,
        tree_policy,
        fixed_policy: FixedPolicy { arm: best.0 },
        arm_mean_scores,
        retained_rows: retained_owned.len(),
    })
}

/// One arm's region: the contexts the tree policy maps to it, described by
/// the union of its leaf boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub arm: usize,
    /// Each box is a conjunction of (feature, is_upper_bound, threshold):
    /// `is_upper_bound` means `x[feature] <= threshold`, otherwise
    /// `x[feature] > threshold`.
    pub boxes: Vec<Vec<(usize, bool, f64)>>,
}

/// Leaf-induced partition of the covariate space, one (possibly empty) region
/// per arm of the arm set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub regions: Vec<Region>,
}

impl RegionPartition {
    pub fn non_empty_arms(&self) -> Vec<usize> {
        self.regions.iter().filter(|r| !r.boxes.is_empty()).map(|r| r.arm).collect()
    }
}

/// Partition the covariate space by the tree policy's leaves.
pub fn region_partition(policy: &TreePolicy, arms: &ArmSet) -> RegionPartition {
    fn walk(
        node: &TreeNode,
        path: &mut Vec<(usize, bool, f64)>,
        out: &mut Vec<(usize, Vec<(usize, bool, f64)>)>,
    ) {
        match node {
            TreeNode::Leaf { arm } => out.push((*arm, path.clone())),
            TreeNode::Split { feature, threshold, left, right } => {
                path.push((*feature, true, *threshold));
                walk(left, path, out);
                path.pop();
                path.push((*feature, false, *threshold));
                walk(right, path, out);
                path.pop();
            }
        }
    }
    let mut leaves = Vec::new();
    walk(policy.root(), &mut Vec::new(), &mut leaves);
    let regions = (0..arms.k())
        .map(|arm| Region {
            arm,
            boxes: leaves.iter().filter(|(a, _)| *a == arm).map(|(_, b)| b.clone()).collect(),
        })
        .collect();
    RegionPartition { regions }
}
