//! Propensity-floor transform and schedule, AIPW scoring, and ensemble
//! frequency scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Policy, TreePolicy};
use crate::types::{Observation, PROPENSITY_SUM_TOL};

/// Decaying lower bound on assignment probabilities: `f(t) = t^(-alpha) / K`.
pub fn floor_schedule(t: usize, alpha: f64, k: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::invalid("floor schedule is defined for t >= 1"));
    }
    if !(alpha > 0.0) {
        return Err(Error::invalid("decay exponent must be positive"));
    }
    if k < 2 {
        return Err(Error::invalid("floor schedule needs K >= 2"));
    }
    Ok((t as f64).powf(-alpha) / k as f64)
}

/// Raise every entry of a probability vector to at least `floor`, rescaling
/// the mass above the floor so the result still sums to one:
/// entries below the floor become exactly `floor`; entries at or above it map
/// to `floor + c * (raw - floor)` with `c = (1 - K*floor) / sum(raw - floor)`.
///
/// The transform is order-preserving and idempotent for a fixed floor.
pub fn apply_probability_floor(raw: &[f64], floor: f64) -> Result<Vec<f64>> {
    let k = raw.len();
    if k == 0 {
        return Err(Error::invalid("empty probability vector"));
    }
    if !(0.0..=1.0).contains(&floor) || floor > 1.0 / k as f64 {
        return Err(Error::invalid(format!(
            "floor {floor} infeasible for {k} arms (must lie in [0, 1/K])"
        )));
    }
    let sum: f64 = raw.iter().sum();
    if raw.iter().any(|e| !e.is_finite() || *e < 0.0) || (sum - 1.0).abs() > PROPENSITY_SUM_TOL {
        return Err(Error::invalid(format!("input is not a probability vector (sum={sum})")));
    }
    let excess: f64 = raw.iter().filter(|&&e| e >= floor).map(|e| e - floor).sum();
    if excess <= 0.0 {
        // Every entry is (numerically) at the floor already; only possible
        // when floor == 1/K, where the floored vector itself sums to one.
        return Ok(vec![1.0 / k as f64; k]);
    }
    let c = (1.0 - k as f64 * floor) / excess;
    Ok(raw
        .iter()
        .map(|&e| if e < floor { floor } else { floor + c * (e - floor) })
        .collect())
}

/// Per-observation doubly-robust scores over an eligible-arm subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AipwScoreTable {
    eligible: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl AipwScoreTable {
    pub fn new(eligible: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if eligible.is_empty() {
            return Err(Error::invalid("eligible arm set is empty"));
        }
        if eligible.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("eligible arms must be strictly increasing"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != eligible.len() {
                return Err(Error::row(i, "score row dimension != eligible arm count"));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::row(i, "non-finite score"));
            }
        }
        Ok(AipwScoreTable { eligible, rows })
    }

    /// Eligible arms, ascending by original arm index.
    pub fn eligible_arms(&self) -> &[usize] {
        &self.eligible
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column position of a (global) arm index, if eligible.
    pub fn slot_of(&self, arm: usize) -> Option<usize> {
        self.eligible.binary_search(&arm).ok()
    }

    pub fn score(&self, row: usize, arm: usize) -> Option<f64> {
        self.slot_of(arm).map(|j| self.rows[row][j])
    }

    /// Mean score of one arm across all rows.
    pub fn column_mean(&self, arm: usize) -> Option<f64> {
        let j = self.slot_of(arm)?;
        if self.rows.is_empty() {
            return None;
        }
        Some(self.rows.iter().map(|r| r[j]).sum::<f64>() / self.rows.len() as f64)
    }

    /// Restrict to the given row range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> AipwScoreTable {
        AipwScoreTable { eligible: self.eligible.clone(), rows: self.rows[range].to_vec() }
    }
}

/// Construct AIPW scores:
/// `score(t, w) = mu[t][w] + 1{W_t = w} / e[t][w] * (Y_t - mu[t][w])`.
///
/// `mu` and `propensities` are indexed `[row][eligible slot]`; propensities
/// must already be renormalized over the eligible arms. Every row's realized
/// arm must be eligible with strictly positive propensity.
pub fn aipw_scores(
    rows: &[Observation],
    eligible: &[usize],
    mu: &[Vec<f64>],
    propensities: &[Vec<f64>],
) -> Result<AipwScoreTable> {
    if mu.len() != rows.len() || propensities.len() != rows.len() {
        return Err(Error::invalid("mu/propensity tables must have one row per observation"));
    }
    let m = eligible.len();
    let mut out = Vec::with_capacity(rows.len());
    for (i, obs) in rows.iter().enumerate() {
        if mu[i].len() != m || propensities[i].len() != m {
            return Err(Error::row(i, "mu/propensity row dimension != eligible arm count"));
        }
        if mu[i].iter().any(|v| !v.is_finite()) {
            return Err(Error::row(i, "non-finite outcome-model estimate"));
        }
        if !obs.outcome.is_finite() {
            return Err(Error::row(i, "non-finite outcome"));
        }
        let slot = eligible
            .binary_search(&obs.arm)
            .map_err(|_| Error::row(i, format!("realized arm {} not eligible", obs.arm)))?;
        let e_w = propensities[i][slot];
        if !(e_w > 0.0) {
            return Err(Error::row(i, format!("non-positive propensity {e_w} on realized arm")));
        }
        let mut scores = Vec::with_capacity(m);
        for j in 0..m {
            let mut s = mu[i][j];
            if j == slot {
                s += (obs.outcome - mu[i][j]) / e_w;
            }
            scores.push(s);
        }
        out.push(scores);
    }
    AipwScoreTable::new(eligible.to_vec(), out)
}

/// Share of (ensemble policy, context) pairs assigning each arm:
/// `freq(w) = 1/S * sum_s 1/T * sum_t 1{pi_s(x_t) = w}`. Sums to one.
pub fn frequency_scores(
    ensemble: &[TreePolicy],
    contexts: &[Vec<f64>],
    k: usize,
) -> Result<Vec<f64>> {
    if ensemble.is_empty() {
        return Err(Error::invalid("empty policy ensemble"));
    }
    if contexts.is_empty() {
        return Err(Error::invalid("empty context set"));
    }
    let mut counts = vec![0u64; k];
    for policy in ensemble {
        for x in contexts {
            let w = policy.assign(x);
            if w >= k {
                return Err(Error::invalid(format!("ensemble policy assigns unknown arm {w}")));
            }
            counts[w] += 1;
        }
    }
    let total = (ensemble.len() * contexts.len()) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TreeNode;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn floor_schedule_values() {
        // t=1 collapses to 1/K
        assert_abs_diff_eq!(floor_schedule(1, 1.0 / 16.0, 8).unwrap(), 0.125, epsilon = 1e-15);
        // direct formula evaluation at the experiment default alpha
        let f = floor_schedule(1500, 1.0 / 16.0, 8).unwrap();
        assert_abs_diff_eq!(f, (1500f64).powf(-1.0 / 16.0) / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f, 0.07914, epsilon = 5e-6);
        assert!(floor_schedule(0, 0.5, 8).is_err());
    }

    #[test]
    fn floor_schedule_monotone() {
        let mut prev = f64::INFINITY;
        for t in 1..200 {
            let f = floor_schedule(t, 1.0 / 16.0, 8).unwrap();
            assert!(f <= prev);
            assert!(f <= 0.125);
            prev = f;
        }
        // monotone in alpha as well
        assert!(
            floor_schedule(100, 0.5, 8).unwrap() <= floor_schedule(100, 0.125, 8).unwrap()
        );
    }

    #[test]
    fn floor_transform_worked_example() {
        // c solved from the sum-to-one constraint: c = (1 - 4*0.1) / 0.7 = 6/7
        let e = apply_probability_floor(&[0.7, 0.2, 0.05, 0.05], 0.1).unwrap();
        assert_abs_diff_eq!(e[0], 0.614286, epsilon = 1e-6);
        assert_abs_diff_eq!(e[1], 0.185714, epsilon = 1e-6);
        assert_abs_diff_eq!(e[2], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(e[3], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn floor_transform_point_mass() {
        // c = (1 - 4*0.05) / 0.95, single above-floor arm lands on 0.85
        let e = apply_probability_floor(&[1.0, 0.0, 0.0, 0.0], 0.05).unwrap();
        assert_abs_diff_eq!(e[0], 0.85, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 0.05, epsilon = 1e-12);
    }

    #[test]
    fn floor_transform_uniform_untouched() {
        let u = vec![0.25; 4];
        for f in [0.0, 0.1, 0.25] {
            let e = apply_probability_floor(&u, f).unwrap();
            for v in &e {
                assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn floor_transform_maximal_floor_collapses_to_uniform() {
        let e = apply_probability_floor(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.125).unwrap();
        for v in &e {
            assert_abs_diff_eq!(*v, 0.125, epsilon = 1e-12);
        }
    }

    #[test]
    fn floor_infeasible_is_an_error() {
        assert!(apply_probability_floor(&[0.5, 0.5], 0.6).is_err());
        assert!(apply_probability_floor(&[0.7, 0.2], 0.1).is_err()); // sum != 1
    }

    proptest! {
        #[test]
        fn floor_transform_properties(raw in prop::collection::vec(0.0f64..1.0, 2..10), frac in 0.0f64..1.0) {
            let sum: f64 = raw.iter().sum();
            prop_assume!(sum > 1e-6);
            let raw: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let k = raw.len() as f64;
            let floor = frac / k;
            let e = apply_probability_floor(&raw, floor).unwrap();
            // sums to one, entries at or above the floor
            let total: f64 = e.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for v in &e {
                prop_assert!(*v >= floor - 1e-12);
            }
            // order preserving
            for i in 0..raw.len() {
                for j in 0..raw.len() {
                    if raw[i] >= raw[j] {
                        prop_assert!(e[i] >= e[j] - 1e-12);
                    }
                }
            }
            // idempotent for the same floor
            let e2 = apply_probability_floor(&e, floor).unwrap();
            for (a, b) in e.iter().zip(&e2) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn aipw_ipw_collapse() {
        // mu == 0 and a propensity of 1 on the realized arm: the score is the
        // raw outcome on that arm and zero elsewhere
        let obs = Observation {
            t: 1,
            batch: 1,
            context: vec![0.0],
            arm: 0,
            outcome: 5.0,
            propensities: vec![1.0, 0.0],
        };
        // eligible-arm propensities renormalized: arm 0 gets all the mass
        let t = aipw_scores(&[obs], &[0, 1], &[vec![0.0, 0.0]], &[vec![1.0, 0.0]]).unwrap();
        assert_eq!(t.rows()[0], vec![5.0, 0.0]);
    }

    #[test]
    fn aipw_formula_example() {
        // Y=2 on arm0 with e=0.5, mu=(1,3): score(arm0)=1+(2-1)/0.5=3, score(arm1)=3
        let obs = Observation {
            t: 1,
            batch: 1,
            context: vec![0.0],
            arm: 0,
            outcome: 2.0,
            propensities: vec![0.5, 0.5],
        };
        let t = aipw_scores(&[obs], &[0, 1], &[vec![1.0, 3.0]], &[vec![0.5, 0.5]]).unwrap();
        assert_abs_diff_eq!(t.rows()[0][0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.rows()[0][1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn aipw_rejects_bad_rows() {
        let obs = Observation {
            t: 1,
            batch: 1,
            context: vec![0.0],
            arm: 0,
            outcome: 2.0,
            propensities: vec![0.5, 0.5],
        };
        // zero propensity on the realized arm
        let err = aipw_scores(&[obs.clone()], &[0, 1], &[vec![0.0, 0.0]], &[vec![0.0, 1.0]]);
        assert!(matches!(err, Err(Error::Row { row: 0, .. })));
        // NaN in the outcome model
        let err = aipw_scores(&[obs], &[0, 1], &[vec![f64::NAN, 0.0]], &[vec![0.5, 0.5]]);
        assert!(err.is_err());
    }

    fn const_policy(arm: usize) -> TreePolicy {
        TreePolicy::leaf(arm)
    }

    #[test]
    fn frequency_scores_examples() {
        let contexts = vec![vec![0.0], vec![1.0]];
        // single constant policy
        let f = frequency_scores(&[const_policy(1)], &contexts, 3).unwrap();
        assert_eq!(f, vec![0.0, 1.0, 0.0]);
        // pi1 assigns (A, A); pi2 assigns (A, B) -> freq(A)=0.75, freq(B)=0.25
        let pi2 = TreePolicy::new(
            TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: Box::new(TreeNode::Leaf { arm: 0 }),
                right: Box::new(TreeNode::Leaf { arm: 1 }),
            },
            1,
        )
        .unwrap();
        let f = frequency_scores(&[const_policy(0), pi2.clone()], &contexts, 3).unwrap();
        assert_eq!(f, vec![0.75, 0.25, 0.0]);
        // permuting the ensemble leaves scores unchanged; they sum to one
        let g = frequency_scores(&[pi2, const_policy(0)], &contexts, 3).unwrap();
        assert_eq!(f, g);
        assert_abs_diff_eq!(f.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // empty context set is an error
        assert!(frequency_scores(&[const_policy(0)], &[], 3).is_err());
    }
}
