//! Exact search for the score-maximizing decision-tree policy.
//!
//! The search maximizes `sum_t score(t, pi(x_t))` over axis-aligned trees of
//! a given maximal depth whose thresholds lie on a per-feature candidate grid:
//! midpoints between consecutive distinct observed values, capped at a
//! quantile-spaced budget. The recursion solves left/right subproblems per
//! split and compares against the best single leaf, so the returned tree is
//! the exact maximizer over that grid.
//!
//! Ties are broken deterministically: a leaf beats an equal-valued split, and
//! splits prefer the lower feature index, then the lower threshold; leaf arms
//! prefer the lower arm index. Root candidates are searched in parallel with
//! an ordered reduction, so parallel and sequential runs return the same tree.

use crate::error::{Error, Result};
use crate::exec;
use crate::policy::{Policy, TreeNode, TreePolicy};
use crate::scores::AipwScoreTable;

/// Candidate split thresholds for one feature: midpoints between consecutive
/// distinct values, thinned to at most `budget` evenly spaced picks.
pub fn candidate_thresholds(values: &[f64], budget: usize) -> Vec<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    if v.len() < 2 {
        return Vec::new();
    }
    let mids: Vec<f64> = v.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    if mids.len() <= budget {
        return mids;
    }
    let mut out = Vec::with_capacity(budget);
    for i in 0..budget {
        let idx = i * (mids.len() - 1) / (budget - 1);
        if out.last() != Some(&mids[idx]) {
            out.push(mids[idx]);
        }
    }
    out
}

struct Search<'a> {
    /// columns[f][row]
    columns: Vec<Vec<f64>>,
    /// scores[row * n_arms + slot]
    scores: Vec<f64>,
    n_arms: usize,
    grids: Vec<Vec<f64>>,
    eligible: &'a [usize],
}

impl Search<'_> {
    /// Best single leaf on a row set: (objective, eligible slot).
    fn leaf_solve(&self, rows: &[usize]) -> (f64, usize) {
        let mut sums = vec![0.0f64; self.n_arms];
        for &r in rows {
            let base = r * self.n_arms;
            for (s, v) in sums.iter_mut().zip(&self.scores[base..base + self.n_arms]) {
                *s += v;
            }
        }
        let mut best = 0usize;
        for (j, s) in sums.iter().enumerate() {
            if *s > sums[best] {
                best = j;
            }
        }
        (sums[best], best)
    }

    /// Exact depth-1 solve via bucketed prefix sums over each feature's grid.
    fn depth1_solve(&self, rows: &[usize]) -> (f64, TreeNode) {
        let (leaf_value, leaf_slot) = self.leaf_solve(rows);
        let mut best_value = leaf_value;
        let mut best_node = TreeNode::Leaf { arm: self.eligible[leaf_slot] };
        let mut totals = vec![0.0f64; self.n_arms];
        for &r in rows {
            let base = r * self.n_arms;
            for (s, v) in totals.iter_mut().zip(&self.scores[base..base + self.n_arms]) {
                *s += v;
            }
        }
        for (f, grid) in self.grids.iter().enumerate() {
            if grid.is_empty() {
                continue;
            }
            let m = grid.len();
            // bucket b collects rows with grid[b-1] < x <= grid[b]
            let mut buckets = vec![0.0f64; (m + 1) * self.n_arms];
            let col = &self.columns[f];
            for &r in rows {
                let b = grid.partition_point(|t| *t < col[r]);
                let base = r * self.n_arms;
                let dst = &mut buckets[b * self.n_arms..(b + 1) * self.n_arms];
                for (s, v) in dst.iter_mut().zip(&self.scores[base..base + self.n_arms]) {
                    *s += v;
                }
            }
            let mut left = vec![0.0f64; self.n_arms];
            for (j, threshold) in grid.iter().enumerate() {
                for (l, b) in left.iter_mut().zip(&buckets[j * self.n_arms..(j + 1) * self.n_arms])
                {
                    *l += b;
                }
                let mut bl = 0usize;
                let mut br = 0usize;
                let mut left_best = f64::NEG_INFINITY;
                let mut right_best = f64::NEG_INFINITY;
                for a in 0..self.n_arms {
                    if left[a] > left_best {
                        left_best = left[a];
                        bl = a;
                    }
                    let r = totals[a] - left[a];
                    if r > right_best {
                        right_best = r;
                        br = a;
                    }
                }
                let value = left_best + right_best;
                if value > best_value {
                    best_value = value;
                    best_node = TreeNode::Split {
                        feature: f,
                        threshold: *threshold,
                        left: Box::new(TreeNode::Leaf { arm: self.eligible[bl] }),
                        right: Box::new(TreeNode::Leaf { arm: self.eligible[br] }),
                    };
                }
            }
        }
        (best_value, best_node)
    }

    fn solve(&self, rows: &[usize], depth: usize) -> (f64, TreeNode) {
        match depth {
            0 => {
                let (value, slot) = self.leaf_solve(rows);
                (value, TreeNode::Leaf { arm: self.eligible[slot] })
            }
            1 => self.depth1_solve(rows),
            _ => {
                let (leaf_value, leaf_slot) = self.leaf_solve(rows);
                let mut best_value = leaf_value;
                let mut best_node = TreeNode::Leaf { arm: self.eligible[leaf_slot] };
                for (f, grid) in self.grids.iter().enumerate() {
                    let col = &self.columns[f];
                    for &threshold in grid {
                        let (lrows, rrows): (Vec<usize>, Vec<usize>) =
                            rows.iter().partition(|&&r| col[r] <= threshold);
                        let (lv, ln) = self.solve(&lrows, depth - 1);
                        let (rv, rn) = self.solve(&rrows, depth - 1);
                        let value = lv + rv;
                        if value > best_value {
                            best_value = value;
                            best_node = TreeNode::Split {
                                feature: f,
                                threshold,
                                left: Box::new(ln),
                                right: Box::new(rn),
                            };
                        }
                    }
                }
                (best_value, best_node)
            }
        }
    }

    /// Like `solve`, but distributes root split candidates across workers and
    /// reduces them in candidate order.
    fn solve_root(&self, rows: &[usize], depth: usize) -> (f64, TreeNode) {
        if depth < 2 {
            return self.solve(rows, depth);
        }
        let candidates: Vec<(usize, f64)> = self
            .grids
            .iter()
            .enumerate()
            .flat_map(|(f, grid)| grid.iter().map(move |t| (f, *t)))
            .collect();
        let results = exec::par_map(&candidates, |&(f, threshold)| {
            let col = &self.columns[f];
            let (lrows, rrows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| col[r] <= threshold);
            let (lv, ln) = self.solve(&lrows, depth - 1);
            let (rv, rn) = self.solve(&rrows, depth - 1);
            (lv + rv, ln, rn)
        });
        let (leaf_value, leaf_slot) = self.leaf_solve(rows);
        let mut best_value = leaf_value;
        let mut best_node = TreeNode::Leaf { arm: self.eligible[leaf_slot] };
        for ((f, threshold), (value, ln, rn)) in candidates.into_iter().zip(results) {
            if value > best_value {
                best_value = value;
                best_node = TreeNode::Split {
                    feature: f,
                    threshold,
                    left: Box::new(ln),
                    right: Box::new(rn),
                };
            }
        }
        (best_value, best_node)
    }
}

fn make_search<'a>(
    scores: &'a AipwScoreTable,
    contexts: &[Vec<f64>],
    threshold_budget: usize,
) -> Result<Search<'a>> {
    if scores.is_empty() {
        return Err(Error::invalid("empty score table"));
    }
    if contexts.len() != scores.len() {
        return Err(Error::invalid("context and score row counts differ"));
    }
    if threshold_budget < 2 {
        return Err(Error::invalid("threshold budget must be at least 2"));
    }
    let p = contexts[0].len();
    if contexts.iter().any(|x| x.len() != p) {
        return Err(Error::invalid("ragged context matrix"));
    }
    let n_arms = scores.eligible_arms().len();
    let columns: Vec<Vec<f64>> = (0..p).map(|f| contexts.iter().map(|x| x[f]).collect()).collect();
    let grids: Vec<Vec<f64>> =
        columns.iter().map(|col| candidate_thresholds(col, threshold_budget)).collect();
    let mut flat = Vec::with_capacity(scores.len() * n_arms);
    for row in scores.rows() {
        flat.extend_from_slice(row);
    }
    Ok(Search { columns, scores: flat, n_arms, grids, eligible: scores.eligible_arms() })
}

/// Exact score-maximizing tree of maximal depth `depth` (0..=3). Depth 0
/// returns the best single-arm policy as a lone leaf.
pub fn solve_tree(
    scores: &AipwScoreTable,
    contexts: &[Vec<f64>],
    depth: usize,
    threshold_budget: usize,
) -> Result<TreePolicy> {
    let (policy, _) = solve_tree_with_value(scores, contexts, depth, threshold_budget)?;
    Ok(policy)
}

/// [`solve_tree`] plus the attained objective (the sum of scores).
pub fn solve_tree_with_value(
    scores: &AipwScoreTable,
    contexts: &[Vec<f64>],
    depth: usize,
    threshold_budget: usize,
) -> Result<(TreePolicy, f64)> {
    if depth > 3 {
        return Err(Error::invalid("tree depth is limited to 3"));
    }
    let search = make_search(scores, contexts, threshold_budget)?;
    let rows: Vec<usize> = (0..scores.len()).collect();
    let (value, node) = search.solve_root(&rows, depth);
    Ok((TreePolicy::new(node, depth)?, value))
}

/// Mean score attained by a policy: `mean_t score(t, pi(x_t))`.
pub fn evaluate_policy_on_scores(
    policy: &dyn Policy,
    scores: &AipwScoreTable,
    contexts: &[Vec<f64>],
) -> Result<f64> {
    if scores.is_empty() || contexts.len() != scores.len() {
        return Err(Error::invalid("empty or mismatched score table"));
    }
    let mut total = 0.0;
    for (i, x) in contexts.iter().enumerate() {
        let arm = policy.assign(x);
        total += scores
            .score(i, arm)
            .ok_or_else(|| Error::row(i, format!("policy assigns ineligible arm {arm}")))?;
    }
    Ok(total / scores.len() as f64)
}

/// Depth selection by a chronological train/test split: fit each depth on the
/// first `train_fraction` of rows, score it on the held-out rest, pick the
/// depth with the highest held-out value (ties prefer the smaller depth), and
/// refit that depth on all rows.
pub fn select_depth_by_cv(
    scores: &AipwScoreTable,
    contexts: &[Vec<f64>],
    depths: &[usize],
    threshold_budget: usize,
    train_fraction: f64,
) -> Result<(usize, TreePolicy)> {
    if depths.is_empty() {
        return Err(Error::invalid("empty depth set"));
    }
    if scores.is_empty() || contexts.len() != scores.len() {
        return Err(Error::invalid("empty or mismatched score table"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train fraction must lie in (0, 1)"));
    }
    let n = scores.len();
    let n_train = ((n as f64) * train_fraction).floor() as usize;
    if n_train == 0 {
        return Err(Error::invalid("training split is empty"));
    }
    if n_train == n {
        return Err(Error::invalid("test split is empty"));
    }
    let train_scores = scores.slice(0..n_train);
    let train_ctx = &contexts[..n_train];
    let test_scores = scores.slice(n_train..n);
    let test_ctx = &contexts[n_train..];

    let mut ordered: Vec<usize> = depths.to_vec();
    ordered.sort_unstable();
    ordered.dedup();

    let mut best: Option<(f64, usize)> = None;
    for &d in &ordered {
        let policy = solve_tree(&train_scores, train_ctx, d, threshold_budget)?;
        let value = evaluate_policy_on_scores(&policy, &test_scores, test_ctx)?;
        // strict improvement required, so ties keep the smaller depth
        if best.map(|(v, _)| value > v).unwrap_or(true) {
            best = Some((value, d));
        }
    }
    let (_, d_star) = best.unwrap();
    let refit = solve_tree(scores, contexts, d_star, threshold_budget)?;
    Ok((d_star, refit))
}
