//! One-standard-error regularization selection.
//!
//! Scores each candidate penalty by k-fold cross-validated mean squared error
//! of the ordinal outcome model's predicted means, with outcomes and
//! predictions normalized to [0, 1], then keeps every penalty whose CV mean
//! lies within one standard error of the best.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ordinal::{level_of_outcome, OrdinalModel};
use crate::types::ObservationLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneSeReport {
    pub lambdas: Vec<f64>,
    pub cv_means: Vec<f64>,
    pub cv_ses: Vec<f64>,
    pub selected: Vec<f64>,
    pub best_lambda: f64,
}

/// Pure aggregation step: given per-penalty fold scores, select all penalties
/// whose mean is at or below (best mean + SE of best). The boundary is
/// inclusive.
pub fn one_se_selection(lambdas: &[f64], fold_scores: &[Vec<f64>]) -> Result<OneSeReport> {
    if lambdas.is_empty() || lambdas.len() != fold_scores.len() {
        return Err(Error::invalid("need one fold-score vector per lambda"));
    }
    let folds = fold_scores[0].len();
    if folds < 2 || fold_scores.iter().any(|f| f.len() != folds) {
        return Err(Error::invalid("need at least two folds per lambda"));
    }
    let mut cv_means = Vec::with_capacity(lambdas.len());
    let mut cv_ses = Vec::with_capacity(lambdas.len());
    for scores in fold_scores {
        let (m, se) = crate::stats::mean_se(scores);
        cv_means.push(m);
        cv_ses.push(se);
    }
    let mut best = 0usize;
    for (i, m) in cv_means.iter().enumerate() {
        if *m < cv_means[best] {
            best = i;
        }
    }
    let bound = cv_means[best] + cv_ses[best];
    let selected: Vec<f64> = lambdas
        .iter()
        .zip(&cv_means)
        .filter(|(_, m)| **m <= bound)
        .map(|(l, _)| *l)
        .collect();
    Ok(OneSeReport { lambdas: lambdas.to_vec(), cv_means, cv_ses, selected, best_lambda: lambdas[best] })
}

/// Cross-validated one-SE selection on a logged corpus with on-grid outcomes.
/// Folds are contiguous in row order, so the procedure is deterministic.
pub fn select_regularization_one_se(
    corpus: &ObservationLog,
    lambdas: &[f64],
    folds: usize,
    n_levels: usize,
) -> Result<OneSeReport> {
    let rows = corpus.rows();
    if rows.len() < folds {
        return Err(Error::invalid(format!(
            "corpus has {} rows, fewer than {folds} folds",
            rows.len()
        )));
    }
    if lambdas.is_empty() {
        return Err(Error::invalid("empty candidate penalty set"));
    }
    let range = (corpus.schema().outcome_min, corpus.schema().outcome_max);
    let span = range.1 - range.0;
    let k = corpus.arms().k();
    let n = rows.len();
    let contexts: Vec<Vec<f64>> = rows.iter().map(|o| o.context.clone()).collect();
    let arms: Vec<usize> = rows.iter().map(|o| o.arm).collect();
    let levels: Vec<usize> = rows
        .iter()
        .map(|o| level_of_outcome(o.outcome, range, n_levels))
        .collect::<Result<_>>()?;

    let fold_bounds: Vec<(usize, usize)> =
        (0..folds).map(|f| (f * n / folds, (f + 1) * n / folds)).collect();

    let scores: Vec<Vec<f64>> = crate::exec::par_map(lambdas, |&lambda| {
        fold_bounds
            .iter()
            .map(|&(lo, hi)| {
                let train: Vec<usize> = (0..n).filter(|i| *i < lo || *i >= hi).collect();
                let tc: Vec<Vec<f64>> = train.iter().map(|&i| contexts[i].clone()).collect();
                let ta: Vec<usize> = train.iter().map(|&i| arms[i]).collect();
                let tl: Vec<usize> = train.iter().map(|&i| levels[i]).collect();
                let model = OrdinalModel::fit(&tc, &ta, &tl, k, lambda, n_levels, range)?;
                let mse = (lo..hi)
                    .map(|i| {
                        let pred = model.conditional_mean(&contexts[i], arms[i]);
                        let y01 = (rows[i].outcome - range.0) / span;
                        let p01 = (pred - range.0) / span;
                        (y01 - p01) * (y01 - p01)
                    })
                    .sum::<f64>()
                    / (hi - lo) as f64;
                Ok(mse)
            })
            .collect::<Result<Vec<f64>>>()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    one_se_selection(lambdas, &scores)
}
