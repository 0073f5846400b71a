//! Replicated design comparisons and one-parameter sweeps.
//!
//! A study crosses algorithms with regularization penalties. Within each
//! (penalty, replicate) cell the DGP and the per-batch context draws are
//! shared across algorithms, so cross-design comparisons are paired.
//! Replicates run in parallel; aggregation is an ordered reduction keyed by
//! (penalty, replicate, algorithm), so study output is byte-stable.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bandits::Algorithm;
use crate::error::{Error, Result};
use crate::exec;
use crate::seed::{purpose, SeedStream};
use crate::sim::dgp::build_dgp;
use crate::sim::engine::{run_replicate, ExperimentConfig, SimSummary};
use crate::stats;
use crate::types::{format_f64, ObservationLog};

fn default_levels() -> usize {
    crate::types::SURVEY_LEVELS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub algorithms: Vec<Algorithm>,
    pub lambdas: Vec<f64>,
    pub experiment: ExperimentConfig,
    #[serde(default = "default_levels")]
    pub n_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    /// Ordered by (lambda index, replicate, algorithm index).
    pub summaries: Vec<SimSummary>,
    pub algorithms: Vec<Algorithm>,
    pub lambdas: Vec<f64>,
    pub replicates: usize,
}

impl StudyResult {
    pub fn cell(&self, algorithm: Algorithm, lambda: f64) -> Vec<&SimSummary> {
        self.summaries
            .iter()
            .filter(|s| s.algorithm == algorithm && s.lambda == lambda)
            .collect()
    }
}

/// Run the full study on a seed corpus.
pub fn run_study(corpus: &ObservationLog, cfg: &StudyConfig) -> Result<StudyResult> {
    if cfg.algorithms.is_empty() || cfg.lambdas.is_empty() {
        return Err(Error::invalid("study needs at least one algorithm and one penalty"));
    }
    if cfg.experiment.replicates < 2 {
        return Err(Error::invalid("study needs at least two replicates"));
    }
    cfg.experiment.validate()?;
    let master = SeedStream::new(cfg.experiment.seed);

    // fixed context draw shared by every cell of the study
    let pool: Vec<Vec<f64>> = corpus.rows().iter().map(|o| o.context.clone()).collect();
    if pool.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    let mut vrng = master.child(purpose::VALUE_CONTEXTS).rng();
    let value_contexts: Vec<Vec<f64>> = {
        use rand::Rng;
        (0..cfg.experiment.value_sample)
            .map(|_| pool[vrng.random_range(0..pool.len())].clone())
            .collect()
    };

    let reps = cfg.experiment.replicates;
    let cells: Vec<(usize, usize)> = (0..cfg.lambdas.len())
        .flat_map(|li| (0..reps).map(move |r| (li, r)))
        .collect();
    let per_cell: Vec<Result<Vec<SimSummary>>> = exec::par_map(&cells, |&(li, r)| {
        let dgp_stream = master.child(purpose::DGP).child(li as u64).child(r as u64);
        let dgp = build_dgp(corpus, &[cfg.lambdas[li]], cfg.n_levels, dgp_stream)?;
        let ctx_stream = master.child(purpose::CONTEXTS).child(li as u64).child(r as u64);
        let mut out = Vec::with_capacity(cfg.algorithms.len());
        for (ai, &alg) in cfg.algorithms.iter().enumerate() {
            let mut exp = cfg.experiment.clone();
            exp.bandit.algorithm = alg;
            let run_stream = master
                .child(purpose::RUN)
                .child(li as u64)
                .child(r as u64)
                .child(ai as u64);
            let (mut summary, _, _) =
                run_replicate(&dgp, &exp, &value_contexts, ctx_stream, run_stream)?;
            summary.replicate = r;
            summary.lambda = cfg.lambdas[li];
            out.push(summary);
        }
        Ok(out)
    });
    let mut summaries = Vec::with_capacity(cells.len() * cfg.algorithms.len());
    for cell in per_cell {
        summaries.extend(cell?);
    }
    Ok(StudyResult {
        summaries,
        algorithms: cfg.algorithms.clone(),
        lambdas: cfg.lambdas.clone(),
        replicates: reps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub mean_value: f64,
    pub se_value: f64,
    pub mean_regret: f64,
    pub se_regret: f64,
}

/// Per-cell means/SEs plus the tree-bagging-vs-uniform ratio rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub cells: Vec<StudyCell>,
    pub lambdas: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    /// Learned-policy value of TreeBagging as % of Uniform, per penalty.
    pub improvement_pct: Vec<Option<f64>>,
    /// Per-period regret of TreeBagging as % of Uniform, per penalty.
    pub reduction_pct: Vec<Option<f64>>,
}

pub fn summarize(result: &StudyResult) -> StudyTable {
    let mut cells = Vec::new();
    for &alg in &result.algorithms {
        for &lambda in &result.lambdas {
            let rows = result.cell(alg, lambda);
            let values: Vec<f64> = rows.iter().map(|s| s.learned_policy_value).collect();
            let regrets: Vec<f64> = rows.iter().map(|s| s.avg_regret_overall).collect();
            let (mv, sv) = stats::mean_se(&values);
            let (mr, sr) = stats::mean_se(&regrets);
            cells.push(StudyCell {
                algorithm: alg,
                lambda,
                mean_value: mv,
                se_value: sv,
                mean_regret: mr,
                se_regret: sr,
            });
        }
    }
    let ratio = |lambda: f64, f: fn(&StudyCell) -> f64| -> Option<f64> {
        let tb = cells
            .iter()
            .find(|c| c.algorithm == Algorithm::TreeBagging && c.lambda == lambda)?;
        let uni = cells.iter().find(|c| c.algorithm == Algorithm::Uniform && c.lambda == lambda)?;
        Some(100.0 * f(tb) / f(uni))
    };
    let improvement_pct =
        result.lambdas.iter().map(|&l| ratio(l, |c| c.mean_value)).collect();
    let reduction_pct = result.lambdas.iter().map(|&l| ratio(l, |c| c.mean_regret)).collect();
    StudyTable {
        cells,
        lambdas: result.lambdas.clone(),
        algorithms: result.algorithms.clone(),
        improvement_pct,
        reduction_pct,
    }
}

/// Paired per-replicate comparison of a metric between two algorithms at one
/// penalty: mean difference (a - b), its SE, and the one-sided upper p-value.
pub fn paired_comparison(
    result: &StudyResult,
    a: Algorithm,
    b: Algorithm,
    lambda: f64,
    metric: fn(&SimSummary) -> f64,
) -> Result<(f64, f64, f64)> {
    let rows_a = result.cell(a, lambda);
    let rows_b = result.cell(b, lambda);
    if rows_a.len() != rows_b.len() || rows_a.is_empty() {
        return Err(Error::invalid("mismatched replicate sets for paired comparison"));
    }
    let diffs: Vec<f64> = rows_a
        .iter()
        .zip(&rows_b)
        .map(|(x, y)| {
            debug_assert_eq!(x.replicate, y.replicate);
            metric(x) - metric(y)
        })
        .collect();
    let (mean, se) = stats::mean_se(&diffs);
    let p = stats::one_sided_upper_p(stats::z_statistic(mean, se));
    Ok((mean, se, p))
}

/// Long-format CSV: one row per (algorithm, lambda, replicate, metric).
pub fn write_tidy_csv<W: Write>(result: &StudyResult, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["algorithm", "lambda", "replicate", "metric", "value"])?;
    for s in &result.summaries {
        let mut emit = |metric: &str, value: f64| -> Result<()> {
            wtr.write_record([
                s.algorithm.name(),
                &format_f64(s.lambda),
                &s.replicate.to_string(),
                metric,
                &format_f64(value),
            ])?;
            Ok(())
        };
        emit("learned_policy_value", s.learned_policy_value)?;
        emit("fixed_policy_value", s.fixed_policy_value)?;
        emit("optimal_value", s.optimal_value)?;
        emit("avg_regret_overall", s.avg_regret_overall)?;
        emit("avg_regret_learning", s.avg_regret_learning)?;
        emit("chosen_depth", s.chosen_depth as f64)?;
        if let Some(c) = &s.contrast {
            emit("value_diff_estimate", c.diff)?;
            emit("value_diff_se", c.se)?;
            emit("value_diff_p", c.p_value)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Wide-format summary CSV shaped like the comparison tables: one block per
/// metric with algorithms as rows and penalties as columns.
pub fn write_summary_csv<W: Write>(table: &StudyTable, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["metric".to_string(), "algorithm".to_string()];
    header.extend(table.lambdas.iter().map(|l| format!("lambda_{}", format_f64(*l))));
    wtr.write_record(&header)?;
    type Getter = fn(&StudyCell) -> f64;
    let blocks: [(&str, Getter, Getter); 2] = [
        ("learned_policy_value", |c| c.mean_value, |c| c.se_value),
        ("avg_regret", |c| c.mean_regret, |c| c.se_regret),
    ];
    for (metric, value, se) in blocks {
        for &alg in &table.algorithms {
            let mut mean_row = vec![metric.to_string(), alg.name().to_string()];
            let mut se_row = vec![format!("{metric}_se"), alg.name().to_string()];
            for &lambda in &table.lambdas {
                let cell = table
                    .cells
                    .iter()
                    .find(|c| c.algorithm == alg && c.lambda == lambda)
                    .expect("cell exists");
                mean_row.push(format_f64(value(cell)));
                se_row.push(format_f64(se(cell)));
            }
            wtr.write_record(&mean_row)?;
            wtr.write_record(&se_row)?;
        }
    }
    let mut imp = vec!["improvement_pct_of_uniform".to_string(), "TreeBagging".to_string()];
    for v in &table.improvement_pct {
        imp.push(v.map(format_f64).unwrap_or_default());
    }
    wtr.write_record(&imp)?;
    let mut red = vec!["regret_pct_of_uniform".to_string(), "TreeBagging".to_string()];
    for v in &table.reduction_pct {
        red.push(v.map(format_f64).unwrap_or_default());
    }
    wtr.write_record(&red)?;
    wtr.flush()?;
    Ok(())
}

/// The tuning parameters the sweep can vary, one at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Fraction of the experiment devoted to evaluation (1 - learning).
    EvaluationFraction,
    /// Decay exponent of the assignment-probability floor.
    FloorExponent,
    /// Number of arms kept by frequency score.
    SelectedArms,
    /// Total experiment length.
    TotalLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: SweepParameter,
    pub value: f64,
    pub algorithm: Algorithm,
    pub mean_learned_value: f64,
    pub se_learned_value: f64,
    /// Mean true difference between the learned tree and fixed policies.
    pub mean_true_diff: f64,
    /// Mean evaluation-phase estimate of that difference and its mean SE.
    pub mean_diff_estimate: f64,
    pub mean_diff_se: f64,
    /// Fraction of replicates rejecting at the 5% level.
    pub power: f64,
    pub mean_regret: f64,
}

/// Vary one tuning parameter over a grid, holding everything else at the base
/// configuration, and summarize each grid point.
pub fn parameter_sweep(
    corpus: &ObservationLog,
    base: &StudyConfig,
    parameter: SweepParameter,
    grid: &[f64],
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::invalid("empty sweep grid"));
    }
    let mut out = Vec::new();
    for &value in grid {
        let mut cfg = base.clone();
        match parameter {
            SweepParameter::EvaluationFraction => {
                cfg.experiment.learning_fraction = 1.0 - value;
            }
            SweepParameter::FloorExponent => cfg.experiment.bandit.floor_alpha = value,
            SweepParameter::SelectedArms => cfg.experiment.pipeline.top_k = value as usize,
            SweepParameter::TotalLength => cfg.experiment.total_periods = value as usize,
        }
        let result = run_study(corpus, &cfg)?;
        for &alg in &result.algorithms {
            for &lambda in &result.lambdas {
                let rows = result.cell(alg, lambda);
                let values: Vec<f64> = rows.iter().map(|s| s.learned_policy_value).collect();
                let regrets: Vec<f64> = rows.iter().map(|s| s.avg_regret_overall).collect();
                let true_diffs: Vec<f64> = rows
                    .iter()
                    .map(|s| s.learned_policy_value - s.fixed_policy_value)
                    .collect();
                let estimates: Vec<f64> =
                    rows.iter().filter_map(|s| s.contrast.as_ref()).map(|c| c.diff).collect();
                let ses: Vec<f64> =
                    rows.iter().filter_map(|s| s.contrast.as_ref()).map(|c| c.se).collect();
                let ps: Vec<f64> = rows
                    .iter()
                    .filter_map(|s| s.contrast.as_ref())
                    .map(|c| c.p_value)
                    .collect();
                let (mv, sv) = stats::mean_se(&values);
                out.push(SweepPoint {
                    parameter,
                    value,
                    algorithm: alg,
                    mean_learned_value: mv,
                    se_learned_value: sv,
                    mean_true_diff: stats::mean(&true_diffs),
                    mean_diff_estimate: stats::mean(&estimates),
                    mean_diff_se: stats::mean(&ses),
                    power: crate::eval::power_across_sims(&ps, 0.05).unwrap_or(f64::NAN),
                    mean_regret: stats::mean(&regrets),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "parameter",
        "value",
        "algorithm",
        "mean_learned_value",
        "se_learned_value",
        "mean_true_diff",
        "mean_diff_estimate",
        "mean_diff_se",
        "power",
        "mean_regret",
    ])?;
    for p in points {
        wtr.write_record([
            format!("{:?}", p.parameter),
            format_f64(p.value),
            p.algorithm.name().to_string(),
            format_f64(p.mean_learned_value),
            format_f64(p.se_learned_value),
            format_f64(p.mean_true_diff),
            format_f64(p.mean_diff_estimate),
            format_f64(p.mean_diff_se),
            format_f64(p.power),
            format_f64(p.mean_regret),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
