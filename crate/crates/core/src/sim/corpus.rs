//! Built-in synthetic seed corpus.
//!
//! A documented generator producing survey-schema contexts with planted
//! heterogeneity: one politics-aligned arm, one age-aligned arm, and one
//! dominant moderate arm, with the remaining arms inferior everywhere.
//! Outcomes land on the 21-level integer scale, arms are assigned uniformly,
//! so the corpus can seed the semi-synthetic DGP or exercise the learning
//! pipeline directly. User-supplied corpora in the same CSV schema work
//! identically.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::seed::SeedStream;
use crate::types::{charity_arms, survey_schema, Observation, ObservationLog};

/// Baseline mean response per arm, ordered as [`charity_arms`]:
/// aipac, blm, zuckerberg, clinton, green, nra, peta, planned.
const ARM_BASES: [f64; 8] = [0.5, 0.5, 1.0, -0.5, 4.5, -3.0, 2.5, -0.5];

/// Lift for the politics-aligned arm (planned) among liberals.
const PLANNED_LIBERAL_LIFT: f64 = 7.0;
/// Lift for the gun-rights arm (nra) among anti-choice respondents.
const NRA_ANTI_CHOICE_LIFT: f64 = 9.5;
/// Lift for the age-aligned arm (blm) among respondents under 30.
const BLM_YOUNG_LIFT: f64 = 5.0;
/// Additional blm lift among liberals.
const BLM_LIBERAL_LIFT: f64 = 3.0;
/// Outcome noise standard deviation before rounding to the level grid.
const NOISE_SD: f64 = 4.5;

/// Generate `n` rows under uniform assignment.
pub fn synthetic_survey_corpus(n: usize, stream: SeedStream) -> Result<ObservationLog> {
    let schema = survey_schema();
    let arms = charity_arms();
    let k = arms.k();
    let mut log = ObservationLog::new(schema, arms);
    let mut rng = stream.rng();
    let noise = Normal::new(0.0, NOISE_SD).unwrap();
    for t in 1..=n {
        let x = draw_context(&mut rng);
        let arm = rng.random_range(0..k);
        let mean = planted_mean(&x, arm);
        let y = (mean + noise.sample(&mut rng)).round().clamp(-10.0, 10.0);
        log.append(Observation {
            t,
            batch: 1 + (t - 1) / 150,
            context: x,
            arm,
            outcome: y,
            propensities: vec![1.0 / k as f64; k],
        })?;
    }
    Ok(log)
}

/// The generator's conditional mean (before noise and rounding). Feature
/// indices follow [`survey_schema`].
pub fn planted_mean(x: &[f64], arm: usize) -> f64 {
    let age = x[0];
    let leaning = x[5];
    let abortion = x[11];
    let liberal = leaning < 4.0;
    let mut mean = ARM_BASES[arm];
    match arm {
        // blm: favored by the young and by liberals
        1 => {
            if age < 30.0 {
                mean += BLM_YOUNG_LIFT;
            }
            if liberal {
                mean += BLM_LIBERAL_LIFT;
            } else {
                mean -= 2.0;
            }
        }
        // nra: favored by anti-choice respondents, strongly disliked otherwise
        5 => {
            if abortion > 3.0 {
                mean += NRA_ANTI_CHOICE_LIFT;
            }
        }
        // planned: favored by liberals
        7 => {
            if liberal {
                mean += PLANNED_LIBERAL_LIFT;
            }
        }
        _ => {}
    }
    mean
}

fn draw_context<R: Rng>(rng: &mut R) -> Vec<f64> {
    // age skews younger; the remaining fields roughly match survey marginals
    let age = (18.0 + 62.0 * rng.random::<f64>().powf(1.3)).floor().min(99.0);
    let male = f64::from(rng.random_bool(0.45));
    let race = f64::from(rng.random_bool(0.7));
    let married = f64::from(rng.random_bool(0.5));
    let last_donation = rng.random_range(1..=4) as f64;
    let political_leaning = rng.random_range(1..=7) as f64;
    let liberal = political_leaning < 4.0;
    let religious = f64::from(rng.random_bool(if liberal { 0.45 } else { 0.7 }));
    let rural = f64::from(rng.random_bool(if liberal { 0.4 } else { 0.65 }));
    // policy views correlate with leaning; 1 = strongly disagree
    let lean01 = (political_leaning - 1.0) / 6.0;
    let draw_view = |rng: &mut R, base: f64| -> f64 {
        let v = base * 4.0 + rng.random_range(-1.4..1.4);
        v.round().clamp(1.0, 5.0)
    };
    let views_immigration = draw_view(rng, lean01);
    let views_global_warming = draw_view(rng, 1.0 - lean01);
    let views_right_bear_arms = draw_view(rng, 1.0 - lean01);
    let views_abortion = draw_view(rng, lean01);
    let mut news = |liberal_outlet: bool| -> f64 {
        let base: f64 = if liberal_outlet == liberal { 2.5 } else { 4.5 };
        (base + rng.random_range(-1.6..1.6)).round().clamp(1.0, 6.0)
    };
    let news_fox = news(false);
    let news_cnn = news(true);
    let news_nyt = news(true);
    let news_wapo = news(true);
    let news_wsj = news(false);
    let social_media = rng.random_range(1..=6) as f64;
    vec![
        age,
        male,
        race,
        married,
        last_donation,
        political_leaning,
        religious,
        rural,
        views_immigration,
        views_global_warming,
        views_right_bear_arms,
        views_abortion,
        news_fox,
        news_cnn,
        news_nyt,
        news_wapo,
        news_wsj,
        social_media,
    ]
}
