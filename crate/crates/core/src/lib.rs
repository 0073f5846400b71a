//! Contextual-bandit experimentation toolkit.
//!
//! The crate covers the full life cycle of a batched adaptive experiment:
//!
//! - [`types`]: arms, context schemas, and the append-only observation log
//!   that every estimator consumes.
//! - [`scores`]: the probability-floor transform, its decay schedule, AIPW
//!   scoring, and ensemble frequency scores.
//! - [`models`]: cross-fitted ridge outcome models, L1-penalized linear
//!   regression, and penalized proportional-odds ordinal regression.
//! - [`tree`]: exact decision-tree policy search over doubly-robust scores.
//! - [`bandits`]: batch assignment algorithms (uniform, tree bagging with a
//!   decaying probability floor, and three bootstrap Thompson variants).
//! - [`pipeline`]: end-of-learning-phase policy learning with arm pruning.
//! - [`eval`]: evaluation-phase assignment mixture, IPW value estimates,
//!   hypothesis tests, and descriptive statistics.
//! - [`sim`]: semi-synthetic data-generating processes, the batched
//!   experiment loop, and replicated design comparisons.
//!
//! With the default `parallel` feature, bootstrap fits, tree search, and
//! simulation replicates run on the rayon global pool. Disabling the feature
//! yields a dependency-free sequential build that produces bit-identical
//! results.

pub mod bandits;
pub mod error;
pub mod eval;
pub mod exec;
pub mod models;
pub mod pipeline;
pub mod policy;
pub mod scores;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod tree;
pub mod types;

pub use error::{Error, Result};
