//! Semi-synthetic simulation: data-generating processes fit to a seed corpus,
//! the batched experiment loop, and replicated design comparisons.

pub mod corpus;
pub mod dgp;
pub mod engine;
pub mod study;

pub use corpus::synthetic_survey_corpus;
pub use dgp::{build_dgp, Dgp, PlantedDgp, SemiSyntheticDgp};
pub use engine::{run_replicate, ExperimentConfig, SimSummary};
pub use study::{
    parameter_sweep, run_study, summarize, StudyConfig, StudyResult, StudyTable, SweepParameter,
    SweepPoint,
};
