//! The model families behind the toolkit: cross-fitted per-arm ridge outcome
//! models, L1-penalized linear regression for the bootstrap Thompson variants,
//! penalized proportional-odds ordinal regression for the semi-synthetic DGP,
//! and one-standard-error regularization selection.

pub mod lasso;
pub mod lbfgs;
pub mod ordinal;
pub mod ridge;
pub mod select;

pub use lasso::{fit_lasso, fit_lasso_centered, lasso_lambda_max, select_lasso_lambda_cv, LassoFit};
pub use ordinal::{
    fit_ordinal, ordinal_feature_dim, ordinal_feature_map, OrdinalModel, ProportionalOdds,
};
pub use ridge::{fit_crossfit_mu, ridge_closed_form, CrossFitConfig, CrossFitMuHat};
pub use select::{one_se_selection, select_regularization_one_se, OneSeReport};
