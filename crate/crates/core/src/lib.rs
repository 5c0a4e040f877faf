//! Feature multi-selection for linear regression.
//!
//! Every attribute of an object is observed through noisy judgments, and each
//! judgment costs something at prediction time. Given a training set where
//! every attribute was judged `k >= 2` times, this crate decides how many
//! judgments of each attribute to buy per object (a [`RepeatVector`]) and fits
//! a least-squares predictor on the averaged judgments.
//!
//! The pipeline is:
//!
//! 1. [`estimation::estimate_moments`] computes label correlations, internal
//!    (inter-rater) variances and the external covariance from the k-repeated
//!    training set.
//! 2. [`multiselect::greedy_select`] grows a repeat vector one judgment at a
//!    time under the budget, using either the diagonal scoring objective or
//!    the full covariance objective.
//! 3. [`simulate::top_up`] acquires the extra training judgments and
//!    [`regression::fit`] fits the final predictor.
//!
//! The [`baselines`] module holds the forward-selection comparisons and
//! [`harness`] runs seeded experiments end to end.

pub mod baselines;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod multiselect;
pub mod regression;
pub mod simulate;

pub use error::{Error, Result};
pub use estimation::{estimate_moments, var_est};
pub use linalg::{eig_sym, make_psd, pseudo_inverse, solve_least_squares, SymmetricMatrix};
pub use model::{
    average_judgments, squared_loss, AveragedDesign, JudgmentDataset, LinearPredictor,
    MomentEstimates, RepeatVector,
};
pub use multiselect::{
    brute_force_select, full_objective, greedy_select, projected_loss, scoring_objective,
    Algorithm, SelectionResult,
};
pub use regression::{evaluate, fit};
pub use simulate::{analytic_truth, sample_dataset, top_up, GenerativeModel};
