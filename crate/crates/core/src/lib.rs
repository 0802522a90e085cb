//! Leakage-safe risk ranking for proactive rental assistance.
//!
//! An append-only event log answers every question "as of" a date, so
//! cohorts, features, labels and baselines can only see what was known then.
//! On top of it sit temporal train/evaluate splits, hand-written learners
//! (logistic regression, CART, random forest), heuristic baselines, top-k
//! evaluation with fairness and missed-group metrics, shadow-mode freezing,
//! and a simulator for randomized trials of assistance.

pub mod dates;
pub mod error;
pub mod store;
pub mod synthgen;
pub mod cohort;
pub mod features;
pub mod metric;
pub mod splits;
pub mod learners;
pub mod baselines;
pub mod evaluate;
pub mod trial;
pub mod cli;

pub use error::{Error, Result};
