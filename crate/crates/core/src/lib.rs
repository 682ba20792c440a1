//! CMV matrices of finite random Verblunsky sequences, their rank-one unitary
//! perturbations, and Monte Carlo estimates of fractional moments and
//! dynamical localization.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod cmv;
pub mod config;
pub mod ensembles;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod perturbation;
pub mod report;
pub mod spectral;
pub mod verify;

pub use error::{CmvError, Result};

#[cfg(test)]
mod testutil;
