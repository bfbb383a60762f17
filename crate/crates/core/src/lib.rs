//! Sequential synthetic data generation for randomized controlled trial tables
//! with missing post-randomization and outcome data.
//!
//! The crate is organized bottom-up:
//!
//! - [`table`]: typed columnar tables with observation masks and temporal roles.
//! - [`regression`]: weighted linear and logistic regression, residual pools and
//!   admissible-value sampling.
//! - [`baseline`]: Gaussian-copula baseline generator and treatment assignment.
//! - [`missingness`]: imposing known mechanisms, calibrating intercepts, and
//!   drawing synthetic missingness from fitted models.
//! - [`frameworks`]: complete-case, inverse-probability-weighting and multiple
//!   imputation generation pipelines.
//! - [`metrics`]: fidelity metrics comparing real and synthetic tables.
//! - [`harness`]: seeded, parallel simulation experiments and their CSV/JSON output.
//! - [`cohort`]: the ACTG 175 column layout and a simulated stand-in cohort.

pub mod baseline;
pub mod cohort;
pub mod error;
pub mod frameworks;
pub mod harness;
pub mod metrics;
pub mod missingness;
pub mod regression;
pub mod rng;
pub mod table;

pub use error::{Error, Result};
