//! Synthetic baseline covariates and treatment assignment.
//!
//! The baseline generator is a Gaussian copula with empirical marginals.
//! Generators are used through [`BaselineGenerator`] so that another copula
//! family can replace it without touching the frameworks.

mod copula;

pub use copula::{fit_copula, CopulaModel, Marginal};

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::table::{DataTable, Schema};

/// Something that can draw complete baseline rows.
pub trait BaselineGenerator: Send + Sync {
    /// Baseline columns produced, in order.
    fn schema(&self) -> &Arc<Schema>;
    /// `n` fully observed rows.
    fn sample(&self, n: usize, rng: &mut Rng) -> DataTable;
}

/// Available baseline generators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    #[default]
    GaussianCopula,
}

/// Fits the configured generator on the baseline columns of `t`.
pub fn fit_baseline(kind: BaselineKind, t: &DataTable) -> Result<Box<dyn BaselineGenerator>> {
    match kind {
        BaselineKind::GaussianCopula => Ok(Box::new(fit_copula(t)?)),
    }
}

/// Categorical distribution over treatment arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreatmentDistribution {
    pub levels: Vec<String>,
    pub probabilities: Vec<f64>,
}

impl TreatmentDistribution {
    pub fn new(levels: Vec<String>, probabilities: Vec<f64>) -> Result<Self> {
        if levels.len() != probabilities.len() || levels.is_empty() {
            return Err(Error::Config(
                "one probability per treatment level is required".into(),
            ));
        }
        if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config(
                "treatment probabilities must be non-negative".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "treatment probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self {
            levels,
            probabilities,
        })
    }

    /// Equal probability for every level.
    pub fn uniform(levels: Vec<String>) -> Self {
        let p = 1.0 / levels.len() as f64;
        let probabilities = vec![p; levels.len()];
        Self {
            levels,
            probabilities,
        }
    }
}

/// Independent draws of level indices.
pub fn sample_treatment(dist: &TreatmentDistribution, n: usize, rng: &mut Rng) -> Vec<f64> {
    let mut cumulative = Vec::with_capacity(dist.probabilities.len());
    let mut acc = 0.0;
    for p in &dist.probabilities {
        acc += p;
        cumulative.push(acc);
    }
    let last = dist
        .probabilities
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(last)
                .min(last) as f64
        })
        .collect()
}
