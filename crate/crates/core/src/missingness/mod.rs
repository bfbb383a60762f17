//! Missingness mechanisms: scenario specifications, imposing known mechanisms
//! on complete tables, intercept calibration, fitting observation models, and
//! drawing synthetic missingness.

mod impose;
mod registry;
mod synthetic;

pub use impose::{calibrate_intercept, fit_missingness_model, impose, ImposedTable, RowSelection};
pub use registry::{registry, registry_toml, scenario, ScenarioRegistry};
pub use synthetic::{
    generate_synthetic_missingness, ObservationModel, SyntheticMissingness,
    SyntheticMissingnessModel, SyntheticOptions, UnseenEvent,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{ColumnKind, DataTable, Role, Schema, StandardizationParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    NonMonotone,
    Monotone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Mcar,
    Mar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Strong,
    Weak,
}

/// Logistic model for the observation indicator of `target`.
///
/// Coefficient keys are either a numeric column name (entering on the
/// standardized scale when listed in `standardize`) or `column=level` for a
/// reference-cell dummy. Exactly one of `intercept` and `calibrate_observed`
/// is set; the latter asks for the intercept that makes the expected observed
/// fraction equal to the given value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingnessModelSpec {
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate_observed: Option<f64>,
    #[serde(default)]
    pub standardize: Vec<String>,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

/// Covariate referenced by a coefficient key.
#[derive(Clone, Debug, PartialEq)]
enum Covariate {
    Value { column: usize, standardized: bool },
    Level { column: usize, level: usize },
}

impl MissingnessModelSpec {
    fn covariates(&self, schema: &Schema) -> Result<Vec<(Covariate, f64)>> {
        self.coefficients
            .iter()
            .map(|(key, &beta)| {
                let cov = match key.split_once('=') {
                    Some((col, level)) => {
                        let j = schema.position(col)?;
                        let levels = schema.column(j).kind.levels().ok_or_else(|| {
                            Error::Config(format!("`{key}`: column `{col}` is not discrete"))
                        })?;
                        let k = levels.iter().position(|l| l == level).ok_or_else(|| {
                            Error::UnknownLevel {
                                column: col.to_string(),
                                level: level.to_string(),
                            }
                        })?;
                        if k == 0 {
                            return Err(Error::Config(format!(
                                "`{key}` names the reference level of `{col}`"
                            )));
                        }
                        Covariate::Level {
                            column: j,
                            level: k,
                        }
                    }
                    None => {
                        let j = schema.position(key)?;
                        if matches!(schema.column(j).kind, ColumnKind::Categorical(_)) {
                            return Err(Error::Config(format!(
                                "categorical `{key}` needs a `{key}=level` coefficient"
                            )));
                        }
                        Covariate::Value {
                            column: j,
                            standardized: self.standardize.iter().any(|s| s == key),
                        }
                    }
                };
                Ok((cov, beta))
            })
            .collect()
    }

    /// Column names the model depends on.
    pub fn covariate_columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self
            .coefficients
            .keys()
            .map(|k| k.split_once('=').map_or(k.as_str(), |(c, _)| c).to_string())
            .collect();
        cols.dedup();
        cols
    }

    /// Sum of slope contributions per row, using `moments` for standardized
    /// covariates. Covariate values are read whether or not they are masked,
    /// so `t` should be the complete table.
    pub fn slopes(&self, t: &DataTable, moments: &StandardizationParams) -> Result<Vec<f64>> {
        let covs = self.covariates(t.schema())?;
        let mut eta = vec![0.0; t.n_rows()];
        for (cov, beta) in covs {
            match cov {
                Covariate::Value {
                    column,
                    standardized,
                } => {
                    let name = &t.schema().column(column).name;
                    let (mean, sd) = if standardized {
                        let m = moments
                            .get(name)
                            .ok_or_else(|| Error::Config(format!("no moments for `{name}`")))?;
                        (m.mean, m.sd)
                    } else {
                        (0.0, 1.0)
                    };
                    for (e, &v) in eta.iter_mut().zip(t.values(column)) {
                        if v.is_nan() {
                            return Err(Error::Unobserved {
                                row: 0,
                                column: name.clone(),
                            });
                        }
                        *e += beta * (v - mean) / sd;
                    }
                }
                Covariate::Level { column, level } => {
                    for (e, &v) in eta.iter_mut().zip(t.values(column)) {
                        if v as usize == level {
                            *e += beta;
                        }
                    }
                }
            }
        }
        Ok(eta)
    }

    fn validate(&self, schema: &Schema) -> Result<()> {
        match (self.intercept, self.calibrate_observed) {
            (Some(c), None) if c.is_finite() => {}
            (None, Some(p)) if p > 0.0 && p < 1.0 => {}
            _ => return Err(Error::Config(format!(
                "model for `{}` needs either a finite intercept or a calibration target in (0, 1)",
                self.target
            ))),
        }
        self.covariates(schema)?;
        for s in &self.standardize {
            if !self.coefficients.contains_key(s) {
                return Err(Error::Config(format!(
                    "`{s}` is standardized but has no coefficient in the model for `{}`",
                    self.target
                )));
            }
            if schema.get(s)?.kind.is_discrete() {
                return Err(Error::Config(format!("cannot standardize discrete `{s}`")));
            }
        }
        Ok(())
    }
}

/// How one variable's observation indicator is generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MechanismModel {
    Logistic(MissingnessModelSpec),
    /// Observed with a fixed probability, independent of everything.
    Bernoulli {
        target: String,
        p_observed: f64,
    },
}

impl MechanismModel {
    pub fn target(&self) -> &str {
        match self {
            MechanismModel::Logistic(m) => &m.target,
            MechanismModel::Bernoulli { target, .. } => target,
        }
    }
}

/// One simulation scenario: pattern, mechanism, target proportion, strength
/// and the per-variable models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    pub pattern: Pattern,
    pub mechanism: Mechanism,
    /// Nominal missing fraction per variable.
    pub proportion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<Strength>,
    pub models: Vec<MechanismModel>,
}

impl ScenarioSpec {
    /// Checks the scenario against a schema: targets exist and are
    /// post-randomization or outcome columns, coefficient keys resolve, and in
    /// the non-monotone pattern no model depends on a variable that can itself
    /// be missing.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let ctx = |e: Error| Error::Config(format!("scenario {}: {e}", self.id));
        let mut targets = Vec::new();
        for m in &self.models {
            let target = m.target();
            let col = schema.get(target).map_err(ctx)?;
            if !matches!(col.role, Role::PostRandomization(_) | Role::Outcome) {
                return Err(ctx(Error::Config(format!(
                    "`{target}` is not a post-randomization or outcome column"
                ))));
            }
            if targets.contains(&target) {
                return Err(ctx(Error::Config(format!("two models for `{target}`"))));
            }
            targets.push(target);
            match (m, self.mechanism) {
                (MechanismModel::Logistic(spec), Mechanism::Mar) => {
                    spec.validate(schema).map_err(ctx)?
                }
                (MechanismModel::Bernoulli { p_observed, .. }, Mechanism::Mcar) => {
                    if !(0.0..=1.0).contains(p_observed) {
                        return Err(ctx(Error::Config("p_observed must lie in [0, 1]".into())));
                    }
                }
                _ => {
                    return Err(ctx(Error::Config(
                        "MCAR scenarios use Bernoulli models and MAR scenarios logistic models"
                            .into(),
                    )))
                }
            }
        }
        if self.pattern == Pattern::NonMonotone {
            for m in &self.models {
                if let MechanismModel::Logistic(spec) = m {
                    for c in spec.covariate_columns() {
                        if targets.contains(&c.as_str()) {
                            return Err(ctx(Error::Config(format!(
                                "model for `{}` depends on `{c}`, which can be missing",
                                spec.target
                            ))));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Models sorted into measurement order.
    pub fn ordered_models(&self, schema: &Schema) -> Result<Vec<&MechanismModel>> {
        let mut ms: Vec<(usize, &MechanismModel)> = self
            .models
            .iter()
            .map(|m| Ok((schema.temporal_rank(m.target())?, m)))
            .collect::<Result<_>>()?;
        ms.sort_by_key(|(r, _)| *r);
        Ok(ms.into_iter().map(|(_, m)| m).collect())
    }
}
