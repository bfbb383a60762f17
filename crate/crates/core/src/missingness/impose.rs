//! Imposing a scenario's missingness on a complete table, and refitting
//! observation models.

use std::collections::BTreeMap;

use super::{MechanismModel, Pattern, ScenarioSpec};
use crate::error::{Error, Result};
use crate::regression::{
    draw_bernoulli, expit, fit_logistic_with, DesignSpec, FittedRegression, LogisticOptions,
    Response, Term,
};
use crate::rng::Rng;
use crate::table::DataTable;

/// A complete table with a scenario's mechanism applied.
#[derive(Clone, Debug)]
pub struct ImposedTable {
    /// The masked table.
    pub table: DataTable,
    /// The complete table it was derived from.
    pub truth: DataTable,
    pub scenario: String,
    /// Missing fraction per target column.
    pub realized_proportions: BTreeMap<String, f64>,
}

/// Intercept `c` such that the mean of `expit(c + slope_i)` equals
/// `target_observed`, found by bisection on `[-50, 50]`.
pub fn calibrate_intercept(slopes: &[f64], target_observed: f64) -> Result<f64> {
    let unreachable = || Error::CalibrationUnreachable {
        target: target_observed,
    };
    if slopes.is_empty() || !(target_observed > 0.0 && target_observed < 1.0) {
        return Err(unreachable());
    }
    let mean_p = |c: f64| slopes.iter().map(|s| expit(c + s)).sum::<f64>() / slopes.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    if mean_p(lo) > target_observed || mean_p(hi) < target_observed {
        return Err(unreachable());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target_observed {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Probability of being observed under one mechanism model, evaluated on the
/// complete table with its own moments for standardized covariates.
fn observation_probabilities(model: &MechanismModel, truth: &DataTable) -> Result<Vec<f64>> {
    match model {
        MechanismModel::Bernoulli { p_observed, .. } => Ok(vec![*p_observed; truth.n_rows()]),
        MechanismModel::Logistic(spec) => {
            let names: Vec<&str> = spec.standardize.iter().map(String::as_str).collect();
            let moments = truth.moments(&names)?;
            let slopes = spec.slopes(truth, &moments)?;
            let c = match (spec.intercept, spec.calibrate_observed) {
                (Some(c), _) => c,
                (None, Some(p)) => calibrate_intercept(&slopes, p)?,
                (None, None) => {
                    return Err(Error::Config(format!(
                        "model for `{}` has no intercept",
                        spec.target
                    )))
                }
            };
            Ok(slopes.into_iter().map(|s| expit(c + s)).collect())
        }
    }
}

/// Draws observation indicators for every scenario target and masks them.
///
/// Covariates are read from the complete table, so a mechanism may depend on
/// a value that is itself masked. In the monotone pattern a variable is
/// missing whenever the previous target in measurement order is missing.
pub fn impose(
    complete: &DataTable,
    scenario: &ScenarioSpec,
    rng: &mut Rng,
) -> Result<ImposedTable> {
    scenario.validate(complete.schema())?;
    if !complete.is_fully_observed() {
        return Err(Error::InvalidTable(
            "missingness must be imposed on a complete table".into(),
        ));
    }
    let mut table = complete.clone();
    let mut previous: Option<Vec<bool>> = None;
    let mut realized = BTreeMap::new();
    for model in scenario.ordered_models(complete.schema())? {
        let p = observation_probabilities(model, complete)?;
        let mut r = draw_bernoulli(&p, rng);
        if scenario.pattern == Pattern::Monotone {
            if let Some(prev) = &previous {
                for (o, &po) in r.iter_mut().zip(prev) {
                    *o &= po;
                }
            }
        }
        let target = model.target();
        let missing = r.iter().filter(|&&o| !o).count() as f64 / r.len().max(1) as f64;
        realized.insert(target.to_string(), missing);
        table = table.with_mask(target, r.clone())?;
        previous = Some(r);
    }
    Ok(ImposedTable {
        table,
        truth: complete.clone(),
        scenario: scenario.id.clone(),
        realized_proportions: realized,
    })
}

/// Rows used to fit an observation model.
#[derive(Clone, Debug, PartialEq)]
pub enum RowSelection {
    All,
    /// Rows where the named column is observed.
    ObservedOn(String),
    Positions(Vec<usize>),
}

/// Logistic regression of the observation indicator of `target` on `terms`,
/// fit on the selected rows. With `standardize`, numeric covariates are
/// centered and scaled by the fitting rows.
pub fn fit_missingness_model(
    t: &DataTable,
    target: &str,
    terms: Vec<Term>,
    selection: &RowSelection,
    standardize: bool,
    options: LogisticOptions,
) -> Result<FittedRegression> {
    let rows = match selection {
        RowSelection::All => None,
        RowSelection::ObservedOn(c) => Some(t.observed_positions(&[c.as_str()])?),
        RowSelection::Positions(p) => Some(p.clone()),
    };
    let subset;
    let data = match rows {
        Some(p) => {
            subset = t.select_rows(&p);
            &subset
        }
        None => t,
    };
    let mut design = DesignSpec::new(Response::Observed(target.to_string()), terms);
    if standardize {
        design = design.standardized();
    }
    fit_logistic_with(data, &design, None, options, None)
}
