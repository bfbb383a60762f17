//! Multiple imputation by chained equations, and generation from the imputed
//! tables.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ipw::{indicator_models, monotone_models};
use super::pipeline::{finish, fit_baseline_on, fit_stage, synthesize, Context, Plan, StageModels};
use super::{generative_design, Diagnostics, GenerationOutput, ModelRole};
use crate::error::{Error, Result};
use crate::missingness::{ObservationModel, Pattern, SyntheticMissingnessModel};
use crate::regression::{
    expit, fit_linear, fit_logistic_with, DesignSpec, LogisticOptions, Response,
};
use crate::rng::{stream, Rng};
use crate::table::{ColumnKind, DataTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiOptions {
    /// Passes over the incomplete columns per imputation.
    pub sweeps: usize,
    /// Predictive-mean-matching donor pool size.
    pub donors: usize,
    /// Fixed number of imputations instead of the missing-percentage rule.
    pub imputations: Option<usize>,
}

impl Default for MiOptions {
    fn default() -> Self {
        Self {
            sweeps: 10,
            donors: 5,
            imputations: None,
        }
    }
}

/// Number of imputations: the largest per-column missing percentage, rounded
/// up, and at least two. Zero when nothing is missing.
pub fn imputation_count(max_missing_fraction: f64) -> usize {
    if max_missing_fraction <= 0.0 {
        return 0;
    }
    ((100.0 * max_missing_fraction - 1e-9).ceil() as usize).max(2)
}

/// Cholesky factor of a covariance matrix, or `None` when it is not
/// positive definite even after a small ridge.
fn cholesky_factor(cov: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if cov.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let scale = cov
        .diagonal()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1e-300);
    for ridge in [0.0, 1e-10, 1e-8, 1e-6] {
        let m = cov + DMatrix::identity(cov.nrows(), cov.ncols()) * (ridge * scale);
        if let Some(c) = m.cholesky() {
            return Some(c.l());
        }
    }
    None
}

/// `beta + L z` with standard normal `z`, scaled by `scale`.
fn perturb(beta: &[f64], factor: Option<&DMatrix<f64>>, scale: f64, rng: &mut Rng) -> DVector<f64> {
    let b = DVector::from_column_slice(beta);
    match factor {
        Some(l) => {
            let z = DVector::from_fn(beta.len(), |_, _| StandardNormal.sample(rng));
            b + l * z * scale
        }
        None => b,
    }
}

/// Indices of the `k` observed rows whose predictions are closest to `target`.
fn nearest_donors(sorted: &[(f64, usize)], target: f64, k: usize) -> Vec<usize> {
    let k = k.min(sorted.len());
    let mut hi = sorted.partition_point(|&(v, _)| v < target);
    let mut lo = hi;
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let take_low = match (lo > 0, hi < sorted.len()) {
            (true, true) => target - sorted[lo - 1].0 <= sorted[hi].0 - target,
            (true, false) => true,
            (false, true) => false,
            (false, false) => break,
        };
        if take_low {
            lo -= 1;
            out.push(sorted[lo].1);
        } else {
            out.push(sorted[hi].1);
            hi += 1;
        }
    }
    out
}

/// One imputed copy of `real`.
///
/// Missing cells start as random draws from the column's observed values.
/// Each sweep visits the incomplete columns in measurement order and
/// re-imputes each one from all other columns: numeric columns by predictive
/// mean matching with a posterior draw of the coefficients, binary columns by
/// a Bernoulli draw from a logistic model with perturbed coefficients.
pub fn mice_impute(
    real: &DataTable,
    options: &MiOptions,
    logistic: LogisticOptions,
    rng: &mut Rng,
) -> Result<DataTable> {
    let schema = real.schema();
    let targets: Vec<String> = schema
        .temporal_targets()
        .into_iter()
        .filter(|t| real.mask(t).map(|m| m.iter().any(|&o| !o)).unwrap_or(false))
        .collect();
    let mut current = real.clone();
    if targets.is_empty() {
        return Ok(current);
    }
    // Initial fill.
    for t in &targets {
        let j = real.position(t)?;
        let pool = real.observed_values(t)?;
        if pool.is_empty() {
            return Err(Error::InvalidTable(format!(
                "column `{t}` has no observed values to impute from"
            )));
        }
        let mut v = real.values(j).to_vec();
        for (i, o) in real.observed(j).iter().enumerate() {
            if !o {
                v[i] = pool[rng.random_range(0..pool.len())];
            }
        }
        current = current.with_column(t, v, vec![true; real.n_rows()])?;
    }

    let mut warm: HashMap<String, Vec<f64>> = HashMap::new();
    for _ in 0..options.sweeps {
        for t in &targets {
            let j = real.position(t)?;
            let others: Vec<String> = schema.names().into_iter().filter(|c| c != t).collect();
            let design = DesignSpec::new(Response::Value(t.clone()), DesignSpec::mains(&others))
                .standardized();
            let obs_rows: Vec<usize> = (0..real.n_rows())
                .filter(|&i| real.observed(j)[i])
                .collect();
            let mis_rows: Vec<usize> = (0..real.n_rows())
                .filter(|&i| !real.observed(j)[i])
                .collect();
            let fit_table = current.select_rows(&obs_rows);
            let miss_table = current.select_rows(&mis_rows);
            let mut v = current.values(j).to_vec();
            if schema.get(t)?.kind == ColumnKind::Binary {
                let start = warm.get(t).map(Vec::as_slice);
                let fit = fit_logistic_with(&fit_table, &design, None, logistic, start)?;
                warm.insert(t.clone(), fit.coefficients.clone());
                let beta = perturb(
                    &fit.coefficients,
                    cholesky_factor(&fit.covariance).as_ref(),
                    1.0,
                    rng,
                );
                let (x, _) = fit.encoding.matrix(&miss_table, None, true)?;
                let eta = x * beta;
                for (k, &i) in mis_rows.iter().enumerate() {
                    v[i] = if rng.random::<f64>() < expit(eta[k]) {
                        1.0
                    } else {
                        0.0
                    };
                }
            } else {
                let fit = fit_linear(&fit_table, &design, None)?;
                let n = fit.n_fit;
                let p = fit.coefficients.len();
                let df = (n - p) as f64;
                let sigma2 = fit.residuals.iter().map(|r| r * r).sum::<f64>() / df;
                let chi: f64 = ChiSquared::new(df)
                    .expect("positive degrees of freedom")
                    .sample(rng);
                let scale = if sigma2 > 0.0 { (df / chi).sqrt() } else { 0.0 };
                let beta_star = perturb(
                    &fit.coefficients,
                    cholesky_factor(&fit.covariance).as_ref(),
                    scale,
                    rng,
                );
                let beta_hat = DVector::from_column_slice(&fit.coefficients);
                let (x_obs, _) = fit.encoding.matrix(&fit_table, None, false)?;
                let (x_mis, _) = fit.encoding.matrix(&miss_table, None, true)?;
                let pred_obs = x_obs * beta_hat;
                let pred_mis = x_mis * beta_star;
                let mut sorted: Vec<(f64, usize)> = pred_obs.iter().copied().zip(0..).collect();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let observed_values = fit_table.values(j);
                for (k, &i) in mis_rows.iter().enumerate() {
                    let donors = nearest_donors(&sorted, pred_mis[k], options.donors.max(1));
                    let d = donors[rng.random_range(0..donors.len())];
                    v[i] = observed_values[d];
                }
            }
            current = current.with_column(t, v, vec![true; real.n_rows()])?;
        }
    }
    Ok(current)
}

/// Impute, fit every stage on each imputed table, and give every synthetic
/// row a uniformly chosen imputation's value. Synthetic missingness uses the
/// indicator-method models (non-monotone) or the conditional models
/// (monotone) fit to the masked real table.
pub(crate) fn generate_mi(ctx: &Context, pattern: Pattern) -> Result<GenerationOutput> {
    let targets = ctx.layout.targets();
    let max_fraction = targets
        .iter()
        .map(|t| ctx.real.missing_fraction(t))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let m = ctx
        .config
        .mi
        .imputations
        .unwrap_or_else(|| imputation_count(max_fraction));
    let mut diag = Diagnostics::default();
    let baseline = fit_baseline_on(ctx, ctx.real)?;

    if max_fraction == 0.0 || m == 0 {
        let stages = fit_all_stages(ctx, std::slice::from_ref(ctx.real), &mut diag)?;
        let synth = synthesize(ctx, &Plan::new(baseline, stages), &mut diag)?;
        let always: Vec<_> = targets
            .iter()
            .map(|t| SyntheticMissingnessModel {
                target: t.clone(),
                model: ObservationModel::Always,
            })
            .collect();
        return finish(ctx, synth, Some((&always, pattern)), diag);
    }
    diag.imputations = Some(m);

    let obs = match pattern {
        Pattern::NonMonotone => indicator_models(ctx, &mut diag)?.synthetic(ctx),
        Pattern::Monotone => targets
            .iter()
            .zip(monotone_models(ctx, &mut diag)?)
            .map(|(t, f)| SyntheticMissingnessModel {
                target: t.clone(),
                model: f.map_or(ObservationModel::Always, ObservationModel::Fitted),
            })
            .collect(),
    };

    let imputed = (0..m)
        .map(|k| {
            mice_impute(
                ctx.real,
                &ctx.config.mi,
                ctx.config.logistic,
                &mut stream(ctx.seed, "impute", k as u64),
            )
            .map_err(|e| Error::Imputation {
                index: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let stages = fit_all_stages(ctx, &imputed, &mut diag)?;
    let synth = synthesize(ctx, &Plan::new(baseline, stages), &mut diag)?;
    finish(ctx, synth, Some((&obs, pattern)), diag)
}

/// One unweighted fit per stage and table; diagnostics from the first table.
fn fit_all_stages(
    ctx: &Context,
    tables: &[DataTable],
    diag: &mut Diagnostics,
) -> Result<Vec<StageModels>> {
    ctx.layout
        .targets()
        .iter()
        .enumerate()
        .map(|(k, target)| {
            let design = generative_design(ctx.layout, k);
            let fits = tables
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    fit_stage(ctx, t, &design, ctx.layout.link(target), None).map_err(|e| {
                        Error::Imputation {
                            index: i,
                            source: Box::new(e.at_stage(format!("fit {target}"))),
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            diag.record(target, ModelRole::Generative, &fits[0]);
            Ok(StageModels {
                target: target.clone(),
                fits,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn imputation_rule() {
        assert_eq!(imputation_count(0.0), 0);
        assert_eq!(imputation_count(0.26), 26);
        assert_eq!(imputation_count(0.25), 25);
        assert_eq!(imputation_count(0.001), 2);
        assert_eq!(imputation_count(0.2501), 26);
    }

    #[test]
    fn donors_are_nearest() {
        let sorted: Vec<(f64, usize)> = [0.0, 1.0, 2.0, 3.0, 10.0]
            .iter()
            .copied()
            .zip(0..)
            .collect();
        let mut d = nearest_donors(&sorted, 2.2, 3);
        d.sort();
        assert_eq!(d, vec![1, 2, 3]);
        assert_eq!(nearest_donors(&sorted, 100.0, 1), vec![4]);
        assert_eq!(nearest_donors(&sorted, -5.0, 10).len(), 5);
    }

    #[test]
    fn perturbation_without_factor_is_identity() {
        let b = perturb(&[1.0, 2.0], None, 1.0, &mut seeded(1));
        assert_eq!(b.as_slice(), &[1.0, 2.0]);
    }
}
