//! Inverse-probability-weighted frameworks and the observation models they
//! share with multiple imputation.

use super::pipeline::{finish, fit_baseline_on, fit_stage, synthesize, Context, Plan, StageModels};
use super::{generative_design, indicator_terms, Diagnostics, GenerationOutput, ModelRole};
use crate::error::{Error, Result};
use crate::missingness::{
    fit_missingness_model, ObservationModel, Pattern, RowSelection, SyntheticMissingnessModel,
};
use crate::regression::{DesignSpec, FittedRegression, Response, Term};
use crate::table::DataTable;

/// Observation model that is `None` when the target is never missing on the
/// rows it would be fit to.
pub(crate) type MaybeFit = Option<FittedRegression>;

fn fit_observation(
    ctx: &Context,
    t: &DataTable,
    target: &str,
    terms: Vec<Term>,
    selection: RowSelection,
    label: &str,
    diag: &mut Diagnostics,
) -> Result<MaybeFit> {
    let mask = t.mask(target)?;
    let any_missing = match &selection {
        RowSelection::All => mask.iter().any(|&o| !o),
        RowSelection::ObservedOn(c) => t.mask(c)?.iter().zip(mask).any(|(&c, &o)| c && !o),
        RowSelection::Positions(p) => p.iter().any(|&i| !mask[i]),
    };
    if !any_missing {
        return Ok(None);
    }
    let fit = fit_missingness_model(t, target, terms, &selection, true, ctx.config.logistic)
        .map_err(|e| e.at_stage(format!("missingness {label}")))?;
    diag.record(label, ModelRole::Missingness, &fit);
    Ok(Some(fit))
}

fn probabilities(m: &MaybeFit, t: &DataTable) -> Result<Vec<f64>> {
    match m {
        Some(f) => f.predict(t),
        None => Ok(vec![1.0; t.n_rows()]),
    }
}

fn observation(target: &str, m: &MaybeFit) -> SyntheticMissingnessModel {
    SyntheticMissingnessModel {
        target: target.to_string(),
        model: match m {
            Some(f) => ObservationModel::Fitted(f.clone()),
            None => ObservationModel::Always,
        },
    }
}

/// Rows with a positive probability and their weights `1/p`.
fn weighted_rows(positions: Vec<usize>, p: &[f64]) -> (Vec<usize>, Vec<f64>) {
    positions
        .into_iter()
        .zip(p)
        .filter(|(_, &p)| p > 0.0 && p.is_finite())
        .map(|(i, &p)| (i, 1.0 / p))
        .unzip()
}

/// Models of the non-monotone indicator method: observation of the first
/// post-randomization variable given baseline and treatment, and observation
/// of the outcome given baseline, treatment, the later post-randomization
/// variables, the first one's indicator and the indicator-value interaction.
pub(crate) struct IndicatorModels {
    pub first: MaybeFit,
    pub outcome: MaybeFit,
    pub outcome_terms: Vec<Term>,
}

pub(crate) fn indicator_models(ctx: &Context, diag: &mut Diagnostics) -> Result<IndicatorModels> {
    let layout = ctx.layout;
    let real = ctx.real;
    for z in layout.post.iter().skip(1) {
        if real.missing_fraction(z)? > 0.0 {
            return Err(Error::PatternMismatch {
                framework: "indicator method".into(),
                reason: format!(
                    "only the first post-randomization variable may be missing, `{z}` is too"
                ),
            });
        }
    }
    let k = layout.post.len();
    let mut outcome_terms = DesignSpec::mains(&layout.history(k));
    let first = match layout.post.first() {
        Some(z1) => {
            let m = fit_observation(
                ctx,
                real,
                z1,
                DesignSpec::mains(&layout.history(0)),
                RowSelection::All,
                z1,
                diag,
            )?;
            if m.is_some() {
                outcome_terms = indicator_terms(outcome_terms, z1);
            }
            m
        }
        None => None,
    };
    let outcome = fit_observation(
        ctx,
        real,
        &layout.outcome,
        outcome_terms.clone(),
        RowSelection::All,
        &layout.outcome,
        diag,
    )?;
    Ok(IndicatorModels {
        first,
        outcome,
        outcome_terms,
    })
}

impl IndicatorModels {
    pub fn synthetic(&self, ctx: &Context) -> Vec<SyntheticMissingnessModel> {
        let mut v = Vec::new();
        if let Some(z1) = ctx.layout.post.first() {
            v.push(observation(z1, &self.first));
        }
        v.push(observation(&ctx.layout.outcome, &self.outcome));
        v
    }
}

/// Conditional observation models of the monotone pattern: target `j` given
/// its history, fit on rows where target `j − 1` is observed.
pub(crate) fn monotone_models(ctx: &Context, diag: &mut Diagnostics) -> Result<Vec<MaybeFit>> {
    let targets = ctx.layout.targets();
    targets
        .iter()
        .enumerate()
        .map(|(j, target)| {
            let selection = if j == 0 {
                RowSelection::All
            } else {
                RowSelection::ObservedOn(targets[j - 1].clone())
            };
            fit_observation(
                ctx,
                ctx.real,
                target,
                DesignSpec::mains(&ctx.layout.history(j)),
                selection,
                target,
                diag,
            )
        })
        .collect()
}

/// Cumulative observation probabilities under monotone missingness: entry
/// `[j][i]` is the product of the conditional models `0..=j` at row `i`, and
/// 0 where the target before `j` is missing.
pub(crate) fn cumulative_probabilities(ctx: &Context, conditional: &[MaybeFit]) -> Result<Vec<Vec<f64>>> {
    let targets = ctx.layout.targets();
    let n = ctx.real.n_rows();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(targets.len());
    for (j, c) in conditional.iter().enumerate() {
        let mut p = vec![0.0; n];
        let positions = if j == 0 {
            (0..n).collect()
        } else {
            ctx.real.observed_positions(&[targets[j - 1].as_str()])?
        };
        let q = probabilities(c, &ctx.real.select_rows(&positions))?;
        for (&i, q) in positions.iter().zip(q) {
            p[i] = if j == 0 { q } else { out[j - 1][i] * q };
        }
        out.push(p);
    }
    Ok(out)
}

/// Weighted fits of every post-randomization stage on rows where the first
/// post-randomization variable (and the stage's own variables) are observed,
/// with weights from the first variable's observation model.
fn post_stages_with_first_weights(
    ctx: &Context,
    first: &MaybeFit,
    diag: &mut Diagnostics,
) -> Result<Vec<StageModels>> {
    let targets = ctx.layout.targets();
    let p_first = probabilities(first, ctx.real)?;
    let mut stages = Vec::new();
    for (k, target) in ctx.layout.post.iter().enumerate() {
        let needed: Vec<&str> = targets[..=k].iter().map(String::as_str).collect();
        let positions = ctx.real.observed_positions(&needed)?;
        let p: Vec<f64> = positions.iter().map(|&i| p_first[i]).collect();
        let (rows, w) = weighted_rows(positions, &p);
        let fit = fit_stage(
            ctx,
            &ctx.real.select_rows(&rows),
            &generative_design(ctx.layout, k),
            ctx.layout.link(target),
            Some(&w),
        )
        .map_err(|e| e.at_stage(format!("fit {target}")))?;
        diag.record(target, ModelRole::Generative, &fit);
        stages.push(StageModels {
            target: target.clone(),
            fits: vec![fit],
        });
    }
    Ok(stages)
}

/// Indicator method for non-monotone missingness.
pub(crate) fn indicator(ctx: &Context) -> Result<GenerationOutput> {
    let mut diag = Diagnostics::default();
    let models = indicator_models(ctx, &mut diag)?;
    let baseline = fit_baseline_on(ctx, ctx.real)?;
    let mut stages = post_stages_with_first_weights(ctx, &models.first, &mut diag)?;

    let y = &ctx.layout.outcome;
    let mut needed = vec![y.as_str()];
    needed.extend(ctx.layout.post.iter().skip(1).map(String::as_str));
    let positions = ctx.real.observed_positions(&needed)?;
    let p_all = probabilities(&models.outcome, ctx.real)?;
    let p: Vec<f64> = positions.iter().map(|&i| p_all[i]).collect();
    let (rows, w) = weighted_rows(positions, &p);
    let design =
        DesignSpec::new(Response::Value(y.clone()), models.outcome_terms.clone()).standardized();
    let fit = fit_stage(
        ctx,
        &ctx.real.select_rows(&rows),
        &design,
        ctx.layout.link(y),
        Some(&w),
    )
    .map_err(|e| e.at_stage(format!("fit {y}")))?;
    diag.record(y, ModelRole::Generative, &fit);
    stages.push(StageModels {
        target: y.clone(),
        fits: vec![fit],
    });

    let obs = models.synthetic(ctx);
    let mut plan = Plan::new(baseline, stages);
    if models.first.is_some() {
        plan.indicators = obs[..1].to_vec();
    }
    let synth = synthesize(ctx, &plan, &mut diag)?;
    finish(ctx, synth, Some((&obs, Pattern::NonMonotone)), diag)
}

/// Forces the outcome to be missing wherever the first post-randomization
/// variable is, then weights the outcome model by a two-factor probability.
pub(crate) fn force_monotonicity(ctx: &Context) -> Result<GenerationOutput> {
    let layout = ctx.layout;
    let mut diag = Diagnostics::default();
    let models = indicator_models(ctx, &mut diag)?;
    let baseline = fit_baseline_on(ctx, ctx.real)?;
    let mut stages = post_stages_with_first_weights(ctx, &models.first, &mut diag)?;

    let y = &layout.outcome;
    let k = layout.post.len();
    let mut obs = Vec::new();
    let (forced, given_first, first_given_later) = match layout.post.first() {
        Some(z1) => {
            let mask: Vec<bool> = ctx
                .real
                .mask(y)?
                .iter()
                .zip(ctx.real.mask(z1)?)
                .map(|(&a, &b)| a && b)
                .collect();
            let forced = ctx.real.with_mask(y, mask)?;
            let f1 = fit_observation(
                ctx,
                &forced,
                y,
                DesignSpec::mains(&layout.history(k)),
                RowSelection::ObservedOn(z1.clone()),
                &format!("{y}|{z1}"),
                &mut diag,
            )?;
            let mut f2_cols = layout.history(0);
            if !ctx.config.force_temporal_order {
                f2_cols.extend(layout.post.iter().skip(1).cloned());
            }
            let f2 = fit_observation(
                ctx,
                &forced,
                z1,
                DesignSpec::mains(&f2_cols),
                RowSelection::All,
                &format!("{z1} for {y}"),
                &mut diag,
            )?;
            obs.push(observation(z1, &models.first));
            (forced, f1, f2)
        }
        None => {
            let f = fit_observation(
                ctx,
                ctx.real,
                y,
                DesignSpec::mains(&layout.history(k)),
                RowSelection::All,
                y,
                &mut diag,
            )?;
            (ctx.real.clone(), f, None)
        }
    };

    let positions = forced.observed_positions(&[y.as_str()])?;
    let sub = forced.select_rows(&positions);
    let p: Vec<f64> = probabilities(&given_first, &sub)?
        .into_iter()
        .zip(probabilities(&first_given_later, &sub)?)
        .map(|(a, b)| a * b)
        .collect();
    let (rows, w) = weighted_rows(positions, &p);
    let fit = fit_stage(
        ctx,
        &forced.select_rows(&rows),
        &generative_design(layout, k),
        layout.link(y),
        Some(&w),
    )
    .map_err(|e| e.at_stage(format!("fit {y}")))?;
    diag.record(y, ModelRole::Generative, &fit);
    stages.push(StageModels {
        target: y.clone(),
        fits: vec![fit],
    });

    obs.push(SyntheticMissingnessModel {
        target: y.clone(),
        model: match (given_first, first_given_later) {
            (Some(a), Some(b)) => ObservationModel::Product(Box::new(a), Box::new(b)),
            (Some(a), None) | (None, Some(a)) => ObservationModel::Fitted(a),
            (None, None) => ObservationModel::Always,
        },
    });
    let synth = synthesize(ctx, &Plan::new(baseline, stages), &mut diag)?;
    finish(ctx, synth, Some((&obs, Pattern::NonMonotone)), diag)
}

/// Inverse-probability weighting under monotone missingness, with weights
/// from cumulative products of conditional observation probabilities.
pub(crate) fn monotone(ctx: &Context) -> Result<GenerationOutput> {
    let mut diag = Diagnostics::default();
    let conditional = monotone_models(ctx, &mut diag)?;
    let cumulative = cumulative_probabilities(ctx, &conditional)?;
    let baseline = fit_baseline_on(ctx, ctx.real)?;
    let targets = ctx.layout.targets();
    let mut stages = Vec::new();
    for (j, target) in targets.iter().enumerate() {
        let positions = ctx.real.observed_positions(&[target.as_str()])?;
        let p: Vec<f64> = positions.iter().map(|&i| cumulative[j][i]).collect();
        let (rows, w) = weighted_rows(positions, &p);
        let fit = fit_stage(
            ctx,
            &ctx.real.select_rows(&rows),
            &generative_design(ctx.layout, j),
            ctx.layout.link(target),
            Some(&w),
        )
        .map_err(|e| e.at_stage(format!("fit {target}")))?;
        diag.record(target, ModelRole::Generative, &fit);
        stages.push(StageModels {
            target: target.clone(),
            fits: vec![fit],
        });
    }
    let synth = synthesize(ctx, &Plan::new(baseline, stages), &mut diag)?;
    let obs: Vec<_> = targets
        .iter()
        .zip(&conditional)
        .map(|(t, m)| observation(t, m))
        .collect();
    finish(ctx, synth, Some((&obs, Pattern::Monotone)), diag)
}
