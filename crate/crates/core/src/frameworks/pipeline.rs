//! The shared sequential pipeline and the two complete-case frameworks.

use std::collections::BTreeMap;

use rand::Rng as _;

use super::{
    generative_design, Diagnostics, GenerationConfig, GenerationOutput, Layout, ModelRole,
};
use crate::baseline::{fit_baseline, sample_treatment, BaselineGenerator, TreatmentDistribution};
use crate::error::{Error, Result};
use crate::missingness::{
    generate_synthetic_missingness, ObservationModel, Pattern, SyntheticMissingnessModel,
    SyntheticOptions, UnseenEvent,
};
use crate::regression::{
    draw_bernoulli, fit_linear, fit_logistic_with, sample_admissible_or_clamp, DesignSpec,
    FittedRegression, Link,
};
use crate::rng::stream;
use crate::table::DataTable;

/// Inputs every framework needs.
pub(crate) struct Context<'a> {
    pub real: &'a DataTable,
    pub layout: &'a Layout,
    pub config: &'a GenerationConfig,
    pub seed: u64,
}

/// Fitted models for one target; several only under multiple imputation.
pub(crate) struct StageModels {
    pub target: String,
    pub fits: Vec<FittedRegression>,
}

pub(crate) struct Plan {
    pub baseline: Box<dyn BaselineGenerator>,
    pub stages: Vec<StageModels>,
    /// Observation models drawn right after their target's stage, for
    /// generative models of later stages that take indicators as covariates.
    pub indicators: Vec<SyntheticMissingnessModel>,
}

impl Plan {
    pub fn new(baseline: Box<dyn BaselineGenerator>, stages: Vec<StageModels>) -> Self {
        Self {
            baseline,
            stages,
            indicators: Vec::new(),
        }
    }
}

/// A synthesized complete table, the rows the rare-strata rule excludes and
/// the indicators drawn along the way.
pub(crate) struct Synthesized {
    pub table: DataTable,
    pub forced_from: Vec<Option<usize>>,
    pub drawn: BTreeMap<String, Vec<bool>>,
}

/// Fits the generative model for a target with the link its type requires.
pub(crate) fn fit_stage(
    ctx: &Context,
    t: &DataTable,
    design: &DesignSpec,
    link: Link,
    weights: Option<&[f64]>,
) -> Result<FittedRegression> {
    match link {
        Link::Identity => fit_linear(t, design, weights),
        Link::Logit => fit_logistic_with(t, design, weights, ctx.config.logistic, None),
    }
}

pub(crate) fn fit_baseline_on(ctx: &Context, t: &DataTable) -> Result<Box<dyn BaselineGenerator>> {
    fit_baseline(ctx.config.baseline, t).map_err(|e| e.at_stage("baseline"))
}

/// Runs the pipeline: baseline, treatment, then each target in order.
///
/// With several fits per stage, each fit produces a candidate vector and
/// every row takes one candidate uniformly at random.
pub(crate) fn synthesize(
    ctx: &Context,
    plan: &Plan,
    diag: &mut Diagnostics,
) -> Result<Synthesized> {
    let schema = ctx.real.schema_arc().clone();
    let n = ctx.real.n_rows();
    let base = plan
        .baseline
        .sample(n, &mut stream(ctx.seed, "baseline", 0));
    let treatment_col = schema.treatment()?;
    let dist = match &ctx.config.treatment {
        Some(d) => d.clone(),
        None => TreatmentDistribution::uniform(treatment_col.kind.levels().unwrap_or_default()),
    };
    if dist.levels.len() != treatment_col.kind.n_levels().unwrap_or(0) {
        return Err(Error::Config(
            "treatment distribution does not match the treatment levels".into(),
        ));
    }
    let arms = sample_treatment(&dist, n, &mut stream(ctx.seed, "treatment", 0));

    let mut values = Vec::with_capacity(schema.len());
    let mut observed = Vec::with_capacity(schema.len());
    for c in schema.columns() {
        if c.name == treatment_col.name {
            values.push(arms.clone());
            observed.push(vec![true; n]);
        } else if let Ok(j) = base.position(&c.name) {
            values.push(base.values(j).to_vec());
            observed.push(vec![true; n]);
        } else {
            values.push(vec![f64::NAN; n]);
            observed.push(vec![false; n]);
        }
    }
    let mut table = DataTable::new(schema.clone(), values, observed)?;
    let mut forced_from: Vec<Option<usize>> = vec![None; n];
    let mut masks: Vec<Vec<bool>> = vec![vec![true; n]; schema.len()];
    let mut drawn = BTreeMap::new();

    for stage in &plan.stages {
        let target = &stage.target;
        let rank = schema.temporal_rank(target)?;
        let threshold = ctx.config.threshold(&schema, target)?;
        let mut candidates = Vec::with_capacity(stage.fits.len());
        for (k, fit) in stage.fits.iter().enumerate() {
            let pred = fit
                .predict_lenient(&table, Some(&masks))
                .map_err(|e| e.at_stage(format!("generate {target}")))?;
            for (stratum, rows) in pred.unseen {
                for &i in &rows {
                    forced_from[i] = Some(forced_from[i].map_or(rank, |f| f.min(rank)));
                }
                diag.unseen.push(UnseenEvent {
                    stage: target.clone(),
                    stratum,
                    rows: rows.len(),
                });
            }
            let mut rng = stream(ctx.seed, &format!("stage:{target}"), k as u64);
            let v = match fit.link {
                Link::Identity => {
                    let (v, empty) = sample_admissible_or_clamp(
                        &pred.values,
                        &fit.residuals,
                        threshold,
                        &mut rng,
                    )
                    .map_err(|e| e.at_stage(format!("generate {target}")))?;
                    diag.empty_admissible += empty.len();
                    v
                }
                Link::Logit => draw_bernoulli(&pred.values, &mut rng)
                    .into_iter()
                    .map(|b| if b { 1.0 } else { 0.0 })
                    .collect(),
            };
            candidates.push(v);
        }
        let chosen = if candidates.len() == 1 {
            candidates.pop().expect("one candidate")
        } else {
            pick_per_row(
                &candidates,
                &mut stream(ctx.seed, &format!("pick:{target}"), 0),
            )
        };
        table = table.with_column(target, chosen, vec![true; n])?;
        for m in plan.indicators.iter().filter(|m| &m.target == target) {
            let mut note = |pred: crate::regression::Prediction| {
                for (stratum, rows) in pred.unseen {
                    diag.unseen.push(UnseenEvent {
                        stage: format!("indicator {target}"),
                        stratum,
                        rows: rows.len(),
                    });
                }
                pred.values
            };
            let p = match &m.model {
                ObservationModel::Always => vec![1.0; n],
                ObservationModel::Fitted(f) => note(f.predict_lenient(&table, Some(&masks))?),
                ObservationModel::Product(f1, f2) => {
                    let a = note(f1.predict_lenient(&table, Some(&masks))?);
                    let b = note(f2.predict_lenient(&table, Some(&masks))?);
                    a.into_iter().zip(b).map(|(x, y)| x * y).collect()
                }
            };
            let mut r = draw_bernoulli(&p, &mut stream(ctx.seed, &format!("indicator:{target}"), 0));
            for (i, o) in r.iter_mut().enumerate() {
                *o &= !forced_from[i].is_some_and(|f| rank >= f);
            }
            masks[table.position(target)?] = r.clone();
            drawn.insert(target.clone(), r);
        }
    }
    Ok(Synthesized {
        table,
        forced_from,
        drawn,
    })
}

/// For each row, the value of a uniformly chosen candidate.
pub(crate) fn pick_per_row(candidates: &[Vec<f64>], rng: &mut crate::rng::Rng) -> Vec<f64> {
    let n = candidates.first().map_or(0, |c| c.len());
    (0..n)
        .map(|i| candidates[rng.random_range(0..candidates.len())][i])
        .collect()
}

/// Draws synthetic missingness and assembles the output.
pub(crate) fn finish(
    ctx: &Context,
    synth: Synthesized,
    models: Option<(&[SyntheticMissingnessModel], Pattern)>,
    mut diag: Diagnostics,
) -> Result<GenerationOutput> {
    let with_missingness = match models {
        None => None,
        Some((models, pattern)) => {
            let options = SyntheticOptions {
                forced_from: synth.forced_from.clone(),
                drawn: synth.drawn.clone(),
            };
            let out = generate_synthetic_missingness(
                models,
                &synth.table,
                pattern,
                &options,
                &mut stream(ctx.seed, "missingness", 0),
            )
            .map_err(|e| e.at_stage("synthetic missingness"))?;
            diag.unseen.extend(out.unseen);
            Some(out.table)
        }
    };
    Ok(GenerationOutput {
        complete: synth.table,
        with_missingness,
        diagnostics: diag,
    })
}

/// Fits one unweighted generative model per target on the given rows.
fn fit_unweighted(
    ctx: &Context,
    rows_for: impl Fn(usize) -> Result<DataTable>,
    diag: &mut Diagnostics,
) -> Result<Vec<StageModels>> {
    ctx.layout
        .targets()
        .iter()
        .enumerate()
        .map(|(k, target)| {
            let t = rows_for(k)?;
            let fit = fit_stage(
                ctx,
                &t,
                &generative_design(ctx.layout, k),
                ctx.layout.link(target),
                None,
            )
            .map_err(|e| e.at_stage(format!("fit {target}")))?;
            diag.record(target, ModelRole::Generative, &fit);
            Ok(StageModels {
                target: target.clone(),
                fits: vec![fit],
            })
        })
        .collect()
}

/// Drops every row with a missing value, then runs the pipeline.
pub(crate) fn cc_all_stage(ctx: &Context) -> Result<GenerationOutput> {
    let cc = ctx.real.complete_cases();
    let mut diag = Diagnostics::default();
    let baseline = fit_baseline_on(ctx, &cc)?;
    let stages = fit_unweighted(ctx, |_| Ok(cc.clone()), &mut diag)?;
    let synth = synthesize(ctx, &Plan::new(baseline, stages), &mut diag)?;
    finish(ctx, synth, None, diag)
}

/// Fits each stage on the rows observed for that stage's variables.
pub(crate) fn cc_by_stage(ctx: &Context) -> Result<GenerationOutput> {
    let mut diag = Diagnostics::default();
    let baseline = fit_baseline_on(ctx, ctx.real)?;
    let targets = ctx.layout.targets();
    let stages = fit_unweighted(
        ctx,
        |k| {
            let mut needed: Vec<&str> = targets[..k].iter().map(String::as_str).collect();
            needed.push(&targets[k]);
            ctx.real.observed_subset(&needed)
        },
        &mut diag,
    )?;
    let synth = synthesize(ctx, &Plan::new(baseline, stages), &mut diag)?;
    finish(ctx, synth, None, diag)
}
