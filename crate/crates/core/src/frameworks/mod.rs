//! Sequential generation frameworks for trial data with missing values.
//!
//! Every framework follows the same pipeline: baseline covariates from a
//! copula, treatment by randomization, each post-randomization variable from
//! a regression on everything measured before it plus an admissible residual,
//! and the outcome from a logistic regression. Frameworks differ in which real
//! rows each model is fit to, how those rows are weighted, and whether
//! missingness is drawn for the synthetic table.

mod ipw;
mod mi;
mod pipeline;

pub use mi::{imputation_count, mice_impute, MiOptions};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::baseline::{BaselineKind, TreatmentDistribution};
use crate::error::{Error, Result, Stratum};
use crate::missingness::{Pattern, UnseenEvent};
use crate::regression::{DesignSpec, FittedRegression, Link, LogisticOptions, Response, Term};
use crate::rng::Rng;
use crate::table::{ColumnKind, DataTable, Schema};

/// The generation frameworks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameworkKind {
    #[serde(alias = "cc_all")]
    CcAllStage,
    #[serde(alias = "cc_by")]
    CcByStage,
    #[serde(alias = "ipw_ind")]
    IpwIndicator,
    #[serde(alias = "ipw_force")]
    IpwForceMonotonicity,
    #[serde(alias = "ipw_mono")]
    IpwMonotone,
    Mi,
}

impl FrameworkKind {
    pub const ALL: [FrameworkKind; 6] = [
        FrameworkKind::CcAllStage,
        FrameworkKind::CcByStage,
        FrameworkKind::IpwIndicator,
        FrameworkKind::IpwForceMonotonicity,
        FrameworkKind::IpwMonotone,
        FrameworkKind::Mi,
    ];

    /// Canonical snake-case name.
    pub fn name(self) -> &'static str {
        match self {
            FrameworkKind::CcAllStage => "cc_all_stage",
            FrameworkKind::CcByStage => "cc_by_stage",
            FrameworkKind::IpwIndicator => "ipw_indicator",
            FrameworkKind::IpwForceMonotonicity => "ipw_force_monotonicity",
            FrameworkKind::IpwMonotone => "ipw_monotone",
            FrameworkKind::Mi => "mi",
        }
    }

    /// Whether the framework applies to inputs with the given pattern.
    pub fn supports(self, pattern: Pattern) -> bool {
        match self {
            FrameworkKind::IpwIndicator | FrameworkKind::IpwForceMonotonicity => {
                pattern == Pattern::NonMonotone
            }
            FrameworkKind::IpwMonotone => pattern == Pattern::Monotone,
            _ => true,
        }
    }

    /// Whether the output includes a table with synthetic missingness.
    pub fn draws_missingness(self) -> bool {
        !matches!(self, FrameworkKind::CcAllStage | FrameworkKind::CcByStage)
    }
}

impl fmt::Display for FrameworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrameworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cc_all" | "cc_all_stage" => FrameworkKind::CcAllStage,
            "cc_by" | "cc_by_stage" => FrameworkKind::CcByStage,
            "ipw_ind" | "ipw_indicator" => FrameworkKind::IpwIndicator,
            "ipw_force" | "ipw_force_monotonicity" => FrameworkKind::IpwForceMonotonicity,
            "ipw_mono" | "ipw_monotone" => FrameworkKind::IpwMonotone,
            "mi" => FrameworkKind::Mi,
            other => return Err(Error::Config(format!("unknown framework `{other}`"))),
        })
    }
}

/// Settings shared by all frameworks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub baseline: BaselineKind,
    /// Treatment allocation; equal probabilities over the arms when absent.
    pub treatment: Option<TreatmentDistribution>,
    /// Lower bound for generated values per column. Count columns default
    /// to 0 and continuous columns are unbounded.
    pub thresholds: BTreeMap<String, f64>,
    /// Missingness pattern of the input; inferred from the masks when absent.
    pub pattern: Option<Pattern>,
    /// Leave later post-randomization variables out of the second factor of
    /// the forced-monotone outcome model.
    pub force_temporal_order: bool,
    pub mi: MiOptions,
    /// Options for every logistic fit; by default unconverged fits are kept
    /// and flagged in the diagnostics.
    pub logistic: LogisticOptions,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            baseline: BaselineKind::GaussianCopula,
            treatment: None,
            thresholds: BTreeMap::new(),
            pattern: None,
            force_temporal_order: false,
            mi: MiOptions::default(),
            logistic: LogisticOptions {
                accept_unconverged: true,
                ..Default::default()
            },
        }
    }
}

impl GenerationConfig {
    fn threshold(&self, schema: &Schema, column: &str) -> Result<f64> {
        if let Some(&t) = self.thresholds.get(column) {
            return Ok(t);
        }
        Ok(match schema.get(column)?.kind {
            ColumnKind::Count => 0.0,
            _ => f64::NEG_INFINITY,
        })
    }
}

/// Purpose of a fitted model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Generative,
    Missingness,
}

/// Summary of one fitted model.
#[derive(Clone, Debug, PartialEq)]
pub struct StageDiagnostic {
    pub stage: String,
    pub role: ModelRole,
    pub n_fit: usize,
    pub min_weight: f64,
    pub max_weight: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl StageDiagnostic {
    fn of(stage: &str, role: ModelRole, fit: &FittedRegression) -> Self {
        let (lo, hi) = fit
            .weights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| {
                (lo.min(w), hi.max(w))
            });
        Self {
            stage: stage.to_string(),
            role,
            n_fit: fit.n_fit,
            min_weight: lo,
            max_weight: hi,
            iterations: fit.iterations,
            converged: fit.converged,
        }
    }
}

/// What happened inside one generate call.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub stages: Vec<StageDiagnostic>,
    /// Declared levels absent from a model's fitting rows.
    pub dropped_strata: Vec<(String, Stratum)>,
    /// Synthetic levels a fitted model could not represent.
    pub unseen: Vec<UnseenEvent>,
    /// Synthetic values set to the threshold because no residual was admissible.
    pub empty_admissible: usize,
    /// Number of imputations (multiple imputation only).
    pub imputations: Option<usize>,
}

impl Diagnostics {
    fn record(&mut self, stage: &str, role: ModelRole, fit: &FittedRegression) {
        self.stages.push(StageDiagnostic::of(stage, role, fit));
        for s in fit.encoding.dropped() {
            self.dropped_strata.push((stage.to_string(), s.clone()));
        }
    }

    /// Largest inverse-probability weight used by any generative model.
    pub fn max_weight(&self) -> f64 {
        self.stages
            .iter()
            .filter(|s| s.role == ModelRole::Generative)
            .map(|s| s.max_weight)
            .fold(1.0, f64::max)
    }

    /// Number of logistic fits kept without converging.
    pub fn unconverged(&self) -> usize {
        self.stages.iter().filter(|s| !s.converged).count()
    }

    /// Total rows affected by unseen levels.
    pub fn unseen_rows(&self) -> usize {
        self.unseen.iter().map(|e| e.rows).sum()
    }
}

#[derive(Clone, Debug)]
pub struct GenerationOutput {
    /// Fully observed synthetic table with as many rows as the input.
    pub complete: DataTable,
    /// The complete table with synthetic missingness applied.
    pub with_missingness: Option<DataTable>,
    pub diagnostics: Diagnostics,
}

/// Column roles of a trial table.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub baseline: Vec<String>,
    pub treatment: String,
    pub post: Vec<String>,
    pub outcome: String,
}

impl Layout {
    fn of(schema: &Schema) -> Result<Self> {
        let treatment = schema.treatment()?;
        if !treatment.kind.is_discrete() {
            return Err(Error::Schema("treatment column must be discrete".into()));
        }
        let outcome = schema.outcome()?;
        if outcome.kind != ColumnKind::Binary {
            return Err(Error::Schema("outcome column must be binary".into()));
        }
        let post = schema.post_randomization();
        for z in &post {
            if !matches!(
                schema.get(z)?.kind,
                ColumnKind::Continuous | ColumnKind::Count
            ) {
                return Err(Error::Schema(format!(
                    "post-randomization column `{z}` must be numeric"
                )));
            }
        }
        Ok(Self {
            baseline: schema.baseline(),
            treatment: treatment.name.clone(),
            post,
            outcome: outcome.name.clone(),
        })
    }

    /// `Z_1, …, Z_K, Y`.
    pub fn targets(&self) -> Vec<String> {
        let mut t = self.post.clone();
        t.push(self.outcome.clone());
        t
    }

    /// Baseline, treatment and the first `k` targets.
    pub fn history(&self, k: usize) -> Vec<String> {
        let mut c = self.baseline.clone();
        c.push(self.treatment.clone());
        c.extend(self.targets().into_iter().take(k));
        c
    }

    pub fn link(&self, target: &str) -> Link {
        if target == self.outcome {
            Link::Logit
        } else {
            Link::Identity
        }
    }
}

/// Regression of target `k` on main effects of its history.
pub(crate) fn generative_design(layout: &Layout, k: usize) -> DesignSpec {
    let target = layout.targets()[k].clone();
    DesignSpec::new(
        Response::Value(target),
        DesignSpec::mains(&layout.history(k)),
    )
    .standardized()
}

/// Replaces the main effect of `column` by its observation indicator and the
/// indicator-value interaction.
pub(crate) fn indicator_terms(terms: Vec<Term>, column: &str) -> Vec<Term> {
    terms
        .into_iter()
        .flat_map(|t| {
            if t == Term::Main(column.to_string()) {
                vec![
                    Term::Observed(column.to_string()),
                    Term::ObservedTimes(column.to_string()),
                ]
            } else {
                vec![t]
            }
        })
        .collect()
}

fn resolve_pattern(real: &DataTable, config: &GenerationConfig) -> Pattern {
    config.pattern.unwrap_or(if real.is_monotone() {
        Pattern::Monotone
    } else {
        Pattern::NonMonotone
    })
}

/// Fits `kind` to the masked real table and draws a synthetic table of the
/// same size.
///
/// The generator's randomness comes from a seed drawn from `rng`; each stage
/// then uses its own derived stream, so frameworks given generators in the
/// same state share baseline and treatment draws.
pub fn generate(
    kind: FrameworkKind,
    real: &DataTable,
    config: &GenerationConfig,
    rng: &mut Rng,
) -> Result<GenerationOutput> {
    let layout = Layout::of(real.schema())?;
    let pattern = resolve_pattern(real, config);
    if !kind.supports(pattern) {
        return Err(Error::PatternMismatch {
            framework: kind.name().into(),
            reason: format!("{pattern:?} input"),
        });
    }
    if kind == FrameworkKind::IpwMonotone && !real.is_monotone() {
        return Err(Error::PatternMismatch {
            framework: kind.name().into(),
            reason: "the input masks are not monotone".into(),
        });
    }
    let seed: u64 = rng.random();
    let ctx = pipeline::Context {
        real,
        layout: &layout,
        config,
        seed,
    };
    match kind {
        FrameworkKind::CcAllStage => pipeline::cc_all_stage(&ctx),
        FrameworkKind::CcByStage => pipeline::cc_by_stage(&ctx),
        FrameworkKind::IpwIndicator => ipw::indicator(&ctx),
        FrameworkKind::IpwForceMonotonicity => ipw::force_monotonicity(&ctx),
        FrameworkKind::IpwMonotone => ipw::monotone(&ctx),
        FrameworkKind::Mi => mi::generate_mi(&ctx, pattern),
    }
}

/// Estimated probability that each row of a monotone input is observed at
/// each temporal target, from the same observation models and products that
/// weight the monotone inverse-probability framework. One vector per target
/// in measurement order; rows missing the previous target get 0.
pub fn monotone_observation_probabilities(
    real: &DataTable,
    config: &GenerationConfig,
) -> Result<Vec<(String, Vec<f64>)>> {
    if !real.is_monotone() {
        return Err(Error::PatternMismatch {
            framework: FrameworkKind::IpwMonotone.name().into(),
            reason: "the input masks are not monotone".into(),
        });
    }
    let layout = Layout::of(real.schema())?;
    let ctx = pipeline::Context {
        real,
        layout: &layout,
        config,
        seed: 0,
    };
    let conditional = ipw::monotone_models(&ctx, &mut Diagnostics::default())?;
    let p = ipw::cumulative_probabilities(&ctx, &conditional)?;
    Ok(layout.targets().into_iter().zip(p).collect())
}
