//! Fidelity of a synthetic table to the real one.
//!
//! Two comparisons are made. The `complete` variant compares the real table
//! before any missingness was imposed with the complete synthetic table. The
//! `observed` variant compares the observed cells of the masked real table
//! with the observed cells of the synthetic table; frameworks that do not
//! generate missingness contribute their complete table there.

mod efficacy;
mod inference;
mod pca;
mod similarity;

pub use efficacy::{ml_efficacy, BoostOptions, BoostedTrees, Classifier, EfficacyOptions, EfficacyScores};
pub use inference::{trial_or, OddsRatio};
pub use pca::{pca, PcaSummary};
pub use similarity::{
    average_ranks, bin, contingency_similarity, frequencies, ks_complement, quantile, quartile_cuts, spearman,
    spearman_similarity, tvd_complement,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::table::DataTable;

/// Which pair of tables a score compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Complete,
    Observed,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Complete, Variant::Observed];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Complete => "complete",
            Variant::Observed => "observed",
        }
    }
}

/// Which metric families to compute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub univariate: bool,
    pub bivariate: bool,
    pub pca: bool,
    /// Classifiers for the discrimination metric; empty disables it.
    pub classifiers: Vec<Classifier>,
    pub efficacy: EfficacyOptions,
    pub inference: bool,
    /// Treatment level kept as the comparator when dichotomizing.
    pub baseline_arm: String,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            univariate: true,
            bivariate: true,
            pca: true,
            classifiers: Classifier::ALL.to_vec(),
            efficacy: EfficacyOptions::default(),
            inference: true,
            baseline_arm: "0".into(),
        }
    }
}

/// KS complement for numeric columns, TVD complement for discrete ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnivariateScore {
    pub variable: String,
    pub variant: Variant,
    /// `ks_complement` or `tvd_complement`.
    pub metric: String,
    pub score: f64,
}

/// Spearman similarity for numeric pairs, contingency similarity otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub first: String,
    pub second: String,
    pub variant: Variant,
    /// `spearman_similarity` or `contingency_similarity`.
    pub metric: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaComparison {
    pub variant: Variant,
    pub real: PcaSummary,
    pub synthetic: PcaSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficacyResult {
    pub classifier: Classifier,
    pub variant: Variant,
    /// Complements of the raw scores.
    pub complements: EfficacyScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub variant: Variant,
    pub real: OddsRatio,
    pub synthetic: OddsRatio,
}

impl InferenceResult {
    pub fn abs_log_or_error(&self) -> f64 {
        (self.synthetic.log_or - self.real.log_or).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingnessProportion {
    pub variable: String,
    pub real: f64,
    pub synthetic: f64,
}

/// All scores for one synthetic table. A family that could not be computed
/// is listed in `skipped` with the reason.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub univariate: Vec<UnivariateScore>,
    pub bivariate: Vec<PairScore>,
    pub pca: Vec<PcaComparison>,
    pub efficacy: Vec<EfficacyResult>,
    pub inference: Vec<InferenceResult>,
    pub missingness: Vec<MissingnessProportion>,
    pub skipped: Vec<(String, String)>,
}

/// One row of the long format: `metric_name`, `variant`, `value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric_name: String,
    pub variant: String,
    pub value: f64,
}

fn record(metric_name: String, variant: &str, value: f64) -> MetricRecord {
    MetricRecord {
        metric_name,
        variant: variant.to_string(),
        value,
    }
}

impl MetricReport {
    /// Flattens the report. Names are `family:target`, for example
    /// `ks_complement:cd420`, `spearman_similarity:cd40|cd420`,
    /// `pca_explained_real:pc1` or `efficacy_knn5:accuracy`.
    pub fn to_long(&self) -> Vec<MetricRecord> {
        let mut out = Vec::new();
        for u in &self.univariate {
            out.push(record(format!("{}:{}", u.metric, u.variable), u.variant.name(), u.score));
        }
        for p in &self.bivariate {
            out.push(record(format!("{}:{}|{}", p.metric, p.first, p.second), p.variant.name(), p.score));
        }
        for p in &self.pca {
            for (who, s) in [("real", &p.real), ("synthetic", &p.synthetic)] {
                for (k, e) in s.explained.iter().take(2).enumerate() {
                    out.push(record(format!("pca_explained_{who}:pc{}", k + 1), p.variant.name(), *e));
                }
                for (k, l) in s.loadings.iter().enumerate() {
                    for (c, v) in s.columns.iter().zip(l) {
                        out.push(record(format!("pca_loading_{who}:pc{}|{c}", k + 1), p.variant.name(), *v));
                    }
                }
            }
        }
        for e in &self.efficacy {
            for (name, v) in e.complements.named() {
                out.push(record(format!("efficacy_{}:{name}", e.classifier.name()), e.variant.name(), v));
            }
        }
        for r in &self.inference {
            let v = r.variant.name();
            for (who, or) in [("real", &r.real), ("synthetic", &r.synthetic)] {
                out.push(record(format!("or_{who}:estimate"), v, or.or));
                out.push(record(format!("or_{who}:lower"), v, or.lower));
                out.push(record(format!("or_{who}:upper"), v, or.upper));
            }
            out.push(record("or_abs_log_error:estimate".into(), v, r.abs_log_or_error()));
            out.push(record("or_ci_overlap:estimate".into(), v, f64::from(u8::from(r.synthetic.overlaps(&r.real)))));
        }
        for m in &self.missingness {
            out.push(record(format!("missing_proportion_real:{}", m.variable), "observed", m.real));
            out.push(record(format!("missing_proportion_synthetic:{}", m.variable), "observed", m.synthetic));
        }
        out
    }

    /// Per-row projections onto the first two components, named
    /// `pca_score_{real|synthetic}:pc{k}|{row}`. Kept apart from
    /// [`MetricReport::to_long`] because they grow with the table.
    pub fn pca_scores(&self) -> Vec<MetricRecord> {
        let mut out = Vec::new();
        for p in &self.pca {
            for (who, s) in [("real", &p.real), ("synthetic", &p.synthetic)] {
                for (k, scores) in s.scores.iter().enumerate() {
                    for (i, v) in scores.iter().enumerate() {
                        out.push(record(format!("pca_score_{who}:pc{}|{i}", k + 1), p.variant.name(), *v));
                    }
                }
            }
        }
        out
    }

    /// Mean score of one univariate metric over the given variables.
    pub fn mean_univariate(&self, metric: &str, variant: Variant, variables: &[String]) -> Option<f64> {
        let v: Vec<f64> = self
            .univariate
            .iter()
            .filter(|u| u.metric == metric && u.variant == variant && variables.contains(&u.variable))
            .map(|u| u.score)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// The tables a report compares.
#[derive(Clone, Copy, Debug)]
pub struct Comparison<'a> {
    /// Real table before missingness was imposed.
    pub real_complete: &'a DataTable,
    /// Real table as observed.
    pub real_observed: &'a DataTable,
    pub synthetic_complete: &'a DataTable,
    /// Synthetic table with generated missingness, if any.
    pub synthetic_observed: Option<&'a DataTable>,
}

impl<'a> Comparison<'a> {
    fn pair(&self, variant: Variant) -> (&'a DataTable, &'a DataTable) {
        match variant {
            Variant::Complete => (self.real_complete, self.synthetic_complete),
            Variant::Observed => (self.real_observed, self.synthetic_observed.unwrap_or(self.synthetic_complete)),
        }
    }
}

/// Codes of observed cells; pairs keep only rows observed in both columns.
fn observed_pairs(t: &DataTable, a: usize, b: usize) -> (Vec<f64>, Vec<f64>) {
    (0..t.n_rows())
        .filter_map(|i| Some((t.get(i, a)?, t.get(i, b)?)))
        .unzip()
}

fn observed_column(t: &DataTable, j: usize) -> Vec<f64> {
    (0..t.n_rows()).filter_map(|i| t.get(i, j)).collect()
}

/// Discrete labels of a column: level codes, or real-quartile bins for
/// numeric columns.
fn labels(values: &[f64], numeric: bool, cuts: Option<&[f64; 3]>) -> Vec<u64> {
    match (numeric, cuts) {
        (true, Some(c)) => values.iter().map(|&v| bin(v, c) as u64).collect(),
        _ => values.iter().map(|&v| v as u64).collect(),
    }
}

fn univariate(cmp: &Comparison, variant: Variant, report: &mut MetricReport) -> Result<()> {
    let (real, synth) = cmp.pair(variant);
    for (j, col) in real.schema().columns().iter().enumerate() {
        let (r, s) = (observed_column(real, j), observed_column(synth, j));
        if r.is_empty() || s.is_empty() {
            report.skipped.push((format!("univariate:{}", col.name), "no observed values".into()));
            continue;
        }
        let (metric, score) = if col.kind.is_numeric() {
            ("ks_complement", ks_complement(&r, &s)?)
        } else {
            ("tvd_complement", tvd_complement(&labels(&r, false, None), &labels(&s, false, None))?)
        };
        report.univariate.push(UnivariateScore {
            variable: col.name.clone(),
            variant,
            metric: metric.into(),
            score,
        });
    }
    Ok(())
}

fn bivariate(cmp: &Comparison, variant: Variant, report: &mut MetricReport) -> Result<()> {
    let (real, synth) = cmp.pair(variant);
    let cols = real.schema().columns();
    let cuts: Vec<Option<[f64; 3]>> = (0..cols.len())
        .map(|j| {
            let v = observed_column(real, j);
            (cols[j].kind.is_numeric() && !v.is_empty()).then(|| quartile_cuts(&v)).transpose()
        })
        .collect::<Result<_>>()?;
    for a in 0..cols.len() {
        for b in a + 1..cols.len() {
            let (ra, rb) = observed_pairs(real, a, b);
            let (sa, sb) = observed_pairs(synth, a, b);
            let both_numeric = cols[a].kind.is_numeric() && cols[b].kind.is_numeric();
            let name = format!("bivariate:{}|{}", cols[a].name, cols[b].name);
            let scored = if ra.is_empty() || sa.is_empty() {
                Err(Error::Metric("no jointly observed rows".into()))
            } else if both_numeric {
                spearman_similarity((&ra, &rb), (&sa, &sb)).map(|s| ("spearman_similarity", s))
            } else {
                let (na, nb) = (cols[a].kind.is_numeric(), cols[b].kind.is_numeric());
                contingency_similarity(
                    (&labels(&ra, na, cuts[a].as_ref()), &labels(&rb, nb, cuts[b].as_ref())),
                    (&labels(&sa, na, cuts[a].as_ref()), &labels(&sb, nb, cuts[b].as_ref())),
                )
                .map(|s| ("contingency_similarity", s))
            };
            match scored {
                Ok((metric, score)) => report.bivariate.push(PairScore {
                    first: cols[a].name.clone(),
                    second: cols[b].name.clone(),
                    variant,
                    metric: metric.into(),
                    score,
                }),
                Err(e) => report.skipped.push((name, e.to_string())),
            }
        }
    }
    Ok(())
}

/// Numeric columns of the complete cases, column-wise.
fn numeric_complete_cases(t: &DataTable) -> (Vec<String>, Vec<Vec<f64>>) {
    let cc = t.complete_cases();
    let names: Vec<String> = cc
        .schema()
        .columns()
        .iter()
        .filter(|c| c.kind.is_numeric())
        .map(|c| c.name.clone())
        .collect();
    let data = names
        .iter()
        .map(|n| cc.column(n).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();
    (names, data)
}

fn pca_compare(cmp: &Comparison, variant: Variant) -> Result<PcaComparison> {
    let (real, synth) = cmp.pair(variant);
    let (names, r) = numeric_complete_cases(real);
    let (_, s) = numeric_complete_cases(synth);
    Ok(PcaComparison {
        variant,
        real: pca(&names, &r)?,
        synthetic: pca(&names, &s)?,
    })
}

/// Computes every enabled metric. Randomness (the classifier splits) comes
/// from streams derived from `seed`.
pub fn evaluate(cmp: &Comparison, config: &MetricConfig, seed: u64) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    for variant in Variant::ALL {
        if config.univariate {
            univariate(cmp, variant, &mut report)?;
        }
        if config.bivariate {
            bivariate(cmp, variant, &mut report)?;
        }
        if config.pca {
            match pca_compare(cmp, variant) {
                Ok(p) => report.pca.push(p),
                Err(e) => report.skipped.push((format!("pca:{}", variant.name()), e.to_string())),
            }
        }
        if config.inference {
            let (real, synth) = cmp.pair(variant);
            match (trial_or(real, &config.baseline_arm), trial_or(synth, &config.baseline_arm)) {
                (Ok(r), Ok(s)) => report.inference.push(InferenceResult {
                    variant,
                    real: r,
                    synthetic: s,
                }),
                (Err(e), _) | (_, Err(e)) => report.skipped.push((format!("inference:{}", variant.name()), e.to_string())),
            }
        }
    }
    for (k, &c) in config.classifiers.iter().enumerate() {
        let (real, synth) = cmp.pair(Variant::Observed);
        let mut rng: Rng = stream(seed, "efficacy", k as u64);
        match ml_efficacy(real, synth, c, &config.efficacy, &mut rng) {
            Ok(s) => report.efficacy.push(EfficacyResult {
                classifier: c,
                variant: Variant::Observed,
                complements: s.complement(),
            }),
            Err(e) => report.skipped.push((format!("efficacy:{}", c.name()), e.to_string())),
        }
    }
    let (real, synth) = cmp.pair(Variant::Observed);
    for name in real.schema().temporal_targets() {
        report.missingness.push(MissingnessProportion {
            real: real.missing_fraction(&name)?,
            synthetic: synth.missing_fraction(&name)?,
            variable: name,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{simulate_cohort, CohortOptions};
    use crate::missingness::{impose, scenario};
    use crate::rng::seeded;

    fn setup() -> (DataTable, DataTable) {
        let truth = simulate_cohort(&CohortOptions { n: 400, ..Default::default() }, &mut seeded(1)).unwrap();
        let masked = impose(&truth, &scenario("2A").unwrap(), &mut seeded(2)).unwrap().table;
        (truth, masked)
    }

    fn fast() -> MetricConfig {
        MetricConfig {
            efficacy: EfficacyOptions {
                boost: BoostOptions { n_trees: 10, ..Default::default() },
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn self_comparison_scores_one() {
        let (truth, masked) = setup();
        let cmp = Comparison {
            real_complete: &truth,
            real_observed: &masked,
            synthetic_complete: &truth,
            synthetic_observed: Some(&masked),
        };
        let report = evaluate(&cmp, &fast(), 3).unwrap();
        assert_eq!(report.univariate.len(), 36);
        assert!(report.univariate.iter().all(|u| u.score == 1.0));
        assert!(report.bivariate.iter().all(|p| (p.score - 1.0).abs() < 1e-12));
        assert_eq!(report.bivariate.len(), 2 * 153);
        for p in &report.pca {
            assert_eq!(p.real.explained, p.synthetic.explained);
        }
        for r in &report.inference {
            assert_eq!(r.abs_log_or_error(), 0.0);
            assert!(r.real.lower <= r.real.or && r.real.or <= r.real.upper);
        }
        for m in &report.missingness {
            assert_eq!(m.real, m.synthetic);
        }
        assert_eq!(report.efficacy.len(), 2);
        assert!(report.skipped.is_empty(), "{:?}", report.skipped);
    }

    #[test]
    fn long_format_covers_every_score() {
        let (truth, masked) = setup();
        let cmp = Comparison {
            real_complete: &truth,
            real_observed: &masked,
            synthetic_complete: &truth,
            synthetic_observed: None,
        };
        let report = evaluate(&cmp, &fast(), 3).unwrap();
        let long = report.to_long();
        assert!(long.iter().all(|r| r.value.is_finite()));
        let count = |prefix: &str| long.iter().filter(|r| r.metric_name.starts_with(prefix)).count();
        assert_eq!(count("ks_complement:"), report.univariate.iter().filter(|u| u.metric == "ks_complement").count());
        assert_eq!(count("efficacy_"), 8);
        assert_eq!(count("missing_proportion_synthetic:"), 3);
        // Without generated missingness the observed synthetic table is complete.
        assert!(report.missingness.iter().all(|m| m.synthetic == 0.0));
        assert!(long.iter().any(|r| r.metric_name == "or_real:estimate" && r.variant == "complete"));
    }
}
