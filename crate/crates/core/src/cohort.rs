//! The ACTG 175 column layout and a simulated cohort with the same layout.
//!
//! The simulated cohort mimics the trial's published marginal summaries:
//! four arms, baseline CD4 around 350, CD4 at weeks 20 and 96 that depend on
//! baseline CD4, arm and symptoms, and an event indicator with roughly a
//! quarter of participants experiencing the event and a protective effect of
//! the combination arms. It stands in for the real data when that file is not
//! available.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::regression::expit;
use crate::rng::Rng;
use crate::table::{ColumnKind, ColumnSchema, DataTable, Role, Schema};

fn levels(v: &[&str]) -> ColumnKind {
    ColumnKind::Categorical(v.iter().map(|s| s.to_string()).collect())
}

/// Eighteen columns: fourteen baseline covariates, the four-arm treatment,
/// CD4 at weeks 20 and 96, and the event indicator.
pub fn actg175_schema() -> Schema {
    use ColumnKind::{Binary, Continuous, Count};
    use Role::{Baseline, Outcome, PostRandomization, Treatment};
    let c = ColumnSchema::new;
    Schema::new(vec![
        c("age", Continuous, Baseline),
        c("wtkg", Continuous, Baseline),
        c("hemo", Binary, Baseline),
        c("homo", Binary, Baseline),
        c("drugs", Binary, Baseline),
        c("karnof", levels(&["70", "80", "90", "100"]), Baseline),
        c("oprior", Binary, Baseline),
        c("z30", Binary, Baseline),
        c("preanti", Count, Baseline),
        c("race", Binary, Baseline),
        c("gender", Binary, Baseline),
        c("strat", levels(&["1", "2", "3"]), Baseline),
        c("symptom", Binary, Baseline),
        c("cd40", Count, Baseline),
        c("arms", levels(&["0", "1", "2", "3"]), Treatment),
        c("cd420", Count, PostRandomization(1)),
        c("cd496", Count, PostRandomization(2)),
        c("cens", Binary, Outcome),
    ])
    .expect("ACTG 175 schema is valid")
}

/// Size and effect settings of the simulated cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortOptions {
    pub n: usize,
    /// Log odds ratio of the event for each combination arm against arm 0.
    pub log_or_treated: f64,
}

impl Default for CohortOptions {
    fn default() -> Self {
        Self {
            n: 1342,
            log_or_treated: -0.8,
        }
    }
}

fn bern(rng: &mut Rng, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Loads a real ACTG 175 extract laid out as [`actg175_schema`].
pub fn load_actg175(path: impl AsRef<std::path::Path>) -> Result<DataTable> {
    let t = DataTable::load_csv(path, Arc::new(actg175_schema()), "NA")?;
    Ok(t)
}

/// Draws a complete cohort.
pub fn simulate_cohort(options: &CohortOptions, rng: &mut Rng) -> Result<DataTable> {
    let n = options.n;
    let schema = Arc::new(actg175_schema());
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); schema.len()];
    let age_d = Normal::new(35.0, 8.7).expect("valid normal");
    let wt_d = LogNormal::new(75f64.ln() - 0.015, 0.17).expect("valid lognormal");
    let cd40_d = Normal::new(350.0, 115.0).expect("valid normal");
    let e20 = Normal::new(0.0, 95.0).expect("valid normal");
    let e96 = Normal::new(0.0, 115.0).expect("valid normal");
    let arm_20 = [-5.0, 45.0, 35.0, 30.0];
    let arm_96 = [-10.0, 40.0, 30.0, 25.0];
    for _ in 0..n {
        let gender = bern(rng, 0.83);
        let race = bern(rng, 0.29);
        let homo = bern(rng, if gender == 1.0 { 0.77 } else { 0.05 });
        let drugs = bern(rng, 0.13);
        let hemo = if gender == 1.0 { bern(rng, 0.10) } else { 0.0 };
        let age: f64 = age_d.sample(rng);
        let age = age.clamp(12.0, 70.0);
        let wtkg = wt_d.sample(rng).clamp(31.0, 160.0);
        let u: f64 = rng.random();
        let strat = if u < 0.42 {
            0.0
        } else if u < 0.64 {
            1.0
        } else {
            2.0
        };
        let preanti = match strat as usize {
            0 => 0.0,
            1 => rng.random_range(1..=365) as f64,
            _ => rng.random_range(366..=2850) as f64,
        };
        let z30 = if strat == 0.0 {
            bern(rng, 0.05)
        } else {
            bern(rng, 0.95)
        };
        let oprior = bern(rng, 0.02);
        let symptom = bern(rng, 0.17);
        let u: f64 = rng.random();
        let karnof = if u < 0.01 {
            0.0
        } else if u < 0.11 {
            1.0
        } else if u < 0.48 {
            2.0
        } else {
            3.0
        };
        let cd40: f64 = cd40_d.sample(rng);
        let cd40 = cd40.clamp(0.0, 1200.0).round();
        let arm = rng.random_range(0..4usize);
        let mu20 = 55.0 + 0.85 * cd40 + arm_20[arm]
            - 15.0 * symptom
            - if strat == 2.0 { 10.0 } else { 0.0 };
        let cd420 = (mu20 + e20.sample(rng)).max(0.0).round();
        let mu96 = 10.0 + 0.6 * cd420 + 0.3 * cd40 + arm_96[arm] - 20.0 * symptom;
        let cd496 = (mu96 + e96.sample(rng)).max(0.0).round();
        let combination = if arm == 0 { 0.0 } else { 1.0 };
        let eta = -0.75 + options.log_or_treated * combination
            - 0.55 * (cd496 - 330.0) / 150.0
            - 0.35 * (cd40 - 350.0) / 115.0
            + 0.45 * symptom
            + 0.25 * (strat / 2.0)
            + 0.10 * combination * (cd40 - 350.0) / 115.0;
        let cens = bern(rng, expit(eta));
        let row = [
            age.round(),
            (wtkg * 10.0).round() / 10.0,
            hemo,
            homo,
            drugs,
            karnof,
            oprior,
            z30,
            preanti,
            race,
            gender,
            strat,
            symptom,
            cd40,
            arm as f64,
            cd420,
            cd496,
            cens,
        ];
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    DataTable::complete(schema, cols)
}
