//! The twelve built-in scenarios, keyed to the ACTG 175 column names.
//!
//! Continuous covariates (baseline, week-20 and week-96 CD4) enter on the
//! standardized scale. Treatment dummies omitted from a model have
//! coefficient zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Mechanism, MechanismModel, MissingnessModelSpec, Pattern, ScenarioSpec, Strength};
use crate::error::{Error, Result};

/// A list of scenarios as stored in a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRegistry {
    pub scenarios: Vec<ScenarioSpec>,
}

impl ScenarioRegistry {
    pub fn get(&self, id: &str) -> Option<&ScenarioSpec> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario registry serializes")
    }

    /// SHA-256 of the TOML serialization, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

fn logistic(
    target: &str,
    intercept: f64,
    standardize: &[&str],
    coefficients: &[(&str, f64)],
) -> MechanismModel {
    MechanismModel::Logistic(MissingnessModelSpec {
        target: target.into(),
        intercept: Some(intercept),
        calibrate_observed: None,
        standardize: standardize.iter().map(|s| s.to_string()).collect(),
        coefficients: coefficients
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<_, _>>(),
    })
}

fn week20(intercept: f64, art: (f64, f64), cd4: f64, arms: (f64, f64, f64)) -> MechanismModel {
    logistic(
        "cd420",
        intercept,
        &["cd40"],
        &[
            ("strat=2", art.0),
            ("strat=3", art.1),
            ("cd40", cd4),
            ("arms=1", arms.0),
            ("arms=2", arms.1),
            ("arms=3", arms.2),
        ],
    )
}

fn week96(intercept: f64, art: (f64, f64), cd4: f64, arm2: f64, cd4_wk20: f64) -> MechanismModel {
    logistic(
        "cd496",
        intercept,
        &["cd40", "cd420"],
        &[
            ("strat=2", art.0),
            ("strat=3", art.1),
            ("cd40", cd4),
            ("arms=2", arm2),
            ("cd420", cd4_wk20),
        ],
    )
}

fn outcome(intercept: f64, art: (f64, f64), cd4: f64, cd4_wk96: f64) -> MechanismModel {
    logistic(
        "cens",
        intercept,
        &["cd40", "cd496"],
        &[
            ("strat=2", art.0),
            ("strat=3", art.1),
            ("cd40", cd4),
            ("cd496", cd4_wk96),
        ],
    )
}

fn mar(
    id: &str,
    pattern: Pattern,
    proportion: f64,
    strength: Strength,
    models: Vec<MechanismModel>,
) -> ScenarioSpec {
    ScenarioSpec {
        id: id.into(),
        pattern,
        mechanism: Mechanism::Mar,
        proportion,
        strength: Some(strength),
        models,
    }
}

fn mcar(id: &str, pattern: Pattern, targets: &[&str]) -> ScenarioSpec {
    ScenarioSpec {
        id: id.into(),
        pattern,
        mechanism: Mechanism::Mcar,
        proportion: 0.25,
        strength: Some(Strength::Strong),
        models: targets
            .iter()
            .map(|t| MechanismModel::Bernoulli {
                target: t.to_string(),
                p_observed: 0.75,
            })
            .collect(),
    }
}

/// All twelve scenarios.
pub fn registry() -> ScenarioRegistry {
    use Pattern::{Monotone as M, NonMonotone as N};
    use Strength::{Strong, Weak};
    const STRONG_Z1: ((f64, f64), f64, (f64, f64, f64)) = ((3.0, 5.0), 10.0, (3.5, 2.0, 2.5));
    const WEAK_Z1: ((f64, f64), f64, (f64, f64, f64)) = ((0.3, 0.5), 5.0, (0.7, 0.3, 0.4));
    let strong_z1 = |c| week20(c, STRONG_Z1.0, STRONG_Z1.1, STRONG_Z1.2);
    let weak_z1 = |c| week20(c, WEAK_Z1.0, WEAK_Z1.1, WEAK_Z1.2);
    let strong_z2 = |c| week96(c, (5.0, 7.0), 15.0, 3.0, 15.0);
    let weak_z2 = |c| week96(c, (0.5, 0.7), 7.0, 0.3, 7.5);
    let strong_y_nm = |c| outcome(c, (5.0, 7.0), 20.0, 28.0);
    let strong_y_m = |c| outcome(c, (6.0, 8.0), 20.0, 28.0);
    let weak_y_nm = |c| outcome(c, (0.5, 0.7), 10.0, 14.0);
    let weak_y_m = |c| outcome(c, (0.5, 0.7), 5.0, 7.0);

    ScenarioRegistry {
        scenarios: vec![
            mar(
                "1A",
                N,
                0.25,
                Strong,
                vec![strong_z1(2.562), strong_y_nm(27.546)],
            ),
            mar(
                "1B",
                M,
                0.25,
                Strong,
                vec![strong_z1(2.562), strong_z2(14.357), strong_y_m(26.878)],
            ),
            mcar("2A", N, &["cd420", "cens"]),
            mcar("2B", M, &["cd420", "cd496", "cens"]),
            mar(
                "3A",
                N,
                0.10,
                Strong,
                vec![strong_z1(7.643), strong_y_nm(47.949)],
            ),
            mar(
                "3B",
                M,
                0.10,
                Strong,
                vec![strong_z1(7.643), strong_z2(27.717), strong_y_m(47.236)],
            ),
            mar(
                "4A",
                N,
                0.50,
                Strong,
                vec![strong_z1(-3.801), strong_y_nm(-1.626)],
            ),
            mar(
                "4B",
                M,
                0.50,
                Strong,
                vec![strong_z1(-3.801), strong_z2(-2.430), strong_y_m(-2.185)],
            ),
            mar("5A", N, 0.25, Weak, vec![weak_z1(3.440), weak_y_nm(15.821)]),
            mar(
                "5B",
                M,
                0.25,
                Weak,
                vec![weak_z1(3.155), weak_z2(8.947), weak_y_m(7.549)],
            ),
            mar("6A", N, 0.50, Weak, vec![weak_z1(-0.230), weak_y_nm(0.590)]),
            mar(
                "6B",
                M,
                0.50,
                Weak,
                vec![weak_z1(-0.230), weak_z2(0.534), weak_y_m(0.131)],
            ),
        ],
    }
}

/// A built-in scenario by id.
pub fn scenario(id: &str) -> Result<ScenarioSpec> {
    registry()
        .get(id)
        .cloned()
        .ok_or_else(|| Error::Config(format!("unknown scenario `{id}`")))
}

/// The built-in registry as a scenario file.
pub fn registry_toml() -> String {
    registry().to_toml()
}
