//! Experiment configuration files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cohort::{actg175_schema, simulate_cohort, CohortOptions};
use crate::error::{Error, Result};
use crate::frameworks::{FrameworkKind, GenerationConfig};
use crate::metrics::MetricConfig;
use crate::missingness::{registry, ScenarioRegistry, ScenarioSpec};
use crate::rng::seeded;
use crate::table::{DataTable, Schema};

/// Where the complete real table comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// A CSV file. Rows with any missing value are dropped before
    /// missingness is imposed.
    Csv {
        path: PathBuf,
        /// Schema file; the ACTG 175 layout when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schema: Option<PathBuf>,
        #[serde(default = "default_missing_token")]
        missing_token: String,
    },
    /// The simulated stand-in cohort.
    Simulated {
        #[serde(default = "default_cohort_n")]
        n: usize,
        #[serde(default = "default_cohort_log_or")]
        log_or_treated: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_missing_token() -> String {
    "NA".into()
}

fn default_cohort_n() -> usize {
    CohortOptions::default().n
}

fn default_cohort_log_or() -> f64 {
    CohortOptions::default().log_or_treated
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Simulated {
            n: default_cohort_n(),
            log_or_treated: default_cohort_log_or(),
            seed: 0,
        }
    }
}

/// Reads a schema file: a list of `[[columns]]` with `name`, `kind`, `role`,
/// and `index` or `levels` where they apply.
pub fn load_schema(path: &Path) -> Result<Schema> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// The loaded real table.
#[derive(Clone, Debug)]
pub struct Dataset {
    /// Complete rows only.
    pub table: DataTable,
    /// The table as read, incomplete rows included.
    pub raw: DataTable,
}

impl Dataset {
    pub fn rows_read(&self) -> usize {
        self.raw.n_rows()
    }
}

impl DatasetConfig {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetConfig::Csv {
                path,
                schema,
                missing_token,
            } => {
                let schema = match schema {
                    Some(p) => load_schema(p)?,
                    None => actg175_schema(),
                };
                let raw = DataTable::load_csv(path, Arc::new(schema), missing_token)?;
                Ok(Dataset {
                    table: raw.complete_cases(),
                    raw,
                })
            }
            DatasetConfig::Simulated { n, log_or_treated, seed } => {
                let options = CohortOptions {
                    n: *n,
                    log_or_treated: *log_or_treated,
                };
                let table = simulate_cohort(&options, &mut seeded(*seed))?;
                Ok(Dataset {
                    raw: table.clone(),
                    table,
                })
            }
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let DatasetConfig::Csv { path, schema, .. } = self {
            *path = base.join(&*path);
            if let Some(s) = schema {
                *s = base.join(&*s);
            }
        }
    }
}

/// A simulation experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed from which every run seed is derived.
    pub seed: u64,
    pub n_runs: usize,
    /// Worker threads; all available cores when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Scenario ids, looked up among `inline_scenarios`, then the scenario
    /// file, then the built-in registry.
    pub scenarios: Vec<String>,
    /// Frameworks to run; each scenario runs those that support its pattern.
    pub frameworks: Vec<FrameworkKind>,
    /// Impose missingness once per scenario instead of once per run.
    pub fixed_mask: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub inline_scenarios: Vec<ScenarioSpec>,
    pub dataset: DatasetConfig,
    pub generation: GenerationConfig,
    pub metrics: MetricConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            n_runs: 100,
            workers: None,
            scenarios: vec!["1A".into(), "1B".into()],
            frameworks: FrameworkKind::ALL.to_vec(),
            fixed_mask: false,
            scenario_file: None,
            inline_scenarios: Vec::new(),
            dataset: DatasetConfig::default(),
            generation: GenerationConfig::default(),
            metrics: MetricConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut c = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        c.dataset.resolve(base);
        if let Some(f) = &mut c.scenario_file {
            *f = base.join(&*f);
        }
        Ok(c)
    }

    /// Every scenario the config can refer to: inline ones first, then the
    /// scenario file, then the built-ins not shadowed by either.
    pub fn scenario_registry(&self) -> Result<ScenarioRegistry> {
        let mut all = self.inline_scenarios.clone();
        if let Some(path) = &self.scenario_file {
            let text = std::fs::read_to_string(path)?;
            all.extend(ScenarioRegistry::from_toml(&text)?.scenarios);
        }
        for s in registry().scenarios {
            if !all.iter().any(|a| a.id == s.id) {
                all.push(s);
            }
        }
        let mut seen = std::collections::HashSet::new();
        all.retain(|s| seen.insert(s.id.clone()));
        Ok(ScenarioRegistry { scenarios: all })
    }

    /// The requested scenarios, validated against `schema`.
    pub fn resolve_scenarios(&self, schema: &Schema) -> Result<Vec<ScenarioSpec>> {
        let reg = self.scenario_registry()?;
        self.scenarios
            .iter()
            .map(|id| {
                let s = reg.get(id).cloned().ok_or_else(|| Error::Config(format!("unknown scenario `{id}`")))?;
                s.validate(schema)?;
                Ok(s)
            })
            .collect()
    }

    /// Frameworks run for a scenario.
    pub fn frameworks_for(&self, scenario: &ScenarioSpec) -> Vec<FrameworkKind> {
        self.frameworks.iter().copied().filter(|k| k.supports(scenario.pattern)).collect()
    }

    /// Checks everything that can be checked before running.
    pub fn validate(&self, schema: &Schema) -> Result<Vec<ScenarioSpec>> {
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("no scenarios requested".into()));
        }
        let scenarios = self.resolve_scenarios(schema)?;
        for s in &scenarios {
            if self.frameworks_for(s).is_empty() {
                return Err(Error::Config(format!(
                    "none of the requested frameworks supports scenario `{}`",
                    s.id
                )));
            }
        }
        Ok(scenarios)
    }
}
