//! Seeded, parallel simulation experiments.
//!
//! An experiment crosses scenarios, runs and frameworks. Each (scenario, run)
//! pair is one task with its own seed derived from the master seed, so the
//! records do not depend on how many worker threads execute the tasks.

mod aggregate;
mod config;
mod output;

pub use aggregate::{aggregate, SummaryRow};
pub use config::{load_schema, Dataset, DatasetConfig, ExperimentConfig};
pub use output::{
    read_runs, write_outputs, DiagnosticsRow, RunRow, TimingRow, DIAGNOSTICS_HEADER, OUTPUT_FILES, RUNS_HEADER,
    SUMMARY_HEADER, TIMINGS_HEADER,
};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frameworks::{generate, Diagnostics, FrameworkKind};
use crate::metrics::{evaluate, Comparison, MetricReport};
use crate::missingness::{impose, ImposedTable, ScenarioSpec};
use crate::rng::{derive_seed, stream};
use crate::table::DataTable;

/// Why a run produced no metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunFailure {
    /// `impose`, `generate` or `metrics`.
    pub step: String,
    /// Short error kind, for example `separation`.
    pub kind: String,
    pub message: String,
}

impl RunFailure {
    fn new(step: &str, e: &Error) -> Self {
        Self {
            step: step.into(),
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

/// One framework on one imposed table.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub scenario: String,
    pub framework: FrameworkKind,
    pub run: usize,
    /// Seed of the (scenario, run) task.
    pub seed: u64,
    pub outcome: std::result::Result<MetricReport, RunFailure>,
    /// Present when generation succeeded.
    pub diagnostics: Option<Diagnostics>,
    /// Missing fraction per target in the imposed real table.
    pub realized: BTreeMap<String, f64>,
    pub generate_seconds: f64,
    pub metrics_seconds: f64,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.outcome.is_ok()
    }
}

/// Everything an experiment produced.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub scenarios: Vec<ScenarioSpec>,
    /// Ordered by scenario, run, then framework.
    pub records: Vec<RunRecord>,
    /// Digest of the scenario registry the ids were resolved against.
    pub registry_digest: String,
    pub rows_read: usize,
    /// Rows of the complete real table.
    pub rows_used: usize,
    pub workers: usize,
    pub elapsed_seconds: f64,
}

impl ExperimentResult {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }
}

/// Seed of run `run` of scenario `scenario`.
pub fn run_seed(master: u64, scenario: &str, run: usize) -> u64 {
    derive_seed(master, &format!("scenario:{scenario}"), run as u64)
}

/// Runs every framework on one imposed table. All frameworks start from
/// generators in the same state and metrics use one seed per task.
pub fn run_frameworks(
    imposed: std::result::Result<&ImposedTable, &RunFailure>,
    frameworks: &[FrameworkKind],
    config: &ExperimentConfig,
    scenario: &str,
    run: usize,
    seed: u64,
) -> Vec<RunRecord> {
    let metric_seed = derive_seed(seed, "metrics", 0);
    frameworks
        .iter()
        .map(|&framework| {
            let mut record = RunRecord {
                scenario: scenario.to_string(),
                framework,
                run,
                seed,
                outcome: Err(RunFailure {
                    step: String::new(),
                    kind: String::new(),
                    message: String::new(),
                }),
                diagnostics: None,
                realized: BTreeMap::new(),
                generate_seconds: 0.0,
                metrics_seconds: 0.0,
            };
            let imposed = match imposed {
                Ok(i) => i,
                Err(f) => {
                    record.outcome = Err(f.clone());
                    return record;
                }
            };
            record.realized = imposed.realized_proportions.clone();
            let mut rng = stream(seed, "generate", 0);
            let start = Instant::now();
            let generated = generate(framework, &imposed.table, &config.generation, &mut rng);
            record.generate_seconds = start.elapsed().as_secs_f64();
            let out = match generated {
                Ok(o) => o,
                Err(e) => {
                    record.outcome = Err(RunFailure::new("generate", &e));
                    return record;
                }
            };
            let start = Instant::now();
            let cmp = Comparison {
                real_complete: &imposed.truth,
                real_observed: &imposed.table,
                synthetic_complete: &out.complete,
                synthetic_observed: out.with_missingness.as_ref(),
            };
            record.outcome = evaluate(&cmp, &config.metrics, metric_seed).map_err(|e| RunFailure::new("metrics", &e));
            record.metrics_seconds = start.elapsed().as_secs_f64();
            record.diagnostics = Some(out.diagnostics);
            record
        })
        .collect()
}

/// Loads the dataset and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(config, &|_, _| {})
}

/// As [`run_experiment`], calling `progress(done, total)` after each task.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ExperimentResult> {
    let dataset = config.dataset.load()?;
    run_on(config, &dataset.table, dataset.rows_read(), progress)
}

/// Runs the experiment on an already loaded complete table.
pub fn run_on(
    config: &ExperimentConfig,
    truth: &DataTable,
    rows_read: usize,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ExperimentResult> {
    let started = Instant::now();
    let scenarios = config.validate(truth.schema())?;
    let registry_digest = config.scenario_registry()?.digest();
    let workers = config.workers.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let fixed: Vec<Option<std::result::Result<ImposedTable, RunFailure>>> = scenarios
        .iter()
        .map(|s| {
            config.fixed_mask.then(|| {
                impose(truth, s, &mut stream(config.seed, &format!("impose:{}", s.id), 0))
                    .map_err(|e| RunFailure::new("impose", &e))
            })
        })
        .collect();
    let tasks: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..config.n_runs).map(move |r| (s, r)))
        .collect();
    let done = AtomicUsize::new(0);
    let total = tasks.len();

    let per_task: Vec<Vec<RunRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, run)| {
                let scenario = &scenarios[s];
                let seed = run_seed(config.seed, &scenario.id, run);
                let frameworks = config.frameworks_for(scenario);
                let records = match &fixed[s] {
                    Some(shared) => run_frameworks(shared.as_ref(), &frameworks, config, &scenario.id, run, seed),
                    None => {
                        let imposed = impose(truth, scenario, &mut stream(seed, "impose", 0))
                            .map_err(|e| RunFailure::new("impose", &e));
                        run_frameworks(imposed.as_ref(), &frameworks, config, &scenario.id, run, seed)
                    }
                };
                progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
                records
            })
            .collect()
    });

    Ok(ExperimentResult {
        config: config.clone(),
        scenarios,
        records: per_task.into_iter().flatten().collect(),
        registry_digest,
        rows_read,
        rows_used: truth.n_rows(),
        workers,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::DatasetConfig;

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig {
            n_runs: 2,
            scenarios: vec!["1A".into(), "2B".into()],
            frameworks: vec![FrameworkKind::CcAllStage, FrameworkKind::IpwIndicator, FrameworkKind::IpwMonotone],
            dataset: DatasetConfig::Simulated {
                n: 400,
                log_or_treated: -0.8,
                seed: 3,
            },
            ..Default::default()
        };
        c.metrics.classifiers.clear();
        c
    }

    #[test]
    fn records_follow_scenario_run_framework_order() {
        let c = small_config();
        let r = run_experiment(&c).unwrap();
        let keys: Vec<(String, usize, &str)> =
            r.records.iter().map(|x| (x.scenario.clone(), x.run, x.framework.name())).collect();
        let expected: Vec<(String, usize, &str)> = vec![
            ("1A".into(), 0, "cc_all_stage"),
            ("1A".into(), 0, "ipw_indicator"),
            ("1A".into(), 1, "cc_all_stage"),
            ("1A".into(), 1, "ipw_indicator"),
            ("2B".into(), 0, "cc_all_stage"),
            ("2B".into(), 0, "ipw_monotone"),
            ("2B".into(), 1, "cc_all_stage"),
            ("2B".into(), 1, "ipw_monotone"),
        ];
        assert_eq!(keys, expected);
        assert_eq!(r.failures(), 0, "{:?}", r.records.iter().map(|x| &x.outcome).find(|o| o.is_err()));
        assert!(r.records.iter().all(|x| x.generate_seconds > 0.0));
    }

    #[test]
    fn fixed_mask_shares_the_imposed_table() {
        let mut c = small_config();
        c.scenarios = vec!["1A".into()];
        c.fixed_mask = true;
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.records[0].realized, r.records[2].realized);
        assert_ne!(r.records[0].seed, r.records[2].seed);
        c.fixed_mask = false;
        let r = run_experiment(&c).unwrap();
        assert_ne!(r.records[0].realized, r.records[2].realized);
    }

    #[test]
    fn impose_failure_marks_every_framework() {
        let mut imposed_err = RunFailure::new("impose", &Error::CalibrationUnreachable { target: 0.99 });
        imposed_err.message = "unreachable".into();
        let c = small_config();
        let recs = run_frameworks(Err(&imposed_err), &c.frameworks, &c, "1A", 0, 7);
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.outcome.as_ref().unwrap_err().step == "impose"));
    }
}
