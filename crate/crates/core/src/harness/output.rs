//! Experiment output files.
//!
//! - `runs.csv`: one row per metric value of every successful run, plus the
//!   per-row PCA scores of run 0 for scatter plots.
//! - `summary.csv`: per-metric summaries, see [`SummaryRow`].
//! - `diagnostics.csv`: one row per run, failed runs included.
//! - `timings.csv`: wall-clock seconds per run.
//! - `experiment.json`: resolved configuration and provenance.
//!
//! The first three depend only on the configuration; timings and the
//! creation time in `experiment.json` vary between executions. Every file is
//! written to a temporary name and then renamed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{aggregate, ExperimentResult, RunRecord, SummaryRow};
use crate::error::{Error, Result};
use crate::frameworks::ModelRole;

/// File names written by [`write_outputs`].
pub const OUTPUT_FILES: [&str; 5] = ["runs.csv", "summary.csv", "diagnostics.csv", "timings.csv", "experiment.json"];

/// One row of `runs.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub scenario: String,
    pub framework: String,
    pub run: usize,
    pub seed: u64,
    pub metric_name: String,
    pub variant: String,
    pub value: f64,
}

/// One row of `diagnostics.csv`. Fit sizes and realized proportions are
/// `name=value` pairs separated by `;`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub scenario: String,
    pub framework: String,
    pub run: usize,
    pub seed: u64,
    /// `ok` or `failed`.
    pub status: String,
    pub failure_step: String,
    pub failure_kind: String,
    pub message: String,
    pub max_weight: Option<f64>,
    pub unconverged_fits: Option<usize>,
    pub empty_admissible: Option<usize>,
    pub unseen_rows: Option<usize>,
    pub dropped_strata: Option<usize>,
    pub imputations: Option<usize>,
    pub generative_fit_sizes: String,
    pub missingness_fit_sizes: String,
    pub realized_missing: String,
    pub skipped_metrics: usize,
}

/// One row of `timings.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scenario: String,
    pub framework: String,
    pub run: usize,
    pub generate_seconds: f64,
    pub metrics_seconds: f64,
}

fn run_rows(r: &RunRecord) -> Vec<RunRow> {
    let Ok(report) = &r.outcome else {
        return Vec::new();
    };
    let scores = if r.run == 0 { report.pca_scores() } else { Vec::new() };
    report
        .to_long()
        .into_iter()
        .chain(scores)
        .map(|m| RunRow {
            scenario: r.scenario.clone(),
            framework: r.framework.name().into(),
            run: r.run,
            seed: r.seed,
            metric_name: m.metric_name,
            variant: m.variant,
            value: m.value,
        })
        .collect()
}

fn pairs<'a>(items: impl Iterator<Item = (&'a str, String)>) -> String {
    items.map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn diagnostics_row(r: &RunRecord) -> DiagnosticsRow {
    let (status, step, kind, message) = match &r.outcome {
        Ok(_) => ("ok", "", "", ""),
        Err(f) => ("failed", f.step.as_str(), f.kind.as_str(), f.message.as_str()),
    };
    let d = r.diagnostics.as_ref();
    let sizes = |role: ModelRole| {
        d.map(|d| pairs(d.stages.iter().filter(|s| s.role == role).map(|s| (s.stage.as_str(), s.n_fit.to_string()))))
            .unwrap_or_default()
    };
    DiagnosticsRow {
        scenario: r.scenario.clone(),
        framework: r.framework.name().into(),
        run: r.run,
        seed: r.seed,
        status: status.into(),
        failure_step: step.into(),
        failure_kind: kind.into(),
        message: message.into(),
        max_weight: d.map(|d| d.max_weight()),
        unconverged_fits: d.map(|d| d.unconverged()),
        empty_admissible: d.map(|d| d.empty_admissible),
        unseen_rows: d.map(|d| d.unseen_rows()),
        dropped_strata: d.map(|d| d.dropped_strata.len()),
        imputations: d.and_then(|d| d.imputations),
        generative_fit_sizes: sizes(ModelRole::Generative),
        missingness_fit_sizes: sizes(ModelRole::Missingness),
        realized_missing: pairs(r.realized.iter().map(|(k, v)| (k.as_str(), v.to_string()))),
        skipped_metrics: r.outcome.as_ref().map(|m| m.skipped.len()).unwrap_or(0),
    }
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

/// Column headers of each CSV file.
pub const RUNS_HEADER: [&str; 7] = ["scenario", "framework", "run", "seed", "metric_name", "variant", "value"];
pub const SUMMARY_HEADER: [&str; 13] = [
    "scenario",
    "framework",
    "metric_name",
    "variant",
    "n",
    "failures",
    "mean",
    "sd",
    "q025",
    "q25",
    "q50",
    "q75",
    "q975",
];
pub const DIAGNOSTICS_HEADER: [&str; 18] = [
    "scenario",
    "framework",
    "run",
    "seed",
    "status",
    "failure_step",
    "failure_kind",
    "message",
    "max_weight",
    "unconverged_fits",
    "empty_admissible",
    "unseen_rows",
    "dropped_strata",
    "imputations",
    "generative_fit_sizes",
    "missingness_fit_sizes",
    "realized_missing",
    "skipped_metrics",
];
pub const TIMINGS_HEADER: [&str; 5] = ["scenario", "framework", "run", "generate_seconds", "metrics_seconds"];

/// Writes the five output files into `dir`, creating it if needed.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let runs = csv_bytes(result.records.iter().flat_map(run_rows), &RUNS_HEADER)?;
    let summary: Vec<SummaryRow> = aggregate(&result.records);
    let summary = csv_bytes(summary, &SUMMARY_HEADER)?;
    let diagnostics = csv_bytes(result.records.iter().map(diagnostics_row), &DIAGNOSTICS_HEADER)?;
    let timings = csv_bytes(
        result.records.iter().map(|r| TimingRow {
            scenario: r.scenario.clone(),
            framework: r.framework.name().into(),
            run: r.run,
            generate_seconds: r.generate_seconds,
            metrics_seconds: r.metrics_seconds,
        }),
        &TIMINGS_HEADER,
    )?;

    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for r in &result.records {
        *totals.entry(r.framework.name()).or_default() += r.generate_seconds + r.metrics_seconds;
    }
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let experiment = serde_json::json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "created_unix": created,
        "config": result.config,
        "scenarios": result.scenarios,
        "registry_digest": result.registry_digest,
        "dataset": {"rows_read": result.rows_read, "rows_used": result.rows_used},
        "workers": result.workers,
        "records": result.records.len(),
        "failures": result.failures(),
        "elapsed_seconds": result.elapsed_seconds,
        "framework_seconds": totals,
    });
    let experiment = serde_json::to_vec_pretty(&experiment).map_err(|e| Error::Config(e.to_string()))?;

    write_atomic(dir, "runs.csv", &runs)?;
    write_atomic(dir, "summary.csv", &summary)?;
    write_atomic(dir, "diagnostics.csv", &diagnostics)?;
    write_atomic(dir, "timings.csv", &timings)?;
    write_atomic(dir, "experiment.json", &experiment)?;
    Ok(())
}

/// Reads `runs.csv` back.
pub fn read_runs(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frameworks::FrameworkKind;
    use crate::harness::{run_experiment, DatasetConfig, ExperimentConfig};

    fn config(workers: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            n_runs: 3,
            workers: Some(workers),
            scenarios: vec!["1A".into()],
            frameworks: vec![FrameworkKind::CcByStage, FrameworkKind::IpwIndicator],
            dataset: DatasetConfig::Simulated {
                n: 300,
                log_or_treated: -0.8,
                seed: 11,
            },
            ..Default::default()
        };
        c.metrics.classifiers.retain(|k| k.name() == "knn5");
        c
    }

    fn header(path: &Path) -> String {
        std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
    }

    #[test]
    fn headers_are_fixed() {
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&run_experiment(&config(1)).unwrap(), dir.path()).unwrap();
        for f in OUTPUT_FILES {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(header(&dir.path().join("runs.csv")), "scenario,framework,run,seed,metric_name,variant,value");
        assert_eq!(
            header(&dir.path().join("summary.csv")),
            "scenario,framework,metric_name,variant,n,failures,mean,sd,q025,q25,q50,q75,q975"
        );
        assert_eq!(
            header(&dir.path().join("diagnostics.csv")),
            "scenario,framework,run,seed,status,failure_step,failure_kind,message,max_weight,unconverged_fits,\
             empty_admissible,unseen_rows,dropped_strata,imputations,generative_fit_sizes,missingness_fit_sizes,\
             realized_missing,skipped_metrics"
        );
        assert_eq!(
            header(&dir.path().join("timings.csv")),
            "scenario,framework,run,generate_seconds,metrics_seconds"
        );
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("experiment.json")).unwrap()).unwrap();
        assert_eq!(json["records"], 6);
        assert_eq!(json["config"]["n_runs"], 3);
        assert!(!dir.path().join(".runs.csv.tmp").exists());
    }

    #[test]
    fn runs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let result = run_experiment(&config(2)).unwrap();
        write_outputs(&result, dir.path()).unwrap();
        let back = read_runs(&dir.path().join("runs.csv")).unwrap();
        let expected: Vec<RunRow> = result.records.iter().flat_map(run_rows).collect();
        assert!(!expected.is_empty());
        assert_eq!(back.len(), expected.len());
        for (a, b) in back.iter().zip(&expected) {
            assert_eq!(a.metric_name, b.metric_name);
            assert!(a.value == b.value || (a.value.is_nan() && b.value.is_nan()));
        }
    }

    #[test]
    fn deterministic_files_do_not_depend_on_workers() {
        let one = tempfile::tempdir().unwrap();
        let four = tempfile::tempdir().unwrap();
        write_outputs(&run_experiment(&config(1)).unwrap(), one.path()).unwrap();
        write_outputs(&run_experiment(&config(4)).unwrap(), four.path()).unwrap();
        for f in ["runs.csv", "summary.csv", "diagnostics.csv"] {
            let a = std::fs::read(one.path().join(f)).unwrap();
            let b = std::fs::read(four.path().join(f)).unwrap();
            assert!(a == b, "{f} differs between worker counts");
        }
    }
}
