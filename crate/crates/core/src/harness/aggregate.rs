//! Per-metric summaries across runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RunRecord;
use crate::metrics::quantile;

/// Summary of one metric for one scenario and framework.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub framework: String,
    pub metric_name: String,
    pub variant: String,
    /// Runs with a finite value.
    pub n: usize,
    /// Runs of this scenario and framework that failed.
    pub failures: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    pub q025: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q975: f64,
}

impl SummaryRow {
    fn of(key: (String, String, String, String), values: &[f64], failures: usize) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| quantile(&sorted, p);
        let (scenario, framework, metric_name, variant) = key;
        Self {
            scenario,
            framework,
            metric_name,
            variant,
            n,
            failures,
            mean,
            sd,
            q025: q(0.025),
            q25: q(0.25),
            q50: q(0.5),
            q75: q(0.75),
            q975: q(0.975),
        }
    }
}

/// Groups finite metric values by (scenario, framework, metric, variant).
/// Rows come out in scenario and framework order of first appearance, then
/// by metric name and variant.
pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryRow> {
    type Cell = (String, String);
    let mut order: Vec<Cell> = Vec::new();
    let mut failures: BTreeMap<Cell, usize> = BTreeMap::new();
    let mut groups: BTreeMap<Cell, BTreeMap<Cell, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let cell = (r.scenario.clone(), r.framework.name().to_string());
        if !failures.contains_key(&cell) {
            order.push(cell.clone());
        }
        let f = failures.entry(cell.clone()).or_default();
        let metrics = groups.entry(cell).or_default();
        match &r.outcome {
            Err(_) => *f += 1,
            Ok(report) => {
                for m in report.to_long() {
                    if m.value.is_finite() {
                        metrics.entry((m.metric_name, m.variant)).or_default().push(m.value);
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    for cell in order {
        let fails = failures[&cell];
        for ((metric, variant), values) in &groups[&cell] {
            out.push(SummaryRow::of(
                (cell.0.clone(), cell.1.clone(), metric.clone(), variant.clone()),
                values,
                fails,
            ));
        }
    }
    out
}
