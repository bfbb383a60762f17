//! Treatment-effect odds ratio of the outcome on a dichotomized treatment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{fit_logistic, DesignSpec, Response, Term};
use crate::table::DataTable;

const Z_975: f64 = 1.959_963_984_540_054;

/// Odds ratio with a Wald 95% confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub log_or: f64,
    pub se: f64,
    pub or: f64,
    pub lower: f64,
    pub upper: f64,
    /// Rows used in the fit.
    pub n: usize,
}

impl OddsRatio {
    fn from_log(log_or: f64, se: f64, n: usize) -> Self {
        Self {
            log_or,
            se,
            or: log_or.exp(),
            lower: (log_or - Z_975 * se).exp(),
            upper: (log_or + Z_975 * se).exp(),
            n,
        }
    }

    /// True when the two intervals share at least one point.
    pub fn overlaps(&self, other: &OddsRatio) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

/// Logistic regression of the outcome on the treatment indicator "not
/// `baseline_arm`", fit on rows where both are observed.
pub fn trial_or(t: &DataTable, baseline_arm: &str) -> Result<OddsRatio> {
    let d = t.dichotomize_treatment(baseline_arm)?;
    let a = d.schema().treatment()?.name.clone();
    let y = d.schema().outcome()?.name.clone();
    let rows = d.observed_subset(&[a.as_str(), y.as_str()])?;
    let arms = rows.column(&a)?;
    if !arms.contains(&0.0) || !arms.contains(&1.0) {
        return Err(Error::Metric("trial_or: a treatment group is empty".into()));
    }
    let design = DesignSpec::new(Response::Value(y), vec![Term::Main(a)]);
    let fit = fit_logistic(&rows, &design, None).map_err(|e| Error::Metric(format!("trial_or: {e}")))?;
    Ok(OddsRatio::from_log(fit.coefficients[1], fit.standard_errors()[1], rows.n_rows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ColumnKind, ColumnSchema, Role, Schema};
    use std::sync::Arc;

    /// Two-column table from a 2x2 layout: `a` events and `b` non-events on
    /// the baseline arm, `c` events and `d` non-events on the other arms.
    fn two_by_two(a: usize, b: usize, c: usize, d: usize) -> DataTable {
        let schema = Arc::new(
            Schema::new(vec![
                ColumnSchema::new("arm", ColumnKind::Categorical(vec!["0".into(), "1".into(), "2".into()]), Role::Treatment),
                ColumnSchema::new("y", ColumnKind::Binary, Role::Outcome),
            ])
            .unwrap(),
        );
        let mut arm = Vec::new();
        let mut y = Vec::new();
        for (count, arm_v, y_v) in [(a, 0.0, 1.0), (b, 0.0, 0.0)] {
            arm.extend(std::iter::repeat_n(arm_v, count));
            y.extend(std::iter::repeat_n(y_v, count));
        }
        // Split the other group over two arms to exercise pooling.
        for (count, y_v) in [(c, 1.0), (d, 0.0)] {
            for k in 0..count {
                arm.push(if k % 2 == 0 { 1.0 } else { 2.0 });
                y.push(y_v);
            }
        }
        DataTable::complete(schema, vec![arm, y]).unwrap()
    }

    #[test]
    fn matches_cross_product_ratio() {
        for (a, b, c, d) in [(10, 20, 20, 10), (7, 30, 12, 41), (50, 5, 9, 60)] {
            let or = trial_or(&two_by_two(a, b, c, d), "0").unwrap();
            // Odds of the event on the pooled arms over odds on the baseline arm.
            let closed = (c as f64 / d as f64) / (a as f64 / b as f64);
            assert!((or.or - closed).abs() < 1e-6 * closed, "{} vs {closed}", or.or);
            let se = (1.0 / a as f64 + 1.0 / b as f64 + 1.0 / c as f64 + 1.0 / d as f64).sqrt();
            assert!((or.se - se).abs() < 1e-6);
            assert!(or.lower <= or.or && or.or <= or.upper);
        }
    }

    #[test]
    fn quarter_example() {
        // Events 20 of 30 on the baseline arm and 10 of 30 elsewhere.
        let or = trial_or(&two_by_two(20, 10, 10, 20), "0").unwrap();
        assert!((or.or - 0.25).abs() < 1e-6);
    }

    #[test]
    fn zero_cell_is_an_error() {
        assert!(trial_or(&two_by_two(0, 10, 5, 5), "0").is_err());
        assert!(trial_or(&two_by_two(3, 10, 0, 0), "0").is_err());
    }

    #[test]
    fn overlap() {
        let a = OddsRatio::from_log(0.0, 0.1, 10);
        let b = OddsRatio::from_log(0.15, 0.1, 10);
        let c = OddsRatio::from_log(2.0, 0.1, 10);
        assert!(a.overlaps(&b) && b.overlaps(&a));
        assert!(!a.overlaps(&c));
    }
}
