//! Property tests of invariants that hold for every input.

mod common;

use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;

use rct_synth::cohort::{simulate_cohort, CohortOptions};
use rct_synth::harness::{aggregate, RunFailure, RunRecord};
use rct_synth::frameworks::FrameworkKind;
use rct_synth::metrics::{MetricReport, UnivariateScore, Variant};
use rct_synth::missingness::{impose, scenario};
use rct_synth::regression::{fit_linear, fit_logistic, sample_admissible_or_clamp};
use rct_synth::rng::{derive_seed, seeded};
use rct_synth::table::{ColumnKind, ColumnSchema, DataTable, Role, Schema};

use common::{instance, linear_design, logistic_design};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wls_solves_the_normal_equations(seed in any::<u64>(), n in 30usize..200) {
        prop_assert!(common::wls_normal_equation_residual(&instance(seed, n)) < 1e-8);
    }

    #[test]
    fn irls_zeroes_the_score(seed in any::<u64>(), n in 100usize..300) {
        prop_assert!(common::irls_score_residual(&instance(seed, n)) < 1e-6);
    }

    #[test]
    fn score_is_the_likelihood_gradient(seed in any::<u64>(), n in 100usize..300) {
        prop_assert!(common::score_finite_difference_error(&instance(seed, n), seed) < 1e-4);
    }

    #[test]
    fn frequency_weights_equal_duplicated_rows(seed in any::<u64>(), n in 100usize..200) {
        let inst = instance(seed, n);
        let counts: Vec<usize> = (0..n).map(|i| 1 + (derive_seed(seed, "copies", i as u64) % 3) as usize).collect();
        let rows: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i, k)).collect();
        let duplicated = inst.table.select_rows(&rows);
        let w: Vec<f64> = counts.iter().map(|&k| k as f64).collect();
        let lin_w = fit_linear(&inst.table, &linear_design(), Some(&w)).unwrap();
        let lin_d = fit_linear(&duplicated, &linear_design(), None).unwrap();
        let log_w = fit_logistic(&inst.table, &logistic_design(), Some(&w)).unwrap();
        let log_d = fit_logistic(&duplicated, &logistic_design(), None).unwrap();
        for (a, b) in lin_w.coefficients.iter().zip(&lin_d.coefficients) {
            prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
        for (a, b) in log_w.coefficients.iter().zip(&log_d.coefficients) {
            prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
    }

    #[test]
    fn constant_weights_leave_the_fit_unchanged(seed in any::<u64>(), c in 0.01f64..100.0) {
        let inst = instance(seed, 120);
        let w = vec![c; 120];
        let a = fit_linear(&inst.table, &linear_design(), Some(&w)).unwrap();
        let b = fit_linear(&inst.table, &linear_design(), None).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((x - y).abs() < 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn admissible_samples_respect_the_threshold(
        predicted in prop::collection::vec(-10.0f64..10.0, 1..50),
        pool in prop::collection::vec(-5.0f64..5.0, 1..30),
        threshold in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let (values, empty) = sample_admissible_or_clamp(&predicted, &pool, threshold, &mut seeded(seed)).unwrap();
        let max_r = pool.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, (&v, &p)) in values.iter().zip(&predicted).enumerate() {
            prop_assert!(v >= threshold);
            if empty.contains(&i) {
                prop_assert!(p + max_r < threshold);
                prop_assert_eq!(v, threshold);
            } else {
                prop_assert!(pool.iter().any(|r| (p + r - v).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact(
        cells in prop::collection::vec((-1e6f64..1e6, any::<bool>(), 0u8..3, any::<bool>()), 1..40),
    ) {
        let schema = Arc::new(Schema::partial(vec![
            ColumnSchema::new("x", ColumnKind::Continuous, Role::Baseline),
            ColumnSchema::new("z", ColumnKind::Continuous, Role::PostRandomization(1)),
            ColumnSchema::new("g", ColumnKind::Categorical(vec!["p".into(), "q".into(), "r".into()]), Role::PostRandomization(2)),
        ]).unwrap());
        let values = vec![
            cells.iter().map(|c| c.0).collect(),
            cells.iter().map(|c| c.0 / 7.0).collect(),
            cells.iter().map(|c| f64::from(c.2)).collect(),
        ];
        let observed = vec![
            vec![true; cells.len()],
            cells.iter().map(|c| c.1).collect(),
            cells.iter().map(|c| c.3).collect(),
        ];
        let t = DataTable::new(schema.clone(), values, observed).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, "NA").unwrap();
        let back = DataTable::read_csv(buf.as_slice(), schema, "NA").unwrap();
        for j in 0..3 {
            prop_assert_eq!(t.observed(j), back.observed(j));
            for i in 0..t.n_rows() {
                prop_assert_eq!(t.get(i, j).map(f64::to_bits), back.get(i, j).map(f64::to_bits));
            }
        }
    }

    #[test]
    fn standardization_inverts(seed in any::<u64>()) {
        let t = instance(seed, 50).table;
        let (s, params) = t.standardize(&["x1", "x2", "y"]).unwrap();
        let back = params.invert(&s).unwrap();
        for name in ["x1", "x2", "y"] {
            for (a, b) in t.column(name).unwrap().iter().zip(back.column(name).unwrap()) {
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn summary_quantiles_are_ordered(values in prop::collection::vec(-1.0f64..1.0, 1..40), fails in 0usize..5) {
        let mut records: Vec<RunRecord> = values.iter().enumerate().map(|(i, &v)| record(i, Ok(v))).collect();
        records.extend((0..fails).map(|i| record(values.len() + i, Err(()))));
        let s = &aggregate(&records)[0];
        prop_assert_eq!(s.n, values.len());
        prop_assert_eq!(s.failures, fails);
        prop_assert!(s.q025 <= s.q25 && s.q25 <= s.q50 && s.q50 <= s.q75 && s.q75 <= s.q975);
        prop_assert!(s.q025 <= s.mean + 1e-12 && s.mean <= s.q975 + 1e-12);
        prop_assert!(s.sd >= 0.0);
    }
}

fn record(run: usize, value: Result<f64, ()>) -> RunRecord {
    RunRecord {
        scenario: "1A".into(),
        framework: FrameworkKind::CcAllStage,
        run,
        seed: 0,
        outcome: match value {
            Ok(v) => Ok(MetricReport {
                univariate: vec![UnivariateScore {
                    variable: "cd420".into(),
                    variant: Variant::Observed,
                    metric: "ks_complement".into(),
                    score: v,
                }],
                ..Default::default()
            }),
            Err(()) => Err(RunFailure {
                step: "generate".into(),
                kind: "separation".into(),
                message: String::new(),
            }),
        },
        diagnostics: None,
        realized: Default::default(),
        generate_seconds: 0.0,
        metrics_seconds: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn imposed_missingness_follows_the_pattern(seed in any::<u64>(), id in prop::sample::select(vec!["1A", "1B", "2A", "2B", "5A", "6B"])) {
        let complete = simulate_cohort(&CohortOptions { n: 400, ..Default::default() }, &mut seeded(seed)).unwrap();
        let spec = scenario(id).unwrap();
        let imposed = impose(&complete, &spec, &mut seeded(seed ^ 1)).unwrap();
        let t = &imposed.table;
        let targets: HashSet<&str> = spec.models.iter().map(|m| m.target()).collect();
        for j in 0..t.n_cols() {
            let name = &t.schema().column(j).name;
            if !targets.contains(name.as_str()) {
                prop_assert!(t.observed(j).iter().all(|&o| o), "{} masked", name);
            }
            for i in 0..t.n_rows() {
                if let Some(v) = t.get(i, j) {
                    prop_assert_eq!(v, complete.values(j)[i]);
                }
            }
        }
        if spec.pattern == rct_synth::missingness::Pattern::Monotone {
            prop_assert!(t.is_monotone());
        }
        for (name, p) in &imposed.realized_proportions {
            prop_assert!((p - t.missing_fraction(name).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn run_seeds_are_distinct() {
    let mut seen = HashSet::with_capacity(1_000_000);
    for run in 0..1_000_000 {
        assert!(seen.insert(rct_synth::harness::run_seed(7, "1A", run)));
    }
}
