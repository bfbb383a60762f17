//! Helpers shared by the integration tests: random regression instances and
//! the residual checks applied to them.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use rct_synth::regression::{
    expit, fit_linear, fit_logistic, logistic_log_likelihood, logistic_score, DesignSpec, FittedRegression, Response,
    Term,
};
use rct_synth::rng::seeded;
use rct_synth::table::{ColumnKind, ColumnSchema, DataTable, Role, Schema};

/// A random table with two numeric covariates, a three-level factor, a
/// numeric response `y` and a binary response `b`, plus positive weights.
pub struct Instance {
    pub table: DataTable,
    pub weights: Vec<f64>,
}

pub fn instance(seed: u64, n: usize) -> Instance {
    let schema = Arc::new(
        Schema::partial(vec![
            ColumnSchema::new("x1", ColumnKind::Continuous, Role::Baseline),
            ColumnSchema::new("x2", ColumnKind::Continuous, Role::Baseline),
            ColumnSchema::new(
                "g",
                ColumnKind::Categorical(vec!["a".into(), "b".into(), "c".into()]),
                Role::Baseline,
            ),
            ColumnSchema::new("y", ColumnKind::Continuous, Role::PostRandomization(1)),
            ColumnSchema::new("b", ColumnKind::Binary, Role::Outcome),
        ])
        .unwrap(),
    );
    let mut rng = seeded(seed);
    let scale = [1.0, 10.0, 0.1][rng.random_range(0..3)];
    let beta: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut groups: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
    groups.shuffle(&mut rng);
    let mut cols = vec![Vec::with_capacity(n); 5];
    let mut weights = Vec::with_capacity(n);
    for &g in &groups {
        let x1: f64 = StandardNormal.sample(&mut rng);
        let z: f64 = StandardNormal.sample(&mut rng);
        let x2 = scale * z + 3.0;
        let e: f64 = StandardNormal.sample(&mut rng);
        let eta = beta[0] + beta[1] * x1 + beta[2] * (x2 - 3.0) / scale + beta[3] * f64::from(g == 1.0) + beta[4] * f64::from(g == 2.0);
        cols[0].push(x1);
        cols[1].push(x2);
        cols[2].push(g);
        cols[3].push(eta + e);
        cols[4].push(f64::from(rng.random::<f64>() < expit(eta)));
        weights.push(rng.random_range(0.2..5.0));
    }
    Instance {
        table: DataTable::complete(schema, cols).unwrap(),
        weights,
    }
}

pub fn terms() -> Vec<Term> {
    DesignSpec::mains(&["x1", "x2", "g"])
}

pub fn linear_design() -> DesignSpec {
    DesignSpec::new(Response::Value("y".into()), terms())
}

pub fn logistic_design() -> DesignSpec {
    DesignSpec::new(Response::Value("b".into()), terms())
}

pub fn design_matrix(fit: &FittedRegression, t: &DataTable) -> DMatrix<f64> {
    fit.encoding.matrix(t, None, false).unwrap().0
}

/// Largest component of `Xᵀ W (y − Xβ̂)`, each divided by
/// `max(1, Σ wᵢ |xᵢₖ| |yᵢ|)`.
pub fn wls_normal_equation_residual(inst: &Instance) -> f64 {
    let t = &inst.table;
    let fit = fit_linear(t, &linear_design(), Some(&inst.weights)).unwrap();
    let x = design_matrix(&fit, t);
    let y = t.column("y").unwrap();
    let beta = nalgebra::DVector::from_column_slice(&fit.coefficients);
    let fitted = &x * beta;
    (0..x.ncols())
        .map(|k| {
            let (mut g, mut scale) = (0.0, 0.0);
            for i in 0..x.nrows() {
                g += inst.weights[i] * x[(i, k)] * (y[i] - fitted[i]);
                scale += inst.weights[i] * x[(i, k)].abs() * y[i].abs();
            }
            g.abs() / scale.max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Largest component of the logistic score at the fitted coefficients, with
/// weights rescaled to mean one.
pub fn irls_score_residual(inst: &Instance) -> f64 {
    let t = &inst.table;
    let fit = fit_logistic(t, &logistic_design(), Some(&inst.weights)).unwrap();
    let x = design_matrix(&fit, t);
    let mean_w = inst.weights.iter().sum::<f64>() / inst.weights.len() as f64;
    let w: Vec<f64> = inst.weights.iter().map(|v| v / mean_w).collect();
    logistic_score(&x, t.column("b").unwrap(), &w, &fit.coefficients)
        .into_iter()
        .fold(0.0, |m, g| m.max(g.abs()))
}

/// Largest `|analytic − numeric| / max(1, |analytic|)` over score components,
/// at a point perturbed away from the maximum, with central differences of
/// step `1e-5`.
pub fn score_finite_difference_error(inst: &Instance, seed: u64) -> f64 {
    let t = &inst.table;
    let fit = fit_logistic(t, &logistic_design(), Some(&inst.weights)).unwrap();
    let x = design_matrix(&fit, t);
    let y = t.column("b").unwrap();
    let mut rng = seeded(seed);
    let beta: Vec<f64> = fit.coefficients.iter().map(|b| b + rng.random_range(-0.5..0.5)).collect();
    let analytic = logistic_score(&x, y, &inst.weights, &beta);
    let h = 1e-5;
    (0..beta.len())
        .map(|k| {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[k] += h;
            down[k] -= h;
            let numeric = (logistic_log_likelihood(&x, y, &inst.weights, &up)
                - logistic_log_likelihood(&x, y, &inst.weights, &down))
                / (2.0 * h);
            (analytic[k] - numeric).abs() / analytic[k].abs().max(1.0)
        })
        .fold(0.0, f64::max)
}
