//! Weighted logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    check_weights, expit, weighted_least_squares, DesignEncoding, DesignSpec, FittedRegression,
    Link, Response,
};
use crate::error::{Error, Result};
use crate::table::{ColumnKind, DataTable};

/// IRLS controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticOptions {
    /// Convergence when the largest absolute coefficient change falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// A fit that fails to converge while some |linear predictor| exceeds this
    /// bound is reported as separation rather than plain non-convergence.
    pub separation_bound: f64,
    /// Return the last iterate instead of failing when the coefficients do
    /// not settle, as happens under (quasi-)separation. Iteration then also
    /// stops once the relative log-likelihood change falls below `tol`, and
    /// the fit is marked as not converged.
    pub accept_unconverged: bool,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            separation_bound: 30.0,
            accept_unconverged: false,
        }
    }
}

/// Weighted logistic regression with default options.
pub fn fit_logistic(
    t: &DataTable,
    design: &DesignSpec,
    weights: Option<&[f64]>,
) -> Result<FittedRegression> {
    fit_logistic_with(t, design, weights, LogisticOptions::default(), None)
}

/// Weighted logistic regression by IRLS with step halving, optionally warm
/// started from `start` (ignored if its length does not match the design).
pub fn fit_logistic_with(
    t: &DataTable,
    design: &DesignSpec,
    weights: Option<&[f64]>,
    options: LogisticOptions,
    start: Option<&[f64]>,
) -> Result<FittedRegression> {
    let n = t.n_rows();
    let w = check_weights(weights, n)?;
    let y = binary_response(t, &design.response)?;
    let encoding = DesignEncoding::fit(design, t)?;
    let (x, _) = encoding.matrix(t, None, false)?;
    let p = x.ncols();
    if n <= p {
        return Err(Error::InsufficientRows {
            rows: n,
            parameters: p,
        });
    }

    let mut beta = match start {
        Some(s) if s.len() == p => DVector::from_column_slice(s),
        _ => {
            let sw: f64 = w.iter().sum();
            let ybar = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
            let mut b = DVector::zeros(p);
            b[0] = super::logit(ybar.clamp(1e-6, 1.0 - 1e-6));
            b
        }
    };
    let mut eta = &x * &beta;
    let mut ll = log_likelihood(&eta, &y, &w);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=options.max_iter {
        iterations = iter;
        let mut irls_w = vec![0.0; n];
        let mut z = vec![0.0; n];
        for i in 0..n {
            let pi = expit(eta[i]);
            let v = (pi * (1.0 - pi)).max(1e-12);
            irls_w[i] = w[i] * v;
            z[i] = eta[i] + (y[i] - pi) / v;
        }
        let (mut candidate, _) = weighted_least_squares(&x, &z, &irls_w, &encoding)?;
        let mut cand_eta = &x * &candidate;
        let mut cand_ll = log_likelihood(&cand_eta, &y, &w);
        let mut halvings = 0;
        while !(cand_ll >= ll - 1e-12 * ll.abs().max(1.0)) && halvings < 30 {
            candidate = (&candidate + &beta) * 0.5;
            cand_eta = &x * &candidate;
            cand_ll = log_likelihood(&cand_eta, &y, &w);
            halvings += 1;
        }
        let delta = (&candidate - &beta).amax();
        let ll_change = (cand_ll - ll).abs() / (ll.abs() + 0.1);
        beta = candidate;
        eta = cand_eta;
        ll = cand_ll;
        if delta < options.tol {
            converged = true;
            break;
        }
        if options.accept_unconverged && ll_change < options.tol {
            break;
        }
    }
    let max_eta = eta.amax();
    if !converged && !options.accept_unconverged {
        if max_eta > options.separation_bound {
            return Err(Error::Separation {
                max_abs_linear_predictor: max_eta,
            });
        }
        return Err(Error::NonConvergence {
            iterations,
            coefficients: beta.iter().copied().collect(),
        });
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Separation {
            max_abs_linear_predictor: f64::INFINITY,
        });
    }
    let info_w: Vec<f64> = (0..n)
        .map(|i| {
            let pi = expit(eta[i]);
            (w[i] * pi * (1.0 - pi)).max(f64::MIN_POSITIVE)
        })
        .collect();
    let covariance = information_inverse(&x, &info_w, &encoding)?;
    Ok(FittedRegression {
        design: design.clone(),
        link: Link::Logit,
        encoding,
        coefficients: beta.iter().copied().collect(),
        covariance,
        residuals: Vec::new(),
        weights: w,
        n_fit: n,
        fit_row_ids: t.row_ids().to_vec(),
        iterations,
        converged,
    })
}

fn information_inverse(
    x: &DMatrix<f64>,
    w: &[f64],
    encoding: &DesignEncoding,
) -> Result<DMatrix<f64>> {
    let zeros = vec![0.0; x.nrows()];
    match weighted_least_squares(x, &zeros, w, encoding) {
        Ok((_, inv)) => Ok(inv),
        // Fitted probabilities can be so extreme that the information matrix is
        // numerically singular even though the coefficients converged.
        Err(Error::DroppedStrata { .. }) => {
            Ok(DMatrix::from_element(x.ncols(), x.ncols(), f64::NAN))
        }
        Err(e) => Err(e),
    }
}

/// The 0/1 response vector: a binary column's values or an observation indicator.
pub(crate) fn binary_response(t: &DataTable, response: &Response) -> Result<Vec<f64>> {
    match response {
        Response::Observed(name) => Ok(t
            .mask(name)?
            .iter()
            .map(|&o| if o { 1.0 } else { 0.0 })
            .collect()),
        Response::Value(name) => {
            let j = t.position(name)?;
            if t.schema().column(j).kind != ColumnKind::Binary {
                return Err(Error::Config(format!(
                    "logistic response `{name}` must be binary"
                )));
            }
            (0..t.n_rows())
                .map(|i| {
                    t.get(i, j).ok_or_else(|| Error::Unobserved {
                        row: t.row_ids()[i],
                        column: name.clone(),
                    })
                })
                .collect()
        }
    }
}

/// Weighted log-likelihood of a logistic model with design `x` at `beta`.
pub fn logistic_log_likelihood(x: &DMatrix<f64>, y: &[f64], w: &[f64], beta: &[f64]) -> f64 {
    log_likelihood(&(x * DVector::from_column_slice(beta)), y, w)
}

/// Gradient of [`logistic_log_likelihood`]: `Xᵀ W (y − p)`.
pub fn logistic_score(x: &DMatrix<f64>, y: &[f64], w: &[f64], beta: &[f64]) -> Vec<f64> {
    let eta = x * DVector::from_column_slice(beta);
    let r = DVector::from_iterator(
        y.len(),
        eta.iter().zip(y).zip(w).map(|((&e, &y), &w)| w * (y - expit(e))),
    );
    (x.transpose() * r).iter().copied().collect()
}

/// Σ wᵢ (yᵢ ηᵢ − log(1 + e^ηᵢ)).
pub(crate) fn log_likelihood(eta: &DVector<f64>, y: &[f64], w: &[f64]) -> f64 {
    eta.iter()
        .zip(y)
        .zip(w)
        .map(|((&e, &y), &w)| w * (y * e - softplus(e)))
        .sum()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::Term;
    use crate::rng::seeded;
    use crate::table::{ColumnSchema, Role, Schema};
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;

    fn table(x: Vec<f64>, y: Vec<f64>) -> DataTable {
        let s = Arc::new(
            Schema::partial(vec![
                ColumnSchema::new("x", ColumnKind::Continuous, Role::Baseline),
                ColumnSchema::new("y", ColumnKind::Binary, Role::Outcome),
            ])
            .unwrap(),
        );
        DataTable::complete(s, vec![x, y]).unwrap()
    }

    fn design() -> DesignSpec {
        DesignSpec::new(Response::Value("y".into()), vec![Term::Main("x".into())])
    }

    #[test]
    fn independent_response_gives_logit_mean() {
        let x: Vec<f64> = (0..400).map(|i| (i % 20) as f64).collect();
        let y: Vec<f64> = (0..400)
            .map(|i| if (i / 20) % 4 == 0 { 1.0 } else { 0.0 })
            .collect();
        let f = fit_logistic(&table(x, y), &design(), None).unwrap();
        assert!((f.coefficients[0] - (0.25f64 / 0.75).ln()).abs() < 1e-8);
        assert!(f.coefficients[1].abs() < 1e-8);
    }

    #[test]
    fn unit_weights_match_omitted() {
        let mut rng = seeded(5);
        let x: Vec<f64> = (0..300).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| {
                if rng.random::<f64>() < expit(0.5 * v) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let t = table(x, y);
        let a = fit_logistic(&t, &design(), None).unwrap();
        let b = fit_logistic(&t, &design(), Some(&vec![1.0; 300])).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
    }

    #[test]
    fn monte_carlo_recovers_coefficients() {
        let mut rng = seeded(17);
        let n = 20_000;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| {
                if rng.random::<f64>() < expit(-1.0 + 1.5 * v) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let f = fit_logistic(&table(x, y), &design(), None).unwrap();
        let se = f.standard_errors();
        assert!((f.coefficients[0] + 1.0).abs() < 3.0 * se[0]);
        assert!((f.coefficients[1] - 1.5).abs() < 3.0 * se[1]);
    }

    #[test]
    fn perfect_separation_is_detected() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..40).map(|i| if i >= 20 { 1.0 } else { 0.0 }).collect();
        assert!(matches!(
            fit_logistic(&table(x, y), &design(), None),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn tolerant_mode_returns_separating_iterate() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..40).map(|i| if i >= 20 { 1.0 } else { 0.0 }).collect();
        let opts = LogisticOptions {
            accept_unconverged: true,
            ..Default::default()
        };
        let f = fit_logistic_with(&table(x, y.clone()), &design(), None, opts, None).unwrap();
        assert!(!f.converged);
        let p = f.predict(&f_table_from(&y)).unwrap();
        for (pi, yi) in p.iter().zip(&y) {
            assert!((pi - yi).abs() < 1e-3);
        }
    }

    fn f_table_from(y: &[f64]) -> DataTable {
        table((0..y.len()).map(|i| i as f64).collect(), y.to_vec())
    }

    #[test]
    fn all_observed_indicator_is_separation() {
        let t = table((0..30).map(|i| i as f64).collect(), vec![1.0; 30]);
        let d = DesignSpec::new(Response::Observed("y".into()), vec![Term::Main("x".into())]);
        assert!(matches!(
            fit_logistic(&t, &d, None),
            Err(Error::Separation { .. })
        ));
    }

    #[test]
    fn zero_linear_predictor_predicts_half() {
        let x: Vec<f64> = vec![-1.0, 1.0, -1.0, 1.0];
        let y = vec![0.0, 1.0, 1.0, 0.0];
        let f = fit_logistic(&table(x, y), &design(), None).unwrap();
        assert!(f
            .predict(&f_table())
            .unwrap()
            .iter()
            .all(|p| (p - 0.5).abs() < 1e-9));
    }

    fn f_table() -> DataTable {
        table(vec![0.0, 3.0], vec![0.0, 0.0])
    }
}
