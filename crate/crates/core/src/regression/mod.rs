//! Linear and logistic regression used by every generation stage.
//!
//! Fits are weighted least squares solved by Householder QR, and logistic
//! regression by iteratively reweighted least squares on top of the same solver.

mod design;
mod linear;
mod logistic;
mod sampling;

pub use design::{DesignEncoding, DesignSpec, Response, Term, UnseenRows};
pub use linear::fit_linear;
pub use logistic::{fit_logistic, fit_logistic_with, logistic_log_likelihood, logistic_score, LogisticOptions};
pub use sampling::{draw_bernoulli, sample_admissible, sample_admissible_or_clamp};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::table::DataTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    Identity,
    Logit,
}

/// A fitted model together with what is needed to reuse it: the learned
/// encoding, coefficient covariance, and for linear fits the residual pool.
#[derive(Clone, Debug)]
pub struct FittedRegression {
    pub design: DesignSpec,
    pub link: Link,
    pub encoding: DesignEncoding,
    pub coefficients: Vec<f64>,
    /// Estimated covariance of the coefficients. For linear fits the residual
    /// variance uses weights rescaled to mean one.
    pub covariance: DMatrix<f64>,
    /// Unweighted residuals `y − ŷ`, one per fitting row; empty for logit.
    pub residuals: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_fit: usize,
    pub fit_row_ids: Vec<usize>,
    /// IRLS iterations (0 for linear fits).
    pub iterations: usize,
    /// False only for logistic fits returned unconverged on request.
    pub converged: bool,
}

/// Predictions plus rows whose categorical level was absent from the fit.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub values: Vec<f64>,
    pub unseen: UnseenRows,
}

impl FittedRegression {
    pub fn coefficient_names(&self) -> &[String] {
        self.encoding.names()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficient_names()
            .iter()
            .position(|n| n == name)
            .map(|k| self.coefficients[k])
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len())
            .map(|k| self.covariance[(k, k)].max(0.0).sqrt())
            .collect()
    }

    /// Linear predictor for every row of `t`; unseen levels are errors.
    pub fn linear_predictor(&self, t: &DataTable) -> Result<Vec<f64>> {
        let (x, _) = self.encoding.matrix(t, None, false)?;
        Ok(self.eta(&x))
    }

    fn eta(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let beta = DVector::from_column_slice(&self.coefficients);
        (x * beta).iter().copied().collect()
    }

    fn respond(&self, eta: Vec<f64>) -> Vec<f64> {
        match self.link {
            Link::Identity => eta,
            Link::Logit => eta.into_iter().map(expit).collect(),
        }
    }

    /// Mean response: linear predictor or inverse-logit probability.
    pub fn predict(&self, t: &DataTable) -> Result<Vec<f64>> {
        Ok(self.respond(self.linear_predictor(t)?))
    }

    /// Like [`predict`](Self::predict), but an unseen level contributes zero
    /// (the reference cell) and the affected rows are reported. Observation
    /// indicators are taken from `masks` when given.
    pub fn predict_lenient(
        &self,
        t: &DataTable,
        masks: Option<&[Vec<bool>]>,
    ) -> Result<Prediction> {
        let (x, unseen) = self.encoding.matrix(t, masks, true)?;
        Ok(Prediction {
            values: self.respond(self.eta(&x)),
            unseen,
        })
    }
}

/// Free-function form of [`FittedRegression::predict`].
pub fn predict(model: &FittedRegression, t: &DataTable) -> Result<Vec<f64>> {
    model.predict(t)
}

/// Numerically stable inverse logit.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Weighted least squares via QR of `diag(√w) X`.
///
/// Returns the coefficients and `(Xᵀ W X)⁻¹`.
pub(crate) fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    encoding: &DesignEncoding,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::InsufficientRows {
            rows: n,
            parameters: p,
        });
    }
    let mut xw = x.clone();
    let mut yw = DVector::from_column_slice(y);
    for i in 0..n {
        let s = w[i].sqrt();
        xw.row_mut(i).scale_mut(s);
        yw[i] *= s;
    }
    let qr = xw.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    for k in 0..p {
        if !(r[(k, k)].abs() > 1e-10 * max_diag.max(f64::MIN_POSITIVE)) {
            return Err(Error::DroppedStrata {
                term: encoding.name(k).to_string(),
                dropped: encoding.dropped().to_vec(),
            });
        }
    }
    qr.q_tr_mul(&mut yw);
    let qty = yw.rows(0, p).into_owned();
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::DroppedStrata {
            term: encoding.name(p - 1).to_string(),
            dropped: encoding.dropped().to_vec(),
        })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .expect("triangular factor checked non-singular");
    let xtwx_inv = &r_inv * r_inv.transpose();
    Ok((beta, xtwx_inv))
}

pub(crate) fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<Vec<f64>> {
    match weights {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidTable(format!(
                    "{} weights for {n} rows",
                    w.len()
                )));
            }
            if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidTable(format!(
                    "weight {} at row {i} is not a positive finite number",
                    w[i]
                )));
            }
            Ok(w.to_vec())
        }
    }
}
