//! Weighted linear regression with an unweighted residual pool.

use super::{
    check_weights, weighted_least_squares, DesignEncoding, DesignSpec, FittedRegression, Link,
    Response,
};
use crate::error::{Error, Result};
use crate::table::DataTable;

/// Weighted least squares of a numeric response on the design, using every
/// row of `t`. The caller chooses the fitting rows; all design cells must be
/// observed on them.
pub fn fit_linear(
    t: &DataTable,
    design: &DesignSpec,
    weights: Option<&[f64]>,
) -> Result<FittedRegression> {
    let Response::Value(name) = &design.response else {
        return Err(Error::Config(
            "a linear model needs a value response".into(),
        ));
    };
    let j = t.position(name)?;
    if t.schema().column(j).kind.is_discrete() {
        return Err(Error::Config(format!(
            "linear response `{name}` must be numeric"
        )));
    }
    let n = t.n_rows();
    let w = check_weights(weights, n)?;
    let y: Vec<f64> = (0..n)
        .map(|i| {
            t.get(i, j).ok_or_else(|| Error::Unobserved {
                row: t.row_ids()[i],
                column: name.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let encoding = DesignEncoding::fit(design, t)?;
    let (x, _) = encoding.matrix(t, None, false)?;
    let p = x.ncols();
    if n <= p {
        return Err(Error::InsufficientRows {
            rows: n,
            parameters: p,
        });
    }
    // Weights rescaled to mean one leave the coefficients unchanged and make
    // the covariance invariant to the overall weight scale.
    let scale = n as f64 / w.iter().sum::<f64>();
    let w_norm: Vec<f64> = w.iter().map(|v| v * scale).collect();
    let (beta, xtwx_inv) = weighted_least_squares(&x, &y, &w_norm, &encoding)?;
    let fitted = &x * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().zip(&w_norm).map(|(r, w)| w * r * r).sum();
    let sigma2 = rss / (n - p) as f64;
    Ok(FittedRegression {
        design: design.clone(),
        link: Link::Identity,
        encoding,
        coefficients: beta.iter().copied().collect(),
        covariance: xtwx_inv * sigma2,
        residuals,
        weights: w,
        n_fit: n,
        fit_row_ids: t.row_ids().to_vec(),
        iterations: 0,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::Term;
    use crate::rng::seeded;
    use crate::table::{ColumnKind, ColumnSchema, Role, Schema};
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;

    pub(crate) fn xy_table(x: Vec<f64>, y: Vec<f64>) -> DataTable {
        let s = Arc::new(
            Schema::partial(vec![
                ColumnSchema::new("x", ColumnKind::Continuous, Role::Baseline),
                ColumnSchema::new("y", ColumnKind::Continuous, Role::Outcome),
            ])
            .unwrap(),
        );
        DataTable::complete(s, vec![x, y]).unwrap()
    }

    fn design() -> DesignSpec {
        DesignSpec::new(Response::Value("y".into()), vec![Term::Main("x".into())])
    }

    #[test]
    fn exact_line_has_zero_residuals() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        let f = fit_linear(&xy_table(x, y), &design(), None).unwrap();
        assert!((f.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((f.coefficients[1] - 2.0).abs() < 1e-10);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-10));
        assert_eq!(f.residuals.len(), f.n_fit);
    }

    #[test]
    fn constant_weights_match_unweighted() {
        let mut rng = seeded(3);
        let x: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 3.0 + rng.random::<f64>()).collect();
        let t = xy_table(x, y);
        let a = fit_linear(&t, &design(), None).unwrap();
        let b = fit_linear(&t, &design(), Some(&vec![7.5; 50])).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((u - v).abs() < 1e-10);
        }
        for (u, v) in a.standard_errors().iter().zip(b.standard_errors()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn monte_carlo_recovers_line() {
        let mut rng = seeded(11);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y = x
            .iter()
            .map(|v| {
                1.0 + 2.0 * v + {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    e
                }
            })
            .collect();
        let f = fit_linear(&xy_table(x, y), &design(), None).unwrap();
        let se = f.standard_errors();
        assert!((f.coefficients[0] - 1.0).abs() < 3.0 * se[0]);
        assert!((f.coefficients[1] - 2.0).abs() < 3.0 * se[1]);
    }

    #[test]
    fn intercept_only_predicts_constant() {
        let t = xy_table(vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]);
        let d = DesignSpec::new(Response::Value("y".into()), vec![]);
        let f = fit_linear(&t, &d, None).unwrap();
        assert!(f
            .predict(&t)
            .unwrap()
            .iter()
            .all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn collinear_design_is_rejected() {
        let x: Vec<f64> = vec![1.0; 10];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            fit_linear(&xy_table(x, y), &design(), None),
            Err(Error::DroppedStrata { .. })
        ));
    }

    #[test]
    fn too_few_rows() {
        let t = xy_table(vec![1.0], vec![2.0]);
        assert!(matches!(
            fit_linear(&t, &design(), None),
            Err(Error::InsufficientRows { .. })
        ));
    }
}
