//! Principal components of the correlation matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal components of one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub columns: Vec<String>,
    /// Eigenvalues of the correlation matrix, largest first. They sum to the
    /// number of columns.
    pub eigenvalues: Vec<f64>,
    /// Share of total variance per component.
    pub explained: Vec<f64>,
    /// Loadings of the first two components, one entry per column, each with
    /// its largest-magnitude entry positive.
    pub loadings: [Vec<f64>; 2],
    /// Projections of every row onto the first two components.
    pub scores: [Vec<f64>; 2],
}

/// PCA of rows given column-wise: each column is centered and scaled by its
/// own sample moments, then the correlation matrix is eigendecomposed.
pub fn pca(columns: &[String], data: &[Vec<f64>]) -> Result<PcaSummary> {
    let p = data.len();
    if p == 0 || p != columns.len() {
        return Err(Error::Metric("pca: column count mismatch".into()));
    }
    let n = data[0].len();
    if n < 3 {
        return Err(Error::Metric(format!("pca: {n} rows, need at least 3")));
    }
    let mut z = DMatrix::zeros(n, p);
    for (j, col) in data.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        if sd <= 0.0 || !sd.is_finite() {
            return Err(Error::ZeroVariance(columns[j].clone()));
        }
        for (i, v) in col.iter().enumerate() {
            z[(i, j)] = (v - mean) / sd;
        }
    }
    let corr = (z.transpose() * &z) / (n - 1) as f64;
    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained = eigenvalues.iter().map(|v| v / total).collect();

    let component = |rank: usize| -> Vec<f64> {
        if rank >= p {
            return vec![0.0; p];
        }
        let v: Vec<f64> = eig.eigenvectors.column(order[rank]).iter().copied().collect();
        let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            v.into_iter().map(|x| -x).collect()
        } else {
            v
        }
    };
    let loadings = [component(0), component(1)];
    let project = |l: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..p).map(|j| z[(i, j)] * l[j]).sum()).collect() };
    let scores = [project(&loadings[0]), project(&loadings[1])];
    Ok(PcaSummary {
        columns: columns.to_vec(),
        eigenvalues,
        explained,
        loadings,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("c{j}")).collect()
    }

    #[test]
    fn perfectly_correlated_pair_has_one_component() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let s = pca(&names(2), &[x, y]).unwrap();
        assert!((s.explained[0] - 1.0).abs() < 1e-12);
        assert!(s.explained[1].abs() < 1e-12);
    }

    #[test]
    fn two_column_eigenvalues_are_one_plus_minus_r() {
        // For a 2x2 correlation matrix the characteristic roots are 1 ± r.
        let x = vec![1.0, 2.0, 4.0];
        let y = vec![2.0, 1.0, 5.0];
        let (mx, my) = (7.0 / 3.0, 8.0 / 3.0);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        let r = sxy / (sxx * syy).sqrt();
        let s = pca(&names(2), &[x, y]).unwrap();
        assert!((s.eigenvalues[0] - (1.0 + r.abs())).abs() < 1e-12);
        assert!((s.eigenvalues[1] - (1.0 - r.abs())).abs() < 1e-12);
    }

    #[test]
    fn trace_identity_and_sign_convention() {
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|j| (0..50).map(|i| ((i * (j + 2)) as f64 * 0.7).sin() + j as f64 * (i as f64 * 0.1)).collect())
            .collect();
        let s = pca(&names(4), &cols).unwrap();
        assert!((s.eigenvalues.iter().sum::<f64>() - 4.0).abs() < 1e-8);
        assert!(s.explained.iter().sum::<f64>() <= 1.0 + 1e-12);
        for l in &s.loadings {
            let lead = l.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(lead > 0.0);
        }
        let again = pca(&names(4), &cols).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn rejects_short_or_constant_input() {
        assert!(pca(&names(1), &[vec![1.0, 2.0]]).is_err());
        assert!(pca(&names(1), &[vec![1.0, 1.0, 1.0]]).is_err());
    }
}
