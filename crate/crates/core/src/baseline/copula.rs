//! Gaussian copula with empirical marginals for the baseline covariates.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use super::BaselineGenerator;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::table::{ColumnKind, DataTable, Role, Schema};

/// Fixed seed for the within-level jitter of discrete columns, so fitting is a
/// pure function of the table.
const JITTER_SEED: u64 = 0x00C0_FFEE;

/// Empirical marginal of one baseline column.
#[derive(Clone, Debug, PartialEq)]
pub enum Marginal {
    /// Sorted observed values; inverted with linear interpolation between
    /// order statistics at plotting positions k/(n+1).
    Continuous { sorted: Vec<f64> },
    /// Cumulative level frequencies; the last entry is 1.
    Discrete { cumulative: Vec<f64> },
}

impl Marginal {
    /// Value at probability `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::Continuous { sorted } => {
                let n = sorted.len();
                let h = u * (n + 1) as f64;
                if h <= 1.0 {
                    return sorted[0];
                }
                if h >= n as f64 {
                    return sorted[n - 1];
                }
                let lo = h.floor() as usize;
                let frac = h - lo as f64;
                sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
            }
            Marginal::Discrete { cumulative } => {
                let last = cumulative
                    .iter()
                    .enumerate()
                    .rev()
                    .find(|&(k, &c)| c > if k == 0 { 0.0 } else { cumulative[k - 1] })
                    .map_or(0, |(k, _)| k);
                cumulative
                    .iter()
                    .position(|&c| u <= c)
                    .unwrap_or(last)
                    .min(last) as f64
            }
        }
    }

    /// Level frequencies for a discrete marginal.
    pub fn frequencies(&self) -> Option<Vec<f64>> {
        match self {
            Marginal::Discrete { cumulative } => Some(
                cumulative
                    .iter()
                    .scan(0.0, |prev, &c| {
                        let f = c - *prev;
                        *prev = c;
                        Some(f)
                    })
                    .collect(),
            ),
            Marginal::Continuous { .. } => None,
        }
    }
}

/// Gaussian copula over the baseline columns.
#[derive(Clone, Debug)]
pub struct CopulaModel {
    pub columns: Vec<String>,
    /// Correlation of normal scores, after the nearest-PSD correction.
    pub correlation: DMatrix<f64>,
    pub marginals: Vec<Marginal>,
    factor: DMatrix<f64>,
    schema: Arc<Schema>,
}

/// Fits the copula to the baseline-role columns of `t`.
pub fn fit_copula(t: &DataTable) -> Result<CopulaModel> {
    let names: Vec<String> = t
        .schema()
        .columns()
        .iter()
        .filter(|c| c.role == Role::Baseline)
        .map(|c| c.name.clone())
        .collect();
    let n = t.n_rows();
    let p = names.len();
    if p == 0 {
        return Err(Error::Schema("no baseline columns to model".into()));
    }
    if n < 2 * p {
        return Err(Error::InsufficientRows {
            rows: n,
            parameters: 2 * p,
        });
    }
    let normal = Normal::standard();
    let mut jitter = Rng::seed_from_u64(JITTER_SEED);
    let mut scores = DMatrix::<f64>::zeros(n, p);
    let mut marginals = Vec::with_capacity(p);
    let mut columns = Vec::with_capacity(p);
    for (c, name) in names.iter().enumerate() {
        let j = t.position(name)?;
        let col = t.schema().column(j).clone();
        if t.observed(j).iter().any(|&o| !o) {
            return Err(Error::MissingRequired {
                row: t.observed(j).iter().position(|&o| !o).unwrap_or(0),
                column: name.clone(),
            });
        }
        let values = t.values(j);
        match col.kind.n_levels() {
            None => {
                let ranks = average_ranks(values);
                if ranks.iter().all(|&r| r == ranks[0]) {
                    return Err(Error::ConstantColumn(name.clone()));
                }
                for i in 0..n {
                    scores[(i, c)] = normal.inverse_cdf(ranks[i] / (n + 1) as f64);
                }
                let mut sorted = values.to_vec();
                sorted.sort_by(f64::total_cmp);
                marginals.push(Marginal::Continuous { sorted });
            }
            Some(k) => {
                let mut counts = vec![0usize; k];
                for &v in values {
                    counts[v as usize] += 1;
                }
                let mut cumulative = Vec::with_capacity(k);
                let mut acc = 0usize;
                for &cnt in &counts {
                    acc += cnt;
                    cumulative.push(acc as f64 / n as f64);
                }
                for i in 0..n {
                    let level = values[i] as usize;
                    let lo = if level == 0 {
                        0.0
                    } else {
                        cumulative[level - 1]
                    };
                    let hi = cumulative[level];
                    let v: f64 = jitter.random();
                    let u = (lo + v * (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
                    scores[(i, c)] = normal.inverse_cdf(u);
                }
                marginals.push(Marginal::Discrete { cumulative });
            }
        }
        columns.push(col);
    }
    let correlation = nearest_correlation(&pearson(&scores));
    let factor = cholesky_with_jitter(&correlation);
    Ok(CopulaModel {
        columns: names,
        correlation,
        marginals,
        factor,
        schema: Arc::new(Schema::partial(columns)?),
    })
}

impl BaselineGenerator for CopulaModel {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> DataTable {
        let p = self.columns.len();
        let normal = Normal::standard();
        let mut out = vec![Vec::with_capacity(n); p];
        let mut eps = DVector::<f64>::zeros(p);
        for _ in 0..n {
            for e in eps.iter_mut() {
                *e = StandardNormal.sample(rng);
            }
            let z = &self.factor * &eps;
            for (j, m) in self.marginals.iter().enumerate() {
                let u = normal.cdf(z[j]).clamp(1e-15, 1.0 - 1e-15);
                out[j].push(m.quantile(u));
            }
        }
        DataTable::complete(self.schema.clone(), out).expect("copula samples respect column kinds")
    }
}

impl CopulaModel {
    /// Convenience wrapper around [`BaselineGenerator::sample`].
    pub fn sample_copula(&self, n: usize, rng: &mut Rng) -> DataTable {
        BaselineGenerator::sample(self, n, rng)
    }

    pub fn column_kind(&self, j: usize) -> &ColumnKind {
        &self.schema.column(j).kind
    }
}

/// Ranks starting at 1, ties sharing their average rank.
pub(crate) fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut k = i;
        while k + 1 < n && values[order[k + 1]] == values[order[i]] {
            k += 1;
        }
        let avg = (i + k) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=k] {
            ranks[idx] = avg;
        }
        i = k + 1;
    }
    ranks
}

fn pearson(scores: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = scores.shape();
    let mut centered = scores.clone();
    let mut sds = vec![0.0; p];
    for j in 0..p {
        let mean = scores.column(j).sum() / n as f64;
        centered.column_mut(j).add_scalar_mut(-mean);
        sds[j] = centered.column(j).norm();
    }
    let mut c = centered.transpose() * &centered;
    for a in 0..p {
        for b in 0..p {
            let d = sds[a] * sds[b];
            c[(a, b)] = if d > 0.0 { c[(a, b)] / d } else { 0.0 };
        }
        c[(a, a)] = 1.0;
    }
    c
}

/// Clips eigenvalues at 1e-8 and rescales to a unit diagonal.
pub(crate) fn nearest_correlation(c: &DMatrix<f64>) -> DMatrix<f64> {
    let p = c.nrows();
    let sym = (c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.min() >= 1e-8 {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(1e-8));
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..p).map(|k| rebuilt[(k, k)].sqrt()).collect();
    let mut out = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            out[(a, b)] = rebuilt[(a, b)] / (d[a] * d[b]);
        }
    }
    let out2 = (&out + out.transpose()) * 0.5;
    let mut fixed = out2;
    for k in 0..p {
        fixed[(k, k)] = 1.0;
    }
    fixed
}

fn cholesky_with_jitter(c: &DMatrix<f64>) -> DMatrix<f64> {
    let p = c.nrows();
    let mut jitter = 0.0;
    loop {
        let m = c + DMatrix::identity(p, p) * jitter;
        if let Some(ch) = Cholesky::new(m) {
            return ch.l();
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::table::ColumnSchema;

    fn table(cols: Vec<(&str, ColumnKind, Vec<f64>)>) -> DataTable {
        let schema = Schema::partial(
            cols.iter()
                .map(|(n, k, _)| ColumnSchema::new(*n, k.clone(), Role::Baseline))
                .collect(),
        )
        .unwrap();
        DataTable::complete(Arc::new(schema), cols.into_iter().map(|c| c.2).collect()).unwrap()
    }

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn independent_normals_have_near_zero_correlation() {
        let t = table(vec![
            ("a", ColumnKind::Continuous, normals(50_000, 1)),
            ("b", ColumnKind::Continuous, normals(50_000, 2)),
        ]);
        let m = fit_copula(&t).unwrap();
        assert!(m.correlation[(0, 1)].abs() < 0.02);
    }

    #[test]
    fn comonotone_pair_has_unit_correlation() {
        let a = normals(5000, 3);
        let b: Vec<f64> = a.iter().map(|x| x.exp()).collect();
        let m = fit_copula(&table(vec![
            ("a", ColumnKind::Continuous, a),
            ("b", ColumnKind::Continuous, b),
        ]))
        .unwrap();
        assert!((m.correlation[(0, 1)] - 1.0).abs() < 0.01);
    }

    #[test]
    fn single_column_is_identity() {
        let m = fit_copula(&table(vec![("a", ColumnKind::Continuous, normals(10, 4))])).unwrap();
        assert_eq!(m.correlation, DMatrix::identity(1, 1));
    }

    #[test]
    fn constant_continuous_column_is_rejected() {
        let t = table(vec![("a", ColumnKind::Continuous, vec![2.0; 10])]);
        assert!(matches!(fit_copula(&t), Err(Error::ConstantColumn(_))));
    }

    #[test]
    fn sample_size_and_marginals() {
        let levels =
            ColumnKind::Categorical(vec!["70".into(), "80".into(), "90".into(), "100".into()]);
        let mut rng = seeded(6);
        let k: Vec<f64> = (0..2000)
            .map(|_| {
                let u: f64 = rng.random();
                if u < 0.02 {
                    0.0
                } else if u < 0.12 {
                    1.0
                } else if u < 0.5 {
                    2.0
                } else {
                    3.0
                }
            })
            .collect();
        let m = fit_copula(&table(vec![
            ("x", ColumnKind::Continuous, normals(2000, 7)),
            ("k", levels, k.clone()),
        ]))
        .unwrap();
        let s = m.sample_copula(1342, &mut seeded(9));
        assert_eq!(s.n_rows(), 1342);
        assert!(s.is_fully_observed());
        let big = m.sample_copula(100_000, &mut seeded(10));
        let freq = m.marginals[1].frequencies().unwrap();
        for lvl in 0..4 {
            let f = big.values(1).iter().filter(|&&v| v == lvl as f64).count() as f64 / 100_000.0;
            assert!((f - freq[lvl]).abs() < 0.02);
        }
    }

    #[test]
    fn quantile_interpolates_between_order_statistics() {
        let m = Marginal::Continuous {
            sorted: vec![1.0, 2.0, 3.0],
        };
        assert_eq!(m.quantile(0.1), 1.0);
        assert_eq!(m.quantile(0.5), 2.0);
        assert!((m.quantile(0.625) - 2.5).abs() < 1e-12);
        assert_eq!(m.quantile(0.99), 3.0);
    }

    #[test]
    fn nearest_correlation_repairs_indefinite_matrix() {
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let fixed = nearest_correlation(&c);
        let eig = SymmetricEigen::new(fixed.clone());
        assert!(eig.eigenvalues.min() >= -1e-10);
        for k in 0..3 {
            assert!((fixed[(k, k)] - 1.0).abs() < 1e-12);
        }
        assert!((&fixed - fixed.transpose()).amax() < 1e-12);
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }
}
