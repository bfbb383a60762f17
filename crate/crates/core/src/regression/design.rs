//! Model formulas and their expansion into design matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stratum};
use crate::table::{observed_moments, DataTable};

/// One covariate term. An intercept is always included.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    /// The column itself: numeric as-is, discrete as reference-cell dummies.
    Main(String),
    /// Observation indicator `R` of the column.
    Observed(String),
    /// `R × value`, contributing zero wherever the column is unobserved.
    ObservedTimes(String),
}

impl Term {
    pub fn column(&self) -> &str {
        match self {
            Term::Main(c) | Term::Observed(c) | Term::ObservedTimes(c) => c,
        }
    }
}

/// What the model explains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Response {
    /// The column's values (rows must be observed).
    Value(String),
    /// The column's observation indicator, defined on every row.
    Observed(String),
}

impl Response {
    pub fn column(&self) -> &str {
        match self {
            Response::Value(c) | Response::Observed(c) => c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub response: Response,
    pub terms: Vec<Term>,
    /// Center and scale numeric covariates with moments of the fitting rows,
    /// so coefficients are per standard deviation.
    pub standardize: bool,
}

impl DesignSpec {
    pub fn new(response: Response, terms: Vec<Term>) -> Self {
        Self {
            response,
            terms,
            standardize: false,
        }
    }

    pub fn standardized(mut self) -> Self {
        self.standardize = true;
        self
    }

    /// Main-effect terms for the given columns.
    pub fn mains<S: AsRef<str>>(columns: &[S]) -> Vec<Term> {
        columns
            .iter()
            .map(|c| Term::Main(c.as_ref().to_string()))
            .collect()
    }

    pub fn validate(&self, t: &DataTable) -> Result<()> {
        t.position(self.response.column())?;
        for term in &self.terms {
            t.position(term.column())?;
            if let Response::Value(r) = &self.response {
                if term == &Term::Main(r.clone()) {
                    return Err(Error::Config(format!(
                        "response `{r}` also appears as a covariate"
                    )));
                }
            }
            if let Term::ObservedTimes(c) = term {
                if t.schema().get(c)?.kind.is_discrete() {
                    return Err(Error::Config(format!(
                        "interaction with observation indicator needs a numeric column, `{c}` is discrete"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Encoded {
    Numeric {
        column: String,
        center: f64,
        scale: f64,
    },
    Dummies {
        column: String,
        reference: usize,
        levels: Vec<usize>,
        labels: Vec<String>,
    },
    Observed {
        column: String,
    },
    ObservedTimes {
        column: String,
        center: f64,
        scale: f64,
    },
}

/// The expansion of a [`DesignSpec`] learned from fitting rows: which dummy
/// levels exist and the centering used for numeric terms.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignEncoding {
    terms: Vec<Encoded>,
    names: Vec<String>,
    dropped: Vec<Stratum>,
}

/// Rows whose level has no coefficient, grouped by stratum.
pub type UnseenRows = Vec<(Stratum, Vec<usize>)>;

impl DesignEncoding {
    pub fn fit(spec: &DesignSpec, t: &DataTable) -> Result<Self> {
        spec.validate(t)?;
        let mut terms = Vec::new();
        let mut names = vec!["(Intercept)".to_string()];
        let mut dropped = Vec::new();
        for term in &spec.terms {
            let j = t.position(term.column())?;
            let col = t.schema().column(j);
            match term {
                Term::Main(c) => match col.kind.levels() {
                    Some(labels) => {
                        let mut present = vec![false; labels.len()];
                        for (&v, &o) in t.values(j).iter().zip(t.observed(j)) {
                            if o {
                                present[v as usize] = true;
                            }
                        }
                        let kept: Vec<usize> = (0..labels.len()).filter(|&k| present[k]).collect();
                        for k in (0..labels.len()).filter(|&k| !present[k]) {
                            dropped.push(Stratum {
                                column: c.clone(),
                                level: labels[k].clone(),
                            });
                        }
                        let Some((&reference, rest)) = kept.split_first() else {
                            return Err(Error::InsufficientRows {
                                rows: 0,
                                parameters: labels.len(),
                            });
                        };
                        for &k in rest {
                            names.push(format!("{c}={}", labels[k]));
                        }
                        terms.push(Encoded::Dummies {
                            column: c.clone(),
                            reference,
                            levels: rest.to_vec(),
                            labels,
                        });
                    }
                    None => {
                        let (center, scale) =
                            centering(spec.standardize, t.values(j), t.observed(j));
                        names.push(c.clone());
                        terms.push(Encoded::Numeric {
                            column: c.clone(),
                            center,
                            scale,
                        });
                    }
                },
                Term::Observed(c) => {
                    names.push(format!("R[{c}]"));
                    terms.push(Encoded::Observed { column: c.clone() });
                }
                Term::ObservedTimes(c) => {
                    let (center, scale) = centering(spec.standardize, t.values(j), t.observed(j));
                    names.push(format!("R[{c}]*{c}"));
                    terms.push(Encoded::ObservedTimes {
                        column: c.clone(),
                        center,
                        scale,
                    });
                }
            }
        }
        Ok(Self {
            terms,
            names,
            dropped,
        })
    }

    /// Coefficient names, starting with `(Intercept)`.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_parameters(&self) -> usize {
        self.names.len()
    }

    /// Declared levels that were absent from the fitting rows.
    pub fn dropped(&self) -> &[Stratum] {
        &self.dropped
    }

    /// Builds the design matrix for every row of `t`.
    ///
    /// Observation indicators are read from `masks` when given (one mask per
    /// schema column), otherwise from `t`. With `lenient`, a level that had no
    /// coefficient contributes zero and its rows are reported; otherwise it
    /// is an [`Error::UnseenLevel`].
    pub fn matrix(
        &self,
        t: &DataTable,
        masks: Option<&[Vec<bool>]>,
        lenient: bool,
    ) -> Result<(DMatrix<f64>, UnseenRows)> {
        let n = t.n_rows();
        let p = self.n_parameters();
        let mut x = DMatrix::<f64>::zeros(n, p);
        x.column_mut(0).fill(1.0);
        let mut unseen: UnseenRows = Vec::new();
        let mut col = 1;
        for enc in &self.terms {
            match enc {
                Encoded::Numeric {
                    column,
                    center,
                    scale,
                } => {
                    let j = t.position(column)?;
                    let (vals, obs) = (t.values(j), t.observed(j));
                    for i in 0..n {
                        if !obs[i] {
                            return Err(Error::Unobserved {
                                row: t.row_ids()[i],
                                column: column.clone(),
                            });
                        }
                        x[(i, col)] = (vals[i] - center) / scale;
                    }
                    col += 1;
                }
                Encoded::Dummies {
                    column,
                    reference,
                    levels,
                    labels,
                } => {
                    let j = t.position(column)?;
                    let (vals, obs) = (t.values(j), t.observed(j));
                    for i in 0..n {
                        if !obs[i] {
                            return Err(Error::Unobserved {
                                row: t.row_ids()[i],
                                column: column.clone(),
                            });
                        }
                        let k = vals[i] as usize;
                        if k == *reference {
                            continue;
                        }
                        match levels.iter().position(|&l| l == k) {
                            Some(d) => x[(i, col + d)] = 1.0,
                            None => {
                                let stratum = Stratum {
                                    column: column.clone(),
                                    level: labels.get(k).cloned().unwrap_or_else(|| k.to_string()),
                                };
                                match unseen.iter_mut().find(|(s, _)| *s == stratum) {
                                    Some((_, rows)) => rows.push(i),
                                    None => unseen.push((stratum, vec![i])),
                                }
                            }
                        }
                    }
                    col += levels.len();
                }
                Encoded::Observed { column } => {
                    let j = t.position(column)?;
                    let obs = masks.map_or(t.observed(j), |m| &m[j][..]);
                    for i in 0..n {
                        x[(i, col)] = if obs[i] { 1.0 } else { 0.0 };
                    }
                    col += 1;
                }
                Encoded::ObservedTimes {
                    column,
                    center,
                    scale,
                } => {
                    let j = t.position(column)?;
                    let obs = masks.map_or(t.observed(j), |m| &m[j][..]);
                    let vals = t.values(j);
                    for i in 0..n {
                        if obs[i] {
                            if vals[i].is_nan() {
                                return Err(Error::Unobserved {
                                    row: t.row_ids()[i],
                                    column: column.clone(),
                                });
                            }
                            x[(i, col)] = (vals[i] - center) / scale;
                        }
                    }
                    col += 1;
                }
            }
        }
        if !lenient {
            if let Some((stratum, rows)) = unseen.into_iter().next() {
                return Err(Error::UnseenLevel { stratum, rows });
            }
            return Ok((x, Vec::new()));
        }
        Ok((x, unseen))
    }

    /// Name of the design column a coefficient index belongs to, for errors.
    pub(crate) fn name(&self, k: usize) -> &str {
        &self.names[k]
    }
}

fn centering(standardize: bool, values: &[f64], observed: &[bool]) -> (f64, f64) {
    if !standardize {
        return (0.0, 1.0);
    }
    let (mean, sd, _) = observed_moments(values, observed);
    if mean.is_finite() && sd.is_finite() && sd > 0.0 {
        (mean, sd)
    } else {
        (0.0, 1.0)
    }
}
