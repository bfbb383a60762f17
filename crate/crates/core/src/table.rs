//! Typed columnar tables with per-cell observation masks.
//!
//! Every cell is stored as `f64`. Categorical and binary cells hold the index of
//! their level, so `Binary` values are `0.0` or `1.0`. Unobserved cells hold
//! `NaN` and are only reachable through the mask. Rows carry the identifier of
//! the row they came from so that subsets can be joined back.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value type of a column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    /// Non-negative counts stored as reals; generated values are never rounded.
    Count,
    Binary,
    /// Ordered list of level labels; the first level is the regression reference.
    Categorical(Vec<String>),
}

impl ColumnKind {
    /// Level labels for discrete kinds. Binary columns have levels `0` and `1`.
    pub fn levels(&self) -> Option<Vec<String>> {
        match self {
            ColumnKind::Binary => Some(vec!["0".into(), "1".into()]),
            ColumnKind::Categorical(levels) => Some(levels.clone()),
            _ => None,
        }
    }

    pub fn n_levels(&self) -> Option<usize> {
        match self {
            ColumnKind::Binary => Some(2),
            ColumnKind::Categorical(levels) => Some(levels.len()),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ColumnKind::Binary | ColumnKind::Categorical(_))
    }

    /// Continuous or count.
    pub fn is_numeric(&self) -> bool {
        !self.is_discrete()
    }

    fn accepts(&self, v: f64) -> bool {
        match self {
            ColumnKind::Continuous => v.is_finite(),
            ColumnKind::Count => v.is_finite() && v >= 0.0,
            ColumnKind::Binary => v == 0.0 || v == 1.0,
            ColumnKind::Categorical(levels) => {
                v >= 0.0 && v.fract() == 0.0 && (v as usize) < levels.len()
            }
        }
    }
}

/// Temporal role of a column in the trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Baseline,
    Treatment,
    /// Post-randomization measurement `Z_k`, with `k` starting at 1.
    PostRandomization(usize),
    Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawColumn", into = "RawColumn")]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub role: Role,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind, role: Role) -> Self {
        Self {
            name: name.into(),
            kind,
            role,
        }
    }
}

/// Flat serialized form of a column, as written in schema files.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawColumn {
    name: String,
    kind: String,
    role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<String>>,
}

impl TryFrom<RawColumn> for ColumnSchema {
    type Error = String;

    fn try_from(raw: RawColumn) -> std::result::Result<Self, String> {
        let kind = match (raw.kind.as_str(), raw.levels) {
            ("continuous", None) => ColumnKind::Continuous,
            ("count", None) => ColumnKind::Count,
            ("binary", None) => ColumnKind::Binary,
            ("categorical", Some(levels)) => ColumnKind::Categorical(levels),
            ("categorical", None) => {
                return Err(format!("categorical column `{}` needs levels", raw.name))
            }
            (k, Some(_)) if k != "categorical" => {
                return Err(format!(
                    "column `{}`: levels only apply to categorical",
                    raw.name
                ))
            }
            (k, _) => return Err(format!("column `{}`: unknown kind `{k}`", raw.name)),
        };
        let role = match (raw.role.as_str(), raw.index) {
            ("baseline", None) => Role::Baseline,
            ("treatment", None) => Role::Treatment,
            ("outcome", None) => Role::Outcome,
            ("post_randomization", Some(k)) => Role::PostRandomization(k),
            ("post_randomization", None) => {
                return Err(format!(
                    "post-randomization column `{}` needs an index",
                    raw.name
                ))
            }
            (r, _) => return Err(format!("column `{}`: unsupported role `{r}`", raw.name)),
        };
        Ok(ColumnSchema {
            name: raw.name,
            kind,
            role,
        })
    }
}

impl From<ColumnSchema> for RawColumn {
    fn from(c: ColumnSchema) -> Self {
        let (kind, levels) = match c.kind {
            ColumnKind::Continuous => ("continuous", None),
            ColumnKind::Count => ("count", None),
            ColumnKind::Binary => ("binary", None),
            ColumnKind::Categorical(levels) => ("categorical", Some(levels)),
        };
        let (role, index) = match c.role {
            Role::Baseline => ("baseline", None),
            Role::Treatment => ("treatment", None),
            Role::PostRandomization(k) => ("post_randomization", Some(k)),
            Role::Outcome => ("outcome", None),
        };
        RawColumn {
            name: c.name,
            kind: kind.into(),
            role: role.into(),
            index,
            levels,
        }
    }
}

/// Ordered list of columns with a name index.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct Schema {
    columns: Vec<ColumnSchema>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    columns: Vec<ColumnSchema>,
}

impl TryFrom<RawSchema> for Schema {
    type Error = String;
    fn try_from(raw: RawSchema) -> std::result::Result<Self, String> {
        Schema::new(raw.columns).map_err(|e| e.to_string())
    }
}

impl From<Schema> for RawSchema {
    fn from(s: Schema) -> Self {
        RawSchema { columns: s.columns }
    }
}

impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.columns == other.columns
    }
}

impl Schema {
    /// A trial schema: one treatment, one outcome, post-randomization indices 1..K.
    pub fn new(columns: Vec<ColumnSchema>) -> Result<Self> {
        let schema = Self::partial(columns)?;
        let count = |r: Role| schema.columns.iter().filter(|c| c.role == r).count();
        if count(Role::Treatment) != 1 {
            return Err(Error::Schema(
                "exactly one treatment column is required".into(),
            ));
        }
        if count(Role::Outcome) != 1 {
            return Err(Error::Schema(
                "exactly one outcome column is required".into(),
            ));
        }
        let mut ks: Vec<usize> = schema
            .columns
            .iter()
            .filter_map(|c| match c.role {
                Role::PostRandomization(k) => Some(k),
                _ => None,
            })
            .collect();
        ks.sort_unstable();
        if ks.iter().enumerate().any(|(i, &k)| k != i + 1) {
            return Err(Error::Schema(format!(
                "post-randomization indices must be 1..K without gaps, found {ks:?}"
            )));
        }
        Ok(schema)
    }

    /// A column list without the trial-layout checks, used for derived tables
    /// such as a baseline-only sample.
    pub fn partial(columns: Vec<ColumnSchema>) -> Result<Self> {
        let mut index = HashMap::new();
        for (j, c) in columns.iter().enumerate() {
            if c.name.is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if index.insert(c.name.clone(), j).is_some() {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
            if let ColumnKind::Categorical(levels) = &c.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!("column `{}` has no levels", c.name)));
                }
                let mut seen = std::collections::HashSet::new();
                for l in levels {
                    if !seen.insert(l) {
                        return Err(Error::Schema(format!(
                            "column `{}` repeats level `{l}`",
                            c.name
                        )));
                    }
                }
            }
        }
        Ok(Self { columns, index })
    }

    pub fn columns(&self) -> &[ColumnSchema] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, j: usize) -> &ColumnSchema {
        &self.columns[j]
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&ColumnSchema> {
        Ok(&self.columns[self.position(name)?])
    }

    fn names_where(&self, f: impl Fn(&Role) -> bool) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| f(&c.role))
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn baseline(&self) -> Vec<String> {
        self.names_where(|r| *r == Role::Baseline)
    }

    pub fn treatment(&self) -> Result<&ColumnSchema> {
        self.columns
            .iter()
            .find(|c| c.role == Role::Treatment)
            .ok_or_else(|| Error::Schema("no treatment column".into()))
    }

    pub fn outcome(&self) -> Result<&ColumnSchema> {
        self.columns
            .iter()
            .find(|c| c.role == Role::Outcome)
            .ok_or_else(|| Error::Schema("no outcome column".into()))
    }

    /// Post-randomization column names ordered by their index k.
    pub fn post_randomization(&self) -> Vec<String> {
        let mut z: Vec<(usize, String)> = self
            .columns
            .iter()
            .filter_map(|c| match c.role {
                Role::PostRandomization(k) => Some((k, c.name.clone())),
                _ => None,
            })
            .collect();
        z.sort();
        z.into_iter().map(|(_, n)| n).collect()
    }

    /// Columns that may be missing, in measurement order: `Z_1, …, Z_K, Y`.
    pub fn temporal_targets(&self) -> Vec<String> {
        let mut t = self.post_randomization();
        if let Ok(y) = self.outcome() {
            t.push(y.name.clone());
        }
        t
    }

    /// Position of a column in measurement order; baseline and treatment are 0.
    pub fn temporal_rank(&self, name: &str) -> Result<usize> {
        Ok(match self.get(name)?.role {
            Role::Baseline | Role::Treatment => 0,
            Role::PostRandomization(k) => k,
            Role::Outcome => self.post_randomization().len() + 1,
        })
    }

    /// Column names in schema order.
    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }
}

/// Per-column mean and sample standard deviation (denominator n − 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub column: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub columns: Vec<Moments>,
}

impl StandardizationParams {
    pub fn get(&self, column: &str) -> Option<&Moments> {
        self.columns.iter().find(|m| m.column == column)
    }

    /// Maps standardized observed values back to the original scale.
    pub fn invert(&self, t: &DataTable) -> Result<DataTable> {
        let mut out = t.clone();
        for m in &self.columns {
            let j = t.schema().position(&m.column)?;
            for v in out.values[j].iter_mut() {
                *v = *v * m.sd + m.mean;
            }
        }
        Ok(out)
    }
}

/// Mean and sample standard deviation of the observed entries.
pub fn observed_moments(values: &[f64], observed: &[bool]) -> (f64, f64, usize) {
    let xs: Vec<f64> = values
        .iter()
        .zip(observed)
        .filter(|(_, &o)| o)
        .map(|(&v, _)| v)
        .collect();
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN, n);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt(), n)
}

/// An immutable table. Clone is cheap relative to the operations performed on it.
#[derive(Clone, Debug)]
pub struct DataTable {
    schema: Arc<Schema>,
    row_ids: Vec<usize>,
    values: Vec<Vec<f64>>,
    observed: Vec<Vec<bool>>,
}

impl PartialEq for DataTable {
    /// Equal schemas, row identifiers and masks, and bit-identical observed values.
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.row_ids == other.row_ids
            && self.observed == other.observed
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.observed)
                .all(|((a, b), o)| {
                    a.iter()
                        .zip(b)
                        .zip(o)
                        .all(|((x, y), &o)| !o || x.to_bits() == y.to_bits())
                })
    }
}

impl DataTable {
    /// Builds a table, validating lengths, cell kinds and the requirement that
    /// baseline and treatment columns are fully observed.
    pub fn new(
        schema: Arc<Schema>,
        mut values: Vec<Vec<f64>>,
        observed: Vec<Vec<bool>>,
    ) -> Result<Self> {
        if values.len() != schema.len() || observed.len() != schema.len() {
            return Err(Error::InvalidTable(format!(
                "expected {} columns, got {} value and {} mask columns",
                schema.len(),
                values.len(),
                observed.len()
            )));
        }
        let n = values.first().map_or(0, |v| v.len());
        for (j, c) in schema.columns().iter().enumerate() {
            if values[j].len() != n || observed[j].len() != n {
                return Err(Error::InvalidTable(format!(
                    "column `{}` has length {} but the table has {n} rows",
                    c.name,
                    values[j].len()
                )));
            }
            let must_observe = matches!(c.role, Role::Baseline | Role::Treatment);
            for i in 0..n {
                if observed[j][i] {
                    if !c.kind.accepts(values[j][i]) {
                        return Err(Error::InvalidTable(format!(
                            "value {} at row {i} is not valid for column `{}`",
                            values[j][i], c.name
                        )));
                    }
                } else {
                    if must_observe {
                        return Err(Error::MissingRequired {
                            row: i,
                            column: c.name.clone(),
                        });
                    }
                    values[j][i] = f64::NAN;
                }
            }
        }
        Ok(Self {
            schema,
            row_ids: (0..n).collect(),
            values,
            observed,
        })
    }

    /// A fully observed table.
    pub fn complete(schema: Arc<Schema>, values: Vec<Vec<f64>>) -> Result<Self> {
        let observed = values.iter().map(|c| vec![true; c.len()]).collect();
        Self::new(schema, values, observed)
    }

    /// Replaces the row identifiers (e.g. to join against a source table).
    pub fn with_row_ids(mut self, row_ids: Vec<usize>) -> Result<Self> {
        if row_ids.len() != self.n_rows() {
            return Err(Error::InvalidTable("row id length mismatch".into()));
        }
        self.row_ids = row_ids;
        Ok(self)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.schema.position(name)
    }

    /// Raw values of a column; unobserved cells are `NaN`.
    pub fn values(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn observed(&self, j: usize) -> &[bool] {
        &self.observed[j]
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.values[self.position(name)?])
    }

    pub fn mask(&self, name: &str) -> Result<&[bool]> {
        Ok(&self.observed[self.position(name)?])
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.observed[j][i].then(|| self.values[j][i])
    }

    /// Observed values of a column, in row order.
    pub fn observed_values(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.position(name)?;
        Ok(self.values[j]
            .iter()
            .zip(&self.observed[j])
            .filter(|(_, &o)| o)
            .map(|(&v, _)| v)
            .collect())
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed.iter().all(|c| c.iter().all(|&o| o))
    }

    /// Fraction of unobserved cells in a column.
    pub fn missing_fraction(&self, name: &str) -> Result<f64> {
        let m = self.mask(name)?;
        if m.is_empty() {
            return Ok(0.0);
        }
        Ok(m.iter().filter(|&&o| !o).count() as f64 / m.len() as f64)
    }

    /// Rows at the given positions, in the given order.
    pub fn select_rows(&self, positions: &[usize]) -> DataTable {
        let pick_f = |c: &Vec<f64>| positions.iter().map(|&i| c[i]).collect::<Vec<_>>();
        let pick_b = |c: &Vec<bool>| positions.iter().map(|&i| c[i]).collect::<Vec<_>>();
        DataTable {
            schema: self.schema.clone(),
            row_ids: positions.iter().map(|&i| self.row_ids[i]).collect(),
            values: self.values.iter().map(pick_f).collect(),
            observed: self.observed.iter().map(pick_b).collect(),
        }
    }

    /// Positions of rows observed on every named column.
    pub fn observed_positions(&self, required: &[&str]) -> Result<Vec<usize>> {
        let cols = required
            .iter()
            .map(|n| self.position(n))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.n_rows())
            .filter(|&i| cols.iter().all(|&j| self.observed[j][i]))
            .collect())
    }

    /// Rows where every mask entry is true, order preserved.
    pub fn complete_cases(&self) -> DataTable {
        let all: Vec<usize> = (0..self.n_rows())
            .filter(|&i| self.observed.iter().all(|c| c[i]))
            .collect();
        self.select_rows(&all)
    }

    /// Rows observed on every named column, order preserved.
    pub fn observed_subset(&self, required: &[&str]) -> Result<DataTable> {
        Ok(self.select_rows(&self.observed_positions(required)?))
    }

    /// Standardizes the named numeric columns using moments of their observed values.
    pub fn standardize(&self, columns: &[&str]) -> Result<(DataTable, StandardizationParams)> {
        let params = self.moments(columns)?;
        Ok((self.apply_standardization(&params)?, params))
    }

    /// Moments of the observed values of the named numeric columns.
    pub fn moments(&self, columns: &[&str]) -> Result<StandardizationParams> {
        let mut params = StandardizationParams::default();
        for name in columns {
            let j = self.position(name)?;
            if self.schema.column(j).kind.is_discrete() {
                return Err(Error::InvalidTable(format!(
                    "cannot standardize discrete column `{name}`"
                )));
            }
            let (mean, sd, n) = observed_moments(&self.values[j], &self.observed[j]);
            if n < 2 || !(sd > 0.0) {
                return Err(Error::ZeroVariance(name.to_string()));
            }
            params.columns.push(Moments {
                column: name.to_string(),
                mean,
                sd,
            });
        }
        Ok(params)
    }

    /// Applies given moments. Standardized columns are re-typed as continuous
    /// because a standardized count can be negative.
    pub fn apply_standardization(&self, params: &StandardizationParams) -> Result<DataTable> {
        let mut out = self.clone();
        let mut columns = self.schema.columns().to_vec();
        for m in &params.columns {
            let j = self.position(&m.column)?;
            columns[j].kind = ColumnKind::Continuous;
            for v in out.values[j].iter_mut() {
                *v = (*v - m.mean) / m.sd;
            }
        }
        out.schema = Arc::new(Schema::partial(columns)?);
        Ok(out)
    }

    /// Replaces the treatment column by a binary indicator of "not `baseline_arm`".
    pub fn dichotomize_treatment(&self, baseline_arm: &str) -> Result<DataTable> {
        let treatment = self.schema.treatment()?.clone();
        let j = self.position(&treatment.name)?;
        let levels = treatment
            .kind
            .levels()
            .ok_or_else(|| Error::Schema("treatment column must be discrete".into()))?;
        let reference = levels
            .iter()
            .position(|l| l == baseline_arm)
            .ok_or_else(|| Error::UnknownLevel {
                column: treatment.name.clone(),
                level: baseline_arm.to_string(),
            })?;
        if levels.len() == 2 && reference == 0 && treatment.kind == ColumnKind::Binary {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for v in out.values[j].iter_mut() {
            *v = if *v as usize == reference { 0.0 } else { 1.0 };
        }
        let mut columns = self.schema.columns().to_vec();
        columns[j].kind = ColumnKind::Binary;
        out.schema = Arc::new(Schema::new(columns.clone()).or_else(|_| Schema::partial(columns))?);
        Ok(out)
    }

    /// True when, along `Z_1, …, Z_K, Y`, a missing value is never followed by
    /// an observed one.
    pub fn is_monotone(&self) -> bool {
        let targets: Vec<usize> = self
            .schema
            .temporal_targets()
            .iter()
            .filter_map(|n| self.position(n).ok())
            .collect();
        (0..self.n_rows()).all(|i| {
            targets
                .windows(2)
                .all(|w| self.observed[w[0]][i] || !self.observed[w[1]][i])
        })
    }

    /// Copy with the given mask for one column; masked values become `NaN`.
    pub fn with_mask(&self, name: &str, mask: Vec<bool>) -> Result<DataTable> {
        let j = self.position(name)?;
        if mask.len() != self.n_rows() {
            return Err(Error::InvalidTable("mask length mismatch".into()));
        }
        let mut out = self.clone();
        for (i, &o) in mask.iter().enumerate() {
            if o && !self.observed[j][i] {
                return Err(Error::InvalidTable(format!(
                    "cannot reveal unobserved cell ({i}, `{name}`)"
                )));
            }
            if !o {
                out.values[j][i] = f64::NAN;
            }
        }
        if matches!(self.schema.column(j).role, Role::Baseline | Role::Treatment)
            && mask.iter().any(|&o| !o)
        {
            return Err(Error::InvalidTable(format!(
                "column `{name}` must stay fully observed"
            )));
        }
        out.observed[j] = mask;
        Ok(out)
    }

    /// Copy with one column's values and mask replaced.
    pub fn with_column(
        &self,
        name: &str,
        values: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<DataTable> {
        let j = self.position(name)?;
        let mut all_values = self.values.clone();
        let mut all_observed = self.observed.clone();
        all_values[j] = values;
        all_observed[j] = observed;
        DataTable::new(self.schema.clone(), all_values, all_observed)?
            .with_row_ids(self.row_ids.clone())
    }

    /// Copy restricted to the named columns, in the given order, without the
    /// trial-layout checks.
    pub fn project(&self, names: &[String]) -> Result<DataTable> {
        let idx = names
            .iter()
            .map(|n| self.position(n))
            .collect::<Result<Vec<_>>>()?;
        let columns = idx.iter().map(|&j| self.schema.column(j).clone()).collect();
        Ok(DataTable {
            schema: Arc::new(Schema::partial(columns)?),
            row_ids: self.row_ids.clone(),
            values: idx.iter().map(|&j| self.values[j].clone()).collect(),
            observed: idx.iter().map(|&j| self.observed[j].clone()).collect(),
        })
    }

    /// Display label of a cell, or `None` when unobserved.
    pub fn label(&self, i: usize, j: usize) -> Option<String> {
        let v = self.get(i, j)?;
        Some(match &self.schema.column(j).kind {
            ColumnKind::Categorical(levels) => levels[v as usize].clone(),
            ColumnKind::Binary => format!("{}", v as u8),
            _ => format!("{v}"),
        })
    }

    /// Reads a CSV. Extra columns in the file are ignored; every schema column
    /// must be present. A cell equal to `missing_token`, or empty, is missing.
    pub fn read_csv<R: Read>(reader: R, schema: Arc<Schema>, missing_token: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let source: Vec<usize> = schema
            .columns()
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h.trim() == c.name)
                    .ok_or_else(|| Error::UnknownColumn(c.name.clone()))
            })
            .collect::<Result<_>>()?;
        let p = schema.len();
        let mut values = vec![Vec::new(); p];
        let mut observed = vec![Vec::new(); p];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (j, c) in schema.columns().iter().enumerate() {
                let cell = record.get(source[j]).unwrap_or("").trim();
                if cell.is_empty() || cell == missing_token {
                    values[j].push(f64::NAN);
                    observed[j].push(false);
                    continue;
                }
                let v = parse_cell(&c.kind, cell).ok_or_else(|| Error::Parse {
                    row,
                    column: c.name.clone(),
                    message: format!("`{cell}` is not a valid {} value", kind_name(&c.kind)),
                })?;
                values[j].push(v);
                observed[j].push(true);
            }
        }
        Self::new(schema, values, observed)
    }

    pub fn load_csv(
        path: impl AsRef<Path>,
        schema: Arc<Schema>,
        missing_token: &str,
    ) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file), schema, missing_token)
    }

    /// Writes a CSV with a header of schema names. Reals use the shortest
    /// representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, writer: W, missing_token: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.schema.columns().iter().map(|c| c.name.as_str()))?;
        for i in 0..self.n_rows() {
            let record: Vec<String> = (0..self.n_cols())
                .map(|j| {
                    self.label(i, j)
                        .unwrap_or_else(|| missing_token.to_string())
                })
                .collect();
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, missing_token: &str) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file), missing_token)
    }
}

fn kind_name(kind: &ColumnKind) -> &'static str {
    match kind {
        ColumnKind::Continuous => "continuous",
        ColumnKind::Count => "count",
        ColumnKind::Binary => "binary",
        ColumnKind::Categorical(_) => "categorical",
    }
}

fn parse_cell(kind: &ColumnKind, cell: &str) -> Option<f64> {
    match kind {
        ColumnKind::Continuous => cell.parse::<f64>().ok().filter(|v| v.is_finite()),
        ColumnKind::Count => cell
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0),
        ColumnKind::Binary => match cell.parse::<f64>().ok()? {
            v if v == 0.0 => Some(0.0),
            v if v == 1.0 => Some(1.0),
            _ => None,
        },
        ColumnKind::Categorical(levels) => {
            if let Some(k) = levels.iter().position(|l| l == cell) {
                return Some(k as f64);
            }
            // R exports may write numeric labels as "1.0" for a level "1".
            let x = cell.parse::<f64>().ok()?;
            levels
                .iter()
                .position(|l| l.parse::<f64>().ok() == Some(x))
                .map(|k| k as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(vec![
                ColumnSchema::new("x", ColumnKind::Continuous, Role::Baseline),
                ColumnSchema::new(
                    "a",
                    ColumnKind::Categorical(vec!["0".into(), "1".into(), "2".into(), "3".into()]),
                    Role::Treatment,
                ),
                ColumnSchema::new("z1", ColumnKind::Count, Role::PostRandomization(1)),
                ColumnSchema::new("z2", ColumnKind::Count, Role::PostRandomization(2)),
                ColumnSchema::new("y", ColumnKind::Binary, Role::Outcome),
            ])
            .unwrap(),
        )
    }

    fn table(observed_z1: Vec<bool>, observed_y: Vec<bool>) -> DataTable {
        let n = observed_z1.len();
        let s = small_schema();
        let values = vec![
            (0..n).map(|i| i as f64).collect(),
            (0..n).map(|i| (i % 4) as f64).collect(),
            (0..n).map(|i| 10.0 * i as f64).collect(),
            (0..n).map(|i| 20.0 * i as f64).collect(),
            (0..n).map(|i| (i % 2) as f64).collect(),
        ];
        let observed = vec![
            vec![true; n],
            vec![true; n],
            observed_z1,
            vec![true; n],
            observed_y,
        ];
        DataTable::new(s, values, observed).unwrap()
    }

    #[test]
    fn schema_requires_trial_layout() {
        let bad = Schema::new(vec![ColumnSchema::new(
            "x",
            ColumnKind::Continuous,
            Role::Baseline,
        )]);
        assert!(bad.is_err());
        let gap = Schema::new(vec![
            ColumnSchema::new("a", ColumnKind::Binary, Role::Treatment),
            ColumnSchema::new("z2", ColumnKind::Count, Role::PostRandomization(2)),
            ColumnSchema::new("y", ColumnKind::Binary, Role::Outcome),
        ]);
        assert!(gap.is_err());
        let dup_level = Schema::partial(vec![ColumnSchema::new(
            "c",
            ColumnKind::Categorical(vec!["a".into(), "a".into()]),
            Role::Baseline,
        )]);
        assert!(dup_level.is_err());
    }

    #[test]
    fn schema_round_trips_through_toml() {
        let s = small_schema();
        let text = toml::to_string(&*s).unwrap();
        let back: Schema = toml::from_str(&text).unwrap();
        assert_eq!(*s, back);
        assert_eq!(back.temporal_targets(), vec!["z1", "z2", "y"]);
    }

    #[test]
    fn complete_cases_drops_rows_with_any_missing_cell() {
        let t = table(vec![true, false, true], vec![true, true, true]);
        let cc = t.complete_cases();
        assert_eq!(cc.row_ids(), &[0, 2]);
        let all = table(vec![true; 3], vec![true; 3]);
        assert_eq!(all.complete_cases(), all);
    }

    #[test]
    fn observed_subset_is_intersection() {
        let t = table(vec![true, false, true, true], vec![false, true, true, true]);
        assert_eq!(t.observed_subset(&["z1", "y"]).unwrap().row_ids(), &[2, 3]);
        assert_eq!(t.observed_subset(&[]).unwrap(), t);
        assert!(t.observed_subset(&["nope"]).is_err());
    }

    #[test]
    fn standardize_hand_example() {
        let s = Arc::new(
            Schema::partial(vec![ColumnSchema::new(
                "x",
                ColumnKind::Continuous,
                Role::Baseline,
            )])
            .unwrap(),
        );
        let t = DataTable::complete(s, vec![vec![2.0, 4.0, 6.0]]).unwrap();
        let (z, p) = t.standardize(&["x"]).unwrap();
        assert_eq!(z.column("x").unwrap(), &[-1.0, 0.0, 1.0]);
        assert_eq!(p.columns[0].sd, 2.0);
        let back = p.invert(&z).unwrap();
        assert_eq!(back.column("x").unwrap(), t.column("x").unwrap());
    }

    #[test]
    fn standardize_ignores_masked_cells() {
        let t = table(vec![true, false, true, true], vec![true; 4]);
        let (_, p) = t.standardize(&["z1"]).unwrap();
        let obs = [0.0, 20.0, 30.0];
        let mean = obs.iter().sum::<f64>() / 3.0;
        assert!((p.columns[0].mean - mean).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_is_rejected() {
        let s = Arc::new(
            Schema::partial(vec![ColumnSchema::new(
                "x",
                ColumnKind::Continuous,
                Role::Baseline,
            )])
            .unwrap(),
        );
        let t = DataTable::complete(s, vec![vec![3.0, 3.0]]).unwrap();
        assert!(matches!(t.standardize(&["x"]), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn dichotomize_pools_non_baseline_arms() {
        let s = small_schema();
        let arms: Vec<f64> = [300, 350, 340, 352]
            .iter()
            .enumerate()
            .flat_map(|(k, &c)| std::iter::repeat(k as f64).take(c))
            .collect();
        let n = arms.len();
        let values = vec![vec![0.0; n], arms, vec![1.0; n], vec![1.0; n], vec![0.0; n]];
        let t = DataTable::complete(s, values).unwrap();
        let d = t.dichotomize_treatment("0").unwrap();
        let a = d.column("a").unwrap();
        assert_eq!(a.iter().filter(|&&v| v == 0.0).count(), 300);
        assert_eq!(a.iter().filter(|&&v| v == 1.0).count(), 1042);
        assert_eq!(d.schema().get("a").unwrap().kind, ColumnKind::Binary);
        assert_eq!(d.dichotomize_treatment("0").unwrap(), d);
        assert!(t.dichotomize_treatment("9").is_err());
    }

    #[test]
    fn monotone_predicate() {
        let mut t = table(vec![true, false], vec![true, false]);
        assert!(!t.is_monotone(), "z2 observed after z1 missing");
        t = t.with_mask("z2", vec![true, false]).unwrap();
        assert!(t.is_monotone());
    }

    #[test]
    fn csv_round_trip_with_missing_token() {
        let t = table(vec![true, true, true], vec![true, true, true])
            .with_mask("z2", vec![true, false, true])
            .unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, "NA").unwrap();
        let back = DataTable::read_csv(&buf[..], t.schema_arc().clone(), "NA").unwrap();
        assert_eq!(back, t);
        assert_eq!(back.mask("z2").unwrap(), &[true, false, true]);
    }

    #[test]
    fn header_only_csv_is_empty_table() {
        let back = DataTable::read_csv(&b"x,a,z1,z2,y\n"[..], small_schema(), "NA").unwrap();
        assert_eq!(back.n_rows(), 0);
    }

    #[test]
    fn missing_baseline_is_a_hard_error() {
        let text = "x,a,z1,z2,y\n1,0,1,1,0\nNA,1,1,1,0\n";
        match DataTable::read_csv(text.as_bytes(), small_schema(), "NA") {
            Err(Error::MissingRequired { row, column }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "x");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_report_position() {
        let text = "x,a,z1,z2,y\n1,0,1,1,0\n1,7,1,1,0\n";
        match DataTable::read_csv(text.as_bytes(), small_schema(), "NA") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
