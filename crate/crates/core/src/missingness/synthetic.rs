//! Observation indicators for synthetic tables, drawn from fitted models.

use std::collections::BTreeMap;

use super::Pattern;
use crate::error::{Result, Stratum};
use crate::regression::{draw_bernoulli, FittedRegression};
use crate::rng::Rng;
use crate::table::DataTable;

/// How the observation probability of one synthetic variable is obtained.
#[derive(Clone, Debug)]
pub enum ObservationModel {
    /// Always observed.
    Always,
    /// A fitted logistic model of the observation indicator.
    Fitted(FittedRegression),
    /// Product of two fitted probabilities.
    Product(Box<FittedRegression>, Box<FittedRegression>),
}

/// Observation model for one target column.
#[derive(Clone, Debug)]
pub struct SyntheticMissingnessModel {
    pub target: String,
    pub model: ObservationModel,
}

/// Constraints carried over from the synthesis of the complete table.
#[derive(Clone, Debug, Default)]
pub struct SyntheticOptions {
    /// For each row, the measurement rank from which it must be missing, if any.
    pub forced_from: Vec<Option<usize>>,
    /// Indicators already drawn during synthesis, keyed by target. These are
    /// used as the draw for that target instead of a fresh one.
    pub drawn: BTreeMap<String, Vec<bool>>,
}

/// A categorical level met while predicting that the model never saw.
#[derive(Clone, Debug, PartialEq)]
pub struct UnseenEvent {
    pub stage: String,
    pub stratum: Stratum,
    pub rows: usize,
}

#[derive(Clone, Debug)]
pub struct SyntheticMissingness {
    pub table: DataTable,
    pub unseen: Vec<UnseenEvent>,
}

/// Draws observation indicators for a complete synthetic table.
///
/// Targets listed in [`SyntheticOptions::drawn`] keep those indicators.
/// Models are applied in measurement order. Indicator covariates see the
/// indicators drawn so far. In the monotone pattern a draw only applies to rows
/// whose previous target is observed, so fitted conditional models give the
/// intended joint probabilities. A row whose level a model cannot represent is
/// missing for that target and every later one.
pub fn generate_synthetic_missingness(
    models: &[SyntheticMissingnessModel],
    synthetic: &DataTable,
    pattern: Pattern,
    options: &SyntheticOptions,
    rng: &mut Rng,
) -> Result<SyntheticMissingness> {
    let n = synthetic.n_rows();
    let schema = synthetic.schema();
    let mut forced: Vec<Option<usize>> = if options.forced_from.len() == n {
        options.forced_from.clone()
    } else {
        vec![None; n]
    };
    let mut ordered: Vec<(usize, &SyntheticMissingnessModel)> = models
        .iter()
        .map(|m| Ok((schema.temporal_rank(&m.target)?, m)))
        .collect::<Result<_>>()?;
    ordered.sort_by_key(|(r, _)| *r);

    let mut masks: Vec<Vec<bool>> = (0..synthetic.n_cols())
        .map(|j| synthetic.observed(j).to_vec())
        .collect();
    let mut unseen = Vec::new();
    let mut previous: Option<usize> = None;
    for (rank, m) in ordered {
        let j = synthetic.position(&m.target)?;
        let mut record = |pred: crate::regression::Prediction, forced: &mut Vec<Option<usize>>| {
            for (stratum, rows) in pred.unseen {
                for &i in &rows {
                    forced[i] = Some(forced[i].map_or(rank, |f| f.min(rank)));
                }
                unseen.push(UnseenEvent {
                    stage: m.target.clone(),
                    stratum,
                    rows: rows.len(),
                });
            }
            pred.values
        };
        let drawn = options.drawn.get(&m.target).filter(|d| d.len() == n);
        let p = match (&m.model, drawn) {
            (_, Some(_)) | (ObservationModel::Always, None) => vec![1.0; n],
            (ObservationModel::Fitted(f), None) => {
                record(f.predict_lenient(synthetic, Some(&masks))?, &mut forced)
            }
            (ObservationModel::Product(f1, f2), None) => {
                let a = record(f1.predict_lenient(synthetic, Some(&masks))?, &mut forced);
                let b = record(f2.predict_lenient(synthetic, Some(&masks))?, &mut forced);
                a.into_iter().zip(b).map(|(x, y)| x * y).collect()
            }
        };
        let mut r = match drawn {
            Some(d) => d.clone(),
            None => draw_bernoulli(&p, rng),
        };
        for i in 0..n {
            if forced[i].is_some_and(|f| rank >= f) {
                r[i] = false;
            }
            if pattern == Pattern::Monotone {
                if let Some(pj) = previous {
                    r[i] &= masks[pj][i];
                }
            }
            r[i] &= synthetic.observed(j)[i];
        }
        masks[j] = r;
        previous = Some(j);
    }

    let mut table = synthetic.clone();
    for m in models {
        let j = table.position(&m.target)?;
        table = table.with_mask(&m.target, masks[j].clone())?;
    }
    Ok(SyntheticMissingness { table, unseen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::missingness::{fit_missingness_model, RowSelection};
    use crate::regression::Term;
    use crate::rng::seeded;
    use crate::table::{ColumnKind, ColumnSchema, Role, Schema};
    use rand::Rng as _;
    use std::sync::Arc;

    fn table(n: usize, seed: u64, z_obs: f64, y_obs: f64, monotone: bool) -> DataTable {
        let schema = Arc::new(
            Schema::new(vec![
                ColumnSchema::new(
                    "g",
                    ColumnKind::Categorical(vec!["a".into(), "b".into(), "c".into()]),
                    Role::Baseline,
                ),
                ColumnSchema::new("a", ColumnKind::Binary, Role::Treatment),
                ColumnSchema::new("z", ColumnKind::Continuous, Role::PostRandomization(1)),
                ColumnSchema::new("y", ColumnKind::Binary, Role::Outcome),
            ])
            .unwrap(),
        );
        let mut rng = seeded(seed);
        let mut v = vec![Vec::new(); 4];
        let mut o = vec![Vec::new(); 4];
        for _ in 0..n {
            v[0].push(rng.random_range(0..2) as f64);
            v[1].push(rng.random_range(0..2) as f64);
            v[2].push(rng.random::<f64>());
            v[3].push(rng.random_range(0..2) as f64);
            let rz = rng.random::<f64>() < z_obs;
            let ry = rng.random::<f64>() < y_obs && (!monotone || rz);
            o[0].push(true);
            o[1].push(true);
            o[2].push(rz);
            o[3].push(ry);
        }
        for j in 2..4 {
            for i in 0..n {
                if !o[j][i] {
                    v[j][i] = f64::NAN;
                }
            }
        }
        DataTable::new(schema, v, o).unwrap()
    }

    fn complete_with_level_c(n: usize) -> DataTable {
        let t = table(n, 99, 1.0, 1.0, false);
        let mut g: Vec<f64> = t.column("g").unwrap().to_vec();
        g[0] = 2.0;
        g[1] = 2.0;
        t.with_column("g", g, vec![true; n]).unwrap()
    }

    #[test]
    fn always_keeps_table_complete() {
        let t = table(200, 1, 1.0, 1.0, false);
        let models = vec![SyntheticMissingnessModel {
            target: "z".into(),
            model: ObservationModel::Always,
        }];
        let out = generate_synthetic_missingness(
            &models,
            &t,
            Pattern::NonMonotone,
            &Default::default(),
            &mut seeded(2),
        )
        .unwrap();
        assert!(out.table.is_fully_observed());
    }

    #[test]
    fn fitted_models_reproduce_rates() {
        let real = table(20_000, 3, 0.7, 0.6, true);
        let fz = fit_missingness_model(
            &real,
            "z",
            vec![Term::Main("g".into())],
            &RowSelection::All,
            false,
            Default::default(),
        )
        .unwrap();
        let fy = fit_missingness_model(
            &real,
            "y",
            vec![Term::Main("g".into())],
            &RowSelection::ObservedOn("z".into()),
            false,
            Default::default(),
        )
        .unwrap();
        let synth = table(20_000, 4, 1.0, 1.0, false);
        let models = vec![
            SyntheticMissingnessModel {
                target: "y".into(),
                model: ObservationModel::Fitted(fy),
            },
            SyntheticMissingnessModel {
                target: "z".into(),
                model: ObservationModel::Fitted(fz),
            },
        ];
        let out = generate_synthetic_missingness(
            &models,
            &synth,
            Pattern::Monotone,
            &Default::default(),
            &mut seeded(5),
        )
        .unwrap();
        assert!(out.table.is_monotone());
        assert!((out.table.missing_fraction("z").unwrap() - 0.3).abs() < 0.015);
        assert!((out.table.missing_fraction("y").unwrap() - 0.58).abs() < 0.015);
    }

    #[test]
    fn unseen_level_forces_missing_onward() {
        let real = table(2000, 6, 0.7, 0.7, false);
        let fz = fit_missingness_model(
            &real,
            "z",
            vec![Term::Main("g".into())],
            &RowSelection::All,
            false,
            Default::default(),
        )
        .unwrap();
        let synth = complete_with_level_c(300);
        let models = vec![
            SyntheticMissingnessModel {
                target: "z".into(),
                model: ObservationModel::Fitted(fz),
            },
            SyntheticMissingnessModel {
                target: "y".into(),
                model: ObservationModel::Always,
            },
        ];
        let out = generate_synthetic_missingness(
            &models,
            &synth,
            Pattern::NonMonotone,
            &Default::default(),
            &mut seeded(7),
        )
        .unwrap();
        assert_eq!(out.unseen.len(), 1);
        assert_eq!(out.unseen[0].rows, 2);
        assert_eq!(out.unseen[0].stratum.to_string(), "g=c");
        for i in 0..2 {
            assert!(!out.table.mask("z").unwrap()[i]);
            assert!(!out.table.mask("y").unwrap()[i]);
        }
    }

    #[test]
    fn forced_rows_from_option() {
        let synth = table(10, 8, 1.0, 1.0, false);
        let models = vec![
            SyntheticMissingnessModel {
                target: "z".into(),
                model: ObservationModel::Always,
            },
            SyntheticMissingnessModel {
                target: "y".into(),
                model: ObservationModel::Always,
            },
        ];
        let mut forced = vec![None; 10];
        forced[3] = Some(2);
        let opts = SyntheticOptions {
            forced_from: forced,
            ..Default::default()
        };
        let out = generate_synthetic_missingness(
            &models,
            &synth,
            Pattern::NonMonotone,
            &opts,
            &mut seeded(9),
        )
        .unwrap();
        assert!(out.table.mask("z").unwrap()[3]);
        assert!(!out.table.mask("y").unwrap()[3]);
        assert_eq!(
            out.table.mask("y").unwrap().iter().filter(|&&o| !o).count(),
            1
        );
    }

    #[test]
    fn drawn_indicators_are_kept() {
        let synth = table(50, 10, 1.0, 1.0, false);
        let models = vec![SyntheticMissingnessModel {
            target: "z".into(),
            model: ObservationModel::Always,
        }];
        let pre: Vec<bool> = (0..50).map(|i| i % 3 != 0).collect();
        let opts = SyntheticOptions {
            drawn: [("z".to_string(), pre.clone())].into_iter().collect(),
            ..Default::default()
        };
        let out = generate_synthetic_missingness(
            &models,
            &synth,
            Pattern::NonMonotone,
            &opts,
            &mut seeded(11),
        )
        .unwrap();
        assert_eq!(out.table.mask("z").unwrap(), &pre[..]);
    }
}
