//! Drawing outcomes from fitted models: admissible residual sampling and
//! Bernoulli draws.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// For each prediction, adds a residual drawn uniformly (with replacement
/// across rows) from those keeping the value at or above `threshold`.
pub fn sample_admissible(
    predicted: &[f64],
    residual_pool: &[f64],
    threshold: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let (values, empty) = sample_admissible_or_clamp(predicted, residual_pool, threshold, rng)?;
    match empty.first() {
        Some(&index) => Err(Error::EmptyAdmissibleSet { index }),
        None => Ok(values),
    }
}

/// Like [`sample_admissible`], but a prediction with no admissible residual
/// is set to `threshold` and its index reported instead of failing.
pub fn sample_admissible_or_clamp(
    predicted: &[f64],
    residual_pool: &[f64],
    threshold: f64,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if residual_pool.is_empty() {
        return Err(Error::EmptyAdmissibleSet { index: 0 });
    }
    let mut sorted = residual_pool.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut empty = Vec::new();
    let values = predicted
        .iter()
        .enumerate()
        .map(|(i, &yhat)| {
            // Admissible residuals form a suffix of the sorted pool.
            let first = sorted.partition_point(|&r| !(yhat + r >= threshold));
            if first == sorted.len() {
                empty.push(i);
                return threshold;
            }
            yhat + sorted[rng.random_range(first..sorted.len())]
        })
        .collect();
    Ok((values, empty))
}

/// Independent Bernoulli draws.
pub fn draw_bernoulli(probabilities: &[f64], rng: &mut Rng) -> Vec<bool> {
    probabilities
        .iter()
        .map(|&p| rng.random::<f64>() < p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn three_element_pool_is_uniform() {
        let mut rng = seeded(1);
        let mut counts = [0usize; 3];
        let draws = 30_000;
        for _ in 0..draws {
            let v = sample_admissible(&[100.0], &[-5.0, 0.0, 5.0], 0.0, &mut rng).unwrap()[0];
            counts[((v - 95.0) / 5.0) as usize] += 1;
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn only_admissible_residual_is_used() {
        let mut rng = seeded(2);
        for _ in 0..100 {
            assert_eq!(
                sample_admissible(&[1.0], &[-10.0, 2.0], 0.0, &mut rng).unwrap(),
                vec![3.0]
            );
        }
    }

    #[test]
    fn empty_admissible_set_reports_index() {
        let mut rng = seeded(3);
        match sample_admissible(&[5.0, 0.0], &[-1.0, -2.0], 0.0, &mut rng) {
            Err(Error::EmptyAdmissibleSet { index }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        let (v, empty) =
            sample_admissible_or_clamp(&[5.0, 0.0], &[-1.0, -2.0], 0.0, &mut rng).unwrap();
        assert_eq!(empty, vec![1]);
        assert_eq!(v[1], 0.0);
        assert!(v[0] >= 3.0);
    }

    #[test]
    fn bernoulli_extremes_and_mean() {
        let mut rng = seeded(4);
        assert_eq!(draw_bernoulli(&[0.0, 1.0], &mut rng), vec![false, true]);
        let n = 100_000;
        let mean = draw_bernoulli(&vec![0.5; n], &mut rng)
            .iter()
            .filter(|&&b| b)
            .count() as f64
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        let a = draw_bernoulli(&vec![0.3; 50], &mut seeded(9));
        let b = draw_bernoulli(&vec![0.3; 50], &mut seeded(9));
        assert_eq!(a, b);
    }
}
