//! Univariate and bivariate similarity scores. Every score lies in `[0, 1]`
//! and equals one when the two samples agree.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn nonempty(len: usize, what: &str) -> Result<()> {
    if len == 0 {
        Err(Error::Metric(format!("{what}: empty input")))
    } else {
        Ok(())
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// One minus the two-sample Kolmogorov-Smirnov statistic: the largest gap
/// between the empirical CDFs over the pooled sample points.
pub fn ks_complement(real: &[f64], synth: &[f64]) -> Result<f64> {
    nonempty(real.len().min(synth.len()), "ks_complement")?;
    let (a, b) = (sorted(real), sorted(synth));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    // Once one sample is exhausted its CDF is 1; the other's only rises.
    sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    Ok(1.0 - sup)
}

/// Relative frequency of each label.
pub fn frequencies<T: Ord + Clone>(labels: &[T]) -> BTreeMap<T, f64> {
    let mut counts = BTreeMap::new();
    for l in labels {
        *counts.entry(l.clone()).or_insert(0.0) += 1.0;
    }
    let n = labels.len() as f64;
    counts.values_mut().for_each(|c| *c /= n);
    counts
}

/// One minus the total variation distance between the label distributions,
/// over the union of labels seen in either sample.
pub fn tvd_complement<T: Ord + Clone>(real: &[T], synth: &[T]) -> Result<f64> {
    nonempty(real.len().min(synth.len()), "tvd_complement")?;
    let (fr, fs) = (frequencies(real), frequencies(synth));
    let mut total = 0.0;
    for (k, p) in &fr {
        total += (p - fs.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, q) in &fs {
        if !fr.contains_key(k) {
            total += q;
        }
    }
    Ok((1.0 - 0.5 * total).clamp(0.0, 1.0))
}

/// Ranks starting at 1, with ties given their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && v[order[end]] == v[order[k]] {
            end += 1;
        }
        let rank = (k + end + 1) as f64 / 2.0;
        for &i in &order[k..end] {
            ranks[i] = rank;
        }
        k = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Metric("spearman: length mismatch".into()));
    }
    if x.len() < 3 {
        return Err(Error::Metric("spearman: fewer than three pairs".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::Metric("spearman: constant column".into()))
}

/// `1 − |ρ_real − ρ_synth| / 2` for Spearman correlations.
pub fn spearman_similarity(real: (&[f64], &[f64]), synth: (&[f64], &[f64])) -> Result<f64> {
    let r = spearman(real.0, real.1)?;
    let s = spearman(synth.0, synth.1)?;
    Ok(1.0 - 0.5 * (r - s).abs())
}

/// One minus half the summed absolute difference of the two-way cell
/// proportions, over the union of cells.
pub fn contingency_similarity<A: Ord + Clone, B: Ord + Clone>(
    real: (&[A], &[B]),
    synth: (&[A], &[B]),
) -> Result<f64> {
    if real.0.len() != real.1.len() || synth.0.len() != synth.1.len() {
        return Err(Error::Metric("contingency_similarity: length mismatch".into()));
    }
    let cells = |a: &[A], b: &[B]| -> Vec<(A, B)> { a.iter().cloned().zip(b.iter().cloned()).collect() };
    tvd_complement(&cells(real.0, real.1), &cells(synth.0, synth.1))
}

/// Sample quantile with linear interpolation between order statistics
/// (position `(n − 1) p`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartile cut points of a reference sample.
pub fn quartile_cuts(reference: &[f64]) -> Result<[f64; 3]> {
    nonempty(reference.len(), "quartile_cuts")?;
    let s = sorted(reference);
    Ok([quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75)])
}

/// Bin index of `v` given increasing cut points; a value equal to a cut
/// point goes to the lower bin.
pub fn bin(v: f64, cuts: &[f64]) -> usize {
    cuts.iter().filter(|&&c| v > c).count()
}
