use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Population variance over time per dimension, averaged over dimensions.
pub fn variation<T: Copy + Into<f64>>(seq: ArrayView2<T>) -> f64 {
    let (t, d) = seq.dim();
    if t == 0 || d == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for col in seq.columns() {
        let mean = col.iter().map(|&v| v.into()).sum::<f64>() / t as f64;
        total += col.iter().map(|&v| (v.into() - mean).powi(2)).sum::<f64>() / t as f64;
    }
    total / d as f64
}

/// Shannon index (base 2) of a probability vector; `0 log 0 = 0`.
pub fn sid_from_distribution(dist: &[f64]) -> Result<f64> {
    if dist.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(Error::invalid("distribution has negative or non-finite entries"));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("distribution sums to {total}, expected 1")));
    }
    Ok(-dist.iter().filter(|&&c| c > 0.0).map(|&c| c * c.log2()).sum::<f64>())
}

/// Shannon index of the cluster-label histogram of one sequence.
pub fn sid_from_labels(labels: &[usize], k: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("no labels"));
    }
    let mut hist = vec![0usize; k.max(labels.iter().max().map_or(0, |m| m + 1))];
    for &l in labels {
        hist[l] += 1;
    }
    let n = labels.len() as f64;
    let dist: Vec<f64> = hist.iter().map(|&c| c as f64 / n).collect();
    Ok(-dist.iter().filter(|&&c| c > 0.0).map(|&c| c * c.log2()).sum::<f64>())
}
