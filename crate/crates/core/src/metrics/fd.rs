//! Fréchet distance between Gaussian fits of two sample sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Ridge added to both covariances before taking square roots.
pub const FD_RIDGE: f64 = 1e-6;
const NEGATIVE_RESIDUE: f64 = 1e-6;

/// Mean and population covariance of a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn fit<T: Copy + Into<f64>>(samples: ArrayView2<T>) -> Result<Self> {
        let (n, d) = samples.dim();
        if d == 0 {
            return Err(Error::invalid("Fréchet distance needs d >= 1"));
        }
        if n < 2 {
            return Err(Error::invalid("Fréchet distance needs at least 2 samples"));
        }
        let mut mean = DVector::zeros(d);
        for row in samples.rows() {
            for (j, &v) in row.iter().enumerate() {
                mean[j] += v.into();
            }
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        let mut centered = DVector::zeros(d);
        for row in samples.rows() {
            for (j, &v) in row.iter().enumerate() {
                centered[j] = v.into() - mean[j];
            }
            cov.ger(1.0, &centered, &centered, 1.0);
        }
        cov /= n as f64;
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn trace_sqrt_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr (A B)^{1/2} == tr (A^{1/2} B A^{1/2})^{1/2}, and the latter is symmetric PSD.
    let sa = psd_sqrt(a);
    let m = &sa * b * &sa;
    let sym = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum()
}

pub fn frechet_distance_stats(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("FD dims {} vs {}", a.dim(), b.dim())));
    }
    let d = a.dim();
    let ridge = DMatrix::<f64>::identity(d, d) * FD_RIDGE;
    let ca = &a.cov + &ridge;
    let cb = &b.cov + &ridge;
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let fd = mean_term + ca.trace() + cb.trace() - 2.0 * trace_sqrt_product(&ca, &cb);
    if fd < 0.0 && fd > -NEGATIVE_RESIDUE {
        return Ok(0.0);
    }
    Ok(fd)
}

/// FD between two sample sets (rows are samples).
pub fn frechet_distance<T: Copy + Into<f64>>(a: ArrayView2<T>, b: ArrayView2<T>) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::shape(format!("FD widths {} vs {}", a.ncols(), b.ncols())));
    }
    frechet_distance_stats(&GaussianStats::fit(a)?, &GaussianStats::fit(b)?)
}
