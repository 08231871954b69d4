use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Pearson correlation; 0 when either signal has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n == 0 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

pub fn pcc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("pcc inputs differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("pcc needs at least 2 samples"));
    }
    Ok(pearson(x, y))
}

/// Correlation over time for each feature column.
pub fn pcc_per_dim(x: ArrayView2<f32>, y: ArrayView2<f32>) -> Result<Vec<f64>> {
    if x.dim() != y.dim() {
        return Err(Error::shape(format!("pcc shapes {:?} vs {:?}", x.dim(), y.dim())));
    }
    (0..x.ncols())
        .map(|j| {
            let a: Vec<f64> = x.column(j).iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = y.column(j).iter().map(|&v| v as f64).collect();
            pcc(&a, &b)
        })
        .collect()
}

pub fn pcc_mean(x: ArrayView2<f32>, y: ArrayView2<f32>) -> Result<f64> {
    let per = pcc_per_dim(x, y)?;
    Ok(per.iter().sum::<f64>() / per.len().max(1) as f64)
}

/// Mean absolute difference between predicted and reference correlations.
pub fn rpcc(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::shape("rpcc inputs must be non-empty and equally long"));
    }
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn identities() {
        let x = [0.3, 1.7, -2.0, 4.0];
        assert!((pcc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pcc(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pcc(&[1., 2., 3.], &[2., 4., 6.]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rpcc(&[0.2, -0.4], &[0.2, -0.4]).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_and_errors() {
        assert_eq!(pcc(&[1., 1., 1.], &[1., 2., 3.]).unwrap(), 0.0);
        assert!(pcc(&[1.], &[1.]).is_err());
        assert!(pcc(&[1., 2.], &[1.]).is_err());
    }

    #[test]
    fn per_dim_averages_columns() {
        let x = Array2::from_shape_fn((5, 2), |(t, j)| if j == 0 { t as f32 } else { (t * t) as f32 });
        let mut y = x.clone();
        y.column_mut(1).mapv_inplace(|v| -v);
        let per = pcc_per_dim(x.view(), y.view()).unwrap();
        assert!((per[0] - 1.0).abs() < 1e-12 && (per[1] + 1.0).abs() < 1e-12);
        assert!(pcc_mean(x.view(), y.view()).unwrap().abs() < 1e-12);
    }
}
