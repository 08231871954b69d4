//! Seeded Lloyd's k-means with k-means++ initialization.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Array2<f64>,
    pub fit_seed: u64,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid; ties go to the lowest index.
fn nearest(centroids: &Array2<f64>, x: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn assign(&self, data: ArrayView2<f64>) -> Vec<usize> {
        data.rows().into_iter().map(|r| nearest(&self.centroids, r).0).collect()
    }

    pub fn inertia(&self, data: ArrayView2<f64>) -> f64 {
        data.rows().into_iter().map(|r| nearest(&self.centroids, r).1).sum()
    }
}

pub fn kmeans_assign(model: &ClusterModel, data: ArrayView2<f64>) -> Vec<usize> {
    model.assign(data)
}

fn plus_plus_init(data: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(((rng.gen::<f64>() * n as f64) as usize).min(n - 1));
    let mut d2: Vec<f64> = data.rows().into_iter().map(|r| sq_dist(r, data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let u = rng.gen::<f64>();
        let pick = if total > 0.0 {
            let target = u * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            ((u * n as f64) as usize).min(n - 1)
        };
        chosen.push(pick);
        for (i, r) in data.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, data.row(pick)));
        }
    }
    let mut c = Array2::zeros((k, data.ncols()));
    for (row, &i) in chosen.iter().enumerate() {
        c.row_mut(row).assign(&data.row(i));
    }
    c
}

pub fn kmeans_fit(data: ArrayView2<f64>, k: usize, iters: usize, seed: u64) -> Result<ClusterModel> {
    let (n, d) = data.dim();
    if k == 0 {
        return Err(Error::invalid("k-means needs K >= 1"));
    }
    if n < k {
        return Err(Error::invalid(format!("k-means needs N >= K (N={n}, K={k})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(data, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..iters {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, r) in data.rows().into_iter().enumerate() {
            let (lbl, dist) = nearest(&centroids, r);
            dists[i] = dist;
            if labels[i] != lbl {
                labels[i] = lbl;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, r) in data.rows().into_iter().enumerate() {
            let mut s = sums.row_mut(labels[i]);
            s += &r;
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = centroids.row_mut(c);
                row.assign(&sums.row(c));
                row /= counts[c] as f64;
            } else {
                // Empty cluster: move it onto the point farthest from its centroid.
                let far = dists
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0;
                centroids.row_mut(c).assign(&data.row(far));
                dists[far] = 0.0;
            }
        }
    }
    Ok(ClusterModel {
        centroids,
        fit_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn n_equals_k_gives_zero_inertia() {
        let data = array![[0.0, 0.0], [1.0, 5.0], [-3.0, 2.0], [7.0, 7.0]];
        let m = kmeans_fit(data.view(), 4, 100, 3).unwrap();
        assert_eq!(m.inertia(data.view()), 0.0);
        let mut labels = m.assign(data.view());
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicated_dataset_gives_same_centroids() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = Normal::new(0.0, 1.0).unwrap();
        let data = Array2::from_shape_fn((30, 3), |_| n.sample(&mut rng));
        let doubled = Array2::from_shape_fn((60, 3), |(i, j)| data[[i / 2, j]]);
        let a = kmeans_fit(data.view(), 4, 100, 9).unwrap();
        let b = kmeans_fit(doubled.view(), 4, 100, 9).unwrap();
        for (x, y) in a.centroids.iter().zip(b.centroids.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn separated_blobs_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, 0.1).unwrap();
        let data = Array2::from_shape_fn((100, 2), |(i, _)| {
            (if i < 50 { -10.0 } else { 10.0 }) + n.sample(&mut rng)
        });
        let m = kmeans_fit(data.view(), 2, 100, 0).unwrap();
        let labels = m.assign(data.view());
        assert!(labels[..50].iter().all(|&l| l == labels[0]));
        assert!(labels[50..].iter().all(|&l| l == labels[50]));
        assert_ne!(labels[0], labels[50]);
    }

    #[test]
    fn too_few_points() {
        let data = array![[0.0], [1.0]];
        assert!(kmeans_fit(data.view(), 3, 10, 0).is_err());
        assert!(kmeans_fit(data.view(), 0, 10, 0).is_err());
    }

    #[test]
    fn deterministic_and_ties_to_lowest() {
        let m = ClusterModel {
            centroids: array![[0.0], [2.0]],
            fit_seed: 0,
        };
        assert_eq!(m.assign(array![[1.0]].view()), vec![0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = Array2::from_shape_fn((50, 4), |_| rng.gen::<f64>());
        assert_eq!(kmeans_fit(data.view(), 5, 50, 2).unwrap(), kmeans_fit(data.view(), 5, 50, 2).unwrap());
        let _ = data.sum_axis(Axis(0));
    }
}
