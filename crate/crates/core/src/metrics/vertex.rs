//! Vertex-space metrics (LVE, FDD) and a linear blendshape proxy that maps
//! motion coefficients to a small synthetic face mesh.

use ndarray::{Array2, Array3, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{MotionSequence, MOTION_DIM};
use crate::error::{Error, Result};

/// `vertex = template + basis · coefficients`, fixed per seed.
#[derive(Debug, Clone)]
pub struct VertexProxy {
    template: Array2<f64>,
    basis: Array3<f64>,
}

impl VertexProxy {
    pub fn new(n_vertices: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let coef = Normal::new(0.0, (1.0 / MOTION_DIM as f64).sqrt()).unwrap();
        let template = Array2::from_shape_fn((n_vertices, 3), |_| unit.sample(&mut rng));
        let basis = Array3::from_shape_fn((n_vertices, 3, MOTION_DIM), |_| coef.sample(&mut rng));
        Self { template, basis }
    }

    pub fn n_vertices(&self) -> usize {
        self.template.nrows()
    }

    /// T × V × 3 vertex positions.
    pub fn vertices(&self, motion: &MotionSequence) -> Array3<f64> {
        let frames = motion.frames();
        let (t_len, v_len) = (frames.nrows(), self.n_vertices());
        let mut out = Array3::zeros((t_len, v_len, 3));
        for t in 0..t_len {
            for v in 0..v_len {
                for c in 0..3 {
                    let mut acc = self.template[[v, c]];
                    for k in 0..MOTION_DIM {
                        acc += self.basis[[v, c, k]] * frames[[t, k]] as f64;
                    }
                    out[[t, v, c]] = acc;
                }
            }
        }
        out
    }
}

fn check_vertex_inputs(pred: &ArrayView3<f64>, gt: &ArrayView3<f64>, idx: &[usize], what: &str) -> Result<()> {
    if pred.dim() != gt.dim() || pred.dim().2 != 3 {
        return Err(Error::shape(format!("vertex shapes {:?} vs {:?}", pred.dim(), gt.dim())));
    }
    if idx.is_empty() {
        return Err(Error::invalid(format!("empty {what} vertex set")));
    }
    if let Some(&bad) = idx.iter().find(|&&v| v >= pred.dim().1) {
        return Err(Error::invalid(format!("{what} vertex {bad} out of range")));
    }
    Ok(())
}

/// Per frame, the largest L2 error over lip vertices; averaged over frames.
pub fn lip_vertex_error(pred: ArrayView3<f64>, gt: ArrayView3<f64>, lip: &[usize]) -> Result<f64> {
    check_vertex_inputs(&pred, &gt, lip, "lip")?;
    let t_len = pred.dim().0;
    if t_len == 0 {
        return Err(Error::invalid("no frames"));
    }
    let mut total = 0.0;
    for t in 0..t_len {
        let worst = lip
            .iter()
            .map(|&v| {
                (0..3)
                    .map(|c| (pred[[t, v, c]] - gt[[t, v, c]]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        total += worst;
    }
    Ok(total / t_len as f64)
}

/// Population std over time of a vertex's distance from its temporal mean.
fn vertex_dynamics(verts: &ArrayView3<f64>, v: usize) -> f64 {
    let t_len = verts.dim().0;
    let mut mean = [0.0; 3];
    for t in 0..t_len {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += verts[[t, v, c]];
        }
    }
    mean.iter_mut().for_each(|m| *m /= t_len as f64);
    let norms: Vec<f64> = (0..t_len)
        .map(|t| (0..3).map(|c| (verts[[t, v, c]] - mean[c]).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mu = norms.iter().sum::<f64>() / t_len as f64;
    (norms.iter().map(|n| (n - mu).powi(2)).sum::<f64>() / t_len as f64).sqrt()
}

/// Mean over upper-face vertices of `dyn_gt(v) - dyn_pred(v)`.
pub fn upper_face_dynamics_deviation(
    pred: ArrayView3<f64>,
    gt: ArrayView3<f64>,
    upper: &[usize],
) -> Result<f64> {
    check_vertex_inputs(&pred, &gt, upper, "upper-face")?;
    if pred.dim().0 < 2 {
        return Err(Error::invalid("FDD needs at least 2 frames"));
    }
    let total: f64 = upper
        .iter()
        .map(|&v| vertex_dynamics(&gt, v) - vertex_dynamics(&pred, v))
        .sum();
    Ok(total / upper.len() as f64)
}
