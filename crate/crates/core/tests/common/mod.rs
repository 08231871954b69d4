//! Helpers shared by the integration tests.
#![allow(dead_code)]

use candle_core::{DType, Device, Tensor, Var};
use dim_core::data::{synth_dyads, uniform_mask, DyadicSample, MaskMap, Role, SynthConfig};
use dim_core::dim::{dim_losses, DimBatch, DimConfig, DimModel, LossWeights, MaskMode};
use dim_core::nn::ParamStore;
use dim_core::vq::{is_statistic, StopGrad, VqConfig, VqModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-3;

/// Relative errors of sampled parameter entries: autodiff against central differences.
pub struct GradCheck {
    pub rel: Vec<f64>,
}

impl GradCheck {
    pub fn fraction_below(&self, tol: f64) -> f64 {
        self.rel.iter().filter(|&&r| r < tol).count() as f64 / self.rel.len() as f64
    }

    pub fn worst(&self) -> f64 {
        self.rel.iter().cloned().fold(0.0, f64::max)
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-7 {
        (a - n).abs()
    } else {
        (a - n).abs() / scale
    }
}

fn shift(var: &Var, idx: usize, delta: f64) {
    let t = var.as_tensor();
    let mut v = t.flatten_all().unwrap().to_vec1::<f64>().unwrap();
    v[idx] += delta;
    var.set(&Tensor::from_vec(v, t.shape(), t.device()).unwrap()).unwrap();
}

/// Samples `per_param` entries from every parameter passing `keep` and compares
/// the analytic gradient of `loss` to a central difference with step `H`.
pub fn grad_check(
    store: &ParamStore,
    keep: impl Fn(&str) -> bool,
    per_param: usize,
    seed: u64,
    loss: impl Fn() -> Tensor,
) -> GradCheck {
    let grads = loss().backward().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rel = Vec::new();
    for (name, var) in store.named_vars() {
        if !keep(name) {
            continue;
        }
        let g = grads
            .get(var.as_tensor())
            .map(|g| g.flatten_all().unwrap().to_vec1::<f64>().unwrap())
            .unwrap_or_else(|| vec![0.0; var.elem_count()]);
        for _ in 0..per_param.min(g.len()) {
            let i = rng.gen_range(0..g.len());
            shift(var, i, H);
            let up = loss().to_scalar::<f64>().unwrap();
            shift(var, i, -2.0 * H);
            let down = loss().to_scalar::<f64>().unwrap();
            shift(var, i, H);
            rel.push(rel_err(g[i], (up - down) / (2.0 * H)));
        }
    }
    GradCheck { rel }
}

pub fn tiny_vq_config() -> VqConfig {
    VqConfig {
        codebook_size: 16,
        code_dim: 8,
        hidden_dim: 8,
        layers: 1,
        heads: 2,
        intermediate: 16,
        ..VqConfig::default()
    }
}

pub fn tiny_dim_config() -> DimConfig {
    DimConfig {
        model_dim: 8,
        layers: 1,
        heads: 2,
        intermediate: 16,
        straight_through: false,
        ..DimConfig::default()
    }
}

pub fn tiny_dyads(n: usize, frames: usize, seed: u64) -> Vec<DyadicSample> {
    synth_dyads(&SynthConfig {
        n_clips: n,
        frames,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

pub fn random_input(b: usize, t: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..b * t * 56).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(v, (b, t, 56), &Device::Cpu).unwrap()
}

/// `vq_losses` gradient check with quantization held fixed at its current result.
pub fn vq_grad_check(per_param: usize) -> GradCheck {
    let vq = VqModel::new(Role::Listener, tiny_vq_config(), DType::F64).unwrap();
    let x = random_input(2, 8, 3);
    let (_, snap) = vq.loss_tensors(&x, StopGrad::Live).unwrap();
    grad_check(vq.store(), |n| !is_statistic(n), per_param, 11, || {
        vq.loss_tensors(&x, StopGrad::Frozen(&snap)).unwrap().0.total
    })
}

/// `dim_losses` gradient check on a two-clip batch with fixed masks.
pub fn dim_grad_check(per_param: usize) -> GradCheck {
    let vs = VqModel::new(Role::Speaker, tiny_vq_config(), DType::F64).unwrap();
    let vl = VqModel::new(Role::Listener, tiny_vq_config(), DType::F64).unwrap();
    let dyads = tiny_dyads(2, 8, 5);
    let model = DimModel::new(tiny_dim_config(), vs, vl, dyads[0].audio.width()).unwrap();
    let refs: Vec<&DyadicSample> = dyads.iter().collect();
    let batch = DimBatch::new(&model, &refs).unwrap();
    let masks = |seed: u64| -> Vec<MaskMap> { (0..2).map(|i| uniform_mask(8, 50.0, seed + i).unwrap()).collect() };
    let c = model.config();
    let w = LossWeights {
        lambda1: c.lambda1,
        lambda2: c.lambda2,
        tau: c.tau,
        symmetric: c.symmetric_contrastive,
        mask_p: c.mask_p,
    };
    grad_check(model.store(), |_| true, per_param, 13, || {
        let out = model.forward(&batch, masks(100), masks(200), MaskMode::Remove).unwrap();
        dim_losses(&out, &batch, model.stride(), w).unwrap().total
    })
}
