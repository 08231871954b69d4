//! Minimal neural-network toolkit on top of candle autodiff.

pub mod layers;
pub mod params;

use candle_core::{DType, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};

pub use layers::{band_bias, log_softmax_last, sinusoidal_table, softmax_last, LayerNorm, Linear, TransformerStack};
pub use params::{Fingerprints, ParamStore};

use crate::error::{Error, Result};

/// Adam without weight decay over an explicit set of trainable variables.
pub struct Adam {
    inner: AdamW,
    n_vars: usize,
}

impl Adam {
    pub fn new(vars: Vec<Var>, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        let n_vars = vars.len();
        let params = ParamsAdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        Ok(Self {
            inner: AdamW::new(vars, params)?,
            n_vars,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn step(&mut self, loss: &Tensor) -> Result<()> {
        self.inner.backward_step(loss)?;
        Ok(())
    }
}

/// Reads a scalar tensor of any float dtype as `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Fails with `Divergence` if `value` is not finite.
pub fn check_finite(what: &str, step: usize, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Divergence(format!("{what} became {value} at step {step}")))
    }
}

/// Stacks row-major sequences into a `B × len × D` tensor, right-padding each
/// by repeating its last row.
pub fn padded_batch(seqs: &[ndarray::ArrayView2<f32>], len: usize, dtype: DType) -> Result<Tensor> {
    let width = seqs.first().map_or(0, |s| s.ncols());
    if seqs.is_empty() || len == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let mut buf = Vec::with_capacity(seqs.len() * len * width);
    for s in seqs {
        if s.ncols() != width || s.nrows() == 0 || s.nrows() > len {
            return Err(Error::shape(format!("sequence {:?} does not fit batch of {len}×{width}", s.dim())));
        }
        for t in 0..len {
            buf.extend(s.row(t.min(s.nrows() - 1)).iter().copied());
        }
    }
    Ok(Tensor::from_vec(buf, (seqs.len(), len, width), &candle_core::Device::Cpu)?.to_dtype(dtype)?)
}

/// Converts a `L × D` tensor (any float dtype) to an `f32` array.
pub fn to_array2(t: &Tensor) -> Result<ndarray::Array2<f32>> {
    let (r, c) = t.dims2()?;
    let v = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    ndarray::Array2::from_shape_vec((r, c), v).map_err(|e| Error::shape(e.to_string()))
}
