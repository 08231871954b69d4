use candle_core::{DType, Device, Tensor, D};

use super::params::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Linear {
    w: Tensor,
    b: Tensor,
    out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let w = store.normal(&format!("{name}.weight"), &[in_dim, out_dim], (1.0 / in_dim as f64).sqrt())?;
        let b = store.constant(&format!("{name}.bias"), &[out_dim], 0.0)?;
        Ok(Self { w, b, out_dim })
    }

    /// Applies `x · W + b` over the last axis of a tensor of any rank.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let in_dim = *dims.last().expect("rank >= 1");
        let rows = x.elem_count() / in_dim.max(1);
        let y = x.reshape((rows, in_dim))?.matmul(&self.w)?.broadcast_add(&self.b)?;
        let mut out = dims;
        *out.last_mut().unwrap() = self.out_dim;
        Ok(y.reshape(out)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.constant(&format!("{name}.gamma"), &[dim], 1.0)?,
            beta: store.constant(&format!("{name}.beta"), &[dim], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mean)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        let xn = xc.broadcast_div(&(var + LN_EPS)?.sqrt()?)?;
        Ok(xn.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

/// Softmax over the last axis; the max shift is treated as a constant.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let m = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&m)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let m = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&m)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

#[derive(Debug, Clone)]
struct SelfAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl SelfAttention {
    fn forward(&self, x: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let (b, l, d) = x.dims3()?;
        let dh = d / self.heads;
        let split = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape((b, l, self.heads, dh))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.q.forward(x)?)?;
        let k = split(self.k.forward(x)?)?;
        let v = split(self.v.forward(x)?)?;
        let scores = (q.matmul(&k.transpose(2, 3)?.contiguous()?)? / (dh as f64).sqrt())?;
        let scores = match bias {
            Some(b) => scores.broadcast_add(b)?,
            None => scores,
        };
        let att = softmax_last(&scores)?;
        let ctx = att.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, l, d))?;
        self.o.forward(&ctx)
    }
}

#[derive(Debug, Clone)]
pub struct TransformerBlock {
    ln1: LayerNorm,
    attn: SelfAttention,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

impl TransformerBlock {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, hidden: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(crate::Error::Config(format!("width {dim} not divisible by {heads} heads")));
        }
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim)?,
            attn: SelfAttention {
                q: Linear::new(store, &format!("{name}.attn.q"), dim, dim)?,
                k: Linear::new(store, &format!("{name}.attn.k"), dim, dim)?,
                v: Linear::new(store, &format!("{name}.attn.v"), dim, dim)?,
                o: Linear::new(store, &format!("{name}.attn.o"), dim, dim)?,
                heads,
            },
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim)?,
            ff1: Linear::new(store, &format!("{name}.ff1"), dim, hidden)?,
            ff2: Linear::new(store, &format!("{name}.ff2"), hidden, dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_biased(x, None)
    }

    /// `bias` is added to the `L × L` attention scores of every head.
    pub fn forward_biased(&self, x: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let x = (x + self.attn.forward(&self.ln1.forward(x)?, bias)?)?;
        let h = self.ff1.forward(&self.ln2.forward(&x)?)?.gelu()?;
        Ok((&x + self.ff2.forward(&h)?)?)
    }
}

/// Pre-LN transformer stack with a final LayerNorm.
#[derive(Debug, Clone)]
pub struct TransformerStack {
    blocks: Vec<TransformerBlock>,
    ln_f: LayerNorm,
}

impl TransformerStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        layers: usize,
        heads: usize,
        hidden: usize,
    ) -> Result<Self> {
        let blocks = (0..layers)
            .map(|i| TransformerBlock::new(store, &format!("{name}.block{i}"), dim, heads, hidden))
            .collect::<Result<_>>()?;
        Ok(Self {
            blocks,
            ln_f: LayerNorm::new(store, &format!("{name}.ln_f"), dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_biased(x, None)
    }

    pub fn forward_biased(&self, x: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.forward_biased(&h, bias)?;
        }
        self.ln_f.forward(&h)
    }
}

/// Additive attention bias restricting position `i` to `|i - j| <= radius`.
pub fn band_bias(len: usize, radius: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let v: Vec<f32> = (0..len * len)
        .map(|ij| if (ij / len).abs_diff(ij % len) <= radius { 0.0 } else { -1e9 })
        .collect();
    Ok(Tensor::from_vec(v, (len, len), device)?.to_dtype(dtype)?)
}

/// Fixed sinusoidal position table, `len × dim`.
pub fn sinusoidal_table(len: usize, dim: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut v = vec![0f64; len * dim];
    for p in 0..len {
        for i in 0..dim {
            let freq = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let a = p as f64 * freq;
            v[p * dim + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    Ok(Tensor::from_vec(v, (len, dim), device)?.to_dtype(dtype)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_matches_direct_formula() {
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0], [1000.0, 1000.0, 1000.0]], &Device::Cpu).unwrap();
        let s = softmax_last(&x).unwrap().to_vec2::<f64>().unwrap();
        let z: f64 = [1f64, 2., 3.].iter().map(|v| v.exp()).sum();
        for (i, v) in [1f64, 2., 3.].iter().enumerate() {
            assert!((s[0][i] - v.exp() / z).abs() < 1e-12);
        }
        assert!(s[1].iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
        let ls = log_softmax_last(&x).unwrap().to_vec2::<f64>().unwrap();
        assert!((ls[0][2] - (3f64.exp() / z).ln()).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_standardizes() {
        let mut store = ParamStore::new(DType::F64, 0);
        let ln = LayerNorm::new(&mut store, "ln", 4).unwrap();
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0, 4.0]], &Device::Cpu).unwrap();
        let y = ln.forward(&x).unwrap().to_vec2::<f64>().unwrap();
        let mean: f64 = y[0].iter().sum::<f64>() / 4.0;
        let var: f64 = y[0].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.25 / (1.25 + LN_EPS)).abs() < 1e-9);
    }

    #[test]
    fn stack_preserves_shape_and_linear_handles_rank3() {
        let mut store = ParamStore::new(DType::F32, 0);
        let lin = Linear::new(&mut store, "lin", 5, 8).unwrap();
        let stack = TransformerStack::new(&mut store, "enc", 8, 2, 2, 16).unwrap();
        let x = Tensor::zeros((3, 7, 5), DType::F32, &Device::Cpu).unwrap();
        let y = stack.forward(&lin.forward(&x).unwrap()).unwrap();
        assert_eq!(y.dims(), &[3, 7, 8]);
        assert!(TransformerBlock::new(&mut store, "bad", 6, 4, 8).is_err());
    }

    #[test]
    fn sinusoid_first_rows() {
        let t = sinusoidal_table(2, 4, DType::F64, &Device::Cpu).unwrap().to_vec2::<f64>().unwrap();
        assert_eq!(t[0], vec![0.0, 1.0, 0.0, 1.0]);
        assert!((t[1][0] - 1f64.sin()).abs() < 1e-12);
        assert!((t[1][3] - (0.01f64).cos()).abs() < 1e-12);
    }
}
