use std::path::Path;

use candle_core::{DType, Tensor, D};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::VqConfig;
use super::quantize::{quantize_rows, TokenSequence};
use crate::data::{MotionSequence, Role, MOTION_DIM};
use crate::error::{Error, Result};
use crate::nn::{band_bias, padded_batch, scalar, sinusoidal_table, to_array2, Linear, ParamStore, TransformerStack};

/// True for parameters of the encoder side, which includes the codebook.
pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("enc.") || name == "codebook"
}

/// Per-coefficient standardization statistics; fitted once, never optimized.
pub fn is_statistic(name: &str) -> bool {
    name.starts_with("norm.")
}

pub fn is_decoder_param(name: &str) -> bool {
    name.starts_with("dec.")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VqLosses {
    pub recon: f64,
    pub codebook: f64,
    pub total: f64,
}

pub struct VqLossTensors {
    pub recon: Tensor,
    pub codebook: Tensor,
    pub total: Tensor,
}

impl VqLossTensors {
    pub fn values(&self) -> Result<VqLosses> {
        Ok(VqLosses {
            recon: scalar(&self.recon)?,
            codebook: scalar(&self.codebook)?,
            total: scalar(&self.total)?,
        })
    }
}

/// Quantization result held fixed so the loss becomes a smooth function of the
/// parameters (used for finite-difference checks).
#[derive(Debug, Clone)]
pub struct QuantSnapshot {
    pub tokens: Vec<u32>,
    pub(crate) latent: Tensor,
    quantized: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub enum StopGrad<'a> {
    Live,
    Frozen(&'a QuantSnapshot),
}

const MIN_STD: f64 = 1e-4;

#[derive(Debug, Serialize, Deserialize)]
struct VqManifest {
    role: Role,
    config: VqConfig,
    steps: usize,
    final_losses: Option<VqLosses>,
    usage_counts: Vec<u64>,
}

#[derive(Debug)]
pub struct VqModel {
    role: Role,
    config: VqConfig,
    store: ParamStore,
    enc_in: Linear,
    enc: TransformerStack,
    enc_out: Linear,
    codebook: Tensor,
    norm_mean: Tensor,
    norm_std: Tensor,
    dec_in: Linear,
    dec: TransformerStack,
    dec_out: Linear,
    usage: Vec<u64>,
    pub(crate) steps: usize,
    pub(crate) final_losses: Option<VqLosses>,
}

impl VqModel {
    pub fn new(role: Role, config: VqConfig, dtype: DType) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut store = ParamStore::new(dtype, c.seed ^ (role as u64 + 1).wrapping_mul(0x9e37_79b9));
        let frame_width = MOTION_DIM * c.stride;
        let enc_in = Linear::new(&mut store, "enc.in", frame_width, c.hidden_dim)?;
        let enc = TransformerStack::new(&mut store, "enc.stack", c.hidden_dim, c.layers, c.heads, c.intermediate)?;
        let enc_out = Linear::new(&mut store, "enc.out", c.hidden_dim, c.code_dim)?;
        let codebook = store.normal("codebook", &[c.codebook_size, c.code_dim], 1.0)?;
        let norm_mean = store.constant("norm.mean", &[MOTION_DIM], 0.0)?;
        let norm_std = store.constant("norm.std", &[MOTION_DIM], 1.0)?;
        let dec_in = Linear::new(&mut store, "dec.in", c.code_dim, c.hidden_dim)?;
        let dec = TransformerStack::new(&mut store, "dec.stack", c.hidden_dim, c.layers, c.heads, c.intermediate)?;
        let dec_out = Linear::new(&mut store, "dec.out", c.hidden_dim, frame_width)?;
        Ok(Self {
            role,
            usage: vec![0; c.codebook_size],
            config,
            store,
            enc_in,
            enc,
            enc_out,
            codebook,
            norm_mean,
            norm_std,
            dec_in,
            dec,
            dec_out,
            steps: 0,
            final_losses: None,
        })
    }

    /// Independent deep copy (parameters, usage counters, training state).
    pub fn duplicate(&self) -> Result<Self> {
        let mut m = Self::new(self.role, self.config.clone(), self.dtype())?;
        m.store.copy_from(&self.store, |_| true)?;
        m.usage = self.usage.clone();
        m.steps = self.steps;
        m.final_losses = self.final_losses;
        Ok(m)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn config(&self) -> &VqConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn stride(&self) -> usize {
        self.config.stride
    }

    pub fn codebook_size(&self) -> usize {
        self.config.codebook_size
    }

    pub fn steps_trained(&self) -> usize {
        self.steps
    }

    pub fn codebook_tensor(&self) -> &Tensor {
        &self.codebook
    }

    pub fn codebook_entries(&self) -> Result<Array2<f32>> {
        to_array2(&self.codebook)
    }

    pub fn usage_counts(&self) -> &[u64] {
        &self.usage
    }

    pub fn reset_usage(&mut self) {
        self.usage.iter_mut().for_each(|u| *u = 0);
    }

    /// Fraction of codebook entries used at least once since the last reset.
    pub fn utilization(&self) -> f64 {
        self.usage.iter().filter(|&&u| u > 0).count() as f64 / self.usage.len() as f64
    }

    pub(crate) fn record_usage(&mut self, tokens: &[u32]) {
        for &t in tokens {
            self.usage[t as usize] += 1;
        }
    }

    pub(crate) fn set_codebook(&self, entries: &Tensor) -> Result<()> {
        let var = self.store.get("codebook").expect("codebook registered");
        var.set(&entries.to_dtype(self.dtype())?)?;
        Ok(())
    }

    /// Sets the standardization statistics from the frames of `motions`.
    pub fn fit_normalization(&self, motions: &[MotionSequence]) -> Result<()> {
        let views: Vec<_> = motions.iter().map(|m| m.frames().view()).collect();
        let all = ndarray::concatenate(ndarray::Axis(0), &views)
            .map_err(|e| Error::shape(e.to_string()))?
            .mapv(f64::from);
        let mean = all.mean_axis(ndarray::Axis(0)).expect("non-empty");
        let std = all.std_axis(ndarray::Axis(0), 0.0).mapv(|s| s.max(MIN_STD));
        let dev = self.codebook.device();
        let set = |name: &str, v: Vec<f64>| -> Result<()> {
            let t = Tensor::from_vec(v, MOTION_DIM, dev)?.to_dtype(self.dtype())?;
            self.store.get(name).expect("registered").set(&t)?;
            Ok(())
        };
        set("norm.mean", mean.to_vec())?;
        set("norm.std", std.to_vec())
    }

    /// Motion (`… × 56`) in standardized units.
    pub fn normalize(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.broadcast_sub(&self.norm_mean)?.broadcast_div(&self.norm_std)?)
    }

    pub fn denormalize(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.broadcast_mul(&self.norm_std)?.broadcast_add(&self.norm_mean)?)
    }

    /// `B × (L·w) × 56` → `B × L × code_dim`.
    pub fn encode_latent(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        let w = self.config.stride;
        if d != MOTION_DIM || t % w != 0 || t == 0 {
            return Err(Error::shape(format!("encoder input {:?} with stride {w}", x.dims())));
        }
        let l = t / w;
        let h = self.enc_in.forward(&self.normalize(x)?.reshape((b, l, w * d))?)?;
        let h = if self.config.encoder_positions {
            h.broadcast_add(&sinusoidal_table(l, self.config.hidden_dim, self.dtype(), h.device())?)?
        } else {
            h
        };
        let h = match self.config.encoder_window {
            Some(r) => self.enc.forward_biased(&h, Some(&band_bias(l, r, self.dtype(), h.device())?))?,
            None => self.enc.forward(&h)?,
        };
        self.enc_out.forward(&h)
    }

    /// `B × L × code_dim` → `B × (L·w) × 56`.
    pub fn decode_latent(&self, zq: &Tensor) -> Result<Tensor> {
        let (b, l, _) = zq.dims3()?;
        let h = self.dec_in.forward(zq)?;
        let pos = sinusoidal_table(l, self.config.hidden_dim, self.dtype(), h.device())?;
        let h = self.dec.forward(&h.broadcast_add(&pos)?)?;
        self.denormalize(&self.dec_out.forward(&h)?.reshape((b, l * self.config.stride, MOTION_DIM))?)
    }

    /// Expected codebook vector under per-position token probabilities `B × L × K`.
    pub fn soft_latent(&self, probs: &Tensor) -> Result<Tensor> {
        let (b, l, k) = probs.dims3()?;
        Ok(probs
            .reshape((b * l, k))?
            .matmul(&self.codebook)?
            .reshape((b, l, self.config.code_dim))?)
    }

    /// Nearest-entry tokens for every latent row, flattened in batch order.
    pub fn quantize(&self, z: &Tensor) -> Result<Vec<u32>> {
        let lat = z.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
        let cb = self.codebook.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
        quantize_rows(&cb, &lat, self.config.code_dim)
    }

    /// Codebook rows for `tokens`, shaped `B × L × code_dim`.
    pub fn lookup(&self, tokens: &[u32], b: usize, l: usize) -> Result<Tensor> {
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.codebook_size()) {
            return Err(Error::TokenOutOfRange { token: t, size: self.codebook_size() });
        }
        let idx = Tensor::from_slice(tokens, tokens.len(), self.codebook.device())?;
        Ok(self.codebook.index_select(&idx, 0)?.reshape((b, l, self.config.code_dim))?)
    }

    fn motion_tensor(&self, motion: &MotionSequence) -> Result<Tensor> {
        let padded = motion.pad_to_multiple(self.config.stride);
        padded_batch(&[padded.frames().view()], padded.len(), self.dtype())
    }

    /// Continuous latent and tokens without touching usage counters.
    pub fn tokenize(&self, motion: &MotionSequence) -> Result<(Array2<f32>, TokenSequence)> {
        let z = self.encode_latent(&self.motion_tensor(motion)?)?;
        let tokens = self.quantize(&z)?;
        let latent = to_array2(&z.squeeze(0)?)?;
        Ok((latent, TokenSequence::new(tokens, self.codebook_size())?))
    }

    /// Like [`tokenize`](Self::tokenize) but also counts codebook usage.
    pub fn vq_encode(&mut self, motion: &MotionSequence) -> Result<(Array2<f32>, TokenSequence)> {
        let out = self.tokenize(motion)?;
        self.record_usage(out.1.as_slice());
        Ok(out)
    }

    /// Decodes `len(tokens) · w` frames.
    pub fn vq_decode(&self, tokens: &TokenSequence) -> Result<MotionSequence> {
        if tokens.is_empty() {
            return Err(Error::invalid("empty token sequence"));
        }
        let q = self.lookup(tokens.as_slice(), 1, tokens.len())?;
        let out = self.decode_latent(&q)?.squeeze(0)?;
        MotionSequence::new(to_array2(&out)?)
    }

    /// Encode, quantize and decode, truncated back to the input length.
    pub fn reconstruct(&self, motion: &MotionSequence) -> Result<MotionSequence> {
        let (_, tokens) = self.tokenize(motion)?;
        self.vq_decode(&tokens)?.truncate(motion.len())
    }

    /// Losses on a `B × (L·w) × 56` batch.
    ///
    /// `StopGrad::Live` quantizes the current latents and routes gradients
    /// through the straight-through copy; `StopGrad::Frozen` reuses a snapshot
    /// so the result is differentiable everywhere with the same gradient.
    pub fn loss_tensors(&self, x: &Tensor, sg: StopGrad<'_>) -> Result<(VqLossTensors, QuantSnapshot)> {
        let (b, t, _) = x.dims3()?;
        let l = t / self.config.stride;
        let z = self.encode_latent(x)?;
        let (tokens, z0, q0) = match sg {
            StopGrad::Live => {
                let tokens = self.quantize(&z)?;
                let q0 = self.lookup(&tokens, b, l)?.detach();
                (tokens, z.detach(), q0)
            }
            StopGrad::Frozen(s) => (s.tokens.clone(), s.latent.clone(), s.quantized.clone()),
        };
        let q = self.lookup(&tokens, b, l)?;
        let zq = match sg {
            StopGrad::Live => (&z + (&q - &z)?.detach())?,
            StopGrad::Frozen(_) => z.broadcast_add(&(&q0 - &z0)?)?,
        };
        let recon = (self.decode_latent(&zq)? - x)?.sqr()?.mean_all()?;
        let row_sq = |a: &Tensor, b: &Tensor| -> Result<Tensor> { Ok((a - b)?.sqr()?.sum(D::Minus1)?.mean_all()?) };
        let codebook = (row_sq(&z0, &q)? + (row_sq(&q0, &z)? * self.config.beta)?)?;
        let total = (&recon + (&codebook * self.config.gamma)?)?;
        let snapshot = QuantSnapshot { tokens, latent: z0, quantized: q0 };
        Ok((VqLossTensors { recon, codebook, total }, snapshot))
    }

    pub fn vq_losses(&self, motion: &MotionSequence) -> Result<VqLosses> {
        self.loss_tensors(&self.motion_tensor(motion)?, StopGrad::Live)?.0.values()
    }

    /// Mean squared reconstruction error over all frames of `motions`.
    pub fn recon_mse(&self, motions: &[MotionSequence]) -> Result<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for m in motions {
            let r = self.reconstruct(m)?;
            total += (r.frames() - m.frames()).mapv(|v| (v as f64).powi(2)).sum();
            n += m.frames().len();
        }
        Ok(total / n.max(1) as f64)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.store.save(dir)?;
        let manifest = VqManifest {
            role: self.role,
            config: self.config.clone(),
            steps: self.steps,
            final_losses: self.final_losses,
            usage_counts: self.usage.clone(),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, dtype: DType) -> Result<Self> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Err(Error::MissingPrerequisite(format!("VQ checkpoint {}", dir.display())));
        }
        let manifest: VqManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let mut model = Self::new(manifest.role, manifest.config, dtype)?;
        model.store.load(dir)?;
        if manifest.usage_counts.len() == model.usage.len() {
            model.usage = manifest.usage_counts;
        }
        model.steps = manifest.steps;
        model.final_losses = manifest.final_losses;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn tiny() -> VqConfig {
        VqConfig {
            codebook_size: 8,
            code_dim: 4,
            hidden_dim: 8,
            layers: 1,
            heads: 2,
            intermediate: 16,
            ..VqConfig::default()
        }
    }

    fn ramp(t: usize) -> MotionSequence {
        MotionSequence::new(Array2::from_shape_fn((t, MOTION_DIM), |(i, j)| ((i * 7 + j) % 11) as f32 * 0.1)).unwrap()
    }

    #[test]
    fn shapes_and_padding() {
        let m = VqModel::new(Role::Speaker, tiny(), DType::F32).unwrap();
        let x = ramp(5);
        let (lat, tok) = m.tokenize(&x).unwrap();
        assert_eq!(lat.dim(), (3, 4));
        assert_eq!(tok.len(), 3);
        assert_eq!(m.vq_decode(&tok).unwrap().len(), 6);
        assert_eq!(m.reconstruct(&x).unwrap().len(), 5);
        let a = m.vq_decode(&tok).unwrap();
        assert_eq!(a, m.vq_decode(&tok).unwrap());
    }

    #[test]
    fn usage_and_utilization() {
        let mut m = VqModel::new(Role::Listener, tiny(), DType::F32).unwrap();
        assert_eq!(m.utilization(), 0.0);
        m.record_usage(&[0, 0, 0]);
        assert_eq!(m.utilization(), 1.0 / 8.0);
        m.reset_usage();
        let (_, tok) = m.vq_encode(&ramp(8)).unwrap();
        assert_eq!(m.usage_counts().iter().sum::<u64>(), tok.len() as u64);
    }

    #[test]
    fn out_of_range_token_rejected() {
        let m = VqModel::new(Role::Speaker, tiny(), DType::F32).unwrap();
        let bad = TokenSequence::new(vec![1, 9], 16).unwrap();
        assert!(matches!(m.vq_decode(&bad), Err(Error::TokenOutOfRange { token: 9, size: 8 })));
    }

    #[test]
    fn gamma_zero_total_is_recon() {
        let m = VqModel::new(Role::Speaker, VqConfig { gamma: 0.0, ..tiny() }, DType::F64).unwrap();
        let l = m.vq_losses(&ramp(4)).unwrap();
        assert_eq!(l.total, l.recon);
        assert!(l.codebook > 0.0);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = VqModel::new(Role::Listener, tiny(), DType::F32).unwrap();
        m.vq_encode(&ramp(6)).unwrap();
        m.save(dir.path()).unwrap();
        let back = VqModel::load(dir.path(), DType::F32).unwrap();
        assert_eq!(back.role(), Role::Listener);
        assert_eq!(back.usage_counts(), m.usage_counts());
        assert_eq!(back.reconstruct(&ramp(6)).unwrap(), m.reconstruct(&ramp(6)).unwrap());
        assert!(matches!(
            VqModel::load(&dir.path().join("nope"), DType::F32),
            Err(Error::MissingPrerequisite(_))
        ));
    }
}
