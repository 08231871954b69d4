use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{DimConfig, RoleAlignment};
use crate::data::{DyadicSample, MaskMap, Role, MOTION_DIM};
use crate::error::{Error, Result};
use crate::nn::{padded_batch, sinusoidal_table, softmax_last, Linear, ParamStore, TransformerStack};
use crate::vq::{TokenSequence, VqModel};

/// How masked frames enter the role encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Masked frames are dropped before encoding and restored as mask tokens before decoding.
    Remove,
    /// Masked frames are replaced by the role's mask token at the encoder input.
    Replace,
}

/// True for parameters of the joint decoder group (audio projection,
/// decoder role embeddings, transformer and heads).
pub fn is_joint_decoder_param(name: &str) -> bool {
    name.starts_with("dec.")
}

/// Padded, stacked inputs for one batch, plus frozen-VQ token targets.
pub struct DimBatch {
    pub speaker: Tensor,
    pub listener: Tensor,
    pub audio: Tensor,
    pub tokens_s: Vec<u32>,
    pub tokens_l: Vec<u32>,
    pub batch: usize,
    pub frames: usize,
}

impl DimBatch {
    pub fn new(model: &DimModel, samples: &[&DyadicSample]) -> Result<Self> {
        let w = model.stride();
        let len = samples.iter().map(|s| s.len()).max().unwrap_or(0).div_ceil(w) * w;
        let dtype = model.dtype();
        let speaker = padded_batch(&samples.iter().map(|s| s.speaker.frames().view()).collect::<Vec<_>>(), len, dtype)?;
        let listener = padded_batch(&samples.iter().map(|s| s.listener.frames().view()).collect::<Vec<_>>(), len, dtype)?;
        let audio = padded_batch(&samples.iter().map(|s| s.audio.features().view()).collect::<Vec<_>>(), len, dtype)?;
        if audio.dims()[2] != model.audio_dim {
            return Err(Error::shape(format!(
                "audio width {} but model expects {}",
                audio.dims()[2],
                model.audio_dim
            )));
        }
        let tokens_s = model.vq_s.quantize(&model.vq_s.encode_latent(&speaker)?)?;
        let tokens_l = model.vq_l.quantize(&model.vq_l.encode_latent(&listener)?)?;
        Ok(Self {
            speaker,
            listener,
            audio,
            tokens_s,
            tokens_l,
            batch: samples.len(),
            frames: len,
        })
    }

    pub fn motion(&self, role: Role) -> &Tensor {
        match role {
            Role::Speaker => &self.speaker,
            Role::Listener => &self.listener,
        }
    }

    pub fn tokens(&self, role: Role) -> &[u32] {
        match role {
            Role::Speaker => &self.tokens_s,
            Role::Listener => &self.tokens_l,
        }
    }
}

/// Outputs of one forward pass. Logits are `B × L × |C|`; predictions `B × T × 56`.
pub struct DimForward {
    pub logits_s: Option<Tensor>,
    pub logits_l: Option<Tensor>,
    pub pred_s: Tensor,
    pub pred_l: Tensor,
    pub pooled_s: Tensor,
    pub pooled_l: Tensor,
    pub masks_s: Vec<MaskMap>,
    pub masks_l: Vec<MaskMap>,
}

impl DimForward {
    pub fn logits(&self, role: Role) -> Option<&Tensor> {
        match role {
            Role::Speaker => self.logits_s.as_ref(),
            Role::Listener => self.logits_l.as_ref(),
        }
    }

    pub fn pred(&self, role: Role) -> &Tensor {
        match role {
            Role::Speaker => &self.pred_s,
            Role::Listener => &self.pred_l,
        }
    }

    pub fn masks(&self, role: Role) -> &[MaskMap] {
        match role {
            Role::Speaker => &self.masks_s,
            Role::Listener => &self.masks_l,
        }
    }
}

struct RoleParams {
    input: Linear,
    embed: Tensor,
    mask_token: Tensor,
    encoder: TransformerStack,
    dec_embed: Tensor,
    head: Linear,
}

#[derive(Debug, Serialize, Deserialize)]
struct DimManifest {
    config: DimConfig,
    audio_dim: usize,
    epoch: usize,
    loss_history: Vec<[f64; 4]>,
}

pub struct DimModel {
    config: DimConfig,
    store: ParamStore,
    speaker: RoleParams,
    listener: RoleParams,
    enc_joint: TransformerStack,
    audio_in: Linear,
    dec: TransformerStack,
    audio_dim: usize,
    pub(crate) vq_s: VqModel,
    pub(crate) vq_l: VqModel,
    pub(crate) epoch: usize,
    pub(crate) loss_history: Vec<[f64; 4]>,
}

impl DimModel {
    pub fn new(config: DimConfig, vq_s: VqModel, vq_l: VqModel, audio_dim: usize) -> Result<Self> {
        config.validate()?;
        if vq_s.role() != Role::Speaker || vq_l.role() != Role::Listener {
            return Err(Error::Config("VQ models must be (speaker, listener)".into()));
        }
        if vq_s.stride() != vq_l.stride() {
            return Err(Error::Config("speaker and listener VQ strides differ".into()));
        }
        if vq_s.dtype() != vq_l.dtype() {
            return Err(Error::Config("speaker and listener VQ dtypes differ".into()));
        }
        if audio_dim == 0 {
            return Err(Error::Config("audio feature width must be positive".into()));
        }
        let c = &config;
        let d = c.model_dim;
        let w = vq_s.stride();
        let mut store = ParamStore::new(vq_s.dtype(), c.seed.wrapping_add(0x5eed));
        let role = |store: &mut ParamStore, tag: &str, k: usize| -> Result<RoleParams> {
            let out = if c.use_vq { k } else { w * MOTION_DIM };
            Ok(RoleParams {
                input: Linear::new(store, &format!("in_{tag}"), MOTION_DIM, d)?,
                embed: store.normal(&format!("emb.E_{tag}"), &[d], 0.02)?,
                mask_token: store.normal(&format!("emb.mask_{tag}"), &[d], 0.02)?,
                encoder: TransformerStack::new(store, &format!("enc_{tag}"), d, c.layers, c.heads, c.intermediate)?,
                dec_embed: store.normal(&format!("dec.E_{tag}"), &[d], 0.02)?,
                head: Linear::new(store, &format!("dec.head_{tag}"), w * d, out)?,
            })
        };
        let speaker = role(&mut store, "s", vq_s.codebook_size())?;
        let listener = role(&mut store, "l", vq_l.codebook_size())?;
        let enc_joint = TransformerStack::new(&mut store, "enc_joint", 2 * d, c.layers, c.heads, c.intermediate)?;
        let audio_in = Linear::new(&mut store, "dec.audio_in", audio_dim, d)?;
        let dec = TransformerStack::new(&mut store, "dec.stack", d, c.layers, c.heads, c.intermediate)?;
        Ok(Self {
            config,
            store,
            speaker,
            listener,
            enc_joint,
            audio_in,
            dec,
            audio_dim,
            vq_s,
            vq_l,
            epoch: 0,
            loss_history: Vec::new(),
        })
    }

    pub fn config(&self) -> &DimConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn stride(&self) -> usize {
        self.vq_s.stride()
    }

    pub fn audio_dim(&self) -> usize {
        self.audio_dim
    }

    pub fn vq(&self, role: Role) -> &VqModel {
        match role {
            Role::Speaker => &self.vq_s,
            Role::Listener => &self.vq_l,
        }
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn loss_history(&self) -> &[[f64; 4]] {
        &self.loss_history
    }

    fn role_params(&self, role: Role) -> &RoleParams {
        match role {
            Role::Speaker => &self.speaker,
            Role::Listener => &self.listener,
        }
    }

    fn device(&self) -> &Device {
        self.store.device()
    }

    /// Frozen-VQ token targets for one sample.
    pub fn prepare_targets(&self, sample: &DyadicSample) -> Result<(TokenSequence, TokenSequence)> {
        if sample.speaker.len() != sample.listener.len() {
            return Err(Error::shape(format!(
                "speaker has {} frames, listener {}",
                sample.speaker.len(),
                sample.listener.len()
            )));
        }
        Ok((self.vq_s.tokenize(&sample.speaker)?.1, self.vq_l.tokenize(&sample.listener)?.1))
    }

    fn mask_indicator(&self, masks: &[MaskMap], frames: usize) -> Result<Tensor> {
        let mut v = vec![0f32; masks.len() * frames];
        for (b, m) in masks.iter().enumerate() {
            for &t in m.masked_indices() {
                v[b * frames + t] = 1.0;
            }
        }
        Ok(Tensor::from_vec(v, (masks.len(), frames, 1), self.device())?.to_dtype(self.dtype())?)
    }

    fn encode_stream(&self, role: Role, x: &Tensor, masks: &[MaskMap], mode: MaskMode, pos: &Tensor) -> Result<Tensor> {
        let p = self.role_params(role);
        let (b, t, _) = x.dims3()?;
        let d = self.config.model_dim;
        let h = p.input.forward(x)?;
        match mode {
            MaskMode::Remove => {
                let visible: Vec<Vec<usize>> = masks.iter().map(|m| m.visible_indices()).collect();
                let tv = visible[0].len();
                if tv == 0 || visible.iter().any(|v| v.len() != tv) {
                    return Err(Error::invalid(format!("{role} masks leave no or unequal visible frames")));
                }
                let h = h.broadcast_add(&p.embed)?.broadcast_add(pos)?;
                let idx: Vec<u32> = visible
                    .iter()
                    .enumerate()
                    .flat_map(|(bi, v)| v.iter().map(move |&ti| (bi * t + ti) as u32))
                    .collect();
                let idx = Tensor::from_vec(idx, b * tv, self.device())?;
                let h = h.reshape((b * t, d))?.index_select(&idx, 0)?.reshape((b, tv, d))?;
                p.encoder.forward(&h)
            }
            MaskMode::Replace => {
                let m = self.mask_indicator(masks, t)?;
                let keep = (m.ones_like()? - &m)?;
                let h = (h.broadcast_mul(&keep)? + m.broadcast_mul(&p.mask_token.reshape((1, 1, d))?)?)?;
                let h = h.broadcast_add(&p.embed)?.broadcast_add(pos)?;
                p.encoder.forward(&h)
            }
        }
    }

    /// Restores full length with mask tokens (Remove mode) and adds decoder embeddings.
    fn decoder_stream(&self, role: Role, j: &Tensor, masks: &[MaskMap], mode: MaskMode, pos: &Tensor) -> Result<Tensor> {
        let p = self.role_params(role);
        let (b, tv, d) = j.dims3()?;
        let full = match mode {
            MaskMode::Replace => j.clone(),
            MaskMode::Remove => {
                let t = masks[0].len();
                let pad = (b * tv) as u32;
                let mut idx = Vec::with_capacity(b * t);
                for (bi, m) in masks.iter().enumerate() {
                    let mut k = 0;
                    for ti in 0..t {
                        if m.is_masked(ti) {
                            idx.push(pad);
                        } else {
                            idx.push((bi * tv + k) as u32);
                            k += 1;
                        }
                    }
                }
                let src = Tensor::cat(&[j.reshape((b * tv, d))?, p.mask_token.reshape((1, d))?], 0)?;
                let idx = Tensor::from_vec(idx, b * t, self.device())?;
                src.index_select(&idx, 0)?.reshape((b, t, d))?
            }
        };
        Ok(full.broadcast_add(&p.dec_embed)?.broadcast_add(pos)?)
    }

    /// Token logits (or direct motion) for `target` from a decoder stream.
    fn head(&self, target: Role, stream: &Tensor, audio_h: &Tensor) -> Result<(Option<Tensor>, Tensor)> {
        let (b, t, d) = stream.dims3()?;
        let w = self.stride();
        let seq = Tensor::cat(&[stream, audio_h], 1)?;
        let out = self.dec.forward(&seq)?.narrow(1, 0, t)?;
        let grouped = out.reshape((b, t / w, w * d))?;
        let raw = self.role_params(target).head.forward(&grouped)?;
        if self.config.use_vq {
            let vq = self.vq(target);
            let probs = softmax_last(&raw)?;
            let weights = if self.config.straight_through {
                let hard = raw.broadcast_eq(&raw.max_keepdim(D::Minus1)?)?.to_dtype(probs.dtype())?;
                (hard - probs.detach())?.add(&probs)?
            } else {
                probs
            };
            let pred = vq.decode_latent(&vq.soft_latent(&weights)?)?;
            Ok((Some(raw), pred))
        } else {
            Ok((None, raw.reshape((b, t, MOTION_DIM))?))
        }
    }

    /// Full forward pass. Masks are per sample and must cover the padded length.
    pub fn forward(&self, batch: &DimBatch, masks_s: Vec<MaskMap>, masks_l: Vec<MaskMap>, mode: MaskMode) -> Result<DimForward> {
        let (b, t) = (batch.batch, batch.frames);
        if masks_s.len() != b || masks_l.len() != b || masks_s.iter().chain(&masks_l).any(|m| m.len() != t) {
            return Err(Error::shape(format!("masks must be {b} maps over {t} frames")));
        }
        let d = self.config.model_dim;
        let pos = sinusoidal_table(t, d, self.dtype(), self.device())?;
        let xs = self.encode_stream(Role::Speaker, &batch.speaker, &masks_s, mode, &pos)?;
        let xl = self.encode_stream(Role::Listener, &batch.listener, &masks_l, mode, &pos)?;
        let pooled_s = xs.mean(1)?;
        let pooled_l = xl.mean(1)?;
        let (js, jl) = if self.config.two_branch {
            if xs.dims()[1] != xl.dims()[1] {
                return Err(Error::invalid("joint encoder needs equal visible lengths for both roles"));
            }
            let j = self.enc_joint.forward(&Tensor::cat(&[&xs, &xl], D::Minus1)?)?;
            (j.narrow(2, 0, d)?, j.narrow(2, d, d)?)
        } else {
            (xs, xl)
        };
        let stream_s = self.decoder_stream(Role::Speaker, &js, &masks_s, mode, &pos)?;
        let stream_l = self.decoder_stream(Role::Listener, &jl, &masks_l, mode, &pos)?;
        let audio_h = self.audio_in.forward(&batch.audio)?.broadcast_add(&pos)?;
        let (src_s, src_l) = match self.config.decode_role_alignment {
            RoleAlignment::Cross => (&stream_l, &stream_s),
            RoleAlignment::Straight => (&stream_s, &stream_l),
        };
        let (logits_s, pred_s) = self.head(Role::Speaker, src_s, &audio_h)?;
        let (logits_l, pred_l) = self.head(Role::Listener, src_l, &audio_h)?;
        Ok(DimForward {
            logits_s,
            logits_l,
            pred_s,
            pred_l,
            pooled_s,
            pooled_l,
            masks_s,
            masks_l,
        })
    }

    /// Hard motion prediction for `role`: argmax tokens through the VQ decoder,
    /// or the direct regression output when VQ is disabled.
    pub fn hard_prediction(&self, out: &DimForward, role: Role) -> Result<(Option<Vec<u32>>, Tensor)> {
        match out.logits(role) {
            None => Ok((None, out.pred(role).clone())),
            Some(logits) => {
                let tokens = argmax_tokens(logits)?;
                let (b, l, _) = logits.dims3()?;
                let vq = self.vq(role);
                let pred = vq.decode_latent(&vq.lookup(&tokens, b, l)?)?;
                Ok((Some(tokens), pred))
            }
        }
    }

    /// Writes `dim/`, `vq_speaker/`, `vq_listener/` and `manifest.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.store.save(&dir.join("dim"))?;
        self.vq_s.save(&dir.join("vq_speaker"))?;
        self.vq_l.save(&dir.join("vq_listener"))?;
        let manifest = DimManifest {
            config: self.config.clone(),
            audio_dim: self.audio_dim,
            epoch: self.epoch,
            loss_history: self.loss_history.clone(),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, dtype: DType) -> Result<Self> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Err(Error::MissingPrerequisite(format!("DIM checkpoint {}", dir.display())));
        }
        let manifest: DimManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let vq_s = VqModel::load(&dir.join("vq_speaker"), dtype)?;
        let vq_l = VqModel::load(&dir.join("vq_listener"), dtype)?;
        let mut model = Self::new(manifest.config, vq_s, vq_l, manifest.audio_dim)?;
        model.store.load(&dir.join("dim"))?;
        model.epoch = manifest.epoch;
        model.loss_history = manifest.loss_history;
        Ok(model)
    }

    /// Digest over the DIM and both VQ parameter sets.
    pub fn digest(&self) -> Result<String> {
        Ok(format!(
            "{}{}{}",
            &self.store.digest()?[..16],
            &self.vq_s.store().digest()?[..16],
            &self.vq_l.store().digest()?[..16]
        ))
    }

    /// Fresh model with the same configuration, VQ models copied from this one.
    pub fn fresh_like(&self, seed: u64) -> Result<Self> {
        let config = DimConfig { seed, ..self.config.clone() };
        Self::new(config, self.vq_s.duplicate()?, self.vq_l.duplicate()?, self.audio_dim)
    }

    /// Deep copy of all parameters.
    pub fn duplicate(&self) -> Result<Self> {
        let mut m = self.fresh_like(self.config.seed)?;
        m.store.copy_from(&self.store, |_| true)?;
        m.epoch = self.epoch;
        m.loss_history = self.loss_history.clone();
        Ok(m)
    }
}

/// Row-wise argmax over the last axis; ties go to the lowest index.
pub fn argmax_tokens(logits: &Tensor) -> Result<Vec<u32>> {
    let k = *logits.dims().last().expect("rank >= 1");
    let v = logits.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    v.chunks_exact(k)
        .map(|row| {
            let mut best = (0usize, f64::NEG_INFINITY);
            for (i, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::Divergence("non-finite logit".into()));
                }
                if x > best.1 {
                    best = (i, x);
                }
            }
            Ok(best.0 as u32)
        })
        .collect()
}

/// Samples one token per row from `softmax(logits / temperature)`.
pub fn sample_tokens(logits: &Tensor, temperature: f64, rng: &mut impl Rng) -> Result<Vec<u32>> {
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let k = *logits.dims().last().expect("rank >= 1");
    let v = logits.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    Ok(v.chunks_exact(k)
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = row.iter().map(|x| ((x - m) / temperature).exp()).collect();
            let total: f64 = w.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            for (i, wi) in w.iter().enumerate() {
                if u < *wi {
                    return i as u32;
                }
                u -= wi;
            }
            (k - 1) as u32
        })
        .collect())
}
