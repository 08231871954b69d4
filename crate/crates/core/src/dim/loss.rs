use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use super::model::{DimBatch, DimForward};
use crate::data::{MaskMap, Role};
use crate::error::{Error, Result};
use crate::nn::{log_softmax_last, scalar};

/// Speaker-anchored InfoNCE over mean-pooled features (`N × d` each).
pub fn contrastive_loss(pooled_s: &Tensor, pooled_l: &Tensor, tau: f64) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let (n, _) = pooled_s.dims2()?;
    if n == 0 || pooled_l.dims() != pooled_s.dims() {
        return Err(Error::shape(format!("pooled shapes {:?} vs {:?}", pooled_s.dims(), pooled_l.dims())));
    }
    let logits = (pooled_s.matmul(&pooled_l.t()?)? / tau)?;
    let eye = Tensor::eye(n, pooled_s.dtype(), pooled_s.device())?;
    let positives = (log_softmax_last(&logits)? * eye)?.sum_all()?;
    Ok((positives.neg()? / n as f64)?)
}

/// Mean of the speaker-anchored and listener-anchored directions.
pub fn symmetric_contrastive_loss(pooled_s: &Tensor, pooled_l: &Tensor, tau: f64) -> Result<Tensor> {
    let a = contrastive_loss(pooled_s, pooled_l, tau)?;
    let b = contrastive_loss(pooled_l, pooled_s, tau)?;
    Ok(((a + b)? * 0.5)?)
}

/// Reconstruction loss for one role over its masked positions: mean
/// cross-entropy over target tokens plus mean over masked frames of the
/// per-coefficient squared error. Zero when nothing is masked.
pub fn role_reconstruction_loss(
    logits: Option<&Tensor>,
    pred: &Tensor,
    target: &Tensor,
    tokens: &[u32],
    masks: &[MaskMap],
    stride: usize,
) -> Result<Tensor> {
    let (b, t, _) = target.dims3()?;
    let dtype = pred.dtype();
    let dev = pred.device();
    let frame_w: Vec<f32> = masks
        .iter()
        .flat_map(|m| (0..t).map(move |i| if m.is_masked(i) { 1.0 } else { 0.0 }))
        .collect();
    let n_frames: f32 = frame_w.iter().sum();
    if n_frames == 0.0 {
        return Ok(Tensor::zeros((), dtype, dev)?);
    }
    let frame_w = Tensor::from_vec(frame_w, (b, t), dev)?.to_dtype(dtype)?;
    let sq = (pred - target)?.sqr()?.mean(D::Minus1)?;
    let mut loss = ((sq * frame_w)?.sum_all()? / n_frames as f64)?;
    if let Some(logits) = logits {
        let (_, l, _) = logits.dims3()?;
        if tokens.len() != b * l {
            return Err(Error::shape(format!("{} target tokens for {b}×{l} logits", tokens.len())));
        }
        let tok_w: Vec<f32> = masks
            .iter()
            .flat_map(|m| m.token_targets(stride).into_iter().map(|x| if x { 1.0 } else { 0.0 }))
            .collect();
        let n_tok: f32 = tok_w.iter().sum();
        let tok_w = Tensor::from_vec(tok_w, (b, l), dev)?.to_dtype(dtype)?;
        let idx = Tensor::from_slice(tokens, (b, l, 1), dev)?;
        let nll = log_softmax_last(logits)?.gather(&idx, 2)?.squeeze(2)?.neg()?;
        loss = (loss + ((nll * tok_w)?.sum_all()? / n_tok as f64)?)?;
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimLosses {
    pub l_c: f64,
    pub l_rec_s: f64,
    pub l_rec_l: f64,
    pub total: f64,
}

impl DimLosses {
    pub fn as_row(&self) -> [f64; 4] {
        [self.total, self.l_c, self.l_rec_s, self.l_rec_l]
    }
}

pub struct DimLossTensors {
    pub l_c: Tensor,
    pub l_rec_s: Tensor,
    pub l_rec_l: Tensor,
    pub total: Tensor,
}

impl DimLossTensors {
    pub fn values(&self) -> Result<DimLosses> {
        Ok(DimLosses {
            l_c: scalar(&self.l_c)?,
            l_rec_s: scalar(&self.l_rec_s)?,
            l_rec_l: scalar(&self.l_rec_l)?,
            total: scalar(&self.total)?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: f64,
    pub symmetric: bool,
    pub mask_p: f64,
}

/// `λ1·L_c + λ2·(L_rec_s + L_rec_l)`.
pub fn dim_losses(out: &DimForward, batch: &DimBatch, stride: usize, w: LossWeights) -> Result<DimLossTensors> {
    let dtype = out.pred_s.dtype();
    let l_c = if w.lambda1 > 0.0 || w.symmetric {
        if w.symmetric {
            symmetric_contrastive_loss(&out.pooled_s, &out.pooled_l, w.tau)?
        } else {
            contrastive_loss(&out.pooled_s, &out.pooled_l, w.tau)?
        }
    } else {
        Tensor::zeros((), dtype, out.pred_s.device())?
    };
    let rec = |role: Role| -> Result<Tensor> {
        let masks = out.masks(role);
        if w.mask_p > 0.0 && masks.iter().all(|m| m.is_empty()) {
            return Err(Error::invalid(format!("{role} mask is empty although p = {}", w.mask_p)));
        }
        role_reconstruction_loss(out.logits(role), out.pred(role), batch.motion(role), batch.tokens(role), masks, stride)
    };
    let l_rec_s = rec(Role::Speaker)?;
    let l_rec_l = rec(Role::Listener)?;
    let total = ((&l_c * w.lambda1)? + ((&l_rec_s + &l_rec_l)? * w.lambda2)?)?;
    Ok(DimLossTensors { l_c, l_rec_s, l_rec_l, total })
}

/// `(correct, total)` argmax predictions over target token positions.
pub fn masked_token_hits(logits: &Tensor, tokens: &[u32], masks: &[MaskMap], stride: usize) -> Result<(usize, usize)> {
    let pred = super::model::argmax_tokens(logits)?;
    let (_, l, _) = logits.dims3()?;
    let mut hits = 0;
    let mut total = 0;
    for (b, m) in masks.iter().enumerate() {
        for (i, target) in m.token_targets(stride).into_iter().enumerate() {
            if target {
                total += 1;
                hits += (pred[b * l + i] == tokens[b * l + i]) as usize;
            }
        }
    }
    Ok((hits, total))
}
