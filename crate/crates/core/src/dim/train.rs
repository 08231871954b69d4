use std::path::Path;

use super::loss::{dim_losses, masked_token_hits, DimLosses, LossWeights};
use super::model::{DimBatch, DimModel, MaskMode};
use crate::data::{uniform_mask, DyadicSample, MaskMap, Role};
use crate::error::{Error, Result};
use crate::nn::{check_finite, Adam, Fingerprints};
use crate::vq::BatchSampler;

/// Per-step loss rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DimTrainLog {
    pub steps: Vec<DimLosses>,
    pub epoch_means: Vec<DimLosses>,
}

impl DimTrainLog {
    /// Columns `step,total,L_c,L_rec_s,L_rec_l`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "total", "L_c", "L_rec_s", "L_rec_l"])?;
        for (i, l) in self.steps.iter().enumerate() {
            w.write_record([
                i.to_string(),
                l.total.to_string(),
                l.l_c.to_string(),
                l.l_rec_s.to_string(),
                l.l_rec_l.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mask seed for (run seed, epoch, sample index, role).
pub fn mask_seed(seed: u64, epoch: usize, sample: usize, role: Role) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ epoch as u64) ^ ((sample as u64) << 1 | role as u64))
}

/// Independent seeded masks for each sample and role.
pub fn batch_masks(
    frames: usize,
    p: f64,
    seed: u64,
    epoch: usize,
    indices: &[usize],
) -> Result<(Vec<MaskMap>, Vec<MaskMap>)> {
    let mk = |role| -> Result<Vec<MaskMap>> {
        indices
            .iter()
            .map(|&i| uniform_mask(frames, p, mask_seed(seed, epoch, i, role)))
            .collect()
    };
    Ok((mk(Role::Speaker)?, mk(Role::Listener)?))
}

pub(crate) fn frozen_vq_fingerprints(model: &DimModel) -> Result<(Fingerprints, Fingerprints)> {
    Ok((
        model.vq(Role::Speaker).store().fingerprints(|_| true)?,
        model.vq(Role::Listener).store().fingerprints(|_| true)?,
    ))
}

pub(crate) fn audit_vq(model: &DimModel, before: &(Fingerprints, Fingerprints)) -> Result<()> {
    model.vq(Role::Speaker).store().audit_unchanged(&before.0)?;
    model.vq(Role::Listener).store().audit_unchanged(&before.1)
}

pub(crate) fn weights(model: &DimModel) -> LossWeights {
    let c = model.config();
    LossWeights {
        lambda1: c.lambda1,
        lambda2: c.lambda2,
        tau: c.tau,
        symmetric: c.symmetric_contrastive,
        mask_p: c.mask_p,
    }
}

/// Masked pretraining. VQ models stay frozen (audited every epoch); an
/// optional checkpoint directory is rewritten after each epoch.
pub fn pretrain(model: &mut DimModel, corpus: &[DyadicSample], ckpt: Option<&Path>) -> Result<DimTrainLog> {
    if corpus.is_empty() {
        return Err(Error::invalid("pretraining corpus is empty"));
    }
    let cfg = model.config().clone();
    let mut opt = Adam::new(model.store().vars_where(|_| true), cfg.learning_rate)?;
    let before = frozen_vq_fingerprints(model)?;
    let mut sampler = BatchSampler::new(corpus.len(), cfg.seed.wrapping_add(1));
    let per_epoch = corpus.len().div_ceil(cfg.batch_size);
    let w = weights(model);
    let mut log = DimTrainLog::default();
    for epoch in 0..cfg.epochs {
        let mut sum = [0.0; 4];
        for _ in 0..per_epoch {
            let idx = sampler.next_batch(cfg.batch_size);
            let samples: Vec<&DyadicSample> = idx.iter().map(|&i| &corpus[i]).collect();
            let batch = DimBatch::new(model, &samples)?;
            let (ms, ml) = batch_masks(batch.frames, cfg.mask_p, cfg.seed, epoch, &idx)?;
            let out = model.forward(&batch, ms, ml, MaskMode::Remove)?;
            let losses = dim_losses(&out, &batch, model.stride(), w)?;
            let v = losses.values()?;
            check_finite("DIM loss", log.steps.len(), v.total)?;
            opt.step(&losses.total)?;
            for (s, x) in sum.iter_mut().zip(v.as_row()) {
                *s += x;
            }
            log.steps.push(v);
        }
        audit_vq(model, &before)?;
        let n = per_epoch as f64;
        let mean = DimLosses {
            total: sum[0] / n,
            l_c: sum[1] / n,
            l_rec_s: sum[2] / n,
            l_rec_l: sum[3] / n,
        };
        log::debug!("pretrain epoch {epoch}: total {:.4}", mean.total);
        log.epoch_means.push(mean);
        model.epoch += 1;
        model.loss_history.push(mean.as_row());
        if let Some(dir) = ckpt {
            model.save(dir)?;
        }
    }
    Ok(log)
}

/// Top-1 accuracy of masked-token prediction for both roles on `samples`.
pub fn masked_token_accuracy(model: &DimModel, samples: &[DyadicSample], seed: u64) -> Result<f64> {
    if !model.config().use_vq {
        return Err(Error::Config("token accuracy needs use_vq".into()));
    }
    let (mut hits, mut total) = (0, 0);
    for (chunk_i, chunk) in samples.chunks(model.config().batch_size).enumerate() {
        let refs: Vec<&DyadicSample> = chunk.iter().collect();
        let idx: Vec<usize> = (0..chunk.len()).map(|i| chunk_i * model.config().batch_size + i).collect();
        let batch = DimBatch::new(model, &refs)?;
        let (ms, ml) = batch_masks(batch.frames, model.config().mask_p, seed, usize::MAX, &idx)?;
        let out = model.forward(&batch, ms, ml, MaskMode::Remove)?;
        for role in Role::BOTH {
            let (h, t) = masked_token_hits(
                out.logits(role).expect("use_vq"),
                batch.tokens(role),
                out.masks(role),
                model.stride(),
            )?;
            hits += h;
            total += t;
        }
    }
    Ok(hits as f64 / total.max(1) as f64)
}
