use std::path::Path;

use candle_core::{DType, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::VqConfig;
use super::model::{is_statistic, StopGrad, VqModel};
use crate::data::{MotionSequence, Role};
use crate::error::{Error, Result};
use crate::nn::{check_finite, padded_batch, Adam};

/// Per-step loss values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VqTrainLog {
    /// Reconstruction MSE over the whole dataset before the first update.
    pub initial_recon: f64,
    pub total: Vec<f64>,
    pub recon: Vec<f64>,
    pub codebook: Vec<f64>,
}

impl VqTrainLog {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "total", "recon", "codebook"])?;
        for i in 0..self.total.len() {
            w.write_record([
                i.to_string(),
                self.total[i].to_string(),
                self.recon[i].to_string(),
                self.codebook[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean of the last `window` entries of the total loss.
    pub fn tail_mean(&self, window: usize) -> Option<f64> {
        let n = self.total.len();
        (n >= window && window > 0).then(|| self.total[n - window..].iter().sum::<f64>() / window as f64)
    }
}

/// Epoch-shuffled batches of indices.
pub(crate) struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub(crate) fn new(n: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            cursor: n,
        }
    }

    pub(crate) fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let n = self.order.len();
        let size = size.min(n);
        if self.cursor + size > n {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + size].to_vec();
        self.cursor += size;
        out
    }
}

fn batch_tensor(motions: &[MotionSequence], idx: &[usize], stride: usize, dtype: DType) -> Result<Tensor> {
    let len = idx.iter().map(|&i| motions[i].len()).max().unwrap_or(0);
    let len = len.div_ceil(stride) * stride;
    let views: Vec<_> = idx.iter().map(|&i| motions[i].frames().view()).collect();
    padded_batch(&views, len, dtype)
}

/// Replaces the codebook with latent rows drawn (seeded) from the training set.
fn init_codebook_from_data(model: &VqModel, motions: &[MotionSequence], rng: &mut ChaCha8Rng) -> Result<()> {
    let mut rows: Vec<Tensor> = Vec::new();
    for m in motions {
        let z = model.encode_latent(&batch_tensor(std::slice::from_ref(m), &[0], model.stride(), model.dtype())?)?;
        rows.push(z.squeeze(0)?);
    }
    let all = Tensor::cat(&rows, 0)?;
    let n = all.dims()[0];
    let k = model.codebook_size();
    let picks: Vec<u32> = if n >= k {
        rand::seq::index::sample(rng, n, k).into_iter().map(|i| i as u32).collect()
    } else {
        (0..k).map(|i| (i % n) as u32).collect()
    };
    let idx = Tensor::from_vec(picks, k, all.device())?;
    let mut entries = all.index_select(&idx, 0)?;
    if n < k {
        // Duplicated rows would never win a tie, so spread them slightly.
        let normal = rand_distr::Normal::new(0.0f64, 1e-3).expect("valid std");
        let noise: Vec<f64> = (0..entries.elem_count()).map(|_| rand_distr::Distribution::sample(&normal, rng)).collect();
        let jitter = Tensor::from_vec(noise, entries.dims(), entries.device())?.to_dtype(entries.dtype())?;
        entries = (entries + jitter)?;
    }
    model.set_codebook(&entries)
}

/// Moves every entry with a zero count onto a random latent row of `latent`.
fn restart_dead_codes(model: &VqModel, counts: &[u64], latent: &Tensor, rng: &mut ChaCha8Rng) -> Result<usize> {
    let dead: Vec<usize> = (0..counts.len()).filter(|&k| counts[k] == 0).collect();
    if dead.is_empty() {
        return Ok(0);
    }
    let d = model.config().code_dim;
    let rows = latent.reshape(((), d))?;
    let n = rows.dims()[0];
    let picks: Vec<u32> = dead.iter().map(|_| rng.gen_range(0..n) as u32).collect();
    let fresh = rows.index_select(&Tensor::from_vec(picks, dead.len(), rows.device())?, 0)?;
    let mut entries = model.codebook_tensor().detach().copy()?;
    let idx = Tensor::from_vec(dead.iter().map(|&k| k as u32).collect::<Vec<_>>(), dead.len(), rows.device())?;
    entries = entries.index_add(&idx, &(fresh - entries.index_select(&idx, 0)?)?, 0)?;
    model.set_codebook(&entries)?;
    Ok(dead.len())
}

/// Trains a VQ model for one role. Deterministic for a fixed config.
pub fn train_vq(motions: &[MotionSequence], role: Role, config: &VqConfig) -> Result<(VqModel, VqTrainLog)> {
    if motions.is_empty() {
        return Err(Error::invalid("train_vq needs a non-empty dataset"));
    }
    let mut model = VqModel::new(role, config.clone(), DType::F32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(17));
    model.fit_normalization(motions)?;
    if config.data_init {
        init_codebook_from_data(&model, motions, &mut rng)?;
    }
    let mut opt = Adam::new(model.store().vars_where(|n| !is_statistic(n)), config.learning_rate)?;
    let mut sampler = BatchSampler::new(motions.len(), config.seed);
    let mut log = VqTrainLog {
        initial_recon: model.recon_mse(motions)?,
        ..VqTrainLog::default()
    };
    let mut window = vec![0u64; config.codebook_size];
    for step in 0..config.steps {
        let idx = sampler.next_batch(config.batch_size);
        let x = batch_tensor(motions, &idx, config.stride, DType::F32)?;
        let (losses, snap) = model.loss_tensors(&x, StopGrad::Live)?;
        let v = losses.values()?;
        check_finite("VQ loss", step, v.total)?;
        opt.step(&losses.total)?;
        for &t in &snap.tokens {
            window[t as usize] += 1;
        }
        let every = config.dead_code_interval;
        if every > 0 && (step + 1) % every == 0 && step + 1 < config.steps {
            restart_dead_codes(&model, &window, &snap.latent, &mut rng)?;
            window.iter_mut().for_each(|c| *c = 0);
        }
        log.total.push(v.total);
        log.recon.push(v.recon);
        log.codebook.push(v.codebook);
        if step % 500 == 0 {
            log::debug!("vq[{role}] step {step}: total {:.5} recon {:.5}", v.total, v.recon);
        }
    }
    model.steps = config.steps;
    model.final_losses = None;
    if let (Some(&total), Some(&recon), Some(&codebook)) = (log.total.last(), log.recon.last(), log.codebook.last()) {
        model.final_losses = Some(super::VqLosses { recon, codebook, total });
    }
    model.reset_usage();
    for m in motions {
        model.vq_encode(m)?;
    }
    Ok((model, log))
}
