//! Non-learned reference generators.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{DyadicSample, MotionSequence, MOTION_DIM};
use crate::error::{Error, Result};

pub const RANDOM_SIGMA_SCALE: f64 = 0.05;
pub const MIRROR_WINDOW: usize = 5;

/// First `t` frames of `m`, repeating the last frame if `m` is shorter.
fn fit_length(m: &MotionSequence, t: usize) -> Result<MotionSequence> {
    let f = m.frames();
    let n = f.nrows();
    MotionSequence::new(Array2::from_shape_fn((t, MOTION_DIM), |(i, j)| f[[i.min(n - 1), j]]))
}

fn clip_hash(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// A training listener clip plus small Gaussian noise.
#[derive(Debug, Clone)]
pub struct RandomBaseline {
    listeners: Vec<MotionSequence>,
    sigma: Array1<f64>,
    seed: u64,
}

pub fn baseline_random(corpus: &[DyadicSample], seed: u64) -> Result<RandomBaseline> {
    RandomBaseline::new(corpus, seed, RANDOM_SIGMA_SCALE)
}

impl RandomBaseline {
    /// `scale` multiplies the per-coefficient population std of training listeners.
    pub fn new(corpus: &[DyadicSample], seed: u64, scale: f64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid("random baseline needs a training corpus"));
        }
        let views: Vec<_> = corpus.iter().map(|s| s.listener.frames().view()).collect();
        let all = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))?;
        let all = all.mapv(f64::from);
        let sigma = all.std_axis(Axis(0), 0.0) * scale;
        Ok(Self {
            listeners: corpus.iter().map(|s| s.listener.clone()).collect(),
            sigma,
            seed,
        })
    }

    pub fn generate(&self, clip_id: &str, t: usize) -> Result<MotionSequence> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ clip_hash(clip_id));
        let pick = rng.gen_range(0..self.listeners.len());
        let base = fit_length(&self.listeners[pick], t)?;
        let mut frames = base.into_frames();
        for ((_, j), v) in frames.indexed_iter_mut() {
            let s = self.sigma[j];
            if s > 0.0 {
                *v += Normal::new(0.0, s).expect("finite std").sample(&mut rng) as f32;
            }
        }
        MotionSequence::new(frames)
    }
}

/// Listener of the training clip whose mean speaker frame is nearest (L2).
#[derive(Debug, Clone)]
pub struct NearestMotionBaseline {
    keys: Vec<Array1<f64>>,
    listeners: Vec<MotionSequence>,
}

fn mean_frame(m: &MotionSequence) -> Array1<f64> {
    m.frames().mapv(f64::from).mean_axis(Axis(0)).expect("non-empty motion")
}

pub fn baseline_nearest_motion(corpus: &[DyadicSample]) -> Result<NearestMotionBaseline> {
    if corpus.is_empty() {
        return Err(Error::invalid("nearest-motion baseline needs a training corpus"));
    }
    Ok(NearestMotionBaseline {
        keys: corpus.iter().map(|s| mean_frame(&s.speaker)).collect(),
        listeners: corpus.iter().map(|s| s.listener.clone()).collect(),
    })
}

impl NearestMotionBaseline {
    pub fn generate(&self, speaker: &MotionSequence) -> Result<MotionSequence> {
        let q = mean_frame(speaker);
        let mut best = (0, f64::INFINITY);
        for (i, k) in self.keys.iter().enumerate() {
            let d: f64 = k.iter().zip(q.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        fit_length(&self.listeners[best.0], speaker.len())
    }
}

/// Centered moving average of the speaker motion, shrinking at the edges.
#[derive(Debug, Clone, Copy)]
pub struct MirrorBaseline {
    pub window: usize,
}

pub fn baseline_mirror() -> MirrorBaseline {
    MirrorBaseline { window: MIRROR_WINDOW }
}

impl MirrorBaseline {
    pub fn generate(&self, speaker: &MotionSequence) -> Result<MotionSequence> {
        let f = speaker.frames();
        let t = f.nrows();
        let half = self.window / 2;
        let mut out = Array2::<f32>::zeros(f.dim());
        for i in 0..t {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(t);
            let mean = f.slice(ndarray::s![lo..hi, ..]).mapv(f64::from).mean_axis(Axis(0)).expect("non-empty");
            out.row_mut(i).assign(&mean.mapv(|v| v as f32));
        }
        MotionSequence::new(out)
    }
}

/// Every frame set to the training-set mean frame of the chosen role.
#[derive(Debug, Clone)]
pub struct MeanBaseline {
    mean: Array1<f32>,
}

impl MeanBaseline {
    pub fn fit(motions: &[&MotionSequence]) -> Result<Self> {
        if motions.is_empty() {
            return Err(Error::invalid("mean baseline needs motions"));
        }
        let views: Vec<_> = motions.iter().map(|m| m.frames().view()).collect();
        let all = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))?;
        let mean = all.mapv(f64::from).mean_axis(Axis(0)).expect("non-empty").mapv(|v| v as f32);
        Ok(Self { mean })
    }

    pub fn generate(&self, t: usize) -> Result<MotionSequence> {
        MotionSequence::new(Array2::from_shape_fn((t, MOTION_DIM), |(_, j)| self.mean[j]))
    }
}
