use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{GeneratorModel, Task};
use crate::data::{AudioFeatureSequence, DyadicSample, MaskMap, MotionSequence, Role, MOTION_DIM};
use crate::data::manifest::{load_motion, save_matrix};
use crate::dim::{sample_tokens, DimBatch, MaskMode};
use crate::error::{Error, Result};
use crate::nn::to_array2;
use crate::vq::TokenSequence;

/// Generated motion plus the tokens it was decoded from (absent without VQ).
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub motion: MotionSequence,
    pub tokens: Option<TokenSequence>,
}

impl GeneratorModel {
    fn run(&self, speaker: &MotionSequence, audio: &AudioFeatureSequence, seed: u64) -> Result<Generated> {
        let t = speaker.len();
        let zeros = MotionSequence::new(Array2::zeros((t, MOTION_DIM)))?;
        let listener_in = zeros.clone();
        let speaker_in = match self.task {
            Task::Listener => speaker.clone(),
            Task::Speaker => zeros,
        };
        let sample = DyadicSample::new("generate", speaker_in, listener_in, audio.clone())?;
        let model = &self.model;
        let batch = DimBatch::new(model, &[&sample])?;
        let full = vec![MaskMap::full(batch.frames)];
        let (ms, ml) = match self.task {
            Task::Listener => (vec![MaskMap::none(batch.frames)], full),
            Task::Speaker => (full.clone(), full),
        };
        let out = model.forward(&batch, ms, ml, MaskMode::Replace)?;
        let role = self.task.role();
        let (tokens, pred) = match (self.temperature, out.logits(role)) {
            (Some(temp), Some(logits)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let tokens = sample_tokens(logits, temp, &mut rng)?;
                let (b, l, _) = logits.dims3()?;
                let vq = model.vq(role);
                (Some(tokens.clone()), vq.decode_latent(&vq.lookup(&tokens, b, l)?)?)
            }
            _ => model.hard_prediction(&out, role)?,
        };
        let frames = to_array2(&pred.squeeze(0)?)?;
        let motion = MotionSequence::new(frames)?.truncate(t)?;
        let tokens = tokens
            .map(|v| TokenSequence::new(v, model.vq(role).codebook_size()))
            .transpose()?;
        Ok(Generated { motion, tokens })
    }

    /// Listener motion for a speaker clip; same length as `speaker`.
    pub fn generate_listener(&self, speaker: &MotionSequence, audio: &AudioFeatureSequence) -> Result<Generated> {
        if self.task != Task::Listener {
            return Err(Error::Config("model was fine-tuned for speaker generation".into()));
        }
        self.run(speaker, audio, 0)
    }

    /// Speaker motion aligned to the audio length.
    pub fn generate_speaker(&self, audio: &AudioFeatureSequence) -> Result<Generated> {
        if self.task != Task::Speaker {
            return Err(Error::Config("model was fine-tuned for listener generation".into()));
        }
        if audio.is_empty() {
            return Err(Error::invalid("empty audio"));
        }
        let placeholder = MotionSequence::new(Array2::zeros((audio.len(), MOTION_DIM)))?;
        self.run(&placeholder, audio, 0)
    }

    /// Generation with an explicit sampling seed (only matters with a temperature).
    pub fn generate_seeded(&self, sample: &DyadicSample, seed: u64) -> Result<Generated> {
        match self.task {
            Task::Listener => self.run(&sample.speaker, &sample.audio, seed),
            Task::Speaker => {
                let placeholder = MotionSequence::new(Array2::zeros((sample.len(), MOTION_DIM)))?;
                self.run(&placeholder, &sample.audio, seed)
            }
        }
    }

    pub fn role(&self) -> Role {
        self.task.role()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSidecar {
    pub clip_id: String,
    pub checkpoint_hash: String,
    pub seed: u64,
    #[serde(default)]
    pub role: Option<Role>,
    #[serde(default)]
    pub data_hash: Option<String>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// Writes `<clip_id>.dimt` and `<clip_id>.json`.
pub fn write_generated(dir: &Path, motion: &MotionSequence, sidecar: &GeneratedSidecar) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_matrix(&dir.join(format!("{}.dimt", sidecar.clip_id)), motion.frames())?;
    std::fs::write(
        dir.join(format!("{}.json", sidecar.clip_id)),
        serde_json::to_string_pretty(sidecar)?,
    )?;
    Ok(())
}

/// Reads every `<clip_id>.dimt` with its sidecar from a generation directory.
pub fn read_generated(dir: &Path) -> Result<BTreeMap<String, (MotionSequence, GeneratedSidecar)>> {
    if !dir.is_dir() {
        return Err(Error::MissingPrerequisite(format!("generated directory {}", dir.display())));
    }
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("dimt") {
            continue;
        }
        let side_path = path.with_extension("json");
        let sidecar: GeneratedSidecar = serde_json::from_str(&std::fs::read_to_string(&side_path).map_err(|_| {
            Error::MissingPrerequisite(format!("sidecar {}", side_path.display()))
        })?)?;
        out.insert(sidecar.clip_id.clone(), (load_motion(&path)?, sidecar));
    }
    Ok(out)
}
