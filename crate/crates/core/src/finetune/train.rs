use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DyadicSample, MaskMap, Role};
use crate::dim::{is_joint_decoder_param, role_reconstruction_loss, DimBatch, DimModel, MaskMode};
use crate::error::{Error, Result};
use crate::nn::{check_finite, scalar, Adam, Fingerprints};
use crate::vq::{is_decoder_param, BatchSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Listener,
    Speaker,
}

impl Task {
    pub fn role(self) -> Role {
        match self {
            Task::Listener => Role::Listener,
            Task::Speaker => Role::Speaker,
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "listener" => Ok(Task::Listener),
            "speaker" => Ok(Task::Speaker),
            _ => Err(Error::Config(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Pretrained,
    Scratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub task: Task,
    pub init: Init,
    pub unfreeze_vq_decoder: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Sample tokens at this temperature instead of greedy argmax.
    pub temperature: Option<f64>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            task: Task::Listener,
            init: Init::Pretrained,
            unfreeze_vq_decoder: true,
            learning_rate: 1e-5,
            epochs: 50,
            batch_size: 16,
            seed: 0,
            temperature: None,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("finetune.learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("finetune.batch_size must be positive".into()));
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("finetune.temperature must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// A fine-tuned DIM model bound to one generation task.
pub struct GeneratorModel {
    pub(crate) task: Task,
    pub(crate) model: DimModel,
    pub(crate) temperature: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct GeneratorManifest {
    task: Task,
    temperature: Option<f64>,
}

impl GeneratorModel {
    pub fn new(task: Task, model: DimModel) -> Self {
        Self {
            task,
            model,
            temperature: None,
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn model(&self) -> &DimModel {
        &self.model
    }

    pub fn into_model(self) -> DimModel {
        self.model
    }

    pub fn checkpoint_hash(&self) -> Result<String> {
        self.model.digest()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.model.save(dir)?;
        let m = GeneratorManifest {
            task: self.task,
            temperature: self.temperature,
        };
        std::fs::write(dir.join("generator.json"), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("generator.json");
        if !path.exists() {
            return Err(Error::MissingPrerequisite(format!("fine-tuned checkpoint {}", dir.display())));
        }
        let m: GeneratorManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(Self {
            task: m.task,
            model: DimModel::load(dir, candle_core::DType::F32)?,
            temperature: m.temperature,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FinetuneLog {
    pub losses: Vec<f64>,
    pub epoch_means: Vec<f64>,
}

/// Starting point for fine-tuning: a copy of the pretrained weights, or a
/// fresh initialization that keeps the pretrained VQ models.
pub fn initial_model(pretrained: &DimModel, config: &FinetuneConfig) -> Result<DimModel> {
    match config.init {
        Init::Pretrained => pretrained.duplicate(),
        Init::Scratch => pretrained.fresh_like(config.seed.wrapping_add(0xf1e5)),
    }
}

struct FreezeAudit {
    dim: Fingerprints,
    vq_s: Fingerprints,
    vq_l: Fingerprints,
}

impl FreezeAudit {
    fn check(&self, model: &DimModel) -> Result<()> {
        model.store().audit_unchanged(&self.dim)?;
        model.vq(Role::Speaker).store().audit_unchanged(&self.vq_s)?;
        model.vq(Role::Listener).store().audit_unchanged(&self.vq_l)
    }
}

fn task_masks(task: Task, b: usize, t: usize) -> (Vec<MaskMap>, Vec<MaskMap>) {
    match task {
        Task::Listener => (vec![MaskMap::none(t); b], vec![MaskMap::full(t); b]),
        Task::Speaker => (vec![MaskMap::full(t); b], vec![MaskMap::full(t); b]),
    }
}

/// Loss of the task's stream for one batch.
pub(crate) fn task_loss(model: &DimModel, task: Task, samples: &[&DyadicSample]) -> Result<candle_core::Tensor> {
    let batch = DimBatch::new(model, samples)?;
    let (ms, ml) = task_masks(task, batch.batch, batch.frames);
    let out = model.forward(&batch, ms, ml, MaskMode::Replace)?;
    let role = task.role();
    role_reconstruction_loss(
        out.logits(role),
        out.pred(role),
        batch.motion(role),
        batch.tokens(role),
        out.masks(role),
        model.stride(),
    )
}

fn run(model: DimModel, corpus: &[DyadicSample], config: &FinetuneConfig, task: Task) -> Result<(GeneratorModel, FinetuneLog)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("fine-tuning corpus is empty"));
    }
    let role = task.role();
    let unfreeze = config.unfreeze_vq_decoder;
    let dim_trainable = |n: &str| task == Task::Listener || is_joint_decoder_param(n);
    let vq_trainable = |r: Role, n: &str| unfreeze && r == role && is_decoder_param(n);

    let mut vars = model.store().vars_where(dim_trainable);
    vars.extend(model.vq(role).store().vars_where(|n| vq_trainable(role, n)));
    let audit = FreezeAudit {
        dim: model.store().fingerprints(|n| !dim_trainable(n))?,
        vq_s: model.vq(Role::Speaker).store().fingerprints(|n| !vq_trainable(Role::Speaker, n))?,
        vq_l: model.vq(Role::Listener).store().fingerprints(|n| !vq_trainable(Role::Listener, n))?,
    };
    let mut opt = Adam::new(vars, config.learning_rate)?;
    let mut sampler = BatchSampler::new(corpus.len(), config.seed.wrapping_add(3));
    let per_epoch = corpus.len().div_ceil(config.batch_size);
    let mut log = FinetuneLog::default();
    for _epoch in 0..config.epochs {
        let mut sum = 0.0;
        for _ in 0..per_epoch {
            let idx = sampler.next_batch(config.batch_size);
            let samples: Vec<&DyadicSample> = idx.iter().map(|&i| &corpus[i]).collect();
            let loss = task_loss(&model, task, &samples)?;
            let v = check_finite("fine-tune loss", log.losses.len(), scalar(&loss)?)?;
            opt.step(&loss)?;
            sum += v;
            log.losses.push(v);
        }
        audit.check(&model)?;
        log.epoch_means.push(sum / per_epoch as f64);
    }
    let mut generator = GeneratorModel::new(task, model);
    generator.temperature = config.temperature;
    Ok((generator, log))
}

/// Speaker stream visible, listener stream fully replaced by mask tokens;
/// trains everything except the VQ models, plus the listener VQ decoder when
/// `unfreeze_vq_decoder` is set.
pub fn finetune_listener(model: DimModel, corpus: &[DyadicSample], config: &FinetuneConfig) -> Result<(GeneratorModel, FinetuneLog)> {
    run(model, corpus, config, Task::Listener)
}

/// Both streams fully masked so audio alone drives the joint decoder; trains
/// only the joint decoder group and (optionally) the speaker VQ decoder.
pub fn finetune_speaker(model: DimModel, corpus: &[DyadicSample], config: &FinetuneConfig) -> Result<(GeneratorModel, FinetuneLog)> {
    run(model, corpus, config, Task::Speaker)
}
