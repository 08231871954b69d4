use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::ablate::AblationConfig;
use crate::data::SynthConfig;
use crate::dim::DimConfig;
use crate::error::{Error, Result};
use crate::finetune::FinetuneConfig;
use crate::metrics::MetricConfig;
use crate::vq::VqConfig;

pub const DIM_HOME_VAR: &str = "DIM_HOME";
pub const DEFAULT_ROOT: &str = "dim_runs";

/// Fractions of the synthetic corpus held out; the rest is the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            val_fraction: 0.1,
            test_fraction: 0.2,
        }
    }
}

impl SplitConfig {
    /// (train, val, test) clip counts for a corpus of `n`.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        let ok = |f: f64| (0.0..1.0).contains(&f);
        if !ok(self.val_fraction) || !ok(self.test_fraction) {
            return Err(Error::Config("split fractions must lie in [0, 1)".into()));
        }
        let test = (n as f64 * self.test_fraction).round() as usize;
        let val = (n as f64 * self.val_fraction).round() as usize;
        if test + val >= n {
            return Err(Error::Config(format!("split leaves no training clips out of {n}")));
        }
        Ok((n - test - val, val, test))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data_dir: Option<PathBuf>,
    pub ckpt_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub split: SplitConfig,
    pub vq: VqConfig,
    pub dim: DimConfig,
    pub finetune: FinetuneConfig,
    pub metrics: MetricConfig,
    pub ablation: AblationConfig,
    pub paths: PathsConfig,
}

/// Sections whose own seed follows the global one unless set explicitly.
const SEEDED: [(&str, &str); 5] = [
    ("synth", "seed"),
    ("vq", "seed"),
    ("dim", "seed"),
    ("finetune", "seed"),
    ("metrics", "kmeans_seed"),
];

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub root: Option<PathBuf>,
    /// `dotted.key=value` pairs; values parse as JSON, falling back to strings.
    pub set: Vec<String>,
}

fn config_error(origin: &str, text: &str, e: serde_json::Error) -> Error {
    let line = text.lines().nth(e.line().saturating_sub(1)).unwrap_or("").trim();
    Error::Config(format!("{origin}:{}:{}: {e} (near `{line}`)", e.line(), e.column()))
}

fn set_dotted(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--set expects key=value, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("--set {key}: {part} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

impl RunConfig {
    /// Parses a config document, applies overrides and propagates the global seed.
    /// Schema errors carry `origin:line:column`.
    pub fn from_json(text: &str, origin: &str, ov: &Overrides) -> Result<Self> {
        serde_json::from_str::<RunConfig>(text).map_err(|e| config_error(origin, text, e))?;
        let mut value: Value = serde_json::from_str(text).map_err(|e| config_error(origin, text, e))?;
        for s in &ov.set {
            set_dotted(&mut value, s)?;
        }
        if let Some(seed) = ov.seed {
            value["seed"] = seed.into();
        }
        let seed = value.get("seed").cloned().unwrap_or(Value::from(0u64));
        for (section, key) in SEEDED {
            let obj = value
                .as_object_mut()
                .expect("validated object")
                .entry(section)
                .or_insert_with(|| Value::Object(Default::default()));
            if let Some(obj) = obj.as_object_mut() {
                obj.entry(key).or_insert(seed.clone());
            }
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        if let Some(root) = &ov.root {
            cfg.paths = PathsConfig {
                data_dir: Some(root.join("data")),
                ckpt_dir: Some(root.join("ckpt")),
                out_dir: Some(root.join("out")),
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<Self> {
        match path {
            None => Self::from_json("{}", "<defaults>", ov),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text, &p.display().to_string(), ov)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate().map_err(|e| Error::Config(format!("synth: {e}")))?;
        self.split.counts(self.synth.n_clips)?;
        self.vq.validate()?;
        self.dim.validate()?;
        self.finetune.validate()?;
        self.metrics.validate()?;
        self.ablation.validate()
    }

    fn root() -> PathBuf {
        std::env::var_os(DIM_HOME_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.paths.data_dir.clone().unwrap_or_else(|| Self::root().join("data"))
    }

    pub fn ckpt_dir(&self) -> PathBuf {
        self.paths.ckpt_dir.clone().unwrap_or_else(|| Self::root().join("ckpt"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| Self::root().join("out"))
    }

    /// SHA-256 of the resolved config, excluding artifact locations.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = PathsConfig::default();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("serializable")))
    }
}
