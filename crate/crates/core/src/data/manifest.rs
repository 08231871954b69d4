use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Ix2};
use serde::{Deserialize, Serialize};

use super::motion::{AudioFeatureSequence, DyadicSample, MotionSequence};
use crate::error::{Error, Result};
use crate::tensor_file::{load_f32, save_tensor_file, TensorData};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub speaker: PathBuf,
    pub listener: PathBuf,
    pub audio: PathBuf,
}

/// Paths are relative to the directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split: Split,
    pub seed: u64,
    pub samples: Vec<ManifestEntry>,
}

pub fn save_matrix(path: &Path, a: &Array2<f32>) -> Result<()> {
    save_tensor_file(path, &TensorData::F32(a.clone().into_dyn()))
}

pub fn load_matrix(path: &Path) -> Result<Array2<f32>> {
    load_f32(path)?
        .into_dimensionality::<Ix2>()
        .map_err(|_| Error::shape(format!("{} is not a matrix", path.display())))
}

pub fn load_motion(path: &Path) -> Result<MotionSequence> {
    MotionSequence::new(load_matrix(path)?)
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Loads every referenced clip; fails on duplicate ids or unreadable files.
    pub fn read_samples(&self, base: &Path) -> Result<Vec<DyadicSample>> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .map(|e| {
                if !seen.insert(e.clip_id.as_str()) {
                    return Err(Error::invalid(format!("duplicate clip id {}", e.clip_id)));
                }
                DyadicSample::new(
                    e.clip_id.clone(),
                    load_motion(&base.join(&e.speaker))?,
                    load_motion(&base.join(&e.listener))?,
                    AudioFeatureSequence::new(load_matrix(&base.join(&e.audio))?)?,
                )
            })
            .collect()
    }
}

/// Writes `dir/<clip_id>/{speaker,listener,audio}.dimt` and `dir/manifest.json`.
pub fn write_dataset(
    dir: &Path,
    split: Split,
    seed: u64,
    samples: &[DyadicSample],
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let clip_dir = PathBuf::from(&s.clip_id);
        std::fs::create_dir_all(dir.join(&clip_dir))?;
        let entry = ManifestEntry {
            clip_id: s.clip_id.clone(),
            speaker: clip_dir.join("speaker.dimt"),
            listener: clip_dir.join("listener.dimt"),
            audio: clip_dir.join("audio.dimt"),
        };
        save_matrix(&dir.join(&entry.speaker), s.speaker.frames())?;
        save_matrix(&dir.join(&entry.listener), s.listener.frames())?;
        save_matrix(&dir.join(&entry.audio), s.audio.features())?;
        entries.push(entry);
    }
    let manifest = DatasetManifest {
        split,
        seed,
        samples: entries,
    };
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<DyadicSample>)> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::MissingPrerequisite(format!("dataset manifest {}", path.display())));
    }
    let manifest = DatasetManifest::load(&path)?;
    let samples = manifest.read_samples(dir)?;
    Ok((manifest, samples))
}
