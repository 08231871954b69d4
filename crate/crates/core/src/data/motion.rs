use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::role::Role;
use crate::error::{Error, Result};

pub const EXPR_DIM: usize = 50;
pub const POSE_DIM: usize = 6;
pub const MOTION_DIM: usize = EXPR_DIM + POSE_DIM;
pub const DEFAULT_FRAME_RATE_HZ: f32 = 25.0;

/// Which slice of the motion coefficients a metric or model looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionPart {
    Expression,
    Pose,
}

impl MotionPart {
    pub fn range(self) -> std::ops::Range<usize> {
        match self {
            MotionPart::Expression => 0..EXPR_DIM,
            MotionPart::Pose => EXPR_DIM..MOTION_DIM,
        }
    }
}

/// Per-frame facial motion: 50 expression coefficients followed by 6 pose
/// coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    frames: Array2<f32>,
    frame_rate_hz: f32,
}

impl MotionSequence {
    pub fn new(frames: Array2<f32>) -> Result<Self> {
        if frames.ncols() != MOTION_DIM {
            return Err(Error::shape(format!(
                "motion needs {MOTION_DIM} columns, got {}",
                frames.ncols()
            )));
        }
        if frames.nrows() == 0 {
            return Err(Error::shape("motion sequence is empty"));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("motion contains non-finite values"));
        }
        Ok(Self {
            frames,
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
        })
    }

    pub fn from_parts(expression: ArrayView2<f32>, pose: ArrayView2<f32>) -> Result<Self> {
        if expression.ncols() != EXPR_DIM || pose.ncols() != POSE_DIM {
            return Err(Error::shape("expression/pose widths must be 50/6"));
        }
        if expression.nrows() != pose.nrows() {
            return Err(Error::shape("expression and pose lengths differ"));
        }
        Self::new(concatenate![Axis(1), expression, pose])
    }

    pub fn with_frame_rate(mut self, hz: f32) -> Result<Self> {
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(Error::invalid("frame rate must be positive"));
        }
        self.frame_rate_hz = hz;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frame_rate_hz(&self) -> f32 {
        self.frame_rate_hz
    }

    pub fn frames(&self) -> &Array2<f32> {
        &self.frames
    }

    pub fn into_frames(self) -> Array2<f32> {
        self.frames
    }

    pub fn part(&self, part: MotionPart) -> ArrayView2<'_, f32> {
        self.frames.slice(s![.., part.range()])
    }

    pub fn expression(&self) -> ArrayView2<'_, f32> {
        self.part(MotionPart::Expression)
    }

    pub fn pose(&self) -> ArrayView2<'_, f32> {
        self.part(MotionPart::Pose)
    }

    /// Right-pads by repeating the last frame until the length is a multiple of `w`.
    pub fn pad_to_multiple(&self, w: usize) -> MotionSequence {
        MotionSequence {
            frames: pad_rows_to_multiple(&self.frames, w),
            frame_rate_hz: self.frame_rate_hz,
        }
    }

    pub fn truncate(&self, t: usize) -> Result<MotionSequence> {
        if t == 0 || t > self.len() {
            return Err(Error::shape(format!("cannot truncate {} frames to {t}", self.len())));
        }
        Ok(MotionSequence {
            frames: self.frames.slice(s![..t, ..]).to_owned(),
            frame_rate_hz: self.frame_rate_hz,
        })
    }
}

pub(crate) fn pad_rows_to_multiple(a: &Array2<f32>, w: usize) -> Array2<f32> {
    let t = a.nrows();
    let padded = t.div_ceil(w.max(1)) * w.max(1);
    if padded == t {
        return a.clone();
    }
    Array2::from_shape_fn((padded, a.ncols()), |(i, j)| a[[i.min(t - 1), j]])
}

/// Precomputed speech features (one row per audio frame).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatureSequence {
    features: Array2<f32>,
}

impl AudioFeatureSequence {
    pub fn new(features: Array2<f32>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::shape("audio features must be non-empty"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("audio contains non-finite values"));
        }
        Ok(Self { features })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn pad_to_multiple(&self, w: usize) -> AudioFeatureSequence {
        AudioFeatureSequence {
            features: pad_rows_to_multiple(&self.features, w),
        }
    }
}

/// Resamples audio features to `t_target` frames by linear interpolation in time.
pub fn align_audio(audio: &AudioFeatureSequence, t_target: usize) -> Result<AudioFeatureSequence> {
    if t_target < 1 {
        return Err(Error::invalid("target length must be at least 1"));
    }
    let src = &audio.features;
    let t_src = src.nrows();
    if t_src == t_target {
        return Ok(audio.clone());
    }
    let scale = if t_target > 1 {
        (t_src - 1) as f64 / (t_target - 1) as f64
    } else {
        0.0
    };
    let mut out = Array2::zeros((t_target, src.ncols()));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let pos = i as f64 * scale;
        let lo = (pos.floor() as usize).min(t_src - 1);
        let hi = (lo + 1).min(t_src - 1);
        let frac = pos - lo as f64;
        for (j, v) in row.iter_mut().enumerate() {
            let (a, b) = (src[[lo, j]] as f64, src[[hi, j]] as f64);
            *v = if frac == 0.0 { a as f32 } else { (a + (b - a) * frac) as f32 };
        }
    }
    AudioFeatureSequence::new(out)
}

/// One conversation clip: speaker motion, listener motion and the speaker's audio.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicSample {
    pub clip_id: String,
    pub speaker: MotionSequence,
    pub listener: MotionSequence,
    pub audio: AudioFeatureSequence,
}

impl DyadicSample {
    /// Audio of a different length is resampled to the motion length.
    pub fn new(
        clip_id: impl Into<String>,
        speaker: MotionSequence,
        listener: MotionSequence,
        audio: AudioFeatureSequence,
    ) -> Result<Self> {
        if speaker.len() != listener.len() {
            return Err(Error::shape(format!(
                "speaker has {} frames, listener {}",
                speaker.len(),
                listener.len()
            )));
        }
        let audio = align_audio(&audio, speaker.len())?;
        Ok(Self {
            clip_id: clip_id.into(),
            speaker,
            listener,
            audio,
        })
    }

    pub fn len(&self) -> usize {
        self.speaker.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn motion(&self, role: Role) -> &MotionSequence {
        match role {
            Role::Speaker => &self.speaker,
            Role::Listener => &self.listener,
        }
    }
}
