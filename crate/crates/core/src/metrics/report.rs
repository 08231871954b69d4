use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::diversity::{sid_from_labels, variation};
use super::fd::frechet_distance;
use super::kmeans::{kmeans_fit, ClusterModel};
use super::pcc::{pcc_per_dim, rpcc};
use super::vertex::{lip_vertex_error, upper_face_dynamics_deviation, VertexProxy};
use crate::data::{MotionPart, MotionSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub lip_vertex_indices: Vec<usize>,
    pub upper_face_vertex_indices: Vec<usize>,
    pub n_vertices: usize,
    pub vertex_seed: u64,
    pub kmeans_k_expr: usize,
    pub kmeans_k_pose: usize,
    pub kmeans_iters: usize,
    pub kmeans_seed: u64,
    /// Average FD/P-FD over clips instead of pooling frames across clips.
    pub fd_per_clip: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            lip_vertex_indices: (0..16).collect(),
            upper_face_vertex_indices: (32..64).collect(),
            n_vertices: 64,
            vertex_seed: 0,
            kmeans_k_expr: 40,
            kmeans_k_pose: 20,
            kmeans_iters: 100,
            kmeans_seed: 0,
            fd_per_clip: false,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        let (lip, upper) = (&self.lip_vertex_indices, &self.upper_face_vertex_indices);
        if lip.is_empty() || upper.is_empty() {
            return Err(Error::Config("lip and upper-face vertex sets must be non-empty".into()));
        }
        if lip.iter().chain(upper).any(|&v| v >= self.n_vertices) {
            return Err(Error::Config("vertex index beyond n_vertices".into()));
        }
        if lip.iter().any(|v| upper.contains(v)) {
            return Err(Error::Config("lip and upper-face vertex sets overlap".into()));
        }
        if self.kmeans_k_expr == 0 || self.kmeans_k_pose == 0 {
            return Err(Error::Config("k-means cluster counts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("serializable")))
    }
}

/// Named metric values; `*_exp` columns use the 50 expression coefficients,
/// `*_pose` the 6 pose coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fd_exp: f64,
    pub fd_pose: f64,
    pub pfd_exp: f64,
    pub pfd_pose: f64,
    pub mse_exp: f64,
    pub mse_pose: f64,
    pub sid_exp: f64,
    pub sid_pose: f64,
    pub var_exp: f64,
    pub var_pose: f64,
    pub rpcc_exp: f64,
    pub rpcc_pose: f64,
    pub lve: f64,
    pub fdd: f64,
    pub config_hash: String,
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 15] = [
        "fd_exp", "fd_pose", "pfd_exp", "pfd_pose", "mse_exp", "mse_pose", "sid_exp", "sid_pose",
        "var_exp", "var_pose", "rpcc_exp", "rpcc_pose", "lve", "fdd", "config_hash",
    ];

    pub fn values(&self) -> [f64; 14] {
        [
            self.fd_exp, self.fd_pose, self.pfd_exp, self.pfd_pose, self.mse_exp, self.mse_pose,
            self.sid_exp, self.sid_pose, self.var_exp, self.var_pose, self.rpcc_exp,
            self.rpcc_pose, self.lve, self.fdd,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut row: Vec<String> = self.values().iter().map(|v| format!("{v:.6}")).collect();
        row.push(self.config_hash.clone());
        row
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Writes a header plus one row; `label` becomes the first column.
    pub fn save_csv(&self, path: &Path, label: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["method"];
        header.extend(Self::COLUMNS);
        w.write_record(&header)?;
        let mut row = vec![label.to_string()];
        row.extend(self.csv_row());
        w.write_record(&row)?;
        w.flush()?;
        Ok(())
    }
}

pub fn mse(pred: ArrayView2<f32>, gt: ArrayView2<f32>) -> Result<f64> {
    if pred.dim() != gt.dim() {
        return Err(Error::shape(format!("mse shapes {:?} vs {:?}", pred.dim(), gt.dim())));
    }
    let n = pred.len().max(1) as f64;
    Ok(pred
        .iter()
        .zip(gt.iter())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / n)
}

/// FD over listener features concatenated with the paired speaker features.
pub fn paired_fd(
    gen_listener: ArrayView2<f32>,
    speaker: ArrayView2<f32>,
    gt_listener: ArrayView2<f32>,
) -> Result<f64> {
    if gen_listener.dim() != gt_listener.dim() || gen_listener.nrows() != speaker.nrows() {
        return Err(Error::shape("paired FD inputs must be aligned"));
    }
    let gen = concatenate![Axis(1), gen_listener, speaker];
    let gt = concatenate![Axis(1), gt_listener, speaker];
    frechet_distance(gen.view(), gt.view())
}

/// Cluster models for the diversity index, one per motion part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidClusters {
    pub expression: ClusterModel,
    pub pose: ClusterModel,
}

fn pooled(motions: &[&MotionSequence], part: MotionPart) -> Array2<f64> {
    let views: Vec<ArrayView2<f32>> = motions.iter().map(|m| m.part(part)).collect();
    concatenate(Axis(0), &views).expect("same width").mapv(f64::from)
}

impl SidClusters {
    /// Fits both cluster models on the frames of a reference corpus.
    pub fn fit(corpus: &[&MotionSequence], config: &MetricConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid("cannot fit clusters on an empty corpus"));
        }
        Ok(Self {
            expression: kmeans_fit(
                pooled(corpus, MotionPart::Expression).view(),
                config.kmeans_k_expr,
                config.kmeans_iters,
                config.kmeans_seed,
            )?,
            pose: kmeans_fit(
                pooled(corpus, MotionPart::Pose).view(),
                config.kmeans_k_pose,
                config.kmeans_iters,
                config.kmeans_seed,
            )?,
        })
    }

    fn model(&self, part: MotionPart) -> &ClusterModel {
        match part {
            MotionPart::Expression => &self.expression,
            MotionPart::Pose => &self.pose,
        }
    }
}

pub type Corpus = BTreeMap<String, MotionSequence>;

struct Aligned<'a> {
    gen: Vec<&'a MotionSequence>,
    gt: Vec<&'a MotionSequence>,
    speaker: Vec<&'a MotionSequence>,
}

fn align<'a>(generated: &'a Corpus, gt: &'a Corpus, speaker: &'a Corpus) -> Result<Aligned<'a>> {
    if gt.is_empty() {
        return Err(Error::invalid("empty ground-truth corpus"));
    }
    let mut out = Aligned {
        gen: Vec::new(),
        gt: Vec::new(),
        speaker: Vec::new(),
    };
    for (id, g) in gt {
        let p = generated
            .get(id)
            .ok_or_else(|| Error::MissingPrerequisite(format!("generated clip {id}")))?;
        let s = speaker
            .get(id)
            .ok_or_else(|| Error::MissingPrerequisite(format!("speaker clip {id}")))?;
        if p.len() != g.len() || s.len() != g.len() {
            return Err(Error::shape(format!("clip {id}: lengths differ")));
        }
        out.gen.push(p);
        out.gt.push(g);
        out.speaker.push(s);
    }
    Ok(out)
}

fn fd_for(a: &Aligned, part: MotionPart, per_clip: bool, paired: bool) -> Result<f64> {
    let feats = |ms: &[&MotionSequence], with_speaker: bool| -> Array2<f32> {
        let rows: Vec<Array2<f32>> = ms
            .iter()
            .zip(&a.speaker)
            .map(|(m, s)| {
                if with_speaker {
                    concatenate![Axis(1), m.part(part), s.part(part)]
                } else {
                    m.part(part).to_owned()
                }
            })
            .collect();
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        concatenate(Axis(0), &views).expect("same width")
    };
    if per_clip {
        let mut total = 0.0;
        for i in 0..a.gt.len() {
            let (g, t) = (feats(&a.gen[i..=i], paired), feats(&a.gt[i..=i], paired));
            total += frechet_distance(g.view(), t.view())?;
        }
        Ok(total / a.gt.len() as f64)
    } else {
        frechet_distance(feats(&a.gen, paired).view(), feats(&a.gt, paired).view())
    }
}

/// Computes the full metric suite for generated listener (or speaker) motion.
pub fn evaluate(
    generated: &Corpus,
    gt: &Corpus,
    speaker: &Corpus,
    clusters: &SidClusters,
    config: &MetricConfig,
) -> Result<MetricReport> {
    config.validate()?;
    let a = align(generated, gt, speaker)?;
    let n_frames: usize = a.gt.iter().map(|m| m.len()).sum();

    let mse_part = |part: MotionPart| -> Result<f64> {
        let mut total = 0.0;
        for (p, g) in a.gen.iter().zip(&a.gt) {
            total += mse(p.part(part), g.part(part))? * p.len() as f64;
        }
        Ok(total / n_frames as f64)
    };
    let sid_part = |part: MotionPart| -> Result<f64> {
        let model = clusters.model(part);
        let mut total = 0.0;
        for m in &a.gen {
            let labels = model.assign(m.part(part).mapv(f64::from).view());
            total += sid_from_labels(&labels, model.k())?;
        }
        Ok(total / a.gen.len() as f64)
    };
    let var_part = |part: MotionPart| a.gen.iter().map(|m| variation(m.part(part))).sum::<f64>() / a.gen.len() as f64;
    let rpcc_part = |part: MotionPart| -> Result<f64> {
        let s = pooled(&a.speaker, part).mapv(|v| v as f32);
        let pred = pcc_per_dim(s.view(), pooled(&a.gen, part).mapv(|v| v as f32).view())?;
        let truth = pcc_per_dim(s.view(), pooled(&a.gt, part).mapv(|v| v as f32).view())?;
        rpcc(&pred, &truth)
    };

    let proxy = VertexProxy::new(config.n_vertices, config.vertex_seed);
    let (mut lve, mut fdd) = (0.0, 0.0);
    for (p, g) in a.gen.iter().zip(&a.gt) {
        let (vp, vg) = (proxy.vertices(p), proxy.vertices(g));
        lve += lip_vertex_error(vp.view(), vg.view(), &config.lip_vertex_indices)? * p.len() as f64;
        if p.len() >= 2 {
            fdd += upper_face_dynamics_deviation(vp.view(), vg.view(), &config.upper_face_vertex_indices)?;
        }
    }

    use MotionPart::{Expression as E, Pose as P};
    Ok(MetricReport {
        fd_exp: fd_for(&a, E, config.fd_per_clip, false)?,
        fd_pose: fd_for(&a, P, config.fd_per_clip, false)?,
        pfd_exp: fd_for(&a, E, config.fd_per_clip, true)?,
        pfd_pose: fd_for(&a, P, config.fd_per_clip, true)?,
        mse_exp: mse_part(E)?,
        mse_pose: mse_part(P)?,
        sid_exp: sid_part(E)?,
        sid_pose: sid_part(P)?,
        var_exp: var_part(E),
        var_pose: var_part(P),
        rpcc_exp: rpcc_part(E)?,
        rpcc_pose: rpcc_part(P)?,
        lve: lve / n_frames as f64,
        fdd: fdd / a.gt.len() as f64,
        config_hash: config.hash(),
    })
}
