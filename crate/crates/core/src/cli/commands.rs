use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candle_core::DType;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ablate::{run_ablation, write_ablation_csv, AblationResult};
use super::config::RunConfig;
use super::plot::{bar_chart, line_chart};
use crate::data::manifest::MANIFEST_FILE;
use crate::data::{read_dataset, synth_dyads, write_dataset, DyadicSample, MotionSequence, Role, Split};
use crate::dim::{pretrain, DimModel};
use crate::error::{Error, Result};
use crate::finetune::{
    baseline_mirror, baseline_nearest_motion, baseline_random, finetune_listener, finetune_speaker, initial_model,
    read_generated, write_generated, FinetuneConfig, FinetuneLog, GeneratedSidecar, GeneratorModel, Init,
    MeanBaseline, Task,
};
use crate::metrics::{evaluate, Corpus, MetricReport, SidClusters};
use crate::vq::{train_vq, VqModel};

pub const PROVENANCE_FILE: &str = "provenance.json";

/// Resolved configuration plus the global switches.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub force: bool,
    pub plots: bool,
}

/// Recorded next to every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub data_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dim,
    Random,
    Nearest,
    Mirror,
    Mean,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dim => "dim",
            Method::Random => "random",
            Method::Nearest => "nearest",
            Method::Mirror => "mirror",
            Method::Mean => "mean",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dim" => Method::Dim,
            "random" => Method::Random,
            "nearest" => Method::Nearest,
            "mirror" => Method::Mirror,
            "mean" => Method::Mean,
            _ => return Err(Error::Config(format!("unknown method {s:?}"))),
        })
    }
}

/// Maps an error to the process exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::MissingPrerequisite(_) => 3,
        Error::Divergence(_) => 4,
        _ => 1,
    }
}

/// SHA-256 over every split's manifest and the clip files it references.
pub fn data_hash(data_dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    let mut any = false;
    for split in Split::ALL {
        let dir = data_dir.join(split.as_str());
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            continue;
        }
        any = true;
        let manifest = crate::data::DatasetManifest::load(&manifest_path)?;
        h.update(split.as_str());
        h.update(std::fs::read(&manifest_path)?);
        for e in &manifest.samples {
            for p in [&e.speaker, &e.listener, &e.audio] {
                h.update(std::fs::read(dir.join(p))?);
            }
        }
    }
    if !any {
        return Err(Error::MissingPrerequisite(format!("dataset under {} (run `dim synth`)", data_dir.display())));
    }
    Ok(hex::encode(h.finalize()))
}

impl Context {
    fn data_dir(&self) -> PathBuf {
        self.config.data_dir()
    }

    fn ckpt(&self, name: &str) -> PathBuf {
        self.config.ckpt_dir().join(name)
    }

    fn out(&self, sub: &str) -> Result<PathBuf> {
        let p = self.config.out_dir().join(sub);
        std::fs::create_dir_all(&p)?;
        Ok(p)
    }

    pub fn split(&self, split: Split) -> Result<Vec<DyadicSample>> {
        let dir = self.data_dir().join(split.as_str());
        if !dir.join(MANIFEST_FILE).exists() {
            return Err(Error::MissingPrerequisite(format!("{split} split at {} (run `dim synth`)", dir.display())));
        }
        Ok(read_dataset(&dir)?.1)
    }

    fn provenance(&self) -> Result<Provenance> {
        Ok(Provenance {
            config_hash: self.config.hash(),
            data_hash: data_hash(&self.data_dir())?,
        })
    }

    fn write_provenance(&self, dir: &Path, p: &Provenance) -> Result<()> {
        std::fs::write(dir.join(PROVENANCE_FILE), serde_json::to_string_pretty(p)?)?;
        Ok(())
    }

    /// Refuses artifacts built from other data unless `--force`.
    fn check_data(&self, what: &str, recorded: Option<&str>, current: &str) -> Result<()> {
        match recorded {
            Some(r) if r != current && !self.force => Err(Error::Config(format!(
                "{what} was built from data {} but the current data is {} (use --force to override)",
                &r[..r.len().min(12)],
                &current[..12]
            ))),
            _ => Ok(()),
        }
    }

    fn check_ckpt(&self, dir: &Path, current: &str) -> Result<()> {
        let path = dir.join(PROVENANCE_FILE);
        if path.exists() {
            let p: Provenance = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            self.check_data(&dir.display().to_string(), Some(&p.data_hash), current)?;
        }
        Ok(())
    }

    fn load_vq(&self, role: Role, current: &str) -> Result<VqModel> {
        let dir = self.ckpt(&format!("vq_{role}"));
        let vq = VqModel::load(&dir, DType::F32).map_err(|e| match e {
            Error::MissingPrerequisite(m) => Error::MissingPrerequisite(format!("{m} (run `dim train-vq {role}`)")),
            other => other,
        })?;
        self.check_ckpt(&dir, current)?;
        Ok(vq)
    }
}

/// Writes the synthetic corpus as train/val/test datasets; returns the data hash.
pub fn cmd_synth(ctx: &Context) -> Result<String> {
    let c = &ctx.config;
    let samples = synth_dyads(&c.synth)?;
    let (n_train, n_val, _) = c.split.counts(samples.len())?;
    let parts = [
        (Split::Train, &samples[..n_train]),
        (Split::Val, &samples[n_train..n_train + n_val]),
        (Split::Test, &samples[n_train + n_val..]),
    ];
    for (split, part) in parts {
        let dir = ctx.data_dir().join(split.as_str());
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        write_dataset(&dir, split, c.synth.seed, part)?;
    }
    data_hash(&ctx.data_dir())
}

pub fn cmd_train_vq(ctx: &Context, role: Role) -> Result<VqModel> {
    let prov = ctx.provenance()?;
    let train = ctx.split(Split::Train)?;
    let motions: Vec<MotionSequence> = train.iter().map(|s| s.motion(role).clone()).collect();
    let (model, log) = train_vq(&motions, role, &ctx.config.vq)?;
    let dir = ctx.ckpt(&format!("vq_{role}"));
    model.save(&dir)?;
    ctx.write_provenance(&dir, &prov)?;
    log.save_csv(&ctx.out("logs")?.join(format!("vq_{role}.csv")))?;
    Ok(model)
}

pub fn cmd_pretrain(ctx: &Context) -> Result<DimModel> {
    let prov = ctx.provenance()?;
    let vq_s = ctx.load_vq(Role::Speaker, &prov.data_hash)?;
    let vq_l = ctx.load_vq(Role::Listener, &prov.data_hash)?;
    let train = ctx.split(Split::Train)?;
    let mut model = DimModel::new(ctx.config.dim.clone(), vq_s, vq_l, train[0].audio.width())?;
    let dir = ctx.ckpt("dim");
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    let log = pretrain(&mut model, &train, Some(&dir))?;
    model.save(&dir)?;
    ctx.write_provenance(&dir, &prov)?;
    log.save_csv(&ctx.out("logs")?.join("pretrain.csv"))?;
    Ok(model)
}

fn save_finetune_log(path: &Path, log: &FinetuneLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "loss"])?;
    for (i, l) in log.losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_finetune(ctx: &Context, task: Task) -> Result<GeneratorModel> {
    let prov = ctx.provenance()?;
    let cfg = FinetuneConfig {
        task,
        ..ctx.config.finetune.clone()
    };
    let base = match cfg.init {
        Init::Pretrained => {
            let dir = ctx.ckpt("dim");
            let m = DimModel::load(&dir, DType::F32).map_err(|e| match e {
                Error::MissingPrerequisite(m) => Error::MissingPrerequisite(format!("{m} (run `dim pretrain`)")),
                other => other,
            })?;
            ctx.check_ckpt(&dir, &prov.data_hash)?;
            m
        }
        Init::Scratch => {
            let vq_s = ctx.load_vq(Role::Speaker, &prov.data_hash)?;
            let vq_l = ctx.load_vq(Role::Listener, &prov.data_hash)?;
            let audio_dim = ctx.split(Split::Train)?[0].audio.width();
            DimModel::new(ctx.config.dim.clone(), vq_s, vq_l, audio_dim)?
        }
    };
    let train = ctx.split(Split::Train)?;
    let model = initial_model(&base, &cfg)?;
    let (g, log) = match task {
        Task::Listener => finetune_listener(model, &train, &cfg)?,
        Task::Speaker => finetune_speaker(model, &train, &cfg)?,
    };
    let dir = ctx.ckpt(&format!("finetune_{}", task.role()));
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    g.save(&dir)?;
    ctx.write_provenance(&dir, &prov)?;
    save_finetune_log(&ctx.out("logs")?.join(format!("finetune_{}.csv", task.role())), &log)?;
    Ok(g)
}

/// Generates motion for every clip of `split`; returns the output directory.
pub fn cmd_generate(
    ctx: &Context,
    method: Method,
    task: Task,
    split: Split,
    checkpoint: Option<&Path>,
) -> Result<PathBuf> {
    let prov = ctx.provenance()?;
    let samples = ctx.split(split)?;
    let seed = ctx.config.finetune.seed;
    let role = task.role();
    if task == Task::Speaker && matches!(method, Method::Random | Method::Nearest | Method::Mirror) {
        return Err(Error::Config(format!("method {} only generates listener motion", method.as_str())));
    }

    let mut outputs: Vec<(String, MotionSequence)> = Vec::with_capacity(samples.len());
    let checkpoint_hash = match method {
        Method::Dim => {
            let dir = checkpoint
                .map(Path::to_path_buf)
                .unwrap_or_else(|| ctx.ckpt(&format!("finetune_{role}")));
            let g = GeneratorModel::load(&dir).map_err(|e| match e {
                Error::MissingPrerequisite(m) => Error::MissingPrerequisite(format!("{m} (run `dim finetune {role}`)")),
                other => other,
            })?;
            ctx.check_ckpt(&dir, &prov.data_hash)?;
            if g.task() != task {
                return Err(Error::Config(format!("checkpoint {} was fine-tuned for the other task", dir.display())));
            }
            for s in &samples {
                outputs.push((s.clip_id.clone(), g.generate_seeded(s, seed)?.motion));
            }
            g.checkpoint_hash()?
        }
        _ => {
            let train = ctx.split(Split::Train)?;
            for s in &samples {
                let m = match method {
                    Method::Random => baseline_random(&train, seed)?.generate(&s.clip_id, s.len())?,
                    Method::Nearest => baseline_nearest_motion(&train)?.generate(&s.speaker)?,
                    Method::Mirror => baseline_mirror().generate(&s.speaker)?,
                    _ => {
                        let refs: Vec<&MotionSequence> = train.iter().map(|t| t.motion(role)).collect();
                        MeanBaseline::fit(&refs)?.generate(s.len())?
                    }
                };
                outputs.push((s.clip_id.clone(), m));
            }
            format!("baseline:{}", method.as_str())
        }
    };

    let dir = ctx.out("generated")?.join(format!("{}_{}_{}", method.as_str(), role, split));
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    for (clip_id, motion) in outputs {
        let sidecar = GeneratedSidecar {
            clip_id,
            checkpoint_hash: checkpoint_hash.clone(),
            seed,
            role: Some(role),
            data_hash: Some(prov.data_hash.clone()),
            config_hash: Some(prov.config_hash.clone()),
        };
        write_generated(&dir, &motion, &sidecar)?;
    }
    Ok(dir)
}

/// Scores a generation directory (or a dataset directory) against `split`.
/// The report lands in `out/reports/<dir name>.json`.
pub fn cmd_evaluate(ctx: &Context, generated_dir: &Path, split: Split, role: Option<Role>) -> Result<MetricReport> {
    let current = data_hash(&ctx.data_dir())?;
    let (generated, role): (Corpus, Role) = if generated_dir.join(MANIFEST_FILE).exists() {
        let role = role.unwrap_or(Role::Listener);
        let (_, samples) = read_dataset(generated_dir)?;
        (samples.into_iter().map(|s| (s.clip_id.clone(), s.motion(role).clone())).collect(), role)
    } else {
        let items = read_generated(generated_dir)?;
        let mut roles = items.values().filter_map(|(_, s)| s.role);
        let recorded = roles.next();
        let role = role.or(recorded).unwrap_or(Role::Listener);
        for (_, side) in items.values() {
            ctx.check_data(&format!("generated clip {}", side.clip_id), side.data_hash.as_deref(), &current)?;
        }
        (items.into_iter().map(|(k, (m, _))| (k, m)).collect(), role)
    };
    let samples = ctx.split(split)?;
    let gt: Corpus = samples.iter().map(|s| (s.clip_id.clone(), s.motion(role).clone())).collect();
    let partner: Corpus = samples.iter().map(|s| (s.clip_id.clone(), s.motion(role.other()).clone())).collect();
    let train = ctx.split(Split::Train)?;
    let refs: Vec<&MotionSequence> = train.iter().map(|s| s.motion(role)).collect();
    let clusters = SidClusters::fit(&refs, &ctx.config.metrics)?;
    let report = evaluate(&generated, &gt, &partner, &clusters, &ctx.config.metrics)?;
    let name = generated_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "generated".into());
    report.save_json(&ctx.out("reports")?.join(format!("{name}.json")))?;
    Ok(report)
}

fn read_series(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for rec in r.records() {
        for (c, v) in cols.iter_mut().zip(rec?.iter()) {
            c.push(v.parse().unwrap_or(f64::NAN));
        }
    }
    Ok(headers.into_iter().zip(cols).filter(|(h, _)| h != "step").collect())
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(ext))
        .collect();
    v.sort();
    Ok(v)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

const PLOTTED: [&str; 6] = ["fd_exp", "fd_pose", "pfd_exp", "pfd_pose", "mse_exp", "mse_pose"];

/// Aggregates reports into `out/report.csv`; with plots enabled also writes
/// loss curves and metric bars as SVG under `out/plots`. Returns the CSV path.
pub fn cmd_report(ctx: &Context, reports: &[PathBuf]) -> Result<PathBuf> {
    let paths = if reports.is_empty() {
        sorted_files(&ctx.out("reports")?, "json")?
    } else {
        reports.to_vec()
    };
    if paths.is_empty() {
        return Err(Error::MissingPrerequisite("no metric reports (run `dim evaluate`)".into()));
    }
    let mut loaded: BTreeMap<String, MetricReport> = BTreeMap::new();
    for p in &paths {
        if !p.exists() {
            return Err(Error::MissingPrerequisite(format!("report {}", p.display())));
        }
        loaded.insert(stem(p), MetricReport::load_json(p)?);
    }
    let csv_path = ctx.config.out_dir().join("report.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["method"];
    header.extend(MetricReport::COLUMNS);
    w.write_record(&header)?;
    for (name, r) in &loaded {
        let mut row = vec![name.clone()];
        row.extend(r.csv_row());
        w.write_record(&row)?;
    }
    w.flush()?;

    if ctx.plots {
        let plots = ctx.out("plots")?;
        for log in sorted_files(&ctx.config.out_dir().join("logs"), "csv")? {
            let name = stem(&log);
            std::fs::write(plots.join(format!("loss_{name}.svg")), line_chart(&name, &read_series(&log)?))?;
        }
        for (i, col) in PLOTTED.iter().enumerate() {
            let bars: Vec<(String, f64)> = loaded.iter().map(|(n, r)| (n.clone(), r.values()[i])).collect();
            std::fs::write(plots.join(format!("metric_{col}.svg")), bar_chart(col, &bars))?;
        }
    }
    Ok(csv_path)
}

pub fn cmd_ablate(ctx: &Context) -> Result<Vec<AblationResult>> {
    let prov = ctx.provenance()?;
    let vq_s = ctx.load_vq(Role::Speaker, &prov.data_hash)?;
    let vq_l = ctx.load_vq(Role::Listener, &prov.data_hash)?;
    let train = ctx.split(Split::Train)?;
    let test = ctx.split(Split::Test)?;
    let c = &ctx.config;
    let results = run_ablation(&train, &test, &vq_s, &vq_l, &c.dim, &c.finetune, &c.ablation)?;
    write_ablation_csv(&c.out_dir(), &results)?;
    Ok(results)
}
