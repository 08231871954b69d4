//! Component ablations for listener generation.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{concatenate, Axis};
use serde::{Deserialize, Serialize};

use crate::data::DyadicSample;
use crate::dim::{pretrain, DimConfig, DimModel};
use crate::error::{Error, Result};
use crate::finetune::{finetune_listener, initial_model, FinetuneConfig, GeneratorModel, Init};
use crate::metrics::{frechet_distance, mse};
use crate::vq::VqModel;

/// One configuration of component switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationRow {
    /// Token prediction through the VQ codebooks (else direct regression).
    pub vq: bool,
    /// Start fine-tuning from masked pretraining (else from scratch).
    pub dim: bool,
    /// Listener VQ decoder trainable during fine-tuning.
    pub dec_vq: bool,
    /// Contrastive term active during pretraining.
    pub l_c: bool,
    /// Joint speaker-listener encoder.
    pub s_l: bool,
}

impl AblationRow {
    pub const FULL: AblationRow = AblationRow {
        vq: true,
        dim: true,
        dec_vq: true,
        l_c: true,
        s_l: true,
    };

    pub fn label(&self) -> String {
        let on = |b: bool| if b { "1" } else { "0" };
        format!(
            "vq{}_dim{}_dec{}_lc{}_sl{}",
            on(self.vq),
            on(self.dim),
            on(self.dec_vq),
            on(self.l_c),
            on(self.s_l)
        )
    }

    pub fn dim_config(&self, base: &DimConfig, seed: u64) -> DimConfig {
        DimConfig {
            use_vq: self.vq,
            lambda1: if self.l_c { base.lambda1 } else { 0.0 },
            two_branch: self.s_l,
            seed,
            ..base.clone()
        }
    }

    pub fn finetune_config(&self, base: &FinetuneConfig, seed: u64) -> FinetuneConfig {
        FinetuneConfig {
            init: if self.dim { Init::Pretrained } else { Init::Scratch },
            unfreeze_vq_decoder: self.vq && self.dec_vq,
            seed,
            ..base.clone()
        }
    }
}

/// The default grid: the full model, then one or two components switched off.
pub fn table_rows() -> Vec<AblationRow> {
    let f = AblationRow::FULL;
    vec![
        f,
        AblationRow {
            vq: false,
            dec_vq: false,
            ..f
        },
        AblationRow { dim: false, ..f },
        AblationRow { dec_vq: false, ..f },
        AblationRow { l_c: false, ..f },
        AblationRow {
            l_c: false,
            s_l: false,
            ..f
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub rows: Vec<AblationRow>,
    /// Independent seeds per row; repeat `r` uses `seed + r`.
    pub repeats: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            rows: table_rows(),
            repeats: 3,
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.repeats == 0 {
            return Err(Error::Config("ablation needs at least one row and one repeat".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub row: AblationRow,
    pub repeat: usize,
    pub seed: u64,
    pub mse: f64,
    pub fd: f64,
}

/// Held-out listener MSE and pooled-frame FD over all 56 coefficients.
pub fn listener_scores(g: &GeneratorModel, test: &[DyadicSample]) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::invalid("empty evaluation split"));
    }
    let mut gen = Vec::with_capacity(test.len());
    let (mut se, mut frames) = (0.0, 0usize);
    for s in test {
        let out = g.generate_listener(&s.speaker, &s.audio)?;
        se += mse(out.motion.frames().view(), s.listener.frames().view())? * s.len() as f64;
        frames += s.len();
        gen.push(out.motion.into_frames());
    }
    let gv: Vec<_> = gen.iter().map(|a| a.view()).collect();
    let tv: Vec<_> = test.iter().map(|s| s.listener.frames().view()).collect();
    let fd = frechet_distance(
        concatenate(Axis(0), &gv).map_err(|e| Error::shape(e.to_string()))?.view(),
        concatenate(Axis(0), &tv).map_err(|e| Error::shape(e.to_string()))?.view(),
    )?;
    Ok((se / frames as f64, fd))
}

/// Runs every row for every repeat. Pretraining runs are shared between rows
/// that differ only in fine-tuning switches.
pub fn run_ablation(
    train: &[DyadicSample],
    test: &[DyadicSample],
    vq_s: &VqModel,
    vq_l: &VqModel,
    dim: &DimConfig,
    finetune: &FinetuneConfig,
    config: &AblationConfig,
) -> Result<Vec<AblationResult>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("ablation needs training clips"));
    }
    let audio_dim = train[0].audio.width();
    let mut results = Vec::new();
    for repeat in 0..config.repeats {
        let seed = dim.seed.wrapping_add(repeat as u64);
        let mut pretrained: HashMap<(bool, bool, bool, bool), DimModel> = HashMap::new();
        for row in &config.rows {
            let dcfg = row.dim_config(dim, seed);
            let key = (row.vq, row.l_c, row.s_l, row.dim);
            if !pretrained.contains_key(&key) {
                let mut m = DimModel::new(dcfg, vq_s.duplicate()?, vq_l.duplicate()?, audio_dim)?;
                if row.dim {
                    pretrain(&mut m, train, None)?;
                }
                pretrained.insert(key, m);
            }
            let base = &pretrained[&key];
            let fcfg = row.finetune_config(finetune, finetune.seed.wrapping_add(repeat as u64));
            let (g, _) = finetune_listener(initial_model(base, &fcfg)?, train, &fcfg)?;
            let (mse, fd) = listener_scores(&g, test)?;
            log::info!("ablation {} repeat {repeat}: mse {mse:.6} fd {fd:.6}", row.label());
            results.push(AblationResult {
                row: *row,
                repeat,
                seed,
                mse,
                fd,
            });
        }
    }
    Ok(results)
}

/// Per-row means across repeats, in row order.
pub fn summarize(results: &[AblationResult]) -> Vec<(AblationRow, f64, f64)> {
    let mut rows: Vec<AblationRow> = Vec::new();
    for r in results {
        if !rows.contains(&r.row) {
            rows.push(r.row);
        }
    }
    rows.into_iter()
        .map(|row| {
            let sel: Vec<_> = results.iter().filter(|r| r.row == row).collect();
            let n = sel.len() as f64;
            (
                row,
                sel.iter().map(|r| r.mse).sum::<f64>() / n,
                sel.iter().map(|r| r.fd).sum::<f64>() / n,
            )
        })
        .collect()
}

/// `ablation.csv` (row means) and `ablation_runs.csv` (every repeat).
pub fn write_ablation_csv(dir: &Path, results: &[AblationResult]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let flags = |r: &AblationRow| [r.vq, r.dim, r.dec_vq, r.l_c, r.s_l].map(|b| (b as u8).to_string());
    let mut w = csv::Writer::from_path(dir.join("ablation.csv"))?;
    w.write_record(["vq", "dim", "dec_vq", "l_c", "s_l", "mse", "fd"])?;
    for (row, m, f) in summarize(results) {
        let mut rec = flags(&row).to_vec();
        rec.extend([format!("{m:.6}"), format!("{f:.6}")]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("ablation_runs.csv"))?;
    w.write_record(["vq", "dim", "dec_vq", "l_c", "s_l", "repeat", "seed", "mse", "fd"])?;
    for r in results {
        let mut rec = flags(&r.row).to_vec();
        rec.extend([
            r.repeat.to_string(),
            r.seed.to_string(),
            format!("{:.6}", r.mse),
            format!("{:.6}", r.fd),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows_are_distinct_and_start_full() {
        let rows = table_rows();
        assert_eq!(rows[0], AblationRow::FULL);
        for (i, a) in rows.iter().enumerate() {
            assert!(rows[i + 1..].iter().all(|b| b != a));
        }
    }

    #[test]
    fn row_maps_to_configs() {
        let row = AblationRow {
            l_c: false,
            dim: false,
            ..AblationRow::FULL
        };
        let d = row.dim_config(&DimConfig::default(), 5);
        assert_eq!((d.lambda1, d.seed, d.two_branch), (0.0, 5, true));
        let f = row.finetune_config(&FinetuneConfig::default(), 5);
        assert_eq!(f.init, Init::Scratch);
        let no_vq = AblationRow {
            vq: false,
            ..AblationRow::FULL
        };
        assert!(!no_vq.finetune_config(&FinetuneConfig::default(), 0).unfreeze_vq_decoder);
    }

    #[test]
    fn summary_averages_repeats() {
        let r = |repeat, mse| AblationResult {
            row: AblationRow::FULL,
            repeat,
            seed: 0,
            mse,
            fd: 2.0 * mse,
        };
        let s = summarize(&[r(0, 1.0), r(1, 3.0)]);
        assert_eq!(s, vec![(AblationRow::FULL, 2.0, 4.0)]);
    }
}
