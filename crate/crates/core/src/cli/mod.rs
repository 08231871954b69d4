//! Pipeline orchestration behind the `dim` binary.

pub mod ablate;
pub mod commands;
pub mod config;
pub mod plot;

pub use ablate::{listener_scores, run_ablation, summarize, table_rows, AblationConfig, AblationResult, AblationRow};
pub use commands::{
    cmd_ablate, cmd_evaluate, cmd_finetune, cmd_generate, cmd_pretrain, cmd_report, cmd_synth, cmd_train_vq, data_hash,
    exit_code, Context, Method, Provenance,
};
pub use config::{Overrides, PathsConfig, RunConfig, SplitConfig, DIM_HOME_VAR};
