use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dim_core::cli::{
    cmd_ablate, cmd_evaluate, cmd_finetune, cmd_generate, cmd_pretrain, cmd_report, cmd_synth, cmd_train_vq,
    exit_code, summarize, Context, Method, Overrides, RunConfig,
};
use dim_core::data::{Role, Split};
use dim_core::finetune::Task;
use dim_core::Result;

/// Dyadic speaker/listener motion pipeline.
#[derive(Parser)]
#[command(name = "dim", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; sections without their own seed inherit it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact root (data/, ckpt/, out/); defaults to $DIM_HOME or ./dim_runs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set dim.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    no_plots: bool,
    /// Accept artifacts built from different data.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic train/val/test corpus.
    Synth,
    /// Train one role's motion VQ-VAE.
    TrainVq { role: Role },
    /// Masked joint pretraining.
    Pretrain,
    /// Fine-tune for listener or speaker generation.
    Finetune { task: Task },
    /// Generate motion for a split.
    Generate {
        #[arg(long, default_value = "dim")]
        method: Method,
        #[arg(long, default_value = "listener")]
        task: Task,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Fine-tuned checkpoint directory (default: ckpt/finetune_<role>).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score generated motion (or a dataset directory) against a split.
    Evaluate {
        generated_dir: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Role to score when the directory does not record one.
        #[arg(long)]
        role: Option<Role>,
    },
    /// Collect metric reports into a CSV table and plots.
    Report { reports: Vec<PathBuf> },
    /// Run the component ablation grid.
    Ablate,
    /// Synth, VQ, pretrain, fine-tune, generate (model and baselines), evaluate, report.
    Pipeline,
}

fn pipeline(ctx: &Context) -> Result<()> {
    cmd_synth(ctx)?;
    for role in Role::BOTH {
        cmd_train_vq(ctx, role)?;
    }
    cmd_pretrain(ctx)?;
    cmd_finetune(ctx, Task::Listener)?;
    for method in [Method::Dim, Method::Random, Method::Nearest, Method::Mirror] {
        let dir = cmd_generate(ctx, method, Task::Listener, Split::Test, None)?;
        cmd_evaluate(ctx, &dir, Split::Test, None)?;
    }
    let csv = cmd_report(ctx, &[])?;
    println!("{}", std::fs::read_to_string(csv)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ov = Overrides {
        seed: cli.seed,
        root: cli.out,
        set: cli.set,
    };
    let ctx = Context {
        config: RunConfig::load(cli.config.as_deref(), &ov)?,
        force: cli.force,
        plots: !cli.no_plots,
    };
    match cli.command {
        Command::Synth => println!("data hash {}", cmd_synth(&ctx)?),
        Command::TrainVq { role } => {
            let m = cmd_train_vq(&ctx, role)?;
            println!("{role} VQ: {} steps, utilization {:.3}", m.steps_trained(), m.utilization());
        }
        Command::Pretrain => {
            let m = cmd_pretrain(&ctx)?;
            if let Some(last) = m.loss_history().last() {
                println!("pretrained {} epochs, final loss {:.5}", m.epoch(), last[0]);
            }
        }
        Command::Finetune { task } => {
            let g = cmd_finetune(&ctx, task)?;
            println!("fine-tuned {} generator {}", task.role(), g.checkpoint_hash()?);
        }
        Command::Generate {
            method,
            task,
            split,
            checkpoint,
        } => println!("{}", cmd_generate(&ctx, method, task, split, checkpoint.as_deref())?.display()),
        Command::Evaluate {
            generated_dir,
            split,
            role,
        } => println!("{}", serde_json::to_string_pretty(&cmd_evaluate(&ctx, &generated_dir, split, role)?)?),
        Command::Report { reports } => println!("{}", cmd_report(&ctx, &reports)?.display()),
        Command::Ablate => {
            for (row, mse, fd) in summarize(&cmd_ablate(&ctx)?) {
                println!("{:<28} mse {mse:.6} fd {fd:.6}", row.label());
            }
        }
        Command::Pipeline => pipeline(&ctx)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
