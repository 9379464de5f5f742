use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use forexsum::config::Config;
use forexsum::pipeline;
use forexsum::Error;

/// Hierarchical news aggregation for forex movement prediction.
#[derive(Parser, Debug)]
#[command(name = "forexsum", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dotted override, e.g. `--set train.lr=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Synthetic news, trade bars and the planted-signal log.
    Generate,
    /// Windows, chronological split, scaler, vocabularies.
    Preprocess,
    /// Train on `data.prepared`, evaluate on its test split.
    Train,
    /// Score the checkpoint in `data.run` on `eval.split`.
    Eval,
    /// Category and region attribution of the checkpoint in `data.run`.
    Analyze,
    /// Time-parameter or selection-k grid (`sweep.kind`).
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Analyze => "analyze",
            Command::Sweep => "sweep",
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = Config::load(cli.config.as_deref(), &cli.overrides)?;
    let out: &Path = &cli.out;
    let files = match cli.command {
        Command::Generate => {
            let (summary, files) = pipeline::run_generate(&cfg, cli.seed, out)?;
            println!(
                "generated {} news, {} bars, {} signals; {} windows, up fraction {:.4}",
                summary.news, summary.bars, summary.signals, summary.windows, summary.up_fraction
            );
            files
        }
        Command::Preprocess => {
            let (ds, files) = pipeline::run_preprocess(&cfg, out)?;
            println!(
                "samples: train {} dev {} test {}; vocab {}",
                ds.train.len(),
                ds.dev.len(),
                ds.test.len(),
                ds.vocab.len()
            );
            files
        }
        Command::Train => {
            let (outcome, files) = pipeline::run_train(&cfg, cli.seed, out)?;
            println!(
                "best epoch {} (dev macro-F1 {:.4}); test macro-F1 {:.4} MCC {:.4}",
                outcome.history.best_epoch,
                outcome.history.best_dev_macro_f1,
                outcome.test.macro_f1,
                outcome.test.mcc
            );
            files
        }
        Command::Eval => {
            let (report, files) = pipeline::run_eval(&cfg, cli.seed, out)?;
            println!(
                "{}: n {} macro-F1 {:.4} MCC {:.4}",
                cfg.eval.split.as_str(),
                report.n,
                report.macro_f1,
                report.mcc
            );
            files
        }
        Command::Analyze => {
            let (report, files) = pipeline::run_analyze(&cfg, cli.seed, out)?;
            println!(
                "top category {}, top region {:?}",
                report.top_category(),
                report.top_region()
            );
            files
        }
        Command::Sweep => pipeline::run_sweep(&cfg, cli.seed, out)?,
    };
    pipeline::write_manifest(out, cli.command.name(), cli.seed, &cfg, &files)
        .context("writing manifest")?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::NanLoss { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
