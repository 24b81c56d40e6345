use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ftjnf_kd::model::SizePreset;
use ftjnf_kd_cli::{commands, CliError, FlagOverrides, RunConfig, ENV_PREFIX};

/// Knowledge distillation for multichannel FT-JNF speech enhancement.
#[derive(Debug, Parser)]
#[command(name = "ftjnf-kd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Student size preset, A to I.
    #[arg(long, global = true)]
    preset: Option<SizePreset>,

    /// Distillation method.
    #[arg(long, global = true, value_parser = ["mask", "linear", "flstm", "tlstm", "multi", "none"])]
    kd: Option<String>,

    /// Use generated sources instead of corpus manifests.
    #[arg(long, global = true)]
    synthetic: bool,

    /// Program that prints a PESQ score for `<ref.wav> <deg.wav>`.
    #[arg(long, global = true, value_name = "PATH")]
    pesq_adapter: Option<PathBuf>,

    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Replace finished outputs instead of skipping them.
    #[arg(long, global = true)]
    overwrite: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render training, validation and test scenes.
    Simulate,
    /// Train the teacher network.
    TrainTeacher,
    /// Distill the teacher into the selected student.
    Distill,
    /// Score the teacher and all trained students.
    Evaluate,
    /// Write summaries and plots from evaluation results.
    Report,
    /// Print parameter and MAC counts.
    CountParams,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let flags = FlagOverrides {
        seed: cli.seed,
        preset: cli.preset,
        kd: cli.kd.clone(),
        synthetic: cli.synthetic,
        out: cli.out.clone(),
        pesq_adapter: cli.pesq_adapter.clone(),
    };
    let env: BTreeMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    let cfg = RunConfig::load(cli.config.as_deref(), &flags, &env)?;
    if let Command::CountParams = cli.command {
        return commands::count_params_cmd(&cfg, cli.preset);
    }
    commands::write_run_config(&cfg)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, cli.overwrite),
        Command::TrainTeacher => commands::train_teacher_cmd(&cfg, cli.overwrite),
        Command::Distill => commands::distill(&cfg, cli.overwrite),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Report => commands::report(&cfg),
        Command::CountParams => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
