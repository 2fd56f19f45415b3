use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use evkit_cli::commands::{
    cmd_augment, cmd_convert, cmd_evaluate, cmd_plan, cmd_stats, AugmentMode,
};
use evkit_cli::{CliError, Overrides, PipelineConfig, Preset};

#[derive(Parser)]
#[command(name = "evkit", version, about = "Event-camera data pipeline")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// gen1-like or gen4-like.
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Worker threads for convert.
    #[arg(long, global = true, env = "EVKIT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a DAT/EVS recording into EVF frames plus an index.
    Convert {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Print event counts and timing of a recording.
    Stats { input: PathBuf },
    /// Augment a converted frame directory.
    Augment {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// frame or video.
        #[arg(long, default_value = "frame")]
        mode: AugmentMode,
    },
    /// Plan one training epoch from a sequence index.
    Plan {
        index: PathBuf,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?),
        None => None,
    };
    let overrides = Overrides {
        preset: cli.preset,
        seed: cli.seed,
        threads: cli.threads,
    };
    let cfg = PipelineConfig::resolve(file.as_deref(), overrides)
        .map_err(|e| match &cli.config {
            Some(path) => e.in_file(path),
            None => e,
        })?;

    match cli.command {
        Command::Convert {
            input,
            output,
            annotations,
        } => {
            let summary = cmd_convert(&input, annotations.as_deref(), &output, &cfg)?;
            print!("{summary}");
        }
        Command::Stats { input } => print!("{}", cmd_stats(&input, &cfg)?),
        Command::Augment { input, output, mode } => {
            print!("{}", cmd_augment(&input, &output, mode, &cfg)?)
        }
        Command::Plan {
            index,
            epoch,
            output,
        } => emit(&cmd_plan(&index, epoch, &cfg)?, output.as_deref())?,
        Command::Evaluate {
            predictions,
            ground_truth,
            output,
        } => {
            let report = cmd_evaluate(&predictions, &ground_truth, &cfg)?;
            emit(&report.to_string(), output.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::usage(first).line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}
