//! Command-line front end for the weak-supervision pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wsgully_core::config::PipelineConfig;
use wsgully_core::pipeline::{
    cmd_eval, cmd_fit, cmd_infer, cmd_label, cmd_synth, cmd_train, cmd_vote, EvalSource,
    EXIT_USAGE,
};
use wsgully_core::voting::VotingScheme;

#[derive(Parser)]
#[command(
    name = "wsgully",
    version,
    about = "Weak-supervision pipeline: label with noisy functions, fit a label model, train a student, evaluate."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark (manifest, labels, features, truth).
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Generator seed; identical seeds give byte-identical outputs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override paths.out_dir from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured labeling function and write the label matrix.
    Label {
        #[arg(long)]
        config: PathBuf,
        /// Reuse per-location progress left by an interrupted run.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the generative label model on the label matrix.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write probabilistic pseudo-labels from a fitted checkpoint.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate expert annotations into binary ground truth.
    Vote {
        #[arg(long)]
        config: PathBuf,
        /// strict-positive, lenient-positive, lenient-negative, strict-negative
        #[arg(long)]
        scheme: Option<VotingScheme>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the student on features and pseudo-labels.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predictions source against the reference ground truth.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// lf:<name> | pseudo | student | csv:<path>
        #[arg(long)]
        source: String,
        /// Reference ground-truth CSV (defaults to paths.ground_truth).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Binarization threshold in (0, 1).
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: &Path, out: Option<&PathBuf>) -> Result<PipelineConfig, ExitCode> {
    PipelineConfig::load(config, out.map(|p| p.as_path())).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(wsgully_core::pipeline::EXIT_CONFIG as u8)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; anything else is usage.
            let _ = e.print();
            return if e.exit_code() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_USAGE as u8)
            };
        }
    };

    let result = match &cli.command {
        Command::Synth { config, seed, out } => {
            load(config, out.as_ref()).map(|cfg| cmd_synth(&cfg, *seed))
        }
        Command::Label {
            config,
            resume,
            out,
        } => load(config, out.as_ref()).map(|cfg| cmd_label(&cfg, *resume)),
        Command::Fit { config, out } => load(config, out.as_ref()).map(|cfg| cmd_fit(&cfg)),
        Command::Infer { config, out } => load(config, out.as_ref()).map(|cfg| cmd_infer(&cfg)),
        Command::Vote {
            config,
            scheme,
            out,
        } => load(config, out.as_ref()).map(|cfg| cmd_vote(&cfg, *scheme)),
        Command::Train { config, out } => load(config, out.as_ref()).map(|cfg| cmd_train(&cfg)),
        Command::Eval {
            config,
            source,
            reference,
            threshold,
            out,
        } => match load(config, out.as_ref()) {
            Err(code) => return code,
            Ok(cfg) => match EvalSource::parse(source) {
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
                Ok(source) => Ok(cmd_eval(&cfg, &source, reference.as_deref(), *threshold)),
            },
        },
    };

    match result {
        Err(code) => code,
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
