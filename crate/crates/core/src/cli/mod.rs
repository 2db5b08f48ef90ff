//! The `cl4ac` command line: prepare, train, caption, evaluate, gradcheck
//! and synth.

mod commands;
mod config;

pub use commands::{
    caption_wav, evaluate_split, format_grad_table, gradcheck_rows, open_checkpoint, prepare, score_candidates,
    synth, train_run, PrepareSummary, CACHE_DIR, CHECKPOINT_FILE, EMBEDDINGS_FILE, LOSS_FILE, VOCAB_FILE,
};
pub use config::{PathsConfig, RunConfig, SplitPaths, TextConfig, RUN_DIR_ENV};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::data::{Grammar, SynthSpec};
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
/// Unexpected internal failure (a bug, not bad input).
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_GRADCHECK: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        e if e.is_input_error() => EXIT_INPUT,
        _ => EXIT_INTERNAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "cl4ac", version, about = "Audio captioning with a contrastive pair classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the vocabulary, word vectors and feature cache.
    Prepare {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model; writes loss.csv and model.ckpt to the run directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Train on captioning loss only, without mismatched pairs.
        #[arg(long)]
        no_cl: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Print a greedy caption for one WAV file.
    Caption {
        #[arg(long)]
        checkpoint: PathBuf,
        wav: PathBuf,
        #[arg(long, default_value_t = 35)]
        max_len: usize,
    },
    /// Caption a split and write metric reports.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to model.ckpt in the run directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Caption CSV; defaults to paths.eval.
        #[arg(long, requires = "audio")]
        manifest: Option<PathBuf>,
        #[arg(long, requires = "manifest")]
        audio: Option<PathBuf>,
        #[arg(long, default_value_t = 35)]
        max_len: usize,
    },
    /// Compare analytic and finite-difference gradients per layer family.
    Gradcheck {
        /// Break one operation's backward rule (for testing the checker).
        #[arg(long, hide = true)]
        fault: Option<String>,
    },
    /// Write a synthetic tone/noise dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        clips: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        #[arg(long, value_delimiter = ',', default_value = "tone,noise", value_parser = parse_grammar)]
        grammars: Vec<Grammar>,
    },
}

fn parse_grammar(s: &str) -> Result<Grammar, String> {
    match s {
        "tone" => Ok(Grammar::Tone),
        "noise" => Ok(Grammar::Noise),
        _ => Err(format!("unknown grammar {s:?} (expected tone or noise)")),
    }
}

fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Error> {
    match command {
        Command::Prepare { config } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let s = prepare(&cfg)?;
            println!(
                "prepared {} clips, {} tokens, {} features cached ({} reused) in {}",
                s.clips,
                s.vocab_size,
                s.cache_hits + s.cache_misses,
                s.cache_hits,
                cfg.run_dir().display()
            );
        }
        Command::Train {
            config,
            no_cl,
            seed,
            epochs,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if no_cl {
                cfg.train.contrastive = false;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let report = train_run(&cfg)?;
            println!(
                "trained {} steps; final epoch loss {:.4}; checkpoint {}",
                report.steps.len(),
                report.epoch_totals.last().copied().unwrap_or(f64::NAN),
                cfg.run_dir().join(CHECKPOINT_FILE).display()
            );
        }
        Command::Caption {
            checkpoint,
            wav,
            max_len,
        } => {
            let ckpt = open_checkpoint(&checkpoint)?;
            println!("{}", caption_wav(&ckpt, &wav, max_len)?);
        }
        Command::Evaluate {
            config,
            checkpoint,
            manifest,
            audio,
            max_len,
        } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let split = match (manifest, audio) {
                (Some(manifest), Some(audio)) => SplitPaths { manifest, audio },
                _ => cfg
                    .paths
                    .eval
                    .clone()
                    .ok_or_else(|| Error::Config("no evaluation split: pass --manifest/--audio or set paths.eval".into()))?,
            };
            let checkpoint = checkpoint.unwrap_or_else(|| cfg.run_dir().join(CHECKPOINT_FILE));
            let ckpt = open_checkpoint(&checkpoint)?;
            cfg.echo()?;
            let report = evaluate_split(&ckpt, &split, cfg.run_dir(), max_len)?;
            print!("{}", report.to_csv());
        }
        Command::Gradcheck { fault } => {
            let rows = gradcheck_rows(fault.as_deref())?;
            print!("{}", format_grad_table(&rows));
            let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.family.as_str()).collect();
            if !failed.is_empty() {
                eprintln!("gradient check failed: {}", failed.join(", "));
                return Ok(EXIT_GRADCHECK);
            }
        }
        Command::Synth {
            out,
            clips,
            seed,
            seconds,
            grammars,
        } => {
            let spec = SynthSpec {
                n_clips: clips,
                seed,
                seconds,
                grammars,
                ..SynthSpec::default()
            };
            println!("{}", synth(&spec, &out)?.display());
        }
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests;
