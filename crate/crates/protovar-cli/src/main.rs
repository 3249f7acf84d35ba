//! `protovar` — protocol-variance analysis for prediction/label tables.
//!
//! Exit codes: 0 success, 1 parse/validation error, 2 insufficient
//! observations, 3 I/O failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use protovar::Error;

use crate::config::FileConfig;

#[derive(Parser)]
#[command(
    name = "protovar",
    version,
    about = "Quantifies split-level noise in subject-exclusive cross-validation and \
             domain instability in leave-one-dataset-out transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Master seed; falls back to PROTOVAR_SEED, then the config file, then 0
    #[arg(long)]
    seed: Option<u64>,

    /// Decision threshold in (0,1) [default: 0.5]
    #[arg(long)]
    threshold: Option<f64>,

    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output formats, comma-separated subset of csv,json,md [default: all]
    #[arg(long, value_delimiter = ',')]
    format: Vec<String>,

    /// Worker threads for parallel sections [default: all cores]
    #[arg(long)]
    jobs: Option<usize>,

    /// JSON config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Split-noise analysis over repeated subject-exclusive k-fold partitions
    CvNoise {
        /// Evaluation table CSVs, one per model tag
        #[arg(required = true)]
        inputs: Vec<PathBuf>,

        /// Number of folds [default: 3]
        #[arg(long)]
        k: Option<usize>,

        /// Independent partitions to draw [default: 4]
        #[arg(long)]
        repeats: Option<usize>,

        /// Model tags, comma-separated, one per input [default: file stems]
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,

        #[command(flatten)]
        common: CommonArgs,
    },

    /// Tabulate leave-one-dataset-out metrics from per-fold prediction tables
    Lodo {
        /// JSON transfer manifest
        manifest: PathBuf,

        #[command(flatten)]
        common: CommonArgs,
    },

    /// LODO transfer significance via subject-level bootstrap
    Bootstrap {
        /// JSON transfer manifest
        manifest: PathBuf,

        /// Bootstrap iterations per transfer [default: 1000]
        #[arg(long, short = 'B')]
        iterations: Option<usize>,

        /// Two-sided significance level in (0,1) [default: 0.05]
        #[arg(long)]
        alpha: Option<f64>,

        #[command(flatten)]
        common: CommonArgs,
    },

    /// Generate a synthetic population table from a JSON spec
    Synth {
        /// Population spec (JSON)
        #[arg(long)]
        spec: PathBuf,

        #[command(flatten)]
        common: CommonArgs,
    },

    /// Compare a reported delta against a noise floor
    Adjudicate {
        /// Observed performance delta
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,

        /// Protocol noise floor (non-negative)
        #[arg(long)]
        floor: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Validation(_) => 1,
        Error::InsufficientObservations(_) => 2,
        Error::Io(_) => 3,
    }
}

fn init_pool(jobs: Option<usize>) -> protovar::Result<()> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation(format!("failed to set worker count: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> protovar::Result<()> {
    match cli.command {
        Command::CvNoise {
            inputs,
            k,
            repeats,
            tags,
            common,
        } => {
            let file = FileConfig::load(common.config.as_ref())?;
            let resolved = config::resolve_common(
                common.seed,
                common.threshold,
                common.out,
                &common.format,
                common.jobs,
                &file,
            )?;
            init_pool(resolved.jobs)?;
            let k = k.or(file.k).unwrap_or(3);
            let repeats = repeats.or(file.repeats).unwrap_or(4);
            let tags = resolve_tags(&inputs, &tags, &file)?;
            commands::cv_noise(&commands::CvNoiseParams {
                inputs,
                tags,
                k,
                repeats,
                common: resolved,
            })
        }
        Command::Lodo { manifest, common } => {
            let file = FileConfig::load(common.config.as_ref())?;
            let resolved = config::resolve_common(
                common.seed,
                common.threshold,
                common.out,
                &common.format,
                common.jobs,
                &file,
            )?;
            init_pool(resolved.jobs)?;
            commands::lodo(&commands::LodoParams {
                manifest,
                common: resolved,
                bootstrap: None,
            })
        }
        Command::Bootstrap {
            manifest,
            iterations,
            alpha,
            common,
        } => {
            let file = FileConfig::load(common.config.as_ref())?;
            let resolved = config::resolve_common(
                common.seed,
                common.threshold,
                common.out,
                &common.format,
                common.jobs,
                &file,
            )?;
            init_pool(resolved.jobs)?;
            let iterations = iterations.or(file.iterations).unwrap_or(1000);
            if iterations < 1 {
                return Err(Error::Validation(
                    "bootstrap iterations must be >= 1".into(),
                ));
            }
            let alpha = alpha.or(file.alpha).unwrap_or(0.05);
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Validation(format!(
                    "alpha must be in (0,1), got {alpha}"
                )));
            }
            commands::lodo(&commands::LodoParams {
                manifest,
                common: resolved,
                bootstrap: Some((iterations, alpha)),
            })
        }
        Command::Synth { spec, common } => {
            let file = FileConfig::load(common.config.as_ref())?;
            let seed_override = explicit_seed(common.seed, &file)?;
            let resolved = config::resolve_common(
                common.seed,
                common.threshold,
                common.out,
                &common.format,
                common.jobs,
                &file,
            )?;
            init_pool(resolved.jobs)?;
            commands::synth(&commands::SynthParams {
                spec_path: spec,
                common: resolved,
                seed_override,
            })
        }
        Command::Adjudicate { delta, floor } => commands::adjudicate(delta, floor),
    }
}

/// The seed only when it was given explicitly (flag, env, or config file):
/// `synth` keeps the spec's own seed otherwise.
fn explicit_seed(flag: Option<u64>, file: &FileConfig) -> protovar::Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Ok(v) = std::env::var("PROTOVAR_SEED") {
        return v.parse::<u64>().map(Some).map_err(|_| {
            Error::Validation(format!(
                "PROTOVAR_SEED must be an unsigned integer, got `{v}`"
            ))
        });
    }
    Ok(file.seed)
}

fn resolve_tags(
    inputs: &[PathBuf],
    tag_flag: &[String],
    file: &FileConfig,
) -> protovar::Result<Vec<String>> {
    let tags: Vec<String> = if !tag_flag.is_empty() {
        tag_flag.to_vec()
    } else if let Some(t) = &file.tags {
        t.clone()
    } else {
        inputs
            .iter()
            .map(|p| {
                p.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.to_string_lossy().into_owned())
            })
            .collect()
    };
    if tags.len() != inputs.len() {
        return Err(Error::Validation(format!(
            "{} tags given for {} inputs",
            tags.len(),
            inputs.len()
        )));
    }
    let mut sorted = tags.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Validation(
            "model tags must be unique; disambiguate with --tags".into(),
        ));
    }
    Ok(tags)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
