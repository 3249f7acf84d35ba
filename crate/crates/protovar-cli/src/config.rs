//! Effective-configuration resolution: command-line flags override an
//! optional JSON config file; `PROTOVAR_SEED` is the seed fallback between
//! the two; hard-coded defaults come last.

use std::path::PathBuf;

use serde::Deserialize;

use protovar::{Error, Result};

/// Optional values loadable from `--config <file.json>`. Unknown keys are
/// rejected so typos fail loudly.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Vec<String>>,
    pub jobs: Option<usize>,
    pub k: Option<usize>,
    pub repeats: Option<usize>,
    pub iterations: Option<usize>,
    pub alpha: Option<f64>,
    pub tags: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Validation(format!("bad config file {}: {e}", p.display())))
            }
        }
    }
}

/// Shared resolved options.
#[derive(Debug, Clone)]
pub struct Common {
    pub seed: u64,
    pub threshold: f64,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
    Md,
}

impl Format {
    pub fn name(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Md => "md",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "md" | "markdown" => Ok(Format::Md),
            other => Err(format!(
                "unknown format `{other}` (expected csv, json, or md)"
            )),
        }
    }
}

pub fn parse_formats(names: &[String]) -> Result<Vec<Format>> {
    let mut formats = Vec::new();
    for name in names {
        for piece in name.split(',') {
            if piece.trim().is_empty() {
                continue;
            }
            formats.push(piece.parse::<Format>().map_err(Error::Validation)?);
        }
    }
    formats.sort_unstable();
    formats.dedup();
    if formats.is_empty() {
        return Err(Error::Validation("no output format selected".into()));
    }
    Ok(formats)
}

/// Resolves the shared options. Precedence: flag, then `PROTOVAR_SEED`
/// (seed only), then config file, then defaults.
pub fn resolve_common(
    seed_flag: Option<u64>,
    threshold_flag: Option<f64>,
    out_flag: Option<PathBuf>,
    format_flag: &[String],
    jobs_flag: Option<usize>,
    file: &FileConfig,
) -> Result<Common> {
    let env_seed = match std::env::var("PROTOVAR_SEED") {
        Ok(v) => Some(v.parse::<u64>().map_err(|_| {
            Error::Validation(format!(
                "PROTOVAR_SEED must be an unsigned integer, got `{v}`"
            ))
        })?),
        Err(_) => None,
    };
    let seed = seed_flag.or(env_seed).or(file.seed).unwrap_or(0);
    let threshold = threshold_flag.or(file.threshold).unwrap_or(0.5);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Validation(format!(
            "threshold must be in (0,1), got {threshold}"
        )));
    }
    let out = out_flag
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let formats = if format_flag.is_empty() {
        match &file.format {
            Some(names) => parse_formats(names)?,
            None => vec![Format::Csv, Format::Json, Format::Md],
        }
    } else {
        parse_formats(format_flag)?
    };
    let jobs = jobs_flag.or(file.jobs);
    if jobs == Some(0) {
        return Err(Error::Validation("--jobs must be at least 1".into()));
    }
    Ok(Common {
        seed,
        threshold,
        out,
        formats,
        jobs,
    })
}

impl Common {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn format_names(&self) -> Vec<String> {
        self.formats.iter().map(|f| f.name().to_string()).collect()
    }
}
