//! Run configuration. Every value resolves as flag, then config file, then
//! built-in default.

use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    None,
    #[default]
    Summary,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Optimal,
    Feasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MechanismArg {
    NearGreedy,
    Greedy,
    Uniform,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_root: Option<PathBuf>,
    pub trace_level: Option<TraceLevel>,
    #[serde(default)]
    pub plan: PlanFile,
    #[serde(default)]
    pub plp: PlpFile,
    #[serde(default)]
    pub transfer: TransferFile,
    #[serde(default)]
    pub oracle: OracleFile,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub scenario: Option<String>,
    pub mode: Option<ModeArg>,
    pub levels: Option<usize>,
    pub budget: Option<usize>,
    pub objects: Option<usize>,
    pub obstacles: Option<bool>,
    pub policies: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlpFile {
    pub class: Option<String>,
    pub examples: Option<u64>,
    pub iterations: Option<usize>,
    pub eval: Option<u64>,
    pub objects: Option<String>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferFile {
    pub policies: Option<PathBuf>,
    pub target: Option<String>,
    pub families: Option<Vec<String>>,
    pub mechanism: Option<MechanismArg>,
    pub examples: Option<String>,
    pub objects: Option<String>,
    pub obstacles: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleFile {
    pub scenario: Option<String>,
    pub seeds: Option<String>,
}

pub fn load_file(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Global settings after resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Globals {
    pub seed: u64,
    pub out: PathBuf,
    pub trace: TraceLevel,
}

impl Globals {
    pub fn resolve(seed: Option<u64>, out: Option<PathBuf>, trace: Option<TraceLevel>, file: &FileConfig) -> Self {
        Self {
            seed: seed.or(file.seed).unwrap_or(0),
            out: out.or_else(|| file.out_root.clone()).unwrap_or_else(|| PathBuf::from("runs")),
            trace: trace.or(file.trace_level).unwrap_or_default(),
        }
    }
}

/// `A..B` with both ends included, or a single `N`.
pub fn parse_seeds(text: &str) -> Result<Range<u64>, CliError> {
    let bad = || CliError::Usage(format!("bad seed range {text:?}; expected N or A..B"));
    match text.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            Ok(a..b + 1)
        }
        None => {
            let n: u64 = text.trim().parse().map_err(|_| bad())?;
            Ok(n..n + 1)
        }
    }
}

/// `A..B` or `N` object counts, both ends included.
pub fn parse_objects(text: &str) -> Result<(usize, usize), CliError> {
    let r = parse_seeds(text)?;
    Ok((r.start as usize, (r.end - 1) as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges_include_both_ends() {
        assert_eq!(parse_seeds("0..19").unwrap(), 0..20);
        assert_eq!(parse_seeds("3..=4").unwrap(), 3..5);
        assert_eq!(parse_seeds("7").unwrap(), 7..8);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("x").is_err());
        assert_eq!(parse_objects("1..3").unwrap(), (1, 3));
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig = toml::from_str("seed = 4\nout_root = \"from-file\"").unwrap();
        let g = Globals::resolve(Some(9), None, None, &file);
        assert_eq!(g.seed, 9);
        assert_eq!(g.out, PathBuf::from("from-file"));
        assert_eq!(g.trace, TraceLevel::Summary);
        let g = Globals::resolve(None, None, None, &FileConfig::default());
        assert_eq!((g.seed, g.out), (0, PathBuf::from("runs")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("sed = 4").is_err());
        assert!(toml::from_str::<FileConfig>("[plan]\nscenaro = \"terrain\"").is_err());
        let f: FileConfig = toml::from_str("[plan]\nscenario = \"terrain\"\nmode = \"feasible\"").unwrap();
        assert_eq!(f.plan.mode, Some(ModeArg::Feasible));
    }
}
