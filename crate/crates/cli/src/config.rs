//! Optional TOML config file. Keys mirror the long flag names with
//! underscores; a top-level table holds shared keys and one table per
//! subcommand holds the rest. Flags always win.
//!
//! ```toml
//! seed = 7
//!
//! [simulate]
//! gamma = 0.3
//! noise = "poisson"
//!
//! [sweep]
//! gammas = "0.1:1.0:0.1"
//! methods = "mle,mle-tp"
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "NTPQPT_SEED";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default, rename = "analyze-p", alias = "analyze_p")]
    pub analyze_p: AnalyzeConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub t_h: Option<f64>,
    pub t_v: Option<f64>,
    pub gamma: Option<f64>,
    pub exposure: Option<f64>,
    pub seed: Option<u64>,
    pub noise: Option<String>,
    pub dark_counts: Option<f64>,
    pub efficiency: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    pub method: Option<String>,
    pub basis: Option<String>,
    pub seed: Option<u64>,
    pub unphysical: Option<String>,
    pub restarts: Option<usize>,
    pub max_evals: Option<usize>,
    pub tol: Option<f64>,
    pub zero_counts: Option<String>,
    pub penalty_start: Option<f64>,
    pub residual_target: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub gammas: Option<String>,
    pub methods: Option<String>,
    pub repeats: Option<usize>,
    pub exposure: Option<f64>,
    pub seed: Option<u64>,
    pub noise: Option<String>,
    pub jobs: Option<usize>,
    pub restarts: Option<usize>,
    pub max_evals: Option<usize>,
    pub tol: Option<f64>,
    pub zero_counts: Option<String>,
    pub penalty_start: Option<f64>,
    pub residual_target: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub unphysical: Option<String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
                Ok(toml::from_str(&text)?)
            }
        }
    }
}

/// Flag, then command table, then top-level table, then environment, then 0.
pub fn resolve_seed(flag: Option<u64>, section: Option<u64>, file: &ConfigFile) -> CliResult<u64> {
    if let Some(s) = flag.or(section).or(file.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

pub fn parse_with<T: std::str::FromStr>(value: Option<String>, what: &str) -> CliResult<Option<T>> {
    value
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| CliError::Usage(format!("invalid {what} {v:?} in config file")))
        })
        .transpose()
}
