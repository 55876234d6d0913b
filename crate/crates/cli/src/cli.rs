//! Command-line flags.

use std::path::PathBuf;

use clap::Parser;

use crate::config::{parse_config, ConfigError, RunConfig, Scenario};

#[derive(Debug, Clone, Parser)]
#[command(name = "noma-deepsic", version, about = "NOMA channel estimation and handover scenarios")]
pub struct Cli {
    #[arg(value_enum)]
    pub scenario: Scenario,
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Exit with status 2 when a convergence certificate fails.
    #[arg(long)]
    pub strict: bool,
    /// Output directory; overrides `output_dir` and NOMA_DEEPSIC_OUT.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated SNR list for `estimate`.
    #[arg(long = "snr-db", value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Option<Vec<f64>>,
    /// User range `a..b` (inclusive) for `complexity-sweep`.
    #[arg(long, value_parser = parse_k_range)]
    pub k: Option<(usize, usize)>,
    /// Comma-separated velocities for `handover-sweep`.
    #[arg(long = "velocity-kmh", value_delimiter = ',')]
    pub velocity_kmh: Option<Vec<f64>>,
    /// Use the mean-based MASE in the `transfer` report.
    #[arg(long)]
    pub mase_standard: bool,
}

fn parse_k_range(text: &str) -> Result<(usize, usize), String> {
    let (a, b) = text.split_once("..").ok_or_else(|| format!("expected a..b, got `{text}`"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let lo = a.trim().parse().map_err(|e| format!("bad lower bound `{a}`: {e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("bad upper bound `{b}`: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

impl Cli {
    /// The file (or defaults) with every given flag applied on top.
    pub fn effective_config(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(path)?,
            None => RunConfig::default(),
        };
        cfg.scenario = Some(self.scenario);
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(snrs) = &self.snr_db {
            cfg.estimate.snrs_db = snrs.clone();
        }
        if let Some((lo, hi)) = self.k {
            cfg.complexity.k_min = lo;
            cfg.complexity.k_max = hi;
        }
        if let Some(v) = &self.velocity_kmh {
            cfg.sweep.velocities_kmh = v.clone();
        }
        if self.mase_standard {
            cfg.transfer.mase_standard = true;
        }
        Ok(cfg)
    }
}
