//! Run configuration: a strict TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use noma_deepsic::channel::ChannelConfig;
use noma_deepsic::handover::{HandoverConfig, MobilityConfig};
use noma_deepsic::pipeline::PipelineConfig;
use noma_deepsic::theory::TheoryConfig;
use noma_deepsic::transformer::{TrainConfig, TransformerConfig};

/// Environment variable consulted when neither the flags nor the file name
/// an output directory.
pub const OUTPUT_ENV: &str = "NOMA_DEEPSIC_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "noma-deepsic-out";
const KMH_PER_MPS: f64 = 3.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Estimate,
    Train,
    Transfer,
    HandoverSweep,
    ComplexitySweep,
    TheoryCheck,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Estimate => "estimate",
            Scenario::Train => "train",
            Scenario::Transfer => "transfer",
            Scenario::HandoverSweep => "handover-sweep",
            Scenario::ComplexitySweep => "complexity-sweep",
            Scenario::TheoryCheck => "theory-check",
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value for `{key}`: {message}")]
    TypeError { key: String, message: String },
    #[error("malformed config: {0}")]
    Syntax(String),
}

/// Channel parameters as written in the config file. Velocity is given in
/// km/h here and converted to m/s for the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub num_antennas: usize,
    pub num_users: usize,
    pub time_steps: usize,
    pub step_duration_s: f64,
    pub velocity_kmh: f64,
    pub carrier_wavelength_m: f64,
    pub distance_near_m: f64,
    pub distance_far_m: f64,
    pub pathloss_exponent: f64,
    pub noise_variance: f64,
    pub total_power: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let c = ChannelConfig::default();
        Self {
            num_antennas: c.num_antennas,
            num_users: c.num_users,
            time_steps: c.time_steps,
            step_duration_s: c.step_duration_s,
            velocity_kmh: c.velocity_mps * KMH_PER_MPS,
            carrier_wavelength_m: c.carrier_wavelength_m,
            distance_near_m: c.distance_near_m,
            distance_far_m: c.distance_far_m,
            pathloss_exponent: c.pathloss_exponent,
            noise_variance: c.noise_variance,
            total_power: c.total_power,
        }
    }
}

impl ChannelSection {
    pub fn to_channel(&self) -> ChannelConfig {
        ChannelConfig {
            num_antennas: self.num_antennas,
            num_users: self.num_users,
            time_steps: self.time_steps,
            step_duration_s: self.step_duration_s,
            velocity_mps: self.velocity_kmh / KMH_PER_MPS,
            carrier_wavelength_m: self.carrier_wavelength_m,
            distance_near_m: self.distance_near_m,
            distance_far_m: self.distance_far_m,
            pathloss_exponent: self.pathloss_exponent,
            noise_variance: self.noise_variance,
            total_power: self.total_power,
        }
    }
}

/// Uplink link and receiver settings. Every user transmits at
/// `channel.total_power`; the regressor window length is `transformer.seq_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NomaSection {
    pub n_pilot: usize,
    pub n_data: usize,
    pub snr_db: f64,
    pub refine_iters: usize,
    pub llr_gate: f64,
}

impl Default for NomaSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            n_pilot: p.n_pilot,
            n_data: p.n_data,
            snr_db: p.snr_db,
            refine_iters: p.refine_iters,
            llr_gate: p.llr_gate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    pub snrs_db: Vec<f64>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            snrs_db: vec![-5.0, 0.0, 5.0, 10.0],
        }
    }
}

/// Source domain is `channel.velocity_kmh`; the head is refitted on the target velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferSection {
    pub target_velocity_kmh: f64,
    pub target_train_windows: usize,
    pub target_test_windows: usize,
    pub max_steps: usize,
    pub tolerance: f64,
    /// Report MASE with the mean-based denominator instead of the leading-`S` form.
    pub mase_standard: bool,
}

impl Default for TransferSection {
    fn default() -> Self {
        Self {
            target_velocity_kmh: 60.0,
            target_train_windows: 50,
            target_test_windows: 100,
            max_steps: 10_000,
            tolerance: 1e-14,
            mase_standard: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub velocities_kmh: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            velocities_kmh: vec![0.0, 30.0, 60.0, 90.0, 120.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexitySection {
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for ComplexitySection {
    fn default() -> Self {
        Self { k_min: 1, k_max: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Scenario named in the file; the command line takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub seed: u64,
    /// Windows per SNR (estimate), training windows (train, transfer) or
    /// trials per velocity (handover-sweep).
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub channel: ChannelSection,
    pub noma: NomaSection,
    pub transformer: TransformerConfig,
    pub train: TrainConfig,
    pub handover: HandoverConfig,
    pub mobility: MobilityConfig,
    pub estimate: EstimateSection,
    pub transfer: TransferSection,
    pub sweep: SweepSection,
    pub complexity: ComplexitySection,
    pub theory: TheoryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            seed: 42,
            trials: 200,
            output_dir: None,
            channel: ChannelSection::default(),
            noma: NomaSection::default(),
            transformer: TransformerConfig::default(),
            train: TrainConfig::default(),
            handover: HandoverConfig::default(),
            mobility: MobilityConfig::default(),
            estimate: EstimateSection::default(),
            transfer: TransferSection::default(),
            sweep: SweepSection::default(),
            complexity: ComplexitySection::default(),
            theory: TheoryConfig::default(),
        }
    }
}

impl RunConfig {
    /// Estimation pipeline settings for the configured channel.
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            channel: self.channel.to_channel(),
            n_pilot: self.noma.n_pilot,
            n_data: self.noma.n_data,
            snr_db: self.noma.snr_db,
            refine_iters: self.noma.refine_iters,
            llr_gate: self.noma.llr_gate,
            window_len: self.transformer.seq_len,
        }
    }

    /// Flags, then the file, then [`OUTPUT_ENV`], then [`DEFAULT_OUTPUT_DIR`].
    pub fn resolve_output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }
}

/// Parses config text. An empty document yields every default.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let message = err.inner().message().to_string();
        match message.strip_prefix("unknown field `").and_then(|rest| rest.split('`').next()) {
            Some(field) => ConfigError::UnknownKey {
                key: join_key(&path, field),
            },
            None => ConfigError::TypeError {
                key: path,
                message: err.inner().to_string().trim().to_string(),
            },
        }
    })
}

fn join_key(path: &str, field: &str) -> String {
    if path.is_empty() || path == "." {
        field.to_string()
    } else if path.ends_with(field) {
        path.to_string()
    } else {
        format!("{path}.{field}")
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}
