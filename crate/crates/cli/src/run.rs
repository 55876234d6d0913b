//! Scenario execution and artifact emission.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use noma_deepsic::complexity::{complexity_sweep, epoch_flops, fit_complexity, write_complexity_csv, ComplexityFits};
use noma_deepsic::handover::{run_mobility_sweep, HandoverError};
use noma_deepsic::metrics::{mase_standard, MetricReport, MetricsError};
use noma_deepsic::pipeline::{nrmse_vs_snr, regression_rows, run_window, PddMode, PipelineConfig, PipelineError, RegressionRow, Regressor};
use noma_deepsic::theory::theory_check;
use noma_deepsic::transformer::{TransferOptions, TransferReport, TransformerConfig, TransformerError};
use noma_deepsic::SeededRng;

use crate::config::{RunConfig, Scenario};
use crate::manifest::{describe, versions, RunManifest, CONFIG_SNAPSHOT_FILE};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Handover(#[from] HandoverError),
    #[error(transparent)]
    Transformer(#[from] TransformerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    /// Certificates that did not pass; `--strict` turns these into a failing exit.
    pub certification_failures: Vec<String>,
}

struct Emitted {
    files: Vec<(&'static str, Vec<u8>)>,
    failures: Vec<String>,
}

impl Emitted {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn json<T: Serialize>(&mut self, name: &'static str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.files.push((name, text.into_bytes()));
    }
}

/// Runs `scenario` and writes its artifacts, a config snapshot and a
/// manifest into `opts.output_dir`.
pub fn run_scenario(scenario: Scenario, cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    let mut effective = cfg.clone();
    effective.scenario = Some(scenario);
    effective.output_dir = None;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = opts.jobs {
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().map_err(|e| RunError::ThreadPool(e.to_string()))?;
    let jobs = pool.current_num_threads();
    let emitted = pool.install(|| match scenario {
        Scenario::Estimate => estimate(&effective),
        Scenario::Train => train(&effective),
        Scenario::Transfer => transfer(&effective),
        Scenario::HandoverSweep => handover_sweep(&effective),
        Scenario::ComplexitySweep => complexity(&effective),
        Scenario::TheoryCheck => theory(&effective),
    })?;

    let dir = &opts.output_dir;
    fs::create_dir_all(dir)?;
    let mut artifacts = Vec::new();
    for (name, bytes) in &emitted.files {
        fs::write(dir.join(name), bytes)?;
        artifacts.push(describe(dir, name)?);
    }
    fs::write(dir.join(CONFIG_SNAPSHOT_FILE), effective.to_toml())?;
    artifacts.push(describe(dir, CONFIG_SNAPSHOT_FILE)?);

    let manifest = RunManifest {
        scenario: scenario.name().to_string(),
        seed: effective.seed,
        config: effective,
        artifacts,
        wall_clock_s: started.elapsed().as_secs_f64(),
        jobs,
        versions: versions(),
    };
    manifest.write(dir)?;
    Ok(RunOutcome {
        manifest,
        certification_failures: emitted.failures,
    })
}

fn check_regressor_shape(cfg: &RunConfig) -> Result<(), RunError> {
    let t = &cfg.transformer;
    if t.input_features != 4 || t.d_out != 1 {
        return Err(RunError::InvalidConfig(
            "the SNR regressor needs transformer.input_features = 4 and transformer.d_out = 1".into(),
        ));
    }
    if cfg.trials == 0 {
        return Err(RunError::InvalidConfig("trials must be >= 1".into()));
    }
    Ok(())
}

fn estimate(cfg: &RunConfig) -> Result<Emitted, RunError> {
    let modes = [PddMode::Off, PddMode::GroundTruth, PddMode::Soft];
    let rows = nrmse_vs_snr(&cfg.pipeline(), &modes, &cfg.estimate.snrs_db, cfg.trials, cfg.seed)?;
    let mut csv = String::from("snr_db,nrmse_no_pdd,nrmse_pdd_ground_truth,nrmse_pdd_soft\n");
    for (snr, values) in rows {
        let _ = writeln!(csv, "{snr},{:.10e},{:.10e},{:.10e}", values[0], values[1], values[2]);
    }
    let mut out = Emitted::new();
    out.files.push(("nrmse_vs_snr.csv", csv.into_bytes()));
    Ok(out)
}

/// Regressor rows from windows `first..first + count` of `seed`, PDD on.
fn pdd_rows(p: &PipelineConfig, seed: u64, first: u64, count: usize) -> Result<Vec<RegressionRow>, RunError> {
    let runs: Vec<_> = (0..count as u64)
        .into_par_iter()
        .map(|i| run_window(p, &[PddMode::GroundTruth], &mut SeededRng::new(seed, first + i)))
        .collect::<Result<_, _>>()?;
    Ok(runs.iter().flat_map(|r| regression_rows(r, 0, p)).collect())
}

fn train(cfg: &RunConfig) -> Result<Emitted, RunError> {
    check_regressor_shape(cfg)?;
    let rows = pdd_rows(&cfg.pipeline(), cfg.seed, 0, cfg.trials)?;
    let (reg, log) = Regressor::train(&rows, &cfg.transformer, &cfg.train, cfg.seed)?;
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    let mut out = Emitted::new();
    out.files.push(("loss.csv", csv));
    out.json("checkpoint.json", &reg);
    Ok(out)
}

#[derive(Debug, Serialize)]
struct TransferSummary {
    source_velocity_kmh: f64,
    target_velocity_kmh: f64,
    /// `verbatim` (leading `S` factor) or `standard` (mean-based).
    mase_variant: &'static str,
    /// Source model applied to the target test windows unchanged.
    source_only: MetricReport,
    /// After refitting the head on the target training windows.
    transferred: MetricReport,
    head_fit: TransferReport,
}

fn transfer(cfg: &RunConfig) -> Result<Emitted, RunError> {
    check_regressor_shape(cfg)?;
    let t = &cfg.transfer;
    if t.target_train_windows == 0 || t.target_test_windows < 2 {
        return Err(RunError::InvalidConfig("need >= 1 target training and >= 2 target test windows".into()));
    }
    let source = cfg.pipeline();
    let mut target = source.clone();
    target.channel.velocity_mps = t.target_velocity_kmh / 3.6;
    let source_rows = pdd_rows(&source, cfg.seed, 0, cfg.trials)?;
    // Target windows live in a separate block of streams.
    let target_rows = pdd_rows(&target, cfg.seed, 1 << 32, t.target_train_windows + t.target_test_windows)?;
    let users = source.channel.num_users;
    let (target_train, target_test) = target_rows.split_at(t.target_train_windows * users);

    let (reg, _) = Regressor::train(&source_rows, &cfg.transformer, &cfg.train, cfg.seed)?;
    let opts = TransferOptions {
        max_steps: t.max_steps,
        tolerance: t.tolerance,
    };
    let (adapted, head_fit) = reg.transfer(target_train, &opts)?;
    let actual: Vec<f64> = target_test.iter().map(|(_, y)| *y).collect();
    let metrics = |pred: Vec<f64>| -> Result<MetricReport, MetricsError> {
        let mut report = MetricReport::compute(&pred, &actual)?;
        if t.mase_standard {
            report.mase = mase_standard(&pred, &actual)?;
        }
        Ok(report)
    };
    let summary = TransferSummary {
        source_velocity_kmh: cfg.channel.velocity_kmh,
        target_velocity_kmh: t.target_velocity_kmh,
        mase_variant: if t.mase_standard { "standard" } else { "verbatim" },
        source_only: metrics(reg.predict(target_test)?)?,
        transferred: metrics(adapted.predict(target_test)?)?,
        head_fit,
    };
    let mut out = Emitted::new();
    out.json("transfer_report.json", &summary);
    Ok(out)
}

fn handover_sweep(cfg: &RunConfig) -> Result<Emitted, RunError> {
    let sweep = run_mobility_sweep(&cfg.sweep.velocities_kmh, cfg.trials, &cfg.handover, &cfg.mobility, cfg.seed)?;
    let mut csv = Vec::new();
    sweep.write_csv(&mut csv)?;
    let mut events = Vec::new();
    sweep.write_events_ndjson(&mut events)?;
    let mut out = Emitted::new();
    out.files.push(("handover_sweep.csv", csv));
    out.files.push(("handover_events.ndjson", events));
    Ok(out)
}

#[derive(Debug, Serialize)]
struct EpochCheck {
    seq_len: usize,
    d_model: usize,
    samples: usize,
    measured_flops: u64,
    predicted_flops: u64,
    relative_error: f64,
}

#[derive(Debug, Serialize)]
struct ComplexitySummary {
    fits: ComplexityFits,
    epoch_checks: Vec<EpochCheck>,
}

/// `(seq_len, d_model)` settings for the per-epoch count check.
const EPOCH_SETTINGS: [(usize, usize); 3] = [(10, 32), (20, 32), (10, 64)];
const EPOCH_SAMPLES: usize = 8;

fn complexity(cfg: &RunConfig) -> Result<Emitted, RunError> {
    let c = &cfg.complexity;
    if c.k_min == 0 || c.k_max < c.k_min + 3 {
        return Err(RunError::InvalidConfig("complexity sweep needs 1 <= k_min and at least 4 values of K".into()));
    }
    let ks: Vec<usize> = (c.k_min..=c.k_max).collect();
    let rows = complexity_sweep(&ks, &cfg.transformer, cfg.seed)?;
    let fits = fit_complexity(&rows).ok_or_else(|| RunError::InvalidConfig("degenerate K range".into()))?;
    let epoch_checks = EPOCH_SETTINGS
        .iter()
        .map(|&(seq_len, d_model)| {
            let t = TransformerConfig {
                seq_len,
                d_model,
                ..cfg.transformer.clone()
            };
            let measured_flops = epoch_flops(&t, EPOCH_SAMPLES, cfg.seed)?;
            let predicted_flops = EPOCH_SAMPLES as u64 * t.dominant_flops();
            Ok(EpochCheck {
                seq_len,
                d_model,
                samples: EPOCH_SAMPLES,
                measured_flops,
                predicted_flops,
                relative_error: (measured_flops as f64 - predicted_flops as f64).abs() / predicted_flops as f64,
            })
        })
        .collect::<Result<_, TransformerError>>()?;
    let mut csv = Vec::new();
    write_complexity_csv(&rows, &mut csv)?;
    let mut out = Emitted::new();
    out.files.push(("complexity.csv", csv));
    out.json("complexity_fit.json", &ComplexitySummary { fits, epoch_checks });
    Ok(out)
}

fn theory(cfg: &RunConfig) -> Result<Emitted, RunError> {
    let report = theory_check(&cfg.pipeline(), &cfg.theory, cfg.seed)?;
    let mut out = Emitted::new();
    if !report.certificate.certified {
        out.failures.push(format!(
            "refinement certificate failed (eta {:.4e}, bound {:.4e}, contraction {:.4})",
            report.eta, report.certificate.eta_bound, report.certificate.contraction_factor
        ));
    }
    out.json("theory.json", &report);
    Ok(out)
}
