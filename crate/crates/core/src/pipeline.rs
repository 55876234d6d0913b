//! End-to-end Deep-SIC estimation on an uplink NOMA block.
//!
//! Each block carries orthogonal pilots followed by superposed QPSK data from
//! every user. The base station forms MMSE estimates from the pilots, runs
//! SIC over the data with MRC combining, and then refines each user's channel
//! by gradient descent on the pilot-plus-data model. The refinement is where
//! partially decoded data enters: with PDD modeling the decision errors in the
//! data model are fed back as a gradient correction, without it the decoded
//! symbols are taken at face value.
//!
//! A window of consecutive blocks feeds the transformer regressor, which
//! predicts the next block's SNR from the per-block observables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{generate_trace, ChannelConfig, ChannelError, Observables};
use crate::estimation::{
    auto_certify, data_gradient, estimate_beta_lipschitz, gamma_e, mmse_estimate, pdd_corrected_update, BoundCertificate, EstimationError, EstimatorState,
    PddCorrection, PilotBlock, MIN_LIPSCHITZ_PAIRS,
};
use crate::metrics::{nrmse, r_squared, MetricsError};
use crate::noma_link::{qpsk_llr, qpsk_symbol, random_qpsk, soft_residual};
use crate::numerics::{hermitian_solve, linear_to_db, Complex64, ComplexMatrix, ComplexVector, SeededRng};
use crate::transformer::train::{train, TrainLog};
use crate::transformer::{
    encode_features, observable_rows, transfer_fit, Checkpoint, Sample, Standardizer, TrainConfig, TransferOptions, TransferReport,
    TransformerConfig, TransformerError, TransformerModel,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Transformer(#[from] TransformerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
}

/// How decision errors are fed back into the refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PddMode {
    /// Decoded symbols are trusted as-is.
    Off,
    /// Simulation mode: the true residual `s − ŝ`.
    GroundTruth,
    /// Receiver mode: the LLR-derived residual `s_soft − ŝ`.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub channel: ChannelConfig,
    pub n_pilot: usize,
    pub n_data: usize,
    /// Per-antenna pilot SNR of user 0 (the nearest user), in dB.
    pub snr_db: f64,
    pub refine_iters: usize,
    pub llr_gate: f64,
    /// Blocks per regressor window; the target is the block after the window.
    pub window_len: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig {
                num_users: 2,
                distance_far_m: 30.0,
                ..ChannelConfig::default()
            },
            n_pilot: 4,
            n_data: 32,
            snr_db: 0.0,
            refine_iters: 30,
            llr_gate: 0.0,
            window_len: 10,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.channel.validate()?;
        if self.n_pilot < self.channel.num_users {
            return Err(PipelineError::InvalidConfig("n_pilot must be >= num_users".into()));
        }
        if self.n_data == 0 || self.window_len == 0 {
            return Err(PipelineError::InvalidConfig("n_data and window_len must be >= 1".into()));
        }
        Ok(())
    }

    /// Noise variance giving `snr_db` on user 0's pilots.
    pub fn noise_variance(&self) -> f64 {
        self.channel.total_power * self.channel.user_path_loss(0) / 10f64.powf(self.snr_db / 10.0)
    }

    fn amplitude(&self) -> f64 {
        self.channel.total_power.sqrt()
    }
}

/// Everything the base station receives in one block, plus the transmitted symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockData {
    /// `M × N_pilot`
    pub pilot_rx: ComplexMatrix,
    /// `symbols[k][t]`
    pub symbols: Vec<Vec<Complex64>>,
    pub data_rx: Vec<ComplexVector>,
}

pub fn transmit_block(h: &[ComplexVector], pilots: &PilotBlock, cfg: &PipelineConfig, rng: &mut SeededRng) -> BlockData {
    let m = cfg.channel.num_antennas;
    let sigma2 = cfg.noise_variance();
    let a = cfg.amplitude();
    let pilot_rx = ComplexMatrix::from_fn(m, cfg.n_pilot, |r, n| {
        h.iter().enumerate().map(|(k, hk)| hk.as_slice()[r] * pilots.row(k)[n] * a).sum::<Complex64>()
    });
    let noise = ComplexMatrix::from_fn(m, cfg.n_pilot, |_, _| rng.complex_gaussian(sigma2));
    let pilot_rx = pilot_rx.add(&noise).expect("same shape");
    let symbols: Vec<Vec<Complex64>> = h.iter().map(|_| (0..cfg.n_data).map(|_| random_qpsk(rng)).collect()).collect();
    let data_rx = (0..cfg.n_data)
        .map(|t| {
            (0..m)
                .map(|r| {
                    h.iter().zip(&symbols).map(|(hk, sk)| hk.as_slice()[r] * sk[t] * a).sum::<Complex64>()
                        + rng.complex_gaussian(sigma2)
                })
                .collect()
        })
        .collect();
    BlockData {
        pilot_rx,
        symbols,
        data_rx,
    }
}

/// SIC output for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedUser {
    pub user: usize,
    pub decided: Vec<Complex64>,
    pub llr: Vec<(f64, f64)>,
}

/// Decodes users strongest-estimate first with MRC on the running residual.
/// Users not yet decoded and channel-estimation error are treated as
/// Gaussian interference.
pub fn sic_detect(block: &BlockData, estimates: &[ComplexVector], cfg: &PipelineConfig) -> Vec<DecodedUser> {
    let a = cfg.amplitude();
    let sigma2 = cfg.noise_variance();
    let mut order: Vec<usize> = (0..estimates.len()).collect();
    order.sort_by(|&i, &j| estimates[j].norm_sqr().total_cmp(&estimates[i].norm_sqr()));
    // Per-antenna MMSE error variance of each user's estimate; every user's
    // error leaks into the combiner output whether cancelled or not.
    let np = cfg.n_pilot as f64;
    let estimation_noise: f64 = (0..estimates.len())
        .map(|j| {
            let g = cfg.channel.user_path_loss(j);
            a * a * g * sigma2 / (a * a * np * g + sigma2)
        })
        .sum();
    let mut residual = block.data_rx.clone();
    let mut out = Vec::with_capacity(order.len());
    for (stage, &k) in order.iter().enumerate() {
        let hk = &estimates[k];
        let norm = hk.norm().max(1e-300);
        let interference: f64 = order[stage + 1..]
            .iter()
            .map(|&j| a * a * hk.dot(&estimates[j]).norm_sqr() / (norm * norm))
            .sum();
        let variance = (sigma2 + estimation_noise + interference).max(1e-12);
        let mut decided = Vec::with_capacity(cfg.n_data);
        let mut llrs = Vec::with_capacity(cfg.n_data);
        for r in &mut residual {
            let z = hk.dot(r) / norm;
            let llr = qpsk_llr(z, Complex64::new(norm, 0.0), a, variance);
            let s_hat = qpsk_symbol(llr.0 > 0.0, llr.1 > 0.0);
            r.axpy(Complex64::new(-a, 0.0) * s_hat, hk);
            decided.push(s_hat);
            llrs.push(llr);
        }
        out.push(DecodedUser {
            user: k,
            decided,
            llr: llrs,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEstimate {
    pub user: usize,
    pub mmse: ComplexVector,
    pub refined: ComplexVector,
    /// Mean squared PDD residual over the block's data symbols; zero when
    /// PDD is not modeled.
    pub pdd_score: f64,
    /// `‖ψ(ĥ)‖` of the PDD correction at the final iterate; zero when off.
    pub pdd_grad_norm: f64,
    pub certificate: BoundCertificate,
}

/// Stacked observation and model for user `k`: the pilot matched-filter
/// output followed by the data samples with every other user cancelled.
fn refinement_problem(
    block: &BlockData,
    pilots: &PilotBlock,
    k: usize,
    mmse: &[ComplexVector],
    decisions: &[Vec<Complex64>],
    cfg: &PipelineConfig,
) -> (ComplexMatrix, ComplexVector) {
    let m = cfg.channel.num_antennas;
    let a = cfg.amplitude();
    let np = cfg.n_pilot as f64;
    let s_conj: ComplexVector = pilots.row(k).iter().map(|z| z.conj() / np.sqrt()).collect();
    let mut y: Vec<Complex64> = block.pilot_rx.matvec(&s_conj).expect("pilot shape").into_inner();
    for (t, rx) in block.data_rx.iter().enumerate() {
        let mut r = rx.clone();
        for (j, hj) in mmse.iter().enumerate() {
            if j != k {
                r.axpy(Complex64::new(-a, 0.0) * decisions[j][t], hj);
            }
        }
        y.extend(r.iter());
    }
    let rows = m * (1 + cfg.n_data);
    let pilot_gain = a * np.sqrt();
    let j = ComplexMatrix::from_fn(rows, m, |r, c| {
        let (blk, ant) = (r / m, r % m);
        if ant != c {
            Complex64::new(0.0, 0.0)
        } else if blk == 0 {
            Complex64::new(pilot_gain, 0.0)
        } else {
            decisions[k][blk - 1] * a
        }
    });
    (j, ComplexVector::new(y))
}

/// Gradient correction derived from the PDD residuals.
///
/// `J, y` is the model built from the hard decisions and `J_c, y_c` the one
/// built from the residual-corrected symbols of every user, so it also removes
/// the leakage of other users' decision errors from the observation. The
/// correction is `ψ(h) = J_cᴴ(J_c h − y_c) − Jᴴ(J h − y)`; it is passed to the
/// update as the observation-space error `e = J (JᴴJ)⁻¹ ψ`, the least-norm
/// vector with `Jᴴ e = ψ`.
struct PddModel<'a> {
    j: &'a ComplexMatrix,
    y: &'a ComplexVector,
    jc: &'a ComplexMatrix,
    yc: &'a ComplexVector,
    gram: ComplexMatrix,
}

impl<'a> PddModel<'a> {
    fn new(j: &'a ComplexMatrix, y: &'a ComplexVector, jc: &'a ComplexMatrix, yc: &'a ComplexVector) -> Result<Self, EstimationError> {
        Ok(Self {
            j,
            y,
            jc,
            yc,
            gram: j.gram(),
        })
    }

    fn psi(&self, h: &ComplexVector) -> ComplexVector {
        let corrected = data_gradient(self.jc, h, self.yc).expect("model shape");
        let plain = data_gradient(self.j, h, self.y).expect("model shape");
        corrected.sub(&plain)
    }

    fn observation_error(&self, h: &ComplexVector) -> Result<ComplexVector, EstimationError> {
        let coeffs = hermitian_solve(&self.gram, &self.psi(h))?;
        Ok(self.j.matvec(&coeffs)?)
    }
}

/// MMSE → SIC → refinement for every user of one block.
pub fn deep_sic_block(
    block: &BlockData,
    pilots: &PilotBlock,
    cfg: &PipelineConfig,
    mode: PddMode,
    rng: &mut SeededRng,
) -> Result<Vec<UserEstimate>, PipelineError> {
    let m = cfg.channel.num_antennas;
    let a = cfg.amplitude();
    let sigma2 = cfg.noise_variance();
    let r_ss = ComplexMatrix::identity(m).scale_real(cfg.total_pilot_energy());
    let mmse: Vec<ComplexVector> = (0..cfg.channel.num_users)
        .map(|k| {
            let s: Vec<Complex64> = pilots.row(k).iter().map(|z| z * a).collect();
            let r_hh = ComplexMatrix::identity(m).scale_real(cfg.channel.user_path_loss(k));
            mmse_estimate(&block.pilot_rx, &s, &r_hh, &r_ss, sigma2)
        })
        .collect::<Result<_, _>>()?;
    let mut decoded = sic_detect(block, &mmse, cfg);
    decoded.sort_by_key(|d| d.user);
    let decisions: Vec<Vec<Complex64>> = decoded.iter().map(|d| d.decided.clone()).collect();

    let residuals: Vec<Option<Vec<Complex64>>> = decoded
        .iter()
        .map(|d| match mode {
            PddMode::Off => None,
            PddMode::GroundTruth => Some(block.symbols[d.user].iter().zip(&d.decided).map(|(s, s_hat)| s - s_hat).collect()),
            PddMode::Soft => Some(d.llr.iter().zip(&d.decided).map(|(l, s)| soft_residual(*l, *s)).collect()),
        })
        .collect();

    let mut out = Vec::with_capacity(decoded.len());
    for d in &decoded {
        let k = d.user;
        let pdd_score = residuals[k]
            .as_ref()
            .map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>() / r.len() as f64)
            .unwrap_or(0.0);
        let min_abs_llr = d.llr.iter().flat_map(|l| [l.0.abs(), l.1.abs()]).fold(f64::INFINITY, f64::min);
        let (j, y) = refinement_problem(block, pilots, k, &mmse, &decisions, cfg);
        let corrected = residuals[k].as_ref().map(|_| {
            let symbols: Vec<Vec<Complex64>> = decisions
                .iter()
                .zip(&residuals)
                .map(|(dec, res)| dec.iter().zip(res.as_ref().unwrap()).map(|(s, r)| s + r).collect())
                .collect();
            refinement_problem(block, pilots, k, &mmse, &symbols, cfg)
        });
        let pdd = corrected.as_ref().map(|(jc, yc)| PddModel::new(&j, &y, jc, yc)).transpose()?;

        let beta = match &pdd {
            None => 0.0,
            Some(model) => estimate_beta_lipschitz(|h| model.psi(h), m, MIN_LIPSCHITZ_PAIRS, rng)?,
        };
        let eps_pdd = residuals[k]
            .as_ref()
            .map(|r| (r.iter().map(|z| z.norm_sqr()).sum::<f64>() / r.len() as f64).sqrt())
            .unwrap_or(0.0);
        let ge = gamma_e(&j)?;
        let cert = auto_certify(&j, beta, eps_pdd, 1.0, ge)?;
        // The step size always satisfies the η bound by construction; only the
        // PDD error condition can fail, and that is reported rather than fatal.
        let mut state = EstimatorState::new(mmse[k].clone(), &cert, ge);
        for _ in 0..cfg.refine_iters {
            let err = pdd.as_ref().map(|model| model.observation_error(&state.h_hat)).transpose()?;
            let corr = err.as_ref().map(|e| PddCorrection {
                error: e,
                min_abs_llr,
            });
            state = pdd_corrected_update(state, &y, &j, corr, cfg.llr_gate, true)?;
        }
        let pdd_grad_norm = pdd.as_ref().map(|model| model.psi(&state.h_hat).norm()).unwrap_or(0.0);
        out.push(UserEstimate {
            user: k,
            mmse: mmse[k].clone(),
            refined: state.h_hat,
            pdd_score,
            pdd_grad_norm,
            certificate: cert,
        });
    }
    Ok(out)
}

impl PipelineConfig {
    /// `‖a·s‖²` of one pilot row.
    fn total_pilot_energy(&self) -> f64 {
        self.channel.total_power * self.n_pilot as f64
    }
}

/// Per-block estimates for one window under several modes, sharing the
/// channel, noise and data realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRun {
    /// `truth[b][k]`
    pub truth: Vec<Vec<ComplexVector>>,
    /// `estimates[mode][b][k]`
    pub estimates: Vec<Vec<Vec<UserEstimate>>>,
}

pub fn run_window(cfg: &PipelineConfig, modes: &[PddMode], rng: &mut SeededRng) -> Result<WindowRun, PipelineError> {
    cfg.validate()?;
    let channel = ChannelConfig {
        time_steps: cfg.window_len + 1,
        ..cfg.channel.clone()
    };
    let trace = generate_trace(&channel, rng)?;
    let pilots = PilotBlock::dft(cfg.channel.num_users, cfg.n_pilot)?;
    let mut truth = Vec::with_capacity(cfg.window_len + 1);
    let mut estimates = vec![Vec::with_capacity(cfg.window_len + 1); modes.len()];
    for b in 0..=cfg.window_len {
        let h: Vec<ComplexVector> = trace.h.iter().map(|hk| hk[b].clone()).collect();
        let block = transmit_block(&h, &pilots, cfg, rng);
        // Every mode draws its Lipschitz probes from the same stream.
        let beta_seed = (rng.uniform() * (1u64 << 53) as f64) as u64;
        for (mi, &mode) in modes.iter().enumerate() {
            let mut beta_rng = SeededRng::new(beta_seed, 0);
            estimates[mi].push(deep_sic_block(&block, &pilots, cfg, mode, &mut beta_rng)?);
        }
        truth.push(h);
    }
    Ok(WindowRun { truth, estimates })
}

/// Real and imaginary parts of the refined estimates and the truth for the
/// last block of every window.
fn stacked_components(runs: &[WindowRun], mode_index: usize) -> (Vec<f64>, Vec<f64>) {
    let mut pred = Vec::new();
    let mut actual = Vec::new();
    for run in runs {
        let last = run.truth.len() - 1;
        for (est, h) in run.estimates[mode_index][last].iter().zip(&run.truth[last]) {
            for (p, t) in est.refined.iter().zip(h.iter()) {
                pred.extend([p.re, p.im]);
                actual.extend([t.re, t.im]);
            }
        }
    }
    (pred, actual)
}

/// Regressor windows for one mode: one sample per user and window, features
/// from the first `window_len` blocks, target the true SNR of the next block.
pub fn regression_rows(run: &WindowRun, mode_index: usize, cfg: &PipelineConfig) -> Vec<(Vec<Vec<f64>>, f64)> {
    let sigma2 = cfg.noise_variance();
    let p = cfg.channel.total_power;
    let snr = |h: &ComplexVector| linear_to_db((p * h.norm_sqr() / sigma2).max(1e-30));
    (0..cfg.channel.num_users)
        .map(|k| {
            let obs: Vec<Observables> = (0..cfg.window_len)
                .map(|b| {
                    let est = &run.estimates[mode_index][b][k];
                    Observables::from_snr_db(snr(&est.refined), est.pdd_score)
                })
                .collect();
            let target = Observables::from_snr_db(snr(&run.truth[cfg.window_len][k]), 0.0).snr_db;
            (observable_rows(&obs), target)
        })
        .collect()
}

/// One regressor example: a window of feature rows and its target.
pub type RegressionRow = (Vec<Vec<f64>>, f64);
pub type RegressionRows = [RegressionRow];

/// Transformer regressor together with its feature and target scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub checkpoint: Checkpoint,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Regressor {
    /// Standardizes features and targets on `rows` and trains a fresh model.
    /// Weights are initialized from stream `u64::MAX` of `seed` and the
    /// sample order is drawn from stream `u64::MAX − 1`.
    pub fn train(rows: &RegressionRows, model_cfg: &TransformerConfig, train_cfg: &TrainConfig, seed: u64) -> Result<(Self, TrainLog), PipelineError> {
        let all_feature_rows: Vec<Vec<f64>> = rows.iter().flat_map(|(w, _)| w.clone()).collect();
        let standardizer = Standardizer::fit(&all_feature_rows)?;
        let targets: Vec<f64> = rows.iter().map(|(_, t)| *t).collect();
        let target_mean = targets.iter().sum::<f64>() / targets.len() as f64;
        let target_std = crate::metrics::population_std(&targets).max(1e-12);
        let model = TransformerModel::new(model_cfg.clone(), &mut SeededRng::new(seed, u64::MAX))?;
        let mut reg = Self {
            checkpoint: Checkpoint::new(model, standardizer),
            target_mean,
            target_std,
        };
        let samples = reg.samples(rows)?;
        let log = train(&mut reg.checkpoint.model, &samples, train_cfg, &mut SeededRng::new(seed, u64::MAX - 1))?;
        Ok((reg, log))
    }

    /// Token sequences and scaled targets under this regressor's statistics.
    pub fn samples(&self, rows: &RegressionRows) -> Result<Vec<Sample>, TransformerError> {
        let seq_len = self.checkpoint.model.config.seq_len;
        rows.iter()
            .map(|(w, t)| {
                Ok(Sample {
                    seq: encode_features(w, &self.checkpoint.standardizer, seq_len)?,
                    target: vec![(t - self.target_mean) / self.target_std],
                })
            })
            .collect()
    }

    /// Predictions in target units.
    pub fn predict(&self, rows: &RegressionRows) -> Result<Vec<f64>, TransformerError> {
        self.samples(rows)?
            .iter()
            .map(|s| self.checkpoint.model.forward(&s.seq).map(|y| y[0] * self.target_std + self.target_mean))
            .collect()
    }

    /// Freezes the backbone and refits the head on `rows`, keeping the
    /// source-domain scaling.
    pub fn transfer(&self, rows: &RegressionRows, opts: &TransferOptions) -> Result<(Self, TransferReport), PipelineError> {
        let mut frozen = self.checkpoint.model.clone();
        frozen.freeze();
        let (model, report) = transfer_fit(&frozen, &self.samples(rows)?, opts)?;
        Ok((
            Self {
                checkpoint: Checkpoint::new(model, self.checkpoint.standardizer.clone()),
                ..self.clone()
            },
            report,
        ))
    }
}

/// Trains a regressor on `train_rows` and returns its predictions for `test_rows`.
pub fn fit_regressor(
    train_rows: &RegressionRows,
    test_rows: &RegressionRows,
    model_cfg: &TransformerConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<f64>, PipelineError> {
    let (reg, _) = Regressor::train(train_rows, model_cfg, train_cfg, seed)?;
    Ok(reg.predict(test_rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    pub mode: PddMode,
    /// NRMSE of the refined estimates over the test windows.
    pub nrmse: f64,
    /// NRMSE of the MMSE starting point.
    pub mmse_nrmse: f64,
    /// Regressor R² on the test windows.
    pub r_squared: f64,
    pub certified_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PddBenefitReport {
    pub snr_db: f64,
    pub train_windows: usize,
    pub test_windows: usize,
    pub outcomes: Vec<ModeOutcome>,
}

impl PddBenefitReport {
    pub fn outcome(&self, mode: PddMode) -> Option<&ModeOutcome> {
        self.outcomes.iter().find(|o| o.mode == mode)
    }
}

/// Runs every mode on the same windows and trains one regressor per mode
/// from the same initial weights. Window `i` uses stream `i` of `seed`.
pub fn pdd_benefit(
    cfg: &PipelineConfig,
    modes: &[PddMode],
    train_windows: usize,
    test_windows: usize,
    model_cfg: &TransformerConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<PddBenefitReport, PipelineError> {
    if test_windows == 0 || train_windows == 0 {
        return Err(PipelineError::InvalidConfig("window counts must be >= 1".into()));
    }
    if model_cfg.seq_len != cfg.window_len || model_cfg.input_features != 4 || model_cfg.d_out != 1 {
        return Err(PipelineError::InvalidConfig(
            "regressor needs seq_len = window_len, 4 input features and d_out = 1".into(),
        ));
    }
    let runs: Vec<WindowRun> = (0..train_windows + test_windows)
        .into_par_iter()
        .map(|i| run_window(cfg, modes, &mut SeededRng::new(seed, i as u64)))
        .collect::<Result<_, _>>()?;
    let (train_runs, test_runs) = runs.split_at(train_windows);

    let mut outcomes = Vec::with_capacity(modes.len());
    for (mi, &mode) in modes.iter().enumerate() {
        let (pred, actual) = stacked_components(test_runs, mi);
        let mmse_pred: Vec<f64> = test_runs
            .iter()
            .flat_map(|r| {
                r.estimates[mi][r.truth.len() - 1]
                    .iter()
                    .flat_map(|e| e.mmse.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            })
            .collect();
        let certified = runs.iter().flat_map(|r| r.estimates[mi].iter().flatten()).filter(|e| e.certificate.certified).count();
        let total = runs.iter().map(|r| r.estimates[mi].iter().flatten().count()).sum::<usize>();

        let train_rows: Vec<_> = train_runs.iter().flat_map(|r| regression_rows(r, mi, cfg)).collect();
        let test_rows: Vec<_> = test_runs.iter().flat_map(|r| regression_rows(r, mi, cfg)).collect();
        let predicted = fit_regressor(&train_rows, &test_rows, model_cfg, train_cfg, seed)?;
        let truth: Vec<f64> = test_rows.iter().map(|(_, t)| *t).collect();

        outcomes.push(ModeOutcome {
            mode,
            nrmse: nrmse(&pred, &actual)?,
            mmse_nrmse: nrmse(&mmse_pred, &actual)?,
            r_squared: r_squared(&predicted, &truth)?,
            certified_fraction: certified as f64 / total.max(1) as f64,
        });
    }
    Ok(PddBenefitReport {
        snr_db: cfg.snr_db,
        train_windows,
        test_windows,
        outcomes,
    })
}

/// Final refined-estimate NRMSE per mode at each SNR, without the regressor.
pub fn nrmse_vs_snr(cfg: &PipelineConfig, modes: &[PddMode], snrs_db: &[f64], windows: usize, seed: u64) -> Result<Vec<(f64, Vec<f64>)>, PipelineError> {
    snrs_db
        .iter()
        .enumerate()
        .map(|(si, &snr)| {
            let c = PipelineConfig {
                snr_db: snr,
                window_len: 1,
                ..cfg.clone()
            };
            let runs: Vec<WindowRun> = (0..windows)
                .into_par_iter()
                .map(|i| run_window(&c, modes, &mut SeededRng::new(seed, ((si as u64) << 32) | i as u64)))
                .collect::<Result<_, _>>()?;
            let per_mode = (0..modes.len())
                .map(|mi| {
                    let (p, a) = stacked_components(&runs, mi);
                    nrmse(&p, &a)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((snr, per_mode))
        })
        .collect()
}
