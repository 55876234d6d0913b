//! Two-cell handover simulation with a reliability-weighted trigger.
//!
//! Each cell is ranked by `csi_db − α·pdd_score`: a cell whose recent data
//! decoding left large residuals looks worse than its raw channel quality.
//! A handover fires after the target outranks the serving cell by more than
//! the hysteresis for `ttt_steps` consecutive steps. Failures and ping-pongs
//! are detected from the true link SNR and the handover history.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{bessel_j0, db_to_linear, linear_to_db, Complex64, SeededRng};
use crate::noma_link::{qpsk_hard, random_qpsk, PddReliability};

/// Steps after a handover during which a low SNR counts as a failure.
pub const HOF_WINDOW_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HandoverError {
    #[error("invalid handover config: {0}")]
    InvalidConfig(String),
    #[error("trials must be >= 1")]
    NoTrials,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HandoverConfig {
    pub alpha: f64,
    pub ttt_steps: usize,
    pub hysteresis_db: f64,
    pub pingpong_window: usize,
    pub hof_sinr_floor_db: f64,
    pub velocity_kmh: f64,
}

impl Default for HandoverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            ttt_steps: 3,
            hysteresis_db: 1.0,
            pingpong_window: 20,
            hof_sinr_floor_db: -10.0,
            velocity_kmh: 60.0,
        }
    }
}

impl HandoverConfig {
    pub fn validate(&self) -> Result<(), HandoverError> {
        if !(self.alpha >= 0.0) || !(self.hysteresis_db >= 0.0) {
            return Err(HandoverError::InvalidConfig("alpha and hysteresis_db must be >= 0".into()));
        }
        if self.pingpong_window <= self.ttt_steps {
            return Err(HandoverError::InvalidConfig("pingpong_window must exceed ttt_steps".into()));
        }
        if !(self.velocity_kmh >= 0.0) {
            return Err(HandoverError::InvalidConfig("velocity_kmh must be >= 0".into()));
        }
        Ok(())
    }
}

/// `csi_db − α·pdd_score`: low residual energy ranks a cell higher.
pub fn decision_score(csi_db: f64, pdd: &PddReliability, alpha: f64) -> f64 {
    csi_db - alpha * pdd.score
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TriggerStart,
    TriggerAbort,
    Handover,
    Hof,
    Pingpong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandoverEvent {
    pub t: usize,
    pub kind: EventKind,
    pub serving_cell: usize,
    pub target_cell: usize,
    pub score0: f64,
    pub score1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HandoverLog {
    pub events: Vec<HandoverEvent>,
    pub handover_count: usize,
    pub hof_count: usize,
    pub pingpong_count: usize,
}

impl HandoverLog {
    fn push(&mut self, ev: HandoverEvent) {
        match ev.kind {
            EventKind::Handover => self.handover_count += 1,
            EventKind::Hof => self.hof_count += 1,
            EventKind::Pingpong => self.pingpong_count += 1,
            _ => {}
        }
        self.events.push(ev);
    }

    /// One JSON object per line.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut out, ev)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Observation of both cells at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInput {
    /// Decision scores of cell 0 and cell 1.
    pub scores: [f64; 2],
    /// True link SNR of each cell, used only for failure detection.
    pub snr_db: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoverState {
    pub t: usize,
    pub serving: usize,
    pub ttt_counter: usize,
    /// `(time, source cell)` of the most recent handover.
    pub last_handover: Option<(usize, usize)>,
    hof_pending: Option<usize>,
}

impl HandoverState {
    pub fn new(serving: usize) -> Self {
        Self {
            t: 0,
            serving,
            ttt_counter: 0,
            last_handover: None,
            hof_pending: None,
        }
    }
}

/// Advances the trigger state machine by one step, appending any events to `log`.
pub fn step_handover(state: &mut HandoverState, input: &StepInput, cfg: &HandoverConfig, log: &mut HandoverLog) {
    let t = state.t;
    let serving = state.serving;
    let target = 1 - serving;
    let event = |kind, serving_cell, target_cell| HandoverEvent {
        t,
        kind,
        serving_cell,
        target_cell,
        score0: input.scores[0],
        score1: input.scores[1],
    };

    if let Some(th) = state.hof_pending {
        if t > th + HOF_WINDOW_STEPS {
            state.hof_pending = None;
        } else if t > th && input.snr_db[serving] < cfg.hof_sinr_floor_db {
            log.push(event(EventKind::Hof, serving, target));
            state.hof_pending = None;
        }
    }

    if input.scores[target] > input.scores[serving] + cfg.hysteresis_db {
        if state.ttt_counter == 0 {
            log.push(event(EventKind::TriggerStart, serving, target));
        }
        state.ttt_counter += 1;
        if state.ttt_counter >= cfg.ttt_steps {
            log.push(event(EventKind::Handover, serving, target));
            if let Some((t_prev, from)) = state.last_handover {
                if from == target && t - t_prev <= cfg.pingpong_window {
                    log.push(event(EventKind::Pingpong, serving, target));
                }
            }
            state.last_handover = Some((t, serving));
            state.serving = target;
            state.ttt_counter = 0;
            state.hof_pending = Some(t);
        }
    } else if state.ttt_counter > 0 {
        log.push(event(EventKind::TriggerAbort, serving, target));
        state.ttt_counter = 0;
    }
    state.t += 1;
}

/// Runs a full trace starting on `initial_cell`.
pub fn run_trace(inputs: &[StepInput], cfg: &HandoverConfig, initial_cell: usize) -> HandoverLog {
    let mut state = HandoverState::new(initial_cell);
    let mut log = HandoverLog::default();
    for input in inputs {
        step_handover(&mut state, input, cfg, &mut log);
    }
    log
}

/// Geometry and link parameters of the two-cell crossing scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub bs_separation_m: f64,
    /// UE start and end distance from cell 0.
    pub start_m: f64,
    pub end_m: f64,
    pub step_duration_s: f64,
    pub carrier_wavelength_m: f64,
    pub pathloss_exponent: f64,
    pub noise_variance: f64,
    pub total_power: f64,
    pub n_pilot: usize,
    pub n_data: usize,
    /// Number of past steps averaged into the PDD score.
    pub pdd_window: usize,
    /// Trace length when the UE does not move.
    pub static_steps: usize,
    /// Weight of the newest sample in the exponential CSI filter; 1 disables filtering.
    pub csi_filter_coeff: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            bs_separation_m: 70.0,
            start_m: 20.0,
            end_m: 50.0,
            step_duration_s: 5e-4,
            carrier_wavelength_m: 0.15,
            pathloss_exponent: 3.0,
            noise_variance: 5e-5,
            total_power: 1.0,
            n_pilot: 4,
            n_data: 16,
            pdd_window: 1,
            static_steps: 1000,
            csi_filter_coeff: 0.005,
        }
    }
}

/// Estimation pipeline feeding the trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Pilot-only least-squares CSI, no reliability term.
    PureCsi,
    /// Decision-directed CSI refined over the data block, no reliability term.
    DeepSicNoPdd,
    /// Same CSI plus the `α·pdd_score` reliability term.
    DeepSicPdd,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::PureCsi, Policy::DeepSicNoPdd, Policy::DeepSicPdd];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::PureCsi => "pure-csi",
            Policy::DeepSicNoPdd => "deep-sic-no-pdd",
            Policy::DeepSicPdd => "deep-sic-pdd",
        }
    }
}

/// Per-cell, per-step measurements shared by all policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMeasurement {
    pub true_snr_db: f64,
    pub pilot_csi_db: f64,
    pub refined_csi_db: f64,
    pub pdd_score: f64,
}

fn snr_db(gain: Complex64, cfg: &MobilityConfig) -> f64 {
    linear_to_db((gain.norm_sqr() * cfg.total_power / cfg.noise_variance).max(1e-30))
}

/// Pilot LS, decision-directed refinement and PDD residuals for one block on
/// the scalar link `y = g·x + n`. Returns `(ĝ_LS, ĝ_DD, residual energies)`.
fn measure_block(g: Complex64, cfg: &MobilityConfig, rng: &mut SeededRng) -> (Complex64, Complex64, Vec<Complex64>) {
    let sigma2 = cfg.noise_variance / cfg.total_power;
    let np = cfg.n_pilot.max(1);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..np {
        let x = Complex64::from_polar(1.0, -2.0 * PI * i as f64 / np as f64);
        let y = g * x + rng.complex_gaussian(sigma2);
        acc += x.conj() * y;
    }
    let g_ls = acc / np as f64;
    let mut dd = acc;
    let mut residuals = Vec::with_capacity(cfg.n_data);
    for _ in 0..cfg.n_data {
        let s = random_qpsk(rng);
        let y = g * s + rng.complex_gaussian(sigma2);
        let s_hat = qpsk_hard(g_ls.conj() * y);
        dd += s_hat.conj() * y;
        residuals.push(s - s_hat);
    }
    (g_ls, dd / (np + cfg.n_data) as f64, residuals)
}

/// Gauss–Markov step correlation for a UE speed.
pub fn step_correlation(velocity_kmh: f64, cfg: &MobilityConfig) -> f64 {
    let v = velocity_kmh / 3.6;
    bessel_j0(2.0 * PI * v / cfg.carrier_wavelength_m * cfg.step_duration_s)
}

/// Simulates both cells along the crossing path. Cell 0 sits at the origin,
/// cell 1 at `bs_separation_m`; the UE moves from `start_m` to `end_m`.
pub fn crossing_trace(velocity_kmh: f64, cfg: &MobilityConfig, rng: &mut SeededRng) -> Vec<[CellMeasurement; 2]> {
    let v = velocity_kmh / 3.6;
    let steps = if v > 0.0 {
        ((cfg.end_m - cfg.start_m).abs() / (v * cfg.step_duration_s)).ceil() as usize
    } else {
        cfg.static_steps
    };
    let rho = step_correlation(velocity_kmh, cfg);
    let innovation = (1.0 - rho * rho).max(0.0).sqrt();
    let mut fading = [rng.complex_gaussian(1.0), rng.complex_gaussian(1.0)];
    let mut windows: [Vec<Vec<Complex64>>; 2] = [Vec::new(), Vec::new()];
    let mut trace = Vec::with_capacity(steps);
    let dir = (cfg.end_m - cfg.start_m).signum();
    for t in 0..steps {
        if t > 0 && innovation > 0.0 {
            for f in &mut fading {
                *f = *f * rho + rng.complex_gaussian(1.0) * innovation;
            }
        }
        let x = cfg.start_m + dir * v * cfg.step_duration_s * t as f64;
        let dist = [x.abs().max(1.0), (cfg.bs_separation_m - x).abs().max(1.0)];
        let mut cells = [CellMeasurement {
            true_snr_db: 0.0,
            pilot_csi_db: 0.0,
            refined_csi_db: 0.0,
            pdd_score: 0.0,
        }; 2];
        for c in 0..2 {
            let g = fading[c] * dist[c].powf(-cfg.pathloss_exponent / 2.0);
            let (g_ls, g_dd, residuals) = measure_block(g, cfg, rng);
            let win = &mut windows[c];
            win.push(residuals);
            if win.len() > cfg.pdd_window.max(1) {
                win.remove(0);
            }
            let flat: Vec<Complex64> = win.iter().flatten().copied().collect();
            cells[c] = CellMeasurement {
                true_snr_db: snr_db(g, cfg),
                pilot_csi_db: snr_db(g_ls, cfg),
                refined_csi_db: snr_db(g_dd, cfg),
                pdd_score: PddReliability::from_residuals(&flat).score,
            };
        }
        trace.push(cells);
    }
    trace
}

/// Converts measurements into trigger inputs for `policy`. CSI is averaged in
/// the linear domain with an exponential filter of weight `filter_coeff`
/// before the reliability term is applied.
pub fn policy_inputs(trace: &[[CellMeasurement; 2]], policy: Policy, alpha: f64, filter_coeff: f64) -> Vec<StepInput> {
    let mut filtered: Option<[f64; 2]> = None;
    trace
        .iter()
        .map(|cells| {
            let raw = |m: &CellMeasurement| match policy {
                Policy::PureCsi => m.pilot_csi_db,
                Policy::DeepSicNoPdd | Policy::DeepSicPdd => m.refined_csi_db,
            };
            let lin = [db_to_linear(raw(&cells[0])), db_to_linear(raw(&cells[1]))];
            let f = match filtered {
                None => lin,
                Some(prev) => [0, 1].map(|c| prev[c] + filter_coeff * (lin[c] - prev[c])),
            };
            filtered = Some(f);
            let score = |c: usize| {
                let csi = linear_to_db(f[c].max(1e-30));
                match policy {
                    Policy::DeepSicPdd => decision_score(
                        csi,
                        &PddReliability {
                            score: cells[c].pdd_score,
                            window_len: 0,
                        },
                        alpha,
                    ),
                    _ => csi,
                }
            };
            StepInput {
                scores: [score(0), score(1)],
                snr_db: [cells[0].true_snr_db, cells[1].true_snr_db],
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub velocity_kmh: f64,
    pub policy: Policy,
    pub trials: usize,
    pub handovers: usize,
    pub hofs: usize,
    pub pingpongs: usize,
    pub hof_rate: f64,
    pub pingpong_rate: f64,
}

/// Per-trial counts for every policy, kept for paired comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub velocity_kmh: f64,
    pub trial: usize,
    pub policy: Policy,
    pub handovers: usize,
    pub hofs: usize,
    pub pingpongs: usize,
}

/// A trace event labelled with the trial that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedEvent {
    pub velocity_kmh: f64,
    pub trial: usize,
    pub policy: Policy,
    #[serde(flatten)]
    pub event: HandoverEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub outcomes: Vec<TrialOutcome>,
    /// Every event of every trial, ordered by velocity, trial, policy and step.
    pub events: Vec<TaggedEvent>,
}

impl SweepResult {
    pub fn row(&self, velocity_kmh: f64, policy: Policy) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.velocity_kmh == velocity_kmh && r.policy == policy)
    }

    pub fn write_events_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        for ev in &self.events {
            serde_json::to_writer(&mut out, ev)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "velocity_kmh,policy,trials,handovers,hofs,pingpongs,hof_rate,pingpong_rate")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.8e},{:.8e}",
                r.velocity_kmh,
                r.policy.name(),
                r.trials,
                r.handovers,
                r.hofs,
                r.pingpongs,
                r.hof_rate,
                r.pingpong_rate
            )?;
        }
        Ok(())
    }
}

/// Independent crossing trials at every velocity, all policies evaluated on
/// the same realization of each trial. Trial `i` at velocity index `j` uses
/// stream `(j << 32) | i` of `seed`, so results do not depend on the thread count.
pub fn run_mobility_sweep(
    velocities: &[f64],
    trials: usize,
    cfg: &HandoverConfig,
    mobility: &MobilityConfig,
    seed: u64,
) -> Result<SweepResult, HandoverError> {
    if trials == 0 {
        return Err(HandoverError::NoTrials);
    }
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    let mut events = Vec::new();
    for (vi, &v) in velocities.iter().enumerate() {
        let per_trial: Vec<Vec<(TrialOutcome, HandoverLog)>> = (0..trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = SeededRng::new(seed, ((vi as u64) << 32) | i as u64);
                let trace = crossing_trace(v, mobility, &mut rng);
                Policy::ALL
                    .iter()
                    .map(|&policy| {
                        let log = run_trace(&policy_inputs(&trace, policy, cfg.alpha, mobility.csi_filter_coeff), cfg, 0);
                        let outcome = TrialOutcome {
                            velocity_kmh: v,
                            trial: i,
                            policy,
                            handovers: log.handover_count,
                            hofs: log.hof_count,
                            pingpongs: log.pingpong_count,
                        };
                        (outcome, log)
                    })
                    .collect()
            })
            .collect();
        for policy in Policy::ALL {
            let mine: Vec<&TrialOutcome> = per_trial.iter().flatten().map(|(o, _)| o).filter(|o| o.policy == policy).collect();
            let handovers = mine.iter().map(|o| o.handovers).sum();
            let hofs = mine.iter().map(|o| o.hofs).sum();
            let pingpongs = mine.iter().map(|o| o.pingpongs).sum();
            rows.push(SweepRow {
                velocity_kmh: v,
                policy,
                trials,
                handovers,
                hofs,
                pingpongs,
                hof_rate: hofs as f64 / trials as f64,
                pingpong_rate: pingpongs as f64 / trials as f64,
            });
        }
        for (outcome, log) in per_trial.into_iter().flatten() {
            events.extend(log.events.into_iter().map(|event| TaggedEvent {
                velocity_kmh: v,
                trial: outcome.trial,
                policy: outcome.policy,
                event,
            }));
            outcomes.push(outcome);
        }
    }
    Ok(SweepResult { rows, outcomes, events })
}

/// Parameters of the oscillating two-cell trace used to provoke ping-pongs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillationConfig {
    pub steps: usize,
    pub base_snr_db: f64,
    pub amplitude_db: f64,
    pub min_half_period: usize,
    pub max_half_period: usize,
    pub measurement_noise_db: f64,
    pub n_data: usize,
    pub pdd_window: usize,
}

impl Default for OscillationConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            base_snr_db: 10.0,
            amplitude_db: 2.0,
            min_half_period: 4,
            max_half_period: 8,
            measurement_noise_db: 0.5,
            n_data: 16,
            pdd_window: 4,
        }
    }
}

/// Cell 0 is steady; cell 1 alternates between two channel states `±A` dB
/// around it with a random phase offset between the states. The receiver's
/// estimate of cell 1 is refreshed only at each state change from the state
/// that just ended, so cell 1's data decoding leaves residuals that track the
/// oscillation. Returns `(csi_db, pdd_score, true_snr_db)` per cell and step.
pub fn oscillating_trace(cfg: &OscillationConfig, rng: &mut SeededRng) -> Vec<[(f64, f64, f64); 2]> {
    let half = cfg.min_half_period + rng.below(cfg.max_half_period - cfg.min_half_period + 1);
    let offset = rng.below(2 * half);
    let phase_jump = PI / 2.0 + (rng.uniform() - 0.5) * PI / 4.0;
    let amp = |db: f64| 10f64.powf(db / 20.0);
    let base_phase = rng.uniform() * 2.0 * PI;
    let states = [
        Complex64::from_polar(amp(cfg.base_snr_db - cfg.amplitude_db), base_phase),
        Complex64::from_polar(amp(cfg.base_snr_db + cfg.amplitude_db), base_phase + phase_jump),
    ];
    let steady = Complex64::from_polar(amp(cfg.base_snr_db), rng.uniform() * 2.0 * PI);
    let mut windows: [Vec<Complex64>; 2] = [Vec::new(), Vec::new()];
    let mut out = Vec::with_capacity(cfg.steps);
    for t in 0..cfg.steps {
        let phase_idx = ((t + offset) / half) % 2;
        let g1 = states[phase_idx];
        let g1_hat = states[1 - phase_idx];
        for (c, (g, g_hat)) in [(steady, steady), (g1, g1_hat)].into_iter().enumerate() {
            let w = &mut windows[c];
            for _ in 0..cfg.n_data {
                let s = random_qpsk(rng);
                let y = g * s + rng.complex_gaussian(1.0);
                w.push(s - qpsk_hard(g_hat.conj() * y));
            }
            let excess = w.len().saturating_sub(cfg.pdd_window * cfg.n_data);
            w.drain(..excess);
        }
        let row = [steady, g1]
            .iter()
            .zip(&windows)
            .map(|(g, w)| {
                let snr = linear_to_db(g.norm_sqr());
                (snr + rng.normal(0.0, cfg.measurement_noise_db), PddReliability::from_residuals(w).score, snr)
            })
            .collect::<Vec<_>>();
        out.push([row[0], row[1]]);
    }
    out
}

/// Trigger inputs for an oscillating trace at reliability weight `alpha`.
pub fn oscillation_inputs(trace: &[[(f64, f64, f64); 2]], alpha: f64) -> Vec<StepInput> {
    trace
        .iter()
        .map(|cells| {
            let score = |(csi, pdd, _): (f64, f64, f64)| csi - alpha * pdd;
            StepInput {
                scores: [score(cells[0]), score(cells[1])],
                snr_db: [cells[0].2, cells[1].2],
            }
        })
        .collect()
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `wins + losses` fair coin flips.
pub fn sign_test_p_value(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    (wins..=n)
        .map(|k| (ln_fact[n] - ln_fact[k] - ln_fact[n - k] - n as f64 * 2f64.ln()).exp())
        .sum::<f64>()
        .min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn steady(scores: [f64; 2]) -> StepInput {
        StepInput {
            scores,
            snr_db: [10.0, 10.0],
        }
    }

    #[test]
    fn score_examples() {
        assert_eq!(decision_score(-7.0, &PddReliability::perfect(), 0.5), -7.0);
        let s0 = decision_score(-11.0, &PddReliability::perfect(), 1.0);
        let s1 = decision_score(
            -10.0,
            &PddReliability {
                score: 2.0,
                window_len: 8,
            },
            1.0,
        );
        assert_eq!((s0, s1), (-11.0, -12.0));
        let cfg = HandoverConfig {
            ttt_steps: 1,
            ..HandoverConfig::default()
        };
        let log = run_trace(&[steady([s0, s1]); 5], &cfg, 0);
        assert_eq!(log.handover_count, 0);
        let p = PddReliability {
            score: 3.0,
            window_len: 8,
        };
        assert_eq!(decision_score(-10.0, &p, 0.0), -10.0);
    }

    #[test]
    fn ttt_counting() {
        let cfg = HandoverConfig::default();
        let log = run_trace(&[steady([0.0, 3.0]); 6], &cfg, 0);
        let ho: Vec<_> = log.events.iter().filter(|e| e.kind == EventKind::Handover).collect();
        assert_eq!(ho.len(), 1);
        assert_eq!(ho[0].t, 2);
        assert_eq!(log.events[0].kind, EventKind::TriggerStart);
        assert_eq!(log.events[0].t, 0);
    }

    #[test]
    fn ttt_reset_on_failure() {
        let cfg = HandoverConfig::default();
        let inputs = [steady([0.0, 3.0]), steady([0.0, 3.0]), steady([0.0, 0.0]), steady([0.0, 0.0])];
        let log = run_trace(&inputs, &cfg, 0);
        assert_eq!(log.handover_count, 0);
        let kinds: Vec<_> = log.events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::TriggerStart, EventKind::TriggerAbort]);
    }

    #[test]
    fn hof_and_pingpong_detection() {
        let cfg = HandoverConfig::default();
        let mut inputs = vec![steady([0.0, 3.0]); 3];
        inputs.push(StepInput {
            scores: [0.0, 3.0],
            snr_db: [10.0, -20.0],
        });
        inputs.extend(vec![steady([3.0, 0.0]); 3]);
        let log = run_trace(&inputs, &cfg, 0);
        assert_eq!(log.handover_count, 2);
        assert_eq!(log.hof_count, 1);
        assert_eq!(log.pingpong_count, 1);
        let hof = log.events.iter().find(|e| e.kind == EventKind::Hof).unwrap();
        assert_eq!((hof.t, hof.serving_cell), (3, 1));
    }

    #[test]
    fn square_wave_pingpong_hand_enumeration() {
        // period 10 (5 up, 5 down), ttt 3: handovers at t = 2, 7, 12, 17, ...
        let cfg = HandoverConfig::default();
        let inputs: Vec<StepInput> = (0..40)
            .map(|t| if (t / 5) % 2 == 0 { steady([0.0, 2.0]) } else { steady([2.0, 0.0]) })
            .collect();
        let log = run_trace(&inputs, &cfg, 0);
        let times: Vec<usize> = log.events.iter().filter(|e| e.kind == EventKind::Handover).map(|e| e.t).collect();
        assert_eq!(times, vec![2, 7, 12, 17, 22, 27, 32, 37]);
        assert_eq!(log.pingpong_count, 7);
    }

    proptest! {
        #[test]
        fn log_invariants_hold_on_random_traces(
            steps in proptest::collection::vec((-6.0f64..6.0, -6.0f64..6.0, -15.0f64..15.0, -15.0f64..15.0), 1..300),
            ttt_steps in 1usize..6,
            hysteresis_db in 0.0f64..3.0,
        ) {
            let cfg = HandoverConfig { ttt_steps, hysteresis_db, ..HandoverConfig::default() };
            let mut state = HandoverState::new(0);
            let mut log = HandoverLog::default();
            for &(s0, s1, r0, r1) in &steps {
                step_handover(&mut state, &StepInput { scores: [s0, s1], snr_db: [r0, r1] }, &cfg, &mut log);
                prop_assert!(state.ttt_counter <= cfg.ttt_steps);
            }
            prop_assert!(log.pingpong_count <= log.handover_count);
            let tally = |k| log.events.iter().filter(|e| e.kind == k).count();
            prop_assert_eq!(tally(EventKind::Handover), log.handover_count);
            prop_assert_eq!(tally(EventKind::Hof), log.hof_count);
            prop_assert_eq!(tally(EventKind::Pingpong), log.pingpong_count);
            let first_handover = log.events.iter().position(|e| e.kind == EventKind::Handover);
            for (i, e) in log.events.iter().enumerate() {
                if matches!(e.kind, EventKind::Hof | EventKind::Pingpong) {
                    prop_assert!(first_handover.is_some_and(|h| h < i));
                }
            }
        }
    }

    #[test]
    fn static_symmetric_channels_never_hand_over() {
        let cfg = HandoverConfig::default();
        let mob = MobilityConfig::default();
        let mut rng = SeededRng::new(9, 0);
        let mut inputs = Vec::new();
        let cell = crossing_trace(0.0, &mob, &mut rng);
        for step in &cell {
            let shared = step[0];
            for policy in Policy::ALL {
                inputs.push(policy_inputs(&[[shared, shared]], policy, cfg.alpha, 1.0)[0]);
            }
        }
        let log = run_trace(&inputs, &cfg, 0);
        assert_eq!((log.handover_count, log.hof_count), (0, 0));
    }

    #[test]
    fn crossing_trace_geometry() {
        let mob = MobilityConfig::default();
        let trace = crossing_trace(108.0, &mob, &mut SeededRng::new(1, 0));
        assert_eq!(trace.len(), 2000);
        let mean = |range: std::ops::Range<usize>, c: usize| {
            trace[range.clone()].iter().map(|s| s[c].true_snr_db).sum::<f64>() / range.len() as f64
        };
        assert!(mean(0..200, 0) > mean(0..200, 1));
        assert!(mean(1800..2000, 1) > mean(1800..2000, 0));
    }

    #[test]
    fn sweep_is_deterministic() {
        let cfg = HandoverConfig::default();
        let mob = MobilityConfig::default();
        let a = run_mobility_sweep(&[60.0], 8, &cfg, &mob, 5).unwrap();
        let b = run_mobility_sweep(&[60.0], 8, &cfg, &mob, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("velocity_kmh,policy,trials,handovers,hofs,pingpongs,hof_rate,pingpong_rate\n"));
        assert!(matches!(run_mobility_sweep(&[0.0], 0, &cfg, &mob, 5), Err(HandoverError::NoTrials)));
    }

    #[test]
    fn ndjson_one_event_per_line() {
        let log = run_trace(&[steady([0.0, 3.0]); 4], &HandoverConfig::default(), 0);
        let mut buf = Vec::new();
        log.write_ndjson(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), log.events.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["kind"], "trigger_start");
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p_value(1, 0) - 0.5).abs() < 1e-15);
        assert!((sign_test_p_value(10, 0) - 1.0 / 1024.0).abs() < 1e-15);
        assert!((sign_test_p_value(0, 3) - 1.0).abs() < 1e-12);
        // P(X >= 8 | n = 10) = (45 + 10 + 1) / 1024
        assert!((sign_test_p_value(8, 2) - 56.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        HandoverConfig::default().validate().unwrap();
        let bad = HandoverConfig {
            pingpong_window: 3,
            ..HandoverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
