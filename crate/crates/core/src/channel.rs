//! Temporally correlated Rayleigh fading traces with distance path loss.
//!
//! Each user's channel starts from `CN(0, PL_k I_M)` and evolves as a
//! first-order Gauss–Markov process whose one-step correlation is the Jakes
//! value `J0(2π f_D Δt)`. The per-step observables (SNR, RSRQ, CQI) are
//! derived from the maximum-ratio effective gain. RSRQ is an affine image of
//! the clipped SNR range onto the RSRQ range; it is a convention of this
//! simulator, not a physical-layer RSRQ measurement.

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{bessel_j0, linear_to_db, ComplexVector, SeededRng};

pub const SNR_MIN_DB: f64 = -9.0;
pub const SNR_MAX_DB: f64 = 14.0;
pub const RSRQ_MIN_DB: f64 = -20.0;
pub const RSRQ_MAX_DB: f64 = -8.0;
pub const CQI_MAX: u8 = 15;

/// Reference distance for the power-law path loss, metres.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid channel config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: channel has {channel} entries, precoder {precoder}")]
    DimensionMismatch { channel: usize, precoder: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub num_antennas: usize,
    pub num_users: usize,
    pub time_steps: usize,
    pub step_duration_s: f64,
    pub velocity_mps: f64,
    pub carrier_wavelength_m: f64,
    pub distance_near_m: f64,
    pub distance_far_m: f64,
    pub pathloss_exponent: f64,
    /// Receiver noise variance, linear power.
    pub noise_variance: f64,
    /// Total transmit power, linear.
    pub total_power: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            num_antennas: 4,
            num_users: 4,
            time_steps: 1000,
            step_duration_s: 1e-3,
            velocity_mps: 3.0,
            carrier_wavelength_m: 0.15,
            distance_near_m: 20.0,
            distance_far_m: 50.0,
            pathloss_exponent: 3.0,
            noise_variance: 5e-5,
            total_power: 1.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |msg: &str| Err(ChannelError::InvalidConfig(msg.to_string()));
        if self.num_antennas == 0 || self.num_users == 0 || self.time_steps == 0 {
            return bad("num_antennas, num_users and time_steps must be >= 1");
        }
        if !(self.step_duration_s > 0.0) || !(self.carrier_wavelength_m > 0.0) {
            return bad("step_duration_s and carrier_wavelength_m must be > 0");
        }
        if !(self.distance_near_m > 0.0) || !(self.distance_far_m > 0.0) {
            return bad("distances must be > 0");
        }
        if !(2.0..=6.0).contains(&self.pathloss_exponent) {
            return bad("pathloss_exponent must lie in [2, 6]");
        }
        if !(self.velocity_mps >= 0.0) || !self.velocity_mps.is_finite() {
            return bad("velocity_mps must be finite and >= 0");
        }
        if !(self.noise_variance > 0.0) || !(self.total_power > 0.0) {
            return bad("noise_variance and total_power must be > 0");
        }
        Ok(())
    }

    /// Maximum Doppler shift times step duration, `v/λ · Δt`.
    pub fn normalized_doppler(&self) -> f64 {
        self.velocity_mps / self.carrier_wavelength_m * self.step_duration_s
    }

    /// One-step Gauss–Markov correlation `J0(2π f_D Δt)`.
    pub fn correlation(&self) -> f64 {
        bessel_j0(2.0 * PI * self.normalized_doppler())
    }

    /// User `k`'s distance: users are spread evenly from the near to the far distance.
    pub fn user_distance(&self, k: usize) -> f64 {
        if self.num_users <= 1 {
            return self.distance_near_m;
        }
        let frac = k as f64 / (self.num_users - 1) as f64;
        self.distance_near_m + (self.distance_far_m - self.distance_near_m) * frac
    }

    pub fn path_loss(&self, distance_m: f64) -> f64 {
        (distance_m / REFERENCE_DISTANCE_M).powf(-self.pathloss_exponent)
    }

    pub fn user_path_loss(&self, k: usize) -> f64 {
        self.path_loss(self.user_distance(k))
    }
}

/// Per-step observable record fed to the handover rule and the regressor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub rsrq_db: f64,
    pub snr_db: f64,
    pub cqi: u8,
    pub pdd_score: f64,
}

impl Observables {
    /// Builds the record from an unclipped SNR in dB.
    pub fn from_snr_db(raw_snr_db: f64, pdd_score: f64) -> Self {
        let snr_db = if raw_snr_db.is_nan() {
            SNR_MIN_DB
        } else {
            raw_snr_db.clamp(SNR_MIN_DB, SNR_MAX_DB)
        };
        let frac = (snr_db - SNR_MIN_DB) / (SNR_MAX_DB - SNR_MIN_DB);
        let rsrq_db = RSRQ_MIN_DB + frac * (RSRQ_MAX_DB - RSRQ_MIN_DB);
        let cqi = ((frac * CQI_MAX as f64).floor() as u8).min(CQI_MAX);
        Self {
            rsrq_db,
            snr_db,
            cqi,
            pdd_score,
        }
    }

    pub fn with_pdd(mut self, pdd_score: f64) -> Self {
        self.pdd_score = pdd_score;
        self
    }

    /// Feature row in regressor order: RSRQ, CQI, PDD, SNR.
    pub fn features(&self) -> [f64; 4] {
        [self.rsrq_db, self.cqi as f64, self.pdd_score, self.snr_db]
    }
}

/// SNR-derived observables for channel `h` under precoder `w`; the PDD
/// score is left at zero for the caller to fill in.
pub fn observables_from_channel(h: &ComplexVector, w: &ComplexVector, cfg: &ChannelConfig) -> Result<Observables, ChannelError> {
    if h.dim() != w.dim() {
        return Err(ChannelError::DimensionMismatch {
            channel: h.dim(),
            precoder: w.dim(),
        });
    }
    let gain = h.dot(w).norm_sqr();
    Ok(Observables::from_snr_db(linear_to_db(gain * cfg.total_power / cfg.noise_variance), 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTrace {
    pub config: ChannelConfig,
    pub rho: f64,
    /// `h[user][t]`
    pub h: Vec<Vec<ComplexVector>>,
    /// `gains[user][t] = |h_kᴴ w_k|²` with maximum-ratio `w_k`.
    pub gains: Vec<Vec<f64>>,
    pub observables: Vec<Vec<Observables>>,
}

/// Draws a full multi-user trace.
pub fn generate_trace(cfg: &ChannelConfig, rng: &mut SeededRng) -> Result<ChannelTrace, ChannelError> {
    cfg.validate()?;
    let rho = cfg.correlation();
    let innovation = (1.0 - rho * rho).max(0.0).sqrt();
    let m = cfg.num_antennas;
    let mut h = Vec::with_capacity(cfg.num_users);
    let mut gains = Vec::with_capacity(cfg.num_users);
    let mut observables = Vec::with_capacity(cfg.num_users);
    for k in 0..cfg.num_users {
        let pl = cfg.user_path_loss(k);
        let mut seq = Vec::with_capacity(cfg.time_steps);
        let mut current: ComplexVector = (0..m).map(|_| rng.complex_gaussian(pl)).collect();
        for t in 0..cfg.time_steps {
            if t > 0 && innovation > 0.0 {
                current = current
                    .iter()
                    .map(|z| z * rho + rng.complex_gaussian(pl) * innovation)
                    .collect();
            }
            seq.push(current.clone());
        }
        let g: Vec<f64> = seq.iter().map(ComplexVector::norm_sqr).collect();
        let obs = g
            .iter()
            .map(|&gain| Observables::from_snr_db(linear_to_db(gain * cfg.total_power / cfg.noise_variance), 0.0))
            .collect();
        h.push(seq);
        gains.push(g);
        observables.push(obs);
    }
    Ok(ChannelTrace {
        config: cfg.clone(),
        rho,
        h,
        gains,
        observables,
    })
}

fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

impl ChannelTrace {
    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    pub fn num_steps(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }

    pub fn set_pdd_scores(&mut self, user: usize, scores: &[f64]) {
        for (obs, &s) in self.observables[user].iter_mut().zip(scores) {
            obs.pdd_score = s;
        }
    }

    /// CSV export, one row per (t, user), floats with 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let m = self.config.num_antennas;
        let mut header = vec!["t".to_string(), "user".to_string()];
        for i in 0..m {
            header.push(format!("h{i}_re"));
            header.push(format!("h{i}_im"));
        }
        header.extend(["gain", "snr_db", "rsrq_db", "cqi", "pdd_score"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for t in 0..self.num_steps() {
            for k in 0..self.num_users() {
                let mut row = vec![t.to_string(), k.to_string()];
                for z in self.h[k][t].iter() {
                    row.push(fmt9(z.re));
                    row.push(fmt9(z.im));
                }
                let o = &self.observables[k][t];
                row.push(fmt9(self.gains[k][t]));
                row.push(fmt9(o.snr_db));
                row.push(fmt9(o.rsrq_db));
                row.push(o.cqi.to_string());
                row.push(fmt9(o.pdd_score));
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Complex64;

    fn single_user(velocity_mps: f64, steps: usize) -> ChannelConfig {
        ChannelConfig {
            num_antennas: 1,
            num_users: 1,
            time_steps: steps,
            velocity_mps,
            ..ChannelConfig::default()
        }
    }

    #[test]
    fn defaults_mirror_parameter_table() {
        let c = ChannelConfig::default();
        assert_eq!((c.num_antennas, c.num_users, c.time_steps), (4, 4, 1000));
        assert_eq!((c.distance_near_m, c.distance_far_m), (20.0, 50.0));
        c.validate().unwrap();
    }

    #[test]
    fn static_channel_is_constant() {
        let cfg = ChannelConfig {
            velocity_mps: 0.0,
            time_steps: 50,
            ..ChannelConfig::default()
        };
        let trace = generate_trace(&cfg, &mut SeededRng::new(5, 0)).unwrap();
        assert_eq!(trace.rho, 1.0);
        for k in 0..cfg.num_users {
            assert!(trace.h[k].iter().all(|h| h == &trace.h[k][0]));
        }
    }

    #[test]
    fn correlation_from_doppler() {
        let cfg = ChannelConfig {
            velocity_mps: 0.05 * 0.15 / 1e-3,
            ..ChannelConfig::default()
        };
        assert!((cfg.normalized_doppler() - 0.05).abs() < 1e-15);
        assert!((cfg.correlation() - 0.975_477_774).abs() < 1e-8);
    }

    #[test]
    fn far_near_power_ratio() {
        let cfg = ChannelConfig {
            num_users: 2,
            ..ChannelConfig::default()
        };
        let ratio = cfg.user_path_loss(1) / cfg.user_path_loss(0);
        assert!((ratio - 1.0 / 15.625).abs() < 1e-15);
    }

    #[test]
    fn observables_plug_in() {
        let cfg = ChannelConfig {
            noise_variance: 1.0,
            total_power: 1.0,
            ..ChannelConfig::default()
        };
        let h = ComplexVector::basis(4, 0);
        let o = observables_from_channel(&h, &h, &cfg).unwrap();
        assert_eq!(o.snr_db, 0.0);
        assert!((o.rsrq_db - (-15.304_347_826_086_957)).abs() < 1e-12);
        let strong = h.scale_real(100.0);
        assert_eq!(observables_from_channel(&strong, &h, &cfg).unwrap().snr_db, 14.0);
        assert_eq!(Observables::from_snr_db(-9.0, 0.0).cqi, 0);
        assert_eq!(Observables::from_snr_db(14.0, 0.0).cqi, 15);
        assert_eq!(Observables::from_snr_db(-30.0, 0.0).rsrq_db, -20.0);
        assert!(observables_from_channel(&h, &ComplexVector::zeros(3), &cfg).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = ChannelConfig {
            pathloss_exponent: 7.0,
            ..ChannelConfig::default()
        };
        assert!(matches!(generate_trace(&cfg, &mut SeededRng::new(0, 0)), Err(ChannelError::InvalidConfig(_))));
        let cfg = ChannelConfig {
            num_users: 0,
            ..ChannelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn observables_stay_in_table_ranges() {
        let trace = generate_trace(&ChannelConfig::default(), &mut SeededRng::new(1, 1)).unwrap();
        for o in trace.observables.iter().flatten() {
            assert!((SNR_MIN_DB..=SNR_MAX_DB).contains(&o.snr_db));
            assert!((RSRQ_MIN_DB..=RSRQ_MAX_DB).contains(&o.rsrq_db));
            assert!(o.cqi <= CQI_MAX);
        }
    }

    #[test]
    fn lag_one_autocorrelation_matches_rho() {
        // v/λ·Δt = 0.1 gives rho = J0(0.628) ≈ 0.904
        let cfg = single_user(0.1 * 0.15 / 1e-3, 100_000);
        let trace = generate_trace(&cfg, &mut SeededRng::new(17, 0)).unwrap();
        let rho = trace.rho;
        let h: Vec<Complex64> = trace.h[0].iter().map(|v| v[0]).collect();
        let num: Complex64 = h.windows(2).map(|w| w[0].conj() * w[1]).sum();
        let den: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        assert!((num.re / den - rho).abs() < 0.02, "{} vs {rho}", num.re / den);
        // power sequence correlates at rho² for a circular Gaussian process
        let g = &trace.gains[0];
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let c1: f64 = g.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let c0: f64 = g.iter().map(|x| (x - mean).powi(2)).sum();
        assert!((c1 / c0 - rho * rho).abs() < 0.02);
    }

    #[test]
    fn per_step_power_is_stationary() {
        let cfg = ChannelConfig {
            num_users: 2,
            time_steps: 4,
            velocity_mps: 30.0,
            ..ChannelConfig::default()
        };
        let runs = 10_000;
        let mut acc = [[0.0; 4]; 2];
        for r in 0..runs {
            let trace = generate_trace(&cfg, &mut SeededRng::new(3, r)).unwrap();
            for k in 0..2 {
                for t in 0..4 {
                    acc[k][t] += trace.gains[k][t];
                }
            }
        }
        for k in 0..2 {
            let expected = cfg.user_path_loss(k) * cfg.num_antennas as f64;
            for t in 0..4 {
                let mean = acc[k][t] / runs as f64;
                assert!((mean / expected - 1.0).abs() < 0.02, "user {k} step {t}: {mean} vs {expected}");
            }
        }
    }

    #[test]
    fn near_user_stronger_on_average() {
        for seed in 0..20 {
            let trace = generate_trace(&ChannelConfig::default(), &mut SeededRng::new(seed, 0)).unwrap();
            let mean = |k: usize| trace.gains[k].iter().sum::<f64>() / trace.num_steps() as f64;
            assert!(mean(0) > mean(trace.num_users() - 1));
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let cfg = ChannelConfig {
            num_antennas: 2,
            num_users: 2,
            time_steps: 3,
            ..ChannelConfig::default()
        };
        let trace = generate_trace(&cfg, &mut SeededRng::new(0, 0)).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,user,h0_re,h0_im,h1_re,h1_im,gain,snr_db,rsrq_db,cqi,pdd_score");
        assert_eq!(lines.len(), 1 + 6);
        let first_float = lines[1].split(',').nth(2).unwrap();
        let mantissa = first_float.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.replace('.', "").len(), 9);
    }
}
