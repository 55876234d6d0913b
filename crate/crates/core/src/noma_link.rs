//! Downlink superposition coding, Gray-mapped QPSK and the SIC receiver.
//!
//! The SIC receiver records, per stage, the hard decision, the exact per-bit
//! LLRs and, when the transmitted symbols are known (simulation mode), the
//! partially decoded data residual `s̃ = s − ŝ`. Without ground truth the
//! receiver falls back to the LLR-derived soft residual (see
//! [`soft_residual`]).

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Complex64, ComplexVector, SeededRng};

/// Variance floor used when a stage sees neither noise nor residual layers.
const LLR_VARIANCE_FLOOR: f64 = 1e-12;

/// Power ratio between successive layers when allocating by channel order.
pub const LAYER_POWER_RATIO: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("SIC order is empty")]
    EmptyOrder,
    #[error("invalid power allocation: {0}")]
    InvalidPower(String),
    #[error("precoder {index} has squared norm {norm_sqr}, expected 1")]
    NotUnitNorm { index: usize, norm_sqr: f64 },
    #[error("bit sequences differ in length ({truth} vs {decoded})")]
    LengthMismatch { truth: usize, decoded: usize },
    #[error("bit sequences must be non-empty")]
    Empty,
}

/// Per-user transmit powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    powers: Vec<f64>,
    total: f64,
}

impl PowerAllocation {
    pub fn new(powers: Vec<f64>) -> Result<Self, LinkError> {
        if powers.is_empty() {
            return Err(LinkError::InvalidPower("no users".into()));
        }
        if let Some(p) = powers.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(LinkError::InvalidPower(format!("power {p} is not positive")));
        }
        let total = powers.iter().sum();
        Ok(Self { powers, total })
    }

    /// Allocates `total` so that each weaker user gets [`LAYER_POWER_RATIO`]
    /// times the power of the next stronger one. For two users this is the
    /// 0.8 : 0.2 split.
    pub fn by_channel_order(gains: &[f64], total: f64) -> Result<Self, LinkError> {
        if !(total > 0.0) {
            return Err(LinkError::InvalidPower(format!("total {total} is not positive")));
        }
        let order = strongest_first(gains);
        let mut weights = vec![0.0; gains.len()];
        for (rank, &user) in order.iter().enumerate() {
            weights[user] = LAYER_POWER_RATIO.powi(rank as i32);
        }
        let sum: f64 = weights.iter().sum();
        Self::new(weights.iter().map(|w| total * w / sum).collect())
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn power(&self, k: usize) -> f64 {
        self.powers[k]
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn num_users(&self) -> usize {
        self.powers.len()
    }

    /// Users in SIC decoding order: largest allocated power first.
    pub fn decoding_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.powers.len()).collect();
        order.sort_by(|&a, &b| self.powers[b].total_cmp(&self.powers[a]).then(a.cmp(&b)));
        order
    }

    /// True when every weaker-channel user gets strictly more power.
    pub fn respects_ordering(&self, gains: &[f64]) -> bool {
        let order = strongest_first(gains);
        order.windows(2).all(|w| self.powers[w[1]] > self.powers[w[0]])
    }
}

/// User indices sorted by descending effective gain.
pub fn strongest_first(gains: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    order
}

/// Unit-norm precoding vectors, one per user.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoders {
    w: Vec<ComplexVector>,
}

impl Precoders {
    pub fn new(w: Vec<ComplexVector>) -> Result<Self, LinkError> {
        for (index, v) in w.iter().enumerate() {
            let norm_sqr = v.norm_sqr();
            if (norm_sqr - 1.0).abs() > 1e-12 {
                return Err(LinkError::NotUnitNorm { index, norm_sqr });
            }
        }
        Ok(Self { w })
    }

    /// Maximum-ratio precoders `w_k = ĥ_k / ‖ĥ_k‖`; a zero estimate maps to `e_1`.
    pub fn maximum_ratio(estimates: &[ComplexVector]) -> Self {
        let w = estimates
            .iter()
            .map(|h| h.normalized().unwrap_or_else(|| ComplexVector::basis(h.dim(), 0)))
            .collect();
        Self { w }
    }

    pub fn get(&self, k: usize) -> &ComplexVector {
        &self.w[k]
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Effective scalar gains `h_kᴴ w_i` seen by a receiver with channel `h`.
    pub fn effective_gains(&self, h: &ComplexVector) -> Vec<Complex64> {
        self.w.iter().map(|w| h.dot(w)).collect()
    }
}

/// Gray-mapped unit-energy QPSK point: bit 1 maps to the positive axis.
pub fn qpsk_symbol(b0: bool, b1: bool) -> Complex64 {
    let lvl = |b: bool| if b { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(lvl(b0), lvl(b1))
}

pub const QPSK_POINTS: [(bool, bool); 4] = [(false, false), (false, true), (true, false), (true, true)];

pub fn qpsk_bits(s: Complex64) -> (bool, bool) {
    (s.re > 0.0, s.im > 0.0)
}

/// Nearest QPSK point to `z`; ties resolve to the positive axis.
pub fn qpsk_hard(z: Complex64) -> Complex64 {
    qpsk_symbol(z.re >= 0.0, z.im >= 0.0)
}

pub fn random_qpsk(rng: &mut SeededRng) -> Complex64 {
    qpsk_symbol(rng.bit(), rng.bit())
}

/// `x = Σ_k √P_k w_k s_k`
pub fn superpose(symbols: &[Complex64], pa: &PowerAllocation, pre: &Precoders) -> Result<ComplexVector, LinkError> {
    if symbols.len() != pa.num_users() || symbols.len() != pre.len() {
        return Err(LinkError::DimensionMismatch {
            expected: pa.num_users(),
            found: symbols.len(),
        });
    }
    let dim = pre.get(0).dim();
    let mut x = ComplexVector::zeros(dim);
    for (k, &s) in symbols.iter().enumerate() {
        let w = pre.get(k);
        if w.dim() != dim {
            return Err(LinkError::DimensionMismatch {
                expected: dim,
                found: w.dim(),
            });
        }
        x.axpy(s * pa.power(k).sqrt(), w);
    }
    Ok(x)
}

/// `y = hᴴx + n` with `n ~ CN(0, noise_variance)`.
pub fn receive(x: &ComplexVector, h: &ComplexVector, rng: &mut SeededRng, noise_variance: f64) -> Result<Complex64, LinkError> {
    if x.dim() != h.dim() {
        return Err(LinkError::DimensionMismatch {
            expected: h.dim(),
            found: x.dim(),
        });
    }
    let noise = if noise_variance > 0.0 {
        rng.complex_gaussian(noise_variance)
    } else {
        Complex64::new(0.0, 0.0)
    };
    Ok(h.dot(x) + noise)
}

/// Exact per-bit LLRs `log P(b=1|y) / P(b=0|y)` over the four QPSK points
/// for the observation `y = g·a·s + n`, `n ~ CN(0, σ²)`.
pub fn qpsk_llr(y: Complex64, gain: Complex64, amplitude: f64, variance: f64) -> (f64, f64) {
    let metric: [f64; 4] = QPSK_POINTS.map(|(b0, b1)| -(y - gain * amplitude * qpsk_symbol(b0, b1)).norm_sqr() / variance);
    let lse = |sel: &dyn Fn(bool, bool) -> bool| {
        let vals: Vec<f64> = QPSK_POINTS
            .iter()
            .zip(metric)
            .filter(|((b0, b1), _)| sel(*b0, *b1))
            .map(|(_, m)| m)
            .collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
    };
    let l0 = lse(&|b0, _| b0) - lse(&|b0, _| !b0);
    let l1 = lse(&|_, b1| b1) - lse(&|_, b1| !b1);
    (l0, l1)
}

/// Receiver-side residual proxy `s_soft − ŝ`, with the soft symbol built
/// from per-bit LLRs as `tanh(llr/2)/√2` per component. Each component has
/// magnitude `(1 − tanh(|llr|/2))/√2` and points away from the hard decision.
pub fn soft_residual(llr: (f64, f64), decided: Complex64) -> Complex64 {
    soft_symbol(llr) - decided
}

pub fn soft_symbol(llr: (f64, f64)) -> Complex64 {
    Complex64::new((0.5 * llr.0).tanh(), (0.5 * llr.1).tanh()) * FRAC_1_SQRT_2
}

/// Output of one SIC stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SicStage {
    pub user: usize,
    /// Running signal before this stage's cancellation.
    pub input_signal: Complex64,
    pub decoded: Complex64,
    pub llr: (f64, f64),
    /// `s − ŝ` when ground truth was supplied.
    pub pdd_residual: Option<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SicResult {
    pub stages: Vec<SicStage>,
    /// Signal entering the final (own-user) stage, after all earlier layers were cancelled.
    pub post_cancel_signal: Complex64,
}

impl SicResult {
    pub fn stage_order(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.user).collect()
    }

    pub fn stage_for(&self, user: usize) -> Option<&SicStage> {
        self.stages.iter().find(|s| s.user == user)
    }

    /// Ground-truth residual when available, LLR proxy otherwise.
    pub fn residual_for(&self, user: usize) -> Option<Complex64> {
        self.stage_for(user)
            .map(|s| s.pdd_residual.unwrap_or_else(|| soft_residual(s.llr, s.decoded)))
    }

    pub fn min_abs_llr(&self) -> f64 {
        self.stages
            .iter()
            .flat_map(|s| [s.llr.0.abs(), s.llr.1.abs()])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Successive interference cancellation on one received sample.
///
/// `gains[i]` is the receiver's estimate of the effective gain of layer `i`
/// (`ĥᴴw_i`). Layers are decoded in `order`; the last entry is the receiver's
/// own layer. LLRs treat the not-yet-cancelled layers as Gaussian noise on
/// top of `noise_variance`.
pub fn sic_decode(
    y: Complex64,
    gains: &[Complex64],
    pa: &PowerAllocation,
    order: &[usize],
    noise_variance: f64,
    truth: Option<&[Complex64]>,
) -> Result<SicResult, LinkError> {
    if order.is_empty() {
        return Err(LinkError::EmptyOrder);
    }
    if gains.len() != pa.num_users() {
        return Err(LinkError::DimensionMismatch {
            expected: pa.num_users(),
            found: gains.len(),
        });
    }
    if let Some(t) = truth {
        if t.len() != gains.len() {
            return Err(LinkError::DimensionMismatch {
                expected: gains.len(),
                found: t.len(),
            });
        }
    }
    if let Some(&bad) = order.iter().find(|&&u| u >= gains.len()) {
        return Err(LinkError::DimensionMismatch {
            expected: gains.len(),
            found: bad + 1,
        });
    }
    let mut remaining_interference: f64 = order.iter().map(|&u| gains[u].norm_sqr() * pa.power(u)).sum();
    let mut signal = y;
    let mut stages = Vec::with_capacity(order.len());
    let mut post_cancel_signal = y;
    for (idx, &user) in order.iter().enumerate() {
        let amp = pa.power(user).sqrt();
        let g = gains[user];
        remaining_interference -= g.norm_sqr() * pa.power(user);
        let variance = (noise_variance + remaining_interference.max(0.0)).max(LLR_VARIANCE_FLOOR);
        if idx + 1 == order.len() {
            post_cancel_signal = signal;
        }
        let decoded = qpsk_hard(g.conj() * signal);
        let llr = qpsk_llr(signal, g, amp, variance);
        let pdd_residual = truth.map(|t| t[user] - decoded);
        stages.push(SicStage {
            user,
            input_signal: signal,
            decoded,
            llr,
            pdd_residual,
        });
        signal -= g * amp * decoded;
    }
    Ok(SicResult {
        stages,
        post_cancel_signal,
    })
}

/// Reliability of a user's estimate: mean `|s̃|²` over a window of residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PddReliability {
    pub score: f64,
    pub window_len: usize,
}

impl PddReliability {
    pub fn from_residuals(residuals: &[Complex64]) -> Self {
        let score = if residuals.is_empty() {
            0.0
        } else {
            residuals.iter().map(|r| r.norm_sqr()).sum::<f64>() / residuals.len() as f64
        };
        Self {
            score,
            window_len: residuals.len(),
        }
    }

    pub fn perfect() -> Self {
        Self { score: 0.0, window_len: 0 }
    }
}

/// Fraction of differing bits.
pub fn ber_measure(truth: &[bool], decoded: &[bool]) -> Result<f64, LinkError> {
    if truth.len() != decoded.len() {
        return Err(LinkError::LengthMismatch {
            truth: truth.len(),
            decoded: decoded.len(),
        });
    }
    if truth.is_empty() {
        return Err(LinkError::Empty);
    }
    let errors = truth.iter().zip(decoded).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / truth.len() as f64)
}

/// Two bits per symbol, in (b0, b1) order.
pub fn symbols_to_bits(symbols: &[Complex64]) -> Vec<bool> {
    symbols
        .iter()
        .flat_map(|&s| {
            let (b0, b1) = qpsk_bits(s);
            [b0, b1]
        })
        .collect()
}
