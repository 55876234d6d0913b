//! Small transformer regressor trained with plain gradient descent.
//!
//! [`model`] holds the network and its manual backward pass, [`train`] the
//! training loop, the frozen-backbone head fit and checkpointing. This module
//! covers token sequences, feature standardization, the two feature
//! encoders and dataset augmentation.

pub mod gradcheck;
pub mod model;
pub mod tensor;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Observables;
use crate::numerics::{Complex64, SeededRng};

pub use model::{attention_forward, attention_weights, positional_encoding, Params, TransformerConfig, TransformerModel};
pub use tensor::Mat;
pub use train::{transfer_fit, Checkpoint, TrainConfig, TrainLog, TransferOptions, TransferReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformerError {
    #[error("invalid transformer config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch for {what}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("window has {found} steps, need {needed}")]
    WindowTooShort { needed: usize, found: usize },
    #[error("token sequence contains NaN or infinite entries")]
    NonFiniteTokens,
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("transfer fitting requires a frozen backbone")]
    NotFrozen,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("noise scale {0} must be >= 0")]
    InvalidNoiseScale(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// `T × F` standardized token matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Mat,
}

impl TokenSequence {
    pub fn new(tokens: Mat) -> Result<Self, TransformerError> {
        if !tokens.is_finite() {
            return Err(TransformerError::NonFiniteTokens);
        }
        Ok(Self { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }
}

/// Per-feature mean and standard deviation estimated on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; a constant feature gets unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, TransformerError> {
        let first = rows.first().ok_or(TransformerError::EmptyDataset)?;
        let width = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; width];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Builds a token sequence from the last `seq_len` feature rows of `window`.
pub fn encode_features(window: &[Vec<f64>], standardizer: &Standardizer, seq_len: usize) -> Result<TokenSequence, TransformerError> {
    if window.len() < seq_len {
        return Err(TransformerError::WindowTooShort {
            needed: seq_len,
            found: window.len(),
        });
    }
    let width = standardizer.width();
    let recent = &window[window.len() - seq_len..];
    if let Some(bad) = recent.iter().find(|r| r.len() != width) {
        return Err(TransformerError::ShapeMismatch {
            what: "feature row".into(),
            expected: (1, width),
            found: (1, bad.len()),
        });
    }
    let data = recent.iter().flat_map(|r| standardizer.apply(r)).collect();
    TokenSequence::new(Mat::from_vec(seq_len, width, data))
}

/// Observable encoder: RSRQ, CQI, PDD score, SNR per step.
pub fn observable_rows(window: &[Observables]) -> Vec<Vec<f64>> {
    window.iter().map(|o| o.features().to_vec()).collect()
}

/// One step of receiver-side SIC output used by the refinement encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SicStepFeatures {
    pub decoded: Complex64,
    pub llr: (f64, f64),
    pub h_magnitude: f64,
}

impl SicStepFeatures {
    /// Decoded symbol (real, imaginary), smallest |LLR|, initial |ĥ|.
    pub fn row(&self) -> Vec<f64> {
        vec![
            self.decoded.re,
            self.decoded.im,
            self.llr.0.abs().min(self.llr.1.abs()),
            self.h_magnitude,
        ]
    }
}

/// SIC encoder: decoded symbols, LLR magnitude and initial channel magnitude.
pub fn sic_rows(window: &[SicStepFeatures]) -> Vec<Vec<f64>> {
    window.iter().map(SicStepFeatures::row).collect()
}

/// A training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub seq: TokenSequence,
    pub target: Vec<f64>,
}

/// Appends a jittered copy of every sample. Each feature gets Gaussian noise
/// with standard deviation `noise_scale` times that feature's spread over
/// all tokens in the dataset.
pub fn augment_dataset(data: &[Sample], rng: &mut SeededRng, noise_scale: f64) -> Result<Vec<Sample>, TransformerError> {
    if !(noise_scale >= 0.0) {
        return Err(TransformerError::InvalidNoiseScale(noise_scale));
    }
    let rows: Vec<Vec<f64>> = data
        .iter()
        .flat_map(|s| (0..s.seq.tokens.rows()).map(|r| s.seq.tokens.row(r).to_vec()))
        .collect();
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let spread = Standardizer::fit(&rows)?;
    let mut out = data.to_vec();
    for s in data {
        let mut tokens = s.seq.tokens.clone();
        if noise_scale > 0.0 {
            for r in 0..tokens.rows() {
                for (c, v) in tokens.row_mut(r).iter_mut().enumerate() {
                    *v += rng.normal(0.0, noise_scale * spread.std[c]);
                }
            }
        }
        out.push(Sample {
            seq: TokenSequence::new(tokens)?,
            target: s.target.clone(),
        });
    }
    Ok(out)
}

/// Gaussian kernel density estimate evaluated on `grid`.
pub fn kde(samples: &[f64], grid: &[f64], bandwidth: f64) -> Vec<f64> {
    let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&x| norm * samples.iter().map(|s| (-0.5 * ((x - s) / bandwidth).powi(2)).exp()).sum::<f64>())
        .collect()
}

/// Discrete total variation `Σ|f_{i+1} − f_i|`.
pub fn total_variation(curve: &[f64]) -> f64 {
    curve.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Column `feature` across all tokens of all samples.
pub fn feature_marginal(data: &[Sample], feature: usize) -> Vec<f64> {
    data.iter()
        .flat_map(|s| (0..s.seq.tokens.rows()).map(move |r| s.seq.tokens[(r, feature)]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardization_identity() {
        let rows = vec![vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 10.0]];
        let st = Standardizer::fit(&rows).unwrap();
        assert_eq!(st.mean, vec![3.0, 10.0]);
        assert_eq!(st.std[1], 1.0);
        let window = vec![st.mean.clone(); 4];
        let seq = encode_features(&window, &st, 4).unwrap();
        assert!(seq.tokens.as_slice().iter().all(|v| *v == 0.0));
        assert!(matches!(
            encode_features(&window, &st, 5),
            Err(TransformerError::WindowTooShort { needed: 5, found: 4 })
        ));
    }

    #[test]
    fn token_sequence_json_round_trip() {
        let mut rng = SeededRng::new(1, 1);
        let rows: Vec<Vec<f64>> = (0..10).map(|_| (0..4).map(|_| rng.normal(3.0, 7.0)).collect()).collect();
        let st = Standardizer::fit(&rows).unwrap();
        let seq = encode_features(&rows, &st, 10).unwrap();
        let back: TokenSequence = serde_json::from_str(&serde_json::to_string(&seq).unwrap()).unwrap();
        let bits = |s: &TokenSequence| s.tokens.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&seq));
    }

    #[test]
    fn non_finite_tokens_rejected() {
        assert!(matches!(
            TokenSequence::new(Mat::from_vec(1, 2, vec![0.0, f64::NAN])),
            Err(TransformerError::NonFiniteTokens)
        ));
    }

    #[test]
    fn encoders_have_four_columns() {
        let obs = [Observables::from_snr_db(3.0, 0.2); 3];
        assert!(observable_rows(&obs).iter().all(|r| r.len() == 4));
        let step = SicStepFeatures {
            decoded: Complex64::new(0.7, -0.7),
            llr: (3.0, -1.5),
            h_magnitude: 0.9,
        };
        assert_eq!(step.row(), vec![0.7, -0.7, 1.5, 0.9]);
    }

    fn spike_dataset() -> Vec<Sample> {
        (0..40)
            .map(|i| Sample {
                seq: TokenSequence::new(Mat::filled(1, 1, if i % 2 == 0 { 0.0 } else { 1.0 })).unwrap(),
                target: vec![0.0],
            })
            .collect()
    }

    #[test]
    fn augmentation_cardinality_and_identity() {
        let data = spike_dataset();
        let mut rng = SeededRng::new(0, 0);
        let same = augment_dataset(&data, &mut rng, 0.0).unwrap();
        assert_eq!(same.len(), 2 * data.len());
        assert_eq!(&same[data.len()..], &data[..]);
        let grid: Vec<f64> = (0..=100).map(|i| -0.5 + 0.02 * i as f64).collect();
        let k0 = kde(&feature_marginal(&data, 0), &grid, 0.05);
        let k1 = kde(&feature_marginal(&same, 0), &grid, 0.05);
        assert!(k0.iter().zip(&k1).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(augment_dataset(&data, &mut rng, -1.0).is_err());
    }

    #[test]
    fn augmentation_fills_kde_valley() {
        let data = spike_dataset();
        let mut rng = SeededRng::new(9, 0);
        let aug = augment_dataset(&data, &mut rng, 0.1).unwrap();
        let grid: Vec<f64> = (0..=100).map(|i| -0.5 + 0.02 * i as f64).collect();
        let before = kde(&feature_marginal(&data, 0), &grid, 0.05);
        let after = kde(&feature_marginal(&aug, 0), &grid, 0.05);
        let valley = |k: &[f64]| {
            grid.iter()
                .zip(k)
                .filter(|(x, _)| (0.2..=0.8).contains(*x))
                .map(|(_, v)| *v)
                .fold(f64::INFINITY, f64::min)
        };
        assert!(valley(&after) > valley(&before));
        assert!(total_variation(&after) <= total_variation(&before));
    }
}
