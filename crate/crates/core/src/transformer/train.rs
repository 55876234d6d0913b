//! Training loop, frozen-backbone head fitting and checkpoints.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::tensor::Mat;
use super::{Sample, Standardizer, TransformerError, TransformerModel};
use crate::numerics::{power_iteration_lambda_max, Complex64, ComplexMatrix, SeededRng, DEFAULT_POWER_MAX_ITERS, DEFAULT_POWER_TOL};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub eta: f64,
    /// Visit samples in a seeded random order each epoch.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            eta: 0.01,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub flops_cumulative: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "epoch,loss,flops_cumulative")?;
        for r in &self.epochs {
            writeln!(out, "{},{:.8e},{}", r.epoch, r.loss, r.flops_cumulative)?;
        }
        Ok(())
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.loss)
    }
}

/// Per-sample gradient descent for `cfg.epochs` passes. The logged loss is
/// the mean pre-step loss over the epoch.
pub fn train(model: &mut TransformerModel, data: &[Sample], cfg: &TrainConfig, rng: &mut SeededRng) -> Result<TrainLog, TransformerError> {
    if data.is_empty() {
        return Err(TransformerError::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            for i in (1..order.len()).rev() {
                order.swap(i, rng.below(i + 1));
            }
        }
        let mut total = 0.0;
        for &i in &order {
            total += model.backward_and_step(&data[i].seq, &data[i].target, cfg.eta)?;
        }
        log.epochs.push(EpochRecord {
            epoch,
            loss: total / data.len() as f64,
            flops_cumulative: model.flops(),
        });
    }
    Ok(log)
}

/// Mean of `½‖ŷ − y‖²` over the dataset.
pub fn evaluate(model: &TransformerModel, data: &[Sample]) -> Result<f64, TransformerError> {
    if data.is_empty() {
        return Err(TransformerError::EmptyDataset);
    }
    let mut total = 0.0;
    for s in data {
        let pred = model.forward(&s.seq)?;
        total += 0.5 * pred.iter().zip(&s.target).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferOptions {
    pub max_steps: usize,
    /// Stop once the mean head loss falls below this value.
    pub tolerance: f64,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            max_steps: 10_000,
            tolerance: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub steps: usize,
    pub final_loss: f64,
}

/// Fits a fresh linear head on the frozen backbone's mean-pooled encodings.
///
/// Runs full-batch gradient descent on the mean `½‖ŷ − y‖²`. The pooled
/// features are centered first, which decouples the bias (updated with unit
/// step, its exact curvature) from the weights (step `1/λ_max` of the
/// centered feature covariance). The centered solution is folded back into
/// `head_w`, `head_b` at the end.
pub fn transfer_fit(
    pretrained: &TransformerModel,
    data: &[Sample],
    opts: &TransferOptions,
) -> Result<(TransformerModel, TransferReport), TransformerError> {
    if !pretrained.frozen {
        return Err(TransformerError::NotFrozen);
    }
    if data.is_empty() {
        return Err(TransformerError::EmptyDataset);
    }
    let d = pretrained.config.d_model;
    let d_out = pretrained.config.d_out;
    for s in data {
        if s.target.len() != d_out {
            return Err(TransformerError::ShapeMismatch {
                what: "target".into(),
                expected: (1, d_out),
                found: (1, s.target.len()),
            });
        }
    }
    let n = data.len();
    let mut phi = Mat::zeros(n, d);
    for (i, s) in data.iter().enumerate() {
        phi.row_mut(i).copy_from_slice(pretrained.pooled(&s.seq)?.as_slice());
    }
    let mu = phi.column_sums().scale(1.0 / n as f64);
    let centered = Mat::from_fn(n, d, |r, c| phi[(r, c)] - mu[(0, c)]);
    let y = Mat::from_fn(n, d_out, |r, c| data[r].target[c]);

    let cov = centered.t_matmul(&centered).scale(1.0 / n as f64);
    let cov_c = ComplexMatrix::from_fn(d, d, |r, c| Complex64::new(cov[(r, c)], 0.0));
    let lambda = power_iteration_lambda_max(&cov_c, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITERS).unwrap_or(0.0);
    let eta_w = if lambda > 0.0 { 1.0 / lambda } else { 0.0 };

    let mut w = Mat::zeros(d, d_out);
    let mut c = Mat::zeros(1, d_out);
    let mut steps = 0;
    let mut loss = f64::INFINITY;
    while steps < opts.max_steps {
        let mut resid = centered.matmul(&w);
        resid.add_row_broadcast(&c);
        resid.axpy(-1.0, &y);
        loss = 0.5 * resid.as_slice().iter().map(|v| v * v).sum::<f64>() / n as f64;
        if !loss.is_finite() {
            return Err(TransformerError::NonFiniteLoss);
        }
        if loss < opts.tolerance {
            break;
        }
        let gw = centered.t_matmul(&resid).scale(1.0 / n as f64);
        let gc = resid.column_sums().scale(1.0 / n as f64);
        w.axpy(-eta_w, &gw);
        c.axpy(-1.0, &gc);
        steps += 1;
    }
    let mut model = pretrained.clone();
    model.params.head_b = c.add(&mu.matmul(&w).scale(-1.0));
    model.params.head_w = w;
    Ok((model, TransferReport { steps, final_loss: loss }))
}

/// Serialized model plus the feature statistics it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub model: TransformerModel,
    pub standardizer: Standardizer,
}

impl Checkpoint {
    pub fn new(model: TransformerModel, standardizer: Standardizer) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model,
            standardizer,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TransformerError> {
        let mut cp: Checkpoint = serde_json::from_str(text).map_err(|e| TransformerError::Checkpoint(e.to_string()))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(TransformerError::Checkpoint(format!("unsupported version {}", cp.version)));
        }
        cp.model = cp.model.rebuild()?;
        Ok(cp)
    }
}
