//! FLOP accounting for the refinement transformer as the user count grows.
//!
//! The per-user receiver runs one length-`T` sequence per decoded user, so
//! its cost is `K` times the single-sequence cost. The joint-attention
//! variant instead feeds all users as one sequence of `K·T` tokens, where
//! self-attention makes the cost quadratic in `K`. Both numbers are read off
//! the model's FLOP counter after real forward passes.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::numerics::{linear_fit, SeededRng};
use crate::transformer::model::TransformerModel;
use crate::transformer::train::{train, TrainConfig};
use crate::transformer::{Mat, Sample, TokenSequence, TransformerConfig, TransformerError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub k: usize,
    pub per_user_flops: u64,
    pub joint_flops: u64,
}

fn random_sequence(cfg: &TransformerConfig, seq_len: usize, rng: &mut SeededRng) -> Result<TokenSequence, TransformerError> {
    let data = (0..seq_len * cfg.input_features).map(|_| rng.normal(0.0, 1.0)).collect();
    TokenSequence::new(Mat::from_vec(seq_len, cfg.input_features, data))
}

/// Counter value after refining `k` users one sequence at a time.
pub fn per_user_flops(k: usize, cfg: &TransformerConfig, rng: &mut SeededRng) -> Result<u64, TransformerError> {
    let model = TransformerModel::new(cfg.clone(), rng)?;
    for _ in 0..k {
        let seq = random_sequence(cfg, cfg.seq_len, rng)?;
        model.forward(&seq)?;
    }
    Ok(model.flops())
}

/// Counter value after one forward pass over all `k` users' tokens at once.
pub fn joint_flops(k: usize, cfg: &TransformerConfig, rng: &mut SeededRng) -> Result<u64, TransformerError> {
    let joint = TransformerConfig {
        seq_len: k * cfg.seq_len,
        ..cfg.clone()
    };
    let model = TransformerModel::new(joint.clone(), rng)?;
    let seq = random_sequence(&joint, joint.seq_len, rng)?;
    model.forward(&seq)?;
    Ok(model.flops())
}

pub fn complexity_sweep(ks: &[usize], cfg: &TransformerConfig, seed: u64) -> Result<Vec<ComplexityRow>, TransformerError> {
    cfg.validate()?;
    ks.iter()
        .map(|&k| {
            let mut rng = SeededRng::new(seed, k as u64);
            Ok(ComplexityRow {
                k,
                per_user_flops: per_user_flops(k, cfg, &mut rng)?,
                joint_flops: joint_flops(k, cfg, &mut rng)?,
            })
        })
        .collect()
}

pub fn write_complexity_csv<W: Write>(rows: &[ComplexityRow], mut out: W) -> io::Result<()> {
    writeln!(out, "k,per_user_flops,joint_flops")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.k, r.per_user_flops, r.joint_flops)?;
    }
    Ok(())
}

/// Counter increase over one training epoch on `samples` random sequences.
pub fn epoch_flops(cfg: &TransformerConfig, samples: usize, seed: u64) -> Result<u64, TransformerError> {
    let mut rng = SeededRng::new(seed, 0);
    let mut model = TransformerModel::new(cfg.clone(), &mut rng)?;
    let data: Vec<Sample> = (0..samples)
        .map(|_| {
            Ok(Sample {
                seq: random_sequence(cfg, cfg.seq_len, &mut rng)?,
                target: vec![0.0; cfg.d_out],
            })
        })
        .collect::<Result<_, TransformerError>>()?;
    let train_cfg = TrainConfig {
        epochs: 1,
        eta: 1e-4,
        ..TrainConfig::default()
    };
    let before = model.flops();
    train(&mut model, &data, &train_cfg, &mut rng)?;
    Ok(model.flops() - before)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub r2: f64,
    /// `c2` over its standard error; infinite for an exact fit.
    pub c2_t_stat: f64,
}

/// Least-squares `y ≈ c0 + c1 x + c2 x²` through the normal equations.
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Option<QuadraticFit> {
    let n = x.len();
    if n < 4 || y.len() != n {
        return None;
    }
    // Center and scale x so the 3×3 normal matrix stays well conditioned.
    let mx = x.iter().sum::<f64>() / n as f64;
    let sx = (x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n as f64).sqrt();
    if sx == 0.0 {
        return None;
    }
    let u: Vec<f64> = x.iter().map(|v| (v - mx) / sx).collect();
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (ui, yi) in u.iter().zip(y) {
        let phi = [1.0, *ui, ui * ui];
        for r in 0..3 {
            b[r] += phi[r] * yi;
            for c in 0..3 {
                a[r][c] += phi[r] * phi[c];
            }
        }
    }
    let inv = invert3(&a)?;
    let d: Vec<f64> = (0..3).map(|r| (0..3).map(|c| inv[r][c] * b[c]).sum()).collect();
    // Back to the original variable: y = d0 + d1 u + d2 u², u = (x − mx)/sx.
    let c2 = d[2] / (sx * sx);
    let c1 = d[1] / sx - 2.0 * d[2] * mx / (sx * sx);
    let c0 = d[0] - d[1] * mx / sx + d[2] * mx * mx / (sx * sx);

    let my = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = u.iter().zip(y).map(|(ui, yi)| (yi - d[0] - d[1] * ui - d[2] * ui * ui).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let sigma2 = ss_res / (n - 3) as f64;
    let se = (sigma2 * inv[2][2]).sqrt() / (sx * sx);
    let c2_t_stat = if se > 0.0 { c2 / se } else { c2.signum() * f64::INFINITY };
    Some(QuadraticFit { c0, c1, c2, r2, c2_t_stat })
}

fn invert3(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            inv[r][c] = (a[r1][c1] * a[r2][c2] - a[r1][c2] * a[r2][c1]) / det;
        }
    }
    Some(inv)
}

/// Linear and quadratic fits of both columns against `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityFits {
    pub per_user_linear_r2: f64,
    pub per_user_slope: f64,
    pub joint_linear_r2: f64,
    pub joint_quadratic: QuadraticFit,
}

pub fn fit_complexity(rows: &[ComplexityRow]) -> Option<ComplexityFits> {
    let k: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
    let per_user: Vec<f64> = rows.iter().map(|r| r.per_user_flops as f64).collect();
    let joint: Vec<f64> = rows.iter().map(|r| r.joint_flops as f64).collect();
    let (_, per_user_slope, per_user_linear_r2) = linear_fit(&k, &per_user);
    let (_, _, joint_linear_r2) = linear_fit(&k, &joint);
    Some(ComplexityFits {
        per_user_linear_r2,
        per_user_slope,
        joint_linear_r2,
        joint_quadratic: quadratic_fit(&k, &joint)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_fit_recovers_coefficients() {
        let x: Vec<f64> = (1..=8).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v + 0.5 * v * v).collect();
        let fit = quadratic_fit(&x, &y).unwrap();
        assert!((fit.c0 - 3.0).abs() < 1e-9);
        assert!((fit.c1 + 2.0).abs() < 1e-9);
        assert!((fit.c2 - 0.5).abs() < 1e-9);
        assert!(fit.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn quadratic_t_stat_is_finite_with_noise() {
        let mut rng = SeededRng::new(4, 0);
        let x: Vec<f64> = (1..=20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + v + 0.1 * v * v + rng.normal(0.0, 0.5)).collect();
        let fit = quadratic_fit(&x, &y).unwrap();
        assert!(fit.c2_t_stat.is_finite() && fit.c2_t_stat > 10.0);
        let flat: Vec<f64> = x.iter().map(|v| 2.0 * v + rng.normal(0.0, 0.5)).collect();
        assert!(quadratic_fit(&x, &flat).unwrap().c2_t_stat.abs() < 4.0);
    }

    #[test]
    fn per_user_cost_is_k_times_single_sequence() {
        let cfg = TransformerConfig::default();
        let rows = complexity_sweep(&[1, 2, 3], &cfg, 0).unwrap();
        for r in &rows {
            assert_eq!(r.per_user_flops, r.k as u64 * cfg.dominant_flops());
        }
        assert_eq!(rows[0].joint_flops, rows[0].per_user_flops);
        assert!(rows[2].joint_flops > rows[2].per_user_flops);
    }

    #[test]
    fn epoch_flops_scale_with_samples() {
        let cfg = TransformerConfig {
            n_layers: 1,
            ..TransformerConfig::default()
        };
        assert_eq!(epoch_flops(&cfg, 1, 0).unwrap(), 44_192);
        assert_eq!(epoch_flops(&cfg, 5, 0).unwrap(), 5 * 44_192);
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_complexity_csv(&[ComplexityRow { k: 1, per_user_flops: 2, joint_flops: 3 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,per_user_flops,joint_flops\n1,2,3\n");
    }
}
