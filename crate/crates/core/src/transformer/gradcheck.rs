//! Central finite-difference check of the manual backward pass.

use serde::{Deserialize, Serialize};

use super::{TokenSequence, TransformerError, TransformerModel};
use crate::numerics::SeededRng;

/// Denominator floor for the relative error, so that coordinates whose true
/// gradient is zero are judged on absolute error instead.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    /// Tensor name without the layer prefix, e.g. `wq` or `head_b`.
    pub class: String,
    pub coordinates: usize,
    pub max_relative_error: f64,
}

fn class_of(name: &str) -> &str {
    name.split_once('.').map_or(name, |(_, rest)| rest)
}

/// Compares analytic gradients with `(L(θ+h) − L(θ−h)) / 2h` on up to
/// `per_tensor` randomly chosen coordinates of every tensor and reports the
/// worst relative error per parameter class.
pub fn check_gradients(
    model: &TransformerModel,
    seq: &TokenSequence,
    target: &[f64],
    step: f64,
    per_tensor: usize,
    rng: &mut SeededRng,
) -> Result<Vec<ClassReport>, TransformerError> {
    let (_, grads) = model.gradients(seq, target)?;
    let analytic: Vec<(String, Vec<f64>)> = grads
        .named()
        .into_iter()
        .map(|(n, m)| (n, m.as_slice().to_vec()))
        .collect();
    let mut probe = model.clone();
    let mut reports: Vec<ClassReport> = Vec::new();
    for (t_idx, (name, grad)) in analytic.iter().enumerate() {
        let len = grad.len();
        let coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|_| rng.below(len)).collect()
        };
        let mut worst: f64 = 0.0;
        for &i in &coords {
            let base = probe.params.tensors_mut()[t_idx].as_slice()[i];
            probe.params.tensors_mut()[t_idx].as_mut_slice()[i] = base + step;
            let up = probe.gradients(seq, target)?.0;
            probe.params.tensors_mut()[t_idx].as_mut_slice()[i] = base - step;
            let down = probe.gradients(seq, target)?.0;
            probe.params.tensors_mut()[t_idx].as_mut_slice()[i] = base;
            let fd = (up - down) / (2.0 * step);
            let an = grad[i];
            let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(RELATIVE_ERROR_FLOOR);
            worst = worst.max(rel);
        }
        let class = class_of(name).to_string();
        match reports.iter_mut().find(|r| r.class == class) {
            Some(r) => {
                r.coordinates += coords.len();
                r.max_relative_error = r.max_relative_error.max(worst);
            }
            None => reports.push(ClassReport {
                class,
                coordinates: coords.len(),
                max_relative_error: worst,
            }),
        }
    }
    Ok(reports)
}
