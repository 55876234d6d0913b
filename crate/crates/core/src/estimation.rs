//! Pilot-based channel estimation and the PDD-corrected refinement loop.
//!
//! The refinement works on a generic linear observation model `y = J h + n`.
//! Callers that observe `hᴴx` (as the downlink does) conjugate both sides so
//! that the rows of `J` are `x_tᴴ` and the unknown is `h` itself.
//!
//! The data-fit loss is `L(h) = ½‖y − J h‖²`, whose gradient with respect to
//! the real and imaginary parts of `h` is exactly `Jᴴ(J h − y)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    hermitian_solve, power_iteration_lambda_max, power_iteration_lambda_min, Complex64, ComplexMatrix, ComplexVector,
    NumericsError, SeededRng, DEFAULT_POWER_MAX_ITERS, DEFAULT_POWER_TOL,
};

/// Floor applied to the smallest Gauss–Newton eigenvalue when used as `γ_e`.
pub const GAMMA_E_FLOOR: f64 = 1e-6;
/// Fraction of `2/(λ_max+β)` used when the learning rate is chosen automatically.
pub const AUTO_ETA_FRACTION: f64 = 0.9;
/// Multiplier applied to the empirical Lipschitz supremum.
pub const BETA_SAFETY_FACTOR: f64 = 1.5;
pub const MIN_LIPSCHITZ_PAIRS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("pilot sequence is empty")]
    EmptyPilot,
    #[error("{users} users cannot share {length} orthogonal pilots")]
    TooManyUsers { users: usize, length: usize },
    #[error("stability guard violated: eta {eta} is not certified (bound {bound})")]
    GuardViolated { eta: f64, bound: f64 },
    #[error("need at least {required} sample pairs, got {found}")]
    InsufficientSamples { found: usize, required: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Unit-modulus, mutually orthogonal pilot rows taken from a DFT matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotBlock {
    symbols: Vec<Vec<Complex64>>,
}

impl PilotBlock {
    pub fn dft(num_users: usize, length: usize) -> Result<Self, EstimationError> {
        if length == 0 {
            return Err(EstimationError::EmptyPilot);
        }
        if num_users > length {
            return Err(EstimationError::TooManyUsers {
                users: num_users,
                length,
            });
        }
        let symbols = (0..num_users)
            .map(|k| {
                (0..length)
                    .map(|t| Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / length as f64))
                    .collect()
            })
            .collect();
        Ok(Self { symbols })
    }

    pub fn len(&self) -> usize {
        self.symbols.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_users(&self) -> usize {
        self.symbols.len()
    }

    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.symbols[k]
    }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Least-squares scalar estimate `⟨s, y⟩ / ‖s‖²`.
pub fn ls_estimate(y: &[Complex64], s: &[Complex64]) -> Result<Complex64, EstimationError> {
    if s.is_empty() {
        return Err(EstimationError::EmptyPilot);
    }
    if y.len() != s.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: s.len(),
            found: y.len(),
        }
        .into());
    }
    let energy: f64 = s.iter().map(|z| z.norm_sqr()).sum();
    Ok(inner(s, y) / energy)
}

/// Least-squares estimate per antenna; `y` holds one observation row per antenna.
pub fn ls_estimate_vector(y: &ComplexMatrix, s: &[Complex64]) -> Result<ComplexVector, EstimationError> {
    (0..y.rows())
        .map(|r| {
            let row: Vec<Complex64> = (0..y.cols()).map(|c| y[(r, c)]).collect();
            ls_estimate(&row, s)
        })
        .collect::<Result<Vec<_>, _>>()
        .map(ComplexVector::new)
}

/// Linear MMSE estimate `(R_hh + n R_ss⁻¹)⁻¹ R_hh z` with `z = R_ss⁻¹ (Y s̄)`.
///
/// `y` is `M × N` (one row per receive antenna, one column per pilot slot).
/// `R_ss` is the pilot correlation seen per antenna, normally `‖s‖² I`; the
/// matched-filter output is normalized by it so that for a unit pilot with
/// `R_ss = I` the expression is the textbook one. For the scalar case with
/// `R_hh = R_ss = 1` the result is `y / (1 + n)`.
pub fn mmse_estimate(
    y: &ComplexMatrix,
    s: &[Complex64],
    r_hh: &ComplexMatrix,
    r_ss: &ComplexMatrix,
    n: f64,
) -> Result<ComplexVector, EstimationError> {
    if s.is_empty() {
        return Err(EstimationError::EmptyPilot);
    }
    if !(n >= 0.0) {
        return Err(EstimationError::InvalidParameter(format!("noise term {n} must be >= 0")));
    }
    let m = y.rows();
    if y.cols() != s.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: s.len(),
            found: y.cols(),
        }
        .into());
    }
    for mat in [r_hh, r_ss] {
        if mat.rows() != m || mat.cols() != m {
            return Err(NumericsError::DimensionMismatch {
                expected: m,
                found: mat.rows(),
            }
            .into());
        }
    }
    let s_conj = ComplexVector::new(s.iter().map(|z| z.conj()).collect());
    let matched = y.matvec(&s_conj)?;
    let z = hermitian_solve(r_ss, &matched)?;
    let r_ss_inv = r_ss.hermitian_inverse()?;
    let lhs = r_hh.add(&r_ss_inv.scale_real(n))?;
    let rhs = r_hh.matvec(&z)?;
    Ok(hermitian_solve(&lhs, &rhs)?)
}

/// `½‖y − J h‖²`
pub fn data_loss(j: &ComplexMatrix, h: &ComplexVector, y: &ComplexVector) -> Result<f64, EstimationError> {
    Ok(0.5 * y.sub(&j.matvec(h)?).norm_sqr())
}

/// `Jᴴ(J h − y)`
pub fn data_gradient(j: &ComplexMatrix, h: &ComplexVector, y: &ComplexVector) -> Result<ComplexVector, EstimationError> {
    let r = j.matvec(h)?.sub(y);
    Ok(j.adjoint_matvec(&r)?)
}

/// Stability certificate for the PDD-corrected gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub lambda_max: f64,
    pub eta_bound: f64,
    pub pdd_error_bound: f64,
    pub contraction_factor: f64,
    pub certified: bool,
    #[serde(skip)]
    pub lambda_min: f64,
    #[serde(skip)]
    pub eta: f64,
    #[serde(skip)]
    pub beta: f64,
}

impl BoundCertificate {
    /// The same certificate re-checked against a different PDD error.
    pub fn with_pdd_error(&self, eps_pdd: f64) -> Self {
        Self {
            certified: self.eta < self.eta_bound && eps_pdd < self.pdd_error_bound && self.contraction_factor < 1.0,
            ..*self
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// Extreme eigenvalues of `JᴴJ`.
pub fn gauss_newton_spectrum(j: &ComplexMatrix) -> Result<(f64, f64), EstimationError> {
    let g = j.gram();
    let lmax = power_iteration_lambda_max(&g, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITERS)?;
    let lmin = power_iteration_lambda_min(&g, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITERS)?;
    Ok((lmax, lmin.max(0.0)))
}

/// Effective gradient margin: smallest eigenvalue of `JᴴJ`, floored.
pub fn gamma_e(j: &ComplexMatrix) -> Result<f64, EstimationError> {
    Ok(gauss_newton_spectrum(j)?.1.max(GAMMA_E_FLOOR))
}

/// Certifies learning rate `eta` for Jacobian `j` and correction Lipschitz constant `beta`.
///
/// Passes when `η < 2/(λ_max+β)`, `ε_PDD < η γ_e / (2‖W‖_F)` and the
/// resulting contraction factor `max_i|1−ηλ_i| + ηβ` is below one.
pub fn certify_convergence(
    j: &ComplexMatrix,
    beta: f64,
    eta: f64,
    eps_pdd: f64,
    w_att_frobenius: f64,
    gamma_e: f64,
) -> Result<BoundCertificate, EstimationError> {
    if !(beta >= 0.0) || !(eta > 0.0) || !(w_att_frobenius > 0.0) {
        return Err(EstimationError::InvalidParameter(format!(
            "need beta >= 0, eta > 0, |W|_F > 0 (got {beta}, {eta}, {w_att_frobenius})"
        )));
    }
    let (lambda_max, lambda_min) = gauss_newton_spectrum(j)?;
    Ok(build_certificate(lambda_max, lambda_min, beta, eta, eps_pdd, w_att_frobenius, gamma_e))
}

fn build_certificate(
    lambda_max: f64,
    lambda_min: f64,
    beta: f64,
    eta: f64,
    eps_pdd: f64,
    w_att_frobenius: f64,
    gamma_e: f64,
) -> BoundCertificate {
    let eta_bound = 2.0 / (lambda_max + beta);
    let pdd_error_bound = eta * gamma_e / (2.0 * w_att_frobenius);
    let spectral = (1.0 - eta * lambda_max).abs().max((1.0 - eta * lambda_min).abs());
    let contraction_factor = spectral + eta * beta;
    BoundCertificate {
        lambda_max,
        eta_bound,
        pdd_error_bound,
        contraction_factor,
        certified: eta < eta_bound && eps_pdd < pdd_error_bound && contraction_factor < 1.0,
        lambda_min,
        eta,
        beta,
    }
}

/// Picks `η = 0.9 · 2/(λ_max+β)` and then checks the PDD error bound.
pub fn auto_certify(
    j: &ComplexMatrix,
    beta: f64,
    eps_pdd: f64,
    w_att_frobenius: f64,
    gamma_e: f64,
) -> Result<BoundCertificate, EstimationError> {
    let (lambda_max, _) = gauss_newton_spectrum(j)?;
    let eta = AUTO_ETA_FRACTION * 2.0 / (lambda_max + beta);
    certify_convergence(j, beta, eta, eps_pdd, w_att_frobenius, gamma_e)
}

/// Empirical Lipschitz constant of `psi` over `pairs` random input pairs,
/// inflated by [`BETA_SAFETY_FACTOR`].
pub fn estimate_beta_lipschitz(
    mut psi: impl FnMut(&ComplexVector) -> ComplexVector,
    dim: usize,
    pairs: usize,
    rng: &mut SeededRng,
) -> Result<f64, EstimationError> {
    if pairs < MIN_LIPSCHITZ_PAIRS {
        return Err(EstimationError::InsufficientSamples {
            found: pairs,
            required: MIN_LIPSCHITZ_PAIRS,
        });
    }
    let mut sup: f64 = 0.0;
    for _ in 0..pairs {
        let a: ComplexVector = (0..dim).map(|_| rng.complex_gaussian(1.0)).collect();
        let b: ComplexVector = (0..dim).map(|_| rng.complex_gaussian(1.0)).collect();
        let gap = a.sub(&b).norm();
        if gap > 0.0 {
            sup = sup.max(psi(&a).sub(&psi(&b)).norm() / gap);
        }
    }
    Ok(BETA_SAFETY_FACTOR * sup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub h_hat: ComplexVector,
    pub iteration: usize,
    pub eta: f64,
    pub beta: f64,
    pub gamma_e: f64,
    pub eta_bound: f64,
    pub certified: bool,
    pub loss_history: Vec<f64>,
}

impl EstimatorState {
    pub fn new(h0: ComplexVector, cert: &BoundCertificate, gamma_e: f64) -> Self {
        Self {
            h_hat: h0,
            iteration: 0,
            eta: cert.eta,
            beta: cert.beta,
            gamma_e,
            eta_bound: cert.eta_bound,
            certified: cert.certified,
            loss_history: Vec::new(),
        }
    }
}

/// PDD correction input for one update.
#[derive(Debug, Clone, Copy)]
pub struct PddCorrection<'a> {
    /// Observation-space PDD error `e_PDD`.
    pub error: &'a ComplexVector,
    /// Smallest |LLR| among the bits that produced `error`.
    pub min_abs_llr: f64,
}

/// One step `h ← h − η (Jᴴ(Jh − y) + ψ)` with `ψ = Jᴴ e_PDD` when the LLR
/// gate passes and zero otherwise. The post-step loss is appended to the history.
pub fn pdd_corrected_update(
    mut state: EstimatorState,
    y: &ComplexVector,
    j: &ComplexMatrix,
    pdd: Option<PddCorrection<'_>>,
    llr_gate: f64,
    override_guard: bool,
) -> Result<EstimatorState, EstimationError> {
    if !state.certified && !override_guard {
        return Err(EstimationError::GuardViolated {
            eta: state.eta,
            bound: state.eta_bound,
        });
    }
    let mut step = data_gradient(j, &state.h_hat, y)?;
    if let Some(c) = pdd {
        if c.min_abs_llr >= llr_gate {
            step = step.add(&j.adjoint_matvec(c.error)?);
        }
    }
    state.h_hat.axpy(Complex64::new(-state.eta, 0.0), &step);
    state.iteration += 1;
    state.loss_history.push(data_loss(j, &state.h_hat, y)?);
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::draw_complex_gaussian;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(v: f64) -> ComplexMatrix {
        ComplexMatrix::from_diag(&[v])
    }

    #[test]
    fn dft_pilots_orthogonal_unit_modulus() {
        let p = PilotBlock::dft(4, 8).unwrap();
        for j in 0..4 {
            assert!(p.row(j).iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
            for k in 0..4 {
                if j != k {
                    assert!(inner(p.row(j), p.row(k)).norm() < 1e-12);
                }
            }
        }
        assert!(matches!(PilotBlock::dft(5, 4), Err(EstimationError::TooManyUsers { .. })));
        assert!(matches!(PilotBlock::dft(1, 0), Err(EstimationError::EmptyPilot)));
    }

    #[test]
    fn ls_examples() {
        let s = PilotBlock::dft(2, 8).unwrap().row(1).to_vec();
        assert!((ls_estimate(&s, &s).unwrap() - c(1.0, 0.0)).norm() < 1e-14);
        let y2: Vec<_> = s.iter().map(|z| z * 2.0).collect();
        assert!((ls_estimate(&y2, &s).unwrap() - c(2.0, 0.0)).norm() < 1e-14);
        assert!(ls_estimate(&[], &[]).is_err());
    }

    #[test]
    fn ls_error_variance() {
        let s = PilotBlock::dft(1, 32).unwrap().row(0).to_vec();
        let h = c(0.7, -0.2);
        let mut rng = SeededRng::new(2, 0);
        let trials = 10_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let y: Vec<_> = s.iter().map(|z| h * z + rng.complex_gaussian(0.1)).collect();
            acc += (ls_estimate(&y, &s).unwrap() - h).norm_sqr();
        }
        let var = acc / trials as f64;
        assert!((var / 0.003125 - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn mmse_scalar_reduction() {
        let one = scalar(1.0);
        let y = ComplexMatrix::new(1, 1, vec![c(1.1, 0.0)]).unwrap();
        let est = mmse_estimate(&y, &[c(1.0, 0.0)], &one, &one, 0.1).unwrap();
        assert!((est[0] - c(1.0, 0.0)).norm() < 1e-12);
        let y = ComplexMatrix::new(1, 1, vec![c(0.3, -0.8)]).unwrap();
        let est = mmse_estimate(&y, &[c(1.0, 0.0)], &one, &one, 0.0).unwrap();
        assert!((est[0] - c(0.3, -0.8)).norm() < 1e-14);
        let est = mmse_estimate(&y, &[c(1.0, 0.0)], &one, &one, 1e6).unwrap();
        assert!(est[0].norm() < 2e-6 * c(0.3, -0.8).norm());
        let not_pd = scalar(-1.0);
        assert!(matches!(
            mmse_estimate(&y, &[c(1.0, 0.0)], &not_pd, &one, 0.1),
            Err(EstimationError::Numerics(NumericsError::NotPositiveDefinite { .. }))
        ));
    }

    #[test]
    fn mmse_beats_ls_in_mean_square() {
        let n_pilot = 4;
        let s = PilotBlock::dft(1, n_pilot).unwrap().row(0).to_vec();
        let r_hh = ComplexMatrix::identity(1);
        let r_ss = scalar(n_pilot as f64);
        for (i, snr_db) in [-5.0, 0.0, 5.0, 10.0].into_iter().enumerate() {
            let var = 10f64.powf(-snr_db / 10.0);
            let mut rng = SeededRng::new(40, i as u64);
            let (mut e_ls, mut e_mmse) = (0.0, 0.0);
            for _ in 0..10_000 {
                let h = rng.complex_gaussian(1.0);
                let row: Vec<_> = s.iter().map(|z| h * z + rng.complex_gaussian(var)).collect();
                let y = ComplexMatrix::new(1, n_pilot, row.clone()).unwrap();
                e_ls += (ls_estimate(&row, &s).unwrap() - h).norm_sqr();
                e_mmse += (mmse_estimate(&y, &s, &r_hh, &r_ss, var).unwrap()[0] - h).norm_sqr();
            }
            assert!(e_mmse <= e_ls * 1.02, "snr {snr_db}: {e_mmse} vs {e_ls}");
        }
    }

    #[test]
    fn contraction_step_examples() {
        let j = scalar(1.0);
        let cert = certify_convergence(&j, 0.0, 0.5, 0.0, 1.0, 1.0).unwrap();
        assert!(cert.certified);
        let y = ComplexVector::from_reals(&[0.0]);
        let state = EstimatorState::new(ComplexVector::from_reals(&[1.0]), &cert, 1.0);
        let next = pdd_corrected_update(state, &y, &j, None, 0.0, false).unwrap();
        assert!((next.h_hat[0] - c(0.5, 0.0)).norm() < 1e-15);
        assert_eq!(next.loss_history.len(), 1);

        let bad = certify_convergence(&j, 0.0, 2.5, 0.0, 1.0, 1.0).unwrap();
        assert!(!bad.certified);
        assert!((bad.eta_bound - 2.0).abs() < 1e-12);
        let state = EstimatorState::new(ComplexVector::from_reals(&[1.0]), &bad, 1.0);
        assert!(matches!(
            pdd_corrected_update(state.clone(), &y, &j, None, 0.0, false),
            Err(EstimationError::GuardViolated { .. })
        ));
        assert!(pdd_corrected_update(state, &y, &j, None, 0.0, true).is_ok());
    }

    #[test]
    fn pdd_step_matches_finite_difference_gradient() {
        let j = ComplexMatrix::new(1, 1, vec![c(0.8, 0.3)]).unwrap();
        let y = ComplexVector::new(vec![c(0.2, -0.5)]);
        let h0 = ComplexVector::new(vec![c(0.4, 0.1)]);
        let eta = 0.5;
        let cert = certify_convergence(&j, 0.0, eta, 0.0, 1.0, 1.0).unwrap();
        let state = EstimatorState::new(h0.clone(), &cert, 1.0);
        let e_pdd = ComplexVector::new(vec![c(0.1, 0.0)]);
        let corr = PddCorrection {
            error: &e_pdd,
            min_abs_llr: 3.0,
        };
        let next = pdd_corrected_update(state, &y, &j, Some(corr), 1.0, false).unwrap();

        let step = 1e-6;
        let loss_at = |dz: Complex64| {
            let h = ComplexVector::new(vec![h0[0] + dz]);
            data_loss(&j, &h, &y).unwrap()
        };
        let g_re = (loss_at(c(step, 0.0)) - loss_at(c(-step, 0.0))) / (2.0 * step);
        let g_im = (loss_at(c(0.0, step)) - loss_at(c(0.0, -step))) / (2.0 * step);
        let fd_grad = c(g_re, g_im);
        let expected = h0[0] - (fd_grad + j[(0, 0)].conj() * 0.1) * eta;
        assert!((next.h_hat[0] - expected).norm() / expected.norm() < 1e-6);

        // closed loop: below the gate the correction is dropped
        let cert = certify_convergence(&j, 0.0, eta, 0.0, 1.0, 1.0).unwrap();
        let state = EstimatorState::new(h0.clone(), &cert, 1.0);
        let corr = PddCorrection {
            error: &e_pdd,
            min_abs_llr: 0.5,
        };
        let gated = pdd_corrected_update(state, &y, &j, Some(corr), 1.0, false).unwrap();
        let plain = h0[0] - fd_grad * eta;
        assert!((gated.h_hat[0] - plain).norm() < 1e-8);
    }

    #[test]
    fn certificate_examples() {
        let id = ComplexMatrix::identity(3);
        let cert = certify_convergence(&id, 0.5, 0.1, 0.0, 1.0, 1.0).unwrap();
        assert!((cert.eta_bound - 4.0 / 3.0).abs() < 1e-9);
        let cert = certify_convergence(&id, 0.0, 0.1, 0.0, 5.0, 1.0).unwrap();
        assert!((cert.pdd_error_bound - 0.01).abs() < 1e-15);
        let cert = certify_convergence(&id, 0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert!(cert.contraction_factor.abs() < 1e-9);
        let json: serde_json::Value = serde_json::from_str(&cert.to_json()).unwrap();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 5);
        for k in ["lambda_max", "eta_bound", "pdd_error_bound", "contraction_factor", "certified"] {
            assert!(json.get(k).is_some(), "{k}");
        }
        let auto = auto_certify(&id.scale_real(2.0), 0.0, 0.0, 1.0, 1.0).unwrap();
        assert!((auto.eta - 0.9 * 2.0 / 4.0).abs() < 1e-9);
    }

    #[test]
    fn lipschitz_examples() {
        let mut rng = SeededRng::new(1, 2);
        let b = estimate_beta_lipschitz(|a| a.clone(), 4, 200, &mut rng).unwrap();
        assert!((1.0..=1.5 + 1e-12).contains(&b), "{b}");
        let b = estimate_beta_lipschitz(|a| a.scale_real(2.0), 4, 200, &mut rng).unwrap();
        assert!((2.0 - 1e-12..=3.0 + 1e-12).contains(&b), "{b}");
        assert!(matches!(
            estimate_beta_lipschitz(|a| a.clone(), 4, 99, &mut rng),
            Err(EstimationError::InsufficientSamples { .. })
        ));
        let gated = |a: &ComplexVector| if a.norm() >= 0.5 { a.clone() } else { ComplexVector::zeros(a.dim()) };
        let runs: Vec<f64> = (0..5)
            .map(|s| estimate_beta_lipschitz(gated, 4, 1000, &mut SeededRng::new(s, 0)).unwrap())
            .collect();
        let mean = runs.iter().sum::<f64>() / runs.len() as f64;
        assert!(runs.iter().all(|b| b.is_finite() && (b / mean - 1.0).abs() < 0.1), "{runs:?}");
    }

    #[test]
    fn certified_iteration_contracts() {
        let mut rng = SeededRng::new(12, 0);
        for _ in 0..20 {
            let cols: Vec<_> = (0..3).map(|_| draw_complex_gaussian(&mut rng, 8, 1.0).unwrap()).collect();
            let j = ComplexMatrix::from_columns(&cols).unwrap();
            let h_true = draw_complex_gaussian(&mut rng, 3, 1.0).unwrap();
            let y = j.matvec(&h_true).unwrap();
            let g = gamma_e(&j).unwrap();
            let cert = auto_certify(&j, 0.0, 0.0, 1.0, g).unwrap();
            let mut state = EstimatorState::new(ComplexVector::zeros(3), &cert, g);
            let mut prev = h_true.norm();
            for _ in 0..30 {
                state = pdd_corrected_update(state, &y, &j, None, 0.0, false).unwrap();
                let err = state.h_hat.sub(&h_true).norm();
                assert!(err <= cert.contraction_factor * prev + 1e-12);
                prev = err;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn auto_eta_respects_bound(vals in proptest::collection::vec(-3.0f64..3.0, 6), beta in 0.0f64..5.0) {
            let j = ComplexMatrix::new(3, 1, vals.chunks(2).map(|p| c(p[0], p[1])).collect()).unwrap();
            prop_assume!(j.frobenius_norm() > 1e-3);
            let cert = auto_certify(&j, beta, 0.0, 1.0, 1.0).unwrap();
            prop_assert!(cert.eta > 0.0 && cert.eta < cert.eta_bound);
            prop_assert!(cert.eta_bound * (cert.lambda_max + beta) - 2.0 < 1e-9);
        }
    }
}
