//! Complex linear algebra, seeded random streams and scalar special functions.
//!
//! Everything here is small and dense: the largest matrices in the simulator
//! are a few dozen rows, so the routines favour clarity and determinism over
//! blocking or SIMD.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

pub use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest Cholesky pivot accepted as positive.
pub const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("power iteration did not converge after {iters} iterations")]
    NoConvergence { iters: usize },
    #[error("variance must be positive, got {0}")]
    InvalidVariance(f64),
}

/// Dense complex column vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Self {
        Self(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); dim])
    }

    /// Unit vector `e_index` of dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[index] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn from_reals(values: &[f64]) -> Self {
        Self(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.0.iter()
    }

    /// Hermitian inner product `selfᴴ other`.
    pub fn dot(&self, other: &Self) -> Complex64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: Complex64, x: &Self) {
        debug_assert_eq!(self.dim(), x.dim());
        for (a, b) in self.0.iter_mut().zip(&x.0) {
            *a += alpha * b;
        }
    }

    /// Returns the vector scaled to unit norm, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0).then(|| self.scale_real(1.0 / n))
    }
}

impl Index<usize> for ComplexVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ComplexVector {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.0[i]
    }
}

impl FromIterator<Complex64> for ComplexVector {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[ComplexVector]) -> Result<Self, NumericsError> {
        let rows = columns.first().map_or(0, ComplexVector::dim);
        for c in columns {
            if c.dim() != rows {
                return Err(NumericsError::DimensionMismatch {
                    expected: rows,
                    found: c.dim(),
                });
            }
        }
        Ok(Self::from_fn(rows, columns.len(), |r, c| columns[c][r]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> ComplexVector {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &ComplexVector) -> Result<ComplexVector, NumericsError> {
        if self.cols != x.dim() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                found: x.dim(),
            });
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(x.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// `selfᴴ x` without materialising the transpose.
    pub fn adjoint_matvec(&self, x: &ComplexVector) -> Result<ComplexVector, NumericsError> {
        if self.rows != x.dim() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.rows,
                found: x.dim(),
            });
        }
        let mut out = ComplexVector::zeros(self.cols);
        for r in 0..self.rows {
            let xr = x[r];
            for c in 0..self.cols {
                out[c] += self[(r, c)].conj() * xr;
            }
        }
        Ok(out)
    }

    /// Gram matrix `selfᴴ self`.
    pub fn gram(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for i in 0..self.cols {
                let ai = row[i].conj();
                for j in 0..self.cols {
                    out[(i, j)] += ai * row[j];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self, NumericsError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (i..self.cols).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol))
    }

    /// Lower-triangular Cholesky factor `L` with `A = L Lᴴ`.
    pub fn cholesky(&self) -> Result<Self, NumericsError> {
        if !self.is_square() {
            return Err(NumericsError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if d <= PIVOT_FLOOR || !d.is_finite() {
                return Err(NumericsError::NotPositiveDefinite { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = Complex64::new(djj, 0.0);
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    /// Inverse of a Hermitian positive definite matrix, column by column.
    pub fn hermitian_inverse(&self) -> Result<Self, NumericsError> {
        let l = self.cholesky()?;
        let n = self.rows;
        let cols: Vec<ComplexVector> = (0..n)
            .map(|c| cholesky_solve(&l, &ComplexVector::basis(n, c)))
            .collect();
        Self::from_columns(&cols)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

fn cholesky_solve(l: &ComplexMatrix, b: &ComplexVector) -> ComplexVector {
    let n = l.rows();
    // L z = b
    let mut z = ComplexVector::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * z[k];
        }
        z[i] = s / l[(i, i)];
    }
    // Lᴴ x = z
    let mut x = ComplexVector::zeros(n);
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[(k, i)].conj() * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `A x = b` for Hermitian positive definite `A` via Cholesky.
pub fn hermitian_solve(a: &ComplexMatrix, b: &ComplexVector) -> Result<ComplexVector, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if a.rows() != b.dim() {
        return Err(NumericsError::DimensionMismatch {
            expected: a.rows(),
            found: b.dim(),
        });
    }
    let l = a.cholesky()?;
    Ok(cholesky_solve(&l, b))
}

pub const DEFAULT_POWER_TOL: f64 = 1e-8;
pub const DEFAULT_POWER_MAX_ITERS: usize = 10_000;

/// Dominant eigenvalue of a Hermitian positive semi-definite matrix.
///
/// Starts from the normalised all-ones vector. If that start lies in the
/// null space of `A` the iteration is restarted once from a fixed perturbed
/// vector; if that also vanishes the matrix is treated as zero on both
/// starts and `0.0` is returned. Iteration stops once the eigen-residual
/// `‖Av − θv‖` drops below `tol·|θ|`.
pub fn power_iteration_lambda_max(a: &ComplexMatrix, tol: f64, max_iters: usize) -> Result<f64, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(0.0);
    }
    let ones = ComplexVector::new(vec![Complex64::new(1.0, 0.0); n]);
    let perturbed: ComplexVector = (0..n)
        .map(|i| Complex64::new(1.0 + 0.37 * (i as f64 + 1.0).sqrt(), 0.11 * i as f64))
        .collect();
    for start in [ones, perturbed] {
        if let Some(lambda) = power_run(a, start, tol, max_iters)? {
            return Ok(lambda);
        }
    }
    Ok(0.0)
}

fn power_run(a: &ComplexMatrix, start: ComplexVector, tol: f64, max_iters: usize) -> Result<Option<f64>, NumericsError> {
    let mut v = start.normalized().expect("start vector is non-zero");
    let mut w = a.matvec(&v)?;
    if w.norm() <= f64::MIN_POSITIVE {
        return Ok(None);
    }
    let mut theta;
    for _ in 0..max_iters {
        let Some(next) = w.normalized() else {
            return Ok(None);
        };
        v = next;
        w = a.matvec(&v)?;
        theta = v.dot(&w).re;
        let residual = w.sub(&v.scale_real(theta)).norm();
        if residual <= tol * theta.abs().max(f64::MIN_POSITIVE) {
            return Ok(Some(theta));
        }
    }
    Err(NumericsError::NoConvergence { iters: max_iters })
}

/// Smallest eigenvalue of a Hermitian PSD matrix by shifted power iteration.
pub fn power_iteration_lambda_min(a: &ComplexMatrix, tol: f64, max_iters: usize) -> Result<f64, NumericsError> {
    let lmax = power_iteration_lambda_max(a, tol, max_iters)?;
    let shifted = ComplexMatrix::identity(a.rows()).scale_real(lmax).add(&a.scale_real(-1.0))?;
    let gap = power_iteration_lambda_max(&shifted, tol, max_iters)?;
    Ok((lmax - gap).max(0.0))
}

/// Bessel function of the first kind, order zero.
///
/// Power series for |x| <= 12, Hankel asymptotic expansion beyond.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 12.0 {
        let q = 0.25 * ax * ax;
        let mut term: f64 = 1.0;
        let mut sum: f64 = 1.0;
        let mut k = 1.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) || k < 3.0 {
            term *= -q / (k * k);
            sum += term;
            k += 1.0;
            if k > 200.0 {
                break;
            }
        }
        sum
    } else {
        // t_m = prod_{j=1..m} (-(2j-1)^2) / (m! (8x)^m)
        let mut p = 0.0;
        let mut q = 0.0;
        let mut term = 1.0;
        let mut prev = f64::INFINITY;
        for m in 0..60 {
            if m > 0 {
                let odd = (2 * m - 1) as f64;
                term *= -(odd * odd) / (m as f64 * 8.0 * ax);
            }
            if term.abs() > prev {
                break;
            }
            prev = term.abs();
            // the (-1)^k factor folds into the alternating sign pattern of P and Q
            match m % 4 {
                0 => p += term,
                1 => q += term,
                2 => p -= term,
                _ => q -= term,
            }
            if term.abs() < 1e-17 {
                break;
            }
        }
        let chi = ax - PI / 4.0;
        (2.0 / (PI * ax)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Deterministic random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha12, whose 64-bit stream selector gives independent
/// sequences for the same seed; Monte-Carlo workers each own one.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha12Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream derived from this one's seed, e.g. for a trial index.
    pub fn derive(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits in [0, 1)
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    pub fn bit(&mut self) -> bool {
        self.inner.next_u32() & 1 == 1
    }

    /// Circularly-symmetric complex Gaussian scalar with the given variance.
    pub fn complex_gaussian(&mut self, variance: f64) -> Complex64 {
        let s = (0.5 * variance).sqrt();
        Complex64::new(s * self.standard_normal(), s * self.standard_normal())
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.uniform() * n as f64) as usize % n.max(1)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// I.i.d. CN(0, variance) vector.
pub fn draw_complex_gaussian(rng: &mut SeededRng, dim: usize, variance: f64) -> Result<ComplexVector, NumericsError> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(NumericsError::InvalidVariance(variance));
    }
    Ok((0..dim).map(|_| rng.complex_gaussian(variance)).collect())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Ordinary least-squares line through `(x, y)`; returns `(intercept, slope, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (intercept, slope, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hpd(rng: &mut SeededRng, n: usize) -> ComplexMatrix {
        let b = ComplexMatrix::from_fn(n, n, |_, _| rng.complex_gaussian(1.0));
        b.gram().add(&ComplexMatrix::identity(n).scale_real(0.5)).unwrap()
    }

    /// Largest root of det(A - λI) located by scanning down from the
    /// Gershgorin bound and bisecting the first sign change.
    fn charpoly_lambda_max(a: &ComplexMatrix) -> f64 {
        fn det(m: &ComplexMatrix) -> Complex64 {
            let n = m.rows();
            let mut w: Vec<Vec<Complex64>> = (0..n).map(|r| (0..n).map(|c| m[(r, c)]).collect()).collect();
            let mut d = c(1.0, 0.0);
            for col in 0..n {
                let piv = (col..n).max_by(|&i, &j| w[i][col].norm().total_cmp(&w[j][col].norm())).unwrap();
                if w[piv][col].norm() == 0.0 {
                    return c(0.0, 0.0);
                }
                if piv != col {
                    w.swap(piv, col);
                    d = -d;
                }
                d *= w[col][col];
                for r in col + 1..n {
                    let f = w[r][col] / w[col][col];
                    for k in col..n {
                        let v = w[col][k];
                        w[r][k] -= f * v;
                    }
                }
            }
            d
        }
        let n = a.rows();
        let shifted = |l: f64| det(&a.add(&ComplexMatrix::identity(n).scale_real(-l)).unwrap()).re;
        let upper = (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
            + 1.0;
        let steps = 200_000;
        let h = upper / steps as f64;
        let mut hi = upper;
        let mut f_hi = shifted(hi);
        for s in 1..=steps {
            let lo = upper - s as f64 * h;
            let f_lo = shifted(lo);
            if f_lo.signum() != f_hi.signum() || f_lo == 0.0 {
                let (mut l, mut r) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (l + r);
                    if shifted(m).signum() == f_hi.signum() {
                        r = m;
                    } else {
                        l = m;
                    }
                }
                return 0.5 * (l + r);
            }
            hi = lo;
            f_hi = f_lo;
        }
        panic!("no root found");
    }

    fn series_j0(x: f64, terms: usize) -> f64 {
        let mut sum = 0.0;
        let mut fact = 1.0;
        for k in 0..terms {
            if k > 0 {
                fact *= k as f64;
            }
            sum += (-1f64).powi(k as i32) * (x / 2.0).powi(2 * k as i32) / (fact * fact);
        }
        sum
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let x = hermitian_solve(&ComplexMatrix::identity(2), &ComplexVector::new(vec![c(1.0, 0.0), c(0.0, 2.0)])).unwrap();
        assert_eq!(x.as_slice(), &[c(1.0, 0.0), c(0.0, 2.0)]);
        let x = hermitian_solve(&ComplexMatrix::from_diag(&[2.0, 4.0]), &ComplexVector::from_reals(&[2.0, 4.0])).unwrap();
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-15 && (x[1] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn solve_random_residual() {
        let mut rng = SeededRng::new(11, 0);
        let a = random_hpd(&mut rng, 4);
        let b = draw_complex_gaussian(&mut rng, 4, 1.0).unwrap();
        let x = hermitian_solve(&a, &b).unwrap();
        let r = a.matvec(&x).unwrap().sub(&b);
        assert!(r.norm() / b.norm() < 1e-9);
    }

    #[test]
    fn solve_errors() {
        let not_pd = ComplexMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(
            hermitian_solve(&not_pd, &ComplexVector::zeros(2)),
            Err(NumericsError::NotPositiveDefinite { index: 1, .. })
        ));
        assert!(matches!(
            hermitian_solve(&ComplexMatrix::identity(3), &ComplexVector::zeros(2)),
            Err(NumericsError::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn inverse_reconstructs_identity() {
        let mut rng = SeededRng::new(3, 1);
        let a = random_hpd(&mut rng, 5);
        let prod = a.matmul(&a.hermitian_inverse().unwrap()).unwrap();
        let id = ComplexMatrix::identity(5);
        let err = prod.as_slice().iter().zip(id.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
        assert_eq!(a.conj_transpose().conj_transpose(), a);
    }

    #[test]
    fn power_iteration_examples() {
        let l = power_iteration_lambda_max(&ComplexMatrix::from_diag(&[1.0, 3.0, 2.0]), 1e-12, DEFAULT_POWER_MAX_ITERS).unwrap();
        assert!((l - 3.0).abs() < 1e-9);
        let l = power_iteration_lambda_max(&ComplexMatrix::identity(4), DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITERS).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_matches_charpoly_oracle() {
        let mut rng = SeededRng::new(2024, 5);
        for _ in 0..3 {
            let b = ComplexMatrix::from_fn(5, 5, |_, _| rng.complex_gaussian(1.0));
            let a = b.gram();
            let oracle = charpoly_lambda_max(&a);
            let got = power_iteration_lambda_max(&a, 1e-13, 100_000).unwrap();
            assert!((got - oracle).abs() < 1e-6 * oracle.max(1.0), "{got} vs {oracle}");
        }
    }

    #[test]
    fn power_iteration_orthogonal_start_retries() {
        // A = u uᴴ with u ⟂ ones: the all-ones start is in the null space.
        let u = ComplexVector::from_reals(&[1.0, -1.0]).normalized().unwrap();
        let a = ComplexMatrix::from_fn(2, 2, |r, c| u[r] * u[c].conj()).scale_real(5.0);
        let l = power_iteration_lambda_max(&a, 1e-12, 1000).unwrap();
        assert!((l - 5.0).abs() < 1e-9);
        assert_eq!(power_iteration_lambda_max(&ComplexMatrix::zeros(3, 3), 1e-8, 10).unwrap(), 0.0);
    }

    #[test]
    fn power_iteration_no_convergence() {
        let a = ComplexMatrix::from_diag(&[1.0, 0.999_999]);
        let r = power_iteration_lambda_max(&ComplexMatrix::from_fn(2, 2, |i, j| a[(i, j)] + c(0.1, 0.0)), 1e-15, 1);
        assert!(matches!(r, Err(NumericsError::NoConvergence { iters: 1 })));
    }

    #[test]
    fn lambda_min_of_diagonal() {
        let l = power_iteration_lambda_min(&ComplexMatrix::from_diag(&[4.0, 0.5, 2.0]), 1e-12, 100_000).unwrap();
        assert!((l - 0.5).abs() < 1e-8);
    }

    #[test]
    fn j0_examples() {
        assert_eq!(bessel_j0(0.0), 1.0);
        let oracle = series_j0(0.314159, 20);
        assert!((oracle - 0.975_477_8).abs() < 1e-6);
        assert!((bessel_j0(0.314159) - oracle).abs() < 1e-10);
        // first zero located by bisection on the series oracle
        let (mut lo, mut hi) = (2.0, 3.0);
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if series_j0(m, 40) > 0.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        assert!((lo - 2.404826).abs() < 1e-6);
        assert!(bessel_j0(2.404826).abs() < 1e-6);
    }

    #[test]
    fn j0_matches_series_and_reference() {
        for i in 0..=120 {
            let x = i as f64 * 0.1;
            assert!((bessel_j0(x) - series_j0(x, 60)).abs() < 1e-10, "x={x}");
            assert_eq!(bessel_j0(-x), bessel_j0(x));
        }
        for i in 0..400 {
            let x = 12.0 + i as f64 * 0.0949;
            assert!((bessel_j0(x) - libm::j0(x)).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn gaussian_moments_and_errors() {
        let mut rng = SeededRng::new(1, 0);
        let n = 100_000 / 4;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += draw_complex_gaussian(&mut rng, 4, 1.0).unwrap().norm_sqr();
        }
        let mean = acc / (4 * n) as f64;
        assert!((0.99..=1.01).contains(&mean), "{mean}");
        assert_eq!(draw_complex_gaussian(&mut rng, 4, 0.0), Err(NumericsError::InvalidVariance(0.0)));
    }

    #[test]
    fn seeded_determinism() {
        let a = draw_complex_gaussian(&mut SeededRng::new(42, 0), 1, 1.0).unwrap();
        let b = draw_complex_gaussian(&mut SeededRng::new(42, 0), 1, 1.0).unwrap();
        assert_eq!(a[0].re.to_bits(), b[0].re.to_bits());
        assert_eq!(a[0].im.to_bits(), b[0].im.to_bits());
    }

    #[test]
    fn streams_are_uncorrelated() {
        let mut a = SeededRng::new(7, 0);
        let mut b = SeededRng::new(7, 1);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| a.standard_normal()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.standard_normal()).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        assert!((cov / (vx * vy).sqrt()).abs() < 0.05);
    }

    #[test]
    fn channel_power_is_exponential() {
        // Kolmogorov-Smirnov against Exp(1)
        let mut rng = SeededRng::new(99, 3);
        let mut xs: Vec<f64> = (0..100_000).map(|_| rng.complex_gaussian(1.0).norm_sqr()).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (-x).exp();
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn linear_fit_exact_line() {
        let (a, b, r2) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn solve_round_trips(seed in any::<u64>(), n in 1usize..6) {
                let mut rng = SeededRng::new(seed, 0);
                let a = random_hpd(&mut rng, n);
                let b = draw_complex_gaussian(&mut rng, n, 1.0).unwrap();
                let x = hermitian_solve(&a, &b).unwrap();
                prop_assert!(a.matvec(&x).unwrap().sub(&b).norm() <= 1e-9 * b.norm().max(1e-300));
            }

            #[test]
            fn lambda_max_dominates_rayleigh_quotients(seed in any::<u64>(), n in 1usize..6) {
                let mut rng = SeededRng::new(seed, 1);
                let a = random_hpd(&mut rng, n);
                let l = power_iteration_lambda_max(&a, 1e-12, 200_000).unwrap();
                for _ in 0..100 {
                    let x = draw_complex_gaussian(&mut rng, n, 1.0).unwrap();
                    let rq = x.dot(&a.matvec(&x).unwrap()).re / x.norm_sqr();
                    prop_assert!(l >= rq * (1.0 - 1e-9));
                }
            }

            #[test]
            fn self_inner_product_is_real_nonneg(seed in any::<u64>(), n in 1usize..8) {
                let mut rng = SeededRng::new(seed, 2);
                let v = draw_complex_gaussian(&mut rng, n, 2.0).unwrap();
                let ip = v.dot(&v);
                prop_assert!(ip.im.abs() < 1e-12 && ip.re >= 0.0);
            }
        }
    }
}
