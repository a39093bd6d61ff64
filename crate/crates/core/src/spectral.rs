//! Dense eigen-analysis helpers.
//!
//! Spectra are always evaluated in `f64`, whatever scalar type the
//! caller's matrix uses.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_SCHUR_SWEEPS_PER_DIM: usize = 2_000;

pub fn to_f64_matrix<T: Scalar>(m: &DMatrix<T>) -> DMatrix<f64> {
    m.map(|v| v.as_f64())
}

/// All eigenvalues of a square matrix, sorted by (real, imaginary).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch { expected: n, got: m.ncols() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenSolveFailure("matrix has non-finite entries".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(
        m.clone(),
        f64::EPSILON,
        MAX_SCHUR_SWEEPS_PER_DIM * n,
    )
    .ok_or_else(|| Error::EigenSolveFailure(format!("Schur iteration on {n}x{n} matrix")))?;
    let mut ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `xᵀ M = 0` for a matrix whose left null space is one-dimensional,
/// normalized to unit sum (or unit max-magnitude when the sum vanishes).
///
/// The rows of `Mᵀ` sum to zero whenever `M·1 = 0`, so any one of them can
/// be swapped for the normalization row `1ᵀ x = 1`.
pub fn left_null_vector(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = m.nrows();
    if n == 0 {
        return None;
    }
    let mut sys = m.transpose();
    for j in 0..n {
        sys[(n - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let x = match sys.lu().solve(&rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => x.iter().copied().collect::<Vec<_>>(),
        _ => svd_left_null(m)?,
    };
    Some(normalize_null_vector(x))
}

fn svd_left_null(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    let svd = nalgebra::linalg::SVD::try_new(m.transpose(), false, true, f64::EPSILON, 0)?;
    let v_t = svd.v_t?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    Some(v_t.row(idx).iter().copied().collect())
}

fn normalize_null_vector(mut x: Vec<f64>) -> Vec<f64> {
    let pivot = x.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
    if pivot < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    let sum: f64 = x.iter().sum();
    let scale = if sum.abs() > 1e-12 { sum } else { pivot.abs().max(f64::MIN_POSITIVE) };
    x.iter_mut().for_each(|v| *v /= scale);
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Exponential decay rate, `-max Re(λ)`.
    pub rate: f64,
}

/// Spectral stability check of a linearized closed-loop matrix.
pub fn verify_exponential_stability<T: Scalar>(a_cl: &DMatrix<T>) -> Result<StabilityReport> {
    let ev = eigenvalues(&to_f64_matrix(a_cl))?;
    let max_re = ev.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
    let max_re = if ev.is_empty() { 0.0 } else { max_re };
    Ok(StabilityReport { stable: max_re < -1e-9, rate: -max_re })
}
