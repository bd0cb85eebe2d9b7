//! Small dense linear-algebra helpers shared across the crate.
//!
//! Everything here operates on `nalgebra` dynamic matrices. Problem sizes in
//! this crate are tiny (n <= 10), so exact SVD-based norms are cheap and meet
//! the 1e-10 relative-accuracy contract with a wide margin.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Smallest singular value.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Condition number in the induced-2 norm, `sigma_max / sigma_min`.
/// Returns infinity for singular matrices.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let smin = sigma_min(m);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        spectral_norm(m) / smin
    }
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Departure from symmetry, `||m - m^T||`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    spectral_norm(&(m - m.transpose()))
}

/// Whether `m` is symmetric (to `sym_tol`) and admits a Cholesky factorization.
pub fn is_spd(m: &DMatrix<f64>, sym_tol: f64) -> bool {
    m.is_square() && asymmetry(m) <= sym_tol && m.clone().cholesky().is_some()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_eig_min(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest real part among the (complex) eigenvalues of a general square matrix.
pub fn min_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min)
}

/// Solve `m x = rhs` by pivoted LU. `None` when the factorization breaks down.
pub fn lu_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().lu().solve(rhs)
}

/// Matrix of i.i.d. standard normal entries.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| standard_normal(rng))
}

/// Random matrix rescaled to a prescribed spectral norm.
pub fn random_matrix_with_norm(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    norm: f64,
) -> DMatrix<f64> {
    let m = random_matrix(rng, rows, cols);
    let s = spectral_norm(&m);
    if s == 0.0 {
        DMatrix::zeros(rows, cols)
    } else {
        m * (norm / s)
    }
}

/// Random symmetric positive-semidefinite matrix `X^T X`, rescaled so its
/// spectral norm is at most `max_norm`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, max_norm: f64) -> DMatrix<f64> {
    let x = random_matrix(rng, n, n);
    let g = x.transpose() * &x;
    let s = spectral_norm(&g);
    if s == 0.0 {
        DMatrix::zeros(n, n)
    } else {
        g * (max_norm * rng.random_range(0.1..=1.0) / s)
    }
}

/// Random vector of standard normal entries.
pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| standard_normal(rng))
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps us off rand_distr for one distribution.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
