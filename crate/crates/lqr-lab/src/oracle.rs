//! Independent reference computations used to cross-check the main code paths.
//!
//! Everything in this module deliberately takes a different algebraic route
//! (and where possible a different factorization) from the implementation it
//! verifies, so that a shared bug cannot hide:
//!
//! * [`value_iteration_gains`] runs dynamic programming with the Schur-
//!   complement form of the Riccati update and QR solves, against the
//!   inversion-lemma form and LU/Cholesky used by [`crate::lqr`].
//! * [`kkt_delta_solution`] solves the correction subproblem as one dense
//!   stacked KKT system, against the backward recursion in [`crate::ilc`].
//! * [`naive_product_norms`] forms closed-loop products by explicit repeated
//!   multiplication and measures them with power iteration instead of SVD.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lqr::{
    CostToGoSchedule, GainSchedule, QuadraticCost, TimeVaryingLinearSystem, Trajectory,
};
use crate::mismatch::ApproximateModel;

/// Brute-force quadratic value iteration for the finite-horizon problem.
///
/// Uses `P_t = Q + A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A` with QR
/// solves; no inversion lemma, no Cholesky.
pub fn value_iteration_gains(
    sys: &TimeVaryingLinearSystem,
    cost: &QuadraticCost,
) -> (GainSchedule, CostToGoSchedule) {
    let h = sys.horizon();
    let mut p = vec![DMatrix::zeros(0, 0); h + 1];
    let mut k = vec![DMatrix::zeros(0, 0); h];
    p[h] = cost.q_f.clone();
    for t in (0..h).rev() {
        let (a, b) = (sys.a(t), sys.b(t));
        let p_next = &p[t + 1];
        let normal = &cost.r + b.transpose() * p_next * b;
        let rhs = b.transpose() * p_next * a;
        let k_t = -normal
            .clone()
            .qr()
            .solve(&rhs)
            .expect("R PD makes the normal matrix invertible");
        let p_t = &cost.q + a.transpose() * p_next * a + a.transpose() * p_next * b * &k_t;
        p[t] = (&p_t + p_t.transpose()) * 0.5;
        k[t] = k_t;
    }
    (GainSchedule { k }, CostToGoSchedule { p })
}

/// Solve the correction subproblem by assembling and factoring the full KKT
/// system over stacked `(dx_{1..H}, du_{0..H-1}, lambda_{1..H})`.
///
/// Stationarity and constraint rows:
///
/// ```text
/// 2 Q   dx_t + lambda_t - Ahat_t^T lambda_{t+1} = -2 Q   x_t   (1 <= t < H)
/// 2 Q_f dx_H + lambda_H                         = -2 Q_f x_H
/// 2 R   du_t - Bhat_t^T lambda_{t+1}            = -2 R   u_t
/// dx_{t+1} - Ahat_t dx_t - Bhat_t du_t          = 0,   dx_0 = 0
/// ```
#[allow(clippy::type_complexity)]
pub fn kkt_delta_solution(
    approx: &ApproximateModel,
    cost: &QuadraticCost,
    trajectory: &Trajectory,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    let h = approx.horizon();
    let n = approx.a_hat(0).nrows();
    let d = approx.b_hat(0).ncols();
    let dim = 2 * n * h + d * h;

    let x_off = |t: usize| (t - 1) * n; // dx_t, t = 1..H
    let u_off = |t: usize| n * h + t * d; // du_t, t = 0..H-1
    let l_off = |t: usize| n * h + d * h + (t - 1) * n; // lambda_t, t = 1..H

    let mut m = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);

    let put = |mat: &mut DMatrix<f64>, r0: usize, c0: usize, block: &DMatrix<f64>| {
        for i in 0..block.nrows() {
            for j in 0..block.ncols() {
                mat[(r0 + i, c0 + j)] += block[(i, j)];
            }
        }
    };

    // stationarity in dx_t
    for t in 1..=h {
        let row = x_off(t);
        let (w, xref) = if t == h {
            (&cost.q_f, &trajectory.x[h])
        } else {
            (&cost.q, &trajectory.x[t])
        };
        put(&mut m, row, x_off(t), &(w * 2.0));
        put(&mut m, row, l_off(t), &DMatrix::identity(n, n));
        if t < h {
            put(&mut m, row, l_off(t + 1), &(-approx.a_hat(t).transpose()));
        }
        let b = -2.0 * (w * xref);
        for i in 0..n {
            rhs[row + i] += b[i];
        }
    }

    // stationarity in du_t
    for t in 0..h {
        let row = u_off(t);
        put(&mut m, row, u_off(t), &(&cost.r * 2.0));
        put(&mut m, row, l_off(t + 1), &(-approx.b_hat(t).transpose()));
        let b = -2.0 * (&cost.r * &trajectory.u[t]);
        for i in 0..d {
            rhs[row + i] += b[i];
        }
    }

    // dynamics constraints, written in the lambda rows
    for t in 0..h {
        let row = l_off(t + 1);
        put(&mut m, row, x_off(t + 1), &DMatrix::identity(n, n));
        if t > 0 {
            put(&mut m, row, x_off(t), &(-approx.a_hat(t)));
        }
        put(&mut m, row, u_off(t), &(-approx.b_hat(t)));
    }

    let sol = m
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("singular KKT system".into()))?;

    let mut dx = vec![DVector::zeros(n)];
    for t in 1..=h {
        dx.push(sol.rows(x_off(t), n).into_owned());
    }
    let du = (0..h).map(|t| sol.rows(u_off(t), d).into_owned()).collect();
    Ok((dx, du))
}

/// Closed-loop product norms by naive ordered multiplication: every `L_t` is
/// multiplied out from scratch instead of extending a running product. The
/// norm itself is the same exact SVD as the main path; the independence being
/// tested is the product route.
pub fn naive_product_norms(sys: &TimeVaryingLinearSystem, gains: &GainSchedule) -> Vec<f64> {
    let h = sys.horizon();
    let mut factors = Vec::with_capacity(h);
    for t in 0..h {
        factors.push(sys.a(t) + sys.b(t) * &gains.k[t]);
    }
    let mut norms = Vec::with_capacity(h);
    for t in 0..h {
        let mut product = factors[0].clone();
        for factor in factors.iter().take(t + 1).skip(1) {
            product = factor * product;
        }
        norms.push(crate::linalg::spectral_norm(&product));
    }
    norms
}

/// Spectral norm via power iteration on `M^T M`: an SVD-free route used to
/// cross-check the norm computation itself.
///
/// Runs at least `min_iters` iterations and keeps going (up to a fixed cap)
/// until the Rayleigh quotient stalls; convergence is geometric in the gap
/// between the top two singular values, so near-degenerate spectra settle for
/// about ten significant digits rather than machine precision.
pub fn power_iteration_norm(m: &DMatrix<f64>, min_iters: usize) -> f64 {
    let gram = m.transpose() * m;
    let n = gram.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    // deterministic tie-breaking start; perturb if it lands in a null space
    if (&gram * &v).norm() == 0.0 {
        v = DVector::from_fn(n, |i, _| 1.0 + i as f64);
        v /= v.norm();
    }
    let mut lambda = 0.0f64;
    for iter in 0..min_iters.max(20_000) {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if iter >= min_iters && (norm - lambda).abs() <= 1e-15 * norm.max(1.0) {
            lambda = norm;
            break;
        }
        lambda = norm;
    }
    lambda.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::lqr::example_system;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn power_iteration_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = linalg::random_matrix(&mut rng, 4, 4);
            let a = power_iteration_norm(&m, 200);
            let b = linalg::spectral_norm(&m);
            assert!((a - b).abs() <= 1e-10 * (1.0 + b), "{a} vs {b}");
        }
    }

    #[test]
    fn naive_products_match_running_products() {
        let (sys, cost) = example_system(10);
        let (k, _) = crate::lqr::solve_riccati_optimal(&sys, &cost).unwrap();
        let fast = crate::lqr::closed_loop_products(&sys, &k);
        let slow = naive_product_norms(&sys, &k);
        for (a, b) in fast.iter().zip(&slow) {
            assert!(
                (a - b).abs() <= 1e-12 * (1.0 + b.abs().max(1.0)),
                "{a} vs {b}"
            );
        }
    }
}
