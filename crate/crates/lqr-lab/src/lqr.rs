//! Exact finite-horizon LQR machinery.
//!
//! The optimal controller for the time-varying system `x_{t+1} = A_t x_t + B_t u_t`
//! under the quadratic cost
//!
//! ```text
//! V_0(x_0) = sum_{t=0}^{H-1} x_t^T Q x_t + u_t^T R u_t  +  x_H^T Q_f x_H
//! ```
//!
//! is the time-varying state feedback `u_t = K_t x_t` obtained from the backward
//! recursion
//!
//! ```text
//! K_t = -(R + B_t^T P_{t+1} B_t)^{-1} B_t^T P_{t+1} A_t
//! P_t = Q + A_t^T P_{t+1} (I + B_t R^{-1} B_t^T P_{t+1})^{-1} A_t,   P_H = Q_f
//! ```
//!
//! The cost-to-go update is kept in this inversion-lemma form on purpose: the
//! perturbation bounds verified in [`crate::bounds`] are stated against exactly
//! this expression, so both sides of every comparison go through the same
//! algebra. `P_t` is symmetrized after each step to control rounding drift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mismatch::ApproximateModel;

/// Discrete linear dynamics `x_{t+1} = A_t x_t + B_t u_t` over a fixed horizon.
#[derive(Debug, Clone)]
pub struct TimeVaryingLinearSystem {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    n: usize,
    d: usize,
}

impl TimeVaryingLinearSystem {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DMatrix<f64>>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "need matching nonempty A/B sequences, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        let n = a[0].nrows();
        let d = b[0].ncols();
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput("zero-dimensional system".into()));
        }
        for (t, at) in a.iter().enumerate() {
            if at.nrows() != n || at.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "A_{t} is {}x{}, expected {n}x{n}",
                    at.nrows(),
                    at.ncols()
                )));
            }
        }
        for (t, bt) in b.iter().enumerate() {
            if bt.nrows() != n || bt.ncols() != d {
                return Err(Error::InvalidInput(format!(
                    "B_{t} is {}x{}, expected {n}x{d}",
                    bt.nrows(),
                    bt.ncols()
                )));
            }
        }
        Ok(Self { a, b, n, d })
    }

    /// Constant dynamics repeated over `horizon` steps.
    pub fn time_invariant(a: DMatrix<f64>, b: DMatrix<f64>, horizon: usize) -> Result<Self> {
        Self::new(vec![a; horizon], vec![b; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.d
    }

    pub fn a(&self, t: usize) -> &DMatrix<f64> {
        &self.a[t]
    }

    pub fn b(&self, t: usize) -> &DMatrix<f64> {
        &self.b[t]
    }
}

/// Cost matrices of the quadratic objective. Construction checks shapes and
/// symmetry only; definiteness is the synthesis routines' precondition and is
/// reported by [`check_assumptions`].
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub q: DMatrix<f64>,
    pub q_f: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl QuadraticCost {
    pub fn new(q: DMatrix<f64>, q_f: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("Q", &q), ("Q_f", &q_f), ("R", &r)] {
            if !m.is_square() {
                return Err(Error::InvalidInput(format!("{name} must be square")));
            }
            if linalg::asymmetry(m) > 1e-12 * (1.0 + linalg::spectral_norm(m)) {
                return Err(Error::InvalidInput(format!("{name} must be symmetric")));
            }
        }
        if q.nrows() != q_f.nrows() {
            return Err(Error::InvalidInput("Q and Q_f dimensions differ".into()));
        }
        Ok(Self { q, q_f, r })
    }

    /// `Q = Q_f = I_n`, `R = I_d`.
    pub fn identity(n: usize, d: usize) -> Self {
        Self {
            q: DMatrix::identity(n, n),
            q_f: DMatrix::identity(n, n),
            r: DMatrix::identity(d, d),
        }
    }

    fn check_pd(&self) -> Result<()> {
        for (name, m) in [("Q", &self.q), ("Q_f", &self.q_f), ("R", &self.r)] {
            if m.clone().cholesky().is_none() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive definite"
                )));
            }
        }
        Ok(())
    }
}

/// Feedback gains `K_t`, `t = 0..H-1`.
#[derive(Debug, Clone)]
pub struct GainSchedule {
    pub k: Vec<DMatrix<f64>>,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.k.len()
    }
}

/// Cost-to-go matrices `P_t`, `t = 0..H` with `P_H = Q_f`.
#[derive(Debug, Clone)]
pub struct CostToGoSchedule {
    pub p: Vec<DMatrix<f64>>,
}

impl CostToGoSchedule {
    pub fn horizon(&self) -> usize {
        self.p.len() - 1
    }
}

/// A realized state/control sequence together with its objective value.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub cost: f64,
}

/// Closed-loop contraction data for a gain schedule: `per_step_norms[t] =
/// ||A_t + B_t K_t||` and `delta = 1 - max_t per_step_norms[t]`.
#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub delta: f64,
    pub per_step_norms: Vec<f64>,
}

impl StabilityCertificate {
    pub fn new(sys: &TimeVaryingLinearSystem, gains: &GainSchedule) -> Self {
        let per_step_norms: Vec<f64> = (0..sys.horizon())
            .map(|t| linalg::spectral_norm(&(sys.a(t) + sys.b(t) * &gains.k[t])))
            .collect();
        let max = per_step_norms.iter().copied().fold(0.0, f64::max);
        Self {
            delta: 1.0 - max,
            per_step_norms,
        }
    }

    /// True when every closed-loop factor is a strict contraction.
    pub fn is_valid(&self) -> bool {
        self.delta > 0.0 && self.delta <= 1.0
    }
}

/// Outcome of checking the three standing assumptions for a problem instance.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub q_pd: bool,
    pub q_f_pd: bool,
    pub r_pd: bool,
    pub r_sigma_min: f64,
    pub assumption1_ok: bool,

    pub per_step_norms: Vec<f64>,
    pub delta: f64,
    pub assumption2_ok: bool,

    /// Per step, smallest real part among the eigenvalues of `B_t R^-1 Bhat_t^T`.
    pub min_real_parts: Vec<f64>,
    pub assumption3_ok: bool,
    /// `min_t sigma_min(B_t^T R B_t) / ||B_t^T R||`, the sufficient bound on
    /// `eps_B` for assumption 3.
    pub sufficient_eps_b: f64,
}

/// Eigenvalues of `B R^-1 Bhat^T` with real part down to this level still count
/// as nonnegative; the matrix is nonsymmetric and the exact boundary case
/// arises for a zero-error model.
pub const ASSUMPTION3_EIG_TOL: f64 = -1e-10;

/// Solve the optimal finite-horizon Riccati recursion.
///
/// Returns the gain schedule and the cost-to-go schedule with `P_H = Q_f`.
/// Every returned `P_t` is symmetrized.
pub fn solve_riccati_optimal(
    sys: &TimeVaryingLinearSystem,
    cost: &QuadraticCost,
) -> Result<(GainSchedule, CostToGoSchedule)> {
    check_shapes(sys, cost)?;
    cost.check_pd()?;

    let h = sys.horizon();
    let n = sys.state_dim();
    let r_inv = cost
        .r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Internal("R lost positive definiteness".into()))?
        .inverse();

    let mut p = vec![DMatrix::zeros(0, 0); h + 1];
    let mut k = vec![DMatrix::zeros(0, 0); h];
    p[h] = linalg::symmetrize(&cost.q_f);

    for t in (0..h).rev() {
        let (a, b) = (sys.a(t), sys.b(t));
        let p_next = &p[t + 1];

        // K_t = -(R + B^T P B)^{-1} B^T P A
        let normal = &cost.r + b.transpose() * p_next * b;
        let chol = linalg::symmetrize(&normal)
            .cholesky()
            .ok_or_else(|| Error::Internal("singular normal matrix with PD R".into()))?;
        k[t] = -chol.solve(&(b.transpose() * p_next * a));

        // P_t = Q + A^T P (I + B R^{-1} B^T P)^{-1} A
        let m = DMatrix::identity(n, n) + b * &r_inv * b.transpose() * p_next;
        let x = linalg::lu_solve(&m, a)
            .ok_or_else(|| Error::Internal("singular Riccati update factor".into()))?;
        p[t] = linalg::symmetrize(&(&cost.q + a.transpose() * p_next * x));
    }

    Ok((GainSchedule { k }, CostToGoSchedule { p }))
}

/// Roll out the state feedback `u_t = K_t x_t` on `sys` and accumulate the cost.
pub fn rollout_linear(
    sys: &TimeVaryingLinearSystem,
    cost: &QuadraticCost,
    gains: &GainSchedule,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    check_shapes(sys, cost)?;
    if gains.k.len() != sys.horizon() {
        return Err(Error::InvalidInput(
            "gain schedule length != horizon".into(),
        ));
    }
    let controls: Vec<DVector<f64>> = Vec::with_capacity(sys.horizon());
    let mut traj = Trajectory {
        x: vec![x0.clone()],
        u: controls,
        cost: 0.0,
    };
    for t in 0..sys.horizon() {
        let u = &gains.k[t] * &traj.x[t];
        let x_next = sys.a(t) * &traj.x[t] + sys.b(t) * &u;
        traj.cost += quad_form(&cost.q, &traj.x[t]) + quad_form(&cost.r, &u);
        traj.u.push(u);
        traj.x.push(x_next);
    }
    traj.cost += quad_form(&cost.q_f, &traj.x[sys.horizon()]);
    Ok(traj)
}

/// Roll out a fixed open-loop control sequence on `sys`.
pub fn rollout_controls(
    sys: &TimeVaryingLinearSystem,
    cost: &QuadraticCost,
    controls: &[DVector<f64>],
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    check_shapes(sys, cost)?;
    if controls.len() != sys.horizon() {
        return Err(Error::InvalidInput(
            "control sequence length != horizon".into(),
        ));
    }
    let mut traj = Trajectory {
        x: vec![x0.clone()],
        u: controls.to_vec(),
        cost: 0.0,
    };
    for (t, u) in controls.iter().enumerate() {
        let x_next = sys.a(t) * &traj.x[t] + sys.b(t) * u;
        traj.cost += quad_form(&cost.q, &traj.x[t]) + quad_form(&cost.r, u);
        traj.x.push(x_next);
    }
    traj.cost += quad_form(&cost.q_f, &traj.x[sys.horizon()]);
    Ok(traj)
}

/// Evaluate the objective on an arbitrary state/control pair.
pub fn evaluate_cost(cost: &QuadraticCost, x: &[DVector<f64>], u: &[DVector<f64>]) -> f64 {
    let h = u.len();
    let mut total = 0.0;
    for t in 0..h {
        total += quad_form(&cost.q, &x[t]) + quad_form(&cost.r, &u[t]);
    }
    total + quad_form(&cost.q_f, &x[h])
}

/// Norms of the ordered closed-loop products `L_t(K) = M_t M_{t-1} ... M_0`
/// with `M_i = A_i + B_i K_i`, for `t = 0..H-1`.
pub fn closed_loop_products(sys: &TimeVaryingLinearSystem, gains: &GainSchedule) -> Vec<f64> {
    let mut norms = Vec::with_capacity(sys.horizon());
    let mut product = DMatrix::identity(sys.state_dim(), sys.state_dim());
    for t in 0..sys.horizon() {
        let m_t = sys.a(t) + sys.b(t) * &gains.k[t];
        product = m_t * product;
        norms.push(linalg::spectral_norm(&product));
    }
    norms
}

/// Check assumptions 1-3 for a problem instance; violations are reported, not
/// raised, so callers can decide which claims still apply.
pub fn check_assumptions(
    sys: &TimeVaryingLinearSystem,
    cost: &QuadraticCost,
    k_star: &GainSchedule,
    approx: &ApproximateModel,
) -> Result<AssumptionReport> {
    check_shapes(sys, cost)?;
    approx.check_compatible(sys)?;

    let q_pd = linalg::is_spd(&cost.q, 1e-10);
    let q_f_pd = linalg::is_spd(&cost.q_f, 1e-10);
    let r_pd = linalg::is_spd(&cost.r, 1e-10);
    let r_sigma_min = linalg::sigma_min(&cost.r);
    let assumption1_ok = q_pd && q_f_pd && r_pd && r_sigma_min >= 1.0;

    let cert = StabilityCertificate::new(sys, k_star);
    let assumption2_ok = cert.is_valid();

    let r_inv = match cost.r.clone().cholesky() {
        Some(c) => c.inverse(),
        None => cost
            .r
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("R is singular".into()))?,
    };
    let mut min_real_parts = Vec::with_capacity(sys.horizon());
    let mut sufficient_eps_b = f64::INFINITY;
    for t in 0..sys.horizon() {
        let b = sys.b(t);
        let m = b * &r_inv * approx.b_hat(t).transpose();
        min_real_parts.push(linalg::min_real_eigenvalue(&m));
        // d x d Gram form of the printed threshold; reduces to
        // sigma_min(B^T R B) / ||B^T R|| in the single-input case
        let gram = b.transpose() * b * &cost.r;
        let denom = linalg::spectral_norm(&(b * &cost.r));
        if denom > 0.0 {
            sufficient_eps_b = sufficient_eps_b.min(linalg::sigma_min(&gram) / denom);
        }
    }
    let assumption3_ok = min_real_parts.iter().all(|&re| re >= ASSUMPTION3_EIG_TOL);

    Ok(AssumptionReport {
        q_pd,
        q_f_pd,
        r_pd,
        r_sigma_min,
        assumption1_ok,
        per_step_norms: cert.per_step_norms,
        delta: cert.delta,
        assumption2_ok,
        min_real_parts,
        assumption3_ok,
        sufficient_eps_b,
    })
}

pub(crate) fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}

fn check_shapes(sys: &TimeVaryingLinearSystem, cost: &QuadraticCost) -> Result<()> {
    if cost.q.nrows() != sys.state_dim() || cost.r.nrows() != sys.control_dim() {
        return Err(Error::InvalidInput(format!(
            "cost shapes ({}, {}) do not match system dims ({}, {})",
            cost.q.nrows(),
            cost.r.nrows(),
            sys.state_dim(),
            sys.control_dim()
        )));
    }
    Ok(())
}

/// The two-state single-input instance used throughout the linear experiments:
/// `A = [[1, 1], [-3, 1]]`, `B = [1, 3]^T`, `Q = Q_f = I`, `R = 1`, `H = 10`.
pub fn example_system(horizon: usize) -> (TimeVaryingLinearSystem, QuadraticCost) {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -3.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
    let sys = TimeVaryingLinearSystem::time_invariant(a, b, horizon)
        .expect("static example shapes are valid");
    (sys, QuadraticCost::identity(2, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_relative_eq;

    fn scalar_system(a: f64, b: f64, h: usize) -> (TimeVaryingLinearSystem, QuadraticCost) {
        let sys = TimeVaryingLinearSystem::time_invariant(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            h,
        )
        .unwrap();
        (sys, QuadraticCost::identity(1, 1))
    }

    #[test]
    fn scalar_one_step_hand_values() {
        // a=b=q=r=q_f=1, H=1: K_0 = -1/2, P_0 = 3/2, P_1 = 1
        let (sys, cost) = scalar_system(1.0, 1.0, 1);
        let (k, p) = solve_riccati_optimal(&sys, &cost).unwrap();
        assert_relative_eq!(k.k[0][(0, 0)], -0.5, max_relative = 1e-14);
        assert_relative_eq!(p.p[0][(0, 0)], 1.5, max_relative = 1e-14);
        assert_relative_eq!(p.p[1][(0, 0)], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn scalar_one_step_rollout_hand_values() {
        let (sys, cost) = scalar_system(1.0, 1.0, 1);
        let gains = GainSchedule {
            k: vec![DMatrix::from_element(1, 1, -0.5)],
        };
        let traj = rollout_linear(&sys, &cost, &gains, &DVector::from_element(1, 1.0)).unwrap();
        assert_relative_eq!(traj.x[1][0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(traj.u[0][0], -0.5, max_relative = 1e-14);
        assert_relative_eq!(traj.cost, 1.5, max_relative = 1e-14);
    }

    #[test]
    fn uncontrollable_limit_reduces_to_lyapunov_sum() {
        // B = 0: gains vanish and P_t = Q + A^T P_{t+1} A
        let h = 6;
        let a = DMatrix::from_row_slice(2, 2, &[0.4, 0.2, -0.1, 0.5]);
        let sys =
            TimeVaryingLinearSystem::time_invariant(a.clone(), DMatrix::zeros(2, 1), h).unwrap();
        let cost = QuadraticCost::identity(2, 1);
        let (k, p) = solve_riccati_optimal(&sys, &cost).unwrap();
        for t in 0..h {
            assert!(linalg::spectral_norm(&k.k[t]) <= 1e-14);
        }
        let mut expected = cost.q_f.clone();
        for t in (0..h).rev() {
            expected = &cost.q + a.transpose() * &expected * &a;
            assert!(linalg::spectral_norm(&(&p.p[t] - &expected)) <= 1e-12);
        }
    }

    #[test]
    fn example_system_matches_value_iteration_oracle() {
        let (sys, cost) = example_system(10);
        let (k, p) = solve_riccati_optimal(&sys, &cost).unwrap();
        let (k_ref, p_ref) = oracle::value_iteration_gains(&sys, &cost);
        for t in 0..10 {
            assert!(linalg::spectral_norm(&(&k.k[t] - &k_ref.k[t])) <= 1e-10);
            assert!(linalg::spectral_norm(&(&p.p[t] - &p_ref.p[t])) <= 1e-9);
        }
    }

    #[test]
    fn bellman_identity_on_example_system() {
        let (sys, cost) = example_system(10);
        let (k, p) = solve_riccati_optimal(&sys, &cost).unwrap();
        let x0 = DVector::from_vec(vec![0.1, 0.1]);
        let traj = rollout_linear(&sys, &cost, &k, &x0).unwrap();
        let expected = quad_form(&p.p[0], &x0);
        assert_relative_eq!(traj.cost, expected, max_relative = 1e-10);
    }

    #[test]
    fn zero_initial_state_rolls_out_to_zero_cost() {
        let (sys, cost) = example_system(10);
        let (k, _) = solve_riccati_optimal(&sys, &cost).unwrap();
        let traj = rollout_linear(&sys, &cost, &k, &DVector::zeros(2)).unwrap();
        assert_eq!(traj.cost, 0.0);
        assert!(traj.x.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn products_of_scaled_identity_closed_loop() {
        // A + BK = 0.5 I  =>  ||L_t|| = 0.5^{t+1}
        let h = 8;
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, 0.7]));
        let b = DMatrix::identity(2, 2) * 0.4;
        let sys = TimeVaryingLinearSystem::time_invariant(a, b, h).unwrap();
        let k = GainSchedule {
            k: vec![DMatrix::from_diagonal(&DVector::from_vec(vec![-0.5, -0.5])); h],
        };
        let norms = closed_loop_products(&sys, &k);
        for (t, norm) in norms.iter().enumerate() {
            assert_relative_eq!(*norm, 0.5_f64.powi(t as i32 + 1), max_relative = 1e-12);
        }
    }

    #[test]
    fn riccati_rejects_non_pd_cost() {
        let (sys, _) = example_system(4);
        let cost = QuadraticCost::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        assert!(matches!(
            solve_riccati_optimal(&sys, &cost),
            Err(crate::error::Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rollout_cost_matches_objective_evaluation() {
        let (sys, cost) = example_system(10);
        let (k, _) = solve_riccati_optimal(&sys, &cost).unwrap();
        let traj = rollout_linear(&sys, &cost, &k, &DVector::from_vec(vec![0.4, -0.2])).unwrap();
        let recomputed = evaluate_cost(&cost, &traj.x, &traj.u);
        assert_relative_eq!(traj.cost, recomputed, max_relative = 1e-10);
    }

    #[test]
    fn assumption_report_flags_degenerate_cost() {
        let (sys, _) = example_system(10);
        let cost_bad = QuadraticCost::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let cost_good = QuadraticCost::identity(2, 1);
        let (k, _) = solve_riccati_optimal(&sys, &cost_good).unwrap();
        let approx = ApproximateModel::exact(&sys);
        let report = check_assumptions(&sys, &cost_bad, &k, &approx).unwrap();
        assert!(!report.q_pd);
        assert!(!report.assumption1_ok);
    }

    #[test]
    fn assumption3_threshold_on_example_system() {
        // R = 1, B = [1, 3]^T: threshold = ||B||^2 / ||B|| = sqrt(10)
        let (sys, cost) = example_system(10);
        let (k, _) = solve_riccati_optimal(&sys, &cost).unwrap();
        let approx = ApproximateModel::exact(&sys);
        let report = check_assumptions(&sys, &cost, &k, &approx).unwrap();
        assert_relative_eq!(
            report.sufficient_eps_b,
            10.0f64.sqrt(),
            max_relative = 1e-12
        );
        // exact model: B R^-1 B^T is PSD
        assert!(report.assumption3_ok);
    }
}
