//! Controller synthesis from an approximate model.
//!
//! Two controllers are built from the model `(Ahat_t, Bhat_t)`:
//!
//! * the misspecified-model (MM) controller, which is the optimal Riccati
//!   recursion run on the model as if it were the truth, and
//! * the closed-form iterative-learning controller, whose recursion mixes true
//!   and model matrices because its fixed point is defined by rollouts on the
//!   true system:
//!
//! ```text
//! K_t = -(R + Bhat_t^T P_{t+1} B_t)^{-1} Bhat_t^T P_{t+1} A_t
//! P_t = Q + Ahat_t^T P_{t+1} (I + B_t R^{-1} Bhat_t^T P_{t+1})^{-1} A_t
//! ```
//!
//! The mixed recursion produces a genuinely nonsymmetric `P_t` whenever the
//! model differs from the truth; it is stored raw, and the departure from
//! symmetry is surfaced in [`IlcDiagnostics`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lqr::{
    self, CostToGoSchedule, GainSchedule, QuadraticCost, TimeVaryingLinearSystem,
    ASSUMPTION3_EIG_TOL,
};

/// The model `(Ahat_t, Bhat_t)` handed to the controller, with declared error
/// bounds `eps_a >= max_t ||A_t - Ahat_t||`, `eps_b >= max_t ||B_t - Bhat_t||`.
///
/// Declared bounds are never trusted by the verification code; see
/// [`ApproximateModel::measured_eps`].
#[derive(Debug, Clone)]
pub struct ApproximateModel {
    a_hat: Vec<DMatrix<f64>>,
    b_hat: Vec<DMatrix<f64>>,
    pub eps_a: f64,
    pub eps_b: f64,
}

impl ApproximateModel {
    pub fn new(
        a_hat: Vec<DMatrix<f64>>,
        b_hat: Vec<DMatrix<f64>>,
        eps_a: f64,
        eps_b: f64,
    ) -> Result<Self> {
        if eps_a < 0.0 || eps_b < 0.0 {
            return Err(Error::InvalidInput(
                "error bounds must be nonnegative".into(),
            ));
        }
        // reuse the system validator for the shape rules
        TimeVaryingLinearSystem::new(a_hat.clone(), b_hat.clone())?;
        Ok(Self {
            a_hat,
            b_hat,
            eps_a,
            eps_b,
        })
    }

    /// The zero-error model: a copy of the true dynamics.
    pub fn exact(sys: &TimeVaryingLinearSystem) -> Self {
        let a_hat = (0..sys.horizon()).map(|t| sys.a(t).clone()).collect();
        let b_hat = (0..sys.horizon()).map(|t| sys.b(t).clone()).collect();
        Self {
            a_hat,
            b_hat,
            eps_a: 0.0,
            eps_b: 0.0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.a_hat.len()
    }

    pub fn a_hat(&self, t: usize) -> &DMatrix<f64> {
        &self.a_hat[t]
    }

    pub fn b_hat(&self, t: usize) -> &DMatrix<f64> {
        &self.b_hat[t]
    }

    /// View the model itself as a dynamical system (used for rollouts on the
    /// model and for running the optimal recursion on the model).
    pub fn as_system(&self) -> TimeVaryingLinearSystem {
        TimeVaryingLinearSystem::new(self.a_hat.clone(), self.b_hat.clone())
            .expect("validated at construction")
    }

    pub fn check_compatible(&self, sys: &TimeVaryingLinearSystem) -> Result<()> {
        if self.horizon() != sys.horizon()
            || self.a_hat[0].nrows() != sys.state_dim()
            || self.b_hat[0].ncols() != sys.control_dim()
        {
            return Err(Error::InvalidInput(
                "approximate model shapes do not match the system".into(),
            ));
        }
        Ok(())
    }

    /// Actual modeling errors `(max_t ||A_t - Ahat_t||, max_t ||B_t - Bhat_t||)`
    /// measured against a true system. Bound checks use these, not the declared
    /// constants, so stale declarations cannot weaken a verification run.
    pub fn measured_eps(&self, sys: &TimeVaryingLinearSystem) -> (f64, f64) {
        let mut eps_a = 0.0f64;
        let mut eps_b = 0.0f64;
        for t in 0..self.horizon() {
            eps_a = eps_a.max(linalg::spectral_norm(&(sys.a(t) - &self.a_hat[t])));
            eps_b = eps_b.max(linalg::spectral_norm(&(sys.b(t) - &self.b_hat[t])));
        }
        (eps_a, eps_b)
    }
}

/// Gain-by-gain and cost-to-go gaps between two controllers, plus the realized
/// cost difference on the true system.
#[derive(Debug, Clone)]
pub struct ControllerComparison {
    /// `||K*_t - Khat_t||` for `t = 0..H-1`.
    pub gain_gaps: Vec<f64>,
    /// `||P*_t - Phat_t||` for `t = 0..H`.
    pub p_gaps: Vec<f64>,
    /// `Vhat_0(x0) - V*_0(x0)`, from rollouts on the true system.
    pub cost_gap: f64,
}

/// Per-step health data for the nonsymmetric ILC cost-to-go recursion.
#[derive(Debug, Clone)]
pub struct IlcDiagnostics {
    /// `||P_t - P_t^T||` for `t = 0..H`.
    pub asymmetry: Vec<f64>,
    /// Smallest real part among the eigenvalues of `P_t`, `t = 0..H`.
    pub min_eig_real_parts: Vec<f64>,
}

impl IlcDiagnostics {
    /// Steps whose cost-to-go matrix has an eigenvalue with negative real part.
    pub fn indefinite_steps(&self, tol: f64) -> Vec<usize> {
        self.min_eig_real_parts
            .iter()
            .enumerate()
            .filter(|(_, &re)| re < -tol)
            .map(|(t, _)| t)
            .collect()
    }
}

/// Run the optimal recursion on the approximate model (certainty-equivalent
/// synthesis). Identical code path to [`lqr::solve_riccati_optimal`].
pub fn synthesize_mm(
    approx: &ApproximateModel,
    cost: &QuadraticCost,
) -> Result<(GainSchedule, CostToGoSchedule)> {
    lqr::solve_riccati_optimal(&approx.as_system(), cost)
}

/// Closed-form ILC controller: the fixed point of the iterative scheme in
/// [`crate::ilc`], computed directly from the mixed recursion.
///
/// Fails with [`Error::NonconvexSubproblem`] when assumption 3 does not hold
/// (some `B_t R^-1 Bhat_t^T` has an eigenvalue with negative real part), since
/// the underlying correction subproblem then has no minimizer.
pub fn synthesize_ilc_closed_form(
    sys: &TimeVaryingLinearSystem,
    approx: &ApproximateModel,
    cost: &QuadraticCost,
) -> Result<(GainSchedule, CostToGoSchedule, IlcDiagnostics)> {
    approx.check_compatible(sys)?;
    cost.check_pd_public()?;

    let h = sys.horizon();
    let n = sys.state_dim();
    let r_inv = cost
        .r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("R must be positive definite".into()))?
        .inverse();

    for t in 0..h {
        let m = sys.b(t) * &r_inv * approx.b_hat(t).transpose();
        let min_re = linalg::min_real_eigenvalue(&m);
        if min_re < ASSUMPTION3_EIG_TOL {
            return Err(Error::NonconvexSubproblem(format!(
                "B_{t} R^-1 Bhat_{t}^T has eigenvalue with real part {min_re:.3e}"
            )));
        }
    }

    let mut p = vec![DMatrix::zeros(0, 0); h + 1];
    let mut k = vec![DMatrix::zeros(0, 0); h];
    p[h] = cost.q_f.clone();

    for t in (0..h).rev() {
        let (a, b) = (sys.a(t), sys.b(t));
        let (a_hat, b_hat) = (approx.a_hat(t), approx.b_hat(t));
        let p_next = &p[t + 1];

        // K_t = -(R + Bhat^T P B)^{-1} Bhat^T P A; the normal matrix is
        // nonsymmetric, so this is a pivoted LU solve rather than Cholesky.
        let normal = &cost.r + b_hat.transpose() * p_next * b;
        let rhs = b_hat.transpose() * p_next * a;
        k[t] = -linalg::lu_solve(&normal, &rhs).ok_or_else(|| {
            Error::SynthesisFailure(format!("singular R + Bhat^T P B at step {t}"))
        })?;

        // P_t = Q + Ahat^T P (I + B R^{-1} Bhat^T P)^{-1} A, stored unsymmetrized.
        let m = DMatrix::identity(n, n) + b * &r_inv * b_hat.transpose() * p_next;
        let x = linalg::lu_solve(&m, a).ok_or_else(|| {
            Error::SynthesisFailure(format!("singular I + B R^-1 Bhat^T P at step {t}"))
        })?;
        p[t] = &cost.q + a_hat.transpose() * p_next * x;
    }

    let diagnostics = IlcDiagnostics {
        asymmetry: p.iter().map(linalg::asymmetry).collect(),
        min_eig_real_parts: p.iter().map(linalg::min_real_eigenvalue).collect(),
    };

    Ok((GainSchedule { k }, CostToGoSchedule { p }, diagnostics))
}

/// Measure how far a synthesized controller sits from the optimal one, with the
/// cost gap taken from rollouts on the true system.
pub fn compare_controllers(
    sys: &TimeVaryingLinearSystem,
    cost: &QuadraticCost,
    x0: &DVector<f64>,
    k_star: &GainSchedule,
    p_star: &CostToGoSchedule,
    k_hat: &GainSchedule,
    p_hat: &CostToGoSchedule,
) -> Result<ControllerComparison> {
    let gain_gaps = (0..sys.horizon())
        .map(|t| linalg::spectral_norm(&(&k_star.k[t] - &k_hat.k[t])))
        .collect();
    let p_gaps = (0..=sys.horizon())
        .map(|t| linalg::spectral_norm(&(&p_star.p[t] - &p_hat.p[t])))
        .collect();
    let opt = lqr::rollout_linear(sys, cost, k_star, x0)?;
    let hat = lqr::rollout_linear(sys, cost, k_hat, x0)?;
    Ok(ControllerComparison {
        gain_gaps,
        p_gaps,
        cost_gap: hat.cost - opt.cost,
    })
}

impl QuadraticCost {
    pub(crate) fn check_pd_public(&self) -> Result<()> {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr::example_system;
    use crate::oracle;
    use approx::assert_relative_eq;

    /// The section-5.1 perturbation: `Ahat = A + eps I`, `Bhat = B + eps e1`.
    pub fn example_perturbation(sys: &TimeVaryingLinearSystem, eps: f64) -> ApproximateModel {
        crate::sweep::perturbed_example_model(sys, eps)
    }

    #[test]
    fn exact_model_reproduces_optimal_controller() {
        let (sys, cost) = example_system(10);
        let (k_star, p_star) = lqr::solve_riccati_optimal(&sys, &cost).unwrap();
        let approx = ApproximateModel::exact(&sys);

        let (k_ce, p_ce) = synthesize_mm(&approx, &cost).unwrap();
        let (k_ilc, p_ilc, diag) = synthesize_ilc_closed_form(&sys, &approx, &cost).unwrap();
        for t in 0..10 {
            assert!(linalg::spectral_norm(&(&k_star.k[t] - &k_ce.k[t])) <= 1e-12);
            assert!(linalg::spectral_norm(&(&k_star.k[t] - &k_ilc.k[t])) <= 1e-12);
            assert!(linalg::spectral_norm(&(&p_star.p[t] - &p_ce.p[t])) <= 1e-12);
            assert!(linalg::spectral_norm(&(&p_star.p[t] - &p_ilc.p[t])) <= 1e-11);
        }
        // with a zero-error model the ILC recursion is the symmetric one
        assert!(diag.asymmetry.iter().all(|&a| a <= 1e-10));
    }

    #[test]
    fn scalar_uncontrollable_model_recursions() {
        // bhat = 0: K = 0 and the cost-to-go recursions collapse to
        //   MM:  p_t = q + ahat^2 p_{t+1}
        //   ILC: p_t = q + a ahat p_{t+1}
        let (a, a_hat, q, h) = (0.9, 0.8, 1.0, 6);
        let sys = TimeVaryingLinearSystem::time_invariant(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 0.7),
            h,
        )
        .unwrap();
        let cost = QuadraticCost::identity(1, 1);
        let approx = ApproximateModel::new(
            vec![DMatrix::from_element(1, 1, a_hat); h],
            vec![DMatrix::from_element(1, 1, 0.0); h],
            (a - a_hat).abs(),
            0.7,
        )
        .unwrap();

        let (k_ce, p_ce) = synthesize_mm(&approx, &cost).unwrap();
        let (k_ilc, p_ilc, _) = synthesize_ilc_closed_form(&sys, &approx, &cost).unwrap();

        let mut pce = q;
        let mut pilc = q;
        for t in (0..h).rev() {
            assert!(k_ce.k[t][(0, 0)].abs() <= 1e-14);
            assert!(k_ilc.k[t][(0, 0)].abs() <= 1e-14);
            assert_relative_eq!(
                p_ce.p[t][(0, 0)],
                q + a_hat * a_hat * pce,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                p_ilc.p[t][(0, 0)],
                q + a * a_hat * pilc,
                max_relative = 1e-12
            );
            pce = q + a_hat * a_hat * pce;
            pilc = q + a * a_hat * pilc;
        }
    }

    #[test]
    fn mm_matches_value_iteration_on_perturbed_model() {
        let (sys, cost) = example_system(10);
        let approx = example_perturbation(&sys, 0.01);
        let (k_ce, p_ce) = synthesize_mm(&approx, &cost).unwrap();
        let (k_ref, p_ref) = oracle::value_iteration_gains(&approx.as_system(), &cost);
        for t in 0..10 {
            assert!(linalg::spectral_norm(&(&k_ce.k[t] - &k_ref.k[t])) <= 1e-10);
            assert!(linalg::spectral_norm(&(&p_ce.p[t] - &p_ref.p[t])) <= 1e-9);
        }
    }

    #[test]
    fn assumption3_violation_is_refused() {
        // Bhat = -B makes B R^-1 Bhat^T negative definite.
        let (sys, cost) = example_system(4);
        let a_hat = (0..4).map(|t| sys.a(t).clone()).collect();
        let b_hat = (0..4).map(|t| -sys.b(t)).collect();
        let approx = ApproximateModel::new(a_hat, b_hat, 0.0, 7.0).unwrap();
        let err = synthesize_ilc_closed_form(&sys, &approx, &cost).unwrap_err();
        assert!(matches!(err, Error::NonconvexSubproblem(_)));
    }

    #[test]
    fn comparison_of_identical_controllers_is_zero() {
        let (sys, cost) = example_system(10);
        let (k, p) = lqr::solve_riccati_optimal(&sys, &cost).unwrap();
        let x0 = DVector::from_vec(vec![0.1, 0.1]);
        let cmp = compare_controllers(&sys, &cost, &x0, &k, &p, &k, &p).unwrap();
        assert!(cmp.gain_gaps.iter().all(|&g| g == 0.0));
        assert!(cmp.p_gaps.iter().all(|&g| g == 0.0));
        assert_eq!(cmp.cost_gap, 0.0);
    }

    #[test]
    fn ilc_beats_mm_on_example_system() {
        let (sys, cost) = example_system(10);
        let (k_star, p_star) = lqr::solve_riccati_optimal(&sys, &cost).unwrap();
        let x0 = DVector::from_vec(vec![0.1, 0.1]);
        let approx = example_perturbation(&sys, 0.1);
        let (k_ce, p_ce) = synthesize_mm(&approx, &cost).unwrap();
        let (k_ilc, p_ilc, _) = synthesize_ilc_closed_form(&sys, &approx, &cost).unwrap();
        let mm = compare_controllers(&sys, &cost, &x0, &k_star, &p_star, &k_ce, &p_ce).unwrap();
        let ilc = compare_controllers(&sys, &cost, &x0, &k_star, &p_star, &k_ilc, &p_ilc).unwrap();
        assert!(mm.cost_gap >= -1e-9);
        assert!(ilc.cost_gap >= -1e-9);
        assert!(ilc.cost_gap <= mm.cost_gap);
    }

    #[test]
    fn cost_gap_scales_quadratically_in_gain_perturbation() {
        let (sys, cost) = example_system(10);
        let (k_star, p_star) = lqr::solve_riccati_optimal(&sys, &cost).unwrap();
        let x0 = DVector::from_vec(vec![0.1, 0.1]);
        let dir = DMatrix::from_row_slice(1, 2, &[0.6, -0.8]); // unit spectral norm
        let mut gaps = Vec::new();
        let mags = [1e-2, 1e-3, 1e-4];
        for &mag in &mags {
            let k_hat = GainSchedule {
                k: k_star.k.iter().map(|k| k + &dir * mag).collect(),
            };
            let cmp =
                compare_controllers(&sys, &cost, &x0, &k_star, &p_star, &k_hat, &p_star).unwrap();
            assert!(cmp.cost_gap >= -1e-9);
            gaps.push(cmp.cost_gap);
        }
        // least-squares slope of log gap against log magnitude
        let xs: Vec<f64> = mags.iter().map(|m| m.ln()).collect();
        let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
        let xm = xs.iter().sum::<f64>() / 3.0;
        let ym = ys.iter().sum::<f64>() / 3.0;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        assert!(
            (1.9..=2.1).contains(&slope),
            "expected quadratic scaling, slope = {slope}"
        );
    }
}
