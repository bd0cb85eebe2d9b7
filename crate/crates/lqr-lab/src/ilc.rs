//! Iterative learning control: repeated true-system rollouts corrected by an
//! LQR subproblem solved on the approximate model.
//!
//! Each iteration rolls the current open-loop controls out on the true system,
//! then minimizes the exact cost change
//!
//! ```text
//! J(dx, du) = sum_t (2x_t + dx_t)^T Q dx_t + (2u_t + du_t)^T R du_t
//!           + (2x_H + dx_H)^T Q_f dx_H
//! ```
//!
//! subject to the model dynamics `dx_{t+1} = Ahat_t dx_t + Bhat_t du_t`,
//! `dx_0 = 0`, and steps `u <- u + alpha * du`.
//!
//! Because the expansion point is not a minimizer, the subproblem's value
//! function carries an affine term: `V_t(dx) = dx^T P_t dx + 2 p_t^T dx + c_t`.
//! Dropping `p_t` would not minimize `J`, and the dense KKT cross-check in the
//! test suite would catch it. At the fixed point the feedforward part of the
//! correction vanishes, which is exactly the closed-form controller of
//! [`crate::mismatch::synthesize_ilc_closed_form`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lqr::TimeVaryingLinearSystem;
use crate::lqr::{self, QuadraticCost, Trajectory};
use crate::mismatch::{self, ApproximateModel};

/// Step-size policy for the control update.
#[derive(Debug, Clone, Copy)]
pub enum StepSizeMode {
    /// `u <- u + alpha * du` with a constant `alpha` in `(0, 1]`.
    Fixed(f64),
    /// Start from `alpha = 1` and multiply by `shrink` until the true-system
    /// cost decreases, giving up after `max_halvings` attempts.
    Backtracking { shrink: f64, max_halvings: u32 },
}

/// Tuning for [`run_ilc`].
#[derive(Debug, Clone, Copy)]
pub struct IlcConfig {
    pub step: StepSizeMode,
    /// Convergence threshold on `||du||_inf`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for IlcConfig {
    fn default() -> Self {
        Self {
            step: StepSizeMode::Backtracking {
                shrink: 0.5,
                max_halvings: 20,
            },
            tol: 1e-8,
            max_iters: 500,
        }
    }
}

impl IlcConfig {
    fn validate(&self) -> Result<()> {
        match self.step {
            StepSizeMode::Fixed(a) if !(0.0..=1.0).contains(&a) || a == 0.0 => Err(
                Error::InvalidConfig(format!("fixed step size {a} outside (0, 1]")),
            ),
            StepSizeMode::Backtracking { shrink, .. } if !(0.0..1.0).contains(&shrink) => Err(
                Error::InvalidConfig(format!("shrink factor {shrink} outside (0, 1)")),
            ),
            _ if self.tol <= 0.0 => Err(Error::InvalidConfig("tol must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Solution of one correction subproblem.
#[derive(Debug, Clone)]
pub struct DeltaSolution {
    pub dx: Vec<DVector<f64>>,
    pub du: Vec<DVector<f64>>,
    /// Quadratic value coefficients `P_t` of the subproblem, `t = 0..H`.
    pub cost_to_go: Vec<DMatrix<f64>>,
    /// Affine value coefficients `p_t`, `t = 0..H`.
    pub affine: Vec<DVector<f64>>,
}

impl DeltaSolution {
    pub fn du_inf_norm(&self) -> f64 {
        self.du
            .iter()
            .flat_map(|u| u.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }
}

/// Mutable loop state of Algorithm-style iteration, kept for inspection.
#[derive(Debug, Clone)]
pub struct IlcState {
    pub u: Vec<DVector<f64>>,
    pub trajectory: Trajectory,
    pub iteration: usize,
    pub last_delta_norm: f64,
}

/// One line of the iteration log.
#[derive(Debug, Clone)]
pub struct IlcIterationRecord {
    pub iteration: usize,
    pub true_cost: f64,
    pub delta_u_inf: f64,
    pub alpha: f64,
    /// Set when backtracking exhausted its halvings and the step was taken
    /// anyway.
    pub accepted_with_warning: bool,
}

/// Result of a full ILC run.
#[derive(Debug, Clone)]
pub struct IlcRun {
    pub controls: Vec<DVector<f64>>,
    pub trajectory: Trajectory,
    pub log: Vec<IlcIterationRecord>,
    pub converged: bool,
    pub iterations: usize,
}

/// Solve the LQR correction subproblem around an observed trajectory by
/// backward dynamic programming with the affine value term.
///
/// Errors with [`Error::NonconvexSubproblem`] when some control Hessian
/// `R + Bhat^T P Bhat` is not positive definite.
pub fn lqr_delta_subproblem(
    approx: &ApproximateModel,
    cost: &QuadraticCost,
    trajectory: &Trajectory,
) -> Result<DeltaSolution> {
    let h = approx.horizon();
    if trajectory.u.len() != h || trajectory.x.len() != h + 1 {
        return Err(Error::InvalidInput(
            "trajectory length does not match model horizon".into(),
        ));
    }
    let n = approx.a_hat(0).nrows();

    let mut p = vec![DMatrix::zeros(0, 0); h + 1];
    let mut p_lin = vec![DVector::zeros(0); h + 1];
    let mut k_ff = vec![DVector::zeros(0); h];
    let mut k_fb = vec![DMatrix::zeros(0, 0); h];
    p[h] = cost.q_f.clone();
    p_lin[h] = &cost.q_f * &trajectory.x[h];

    for t in (0..h).rev() {
        let (a_hat, b_hat) = (approx.a_hat(t), approx.b_hat(t));
        let p_next = &p[t + 1];

        let hess = &cost.r + b_hat.transpose() * p_next * b_hat;
        let chol = linalg::symmetrize(&hess).cholesky().ok_or_else(|| {
            Error::NonconvexSubproblem(format!("control Hessian not PD at step {t}"))
        })?;

        let grad = &cost.r * &trajectory.u[t] + b_hat.transpose() * &p_lin[t + 1];
        let cross = a_hat.transpose() * p_next * b_hat; // n x d

        k_ff[t] = -chol.solve(&grad);
        k_fb[t] = -chol.solve(&(b_hat.transpose() * p_next * a_hat));

        // value recursion: P_t = Q + Ahat^T P Ahat - cross Hess^{-1} cross^T
        let p_t =
            &cost.q + a_hat.transpose() * p_next * a_hat - &cross * chol.solve(&cross.transpose());
        p[t] = linalg::symmetrize(&p_t);
        // p_t = Q x_t + Ahat^T p_{t+1} + cross * k_ff
        p_lin[t] =
            &cost.q * &trajectory.x[t] + a_hat.transpose() * &p_lin[t + 1] + &cross * &k_ff[t];
    }

    let mut dx = vec![DVector::zeros(n)];
    let mut du = Vec::with_capacity(h);
    for t in 0..h {
        let du_t = &k_ff[t] + &k_fb[t] * &dx[t];
        dx.push(approx.a_hat(t) * &dx[t] + approx.b_hat(t) * &du_t);
        du.push(du_t);
    }

    Ok(DeltaSolution {
        dx,
        du,
        cost_to_go: p,
        affine: p_lin,
    })
}

/// Run the iterative scheme: rollout on the true system, correct on the model.
///
/// The initial control sequence comes from rolling the certainty-equivalent
/// gain schedule out on the approximate model, which is the only part of the
/// procedure the model alone can supply.
pub fn run_ilc(
    sys: &TimeVaryingLinearSystem,
    approx: &ApproximateModel,
    cost: &QuadraticCost,
    x0: &DVector<f64>,
    config: &IlcConfig,
) -> Result<IlcRun> {
    config.validate()?;
    approx.check_compatible(sys)?;

    let (k_ce, _) = mismatch::synthesize_mm(approx, cost)?;
    let model_sys = approx.as_system();
    let init = lqr::rollout_linear(&model_sys, cost, &k_ce, x0)?;

    let mut state = IlcState {
        trajectory: lqr::rollout_controls(sys, cost, &init.u, x0)?,
        u: init.u,
        iteration: 0,
        last_delta_norm: f64::INFINITY,
    };
    let mut log = Vec::new();
    let mut converged = false;
    let mut best: Option<(Vec<DVector<f64>>, Trajectory)> = None;

    while state.iteration < config.max_iters {
        let solution = lqr_delta_subproblem(approx, cost, &state.trajectory)?;
        let delta_norm = solution.du_inf_norm();
        state.last_delta_norm = delta_norm;

        if delta_norm <= config.tol {
            converged = true;
            log.push(IlcIterationRecord {
                iteration: state.iteration,
                true_cost: state.trajectory.cost,
                delta_u_inf: delta_norm,
                alpha: 0.0,
                accepted_with_warning: false,
            });
            break;
        }

        let (next_u, next_traj, alpha, warned) =
            take_step(sys, cost, x0, &state, &solution, config)?;
        state.u = next_u;
        state.trajectory = next_traj;
        state.iteration += 1;
        log.push(IlcIterationRecord {
            iteration: state.iteration,
            true_cost: state.trajectory.cost,
            delta_u_inf: delta_norm,
            alpha,
            accepted_with_warning: warned,
        });
        if best
            .as_ref()
            .is_none_or(|(_, traj)| state.trajectory.cost < traj.cost)
        {
            best = Some((state.u.clone(), state.trajectory.clone()));
        }
    }

    // a nonconverged run hands back its best iterate, not its last
    let (controls, trajectory) = match (converged, best) {
        (false, Some((u, traj))) if traj.cost < state.trajectory.cost => (u, traj),
        _ => (state.u, state.trajectory),
    };

    Ok(IlcRun {
        controls,
        trajectory,
        log,
        converged,
        iterations: state.iteration,
    })
}

fn take_step(
    sys: &TimeVaryingLinearSystem,
    cost: &QuadraticCost,
    x0: &DVector<f64>,
    state: &IlcState,
    solution: &DeltaSolution,
    config: &IlcConfig,
) -> Result<(Vec<DVector<f64>>, Trajectory, f64, bool)> {
    let stepped = |alpha: f64| -> Result<(Vec<DVector<f64>>, Trajectory)> {
        let u: Vec<DVector<f64>> = state
            .u
            .iter()
            .zip(&solution.du)
            .map(|(u, du)| u + du * alpha)
            .collect();
        let traj = lqr::rollout_controls(sys, cost, &u, x0)?;
        Ok((u, traj))
    };

    match config.step {
        StepSizeMode::Fixed(alpha) => {
            let (u, traj) = stepped(alpha)?;
            Ok((u, traj, alpha, false))
        }
        StepSizeMode::Backtracking {
            shrink,
            max_halvings,
        } => {
            let mut alpha = 1.0;
            let mut candidate = stepped(alpha)?;
            for _ in 0..max_halvings {
                if candidate.1.cost <= state.trajectory.cost {
                    return Ok((candidate.0, candidate.1, alpha, false));
                }
                alpha *= shrink;
                candidate = stepped(alpha)?;
            }
            if candidate.1.cost <= state.trajectory.cost {
                Ok((candidate.0, candidate.1, alpha, false))
            } else {
                // halvings exhausted: accept anyway, loudly
                Ok((candidate.0, candidate.1, alpha, true))
            }
        }
    }
}
