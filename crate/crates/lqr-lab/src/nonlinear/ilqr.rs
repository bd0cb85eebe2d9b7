//! Iterative LQR with separately pluggable forward and backward systems.
//!
//! Passing the same system twice gives plain iLQR. Passing the true system
//! forward and the approximate model backward gives the iterative-learning
//! variant: nominal trajectories and line-search evaluations come from real
//! rollouts while the correction directions come from the model.

use nalgebra::{DMatrix, DVector};

use super::{NonlinearSystem, RunningCost, DIVERGED_COST_SENTINEL};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct IlqrOptions {
    pub max_iters: usize,
    /// Stop when the relative cost improvement of an accepted step falls below
    /// this.
    pub tol: f64,
    pub reg_init: f64,
    pub reg_max: f64,
    pub backtrack_shrink: f64,
    pub max_backtracks: u32,
}

impl Default for IlqrOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-9,
            reg_init: 1e-6,
            reg_max: 1e6,
            backtrack_shrink: 0.5,
            max_backtracks: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IlqrResult {
    pub controls: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
    pub cost: f64,
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the nominal rollout left the representable range; `cost` then
    /// holds [`DIVERGED_COST_SENTINEL`].
    pub diverged: bool,
    /// Feedback gains from the last backward pass, around `states`/`controls`.
    pub feedback: Vec<DMatrix<f64>>,
}

/// Replay a solved trajectory on another system with the solution's feedback
/// gains active: `u_t = u_nom_t + K_t (x_t - x_nom_t)`. Used to measure how a
/// controller fares when its local feedback is kept instead of playing the
/// controls open loop.
pub fn evaluate_with_feedback(
    system: &NonlinearSystem,
    cost: &RunningCost,
    x0: &DVector<f64>,
    solution: &IlqrResult,
) -> (f64, bool) {
    if solution.feedback.len() != solution.controls.len() {
        return evaluate_open_loop(system, cost, x0, &solution.controls);
    }
    let h = solution.controls.len();
    let mut xs = Vec::with_capacity(h + 1);
    let mut us = Vec::with_capacity(h);
    xs.push(x0.clone());
    for t in 0..h {
        let u = &solution.controls[t] + &solution.feedback[t] * (&xs[t] - &solution.states[t]);
        match system.step(&xs[t], &u) {
            Ok(next) => {
                us.push(u);
                xs.push(next);
            }
            Err(_) => return (DIVERGED_COST_SENTINEL, true),
        }
    }
    let c = cost.total(&xs, &us);
    if c.is_finite() {
        (c, false)
    } else {
        (DIVERGED_COST_SENTINEL, true)
    }
}

/// Roll a control sequence out on a nonlinear system. `None` signals numeric
/// blowup.
pub fn rollout(
    system: &NonlinearSystem,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
) -> Option<Vec<DVector<f64>>> {
    let mut xs = Vec::with_capacity(controls.len() + 1);
    xs.push(x0.clone());
    for u in controls {
        match system.step(xs.last().expect("nonempty"), u) {
            Ok(next) => xs.push(next),
            Err(_) => return None,
        }
    }
    Some(xs)
}

/// Evaluate a control sequence on a system, returning the realized cost or the
/// divergence sentinel.
pub fn evaluate_open_loop(
    system: &NonlinearSystem,
    cost: &RunningCost,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
) -> (f64, bool) {
    match rollout(system, x0, controls) {
        Some(xs) => {
            let c = cost.total(&xs, controls);
            if c.is_finite() {
                (c, false)
            } else {
                (DIVERGED_COST_SENTINEL, true)
            }
        }
        None => (DIVERGED_COST_SENTINEL, true),
    }
}

struct BackwardPass {
    feedforward: Vec<DVector<f64>>,
    feedback: Vec<DMatrix<f64>>,
}

/// Iterative LQR.
///
/// Linearizes `backward`'s discrete dynamics around the nominal produced by
/// `forward`, runs the Riccati-style backward pass with Levenberg-style
/// regularization on the control Hessian, and line-searches the combined
/// feedforward/feedback update on `forward` with backtracking.
pub fn ilqr(
    forward: &NonlinearSystem,
    backward: &NonlinearSystem,
    cost: &RunningCost,
    x0: &DVector<f64>,
    u_init: &[DVector<f64>],
    opts: &IlqrOptions,
) -> Result<IlqrResult> {
    let h = forward.horizon;
    if u_init.len() != h {
        return Err(Error::InvalidInput(format!(
            "initial controls have length {}, horizon is {h}",
            u_init.len()
        )));
    }
    if forward.state_dim != backward.state_dim || forward.control_dim != backward.control_dim {
        return Err(Error::InvalidInput(
            "forward and backward systems must share dimensions".into(),
        ));
    }

    let mut us: Vec<DVector<f64>> = u_init.to_vec();
    let mut xs = match rollout(forward, x0, &us) {
        Some(xs) => xs,
        None => {
            return Ok(IlqrResult {
                controls: us,
                states: vec![x0.clone()],
                cost: DIVERGED_COST_SENTINEL,
                cost_trace: vec![DIVERGED_COST_SENTINEL],
                converged: false,
                iterations: 0,
                diverged: true,
                feedback: Vec::new(),
            });
        }
    };
    let mut current = cost.total(&xs, &us);
    if !current.is_finite() {
        return Ok(IlqrResult {
            controls: us,
            states: xs,
            cost: DIVERGED_COST_SENTINEL,
            cost_trace: vec![DIVERGED_COST_SENTINEL],
            converged: false,
            iterations: 0,
            diverged: true,
            feedback: Vec::new(),
        });
    }
    let mut trace = vec![current];
    let mut lambda = opts.reg_init;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_feedback: Vec<DMatrix<f64>> = Vec::new();

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let pass = match backward_pass(backward, cost, &xs, &us, &mut lambda, opts) {
            Some(p) => p,
            None => {
                return Err(Error::SynthesisFailure(
                    "control Hessian stayed indefinite at maximum regularization".into(),
                ))
            }
        };

        // backtracking line search on the forward system
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            if let Some((xs_new, us_new, c_new)) =
                forward_pass(forward, cost, x0, &xs, &us, &pass, alpha)
            {
                if c_new < current {
                    accepted = Some((xs_new, us_new, c_new));
                    break;
                }
            }
            alpha *= opts.backtrack_shrink;
        }

        match accepted {
            Some((xs_new, us_new, c_new)) => {
                let rel = (current - c_new) / current.abs().max(1.0);
                xs = xs_new;
                us = us_new;
                current = c_new;
                trace.push(current);
                lambda = (lambda / 10.0).max(opts.reg_init);
                if rel < opts.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                lambda *= 10.0;
                if lambda > opts.reg_max {
                    break;
                }
            }
        }
    }

    if let Some(pass) = backward_pass(backward, cost, &xs, &us, &mut lambda, opts) {
        last_feedback = pass.feedback;
    }

    Ok(IlqrResult {
        controls: us,
        states: xs,
        cost: current,
        cost_trace: trace,
        converged,
        iterations,
        diverged: false,
        feedback: last_feedback,
    })
}

fn backward_pass(
    backward: &NonlinearSystem,
    cost: &RunningCost,
    xs: &[DVector<f64>],
    us: &[DVector<f64>],
    lambda: &mut f64,
    opts: &IlqrOptions,
) -> Option<BackwardPass> {
    let h = us.len();
    let d = backward.control_dim;

    // linearizations are lambda-independent; compute once
    let jacs: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..h)
        .map(|t| backward.discrete_jacobians(&xs[t], &us[t]))
        .collect();

    'outer: while *lambda <= opts.reg_max {
        let mut vx = cost.term_grad(&xs[h]);
        let mut vxx = cost.term_hess(&xs[h]);
        let mut feedforward = vec![DVector::zeros(0); h];
        let mut feedback = vec![DMatrix::zeros(0, 0); h];

        for t in (0..h).rev() {
            let (a, b) = &jacs[t];
            let qx = cost.grad_x(&xs[t], &us[t]) + a.transpose() * &vx;
            let qu = cost.grad_u(&xs[t], &us[t]) + b.transpose() * &vx;
            let qxx = cost.hess_x(&xs[t], &us[t]) + a.transpose() * &vxx * a;
            let quu = cost.hess_u(&xs[t], &us[t]) + b.transpose() * &vxx * b;
            let qux = b.transpose() * &vxx * a;

            let quu_reg = &quu + DMatrix::identity(d, d) * *lambda;
            let chol = match linalg::symmetrize(&quu_reg).cholesky() {
                Some(c) => c,
                None => {
                    *lambda *= 10.0;
                    continue 'outer;
                }
            };
            let k_ff = -chol.solve(&qu);
            let k_fb = -chol.solve(&qux);

            vx = qx
                + k_fb.transpose() * &quu * &k_ff
                + k_fb.transpose() * &qu
                + qux.transpose() * &k_ff;
            vxx = qxx
                + k_fb.transpose() * &quu * &k_fb
                + k_fb.transpose() * &qux
                + qux.transpose() * &k_fb;
            vxx = linalg::symmetrize(&vxx);

            feedforward[t] = k_ff;
            feedback[t] = k_fb;
        }

        return Some(BackwardPass {
            feedforward,
            feedback,
        });
    }
    None
}

#[allow(clippy::type_complexity)]
fn forward_pass(
    forward: &NonlinearSystem,
    cost: &RunningCost,
    x0: &DVector<f64>,
    xs_nom: &[DVector<f64>],
    us_nom: &[DVector<f64>],
    pass: &BackwardPass,
    alpha: f64,
) -> Option<(Vec<DVector<f64>>, Vec<DVector<f64>>, f64)> {
    let h = us_nom.len();
    let mut xs = Vec::with_capacity(h + 1);
    let mut us = Vec::with_capacity(h);
    xs.push(x0.clone());
    for t in 0..h {
        let du = &pass.feedforward[t] * alpha + &pass.feedback[t] * (&xs[t] - &xs_nom[t]);
        let u = &us_nom[t] + du;
        let next = forward.step(&xs[t], &u).ok()?;
        us.push(u);
        xs.push(next);
    }
    let c = cost.total(&xs, &us);
    c.is_finite().then_some((xs, us, c))
}
