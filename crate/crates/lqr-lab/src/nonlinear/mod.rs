//! Nonlinear trajectory optimization: pluggable continuous dynamics, RK4
//! discretization, and iterative LQR with a configurable backward-pass model.

mod ilqr;
mod systems;

pub use ilqr::{
    evaluate_open_loop, evaluate_with_feedback, ilqr, rollout, IlqrOptions, IlqrResult,
};
pub use systems::{
    pendulum_cost, pendulum_system, quadrotor_cost, quadrotor_system, wrap_angle,
    PendulumAngleOrigin, PendulumParams, QuadrotorParams, GRAVITY,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

type DynamicsFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type JacobianFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;
type StateCostFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type StepCostFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;
type StateGradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type StateHessFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type StepGradUFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type StepHessUFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;
type StepGradXFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type StepHessXFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// States with any coordinate beyond this magnitude count as numeric blowup.
pub const BLOWUP_STATE_LIMIT: f64 = 1e8;

/// Sentinel cost recorded for runs that blew up; sweeps keep going and flag
/// the point as diverged instead of aborting.
pub const DIVERGED_COST_SENTINEL: f64 = 1e12;

/// Continuous-time dynamics `xdot = f(x, u)` with an RK4 discretization and
/// optional analytic Jacobians (central finite differences otherwise).
#[derive(Clone)]
pub struct NonlinearSystem {
    pub state_dim: usize,
    pub control_dim: usize,
    pub dt: f64,
    pub horizon: usize,
    dynamics: Arc<DynamicsFn>,
    jac_x: Option<Arc<JacobianFn>>,
    jac_u: Option<Arc<JacobianFn>>,
}

impl NonlinearSystem {
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        dt: f64,
        horizon: usize,
        dynamics: Arc<DynamicsFn>,
    ) -> Result<Self> {
        if dt <= 0.0 {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        Ok(Self {
            state_dim,
            control_dim,
            dt,
            horizon,
            dynamics,
            jac_x: None,
            jac_u: None,
        })
    }

    pub fn with_jacobians(mut self, jac_x: Arc<JacobianFn>, jac_u: Arc<JacobianFn>) -> Self {
        self.jac_x = Some(jac_x);
        self.jac_u = Some(jac_u);
        self
    }

    /// Continuous derivative `f(x, u)`.
    pub fn deriv(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.dynamics)(x, u)
    }

    /// `df/dx`, analytic when provided, else central differences.
    pub fn jac_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        match &self.jac_x {
            Some(j) => j(x, u),
            None => fd_jacobian(self.state_dim, x.len(), |v| self.deriv(v, u), x),
        }
    }

    /// `df/du`, analytic when provided, else central differences.
    pub fn jac_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        match &self.jac_u {
            Some(j) => j(x, u),
            None => fd_jacobian(self.state_dim, u.len(), |v| self.deriv(x, v), u),
        }
    }

    /// One discrete step of the zero-order-hold RK4 map.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        rk4_step(&|x, u| self.deriv(x, u), x, u, self.dt)
    }

    /// Jacobians of the discrete map, chained through the four RK4 stages.
    pub fn discrete_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.state_dim;
        let dt = self.dt;
        let eye = DMatrix::identity(n, n);

        let k1 = self.deriv(x, u);
        let x2 = x + &k1 * (dt / 2.0);
        let k2 = self.deriv(&x2, u);
        let x3 = x + &k2 * (dt / 2.0);
        let k3 = self.deriv(&x3, u);
        let x4 = x + &k3 * dt;

        let j1 = self.jac_x(x, u);
        let g1 = self.jac_u(x, u);
        let fx2 = self.jac_x(&x2, u);
        let j2 = &fx2 * (&eye + &j1 * (dt / 2.0));
        let g2 = self.jac_u(&x2, u) + fx2 * &g1 * (dt / 2.0);
        let fx3 = self.jac_x(&x3, u);
        let j3 = &fx3 * (&eye + &j2 * (dt / 2.0));
        let g3 = self.jac_u(&x3, u) + fx3 * &g2 * (dt / 2.0);
        let fx4 = self.jac_x(&x4, u);
        let j4 = &fx4 * (&eye + &j3 * dt);
        let g4 = self.jac_u(&x4, u) + fx4 * &g3 * dt;

        let a = eye + (j1 + j2 * 2.0 + j3 * 2.0 + j4) * (dt / 6.0);
        let b = (g1 + g2 * 2.0 + g3 * 2.0 + g4) * (dt / 6.0);
        (a, b)
    }
}

/// Classical four-stage Runge-Kutta step with the control held constant.
#[allow(clippy::type_complexity)]
pub fn rk4_step(
    f: &dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    if dt <= 0.0 {
        return Err(Error::InvalidInput("dt must be positive".into()));
    }
    let k1 = f(x, u);
    let k2 = f(&(x + &k1 * (dt / 2.0)), u);
    let k3 = f(&(x + &k2 * (dt / 2.0)), u);
    let k4 = f(&(x + &k3 * dt), u);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next
        .iter()
        .any(|v| !v.is_finite() || v.abs() > BLOWUP_STATE_LIMIT)
    {
        return Err(Error::NumericBlowup(format!(
            "state left the representable range after an RK4 step (dt = {dt})"
        )));
    }
    Ok(next)
}

/// Per-step and terminal costs with optional analytic derivatives.
#[derive(Clone)]
pub struct RunningCost {
    step: Arc<StepCostFn>,
    terminal: Arc<StateCostFn>,
    grad_x: Option<Arc<StepGradXFn>>,
    hess_x: Option<Arc<StepHessXFn>>,
    grad_u: Option<Arc<StepGradUFn>>,
    hess_u: Option<Arc<StepHessUFn>>,
    term_grad: Option<Arc<StateGradFn>>,
    term_hess: Option<Arc<StateHessFn>>,
}

impl RunningCost {
    pub fn new(step: Arc<StepCostFn>, terminal: Arc<StateCostFn>) -> Self {
        Self {
            step,
            terminal,
            grad_x: None,
            hess_x: None,
            grad_u: None,
            hess_u: None,
            term_grad: None,
            term_hess: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_derivatives(
        mut self,
        grad_x: Arc<StepGradXFn>,
        hess_x: Arc<StepHessXFn>,
        grad_u: Arc<StepGradUFn>,
        hess_u: Arc<StepHessUFn>,
        term_grad: Arc<StateGradFn>,
        term_hess: Arc<StateHessFn>,
    ) -> Self {
        self.grad_x = Some(grad_x);
        self.hess_x = Some(hess_x);
        self.grad_u = Some(grad_u);
        self.hess_u = Some(hess_u);
        self.term_grad = Some(term_grad);
        self.term_hess = Some(term_hess);
        self
    }

    pub fn step_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (self.step)(x, u)
    }

    pub fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        (self.terminal)(x)
    }

    pub fn total(&self, xs: &[DVector<f64>], us: &[DVector<f64>]) -> f64 {
        let run: f64 = xs.iter().zip(us).map(|(x, u)| self.step_cost(x, u)).sum();
        run + self.terminal_cost(xs.last().expect("nonempty trajectory"))
    }

    pub fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match &self.grad_x {
            Some(g) => g(x, u),
            None => fd_gradient(|v| self.step_cost(v, u), x),
        }
    }

    pub fn hess_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        match &self.hess_x {
            Some(h) => h(x, u),
            None => fd_hessian(|v| self.step_cost(v, u), x),
        }
    }

    pub fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match &self.grad_u {
            Some(g) => g(x, u),
            None => fd_gradient(|v| self.step_cost(x, v), u),
        }
    }

    pub fn hess_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        match &self.hess_u {
            Some(h) => h(x, u),
            None => fd_hessian(|v| self.step_cost(x, v), u),
        }
    }

    pub fn term_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.term_grad {
            Some(g) => g(x),
            None => fd_gradient(|v| self.terminal_cost(v), x),
        }
    }

    pub fn term_hess(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.term_hess {
            Some(h) => h(x),
            None => fd_hessian(|v| self.terminal_cost(v), x),
        }
    }
}

const FD_STEP: f64 = 1e-6;

fn fd_jacobian(
    rows: usize,
    cols: usize,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    at: &DVector<f64>,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let mut hi = at.clone();
        let mut lo = at.clone();
        hi[j] += FD_STEP;
        lo[j] -= FD_STEP;
        let col = (f(&hi) - f(&lo)) / (2.0 * FD_STEP);
        jac.set_column(j, &col);
    }
    jac
}

fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, at: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(at.len(), |i, _| {
        let mut hi = at.clone();
        let mut lo = at.clone();
        hi[i] += FD_STEP;
        lo[i] -= FD_STEP;
        (f(&hi) - f(&lo)) / (2.0 * FD_STEP)
    })
}

fn fd_hessian(f: impl Fn(&DVector<f64>) -> f64, at: &DVector<f64>) -> DMatrix<f64> {
    let n = at.len();
    let h = 1e-4;
    let mut m = DMatrix::zeros(n, n);
    let f0 = f(at);
    for i in 0..n {
        for j in i..n {
            let mut pp = at.clone();
            let mut pm = at.clone();
            let mut mp = at.clone();
            let mut mm = at.clone();
            pp[i] += h;
            pp[j] += h;
            pm[i] += h;
            pm[j] -= h;
            mp[i] -= h;
            mp[j] += h;
            mm[i] -= h;
            mm[j] -= h;
            let v = if i == j {
                let mut hi = at.clone();
                let mut lo = at.clone();
                hi[i] += h;
                lo[i] -= h;
                (f(&hi) - 2.0 * f0 + f(&lo)) / (h * h)
            } else {
                (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * h * h)
            };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rk4_fixed_point_of_zero_field() {
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let u = DVector::zeros(1);
        let next = rk4_step(&|x, _| DVector::zeros(x.len()), &x, &u, 0.1).unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn rk4_matches_truncated_exponential() {
        // xdot = x, dt = 0.1: multiplier is the 4th-order Taylor polynomial of e^0.1
        let x = DVector::from_element(1, 3.0);
        let u = DVector::zeros(1);
        let next = rk4_step(&|x, _| x.clone(), &x, &u, 0.1).unwrap();
        let factor =
            1.0 + 0.1 + 0.1f64.powi(2) / 2.0 + 0.1f64.powi(3) / 6.0 + 0.1f64.powi(4) / 24.0;
        assert_relative_eq!(next[0], 3.0 * factor, max_relative = 1e-15);
    }

    #[test]
    fn rk4_flags_blowup() {
        let x = DVector::from_element(1, 1.0);
        let u = DVector::zeros(1);
        let err = rk4_step(&|x, _| x * f64::INFINITY, &x, &u, 0.1).unwrap_err();
        assert!(matches!(err, Error::NumericBlowup(_)));
    }
}
