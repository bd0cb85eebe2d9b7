//! The two nonlinear testbeds: torque-limited pendulum and planar quadrotor.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{NonlinearSystem, RunningCost};
use crate::error::Result;

pub const GRAVITY: f64 = 9.81;

/// Which vertical the pendulum angle is measured from.
///
/// With `theta` measured from the upward vertical the dynamics are
/// `thetadd = tau / (m l^2) + (g / l) sin(theta)`: gravity pushes away from
/// `theta = 0` and the regulation task is the hard balancing/swing problem.
/// Measured from the downward vertical the gravity term flips sign and
/// `theta = 0` is the hanging rest point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PendulumAngleOrigin {
    Upright,
    Hanging,
}

#[derive(Debug, Clone, Copy)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub dt: f64,
    pub horizon: usize,
    pub origin: PendulumAngleOrigin,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            tau_min: -8.0,
            tau_max: 8.0,
            dt: 0.1,
            horizon: 20,
            origin: PendulumAngleOrigin::Upright,
        }
    }
}

/// Torque-limited pendulum with state `[theta, thetadot]` and one input. The
/// commanded torque is clipped inside the dynamics; the clip derivative is 1
/// inside the limits and at the boundary, 0 outside.
pub fn pendulum_system(params: PendulumParams) -> Result<NonlinearSystem> {
    let PendulumParams {
        mass,
        length,
        tau_min,
        tau_max,
        dt,
        horizon,
        origin,
    } = params;
    if mass <= 0.0 || length <= 0.0 {
        return Err(crate::error::Error::InvalidInput(
            "pendulum mass and length must be positive".into(),
        ));
    }
    let sign = match origin {
        PendulumAngleOrigin::Upright => 1.0,
        PendulumAngleOrigin::Hanging => -1.0,
    };
    let ml2 = mass * length * length;
    let g_over_l = sign * GRAVITY / length;

    let dynamics = Arc::new(move |x: &DVector<f64>, u: &DVector<f64>| {
        let tau = u[0].clamp(tau_min, tau_max);
        DVector::from_vec(vec![x[1], tau / ml2 + g_over_l * x[0].sin()])
    });
    let jac_x = Arc::new(move |x: &DVector<f64>, _u: &DVector<f64>| {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, g_over_l * x[0].cos(), 0.0])
    });
    let jac_u = Arc::new(move |_x: &DVector<f64>, u: &DVector<f64>| {
        let inside = (tau_min..=tau_max).contains(&u[0]);
        DMatrix::from_row_slice(2, 1, &[0.0, if inside { 1.0 / ml2 } else { 0.0 }])
    });

    Ok(NonlinearSystem::new(2, 1, dt, horizon, dynamics)?.with_jacobians(jac_x, jac_u))
}

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = (theta + std::f64::consts::PI).rem_euclid(two_pi);
    if w < 0.0 {
        w += two_pi;
    }
    w - std::f64::consts::PI
}

/// Pendulum cost `c(theta, tau) = torque_weight * tau^2 + wrap(theta)^2` with
/// terminal `wrap(theta_H)^2`. The wrap applies to cost evaluation only; the
/// simulated state stays unwrapped.
pub fn pendulum_cost(torque_weight: f64) -> RunningCost {
    let step = Arc::new(move |x: &DVector<f64>, u: &DVector<f64>| {
        let w = wrap_angle(x[0]);
        torque_weight * u[0] * u[0] + w * w
    });
    let terminal = Arc::new(|x: &DVector<f64>| {
        let w = wrap_angle(x[0]);
        w * w
    });
    RunningCost::new(step, terminal).with_derivatives(
        Arc::new(|x: &DVector<f64>, _u: &DVector<f64>| {
            DVector::from_vec(vec![2.0 * wrap_angle(x[0]), 0.0])
        }),
        Arc::new(|_x: &DVector<f64>, _u: &DVector<f64>| {
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])
        }),
        Arc::new(move |_x: &DVector<f64>, u: &DVector<f64>| {
            DVector::from_element(1, 2.0 * torque_weight * u[0])
        }),
        Arc::new(move |_x: &DVector<f64>, _u: &DVector<f64>| {
            DMatrix::from_element(1, 1, 2.0 * torque_weight)
        }),
        Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![2.0 * wrap_angle(x[0]), 0.0])),
        Arc::new(|_x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0])),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct QuadrotorParams {
    pub mass: f64,
    /// Distance between the propellers.
    pub arm_length: f64,
    pub inertia: f64,
    pub gravity: f64,
    /// Dispersive wind gain; the modeled dynamics use 0.
    pub eta: f64,
    pub dt: f64,
    pub horizon: usize,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        let mass = 1.0;
        let arm_length = 0.3;
        Self {
            mass,
            arm_length,
            inertia: 0.2 * mass * arm_length * arm_length,
            gravity: GRAVITY,
            eta: 0.0,
            dt: 0.025,
            horizon: 60,
        }
    }
}

/// Planar quadrotor with state `[px, py, theta, vx, vy, omega]` and thrust
/// inputs `[u1, u2]`:
///
/// ```text
/// pxdd = (u1 + u2) sin(theta) / m + eta px
/// pydd = (u1 + u2) cos(theta) / m - g + eta py
/// thetadd = l (u2 - u1) / (2 J)
/// ```
///
/// The `eta` terms model a dispersive wind field acting on the true system.
pub fn quadrotor_system(params: QuadrotorParams) -> Result<NonlinearSystem> {
    let QuadrotorParams {
        mass,
        arm_length,
        inertia,
        gravity,
        eta,
        dt,
        horizon,
    } = params;
    if mass <= 0.0 || arm_length <= 0.0 || inertia <= 0.0 {
        return Err(crate::error::Error::InvalidInput(
            "quadrotor mass, arm length and inertia must be positive".into(),
        ));
    }

    let dynamics = Arc::new(move |x: &DVector<f64>, u: &DVector<f64>| {
        let theta = x[2];
        let thrust = (u[0] + u[1]) / mass;
        DVector::from_vec(vec![
            x[3],
            x[4],
            x[5],
            thrust * theta.sin() + eta * x[0],
            thrust * theta.cos() - gravity + eta * x[1],
            arm_length * (u[1] - u[0]) / (2.0 * inertia),
        ])
    });
    let jac_x = Arc::new(move |x: &DVector<f64>, u: &DVector<f64>| {
        let theta = x[2];
        let thrust = (u[0] + u[1]) / mass;
        let mut j = DMatrix::zeros(6, 6);
        j[(0, 3)] = 1.0;
        j[(1, 4)] = 1.0;
        j[(2, 5)] = 1.0;
        j[(3, 0)] = eta;
        j[(3, 2)] = thrust * theta.cos();
        j[(4, 1)] = eta;
        j[(4, 2)] = -thrust * theta.sin();
        j
    });
    let jac_u = Arc::new(move |x: &DVector<f64>, _u: &DVector<f64>| {
        let theta = x[2];
        let mut j = DMatrix::zeros(6, 2);
        j[(3, 0)] = theta.sin() / mass;
        j[(3, 1)] = theta.sin() / mass;
        j[(4, 0)] = theta.cos() / mass;
        j[(4, 1)] = theta.cos() / mass;
        j[(5, 0)] = -arm_length / (2.0 * inertia);
        j[(5, 1)] = arm_length / (2.0 * inertia);
        j
    });

    Ok(NonlinearSystem::new(6, 2, dt, horizon, dynamics)?.with_jacobians(jac_x, jac_u))
}

/// Quadrotor tracking cost `(x - x_f)^T Q (x - x_f) + (u - u_h)^T R (u - u_h)`
/// with diagonal weights and terminal `(x - x_f)^T Q (x - x_f)`.
pub fn quadrotor_cost(
    q_diag: DVector<f64>,
    r_diag: DVector<f64>,
    x_f: DVector<f64>,
    u_hover: DVector<f64>,
) -> RunningCost {
    let q1 = q_diag.clone();
    let q2 = q_diag.clone();
    let q3 = q_diag.clone();
    let q4 = q_diag.clone();
    let q5 = q_diag.clone();
    let q6 = q_diag;
    let r1 = r_diag.clone();
    let r2 = r_diag.clone();
    let r3 = r_diag;
    let xf1 = x_f.clone();
    let xf2 = x_f.clone();
    let xf3 = x_f.clone();
    let xf4 = x_f;
    let uh1 = u_hover.clone();
    let uh2 = u_hover;

    let step = Arc::new(move |x: &DVector<f64>, u: &DVector<f64>| {
        let dx = x - &xf1;
        let du = u - &uh1;
        dx.iter()
            .zip(q1.iter())
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            + du.iter()
                .zip(r1.iter())
                .map(|(v, w)| w * v * v)
                .sum::<f64>()
    });
    let terminal = Arc::new(move |x: &DVector<f64>| {
        let dx = x - &xf2;
        dx.iter()
            .zip(q2.iter())
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
    });
    RunningCost::new(step, terminal).with_derivatives(
        Arc::new(move |x: &DVector<f64>, _u: &DVector<f64>| {
            let dx = x - &xf3;
            DVector::from_fn(dx.len(), |i, _| 2.0 * q3[i] * dx[i])
        }),
        Arc::new(move |_x: &DVector<f64>, _u: &DVector<f64>| DMatrix::from_diagonal(&(&q4 * 2.0))),
        Arc::new(move |_x: &DVector<f64>, u: &DVector<f64>| {
            let du = u - &uh2;
            DVector::from_fn(du.len(), |i, _| 2.0 * r2[i] * du[i])
        }),
        Arc::new(move |_x: &DVector<f64>, _u: &DVector<f64>| DMatrix::from_diagonal(&(&r3 * 2.0))),
        Arc::new(move |x: &DVector<f64>| {
            let dx = x - &xf4;
            DVector::from_fn(dx.len(), |i, _| 2.0 * q5[i] * dx[i])
        }),
        Arc::new(move |_x: &DVector<f64>| DMatrix::from_diagonal(&(&q6 * 2.0))),
    )
}
