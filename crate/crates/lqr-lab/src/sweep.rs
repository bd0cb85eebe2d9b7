//! Experiment configuration, sweep drivers and report emission.
//!
//! Three sweeps compare the optimal, misspecified-model (MM) and
//! iterative-learning (ILC) controllers as the modeling error grows: a linear
//! two-state system under an analytic perturbation, a torque-limited pendulum
//! with misspecified mass, and a planar quadrotor in a dispersive wind field
//! the model does not know about. `run_bound_suite` drives every check in
//! [`crate::bounds`] over seeded random systems plus the fixed instances.
//!
//! All defaults reproduce the reference experiments; a bare config is valid.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Deserialize;

use crate::bounds::{self, BoundReport, ControllerKind};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lqr::{self, QuadraticCost, TimeVaryingLinearSystem};
use crate::mismatch::{self, ApproximateModel};
use crate::nonlinear::{
    self, evaluate_open_loop, evaluate_with_feedback, ilqr, pendulum_cost, pendulum_system,
    quadrotor_cost, quadrotor_system, IlqrOptions, PendulumAngleOrigin, PendulumParams,
    QuadrotorParams, DIVERGED_COST_SENTINEL,
};
use crate::par;

/// Grid of sweep parameter values. `values` wins when nonempty; otherwise
/// `points > 0` requests log spacing and `step > 0` linear spacing between
/// `start` and `stop`; otherwise the experiment default applies.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub values: Vec<f64>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: usize,
    pub step: f64,
}

impl GridConfig {
    pub fn log_spaced(start: f64, stop: f64, points: usize) -> Vec<f64> {
        let (l0, l1) = (start.ln(), stop.ln());
        (0..points)
            .map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp())
            .collect()
    }

    pub fn linear_spaced(start: f64, stop: f64, step: f64) -> Vec<f64> {
        let mut vals = Vec::new();
        let mut i = 0u64;
        loop {
            let v = start + step * i as f64;
            if v > stop + 1e-12 {
                break;
            }
            vals.push(v);
            i += 1;
        }
        vals
    }

    fn resolve(&self, default: Vec<f64>) -> Result<Vec<f64>> {
        let values = if !self.values.is_empty() {
            self.values.clone()
        } else {
            match (self.start, self.stop) {
                (Some(a), Some(b)) if self.points > 1 && a > 0.0 && b > a => {
                    Self::log_spaced(a, b, self.points)
                }
                (Some(a), Some(b)) if self.step > 0.0 && b >= a => {
                    Self::linear_spaced(a, b, self.step)
                }
                (None, None) if self.points == 0 && self.step == 0.0 => default,
                _ => {
                    return Err(Error::InvalidConfig(
                        "grid needs values, or start/stop with points (log) or step (linear)"
                            .into(),
                    ))
                }
            }
        };
        if values.is_empty() {
            return Err(Error::InvalidConfig("grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("grid has non-finite values".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "grid must be strictly increasing".into(),
            ));
        }
        Ok(values)
    }
}

/// Status flag attached to each sweep row per controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFlag {
    Ok,
    Diverged,
    AssumptionViolated,
    Nonconverged,
}

impl fmt::Display for RowFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RowFlag::Ok => "ok",
            RowFlag::Diverged => "diverged",
            RowFlag::AssumptionViolated => "assumption_violated",
            RowFlag::Nonconverged => "nonconverged",
        };
        f.write_str(s)
    }
}

/// One sweep point: realized costs of the three controllers on the true
/// system and the induced suboptimality gaps.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param: f64,
    pub cost_opt: f64,
    pub cost_mm: f64,
    pub cost_ilc: f64,
    pub gap_mm: f64,
    pub gap_ilc: f64,
    pub flag_mm: RowFlag,
    pub flag_ilc: RowFlag,
}

// ---------------------------------------------------------------------------
// linear experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSweepConfig {
    pub experiment: Option<String>,
    pub seed: u64,
    pub horizon: usize,
    pub x0: Vec<f64>,
    pub grid: GridConfig,
}

impl Default for LinearSweepConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            horizon: 10,
            x0: vec![0.1, 0.1],
            grid: GridConfig::default(),
        }
    }
}

/// The analytic model perturbation of the linear experiment:
/// `Ahat = A + eps I`, `Bhat = B + eps e1`.
pub fn perturbed_example_model(sys: &TimeVaryingLinearSystem, eps: f64) -> ApproximateModel {
    let n = sys.state_dim();
    let mut e1 = DMatrix::zeros(n, sys.control_dim());
    e1[(0, 0)] = 1.0;
    let a_hat = (0..sys.horizon())
        .map(|t| sys.a(t) + DMatrix::identity(n, n) * eps)
        .collect();
    let b_hat = (0..sys.horizon()).map(|t| sys.b(t) + &e1 * eps).collect();
    ApproximateModel::new(a_hat, b_hat, eps, eps).expect("shapes preserved")
}

/// Same perturbation applied at `t = 0` only; the model is exact afterwards.
pub fn first_step_example_model(sys: &TimeVaryingLinearSystem, eps: f64) -> ApproximateModel {
    let n = sys.state_dim();
    let mut e1 = DMatrix::zeros(n, sys.control_dim());
    e1[(0, 0)] = 1.0;
    let a_hat: Vec<DMatrix<f64>> = (0..sys.horizon())
        .map(|t| {
            if t == 0 {
                sys.a(t) + DMatrix::identity(n, n) * eps
            } else {
                sys.a(t).clone()
            }
        })
        .collect();
    let b_hat: Vec<DMatrix<f64>> = (0..sys.horizon())
        .map(|t| {
            if t == 0 {
                sys.b(t) + &e1 * eps
            } else {
                sys.b(t).clone()
            }
        })
        .collect();
    ApproximateModel::new(a_hat, b_hat, eps, eps).expect("shapes preserved")
}

/// Largest admissible modeling error of the linear experiment: the sufficient
/// condition keeping the ILC subproblem convex.
pub fn linear_experiment_eps_cap(sys: &TimeVaryingLinearSystem, cost: &QuadraticCost) -> f64 {
    (0..sys.horizon())
        .map(|t| {
            let gram = sys.b(t).transpose() * sys.b(t) * &cost.r;
            linalg::sigma_min(&gram) / linalg::spectral_norm(&(sys.b(t) * &cost.r))
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn run_linear_sweep(config: &LinearSweepConfig) -> Result<Vec<SweepRow>> {
    check_experiment_tag(&config.experiment, "linear")?;
    if config.horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    if config.x0.len() != 2 {
        return Err(Error::InvalidConfig("x0 must have dimension 2".into()));
    }
    let (sys, cost) = lqr::example_system(config.horizon);
    let cap = linear_experiment_eps_cap(&sys, &cost);
    let grid = config.grid.resolve(GridConfig::log_spaced(1e-4, cap, 40))?;
    if let Some(&max) = grid.last() {
        if max > cap + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "grid exceeds the admissible modeling-error cap {cap:.6}"
            )));
        }
    }

    let x0 = DVector::from_vec(config.x0.clone());
    let (k_star, _) = lqr::solve_riccati_optimal(&sys, &cost)?;
    let opt = lqr::rollout_linear(&sys, &cost, &k_star, &x0)?;

    let rows = par::map_indexed(grid.len(), |i| {
        let eps = grid[i];
        let approx = perturbed_example_model(&sys, eps);

        let (cost_mm, flag_mm) = match mismatch::synthesize_mm(&approx, &cost) {
            Ok((k_ce, _)) => match lqr::rollout_linear(&sys, &cost, &k_ce, &x0) {
                Ok(t) if t.cost.is_finite() && t.cost < DIVERGED_COST_SENTINEL => {
                    (t.cost, RowFlag::Ok)
                }
                _ => (DIVERGED_COST_SENTINEL, RowFlag::Diverged),
            },
            Err(_) => (DIVERGED_COST_SENTINEL, RowFlag::AssumptionViolated),
        };

        let (cost_ilc, flag_ilc) = match mismatch::synthesize_ilc_closed_form(&sys, &approx, &cost)
        {
            Ok((k_ilc, _, _)) => match lqr::rollout_linear(&sys, &cost, &k_ilc, &x0) {
                Ok(t) if t.cost.is_finite() && t.cost < DIVERGED_COST_SENTINEL => {
                    (t.cost, RowFlag::Ok)
                }
                _ => (DIVERGED_COST_SENTINEL, RowFlag::Diverged),
            },
            Err(Error::NonconvexSubproblem(_)) => {
                (DIVERGED_COST_SENTINEL, RowFlag::AssumptionViolated)
            }
            Err(_) => (DIVERGED_COST_SENTINEL, RowFlag::Diverged),
        };

        SweepRow {
            param: eps,
            cost_opt: opt.cost,
            cost_mm,
            cost_ilc,
            gap_mm: cost_mm - opt.cost,
            gap_ilc: cost_ilc - opt.cost,
            flag_mm,
            flag_ilc,
        }
    });
    Ok(rows)
}

// ---------------------------------------------------------------------------
// pendulum experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumSweepConfig {
    pub experiment: Option<String>,
    pub seed: u64,
    pub grid: GridConfig,
    pub mass: f64,
    pub length: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub dt: f64,
    pub horizon: usize,
    pub torque_weight: f64,
    pub x0: Vec<f64>,
    /// "upright" (gravity destabilizing, the balancing task) or "hanging".
    pub angle_origin: String,
    pub max_iters: usize,
}

impl Default for PendulumSweepConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            grid: GridConfig::default(),
            mass: 1.0,
            length: 1.0,
            tau_min: -8.0,
            tau_max: 8.0,
            dt: 0.1,
            horizon: 20,
            torque_weight: 0.1,
            x0: vec![FRAC_PI_2, 0.5],
            angle_origin: "upright".into(),
            max_iters: 200,
        }
    }
}

/// Side data per pendulum sweep point that does not fit the CSV schema.
#[derive(Debug, Clone)]
pub struct PendulumDiagnostics {
    pub param: f64,
    /// MM controls replayed on the true system with the model's feedback gains
    /// active (the open-loop number is what the sweep reports).
    pub mm_feedback_cost: f64,
}

pub struct PendulumSweepOutput {
    pub rows: Vec<SweepRow>,
    pub diagnostics: Vec<PendulumDiagnostics>,
}

pub fn run_pendulum_sweep(config: &PendulumSweepConfig) -> Result<PendulumSweepOutput> {
    check_experiment_tag(&config.experiment, "pendulum")?;
    let grid = config
        .grid
        .resolve(GridConfig::linear_spaced(0.0, 0.3, 0.01))?;
    if config.x0.len() != 2 {
        return Err(Error::InvalidConfig(
            "pendulum x0 must have dimension 2".into(),
        ));
    }
    let origin = match config.angle_origin.as_str() {
        "upright" => PendulumAngleOrigin::Upright,
        "hanging" => PendulumAngleOrigin::Hanging,
        other => {
            return Err(Error::InvalidConfig(format!(
                "angle_origin must be 'upright' or 'hanging', got '{other}'"
            )))
        }
    };
    let params = PendulumParams {
        mass: config.mass,
        length: config.length,
        tau_min: config.tau_min,
        tau_max: config.tau_max,
        dt: config.dt,
        horizon: config.horizon,
        origin,
    };

    let true_sys = pendulum_system(params)?;
    let cost = pendulum_cost(config.torque_weight);
    let x0 = DVector::from_vec(config.x0.clone());
    let u0 = vec![DVector::zeros(1); config.horizon];
    let opts = IlqrOptions {
        max_iters: config.max_iters,
        ..IlqrOptions::default()
    };

    let optimal = ilqr(&true_sys, &true_sys, &cost, &x0, &u0, &opts)?;
    if optimal.diverged {
        return Err(Error::NumericBlowup(
            "optimal pendulum solve diverged; check dt/horizon".into(),
        ));
    }

    let per_point = par::map_indexed(grid.len(), |i| -> Result<(SweepRow, PendulumDiagnostics)> {
        let dm = grid[i];
        let model_sys = pendulum_system(PendulumParams {
            mass: config.mass + dm,
            ..params
        })?;

        // MM: optimize on the model, play the controls open loop on the truth
        let mm_run = ilqr(&model_sys, &model_sys, &cost, &x0, &u0, &opts)?;
        let (cost_mm, mm_diverged) = evaluate_open_loop(&true_sys, &cost, &x0, &mm_run.controls);
        let flag_mm = flag_for(mm_diverged, mm_run.converged && !mm_run.diverged);
        let (mm_feedback_cost, _) = evaluate_with_feedback(&true_sys, &cost, &x0, &mm_run);

        // ILC: true rollouts, model backward passes
        let ilc_run = ilqr(&true_sys, &model_sys, &cost, &x0, &u0, &opts)?;
        let (cost_ilc, flag_ilc) = if ilc_run.diverged {
            (DIVERGED_COST_SENTINEL, RowFlag::Diverged)
        } else {
            (ilc_run.cost, flag_for(false, ilc_run.converged))
        };

        Ok((
            SweepRow {
                param: dm,
                cost_opt: optimal.cost,
                cost_mm,
                cost_ilc,
                gap_mm: cost_mm - optimal.cost,
                gap_ilc: cost_ilc - optimal.cost,
                flag_mm,
                flag_ilc,
            },
            PendulumDiagnostics {
                param: dm,
                mm_feedback_cost,
            },
        ))
    });

    let mut rows = Vec::with_capacity(grid.len());
    let mut diagnostics = Vec::with_capacity(grid.len());
    for item in per_point {
        let (row, diag) = item?;
        rows.push(row);
        diagnostics.push(diag);
    }
    Ok(PendulumSweepOutput { rows, diagnostics })
}

fn flag_for(diverged: bool, converged: bool) -> RowFlag {
    if diverged {
        RowFlag::Diverged
    } else if !converged {
        RowFlag::Nonconverged
    } else {
        RowFlag::Ok
    }
}

// ---------------------------------------------------------------------------
// quadrotor experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorSweepConfig {
    pub experiment: Option<String>,
    pub seed: u64,
    pub grid: GridConfig,
    pub mass: f64,
    pub arm_length: f64,
    /// Defaults to `0.2 m l^2` when absent.
    pub inertia: Option<f64>,
    pub dt: f64,
    pub horizon: usize,
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    pub x0: Vec<f64>,
    pub x_f: Vec<f64>,
    pub max_iters: usize,
}

impl Default for QuadrotorSweepConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            grid: GridConfig::default(),
            mass: 1.0,
            arm_length: 0.3,
            inertia: None,
            dt: 0.025,
            horizon: 60,
            q_diag: vec![1.0; 6],
            r_diag: vec![0.1; 2],
            x0: vec![-3.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            x_f: vec![3.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            max_iters: 200,
        }
    }
}

pub fn run_quadrotor_sweep(config: &QuadrotorSweepConfig) -> Result<Vec<SweepRow>> {
    check_experiment_tag(&config.experiment, "quadrotor")?;
    let grid = config
        .grid
        .resolve(GridConfig::linear_spaced(0.0, 1.0, 0.05))?;
    if config.x0.len() != 6 || config.x_f.len() != 6 {
        return Err(Error::InvalidConfig(
            "quadrotor states must have dimension 6".into(),
        ));
    }
    if config.q_diag.len() != 6 || config.r_diag.len() != 2 {
        return Err(Error::InvalidConfig(
            "q_diag must have 6 entries and r_diag 2".into(),
        ));
    }
    let inertia = config
        .inertia
        .unwrap_or(0.2 * config.mass * config.arm_length * config.arm_length);
    let base = QuadrotorParams {
        mass: config.mass,
        arm_length: config.arm_length,
        inertia,
        gravity: nonlinear::GRAVITY,
        eta: 0.0,
        dt: config.dt,
        horizon: config.horizon,
    };

    let model_sys = quadrotor_system(base)?;
    let hover = DVector::from_element(2, 0.5 * config.mass * nonlinear::GRAVITY);
    let cost = quadrotor_cost(
        DVector::from_vec(config.q_diag.clone()),
        DVector::from_vec(config.r_diag.clone()),
        DVector::from_vec(config.x_f.clone()),
        hover.clone(),
    );
    let x0 = DVector::from_vec(config.x0.clone());
    let u0 = vec![hover.clone(); config.horizon];
    let opts = IlqrOptions {
        max_iters: config.max_iters,
        ..IlqrOptions::default()
    };

    // MM never sees the wind: one model-only solve serves every sweep point
    let mm_run = ilqr(&model_sys, &model_sys, &cost, &x0, &u0, &opts)?;

    let rows = par::map_indexed(grid.len(), |i| -> Result<SweepRow> {
        let eta = grid[i];
        let true_sys = quadrotor_system(QuadrotorParams { eta, ..base })?;

        let optimal = ilqr(&true_sys, &true_sys, &cost, &x0, &u0, &opts)?;
        let (cost_mm, mm_diverged) = evaluate_open_loop(&true_sys, &cost, &x0, &mm_run.controls);
        let ilc_run = ilqr(&true_sys, &model_sys, &cost, &x0, &u0, &opts)?;

        let cost_opt = optimal.cost;
        let flag_mm = flag_for(mm_diverged, mm_run.converged && !mm_run.diverged);
        let (cost_ilc, flag_ilc) = if ilc_run.diverged {
            (DIVERGED_COST_SENTINEL, RowFlag::Diverged)
        } else {
            (ilc_run.cost, flag_for(false, ilc_run.converged))
        };

        Ok(SweepRow {
            param: eta,
            cost_opt,
            cost_mm,
            cost_ilc,
            gap_mm: cost_mm - cost_opt,
            gap_ilc: cost_ilc - cost_opt,
            flag_mm,
            flag_ilc,
        })
    });
    rows.into_iter().collect()
}

// ---------------------------------------------------------------------------
// bound suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSuiteConfig {
    pub experiment: Option<String>,
    pub seed: u64,
    /// Number of random verification instances.
    pub systems: usize,
    pub max_state_dim: usize,
    pub max_horizon: usize,
    pub matrix_trials: usize,
    pub matrix_max_dim: usize,
    /// Scalar tightness grid.
    pub scalar_eps: Vec<f64>,
    pub scalar_horizons: Vec<usize>,
    /// First-step scenario sweep values.
    pub first_step_eps: Vec<f64>,
    /// Corrupt every bound by halving its right-hand side and require the
    /// harness to notice.
    pub self_test: bool,
}

impl Default for BoundSuiteConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            systems: 200,
            max_state_dim: 4,
            max_horizon: 15,
            matrix_trials: 1000,
            matrix_max_dim: 5,
            scalar_eps: vec![0.05, 0.1, 0.2],
            scalar_horizons: vec![2, 5, 10],
            first_step_eps: GridConfig::log_spaced(0.01, 0.5, 10),
            self_test: false,
        }
    }
}

/// Aggregate of every report sharing a bound name.
#[derive(Debug, Clone)]
pub struct BoundAggregate {
    pub name: String,
    pub reports: usize,
    pub entries: usize,
    pub entries_met: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` over precondition-met entries with `rhs > 0`.
    pub worst_ratio: f64,
}

#[derive(Debug)]
pub struct SuiteOutcome {
    pub aggregates: Vec<BoundAggregate>,
    pub total_entries: usize,
    pub total_met: usize,
    pub total_violations: usize,
    pub systems_evaluated: usize,
    /// Instances whose ILC synthesis was refused (assumption 3); counted, not
    /// fatal.
    pub ilc_refusals: usize,
    pub self_test: bool,
}

impl SuiteOutcome {
    /// The suite passes when nothing violated a precondition-met bound; in
    /// self-test mode it passes only when the corruption was detected.
    pub fn passed(&self) -> bool {
        if self.self_test {
            self.total_violations > 0
        } else {
            self.total_violations == 0
        }
    }
}

/// A random verification instance satisfying assumptions 1-3 with modeling
/// errors small enough that every bound's preconditions are expected to hold.
pub struct RandomInstance {
    pub sys: TimeVaryingLinearSystem,
    pub cost: QuadraticCost,
    pub approx: ApproximateModel,
    pub x0: DVector<f64>,
}

/// Draw a random instance; deterministic in `(seed, index)`.
pub fn random_instance(
    seed: u64,
    index: u64,
    max_state_dim: usize,
    max_horizon: usize,
) -> RandomInstance {
    let mut rng = par::substream(seed, index);
    loop {
        let n = rng.random_range(1..=max_state_dim);
        let d = rng.random_range(1..=n);
        let h = rng.random_range(2..=max_horizon);
        let time_varying = rng.random_range(0.0..1.0) < 0.5;

        let a_norm = rng.random_range(0.3..0.95);
        let b_norm = rng.random_range(0.5..2.0);
        let draw_pair = |rng: &mut rand_chacha::ChaCha8Rng| {
            (
                linalg::random_matrix_with_norm(rng, n, n, a_norm),
                linalg::random_matrix_with_norm(rng, n, d, b_norm),
            )
        };
        let (mut a_seq, mut b_seq) = (Vec::with_capacity(h), Vec::with_capacity(h));
        if time_varying {
            for _ in 0..h {
                let (a, b) = draw_pair(&mut rng);
                a_seq.push(a);
                b_seq.push(b);
            }
        } else {
            let (a, b) = draw_pair(&mut rng);
            a_seq = vec![a; h];
            b_seq = vec![b; h];
        }
        let sys = TimeVaryingLinearSystem::new(a_seq, b_seq).expect("valid shapes");

        let q = DMatrix::identity(n, n) + linalg::random_psd(&mut rng, n, 0.5);
        let r = DMatrix::identity(d, d) * rng.random_range(1.0..2.0)
            + linalg::random_psd(&mut rng, d, 0.5);
        let cost = QuadraticCost::new(q.clone(), q, r).expect("symmetric by construction");

        let Ok((k_star, p_star)) = lqr::solve_riccati_optimal(&sys, &cost) else {
            continue;
        };
        let cert = lqr::StabilityCertificate::new(&sys, &k_star);
        if cert.delta < 0.02 {
            continue;
        }

        // modeling error small relative to every precondition in play
        let g = bounds::gamma(&sys, &k_star, &p_star);
        let max_b = (0..h)
            .map(|t| linalg::spectral_norm(sys.b(t)))
            .fold(0.0, f64::max);
        let max_p = p_star
            .p
            .iter()
            .map(linalg::spectral_norm)
            .fold(0.0, f64::max);
        let a3_cap = linear_experiment_eps_cap(&sys, &cost);
        let eps_cap = (cert.delta / (2.0 * max_b) / (14.0 * g.powi(3)))
            .min(0.25 * a3_cap)
            .min(0.2 / max_p)
            * 0.5;
        let eps_a = eps_cap * rng.random_range(0.2..1.0);
        let eps_b = eps_cap * rng.random_range(0.2..1.0);

        let a_hat = (0..h)
            .map(|t| sys.a(t) + linalg::random_matrix_with_norm(&mut rng, n, n, eps_a))
            .collect();
        let b_hat = (0..h)
            .map(|t| sys.b(t) + linalg::random_matrix_with_norm(&mut rng, n, d, eps_b))
            .collect();
        let approx = ApproximateModel::new(a_hat, b_hat, eps_a, eps_b).expect("valid shapes");

        let mut x0 = linalg::random_vector(&mut rng, n);
        if x0.norm() == 0.0 {
            x0 = DVector::from_element(n, 1.0);
        }
        x0 /= x0.norm();

        return RandomInstance {
            sys,
            cost,
            approx,
            x0,
        };
    }
}

fn evaluate_instance(instance: &RandomInstance) -> Result<(Vec<BoundReport>, bool)> {
    let RandomInstance {
        sys,
        cost,
        approx,
        x0,
    } = instance;
    let (k_star, p_star) = lqr::solve_riccati_optimal(sys, cost)?;
    let mut reports = Vec::new();
    let mut ilc_refused = false;

    let (k_ce, p_ce) = mismatch::synthesize_mm(approx, cost)?;
    reports.push(bounds::theorem1_bound(
        sys, cost, x0, &k_star, &p_star, &k_ce,
    )?);
    reports.push(bounds::stability_lemma_check(sys, &k_star, &k_ce));
    reports.push(bounds::performance_difference_check(
        sys, cost, x0, &k_star, &p_star, &k_ce,
    )?);
    reports.push(bounds::gain_diff_bound(
        ControllerKind::Mm,
        sys,
        cost,
        approx,
        &k_star,
        &p_star,
        &k_ce,
        &p_ce,
    )?);
    reports.push(bounds::riccati_bound_mm(sys, cost, approx, &p_star, &p_ce)?);

    match mismatch::synthesize_ilc_closed_form(sys, approx, cost) {
        Ok((k_ilc, p_ilc, _)) => {
            reports.push(bounds::theorem1_bound(
                sys, cost, x0, &k_star, &p_star, &k_ilc,
            )?);
            reports.push(bounds::stability_lemma_check(sys, &k_star, &k_ilc));
            reports.push(bounds::performance_difference_check(
                sys, cost, x0, &k_star, &p_star, &k_ilc,
            )?);
            reports.push(bounds::gain_diff_bound(
                ControllerKind::Ilc,
                sys,
                cost,
                approx,
                &k_star,
                &p_star,
                &k_ilc,
                &p_ilc,
            )?);
            reports.push(bounds::riccati_bound_ilc(
                sys, cost, approx, &p_star, &p_ilc,
            )?);
        }
        Err(Error::NonconvexSubproblem(_)) => ilc_refused = true,
        Err(e) => return Err(e),
    }

    Ok((reports, ilc_refused))
}

pub fn run_bound_suite(config: &BoundSuiteConfig) -> Result<SuiteOutcome> {
    check_experiment_tag(&config.experiment, "bounds")?;
    if config.systems == 0 {
        return Err(Error::InvalidConfig(
            "suite needs at least one system".into(),
        ));
    }

    let per_system: Vec<Result<(Vec<BoundReport>, bool)>> = par::map_indexed(config.systems, |i| {
        let instance = random_instance(
            config.seed,
            i as u64,
            config.max_state_dim,
            config.max_horizon,
        );
        evaluate_instance(&instance)
    });

    let mut reports = Vec::new();
    let mut ilc_refusals = 0usize;
    for item in per_system {
        let (rs, refused) = item?;
        reports.extend(rs);
        if refused {
            ilc_refusals += 1;
        }
    }

    // fixed instances: matrix lemmas, scalar tightness, first-step scenario
    reports.push(bounds::matrix_lemma_checks(
        config.matrix_trials,
        config.matrix_max_dim,
        config.seed,
    )?);
    for &eps in &config.scalar_eps {
        for &h in &config.scalar_horizons {
            reports.push(bounds::scalar_tightness(1.0, 1.0, 1.0, 1.0, eps, h)?);
        }
    }
    let (example_sys, example_cost) = lqr::example_system(10);
    let x0 = DVector::from_vec(vec![0.1, 0.1]);
    for &eps in &config.first_step_eps {
        let approx = first_step_example_model(&example_sys, eps);
        reports.push(bounds::first_step_error_bounds(
            &example_sys,
            &example_cost,
            &approx,
            &x0,
        )?);
    }

    // the two-state example system at small modeling errors; its optimal
    // closed loop is not a contraction, so the stability-gated checks report
    // not-applicable while the perturbation and gain bounds stay live
    for eps in [1e-3, 1e-2] {
        let instance = RandomInstance {
            approx: perturbed_example_model(&example_sys, eps),
            sys: example_sys.clone(),
            cost: example_cost.clone(),
            x0: x0.clone(),
        };
        let (rs, refused) = evaluate_instance(&instance)?;
        reports.extend(rs);
        if refused {
            ilc_refusals += 1;
        }
    }

    if config.self_test {
        for report in &mut reports {
            report.scale_rhs(0.5);
        }
    }

    let mut by_name: BTreeMap<String, BoundAggregate> = BTreeMap::new();
    let mut total_entries = 0;
    let mut total_met = 0;
    let mut total_violations = 0;
    for report in &reports {
        let agg = by_name
            .entry(report.name.clone())
            .or_insert_with(|| BoundAggregate {
                name: report.name.clone(),
                reports: 0,
                entries: 0,
                entries_met: 0,
                violations: 0,
                worst_ratio: 0.0,
            });
        agg.reports += 1;
        agg.entries += report.lhs.len();
        agg.entries_met += report.entries_met();
        agg.violations += report.violations().len();
        for i in 0..report.lhs.len() {
            if report.preconditions_met[i] && report.rhs[i] > 0.0 {
                agg.worst_ratio = agg.worst_ratio.max(report.lhs[i] / report.rhs[i]);
            }
        }
        total_entries += report.lhs.len();
        total_met += report.entries_met();
        total_violations += report.violations().len();
    }

    Ok(SuiteOutcome {
        aggregates: by_name.into_values().collect(),
        total_entries,
        total_met,
        total_violations,
        systems_evaluated: config.systems,
        ilc_refusals,
        self_test: config.self_test,
    })
}

// ---------------------------------------------------------------------------
// output emission
// ---------------------------------------------------------------------------

/// Write a sweep table in the fixed schema
/// `param,cost_opt,cost_mm,cost_ilc,gap_mm,gap_ilc,flag_mm,flag_ilc`.
///
/// Non-finite values never reach the file: divergent points carry the sentinel
/// cost and a flag instead.
pub fn write_sweep_csv(rows: &[SweepRow], mut out: impl Write) -> Result<()> {
    writeln!(
        out,
        "param,cost_opt,cost_mm,cost_ilc,gap_mm,gap_ilc,flag_mm,flag_ilc"
    )?;
    for row in rows {
        for v in [
            row.param,
            row.cost_opt,
            row.cost_mm,
            row.cost_ilc,
            row.gap_mm,
            row.gap_ilc,
        ] {
            if !v.is_finite() {
                return Err(Error::Internal(format!(
                    "non-finite value {v} reached the CSV writer at param {}",
                    row.param
                )));
            }
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.param,
            row.cost_opt,
            row.cost_mm,
            row.cost_ilc,
            row.gap_mm,
            row.gap_ilc,
            row.flag_mm,
            row.flag_ilc
        )?;
    }
    Ok(())
}

/// Write the per-bound aggregate table of a suite run.
pub fn write_bounds_csv(outcome: &SuiteOutcome, mut out: impl Write) -> Result<()> {
    writeln!(
        out,
        "bound,reports,entries,entries_met,violations,worst_ratio"
    )?;
    for agg in &outcome.aggregates {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            agg.name, agg.reports, agg.entries, agg.entries_met, agg.violations, agg.worst_ratio
        )?;
    }
    Ok(())
}

fn check_experiment_tag(tag: &Option<String>, expected: &str) -> Result<()> {
    match tag {
        Some(t) if t != expected => Err(Error::InvalidConfig(format!(
            "config declares experiment '{t}' but '{expected}' was requested"
        ))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation_rejects_nonmonotone() {
        let g = GridConfig {
            values: vec![0.1, 0.1],
            ..GridConfig::default()
        };
        assert!(g.resolve(vec![1.0]).is_err());
    }

    #[test]
    fn grid_defaults_pass_through() {
        let g = GridConfig::default();
        assert_eq!(g.resolve(vec![1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn linear_sweep_rejects_grid_beyond_cap() {
        let config = LinearSweepConfig {
            grid: GridConfig {
                values: vec![0.1, 4.0],
                ..GridConfig::default()
            },
            ..LinearSweepConfig::default()
        };
        assert!(matches!(
            run_linear_sweep(&config),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn linear_sweep_zero_error_point() {
        // the cap is an upper bound, not a member; use a tiny two-point grid
        let config = LinearSweepConfig {
            grid: GridConfig {
                values: vec![1e-9, 1e-2],
                ..GridConfig::default()
            },
            ..LinearSweepConfig::default()
        };
        let rows = run_linear_sweep(&config).unwrap();
        assert!(rows[0].gap_mm.abs() <= 1e-9);
        assert!(rows[0].gap_ilc.abs() <= 1e-9);
        assert!(rows[1].gap_ilc <= rows[1].gap_mm);
        assert_eq!(rows[1].flag_mm, RowFlag::Ok);
    }

    #[test]
    fn sweep_csv_schema() {
        let rows = vec![SweepRow {
            param: 0.5,
            cost_opt: 1.0,
            cost_mm: DIVERGED_COST_SENTINEL,
            cost_ilc: 2.0,
            gap_mm: DIVERGED_COST_SENTINEL - 1.0,
            gap_ilc: 1.0,
            flag_mm: RowFlag::Diverged,
            flag_ilc: RowFlag::Ok,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "param,cost_opt,cost_mm,cost_ilc,gap_mm,gap_ilc,flag_mm,flag_ilc"
        );
        assert!(lines.next().unwrap().ends_with("diverged,ok"));
    }

    #[test]
    fn empty_table_writes_header_only() {
        let mut buf = Vec::new();
        write_sweep_csv(&[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn csv_rejects_nan() {
        let rows = vec![SweepRow {
            param: 0.5,
            cost_opt: f64::NAN,
            cost_mm: 0.0,
            cost_ilc: 0.0,
            gap_mm: 0.0,
            gap_ilc: 0.0,
            flag_mm: RowFlag::Ok,
            flag_ilc: RowFlag::Ok,
        }];
        let mut buf = Vec::new();
        assert!(write_sweep_csv(&rows, &mut buf).is_err());
    }

    #[test]
    fn suite_small_run_is_clean_and_self_test_detects() {
        let config = BoundSuiteConfig {
            systems: 10,
            matrix_trials: 50,
            first_step_eps: vec![0.05, 0.2],
            ..BoundSuiteConfig::default()
        };
        let outcome = run_bound_suite(&config).unwrap();
        assert!(outcome.passed(), "violations: {}", outcome.total_violations);
        assert!(outcome.total_met > 0);

        let corrupted = BoundSuiteConfig {
            self_test: true,
            ..config
        };
        let outcome = run_bound_suite(&corrupted).unwrap();
        assert!(outcome.passed(), "self-test failed to detect corruption");
        assert!(outcome.total_violations > 0);
    }

    #[test]
    fn experiment_tag_mismatch_is_invalid() {
        let config = LinearSweepConfig {
            experiment: Some("pendulum".into()),
            ..LinearSweepConfig::default()
        };
        assert!(matches!(
            run_linear_sweep(&config),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn toml_round_trip_with_defaults() {
        let cfg: LinearSweepConfig = toml::from_str("experiment = \"linear\"\nseed = 7\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.horizon, 10);
        let cfg: PendulumSweepConfig =
            toml::from_str("dt = 0.05\n[grid]\nstart = 0.0\nstop = 0.1\nstep = 0.05\n").unwrap();
        assert_eq!(cfg.dt, 0.05);
        assert_eq!(cfg.grid.resolve(vec![]).unwrap(), vec![0.0, 0.05, 0.1]);
    }
}
