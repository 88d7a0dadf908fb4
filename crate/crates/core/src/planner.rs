//! Receding-horizon planner blending goal tracking with information gain.
//!
//! Each solve optimises a piecewise-constant force/torque sequence over `N`
//! control intervals. Candidate sequences are scored by rolling the state
//! and its parameter sensitivities forward and summing, per interval,
//!
//! ```text
//! J = Σ eᵢᵀ Q eᵢ + uᵢᵀ R uᵢ + γ · Tr((Fᵢ + ridge·I)⁻¹)
//! ```
//!
//! where `eᵢ` is the 12-dimensional tracking error to the goal and `Fᵢ` the
//! Fisher information accumulated up to interval `i` (on top of a seed
//! carried over from the episode history). The weight `γ` decays
//! exponentially in time and grows with the tracking error, so excitation
//! is front-loaded and fades once the robot must settle on the goal.
//!
//! The optimiser is a box-projected gradient descent with momentum,
//! Barzilai-Borwein step estimation and a backtracking line search that only
//! ever accepts improvements. Gradients are forward finite differences over
//! the `6N` control variables; per-interval rollout checkpoints make the
//! perturbed evaluations restart mid-horizon instead of from scratch.

use std::time::Instant;

use nalgebra::{DVector, SMatrix, SVector, Vector3, Vector6};
use thiserror::Error;

use crate::dynamics::{
    self, quat_error_vector, ControlInput, DynamicsError, ForceFrame, InertialParams,
    RigidBodyState,
};
use crate::fim::{Fim, FimError};
use crate::sensitivity::{self, SensitivityMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("horizon must contain at least one control interval")]
    EmptyHorizon,
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("warm start has wrong horizon length")]
    WarmStartLength,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Fim(#[from] FimError),
}

/// Tracking error: position, attitude (error-quaternion vector part),
/// linear velocity and angular velocity deviations from the goal.
pub type ErrorVec = SVector<f64, 12>;

/// Goal state plus the error-norm radius that counts as arrival.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalSpec {
    pub state: RigidBodyState,
    pub tolerance: f64,
}

impl GoalSpec {
    /// Rest at the origin with identity attitude.
    pub fn origin(tolerance: f64) -> Self {
        Self {
            state: RigidBodyState::rest(),
            tolerance,
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if !self.state.is_finite() {
            return Err(PlannerError::InvalidConfig("goal state must be finite"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(PlannerError::InvalidConfig("goal tolerance must be positive"));
        }
        if self.state.quat_norm_error() > 1e-9 {
            return Err(PlannerError::InvalidConfig("goal quaternion must be unit"));
        }
        Ok(())
    }
}

/// Error state of `x` relative to the goal.
pub fn error_state(x: &RigidBodyState, goal: &GoalSpec) -> ErrorVec {
    let g = &goal.state;
    let att = quat_error_vector(&x.q, &g.q);
    let mut e = ErrorVec::zeros();
    e.fixed_rows_mut::<3>(0).copy_from(&(x.r - g.r));
    e.fixed_rows_mut::<3>(3).copy_from(&att);
    e.fixed_rows_mut::<3>(6).copy_from(&(x.v - g.v));
    e.fixed_rows_mut::<3>(9).copy_from(&(x.w - g.w));
    e
}

/// Cost weights and information-cost parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    /// Tracking weight, positive semidefinite.
    pub q: SMatrix<f64, 12, 12>,
    /// Input weight; zero by default so excitation is not penalised away.
    pub r: SMatrix<f64, 6, 6>,
    /// Ridge added to the information matrix before inversion.
    pub ridge: f64,
    /// Time constant of the exponential decay in the information weight.
    pub tau_decay: f64,
    /// Use the squared error norm in the information weight instead of the norm.
    pub quadratic_error_gamma: bool,
    /// Measurement variances weighting the horizon information accumulation.
    pub fim_meas_var: Vector6<f64>,
}

impl Default for CostWeights {
    fn default() -> Self {
        let mut q = SMatrix::<f64, 12, 12>::zeros();
        for i in 0..6 {
            q[(i, i)] = 10.0;
        }
        for i in 6..12 {
            q[(i, i)] = 1.0;
        }
        Self {
            q,
            r: SMatrix::zeros(),
            ridge: 1e-3,
            tau_decay: 20.0,
            quadratic_error_gamma: false,
            fim_meas_var: Vector6::repeat(1e-6),
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.q.iter().chain(self.r.iter()).any(|c| !c.is_finite()) {
            return Err(PlannerError::InvalidConfig("weights must be finite"));
        }
        if !(self.ridge.is_finite() && self.ridge > 0.0) {
            return Err(PlannerError::InvalidConfig("ridge must be positive"));
        }
        if !(self.tau_decay.is_finite() && self.tau_decay > 0.0) {
            return Err(PlannerError::InvalidConfig("tau_decay must be positive"));
        }
        if self.fim_meas_var.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(PlannerError::InvalidConfig("fim_meas_var must be positive"));
        }
        Ok(())
    }

    /// Diagonal tracking weights per error block (position, attitude,
    /// linear velocity, angular velocity).
    pub fn diagonal(pos: f64, att: f64, vel: f64, angvel: f64) -> Self {
        let mut q = SMatrix::<f64, 12, 12>::zeros();
        for i in 0..3 {
            q[(i, i)] = pos;
            q[(3 + i, 3 + i)] = att;
            q[(6 + i, 6 + i)] = vel;
            q[(9 + i, 9 + i)] = angvel;
        }
        Self {
            q,
            ..Self::default()
        }
    }
}

/// Information weight `γ(t, e) = exp(-t/τ) + ‖e‖` (or `‖e‖²` with the
/// quadratic switch): large early and far from the goal, vanishing as the
/// episode ages and the error closes.
pub fn gamma_schedule(t: f64, x_err: &ErrorVec, weights: &CostWeights) -> f64 {
    let e = x_err.norm();
    let err_term = if weights.quadratic_error_gamma { e * e } else { e };
    (-t / weights.tau_decay).exp() + err_term
}

/// Symmetric box bounds on each force/torque component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputBounds {
    pub min: Vector6<f64>,
    pub max: Vector6<f64>,
}

impl InputBounds {
    /// `|f_i| ≤ f_max_i`, `|τ_i| ≤ tau_max_i`.
    pub fn symmetric(f_max: Vector3<f64>, tau_max: Vector3<f64>) -> Self {
        let hi = Vector6::new(f_max.x, f_max.y, f_max.z, tau_max.x, tau_max.y, tau_max.z);
        Self { min: -hi, max: hi }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.min.iter().chain(self.max.iter()).any(|c| !c.is_finite()) {
            return Err(PlannerError::InvalidConfig("bounds must be finite"));
        }
        if (0..6).any(|i| self.min[i] > self.max[i]) {
            return Err(PlannerError::InvalidConfig("lower bound exceeds upper bound"));
        }
        Ok(())
    }

    pub fn contains(&self, u: &ControlInput, slack: f64) -> bool {
        let v = u.to_vec();
        (0..6).all(|i| v[i] >= self.min[i] - slack && v[i] <= self.max[i] + slack)
    }
}

impl Default for InputBounds {
    fn default() -> Self {
        Self::symmetric(Vector3::repeat(0.4), Vector3::repeat(0.1))
    }
}

/// Solver and rollout settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Number of control intervals in the horizon.
    pub horizon: usize,
    /// Control interval length in seconds.
    pub dt_ctrl: f64,
    /// RK4 substeps per control interval inside the optimiser rollout.
    pub substeps: u32,
    pub max_iters: usize,
    /// Projected-gradient infinity-norm below which the plan is stationary.
    pub grad_tol: f64,
    /// Relative cost decrease below which iteration stops.
    pub cost_tol: f64,
    /// Relative forward-difference perturbation for gradients.
    pub fd_step_rel: f64,
    /// Momentum carried between accepted directions.
    pub momentum: f64,
    /// Initial line-search step before the Barzilai-Borwein estimate exists.
    pub step_init: f64,
    pub frame: ForceFrame,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon: 40,
            dt_ctrl: 1.0,
            substeps: 10,
            max_iters: 60,
            grad_tol: 1e-6,
            cost_tol: 1e-9,
            fd_step_rel: 1e-6,
            momentum: 0.5,
            step_init: 1e-3,
            frame: ForceFrame::Body,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.horizon == 0 {
            return Err(PlannerError::EmptyHorizon);
        }
        if !(self.dt_ctrl.is_finite() && self.dt_ctrl > 0.0) || self.substeps == 0 {
            return Err(PlannerError::InvalidConfig("rollout discretisation invalid"));
        }
        if self.max_iters == 0 {
            return Err(PlannerError::InvalidConfig("max_iters must be at least 1"));
        }
        let positive = [
            self.grad_tol,
            self.cost_tol,
            self.fd_step_rel,
            self.step_init,
        ];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(PlannerError::InvalidConfig("solver tolerances must be positive"));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(PlannerError::InvalidConfig("momentum must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-interval cost contributions of a rolled-out control sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostBreakdown {
    /// Tracking plus input cost.
    pub tracking: f64,
    /// Sum of A-optimality scores over the horizon, before weighting by γ.
    pub info: f64,
    pub gamma: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.tracking + self.gamma * self.info
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    IterationCap,
    /// Numerical trouble: the returned plan is the zero-input fallback.
    Degraded,
}

/// Solver output: the control sequence, its predicted trajectory and the
/// cost split the closed loop logs.
#[derive(Clone, Debug)]
pub struct HorizonPlan {
    pub controls: Vec<ControlInput>,
    /// `horizon + 1` states, the first being the plan's initial state.
    pub predicted_states: Vec<RigidBodyState>,
    pub cost_total: f64,
    pub cost_tracking: f64,
    pub cost_info: f64,
    pub gamma_used: f64,
    pub solve_time: f64,
    pub iterations: usize,
    pub status: SolverStatus,
}

/// First input of the plan, the one a receding-horizon controller applies.
pub fn receding_step(plan: &HorizonPlan) -> ControlInput {
    plan.controls.first().copied().unwrap_or(ControlInput::ZERO)
}

/// Everything a single solve needs besides the decision variables.
#[derive(Clone, Debug)]
pub struct PlanRequest {
    pub x0: RigidBodyState,
    /// Sensitivity of the current state to the parameters, carried over from
    /// the episode history (zero at episode start).
    pub phi0: SensitivityMatrix,
    /// Historical information the horizon builds on, already scaled by any
    /// forgetting factor.
    pub fim_seed: Fim,
    pub theta: InertialParams,
    pub goal: GoalSpec,
    pub gamma: f64,
}

#[derive(Clone, Copy)]
struct Checkpoint {
    x: RigidBodyState,
    phi: SensitivityMatrix,
    fim: Fim,
    cum_tracking: f64,
    cum_info: f64,
}

/// NMPC planner: weights, input box and solver settings.
#[derive(Clone, Debug, Default)]
pub struct Planner {
    pub weights: CostWeights,
    pub bounds: InputBounds,
    pub cfg: SolverConfig,
}

impl Planner {
    pub fn new(weights: CostWeights, bounds: InputBounds, cfg: SolverConfig) -> Self {
        Self { weights, bounds, cfg }
    }

    fn validate(&self, req: &PlanRequest) -> Result<(), PlannerError> {
        self.weights.validate()?;
        self.bounds.validate()?;
        self.cfg.validate()?;
        req.goal.validate()?;
        req.theta.validate()?;
        if !req.x0.is_finite() {
            return Err(PlannerError::Dynamics(DynamicsError::NonFinite("state")));
        }
        if !req.phi0.iter().all(|c| c.is_finite()) {
            return Err(PlannerError::Dynamics(DynamicsError::NonFinite(
                "sensitivity matrix",
            )));
        }
        if !(req.gamma.is_finite() && req.gamma >= 0.0) {
            return Err(PlannerError::InvalidConfig("gamma must be non-negative"));
        }
        Ok(())
    }

    fn control_at(u: &DVector<f64>, k: usize) -> ControlInput {
        let b = 6 * k;
        ControlInput::new(
            Vector3::new(u[b], u[b + 1], u[b + 2]),
            Vector3::new(u[b + 3], u[b + 4], u[b + 5]),
        )
    }

    fn project(&self, u: &mut DVector<f64>) {
        let n = u.len() / 6;
        for k in 0..n {
            for i in 0..6 {
                let idx = 6 * k + i;
                u[idx] = u[idx].clamp(self.bounds.min[i], self.bounds.max[i]);
            }
        }
    }

    /// Advance one control interval from a checkpoint and add its cost terms.
    fn interval(
        &self,
        req: &PlanRequest,
        ck: &Checkpoint,
        u: &ControlInput,
    ) -> Result<Checkpoint, PlannerError> {
        let (x, phi) = sensitivity::propagate_joint_n(
            &ck.x,
            &ck.phi,
            u,
            &req.theta,
            self.cfg.dt_ctrl,
            self.cfg.substeps,
            self.cfg.frame,
        )?;
        let fim = ck
            .fim
            .accumulate(&sensitivity::output_sensitivity(&phi), &self.weights.fim_meas_var)?;

        let e = error_state(&x, &req.goal);
        let uv = u.to_vec();
        let tracking = e.dot(&(self.weights.q * e)) + uv.dot(&(self.weights.r * uv));
        let info = fim.a_optimality(self.weights.ridge)?;

        Ok(Checkpoint {
            x,
            phi,
            fim,
            cum_tracking: ck.cum_tracking + tracking,
            cum_info: ck.cum_info + info,
        })
    }

    fn initial_checkpoint(req: &PlanRequest) -> Checkpoint {
        Checkpoint {
            x: req.x0,
            phi: req.phi0,
            fim: req.fim_seed,
            cum_tracking: 0.0,
            cum_info: 0.0,
        }
    }

    /// Roll the whole horizon, returning the checkpoint after every interval.
    fn rollout(
        &self,
        req: &PlanRequest,
        u: &DVector<f64>,
    ) -> Result<(Vec<Checkpoint>, CostBreakdown), PlannerError> {
        let n = self.cfg.horizon;
        let mut cks = Vec::with_capacity(n + 1);
        cks.push(Self::initial_checkpoint(req));
        for k in 0..n {
            let next = self.interval(req, &cks[k], &Self::control_at(u, k))?;
            cks.push(next);
        }
        let last = &cks[n];
        let bd = CostBreakdown {
            tracking: last.cum_tracking,
            info: last.cum_info,
            gamma: req.gamma,
        };
        if !bd.total().is_finite() {
            return Err(PlannerError::Dynamics(DynamicsError::NonFinite("cost")));
        }
        Ok((cks, bd))
    }

    /// Cost of the tail of the horizon starting from `checkpointed` interval
    /// `start_k`, with at most one control component replaced. Shares the
    /// accumulation order with [`Self::rollout`] so unperturbed suffixes
    /// reproduce the base cost bit-for-bit.
    fn suffix_cost(
        &self,
        req: &PlanRequest,
        start: &Checkpoint,
        u: &DVector<f64>,
        start_k: usize,
        bump: Option<(usize, f64)>,
    ) -> Result<f64, PlannerError> {
        if req.gamma == 0.0 {
            // The information term carries zero weight, so the sensitivity
            // and Fisher bookkeeping cannot change the value: propagate the
            // state alone. The joint step advances the state with the exact
            // same floating-point operations, so this is bit-identical to
            // the full path, just ~3x cheaper.
            let mut x = start.x;
            let mut cum = start.cum_tracking;
            for k in start_k..self.cfg.horizon {
                let uk = Self::bumped_control(u, k, bump);
                x = dynamics::propagate(
                    &x,
                    &uk,
                    &req.theta,
                    self.cfg.dt_ctrl,
                    self.cfg.substeps,
                    self.cfg.frame,
                )?;
                let e = error_state(&x, &req.goal);
                let uv = uk.to_vec();
                cum += e.dot(&(self.weights.q * e)) + uv.dot(&(self.weights.r * uv));
            }
            return Ok(cum);
        }
        let mut ck = *start;
        for k in start_k..self.cfg.horizon {
            let uk = Self::bumped_control(u, k, bump);
            ck = self.interval(req, &ck, &uk)?;
        }
        Ok(ck.cum_tracking + req.gamma * ck.cum_info)
    }

    fn bumped_control(u: &DVector<f64>, k: usize, bump: Option<(usize, f64)>) -> ControlInput {
        let mut uk = Self::control_at(u, k);
        if let Some((idx, value)) = bump {
            if idx / 6 == k {
                let mut v = uk.to_vec();
                v[idx % 6] = value;
                uk = ControlInput::from_vec(&v);
            }
        }
        uk
    }

    /// Forward finite-difference gradient using the rollout checkpoints: the
    /// perturbation of interval `k` only re-rolls intervals `k..N`.
    fn fd_gradient(
        &self,
        req: &PlanRequest,
        cks: &[Checkpoint],
        base_cost: f64,
        u: &DVector<f64>,
    ) -> DVector<f64> {
        let n = self.cfg.horizon;
        let mut g = DVector::zeros(6 * n);
        for (k, ck) in cks.iter().enumerate().take(n) {
            for i in 0..6 {
                let idx = 6 * k + i;
                let h = self.cfg.fd_step_rel * u[idx].abs().max(1.0);
                let perturbed = self.suffix_cost(req, ck, u, k, Some((idx, u[idx] + h)));
                // A perturbation that blows up carries no usable slope;
                // treat the component as flat rather than poisoning the step.
                g[idx] = match perturbed {
                    Ok(j) if j.is_finite() => (j - base_cost) / h,
                    _ => 0.0,
                };
            }
        }
        g
    }

    /// Cost of a full control sequence; the public scoring entry point.
    pub fn horizon_cost(
        &self,
        req: &PlanRequest,
        controls: &[ControlInput],
    ) -> Result<CostBreakdown, PlannerError> {
        self.validate(req)?;
        if controls.len() != self.cfg.horizon {
            return Err(PlannerError::WarmStartLength);
        }
        let u = Self::flatten(controls);
        let (_, bd) = self.rollout(req, &u)?;
        Ok(bd)
    }

    fn flatten(controls: &[ControlInput]) -> DVector<f64> {
        let mut u = DVector::zeros(6 * controls.len());
        for (k, c) in controls.iter().enumerate() {
            let v = c.to_vec();
            for i in 0..6 {
                u[6 * k + i] = v[i];
            }
        }
        u
    }

    fn unflatten(u: &DVector<f64>) -> Vec<ControlInput> {
        (0..u.len() / 6).map(|k| Self::control_at(u, k)).collect()
    }

    fn degraded_plan(&self, req: &PlanRequest, t0: Instant) -> HorizonPlan {
        let n = self.cfg.horizon;
        let controls = vec![ControlInput::ZERO; n];
        let zero = DVector::zeros(6 * n);
        let (states, bd) = match self.rollout(req, &zero) {
            Ok((cks, bd)) => (cks.iter().map(|c| c.x).collect(), Some(bd)),
            Err(_) => (vec![req.x0], None),
        };
        HorizonPlan {
            controls,
            predicted_states: states,
            cost_total: bd.map_or(f64::INFINITY, |b| b.total()),
            cost_tracking: bd.map_or(f64::INFINITY, |b| b.tracking),
            cost_info: bd.map_or(f64::INFINITY, |b| b.info),
            gamma_used: req.gamma,
            solve_time: t0.elapsed().as_secs_f64(),
            iterations: 0,
            status: SolverStatus::Degraded,
        }
    }

    /// Solve for the best control sequence in the box.
    ///
    /// `previous_plan`, when given, is shifted by one interval (last control
    /// repeated) to warm-start the receding horizon; otherwise the search
    /// starts from the zero plan. Numerical failure never panics or errors:
    /// the zero-input fallback is returned flagged [`SolverStatus::Degraded`].
    /// The line search only accepts strict improvements, so the final cost
    /// never exceeds the warm start's.
    pub fn solve(
        &self,
        req: &PlanRequest,
        previous_plan: Option<&[ControlInput]>,
    ) -> Result<HorizonPlan, PlannerError> {
        let t0 = Instant::now();
        self.validate(req)?;
        let n = self.cfg.horizon;

        let mut u = match previous_plan {
            Some(prev) => {
                if prev.len() != n {
                    return Err(PlannerError::WarmStartLength);
                }
                let shifted: Vec<ControlInput> = (0..n)
                    .map(|k| prev[(k + 1).min(n - 1)])
                    .collect();
                Self::flatten(&shifted)
            }
            None => DVector::zeros(6 * n),
        };
        self.project(&mut u);

        let (mut cks, first_bd) = match self.rollout(req, &u) {
            Ok(v) => v,
            Err(_) => return Ok(self.degraded_plan(req, t0)),
        };
        let mut cost = first_bd.total();

        let mut best_u = u.clone();
        let mut best_cost = cost;

        let mut direction: Option<DVector<f64>> = None;
        let mut prev_point: Option<(DVector<f64>, DVector<f64>)> = None; // (u, g) at last gradient
        let mut alpha = self.cfg.step_init;
        let mut status = SolverStatus::IterationCap;
        let mut iterations = 0;

        for _ in 0..self.cfg.max_iters {
            iterations += 1;
            let g = self.fd_gradient(req, &cks, cost, &u);

            // Stationarity: how far the projected gradient step actually moves.
            let mut pg_inf: f64 = 0.0;
            for k in 0..n {
                for i in 0..6 {
                    let idx = 6 * k + i;
                    let moved =
                        (u[idx] - g[idx]).clamp(self.bounds.min[i], self.bounds.max[i]) - u[idx];
                    pg_inf = pg_inf.max(moved.abs());
                }
            }
            if pg_inf <= self.cfg.grad_tol {
                status = SolverStatus::Converged;
                break;
            }

            // Barzilai-Borwein step estimate from the last two gradients.
            if let Some((up, gp)) = &prev_point {
                let du = &u - up;
                let dg = &g - gp;
                let denom = du.dot(&dg);
                if denom > 0.0 {
                    alpha = (du.dot(&du) / denom).clamp(1e-12, 1e6);
                }
            }
            prev_point = Some((u.clone(), g.clone()));

            // Momentum on the accepted direction sequence.
            let mut d = match &direction {
                Some(dir) => {
                    let mut d = dir * self.cfg.momentum;
                    d -= &g;
                    d
                }
                None => -g.clone(),
            };
            if d.dot(&g) >= 0.0 {
                d = -g.clone();
            }

            let mut accepted = false;
            'search: for pass in 0..2 {
                if pass == 1 {
                    // Momentum direction failed everywhere; retry steepest descent.
                    if direction.is_none() {
                        break;
                    }
                    d = -g.clone();
                }
                let mut a = alpha;
                for _ in 0..32 {
                    let mut cand = &u + &d * a;
                    self.project(&mut cand);
                    if cand != u {
                        if let Ok((cks_new, bd_new)) = self.rollout(req, &cand) {
                            let cost_new = bd_new.total();
                            if cost_new < cost {
                                // The first improving step rarely exhausts the
                                // descent direction; keep doubling while each
                                // longer step still strictly improves (one
                                // rollout per try) and land on the best.
                                let mut acc = (cand, cks_new, cost_new, a);
                                let mut grow = a * 2.0;
                                for _ in 0..8 {
                                    let mut wide = &u + &d * grow;
                                    self.project(&mut wide);
                                    if wide == acc.0 {
                                        break;
                                    }
                                    match self.rollout(req, &wide) {
                                        Ok((cks_w, bd_w)) if bd_w.total() < acc.2 => {
                                            acc = (wide, cks_w, bd_w.total(), grow);
                                            grow *= 2.0;
                                        }
                                        _ => break,
                                    }
                                }
                                let decrease = cost - acc.2;
                                u = acc.0;
                                cks = acc.1;
                                cost = acc.2;
                                direction = Some(d.clone());
                                alpha = acc.3 * 1.5;
                                accepted = true;
                                if cost < best_cost {
                                    best_u = u.clone();
                                    best_cost = cost;
                                }
                                if decrease <= self.cfg.cost_tol * cost.abs().max(1.0) {
                                    status = SolverStatus::Converged;
                                }
                                break 'search;
                            }
                        }
                    }
                    a *= 0.5;
                }
            }

            if !accepted {
                // No improving step exists along the gradient: stationary.
                status = SolverStatus::Converged;
                break;
            }
            if status == SolverStatus::Converged {
                break;
            }
        }

        let (states, final_bd) = match self.rollout(req, &best_u) {
            Ok((cks_final, bd_final)) => {
                (cks_final.iter().map(|c| c.x).collect::<Vec<_>>(), bd_final)
            }
            Err(_) => return Ok(self.degraded_plan(req, t0)),
        };

        Ok(HorizonPlan {
            controls: Self::unflatten(&best_u),
            predicted_states: states,
            cost_total: final_bd.total(),
            cost_tracking: final_bd.tracking,
            cost_info: final_bd.info,
            gamma_used: req.gamma,
            solve_time: t0.elapsed().as_secs_f64(),
            iterations,
            status,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paper_params() -> InertialParams {
        InertialParams::new(9.7, 7.0, 7.0, 10.0)
    }

    fn request_at_goal(gamma: f64) -> PlanRequest {
        PlanRequest {
            x0: RigidBodyState::rest(),
            phi0: SensitivityMatrix::zeros(),
            fim_seed: Fim::zero(),
            theta: paper_params(),
            goal: GoalSpec::origin(0.05),
            gamma,
        }
    }

    fn small_planner(horizon: usize) -> Planner {
        Planner::new(
            CostWeights::default(),
            InputBounds::default(),
            SolverConfig {
                horizon,
                ..SolverConfig::default()
            },
        )
    }

    #[test]
    fn gamma_schedule_matches_hand_values() {
        let w = CostWeights::default();
        assert_eq!(gamma_schedule(0.0, &ErrorVec::zeros(), &w), 1.0);

        let w10 = CostWeights {
            tau_decay: 10.0,
            ..CostWeights::default()
        };
        let mut e = ErrorVec::zeros();
        e[0] = 0.5;
        assert_relative_eq!(
            gamma_schedule(10.0, &e, &w10),
            (-1.0f64).exp() + 0.5,
            max_relative = 1e-12
        );
        assert_relative_eq!(gamma_schedule(10.0, &e, &w10), 0.86788, max_relative = 1e-4);

        let quad = CostWeights {
            tau_decay: 10.0,
            quadratic_error_gamma: true,
            ..CostWeights::default()
        };
        assert_relative_eq!(
            gamma_schedule(10.0, &e, &quad),
            (-1.0f64).exp() + 0.25,
            max_relative = 1e-12
        );
    }

    #[test]
    fn gamma_decays_monotonically_and_rolls_off() {
        let w = CostWeights::default();
        let mut e = ErrorVec::zeros();
        e[3] = 0.2;
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let g = gamma_schedule(f64::from(k), &e, &w);
            assert!(g < prev, "gamma must strictly decrease in t");
            prev = g;
        }
        assert!(gamma_schedule(5.0 * w.tau_decay, &ErrorVec::zeros(), &w) < 0.01);
    }

    #[test]
    fn zero_cost_at_goal_with_zero_controls_and_no_info_weight() {
        let planner = small_planner(5);
        let bd = planner
            .horizon_cost(&request_at_goal(0.0), &[ControlInput::ZERO; 5])
            .unwrap();
        assert_eq!(bd.tracking, 0.0);
        assert_eq!(bd.total(), 0.0);
        assert!(bd.info > 0.0, "ridge keeps the raw info score positive");
    }

    #[test]
    fn info_cost_alone_is_positive_at_goal() {
        let planner = small_planner(5);
        let bd = planner
            .horizon_cost(&request_at_goal(0.7), &[ControlInput::ZERO; 5])
            .unwrap();
        // Resting at the goal gains no information: every interval scores
        // the full no-information value 4/ridge.
        assert_relative_eq!(bd.info, 5.0 * 4.0 / 1e-3, max_relative = 1e-9);
        assert_relative_eq!(bd.total(), 0.7 * bd.info, max_relative = 1e-12);
    }

    #[test]
    fn cost_splits_recombine_exactly() {
        let planner = small_planner(4);
        let mut req = request_at_goal(0.3);
        req.x0 = RigidBodyState::rest_at(Vector3::new(1.0, -2.0, 0.5));
        let controls = [
            ControlInput::new(Vector3::new(0.2, 0.0, -0.1), Vector3::new(0.05, 0.0, 0.0)),
            ControlInput::new(Vector3::new(-0.3, 0.1, 0.0), Vector3::new(0.0, -0.02, 0.04)),
            ControlInput::ZERO,
            ControlInput::new(Vector3::new(0.1, 0.1, 0.1), Vector3::new(0.01, 0.01, 0.01)),
        ];
        let bd = planner.horizon_cost(&req, &controls).unwrap();
        assert!(bd.tracking > 0.0 && bd.info > 0.0);
        assert_relative_eq!(
            bd.total(),
            bd.tracking + 0.3 * bd.info,
            max_relative = 1e-9
        );
    }

    #[test]
    fn single_interval_cost_matches_closed_form() {
        // One interval of constant force from rest with identity attitude:
        // RK4 integrates the constant-acceleration segment exactly, so
        // r1 = d + u/(2m), v1 = u/m and the cost is the plain quadratic.
        let planner = small_planner(1);
        let m = paper_params().m;
        let d = 2.0;
        let mut req = request_at_goal(0.0);
        req.x0 = RigidBodyState::rest_at(Vector3::new(d, 0.0, 0.0));
        for step in 0..21 {
            let ux = -0.4 + 0.04 * f64::from(step);
            let controls = [ControlInput::new(Vector3::new(ux, 0.0, 0.0), Vector3::zeros())];
            let bd = planner.horizon_cost(&req, &controls).unwrap();
            let r1 = d + ux / (2.0 * m);
            let v1 = ux / m;
            let expected = 10.0 * r1 * r1 + 1.0 * v1 * v1;
            assert_relative_eq!(bd.total(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn solve_at_goal_returns_zero_plan() {
        let planner = small_planner(6);
        let plan = planner.solve(&request_at_goal(0.0), None).unwrap();
        for u in &plan.controls {
            assert!(u.to_vec().norm() <= 1e-6, "control {u:?} not at rest");
        }
        assert_eq!(plan.cost_total, 0.0);
        assert_eq!(plan.status, SolverStatus::Converged);
        assert_eq!(plan.predicted_states.len(), 7);
        assert_eq!(plan.predicted_states[0].to_vec(), RigidBodyState::rest().to_vec());
    }

    #[test]
    fn solve_respects_bounds_and_never_worsens_warm_start() {
        let planner = small_planner(8);
        let mut req = request_at_goal(0.4);
        req.x0 = RigidBodyState::rest_at(Vector3::new(3.0, -1.0, 2.0));

        let warm = vec![
            ControlInput::new(Vector3::new(0.4, -0.4, 0.4), Vector3::new(0.1, -0.1, 0.1));
            8
        ];
        let warm_cost = planner.horizon_cost(&req, &warm).unwrap().total();
        let plan = planner.solve(&req, Some(&warm)).unwrap();

        assert!(plan.cost_total <= warm_cost + 1e-9);
        for u in &plan.controls {
            assert!(planner.bounds.contains(u, 1e-12), "bounds violated by {u:?}");
        }
        assert_relative_eq!(
            plan.cost_total,
            plan.cost_tracking + plan.gamma_used * plan.cost_info,
            max_relative = 1e-9
        );
    }

    #[test]
    fn degraded_fallback_on_numerical_blowup() {
        let planner = small_planner(4);
        let mut req = request_at_goal(0.0);
        req.x0.v = Vector3::new(1e200, 0.0, 0.0); // finite but explosive
        let plan = planner.solve(&req, None).unwrap();
        assert_eq!(plan.status, SolverStatus::Degraded);
        for u in &plan.controls {
            assert_eq!(*u, ControlInput::ZERO);
        }
        assert_eq!(receding_step(&plan), ControlInput::ZERO);
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let planner = small_planner(3);
        let mut req = request_at_goal(0.0);
        req.gamma = -0.1;
        assert!(matches!(
            planner.solve(&req, None),
            Err(PlannerError::InvalidConfig(_))
        ));

        let req = request_at_goal(0.0);
        assert!(matches!(
            planner.solve(&req, Some(&[ControlInput::ZERO; 2])),
            Err(PlannerError::WarmStartLength)
        ));

        let zero_horizon = Planner::new(
            CostWeights::default(),
            InputBounds::default(),
            SolverConfig {
                horizon: 0,
                ..SolverConfig::default()
            },
        );
        assert!(matches!(
            zero_horizon.solve(&request_at_goal(0.0), None),
            Err(PlannerError::EmptyHorizon)
        ));
    }
}
