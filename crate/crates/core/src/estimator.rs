//! Unscented Kalman filter over the inertial parameters.
//!
//! The filter state is the componentwise logarithm of `(m, ixx, iyy, izz)`,
//! which keeps every estimate strictly positive no matter what the updates
//! do. Parameters follow a random walk with small process noise; the
//! measurement model propagates the previous fused rigid-body state one
//! control interval under each sigma-point's parameters and predicts the
//! velocity measurement. A small health monitor watches covariance traces
//! and innovation magnitudes so the closed loop can stop adopting estimates
//! from a diverging filter.

use nalgebra::{Matrix4, Matrix6, SMatrix, Vector4, Vector6};
use thiserror::Error;

use crate::dynamics::{
    self, ControlInput, DynamicsError, ForceFrame, InertialParams, Measurement, RigidBodyState,
};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("invalid UKF configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("belief covariance is not positive definite")]
    CovarianceNotPd,
    #[error("posterior covariance lost positive semidefiniteness (min eigenvalue {min_eig:.3e})")]
    PosteriorNotPsd { min_eig: f64 },
    #[error("innovation covariance is not positive definite")]
    InnovationNotPd,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Unscented transform and measurement-model settings.
#[derive(Clone, Debug, PartialEq)]
pub struct UkfConfig {
    /// Sigma-point spread parameter.
    pub alpha: f64,
    /// Prior-distribution shape parameter (2 is exact for Gaussians).
    pub beta: f64,
    /// Secondary scaling parameter.
    pub kappa: f64,
    /// Diagonal random-walk process noise added to the log-parameter
    /// covariance at every predict.
    pub q_theta: Vector4<f64>,
    /// Measurement noise variances assumed by the filter; must be positive
    /// even when the actual sensor is noiseless.
    pub meas_var: Vector6<f64>,
    /// RK4 substeps for the one-interval measurement prediction.
    pub substeps: u32,
    pub frame: ForceFrame,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-1,
            beta: 2.0,
            kappa: 0.0,
            q_theta: Vector4::repeat(1e-8),
            meas_var: Vector6::repeat(1e-6),
            substeps: 10,
            frame: ForceFrame::Body,
        }
    }
}

impl UkfConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(EstimatorError::InvalidConfig("alpha must be positive"));
        }
        if !self.beta.is_finite() || !self.kappa.is_finite() {
            return Err(EstimatorError::InvalidConfig("beta and kappa must be finite"));
        }
        if self.alpha * self.alpha * (4.0 + self.kappa) <= 0.0 {
            return Err(EstimatorError::InvalidConfig("kappa too negative"));
        }
        if self.q_theta.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return Err(EstimatorError::InvalidConfig("q_theta must be non-negative"));
        }
        if self.meas_var.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(EstimatorError::InvalidConfig("meas_var must be positive"));
        }
        if self.substeps == 0 {
            return Err(EstimatorError::InvalidConfig("substeps must be at least 1"));
        }
        Ok(())
    }
}

/// Gaussian belief over the log-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorBelief {
    log_mean: Vector4<f64>,
    cov: Matrix4<f64>,
}

impl EstimatorBelief {
    pub fn new(log_mean: Vector4<f64>, cov: Matrix4<f64>) -> Result<Self, EstimatorError> {
        if !log_mean.iter().all(|c| c.is_finite()) || !cov.iter().all(|c| c.is_finite()) {
            return Err(EstimatorError::NonFinite("belief"));
        }
        let sym = 0.5 * (cov + cov.transpose());
        let min_eig = sym
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min_eig < -1e-10 {
            return Err(EstimatorError::PosteriorNotPsd { min_eig });
        }
        Ok(Self { log_mean, cov: sym })
    }

    /// Belief centred on `guess` with independent log-space variances.
    pub fn from_guess(guess: &InertialParams, log_var: f64) -> Result<Self, EstimatorError> {
        guess.validate()?;
        if !(log_var.is_finite() && log_var > 0.0) {
            return Err(EstimatorError::InvalidConfig("log_var must be positive"));
        }
        let g = guess.to_vec();
        Self::new(
            Vector4::from_fn(|i, _| g[i].ln()),
            Matrix4::from_diagonal(&Vector4::repeat(log_var)),
        )
    }

    pub fn log_mean(&self) -> &Vector4<f64> {
        &self.log_mean
    }

    pub fn cov(&self) -> &Matrix4<f64> {
        &self.cov
    }

    pub fn cov_diag(&self) -> Vector4<f64> {
        self.cov.diagonal()
    }

    /// Point estimate in physical units; positive by construction.
    pub fn mean(&self) -> InertialParams {
        let e = self.log_mean.map(f64::exp);
        InertialParams::from_vec(&e)
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }

    /// Trace of the covariance block over `(ixx, iyy, izz)`.
    pub fn inertia_trace(&self) -> f64 {
        self.cov[(1, 1)] + self.cov[(2, 2)] + self.cov[(3, 3)]
    }
}

/// Scaled unscented-transform weights for dimension 4: mean weights sum to
/// one; covariance weights add the `1 - α² + β` correction on the centre.
pub fn sigma_weights(cfg: &UkfConfig) -> (f64, [f64; 2], f64) {
    let n = 4.0;
    let lambda = cfg.alpha * cfg.alpha * (n + cfg.kappa) - n;
    let scale = n + lambda;
    let wm0 = lambda / scale;
    let wc0 = wm0 + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    let wi = 1.0 / (2.0 * scale);
    (scale, [wm0, wc0], wi)
}

fn sigma_points(
    belief: &EstimatorBelief,
    cfg: &UkfConfig,
) -> Result<[Vector4<f64>; 9], EstimatorError> {
    let (scale, _, _) = sigma_weights(cfg);
    let chol = belief
        .cov
        .cholesky()
        .ok_or(EstimatorError::CovarianceNotPd)?;
    let l = chol.l() * scale.sqrt();
    let mut pts = [belief.log_mean; 9];
    for i in 0..4 {
        let col = l.column(i).into_owned();
        pts[1 + i] = belief.log_mean + col;
        pts[5 + i] = belief.log_mean - col;
    }
    Ok(pts)
}

/// Random-walk time update: the mean is carried over and the process noise
/// widens the covariance.
pub fn ukf_predict(belief: &EstimatorBelief, cfg: &UkfConfig) -> EstimatorBelief {
    let mut cov = belief.cov;
    for i in 0..4 {
        cov[(i, i)] += cfg.q_theta[i];
    }
    EstimatorBelief {
        log_mean: belief.log_mean,
        cov,
    }
}

/// Unscented measurement prediction for a velocity measurement taken `dt`
/// after the fused state `x_prev` under the held input `u`.
#[derive(Clone, Debug)]
pub struct MeasurementPrediction {
    pub mean: Vector6<f64>,
    /// Innovation covariance, including the assumed measurement noise.
    pub cov: Matrix6<f64>,
    /// Cross covariance between log-parameters and measurement.
    pub cross: SMatrix<f64, 4, 6>,
}

pub fn predict_measurement(
    belief: &EstimatorBelief,
    x_prev: &RigidBodyState,
    u: &ControlInput,
    dt: f64,
    cfg: &UkfConfig,
) -> Result<MeasurementPrediction, EstimatorError> {
    cfg.validate()?;
    if !x_prev.is_finite() {
        return Err(EstimatorError::NonFinite("previous fused state"));
    }
    let pts = sigma_points(belief, cfg)?;
    let (_, [wm0, wc0], wi) = sigma_weights(cfg);

    let mut h = [Vector6::zeros(); 9];
    for (i, p) in pts.iter().enumerate() {
        let theta = InertialParams::from_vec(&p.map(f64::exp));
        if theta.validate().is_err() {
            return Err(EstimatorError::NonFinite("sigma-point parameters"));
        }
        let state = dynamics::propagate(x_prev, u, &theta, dt, cfg.substeps, cfg.frame)?;
        h[i] = Vector6::new(
            state.v.x, state.v.y, state.v.z, state.w.x, state.w.y, state.w.z,
        );
    }

    let mut mean = wm0 * h[0];
    for hi in h.iter().skip(1) {
        mean += wi * hi;
    }

    let mut cov = Matrix6::from_diagonal(&cfg.meas_var);
    let mut cross = SMatrix::<f64, 4, 6>::zeros();
    for (i, hi) in h.iter().enumerate() {
        let w = if i == 0 { wc0 } else { wi };
        let dh = hi - mean;
        let dx = pts[i] - belief.log_mean;
        cov += w * dh * dh.transpose();
        cross += w * dx * dh.transpose();
    }
    cov = 0.5 * (cov + cov.transpose());

    Ok(MeasurementPrediction { mean, cov, cross })
}

/// Outcome of a measurement update.
#[derive(Clone, Debug)]
pub struct UpdateOutcome {
    pub belief: EstimatorBelief,
    pub innovation: Vector6<f64>,
    /// Largest componentwise innovation magnitude in units of the predicted
    /// innovation standard deviation; the health monitor's spike signal.
    pub innovation_sigma: f64,
}

pub fn ukf_update(
    belief: &EstimatorBelief,
    x_prev: &RigidBodyState,
    u: &ControlInput,
    y: &Measurement,
    dt: f64,
    cfg: &UkfConfig,
) -> Result<UpdateOutcome, EstimatorError> {
    let pred = predict_measurement(belief, x_prev, u, dt, cfg)?;
    let chol = pred
        .cov
        .cholesky()
        .ok_or(EstimatorError::InnovationNotPd)?;
    let gain = pred.cross * chol.inverse();

    let innovation = y.to_vec() - pred.mean;
    if !innovation.iter().all(|c| c.is_finite()) {
        return Err(EstimatorError::NonFinite("innovation"));
    }
    let log_mean = belief.log_mean + gain * innovation;
    // The log parametrisation keeps estimates positive only within f64
    // range; a jump past it means the update is numerically meaningless.
    if log_mean
        .map(f64::exp)
        .iter()
        .any(|p| !p.is_finite() || *p <= 0.0)
    {
        return Err(EstimatorError::NonFinite("posterior parameters"));
    }
    let cov = belief.cov - gain * pred.cov * gain.transpose();
    let posterior = EstimatorBelief::new(log_mean, cov)?;

    let mut innovation_sigma: f64 = 0.0;
    for i in 0..6 {
        innovation_sigma = innovation_sigma.max(innovation[i].abs() / pred.cov[(i, i)].sqrt());
    }
    Ok(UpdateOutcome {
        belief: posterior,
        innovation,
        innovation_sigma,
    })
}

/// Filter health as seen by the closed loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HealthStatus {
    Healthy,
    Unhealthy,
}

/// Thresholds for declaring the filter unhealthy.
#[derive(Clone, Copy, Debug)]
pub struct DivergencePolicy {
    /// Consecutive covariance-trace increases that signal divergence.
    pub trace_run: usize,
    /// Innovation magnitude, in predicted standard deviations, that counts
    /// as a spike.
    pub spike_sigma: f64,
    /// Consecutive spikes that signal divergence.
    pub spike_run: usize,
}

impl Default for DivergencePolicy {
    fn default() -> Self {
        Self {
            trace_run: 10,
            spike_sigma: 6.0,
            spike_run: 3,
        }
    }
}

/// One belief-history record per control tick.
#[derive(Clone, Copy, Debug)]
pub struct BeliefRecord {
    pub t: f64,
    pub theta: InertialParams,
    pub cov_diag: Vector4<f64>,
    pub trace: f64,
    pub spike: bool,
    pub update_failed: bool,
}

/// Scan the history tail for the divergence signatures: a long run of
/// covariance-trace growth or repeated implausible innovations. A single
/// spike does not trip the monitor; recovery clears it.
pub fn divergence_check(history: &[BeliefRecord], policy: &DivergencePolicy) -> HealthStatus {
    let spikes = history
        .iter()
        .rev()
        .take_while(|r| r.spike || r.update_failed)
        .count();
    if policy.spike_run > 0 && spikes >= policy.spike_run {
        return HealthStatus::Unhealthy;
    }
    let mut increases = 0;
    for pair in history.windows(2).rev() {
        if pair[1].trace > pair[0].trace {
            increases += 1;
            if increases >= policy.trace_run {
                return HealthStatus::Unhealthy;
            }
        } else {
            break;
        }
    }
    HealthStatus::Healthy
}

/// Stateful per-episode estimator: owns the belief, applies
/// predict/update once per control tick and keeps the health history.
#[derive(Clone, Debug)]
pub struct ParamEstimator {
    belief: EstimatorBelief,
    cfg: UkfConfig,
    policy: DivergencePolicy,
    history: Vec<BeliefRecord>,
}

/// Per-tick report from [`ParamEstimator::step`].
#[derive(Clone, Copy, Debug)]
pub struct EstimatorStep {
    pub health: HealthStatus,
    /// False when the numerical update failed and the predicted belief was
    /// kept instead.
    pub updated: bool,
    pub innovation_sigma: f64,
}

impl ParamEstimator {
    pub fn new(
        belief: EstimatorBelief,
        cfg: UkfConfig,
        policy: DivergencePolicy,
    ) -> Result<Self, EstimatorError> {
        cfg.validate()?;
        Ok(Self {
            belief,
            cfg,
            policy,
            history: Vec::new(),
        })
    }

    pub fn belief(&self) -> &EstimatorBelief {
        &self.belief
    }

    pub fn history(&self) -> &[BeliefRecord] {
        &self.history
    }

    pub fn health(&self) -> HealthStatus {
        divergence_check(&self.history, &self.policy)
    }

    /// Advance one control tick: predict, then update with the measurement
    /// `y` taken `dt` after the fused state `x_prev`. A numerically failed
    /// update keeps the predicted belief and is recorded as a spike so the
    /// health monitor can react; input errors propagate.
    pub fn step(
        &mut self,
        t: f64,
        x_prev: &RigidBodyState,
        u: &ControlInput,
        y: &Measurement,
        dt: f64,
    ) -> Result<EstimatorStep, EstimatorError> {
        if !x_prev.is_finite() {
            return Err(EstimatorError::NonFinite("previous fused state"));
        }
        let predicted = ukf_predict(&self.belief, &self.cfg);
        let (belief, spike, updated, innovation_sigma) =
            match ukf_update(&predicted, x_prev, u, y, dt, &self.cfg) {
                Ok(out) => {
                    let spike = out.innovation_sigma > self.policy.spike_sigma;
                    (out.belief, spike, true, out.innovation_sigma)
                }
                Err(_) => (predicted, true, false, f64::INFINITY),
            };
        self.belief = belief;
        self.history.push(BeliefRecord {
            t,
            theta: self.belief.mean(),
            cov_diag: self.belief.cov_diag(),
            trace: self.belief.trace(),
            spike,
            update_failed: !updated,
        });
        Ok(EstimatorStep {
            health: self.health(),
            updated,
            innovation_sigma,
        })
    }

    /// Belief history as CSV: time, physical parameter estimates, log-space
    /// covariance diagonal and the health flag at that tick.
    pub fn history_csv(&self) -> String {
        let mut out = String::from(
            "t_s,theta_m_kg,theta_ixx_kgm2,theta_iyy_kgm2,theta_izz_kgm2,\
             pvar_log_m,pvar_log_ixx,pvar_log_iyy,pvar_log_izz,healthy\n",
        );
        for (i, r) in self.history.iter().enumerate() {
            let health = divergence_check(&self.history[..=i], &self.policy);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.t,
                r.theta.m,
                r.theta.ixx,
                r.theta.iyy,
                r.theta.izz,
                r.cov_diag[0],
                r.cov_diag[1],
                r.cov_diag[2],
                r.cov_diag[3],
                u8::from(health == HealthStatus::Healthy),
            ));
        }
        out
    }
}
