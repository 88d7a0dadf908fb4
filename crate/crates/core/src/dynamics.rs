//! Rigid-body dynamics of a holonomic free flyer actuated by a body-fixed
//! force and torque.
//!
//! The state is 13-dimensional: position `r`, attitude quaternion `q`
//! (scalar-last, body to inertial), inertial-frame linear velocity `v` and
//! body-frame angular velocity `w`. The inertia tensor is diagonal, so the
//! uncertain parameter vector is `(m, ixx, iyy, izz)` throughout the crate.
//!
//! Integration is fixed-step RK4 with quaternion renormalisation after every
//! step. The RK4 stage evaluations are exposed crate-internally so that the
//! sensitivity propagation in [`crate::sensitivity`] advances the state with
//! bit-identical arithmetic.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3, Vector4, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Flat 13-vector layout of the rigid-body state.
pub type StateVec = SVector<f64, 13>;

/// Offset of the position block in [`StateVec`].
pub const POS: usize = 0;
/// Offset of the quaternion block (x, y, z, scalar) in [`StateVec`].
pub const ATT: usize = 3;
/// Offset of the linear-velocity block in [`StateVec`].
pub const LINVEL: usize = 7;
/// Offset of the angular-velocity block in [`StateVec`].
pub const ANGVEL: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("inertial parameters must be finite and positive")]
    InvalidParams,
    #[error("time step must be finite and positive")]
    InvalidTimeStep,
    #[error("noise variances must be finite and non-negative")]
    InvalidNoise,
    #[error("attitude is not a planar rotation (off-plane tilt {tilt:.3e})")]
    OffPlane { tilt: f64 },
}

/// Rigid-body state. `q` is stored `[qx, qy, qz, qw]` with the scalar last
/// and maps body coordinates to inertial coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidBodyState {
    pub r: Vector3<f64>,
    pub q: Vector4<f64>,
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
}

impl RigidBodyState {
    pub fn new(r: Vector3<f64>, q: Vector4<f64>, v: Vector3<f64>, w: Vector3<f64>) -> Self {
        Self { r, q, v, w }
    }

    /// State at rest at the origin with identity attitude.
    pub fn rest() -> Self {
        Self {
            r: Vector3::zeros(),
            q: quat_identity(),
            v: Vector3::zeros(),
            w: Vector3::zeros(),
        }
    }

    /// State at rest at `r` with identity attitude.
    pub fn rest_at(r: Vector3<f64>) -> Self {
        Self { r, ..Self::rest() }
    }

    pub fn from_vec(x: &StateVec) -> Self {
        Self {
            r: x.fixed_rows::<3>(POS).into_owned(),
            q: x.fixed_rows::<4>(ATT).into_owned(),
            v: x.fixed_rows::<3>(LINVEL).into_owned(),
            w: x.fixed_rows::<3>(ANGVEL).into_owned(),
        }
    }

    pub fn to_vec(&self) -> StateVec {
        let mut x = StateVec::zeros();
        x.fixed_rows_mut::<3>(POS).copy_from(&self.r);
        x.fixed_rows_mut::<4>(ATT).copy_from(&self.q);
        x.fixed_rows_mut::<3>(LINVEL).copy_from(&self.v);
        x.fixed_rows_mut::<3>(ANGVEL).copy_from(&self.w);
        x
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|c| c.is_finite())
    }

    /// Deviation of the quaternion norm from one.
    pub fn quat_norm_error(&self) -> f64 {
        (self.q.norm() - 1.0).abs()
    }
}

/// Mass and diagonal inertia, the four uncertain parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertialParams {
    pub m: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
}

impl InertialParams {
    pub fn new(m: f64, ixx: f64, iyy: f64, izz: f64) -> Self {
        Self { m, ixx, iyy, izz }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = [self.m, self.ixx, self.iyy, self.izz]
            .iter()
            .all(|p| p.is_finite() && *p > 0.0);
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidParams)
        }
    }

    pub fn to_vec(&self) -> Vector4<f64> {
        Vector4::new(self.m, self.ixx, self.iyy, self.izz)
    }

    pub fn from_vec(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    /// Componentwise relative error against a reference parameter set.
    pub fn relative_error(&self, truth: &InertialParams) -> Vector4<f64> {
        let a = self.to_vec();
        let b = truth.to_vec();
        Vector4::from_fn(|i, _| (a[i] - b[i]) / b[i])
    }
}

/// Commanded body-frame force and torque, held constant over a control interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlInput {
    pub f: Vector3<f64>,
    pub tau: Vector3<f64>,
}

impl ControlInput {
    pub const ZERO: Self = Self {
        f: Vector3::new(0.0, 0.0, 0.0),
        tau: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(f: Vector3<f64>, tau: Vector3<f64>) -> Self {
        Self { f, tau }
    }

    pub fn from_vec(u: &Vector6<f64>) -> Self {
        Self {
            f: Vector3::new(u[0], u[1], u[2]),
            tau: Vector3::new(u[3], u[4], u[5]),
        }
    }

    pub fn to_vec(&self) -> Vector6<f64> {
        Vector6::new(
            self.f.x, self.f.y, self.f.z, self.tau.x, self.tau.y, self.tau.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|c| c.is_finite())
    }
}

/// Frame in which the commanded force is expressed. Torques are always body-frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceFrame {
    #[default]
    Body,
    Inertial,
}

/// Velocity measurement: inertial linear velocity and body angular velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
}

impl Measurement {
    pub fn to_vec(&self) -> Vector6<f64> {
        Vector6::new(self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z)
    }

    pub fn from_vec(y: &Vector6<f64>) -> Self {
        Self {
            v: Vector3::new(y[0], y[1], y[2]),
            w: Vector3::new(y[3], y[4], y[5]),
        }
    }
}

/// Diagonal noise model: measurement variances for the six velocity channels
/// and process variances for all thirteen state components.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub meas_var: Vector6<f64>,
    pub process_var: StateVec,
    pub seed: u64,
}

impl NoiseSpec {
    /// Noise-free specification.
    pub fn none(seed: u64) -> Self {
        Self {
            meas_var: Vector6::zeros(),
            process_var: StateVec::zeros(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = self
            .meas_var
            .iter()
            .chain(self.process_var.iter())
            .all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidNoise)
        }
    }
}

/// Planar (3DoF) reduction of the full state: position and velocity in the
/// x-y plane plus heading and yaw rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarState {
    pub rx: f64,
    pub ry: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

// --- quaternion helpers (scalar-last) ---

pub fn quat_identity() -> Vector4<f64> {
    Vector4::new(0.0, 0.0, 0.0, 1.0)
}

pub fn quat_normalize(q: &Vector4<f64>) -> Vector4<f64> {
    q / q.norm()
}

pub fn quat_conj(q: &Vector4<f64>) -> Vector4<f64> {
    Vector4::new(-q[0], -q[1], -q[2], q[3])
}

/// Hamilton product `a ⊗ b` for scalar-last quaternions.
pub fn quat_mul(a: &Vector4<f64>, b: &Vector4<f64>) -> Vector4<f64> {
    let (av, aw) = (Vector3::new(a[0], a[1], a[2]), a[3]);
    let (bv, bw) = (Vector3::new(b[0], b[1], b[2]), b[3]);
    let v = aw * bv + bw * av + av.cross(&bv);
    let w = aw * bw - av.dot(&bv);
    Vector4::new(v.x, v.y, v.z, w)
}

/// Quaternion from a rotation axis (need not be unit) and an angle in radians.
pub fn quat_from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Vector4<f64> {
    let n = axis.norm();
    if n == 0.0 {
        return quat_identity();
    }
    let half = 0.5 * angle;
    let s = half.sin() / n;
    Vector4::new(axis.x * s, axis.y * s, axis.z * s, half.cos())
}

/// Body-to-inertial rotation matrix. The homogeneous form
/// `(qw² - qv·qv) I + 2 qv qvᵀ + 2 qw [qv×]` is used rather than the
/// unit-norm shortcut so the analytic quaternion Jacobians in
/// [`crate::sensitivity`] are the exact derivative of this expression; the
/// two coincide on unit quaternions.
pub fn rotation_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (x, y, z, w) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        w * w + x * x - y * y - z * z,
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        w * w - x * x + y * y - z * z,
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        w * w - x * x - y * y + z * z,
    )
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Kinematics matrix `Ξ(q)` with `q̇ = ½ Ξ(q) ω` for body-frame `ω`.
pub fn quat_rate_matrix(q: &Vector4<f64>) -> SMatrix<f64, 4, 3> {
    let (x, y, z, w) = (q[0], q[1], q[2], q[3]);
    SMatrix::<f64, 4, 3>::new(w, -z, y, z, w, -x, -y, x, w, -x, -y, -z)
}

/// Kinematics matrix `Ω(ω)` with `q̇ = ½ Ω(ω) q`; the quaternion Jacobian of `q̇`.
pub fn omega_matrix(w: &Vector3<f64>) -> SMatrix<f64, 4, 4> {
    SMatrix::<f64, 4, 4>::new(
        0.0, w.z, -w.y, w.x, -w.z, 0.0, w.x, w.y, w.y, -w.x, 0.0, w.z, -w.x, -w.y, -w.z, 0.0,
    )
}

/// Vector part of the error quaternion `q ⊗ q_goal⁻¹`, sign-normalised to the
/// shorter rotation. Zero iff the attitudes coincide.
pub fn quat_error_vector(q: &Vector4<f64>, q_goal: &Vector4<f64>) -> Vector3<f64> {
    let e = quat_mul(q, &quat_conj(q_goal));
    let s = if e[3] < 0.0 { -1.0 } else { 1.0 };
    Vector3::new(s * e[0], s * e[1], s * e[2])
}

// --- dynamics ---

/// Time derivative of the 13-dimensional state.
///
/// Translational acceleration is `R(q) f / m` for body-frame force commands
/// (or `f / m` for inertial-frame ones); rotation follows Euler's equations
/// with diagonal inertia.
pub fn deriv(
    x: &RigidBodyState,
    u: &ControlInput,
    theta: &InertialParams,
    frame: ForceFrame,
) -> Result<StateVec, DynamicsError> {
    theta.validate()?;
    if !x.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if !u.is_finite() {
        return Err(DynamicsError::NonFinite("control input"));
    }
    Ok(deriv_unchecked(x, u, theta, frame))
}

pub(crate) fn deriv_unchecked(
    x: &RigidBodyState,
    u: &ControlInput,
    theta: &InertialParams,
    frame: ForceFrame,
) -> StateVec {
    let qv = Vector3::new(x.q[0], x.q[1], x.q[2]);
    let qw = x.q[3];

    let qdot_v = 0.5 * (qw * x.w + qv.cross(&x.w));
    let qdot_w = -0.5 * qv.dot(&x.w);

    let accel = match frame {
        ForceFrame::Body => rotation_matrix(&x.q) * u.f / theta.m,
        ForceFrame::Inertial => u.f / theta.m,
    };

    let wdot = Vector3::new(
        (u.tau.x - (theta.izz - theta.iyy) * x.w.y * x.w.z) / theta.ixx,
        (u.tau.y - (theta.ixx - theta.izz) * x.w.z * x.w.x) / theta.iyy,
        (u.tau.z - (theta.iyy - theta.ixx) * x.w.x * x.w.y) / theta.izz,
    );

    let mut dx = StateVec::zeros();
    dx.fixed_rows_mut::<3>(POS).copy_from(&x.v);
    dx.fixed_rows_mut::<4>(ATT)
        .copy_from(&Vector4::new(qdot_v.x, qdot_v.y, qdot_v.z, qdot_w));
    dx.fixed_rows_mut::<3>(LINVEL).copy_from(&accel);
    dx.fixed_rows_mut::<3>(ANGVEL).copy_from(&wdot);
    dx
}

pub(crate) fn rk4_combine(x: &StateVec, k: &[StateVec; 4], dt: f64) -> StateVec {
    x + (dt / 6.0) * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3])
}

// The stage construction here is mirrored by the joint state/sensitivity
// integrator so both advance the state with identical floating-point
// operations.
pub(crate) fn step_unchecked(
    x: &RigidBodyState,
    u: &ControlInput,
    theta: &InertialParams,
    dt: f64,
    frame: ForceFrame,
) -> RigidBodyState {
    let x0 = x.to_vec();
    let k1 = deriv_unchecked(x, u, theta, frame);
    let x2 = RigidBodyState::from_vec(&(x0 + (0.5 * dt) * k1));
    let k2 = deriv_unchecked(&x2, u, theta, frame);
    let x3 = RigidBodyState::from_vec(&(x0 + (0.5 * dt) * k2));
    let k3 = deriv_unchecked(&x3, u, theta, frame);
    let x4 = RigidBodyState::from_vec(&(x0 + dt * k3));
    let k4 = deriv_unchecked(&x4, u, theta, frame);
    let mut next = RigidBodyState::from_vec(&rk4_combine(&x0, &[k1, k2, k3, k4], dt));
    next.q = quat_normalize(&next.q);
    next
}

/// Advance the state by one RK4 step of size `dt` and renormalise the quaternion.
pub fn step(
    x: &RigidBodyState,
    u: &ControlInput,
    theta: &InertialParams,
    dt: f64,
    frame: ForceFrame,
) -> Result<RigidBodyState, DynamicsError> {
    theta.validate()?;
    if !x.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if !u.is_finite() {
        return Err(DynamicsError::NonFinite("control input"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::InvalidTimeStep);
    }
    let next = step_unchecked(x, u, theta, dt, frame);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DynamicsError::NonFinite("integrated state"))
    }
}

/// Advance the state over `dt_total` using `substeps` equal RK4 steps under a
/// zero-order-hold input.
pub fn propagate(
    x: &RigidBodyState,
    u: &ControlInput,
    theta: &InertialParams,
    dt_total: f64,
    substeps: u32,
    frame: ForceFrame,
) -> Result<RigidBodyState, DynamicsError> {
    if substeps == 0 || !(dt_total.is_finite() && dt_total > 0.0) {
        return Err(DynamicsError::InvalidTimeStep);
    }
    let h = dt_total / f64::from(substeps);
    let mut state = *x;
    for i in 0..substeps {
        state = if i == 0 {
            step(&state, u, theta, h, frame)?
        } else {
            step_unchecked(&state, u, theta, h, frame)
        };
    }
    if state.is_finite() {
        Ok(state)
    } else {
        Err(DynamicsError::NonFinite("integrated state"))
    }
}

/// Sample a velocity measurement. Six standard normal draws are consumed from
/// `rng` regardless of the variances, so noise-free channels stay aligned
/// with noisy ones in the random stream.
pub fn measure<R: Rng + ?Sized>(
    x: &RigidBodyState,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<Measurement, DynamicsError> {
    noise.validate()?;
    if !x.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    let mut y = Vector6::new(x.v.x, x.v.y, x.v.z, x.w.x, x.w.y, x.w.z);
    for i in 0..6 {
        let xi: f64 = rng.sample(StandardNormal);
        y[i] += noise.meas_var[i].sqrt() * xi;
    }
    Ok(Measurement::from_vec(&y))
}

/// Project a full state onto the x-y plane. With `strict` set the attitude
/// must be a pure z rotation (off-plane tilt below 1e-6); otherwise the tilt
/// is discarded.
pub fn planar_reduce(x: &RigidBodyState, strict: bool) -> Result<PlanarState, DynamicsError> {
    if !x.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    let q = quat_normalize(&x.q);
    let tilt = (q[0] * q[0] + q[1] * q[1]).sqrt();
    if strict && tilt > 1e-6 {
        return Err(DynamicsError::OffPlane { tilt });
    }
    let mut psi = 2.0 * q[2].atan2(q[3]);
    if psi > std::f64::consts::PI {
        psi -= 2.0 * std::f64::consts::PI;
    } else if psi <= -std::f64::consts::PI {
        psi += 2.0 * std::f64::consts::PI;
    }
    Ok(PlanarState {
        rx: x.r.x,
        ry: x.r.y,
        psi,
        vx: x.v.x,
        vy: x.v.y,
        wz: x.w.z,
    })
}

/// Rotational kinetic energy plus translational kinetic energy.
pub fn kinetic_energy(x: &RigidBodyState, theta: &InertialParams) -> f64 {
    let trans = 0.5 * theta.m * x.v.norm_squared();
    let rot = 0.5
        * (theta.ixx * x.w.x * x.w.x + theta.iyy * x.w.y * x.w.y + theta.izz * x.w.z * x.w.z);
    trans + rot
}

/// Angular momentum expressed in the inertial frame.
pub fn angular_momentum_inertial(x: &RigidBodyState, theta: &InertialParams) -> Vector3<f64> {
    let l_body = Vector3::new(
        theta.ixx * x.w.x,
        theta.iyy * x.w.y,
        theta.izz * x.w.z,
    );
    rotation_matrix(&quat_normalize(&x.q)) * l_body
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn paper_params() -> InertialParams {
        InertialParams::new(9.7, 7.0, 7.0, 10.0)
    }

    #[test]
    fn equilibrium_state_has_zero_derivative() {
        let dx = deriv(
            &RigidBodyState::rest(),
            &ControlInput::ZERO,
            &paper_params(),
            ForceFrame::Body,
        )
        .unwrap();
        assert_eq!(dx, StateVec::zeros());
    }

    #[test]
    fn pure_thrust_accelerates_at_f_over_m() {
        let u = ControlInput::new(Vector3::new(9.7, 0.0, 0.0), Vector3::zeros());
        let dx = deriv(&RigidBodyState::rest(), &u, &paper_params(), ForceFrame::Body).unwrap();
        assert_relative_eq!(dx[LINVEL], 1.0, max_relative = 1e-15);
        assert_eq!(dx[LINVEL + 1], 0.0);
        assert_eq!(dx[LINVEL + 2], 0.0);
    }

    #[test]
    fn euler_coupling_matches_hand_derivation() {
        // wdot_x = (iyy - izz) * wy * wz / ixx = (7 - 10) * 0.01 / 7
        let mut x = RigidBodyState::rest();
        x.w = Vector3::new(0.0, 0.1, 0.1);
        let dx = deriv(&x, &ControlInput::ZERO, &paper_params(), ForceFrame::Body).unwrap();
        assert_relative_eq!(dx[ANGVEL], -0.03 / 7.0, max_relative = 1e-12);
        assert_relative_eq!(dx[ANGVEL], -0.0042857, max_relative = 1e-4);
    }

    #[test]
    fn body_frame_force_follows_attitude() {
        let mut x = RigidBodyState::rest();
        // 90 degrees about z: body x points along inertial y.
        x.q = quat_from_axis_angle(&Vector3::z(), std::f64::consts::FRAC_PI_2);
        let u = ControlInput::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros());
        let p = paper_params();
        let dx = deriv(&x, &u, &p, ForceFrame::Body).unwrap();
        assert_relative_eq!(dx[LINVEL], 0.0, epsilon = 1e-15);
        assert_relative_eq!(dx[LINVEL + 1], 1.0 / p.m, max_relative = 1e-12);

        let dx_inertial = deriv(&x, &u, &p, ForceFrame::Inertial).unwrap();
        assert_relative_eq!(dx_inertial[LINVEL], 1.0 / p.m, max_relative = 1e-12);
        assert_relative_eq!(dx_inertial[LINVEL + 1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_thrust_integrates_exactly_over_unit_interval() {
        // Constant acceleration is a cubic-free trajectory, so a single RK4
        // step of 1 s lands on v = a t, r = a t^2 / 2 exactly.
        let p = paper_params();
        let u = ControlInput::new(Vector3::new(p.m, 0.0, 0.0), Vector3::zeros());
        let next = step(&RigidBodyState::rest(), &u, &p, 1.0, ForceFrame::Body).unwrap();
        assert_relative_eq!(next.v.x, 1.0, max_relative = 1e-14);
        assert_relative_eq!(next.r.x, 0.5, max_relative = 1e-14);
        assert_eq!(next.q, quat_identity());
    }

    #[test]
    fn principal_axis_spin_is_stationary() {
        let mut x = RigidBodyState::rest();
        x.w = Vector3::new(0.0, 0.0, 1.0);
        let state = propagate(&x, &ControlInput::ZERO, &paper_params(), 10.0, 1000, ForceFrame::Body)
            .unwrap();
        assert_relative_eq!(state.w.z, 1.0, max_relative = 1e-12);
        assert!(state.w.x.abs() < 1e-12 && state.w.y.abs() < 1e-12);
        assert!(state.quat_norm_error() < 1e-12);
    }

    #[test]
    fn propagate_splits_match_single_call() {
        let p = paper_params();
        let u = ControlInput::new(Vector3::new(0.3, -0.2, 0.1), Vector3::new(0.05, 0.02, -0.08));
        let mut x = RigidBodyState::rest();
        x.w = Vector3::new(0.2, -0.1, 0.3);

        let whole = propagate(&x, &u, &p, 1.0, 100, ForceFrame::Body).unwrap();
        let mut split = x;
        for _ in 0..2 {
            split = propagate(&split, &u, &p, 0.5, 50, ForceFrame::Body).unwrap();
        }
        assert_relative_eq!((whole.to_vec() - split.to_vec()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn noise_free_measurement_is_exact() {
        let mut x = RigidBodyState::rest();
        x.v = Vector3::new(0.1, -0.2, 0.3);
        x.w = Vector3::new(-0.01, 0.02, -0.03);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = measure(&x, &NoiseSpec::none(7), &mut rng).unwrap();
        assert_eq!(y.v, x.v);
        assert_eq!(y.w, x.w);
    }

    #[test]
    fn measurement_with_same_seed_is_reproducible() {
        let mut x = RigidBodyState::rest();
        x.v = Vector3::new(1.0, 2.0, 3.0);
        let noise = NoiseSpec {
            meas_var: Vector6::repeat(1e-2),
            process_var: StateVec::zeros(),
            seed: 42,
        };
        let mut rng_a = ChaCha8Rng::seed_from_u64(noise.seed);
        let mut rng_b = ChaCha8Rng::seed_from_u64(noise.seed);
        let ya = measure(&x, &noise, &mut rng_a).unwrap();
        let yb = measure(&x, &noise, &mut rng_b).unwrap();
        assert_eq!(ya.to_vec(), yb.to_vec());
    }

    #[test]
    fn measurement_noise_covariance_matches_spec() {
        // Monte-Carlo check of the sampler against the requested covariance.
        let x = RigidBodyState::rest();
        let var = 1e-2;
        let noise = NoiseSpec {
            meas_var: Vector6::repeat(var),
            process_var: StateVec::zeros(),
            seed: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        let n = 100_000;
        let samples: Vec<Vector6<f64>> = (0..n)
            .map(|_| measure(&x, &noise, &mut rng).unwrap().to_vec())
            .collect();
        let mean = samples.iter().sum::<Vector6<f64>>() / n as f64;
        let mut cov = nalgebra::Matrix6::<f64>::zeros();
        for s in &samples {
            let d = s - mean;
            cov += d * d.transpose();
        }
        cov /= (n - 1) as f64;
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j { var } else { 0.0 };
                assert!(
                    (cov[(i, j)] - expected).abs() < 0.05 * var,
                    "cov[{i},{j}] = {} too far from {expected}",
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn planar_reduction_reads_heading() {
        let x = RigidBodyState::rest();
        let p = planar_reduce(&x, true).unwrap();
        assert_eq!(p.psi, 0.0);

        let mut x = RigidBodyState::rest();
        x.q = quat_from_axis_angle(&Vector3::z(), std::f64::consts::FRAC_PI_2);
        x.r = Vector3::new(1.0, 2.0, 0.0);
        x.v = Vector3::new(0.1, 0.2, 0.0);
        x.w = Vector3::new(0.0, 0.0, 0.4);
        let p = planar_reduce(&x, true).unwrap();
        assert_relative_eq!(p.psi, std::f64::consts::FRAC_PI_2, max_relative = 1e-12);
        assert_eq!((p.rx, p.ry, p.vx, p.vy, p.wz), (1.0, 2.0, 0.1, 0.2, 0.4));
    }

    #[test]
    fn planar_reduction_rejects_tilt_when_strict() {
        let mut x = RigidBodyState::rest();
        x.q = quat_from_axis_angle(&Vector3::x(), 0.1);
        match planar_reduce(&x, true) {
            Err(DynamicsError::OffPlane { tilt }) => assert!(tilt > 1e-3),
            other => panic!("expected off-plane error, got {other:?}"),
        }
        assert!(planar_reduce(&x, false).is_ok());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let x = RigidBodyState::rest();
        let bad = InertialParams::new(-1.0, 7.0, 7.0, 10.0);
        assert_eq!(
            deriv(&x, &ControlInput::ZERO, &bad, ForceFrame::Body),
            Err(DynamicsError::InvalidParams)
        );
        let p = paper_params();
        assert_eq!(
            step(&x, &ControlInput::ZERO, &p, 0.0, ForceFrame::Body),
            Err(DynamicsError::InvalidTimeStep)
        );
        let mut nan_state = x;
        nan_state.v.x = f64::NAN;
        assert!(deriv(&nan_state, &ControlInput::ZERO, &p, ForceFrame::Body).is_err());
    }

    #[test]
    fn quaternion_error_vector_is_zero_at_goal_and_sign_normalised() {
        let q = quat_from_axis_angle(&Vector3::new(1.0, 2.0, -0.5), 0.8);
        assert_relative_eq!(quat_error_vector(&q, &q).norm(), 0.0, epsilon = 1e-15);
        // The double cover maps -q to the same rotation.
        assert_relative_eq!(quat_error_vector(&(-q), &q).norm(), 0.0, epsilon = 1e-15);
    }
}
