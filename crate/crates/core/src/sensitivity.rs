//! Trajectory sensitivities with respect to the inertial parameters.
//!
//! The sensitivity matrix `phi = ∂x/∂θ` (13×4, parameter order `m, ixx, iyy,
//! izz`) obeys the variational equation
//!
//! ```text
//! phi_dot = A(x, u, θ) phi + B(x, u, θ),   phi(0) = 0,
//! ```
//!
//! with `A = ∂f/∂x` and `B = ∂f/∂θ` from analytic Jacobians of the dynamics.
//! `phi` is advanced jointly with the state by the same RK4 stages as
//! [`crate::dynamics::step`], so the state part of a joint step is
//! bit-identical to stepping the state alone. The measurement sensitivity
//! needed for Fisher information is just the velocity rows of `phi` because
//! the measurement picks velocities straight out of the state.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::dynamics::{
    self, quat_normalize, rotation_matrix, ControlInput, DynamicsError, ForceFrame,
    InertialParams, RigidBodyState, StateVec, ANGVEL, ATT, LINVEL, POS,
};

/// `∂x/∂θ`: rows follow the state layout, columns are `(m, ixx, iyy, izz)`.
pub type SensitivityMatrix = SMatrix<f64, 13, 4>;

/// `∂y/∂θ` for the velocity measurement, the bottom six rows of `phi`.
pub type OutputSensitivity = SMatrix<f64, 6, 4>;

/// Jacobian blocks of the state derivative that are not structurally zero.
struct JacobianBlocks {
    /// `∂q̇/∂q = ½ Ω(ω)`.
    dq_dq: SMatrix<f64, 4, 4>,
    /// `∂q̇/∂ω = ½ Ξ(q)`.
    dq_dw: SMatrix<f64, 4, 3>,
    /// `∂v̇/∂q`; zero when the force is commanded in the inertial frame.
    dv_dq: SMatrix<f64, 3, 4>,
    /// `∂ω̇/∂ω` from the gyroscopic coupling.
    dw_dw: Matrix3<f64>,
    /// `∂v̇/∂m`.
    dv_dm: Vector3<f64>,
    /// `∂ω̇/∂(ixx, iyy, izz)`.
    dw_di: Matrix3<f64>,
}

fn jacobian_blocks(
    x: &RigidBodyState,
    u: &ControlInput,
    theta: &InertialParams,
    frame: ForceFrame,
) -> JacobianBlocks {
    let qv = Vector3::new(x.q[0], x.q[1], x.q[2]);
    let qw = x.q[3];
    let w = x.w;
    let (ixx, iyy, izz) = (theta.ixx, theta.iyy, theta.izz);

    let dq_dq = 0.5 * dynamics::omega_matrix(&w);
    let dq_dw = 0.5 * dynamics::quat_rate_matrix(&x.q);

    let (dv_dq, dv_dm) = match frame {
        ForceFrame::Body => {
            let f = u.f;
            // d(R(q) f)/dq for R = (qw² - qv·qv) I + 2 qv qvᵀ + 2 qw [qv×].
            let d_dqv = 2.0
                * (qv * f.transpose() + Matrix3::identity() * qv.dot(&f)
                    - f * qv.transpose()
                    - qw * dynamics::skew(&f));
            let d_dqw = 2.0 * (qw * f + qv.cross(&f));
            let mut dv_dq = SMatrix::<f64, 3, 4>::zeros();
            dv_dq.fixed_view_mut::<3, 3>(0, 0).copy_from(&d_dqv);
            dv_dq.fixed_view_mut::<3, 1>(0, 3).copy_from(&d_dqw);
            dv_dq /= theta.m;
            (dv_dq, -(rotation_matrix(&x.q) * f) / (theta.m * theta.m))
        }
        ForceFrame::Inertial => (
            SMatrix::<f64, 3, 4>::zeros(),
            -u.f / (theta.m * theta.m),
        ),
    };

    let k1 = (izz - iyy) / ixx;
    let k2 = (ixx - izz) / iyy;
    let k3 = (iyy - ixx) / izz;
    let dw_dw = Matrix3::new(
        0.0,
        -k1 * w.z,
        -k1 * w.y,
        -k2 * w.z,
        0.0,
        -k2 * w.x,
        -k3 * w.y,
        -k3 * w.x,
        0.0,
    );

    let wd = Vector3::new(
        (u.tau.x - (izz - iyy) * w.y * w.z) / ixx,
        (u.tau.y - (ixx - izz) * w.z * w.x) / iyy,
        (u.tau.z - (iyy - ixx) * w.x * w.y) / izz,
    );
    let dw_di = Matrix3::new(
        -wd.x / ixx,
        w.y * w.z / ixx,
        -w.y * w.z / ixx,
        -w.z * w.x / iyy,
        -wd.y / iyy,
        w.z * w.x / iyy,
        w.x * w.y / izz,
        -w.x * w.y / izz,
        -wd.z / izz,
    );

    JacobianBlocks {
        dq_dq,
        dq_dw,
        dv_dq,
        dw_dw,
        dv_dm,
        dw_di,
    }
}

/// Dense `A = ∂f/∂x` (13×13). Assembled from the same blocks that drive the
/// sensitivity propagation; mainly useful for diagnostics and tests.
pub fn state_jacobian(
    x: &RigidBodyState,
    u: &ControlInput,
    theta: &InertialParams,
    frame: ForceFrame,
) -> SMatrix<f64, 13, 13> {
    let b = jacobian_blocks(x, u, theta, frame);
    let mut a = SMatrix::<f64, 13, 13>::zeros();
    a.fixed_view_mut::<3, 3>(POS, LINVEL)
        .copy_from(&Matrix3::identity());
    a.fixed_view_mut::<4, 4>(ATT, ATT).copy_from(&b.dq_dq);
    a.fixed_view_mut::<4, 3>(ATT, ANGVEL).copy_from(&b.dq_dw);
    a.fixed_view_mut::<3, 4>(LINVEL, ATT).copy_from(&b.dv_dq);
    a.fixed_view_mut::<3, 3>(ANGVEL, ANGVEL).copy_from(&b.dw_dw);
    a
}

/// Dense `B = ∂f/∂θ` (13×4).
pub fn param_jacobian(
    x: &RigidBodyState,
    u: &ControlInput,
    theta: &InertialParams,
    frame: ForceFrame,
) -> SMatrix<f64, 13, 4> {
    let b = jacobian_blocks(x, u, theta, frame);
    let mut m = SMatrix::<f64, 13, 4>::zeros();
    m.fixed_view_mut::<3, 1>(LINVEL, 0).copy_from(&b.dv_dm);
    m.fixed_view_mut::<3, 3>(ANGVEL, 1).copy_from(&b.dw_di);
    m
}

/// `phi_dot = A phi + B`, evaluated blockwise to skip the structural zeros.
/// Matches [`state_jacobian`]` * phi + `[`param_jacobian`] to rounding.
pub fn sensitivity_deriv(
    x: &RigidBodyState,
    phi: &SensitivityMatrix,
    u: &ControlInput,
    theta: &InertialParams,
    frame: ForceFrame,
) -> SensitivityMatrix {
    joint_deriv(x, phi, u, theta, frame).1
}

/// Derivative of the joint `(x, phi)` system in one pass.
///
/// This sits at the centre of every planner gradient evaluation (four calls
/// per RK4 substep), so the Jacobian blocks are expanded to scalars, applied
/// column-by-column without materialising the small matrices, and the
/// rotated thrust and Euler angular acceleration are shared between the
/// state and sensitivity parts. The state component reproduces the plain
/// dynamics derivative expression for expression — the joint integrator must
/// advance the state bit-for-bit like the plain one, and a test holds it to
/// that.
fn joint_deriv(
    x: &RigidBodyState,
    phi: &SensitivityMatrix,
    u: &ControlInput,
    theta: &InertialParams,
    frame: ForceFrame,
) -> (StateVec, SensitivityMatrix) {
    let qv = Vector3::new(x.q[0], x.q[1], x.q[2]);
    let (qx, qy, qz, qw) = (x.q[0], x.q[1], x.q[2], x.q[3]);
    let (wx, wy, wz) = (x.w.x, x.w.y, x.w.z);
    let (ixx, iyy, izz) = (theta.ixx, theta.iyy, theta.izz);

    let qdot_v = 0.5 * (qw * x.w + qv.cross(&x.w));
    let qdot_w = -0.5 * qv.dot(&x.w);
    let wd = Vector3::new(
        (u.tau.x - (izz - iyy) * wy * wz) / ixx,
        (u.tau.y - (ixx - izz) * wz * wx) / iyy,
        (u.tau.z - (iyy - ixx) * wx * wy) / izz,
    );

    // Acceleration, ∂v̇/∂m, and ∂v̇/∂q (row-major scalars) share R(q)f.
    let (accel, dv_dm, dvq) = match frame {
        ForceFrame::Body => {
            let rf = rotation_matrix(&x.q) * u.f;
            let (fx, fy, fz) = (u.f.x, u.f.y, u.f.z);
            let qf = qx * fx + qy * fy + qz * fz;
            let s = 2.0 / theta.m;
            let dvq = [
                [
                    s * (qx * fx + qf - fx * qx),
                    s * (qx * fy - fx * qy + qw * fz),
                    s * (qx * fz - fx * qz - qw * fy),
                    s * (qw * fx + qy * fz - qz * fy),
                ],
                [
                    s * (qy * fx - fy * qx - qw * fz),
                    s * (qy * fy + qf - fy * qy),
                    s * (qy * fz - fy * qz + qw * fx),
                    s * (qw * fy + qz * fx - qx * fz),
                ],
                [
                    s * (qz * fx - fz * qx + qw * fy),
                    s * (qz * fy - fz * qy - qw * fx),
                    s * (qz * fz + qf - fz * qz),
                    s * (qw * fz + qx * fy - qy * fx),
                ],
            ];
            (rf / theta.m, -rf / (theta.m * theta.m), dvq)
        }
        ForceFrame::Inertial => (
            u.f / theta.m,
            -u.f / (theta.m * theta.m),
            [[0.0; 4]; 3],
        ),
    };

    let mut dx = StateVec::zeros();
    dx.fixed_rows_mut::<3>(POS).copy_from(&x.v);
    dx.fixed_rows_mut::<4>(ATT)
        .copy_from(&nalgebra::Vector4::new(qdot_v.x, qdot_v.y, qdot_v.z, qdot_w));
    dx.fixed_rows_mut::<3>(LINVEL).copy_from(&accel);
    dx.fixed_rows_mut::<3>(ANGVEL).copy_from(&wd);

    let k1 = (izz - iyy) / ixx;
    let k2 = (ixx - izz) / iyy;
    let k3 = (iyy - ixx) / izz;
    // ∂ω̇/∂(ixx, iyy, izz), row-major.
    let di = [
        [-wd.x / ixx, wy * wz / ixx, -wy * wz / ixx],
        [-wz * wx / iyy, -wd.y / iyy, wz * wx / iyy],
        [wx * wy / izz, -wx * wy / izz, -wd.z / izz],
    ];

    let p: &[[f64; 13]; 4] = &phi.data.0;
    let mut o = [[0.0f64; 13]; 4];
    for (j, (oc, pc)) in o.iter_mut().zip(p.iter()).enumerate() {
        let (pq0, pq1, pq2, pq3) = (pc[3], pc[4], pc[5], pc[6]);
        let (pw0, pw1, pw2) = (pc[10], pc[11], pc[12]);

        oc[0] = pc[7];
        oc[1] = pc[8];
        oc[2] = pc[9];

        // ½ Ω(ω) φ_q + ½ Ξ(q) φ_ω
        oc[3] = 0.5 * ((wz * pq1 - wy * pq2 + wx * pq3) + (qw * pw0 - qz * pw1 + qy * pw2));
        oc[4] = 0.5 * ((wx * pq2 + wy * pq3 - wz * pq0) + (qz * pw0 + qw * pw1 - qx * pw2));
        oc[5] = 0.5 * ((wy * pq0 - wx * pq1 + wz * pq3) + (qx * pw1 - qy * pw0 + qw * pw2));
        oc[6] = -0.5 * ((wx * pq0 + wy * pq1 + wz * pq2) + (qx * pw0 + qy * pw1 + qz * pw2));

        oc[7] = dvq[0][0] * pq0 + dvq[0][1] * pq1 + dvq[0][2] * pq2 + dvq[0][3] * pq3;
        oc[8] = dvq[1][0] * pq0 + dvq[1][1] * pq1 + dvq[1][2] * pq2 + dvq[1][3] * pq3;
        oc[9] = dvq[2][0] * pq0 + dvq[2][1] * pq1 + dvq[2][2] * pq2 + dvq[2][3] * pq3;

        oc[10] = -k1 * (wz * pw1 + wy * pw2);
        oc[11] = -k2 * (wz * pw0 + wx * pw2);
        oc[12] = -k3 * (wy * pw0 + wx * pw1);

        if j == 0 {
            oc[7] += dv_dm.x;
            oc[8] += dv_dm.y;
            oc[9] += dv_dm.z;
        } else {
            oc[10] += di[0][j - 1];
            oc[11] += di[1][j - 1];
            oc[12] += di[2][j - 1];
        }
    }
    (dx, SensitivityMatrix::from_array_storage(nalgebra::ArrayStorage(o)))
}

/// Advance `(x, phi)` by one joint RK4 step of size `dt`.
///
/// The state stages reuse [`crate::dynamics`] internals, so the returned
/// state is bit-identical to `dynamics::step` on the same inputs. The
/// quaternion renormalisation at the end of the step is also applied to the
/// quaternion rows of `phi` through its Jacobian, the projection
/// `(I - q̂ q̂ᵀ) / ‖q‖`.
pub fn propagate_joint(
    x: &RigidBodyState,
    phi: &SensitivityMatrix,
    u: &ControlInput,
    theta: &InertialParams,
    dt: f64,
    frame: ForceFrame,
) -> Result<(RigidBodyState, SensitivityMatrix), DynamicsError> {
    theta.validate()?;
    if !x.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if !u.is_finite() {
        return Err(DynamicsError::NonFinite("control input"));
    }
    if !phi.iter().all(|c| c.is_finite()) {
        return Err(DynamicsError::NonFinite("sensitivity matrix"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::InvalidTimeStep);
    }
    let (next, phi_next) = joint_step_unchecked(x, phi, u, theta, dt, frame);
    if next.is_finite() && phi_next.iter().all(|c| c.is_finite()) {
        Ok((next, phi_next))
    } else {
        Err(DynamicsError::NonFinite("integrated sensitivity"))
    }
}

pub(crate) fn joint_step_unchecked(
    x: &RigidBodyState,
    phi: &SensitivityMatrix,
    u: &ControlInput,
    theta: &InertialParams,
    dt: f64,
    frame: ForceFrame,
) -> (RigidBodyState, SensitivityMatrix) {
    // `y += a * x` in one pass to avoid materialising intermediates.
    fn axpy(y: &mut SensitivityMatrix, a: f64, x: &SensitivityMatrix) {
        for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *yi += a * xi;
        }
    }

    let x0 = x.to_vec();
    let (k1, p1) = joint_deriv(x, phi, u, theta, frame);
    let x2 = RigidBodyState::from_vec(&(x0 + (0.5 * dt) * k1));
    let mut stage = *phi;
    axpy(&mut stage, 0.5 * dt, &p1);
    let (k2, p2) = joint_deriv(&x2, &stage, u, theta, frame);
    let x3 = RigidBodyState::from_vec(&(x0 + (0.5 * dt) * k2));
    stage = *phi;
    axpy(&mut stage, 0.5 * dt, &p2);
    let (k3, p3) = joint_deriv(&x3, &stage, u, theta, frame);
    let x4 = RigidBodyState::from_vec(&(x0 + dt * k3));
    stage = *phi;
    axpy(&mut stage, dt, &p3);
    let (k4, p4) = joint_deriv(&x4, &stage, u, theta, frame);

    let mut next = RigidBodyState::from_vec(&dynamics::rk4_combine(&x0, &[k1, k2, k3, k4], dt));
    let mut slope = p1;
    axpy(&mut slope, 2.0, &p2);
    axpy(&mut slope, 2.0, &p3);
    slope += p4;
    let mut phi_next = *phi;
    axpy(&mut phi_next, dt / 6.0, &slope);

    let norm = next.q.norm();
    next.q = quat_normalize(&next.q);
    // Push the renormalisation through phi: (I − q̂ q̂ᵀ)/‖q‖ on the quaternion
    // rows, applied as a rank-one update per column.
    let qn = next.q;
    for col in phi_next.data.0.iter_mut() {
        let dot = qn[0] * col[3] + qn[1] * col[4] + qn[2] * col[5] + qn[3] * col[6];
        for i in 0..4 {
            col[3 + i] = (col[3 + i] - qn[i] * dot) / norm;
        }
    }

    (next, phi_next)
}

/// Advance `(x, phi)` over `dt_total` using `substeps` equal joint RK4 steps.
pub fn propagate_joint_n(
    x: &RigidBodyState,
    phi: &SensitivityMatrix,
    u: &ControlInput,
    theta: &InertialParams,
    dt_total: f64,
    substeps: u32,
    frame: ForceFrame,
) -> Result<(RigidBodyState, SensitivityMatrix), DynamicsError> {
    if substeps == 0 || !(dt_total.is_finite() && dt_total > 0.0) {
        return Err(DynamicsError::InvalidTimeStep);
    }
    let h = dt_total / f64::from(substeps);
    let (mut state, mut phi_acc) = propagate_joint(x, phi, u, theta, h, frame)?;
    for _ in 1..substeps {
        let (s, p) = joint_step_unchecked(&state, &phi_acc, u, theta, h, frame);
        state = s;
        phi_acc = p;
    }
    if state.is_finite() && phi_acc.iter().all(|c| c.is_finite()) {
        Ok((state, phi_acc))
    } else {
        Err(DynamicsError::NonFinite("integrated sensitivity"))
    }
}

/// Measurement sensitivity `H = ∂y/∂θ`. The measurement reads the velocity
/// components of the state directly, so `H` is the bottom six rows of `phi`.
pub fn output_sensitivity(phi: &SensitivityMatrix) -> OutputSensitivity {
    phi.fixed_rows::<6>(LINVEL).into_owned()
}

/// Central-difference approximation of `phi(t_end)` for a piecewise-constant
/// control sequence, used as the independent oracle in tests and selftest.
///
/// Each parameter is bumped by `rel_step` relative, the trajectory re-run
/// with plain state integration, and the column estimated from the state
/// difference.
pub fn finite_difference_sensitivity(
    x0: &RigidBodyState,
    controls: &[ControlInput],
    theta: &InertialParams,
    dt_per_control: f64,
    substeps: u32,
    frame: ForceFrame,
    rel_step: f64,
) -> Result<SensitivityMatrix, DynamicsError> {
    let run = |p: &InertialParams| -> Result<StateVec, DynamicsError> {
        let mut state = *x0;
        for u in controls {
            state = dynamics::propagate(&state, u, p, dt_per_control, substeps, frame)?;
        }
        Ok(state.to_vec())
    };

    let nominal = theta.to_vec();
    let mut fd = SensitivityMatrix::zeros();
    for j in 0..4 {
        let h = rel_step * nominal[j].abs().max(rel_step);
        let mut plus = nominal;
        plus[j] += h;
        let mut minus = nominal;
        minus[j] -= h;
        let xp = run(&InertialParams::from_vec(&plus))?;
        let xm = run(&InertialParams::from_vec(&minus))?;
        fd.set_column(j, &((xp - xm) / (2.0 * h)));
    }
    Ok(fd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn paper_params() -> InertialParams {
        InertialParams::new(9.7, 7.0, 7.0, 10.0)
    }

    fn random_state(rng: &mut ChaCha8Rng) -> RigidBodyState {
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        RigidBodyState::new(
            Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0)),
            dynamics::quat_from_axis_angle(&axis, rng.gen_range(-2.0..2.0)),
            Vector3::from_fn(|_, _| rng.gen_range(-0.5..0.5)),
            Vector3::from_fn(|_, _| rng.gen_range(-0.5..0.5)),
        )
    }

    fn random_input(rng: &mut ChaCha8Rng) -> ControlInput {
        ControlInput::new(
            Vector3::from_fn(|_, _| rng.gen_range(-0.4..0.4)),
            Vector3::from_fn(|_, _| rng.gen_range(-0.1..0.1)),
        )
    }

    #[test]
    fn blockwise_deriv_matches_dense_jacobians() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for frame in [ForceFrame::Body, ForceFrame::Inertial] {
            for _ in 0..20 {
                let x = random_state(&mut rng);
                let u = random_input(&mut rng);
                let theta = paper_params();
                let phi = SensitivityMatrix::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                let fast = sensitivity_deriv(&x, &phi, &u, &theta, frame);
                let dense = state_jacobian(&x, &u, &theta, frame) * phi
                    + param_jacobian(&x, &u, &theta, frame);
                assert_relative_eq!(fast, dense, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn zero_sensitivity_at_rest_stays_zero() {
        let d = sensitivity_deriv(
            &RigidBodyState::rest(),
            &SensitivityMatrix::zeros(),
            &ControlInput::ZERO,
            &paper_params(),
            ForceFrame::Body,
        );
        assert_eq!(d, SensitivityMatrix::zeros());
    }

    #[test]
    fn mass_sensitivity_of_acceleration_matches_hand_value() {
        // d(vdot_x)/dm = -f_x / m^2 = -9.7 / 9.7^2 at identity attitude.
        let u = ControlInput::new(Vector3::new(9.7, 0.0, 0.0), Vector3::zeros());
        let d = sensitivity_deriv(
            &RigidBodyState::rest(),
            &SensitivityMatrix::zeros(),
            &u,
            &paper_params(),
            ForceFrame::Body,
        );
        assert_relative_eq!(d[(LINVEL, 0)], -1.0 / 9.7, max_relative = 1e-12);
        assert_relative_eq!(d[(LINVEL, 0)], -0.10309, max_relative = 1e-4);
    }

    #[test]
    fn state_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let theta = paper_params();
        for frame in [ForceFrame::Body, ForceFrame::Inertial] {
            let x = random_state(&mut rng);
            let u = random_input(&mut rng);
            let a = state_jacobian(&x, &u, &theta, frame);
            let x0 = x.to_vec();
            let f0 = dynamics::deriv(&x, &u, &theta, frame).unwrap();
            let h = 1e-7;
            for j in 0..13 {
                let mut xp = x0;
                xp[j] += h;
                let fp = dynamics::deriv(&RigidBodyState::from_vec(&xp), &u, &theta, frame)
                    .unwrap();
                let fd = (fp - f0) / h;
                for i in 0..13 {
                    assert!(
                        (a[(i, j)] - fd[i]).abs() < 1e-5 * (1.0 + fd[i].abs()),
                        "A[{i},{j}] analytic {} vs fd {}",
                        a[(i, j)],
                        fd[i]
                    );
                }
            }
        }
    }

    #[test]
    fn joint_step_state_is_bit_identical_to_plain_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = random_state(&mut rng);
            let u = random_input(&mut rng);
            let theta = paper_params();
            let phi = SensitivityMatrix::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let plain = dynamics::step(&x, &u, &theta, 0.01, ForceFrame::Body).unwrap();
            let (joint, _) = propagate_joint(&x, &phi, &u, &theta, 0.01, ForceFrame::Body).unwrap();
            assert_eq!(plain.to_vec(), joint.to_vec());
        }
    }

    #[test]
    fn sensitivity_tracks_finite_differences_over_one_second() {
        let theta = paper_params();
        let u = ControlInput::new(Vector3::new(0.3, -0.1, 0.2), Vector3::new(0.05, -0.03, 0.08));
        let mut x = RigidBodyState::rest();
        x.w = Vector3::new(0.1, -0.2, 0.15);

        let (_, phi) =
            propagate_joint_n(&x, &SensitivityMatrix::zeros(), &u, &theta, 1.0, 100, ForceFrame::Body)
                .unwrap();
        let fd = finite_difference_sensitivity(&x, &[u], &theta, 1.0, 100, ForceFrame::Body, 1e-6)
            .unwrap();
        for i in 0..13 {
            for j in 0..4 {
                let err = (phi[(i, j)] - fd[(i, j)]).abs();
                let tol = 1e-4 * fd[(i, j)].abs().max(1e-8 / 1e-4);
                assert!(
                    err <= tol,
                    "phi[{i},{j}] = {} vs fd {} (err {err:.3e})",
                    phi[(i, j)],
                    fd[(i, j)]
                );
            }
        }
    }

    #[test]
    fn thrust_only_motion_keeps_inertia_columns_zero() {
        let theta = paper_params();
        let u = ControlInput::new(Vector3::new(0.4, -0.2, 0.1), Vector3::zeros());
        let (_, phi) = propagate_joint_n(
            &RigidBodyState::rest(),
            &SensitivityMatrix::zeros(),
            &u,
            &theta,
            5.0,
            500,
            ForceFrame::Body,
        )
        .unwrap();
        for j in 1..4 {
            assert_eq!(phi.column(j).norm(), 0.0, "inertia column {j} contaminated");
        }
        assert!(phi[(LINVEL, 0)].abs() > 1e-4, "mass column should respond to thrust");
        for i in ATT..LINVEL {
            assert_eq!(phi[(i, 0)], 0.0, "attitude must not depend on mass here");
        }
    }

    #[test]
    fn output_sensitivity_is_velocity_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let phi = SensitivityMatrix::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let h = output_sensitivity(&phi);
        for i in 0..6 {
            for j in 0..4 {
                assert_eq!(h[(i, j)], phi[(LINVEL + i, j)]);
            }
        }
        assert_eq!(
            output_sensitivity(&SensitivityMatrix::zeros()),
            OutputSensitivity::zeros()
        );
    }
}
