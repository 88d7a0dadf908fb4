//! Physical invariants of the integrator: conservation of angular momentum
//! and kinetic energy for torque-free motion, and the observed convergence
//! order of the RK4 stepping.

use infoplan::dynamics::{
    angular_momentum_inertial, kinetic_energy, propagate, quat_from_axis_angle, ControlInput,
    ForceFrame, InertialParams, RigidBodyState,
};
use nalgebra::Vector3;
use proptest::prelude::*;

const CONSERVATION_TOL: f64 = 1e-6;

fn drift(initial: f64, current: f64) -> f64 {
    (current - initial).abs() / initial.abs().max(1e-12)
}

#[test]
fn torque_free_tumble_conserves_momentum_and_energy() {
    let theta = InertialParams::new(9.7, 7.0, 7.0, 10.0);
    let mut x = RigidBodyState::rest();
    // Off-principal-axis tumble so all Euler coupling terms are active.
    x.w = Vector3::new(0.7, -0.4, 0.9);
    x.v = Vector3::new(0.2, 0.1, -0.3);

    let l0 = angular_momentum_inertial(&x, &theta);
    let e0 = kinetic_energy(&x, &theta);

    let mut state = x;
    for _ in 0..10 {
        state = propagate(&state, &ControlInput::ZERO, &theta, 1.0, 100, ForceFrame::Body).unwrap();
    }

    let l1 = angular_momentum_inertial(&state, &theta);
    let e1 = kinetic_energy(&state, &theta);

    assert!(
        (l1 - l0).norm() / l0.norm() < CONSERVATION_TOL,
        "angular momentum drifted by {}",
        (l1 - l0).norm() / l0.norm()
    );
    assert!(
        drift(e0, e1) < CONSERVATION_TOL,
        "kinetic energy drifted by {}",
        drift(e0, e1)
    );
    assert!(state.quat_norm_error() < 1e-12);
}

#[test]
fn halving_the_step_cuts_error_at_least_eightfold() {
    let theta = InertialParams::new(9.7, 7.0, 7.0, 10.0);
    let u = ControlInput::new(Vector3::new(0.4, -0.3, 0.2), Vector3::new(0.1, -0.05, 0.08));
    let mut x = RigidBodyState::rest();
    x.q = quat_from_axis_angle(&Vector3::new(1.0, -2.0, 0.5), 0.7);
    x.w = Vector3::new(0.5, 0.8, -0.6);

    let horizon = 2.0;
    let run = |substeps: u32| {
        propagate(&x, &u, &theta, horizon, substeps, ForceFrame::Body)
            .unwrap()
            .to_vec()
    };
    let reference = run(800); // dt/8 relative to the coarse run
    let coarse = (run(100) - reference).norm();
    let fine = (run(200) - reference).norm();

    assert!(
        coarse / fine >= 8.0,
        "observed convergence order too low: error ratio {}",
        coarse / fine
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_holds_for_random_tumbles(
        wx in -1.0f64..1.0,
        wy in -1.0f64..1.0,
        wz in -1.0f64..1.0,
        m in 1.0f64..20.0,
        ixx in 1.0f64..15.0,
        iyy in 1.0f64..15.0,
        izz in 1.0f64..15.0,
    ) {
        let theta = InertialParams::new(m, ixx, iyy, izz);
        let mut x = RigidBodyState::rest();
        x.w = Vector3::new(wx, wy, wz);
        prop_assume!(x.w.norm() > 1e-3);

        let l0 = angular_momentum_inertial(&x, &theta);
        let e0 = kinetic_energy(&x, &theta);
        let state = propagate(&x, &ControlInput::ZERO, &theta, 5.0, 500, ForceFrame::Body).unwrap();
        let l1 = angular_momentum_inertial(&state, &theta);
        let e1 = kinetic_energy(&state, &theta);

        prop_assert!((l1 - l0).norm() / l0.norm().max(1e-12) < CONSERVATION_TOL);
        prop_assert!(drift(e0, e1) < CONSERVATION_TOL);
        prop_assert!(state.quat_norm_error() < 1e-9);
    }
}
