//! Micro-benchmark for the propagation kernels that dominate planner solve
//! time (the finite-difference gradient alone costs ~240 rollouts per solver
//! iteration, each one `horizon x substeps` kernel calls).
//!
//! Run with `cargo run --release --example bench_kernel` on an otherwise idle
//! machine; numbers from a loaded box are noise.

use std::time::Instant;

use nalgebra::Vector3;

use infoplan::dynamics::{self, ControlInput, ForceFrame, InertialParams, RigidBodyState};
use infoplan::sensitivity::{propagate_joint_n, sensitivity_deriv, SensitivityMatrix};

fn main() {
    let theta = InertialParams::new(9.7, 7.0, 7.0, 10.0);
    let u = ControlInput::new(Vector3::new(0.3, -0.1, 0.2), Vector3::new(0.05, -0.03, 0.08));
    let mut x = RigidBodyState::rest();
    x.w = Vector3::new(0.1, -0.2, 0.15);
    let mut phi = SensitivityMatrix::zeros();

    // Warm up into a representative tumbling state with a grown sensitivity,
    // re-centering position so the trajectory stays bounded.
    for _ in 0..200 {
        let (s, p) = propagate_joint_n(&x, &phi, &u, &theta, 1.0, 10, ForceFrame::Body).unwrap();
        x = s;
        phi = p;
        x.r = Vector3::zeros();
        x.v = Vector3::zeros();
    }

    let n = 20_000u32;

    // Joint state + sensitivity interval, as the planner rollout runs it.
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        let (s, p) = propagate_joint_n(&x, &phi, &u, &theta, 1.0, 10, ForceFrame::Body).unwrap();
        acc += s.q[0] + p[(7, 0)];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "joint   : {:.2} us/interval, {:.0} ns/substep  (sink {acc:e})",
        dt / n as f64 * 1e6,
        dt / n as f64 / 10.0 * 1e9
    );

    // State-only interval, as the plant and estimator prediction run it.
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        let s = dynamics::propagate(&x, &u, &theta, 1.0, 10, ForceFrame::Body).unwrap();
        acc += s.q[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "state   : {:.2} us/interval, {:.0} ns/substep  (sink {acc:e})",
        dt / n as f64 * 1e6,
        dt / n as f64 / 10.0 * 1e9
    );

    // Bare sensitivity derivative, 40 calls to mimic one interval's worth of
    // RK4 stages.
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        let mut ph = phi;
        for _ in 0..40 {
            ph = sensitivity_deriv(&x, &ph, &u, &theta, ForceFrame::Body);
        }
        acc += ph[(7, 0)];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "sensder : {:.2} us/40 calls, {:.1} ns/call     (sink {acc:e})",
        dt / n as f64 * 1e6,
        dt / n as f64 / 40.0 * 1e9
    );
}
