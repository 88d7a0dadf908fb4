//! Fast named invariant checks, runnable from the CLI.
//!
//! Each check exercises one physical or numerical property end to end and
//! reports a pass/fail with the measured number, so a broken build fails
//! loudly and specifically. The conservation checks integrate with a local
//! RK4 over an injectable derivative function: the real dynamics in
//! production, a deliberately corrupted one in the negative-control test
//! that proves the check can actually catch a sign error.

use nalgebra::{Matrix3, Vector3, Vector4, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{
    self, quat_normalize, rotation_matrix, ControlInput, ForceFrame, InertialParams,
    RigidBodyState, StateVec,
};
use crate::estimator::{
    sigma_weights, DivergencePolicy, EstimatorBelief, ParamEstimator, UkfConfig,
};
use crate::fim::Fim;
use crate::harness::{rows_from_csv, run_episode};
use crate::planner::{
    gamma_schedule, CostWeights, ErrorVec, GoalSpec, InputBounds, PlanRequest,
    Planner, SolverConfig, SolverStatus,
};
use crate::report;
use crate::scenario::ScenarioConfig;
use crate::sensitivity::{
    finite_difference_sensitivity, output_sensitivity, propagate_joint_n, OutputSensitivity,
    SensitivityMatrix,
};

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// The measured quantity and its tolerance, for the report line.
    pub detail: String,
}

impl CheckResult {
    fn judge(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult {
            name,
            passed,
            detail,
        }
    }
}

/// Run every check. All of them together take well under a second.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        quaternion_norm_preserved(),
        angular_momentum_conserved(),
        rotational_energy_conserved(),
        rk4_fourth_order(),
        sensitivity_matches_fd(),
        fim_psd_and_monotone(),
        no_info_without_excitation(),
        ukf_weights_normalised(),
        ukf_inertia_inert_without_rotation(),
        gamma_rolloff(),
        solver_stationary_at_goal(),
        artifacts_round_trip(),
    ]
}

fn tumbling_params() -> InertialParams {
    InertialParams::new(9.7, 5.0, 7.0, 10.0)
}

fn tumbling_state() -> RigidBodyState {
    let mut x = RigidBodyState::rest();
    x.w = Vector3::new(0.9, -0.7, 0.5);
    x
}

/// Plain RK4 over a caller-supplied derivative, quaternion renormalised per
/// step. Lets the conservation checks run against a corrupted derivative in
/// the negative-control test.
fn integrate_with(
    deriv: &dyn Fn(&RigidBodyState, &ControlInput, &InertialParams) -> StateVec,
    x0: &RigidBodyState,
    u: &ControlInput,
    theta: &InertialParams,
    h: f64,
    steps: usize,
) -> Vec<RigidBodyState> {
    let mut traj = Vec::with_capacity(steps + 1);
    let mut x = *x0;
    traj.push(x);
    for _ in 0..steps {
        let k1 = deriv(&x, u, theta);
        let k2 = deriv(&RigidBodyState::from_vec(&(x.to_vec() + 0.5 * h * k1)), u, theta);
        let k3 = deriv(&RigidBodyState::from_vec(&(x.to_vec() + 0.5 * h * k2)), u, theta);
        let k4 = deriv(&RigidBodyState::from_vec(&(x.to_vec() + h * k3)), u, theta);
        let mut next =
            RigidBodyState::from_vec(&(x.to_vec() + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)));
        next.q = quat_normalize(&next.q);
        x = next;
        traj.push(x);
    }
    traj
}

fn real_deriv(x: &RigidBodyState, u: &ControlInput, theta: &InertialParams) -> StateVec {
    dynamics::deriv(x, u, theta, ForceFrame::Body).expect("finite inputs")
}

/// Inertial-frame angular momentum `R(q) I ω` must be constant without torque.
pub(crate) fn momentum_conservation_with(
    deriv: &dyn Fn(&RigidBodyState, &ControlInput, &InertialParams) -> StateVec,
) -> CheckResult {
    let theta = tumbling_params();
    let inertia = Matrix3::from_diagonal(&Vector3::new(theta.ixx, theta.iyy, theta.izz));
    let traj = integrate_with(
        deriv,
        &tumbling_state(),
        &ControlInput::ZERO,
        &theta,
        0.005,
        2000,
    );
    let l0 = rotation_matrix(&traj[0].q) * (inertia * traj[0].w);
    let drift = traj
        .iter()
        .map(|x| (rotation_matrix(&x.q) * (inertia * x.w) - l0).norm() / l0.norm())
        .fold(0.0, f64::max);
    CheckResult::judge(
        "angular-momentum-conserved",
        drift <= 1e-6,
        format!("relative drift {drift:.3e} over 10 s torque-free tumble (tol 1e-6)"),
    )
}

fn angular_momentum_conserved() -> CheckResult {
    momentum_conservation_with(&real_deriv)
}

fn rotational_energy_conserved() -> CheckResult {
    let theta = tumbling_params();
    let traj = integrate_with(
        &real_deriv,
        &tumbling_state(),
        &ControlInput::ZERO,
        &theta,
        0.005,
        2000,
    );
    let ke = |x: &RigidBodyState| {
        0.5 * (theta.ixx * x.w.x * x.w.x + theta.iyy * x.w.y * x.w.y + theta.izz * x.w.z * x.w.z)
    };
    let e0 = ke(&traj[0]);
    let drift = traj
        .iter()
        .map(|x| (ke(x) - e0).abs() / e0)
        .fold(0.0, f64::max);
    CheckResult::judge(
        "rotational-energy-conserved",
        drift <= 1e-6,
        format!("relative drift {drift:.3e} over 10 s torque-free tumble (tol 1e-6)"),
    )
}

fn quaternion_norm_preserved() -> CheckResult {
    let theta = tumbling_params();
    let u = ControlInput::new(Vector3::new(0.3, -0.2, 0.1), Vector3::new(0.05, 0.08, -0.03));
    let x = dynamics::propagate(&tumbling_state(), &u, &theta, 10.0, 1000, ForceFrame::Body)
        .expect("propagation stays finite");
    let err = (x.q.norm() - 1.0).abs();
    CheckResult::judge(
        "quaternion-norm-preserved",
        err <= 1e-12,
        format!("|‖q‖ − 1| = {err:.3e} after 10 s forced tumble (tol 1e-12)"),
    )
}

fn rk4_fourth_order() -> CheckResult {
    let theta = tumbling_params();
    let x0 = tumbling_state();
    let u = ControlInput::ZERO;
    let run = |substeps: u32| {
        dynamics::propagate(&x0, &u, &theta, 1.0, substeps, ForceFrame::Body)
            .expect("finite")
            .to_vec()
    };
    let reference = run(10_000);
    let e1 = (run(20) - reference).norm();
    let e2 = (run(40) - reference).norm();
    let ratio = e1 / e2;
    CheckResult::judge(
        "rk4-fourth-order",
        (10.0..40.0).contains(&ratio) && e1.is_finite(),
        format!("halving h cut the error {ratio:.1}x (expect ≈16 for 4th order; accept 10–40)"),
    )
}

fn sensitivity_matches_fd() -> CheckResult {
    let theta = tumbling_params();
    let controls = [
        ControlInput::new(Vector3::new(0.3, -0.1, 0.2), Vector3::new(0.05, -0.03, 0.08)),
        ControlInput::new(Vector3::new(-0.2, 0.4, -0.1), Vector3::new(-0.06, 0.02, 0.04)),
    ];
    let mut x = tumbling_state();
    let mut phi = SensitivityMatrix::zeros();
    for u in &controls {
        let (s, p) =
            propagate_joint_n(&x, &phi, u, &theta, 1.0, 100, ForceFrame::Body).expect("finite");
        x = s;
        phi = p;
    }
    let fd = finite_difference_sensitivity(
        &tumbling_state(),
        &controls,
        &theta,
        1.0,
        100,
        ForceFrame::Body,
        1e-6,
    )
    .expect("finite");
    let worst = (0..13)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .map(|(i, j)| (phi[(i, j)] - fd[(i, j)]).abs() / fd[(i, j)].abs().max(1e-4))
        .fold(0.0, f64::max);
    CheckResult::judge(
        "sensitivity-matches-fd",
        worst <= 1e-4,
        format!("worst relative deviation {worst:.3e} vs central differences (tol 1e-4)"),
    )
}

fn fim_psd_and_monotone() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let meas_var = Vector6::repeat(1e-6);
    let mut fim = Fim::zero();
    let mut min_eig: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..20 {
        let h = OutputSensitivity::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let prev_trace = fim.trace();
        fim = fim.accumulate(&h, &meas_var).expect("valid noise");
        min_eig = min_eig.min(fim.min_eigenvalue());
        monotone &= fim.trace() >= prev_trace;
    }
    CheckResult::judge(
        "fim-psd-and-monotone",
        min_eig >= -1e-12 && monotone,
        format!("min eigenvalue {min_eig:.3e} (tol −1e-12), trace nondecreasing: {monotone}"),
    )
}

fn no_info_without_excitation() -> CheckResult {
    let theta = tumbling_params();
    let u = ControlInput::new(Vector3::new(0.4, -0.2, 0.1), Vector3::zeros());
    let (_, phi) = propagate_joint_n(
        &RigidBodyState::rest(),
        &SensitivityMatrix::zeros(),
        &u,
        &theta,
        5.0,
        250,
        ForceFrame::Body,
    )
    .expect("finite");
    let fim = Fim::zero()
        .accumulate(&output_sensitivity(&phi), &Vector6::repeat(1e-6))
        .expect("valid noise");
    let inertia_block_norm: f64 = (1..4)
        .flat_map(|i| (1..4).map(move |j| (i, j)))
        .map(|(i, j)| fim.matrix()[(i, j)].abs())
        .sum();
    let mass_info = fim.matrix()[(0, 0)];
    CheckResult::judge(
        "no-info-without-excitation",
        inertia_block_norm == 0.0 && mass_info > 0.0,
        format!(
            "thrust-only run: inertia information block {inertia_block_norm:.1e} (must be exactly 0), \
             mass information {mass_info:.3e} (must be positive)"
        ),
    )
}

fn ukf_weights_normalised() -> CheckResult {
    let (_, [wm0, _], wi) = sigma_weights(&UkfConfig::default());
    let total = wm0 + 8.0 * wi;
    let err = (total - 1.0).abs();
    CheckResult::judge(
        "ukf-weights-normalised",
        err <= 1e-12,
        format!("mean weights sum to 1 within {err:.3e} (tol 1e-12)"),
    )
}

fn ukf_inertia_inert_without_rotation() -> CheckResult {
    let truth = InertialParams::new(9.7, 7.0, 7.0, 10.0);
    let guess = InertialParams::new(12.0, 9.0, 9.0, 13.0);
    let cfg = UkfConfig {
        q_theta: Vector4::zeros(),
        ..UkfConfig::default()
    };
    let belief = EstimatorBelief::from_guess(&guess, 0.25 * 0.25).expect("valid prior");
    let prior_mean = *belief.log_mean();
    let prior_cov = belief.cov_diag();
    let mut est = ParamEstimator::new(belief, cfg, DivergencePolicy::default()).expect("valid");

    // Pure translation: no torque, attitude never moves, so the velocity
    // measurements carry no inertia signal.
    let u = ControlInput::new(Vector3::new(0.4, -0.3, 0.2), Vector3::zeros());
    let mut x = RigidBodyState::rest();
    for k in 0..5 {
        let next = dynamics::propagate(&x, &u, &truth, 1.0, 100, ForceFrame::Body).expect("finite");
        let y = crate::dynamics::Measurement {
            v: next.v,
            w: next.w,
        };
        est.step(k as f64, &x, &u, &y, 1.0).expect("step succeeds");
        x = next;
    }
    let dm = (est.belief().log_mean() - prior_mean)
        .fixed_rows::<3>(1)
        .norm();
    let dc = (est.belief().cov_diag() - prior_cov).fixed_rows::<3>(1).norm();
    let mass_moved = (est.belief().log_mean()[0] - prior_mean[0]).abs();
    CheckResult::judge(
        "ukf-inertia-inert-without-rotation",
        dm <= 1e-8 && dc <= 1e-8 && mass_moved > 1e-3,
        format!(
            "inertia posterior moved {dm:.2e} (mean) / {dc:.2e} (cov) from the prior (tol 1e-8); \
             mass moved {mass_moved:.2e} (must exceed 1e-3)"
        ),
    )
}

fn gamma_rolloff() -> CheckResult {
    let w = CostWeights::default();
    let zero_err = ErrorVec::zeros();
    let g0 = gamma_schedule(0.0, &zero_err, &w);
    let decreasing = (1..=50)
        .map(|k| gamma_schedule(f64::from(k) * w.tau_decay / 10.0, &zero_err, &w))
        .try_fold(g0, |prev, g| if g < prev { Some(g) } else { None })
        .is_some();
    let tail = gamma_schedule(5.0 * w.tau_decay, &zero_err, &w);
    CheckResult::judge(
        "gamma-rolloff",
        g0 == 1.0 && decreasing && tail < 0.01,
        format!("γ(0) = {g0}, strictly decreasing: {decreasing}, γ(5τ) = {tail:.2e} (< 0.01)"),
    )
}

fn solver_stationary_at_goal() -> CheckResult {
    let cfg = SolverConfig {
        horizon: 3,
        substeps: 5,
        ..SolverConfig::default()
    };
    let planner = Planner::new(CostWeights::default(), InputBounds::default(), cfg);
    let goal = GoalSpec::origin(0.05);
    let req = PlanRequest {
        x0: goal.state,
        phi0: SensitivityMatrix::zeros(),
        fim_seed: Fim::zero(),
        theta: tumbling_params(),
        goal,
        gamma: 0.0,
    };
    match planner.solve(&req, None) {
        Ok(plan) => {
            let umax = plan
                .controls
                .iter()
                .flat_map(|u| u.to_vec().iter().copied().collect::<Vec<_>>())
                .fold(0.0f64, |a, v| a.max(v.abs()));
            let stationary = umax <= 1e-6 && plan.status == SolverStatus::Converged;
            CheckResult::judge(
                "solver-stationary-at-goal",
                stationary,
                format!(
                    "already-at-goal solve: max |u| = {umax:.2e} (tol 1e-6), status {:?}",
                    plan.status
                ),
            )
        }
        Err(e) => CheckResult::judge(
            "solver-stationary-at-goal",
            false,
            format!("solve failed: {e}"),
        ),
    }
}

fn artifacts_round_trip() -> CheckResult {
    let cfg = ScenarioConfig {
        name: "selftest".into(),
        duration_max_s: 3.0,
        stop_at_goal: false,
        horizon_steps: 2,
        planner_substeps: 4,
        plant_substeps: 10,
        solver_max_iters: 3,
        x0_position_m: [0.5, -0.3, 0.2],
        ..ScenarioConfig::default()
    };
    let log = match run_episode(&cfg) {
        Ok(l) => l,
        Err(e) => {
            return CheckResult::judge(
                "artifacts-round-trip",
                false,
                format!("episode failed: {e}"),
            )
        }
    };
    let csv_ok = rows_from_csv(&log.to_csv()).map(|r| r == log.rows);
    let svg_errs: Vec<String> = [
        report::trajectory_svg(&log),
        report::estimates_svg(&log),
        report::error_norm_svg(&log),
        report::gamma_svg(&log),
    ]
    .iter()
    .filter_map(|svg| report::check_xml_well_formed(svg).err())
    .collect();
    let passed = matches!(csv_ok, Ok(true)) && svg_errs.is_empty();
    CheckResult::judge(
        "artifacts-round-trip",
        passed,
        format!(
            "CSV round-trip exact: {}, SVG well-formedness issues: {:?}",
            matches!(csv_ok, Ok(true)),
            svg_errs
        ),
    )
}
