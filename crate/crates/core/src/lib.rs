//! Receding-horizon trajectory planning that trades goal tracking against
//! information gain about uncertain inertial parameters, with an unscented
//! Kalman filter feeding improved estimates back into the planner online.
//!
//! The crate is organised bottom-up:
//!
//! * [`dynamics`] — 6DoF rigid-body model, RK4 integration, measurements.
//! * [`sensitivity`] — parameter sensitivities propagated jointly with the state.
//! * [`fim`] — Fisher information accumulation and A-optimality scalarisation.
//! * [`estimator`] — UKF over the log-parameters with divergence monitoring.
//! * [`planner`] — box-constrained NMPC with the blended tracking/information cost.
//! * [`harness`] — closed-loop episodes wiring plant, planner and estimator.
//! * [`scenario`] — flat TOML scenario schema with overrides and validation.
//! * [`report`] — CSV/JSON artifacts and static SVG plots.
//! * [`selftest`] — fast named invariant checks used by the CLI `selftest` command.

pub mod dynamics;
pub mod estimator;
pub mod fim;
pub mod harness;
pub mod planner;
pub mod report;
pub mod scenario;
pub mod selftest;
pub mod sensitivity;
