//! Fisher information about the inertial parameters and its A-optimality
//! scalarisation.
//!
//! With additive Gaussian measurement noise and no parameter process noise
//! the information collected by a set of measurements reduces to the sum
//! `F = Σ Hᵀ Σ⁻¹ H` over the measurement sensitivities `H`. The planner
//! scores candidate trajectories by `Tr((F + ridge·I)⁻¹)`; the ridge keeps
//! the score finite while some parameter is still unobserved.

use nalgebra::{Matrix4, Vector6};
use thiserror::Error;

use crate::sensitivity::OutputSensitivity;

#[derive(Debug, Error, PartialEq)]
pub enum FimError {
    #[error("measurement variances must be finite and positive to weight information")]
    SingularNoise,
    #[error("ridge must be finite and non-negative")]
    InvalidRidge,
    #[error("information matrix is not positive definite; A-optimality undefined")]
    NotPositiveDefinite,
    #[error("non-finite value while accumulating information")]
    NonFinite,
}

/// Accumulated Fisher information over the four inertial parameters.
/// Symmetric positive semidefinite by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fim(Matrix4<f64>);

impl Default for Fim {
    fn default() -> Self {
        Self::zero()
    }
}

impl Fim {
    /// The no-information starting point.
    pub fn zero() -> Self {
        Self(Matrix4::zeros())
    }

    pub fn from_matrix(m: Matrix4<f64>) -> Self {
        // Symmetrise so round-trips through storage cannot break the invariant.
        Self(0.5 * (m + m.transpose()))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Scale by a forgetting factor in `[0, 1]`, used when seeding a planning
    /// horizon from historical information.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self(lambda * self.0)
    }

    /// Add one measurement's information `Hᵀ Σ⁻¹ H` for diagonal noise
    /// covariance `Σ = diag(meas_var)`. The result is re-symmetrised.
    pub fn accumulate(
        &self,
        h: &OutputSensitivity,
        meas_var: &Vector6<f64>,
    ) -> Result<Fim, FimError> {
        if meas_var.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(FimError::SingularNoise);
        }
        if h.iter().any(|c| !c.is_finite()) {
            return Err(FimError::NonFinite);
        }
        let mut term = Matrix4::zeros();
        for row in 0..6 {
            let w = 1.0 / meas_var[row];
            for i in 0..4 {
                let hi = h[(row, i)];
                if hi == 0.0 {
                    continue;
                }
                for j in 0..4 {
                    term[(i, j)] += w * hi * h[(row, j)];
                }
            }
        }
        let sum = self.0 + term;
        Ok(Self(0.5 * (sum + sum.transpose())))
    }

    /// Smallest eigenvalue of the symmetric information matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        self.0
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// `Tr((F + ridge·I)⁻¹)`, the A-optimality score. Smaller is better
    /// (tighter achievable parameter covariance).
    pub fn a_optimality(&self, ridge: f64) -> Result<f64, FimError> {
        if !ridge.is_finite() || ridge < 0.0 {
            return Err(FimError::InvalidRidge);
        }
        let m = self.0 + Matrix4::identity() * ridge;
        let chol = m.cholesky().ok_or(FimError::NotPositiveDefinite)?;
        let inv = chol.inverse();
        let t = inv.trace();
        if t.is_finite() {
            Ok(t)
        } else {
            Err(FimError::NonFinite)
        }
    }
}
