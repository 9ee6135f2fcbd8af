//! Mechanical systems: the chart-level interface used by the integrator and the
//! simulator, the two rough-ball scenes, and a configurable generic system.

mod ball;
mod generic;

pub use ball::{
    ball_floor_impact_closed_form, ball_wall_impact_closed_form, contact_angular_momentum,
    rolling_velocity_completion, BallFloorScene, BallParams, BallState, BallWallScene,
    FloorContact, PlanarPotential, ReducedWallState, WallContact,
};
pub use generic::{
    assemble_generic_system, generic_system_from_config, generic_system_with_nesting_tol,
    AffineWall, GenericSpec, GenericSystem, QuadraticPotential, WallSpec,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{ConstraintMatrix, GeometryError, Metric};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid value for `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error("matrix `{name}`: {source}")]
    Matrix {
        name: String,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl ModelError {
    pub(crate) fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn matrix(name: impl Into<String>) -> impl FnOnce(GeometryError) -> Self {
        let name = name.into();
        move |source| Self::Matrix { name, source }
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Unilateral constraint `N = {h(x) = 0}` with the admissible side `h > 0`.
pub trait Wall: Send + Sync {
    /// Guard value `h(x)`.
    fn guard(&self, x: &DVector<f64>) -> f64;

    /// `dh/dt` along a velocity.
    fn guard_rate(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64;

    /// Constraint `B(x)` active while the system touches the wall.
    fn constraint_b_at(&self, x: &DVector<f64>) -> Result<ConstraintMatrix>;
}

/// A natural mechanical system `L = ½ vᵀG(x)v − V(x)` with velocity
/// constraints `A(x) v = 0` and an optional wall.
///
/// Configurations `x` live in `R^config_dim`, velocities in `R^dof`. The two
/// differ for the ball scenes, whose velocities are quasi-velocities `(v_S, ω)`
/// and whose orientation is a quaternion. The default finite-difference
/// implementations assume chart velocities (`config_dim == dof`, `ẋ = v`).
pub trait MechanicalSystem: Send + Sync {
    fn name(&self) -> &str;

    fn config_dim(&self) -> usize;

    fn dof(&self) -> usize;

    fn metric_at(&self, x: &DVector<f64>) -> Result<Metric>;

    fn potential(&self, x: &DVector<f64>) -> f64;

    /// Generalized potential force `∇V` expressed in velocity coordinates.
    fn potential_gradient(&self, x: &DVector<f64>, fd_step: f64) -> DVector<f64> {
        let h = fd_step * (1.0 + x.norm());
        DVector::from_fn(self.dof(), |k, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            (self.potential(&xp) - self.potential(&xm)) / (2.0 * h)
        })
    }

    /// Velocity-dependent generalized force from the variation of the metric,
    /// `f_i = ½ vᵀ ∂_iG v − (Σ_k v_k ∂_kG) v`.
    fn coriolis_force(
        &self,
        x: &DVector<f64>,
        v: &DVector<f64>,
        fd_step: f64,
    ) -> Result<DVector<f64>> {
        let n = self.dof();
        let h = fd_step * (1.0 + x.norm());
        let mut f = DVector::zeros(n);
        let mut dg_v = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let dg = (self.metric_at(&xp)?.matrix() - self.metric_at(&xm)?.matrix()) / (2.0 * h);
            f[k] += 0.5 * v.dot(&(&dg * v));
            dg_v += dg * v[k];
        }
        Ok(f - dg_v * v)
    }

    fn constraint_a_at(&self, x: &DVector<f64>) -> Result<ConstraintMatrix>;

    /// `dA/dt` along the motion, by central differences along `ẋ`.
    fn constraint_a_rate(
        &self,
        x: &DVector<f64>,
        v: &DVector<f64>,
        fd_step: f64,
    ) -> Result<DMatrix<f64>> {
        let xdot = self.config_rate(x, v);
        let speed = xdot.norm();
        let a0 = self.constraint_a_at(x)?;
        if a0.is_empty() || speed == 0.0 {
            return Ok(DMatrix::zeros(a0.rows(), a0.cols()));
        }
        let h = fd_step * (1.0 + x.norm()) / speed;
        let ap = self.constraint_a_at(&(x + &xdot * h))?;
        let am = self.constraint_a_at(&(x - &xdot * h))?;
        Ok((ap.matrix() - am.matrix()) / (2.0 * h))
    }

    /// Kinematic map `ẋ = K(x) v`.
    fn config_rate(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }

    /// Pull a configuration back onto its manifold (e.g. renormalize a quaternion).
    fn normalize_config(&self, _x: &mut DVector<f64>) {}

    fn wall(&self) -> Option<&dyn Wall>;

    fn velocity_labels(&self) -> Vec<String> {
        (1..=self.dof()).map(|i| format!("v_{i}")).collect()
    }

    /// Column names of [`MechanicalSystem::output_row`].
    fn output_columns(&self) -> Vec<String> {
        (1..=self.config_dim())
            .map(|i| format!("x_{i}"))
            .chain(self.velocity_labels())
            .collect()
    }

    fn output_row(&self, x: &DVector<f64>, v: &DVector<f64>) -> Vec<f64> {
        x.iter().chain(v.iter()).copied().collect()
    }
}
