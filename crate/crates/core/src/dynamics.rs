//! Constrained flow between impacts.
//!
//! The Lagrange-d'Alembert equations are solved in multiplier form,
//!
//! ```text
//! G(x) a = f(x, v) − ∇V(x) + A(x)ᵀ λ
//! A(x) a = −Ȧ(x, v) v
//! ```
//!
//! by eliminating `a` through the Cholesky factor of `G` (range-space method).
//! Steps are classical fourth-order Runge-Kutta followed by a G-orthogonal
//! projection of the velocity back onto `ker A`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{g_projector, ConstraintMatrix, GeometryError, Metric};
use crate::models::{MechanicalSystem, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("constraint saddle system is numerically singular")]
    SingularKkt,
    #[error("invalid integrator settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<GeometryError> for DynamicsError {
    fn from(e: GeometryError) -> Self {
        Self::Model(ModelError::Geometry(e))
    }
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

/// Point on a smooth arc: time, configuration, velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

impl FlowState {
    pub fn new(t: f64, x: DVector<f64>, v: DVector<f64>) -> Self {
        Self { t, x, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    pub dt: f64,
    #[serde(default = "default_drift_tol")]
    pub drift_tol: f64,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

fn default_drift_tol() -> f64 {
    1e-10
}

fn default_fd_step() -> f64 {
    1e-6
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            drift_tol: default_drift_tol(),
            fd_step: default_fd_step(),
        }
    }
}

impl IntegratorSettings {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("dt", self.dt),
            ("drift_tol", self.drift_tol),
            ("fd_step", self.fd_step),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(DynamicsError::InvalidSettings(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Acceleration and constraint multipliers at `(x, v)`.
pub fn accel_and_multipliers(
    sys: &dyn MechanicalSystem,
    x: &DVector<f64>,
    v: &DVector<f64>,
    fd_step: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let g = sys.metric_at(x)?;
    let rhs = sys.coriolis_force(x, v, fd_step)? - sys.potential_gradient(x, fd_step);
    let free = g.solve_vector(&rhs);
    let a = sys.constraint_a_at(x)?;
    if a.is_empty() {
        return Ok((free, DVector::zeros(0)));
    }
    let am = a.matrix();
    let a_rate = sys.constraint_a_rate(x, v, fd_step)?;
    let ginv_at = g.solve(&am.transpose());
    let schur = am * &ginv_at;
    let schur = (&schur + schur.transpose()) * 0.5;
    let chol = schur.cholesky().ok_or(DynamicsError::SingularKkt)?;
    let lambda = chol.solve(&(-(a_rate * v) - am * &free));
    let accel = free + ginv_at * &lambda;
    Ok((accel, lambda))
}

/// G-closest velocity in `ker A`, `(I − P_A) v`.
pub fn project_velocity(
    g: &Metric,
    a: &ConstraintMatrix,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    if a.is_empty() {
        return Ok(v.clone());
    }
    let p = g_projector(g, a)?;
    Ok(p.tangential_part(v))
}

/// One step of size `h`; `cfg.dt` is ignored.
pub fn step_by(
    sys: &dyn MechanicalSystem,
    s: &FlowState,
    h: f64,
    cfg: &IntegratorSettings,
) -> Result<FlowState> {
    let fd = cfg.fd_step;
    let deriv = |x: &DVector<f64>, v: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>)> {
        let (acc, _) = accel_and_multipliers(sys, x, v, fd)?;
        Ok((sys.config_rate(x, v), acc))
    };
    let (k1x, k1v) = deriv(&s.x, &s.v)?;
    let (k2x, k2v) = deriv(&(&s.x + &k1x * (0.5 * h)), &(&s.v + &k1v * (0.5 * h)))?;
    let (k3x, k3v) = deriv(&(&s.x + &k2x * (0.5 * h)), &(&s.v + &k2v * (0.5 * h)))?;
    let (k4x, k4v) = deriv(&(&s.x + &k3x * h), &(&s.v + &k3v * h))?;
    let mut x = &s.x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
    let v = &s.v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
    sys.normalize_config(&mut x);
    let v = project_velocity(&sys.metric_at(&x)?, &sys.constraint_a_at(&x)?, &v)?;
    Ok(FlowState { t: s.t + h, x, v })
}

pub fn step(
    sys: &dyn MechanicalSystem,
    s: &FlowState,
    cfg: &IntegratorSettings,
) -> Result<FlowState> {
    step_by(sys, s, cfg.dt, cfg)
}

/// Total energy `T + V`.
pub fn energy(sys: &dyn MechanicalSystem, s: &FlowState) -> Result<f64> {
    let g = sys.metric_at(&s.x)?;
    Ok(0.5 * g.inner(&s.v, &s.v) + sys.potential(&s.x))
}

/// `‖A(x) v‖`.
pub fn constraint_drift(sys: &dyn MechanicalSystem, s: &FlowState) -> Result<f64> {
    Ok(sys.constraint_a_at(&s.x)?.residual(&s.v))
}
