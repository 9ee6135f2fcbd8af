use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{MechanicalSystem, ModelError, Result, Wall};
use crate::geometry::{ConstraintMatrix, Metric};

/// Homogeneous ball rolling on a rough floor (`z = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallParams {
    pub mass: f64,
    /// Moment of inertia about any axis through the centre.
    pub inertia: f64,
    pub radius: f64,
    #[serde(default)]
    pub gravity: f64,
}

impl BallParams {
    pub fn new(mass: f64, inertia: f64, radius: f64, gravity: f64) -> Result<Self> {
        let p = Self {
            mass,
            inertia,
            radius,
            gravity,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("inertia", self.inertia),
            ("radius", self.radius),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::schema(
                    field,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(ModelError::schema(
                "gravity",
                format!("must be finite and >= 0, got {}", self.gravity),
            ));
        }
        Ok(())
    }

    /// `J′ = J + r²m`, inertia about a tangent axis through the contact point.
    pub fn j_prime(&self) -> f64 {
        self.inertia + self.radius * self.radius * self.mass
    }

    /// `J̃ = J + r²m/2`.
    pub fn j_tilde(&self) -> f64 {
        self.inertia + 0.5 * self.radius * self.radius * self.mass
    }
}

/// Full rigid-body state of the ball in the fixed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

/// Planar state of a ball rolling on the floor; `ω₁`, `ω₂` follow from rolling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedWallState {
    pub v1: f64,
    pub v2: f64,
    pub w3: f64,
}

/// Smooth potential `V(x_S, y_S)` for the rolling scene.
#[derive(Clone)]
pub struct PlanarPotential(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl PlanarPotential {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.0)(x, y)
    }
}

impl fmt::Debug for PlanarPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PlanarPotential(..)")
    }
}

// config layout shared by both ball scenes: [x_S, y_S, z_S, q_w, q_x, q_y, q_z]
const BALL_CONFIG_DIM: usize = 7;

fn quaternion_of(x: &DVector<f64>) -> Quaternion<f64> {
    Quaternion::new(x[3], x[4], x[5], x[6])
}

/// `q̇ = ½ (0, ω) ∘ q` for a fixed-frame angular velocity.
fn quaternion_rate(q: &Quaternion<f64>, omega: &Vector3<f64>) -> Quaternion<f64> {
    Quaternion::from_imag(*omega) * q * 0.5
}

fn normalize_quaternion(x: &mut DVector<f64>) {
    let norm = quaternion_of(x).norm();
    if norm > 0.0 {
        for i in 3..7 {
            x[i] /= norm;
        }
    }
}

fn ball_config(position: &Vector3<f64>, orientation: &UnitQuaternion<f64>) -> DVector<f64> {
    let q = orientation.quaternion();
    DVector::from_vec(vec![position.x, position.y, position.z, q.w, q.i, q.j, q.k])
}

fn ball_output_columns() -> Vec<String> {
    [
        "x_S", "y_S", "z_S", "q_w", "q_x", "q_y", "q_z", "v_x", "v_y", "v_z", "w_x", "w_y", "w_z",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Floor contact for the thrown ball: guard `z_S − r`, no sliding at the contact point.
#[derive(Debug, Clone)]
pub struct FloorContact {
    radius: f64,
    b: ConstraintMatrix,
}

impl Wall for FloorContact {
    fn guard(&self, x: &DVector<f64>) -> f64 {
        x[2] - self.radius
    }

    fn guard_rate(&self, _x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        v[2]
    }

    fn constraint_b_at(&self, _x: &DVector<f64>) -> Result<ConstraintMatrix> {
        Ok(self.b.clone())
    }
}

/// Ball in free flight above a rough floor.
///
/// Velocities are the quasi-velocities `(v_S, ω)`; the metric is
/// `diag(m, m, m, J, J, J)` and the potential is `m g z_S`.
#[derive(Debug, Clone)]
pub struct BallFloorScene {
    params: BallParams,
    metric: Metric,
    contact: FloorContact,
}

impl BallFloorScene {
    pub fn new(params: BallParams) -> Result<Self> {
        params.validate()?;
        let (m, j, r) = (params.mass, params.inertia, params.radius);
        let metric = Metric::diagonal(&[m, m, m, j, j, j])?;
        let b = ConstraintMatrix::from_rows(&[
            &[1.0, 0.0, 0.0, 0.0, -r, 0.0],
            &[0.0, 1.0, 0.0, r, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        ])?;
        Ok(Self {
            params,
            metric,
            contact: FloorContact { radius: r, b },
        })
    }

    pub fn params(&self) -> &BallParams {
        &self.params
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn constraint_b(&self) -> &ConstraintMatrix {
        &self.contact.b
    }

    pub fn to_flow(&self, s: &BallState) -> (DVector<f64>, DVector<f64>) {
        let v = DVector::from_vec(vec![
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            s.angular_velocity.x,
            s.angular_velocity.y,
            s.angular_velocity.z,
        ]);
        (ball_config(&s.position, &s.orientation), v)
    }

    pub fn from_flow(&self, x: &DVector<f64>, v: &DVector<f64>) -> BallState {
        BallState {
            position: Vector3::new(x[0], x[1], x[2]),
            orientation: UnitQuaternion::from_quaternion(quaternion_of(x)),
            velocity: Vector3::new(v[0], v[1], v[2]),
            angular_velocity: Vector3::new(v[3], v[4], v[5]),
        }
    }
}

impl MechanicalSystem for BallFloorScene {
    fn name(&self) -> &str {
        "ball_floor"
    }

    fn config_dim(&self) -> usize {
        BALL_CONFIG_DIM
    }

    fn dof(&self) -> usize {
        6
    }

    fn metric_at(&self, _x: &DVector<f64>) -> Result<Metric> {
        Ok(self.metric.clone())
    }

    fn potential(&self, x: &DVector<f64>) -> f64 {
        self.params.mass * self.params.gravity * x[2]
    }

    fn potential_gradient(&self, _x: &DVector<f64>, _fd_step: f64) -> DVector<f64> {
        let mut g = DVector::zeros(6);
        g[2] = self.params.mass * self.params.gravity;
        g
    }

    // Spherical inertia: ω × Jω vanishes and the metric is constant.
    fn coriolis_force(
        &self,
        _x: &DVector<f64>,
        _v: &DVector<f64>,
        _fd_step: f64,
    ) -> Result<DVector<f64>> {
        Ok(DVector::zeros(6))
    }

    fn constraint_a_at(&self, _x: &DVector<f64>) -> Result<ConstraintMatrix> {
        Ok(ConstraintMatrix::empty(6))
    }

    fn constraint_a_rate(
        &self,
        _x: &DVector<f64>,
        _v: &DVector<f64>,
        _fd_step: f64,
    ) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(0, 6))
    }

    fn config_rate(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let omega = Vector3::new(v[3], v[4], v[5]);
        let dq = quaternion_rate(&quaternion_of(x), &omega);
        DVector::from_vec(vec![v[0], v[1], v[2], dq.w, dq.i, dq.j, dq.k])
    }

    fn normalize_config(&self, x: &mut DVector<f64>) {
        normalize_quaternion(x);
    }

    fn wall(&self) -> Option<&dyn Wall> {
        Some(&self.contact)
    }

    fn velocity_labels(&self) -> Vec<String> {
        ["v_x", "v_y", "v_z", "w_x", "w_y", "w_z"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn output_columns(&self) -> Vec<String> {
        ball_output_columns()
    }
}

/// Vertical rough wall `x_S = r` met by a ball rolling on the floor.
#[derive(Debug, Clone)]
pub struct WallContact {
    radius: f64,
    b: ConstraintMatrix,
}

impl Wall for WallContact {
    fn guard(&self, x: &DVector<f64>) -> f64 {
        x[0] - self.radius
    }

    fn guard_rate(&self, _x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        v[0]
    }

    fn constraint_b_at(&self, _x: &DVector<f64>) -> Result<ConstraintMatrix> {
        Ok(self.b.clone())
    }
}

/// Ball rolling without slipping on the floor, bouncing off a rough wall.
///
/// Velocities are `(v₁, v₂, ω₁, ω₂, ω₃)`; the centre stays at `z_S = r`.
#[derive(Debug, Clone)]
pub struct BallWallScene {
    params: BallParams,
    metric: Metric,
    a: ConstraintMatrix,
    contact: WallContact,
    potential: Option<PlanarPotential>,
}

impl BallWallScene {
    pub fn new(params: BallParams) -> Result<Self> {
        params.validate()?;
        let (m, j, r) = (params.mass, params.inertia, params.radius);
        let metric = Metric::diagonal(&[m, m, j, j, j])?;
        let a =
            ConstraintMatrix::from_rows(&[&[1.0, 0.0, 0.0, -r, 0.0], &[0.0, 1.0, r, 0.0, 0.0]])?;
        let b = ConstraintMatrix::from_rows(&[
            &[1.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0, -r],
            &[0.0, 0.0, 0.0, 1.0, 0.0],
            &[0.0, 1.0, r, 0.0, 0.0],
        ])?;
        Ok(Self {
            params,
            metric,
            a,
            contact: WallContact { radius: r, b },
            potential: None,
        })
    }

    pub fn with_potential(params: BallParams, potential: PlanarPotential) -> Result<Self> {
        let mut scene = Self::new(params)?;
        scene.potential = Some(potential);
        Ok(scene)
    }

    pub fn params(&self) -> &BallParams {
        &self.params
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn constraint_a(&self) -> &ConstraintMatrix {
        &self.a
    }

    pub fn constraint_b(&self) -> &ConstraintMatrix {
        &self.contact.b
    }

    /// Flow state for a ball at `(x_S, y_S)` rolling with the given planar state.
    pub fn to_flow(
        &self,
        x_s: f64,
        y_s: f64,
        orientation: &UnitQuaternion<f64>,
        s: &ReducedWallState,
    ) -> (DVector<f64>, DVector<f64>) {
        let position = Vector3::new(x_s, y_s, self.params.radius);
        (
            ball_config(&position, orientation),
            rolling_velocity_completion(&self.params, s),
        )
    }

    pub fn from_flow(&self, x: &DVector<f64>, v: &DVector<f64>) -> BallState {
        BallState {
            position: Vector3::new(x[0], x[1], x[2]),
            orientation: UnitQuaternion::from_quaternion(quaternion_of(x)),
            velocity: Vector3::new(v[0], v[1], 0.0),
            angular_velocity: Vector3::new(v[2], v[3], v[4]),
        }
    }

    pub fn reduce(v: &DVector<f64>) -> ReducedWallState {
        ReducedWallState {
            v1: v[0],
            v2: v[1],
            w3: v[4],
        }
    }
}

impl MechanicalSystem for BallWallScene {
    fn name(&self) -> &str {
        "ball_wall"
    }

    fn config_dim(&self) -> usize {
        BALL_CONFIG_DIM
    }

    fn dof(&self) -> usize {
        5
    }

    fn metric_at(&self, _x: &DVector<f64>) -> Result<Metric> {
        Ok(self.metric.clone())
    }

    fn potential(&self, x: &DVector<f64>) -> f64 {
        self.potential.as_ref().map_or(0.0, |p| p.eval(x[0], x[1]))
    }

    fn potential_gradient(&self, x: &DVector<f64>, fd_step: f64) -> DVector<f64> {
        let mut grad = DVector::zeros(5);
        if let Some(p) = &self.potential {
            let h = fd_step * (1.0 + x[0].hypot(x[1]));
            grad[0] = (p.eval(x[0] + h, x[1]) - p.eval(x[0] - h, x[1])) / (2.0 * h);
            grad[1] = (p.eval(x[0], x[1] + h) - p.eval(x[0], x[1] - h)) / (2.0 * h);
        }
        grad
    }

    fn coriolis_force(
        &self,
        _x: &DVector<f64>,
        _v: &DVector<f64>,
        _fd_step: f64,
    ) -> Result<DVector<f64>> {
        Ok(DVector::zeros(5))
    }

    fn constraint_a_at(&self, _x: &DVector<f64>) -> Result<ConstraintMatrix> {
        Ok(self.a.clone())
    }

    fn constraint_a_rate(
        &self,
        _x: &DVector<f64>,
        _v: &DVector<f64>,
        _fd_step: f64,
    ) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(2, 5))
    }

    fn config_rate(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let omega = Vector3::new(v[2], v[3], v[4]);
        let dq = quaternion_rate(&quaternion_of(x), &omega);
        DVector::from_vec(vec![v[0], v[1], 0.0, dq.w, dq.i, dq.j, dq.k])
    }

    fn normalize_config(&self, x: &mut DVector<f64>) {
        normalize_quaternion(x);
    }

    fn wall(&self) -> Option<&dyn Wall> {
        Some(&self.contact)
    }

    fn velocity_labels(&self) -> Vec<String> {
        ["v_x", "v_y", "w_x", "w_y", "w_z"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn output_columns(&self) -> Vec<String> {
        ball_output_columns()
    }

    fn output_row(&self, x: &DVector<f64>, v: &DVector<f64>) -> Vec<f64> {
        let mut row: Vec<f64> = x.iter().copied().collect();
        row.extend_from_slice(&[v[0], v[1], 0.0, v[2], v[3], v[4]]);
        row
    }
}

/// Post-impact state of the thrown ball hitting the floor, for restitution `mu`.
pub fn ball_floor_impact_closed_form(
    p: &BallParams,
    v: &Vector3<f64>,
    w: &Vector3<f64>,
    mu: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let (m, j, r) = (p.mass, p.inertia, p.radius);
    let jp = p.j_prime();
    let lin = (m * r * r - mu * j) / jp;
    let cross = j * r * (1.0 + mu) / jp;
    let ang = (j - mu * m * r * r) / jp;
    let couple = r * m * (1.0 + mu) / jp;
    let v_plus = Vector3::new(lin * v.x + cross * w.y, lin * v.y - cross * w.x, -mu * v.z);
    let w_plus = Vector3::new(-couple * v.y + ang * w.x, couple * v.x + ang * w.y, w.z);
    (v_plus, w_plus)
}

/// Elastic impact of a rolling ball with the rough wall, on the planar state.
pub fn ball_wall_impact_closed_form(p: &BallParams, s: &ReducedWallState) -> ReducedWallState {
    let (m, j, r) = (p.mass, p.inertia, p.radius);
    let jt = p.j_tilde();
    let jp = p.j_prime();
    let half = r * r * m / (2.0 * jt);
    ReducedWallState {
        v1: -s.v1,
        v2: half * s.v2 + r * j / jt * s.w3,
        w3: jp / (r * jt) * s.v2 - half * s.w3,
    }
}

/// `(v₁, v₂, −v₂/r, v₁/r, ω₃)`.
pub fn rolling_velocity_completion(p: &BallParams, s: &ReducedWallState) -> DVector<f64> {
    let r = p.radius;
    DVector::from_vec(vec![s.v1, s.v2, -s.v2 / r, s.v1 / r, s.w3])
}

/// Angular momentum about the contact point, `m (CS × v_S) + J ω` with `CS = (0, 0, r)`.
pub fn contact_angular_momentum(
    p: &BallParams,
    v: &Vector3<f64>,
    w: &Vector3<f64>,
) -> Vector3<f64> {
    let cs = Vector3::new(0.0, 0.0, p.radius);
    cs.cross(v) * p.mass + w * p.inertia
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        apply_impact, impact_matrix, kernel_basis, kinetic_energy, validate_nesting,
        DEFAULT_NESTING_TOL, DEFAULT_RANK_TOL,
    };
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_ball() -> BallParams {
        BallParams::new(1.0, 0.4, 1.0, 9.81).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(BallParams::new(0.0, 0.4, 1.0, 9.81).is_err());
        assert!(BallParams::new(1.0, 0.4, 1.0, -1.0).is_err());
        let p = unit_ball();
        assert_relative_eq!(p.j_prime(), 1.4);
        assert_relative_eq!(p.j_tilde(), 0.9);
    }

    #[test]
    fn floor_scene_basics() {
        let scene = BallFloorScene::new(unit_ball()).unwrap();
        let state = BallState {
            position: Vector3::new(0.0, 0.0, 1.0),
            orientation: UnitQuaternion::identity(),
            velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        };
        let (x, _) = scene.to_flow(&state);
        assert_eq!(scene.wall().unwrap().guard(&x), 0.0);
        let v = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(kinetic_energy(scene.metric(), &v), 0.5);
        // B v = 0 is exactly "contact point at rest": v_S + ω × (0, 0, −r) = 0
        let z = kernel_basis(scene.constraint_b(), DEFAULT_RANK_TOL).unwrap();
        for i in 0..z.dim() {
            let k = z.vector(i);
            let vs = Vector3::new(k[0], k[1], k[2]);
            let w = Vector3::new(k[3], k[4], k[5]);
            assert!((vs + w.cross(&Vector3::new(0.0, 0.0, -1.0))).norm() < 1e-14);
        }
    }

    #[test]
    fn wall_scene_geometry() {
        let scene = BallWallScene::new(unit_ball()).unwrap();
        assert!(
            validate_nesting(
                scene.constraint_a(),
                scene.constraint_b(),
                DEFAULT_NESTING_TOL
            )
            .unwrap()
            .passed
        );
        let roll = DVector::from_vec(vec![0.7, 0.0, 0.0, 0.7, 0.0]);
        assert_eq!(scene.constraint_a().residual(&roll), 0.0);
        assert_eq!(
            kernel_basis(scene.constraint_a(), DEFAULT_RANK_TOL)
                .unwrap()
                .dim(),
            3
        );
        assert_eq!(
            kernel_basis(scene.constraint_b(), DEFAULT_RANK_TOL)
                .unwrap()
                .dim(),
            1
        );
    }

    #[test]
    fn floor_closed_form_examples() {
        let p = unit_ball();
        let (v, w) = ball_floor_impact_closed_form(
            &p,
            &Vector3::new(1.0, 0.0, -1.0),
            &Vector3::zeros(),
            1.0,
        );
        assert_relative_eq!(v, Vector3::new(3.0 / 7.0, 0.0, 1.0), epsilon = 1e-15);
        assert_relative_eq!(w, Vector3::new(0.0, 10.0 / 7.0, 0.0), epsilon = 1e-15);

        let (vel, u) = (0.8, 2.5);
        let vm = Vector3::new(-vel, 0.0, -u);
        let wm = Vector3::new(0.0, p.radius * p.mass * vel / p.inertia, 0.0);
        let (v, w) = ball_floor_impact_closed_form(&p, &vm, &wm, 1.0);
        assert_relative_eq!(v, -vm, epsilon = 1e-14);
        assert_relative_eq!(w, -wm, epsilon = 1e-14);

        let (v, _) = ball_floor_impact_closed_form(
            &p,
            &Vector3::new(0.0, 0.0, -1.0),
            &Vector3::zeros(),
            0.0,
        );
        assert_eq!(v.z, 0.0);
    }

    #[test]
    fn wall_closed_form_examples() {
        let p = unit_ball();
        let out = ball_wall_impact_closed_form(
            &p,
            &ReducedWallState {
                v1: -1.0,
                v2: 1.0,
                w3: 2.0,
            },
        );
        assert_relative_eq!(out.v1, 1.0);
        assert_relative_eq!(out.v2, 13.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(out.w3, 4.0 / 9.0, epsilon = 1e-15);

        let head_on = ball_wall_impact_closed_form(
            &p,
            &ReducedWallState {
                v1: -0.6,
                v2: 0.0,
                w3: 0.0,
            },
        );
        assert_eq!(
            head_on,
            ReducedWallState {
                v1: 0.6,
                v2: 0.0,
                w3: 0.0
            }
        );

        let g = Metric::diagonal(&[1.0, 1.0, 0.4, 0.4, 0.4]).unwrap();
        let before = rolling_velocity_completion(
            &p,
            &ReducedWallState {
                v1: -1.0,
                v2: 1.0,
                w3: 2.0,
            },
        );
        let after = rolling_velocity_completion(&p, &out);
        assert_relative_eq!(kinetic_energy(&g, &before), 2.2, epsilon = 1e-14);
        assert_relative_eq!(kinetic_energy(&g, &after), 2.2, epsilon = 1e-14);
    }

    #[test]
    fn rolling_completion_examples() {
        let p = unit_ball();
        let v = rolling_velocity_completion(
            &p,
            &ReducedWallState {
                v1: 1.0,
                v2: 0.0,
                w3: 0.0,
            },
        );
        assert_eq!(v.as_slice(), &[1.0, 0.0, 0.0, 1.0, 0.0]);
        let p2 = BallParams::new(1.0, 0.4, 2.0, 0.0).unwrap();
        let v = rolling_velocity_completion(
            &p2,
            &ReducedWallState {
                v1: 0.0,
                v2: 1.0,
                w3: 0.0,
            },
        );
        assert_eq!(v.as_slice(), &[0.0, 1.0, -0.5, 0.0, 0.0]);
    }

    #[test]
    fn contact_momentum_examples() {
        let p = unit_ball();
        assert_eq!(
            contact_angular_momentum(&p, &Vector3::new(1.0, 0.0, 0.0), &Vector3::zeros()),
            Vector3::new(0.0, 1.0, 0.0)
        );
        assert_relative_eq!(
            contact_angular_momentum(&p, &Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0)),
            Vector3::new(0.0, 0.0, 0.4)
        );
    }

    #[test]
    fn quaternion_rate_matches_fixed_frame_rotation() {
        // rotating about z at unit rate for a short time equals a z-rotation
        let scene = BallFloorScene::new(unit_ball()).unwrap();
        let mut x = DVector::from_vec(vec![0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let dt = 1e-6;
        x += scene.config_rate(&x, &v) * dt;
        scene.normalize_config(&mut x);
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), dt);
        assert_relative_eq!(x[3], expected.w, epsilon = 1e-12);
        assert_relative_eq!(x[6], expected.k, epsilon = 1e-12);
    }

    fn params_strategy() -> impl Strategy<Value = BallParams> {
        (0.1..10.0_f64, 0.01..5.0_f64, 0.1..2.0_f64)
            .prop_map(|(m, j, r)| BallParams::new(m, j, r, 9.81).unwrap())
    }

    proptest! {
        #[test]
        fn floor_closed_form_agrees_with_projector(
            p in params_strategy(),
            v in proptest::array::uniform3(-3.0..3.0_f64),
            w in proptest::array::uniform3(-3.0..3.0_f64),
            mu in 0.0..=1.0_f64,
        ) {
            let scene = BallFloorScene::new(p).unwrap();
            let (v, w) = (Vector3::from(v), Vector3::from(w));
            let a = ConstraintMatrix::empty(6);
            let r = impact_matrix(scene.metric(), &a, scene.constraint_b(), mu).unwrap();
            let vm = DVector::from_vec(vec![v.x, v.y, v.z, w.x, w.y, w.z]);
            let vp = apply_impact(&r, &vm, &a, 1e-12).unwrap();
            let (cv, cw) = ball_floor_impact_closed_form(&p, &v, &w, mu);
            for i in 0..3 {
                prop_assert!((vp[i] - cv[i]).abs() <= 1e-10);
                prop_assert!((vp[i + 3] - cw[i]).abs() <= 1e-10);
            }
            prop_assert_eq!(cw.z, w.z);
            if mu == 1.0 {
                let before = contact_angular_momentum(&p, &v, &w);
                let after = contact_angular_momentum(&p, &cv, &cw);
                prop_assert!((before - after).amax() <= 1e-10);
            }
        }

        #[test]
        fn wall_closed_form_agrees_with_projector(
            p in params_strategy(),
            s in (-3.0..3.0_f64, -3.0..3.0_f64, -3.0..3.0_f64),
        ) {
            let scene = BallWallScene::new(p).unwrap();
            let s = ReducedWallState { v1: s.0, v2: s.1, w3: s.2 };
            let a = scene.constraint_a();
            let r = impact_matrix(scene.metric(), a, scene.constraint_b(), 1.0).unwrap();
            let vp = apply_impact(&r, &rolling_velocity_completion(&p, &s), a, 1e-10).unwrap();
            let closed = rolling_velocity_completion(&p, &ball_wall_impact_closed_form(&p, &s));
            prop_assert!((&vp - closed).amax() <= 1e-10);
            prop_assert!(a.residual(&vp) <= 1e-10);
        }
    }
}
