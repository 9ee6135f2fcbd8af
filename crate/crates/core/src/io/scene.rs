//! JSON scene files.
//!
//! ```json
//! {
//!   "scene_kind": "ball_floor",
//!   "params": { "mass": 1.0, "inertia": 0.4, "radius": 1.0, "gravity": 9.81 },
//!   "initial_state": { "position": [0, 0, 2], "velocity": [-1, 0, -1], "angular_velocity": [0, 2.5, 0] },
//!   "mu": 1.0,
//!   "integrator": { "dt": 1e-4 },
//!   "t_max": 1.0
//! }
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector, Quaternion, UnitQuaternion, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{FlowState, IntegratorSettings};
use crate::geometry::{ConstraintMatrix, Metric};
use crate::hybrid::{defaults, SimulationSettings};
use crate::models::{
    assemble_generic_system, generic_system_with_nesting_tol, BallFloorScene, BallParams,
    BallState, BallWallScene, GenericSpec, MechanicalSystem, ModelError, PlanarPotential,
    QuadraticPotential, ReducedWallState,
};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl SceneError {
    fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Rewrites model errors so their field paths are relative to the file root.
    fn under(prefix: &str, e: ModelError) -> Self {
        match e {
            ModelError::Schema { field, reason } => {
                Self::schema(format!("{prefix}.{field}"), reason)
            }
            ModelError::Matrix { name, source } => Self::Model(ModelError::Matrix {
                name: format!("{prefix}.{name}"),
                source,
            }),
            other => Self::Model(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, SceneError>;

fn identity_orientation() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn is_identity(q: &[f64; 4]) -> bool {
    *q == identity_orientation()
}

/// Ball state for the floor scene; orientation is `[w, x, y, z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallInitialState {
    pub position: [f64; 3],
    #[serde(default = "identity_orientation", skip_serializing_if = "is_identity")]
    pub orientation: [f64; 4],
    pub velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
}

/// Rolling state for the wall scene: planar position and velocity plus spin `ω₃`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallInitialState {
    pub position: [f64; 2],
    #[serde(default = "identity_orientation", skip_serializing_if = "is_identity")]
    pub orientation: [f64; 4],
    pub velocity: [f64; 2],
    #[serde(default)]
    pub spin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericInitialState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// Ball parameters for the wall scene, with an optional potential `V(x_S, y_S)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallParams {
    pub mass: f64,
    pub inertia: f64,
    pub radius: f64,
    #[serde(default)]
    pub gravity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<QuadraticPotential>,
}

impl WallParams {
    pub fn ball(&self) -> BallParams {
        BallParams {
            mass: self.mass,
            inertia: self.inertia,
            radius: self.radius,
            gravity: self.gravity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "scene_kind", rename_all = "snake_case")]
pub enum Scene {
    BallFloor {
        params: BallParams,
        initial_state: BallInitialState,
    },
    BallWall {
        params: WallParams,
        initial_state: WallInitialState,
    },
    Generic {
        params: GenericSpec,
        initial_state: GenericInitialState,
    },
}

/// Optional simulation tolerances; every field has a default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "defaults::event_tol")]
    pub event_tol: f64,
    #[serde(default = "defaults::graze_tol")]
    pub graze_tol: f64,
    #[serde(default = "defaults::max_events")]
    pub max_events: usize,
    #[serde(default = "defaults::min_flight_time")]
    pub min_flight_time: f64,
    #[serde(default = "defaults::nesting_tol")]
    pub nesting_tol: f64,
    #[serde(default = "defaults::sample_stride")]
    pub sample_stride: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            event_tol: defaults::event_tol(),
            graze_tol: defaults::graze_tol(),
            max_events: defaults::max_events(),
            min_flight_time: defaults::min_flight_time(),
            nesting_tol: defaults::nesting_tol(),
            sample_stride: defaults::sample_stride(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneConfig {
    #[serde(flatten)]
    pub scene: Scene,
    pub mu: f64,
    pub integrator: IntegratorSettings,
    pub t_max: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Seed for the randomized checks of `validate`.
    #[serde(default)]
    pub seed: u64,
}

/// A scene turned into a runnable system.
pub struct BuiltScene {
    pub system: Box<dyn MechanicalSystem>,
    pub initial: FlowState,
    pub settings: SimulationSettings,
}

/// Wall-contact matrices evaluated at the initial configuration.
pub struct ContactMatrices {
    pub metric: Metric,
    pub a: ConstraintMatrix,
    pub b: ConstraintMatrix,
}

const TOP_LEVEL_KEYS: [&str; 8] = [
    "scene_kind",
    "params",
    "initial_state",
    "mu",
    "integrator",
    "t_max",
    "tolerances",
    "seed",
];

fn field<T: DeserializeOwned>(
    obj: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    default: Option<T>,
) -> Result<T> {
    match obj.get(key) {
        None => default.ok_or_else(|| SceneError::schema(key, "missing field")),
        Some(value) => serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." {
                key.to_string()
            } else {
                format!("{key}.{path}")
            };
            SceneError::schema(field, e.into_inner().to_string())
        }),
    }
}

fn finite_all(field: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(SceneError::schema(
            format!("{field}[{i}]"),
            "not a finite number",
        )),
        None => Ok(()),
    }
}

fn orientation(field: &str, q: &[f64; 4]) -> Result<UnitQuaternion<f64>> {
    finite_all(field, q)?;
    let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
    if quat.norm() < 1e-12 {
        return Err(SceneError::schema(field, "quaternion must be nonzero"));
    }
    Ok(UnitQuaternion::from_quaternion(quat))
}

fn matrix_from_rows(field: &str, rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(SceneError::schema(
                format!("{field}[{i}]"),
                format!("expected {cols} entries, got {}", row.len()),
            ));
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn checked_constraint(field: &str, rows: &[Vec<f64>], cols: usize) -> Result<ConstraintMatrix> {
    let m = matrix_from_rows(field, rows, cols)?;
    if m.nrows() == 0 {
        return Ok(ConstraintMatrix::empty(cols));
    }
    ConstraintMatrix::new(m).map_err(|source| {
        SceneError::Model(ModelError::Matrix {
            name: field.to_string(),
            source,
        })
    })
}

impl SceneConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| SceneError::schema("<document>", e.to_string()))?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &serde_json::Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| SceneError::schema("<document>", "expected a JSON object"))?;
        if let Some(key) = obj.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
            return Err(SceneError::schema(key.clone(), "unknown field"));
        }
        let kind: String = field(obj, "scene_kind", None)?;
        let scene = match kind.as_str() {
            "ball_floor" => Scene::BallFloor {
                params: field(obj, "params", None)?,
                initial_state: field(obj, "initial_state", None)?,
            },
            "ball_wall" => Scene::BallWall {
                params: field(obj, "params", None)?,
                initial_state: field(obj, "initial_state", None)?,
            },
            "generic" => Scene::Generic {
                params: field(obj, "params", None)?,
                initial_state: field(obj, "initial_state", None)?,
            },
            other => {
                return Err(SceneError::schema(
                    "scene_kind",
                    format!("expected one of ball_floor, ball_wall, generic; got `{other}`"),
                ))
            }
        };
        let config = SceneConfig {
            scene,
            mu: field(obj, "mu", None)?,
            integrator: field(obj, "integrator", None)?,
            t_max: field(obj, "t_max", None)?,
            tolerances: field(obj, "tolerances", Some(Tolerances::default()))?,
            seed: field(obj, "seed", Some(0))?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// Structural checks: ranges, shapes, rank of every constraint matrix.
    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && (0.0..=1.0).contains(&self.mu)) {
            return Err(SceneError::schema(
                "mu",
                format!("must lie in [0, 1], got {}", self.mu),
            ));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(SceneError::schema(
                "t_max",
                format!("must be finite and >= 0, got {}", self.t_max),
            ));
        }
        let positive = [
            ("integrator.dt", self.integrator.dt),
            ("integrator.drift_tol", self.integrator.drift_tol),
            ("integrator.fd_step", self.integrator.fd_step),
            ("tolerances.event_tol", self.tolerances.event_tol),
            ("tolerances.graze_tol", self.tolerances.graze_tol),
            (
                "tolerances.min_flight_time",
                self.tolerances.min_flight_time,
            ),
            ("tolerances.nesting_tol", self.tolerances.nesting_tol),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SceneError::schema(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if self.tolerances.sample_stride == 0 {
            return Err(SceneError::schema(
                "tolerances.sample_stride",
                "must be >= 1",
            ));
        }

        match &self.scene {
            Scene::BallFloor {
                params,
                initial_state,
            } => {
                params
                    .validate()
                    .map_err(|e| SceneError::under("params", e))?;
                let s = initial_state;
                finite_all("initial_state.position", &s.position)?;
                finite_all("initial_state.velocity", &s.velocity)?;
                finite_all("initial_state.angular_velocity", &s.angular_velocity)?;
                orientation("initial_state.orientation", &s.orientation)?;
                if s.position[2] < params.radius {
                    return Err(SceneError::schema(
                        "initial_state.position",
                        format!(
                            "ball centre is below the floor contact height {}",
                            params.radius
                        ),
                    ));
                }
            }
            Scene::BallWall {
                params,
                initial_state,
            } => {
                params
                    .ball()
                    .validate()
                    .map_err(|e| SceneError::under("params", e))?;
                if let Some(p) = &params.potential {
                    check_planar_potential(p)?;
                }
                let s = initial_state;
                finite_all("initial_state.position", &s.position)?;
                finite_all("initial_state.velocity", &s.velocity)?;
                finite_all("initial_state.spin", &[s.spin])?;
                orientation("initial_state.orientation", &s.orientation)?;
                if s.position[0] < params.radius {
                    return Err(SceneError::schema(
                        "initial_state.position",
                        format!("ball centre is closer than {} to the wall", params.radius),
                    ));
                }
            }
            Scene::Generic {
                params,
                initial_state,
            } => {
                assemble_generic_system(params).map_err(|e| SceneError::under("params", e))?;
                let n = params.dim;
                for (name, values) in [
                    ("initial_state.x", &initial_state.x),
                    ("initial_state.v", &initial_state.v),
                ] {
                    if values.len() != n {
                        return Err(SceneError::schema(
                            name,
                            format!("expected {n} entries, got {}", values.len()),
                        ));
                    }
                    finite_all(name, values)?;
                }
            }
        }
        Ok(())
    }

    pub fn simulation_settings(&self) -> SimulationSettings {
        let t = &self.tolerances;
        SimulationSettings {
            integrator: self.integrator,
            mu: self.mu,
            event_tol: t.event_tol,
            graze_tol: t.graze_tol,
            max_events: t.max_events,
            min_flight_time: t.min_flight_time,
            nesting_tol: t.nesting_tol,
            sample_stride: t.sample_stride,
        }
    }

    /// Builds the mechanical system and its initial state. For generic scenes
    /// this is where `ker B ⊆ ker A` is enforced.
    pub fn build(&self) -> Result<BuiltScene> {
        let settings = self.simulation_settings();
        let (system, initial): (Box<dyn MechanicalSystem>, FlowState) = match &self.scene {
            Scene::BallFloor {
                params,
                initial_state: s,
            } => {
                let scene =
                    BallFloorScene::new(*params).map_err(|e| SceneError::under("params", e))?;
                let (x, v) = scene.to_flow(&BallState {
                    position: Vector3::from(s.position),
                    orientation: orientation("initial_state.orientation", &s.orientation)?,
                    velocity: Vector3::from(s.velocity),
                    angular_velocity: Vector3::from(s.angular_velocity),
                });
                (Box::new(scene), FlowState::new(0.0, x, v))
            }
            Scene::BallWall {
                params,
                initial_state: s,
            } => {
                let ball = params.ball();
                let scene = match &params.potential {
                    None => BallWallScene::new(ball),
                    Some(p) => BallWallScene::with_potential(ball, planar_potential(p)),
                }
                .map_err(|e| SceneError::under("params", e))?;
                let (x, v) = scene.to_flow(
                    s.position[0],
                    s.position[1],
                    &orientation("initial_state.orientation", &s.orientation)?,
                    &ReducedWallState {
                        v1: s.velocity[0],
                        v2: s.velocity[1],
                        w3: s.spin,
                    },
                );
                (Box::new(scene), FlowState::new(0.0, x, v))
            }
            Scene::Generic {
                params,
                initial_state: s,
            } => {
                let sys = generic_system_with_nesting_tol(params, self.tolerances.nesting_tol)
                    .map_err(|e| SceneError::under("params", e))?;
                (
                    Box::new(sys),
                    FlowState::new(
                        0.0,
                        DVector::from_column_slice(&s.x),
                        DVector::from_column_slice(&s.v),
                    ),
                )
            }
        };
        Ok(BuiltScene {
            system,
            initial,
            settings,
        })
    }

    /// `(G, A, B)` at the initial configuration, without requiring nesting.
    /// `None` for a generic scene without a wall.
    pub fn contact_matrices(&self) -> Result<Option<ContactMatrices>> {
        match &self.scene {
            Scene::BallFloor { params, .. } => {
                let s = BallFloorScene::new(*params).map_err(|e| SceneError::under("params", e))?;
                Ok(Some(ContactMatrices {
                    metric: s.metric().clone(),
                    a: ConstraintMatrix::empty(6),
                    b: s.constraint_b().clone(),
                }))
            }
            Scene::BallWall { params, .. } => {
                let s = BallWallScene::new(params.ball())
                    .map_err(|e| SceneError::under("params", e))?;
                Ok(Some(ContactMatrices {
                    metric: s.metric().clone(),
                    a: s.constraint_a().clone(),
                    b: s.constraint_b().clone(),
                }))
            }
            Scene::Generic {
                params,
                initial_state,
            } => {
                let Some(wall) = &params.wall else {
                    return Ok(None);
                };
                let n = params.dim;
                let mut g = matrix_from_rows("params.metric", &params.metric, n)?;
                if g.nrows() != n {
                    return Err(SceneError::schema(
                        "params.metric",
                        format!("expected {n} rows"),
                    ));
                }
                for (k, slope) in params.metric_slopes.iter().enumerate() {
                    g += matrix_from_rows(&format!("params.metric_slopes[{k}]"), slope, n)?
                        * initial_state.x[k];
                }
                let metric = Metric::new(g)
                    .map_err(|e| SceneError::schema("params.metric", e.to_string()))?;
                Ok(Some(ContactMatrices {
                    metric,
                    a: checked_constraint("params.constraint_a", &params.constraint_a, n)?,
                    b: checked_constraint("params.wall.constraint_b", &wall.constraint_b, n)?,
                }))
            }
        }
    }
}

fn check_planar_potential(p: &QuadraticPotential) -> Result<()> {
    if !p.linear.is_empty() && p.linear.len() != 2 {
        return Err(SceneError::schema(
            "params.potential.linear",
            "expected 2 entries",
        ));
    }
    if !p.quadratic.is_empty() {
        matrix_from_rows("params.potential.quadratic", &p.quadratic, 2)?;
        if p.quadratic.len() != 2 {
            return Err(SceneError::schema(
                "params.potential.quadratic",
                "expected 2 rows",
            ));
        }
    }
    finite_all("params.potential.linear", &p.linear)?;
    Ok(())
}

fn planar_potential(p: &QuadraticPotential) -> PlanarPotential {
    let c = p.constant;
    let l = if p.linear.is_empty() {
        [0.0, 0.0]
    } else {
        [p.linear[0], p.linear[1]]
    };
    let q = if p.quadratic.is_empty() {
        [[0.0; 2]; 2]
    } else {
        [
            [p.quadratic[0][0], p.quadratic[0][1]],
            [p.quadratic[1][0], p.quadratic[1][1]],
        ]
    };
    PlanarPotential::new(move |x, y| {
        c + l[0] * x
            + l[1] * y
            + 0.5 * (q[0][0] * x * x + (q[0][1] + q[1][0]) * x * y + q[1][1] * y * y)
    })
}

pub fn parse_scene(path: impl AsRef<Path>) -> Result<SceneConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SceneConfig::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryError;

    const MINIMAL_FLOOR: &str = r#"{
        "scene_kind": "ball_floor",
        "params": {"mass": 1, "inertia": 0.4, "radius": 1, "gravity": 9.81},
        "initial_state": {"position": [0, 0, 2], "velocity": [-1, 0, -1], "angular_velocity": [0, 2.5, 0]},
        "mu": 1,
        "integrator": {"dt": 1e-4},
        "t_max": 1
    }"#;

    fn with(key: &str, value: serde_json::Value) -> String {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL_FLOOR).unwrap();
        v[key] = value;
        v.to_string()
    }

    fn schema_field(err: SceneError) -> String {
        match err {
            SceneError::Schema { field, .. } => field,
            other => panic!("expected schema error, got {other}"),
        }
    }

    #[test]
    fn minimal_floor_scene_parses() {
        let cfg = SceneConfig::from_json_str(MINIMAL_FLOOR).unwrap();
        assert_eq!(cfg.mu, 1.0);
        assert_eq!(cfg.integrator.drift_tol, 1e-10);
        assert_eq!(cfg.tolerances, Tolerances::default());
        let built = cfg.build().unwrap();
        assert_eq!(
            built.initial.x.as_slice(),
            &[0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn mu_out_of_range_is_reported_at_mu() {
        let err = SceneConfig::from_json_str(&with("mu", serde_json::json!(1.5))).unwrap_err();
        assert_eq!(schema_field(err), "mu");
    }

    #[test]
    fn nested_type_errors_carry_path() {
        let err = SceneConfig::from_json_str(&with(
            "params",
            serde_json::json!({"mass": "heavy", "inertia": 0.4, "radius": 1}),
        ))
        .unwrap_err();
        assert_eq!(schema_field(err), "params.mass");
        let err = SceneConfig::from_json_str(&with(
            "params",
            serde_json::json!({"mass": -1, "inertia": 0.4, "radius": 1}),
        ))
        .unwrap_err();
        assert_eq!(schema_field(err), "params.mass");
        let err = SceneConfig::from_json_str(&with("bogus", serde_json::json!(1))).unwrap_err();
        assert_eq!(schema_field(err), "bogus");
        let err = SceneConfig::from_json_str(&with("scene_kind", serde_json::json!("ball_table")))
            .unwrap_err();
        assert_eq!(schema_field(err), "scene_kind");
    }

    #[test]
    fn generic_rank_deficient_b_is_named() {
        let text = serde_json::json!({
            "scene_kind": "generic",
            "params": {
                "dim": 2,
                "metric": [[1, 0], [0, 1]],
                "wall": {"guard_normal": [1, 0], "constraint_b": [[1, 0], [2, 0]]}
            },
            "initial_state": {"x": [1, 0], "v": [-1, 0]},
            "mu": 1,
            "integrator": {"dt": 0.01},
            "t_max": 1
        })
        .to_string();
        match SceneConfig::from_json_str(&text).unwrap_err() {
            SceneError::Model(ModelError::Matrix { name, source }) => {
                assert_eq!(name, "params.wall.constraint_b");
                assert!(matches!(
                    source,
                    GeometryError::RankDeficient { rows: 2, rank: 1 }
                ));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn emitted_scene_parses_back() {
        let cfg = SceneConfig::from_json_str(MINIMAL_FLOOR).unwrap();
        assert_eq!(
            SceneConfig::from_json_str(&cfg.to_json_string()).unwrap(),
            cfg
        );
    }
}
