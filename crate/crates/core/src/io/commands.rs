//! Entry points behind the `nhimpact` subcommands. Each writes its report to
//! `out` and returns an error whose [`CommandError::exit_code`] is the process
//! exit status.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::scene::{parse_scene, ContactMatrices, Scene, SceneConfig, SceneError};
use super::table::{
    event_energies, read_matrix, write_events, write_matrix, write_trajectory, TableError,
};
use crate::dynamics::{constraint_drift, DynamicsError};
use crate::geometry::{
    g_projector, impact_matrix_with_tol, kernel_basis, kinetic_energy, max_abs, validate_nesting,
    ConstraintMatrix, GeometryError, ImpactMatrix, Metric, DEFAULT_NESTING_TOL, DEFAULT_RANK_TOL,
};
use crate::hybrid::{audit, simulate, SimulationError, Status};
use crate::models::{
    ball_floor_impact_closed_form, ball_wall_impact_closed_form, contact_angular_momentum,
    rolling_velocity_completion, BallParams, ModelError, ReducedWallState,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("simulation stopped with status {status}: {source}")]
    Simulation {
        status: &'static str,
        source: SimulationError,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
    #[error("invalid argument `{name}`: {reason}")]
    Argument { name: &'static str, reason: String },
}

fn geometry_code(e: &GeometryError) -> i32 {
    match e {
        GeometryError::SingularGram => EXIT_NUMERICAL,
        _ => EXIT_INVALID,
    }
}

fn model_code(e: &ModelError) -> i32 {
    match e {
        ModelError::Schema { .. } => EXIT_INVALID,
        ModelError::Matrix { source, .. } | ModelError::Geometry(source) => geometry_code(source),
    }
}

fn simulation_code(e: &SimulationError) -> i32 {
    match e {
        SimulationError::InitialState(_) | SimulationError::InvalidSettings(_) => EXIT_INVALID,
        SimulationError::Dynamics(DynamicsError::InvalidSettings(_)) => EXIT_INVALID,
        SimulationError::Dynamics(DynamicsError::Model(m)) => model_code(m),
        _ => EXIT_NUMERICAL,
    }
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Scene(SceneError::Model(m)) => model_code(m),
            Self::Scene(_) | Self::Table(_) | Self::ChecksFailed { .. } | Self::Argument { .. } => {
                EXIT_INVALID
            }
            Self::Geometry(g) => geometry_code(g),
            Self::Simulation { source, .. } => simulation_code(source),
            Self::Output { .. } => EXIT_INVALID,
        }
    }
}

pub type Result<T> = std::result::Result<T, CommandError>;

fn report(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<()> {
    out.write_fmt(text).map_err(|source| CommandError::Output {
        path: "<stdout>".into(),
        source,
    })
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let err = |source| CommandError::Output {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    body(&mut w).map_err(err)?;
    w.flush().map_err(err)
}

/// Command-line overrides for `simulate`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimulateOverrides {
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
}

pub fn cmd_simulate(
    scene_path: &Path,
    out_path: &Path,
    events_path: &Path,
    overrides: SimulateOverrides,
    out: &mut dyn Write,
) -> Result<()> {
    let mut cfg = parse_scene(scene_path)?;
    if let Some(t) = overrides.t_max {
        cfg.t_max = t;
    }
    if let Some(dt) = overrides.dt {
        cfg.integrator.dt = dt;
    }
    cfg.validate()?;
    let built = cfg.build()?;
    let sys = built.system.as_ref();
    let traj = simulate(sys, &built.initial, cfg.t_max, &built.settings).map_err(|source| {
        CommandError::Simulation {
            status: Status::Error.as_str(),
            source,
        }
    })?;

    write_file(out_path, |w| write_trajectory(w, sys, &traj))?;
    write_file(events_path, |w| write_events(w, sys, &traj))?;

    let summary = audit(sys, &traj).map_err(|source| CommandError::Simulation {
        status: traj.status.as_str(),
        source,
    })?;
    report(out, format_args!("scene: {}\n", sys.name()))?;
    report(out, format_args!("status: {}\n", traj.status.as_str()))?;
    report(out, format_args!("samples: {}\n", summary.sample_count))?;
    report(out, format_args!("events: {}\n", summary.event_count))?;
    report(
        out,
        format_args!("max_arc_energy_drift: {:e}\n", summary.max_arc_energy_drift),
    )?;
    report(
        out,
        format_args!(
            "max_elastic_energy_error: {:e}\n",
            summary.max_elastic_energy_error
        ),
    )?;
    report(
        out,
        format_args!(
            "max_inelastic_energy_gain: {:e}\n",
            summary.max_inelastic_energy_gain
        ),
    )?;
    report(
        out,
        format_args!(
            "max_jump_orthogonality: {:e}\n",
            summary.max_jump_orthogonality
        ),
    )?;
    report(
        out,
        format_args!("max_constraint_drift: {:e}\n", summary.max_constraint_drift),
    )?;
    report(out, format_args!("min_guard: {:e}\n", summary.min_guard))?;
    for (k, (tm, tp)) in event_energies(sys, &traj).iter().enumerate() {
        report(
            out,
            format_args!("event {k}: T_minus = {tm:e}, T_plus = {tp:e}\n"),
        )?;
    }

    match (traj.status, traj.failure) {
        (Status::Completed | Status::ZenoCap, _) | (_, None) => Ok(()),
        (status, Some(source)) => Err(CommandError::Simulation {
            status: status.as_str(),
            source,
        }),
    }
}

fn constraint_from_table(m: DMatrix<f64>) -> std::result::Result<ConstraintMatrix, GeometryError> {
    if m.nrows() == 0 {
        Ok(ConstraintMatrix::empty(m.ncols()))
    } else {
        ConstraintMatrix::new(m)
    }
}

/// `max ‖(R − I) z‖` over an orthonormal basis `z` of `ker A`.
fn identity_defect_on(
    r: &DMatrix<f64>,
    a: &ConstraintMatrix,
) -> std::result::Result<f64, GeometryError> {
    let z = kernel_basis(a, DEFAULT_RANK_TOL)?;
    let n = r.nrows();
    Ok(max_abs(&((r - DMatrix::identity(n, n)) * z.matrix())))
}

pub fn cmd_impact_map(
    metric_path: &Path,
    a_path: &Path,
    b_path: &Path,
    mu: f64,
    out: &mut dyn Write,
) -> Result<()> {
    if !(mu.is_finite() && (0.0..=1.0).contains(&mu)) {
        return Err(CommandError::Argument {
            name: "mu",
            reason: format!("must lie in [0, 1], got {mu}"),
        });
    }
    let g = read_matrix(metric_path, None)?;
    let n = g.nrows();
    if g.ncols() != n || n == 0 {
        return Err(GeometryError::DimensionMismatch(format!(
            "metric must be square and nonempty, got {}x{}",
            n,
            g.ncols()
        ))
        .into());
    }
    let g = Metric::new(g)?;
    let a = constraint_from_table(read_matrix(a_path, Some(n))?)?;
    let b = constraint_from_table(read_matrix(b_path, Some(n))?)?;

    let r = impact_matrix_with_tol(&g, &a, &b, mu, DEFAULT_NESTING_TOL)?;
    let nesting = validate_nesting(&a, &b, DEFAULT_NESTING_TOL)?;
    let p = r.projector();
    let to_io = |source| CommandError::Output {
        path: "<stdout>".into(),
        source,
    };

    report(out, format_args!("P\n"))?;
    write_matrix(out, p.matrix()).map_err(to_io)?;
    report(out, format_args!("R\n"))?;
    write_matrix(out, r.matrix()).map_err(to_io)?;
    report(
        out,
        format_args!(
            "nesting: pass (violation {:e}, threshold {:e})\n",
            nesting.violation, nesting.threshold
        ),
    )?;
    report(
        out,
        format_args!("idempotency |P^2 - P|: {:e}\n", p.idempotency_residual()),
    )?;
    report(
        out,
        format_args!(
            "self-adjointness |GP - P^T G|: {:e}\n",
            p.self_adjoint_residual()
        ),
    )?;
    if mu == 1.0 {
        report(
            out,
            format_args!("involution |R^2 - I|: {:e}\n", r.involution_residual()),
        )?;
    }
    report(
        out,
        format_args!(
            "identity on ker B: {:e}\n",
            identity_defect_on(r.matrix(), &b)?
        ),
    )?;
    let on_a = identity_defect_on(r.matrix(), &a)?;
    let verdict = if on_a <= 1e-10 { "yes" } else { "no" };
    report(
        out,
        format_args!("identity on ker A: {verdict} ({on_a:e})\n"),
    )?;
    Ok(())
}

/// Outcome of one named check in `validate`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn bound(name: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= tol,
            detail: format!("{value:e} <= {tol:e}"),
        }
    }

    fn error(name: &str, err: impl std::fmt::Display) -> Self {
        Self {
            name: name.into(),
            passed: false,
            detail: err.to_string(),
        }
    }
}

const VALIDATE_SAMPLES: usize = 200;

/// Random velocity in `ker A` with components of order one.
fn random_admissible(
    rng: &mut ChaCha8Rng,
    a: &ConstraintMatrix,
) -> std::result::Result<DVector<f64>, GeometryError> {
    let z = kernel_basis(a, DEFAULT_RANK_TOL)?;
    let c = DVector::from_fn(z.dim(), |_, _| rng.random_range(-2.0..2.0));
    Ok(z.combine(&c))
}

fn impact_checks(
    m: &ContactMatrices,
    r: &ImpactMatrix,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<Vec<Check>, GeometryError> {
    let p = r.projector();
    let g = &m.metric;
    let scale = 1.0 + max_abs(p.matrix());
    let mut checks = vec![
        Check::bound(
            "projector idempotent",
            p.idempotency_residual(),
            1e-12 * scale,
        ),
        Check::bound(
            "projector G-self-adjoint",
            p.self_adjoint_residual(),
            1e-12 * scale * (1.0 + max_abs(g.matrix())),
        ),
    ];
    if !m.a.is_empty() {
        let ap = m.a.matrix() * p.matrix() - m.a.matrix();
        checks.push(Check::bound(
            "A P = A",
            max_abs(&ap),
            1e-12 * scale * (1.0 + max_abs(m.a.matrix())),
        ));
    }
    checks.push(Check::bound(
        "R fixes ker B",
        identity_defect_on(r.matrix(), &m.b)?,
        1e-12 * scale,
    ));
    if r.mu() == 1.0 {
        checks.push(Check::bound(
            "R involution (mu = 1)",
            r.involution_residual(),
            1e-12 * scale * scale,
        ));
    }

    let zb = kernel_basis(&m.b, DEFAULT_RANK_TOL)?;
    let (mut orth, mut energy, mut admissible, mut plastic) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..VALIDATE_SAMPLES {
        let v = random_admissible(rng, &m.a)?;
        let vp = r.matrix() * &v;
        let tm = kinetic_energy(g, &v);
        let tp = kinetic_energy(g, &vp);
        let jump = zb.matrix().transpose() * g.matrix() * (&vp - &v);
        orth = orth.max(jump.amax() / (1.0 + v.amax()));
        energy = energy.max(if r.mu() == 1.0 {
            (tp - tm).abs() / tm.max(1.0)
        } else {
            (tp - tm) / tm.max(1.0)
        });
        admissible = admissible.max(m.a.residual(&vp));
        plastic = plastic.max(m.b.residual(&vp) / (1.0 + v.amax()));
    }
    checks.push(Check::bound("jump G-orthogonal to ker B", orth, 1e-9));
    if r.mu() == 1.0 {
        checks.push(Check::bound(
            "kinetic energy conserved (mu = 1)",
            energy,
            1e-12,
        ));
    } else {
        checks.push(Check::bound("kinetic energy not increased", energy, 1e-12));
    }
    checks.push(Check::bound(
        "post-impact velocity in ker A",
        admissible,
        1e-10,
    ));
    if r.mu() == 0.0 {
        checks.push(Check::bound("B v+ = 0 (mu = 0)", plastic, 1e-10));
    }
    Ok(checks)
}

fn floor_oracle_checks(
    params: &BallParams,
    m: &ContactMatrices,
    mu: f64,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<Vec<Check>, GeometryError> {
    let r = impact_matrix_with_tol(&m.metric, &m.a, &m.b, mu, DEFAULT_NESTING_TOL)?;
    let (mut err, mut momentum) = (0.0_f64, 0.0_f64);
    for _ in 0..VALIDATE_SAMPLES {
        let v = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let w = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let full = DVector::from_iterator(6, v.iter().chain(w.iter()).copied());
        let generic = r.matrix() * full;
        let (vp, wp) = ball_floor_impact_closed_form(params, &v, &w, mu);
        let closed = DVector::from_iterator(6, vp.iter().chain(wp.iter()).copied());
        err = err.max((generic - closed).amax());
        let l0 = contact_angular_momentum(params, &v, &w);
        let l1 = contact_angular_momentum(params, &vp, &wp);
        momentum = momentum.max((l1 - l0).amax());
    }
    Ok(vec![
        Check::bound("floor closed form agreement", err, 1e-10),
        Check::bound("contact angular momentum conserved", momentum, 1e-10),
    ])
}

fn wall_oracle_checks(
    params: &BallParams,
    m: &ContactMatrices,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<Vec<Check>, GeometryError> {
    let r = impact_matrix_with_tol(&m.metric, &m.a, &m.b, 1.0, DEFAULT_NESTING_TOL)?;
    let mut err = 0.0_f64;
    for _ in 0..VALIDATE_SAMPLES {
        let s = ReducedWallState {
            v1: rng.random_range(-2.0..0.0),
            v2: rng.random_range(-2.0..2.0),
            w3: rng.random_range(-2.0..2.0),
        };
        let generic = r.matrix() * rolling_velocity_completion(params, &s);
        let closed = rolling_velocity_completion(params, &ball_wall_impact_closed_form(params, &s));
        err = err.max((generic - closed).amax());
    }
    Ok(vec![Check::bound(
        "wall closed form agreement (mu = 1)",
        err,
        1e-10,
    )])
}

/// Runs the invariant suite for a parsed scene.
pub fn validate_scene(cfg: &SceneConfig) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nesting_tol = cfg.tolerances.nesting_tol;

    match cfg.contact_matrices() {
        Ok(Some(m)) => {
            match validate_nesting(&m.a, &m.b, nesting_tol) {
                Ok(rep) => checks.push(Check {
                    name: "ker B in ker A".into(),
                    passed: rep.passed,
                    detail: format!("{:e} <= {:e}", rep.violation, rep.threshold),
                }),
                Err(e) => checks.push(Check::error("ker B in ker A", e)),
            }
            match g_projector(&m.metric, &m.b) {
                Ok(_) => {}
                Err(e) => checks.push(Check::error("projector", e)),
            }
            match impact_matrix_with_tol(&m.metric, &m.a, &m.b, cfg.mu, nesting_tol)
                .and_then(|r| impact_checks(&m, &r, &mut rng))
            {
                Ok(list) => checks.extend(list),
                Err(e) => checks.push(Check::error("impact map", e)),
            }
            let oracle = match &cfg.scene {
                Scene::BallFloor { params, .. } => {
                    Some(floor_oracle_checks(params, &m, cfg.mu, &mut rng))
                }
                Scene::BallWall { params, .. } => {
                    Some(wall_oracle_checks(&params.ball(), &m, &mut rng))
                }
                Scene::Generic { .. } => None,
            };
            match oracle {
                Some(Ok(list)) => checks.extend(list),
                Some(Err(e)) => checks.push(Check::error("closed form", e)),
                None => {}
            }
        }
        Ok(None) => {}
        Err(e) => checks.push(Check::error("contact matrices", e)),
    }

    match cfg.build() {
        Ok(built) => {
            let sys = built.system.as_ref();
            match constraint_drift(sys, &built.initial) {
                Ok(d) => checks.push(Check::bound(
                    "initial velocity admissible",
                    d,
                    cfg.integrator.drift_tol.max(1e-10),
                )),
                Err(e) => checks.push(Check::error("initial velocity admissible", e)),
            }
            if let Some(wall) = sys.wall() {
                let h = wall.guard(&built.initial.x);
                checks.push(Check {
                    name: "initial state on admissible side".into(),
                    passed: h >= -cfg.tolerances.event_tol,
                    detail: format!("h = {h:e}"),
                });
            }
        }
        Err(e) => checks.push(Check::error("build system", e)),
    }
    checks
}

pub fn cmd_validate(scene_path: &Path, out: &mut dyn Write) -> Result<()> {
    let cfg = parse_scene(scene_path)?;
    let checks = validate_scene(&cfg);
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        report(out, format_args!("{tag} {}: {}\n", c.name, c.detail))?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    report(
        out,
        format_args!("{} checks, {} failed\n", checks.len(), failed),
    )?;
    if failed > 0 {
        return Err(CommandError::ChecksFailed {
            failed,
            total: checks.len(),
        });
    }
    Ok(())
}
