//! Event-driven simulation: integrate the constrained flow, locate guard
//! crossings, reflect the velocity with the impact matrix, repeat.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, energy, step_by, DynamicsError, FlowState, IntegratorSettings};
use crate::geometry::{
    apply_impact, impact_matrix_with_tol, kernel_basis, kinetic_energy, GeometryError,
};
use crate::models::{MechanicalSystem, ModelError, Wall};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("invalid initial state: {0}")]
    InitialState(String),
    #[error("invalid simulation settings: {0}")]
    InvalidSettings(String),
    #[error("grazing impact at t = {tau}: dh/dt = {guard_rate:e} is not transversal")]
    GrazingImpact { tau: f64, guard_rate: f64 },
    #[error("event bisection stalled in [{t_lo}, {t_hi}]")]
    BisectionStall { t_lo: f64, t_hi: f64 },
    #[error("motion stays on the wall after t = {t}")]
    NoSeparation { t: f64 },
    #[error(
        "post-impact velocity still points into the wall at t = {tau} (dh/dt = {guard_rate:e})"
    )]
    NonSeparating { tau: f64, guard_rate: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

impl From<ModelError> for SimulationError {
    fn from(e: ModelError) -> Self {
        Self::Dynamics(DynamicsError::Model(e))
    }
}

impl From<GeometryError> for SimulationError {
    fn from(e: GeometryError) -> Self {
        Self::from(ModelError::Geometry(e))
    }
}

pub type Result<T> = std::result::Result<T, SimulationError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub integrator: IntegratorSettings,
    /// Restitution coefficient in `[0, 1]`.
    pub mu: f64,
    /// Accepted `|h|` at a located impact.
    #[serde(default = "defaults::event_tol")]
    pub event_tol: f64,
    /// Impacts with `|dh/dt| ≤ graze_tol · max(1, ‖v‖)` are grazing.
    #[serde(default = "defaults::graze_tol")]
    pub graze_tol: f64,
    #[serde(default = "defaults::max_events")]
    pub max_events: usize,
    #[serde(default = "defaults::min_flight_time")]
    pub min_flight_time: f64,
    #[serde(default = "defaults::nesting_tol")]
    pub nesting_tol: f64,
    /// Keep every n-th step in the output; impacts and the final state are always kept.
    #[serde(default = "defaults::sample_stride")]
    pub sample_stride: usize,
}

pub(crate) mod defaults {
    pub fn event_tol() -> f64 {
        1e-12
    }
    pub fn graze_tol() -> f64 {
        1e-8
    }
    pub fn max_events() -> usize {
        10_000
    }
    pub fn min_flight_time() -> f64 {
        1e-9
    }
    pub fn nesting_tol() -> f64 {
        crate::geometry::DEFAULT_NESTING_TOL
    }
    pub fn sample_stride() -> usize {
        1
    }
}

impl SimulationSettings {
    pub fn new(integrator: IntegratorSettings, mu: f64) -> Self {
        Self {
            integrator,
            mu,
            event_tol: defaults::event_tol(),
            graze_tol: defaults::graze_tol(),
            max_events: defaults::max_events(),
            min_flight_time: defaults::min_flight_time(),
            nesting_tol: defaults::nesting_tol(),
            sample_stride: defaults::sample_stride(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator
            .validate()
            .map_err(|e| SimulationError::InvalidSettings(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(SimulationError::InvalidSettings(format!(
                "mu = {} outside [0, 1]",
                self.mu
            )));
        }
        let positive = [
            ("event_tol", self.event_tol),
            ("graze_tol", self.graze_tol),
            ("min_flight_time", self.min_flight_time),
            ("nesting_tol", self.nesting_tol),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SimulationError::InvalidSettings(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        if self.sample_stride == 0 {
            return Err(SimulationError::InvalidSettings(
                "sample_stride must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn rate_scale(&self, v: &DVector<f64>) -> f64 {
        v.norm().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactEvent {
    pub tau: f64,
    pub x_tau: DVector<f64>,
    pub v_minus: DVector<f64>,
    pub v_plus: DVector<f64>,
    pub t_minus: f64,
    pub t_plus: f64,
    /// `dh/dt` just before the impact.
    pub guard_rate: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Completed,
    ZenoCap,
    GrazingAbort,
    Error,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Completed => "completed",
            Status::ZenoCap => "zeno_cap",
            Status::GrazingAbort => "grazing_abort",
            Status::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<FlowState>,
    pub events: Vec<ImpactEvent>,
    pub status: Status,
    /// Why the run stopped early, for every status other than `Completed`.
    pub failure: Option<SimulationError>,
}

/// A step over which the guard changes sign.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub start: FlowState,
    pub width: f64,
}

/// Returns a bracket when the step `start → end` ends on the wrong side of the wall.
pub fn detect_crossing(
    sys: &dyn MechanicalSystem,
    start: &FlowState,
    end: &FlowState,
) -> Option<Bracket> {
    let wall = sys.wall()?;
    (wall.guard(&end.x) < 0.0).then(|| Bracket {
        start: start.clone(),
        width: end.t - start.t,
    })
}

const MAX_BISECTIONS: usize = 200;
const DEPARTURE_SAMPLES: usize = 16;

/// Locates the first impact inside a bracket by bisection on re-integrated
/// sub-steps, returning the pre-impact state at `τ` with `|h| ≤ event_tol`.
///
/// If the bracket starts at the wall moving away, the first interior point
/// above the tolerance band is used as the left end; if there is none the
/// motion never left the wall and [`SimulationError::NoSeparation`] is returned.
pub fn refine_crossing(
    sys: &dyn MechanicalSystem,
    bracket: &Bracket,
    settings: &SimulationSettings,
) -> Result<FlowState> {
    let wall = sys
        .wall()
        .ok_or_else(|| SimulationError::InitialState("system has no wall".into()))?;
    let tol = settings.event_tol;
    let start = &bracket.start;
    let at = |offset: f64| -> Result<FlowState> {
        if offset == 0.0 {
            Ok(start.clone())
        } else {
            Ok(step_by(sys, start, offset, &settings.integrator)?)
        }
    };

    let h_start = wall.guard(&start.x);
    let mut lo = 0.0;
    let mut hi = bracket.width;
    if h_start <= tol {
        if wall.guard_rate(&start.x, &start.v) < 0.0 || bracket.width == 0.0 {
            return Ok(start.clone());
        }
        let mut left = None;
        for i in 1..DEPARTURE_SAMPLES {
            let offset = bracket.width * i as f64 / DEPARTURE_SAMPLES as f64;
            let h = wall.guard(&at(offset)?.x);
            match left {
                None if h > tol => left = Some(offset),
                Some(_) if h < 0.0 => {
                    hi = offset;
                    break;
                }
                _ => {}
            }
        }
        lo = left.ok_or(SimulationError::NoSeparation { t: start.t })?;
    }

    let s_hi = at(hi)?;
    if wall.guard(&s_hi.x).abs() <= tol {
        return Ok(s_hi);
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s_mid = at(mid)?;
        let h = wall.guard(&s_mid.x);
        if h.abs() <= tol {
            return Ok(s_mid);
        }
        if h > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SimulationError::BisectionStall {
        t_lo: start.t + lo,
        t_hi: start.t + hi,
    })
}

enum ImpactOutcome {
    Continue(FlowState),
    Stop(FlowState, Status, SimulationError),
}

struct Run<'a> {
    sys: &'a dyn MechanicalSystem,
    wall: Option<&'a dyn Wall>,
    settings: &'a SimulationSettings,
    samples: Vec<FlowState>,
    events: Vec<ImpactEvent>,
}

impl Run<'_> {
    fn push_sample(&mut self, s: FlowState) {
        match self.samples.last_mut() {
            Some(last) if last.t >= s.t => *last = s,
            _ => self.samples.push(s),
        }
    }

    fn impact(&mut self, contact: FlowState) -> Result<ImpactOutcome> {
        let wall = self.wall.expect("impacts require a wall");
        let settings = self.settings;
        let scale = settings.rate_scale(&contact.v);
        let rate = wall.guard_rate(&contact.x, &contact.v);
        if rate > settings.graze_tol * scale {
            // already separating
            return Ok(ImpactOutcome::Continue(contact));
        }
        if rate >= -settings.graze_tol * scale {
            let err = SimulationError::GrazingImpact {
                tau: contact.t,
                guard_rate: rate,
            };
            return Ok(ImpactOutcome::Stop(contact, Status::GrazingAbort, err));
        }
        if let Some(last) = self.events.last() {
            if contact.t - last.tau < settings.min_flight_time {
                let err = SimulationError::NoSeparation { t: contact.t };
                return Ok(ImpactOutcome::Stop(contact, Status::ZenoCap, err));
            }
        }
        if self.events.len() >= settings.max_events {
            let err = SimulationError::NoSeparation { t: contact.t };
            return Ok(ImpactOutcome::Stop(contact, Status::ZenoCap, err));
        }

        let g = self.sys.metric_at(&contact.x)?;
        let a = self.sys.constraint_a_at(&contact.x)?;
        let b = wall.constraint_b_at(&contact.x)?;
        let r = impact_matrix_with_tol(&g, &a, &b, settings.mu, settings.nesting_tol)?;
        let v_plus = apply_impact(&r, &contact.v, &a, settings.integrator.drift_tol * scale)?;
        let rate_plus = wall.guard_rate(&contact.x, &v_plus);
        self.events.push(ImpactEvent {
            tau: contact.t,
            x_tau: contact.x.clone(),
            v_minus: contact.v.clone(),
            t_minus: kinetic_energy(&g, &contact.v),
            t_plus: kinetic_energy(&g, &v_plus),
            v_plus: v_plus.clone(),
            guard_rate: rate,
            mu: settings.mu,
        });
        let after = FlowState::new(contact.t, contact.x, v_plus);
        if rate_plus < -settings.graze_tol * scale {
            let err = SimulationError::NonSeparating {
                tau: after.t,
                guard_rate: rate_plus,
            };
            return Ok(ImpactOutcome::Stop(after, Status::Error, err));
        }
        if rate_plus <= settings.graze_tol * scale {
            let err = SimulationError::NoSeparation { t: after.t };
            return Ok(ImpactOutcome::Stop(after, Status::ZenoCap, err));
        }
        Ok(ImpactOutcome::Continue(after))
    }

    fn finish(self, status: Status, failure: Option<SimulationError>) -> Trajectory {
        Trajectory {
            samples: self.samples,
            events: self.events,
            status,
            failure,
        }
    }
}

fn check_initial(
    sys: &dyn MechanicalSystem,
    initial: &FlowState,
    settings: &SimulationSettings,
) -> Result<()> {
    if initial.x.len() != sys.config_dim() || initial.v.len() != sys.dof() {
        return Err(SimulationError::InitialState(format!(
            "expected configuration of length {} and velocity of length {}, got {} and {}",
            sys.config_dim(),
            sys.dof(),
            initial.x.len(),
            initial.v.len()
        )));
    }
    if !(initial.t.is_finite()
        && initial
            .x
            .iter()
            .chain(initial.v.iter())
            .all(|x| x.is_finite()))
    {
        return Err(SimulationError::InitialState("non-finite entries".into()));
    }
    let drift = dynamics::constraint_drift(sys, initial)?;
    let allowed = settings.integrator.drift_tol * settings.rate_scale(&initial.v);
    if drift > allowed {
        return Err(SimulationError::InitialState(format!(
            "velocity violates the constraint: |A v| = {drift:e} > {allowed:e}"
        )));
    }
    if let Some(wall) = sys.wall() {
        let h = wall.guard(&initial.x);
        if h < -settings.event_tol {
            return Err(SimulationError::InitialState(format!(
                "configuration is behind the wall (h = {h:e})"
            )));
        }
    }
    Ok(())
}

/// Runs the hybrid flow from `initial` until `t_max` (absolute time).
///
/// Failures after the start (grazing, nesting, singular systems) end the run
/// with a non-`Completed` status and keep the partial trajectory; only invalid
/// input is reported through `Err`.
pub fn simulate(
    sys: &dyn MechanicalSystem,
    initial: &FlowState,
    t_max: f64,
    settings: &SimulationSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    check_initial(sys, initial, settings)?;
    if !t_max.is_finite() {
        return Err(SimulationError::InvalidSettings(
            "t_max must be finite".into(),
        ));
    }
    let mut run = Run {
        sys,
        wall: sys.wall(),
        settings,
        samples: vec![initial.clone()],
        events: Vec::new(),
    };
    let mut cur = initial.clone();

    if let Some(wall) = run.wall {
        if wall.guard(&cur.x).abs() <= settings.event_tol && t_max > cur.t {
            match run.impact(cur.clone()) {
                Ok(ImpactOutcome::Continue(next)) => {
                    run.push_sample(next.clone());
                    cur = next;
                }
                Ok(ImpactOutcome::Stop(last, status, err)) => {
                    run.push_sample(last);
                    return Ok(run.finish(status, Some(err)));
                }
                Err(err) => return Ok(run.finish(Status::Error, Some(err))),
            }
        }
    }

    let mut steps = 0usize;
    while cur.t < t_max {
        let dt = settings.integrator.dt;
        let remaining = t_max - cur.t;
        // absorb round-off so the run does not end with a sliver step
        let last = remaining <= dt * (1.0 + 1e-9);
        let h = if last { remaining } else { dt };
        let next = match step_by(sys, &cur, h, &settings.integrator) {
            Ok(next) => next,
            Err(err) => return Ok(run.finish(Status::Error, Some(err.into()))),
        };
        let next = if last {
            FlowState { t: t_max, ..next }
        } else {
            next
        };

        if let Some(bracket) = detect_crossing(sys, &cur, &next) {
            let outcome =
                refine_crossing(sys, &bracket, settings).and_then(|contact| run.impact(contact));
            match outcome {
                Ok(ImpactOutcome::Continue(after)) => {
                    run.push_sample(after.clone());
                    cur = after;
                    continue;
                }
                Ok(ImpactOutcome::Stop(last, status, err)) => {
                    run.push_sample(last);
                    return Ok(run.finish(status, Some(err)));
                }
                Err(err @ SimulationError::NoSeparation { .. }) => {
                    run.push_sample(cur);
                    return Ok(run.finish(Status::ZenoCap, Some(err)));
                }
                Err(err) => {
                    run.push_sample(cur);
                    return Ok(run.finish(Status::Error, Some(err)));
                }
            }
        }

        steps += 1;
        if steps.is_multiple_of(settings.sample_stride) || next.t >= t_max {
            run.push_sample(next.clone());
        }
        cur = next;
    }
    Ok(run.finish(Status::Completed, None))
}

/// Invariant checks recomputed from a finished trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub event_count: usize,
    pub sample_count: usize,
    /// Largest `|T⁺ − T⁻| / T⁻` over elastic events.
    pub max_elastic_energy_error: f64,
    /// Largest `T⁺ − T⁻` over inelastic events (should not be positive).
    pub max_inelastic_energy_gain: f64,
    /// Largest `‖Z_Bᵀ G (v⁺ − v⁻)‖` over events.
    pub max_jump_orthogonality: f64,
    /// Largest `‖A(x) v‖` over samples.
    pub max_constraint_drift: f64,
    /// Largest relative change of `T + V` within a smooth arc.
    pub max_arc_energy_drift: f64,
    /// Smallest guard value over samples (`+∞` without a wall).
    pub min_guard: f64,
}

impl AuditReport {
    /// Passes when every quantity is inside the given bounds.
    pub fn passed(
        &self,
        energy_tol: f64,
        orthogonality_tol: f64,
        drift_tol: f64,
        event_tol: f64,
    ) -> bool {
        self.max_elastic_energy_error <= energy_tol
            && self.max_inelastic_energy_gain <= energy_tol
            && self.max_jump_orthogonality <= orthogonality_tol
            && self.max_constraint_drift <= drift_tol
            && self.min_guard >= -event_tol
    }
}

pub fn audit(sys: &dyn MechanicalSystem, traj: &Trajectory) -> Result<AuditReport> {
    let mut report = AuditReport {
        event_count: traj.events.len(),
        sample_count: traj.samples.len(),
        min_guard: f64::INFINITY,
        ..AuditReport::default()
    };
    for ev in &traj.events {
        if ev.mu == 1.0 {
            let err = if ev.t_minus > 0.0 {
                (ev.t_plus - ev.t_minus).abs() / ev.t_minus
            } else {
                (ev.t_plus - ev.t_minus).abs()
            };
            report.max_elastic_energy_error = report.max_elastic_energy_error.max(err);
        } else {
            report.max_inelastic_energy_gain =
                report.max_inelastic_energy_gain.max(ev.t_plus - ev.t_minus);
        }
        if let Some(wall) = sys.wall() {
            let g = sys.metric_at(&ev.x_tau)?;
            let b = wall.constraint_b_at(&ev.x_tau)?;
            let z = kernel_basis(&b, b.rank_tol())?;
            let jump = z.matrix().transpose() * g.matrix() * (&ev.v_plus - &ev.v_minus);
            report.max_jump_orthogonality = report.max_jump_orthogonality.max(jump.norm());
        }
    }

    let mut arc_start: Option<f64> = None;
    let mut next_event = traj.events.iter().map(|e| e.tau).peekable();
    for s in &traj.samples {
        report.max_constraint_drift = report
            .max_constraint_drift
            .max(dynamics::constraint_drift(sys, s)?);
        if let Some(wall) = sys.wall() {
            report.min_guard = report.min_guard.min(wall.guard(&s.x));
        }
        let e = energy(sys, s)?;
        let mut new_arc = arc_start.is_none();
        while next_event.peek().is_some_and(|&tau| tau <= s.t) {
            next_event.next();
            new_arc = true;
        }
        if new_arc {
            arc_start = Some(e);
        } else if let Some(e0) = arc_start {
            let drift = (e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE);
            report.max_arc_energy_drift = report.max_arc_energy_drift.max(drift);
        }
    }
    Ok(report)
}
