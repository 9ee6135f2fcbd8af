use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{MechanicalSystem, ModelError, Result, Wall};
use crate::geometry::{
    validate_nesting, ConstraintMatrix, GeometryError, Metric, DEFAULT_NESTING_TOL,
};

/// `V(x) = c + lᵀx + ½ xᵀQx`. Empty `linear` / `quadratic` mean zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticPotential {
    #[serde(default)]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quadratic: Vec<Vec<f64>>,
}

/// Affine guard `h(x) = guard_offset + guard_normalᵀx` with wall constraint `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    #[serde(default)]
    pub guard_offset: f64,
    pub guard_normal: Vec<f64>,
    pub constraint_b: Vec<Vec<f64>>,
}

/// Description of a natural system in chart coordinates (`ẋ = v`).
///
/// The metric is `G(x) = metric + Σ_k x_k metric_slopes[k]`; leave
/// `metric_slopes` empty for a constant metric. `constraint_a` may be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericSpec {
    pub dim: usize,
    pub metric: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metric_slopes: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub potential: QuadraticPotential,
    #[serde(default)]
    pub constraint_a: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall: Option<WallSpec>,
}

fn rows_to_matrix(field: &str, rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(ModelError::schema(
                format!("{field}[{i}]"),
                format!("expected {cols} entries, got {}", row.len()),
            ));
        }
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(ModelError::schema(
                format!("{field}[{i}][{j}]"),
                "not a finite number",
            ));
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

fn constraint(field: &str, rows: &[Vec<f64>], cols: usize) -> Result<ConstraintMatrix> {
    let m = rows_to_matrix(field, rows, cols)?;
    if m.nrows() == 0 {
        return Ok(ConstraintMatrix::empty(cols));
    }
    ConstraintMatrix::new(m).map_err(ModelError::matrix(field))
}

/// Affine wall of a [`GenericSystem`].
#[derive(Debug, Clone)]
pub struct AffineWall {
    offset: f64,
    normal: DVector<f64>,
    b: ConstraintMatrix,
}

impl Wall for AffineWall {
    fn guard(&self, x: &DVector<f64>) -> f64 {
        self.offset + self.normal.dot(x)
    }

    fn guard_rate(&self, _x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.normal.dot(v)
    }

    fn constraint_b_at(&self, _x: &DVector<f64>) -> Result<ConstraintMatrix> {
        Ok(self.b.clone())
    }
}

#[derive(Debug, Clone)]
pub struct GenericSystem {
    spec: GenericSpec,
    metric: DMatrix<f64>,
    constant_metric: Option<Metric>,
    slopes: Vec<DMatrix<f64>>,
    linear: DVector<f64>,
    quadratic: DMatrix<f64>,
    a: ConstraintMatrix,
    wall: Option<AffineWall>,
}

impl GenericSystem {
    pub fn spec(&self) -> &GenericSpec {
        &self.spec
    }

    pub fn constraint_a(&self) -> &ConstraintMatrix {
        &self.a
    }

    pub fn affine_wall(&self) -> Option<&AffineWall> {
        self.wall.as_ref()
    }
}

/// Builds a [`GenericSystem`], checking shapes, positive definiteness of the
/// metric at the origin, full rank of `A` and `B`, and `ker B ⊆ ker A`.
pub fn generic_system_from_config(spec: &GenericSpec) -> Result<GenericSystem> {
    generic_system_with_nesting_tol(spec, DEFAULT_NESTING_TOL)
}

pub fn generic_system_with_nesting_tol(
    spec: &GenericSpec,
    nesting_tol: f64,
) -> Result<GenericSystem> {
    let sys = assemble_generic_system(spec)?;
    if let Some(w) = &sys.wall {
        let report = validate_nesting(&sys.a, &w.b, nesting_tol)?;
        if !report.passed {
            return Err(ModelError::Geometry(GeometryError::NestingViolated {
                violation: report.violation,
                threshold: report.threshold,
            }));
        }
    }
    Ok(sys)
}

/// All checks of [`generic_system_from_config`] except the nesting of kernels.
pub fn assemble_generic_system(spec: &GenericSpec) -> Result<GenericSystem> {
    let n = spec.dim;
    if n == 0 {
        return Err(ModelError::schema("dim", "must be at least 1"));
    }
    if spec.metric.len() != n {
        return Err(ModelError::schema(
            "metric",
            format!("expected {n} rows, got {}", spec.metric.len()),
        ));
    }
    let metric = rows_to_matrix("metric", &spec.metric, n)?;
    let base =
        Metric::new(metric.clone()).map_err(|e| ModelError::schema("metric", e.to_string()))?;

    if !spec.metric_slopes.is_empty() && spec.metric_slopes.len() != n {
        return Err(ModelError::schema(
            "metric_slopes",
            format!("expected {n} matrices, got {}", spec.metric_slopes.len()),
        ));
    }
    let mut slopes = Vec::with_capacity(spec.metric_slopes.len());
    for (k, s) in spec.metric_slopes.iter().enumerate() {
        let field = format!("metric_slopes[{k}]");
        if s.len() != n {
            return Err(ModelError::schema(
                field,
                format!("expected {n} rows, got {}", s.len()),
            ));
        }
        let m = rows_to_matrix(&field, s, n)?;
        if crate::geometry::max_abs(&(&m - m.transpose())) > 1e-12 * crate::geometry::max_abs(&m) {
            return Err(ModelError::schema(field, "must be symmetric"));
        }
        slopes.push(m);
    }

    let pot = &spec.potential;
    if !pot.constant.is_finite() {
        return Err(ModelError::schema(
            "potential.constant",
            "not a finite number",
        ));
    }
    let linear = match pot.linear.len() {
        0 => DVector::zeros(n),
        len if len == n => DVector::from_column_slice(&pot.linear),
        len => {
            return Err(ModelError::schema(
                "potential.linear",
                format!("expected {n} entries, got {len}"),
            ))
        }
    };
    if linear.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::schema(
            "potential.linear",
            "not a finite number",
        ));
    }
    let quadratic = match pot.quadratic.len() {
        0 => DMatrix::zeros(n, n),
        len if len == n => {
            let q = rows_to_matrix("potential.quadratic", &pot.quadratic, n)?;
            (&q + q.transpose()) * 0.5
        }
        len => {
            return Err(ModelError::schema(
                "potential.quadratic",
                format!("expected {n} rows, got {len}"),
            ))
        }
    };

    let a = constraint("constraint_a", &spec.constraint_a, n)?;

    let wall = match &spec.wall {
        None => None,
        Some(w) => {
            if w.guard_normal.len() != n {
                return Err(ModelError::schema(
                    "wall.guard_normal",
                    format!("expected {n} entries, got {}", w.guard_normal.len()),
                ));
            }
            let normal = DVector::from_column_slice(&w.guard_normal);
            if !(normal.iter().all(|x| x.is_finite()) && normal.norm() > 0.0)
                || !w.guard_offset.is_finite()
            {
                return Err(ModelError::schema(
                    "wall.guard_normal",
                    "must be finite and nonzero",
                ));
            }
            let b = constraint("wall.constraint_b", &w.constraint_b, n)?;
            Some(AffineWall {
                offset: w.guard_offset,
                normal,
                b,
            })
        }
    };

    Ok(GenericSystem {
        spec: spec.clone(),
        constant_metric: slopes.is_empty().then_some(base),
        metric,
        slopes,
        linear,
        quadratic,
        a,
        wall,
    })
}

impl MechanicalSystem for GenericSystem {
    fn name(&self) -> &str {
        "generic"
    }

    fn config_dim(&self) -> usize {
        self.spec.dim
    }

    fn dof(&self) -> usize {
        self.spec.dim
    }

    fn metric_at(&self, x: &DVector<f64>) -> Result<Metric> {
        if let Some(g) = &self.constant_metric {
            return Ok(g.clone());
        }
        let g = self
            .slopes
            .iter()
            .zip(x.iter())
            .fold(self.metric.clone(), |acc, (s, &xk)| acc + s * xk);
        Metric::new(g).map_err(ModelError::matrix("metric"))
    }

    fn potential(&self, x: &DVector<f64>) -> f64 {
        self.spec.potential.constant + self.linear.dot(x) + 0.5 * x.dot(&(&self.quadratic * x))
    }

    fn potential_gradient(&self, x: &DVector<f64>, _fd_step: f64) -> DVector<f64> {
        &self.linear + &self.quadratic * x
    }

    fn coriolis_force(
        &self,
        _x: &DVector<f64>,
        v: &DVector<f64>,
        _fd_step: f64,
    ) -> Result<DVector<f64>> {
        let n = self.spec.dim;
        if self.slopes.is_empty() {
            return Ok(DVector::zeros(n));
        }
        let mut f = DVector::from_fn(n, |i, _| 0.5 * v.dot(&(&self.slopes[i] * v)));
        for (k, s) in self.slopes.iter().enumerate() {
            f -= s * v * v[k];
        }
        Ok(f)
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
        Ok(DMatrix::zeros(self.a.rows(), self.a.cols()))
    }

    fn wall(&self) -> Option<&dyn Wall> {
        self.wall.as_ref().map(|w| w as &dyn Wall)
    }
}
