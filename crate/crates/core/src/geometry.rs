//! Constraint kernels, the kinetic-metric orthogonal projector and impact matrices.
//!
//! Everything here is small dense linear algebra on `nalgebra` dynamic matrices.
//! A velocity `v` lives in `R^n`; the kinetic energy is `½ vᵀ G v`; a constraint
//! matrix `M` defines the admissible velocities `ker M`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative singular-value cutoff used for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Relative eigenvalue floor for positive definiteness of a metric.
pub const DEFAULT_SPD_TOL: f64 = 1e-12;
/// Relative tolerance for `ker B ⊆ ker A`.
pub const DEFAULT_NESTING_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("metric is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("metric is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("constraint matrix is rank deficient: numerical rank {rank} < {rows} rows")]
    RankDeficient { rows: usize, rank: usize },
    #[error("rank tolerance {0} outside (0, 1)")]
    InvalidTolerance(f64),
    #[error("Gram matrix B G^-1 B^T is numerically singular")]
    SingularGram,
    #[error("ker B is not contained in ker A (violation {violation:e}, allowed {threshold:e})")]
    NestingViolated { violation: f64, threshold: f64 },
    #[error("restitution coefficient {0} outside [0, 1]")]
    MuOutOfRange(f64),
    #[error("pre-impact velocity is not admissible: |A v| = {residual:e} > {tol:e}")]
    InadmissiblePreVelocity { residual: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Largest absolute entry; zero for an empty matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GeometryError::NonFinite)
    }
}

/// Kinetic-energy metric: a symmetric positive-definite `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    entries: DMatrix<f64>,
}

impl Metric {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(entries, DEFAULT_SPD_TOL)
    }

    /// Checks symmetry and positive definiteness. Near-symmetric input (relative
    /// asymmetry below 1e-12) is symmetrized exactly.
    pub fn with_tolerance(entries: DMatrix<f64>, tol_spd: f64) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(GeometryError::DimensionMismatch(format!(
                "metric must be square and nonempty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        check_finite(&entries)?;
        let scale = max_abs(&entries).max(f64::MIN_POSITIVE);
        let asym = max_abs(&(&entries - entries.transpose()));
        if asym > SYMMETRY_TOL * scale {
            return Err(GeometryError::NotSymmetric(asym));
        }
        let entries = (&entries + entries.transpose()) * 0.5;
        let eig = entries.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        let max = eig.eigenvalues.max();
        if max.is_nan() || max <= 0.0 || min <= tol_spd * max {
            return Err(GeometryError::NotPositiveDefinite(min));
        }
        Ok(Self { entries })
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `G⁻¹ rhs` through a Cholesky factorization.
    /// Lower-triangular `L` with `G = L Lᵀ`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.entries
            .clone()
            .cholesky()
            .expect("metric is positive definite by construction")
            .l()
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.entries
            .clone()
            .cholesky()
            .expect("metric is positive definite by construction")
            .solve(rhs)
    }

    pub fn solve_vector(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.entries
            .clone()
            .cholesky()
            .expect("metric is positive definite by construction")
            .solve(rhs)
    }

    /// `ξᵀ G η`.
    pub fn inner(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> f64 {
        xi.dot(&(&self.entries * eta))
    }
}

/// Full-row-rank constraint matrix (the `A` or `B` operator).
///
/// A matrix with zero rows is allowed and stands for "no constraint".
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    entries: DMatrix<f64>,
    rank_tol: f64,
}

impl ConstraintMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_rank_tol(entries, DEFAULT_RANK_TOL)
    }

    pub fn with_rank_tol(entries: DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        if !(rank_tol > 0.0 && rank_tol < 1.0) {
            return Err(GeometryError::InvalidTolerance(rank_tol));
        }
        if entries.ncols() == 0 {
            return Err(GeometryError::DimensionMismatch(
                "constraint matrix needs at least one column".into(),
            ));
        }
        check_finite(&entries)?;
        let rank = numerical_rank(&entries, rank_tol);
        if rank < entries.nrows() {
            return Err(GeometryError::RankDeficient {
                rows: entries.nrows(),
                rank,
            });
        }
        Ok(Self { entries, rank_tol })
    }

    /// The empty constraint on `R^n`: every velocity is admissible.
    pub fn empty(n: usize) -> Self {
        Self {
            entries: DMatrix::zeros(0, n),
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(GeometryError::DimensionMismatch("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(DMatrix::from_row_slice(rows.len(), ncols, &flat))
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `‖M v‖₂`.
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            (&self.entries * v).norm()
        }
    }
}

/// Singular values of `m`, padded with zero rows to a square matrix so that the
/// right singular vectors form a full basis of `R^cols`.
fn padded_svd(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.ncols();
    let mut square = DMatrix::zeros(n.max(m.nrows()), n);
    square.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    (svd.singular_values.iter().copied().collect(), v_t)
}

fn numerical_rank(m: &DMatrix<f64>, rank_tol: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rank_tol * smax).count()
}

/// Orthonormal basis of the kernel of a constraint matrix, one vector per column.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis {
    basis: DMatrix<f64>,
}

impl KernelBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.basis.column(i).into_owned()
    }

    /// Image of a coefficient vector, `Z c`.
    pub fn combine(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.basis * coeffs
    }
}

/// Orthonormal basis of the numerical kernel of `m`.
///
/// Each basis vector is sign-normalized so that its first non-negligible
/// component is positive.
pub fn kernel_basis(m: &ConstraintMatrix, rank_tol: f64) -> Result<KernelBasis> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(GeometryError::InvalidTolerance(rank_tol));
    }
    let n = m.cols();
    if m.is_empty() {
        return Ok(KernelBasis {
            basis: DMatrix::identity(n, n),
        });
    }
    let (sv, v_t) = padded_svd(m.matrix());
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let cutoff = rank_tol * smax;
    let kernel_rows: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= cutoff).collect();
    let rank = n - kernel_rows.len();
    if rank < m.rows() {
        return Err(GeometryError::RankDeficient {
            rows: m.rows(),
            rank,
        });
    }
    let mut basis = DMatrix::zeros(n, kernel_rows.len());
    for (j, &i) in kernel_rows.iter().enumerate() {
        let mut col = v_t.row(i).transpose();
        let cutoff = 1e-12 * col.amax();
        let lead = col
            .iter()
            .copied()
            .find(|x| x.abs() > cutoff)
            .unwrap_or(0.0);
        if lead < 0.0 {
            col.neg_mut();
        }
        basis.set_column(j, &col);
    }
    Ok(KernelBasis { basis })
}

/// G-orthogonal projector onto the complement `W` of `ker B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    entries: DMatrix<f64>,
    metric: Metric,
    constraint: ConstraintMatrix,
}

impl Projector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn constraint(&self) -> &ConstraintMatrix {
        &self.constraint
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Normal part `P v`.
    pub fn normal_part(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.entries * v
    }

    /// Tangential part `(I − P) v ∈ ker B`.
    pub fn tangential_part(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.entries * v
    }

    /// `‖P² − P‖_max`.
    pub fn idempotency_residual(&self) -> f64 {
        max_abs(&(&self.entries * &self.entries - &self.entries))
    }

    /// `‖G P − Pᵀ G‖_max`.
    pub fn self_adjoint_residual(&self) -> f64 {
        let g = self.metric.matrix();
        max_abs(&(g * &self.entries - self.entries.transpose() * g))
    }
}

/// `P = G⁻¹Bᵀ (B G⁻¹ Bᵀ)⁻¹ B`.
///
/// With `G = L Lᵀ` and `C = L⁻¹ Bᵀ = Q R`, this is `P = L⁻ᵀ Q Qᵀ Lᵀ`; the
/// Gram matrix `CᵀC` is never formed, so the conditioning of `B` is not squared.
pub fn g_projector(g: &Metric, b: &ConstraintMatrix) -> Result<Projector> {
    let n = g.dim();
    if b.cols() != n {
        return Err(GeometryError::DimensionMismatch(format!(
            "metric is {n}x{n} but constraint has {} columns",
            b.cols()
        )));
    }
    let entries = if b.is_empty() {
        DMatrix::zeros(n, n)
    } else {
        let l = g.cholesky_factor();
        let c = l
            .solve_lower_triangular(&b.matrix().transpose())
            .ok_or(GeometryError::SingularGram)?;
        let qr = c.qr();
        let sv = qr.r().singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        if smax.is_nan() || smax <= 0.0 || smin <= 1e-7 * smax {
            return Err(GeometryError::SingularGram);
        }
        let q = qr.q();
        let m = &q * (q.transpose() * l.transpose());
        l.tr_solve_lower_triangular(&m)
            .ok_or(GeometryError::SingularGram)?
    };
    Ok(Projector {
        entries,
        metric: g.clone(),
        constraint: b.clone(),
    })
}

/// Kernel-side construction of the same projector,
/// `P = I − Z (Zᵀ G Z)⁻¹ Zᵀ G` for an orthonormal basis `Z` of `ker B`.
pub fn projector_from_kernel(g: &Metric, kernel: &KernelBasis) -> Result<DMatrix<f64>> {
    let n = g.dim();
    if kernel.ambient_dim() != n {
        return Err(GeometryError::DimensionMismatch(
            "kernel basis does not match metric".into(),
        ));
    }
    let z = kernel.matrix();
    if z.ncols() == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let gm = g.matrix();
    let reduced = z.transpose() * gm * z;
    let chol = reduced.cholesky().ok_or(GeometryError::SingularGram)?;
    let zt_g = z.transpose() * gm;
    Ok(DMatrix::identity(n, n) - z * chol.solve(&zt_g))
}

/// Outcome of checking `ker B ⊆ ker A`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestingReport {
    pub passed: bool,
    /// `‖A Z_B‖_max`.
    pub violation: f64,
    /// `tol · ‖A‖_max`.
    pub threshold: f64,
    /// Kernel vector of `B` with the largest `‖A z‖`, when both sides are nontrivial.
    pub witness: Option<DVector<f64>>,
}

pub fn validate_nesting(
    a: &ConstraintMatrix,
    b: &ConstraintMatrix,
    tol: f64,
) -> Result<NestingReport> {
    if a.cols() != b.cols() {
        return Err(GeometryError::DimensionMismatch(format!(
            "A has {} columns, B has {}",
            a.cols(),
            b.cols()
        )));
    }
    let threshold = tol * max_abs(a.matrix());
    if a.is_empty() {
        return Ok(NestingReport {
            passed: true,
            violation: 0.0,
            threshold,
            witness: None,
        });
    }
    let z = kernel_basis(b, b.rank_tol())?;
    if z.dim() == 0 {
        return Ok(NestingReport {
            passed: true,
            violation: 0.0,
            threshold,
            witness: None,
        });
    }
    let az = a.matrix() * z.matrix();
    let violation = max_abs(&az);
    let worst = (0..z.dim())
        .max_by(|&i, &j| az.column(i).norm().total_cmp(&az.column(j).norm()))
        .expect("kernel is nonempty");
    Ok(NestingReport {
        passed: violation <= threshold,
        violation,
        threshold,
        witness: Some(z.vector(worst)),
    })
}

/// Reflection operator `R = I − (1 + μ) P` together with its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactMatrix {
    entries: DMatrix<f64>,
    mu: f64,
    projector: Projector,
    constraint_a: ConstraintMatrix,
}

impl ImpactMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    pub fn metric(&self) -> &Metric {
        self.projector.metric()
    }

    pub fn constraint_a(&self) -> &ConstraintMatrix {
        &self.constraint_a
    }

    pub fn constraint_b(&self) -> &ConstraintMatrix {
        self.projector.constraint()
    }

    /// `‖R² − I‖_max`; zero only in the elastic case.
    pub fn involution_residual(&self) -> f64 {
        let n = self.entries.nrows();
        max_abs(&(&self.entries * &self.entries - DMatrix::identity(n, n)))
    }
}

pub fn impact_matrix(
    g: &Metric,
    a: &ConstraintMatrix,
    b: &ConstraintMatrix,
    mu: f64,
) -> Result<ImpactMatrix> {
    impact_matrix_with_tol(g, a, b, mu, DEFAULT_NESTING_TOL)
}

pub fn impact_matrix_with_tol(
    g: &Metric,
    a: &ConstraintMatrix,
    b: &ConstraintMatrix,
    mu: f64,
    nesting_tol: f64,
) -> Result<ImpactMatrix> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(GeometryError::MuOutOfRange(mu));
    }
    if a.cols() != g.dim() {
        return Err(GeometryError::DimensionMismatch(format!(
            "A has {} columns, metric dimension is {}",
            a.cols(),
            g.dim()
        )));
    }
    let nesting = validate_nesting(a, b, nesting_tol)?;
    if !nesting.passed {
        return Err(GeometryError::NestingViolated {
            violation: nesting.violation,
            threshold: nesting.threshold,
        });
    }
    let projector = g_projector(g, b)?;
    let n = g.dim();
    let entries = DMatrix::identity(n, n) - projector.matrix() * (1.0 + mu);
    Ok(ImpactMatrix {
        entries,
        mu,
        projector,
        constraint_a: a.clone(),
    })
}

/// `v⁺ = R v⁻`, after checking that `v⁻ ∈ ker A` up to `tol`.
pub fn apply_impact(
    r: &ImpactMatrix,
    v_minus: &DVector<f64>,
    a: &ConstraintMatrix,
    tol: f64,
) -> Result<DVector<f64>> {
    if v_minus.len() != r.entries.ncols() || a.cols() != v_minus.len() {
        return Err(GeometryError::DimensionMismatch(format!(
            "velocity has {} components, impact matrix is {}x{}",
            v_minus.len(),
            r.entries.nrows(),
            r.entries.ncols()
        )));
    }
    let residual = a.residual(v_minus);
    if residual > tol {
        return Err(GeometryError::InadmissiblePreVelocity { residual, tol });
    }
    Ok(&r.entries * v_minus)
}

/// `½ vᵀ G v`.
pub fn kinetic_energy(g: &Metric, v: &DVector<f64>) -> f64 {
    0.5 * g.inner(v, v)
}
