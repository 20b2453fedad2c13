//! Kernels, Gram matrices and the positive-semidefinite machinery built on
//! top of them: projection onto the cone, Moore-Penrose inversion,
//! trace-fraction eigentruncation and pseudo-attribute coordinates.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, SymEigen};

/// Asymmetry tolerated by [`GramMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Asymmetry tolerated by [`project_psd`] before rejecting its input.
pub const PROJECT_SYMMETRY_TOL: f64 = 1e-10;
/// Relative PSD tolerance, scaled by `trace / n`.
pub const PSD_REL_TOL: f64 = 1e-8;
/// Relative rank tolerance for pseudo-inversion, scaled by the top eigenvalue.
pub const RANK_REL_TOL: f64 = 1e-10;
/// Most negative squared distance that is silently clipped to zero.
pub const DISTANCE_CLIP_TOL: f64 = 1e-10;

/// A positive definite kernel used purely as a value oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `exp(-|x - y|² / width)`.
    Gaussian { width: f64 },
    /// Euclidean inner product.
    Linear,
}

impl Kernel {
    pub fn gaussian(width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::NonPositiveWidth(width));
        }
        Ok(Kernel::Gaussian { width })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian { width } => Kernel::gaussian(width).map(|_| ()),
            Kernel::Linear => Ok(()),
        }
    }

    /// Evaluates the kernel. Panics in debug builds on unequal lengths;
    /// callers validate dimensions up front.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match *self {
            Kernel::Gaussian { width } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / width).exp()
            }
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    /// Kernel values between `query` and every training point.
    pub fn row(&self, query: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = points.first().map(Vec::len).unwrap_or(query.len());
        if query.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: query.len(),
            });
        }
        Ok(points.iter().map(|p| self.eval(query, p)).collect())
    }
}

/// Symmetric nonnegative-definite matrix of kernel values over `n` objects.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

impl GramMatrix {
    /// Validates symmetry (to [`SYMMETRY_TOL`]) and nonnegative
    /// definiteness (to [`psd_tolerance`]).
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation("non-finite Gram entry".into()));
        }
        let asym = linalg::max_asymmetry(&entries);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let tol = psd_tolerance(&entries);
        if entries.nrows() > 0 {
            let eig = linalg::sym_eigen(&entries);
            let min = eig.values[eig.values.len() - 1];
            if min < -tol {
                return Err(Error::NotPsd {
                    min_eigenvalue: min,
                    tolerance: tol,
                });
            }
        }
        Ok(GramMatrix { entries })
    }

    /// Wraps a matrix already known to be symmetric PSD (e.g. the output of a
    /// cone projection).
    pub(crate) fn from_trusted(mut entries: DMatrix<f64>) -> Self {
        linalg::symmetrize(&mut entries);
        GramMatrix { entries }
    }

    pub fn identity(n: usize) -> Self {
        GramMatrix {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
        }
        GramMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.entries)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.entries.row(i).iter().copied().collect()
    }

    pub fn eigen(&self) -> SymEigen {
        linalg::sym_eigen(&self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let e = self.eigen();
        e.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `1e-8 · trace / n`, the scale-invariant PSD slack.
pub fn psd_tolerance(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    PSD_REL_TOL * (linalg::trace(m) / n as f64).abs()
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let first = points.first().ok_or(Error::EmptyInput("points"))?;
    let d = first.len();
    if d == 0 {
        return Err(Error::EmptyInput("point dimension"));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
    }
    Ok(d)
}

/// Gram matrix `K[i][j] = kernel(points[i], points[j])`.
pub fn gram(kernel: &Kernel, points: &[Vec<f64>]) -> Result<GramMatrix> {
    kernel.validate()?;
    check_points(points)?;
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&points[i], &points[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(GramMatrix { entries: m })
}

/// Kernel-induced squared distance `K_ii + K_jj - 2 K_ij`.
///
/// Values in `[-1e-10, 0)` are clipped to zero; anything more negative means
/// a non-PSD matrix slipped past validation.
pub fn squared_distance(k: &GramMatrix, i: usize, j: usize) -> Result<f64> {
    let n = k.n();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, n });
        }
    }
    clip_distance(k.get(i, i) + k.get(j, j) - 2.0 * k.get(i, j))
}

pub(crate) fn clip_distance(d: f64) -> Result<f64> {
    if d >= 0.0 {
        Ok(d)
    } else if d >= -DISTANCE_CLIP_TOL {
        Ok(0.0)
    } else {
        Err(Error::InvariantViolation(format!(
            "negative squared distance {d:e}"
        )))
    }
}

/// Frobenius-nearest PSD matrix: eigendecompose, clip negative eigenvalues.
pub fn project_psd(m: &DMatrix<f64>) -> Result<GramMatrix> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let asym = linalg::max_asymmetry(m);
    if asym > PROJECT_SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let mut sym = m.clone();
    linalg::symmetrize(&mut sym);
    Ok(GramMatrix::from_trusted(clip_to_psd(&sym)))
}

pub(crate) fn clip_to_psd(sym: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = linalg::sym_eigen(sym);
    if eig.values.iter().all(|&v| v >= 0.0) {
        return sym.clone();
    }
    let clipped: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    linalg::reassemble(&eig.vectors, &clipped)
}

/// Moore-Penrose inverse via eigendecomposition.
///
/// Eigenvalues at or below `rank_tol` (default `1e-10 · λ₁`) are treated as
/// zero. The zero matrix maps to the zero matrix.
pub fn pseudo_inverse(k: &GramMatrix, rank_tol: Option<f64>) -> DMatrix<f64> {
    let eig = k.eigen();
    pinv_from_eigen(&eig, rank_tol)
}

pub(crate) fn pinv_from_eigen(eig: &SymEigen, rank_tol: Option<f64>) -> DMatrix<f64> {
    let n = eig.values.len();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(eig));
    let inv: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| if v > tol && v > 0.0 { 1.0 / v } else { 0.0 })
        .collect();
    linalg::reassemble(&eig.vectors, &inv)
}

pub(crate) fn default_rank_tol(eig: &SymEigen) -> f64 {
    let top = eig.values.iter().copied().fold(0.0_f64, f64::max);
    RANK_REL_TOL * top
}

/// Numerical rank under the default relative tolerance.
pub fn rank(k: &GramMatrix) -> usize {
    let eig = k.eigen();
    let tol = default_rank_tol(&eig);
    eig.values.iter().filter(|&&v| v > tol && v > 0.0).count()
}

/// Leading eigenpairs of a kernel, eigenvalues descending and clipped at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    /// Retained eigenvalues, `λ₁ ≥ … ≥ λ_p ≥ 0`.
    pub eigenvalues: Vec<f64>,
    /// `n × p`, orthonormal columns.
    pub eigenvectors: DMatrix<f64>,
    /// Sum of all clipped eigenvalues, retained or not.
    pub total_trace: f64,
}

impl EigenSystem {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// Retained share of the trace.
    pub fn trace_fraction(&self) -> f64 {
        if self.total_trace > 0.0 {
            self.eigenvalues.iter().sum::<f64>() / self.total_trace
        } else {
            0.0
        }
    }

    /// Flips the sign of the `nu`-th eigenvector.
    pub fn flip(&mut self, nu: usize) {
        self.eigenvectors.column_mut(nu).neg_mut();
    }
}

fn clipped_eigen(k: &GramMatrix) -> Result<(SymEigen, f64)> {
    let mut eig = k.eigen();
    for v in eig.values.iter_mut() {
        *v = v.max(0.0);
    }
    let total: f64 = eig.values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateKernel);
    }
    Ok((eig, total))
}

fn leading(eig: &SymEigen, total: f64, p: usize) -> EigenSystem {
    EigenSystem {
        eigenvalues: eig.values.iter().take(p).copied().collect(),
        eigenvectors: eig.vectors.columns(0, p).into_owned(),
        total_trace: total,
    }
}

/// Smallest `p` whose leading eigenvalues hold `trace_fraction` of the trace.
pub fn eigentruncate(k: &GramMatrix, trace_fraction: f64) -> Result<EigenSystem> {
    if !(trace_fraction > 0.0 && trace_fraction <= 1.0) {
        return Err(Error::invalid("trace_fraction", format!("{trace_fraction} not in (0, 1]")));
    }
    let (eig, total) = clipped_eigen(k)?;
    let target = trace_fraction * total;
    let n = eig.values.len();
    let mut cum = 0.0;
    let mut p = n;
    for (idx, &v) in eig.values.iter().enumerate() {
        cum += v;
        // relative slack absorbs rounding in the prefix sum when the
        // fraction is hit exactly (e.g. 3/4 of diag(3, 1)).
        if cum >= target * (1.0 - 1e-12) {
            p = idx + 1;
            break;
        }
    }
    Ok(leading(&eig, total, p))
}

/// Leading `p` eigenpairs regardless of trace share.
pub fn eigen_top(k: &GramMatrix, p: usize) -> Result<EigenSystem> {
    if p == 0 || p > k.n() {
        return Err(Error::invalid("p", format!("{p} not in [1, {}]", k.n())));
    }
    let (eig, total) = clipped_eigen(k)?;
    Ok(leading(&eig, total, p))
}

/// Pseudo-attribute coordinates `x(i) = (√λ_ν φ_ν(i))_ν`, one row per object.
pub fn pseudo_attributes(es: &EigenSystem) -> DMatrix<f64> {
    let mut x = es.eigenvectors.clone();
    for (nu, &lambda) in es.eigenvalues.iter().enumerate() {
        x.column_mut(nu).scale_mut(lambda.max(0.0).sqrt());
    }
    x
}

/// Squared Euclidean distance between two rows of a coordinate matrix.
pub fn row_distance_sq(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (0..x.ncols()).map(|c| (x[(i, c)] - x[(j, c)]).powi(2)).sum()
}

/// Formats a float with 17 significant digits, locale-independent.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a matrix as whitespace-separated rows, one row per line.
pub fn write_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

/// Parses the whitespace-separated row format. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row = t
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| Error::parse(lineno + 1, format!("bad number {tok:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    lineno + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let r = rows.len();
    let c = rows.first().map(Vec::len).unwrap_or(0);
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}
