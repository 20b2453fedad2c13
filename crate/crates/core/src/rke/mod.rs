//! Regularized kernel estimation: fit an `n × n` PSD kernel to noisy,
//! scattered, incomplete squared dissimilarities by minimizing
//!
//! ```text
//! Σ_{(i,j) ∈ Ω} |d_ij - (K_ii + K_jj - 2K_ij)| + μ tr K
//! ```
//!
//! over the PSD cone. Input dissimilarities are treated as *squared*
//! distances throughout.
//!
//! Two solvers are available through [`SolverMethod`]: a dual barrier
//! method that is accurate but dense in `|Ω|`, and an operator-splitting
//! scheme whose iterations cost one `n × n` eigendecomposition.

pub(crate) mod barrier;
mod cv2;
mod newbie;
pub(crate) mod splitting;

pub use cv2::{cv2_tune, Cv2Options, Cv2Result};
pub use newbie::{extend_kernel, newbie_embed, newbie_predict, NewbieEmbedding, NewbieOptions, SLACK_TOL};
pub use splitting::{SolverMethod, SolverOptions, BARRIER_MAX_PAIRS};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel::{clip_distance, GramMatrix};
use crate::linalg;
use splitting::{ConeSpec, Edge};

/// A squared dissimilarity between objects `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RkeProblem {
    n: usize,
    pairs: Vec<Pair>,
}

impl RkeProblem {
    /// Validates indices, nonnegativity and uniqueness. Pairs given as
    /// `(j, i)` are normalized to `i < j`.
    pub fn new(n: usize, pairs: Vec<Pair>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(pairs.len());
        for p in pairs {
            let (i, j) = if p.i < p.j { (p.i, p.j) } else { (p.j, p.i) };
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j, n });
            }
            if i == j {
                return Err(Error::invalid("omega", format!("self pair ({i}, {i})")));
            }
            if !(p.d >= 0.0) || !p.d.is_finite() {
                return Err(Error::invalid("omega", format!("dissimilarity {} for ({i}, {j})", p.d)));
            }
            if !seen.insert((i, j)) {
                return Err(Error::invalid("omega", format!("duplicate pair ({i}, {j})")));
            }
            out.push(Pair { i, j, d: p.d });
        }
        Ok(RkeProblem { n, pairs: out })
    }

    /// Every pair of `points` with exact squared Euclidean distances.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum();
                pairs.push(Pair { i, j, d });
            }
        }
        RkeProblem::new(n, pairs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    /// Connected components of the graph on Ω.
    pub fn components(&self) -> usize {
        count_components(self.n, self.pairs.iter().map(|p| (p.i, p.j)))
    }

    pub fn is_connected(&self) -> bool {
        self.components() <= 1
    }

    pub(crate) fn edges(&self) -> Vec<Edge> {
        self.pairs.iter().map(|p| Edge { i: p.i, j: p.j, d: p.d }).collect()
    }

    pub(crate) fn with_pairs(&self, pairs: Vec<Pair>) -> Self {
        RkeProblem { n: self.n, pairs }
    }
}

pub(crate) fn count_components(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..n).filter(|&x| find(&mut parent, x) == x).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairResidual {
    pub i: usize,
    pub j: usize,
    pub d: f64,
    pub fitted: f64,
}

impl PairResidual {
    pub fn residual(&self) -> f64 {
        self.d - self.fitted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Splitting: primal residual norm. Barrier: duality-gap bound.
    pub primal_residual: f64,
    /// Splitting: dual residual norm. Barrier: last Newton decrement.
    pub dual_residual: f64,
    pub converged: bool,
    /// Edge-block penalty at exit; zero for the barrier solver.
    pub rho: f64,
    pub cap_active: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RkeSolution {
    pub k: GramMatrix,
    pub mu: f64,
    /// `Σ|d - d̂| + trace_weight · tr K` evaluated at the returned kernel.
    pub objective: f64,
    /// Signed coefficient of the trace term (`μ` here, `-μ` when unrolling).
    pub trace_weight: f64,
    pub residuals: Vec<PairResidual>,
    pub diagnostics: SolverDiagnostics,
}

impl RkeSolution {
    pub fn loss(&self) -> f64 {
        self.residuals.iter().map(|r| r.residual().abs()).sum()
    }
}

/// `Σ|d - d̂| + trace_weight · tr K` for an arbitrary kernel.
pub fn objective_value(k: &DMatrix<f64>, pairs: &[Pair], trace_weight: f64) -> f64 {
    let loss: f64 = pairs
        .iter()
        .map(|p| (p.d - (k[(p.i, p.i)] + k[(p.j, p.j)] - 2.0 * k[(p.i, p.j)])).abs())
        .sum();
    loss + trace_weight * linalg::trace(k)
}

pub(crate) fn solve_with_spec(
    problem: &RkeProblem,
    mu: f64,
    spec: ConeSpec,
    opts: &SolverOptions,
    mut warnings: Vec<String>,
) -> Result<RkeSolution> {
    let use_barrier = match opts.method {
        SolverMethod::Barrier => true,
        SolverMethod::Splitting => false,
        SolverMethod::Auto => problem.pairs.len() <= BARRIER_MAX_PAIRS,
    };
    if use_barrier {
        // the trace-penalized optimum is centered anyway, so the barrier's
        // centered parametrization loses nothing
        let bopts = barrier::BarrierOptions {
            max_newton: opts.max_iter,
            tol: opts.tol,
        };
        let out = barrier::solve(problem.n, &problem.edges(), -spec.trace_weight, spec.trace_cap, &bopts)
            .ok_or_else(|| Error::InvariantViolation("barrier solver found no strictly feasible start".into()))?;
        if !out.converged {
            warnings.push(format!(
                "barrier solver stopped at {} Newton steps (gap {:.3e})",
                out.iterations, out.gap
            ));
        }
        let diagnostics = SolverDiagnostics {
            iterations: out.iterations,
            primal_residual: out.gap,
            dual_residual: out.decrement,
            converged: out.converged,
            rho: 0.0,
            cap_active: out.cap_active,
            warnings,
        };
        return assemble(problem, mu, spec.trace_weight, out.k, diagnostics);
    }
    let outcome = splitting::solve(problem.n, &problem.edges(), &spec, opts);
    if !outcome.converged {
        warnings.push(format!(
            "splitting solver stopped at {} iterations (primal {:.3e}, dual {:.3e})",
            outcome.iterations, outcome.primal_residual, outcome.dual_residual
        ));
    }
    let diagnostics = SolverDiagnostics {
        iterations: outcome.iterations,
        primal_residual: outcome.primal_residual,
        dual_residual: outcome.dual_residual,
        converged: outcome.converged,
        rho: outcome.rho,
        cap_active: outcome.cap_active,
        warnings,
    };
    assemble(problem, mu, spec.trace_weight, outcome.k, diagnostics)
}

/// Evaluates residuals and the objective of a finished solve.
fn assemble(
    problem: &RkeProblem,
    mu: f64,
    trace_weight: f64,
    k: DMatrix<f64>,
    mut diagnostics: SolverDiagnostics,
) -> Result<RkeSolution> {
    if diagnostics.cap_active {
        diagnostics
            .warnings
            .push("trace cap active: mu is too large for a bounded solution".into());
    }
    for w in &diagnostics.warnings {
        log::warn!("{w}");
    }
    let k = GramMatrix::from_trusted(k);
    let residuals = problem
        .pairs
        .iter()
        .map(|p| {
            let raw = k.get(p.i, p.i) + k.get(p.j, p.j) - 2.0 * k.get(p.i, p.j);
            clip_distance(raw).map(|fitted| PairResidual { i: p.i, j: p.j, d: p.d, fitted })
        })
        .collect::<Result<Vec<_>>>()?;
    let objective = objective_value(k.matrix(), &problem.pairs, trace_weight);
    Ok(RkeSolution {
        k,
        mu,
        objective,
        trace_weight,
        residuals,
        diagnostics,
    })
}

/// Fits the regularized kernel for a single `μ > 0`.
pub fn fit_kernel(problem: &RkeProblem, mu: f64, opts: &SolverOptions) -> Result<RkeSolution> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::invalid("mu", format!("{mu} must be positive")));
    }
    if problem.pairs.is_empty() {
        return Err(Error::EmptyInput("omega"));
    }
    let mut warnings = Vec::new();
    let comps = problem.components();
    if comps > 1 {
        warnings.push(format!(
            "dissimilarity graph has {comps} components; relative placement across components is unanchored"
        ));
    }
    let spec = ConeSpec {
        trace_weight: mu,
        centered: false,
        trace_cap: None,
    };
    solve_with_spec(problem, mu, spec, opts, warnings)
}
