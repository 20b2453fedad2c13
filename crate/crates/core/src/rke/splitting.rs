//! Operator-splitting solver for
//!
//! ```text
//! min  Σ_e |d_e - ⟨A_e, K⟩| + w · tr K    over PSD K (optionally centered,
//!                                           optionally tr K ≤ T)
//! ```
//!
//! with `⟨A_e, K⟩ = K_ii + K_jj - 2K_ij` for edge `e = (i, j)`.
//!
//! Variables are a free symmetric copy `K`, the cone variable `Z` and the
//! residuals `r = d - A(K)`. Each iteration solves a least-squares problem
//! in `K` (via Woodbury and conjugate gradients on `I + AAᵀ`), projects onto
//! the cone for `Z` with the trace term folded in as an eigenvalue shift, and
//! soft-thresholds `r`.

use nalgebra::{DMatrix, DVector};

use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Edge {
    pub i: usize,
    pub j: usize,
    pub d: f64,
}

/// Cone and trace configuration of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ConeSpec {
    /// Coefficient of `tr K` in the objective (negative rewards trace).
    pub trace_weight: f64,
    pub centered: bool,
    pub trace_cap: Option<f64>,
}

/// Which algorithm solves the kernel-fitting cone program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Barrier when the pair count is at most [`BARRIER_MAX_PAIRS`],
    /// splitting otherwise.
    #[default]
    Auto,
    /// Operator splitting; cheap per iteration, slow to reach high accuracy.
    Splitting,
    /// Dual log-barrier path following; accurate, but each Newton step
    /// factors a dense matrix of size `|Ω|`.
    Barrier,
}

/// Largest `|Ω|` for which [`SolverMethod::Auto`] picks the barrier method.
pub const BARRIER_MAX_PAIRS: usize = 2000;

/// Tolerances and caps of the kernel-fitting solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Iteration cap (Newton steps for the barrier method).
    pub max_iter: usize,
    /// Relative tolerance: on residual norms for splitting, on the duality
    /// gap relative to `Σ d` for the barrier method.
    pub tol: f64,
    /// Over-relaxation factor in `[1, 2)`.
    pub relaxation: f64,
    /// Iterations between penalty-parameter updates.
    pub adapt_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolverMethod::Auto,
            max_iter: 5000,
            tol: 1e-6,
            relaxation: 1.6,
            adapt_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SplitOutcome {
    pub k: DMatrix<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub rho: f64,
    pub cap_active: bool,
}

fn apply_a(edges: &[Edge], k: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        edges.len(),
        edges.iter().map(|e| k[(e.i, e.i)] + k[(e.j, e.j)] - 2.0 * k[(e.i, e.j)]),
    )
}

fn add_a_transpose(edges: &[Edge], v: &DVector<f64>, scale: f64, out: &mut DMatrix<f64>) {
    for (e, &ve) in edges.iter().zip(v.iter()) {
        let s = scale * ve;
        out[(e.i, e.i)] += s;
        out[(e.j, e.j)] += s;
        out[(e.i, e.j)] -= s;
        out[(e.j, e.i)] -= s;
    }
}

/// `(I + γAAᵀ) v`; `(AAᵀv)_e = D_i + D_j + 2v_e` with `D_i` the sum of `v`
/// over edges touching `i`.
fn normal_op(edges: &[Edge], n: usize, gamma: f64, v: &DVector<f64>, out: &mut DVector<f64>, deg: &mut [f64]) {
    deg.iter_mut().take(n).for_each(|x| *x = 0.0);
    for (e, &ve) in edges.iter().zip(v.iter()) {
        deg[e.i] += ve;
        deg[e.j] += ve;
    }
    for (idx, e) in edges.iter().enumerate() {
        out[idx] = v[idx] + gamma * (2.0 * v[idx] + deg[e.i] + deg[e.j]);
    }
}

fn conjugate_gradient(edges: &[Edge], n: usize, gamma: f64, rhs: &DVector<f64>, x: &mut DVector<f64>) {
    let m = rhs.len();
    let mut deg = vec![0.0; n];
    let mut ax = DVector::zeros(m);
    normal_op(edges, n, gamma, x, &mut ax, &mut deg);
    let mut r = rhs - &ax;
    let mut p = r.clone();
    let mut rs = r.dot(&r);
    let target = (1e-14 * rhs.norm()).powi(2).max(1e-300);
    let mut ap = DVector::zeros(m);
    for _ in 0..(2 * m + 20) {
        if rs <= target {
            break;
        }
        normal_op(edges, n, gamma, &p, &mut ap, &mut deg);
        let alpha = rs / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rs_new = r.dot(&r);
        p = &r + &p * (rs_new / rs);
        rs = rs_new;
    }
}

/// Euclidean projection of eigenvalues onto `{λ ≥ 0, Σλ ≤ cap}`.
fn project_spectrum(values: &[f64], cap: Option<f64>) -> (Vec<f64>, bool) {
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let Some(cap) = cap else {
        return (clipped, false);
    };
    if clipped.iter().sum::<f64>() <= cap {
        return (clipped, false);
    }
    // find θ ≥ 0 with Σ max(λ - θ, 0) = cap
    let mut sorted: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (idx, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - cap) / (idx + 1) as f64;
        let next = sorted.get(idx + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if t >= next {
            theta = t;
            break;
        }
    }
    (values.iter().map(|&v| (v - theta).max(0.0)).collect(), true)
}

fn project_cone(x: &DMatrix<f64>, spec: &ConeSpec, shift: f64) -> (DMatrix<f64>, bool) {
    let n = x.nrows();
    let mut y = if spec.centered { linalg::double_center(x) } else { x.clone() };
    if shift != 0.0 {
        if spec.centered {
            // shift only on the complement of the constant vector
            let s = shift / n as f64;
            for i in 0..n {
                for j in 0..n {
                    y[(i, j)] -= s;
                }
                y[(i, i)] += shift;
            }
        } else {
            for i in 0..n {
                y[(i, i)] += shift;
            }
        }
    }
    linalg::symmetrize(&mut y);
    let eig = linalg::sym_eigen(&y);
    let (vals, capped) = project_spectrum(eig.values.as_slice(), spec.trace_cap);
    let mut z = linalg::reassemble(&eig.vectors, &vals);
    if spec.centered {
        z = linalg::double_center(&z);
        linalg::symmetrize(&mut z);
    }
    (z, capped)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn median_abs(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

pub(crate) fn solve(n: usize, edges: &[Edge], spec: &ConeSpec, opts: &SolverOptions) -> SplitOutcome {
    let m = edges.len();
    let d = DVector::from_iterator(m, edges.iter().map(|e| e.d));
    let d_scale = {
        let med = median_abs(d.as_slice());
        if med > 0.0 {
            med
        } else {
            let mean = d.iter().map(|v| v.abs()).sum::<f64>() / m.max(1) as f64;
            if mean > 0.0 { mean } else { 1.0 }
        }
    };
    // separate penalties for the edge block and the cone block: the two
    // constraints live on very different scales once K grows
    let mut rho_e = 1.0 / d_scale;
    let mut rho_c = rho_e;
    let alpha = opts.relaxation;

    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut z = DMatrix::<f64>::zeros(n, n);
    let mut w = DMatrix::<f64>::zeros(n, n);
    let mut r = d.clone();
    let mut u = DVector::<f64>::zeros(m);
    let mut cg_state = DVector::<f64>::zeros(m);
    let mut cap_active = false;

    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let sqrt_e = (m as f64).sqrt().max(1.0);
    let sqrt_c = n as f64;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        // K-update: (I + γAᵀA) K = B with B = Z - W + γAᵀ(d - r - u)
        let gamma = rho_e / rho_c;
        let mut b = &z - &w;
        let rhs_edges = &d - &r - &u;
        add_a_transpose(edges, &rhs_edges, gamma, &mut b);
        let ab = apply_a(edges, &b) * gamma;
        conjugate_gradient(edges, n, gamma, &ab, &mut cg_state);
        k.copy_from(&b);
        add_a_transpose(edges, &cg_state, -1.0, &mut k);
        linalg::symmetrize(&mut k);

        let ak = apply_a(edges, &k);
        // over-relaxed quantities
        let k_hat = &k * alpha + &z * (1.0 - alpha);
        let ak_hat = &ak * alpha + (&d - &r) * (1.0 - alpha);

        let z_old = z.clone();
        let r_old = r.clone();
        let (z_new, capped) = project_cone(&(&k_hat + &w), spec, -spec.trace_weight / rho_c);
        z = z_new;
        cap_active = capped;
        for idx in 0..m {
            r[idx] = soft_threshold(d[idx] - ak_hat[idx] - u[idx], 1.0 / rho_e);
        }

        u += &ak_hat + &r - &d;
        w += &k_hat - &z;

        let pr_e = (&ak + &r - &d).norm();
        let pr_c = (&k - &z).norm();
        primal = (pr_e * pr_e + pr_c * pr_c).sqrt();
        let mut se = DMatrix::<f64>::zeros(n, n);
        add_a_transpose(edges, &(&r - &r_old), rho_e, &mut se);
        let sc = (&z_old - &z) * rho_c;
        dual = (&se + &sc).norm();
        let (du_e, du_c) = (se.norm(), sc.norm());

        let mut ut = DMatrix::<f64>::zeros(n, n);
        add_a_transpose(edges, &u, rho_e, &mut ut);
        let wt = &w * rho_c;
        let eps_pri_e = sqrt_e * 1e-3 * opts.tol * d_scale + opts.tol * ak.norm().max(r.norm()).max(d.norm());
        let eps_pri_c = sqrt_c * 1e-3 * opts.tol * d_scale + opts.tol * k.norm().max(z.norm());
        let eps_dual_e = sqrt_c * 1e-3 * opts.tol + opts.tol * ut.norm();
        let eps_dual_c = sqrt_c * 1e-3 * opts.tol + opts.tol * wt.norm();
        let eps_pri = (eps_pri_e * eps_pri_e + eps_pri_c * eps_pri_c).sqrt();
        let eps_dual = (eps_dual_e * eps_dual_e + eps_dual_c * eps_dual_c).sqrt();
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }

        if opts.adapt_every > 0 && (it + 1) % opts.adapt_every == 0 {
            let balance = |pr: f64, du: f64, rho: &mut f64| -> f64 {
                if pr > 10.0 * du {
                    *rho *= 2.0;
                    0.5
                } else if du > 10.0 * pr {
                    *rho /= 2.0;
                    2.0
                } else {
                    1.0
                }
            };
            let fe = balance(pr_e / eps_pri_e, du_e / eps_dual_e, &mut rho_e);
            u *= fe;
            let fc = balance(pr_c / eps_pri_c, du_c / eps_dual_c, &mut rho_c);
            w *= fc;
        }
    }

    SplitOutcome {
        k: z,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        rho: rho_e,
        cap_active,
    }
}
