//! Log-barrier path following on the dual of the kernel-fitting problem
//!
//! ```text
//! min  Σ_e |d_e - ⟨A_e, K⟩| - μ tr K   over centered PSD K with tr K ≤ T
//! ```
//!
//! where `μ` may have either sign (negative for ordinary kernel estimation,
//! positive when unrolling) and the cap is optional. Writing
//! `|x| = max_{|w| ≤ 1} -w x` gives the dual `max -Σ w_e d_e - τT` subject
//! to `|w_e| ≤ 1`, `τ ≥ 0` and `L_w + (τ - μ) I ⪰ 0` on the complement of
//! the constant vector, where `L_w` is the Laplacian of the edge graph
//! weighted by `w`. Along the central path the primal kernel is `K = G / t`
//! with `G` the inverse of the constraint matrix on that complement, so the
//! kernel is PSD and centered by construction and the duality gap is at most
//! `ν / t`.

use nalgebra::{DMatrix, DVector};

use super::splitting::Edge;
use crate::kernel::clip_to_psd;
use crate::linalg::symmetrize;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BarrierOutcome {
    pub k: DMatrix<f64>,
    /// Total Newton steps.
    pub iterations: usize,
    /// Duality-gap bound `ν / t` at exit.
    pub gap: f64,
    /// Newton decrement of the last centering step.
    pub decrement: f64,
    pub converged: bool,
    pub cap_active: bool,
}

/// Inverse and log-determinant of `L_w + (τ - μ)P + 11ᵀ/n`, or `None` when
/// it is not positive definite.
fn factor(n: usize, edges: &[Edge], w: &[f64], shift: f64) -> Option<(DMatrix<f64>, f64)> {
    let inv_n = 1.0 / n as f64;
    let mut s = DMatrix::from_element(n, n, (1.0 - shift) * inv_n);
    for i in 0..n {
        s[(i, i)] += shift;
    }
    for (e, &we) in edges.iter().zip(w) {
        s[(e.i, e.i)] += we;
        s[(e.j, e.j)] += we;
        s[(e.i, e.j)] -= we;
        s[(e.j, e.i)] -= we;
    }
    let chol = s.cholesky()?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !logdet.is_finite() {
        return None;
    }
    let mut g = chol.inverse();
    // drop the constant direction
    g.iter_mut().for_each(|v| *v -= inv_n);
    Some((g, logdet))
}

struct Point {
    w: Vec<f64>,
    tau: f64,
}

fn barrier_value(n: usize, edges: &[Edge], p: &Point, mu: f64, cap: Option<f64>, t: f64) -> Option<(f64, DMatrix<f64>)> {
    if p.w.iter().any(|&v| v.abs() >= 1.0) {
        return None;
    }
    let tau = if cap.is_some() {
        if p.tau <= 0.0 {
            return None;
        }
        p.tau
    } else {
        0.0
    };
    let (g, logdet) = factor(n, edges, &p.w, tau - mu)?;
    let mut val = -logdet;
    for (e, &we) in edges.iter().zip(&p.w) {
        val += t * we * e.d - (1.0 - we).ln() - (1.0 + we).ln();
    }
    if let Some(cap) = cap {
        val += t * tau * cap - tau.ln();
    }
    Some((val, g))
}

/// `G - G ΔS G` for the Newton step `Δ`: the inverse of the constraint
/// matrix at the next iterate to first order. Using it instead of `G` makes
/// the recovered kernel satisfy the linearized centrality conditions
/// exactly, so an inexact final centering does not leak into the fitted
/// distances. It stays PSD while the Newton decrement is below 1.
fn corrected(g: &DMatrix<f64>, ga: &DMatrix<f64>, step: &DVector<f64>, m: usize, has_cap: bool) -> DMatrix<f64> {
    let mut scaled = ga.clone();
    for (f, mut col) in scaled.column_iter_mut().enumerate() {
        col *= step[f];
    }
    let mut out = g - scaled * ga.transpose();
    if has_cap {
        out -= (g * g) * step[m];
    }
    symmetrize(&mut out);
    out
}

/// Newton steps allowed per centering before giving up on a `t`.
const MAX_CENTERING: usize = 100;
/// Half the squared Newton decrement below which a point counts as centered.
const CENTERED: f64 = 1e-8;
/// Looser threshold accepted when round-off stalls the line search.
const NEARLY_CENTERED: f64 = 1e-4;

pub(crate) struct BarrierOptions {
    pub max_newton: usize,
    /// Target for `ν / t` relative to `max(Σ d, 1)`.
    pub tol: f64,
}

/// Returns `None` when no strictly feasible starting point exists, which
/// happens without a cap once `μ` reaches the algebraic connectivity of the
/// edge graph.
pub(crate) fn solve(n: usize, edges: &[Edge], mu: f64, cap: Option<f64>, opts: &BarrierOptions) -> Option<BarrierOutcome> {
    let m = edges.len();
    let has_cap = cap.is_some();
    let dim = m + usize::from(has_cap);
    let nu = (n - 1) as f64 + 2.0 * m as f64 + if has_cap { 1.0 } else { 0.0 };
    let d_sum: f64 = edges.iter().map(|e| e.d).sum();
    let scale = d_sum.max(1.0);

    // strictly feasible start
    let mut p = if has_cap {
        Point { w: vec![0.0; m], tau: mu + 1.0 }
    } else {
        let mut start = None;
        for c in [0.5, 0.9, 0.99, 0.999] {
            let cand = Point { w: vec![c; m], tau: 0.0 };
            if factor(n, edges, &cand.w, -mu).is_some() {
                start = Some(cand);
                break;
            }
        }
        start?
    };

    let f0 = p.w.iter().zip(edges).map(|(w, e)| w * e.d).sum::<f64>() + cap.map_or(0.0, |c| p.tau * c);
    let mut t = nu / f0.abs().max(scale);
    let growth = 10.0;
    let mut iterations = 0;
    // last point that centered cleanly: (t·K, t, decrement)
    let mut centered: Option<(DMatrix<f64>, f64, f64)> = None;

    let finish = |centered: Option<(DMatrix<f64>, f64, f64)>, iterations: usize| {
        let (tk, t, decrement) = centered?;
        let gap = nu / t;
        let mut k = clip_to_psd(&(tk / t));
        // inexact centering can leave the trace a hair above the cap
        if let Some(c) = cap {
            let tr = k.trace();
            if tr > c {
                k *= c / tr;
            }
        }
        let cap_active = cap.is_some_and(|c| k.trace() >= c * (1.0 - 1e-3));
        Some(BarrierOutcome {
            k,
            iterations,
            gap,
            decrement,
            converged: gap <= opts.tol * scale,
            cap_active,
        })
    };

    loop {
        // centering at fixed t
        let mut ok = false;
        for _ in 0..MAX_CENTERING {
            if iterations >= opts.max_newton {
                break;
            }
            let (val, g) = barrier_value(n, edges, &p, mu, cap, t)?;
            // column f of `ga` is G a_f
            let mut ga = DMatrix::<f64>::zeros(n, m);
            for (f, e) in edges.iter().enumerate() {
                for r in 0..n {
                    ga[(r, f)] = g[(r, e.i)] - g[(r, e.j)];
                }
            }
            let mut grad = DVector::<f64>::zeros(dim);
            let mut hess = DMatrix::<f64>::zeros(dim, dim);
            for (e_idx, e) in edges.iter().enumerate() {
                let we = p.w[e_idx];
                grad[e_idx] = t * e.d - (ga[(e.i, e_idx)] - ga[(e.j, e_idx)]) + 1.0 / (1.0 - we) - 1.0 / (1.0 + we);
                for f in 0..=e_idx {
                    let v = ga[(e.i, f)] - ga[(e.j, f)];
                    hess[(e_idx, f)] = v * v;
                }
                hess[(e_idx, e_idx)] += 1.0 / (1.0 - we).powi(2) + 1.0 / (1.0 + we).powi(2);
            }
            if let Some(cap) = cap {
                let ti = m;
                grad[ti] = t * cap - g.trace() - 1.0 / p.tau;
                for f in 0..m {
                    hess[(ti, f)] = ga.column(f).norm_squared();
                }
                hess[(ti, ti)] = g.norm_squared() + 1.0 / (p.tau * p.tau);
            }
            hess.fill_upper_triangle_with_lower_triangle();
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    let ridge = 1e-12 * hess.diagonal().amax().max(1.0);
                    for i in 0..dim {
                        hess[(i, i)] += ridge;
                    }
                    match hess.cholesky() {
                        Some(ch) => ch.solve(&(-&grad)),
                        None => break,
                    }
                }
            };
            let lam2 = -grad.dot(&step);
            if lam2 / 2.0 <= CENTERED {
                centered = Some((corrected(&g, &ga, &step, m, has_cap), t, lam2.max(0.0).sqrt()));
                ok = true;
                break;
            }
            // backtracking with feasibility
            let mut s = 1.0;
            let mut accepted = false;
            let mut step_len = 0.0;
            while s > 1e-14 {
                let cand = Point {
                    w: p.w.iter().zip(step.iter()).map(|(w, dw)| w + s * dw).collect(),
                    tau: if has_cap { p.tau + s * step[m] } else { 0.0 },
                };
                if let Some((cv, _)) = barrier_value(n, edges, &cand, mu, cap, t) {
                    if cv <= val - 0.25 * s * lam2 {
                        p = cand;
                        accepted = true;
                        step_len = s;
                        break;
                    }
                }
                s *= 0.5;
            }
            iterations += 1;
            let stalled = !accepted || step_len < 1e-3;
            if stalled && lam2 / 2.0 <= NEARLY_CENTERED {
                centered = Some((corrected(&g, &ga, &step, m, has_cap), t, lam2.max(0.0).sqrt()));
                ok = true;
                break;
            }
            if !accepted {
                break;
            }
        }
        if !ok || nu / t <= opts.tol * scale {
            return finish(centered, iterations);
        }
        t *= growth;
    }
}
