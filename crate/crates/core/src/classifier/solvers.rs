use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{logistic_inner_residual, FitOptions, FitReport, TrainingSet};
use crate::error::{Error, Result};
use crate::kernel::{default_rank_tol, GramMatrix};
use crate::linalg;
use crate::loss::{sigmoid, softplus};

/// Spectral data of a Gram matrix under the default rank tolerance.
#[derive(Debug, Clone)]
pub(crate) struct Spectral {
    /// Orthogonal projector onto the column space of `K`.
    pub projector: DMatrix<f64>,
    /// `Φ = V_r Λ_r^{1/2}` (`n × r`), so that `ΦΦᵀ` is `K` on its range.
    pub factor: DMatrix<f64>,
    /// `V_r Λ_r^{-1/2}`, mapping `w = Φᵀc` back to `c` in the range.
    pub lift: DMatrix<f64>,
}

impl Spectral {
    pub fn new(k: &GramMatrix) -> Self {
        let eig = k.eigen();
        let tol = default_rank_tol(&eig);
        let keep: Vec<f64> = eig.values.iter().map(|&v| if v > tol && v > 0.0 { 1.0 } else { 0.0 }).collect();
        let kept: Vec<usize> = (0..keep.len()).filter(|&j| keep[j] > 0.0).collect();
        let n = k.n();
        let column = |i: usize, j: usize, power: f64| eig.vectors[(i, kept[j])] * eig.values[kept[j]].powf(power);
        Spectral {
            projector: linalg::reassemble(&eig.vectors, &keep),
            factor: DMatrix::from_fn(n, kept.len(), |i, j| column(i, j, 0.5)),
            lift: DMatrix::from_fn(n, kept.len(), |i, j| column(i, j, -0.5)),
        }
    }
}

pub(super) fn ridge(ts: &TrainingSet, mu: f64) -> Result<(DVector<f64>, FitReport)> {
    let labeled = ts.labeled();
    let m = labeled.len();
    let k = ts.gram().matrix();
    let shift = m as f64 * mu;
    let a = DMatrix::from_fn(m, m, |p, q| {
        k[(labeled[p].0, labeled[q].0)] + if p == q { shift } else { 0.0 }
    });
    let y = DVector::from_iterator(m, labeled.iter().map(|&(_, y)| y));
    let top = a.diagonal().amax();
    let chol = a.cholesky().ok_or(Error::SingularSystem {
        suggested_mu: (1e-12 * top / m as f64).max(f64::MIN_POSITIVE),
    })?;
    let sol = chol.solve(&y);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem {
            suggested_mu: (1e-12 * top / m as f64).max(f64::MIN_POSITIVE),
        });
    }
    let mut c = DVector::zeros(ts.n());
    for (p, &(i, _)) in labeled.iter().enumerate() {
        c[i] = sol[p];
    }
    let report = FitReport {
        iterations: 1,
        converged: true,
        ..FitReport::default()
    };
    Ok((c, report))
}

/// Newton's method for penalized logistic regression in the coordinates
/// `w = Φᵀc` of the range of `K = ΦΦᵀ`, where the objective reads
/// `(1/m) Σ ln(1 + e^{-y_i (Φw)_i}) + μ|w|²` and the Hessian is only
/// `rank K` square. The `c`-gradient `K(u + 2μc)` equals `Φ∇_w`, so the
/// stopping rule is the same as for a solve in `c`.
pub(super) fn newton_logistic(
    ts: &TrainingSet,
    mu: f64,
    opts: &FitOptions,
    start: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, FitReport)> {
    let spectral = ts.spectral();
    let phi = &spectral.factor;
    let r = phi.ncols();
    let labeled = ts.labeled();
    let m = labeled.len() as f64;

    let objective = |w: &DVector<f64>, f: &DVector<f64>| -> f64 {
        let data: f64 = labeled.iter().map(|&(i, y)| softplus(-y * f[i])).sum();
        data / m + mu * w.norm_squared()
    };
    let mut w = match start {
        Some(c0) => phi.tr_mul(c0),
        None => DVector::zeros(r),
    };
    let mut f = phi * &w;
    let mut obj = objective(&w, &f);
    let mut report = FitReport {
        history: vec![obj],
        ..FitReport::default()
    };

    for it in 0..opts.newton_max_iter {
        let mut u = DVector::zeros(ts.n());
        for &(i, y) in &labeled {
            u[i] = -y * sigmoid(-y * f[i]) / m;
        }
        let grad = phi.tr_mul(&u) + &w * (2.0 * mu);
        report.iterations = it;
        if (phi * &grad).amax() <= opts.newton_grad_tol {
            report.converged = true;
            break;
        }
        let mut hess = DMatrix::identity(r, r) * (2.0 * mu);
        for &(i, y) in &labeled {
            let s = sigmoid(-y * f[i]);
            let row = phi.row(i);
            hess.ger(s * (1.0 - s) / m, &row.transpose(), &row.transpose(), 1.0);
        }
        let d = hess
            .cholesky()
            .ok_or(Error::SingularSystem { suggested_mu: mu * 10.0 })?
            .solve(&(-&grad));
        let slope = grad.dot(&d);
        if slope >= 0.0 {
            break;
        }
        let fd = phi * &d;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_try = &w + &d * t;
            let f_try = &f + &fd * t;
            let obj_try = objective(&w_try, &f_try);
            if obj_try <= obj + 1e-4 * t * slope {
                w = w_try;
                f = f_try;
                obj = obj_try;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        report.history.push(obj);
        if !accepted {
            break;
        }
    }
    let c = &spectral.lift * &w;
    let f = ts.gram().matrix() * &c;
    let grad_norm = (ts.gram().matrix() * logistic_inner_residual(ts, mu, &c, &f)).amax();
    report.converged = grad_norm <= opts.newton_grad_tol;
    report.stopping_value = grad_norm;
    Ok((c, report))
}

/// Sweeps between Newton steps on the free variables of the hinge dual.
const HINGE_SUBSPACE_EVERY: usize = 10;

/// Dual coordinate ascent for the bias-free hinge classifier.
///
/// With `C = 1/(2μm)` the dual is `max Σα - ½ αᵀQα` over `0 ≤ α ≤ C`, where
/// `Q_ij = θ² y_i y_j K_ij`, and `c_i = θ y_i α_i`. Coordinates are visited
/// in a fresh random order each sweep (fixed seed), which roughly halves the
/// sweep count on smooth kernels compared with cyclic order. Every few sweeps the
/// variables strictly inside the box take a joint Newton step, truncated at
/// the box; coordinate sweeps alone crawl when `K` is ill-conditioned.
pub(super) fn hinge_dual(
    ts: &TrainingSet,
    theta: f64,
    mu: f64,
    opts: &FitOptions,
    start: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, FitReport)> {
    let n = ts.n();
    let k = ts.gram().matrix();
    let labeled = ts.labeled();
    let cap = 1.0 / (2.0 * mu * labeled.len() as f64);
    // a start c maps to α_i = c_i/(θ y_i), clipped to the box
    let mut alpha: Vec<f64> = match start {
        Some(c0) => labeled.iter().map(|&(i, y)| (c0[i] / (theta * y)).clamp(0.0, cap)).collect(),
        None => vec![0.0; labeled.len()],
    };
    let mut c = DVector::<f64>::zeros(n);
    for (p, &(i, y)) in labeled.iter().enumerate() {
        c[i] = theta * y * alpha[p];
    }
    let mut f = k * &c;
    let mut report = FitReport::default();

    let violation = |a: f64, grad: f64| -> f64 {
        if a <= 0.0 {
            grad.max(0.0)
        } else if a >= cap {
            (-grad).max(0.0)
        } else {
            grad.abs()
        }
    };
    let kkt = |alpha: &[f64], f: &DVector<f64>| -> f64 {
        labeled
            .iter()
            .zip(alpha)
            .map(|(&(i, y), &a)| violation(a, 1.0 - theta * y * f[i]))
            .fold(0.0, f64::max)
    };

    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = kkt(&alpha, &f);
    for sweep in 0..opts.hinge_max_sweeps {
        if worst <= opts.hinge_kkt_tol {
            report.converged = true;
            break;
        }
        order.shuffle(&mut rng);
        for &p in &order {
            let (i, y) = labeled[p];
            let grad = 1.0 - theta * y * f[i];
            let q = theta * theta * k[(i, i)];
            let next = if q > 0.0 {
                (alpha[p] + grad / q).clamp(0.0, cap)
            } else if grad > 0.0 {
                cap
            } else {
                0.0
            };
            let delta = next - alpha[p];
            if delta != 0.0 {
                alpha[p] = next;
                let step = delta * theta * y;
                c[i] += step;
                f.axpy(step, &k.column(i), 1.0);
            }
        }
        if sweep % HINGE_SUBSPACE_EVERY == HINGE_SUBSPACE_EVERY - 1 {
            free_newton_step(k, &labeled, theta, cap, &mut alpha, &mut c, &mut f);
        }
        let dual = alpha.iter().sum::<f64>() - 0.5 * c.dot(&f);
        report.history.push(-2.0 * mu * dual);
        report.iterations = sweep + 1;
        worst = kkt(&alpha, &f);
    }
    report.converged = worst <= opts.hinge_kkt_tol;
    report.stopping_value = worst;
    if !report.converged {
        log::warn!("hinge dual stopped after {} sweeps with KKT violation {worst:e}", report.iterations);
    }
    let c = ts.range_projector() * c;
    Ok((c, report))
}

/// Solves `Q_FF d = ∇_F` on the free set and moves `α_F` along `d` as far as
/// the box allows (at most the full step). The dual gains
/// `s(1 - s/2) dᵀQd ≥ 0`.
fn free_newton_step(
    k: &DMatrix<f64>,
    labeled: &[(usize, f64)],
    theta: f64,
    cap: f64,
    alpha: &mut [f64],
    c: &mut DVector<f64>,
    f: &mut DVector<f64>,
) {
    let free: Vec<usize> = (0..labeled.len()).filter(|&p| alpha[p] > 0.0 && alpha[p] < cap).collect();
    if free.is_empty() {
        return;
    }
    let nf = free.len();
    let q = DMatrix::from_fn(nf, nf, |a, b| {
        let (i, yi) = labeled[free[a]];
        let (j, yj) = labeled[free[b]];
        theta * theta * yi * yj * k[(i, j)]
    });
    let grad = DVector::from_iterator(
        nf,
        free.iter().map(|&p| {
            let (i, y) = labeled[p];
            1.0 - theta * y * f[i]
        }),
    );
    let Some(chol) = q.cholesky() else { return };
    let d = chol.solve(&grad);
    if !d.iter().all(|v| v.is_finite()) {
        return;
    }
    let mut s: f64 = 1.0;
    for (a, &p) in free.iter().enumerate() {
        if d[a] > 0.0 {
            s = s.min((cap - alpha[p]) / d[a]);
        } else if d[a] < 0.0 {
            s = s.min(-alpha[p] / d[a]);
        }
    }
    if !(s > 0.0) {
        return;
    }
    for (a, &p) in free.iter().enumerate() {
        let next = (alpha[p] + s * d[a]).clamp(0.0, cap);
        let delta = next - alpha[p];
        if delta != 0.0 {
            alpha[p] = next;
            let (i, y) = labeled[p];
            let step = delta * theta * y;
            c[i] += step;
            f.axpy(step, &k.column(i), 1.0);
        }
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub(super) fn l1_coordinate_descent(ts: &TrainingSet, mu1: f64, opts: &FitOptions) -> (DVector<f64>, FitReport) {
    let n = ts.n();
    let k = ts.gram().matrix();
    let labeled = ts.labeled();
    let m = labeled.len() as f64;
    // curvature of the data term along each coordinate
    let curv: Vec<f64> = (0..n)
        .map(|j| 2.0 / m * labeled.iter().map(|&(i, _)| k[(i, j)] * k[(i, j)]).sum::<f64>())
        .collect();
    let mut c = DVector::<f64>::zeros(n);
    let mut resid: Vec<f64> = labeled.iter().map(|&(_, y)| y).collect();
    let objective = |c: &DVector<f64>, resid: &[f64]| -> f64 {
        resid.iter().map(|r| r * r).sum::<f64>() / m + mu1 * c.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut report = FitReport {
        history: vec![objective(&c, &resid)],
        ..FitReport::default()
    };
    let mut max_change = f64::INFINITY;
    for sweep in 0..opts.l1_max_sweeps {
        max_change = 0.0_f64;
        for j in 0..n {
            let a = curv[j];
            let next = if a > 0.0 {
                let z = 2.0 / m
                    * labeled
                        .iter()
                        .zip(&resid)
                        .map(|(&(i, _), r)| k[(i, j)] * r)
                        .sum::<f64>()
                    + a * c[j];
                soft_threshold(z, mu1) / a
            } else {
                0.0
            };
            let delta = next - c[j];
            if delta != 0.0 {
                c[j] = next;
                for (r, &(i, _)) in resid.iter_mut().zip(&labeled) {
                    *r -= delta * k[(i, j)];
                }
                max_change = max_change.max(delta.abs());
            }
        }
        report.history.push(objective(&c, &resid));
        report.iterations = sweep + 1;
        if max_change <= opts.l1_change_tol {
            report.converged = true;
            break;
        }
    }
    report.stopping_value = max_change;
    (c, report)
}
