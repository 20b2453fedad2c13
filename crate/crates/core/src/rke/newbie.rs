//! Out-of-sample placement of a new object into a fitted kernel.
//!
//! The new kernel column is `b = X z` where `X` holds the pseudo-attribute
//! coordinates of the training objects, so `b` lies in the range of `K` and
//! `bᵀK†b = |z|²`. The feasibility condition `c - bᵀK†b ≥ 0` becomes
//! `c ≥ |z|²`, and the fitted squared distance to object `i` is
//! `c + K_ii - 2 x(i)·z`. The ℓ1 fit over `(z, c)` is solved by splitting
//! into a least-squares step, a projection onto the paraboloid epigraph and
//! a soft-threshold step.

use nalgebra::{DMatrix, DVector};

use super::splitting::SolverOptions;
use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::kernel::{default_rank_tol, pinv_from_eigen, GramMatrix};

/// Most negative Schur slack accepted by [`extend_kernel`].
pub const SLACK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct NewbieEmbedding {
    /// Kernel values between the new object and each training object.
    pub b: DVector<f64>,
    /// Kernel value of the new object with itself.
    pub c: f64,
    /// `c - bᵀK†b`.
    pub slack: f64,
    /// `Σ |d_i - d̂_i|` over the supplied pairs.
    pub loss: f64,
    /// Position of the new object in pseudo-attribute coordinates.
    pub coords: DVector<f64>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewbieOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NewbieOptions {
    fn default() -> Self {
        NewbieOptions {
            max_iter: 50_000,
            tol: 1e-11,
        }
    }
}

impl From<&SolverOptions> for NewbieOptions {
    fn from(o: &SolverOptions) -> Self {
        NewbieOptions {
            max_iter: o.max_iter.max(NewbieOptions::default().max_iter),
            ..NewbieOptions::default()
        }
    }
}

/// Projects `(z0, c0)` onto `{(z, c) : c ≥ |z|²}`.
pub(crate) fn project_paraboloid(z0: &DVector<f64>, c0: f64) -> (DVector<f64>, f64) {
    let s = z0.norm_squared();
    if c0 >= s {
        return (z0.clone(), c0);
    }
    // optimality: z = z0 / (1 + 2λ), c = c0 + λ = |z|², λ ≥ 0
    let g = |lam: f64| c0 + lam - s / (1.0 + 2.0 * lam).powi(2);
    let mut lo = 0.0;
    let mut hi = (s - c0).max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi.max(1.0) {
            break;
        }
    }
    let lam = hi;
    let z = z0 / (1.0 + 2.0 * lam);
    let c = z.norm_squared().max(c0 + lam);
    (z, c)
}

/// Places a new object given squared dissimilarities `(i, d_i)` to a subset
/// of the training objects.
pub fn newbie_embed(k: &GramMatrix, d_new: &[(usize, f64)], opts: &NewbieOptions) -> Result<NewbieEmbedding> {
    if d_new.is_empty() {
        return Err(Error::EmptyInput("newbie dissimilarities"));
    }
    let n = k.n();
    for &(i, d) in d_new {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::invalid("d_new", format!("dissimilarity {d} for object {i}")));
        }
    }
    let eig = k.eigen();
    let tol = default_rank_tol(&eig);
    let rank = eig.values.iter().filter(|&&v| v > tol && v > 0.0).count();
    let mut warnings = Vec::new();
    if d_new.len() < rank + 1 {
        warnings.push(format!(
            "{} dissimilarities for a rank-{rank} kernel; the placement is under-determined",
            d_new.len()
        ));
    }
    // pseudo-attributes on the numerical range
    let x = DMatrix::from_fn(n, rank, |i, nu| eig.vectors[(i, nu)] * eig.values[nu].sqrt());
    let dim = rank + 1;
    let s = d_new.len();
    // rows of M: (-2 x(i), 1) so that d̂_i - K_ii = M w with w = (z, c)
    let mmat = DMatrix::from_fn(s, dim, |row, col| {
        if col < rank {
            -2.0 * x[(d_new[row].0, col)]
        } else {
            1.0
        }
    });
    let e = DVector::from_iterator(s, d_new.iter().map(|&(i, d)| d - k.get(i, i)));
    let scale = {
        let mut mags: Vec<f64> = d_new.iter().map(|&(_, d)| d).chain((0..n).map(|i| k.get(i, i))).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let med = mags[mags.len() / 2];
        if med > 0.0 { med } else { 1.0 }
    };
    let mut rho = 1.0 / scale;
    let normal = mmat.transpose() * &mmat + DMatrix::identity(dim, dim);
    let chol = normal.cholesky().ok_or_else(|| Error::InvariantViolation("newbie normal matrix".into()))?;

    let mut v = DVector::<f64>::zeros(dim);
    let mut q = DVector::<f64>::zeros(dim);
    let mut r = e.clone();
    let mut u = DVector::<f64>::zeros(s);
    let alpha = 1.6;
    let mut iterations = 0;
    let sqrt_dim = ((s + dim) as f64).sqrt();

    for it in 0..opts.max_iter {
        iterations = it + 1;
        let rhs = mmat.transpose() * (&e - &r - &u) + (&v - &q);
        let w = chol.solve(&rhs);
        let mw = &mmat * &w;
        let w_hat = &w * alpha + &v * (1.0 - alpha);
        let mw_hat = &mw * alpha + (&e - &r) * (1.0 - alpha);

        let v_old = v.clone();
        let r_old = r.clone();
        let shifted = &w_hat + &q;
        let (z, c) = project_paraboloid(&shifted.rows(0, rank).into_owned(), shifted[rank]);
        v.rows_mut(0, rank).copy_from(&z);
        v[rank] = c;
        for idx in 0..s {
            let t = e[idx] - mw_hat[idx] - u[idx];
            r[idx] = if t > 1.0 / rho {
                t - 1.0 / rho
            } else if t < -1.0 / rho {
                t + 1.0 / rho
            } else {
                0.0
            };
        }
        u += &mw_hat + &r - &e;
        q += &w_hat - &v;

        let primal = ((&mw + &r - &e).norm_squared() + (&w - &v).norm_squared()).sqrt();
        let dual = rho * (mmat.transpose() * (&r - &r_old) - (&v - &v_old)).norm();
        let eps_pri = sqrt_dim * opts.tol * scale + opts.tol * e.norm().max(mw.norm()).max(v.norm());
        let eps_dual = sqrt_dim * opts.tol + opts.tol * rho * (mmat.transpose() * &u - &q).norm();
        if primal <= eps_pri && dual <= eps_dual {
            break;
        }
        if (it + 1) % 10 == 0 {
            let pr = primal / eps_pri;
            let du = dual / eps_dual;
            if pr > 10.0 * du {
                rho *= 2.0;
                u /= 2.0;
                q /= 2.0;
            } else if du > 10.0 * pr {
                rho /= 2.0;
                u *= 2.0;
                q *= 2.0;
            }
        }
    }

    let z = v.rows(0, rank).into_owned();
    let c = v[rank];
    let b = &x * &z;
    let pinv = pinv_from_eigen(&eig, None);
    let slack = c - b.dot(&(&pinv * &b));
    let loss = d_new
        .iter()
        .map(|&(i, d)| (d - (c + k.get(i, i) - 2.0 * b[i])).abs())
        .sum();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(NewbieEmbedding {
        b,
        c,
        slack,
        loss,
        coords: z,
        iterations,
        warnings,
    })
}

/// `(n+1) × (n+1)` kernel with `K` in the upper-left block, `b` in the new
/// row and column and `c` in the corner.
pub fn extend_kernel(k: &GramMatrix, emb: &NewbieEmbedding) -> Result<GramMatrix> {
    let n = k.n();
    if emb.b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: emb.b.len(),
        });
    }
    if emb.slack < -SLACK_TOL {
        return Err(Error::InfeasibleEmbedding(emb.slack));
    }
    let km = k.matrix();
    let ext = DMatrix::from_fn(n + 1, n + 1, |i, j| match (i == n, j == n) {
        (false, false) => km[(i, j)],
        (true, true) => emb.c,
        (true, false) => emb.b[j],
        (false, true) => emb.b[i],
    });
    GramMatrix::new(ext)
}

/// `Σ_ℓ c_ℓ K_ext(n+1, ℓ)` for a model fitted on the upper `n × n` block.
pub fn newbie_predict(model: &ClassifierModel, k_ext: &GramMatrix) -> Result<f64> {
    let n = model.n();
    if k_ext.n() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            found: k_ext.n(),
        });
    }
    let row = k_ext.matrix().row(n);
    Ok(model.coefficients.iter().zip(row.iter()).map(|(c, k)| c * k).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paraboloid_projection_lands_on_boundary() {
        let z0 = DVector::from_vec(vec![1.0, -2.0]);
        let (z, c) = project_paraboloid(&z0, 0.0);
        assert!((c - z.norm_squared()).abs() < 1e-12);
        // KKT: (z0 - z) = 2λ z with λ = c - c0
        let lam = c;
        assert!((&z0 - &z - &z * (2.0 * lam)).norm() < 1e-10);
        let (z, c) = project_paraboloid(&z0, 10.0);
        assert_eq!((z, c), (z0, 10.0));
    }

    #[test]
    fn identity_kernel_equal_distances() {
        let k = GramMatrix::identity(3);
        let emb = newbie_embed(&k, &[(0, 1.0), (1, 1.0), (2, 1.0)], &NewbieOptions::default()).unwrap();
        assert!(emb.loss <= 1e-6, "loss {}", emb.loss);
        assert!(emb.slack >= -1e-8);
    }

    #[test]
    fn extend_identity_with_zero_column() {
        let emb = NewbieEmbedding {
            b: DVector::zeros(2),
            c: 1.0,
            slack: 1.0,
            loss: 0.0,
            coords: DVector::zeros(2),
            iterations: 0,
            warnings: vec![],
        };
        let ext = extend_kernel(&GramMatrix::identity(2), &emb).unwrap();
        assert_eq!(ext, GramMatrix::identity(3));
        let bad = NewbieEmbedding { slack: -1e-3, ..emb };
        assert!(matches!(extend_kernel(&GramMatrix::identity(2), &bad), Err(Error::InfeasibleEmbedding(_))));
    }

    #[test]
    fn embed_rejects_bad_input() {
        let k = GramMatrix::identity(2);
        assert!(newbie_embed(&k, &[], &NewbieOptions::default()).is_err());
        assert!(newbie_embed(&k, &[(0, -1.0)], &NewbieOptions::default()).is_err());
        assert!(newbie_embed(&k, &[(5, 1.0)], &NewbieOptions::default()).is_err());
    }
}
