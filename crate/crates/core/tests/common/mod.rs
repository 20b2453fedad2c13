#![allow(dead_code)]

use kernreg::classifier::{objective, Label, TrainingSet};
use kernreg::kernel::GramMatrix;
use kernreg::loss::MarginLoss;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `A Aᵀ` for an `n × r` factor with entries in `[-2, 2]`; rank at most `r`.
pub fn psd_from_factor(n: usize, r: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_column_slice(n, r, &entries[..n * r]);
    &a * a.transpose()
}

/// Random PSD matrices of size 1..=max_n with rank between 1 and n.
pub fn psd_strategy(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_n)
        .prop_flat_map(|n| (Just(n), 1..=n))
        .prop_flat_map(|(n, r)| (Just(n), Just(r), prop::collection::vec(-2.0..2.0f64, n * r)))
        .prop_map(|(n, r, e)| psd_from_factor(n, r, &e))
}

/// Random symmetric matrices with entries in `[-3, 3]`.
pub fn symmetric_strategy(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_n)
        .prop_flat_map(|n| (Just(n), prop::collection::vec(-3.0..3.0f64, n * n)))
        .prop_map(|(n, e)| {
            let m = DMatrix::from_column_slice(n, n, &e);
            (&m + m.transpose()) * 0.5
        })
}

/// ±1 labels containing both classes.
pub fn labels_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop::bool::ANY, n).prop_map(|mut v| {
        v[0] = true;
        if v.len() > 1 {
            v[1] = false;
        }
        v.into_iter().map(|b| if b { 1.0 } else { -1.0 }).collect()
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Positive definite `A Aᵀ + ridge·I` with standard-uniform factor entries.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut k = &a * a.transpose();
    for i in 0..n {
        k[(i, i)] += ridge;
    }
    k
}

/// Labels with both classes: first positive, second negative, rest random.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| match i {
            0 => 1.0,
            1 => -1.0,
            _ => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect()
}

pub fn training_set(k: &DMatrix<f64>, y: &[f64]) -> TrainingSet {
    let labels = y.iter().map(|&v| Label::from_sign(v)).collect();
    TrainingSet::from_gram(GramMatrix::new(k.clone()).unwrap(), labels).unwrap()
}

/// Direct ridge solve `(K + nμI) c = y`, the stationarity system of
/// `(1/n)|y - Kc|² + μ cᵀKc` for invertible `K + nμI`.
pub fn ridge_oracle(k: &DMatrix<f64>, y: &[f64], mu: f64) -> DVector<f64> {
    let n = k.nrows();
    let mut a = k.clone();
    for i in 0..n {
        a[(i, i)] += n as f64 * mu;
    }
    a.lu().solve(&DVector::from_column_slice(y)).unwrap()
}

/// Exhaustive grid search over `c ∈ [-3, 3]^n` with the given step; feasible
/// only for `n ≤ 3`.
pub fn hinge_grid_oracle(ts: &TrainingSet, mu: f64, step: f64) -> (f64, DVector<f64>) {
    let n = ts.n();
    let steps = (6.0 / step).round() as usize;
    let coord = |k: usize| -3.0 + k as f64 * step;
    let total = (steps + 1).pow(n as u32);
    let loss = MarginLoss::hinge();
    let mut best = (f64::INFINITY, DVector::zeros(n));
    let mut c = DVector::zeros(n);
    for idx in 0..total {
        let mut rem = idx;
        for slot in c.iter_mut() {
            *slot = coord(rem % (steps + 1));
            rem /= steps + 1;
        }
        let v = objective(ts, &loss, mu, &c);
        if v < best.0 {
            best = (v, c.clone());
        }
    }
    best
}

/// Exact hinge minimum for positive definite `K` by enumerating which
/// margins are below, at, or above 1.
///
/// In `f = Kc` coordinates the objective is `(1/n)Σ(1 - y_i f_i)₊ + μ fᵀK⁻¹f`.
/// On the piece with margin-below set `A` and margin-equal set `E` it agrees
/// with the quadratic `μ fᵀQf - (1/n)Σ_A y_i f_i + const` restricted to
/// `f_E = y_E`, which is never above the objective there. The true minimizer
/// minimizes the quadratic of its own piece, so the smallest objective over
/// all piece minimizers is the global minimum.
pub fn hinge_active_set_oracle(k: &DMatrix<f64>, y: &[f64], mu: f64) -> f64 {
    let n = k.nrows();
    let q = k.clone().try_inverse().expect("positive definite Gram");
    let eval = |f: &DVector<f64>| {
        let data: f64 = (0..n).map(|i| (1.0 - y[i] * f[i]).max(0.0)).sum::<f64>() / n as f64;
        data + mu * f.dot(&(&q * f))
    };
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(n as u32) {
        // 0: margin below 1, 1: margin equal 1, 2: margin above 1
        let mut state = vec![0; n];
        let mut rem = code;
        for s in state.iter_mut() {
            *s = rem % 3;
            rem /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] != 1).collect();
        let fixed: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
        let mut f = DVector::zeros(n);
        for &i in &fixed {
            f[i] = y[i];
        }
        if !free.is_empty() {
            // 2μ Q_FF f_F = g_F - 2μ Q_FE f_E
            let m = free.len();
            let qff = DMatrix::from_fn(m, m, |a, b| 2.0 * mu * q[(free[a], free[b])]);
            let rhs = DVector::from_fn(m, |a, _| {
                let i = free[a];
                let g = if state[i] == 0 { y[i] / n as f64 } else { 0.0 };
                g - fixed.iter().map(|&j| 2.0 * mu * q[(i, j)] * f[j]).sum::<f64>()
            });
            let sol = qff.cholesky().expect("principal submatrix of a PD matrix").solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                f[i] = sol[a];
            }
        }
        best = best.min(eval(&f));
    }
    best
}

/// Worst-case change of the hinge objective when each coefficient moves by
/// at most `h`, evaluated around `c`. Used as the grid-resolution tolerance.
pub fn hinge_grid_slack(k: &DMatrix<f64>, mu: f64, c: &DVector<f64>, h: f64) -> f64 {
    let n = k.nrows() as f64;
    let abs_k = k.map(f64::abs);
    let ones = DVector::from_element(k.nrows(), 1.0);
    let row_sums = &abs_k * &ones;
    let data = row_sums.sum() * h / n;
    let abs_c = c.map(f64::abs);
    let pen = mu * (2.0 * h * abs_c.dot(&row_sums) + h * h * ones.dot(&row_sums));
    data + pen
}

/// Brute-force minimum of the newbie loss `Σ |d_i - (K_ii + c - 2b_i)|` over a
/// grid of `(b, c)` with `b` two-dimensional and `c ≥ bᵀK⁻¹b`.
pub fn newbie_grid_oracle(k: &DMatrix<f64>, d_new: &[(usize, f64)], b_range: (f64, f64), c_range: (f64, f64), step: f64) -> f64 {
    assert_eq!(k.nrows(), 2);
    let kinv = k.clone().try_inverse().unwrap();
    let nb = ((b_range.1 - b_range.0) / step).round() as usize;
    let nc = ((c_range.1 - c_range.0) / step).round() as usize;
    let mut best = f64::INFINITY;
    for i0 in 0..=nb {
        let b0 = b_range.0 + i0 as f64 * step;
        for i1 in 0..=nb {
            let b1 = b_range.0 + i1 as f64 * step;
            let b = DVector::from_vec(vec![b0, b1]);
            let floor = b.dot(&(&kinv * &b));
            for ic in 0..=nc {
                let c = c_range.0 + ic as f64 * step;
                if c < floor {
                    continue;
                }
                let loss: f64 = d_new
                    .iter()
                    .map(|&(i, d)| (d - (k[(i, i)] + c - 2.0 * b[i])).abs())
                    .sum();
                best = best.min(loss);
            }
        }
    }
    best
}

/// Points in general position in the plane.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
