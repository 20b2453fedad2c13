//! Synthetic data and the hinge-versus-likelihood probability study.
//!
//! The toy study draws `y_i = ±1` with `P(y = 1 | x) = p(x)` on an equally
//! spaced grid over `[-2, 2]`, fits a hinge classifier and a penalized
//! logistic likelihood on the same data and tabulates the true `2p - 1`, the
//! hinge decision values and the back-transformed likelihood estimate
//! `2p̂ - 1`. The hinge fit approaches `sign(2p - 1)` rather than `2p - 1`.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::classifier::{
    classifier_loss, fit, fit_warm, probability_from_logit, ClassifierModel, FitOptions, Label, Query, TrainingSet,
};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::loss::MarginLoss;

/// Default class-probability curve `1 / (1 + e^{-3x})`.
pub fn default_probability(x: f64) -> f64 {
    1.0 / (1.0 + (-3.0 * x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub x: Vec<f64>,
    /// Labels coded `±1`.
    pub y: Vec<f64>,
    /// True `P(y = 1 | x)` at each grid point.
    pub p: Vec<f64>,
    pub seed: u64,
}

impl ToyDataset {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn training_set(&self, kernel: Kernel) -> Result<TrainingSet> {
        let points = self.x.iter().map(|&v| vec![v]).collect();
        let labels = self.y.iter().map(|&v| Label::from_sign(v)).collect();
        TrainingSet::from_points(kernel, points, labels)
    }
}

/// `n` equally spaced points on `[-2, 2]` with seeded Bernoulli labels.
pub fn generate_toy(n: usize, p: impl Fn(f64) -> f64, seed: u64) -> Result<ToyDataset> {
    if n < 2 {
        return Err(Error::invalid("n", format!("{n} < 2")));
    }
    let step = 4.0 / (n - 1) as f64;
    let x: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { 2.0 } else { -2.0 + i as f64 * step })
        .collect();
    let probs: Vec<f64> = x.iter().map(|&v| p(v)).collect();
    if let Some((i, bad)) = probs.iter().enumerate().find(|(_, &q)| !(q > 0.0 && q < 1.0)) {
        return Err(Error::invalid("p", format!("p({}) = {bad} outside (0, 1)", x[i])));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = probs
        .iter()
        .map(|&q| if rng.random::<f64>() < q { 1.0 } else { -1.0 })
        .collect();
    Ok(ToyDataset { x, y, p: probs, seed })
}

/// Hinge KKT tolerance used while scoring the cross-validation grid; held-out
/// losses move by far less than the differences between grid points.
pub const CV_HINGE_KKT_TOL: f64 = 1e-3;

/// Log-spaced grid `10^{-4}, 10^{-3.5}, …, 1`.
pub fn default_mu_grid() -> Vec<f64> {
    (0..9).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect()
}

/// Held-out mean loss for each `μ` under seeded `folds`-fold
/// cross-validation; returns the best `μ` and the score curve.
pub fn select_mu_cv(
    ts: &TrainingSet,
    loss: MarginLoss,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<(f64, Vec<(f64, f64)>)> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("mu grid"));
    }
    CvFolds::new(ts, folds, seed)?.select(ts, loss, grid)
}

/// Seeded fold split with its training subsets. Subsets cache their
/// spectral data, so one split serves every loss and `μ`.
struct CvFolds {
    /// `(train, test, training subset)` per fold.
    folds: Vec<(Vec<usize>, Vec<usize>, TrainingSet)>,
}

impl CvFolds {
    fn new(ts: &TrainingSet, folds: usize, seed: u64) -> Result<Self> {
        let n = ts.n();
        if folds < 2 || folds > n {
            return Err(Error::invalid("folds", format!("{folds} not in [2, {n}]")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignment = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % folds;
        }
        let folds = (0..folds)
            .map(|fold| {
                let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
                let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
                let sub = ts.subset(&train)?;
                Ok((train, test, sub))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CvFolds { folds })
    }

    fn select(&self, ts: &TrainingSet, loss: MarginLoss, grid: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
        let opts = FitOptions {
            hinge_kkt_tol: CV_HINGE_KKT_TOL,
            ..FitOptions::default()
        };
        let k = ts.gram().matrix();
        // each fold walks the grid from the largest μ down, warm-starting
        // every fit from the previous one; folds run in parallel and are
        // summed in fold order
        let mut by_mu: Vec<usize> = (0..grid.len()).collect();
        by_mu.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
        let per_fold = self
            .folds
            .par_iter()
            .map(|(train, test, sub)| -> Result<Vec<(f64, usize)>> {
                let mut out = vec![(0.0, 0); grid.len()];
                let mut start: Option<DVector<f64>> = None;
                for &g in &by_mu {
                    let model = match &start {
                        Some(c0) => fit_warm(sub, loss, grid[g], &opts, c0)?,
                        None => fit(sub, loss, grid[g], &opts)?,
                    };
                    let (mut total, mut count) = (0.0, 0);
                    for &i in test {
                        let Some(y) = ts.labels()[i].value() else { continue };
                        let row: Vec<f64> = train.iter().map(|&j| k[(i, j)]).collect();
                        let f = model.decision_value(Query::GramRow(&row))?;
                        total += classifier_loss(&loss, y * f);
                        count += 1;
                    }
                    out[g] = (total, count);
                    start = Some(model.coefficients);
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<f64> = (0..grid.len())
            .map(|g| {
                let total: f64 = per_fold.iter().map(|f| f[g].0).sum();
                let count: usize = per_fold.iter().map(|f| f[g].1).sum();
                total / count.max(1) as f64
            })
            .collect();
        let mut best = 0;
        for (idx, &s) in scores.iter().enumerate() {
            if s < scores[best] {
                best = idx;
            }
        }
        Ok((grid[best], grid.iter().copied().zip(scores).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Figure2Row {
    pub x: f64,
    /// `2p(x) - 1`.
    pub truth: f64,
    /// Hinge decision value.
    pub svm: f64,
    /// `2p̂(x) - 1` from the logistic fit.
    pub likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct Figure2Run {
    pub rows: Vec<Figure2Row>,
    pub mu_svm: f64,
    pub mu_pl: f64,
    pub svm_model: ClassifierModel,
    pub pl_model: ClassifierModel,
}

/// Fits both estimators on `data` and tabulates them on its grid.
pub fn run_figure2(data: &ToyDataset, kernel: Kernel, mu_svm: f64, mu_pl: f64) -> Result<Figure2Run> {
    figure2_on(data, &data.training_set(kernel)?, mu_svm, mu_pl)
}

fn figure2_on(data: &ToyDataset, ts: &TrainingSet, mu_svm: f64, mu_pl: f64) -> Result<Figure2Run> {
    let opts = FitOptions::default();
    let svm_model = fit(ts, MarginLoss::hinge(), mu_svm, &opts)?;
    let pl_model = fit(ts, MarginLoss::Logistic, mu_pl, &opts)?;
    let svm = svm_model.training_decision_values();
    let logit = pl_model.training_decision_values();
    let rows = (0..data.n())
        .map(|i| Figure2Row {
            x: data.x[i],
            truth: 2.0 * data.p[i] - 1.0,
            svm: svm[i],
            likelihood: 2.0 * probability_from_logit(logit[i]) - 1.0,
        })
        .collect();
    Ok(Figure2Run {
        rows,
        mu_svm,
        mu_pl,
        svm_model,
        pl_model,
    })
}

/// Settings of the default study; every field can be overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure2Config {
    pub n: usize,
    pub width: f64,
    /// Fixed `μ` for the hinge fit; chosen by cross-validation when `None`.
    pub mu_svm: Option<f64>,
    /// Fixed `μ` for the likelihood fit; chosen by cross-validation when `None`.
    pub mu_pl: Option<f64>,
    pub mu_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for Figure2Config {
    fn default() -> Self {
        Figure2Config {
            n: 300,
            width: 0.5,
            mu_svm: None,
            mu_pl: None,
            mu_grid: default_mu_grid(),
            folds: 5,
        }
    }
}

/// Generates the toy data for `seed` and runs the study under `config`.
pub fn run_figure2_default(config: &Figure2Config, seed: u64) -> Result<Figure2Run> {
    let data = generate_toy(config.n, default_probability, seed)?;
    let kernel = Kernel::gaussian(config.width)?;
    let ts = data.training_set(kernel)?;
    let folds = if config.mu_svm.is_none() || config.mu_pl.is_none() {
        if config.mu_grid.is_empty() {
            return Err(Error::EmptyInput("mu grid"));
        }
        Some(CvFolds::new(&ts, config.folds, seed)?)
    } else {
        None
    };
    let choose = |fixed: Option<f64>, loss: MarginLoss| -> Result<f64> {
        match (fixed, &folds) {
            (Some(m), _) => Ok(m),
            (None, Some(f)) => Ok(f.select(&ts, loss, &config.mu_grid)?.0),
            (None, None) => unreachable!("folds are built whenever a penalty is left open"),
        }
    };
    let mu_svm = choose(config.mu_svm, MarginLoss::hinge())?;
    let mu_pl = choose(config.mu_pl, MarginLoss::Logistic)?;
    figure2_on(&data, &ts, mu_svm, mu_pl)
}

/// `max(|f| - 1, 0)` over the boundary window `|x| ≤ 0.5`.
pub fn gibbs_overshoot(x: &[f64], f: &[f64]) -> f64 {
    x.iter()
        .zip(f)
        .filter(|(xv, _)| xv.abs() <= 0.5)
        .map(|(_, fv)| (fv.abs() - 1.0).max(0.0))
        .fold(0.0, f64::max)
}

/// Summary statistics of one study run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Figure2Metrics {
    /// Share of grid points with `|x| > 0.25` where `sign(f̂_svm) = sign(x)`.
    pub sign_agreement: f64,
    /// Mean `|(2p̂ - 1) - (2p - 1)|` over the grid.
    pub mae_likelihood: f64,
    /// Mean `|clamp(f̂_svm, -1, 1) - (2p - 1)|` over the grid.
    pub mae_svm_clamped: f64,
    /// Mean `|f̂_svm|` over `|x| > 1`.
    pub svm_outer_magnitude: f64,
    /// Mean `|2p̂ - 1|` over `|x| > 1`.
    pub likelihood_outer_magnitude: f64,
    /// Mean `|2p - 1|` over `|x| > 1`.
    pub truth_outer_magnitude: f64,
    pub gibbs: f64,
}

pub fn figure2_metrics(rows: &[Figure2Row]) -> Figure2Metrics {
    let mean = |it: &mut dyn Iterator<Item = f64>| {
        let (s, c) = it.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    };
    let sign_agreement = mean(&mut rows.iter().filter(|r| r.x.abs() > 0.25).map(|r| {
        let agree = (r.svm >= 0.0) == (r.x >= 0.0);
        if agree {
            1.0
        } else {
            0.0
        }
    }));
    let mae_likelihood = mean(&mut rows.iter().map(|r| (r.likelihood - r.truth).abs()));
    let mae_svm_clamped = mean(&mut rows.iter().map(|r| (r.svm.clamp(-1.0, 1.0) - r.truth).abs()));
    let outer = || rows.iter().filter(|r| r.x.abs() > 1.0);
    let svm_outer_magnitude = mean(&mut outer().map(|r| r.svm.abs()));
    let likelihood_outer_magnitude = mean(&mut outer().map(|r| r.likelihood.abs()));
    let truth_outer_magnitude = mean(&mut outer().map(|r| r.truth.abs()));
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let fs: Vec<f64> = rows.iter().map(|r| r.svm).collect();
    Figure2Metrics {
        sign_agreement,
        mae_likelihood,
        mae_svm_clamped,
        svm_outer_magnitude,
        likelihood_outer_magnitude,
        truth_outer_magnitude,
        gibbs: gibbs_overshoot(&xs, &fs),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwissRoll {
    /// `(t cos t, h, t sin t)` plus noise.
    pub points: Vec<Vec<f64>>,
    /// Roll parameter, uniform on `[1.5π, 4.5π]`.
    pub t: Vec<f64>,
    /// Height, uniform on `[0, 10]`.
    pub h: Vec<f64>,
}

pub fn generate_swiss_roll(n: usize, noise: f64, seed: u64) -> Result<SwissRoll> {
    if n < 10 {
        return Err(Error::invalid("n", format!("{n} < 10")));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::invalid("noise", format!("{noise} must be nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).map_err(|e| Error::invalid("noise", e.to_string()))?;
    let mut points = Vec::with_capacity(n);
    let mut ts = Vec::with_capacity(n);
    let mut hs = Vec::with_capacity(n);
    for _ in 0..n {
        let t = 1.5 * PI + 3.0 * PI * rng.random::<f64>();
        let h = 10.0 * rng.random::<f64>();
        let mut p = vec![t * t.cos(), h, t * t.sin()];
        if noise > 0.0 {
            for v in p.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        points.push(p);
        ts.push(t);
        hs.push(h);
    }
    Ok(SwissRoll { points, t: ts, h: hs })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0 + 1.0;
        for &i in &idx[start..end] {
            out[i] = avg;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = ranks(a);
    let rb = ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
