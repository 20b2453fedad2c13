//! Choosing `μ` by holding out object pairs and scoring fitted
//! pseudo-attribute distances against the observed ones.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fit_kernel, Pair, RkeProblem, SolverOptions};
use crate::error::{Error, Result};
use crate::kernel::{eigentruncate, pseudo_attributes, row_distance_sq};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cv2Options {
    /// Share of Ω held out, in `(0, 0.5]`.
    pub holdout_fraction: f64,
    /// Trace share kept when building pseudo-attributes.
    pub trace_fraction: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for Cv2Options {
    fn default() -> Self {
        Cv2Options {
            holdout_fraction: 0.2,
            trace_fraction: 0.95,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cv2Result {
    pub best_mu: f64,
    /// `(μ, mean |d - |x(i) - x(j)|²|)` in grid order.
    pub curve: Vec<(f64, f64)>,
    pub heldout: Vec<Pair>,
    pub warnings: Vec<String>,
}

fn degrees(n: usize, pairs: &[Pair]) -> Vec<usize> {
    let mut deg = vec![0; n];
    for p in pairs {
        deg[p.i] += 1;
        deg[p.j] += 1;
    }
    deg
}

/// Seeded uniform holdout; a pair whose removal would isolate an object is
/// swapped for an unused candidate once, then kept with a warning.
fn split_pairs(problem: &RkeProblem, fraction: f64, seed: u64) -> (Vec<Pair>, Vec<Pair>, Vec<String>) {
    let pairs = problem.pairs();
    let m = pairs.len();
    let h = ((fraction * m as f64).round() as usize).clamp(1, m.saturating_sub(1).max(1));
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut held = vec![false; m];
    let mut deg = degrees(problem.n(), pairs);
    let mut spare = order[h..].iter().copied();
    let mut warnings = Vec::new();
    for &idx in &order[..h] {
        let isolates = |deg: &[usize], idx: usize| deg[pairs[idx].i] <= 1 || deg[pairs[idx].j] <= 1;
        let mut chosen = idx;
        if isolates(&deg, chosen) {
            if let Some(alt) = spare.next() {
                chosen = alt;
            }
            if isolates(&deg, chosen) {
                warnings.push(format!(
                    "holding out ({}, {}) isolates an object",
                    pairs[chosen].i, pairs[chosen].j
                ));
            }
        }
        held[chosen] = true;
        deg[pairs[chosen].i] = deg[pairs[chosen].i].saturating_sub(1);
        deg[pairs[chosen].j] = deg[pairs[chosen].j].saturating_sub(1);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (idx, p) in pairs.iter().enumerate() {
        if held[idx] {
            test.push(*p);
        } else {
            train.push(*p);
        }
    }
    (train, test, warnings)
}

/// Mean absolute error of held-out squared distances at one `μ`.
fn heldout_error(train: &RkeProblem, test: &[Pair], mu: f64, opts: &Cv2Options) -> Result<f64> {
    let sol = fit_kernel(train, mu, &opts.solver)?;
    let predicted: Vec<f64> = match eigentruncate(&sol.k, opts.trace_fraction) {
        Ok(es) => {
            let x = pseudo_attributes(&es);
            test.iter().map(|p| row_distance_sq(&x, p.i, p.j)).collect()
        }
        // a vanishing kernel puts every object at the origin
        Err(Error::DegenerateKernel) => vec![0.0; test.len()],
        Err(e) => return Err(e),
    };
    Ok(test.iter().zip(predicted).map(|(p, f)| (p.d - f).abs()).sum::<f64>() / test.len() as f64)
}

/// Scores each `μ` on a seeded pair holdout and returns the minimizer.
/// Ties go to the earliest grid entry.
pub fn cv2_tune(problem: &RkeProblem, mu_grid: &[f64], opts: &Cv2Options) -> Result<Cv2Result> {
    if mu_grid.is_empty() {
        return Err(Error::EmptyInput("mu grid"));
    }
    if !(opts.holdout_fraction > 0.0 && opts.holdout_fraction <= 0.5) {
        return Err(Error::invalid(
            "holdout_fraction",
            format!("{} not in (0, 0.5]", opts.holdout_fraction),
        ));
    }
    if problem.pairs().len() < 2 {
        return Err(Error::invalid("omega", "need at least two pairs to hold one out"));
    }
    let (train_pairs, test, mut warnings) = split_pairs(problem, opts.holdout_fraction, opts.seed);
    let train = problem.with_pairs(train_pairs);
    if !train.is_connected() {
        warnings.push("training pairs leave the dissimilarity graph disconnected".into());
    }
    let errors = mu_grid
        .par_iter()
        .map(|&mu| heldout_error(&train, &test, mu, opts))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (idx, &e) in errors.iter().enumerate() {
        if e < errors[best] {
            best = idx;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Cv2Result {
        best_mu: mu_grid[best],
        curve: mu_grid.iter().copied().zip(errors).collect(),
        heldout: test,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> RkeProblem {
        RkeProblem::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![0.5, 2.0]])
            .unwrap()
    }

    #[test]
    fn single_mu_grid_returns_it() {
        let r = cv2_tune(&square(), &[0.01], &Cv2Options::default()).unwrap();
        assert_eq!(r.best_mu, 0.01);
        assert_eq!(r.curve.len(), 1);
    }

    #[test]
    fn rejects_bad_options() {
        assert!(cv2_tune(&square(), &[], &Cv2Options::default()).is_err());
        let opts = Cv2Options {
            holdout_fraction: 0.7,
            ..Cv2Options::default()
        };
        assert!(cv2_tune(&square(), &[1.0], &opts).is_err());
    }

    #[test]
    fn split_is_seeded() {
        let p = square();
        let a = split_pairs(&p, 0.3, 5);
        let b = split_pairs(&p, 0.3, 5);
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.len() + a.1.len(), p.pairs().len());
    }
}
