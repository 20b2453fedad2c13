//! Margin cost functions `c(τ)` of the margin `τ = y·f(x)`.
//!
//! The logistic cost here is the base-2 form `log₂(1 + e^{-τ})`, which passes
//! through 1 at `τ = 0` like the hinge. The classifier optimizes the
//! natural-log likelihood instead; the two differ by the factor `ln 2`,
//! which only rescales the regularization weight.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginLoss {
    /// Misclassification ramp `(-τ)₊`.
    MisclassRamp,
    /// Hinge `(1 - θτ)₊`.
    Hinge { theta: f64 },
    /// `log₂(1 + e^{-τ})`.
    Logistic,
    /// `(1 - τ)²`, equal to `(y - f)²` for `y = ±1`.
    Squared,
}

impl MarginLoss {
    pub const fn hinge() -> Self {
        MarginLoss::Hinge { theta: 1.0 }
    }

    pub fn hinge_scaled(theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::invalid("theta", format!("{theta} must be positive")));
        }
        Ok(MarginLoss::Hinge { theta })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MarginLoss::MisclassRamp => "misclass_ramp",
            MarginLoss::Hinge { .. } => "hinge",
            MarginLoss::Logistic => "logistic",
            MarginLoss::Squared => "squared",
        }
    }

    pub fn evaluate(&self, tau: f64) -> f64 {
        match *self {
            MarginLoss::MisclassRamp => (-tau).max(0.0),
            MarginLoss::Hinge { theta } => (1.0 - theta * tau).max(0.0),
            MarginLoss::Logistic => softplus(-tau) / LN_2,
            MarginLoss::Squared => (1.0 - tau) * (1.0 - tau),
        }
    }

    /// A subgradient at `tau`. At a kink the minimal-norm element (0) is
    /// returned.
    pub fn subgradient(&self, tau: f64) -> f64 {
        match *self {
            MarginLoss::MisclassRamp => {
                if tau < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            MarginLoss::Hinge { theta } => {
                if theta * tau < 1.0 {
                    -theta
                } else {
                    0.0
                }
            }
            MarginLoss::Logistic => -sigmoid(-tau) / LN_2,
            MarginLoss::Squared => -2.0 * (1.0 - tau),
        }
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-z})` without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Search grid for the population-minimizer oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for MinimizerGrid {
    fn default() -> Self {
        MinimizerGrid {
            lo: -10.0,
            hi: 10.0,
            step: 1e-3,
        }
    }
}

impl MinimizerGrid {
    /// Coarsest step accepted.
    pub const MAX_STEP: f64 = 1e-2;
    const REFINEMENTS: usize = 3;
    const ZOOM: f64 = 100.0;

    fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) {
            return Err(Error::invalid("grid", format!("empty range [{}, {}]", self.lo, self.hi)));
        }
        if !(self.step > 0.0) || self.step > Self::MAX_STEP {
            return Err(Error::invalid(
                "grid",
                format!("step {} outside (0, {}]", self.step, Self::MAX_STEP),
            ));
        }
        Ok(())
    }
}

fn expected_cost(loss: &MarginLoss, p: f64, f: f64) -> f64 {
    p * loss.evaluate(f) + (1.0 - p) * loss.evaluate(-f)
}

fn grid_argmin(loss: &MarginLoss, p: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let count = ((hi - lo) / step).round() as usize;
    let mut best_f = lo;
    let mut best_v = f64::INFINITY;
    for k in 0..=count {
        let f = lo + k as f64 * step;
        let v = expected_cost(loss, p, f);
        if v < best_v || (v == best_v && f.abs() < best_f.abs()) {
            best_v = v;
            best_f = f;
        }
    }
    best_f
}

/// Brute-force minimizer of `p·c(f) + (1-p)·c(-f)` over a grid.
///
/// The coarse grid is scanned exhaustively; the winning cell is then
/// re-scanned at 1/100 of the step a few times so that minimizers smaller
/// than the coarse step (e.g. logits of `p` barely above ½) keep their sign.
/// Ties go to the smallest `|f|`.
pub fn population_minimizer(loss: &MarginLoss, p: f64, grid: &MinimizerGrid) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", format!("{p} not in (0, 1)")));
    }
    grid.validate()?;
    let mut step = grid.step;
    let mut best = grid_argmin(loss, p, grid.lo, grid.hi, step);
    for _ in 0..MinimizerGrid::REFINEMENTS {
        let lo = (best - step).max(grid.lo);
        let hi = (best + step).min(grid.hi);
        step /= MinimizerGrid::ZOOM;
        let refined = grid_argmin(loss, p, lo, hi, step);
        if expected_cost(loss, p, refined) <= expected_cost(loss, p, best) {
            best = refined;
        }
    }
    Ok(best)
}

/// Whether the population minimizer has the sign of the log odds `2p - 1`.
pub fn check_sign_consistency(loss: &MarginLoss, p: f64) -> Result<bool> {
    if p == 0.5 {
        return Err(Error::invalid("p", "sign target undefined at p = 0.5"));
    }
    let f = population_minimizer(loss, p, &MinimizerGrid::default())?;
    let target = (2.0 * p - 1.0).signum();
    Ok(f != 0.0 && f.signum() == target)
}
