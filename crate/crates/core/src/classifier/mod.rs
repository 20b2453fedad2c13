//! Representer-form classifiers `f(·) = Σ_ℓ c_ℓ K(·, ℓ)` fitted by
//! minimizing
//!
//! ```text
//! (1/m) Σ_{i labeled} loss(y_i f(i)) + μ cᵀKc
//! ```
//!
//! where `m` is the number of labeled objects. Unlabeled training objects
//! keep their kernel rows but contribute no loss term. There is no
//! intercept; a constant offset can be obtained by adding a constant to the
//! kernel.
//!
//! Solvers per loss:
//! * squared: closed-form ridge system `(K_LL + mμI) c_L = y_L`;
//! * logistic (natural log): damped Newton, stopped at `‖∇‖∞ ≤ 1e-8`;
//! * hinge: box-constrained dual coordinate ascent, stopped at KKT
//!   violation `≤ 1e-6`.
//!
//! [`fit_l1`] swaps the RKHS norm for `μ₁ Σ|c_ℓ|` on the squared loss.

mod model_io;
mod solvers;

pub use model_io::{parse_model, serialize_model};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{gram, GramMatrix, Kernel};
use crate::loss::{sigmoid, softplus, MarginLoss};

/// Label of a training object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Negative,
    Unlabeled,
    Positive,
}

impl Label {
    pub fn value(self) -> Option<f64> {
        match self {
            Label::Negative => Some(-1.0),
            Label::Unlabeled => None,
            Label::Positive => Some(1.0),
        }
    }

    /// `-1`, `0` (unlabeled) or `1`.
    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            -1 => Ok(Label::Negative),
            0 => Ok(Label::Unlabeled),
            1 => Ok(Label::Positive),
            other => Err(Error::invalid("label", format!("{other} not in {{-1, 0, 1}}"))),
        }
    }

    pub fn code(self) -> i64 {
        match self {
            Label::Negative => -1,
            Label::Unlabeled => 0,
            Label::Positive => 1,
        }
    }

    pub fn from_sign(y: f64) -> Self {
        if y >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// Where the kernel rows of a model come from.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySource {
    /// Attribute vectors plus a kernel; new points can be queried directly.
    Points { kernel: Kernel, points: Vec<Vec<f64>> },
    /// Abstract objects known only through their Gram matrix.
    Gram,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    gram: GramMatrix,
    source: GeometrySource,
    labels: Vec<Label>,
    // range projector and factor of the Gram matrix, shared by every fit on
    // this set
    spectral: std::sync::OnceLock<solvers::Spectral>,
}

impl TrainingSet {
    pub fn from_points(kernel: Kernel, points: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        let g = gram(&kernel, &points)?;
        Self::build(g, GeometrySource::Points { kernel, points }, labels)
    }

    pub fn from_gram(gram: GramMatrix, labels: Vec<Label>) -> Result<Self> {
        Self::build(gram, GeometrySource::Gram, labels)
    }

    fn build(gram: GramMatrix, source: GeometrySource, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != gram.n() {
            return Err(Error::DimensionMismatch {
                expected: gram.n(),
                found: labels.len(),
            });
        }
        let pos = labels.iter().filter(|&&l| l == Label::Positive).count();
        let neg = labels.iter().filter(|&&l| l == Label::Negative).count();
        if pos + neg < 2 {
            return Err(Error::invalid("labels", "at least two labeled objects are required"));
        }
        if pos == 0 || neg == 0 {
            return Err(Error::OneClassLabels);
        }
        Ok(TrainingSet {
            gram,
            source,
            labels,
            spectral: std::sync::OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.gram.n()
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn source(&self) -> &GeometrySource {
        &self.source
    }

    pub(crate) fn range_projector(&self) -> &DMatrix<f64> {
        &self.spectral().projector
    }

    pub(crate) fn spectral(&self) -> &solvers::Spectral {
        self.spectral.get_or_init(|| solvers::Spectral::new(&self.gram))
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.value().is_some()).count()
    }

    pub(crate) fn labeled(&self) -> Vec<(usize, f64)> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.value().map(|y| (i, y)))
            .collect()
    }

    /// Subset of objects, keeping the matching Gram block.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let g = self.gram.matrix();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| g[(idx[a], idx[b])]);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        let source = match &self.source {
            GeometrySource::Points { kernel, points } => GeometrySource::Points {
                kernel: *kernel,
                points: idx.iter().map(|&i| points[i].clone()).collect(),
            },
            GeometrySource::Gram => GeometrySource::Gram,
        };
        Self::build(GramMatrix::from_trusted(sub), source, labels)
    }
}

/// Regularizer attached to a fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    /// `μ cᵀKc`, the squared RKHS norm.
    Rkhs,
    /// `μ Σ|c_ℓ|`.
    L1,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitReport {
    pub objective: f64,
    /// Outer iterations (Newton steps, dual sweeps, coordinate sweeps).
    pub iterations: usize,
    pub converged: bool,
    /// Value of the function the solver minimizes, once per outer iteration.
    /// For the hinge solver this is the negated, rescaled dual objective.
    pub history: Vec<f64>,
    /// Final stopping statistic (gradient ∞-norm, KKT violation or max
    /// coordinate change, depending on the solver).
    pub stopping_value: f64,
    /// Number of exactly zero coefficients.
    pub zero_coefficients: usize,
}

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub coefficients: DVector<f64>,
    pub gram: GramMatrix,
    pub source: GeometrySource,
    pub mu: f64,
    pub loss: MarginLoss,
    pub penalty: Penalty,
    pub labeled_mask: Vec<bool>,
    pub report: FitReport,
}

/// What a decision value is requested for.
#[derive(Debug, Clone, Copy)]
pub enum Query<'a> {
    /// A training object by index.
    Training(usize),
    /// A new attribute vector (point-based models only).
    Point(&'a [f64]),
    /// Kernel values between a new object and every training object.
    GramRow(&'a [f64]),
}

/// Solver tolerances and iteration caps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub newton_grad_tol: f64,
    pub newton_max_iter: usize,
    pub hinge_kkt_tol: f64,
    pub hinge_max_sweeps: usize,
    pub l1_change_tol: f64,
    pub l1_max_sweeps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            newton_grad_tol: 1e-8,
            newton_max_iter: 200,
            hinge_kkt_tol: 1e-6,
            hinge_max_sweeps: 200_000,
            l1_change_tol: 1e-10,
            l1_max_sweeps: 200_000,
        }
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::invalid("mu", format!("{mu} must be positive")));
    }
    Ok(())
}

/// Per-object loss used by the classifier objective. Logistic is the
/// natural-log likelihood `ln(1 + e^{-τ})`.
pub fn classifier_loss(loss: &MarginLoss, tau: f64) -> f64 {
    match *loss {
        MarginLoss::Logistic => softplus(-tau),
        other => other.evaluate(tau),
    }
}

/// `(1/m) Σ_labeled loss(y_i (Kc)_i) + μ cᵀKc`.
pub fn objective(ts: &TrainingSet, loss: &MarginLoss, mu: f64, c: &DVector<f64>) -> f64 {
    let f = ts.gram.matrix() * c;
    objective_from_f(ts, loss, mu, c, &f)
}

pub(crate) fn objective_from_f(
    ts: &TrainingSet,
    loss: &MarginLoss,
    mu: f64,
    c: &DVector<f64>,
    f: &DVector<f64>,
) -> f64 {
    let labeled = ts.labeled();
    let m = labeled.len() as f64;
    let data: f64 = labeled.iter().map(|&(i, y)| classifier_loss(loss, y * f[i])).sum();
    data / m + mu * c.dot(f)
}

/// `(1/m) Σ_labeled (y_i - (Kc)_i)² + μ₁ Σ|c_ℓ|`.
pub fn l1_objective(ts: &TrainingSet, mu1: f64, c: &DVector<f64>) -> f64 {
    let f = ts.gram.matrix() * c;
    let labeled = ts.labeled();
    let m = labeled.len() as f64;
    let data: f64 = labeled.iter().map(|&(i, y)| (y - f[i]).powi(2)).sum();
    data / m + mu1 * c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Gradient of the logistic objective with respect to `c`.
pub fn logistic_gradient(ts: &TrainingSet, mu: f64, c: &DVector<f64>) -> DVector<f64> {
    let k = ts.gram.matrix();
    let f = k * c;
    let r = logistic_inner_residual(ts, mu, c, &f);
    k * r
}

/// `u + 2μc` with `u_i = -(1/m) y_i σ(-y_i f_i)`; the gradient is `K` times this.
pub(crate) fn logistic_inner_residual(
    ts: &TrainingSet,
    mu: f64,
    c: &DVector<f64>,
    f: &DVector<f64>,
) -> DVector<f64> {
    let labeled = ts.labeled();
    let m = labeled.len() as f64;
    let mut r = c * (2.0 * mu);
    for &(i, y) in &labeled {
        r[i] -= y * sigmoid(-y * f[i]) / m;
    }
    r
}

/// Fits the RKHS-regularized classifier for `loss`.
pub fn fit(ts: &TrainingSet, loss: MarginLoss, mu: f64, opts: &FitOptions) -> Result<ClassifierModel> {
    fit_from(ts, loss, mu, opts, None)
}

/// Like [`fit`], with the iterative solvers started from the coefficients
/// `start` (typically a fit at a nearby `μ`). The closed-form squared-loss
/// fit ignores the start.
pub fn fit_warm(
    ts: &TrainingSet,
    loss: MarginLoss,
    mu: f64,
    opts: &FitOptions,
    start: &DVector<f64>,
) -> Result<ClassifierModel> {
    if start.len() != ts.n() {
        return Err(Error::DimensionMismatch {
            expected: ts.n(),
            found: start.len(),
        });
    }
    fit_from(ts, loss, mu, opts, Some(start))
}

fn fit_from(
    ts: &TrainingSet,
    loss: MarginLoss,
    mu: f64,
    opts: &FitOptions,
    start: Option<&DVector<f64>>,
) -> Result<ClassifierModel> {
    check_mu(mu)?;
    let (c, mut report) = match loss {
        MarginLoss::Squared => solvers::ridge(ts, mu)?,
        MarginLoss::Logistic => solvers::newton_logistic(ts, mu, opts, start)?,
        MarginLoss::Hinge { theta } => {
            if !(theta > 0.0) {
                return Err(Error::invalid("theta", format!("{theta} must be positive")));
            }
            solvers::hinge_dual(ts, theta, mu, opts, start)?
        }
        MarginLoss::MisclassRamp => {
            return Err(Error::invalid("loss", "the misclassification ramp is not fitted"))
        }
    };
    report.objective = objective(ts, &loss, mu, &c);
    report.zero_coefficients = c.iter().filter(|&&v| v == 0.0).count();
    Ok(ClassifierModel {
        coefficients: c,
        gram: ts.gram.clone(),
        source: ts.source.clone(),
        mu,
        loss,
        penalty: Penalty::Rkhs,
        labeled_mask: ts.labels.iter().map(|l| l.value().is_some()).collect(),
        report,
    })
}

/// Squared-loss fit with an ℓ1 penalty on the coefficients, by cyclic
/// coordinate descent with soft-thresholding.
pub fn fit_l1(ts: &TrainingSet, mu1: f64, opts: &FitOptions) -> Result<ClassifierModel> {
    check_mu(mu1)?;
    let (c, mut report) = solvers::l1_coordinate_descent(ts, mu1, opts);
    report.objective = l1_objective(ts, mu1, &c);
    report.zero_coefficients = c.iter().filter(|&&v| v == 0.0).count();
    Ok(ClassifierModel {
        coefficients: c,
        gram: ts.gram.clone(),
        source: ts.source.clone(),
        mu: mu1,
        loss: MarginLoss::Squared,
        penalty: Penalty::L1,
        labeled_mask: ts.labels.iter().map(|l| l.value().is_some()).collect(),
        report,
    })
}

impl ClassifierModel {
    pub fn n(&self) -> usize {
        self.coefficients.len()
    }

    /// `Σ_ℓ c_ℓ K(query, ℓ)`.
    pub fn decision_value(&self, query: Query<'_>) -> Result<f64> {
        match query {
            Query::Training(i) => {
                if i >= self.n() {
                    return Err(Error::IndexOutOfRange { index: i, n: self.n() });
                }
                Ok(self.dot_row(self.gram.matrix().row(i).iter().copied()))
            }
            Query::GramRow(row) => {
                if row.len() != self.n() {
                    return Err(Error::DimensionMismatch {
                        expected: self.n(),
                        found: row.len(),
                    });
                }
                Ok(self.dot_row(row.iter().copied()))
            }
            Query::Point(x) => match &self.source {
                GeometrySource::Points { kernel, points } => {
                    let row = kernel.row(x, points)?;
                    Ok(self.dot_row(row.into_iter()))
                }
                GeometrySource::Gram => Err(Error::MissingGramRow),
            },
        }
    }

    fn dot_row(&self, row: impl Iterator<Item = f64>) -> f64 {
        self.coefficients.iter().zip(row).map(|(c, k)| c * k).sum()
    }

    pub fn classify(&self, query: Query<'_>) -> Result<i8> {
        self.decision_value(query).map(classify_value)
    }

    /// Decision values at every training object.
    pub fn training_decision_values(&self) -> DVector<f64> {
        self.gram.matrix() * &self.coefficients
    }
}

/// Sign with the tie `0 ↦ +1`.
pub fn classify_value(f: f64) -> i8 {
    if f >= 0.0 {
        1
    } else {
        -1
    }
}

/// `e^f / (1 + e^f)`, overflow-safe.
pub fn probability_from_logit(f: f64) -> f64 {
    sigmoid(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn id2() -> TrainingSet {
        TrainingSet::from_gram(GramMatrix::identity(2), vec![Label::Positive, Label::Negative]).unwrap()
    }

    #[test]
    fn squared_identity_example() {
        let m = fit(&id2(), MarginLoss::Squared, 0.5, &FitOptions::default()).unwrap();
        assert_relative_eq!(m.coefficients[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(m.coefficients[1], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn hinge_identity_example() {
        let m = fit(&id2(), MarginLoss::hinge(), 0.25, &FitOptions::default()).unwrap();
        assert_relative_eq!(m.coefficients[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(m.coefficients[1], -1.0, epsilon = 1e-9);
        assert_relative_eq!(m.report.objective, 0.5, epsilon = 1e-9);
        assert_relative_eq!(m.decision_value(Query::Training(0)).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn logistic_identity_example() {
        for mu in [1e-3, 0.1, 2.0] {
            let m = fit(&id2(), MarginLoss::Logistic, mu, &FitOptions::default()).unwrap();
            assert_relative_eq!(m.coefficients[0], -m.coefficients[1], epsilon = 1e-12);
            assert!(m.coefficients[0] > 0.0);
            let g = logistic_gradient(&id2(), mu, &m.coefficients);
            assert!(g.amax() <= 1e-8, "gradient {g}");
        }
    }

    #[test]
    fn decision_value_examples() {
        let mut m = fit(&id2(), MarginLoss::Squared, 0.5, &FitOptions::default()).unwrap();
        assert_relative_eq!(m.decision_value(Query::GramRow(&[1.0, 0.0])).unwrap(), 0.5);
        assert_eq!(m.decision_value(Query::Point(&[0.0])), Err(Error::MissingGramRow));
        assert!(m.decision_value(Query::GramRow(&[1.0])).is_err());
        m.coefficients.fill(0.0);
        assert_eq!(m.decision_value(Query::GramRow(&[0.3, 7.0])).unwrap(), 0.0);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_value(0.3), 1);
        assert_eq!(classify_value(-2.0), -1);
        assert_eq!(classify_value(0.0), 1);
        assert_eq!(classify_value(-0.0), 1);
    }

    #[test]
    fn probability_examples() {
        assert_eq!(probability_from_logit(0.0), 0.5);
        assert_relative_eq!(probability_from_logit(4f64.ln()), 0.8, epsilon = 1e-15);
        assert!(probability_from_logit(-30.0) < 1e-13);
        assert_eq!(probability_from_logit(1000.0), 1.0);
    }

    #[test]
    fn l1_identity_examples() {
        let opts = FitOptions::default();
        let m = fit_l1(&id2(), 0.5, &opts).unwrap();
        assert_relative_eq!(m.coefficients[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(m.coefficients[1], -0.5, epsilon = 1e-12);
        let m = fit_l1(&id2(), 1.0, &opts).unwrap();
        assert_eq!(m.coefficients.as_slice(), &[0.0, 0.0]);
        assert_eq!(m.report.zero_coefficients, 2);
        let m = fit_l1(&id2(), 1e-9, &opts).unwrap();
        assert_relative_eq!(m.coefficients[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn training_set_validation() {
        let g = GramMatrix::identity(3);
        assert_eq!(
            TrainingSet::from_gram(g.clone(), vec![Label::Positive, Label::Positive, Label::Unlabeled]).unwrap_err(),
            Error::OneClassLabels
        );
        assert!(TrainingSet::from_gram(g.clone(), vec![Label::Positive]).is_err());
        assert!(TrainingSet::from_gram(g, vec![Label::Positive, Label::Unlabeled, Label::Unlabeled]).is_err());
        assert!(fit(&id2(), MarginLoss::Squared, 0.0, &FitOptions::default()).is_err());
        assert!(fit(&id2(), MarginLoss::MisclassRamp, 1.0, &FitOptions::default()).is_err());
    }

    #[test]
    fn unlabeled_objects_get_zero_ridge_coefficients() {
        let k = GramMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.5, 0.3, 0.5, 1.0, 0.2, 0.3, 0.2, 1.5],
        ))
        .unwrap();
        let ts = TrainingSet::from_gram(k, vec![Label::Positive, Label::Unlabeled, Label::Negative]).unwrap();
        let m = fit(&ts, MarginLoss::Squared, 0.1, &FitOptions::default()).unwrap();
        assert_eq!(m.coefficients[1], 0.0);
        assert_eq!(m.labeled_mask, vec![true, false, true]);
    }
}
