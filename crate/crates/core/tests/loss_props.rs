use kernreg::loss::*;
use proptest::prelude::*;

const CONVEX: [MarginLoss; 5] = [
    MarginLoss::MisclassRamp,
    MarginLoss::Hinge { theta: 1.0 },
    MarginLoss::Hinge { theta: 2.5 },
    MarginLoss::Logistic,
    MarginLoss::Squared,
];

fn loss_strategy() -> impl Strategy<Value = MarginLoss> {
    prop::sample::select(CONVEX.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn losses_are_convex(loss in loss_strategy(), a in -20.0..20.0f64, b in -20.0..20.0f64, t in 0.0..1.0f64) {
        let mid = loss.evaluate(t * a + (1.0 - t) * b);
        let chord = t * loss.evaluate(a) + (1.0 - t) * loss.evaluate(b);
        prop_assert!(mid <= chord + 1e-12 * (1.0 + chord.abs()));
    }

    #[test]
    fn subgradient_supports_the_loss(loss in loss_strategy(), tau in -20.0..20.0f64, other in -20.0..20.0f64) {
        let g = loss.subgradient(tau);
        let lower = loss.evaluate(tau) + g * (other - tau);
        prop_assert!(loss.evaluate(other) >= lower - 1e-12 * (1.0 + lower.abs()));
    }

    #[test]
    fn smooth_derivatives_match_central_differences(tau in -20.0..20.0f64, squared in prop::bool::ANY) {
        let loss = if squared { MarginLoss::Squared } else { MarginLoss::Logistic };
        let h = 1e-6;
        let fd = (loss.evaluate(tau + h) - loss.evaluate(tau - h)) / (2.0 * h);
        let g = loss.subgradient(tau);
        prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1e-3), "tau {} fd {} g {}", tau, fd, g);
    }

    #[test]
    fn losses_are_nonnegative(loss in loss_strategy(), tau in -50.0..50.0f64) {
        prop_assert!(loss.evaluate(tau) >= 0.0);
    }
}

#[test]
fn hinge_and_logistic_bound_the_ramp() {
    let ramp = MarginLoss::MisclassRamp;
    for k in 0..=20_000 {
        let tau = -10.0 + k as f64 * 1e-3;
        let r = ramp.evaluate(tau);
        assert!(MarginLoss::hinge().evaluate(tau) >= r, "hinge at {tau}");
        assert!(MarginLoss::Logistic.evaluate(tau) >= r, "logistic at {tau}");
    }
}

#[test]
fn sign_consistency_table() {
    for loss in [MarginLoss::hinge(), MarginLoss::Logistic, MarginLoss::Squared] {
        for k in 1..=19 {
            if k == 10 {
                continue;
            }
            let p = k as f64 * 0.05;
            assert!(check_sign_consistency(&loss, p).unwrap(), "{} at p = {p}", loss.name());
        }
    }
    assert!(check_sign_consistency(&MarginLoss::Logistic, 0.5001).unwrap());
    assert!(check_sign_consistency(&MarginLoss::hinge(), 0.5).is_err());
}

#[test]
fn population_minimizers_match_closed_forms() {
    let grid = MinimizerGrid::default();
    let step = grid.step;
    let f = population_minimizer(&MarginLoss::hinge(), 0.8, &grid).unwrap();
    assert!((f - 1.0).abs() <= step);
    let f = population_minimizer(&MarginLoss::Squared, 0.8, &grid).unwrap();
    assert!((f - 0.6).abs() <= step);
    let f = population_minimizer(&MarginLoss::Logistic, 0.8, &grid).unwrap();
    assert!((f - 4f64.ln()).abs() <= step);
    // squared loss minimizer is 2p - 1 for every p
    for k in 1..20 {
        let p = k as f64 / 20.0;
        let f = population_minimizer(&MarginLoss::Squared, p, &grid).unwrap();
        assert!((f - (2.0 * p - 1.0)).abs() <= step, "p {p}: {f}");
    }
}

#[test]
fn evaluate_and_subgradient_examples() {
    assert_eq!(MarginLoss::hinge().evaluate(0.0), 1.0);
    assert_eq!(MarginLoss::hinge().evaluate(2.0), 0.0);
    assert_eq!(MarginLoss::Logistic.evaluate(0.0), 1.0);
    assert_eq!(MarginLoss::Squared.evaluate(0.0), 1.0);
    assert_eq!(MarginLoss::MisclassRamp.evaluate(-1.5), 1.5);
    assert_eq!(MarginLoss::Squared.evaluate(1.0), 0.0);
    assert_eq!(MarginLoss::hinge().subgradient(0.0), -1.0);
    assert_eq!(MarginLoss::hinge().subgradient(1.0), 0.0);
    let want = -1.0 / (2.0 * 2f64.ln());
    assert!((MarginLoss::Logistic.subgradient(0.0) - want).abs() < 1e-12);
    assert!(MarginLoss::hinge_scaled(0.0).is_err());
}
