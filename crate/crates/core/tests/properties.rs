//! Axioms of sub-linear expectations and capacities on random discrete
//! generator sets and random test functions.

use proptest::prelude::*;
use sublin::expectation::{ChoquetConfig, ExpectationConfig};
use sublin::{Event, GeneratorSet, Measure, TestFunction};

const TOL: f64 = 1e-9;

fn law() -> impl Strategy<Value = Measure> {
    prop::collection::vec((-40i32..=40, 1u32..=20), 1..=5).prop_map(|atoms| {
        let total: u32 = atoms.iter().map(|a| a.1).sum();
        let support = atoms.iter().map(|&(x, w)| (x as f64 / 8.0, w as f64 / total as f64)).collect();
        Measure::discrete(support).unwrap()
    })
}

fn generators() -> impl Strategy<Value = GeneratorSet> {
    prop::collection::vec(law(), 1..=4).prop_map(|m| GeneratorSet::new("random", m).unwrap())
}

fn bounded_fn() -> impl Strategy<Value = TestFunction> {
    prop::collection::vec(-30i32..=30, 2..=6).prop_map(|ys| {
        let knots = ys.iter().enumerate().map(|(i, &y)| (i as f64 - 3.0, y as f64 / 10.0)).collect();
        TestFunction::piecewise_linear(knots).unwrap()
    })
}

fn test_fn() -> impl Strategy<Value = TestFunction> {
    prop_oneof![
        bounded_fn(),
        (1u32..=3).prop_map(TestFunction::power),
        (0.5f64..3.0).prop_map(TestFunction::abs_power),
    ]
}

fn event() -> impl Strategy<Value = Event> {
    (-6.0f64..6.0, 0.0f64..6.0, any::<bool>(), any::<bool>())
        .prop_map(|(lo, w, lc, hc)| Event::interval(lo, lc, lo + w, hc).unwrap())
}

fn cfg() -> ExpectationConfig {
    ExpectationConfig::default()
}

fn close_le(a: f64, b: f64) -> bool {
    a <= b + TOL * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn subadditive(g in generators(), f in test_fn(), h in test_fn()) {
        let sum = g.upper_expectation(&f.add(&h), &cfg()).unwrap();
        let parts = g.upper_expectation(&f, &cfg()).unwrap() + g.upper_expectation(&h, &cfg()).unwrap();
        prop_assert!(close_le(sum, parts), "{sum} > {parts}");
    }

    #[test]
    fn positively_homogeneous(g in generators(), f in test_fn(), lambda in 0.0f64..5.0) {
        let lhs = g.upper_expectation(&f.scale(lambda), &cfg()).unwrap();
        let rhs = lambda * g.upper_expectation(&f, &cfg()).unwrap();
        prop_assert!((lhs - rhs).abs() <= TOL * (1.0 + rhs.abs()));
    }

    #[test]
    fn monotone(g in generators(), f in bounded_fn(), lo in -4.0f64..4.0, h in 0.0f64..2.0) {
        let bump = TestFunction::trapezoid(lo, lo + 1.0, 0.5, h).unwrap();
        let bigger = g.upper_expectation(&f.add(&bump), &cfg()).unwrap();
        prop_assert!(close_le(g.upper_expectation(&f, &cfg()).unwrap(), bigger));
    }

    #[test]
    fn constants_preserved_and_translate(g in generators(), f in test_fn(), c in -5.0f64..5.0) {
        prop_assert!((g.upper_expectation(&TestFunction::constant(c), &cfg()).unwrap() - c).abs() <= TOL);
        let shifted = g.upper_expectation(&f.add(&TestFunction::constant(c)), &cfg()).unwrap();
        let base = g.upper_expectation(&f, &cfg()).unwrap();
        prop_assert!((shifted - base - c).abs() <= TOL * (1.0 + base.abs()));
    }

    #[test]
    fn sandwich(g in generators(), f in test_fn()) {
        let lower = g.conjugate_expectation(&f, &cfg()).unwrap();
        let upper = g.upper_expectation(&f, &cfg()).unwrap();
        for e in g.expectations(&f, &cfg()).unwrap() {
            prop_assert!(close_le(lower, e) && close_le(e, upper));
        }
    }

    #[test]
    fn capacities(g in generators(), a in event(), b in event()) {
        let u = a.union(&b);
        prop_assert!(close_le(g.capacity_upper(&u), g.capacity_upper(&a) + g.capacity_upper(&b)));
        prop_assert!(close_le(g.capacity_lower(&a), g.capacity_upper(&a)));
        prop_assert!((g.capacity_upper(&a) + g.capacity_lower(&a.complement()) - 1.0).abs() <= TOL);
        prop_assert!(close_le(g.capacity_upper(&a), g.capacity_upper(&u)));
        prop_assert_eq!(g.capacity_upper(&Event::everything()), 1.0);
        prop_assert_eq!(g.capacity_upper(&Event::empty()), 0.0);
    }

    #[test]
    fn choquet_dominates_upper_mean(g in generators()) {
        let c = g.choquet(&ChoquetConfig::default()).unwrap();
        let e = g.upper_expectation(&TestFunction::identity(), &cfg()).unwrap();
        prop_assert!(close_le(e, c.value + c.abs_err), "{e} > {}", c.value);
    }
}
