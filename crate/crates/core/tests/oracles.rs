//! Cross-checks against independently computed values.

use std::sync::Arc;

use sublin::expectation::ChoquetConfig;
use sublin::functionals::{normalizer_table, varsigma};
use sublin::measure::Sign;
use sublin::moving_average::{
    approx_residual, lil_estimate, ma_from_innovations, max_normalized, simulate_ma, tail_cutoff, Boundary,
    Coefficients, LilConfig, Window,
};
use sublin::paths::{
    brute_force_upper, exact_dp_upper, mc_choquet_max_moment, scheduled_value, AbsPartialSum, MaxStat, MaxStatConfig,
    NamedPolicy, PartialSum, PathFunctional, Policy, ScaleSequence, Scaled, StatMode, SumOf, DEFAULT_STATE_CAP,
};
use sublin::{GeneratorSet, Measure};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// `ς` for `P(|X| ≥ x) = 1 ∧ x^{−3}`, by parts: `∫ h'(x) G(x) dx` with
/// `h(x) = x²/loglog x`, split at `1` and `e^e`, the last piece in `u = ln x`.
#[test]
fn varsigma_matches_integration_by_parts() {
    let e = std::f64::consts::E;
    let head = 1.0 + 2.0 * (1.0 - (-e).exp());
    let tail = simpson(|u: f64| (2.0 / u.ln() - 1.0 / (u.ln().powi(2) * u)) * (-u).exp(), e, 60.0, 20_000);
    let oracle = head + tail;
    let g = GeneratorSet::singleton(Measure::pareto(3.0, 1.0, Sign::Positive).unwrap());
    let got = varsigma(&g, &ChoquetConfig::relative(1e-10)).unwrap();
    assert!((got.value - oracle).abs() < 1e-7 * oracle, "{} vs {oracle}", got.value);
}

fn small_gens() -> Vec<GeneratorSet> {
    let d = |v: Vec<(f64, f64)>| Measure::discrete(v).unwrap();
    vec![
        GeneratorSet::new("a", vec![d(vec![(-1.0, 0.5), (1.0, 0.5)]), d(vec![(-2.0, 0.5), (1.0, 0.5)])]).unwrap(),
        GeneratorSet::new("b", vec![d(vec![(-1.0, 0.3), (0.0, 0.4), (2.0, 0.3)]), d(vec![(0.0, 1.0)]), d(vec![(2.0, 0.25), (-1.0, 0.75)])])
            .unwrap(),
        GeneratorSet::new("c", vec![d(vec![(1.0, 1.0)]), d(vec![(-1.0, 1.0)])]).unwrap(),
    ]
}

fn agree<F: PathFunctional>(g: &GeneratorSet, f: &F, n: usize) {
    let dp = exact_dp_upper(g, f, n, DEFAULT_STATE_CAP).unwrap().value;
    let bf = brute_force_upper(g, f, n).unwrap();
    assert!((dp - bf).abs() <= 1e-12 * (1.0 + bf.abs()), "{} n={n}: {dp} vs {bf}", f.label());
}

#[test]
fn dp_matches_brute_force() {
    for g in small_gens() {
        for n in 1..=5 {
            agree(&g, &PartialSum, n);
            agree(&g, &AbsPartialSum, n);
            agree(&g, &MaxStat { r: 1.0, mode: StatMode::Positive }, n);
            agree(&g, &MaxStat { r: 2.5, mode: StatMode::Absolute }, n);
            agree(&g, &Scaled { inner: MaxStat { r: 1.0, mode: StatMode::Absolute }, scale: ScaleSequence::Periodic(vec![1.0, -0.5]) }, n);
            agree(&g, &SumOf(AbsPartialSum, MaxStat { r: 1.0, mode: StatMode::Positive }), n);
        }
    }
}

/// Every adapted selection for two steps: a first generator and a map from
/// the first value to the second generator.
#[test]
fn dp_matches_enumeration_of_adapted_maps() {
    let f = MaxStat { r: 1.0, mode: StatMode::Absolute };
    for g in small_gens() {
        let laws: Vec<Vec<(f64, f64)>> = g.measures().iter().map(|m| m.atoms().unwrap().to_vec()).collect();
        let mut support: Vec<f64> = laws.iter().flatten().map(|a| a.0).collect();
        support.sort_by(f64::total_cmp);
        support.dedup();
        let k = laws.len();
        let maps = k.pow(support.len() as u32);
        let mut best = f64::NEG_INFINITY;
        for first in 0..k {
            for code in 0..maps {
                let second = |x: f64| {
                    let i = support.iter().position(|&s| s == x).unwrap();
                    (code / k.pow(i as u32)) % k
                };
                let mut v = 0.0;
                for &(x1, p1) in &laws[first] {
                    for &(x2, p2) in &laws[second(x1)] {
                        let s = f.step(&f.step(&f.initial(), 1, x1), 2, x2);
                        v += p1 * p2 * f.payoff(&s);
                    }
                }
                best = best.max(v);
            }
        }
        let dp = exact_dp_upper(&g, &f, 2, DEFAULT_STATE_CAP).unwrap().value;
        assert!((dp - best).abs() < 1e-14, "{dp} vs {best}");
    }
}

#[test]
fn dp_dominates_schedules_and_is_subadditive() {
    let f = MaxStat { r: 1.0, mode: StatMode::Positive };
    let h = AbsPartialSum;
    for g in small_gens() {
        let n = 5;
        let dp = exact_dp_upper(&g, &f, n, DEFAULT_STATE_CAP).unwrap().value;
        for theta in 0..g.len() {
            assert!(scheduled_value(&g, &f, n, &|_| theta).unwrap() <= dp + 1e-12);
        }
        assert!(scheduled_value(&g, &f, n, &|k| k % g.len()).unwrap() <= dp + 1e-12);
        let both = exact_dp_upper(&g, &SumOf(f, h), n, DEFAULT_STATE_CAP).unwrap().value;
        let apart = dp + exact_dp_upper(&g, &h, n, DEFAULT_STATE_CAP).unwrap().value;
        assert!(both <= apart + 1e-12);
    }
}

#[test]
fn monte_carlo_agrees_with_dp() {
    let u = GeneratorSet::singleton(Measure::uniform_on(&[-1.0, 1.0]).unwrap());
    let cfg = MaxStatConfig { n: 2, r: 1.0, mode: StatMode::Positive, scale: ScaleSequence::Ones, seed: 11, replications: 40_000 };
    let est = mc_choquet_max_moment(&u, &[NamedPolicy { label: "only".into(), policy: Policy::Constant(0) }], &cfg).unwrap();
    let exact = (0.5f64.sqrt() + 1.0) / 4.0;
    assert!((est.envelope - exact).abs() < 4.0 * est.envelope_se, "{} vs {exact}", est.envelope);

    // The optimal feedback policy from the programme reproduces its value.
    let g = &small_gens()[0];
    let f = MaxStat { r: 1.0, mode: StatMode::Absolute };
    let dp = exact_dp_upper(g, &f, 6, DEFAULT_STATE_CAP).unwrap();
    let cfg = MaxStatConfig { n: 6, r: 1.0, mode: StatMode::Absolute, scale: ScaleSequence::Ones, seed: 5, replications: 40_000 };
    let policies = [
        NamedPolicy { label: "dp".into(), policy: Policy::DpDerived(Arc::new(dp.policy.clone())) },
        NamedPolicy { label: "first".into(), policy: Policy::Constant(0) },
    ];
    let est = mc_choquet_max_moment(g, &policies, &cfg).unwrap();
    let dp_row = &est.per_policy[0];
    assert!((dp_row.mean - dp.value).abs() < 4.0 * dp_row.se, "{} vs {}", dp_row.mean, dp.value);
    let first = scheduled_value(g, &f, 6, &|_| 0).unwrap();
    assert!((est.per_policy[1].mean - first).abs() < 4.0 * est.per_policy[1].se);
}

fn normal() -> GeneratorSet {
    GeneratorSet::singleton(Measure::normal(0.0, 1.0).unwrap())
}

#[test]
fn moving_average_linearity_and_partial_sums() {
    let c = Coefficients::FiniteWindow { values: vec![0.1, 0.2, 0.4, 0.2, 0.1] };
    let p = simulate_ma(&c, &normal(), &Policy::Constant(0), 2000, 2, 3, 0, Boundary::OneSided).unwrap();
    let q = simulate_ma(&c.scaled(2.0), &normal(), &Policy::Constant(0), 2000, 2, 3, 0, Boundary::OneSided).unwrap();
    let r = simulate_ma(&c.scaled(-0.3), &normal(), &Policy::Constant(0), 2000, 2, 3, 0, Boundary::OneSided).unwrap();
    let mut acc = 0.0;
    for i in 0..2000 {
        assert_eq!(q.t[i], 2.0 * p.t[i]);
        assert!((r.t[i] + 0.3 * p.t[i]).abs() < 1e-10);
        acc += p.x[i];
        assert!((acc - p.t[i]).abs() < 1e-10);
    }
    let id = simulate_ma(&Coefficients::identity(), &normal(), &Policy::Constant(0), 2000, 0, 3, 0, Boundary::OneSided).unwrap();
    let s: f64 = p.innovations.values[..2000].iter().sum();
    assert!((id.t[1999] - s).abs() < 1e-10);
    let a = normalizer_table(2000);
    assert_eq!(approx_residual(&id, &Coefficients::identity(), Window { n0: 1, n: 2000 }, &a).unwrap(), 0.0);
}

#[test]
fn moving_average_boundary_locality() {
    let c = Coefficients::FiniteWindow { values: vec![0.3, -0.2, 1.0, 0.5, 0.25] };
    let (n, j) = (200usize, 2i64);
    let base = simulate_ma(&c, &normal(), &Policy::Constant(0), n, 2, 9, 0, Boundary::BiDirectional).unwrap();
    let resid = |p: &sublin::moving_average::MaPath| {
        let s: f64 = (1..=n as i64).map(|t| p.innovations.at(t)).sum();
        p.t[n - 1] - c.beta_sum() * s
    };
    let near = |t: i64| (1 - j..=2 * j).contains(&t) || (n as i64 - j + 1..=n as i64 + j).contains(&t);
    let mut y = base.innovations.clone();
    for (i, v) in y.values.iter_mut().enumerate() {
        if !near(y.start + i as i64) {
            *v = 3.0 * *v + 1.0;
        }
    }
    let perturbed = ma_from_innovations(y, &c, 2, n);
    assert!((resid(&base) - resid(&perturbed)).abs() < 1e-9);
}

#[test]
fn tail_cutoff_monotone() {
    let g = Coefficients::Geometric { rho: 0.7, scale: 1.5 };
    let ms: Vec<usize> = [1.0, 0.1, 1e-2, 1e-4, 1e-8].iter().map(|&e| tail_cutoff(&g, 2.0, e, 1.0).unwrap()).collect();
    assert!(ms.windows(2).all(|w| w[0] <= w[1]));
    assert!(ms[4] > ms[0]);
}

#[test]
fn sign_flip_invariance() {
    let c = Coefficients::Geometric { rho: 0.5, scale: 1.0 };
    let p = simulate_ma(&c, &normal(), &Policy::Constant(0), 4096, 20, 1, 2, Boundary::OneSided).unwrap();
    let flipped = ma_from_innovations(p.innovations.negated(), &c, 20, 4096);
    let a = normalizer_table(4096);
    let w = Window::sqrt(4096);
    assert_eq!(max_normalized(&p, w, &a).unwrap(), max_normalized(&flipped, w, &a).unwrap());
}

#[test]
fn lil_degenerate_and_symmetric() {
    let zero = GeneratorSet::singleton(Measure::dirac(0.0).unwrap());
    let cfg = LilConfig { n: 1024, n0: None, seeds: 3, master_seed: 1, cut_eps: 1e-6, cut_x: 1.0, convention: Boundary::OneSided, bins: 10 };
    let rep = lil_estimate(&Coefficients::identity(), &zero, &Policy::Constant(0), &cfg).unwrap();
    assert_eq!((rep.median, rep.target), (0.0, 0.0));
    assert_eq!(rep.coverage.centers, vec![0.0]);
    assert_eq!(rep.coverage.totals[0], 3 * (1024 - 32 + 1));

    let cfg = LilConfig { n: 1 << 14, seeds: 24, master_seed: 4, bins: 10, ..cfg };
    let rep = lil_estimate(&Coefficients::identity(), &normal(), &Policy::Constant(0), &cfg).unwrap();
    assert!(rep.warnings.is_empty(), "{:?}", rep.warnings);
    assert!((rep.target - 1.0).abs() < 1e-8);
    assert!(rep.coverage.symmetric(3.0));
    assert!(rep.coverage.interior_visited(0.5));
    // Heavy tails violate the premises but still produce a report.
    let heavy = GeneratorSet::singleton(Measure::pareto(1.5, 1.0, Sign::Symmetric).unwrap());
    let cfg = LilConfig { n: 256, seeds: 2, ..cfg };
    let rep = lil_estimate(&Coefficients::identity(), &heavy, &Policy::Constant(0), &cfg).unwrap();
    assert!(!rep.warnings.is_empty());
}
