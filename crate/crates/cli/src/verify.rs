//! The acceptance suite: ten named checks with tolerances from a versioned
//! defaults file.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sublin::bounds::{best_iid_rhs, moment_lower_bound};
use sublin::expectation::{AbsTransform, ChoquetConfig, ExpectationConfig};
use sublin::functionals::{normalizer_real, series_excess_moment, series_truncated_moment, SeriesCurve};
use sublin::measure::{Sign, SurvivalFn};
use sublin::moving_average::{lil_estimate, Boundary, Coefficients, LilConfig, LilReport};
use sublin::paths::{
    brute_force_upper, exact_dp_upper, mc_choquet_max_moment, plateau_divergence_probe, scheduled_value,
    AbsPartialSum, MaxStat, MaxStatConfig, NamedPolicy, PartialSum, PathFunctional, Policy, ProbeConfig, Sampler,
    ScaleSequence, StatMode, Verdict, DEFAULT_STATE_CAP,
};
use sublin::rng::Stream;
use sublin::stats::clopper_pearson_upper;
use sublin::{Event, GeneratorSet, Measure, TestFunction};

use crate::config::VERIFY_DEFAULTS;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    /// Version of the defaults file.
    pub version: u32,
    pub checks: Vec<u32>,
    pub choquet: ChoquetCheck,
    pub dp: DpCheck,
    pub axioms: AxiomCheck,
    pub exp_inequality: ExpIneqCheck,
    pub series: SeriesCheck,
    pub probe: ProbeCheck,
    pub bracket: BracketCheck,
    pub ma_residual: MaResidualCheck,
    pub ma_lil: MaLilCheck,
    pub determinism: DeterminismCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoquetCheck {
    pub rel_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpCheck {
    pub instances: usize,
    pub max_n: usize,
    pub max_support: usize,
    pub max_generators: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxiomCheck {
    pub triples: usize,
    pub tol: f64,
    pub quad_rel_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpIneqCheck {
    pub ns: Vec<u64>,
    pub x_points: usize,
    /// Grid `x_j = j · x_step_sd · σ̄ √n`, `j = 1, …, x_points`.
    pub x_step_sd: f64,
    pub replications: usize,
    pub confidence: f64,
    /// The right-hand side is minimised over `y = x / d` for these `d`.
    pub y_divisors: Vec<f64>,
    pub deltas: Vec<f64>,
    pub ps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesCheck {
    pub n_max: u64,
    pub p: f64,
    pub delta: f64,
    pub r: f64,
    /// Checkpoints `N / 10^k` for `k = decades, …, 0`.
    pub decades: u32,
    pub cauchy_fraction: f64,
    pub nondecreasing_last: usize,
    pub oracle_rel_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeCheck {
    pub replications: usize,
    pub k_min: u32,
    pub k_max: u32,
    pub plateau_tol: f64,
    pub growth_tol: f64,
    pub pareto_alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketCheck {
    pub r: f64,
    pub n: usize,
    pub replications: usize,
    pub se_multiple: f64,
    /// Calibrated multiple of `C_V[|X|^r]` used as the upper end.
    pub multiple: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaResidualCheck {
    pub n: usize,
    pub n0: usize,
    pub seeds: usize,
    pub window: Vec<f64>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaLilCheck {
    pub n: usize,
    pub n0: usize,
    pub seeds: usize,
    pub rho: f64,
    pub band: [f64; 2],
    pub ratio_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeterminismCheck {
    pub threads: Vec<usize>,
    pub checks: Vec<u32>,
    /// Work reduction applied to the repeated checks.
    pub shrink: usize,
}

impl SuiteConfig {
    pub fn defaults() -> Self {
        serde_json::from_str(VERIFY_DEFAULTS).expect("bundled defaults parse")
    }

    /// A cheaper suite with the same structure, for repeated runs.
    pub fn shrunk(&self, factor: usize) -> Self {
        let f = factor.max(1);
        let mut s = self.clone();
        s.dp.instances = s.dp.instances.div_ceil(5);
        s.axioms.triples = s.axioms.triples.div_ceil(10);
        s.exp_inequality.replications = (s.exp_inequality.replications / f).max(100);
        s.exp_inequality.ns.truncate(1);
        s.series.n_max = s.series.n_max.min(1 << 14);
        s.series.decades = s.series.decades.min(3);
        s.probe.replications = (s.probe.replications / f).max(4);
        s.probe.k_max = s.probe.k_max.min(12);
        s.probe.k_min = s.probe.k_min.min(s.probe.k_max - 2);
        s.bracket.replications = (s.bracket.replications / f).max(100);
        s.bracket.n = s.bracket.n.min(256);
        for (n, n0, seeds) in [
            (&mut s.ma_residual.n, &mut s.ma_residual.n0, &mut s.ma_residual.seeds),
            (&mut s.ma_lil.n, &mut s.ma_lil.n0, &mut s.ma_lil.seeds),
        ] {
            *n = (*n).min(1 << 14);
            *n0 = (*n0).min(1 << 7);
            *seeds = (*seeds / 8).max(2);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub summary: String,
    /// Every number behind the verdict; free of timings so that repeated
    /// runs compare equal.
    pub details: Value,
    pub runtime_s: f64,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<32} {}  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.summary
        )
    }
}

pub fn check_name(id: u32) -> &'static str {
    match id {
        1 => "choquet-envelope-exactness",
        2 => "dp-oracle-equivalence",
        3 => "sublinear-axioms",
        4 => "exponential-inequality",
        5 => "series-lemma-consistency",
        6 => "plateau-divergence",
        7 => "optimality-bracket",
        8 => "ma-residual",
        9 => "ma-lil-band",
        10 => "determinism",
        _ => "unknown",
    }
}

type Verdict3 = (bool, String, Value);

/// Seed of check `id` derived from the run's master seed.
fn master(seed: u64, id: u32) -> u64 {
    seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn run_check(id: u32, suite: &SuiteConfig, seed: u64) -> CliResult<CheckOutcome> {
    let start = Instant::now();
    let m = master(seed, id);
    let (passed, summary, details) = match id {
        1 => check_choquet(&suite.choquet)?,
        2 => check_dp(&suite.dp, m)?,
        3 => check_axioms(&suite.axioms, m)?,
        4 => check_exp_inequality(&suite.exp_inequality, m)?,
        5 => check_series(&suite.series)?,
        6 => check_probe(&suite.probe, m)?,
        7 => check_bracket(&suite.bracket, m)?,
        8 => check_ma_residual(&suite.ma_residual, m)?,
        9 => check_ma_lil(&suite.ma_lil, m)?,
        10 => check_determinism(suite, seed)?,
        other => return Err(CliError::Invalid(format!("no check with id {other}"))),
    };
    Ok(CheckOutcome {
        id,
        name: check_name(id).to_string(),
        passed,
        summary,
        details,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

pub fn run_suite(suite: &SuiteConfig, seed: u64) -> CliResult<Vec<CheckOutcome>> {
    suite.checks.iter().map(|&id| run_check(id, suite, seed)).collect()
}

/// Uniform draws for building random instances.
struct Draw(Stream);

impl Draw {
    fn new(master: u64, index: u64) -> Self {
        Draw(Stream::new(master, index, 3))
    }

    fn unit(&mut self) -> f64 {
        self.0.uniform()
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `lo..=hi`.
    fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((self.unit() * (hi - lo + 1) as f64) as usize).min(hi - lo)
    }

    /// Normalised positive weights.
    fn probs(&mut self, k: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..k).map(|_| 0.1 + self.unit()).collect();
        let total: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
        let head: f64 = p[..k - 1].iter().sum();
        p[k - 1] = (1.0 - head).max(0.0);
        p
    }
}

fn rel_err(got: f64, expected: f64) -> f64 {
    if expected == 0.0 {
        got.abs()
    } else {
        ((got - expected) / expected).abs()
    }
}

fn check_choquet(c: &ChoquetCheck) -> CliResult<Verdict3> {
    let cfg = ChoquetConfig::default();
    let ecfg = ExpectationConfig::default();
    let dirac = |x: f64| Measure::dirac(x).unwrap();
    let pm = GeneratorSet::new("dirac +-1", vec![dirac(1.0), dirac(-1.0)])?;
    let normals = GeneratorSet::new("normal sd 1, 2", vec![Measure::normal(0.0, 1.0)?, Measure::normal(0.0, 2.0)?])?;
    let std_normal = GeneratorSet::singleton(Measure::normal(0.0, 1.0)?);
    let expo = GeneratorSet::singleton(Measure::survival(SurvivalFn::Exponential { rate: 1.0 }, 0.0)?);

    let mut cases: Vec<(String, f64, f64)> = vec![
        ("exponential survival C_V[X]".into(), expo.choquet(&cfg)?.value, 1.0),
        ("dirac +-1 upper mean".into(), pm.upper_expectation(&TestFunction::identity(), &ecfg)?, 1.0),
        ("dirac +-1 lower mean".into(), pm.conjugate_expectation(&TestFunction::identity(), &ecfg)?, -1.0),
        ("dirac +-1 C_V[X]".into(), pm.choquet(&cfg)?.value, 1.0),
        ("dirac +-1 V(X >= 0.5)".into(), pm.capacity_upper(&Event::ge(0.5)), 1.0),
        ("dirac +-1 v(X >= 0.5)".into(), pm.capacity_lower(&Event::ge(0.5)), 0.0),
        ("normals upper E[X^2]".into(), normals.upper_expectation(&TestFunction::power(2), &ecfg)?, 4.0),
        ("normals lower E[X^2]".into(), normals.conjugate_expectation(&TestFunction::power(2), &ecfg)?, 1.0),
        ("normals C_V[X^2]".into(), normals.choquet_abs_transform(&AbsTransform::Power(2.0), &cfg)?.value, 4.0),
        (
            "normals upper E[-|X|]".into(),
            normals.upper_expectation(&TestFunction::abs().neg(), &ecfg)?,
            -(2.0 / std::f64::consts::PI).sqrt(),
        ),
        ("normals V(|X| > 2)".into(), normals.capacity_upper(&Event::abs_gt(2.0)), 0.317_310_507_862_914_15),
        ("normals v(|X| > 2)".into(), normals.capacity_lower(&Event::abs_gt(2.0)), 0.045_500_263_896_358_42),
        ("normal V(X > 0)".into(), std_normal.capacity_upper(&Event::gt(0.0)), 0.5),
    ];
    for x in [-2.5, 0.0, 3.0] {
        let g = GeneratorSet::singleton(dirac(x));
        cases.push((format!("constant {x} C_V"), g.choquet(&cfg)?.value, x));
        cases.push((format!("constant {x} upper mean"), g.upper_expectation(&TestFunction::constant(1.0).scale(1.0).add(&TestFunction::identity()), &ecfg)? - 1.0, x));
    }
    let rows: Vec<Value> = cases
        .iter()
        .map(|(name, got, exp)| json!({ "case": name, "value": got, "expected": exp, "rel_err": rel_err(*got, *exp) }))
        .collect();
    let worst = cases.iter().map(|(_, g, e)| rel_err(*g, *e)).fold(0.0, f64::max);
    let passed = worst <= c.rel_tol;
    Ok((passed, format!("{} cases, worst relative error {worst:.2e} (tolerance {:.0e})", cases.len(), c.rel_tol), json!({ "cases": rows, "worst": worst })))
}

fn random_path_instance(d: &mut Draw, c: &DpCheck) -> CliResult<(GeneratorSet, usize, usize)> {
    let grid: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.5).collect();
    let s = d.int(1, c.max_support);
    let mut pool: Vec<f64> = Vec::with_capacity(s);
    while pool.len() < s {
        let v = grid[d.int(0, grid.len() - 1)];
        if !pool.contains(&v) {
            pool.push(v);
        }
    }
    let k = d.int(1, c.max_generators);
    let mut laws = Vec::with_capacity(k);
    for _ in 0..k {
        let mut sub: Vec<f64> = pool.iter().copied().filter(|_| d.unit() < 0.7).collect();
        if sub.is_empty() {
            sub.push(pool[d.int(0, pool.len() - 1)]);
        }
        let p = d.probs(sub.len());
        laws.push(Measure::discrete(sub.into_iter().zip(p).collect())?);
    }
    Ok((GeneratorSet::new("random", laws)?, d.int(1, c.max_n), d.int(0, 3)))
}

fn dp_pair<F: PathFunctional>(g: &GeneratorSet, f: &F, n: usize) -> CliResult<(f64, f64, f64)> {
    let dp = exact_dp_upper(g, f, n, DEFAULT_STATE_CAP)?.value;
    let bf = brute_force_upper(g, f, n)?;
    let mut best_constant = f64::NEG_INFINITY;
    for theta in 0..g.len() {
        best_constant = best_constant.max(scheduled_value(g, f, n, &|_| theta)?);
    }
    Ok((dp, bf, best_constant))
}

fn check_dp(c: &DpCheck, m: u64) -> CliResult<Verdict3> {
    let rows: Vec<(f64, f64, f64, usize, usize)> = (0..c.instances as u64)
        .into_par_iter()
        .map(|i| -> CliResult<_> {
            let mut d = Draw::new(m, i);
            let (g, n, which) = random_path_instance(&mut d, c)?;
            let (dp, bf, bc) = match which {
                0 => dp_pair(&g, &PartialSum, n)?,
                1 => dp_pair(&g, &AbsPartialSum, n)?,
                2 => dp_pair(&g, &MaxStat { r: 1.0, mode: StatMode::Positive }, n)?,
                _ => dp_pair(&g, &MaxStat { r: 2.0, mode: StatMode::Absolute }, n)?,
            };
            Ok((dp, bf, bc, n, which))
        })
        .collect::<CliResult<_>>()?;
    let worst_diff = rows.iter().map(|r| (r.0 - r.1).abs() / r.1.abs().max(1.0)).fold(0.0, f64::max);
    let worst_gap = rows.iter().map(|r| r.0 - r.2).fold(f64::INFINITY, f64::min);
    let passed = worst_diff <= c.tol && worst_gap >= -c.tol;
    let details: Vec<Value> =
        rows.iter().map(|r| json!({ "dp": r.0, "brute_force": r.1, "best_constant": r.2, "n": r.3, "functional": r.4 })).collect();
    Ok((
        passed,
        format!("{} instances, max |dp - brute| {worst_diff:.1e}, min dp - best constant {worst_gap:.3e}", rows.len()),
        json!({ "instances": details, "worst_diff": worst_diff, "worst_gap": worst_gap }),
    ))
}

fn random_law(d: &mut Draw) -> CliResult<Measure> {
    if d.unit() < 0.25 {
        return Ok(Measure::normal(d.range(-1.0, 1.0), d.range(0.5, 2.0))?);
    }
    let k = d.int(1, 5);
    let p = d.probs(k);
    let atoms = (0..k).map(|i| ((d.int(0, 32) as f64 - 16.0) * 0.25, p[i])).collect();
    Ok(Measure::discrete(atoms)?)
}

fn random_fn(d: &mut Draw) -> CliResult<TestFunction> {
    Ok(match d.int(0, 3) {
        0 => {
            let k = d.int(2, 6);
            let mut x = -4.0;
            let knots = (0..k)
                .map(|_| {
                    x += d.range(0.1, 2.0);
                    (x, d.range(-3.0, 3.0))
                })
                .collect();
            TestFunction::piecewise_linear(knots)?
        }
        1 => TestFunction::power(d.int(1, 3) as u32),
        2 => TestFunction::abs_power(d.range(0.5, 3.0)),
        _ => {
            let lo = d.range(-3.0, 2.0);
            TestFunction::trapezoid(lo, lo + d.range(0.0, 2.0), d.range(0.1, 1.0), d.range(-2.0, 2.0))?
        }
    })
}

fn check_axioms(c: &AxiomCheck, m: u64) -> CliResult<Verdict3> {
    let ecfg = ExpectationConfig { rel_tol: c.quad_rel_tol, ..ExpectationConfig::default() };
    let per: Vec<[f64; 4]> = (0..c.triples as u64)
        .into_par_iter()
        .map(|i| -> CliResult<[f64; 4]> {
            let mut d = Draw::new(m, i);
            let k = d.int(1, 3);
            let gen = GeneratorSet::new("random", (0..k).map(|_| random_law(&mut d)).collect::<CliResult<_>>()?)?;
            let (phi, psi) = (random_fn(&mut d)?, random_fn(&mut d)?);
            let lambda = d.range(0.0, 4.0);
            let cst = d.range(-3.0, 3.0);
            let lo = d.range(-3.0, 3.0);
            let bump = TestFunction::trapezoid(lo, lo + d.range(0.0, 2.0), d.range(0.1, 1.0), d.range(0.0, 2.0))?;
            let e = |f: &TestFunction| gen.upper_expectation(f, &ecfg);
            let (ep, es) = (e(&phi)?, e(&psi)?);
            let sum = e(&phi.add(&psi))?;
            let scaled = e(&phi.scale(lambda))?;
            let bumped = e(&phi.add(&bump))?;
            let shifted = e(&phi.add(&TestFunction::constant(cst)))?;
            let constant = e(&TestFunction::constant(cst))?;
            let scale = 1.0 + [ep, es, sum, scaled, bumped, shifted].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            Ok([
                (sum - ep - es).max(0.0) / scale,
                (scaled - lambda * ep).abs() / scale,
                (ep - bumped).max(0.0) / scale,
                ((constant - cst).abs()).max((shifted - ep - cst).abs() / scale),
            ])
        })
        .collect::<CliResult<_>>()?;
    let names = ["sub-additivity", "homogeneity", "monotonicity", "constants"];
    let worst: Vec<f64> = (0..4).map(|j| per.iter().map(|r| r[j]).fold(0.0, f64::max)).collect();
    let violations: Vec<usize> = (0..4).map(|j| per.iter().filter(|r| r[j] > c.tol).count()).collect();
    let total: usize = violations.iter().sum();
    let details = json!({
        "triples": per.len(),
        "worst": names.iter().zip(&worst).map(|(n, w)| json!({ "property": n, "worst": w })).collect::<Vec<_>>(),
        "violations": violations,
    });
    Ok((total == 0, format!("{} triples, {total} violations, worst {:.1e}", per.len(), worst.iter().fold(0.0f64, |a, b| a.max(*b))), details))
}

fn policies_for(gen: &GeneratorSet) -> CliResult<Vec<NamedPolicy>> {
    let mut v: Vec<NamedPolicy> =
        (0..gen.len()).map(|i| NamedPolicy { label: format!("constant:{i}"), policy: Policy::Constant(i) }).collect();
    if gen.len() > 1 {
        v.push(NamedPolicy { label: "cyclic".into(), policy: Policy::Cyclic((0..gen.len()).collect()) });
        v.push(NamedPolicy { label: "greedy".into(), policy: Policy::greedy(gen)? });
    }
    Ok(v)
}

fn exp_gens() -> CliResult<Vec<GeneratorSet>> {
    Ok(vec![
        GeneratorSet::new(
            "uniform{-1,1} & {-2,1}",
            vec![Measure::uniform_on(&[-1.0, 1.0])?, Measure::uniform_on(&[-2.0, 1.0])?],
        )?,
        GeneratorSet::new("{-1:0.3, 0:0.4, 2:0.3}", vec![Measure::discrete(vec![(-1.0, 0.3), (0.0, 0.4), (2.0, 0.3)])?])?,
    ])
}

/// Per replication, `max_{k ≤ n} Σ_{i ≤ k} (X_i − μ)` under `policy`.
fn centered_max(gen: &GeneratorSet, policy: &Policy, n: usize, mu: f64, reps: usize, m: u64, case: u64) -> CliResult<Vec<f64>> {
    let ones = ScaleSequence::Ones;
    let sampler = Sampler::new(gen, policy, &ones, 1.0, StatMode::Positive, n)?;
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut stream = Stream::new(m, (case << 32) | rep, 0);
            let mut best = f64::NEG_INFINITY;
            sampler.run(n, &mut stream, |k, _, _, sum, _| best = best.max(sum - k as f64 * mu));
            best
        })
        .collect())
}

fn check_exp_inequality(c: &ExpIneqCheck, m: u64) -> CliResult<Verdict3> {
    let ecfg = ExpectationConfig::default();
    let mut rows = Vec::new();
    let mut worst_ratio = 0.0f64;
    let mut violations = 0usize;
    for (gi, gen) in exp_gens()?.iter().enumerate() {
        let mu = gen.upper_expectation(&TestFunction::identity(), &ecfg)?;
        let sbar = gen.upper_expectation(&TestFunction::power(2), &ecfg)?.sqrt();
        let policies = policies_for(gen)?;
        for (ni, &n) in c.ns.iter().enumerate() {
            let case = (gi * 16 + ni) as u64;
            let samples: Vec<Vec<f64>> = policies
                .iter()
                .map(|p| centered_max(gen, &p.policy, n as usize, mu, c.replications, m, case))
                .collect::<CliResult<_>>()?;
            for j in 1..=c.x_points {
                let x = j as f64 * c.x_step_sd * sbar * (n as f64).sqrt();
                let ys: Vec<f64> = c.y_divisors.iter().map(|d| x / d).collect();
                let (rhs, inputs) = best_iid_rhs(gen, n, x, &ys, &c.deltas, &c.ps)?;
                let mut worst_cp = 0.0f64;
                let mut worst_freq = 0.0f64;
                let mut worst_policy = String::new();
                for (p, s) in policies.iter().zip(&samples) {
                    let hits = s.iter().filter(|&&v| v >= x).count() as u64;
                    let cp = clopper_pearson_upper(hits, c.replications as u64, c.confidence)?;
                    if cp > worst_cp {
                        worst_cp = cp;
                        worst_policy = p.label.clone();
                    }
                    worst_freq = worst_freq.max(hits as f64 / c.replications as f64);
                }
                if worst_cp > rhs {
                    violations += 1;
                }
                worst_ratio = worst_ratio.max(worst_cp / rhs);
                rows.push(json!({
                    "generators": gen.label, "n": n, "x": x, "rhs": rhs, "y": inputs.y, "p": inputs.p, "delta": inputs.delta,
                    "max_frequency": worst_freq, "max_cp_upper": worst_cp, "policy": worst_policy,
                }));
            }
        }
    }
    Ok((
        violations == 0,
        format!("{} grid points, {violations} violations, max CP bound / rhs = {worst_ratio:.3e}", rows.len()),
        json!({ "points": rows, "violations": violations, "worst_ratio": worst_ratio }),
    ))
}

/// `P(|X| ≥ x) = 1 ∧ x^{−α}` with both signs equally likely.
fn symmetric_power_tail(alpha: f64) -> CliResult<GeneratorSet> {
    Ok(GeneratorSet::singleton(Measure::pareto(alpha, 1.0, Sign::Symmetric)?))
}

/// `Σ_{n ≤ N} F(δ a_n)/a_n^p` with `F(c) = C_V[(|X| ∧ c)^p]` in closed form
/// for the tail `1 ∧ x^{−α}`, reported at the checkpoints.
fn truncated_closed_form(alpha: f64, p: f64, delta: f64, cps: &[u64]) -> Vec<f64> {
    let f = |c: f64| {
        if c <= 1.0 {
            c.powf(p)
        } else if (p - alpha).abs() < 1e-12 {
            1.0 + p * c.ln()
        } else {
            1.0 + p * (c.powf(p - alpha) - 1.0) / (p - alpha)
        }
    };
    partial_sums(cps, |n| {
        let a = normalizer_real(n as f64);
        f(delta * a) / a.powf(p)
    })
}

/// `Σ_{n ≤ N} C_V[((|X| − a_n)^+)^r] / a_n^r = Σ r a_n^{−α}/(α − r)` for the
/// same tail, valid since `a_n ≥ 1`.
fn excess_closed_form(alpha: f64, r: f64, cps: &[u64]) -> Vec<f64> {
    partial_sums(cps, |n| r * normalizer_real(n as f64).powf(-alpha) / (alpha - r))
}

fn partial_sums(cps: &[u64], term: impl Fn(u64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(cps.len());
    let mut acc = 0.0;
    let mut next = 0;
    for n in 1..=*cps.last().unwrap() {
        acc += term(n);
        if cps[next] == n {
            out.push(acc);
            next += 1;
        }
    }
    out
}

/// `∫_16^N r a_y^{−α}/(α − r) dy` by Simpson's rule in `ln y`.
fn excess_integral_closed_form(alpha: f64, r: f64, n_max: u64) -> f64 {
    let (lo, hi) = (16f64.ln(), (n_max as f64).ln());
    let k = 20_000;
    let h = (hi - lo) / k as f64;
    let f = |u: f64| {
        let y = u.exp();
        y * r * normalizer_real(y).powf(-alpha) / (alpha - r)
    };
    let inner: f64 = (1..k).map(|i| f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(lo) + f(hi) + inner) * h / 3.0
}

fn curve_json(c: &SeriesCurve, oracle: &[f64]) -> Value {
    json!({
        "label": c.label,
        "checkpoints": c.points.iter().map(|p| p.n).collect::<Vec<_>>(),
        "partial_sums": c.points.iter().map(|p| p.partial_sum).collect::<Vec<_>>(),
        "oracle": oracle,
        "increments": c.increments,
        "total": c.total,
    })
}

fn check_series(c: &SeriesCheck) -> CliResult<Verdict3> {
    let mut cps: Vec<u64> = (0..=c.decades)
        .rev()
        .map(|k| ((c.n_max as f64 / 10f64.powi(k as i32)).round() as u64).max(1))
        .collect();
    cps.dedup();
    let cfg = ChoquetConfig::default();
    let g3 = symmetric_power_tail(3.0)?;
    let g2 = symmetric_power_tail(2.0)?;
    let trunc3 = series_truncated_moment(&g3, c.p, c.delta, c.n_max, &cps)?;
    let excess3 = series_excess_moment(&g3, c.r, c.n_max, &cps, &cfg)?;
    let trunc2 = series_truncated_moment(&g2, c.p, c.delta, c.n_max, &cps)?;

    let last_fraction = |s: &SeriesCurve| s.increments.last().copied().unwrap_or(0.0) / s.total.abs();
    let cauchy = |s: &SeriesCurve| s.total.is_finite() && last_fraction(s) < c.cauchy_fraction;
    let first_half = cauchy(&trunc3) && cauchy(&excess3);
    let nondecreasing = trunc2.increments_nondecreasing_last(c.nondecreasing_last);
    let second_half = !cauchy(&trunc2) && nondecreasing;

    let o3 = truncated_closed_form(3.0, c.p, c.delta, &cps);
    let o2 = truncated_closed_form(2.0, c.p, c.delta, &cps);
    let oe = excess_closed_form(3.0, c.r, &cps);
    let integral = excess_integral_closed_form(3.0, c.r, c.n_max);
    let got_integral = excess3.integral_form.map_or(f64::NAN, |i| i.value);
    let mut worst_oracle = rel_err(got_integral, integral);
    for (curve, oracle) in [(&trunc3, &o3), (&trunc2, &o2), (&excess3, &oe)] {
        for (p, o) in curve.points.iter().zip(oracle) {
            worst_oracle = worst_oracle.max(rel_err(p.partial_sum, *o));
        }
    }
    let oracle_ok = worst_oracle <= c.oracle_rel_tol;
    let passed = first_half && second_half && oracle_ok;
    let summary = format!(
        "x^-3 last-decade fractions {:.2e} / {:.2e} (cauchy: {first_half}); x^-2 fraction {:.2e}, last {} increments non-decreasing: {nondecreasing}; oracle worst {worst_oracle:.1e}",
        last_fraction(&trunc3),
        last_fraction(&excess3),
        last_fraction(&trunc2),
        c.nondecreasing_last,
    );
    let details = json!({
        "first_half": first_half,
        "second_half": second_half,
        "second_half_nondecreasing": nondecreasing,
        "oracle_ok": oracle_ok,
        "worst_oracle_rel_err": worst_oracle,
        "truncated_tail3": curve_json(&trunc3, &o3),
        "excess_tail3": curve_json(&excess3, &oe),
        "truncated_tail2": curve_json(&trunc2, &o2),
        "excess_integral_form": { "value": got_integral, "oracle": integral },
    });
    Ok((passed, summary, details))
}

fn check_probe(c: &ProbeCheck, m: u64) -> CliResult<Verdict3> {
    let cfg = |seed| ProbeConfig {
        r: 1.0,
        mode: StatMode::Absolute,
        k_min: c.k_min,
        k_max: c.k_max,
        replications: c.replications,
        seed,
        plateau_tol: c.plateau_tol,
        growth_tol: c.growth_tol,
    };
    let normal = GeneratorSet::singleton(Measure::normal(0.0, 1.0)?);
    let heavy = symmetric_power_tail(c.pareto_alpha)?;
    let a = plateau_divergence_probe(&normal, &Policy::Constant(0), &cfg(m))?;
    let b = plateau_divergence_probe(&heavy, &Policy::Constant(0), &cfg(m.wrapping_add(1)))?;
    let passed = a.verdict == Verdict::Plateau && b.verdict == Verdict::Growing;
    let ends = |r: &sublin::paths::ProbeReport| (r.curve[0].mean, r.curve[r.curve.len() - 1].mean);
    let (a0, a1) = ends(&a);
    let (b0, b1) = ends(&b);
    Ok((
        passed,
        format!("normal {:?} ({a0:.4} -> {a1:.4}), pareto {} {:?} ({b0:.4} -> {b1:.4})", a.verdict, c.pareto_alpha, b.verdict),
        json!({ "normal": a, "pareto": b }),
    ))
}

fn check_bracket(c: &BracketCheck, m: u64) -> CliResult<Verdict3> {
    let gen = exp_gens()?.remove(0);
    let ecfg = ExpectationConfig::default();
    let upper_mean = gen.upper_expectation(&TestFunction::identity(), &ecfg)?;
    let cfg = ChoquetConfig::default();
    let lower = moment_lower_bound(&gen, c.r, &cfg)?.positive_part;
    let cv_abs = gen.choquet_abs_transform(&AbsTransform::Power(c.r), &cfg)?.value;
    let mc = mc_choquet_max_moment(
        &gen,
        &policies_for(&gen)?,
        &MaxStatConfig {
            n: c.n,
            r: c.r,
            mode: StatMode::Positive,
            scale: ScaleSequence::Ones,
            seed: m,
            replications: c.replications,
        },
    )?;
    let lo = lower - c.se_multiple * mc.envelope_se;
    let hi = c.multiple * cv_abs;
    let premise = upper_mean <= 1e-12;
    let passed = premise && lo <= mc.envelope && mc.envelope <= hi;
    Ok((
        passed,
        format!(
            "envelope {:.5} ± {:.5} in [{lo:.5}, {hi:.1}]; ratio to C_V[|X|^r] = {:.4}",
            mc.envelope,
            mc.envelope_se,
            mc.envelope / cv_abs
        ),
        json!({
            "upper_mean": upper_mean, "lower_bound": lower, "cv_abs_r": cv_abs, "calibrated_ratio": mc.envelope / cv_abs,
            "multiple": c.multiple, "estimate": mc,
        }),
    ))
}

fn lil(coeffs: &Coefficients, n: usize, n0: usize, seeds: usize, m: u64) -> CliResult<LilReport> {
    let normal = GeneratorSet::singleton(Measure::normal(0.0, 1.0)?);
    let cfg = LilConfig {
        n,
        n0: Some(n0),
        seeds,
        master_seed: m,
        cut_eps: 1e-6,
        cut_x: 1.0,
        convention: Boundary::OneSided,
        bins: 20,
    };
    Ok(lil_estimate(coeffs, &normal, &Policy::Constant(0), &cfg)?)
}

fn check_ma_residual(c: &MaResidualCheck, m: u64) -> CliResult<Verdict3> {
    let coeffs = Coefficients::FiniteWindow { values: c.window.clone() };
    let rep = lil(&coeffs, c.n, c.n0, c.seeds, m)?;
    let residuals: Vec<f64> = rep.per_seed.iter().map(|s| s.residual).collect();
    Ok((
        rep.median_residual < c.threshold,
        format!("median residual {:.5} over {} seeds (threshold {})", rep.median_residual, c.seeds, c.threshold),
        json!({ "median": rep.median_residual, "per_seed": residuals, "cutoff": rep.cutoff }),
    ))
}

fn check_ma_lil(c: &MaLilCheck, m: u64) -> CliResult<Verdict3> {
    let id = lil(&Coefficients::identity(), c.n, c.n0, c.seeds, m)?;
    let geo_coeffs = Coefficients::Geometric { rho: c.rho, scale: 1.0 };
    let geo = lil(&geo_coeffs, c.n, c.n0, c.seeds, m)?;
    let in_band = |r: &LilReport| r.median >= c.band[0] * r.target && r.median <= c.band[1] * r.target;
    let ratio = geo.median / id.median;
    let beta = geo_coeffs.beta_sum().abs();
    let ratio_ok = (ratio / beta - 1.0).abs() <= c.ratio_tol;
    let passed = in_band(&id) && in_band(&geo) && ratio_ok;
    let per = |r: &LilReport| r.per_seed.iter().map(|s| s.max_over_window).collect::<Vec<_>>();
    Ok((
        passed,
        format!(
            "identity {:.4} (target {:.1}), geometric {:.4} (target {:.1}), ratio {ratio:.4} vs {beta}",
            id.median, id.target, geo.median, geo.target
        ),
        json!({
            "identity": { "median": id.median, "target": id.target, "per_seed": per(&id), "warnings": id.warnings },
            "geometric": { "median": geo.median, "target": geo.target, "per_seed": per(&geo), "cutoff": geo.cutoff },
            "ratio": ratio,
        }),
    ))
}

fn check_determinism(suite: &SuiteConfig, seed: u64) -> CliResult<Verdict3> {
    let small = suite.shrunk(suite.determinism.shrink);
    let mut runs: Vec<Vec<Value>> = Vec::new();
    for &t in &suite.determinism.threads {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build()?;
        let details = pool.install(|| {
            suite
                .determinism
                .checks
                .iter()
                .filter(|&&id| id != 10)
                .map(|&id| run_check(id, &small, seed).map(|o| o.details))
                .collect::<CliResult<Vec<_>>>()
        })?;
        runs.push(details);
    }
    let ids: Vec<u32> = suite.determinism.checks.iter().copied().filter(|&id| id != 10).collect();
    let equal: Vec<bool> = (0..ids.len()).map(|i| runs.iter().all(|r| r[i] == runs[0][i])).collect();
    let passed = equal.iter().all(|&e| e);
    Ok((
        passed,
        format!("checks {ids:?} at threads {:?}: {} of {} bit-identical", suite.determinism.threads, equal.iter().filter(|&&e| e).count(), ids.len()),
        json!({ "checks": ids, "identical": equal }),
    ))
}
