//! Sequences of independent copies in the sub-linear sense.
//!
//! Independence of `Y` from `X` means `Ê[φ(X, Y)] = Ê[Ê[φ(x, Y)]|_{x=X}]`.
//! Applied backwards along a path, this is a dynamic programme in which an
//! adversary picks a generator at every step after seeing the past, so the
//! upper expectation of a path functional is a supremum over adapted
//! selections. Small discrete instances are solved exactly; larger ones are
//! explored by Monte Carlo under explicit selection policies, which yields
//! one-sided (lower) estimates of the envelope.

use std::collections::HashMap;
use std::hash::Hash;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::GeneratorSet;
use crate::functionals::{normalizer, normalizer_table};
use crate::rng::Stream;
use crate::stats::{mean, std_error, Z_975};

/// A deterministic finite-state description of `φ(X_1, …, X_n)`.
pub trait PathFunctional: Sync {
    type State: Clone + Eq + Hash + Send + Sync;

    fn initial(&self) -> Self::State;

    /// Transition on the `k`-th value (`k` starts at 1).
    fn step(&self, state: &Self::State, k: usize, x: f64) -> Self::State;

    fn payoff(&self, state: &Self::State) -> f64;

    fn label(&self) -> String;
}

/// Which partial-sum magnitude enters the maximum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatMode {
    /// `S_n⁺`
    Positive,
    /// `|S_n|`
    Absolute,
}

impl StatMode {
    fn apply(self, s: f64) -> f64 {
        match self {
            StatMode::Positive => s.max(0.0),
            StatMode::Absolute => s.abs(),
        }
    }
}

/// `max(m, (mode(S_k)/a_k)^r)`; shared by the DP functional and the sampler
/// so that both produce bit-identical states.
#[inline]
pub fn max_stat_update(m: f64, s: f64, a_k: f64, r: f64, mode: StatMode) -> f64 {
    let v = mode.apply(s) / a_k;
    let v = if r == 1.0 { v } else { v.powf(r) };
    m.max(v)
}

/// `S_n`
#[derive(Clone, Copy, Debug, Default)]
pub struct PartialSum;

impl PathFunctional for PartialSum {
    type State = u64;

    fn initial(&self) -> u64 {
        0f64.to_bits()
    }

    fn step(&self, s: &u64, _k: usize, x: f64) -> u64 {
        (f64::from_bits(*s) + x).to_bits()
    }

    fn payoff(&self, s: &u64) -> f64 {
        f64::from_bits(*s)
    }

    fn label(&self) -> String {
        "S_n".into()
    }
}

/// `|S_n|`
#[derive(Clone, Copy, Debug, Default)]
pub struct AbsPartialSum;

impl PathFunctional for AbsPartialSum {
    type State = u64;

    fn initial(&self) -> u64 {
        0f64.to_bits()
    }

    fn step(&self, s: &u64, _k: usize, x: f64) -> u64 {
        (f64::from_bits(*s) + x).to_bits()
    }

    fn payoff(&self, s: &u64) -> f64 {
        f64::from_bits(*s).abs()
    }

    fn label(&self) -> String {
        "|S_n|".into()
    }
}

/// Running state of the normalised maximum: partial sum and current maximum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MaxState {
    pub sum: u64,
    pub max: u64,
}

/// `max_{k ≤ n} (mode(S_k)/a_k)^r`
#[derive(Clone, Copy, Debug)]
pub struct MaxStat {
    pub r: f64,
    pub mode: StatMode,
}

impl PathFunctional for MaxStat {
    type State = MaxState;

    fn initial(&self) -> MaxState {
        MaxState { sum: 0f64.to_bits(), max: 0f64.to_bits() }
    }

    fn step(&self, st: &MaxState, k: usize, x: f64) -> MaxState {
        let s = f64::from_bits(st.sum) + x;
        let m = max_stat_update(f64::from_bits(st.max), s, normalizer(k as u64), self.r, self.mode);
        MaxState { sum: s.to_bits(), max: m.to_bits() }
    }

    fn payoff(&self, st: &MaxState) -> f64 {
        f64::from_bits(st.max)
    }

    fn label(&self) -> String {
        format!("max_n ({:?}(S_n)/a_n)^{}", self.mode, self.r)
    }
}

/// `φ + ψ` on the product state space.
#[derive(Clone, Copy, Debug)]
pub struct SumOf<F, G>(pub F, pub G);

impl<F: PathFunctional, G: PathFunctional> PathFunctional for SumOf<F, G> {
    type State = (F::State, G::State);

    fn initial(&self) -> Self::State {
        (self.0.initial(), self.1.initial())
    }

    fn step(&self, s: &Self::State, k: usize, x: f64) -> Self::State {
        (self.0.step(&s.0, k, x), self.1.step(&s.1, k, x))
    }

    fn payoff(&self, s: &Self::State) -> f64 {
        self.0.payoff(&s.0) + self.1.payoff(&s.1)
    }

    fn label(&self) -> String {
        format!("{} + {}", self.0.label(), self.1.label())
    }
}

/// Multipliers `α_n` with `|α_n| ≤ 1`, so that the `n`-th summand is `α_n X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "values")]
pub enum ScaleSequence {
    Ones,
    /// `α_1, α_2, …`; must cover every queried index.
    Supplied(Vec<f64>),
    /// Repeats the given block.
    Periodic(Vec<f64>),
}

impl Default for ScaleSequence {
    fn default() -> Self {
        ScaleSequence::Ones
    }
}

impl ScaleSequence {
    pub fn validate(&self, n: usize) -> Result<()> {
        let vals = match self {
            ScaleSequence::Ones => return Ok(()),
            ScaleSequence::Supplied(v) => {
                if v.len() < n {
                    return Err(Error::invalid(format!("scale sequence has {} entries, {n} needed", v.len())));
                }
                v
            }
            ScaleSequence::Periodic(v) => {
                if v.is_empty() {
                    return Err(Error::invalid("periodic scale sequence is empty"));
                }
                v
            }
        };
        if let Some(a) = vals.iter().find(|a| !(a.abs() <= 1.0)) {
            return Err(Error::invalid(format!("scale entry {a} has |alpha| > 1")));
        }
        Ok(())
    }

    /// `α_k`, `k` starting at 1.
    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        match self {
            ScaleSequence::Ones => 1.0,
            ScaleSequence::Supplied(v) => v[k - 1],
            ScaleSequence::Periodic(v) => v[(k - 1) % v.len()],
        }
    }
}

/// `φ(α_1 X_1, …, α_n X_n)`
#[derive(Clone, Debug)]
pub struct Scaled<F> {
    pub inner: F,
    pub scale: ScaleSequence,
}

impl<F: PathFunctional> PathFunctional for Scaled<F> {
    type State = F::State;

    fn initial(&self) -> F::State {
        self.inner.initial()
    }

    fn step(&self, s: &F::State, k: usize, x: f64) -> F::State {
        self.inner.step(s, k, self.scale.at(k) * x)
    }

    fn payoff(&self, s: &F::State) -> f64 {
        self.inner.payoff(s)
    }

    fn label(&self) -> String {
        self.inner.label()
    }
}

/// Default cap on the number of reachable states in the exact programme.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Optimal adapted selections found by the backward recursion.
#[derive(Clone, Debug)]
pub struct DpPolicyTable<S> {
    index: Vec<HashMap<S, usize>>,
    choice: Vec<Vec<usize>>,
}

impl<S: Eq + Hash> DpPolicyTable<S> {
    /// Generator chosen for the `k`-th draw (`k` from 1) in state `s`.
    pub fn choose(&self, k: usize, s: &S) -> Option<usize> {
        let i = *self.index.get(k - 1)?.get(s)?;
        Some(self.choice[k - 1][i])
    }
}

#[derive(Clone, Debug)]
pub struct DpResult<S> {
    pub value: f64,
    /// Reachable states per level, level 0 being the initial state.
    pub states_per_level: Vec<usize>,
    pub policy: DpPolicyTable<S>,
}

fn discrete_laws(gen: &GeneratorSet) -> Result<Vec<Vec<(f64, f64)>>> {
    gen.measures()
        .iter()
        .enumerate()
        .map(|(i, m)| m.atoms().map(|a| a.to_vec()).ok_or(Error::NotDiscrete { generator: i }))
        .collect()
}

/// The exact upper expectation `Ê[φ(X_1, …, X_n)]` of i.i.d. copies.
pub fn exact_dp_upper<F: PathFunctional>(
    gen: &GeneratorSet,
    f: &F,
    n: usize,
    cap: usize,
) -> Result<DpResult<F::State>> {
    let laws = discrete_laws(gen)?;
    let mut support: Vec<f64> = laws.iter().flatten().map(|a| a.0).collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    let law_idx: Vec<Vec<(usize, f64)>> = laws
        .iter()
        .map(|l| l.iter().map(|&(x, p)| (support.binary_search_by(|s| s.total_cmp(&x)).unwrap(), p)).collect())
        .collect();

    // Forward sweep over reachable states.
    let mut levels: Vec<Vec<F::State>> = vec![vec![f.initial()]];
    let mut index: Vec<HashMap<F::State, usize>> = vec![HashMap::from([(f.initial(), 0)])];
    let mut trans: Vec<Vec<Vec<usize>>> = Vec::with_capacity(n);
    let mut total = 1usize;
    for k in 1..=n {
        let mut next: Vec<F::State> = Vec::new();
        let mut next_idx: HashMap<F::State, usize> = HashMap::new();
        let mut t = Vec::with_capacity(levels[k - 1].len());
        for s in &levels[k - 1] {
            let row: Vec<usize> = support
                .iter()
                .map(|&x| {
                    let ns = f.step(s, k, x);
                    *next_idx.entry(ns.clone()).or_insert_with(|| {
                        next.push(ns);
                        next.len() - 1
                    })
                })
                .collect();
            t.push(row);
        }
        total += next.len();
        if total > cap {
            return Err(Error::StateExplosion { cap });
        }
        trans.push(t);
        levels.push(next);
        index.push(next_idx);
    }

    // Backward recursion.
    let mut values: Vec<f64> = levels[n].iter().map(|s| f.payoff(s)).collect();
    let mut choice: Vec<Vec<usize>> = vec![Vec::new(); n];
    for k in (0..n).rev() {
        let mut cur = Vec::with_capacity(levels[k].len());
        let mut ch = Vec::with_capacity(levels[k].len());
        for row in &trans[k] {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (theta, law) in law_idx.iter().enumerate() {
                let v: f64 = law.iter().map(|&(j, p)| p * values[row[j]]).sum();
                if v > best {
                    best = v;
                    arg = theta;
                }
            }
            cur.push(best);
            ch.push(arg);
        }
        values = cur;
        choice[k] = ch;
    }
    index.truncate(n);
    Ok(DpResult {
        value: values[0],
        states_per_level: levels.iter().map(Vec::len).collect(),
        policy: DpPolicyTable { index, choice },
    })
}

/// Size limits of the brute-force oracle.
pub const BRUTE_MAX_N: usize = 8;
pub const BRUTE_MAX_SUPPORT: usize = 4;
pub const BRUTE_MAX_GEN: usize = 3;

/// Upper expectation by explicit recursion over the tree of path prefixes.
///
/// No states are merged: the payoff is recomputed from the full path at
/// every leaf, and each node takes the best generator for its own subtree,
/// which is the supremum over adapted selection maps.
pub fn brute_force_upper<F: PathFunctional>(gen: &GeneratorSet, f: &F, n: usize) -> Result<f64> {
    let laws = discrete_laws(gen)?;
    let mut support: Vec<f64> = laws.iter().flatten().map(|a| a.0).collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    if n > BRUTE_MAX_N || support.len() > BRUTE_MAX_SUPPORT || laws.len() > BRUTE_MAX_GEN {
        return Err(Error::SizeGuard(format!(
            "brute force limited to n <= {BRUTE_MAX_N}, support <= {BRUTE_MAX_SUPPORT}, generators <= {BRUTE_MAX_GEN}; got n={n}, support={}, generators={}",
            support.len(),
            laws.len()
        )));
    }
    fn node<F: PathFunctional>(laws: &[Vec<(f64, f64)>], f: &F, n: usize, path: &mut Vec<f64>) -> f64 {
        if path.len() == n {
            let mut s = f.initial();
            for (i, &x) in path.iter().enumerate() {
                s = f.step(&s, i + 1, x);
            }
            return f.payoff(&s);
        }
        let mut best = f64::NEG_INFINITY;
        for law in laws {
            let mut v = 0.0;
            for &(x, p) in law {
                path.push(x);
                v += p * node(laws, f, n, path);
                path.pop();
            }
            best = best.max(v);
        }
        best
    }
    Ok(node(&laws, f, n, &mut Vec::with_capacity(n)))
}

/// Classical expectation when step `k` (from 1) uses generator `select(k)`.
pub fn scheduled_value<F: PathFunctional>(
    gen: &GeneratorSet,
    f: &F,
    n: usize,
    select: &dyn Fn(usize) -> usize,
) -> Result<f64> {
    let laws = discrete_laws(gen)?;
    fn node<F: PathFunctional>(
        laws: &[Vec<(f64, f64)>],
        f: &F,
        n: usize,
        k: usize,
        s: &F::State,
        select: &dyn Fn(usize) -> usize,
    ) -> f64 {
        if k > n {
            return f.payoff(s);
        }
        laws[select(k)].iter().map(|&(x, p)| p * node(laws, f, n, k + 1, &f.step(s, k, x), select)).sum()
    }
    for k in 1..=n {
        if select(k) >= laws.len() {
            return Err(Error::invalid(format!("schedule selects generator {} of {}", select(k), laws.len())));
        }
    }
    Ok(node(&laws, f, n, 1, &f.initial(), select))
}

/// Quantised view of the sampler state used by feedback policies: the
/// partial sum in buckets of `0.01 a_k` and the running maximum in buckets of
/// `0.01`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeedbackKey {
    pub k: usize,
    pub sum_bucket: i64,
    pub max_bucket: i64,
}

impl FeedbackKey {
    pub fn new(k: usize, sum: f64, max: f64, a_k: f64) -> Self {
        FeedbackKey { k, sum_bucket: (sum / (0.01 * a_k)).floor() as i64, max_bucket: (max / 0.01).floor() as i64 }
    }
}

pub type FeedbackFn = Arc<dyn Fn(&FeedbackKey) -> usize + Send + Sync>;

/// Adapted rule choosing the generator for the next draw.
#[derive(Clone)]
pub enum Policy {
    Constant(usize),
    Cyclic(Vec<usize>),
    StateFeedback(FeedbackFn),
    DpDerived(Arc<DpPolicyTable<MaxState>>),
}

impl std::fmt::Debug for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Policy::Constant(i) => write!(f, "Constant({i})"),
            Policy::Cyclic(v) => write!(f, "Cyclic({v:?})"),
            Policy::StateFeedback(_) => write!(f, "StateFeedback"),
            Policy::DpDerived(_) => write!(f, "DpDerived"),
        }
    }
}

impl Policy {
    /// Feedback rule: the generator with the largest mean while the sum is
    /// non-negative, otherwise the one with the largest second moment.
    pub fn greedy(gen: &GeneratorSet) -> Result<Self> {
        let laws = gen.measures();
        let moment = |j: i32| -> Result<usize> {
            let mut best = (f64::NEG_INFINITY, 0);
            for (i, m) in laws.iter().enumerate() {
                let v = m.atoms().ok_or(Error::NotDiscrete { generator: i })?.iter().map(|&(x, p)| p * x.powi(j)).sum::<f64>();
                if v > best.0 {
                    best = (v, i);
                }
            }
            Ok(best.1)
        };
        let (up, spread) = (moment(1)?, moment(2)?);
        Ok(Policy::StateFeedback(Arc::new(move |key: &FeedbackKey| if key.sum_bucket >= 0 { up } else { spread })))
    }

    fn select(&self, k: usize, sum: f64, max: f64, a_k: f64) -> usize {
        match self {
            Policy::Constant(i) => *i,
            Policy::Cyclic(v) => v[(k - 1) % v.len()],
            Policy::StateFeedback(f) => f(&FeedbackKey::new(k, sum, max, a_k)),
            Policy::DpDerived(t) => t.choose(k, &MaxState { sum: sum.to_bits(), max: max.to_bits() }).unwrap_or(0),
        }
    }

    fn validate(&self, gen: &GeneratorSet) -> Result<()> {
        let bad = match self {
            Policy::Constant(i) => *i >= gen.len(),
            Policy::Cyclic(v) => v.is_empty() || v.iter().any(|&i| i >= gen.len()),
            _ => false,
        };
        if bad {
            return Err(Error::invalid(format!("policy {self:?} selects outside {} generators", gen.len())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NamedPolicy {
    pub label: String,
    pub policy: Policy,
}

/// Draws adapted paths: one uniform per step, inverse-transformed through
/// the selected generator's quantile function.
pub struct Sampler<'a> {
    gen: &'a GeneratorSet,
    policy: &'a Policy,
    scale: &'a ScaleSequence,
    r: f64,
    mode: StatMode,
    a: Arc<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        gen: &'a GeneratorSet,
        policy: &'a Policy,
        scale: &'a ScaleSequence,
        r: f64,
        mode: StatMode,
        n: usize,
    ) -> Result<Self> {
        Self::with_table(gen, policy, scale, r, mode, n, Arc::new(normalizer_table(n)))
    }

    /// Reuse a precomputed table `a_0..=a_n`.
    pub fn with_table(
        gen: &'a GeneratorSet,
        policy: &'a Policy,
        scale: &'a ScaleSequence,
        r: f64,
        mode: StatMode,
        n: usize,
        a: Arc<Vec<f64>>,
    ) -> Result<Self> {
        if let Some(i) = gen.measures().iter().position(|m| !m.is_samplable()) {
            return Err(Error::Unsamplable { generator: i });
        }
        if !(r > 0.0) {
            return Err(Error::invalid(format!("statistic exponent must be positive, got {r}")));
        }
        if a.len() <= n {
            return Err(Error::invalid("normaliser table shorter than the path"));
        }
        policy.validate(gen)?;
        scale.validate(n)?;
        Ok(Sampler { gen, policy, scale, r, mode, a })
    }

    /// Run one path of length `n`; `visit(k, x, theta, sum, max)` is called
    /// after every step.
    pub fn run(&self, n: usize, stream: &mut Stream, mut visit: impl FnMut(usize, f64, usize, f64, f64)) {
        let laws = self.gen.measures();
        let mut sum = 0.0f64;
        let mut max = 0.0f64;
        for k in 1..=n {
            let a_k = self.a[k];
            let theta = self.policy.select(k, sum, max, a_k).min(laws.len() - 1);
            let u = stream.uniform();
            let x = self.scale.at(k) * laws[theta].sample_from_uniform(u);
            sum += x;
            max = max_stat_update(max, sum, a_k, self.r, self.mode);
            visit(k, x, theta, sum, max);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub values: Vec<f64>,
    pub selections: Vec<usize>,
}

pub fn sample_path(
    gen: &GeneratorSet,
    policy: &Policy,
    scale: &ScaleSequence,
    n: usize,
    stream: &mut Stream,
) -> Result<SampledPath> {
    let sampler = Sampler::new(gen, policy, scale, 1.0, StatMode::Positive, n)?;
    let mut out = SampledPath { values: Vec::with_capacity(n), selections: Vec::with_capacity(n) };
    sampler.run(n, stream, |_, x, theta, _, _| {
        out.values.push(x);
        out.selections.push(theta);
    });
    Ok(out)
}

/// `max_{1 ≤ n ≤ N} (mode(S_n)/a_n)^r`
pub fn max_stat(path: &[f64], r: f64, mode: StatMode) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::invalid("max statistic of an empty path"));
    }
    let mut s = 0.0;
    let mut m = 0.0;
    for (i, x) in path.iter().enumerate() {
        s += x;
        m = max_stat_update(m, s, normalizer(i as u64 + 1), r, mode);
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxStatConfig {
    pub n: usize,
    pub r: f64,
    pub mode: StatMode,
    #[serde(default)]
    pub scale: ScaleSequence,
    pub seed: u64,
    pub replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEstimate {
    pub policy: String,
    pub mean: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub t: f64,
    pub survival: f64,
}

/// Monte Carlo estimate of the max-moment under each policy. The envelope
/// (largest policy mean) is a lower estimate of the sub-linear moment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub per_policy: Vec<PolicyEstimate>,
    pub envelope: f64,
    pub envelope_se: f64,
    pub envelope_policy: String,
    /// Empirical survival of the statistic under the envelope policy.
    pub survival: Vec<SurvivalPoint>,
}

/// Per-replication statistic values, in replication order.
pub fn replicate_max_stat(gen: &GeneratorSet, policy: &Policy, cfg: &MaxStatConfig) -> Result<Vec<f64>> {
    let a = Arc::new(normalizer_table(cfg.n));
    let sampler = Sampler::with_table(gen, policy, &cfg.scale, cfg.r, cfg.mode, cfg.n, a)?;
    Ok((0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut stream = Stream::new(cfg.seed, rep as u64, 0);
            let mut last = 0.0;
            sampler.run(cfg.n, &mut stream, |_, _, _, _, m| last = m);
            last
        })
        .collect())
}

pub fn mc_choquet_max_moment(gen: &GeneratorSet, policies: &[NamedPolicy], cfg: &MaxStatConfig) -> Result<McEstimate> {
    if cfg.replications < 2 || cfg.n == 0 || policies.is_empty() {
        return Err(Error::invalid("need at least 2 replications, n >= 1 and one policy"));
    }
    let mut per_policy = Vec::with_capacity(policies.len());
    let mut best: Option<(usize, Vec<f64>)> = None;
    for (i, p) in policies.iter().enumerate() {
        let vals = replicate_max_stat(gen, &p.policy, cfg)?;
        let m = mean(&vals);
        let se = std_error(&vals);
        per_policy.push(PolicyEstimate {
            policy: p.label.clone(),
            mean: m,
            se,
            ci_lo: m - Z_975 * se,
            ci_hi: m + Z_975 * se,
            reps: cfg.replications,
            seed: cfg.seed,
        });
        if best.as_ref().is_none_or(|(j, _)| m > per_policy[*j].mean) {
            best = Some((i, vals));
        }
    }
    let (bi, mut vals) = best.unwrap();
    vals.sort_by(f64::total_cmp);
    let len = vals.len();
    let survival = (0..=100)
        .map(|q| {
            let t = vals[((q * (len - 1)) as f64 / 100.0).round() as usize];
            let ge = len - vals.partition_point(|&v| v < t);
            SurvivalPoint { t, survival: ge as f64 / len as f64 }
        })
        .collect();
    Ok(McEstimate {
        envelope: per_policy[bi].mean,
        envelope_se: per_policy[bi].se,
        envelope_policy: per_policy[bi].policy.clone(),
        per_policy,
        survival,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Plateau,
    Growing,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub r: f64,
    pub mode: StatMode,
    /// Grid `N = 2^k_min, …, 2^k_max`.
    pub k_min: u32,
    pub k_max: u32,
    pub replications: usize,
    pub seed: u64,
    /// Plateau when the last two grid means differ by less than this fraction.
    pub plateau_tol: f64,
    /// Growing when the last mean exceeds the first by at least this fraction.
    pub growth_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            r: 1.0,
            mode: StatMode::Absolute,
            k_min: 10,
            k_max: 20,
            replications: 200,
            seed: 0,
            plateau_tol: 0.05,
            growth_tol: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub n: u64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub curve: Vec<ProbePoint>,
    pub verdict: Verdict,
    /// Per-replication statistic at each grid point, replication-major.
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

/// Follow `E[max_{n ≤ N} (mode(S_n)/a_n)^r]` along a dyadic grid of `N`,
/// reusing one path of the largest length per replication.
pub fn plateau_divergence_probe(gen: &GeneratorSet, policy: &Policy, cfg: &ProbeConfig) -> Result<ProbeReport> {
    if cfg.k_min > cfg.k_max || cfg.k_max > 30 || cfg.replications < 2 {
        return Err(Error::invalid("probe grid needs k_min <= k_max <= 30 and at least 2 replications"));
    }
    let n = 1usize << cfg.k_max;
    let a = Arc::new(normalizer_table(n));
    let scale = ScaleSequence::Ones;
    let sampler = Sampler::with_table(gen, policy, &scale, cfg.r, cfg.mode, n, a)?;
    let samples: Vec<Vec<f64>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut stream = Stream::new(cfg.seed, rep as u64, 0);
            let mut out = Vec::with_capacity((cfg.k_max - cfg.k_min + 1) as usize);
            sampler.run(n, &mut stream, |k, _, _, _, m| {
                if k.is_power_of_two() && k >= (1usize << cfg.k_min) {
                    out.push(m);
                }
            });
            out
        })
        .collect();
    let curve: Vec<ProbePoint> = (cfg.k_min..=cfg.k_max)
        .enumerate()
        .map(|(i, k)| {
            let col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            ProbePoint { n: 1u64 << k, mean: mean(&col), se: std_error(&col) }
        })
        .collect();
    let first = curve[0].mean;
    let last = curve[curve.len() - 1].mean;
    let prev = curve[curve.len().saturating_sub(2)].mean;
    let verdict = if last >= (1.0 + cfg.growth_tol) * first && last > 0.0 {
        Verdict::Growing
    } else if (last - prev).abs() <= cfg.plateau_tol * prev.abs().max(last.abs()) {
        Verdict::Plateau
    } else {
        Verdict::Inconclusive
    };
    Ok(ProbeReport { curve, verdict, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Measure;

    fn pm_dirac() -> GeneratorSet {
        GeneratorSet::new("pm", vec![Measure::dirac(1.0).unwrap(), Measure::dirac(-1.0).unwrap()]).unwrap()
    }

    #[test]
    fn dp_hand_examples() {
        assert_eq!(exact_dp_upper(&pm_dirac(), &PartialSum, 2, DEFAULT_STATE_CAP).unwrap().value, 2.0);
        let g = GeneratorSet::new("u0", vec![Measure::uniform_on(&[-1.0, 1.0]).unwrap(), Measure::dirac(0.0).unwrap()]).unwrap();
        assert_eq!(exact_dp_upper(&g, &AbsPartialSum, 2, DEFAULT_STATE_CAP).unwrap().value, 1.0);
        let u = GeneratorSet::singleton(Measure::uniform_on(&[-1.0, 1.0]).unwrap());
        let f = MaxStat { r: 1.0, mode: StatMode::Positive };
        let v = exact_dp_upper(&u, &f, 2, DEFAULT_STATE_CAP).unwrap().value;
        assert!((v - (0.5f64.sqrt() + 1.0) / 4.0).abs() < 1e-15);
        assert!((v - 0.426_777).abs() < 1e-6);
        assert_eq!(brute_force_upper(&pm_dirac(), &PartialSum, 2).unwrap(), 2.0);
    }

    #[test]
    fn dp_state_cap_and_guards() {
        let g = GeneratorSet::singleton(Measure::uniform_on(&[0.0, 1.0, std::f64::consts::PI]).unwrap());
        assert!(matches!(exact_dp_upper(&g, &MaxStat { r: 1.0, mode: StatMode::Absolute }, 12, 1000), Err(Error::StateExplosion { .. })));
        assert!(matches!(brute_force_upper(&g, &PartialSum, 9), Err(Error::SizeGuard(_))));
    }

    #[test]
    fn max_stat_hand_values() {
        assert!((max_stat(&[1.0], 1.0, StatMode::Positive).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(max_stat(&[-1.0, -2.0], 1.0, StatMode::Positive).unwrap(), 0.0);
        assert!((max_stat(&[1.0, 1.0], 2.0, StatMode::Absolute).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dirac_paths_are_deterministic() {
        let g = GeneratorSet::singleton(Measure::dirac(2.5).unwrap());
        let scale = ScaleSequence::Periodic(vec![1.0, -0.5]);
        let p = sample_path(&g, &Policy::Constant(0), &scale, 4, &mut Stream::new(1, 0, 0)).unwrap();
        assert_eq!(p.values, vec![2.5, -1.25, 2.5, -1.25]);
        assert!(sample_path(&g, &Policy::Constant(1), &scale, 4, &mut Stream::new(1, 0, 0)).is_err());
        assert!(ScaleSequence::Supplied(vec![1.5]).validate(1).is_err());
    }
}
