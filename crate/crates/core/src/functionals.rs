//! The iterated-logarithm normaliser and the moment functionals that govern
//! maxima of normalised partial sums.
//!
//! Logarithms follow the convention `log x = ln max(e, x)`, so `log` and
//! `loglog` are at least 1 everywhere and `a_n = √(2n loglog n)` starts at
//! `a_1 = √2`.

use std::f64::consts::E;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::{
    choquet_integral, default_schedule, AbsTransform, ChoquetConfig, ChoquetResult, ChoquetStatus, ExpectationConfig,
    ExtendedExpectation, GeneratorSet, MonotoneMap,
};
use crate::quadrature::{integrate, integrate_to_infinity, QuadConfig, TailConfig, TailStatus};
use crate::report::ext_real;
use crate::test_function::TestFunction;

/// `ln max(e, x)`
pub fn log_c(x: f64) -> f64 {
    x.max(E).ln()
}

/// `log(log x)` under the same convention; equals 1 for `x ≤ e^e`.
pub fn loglog(x: f64) -> f64 {
    log_c(log_c(x))
}

/// `a_n = √(2n loglog n)`
pub fn normalizer(n: u64) -> f64 {
    normalizer_real(n as f64)
}

/// `a_y` for real `y ≥ 1`.
pub fn normalizer_real(y: f64) -> f64 {
    (2.0 * y * loglog(y)).sqrt()
}

/// `a_0..=a_n` with the unused `a_0` set to NaN.
pub fn normalizer_table(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(f64::NAN);
    t.extend((1..=n).map(|k| normalizer(k as u64)));
    t
}

/// `x ↦ x² / loglog x`
#[derive(Clone, Copy, Debug)]
pub struct VarsigmaMap;

impl MonotoneMap for VarsigmaMap {
    fn apply(&self, x: f64) -> f64 {
        x * x / loglog(x)
    }
}

/// `x ↦ x² log x / loglog x`
#[derive(Clone, Copy, Debug)]
pub struct EtaTwoMap;

impl MonotoneMap for EtaTwoMap {
    fn apply(&self, x: f64) -> f64 {
        x * x * log_c(x) / loglog(x)
    }
}

/// `ς_X = C_V[X² / loglog|X|]`
pub fn varsigma(gen: &GeneratorSet, cfg: &ChoquetConfig) -> Result<ChoquetResult> {
    gen.choquet_abs_transform(&VarsigmaMap, cfg)
}

/// `η_{X,r}`: `ς_X` for `r < 2`, `C_V[X² log|X| / loglog|X|]` at `r = 2` and
/// `C_V[|X|^r]` for `r > 2`.
pub fn eta(gen: &GeneratorSet, r: f64, cfg: &ChoquetConfig) -> Result<ChoquetResult> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("eta needs r > 0, got {r}")));
    }
    if r < 2.0 {
        varsigma(gen, cfg)
    } else if r == 2.0 {
        gen.choquet_abs_transform(&EtaTwoMap, cfg)
    } else {
        gen.choquet_abs_transform(&AbsTransform::Power(r), cfg)
    }
}

/// `σ̄² = Ẽ[X²]`.
///
/// For the non-negative `X²`, `lim_c max_θ E_θ[X² ∧ c] = max_θ E_θ[X²]` by
/// monotone convergence, so the limit is evaluated directly; a divergent
/// generator makes it `+∞`.
pub fn sigma_bar_sq(gen: &GeneratorSet, cfg: &ExpectationConfig) -> Result<ChoquetResult> {
    match gen.upper_expectation(&TestFunction::power(2), cfg) {
        Ok(v) => Ok(ChoquetResult { value: v, abs_err: cfg.rel_tol * v.abs(), status: ChoquetStatus::Converged }),
        Err(Error::DivergentIntegral { .. }) => {
            Ok(ChoquetResult { value: f64::INFINITY, abs_err: f64::INFINITY, status: ChoquetStatus::Diverging })
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub r: f64,
    pub sigma_bar_sq: ChoquetResult,
    pub varsigma: ChoquetResult,
    pub eta: ChoquetResult,
    /// `Ẽ[X]`
    pub mean_upper: ExtendedExpectation,
    /// `−Ẽ[−X]`
    pub mean_lower: ExtendedExpectation,
}

impl FunctionalReport {
    /// For `r ≥ 2`, a finite `η` forces finite `ς` and `σ̄²`.
    pub fn consistent(&self) -> bool {
        self.r < 2.0 || !self.eta.is_finite() || (self.varsigma.is_finite() && self.sigma_bar_sq.is_finite())
    }
}

pub fn functional_report(gen: &GeneratorSet, r: f64, cfg: &ChoquetConfig) -> Result<FunctionalReport> {
    let ecfg = ExpectationConfig { rel_tol: cfg.tol, ..ExpectationConfig::default() };
    let schedule = default_schedule();
    let up = gen.extended_expectation(&TestFunction::identity(), &schedule, 1e-9, &ecfg)?;
    let neg = gen.extended_expectation(&TestFunction::identity().neg(), &schedule, 1e-9, &ecfg)?;
    Ok(FunctionalReport {
        r,
        sigma_bar_sq: sigma_bar_sq(gen, &ecfg)?,
        varsigma: varsigma(gen, cfg)?,
        eta: eta(gen, r, cfg)?,
        mean_upper: up,
        mean_lower: ExtendedExpectation { value: -neg.value, ..neg },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub n: u64,
    #[serde(with = "ext_real")]
    pub term: f64,
    #[serde(with = "ext_real")]
    pub partial_sum: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeriesCurve {
    pub label: String,
    /// Partial sums at the checkpoints.
    pub points: Vec<SeriesPoint>,
    #[serde(with = "ext_real")]
    pub total: f64,
    /// Increments of the partial sum between consecutive checkpoints.
    pub increments: Vec<f64>,
    /// Last increment below `1e-3 · total`.
    pub cauchy: bool,
    /// `∫_16^N a_y^{−r} ∫_{a_y}^∞ r u^{r−1} V(|X| ≥ u) du dy`, excess series only.
    pub integral_form: Option<ChoquetResult>,
}

/// Relative size of the last increment below which a curve counts as Cauchy.
pub const CAUCHY_FRACTION: f64 = 1e-3;

impl SeriesCurve {
    fn build(label: String, points: Vec<SeriesPoint>, integral_form: Option<ChoquetResult>) -> Self {
        let increments: Vec<f64> = points.windows(2).map(|w| w[1].partial_sum - w[0].partial_sum).collect();
        let total = points.last().map_or(0.0, |p| p.partial_sum);
        let cauchy = total.is_finite() && increments.last().is_none_or(|&d| d <= CAUCHY_FRACTION * total.abs());
        SeriesCurve { label, points, total, increments, cauchy, integral_form }
    }

    /// The increments after checkpoint index `from` strictly decrease.
    pub fn increments_shrinking_from(&self, from: usize) -> bool {
        let inc = &self.increments[from.min(self.increments.len())..];
        inc.iter().all(|d| d.is_finite()) && inc.windows(2).all(|w| w[1] < w[0])
    }

    /// The last `count` increments are non-decreasing.
    pub fn increments_nondecreasing_last(&self, count: usize) -> bool {
        let k = self.increments.len();
        let inc = &self.increments[k.saturating_sub(count)..];
        inc.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn csv(&self) -> Result<String> {
        crate::report::csv_string(&self.points)
    }
}

/// Default checkpoints `n = 2^k ≤ N`, plus `N` itself.
pub fn default_checkpoints(n_max: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..64).map(|k| 1u64 << k).take_while(|&n| n <= n_max).collect();
    if v.last() != Some(&n_max) {
        v.push(n_max);
    }
    v
}

fn check_checkpoints(checkpoints: &[u64], n_max: u64) -> Result<()> {
    if n_max == 0 || checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints[0] == 0 {
        return Err(Error::invalid("checkpoints must be positive and strictly increasing"));
    }
    if *checkpoints.last().unwrap() > n_max {
        return Err(Error::invalid("checkpoints exceed the series length"));
    }
    Ok(())
}

fn positive_abs_breakpoints(gen: &GeneratorSet) -> Vec<f64> {
    let mut v: Vec<f64> = gen.breakpoints().into_iter().map(f64::abs).filter(|x| *x > 0.0).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `Σ_{n ≤ N} C_V[(|X| ∧ δa_n)^p] / a_n^p`.
///
/// `C_V[(|X| ∧ c)^p] = ∫_0^c p x^{p−1} V(|X| ≥ x) dx`, accumulated exactly
/// over the consecutive intervals `[δa_{n−1}, δa_n]`.
pub fn series_truncated_moment(
    gen: &GeneratorSet,
    p: f64,
    delta: f64,
    n_max: u64,
    checkpoints: &[u64],
) -> Result<SeriesCurve> {
    if !(p > 2.0) || !(delta > 0.0) {
        return Err(Error::invalid(format!("truncated-moment series needs p > 2 and delta > 0, got p={p}, delta={delta}")));
    }
    check_checkpoints(checkpoints, n_max)?;
    let bps = positive_abs_breakpoints(gen);
    let a = normalizer_table(n_max as usize);
    let quad = QuadConfig { abs_tol: 1e-300, rel_tol: 1e-12, max_intervals: 500 };
    let increments: Vec<f64> = (1..=n_max as usize)
        .into_par_iter()
        .map(|n| {
            let lo = if n == 1 { 0.0 } else { delta * a[n - 1] };
            let hi = delta * a[n];
            let mut pts = vec![lo, hi];
            pts.extend(bps.iter().copied().filter(|&b| b > lo && b < hi));
            integrate(&|x: f64| p * x.powf(p - 1.0) * gen.upper_abs_ge(x), &pts, &quad).value
        })
        .collect();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut moment = 0.0;
    let mut partial = 0.0;
    let mut next = 0;
    for (i, inc) in increments.iter().enumerate() {
        let n = i + 1;
        moment += inc;
        let term = moment / a[n].powf(p);
        partial += term;
        if next < checkpoints.len() && checkpoints[next] == n as u64 {
            out.push(SeriesPoint { n: n as u64, term, partial_sum: partial });
            next += 1;
        }
    }
    Ok(SeriesCurve::build(format!("truncated-moment p={p} delta={delta}"), out, None))
}

/// Terms summed one by one up to this index; beyond it blocks of at most
/// dyadic length are summed as integrals over the continuous index.
pub const EXACT_TERMS: u64 = 4096;

/// `Σ_{n ≤ N} C_V[((|X| − a_n)^+)^r] / a_n^r`, together with its integral
/// form used for the converse direction.
pub fn series_excess_moment(
    gen: &GeneratorSet,
    r: f64,
    n_max: u64,
    checkpoints: &[u64],
    cfg: &ChoquetConfig,
) -> Result<SeriesCurve> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("excess-moment series needs r > 0, got {r}")));
    }
    check_checkpoints(checkpoints, n_max)?;
    let term_at = |y: f64| -> Result<f64> {
        let a = normalizer_real(y);
        let j = gen.choquet_abs_transform(&AbsTransform::ExcessPower { r, shift: a }, cfg)?;
        Ok(if j.status == ChoquetStatus::Diverging { f64::INFINITY } else { j.value / a.powf(r) })
    };
    let integral_form = excess_integral_form(gen, r, n_max, cfg);

    let first = term_at(1.0)?;
    if !first.is_finite() {
        let points = checkpoints
            .iter()
            .map(|&n| SeriesPoint { n, term: f64::INFINITY, partial_sum: f64::INFINITY })
            .collect();
        return Ok(SeriesCurve::build(format!("excess-moment r={r}"), points, Some(integral_form)));
    }

    let exact_end = n_max.min(EXACT_TERMS);
    let exact: Vec<f64> = (1..=exact_end).into_par_iter().map(|n| term_at(n as f64)).collect::<Result<_>>()?;
    // Block sums beyond the exact range, over (2^k, 2^{k+1}] clipped to N
    // and split at checkpoints.
    let mut blocks: Vec<(u64, u64)> = Vec::new();
    let mut lo = exact_end + 1;
    while lo <= n_max {
        let cut = checkpoints.iter().copied().find(|&c| c >= lo).unwrap_or(n_max);
        let hi = (2 * (lo - 1)).min(n_max).min(cut);
        blocks.push((lo, hi));
        lo = hi + 1;
    }
    let block_sums: Vec<f64> = blocks
        .par_iter()
        .map(|&(lo, hi)| {
            let quad = QuadConfig { abs_tol: 1e-300, rel_tol: 1e-9, max_intervals: 200 };
            let failed = std::sync::Mutex::new(None);
            let f = |y: f64| match term_at(y) {
                Ok(v) => v,
                Err(e) => {
                    failed.lock().unwrap().get_or_insert(e);
                    f64::NAN
                }
            };
            let v = integrate(&f, &[lo as f64 - 0.5, hi as f64 + 0.5], &quad).value;
            match failed.into_inner().unwrap() {
                Some(e) => Err(e),
                None => Ok(v),
            }
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(checkpoints.len());
    let mut partial = 0.0;
    let mut cps = checkpoints.iter().peekable();
    for (i, t) in exact.iter().enumerate() {
        let n = i as u64 + 1;
        partial += t;
        if cps.peek() == Some(&&n) {
            out.push(SeriesPoint { n, term: *t, partial_sum: partial });
            cps.next();
        }
    }
    for (&(lo, hi), s) in blocks.iter().zip(&block_sums) {
        partial += s;
        while let Some(&&n) = cps.peek() {
            if n < lo {
                cps.next();
                continue;
            }
            if n > hi {
                break;
            }
            out.push(SeriesPoint { n, term: term_at(n as f64)?, partial_sum: partial });
            cps.next();
        }
    }
    Ok(SeriesCurve::build(format!("excess-moment r={r}"), out, Some(integral_form)))
}

/// `∫_a^∞ r u^{r−1} V(|X| ≥ u) du = ∫_{a^r}^∞ V(|X| ≥ t^{1/r}) dt`
pub fn upper_tail_moment(gen: &GeneratorSet, r: f64, a: f64, cfg: &ChoquetConfig) -> ChoquetResult {
    let start = a.powf(r);
    let f = |t: f64| gen.upper_abs_ge(t.powf(1.0 / r));
    let tail = TailConfig { tol: cfg.tol, scale_floor: 1e-300, t_cap: cfg.t_cap.max(start * 64.0), ..TailConfig::default() };
    let res = integrate_to_infinity(&f, start, start.max(1.0), Some(&f), &tail);
    let status = match res.status {
        TailStatus::Converged => ChoquetStatus::Converged,
        TailStatus::Diverging => ChoquetStatus::Diverging,
        TailStatus::TailTruncated => ChoquetStatus::TailTruncated,
    };
    ChoquetResult { value: res.value, abs_err: res.abs_err, status }
}

fn excess_integral_form(gen: &GeneratorSet, r: f64, n_max: u64, cfg: &ChoquetConfig) -> ChoquetResult {
    let hi = n_max as f64;
    if hi <= 16.0 {
        return ChoquetResult::exact(0.0);
    }
    let probe = upper_tail_moment(gen, r, normalizer_real(16.0), cfg);
    if !probe.is_finite() {
        return ChoquetResult { value: f64::INFINITY, abs_err: f64::INFINITY, status: ChoquetStatus::Diverging };
    }
    let mut pts = vec![16.0, hi];
    let mut b = 32.0;
    while b < hi {
        pts.push(b);
        b *= 2.0;
    }
    let f = |y: f64| {
        let a = normalizer_real(y);
        upper_tail_moment(gen, r, a, cfg).value / a.powf(r)
    };
    let q = integrate(&f, &pts, &QuadConfig { abs_tol: 1e-300, rel_tol: 1e-9, max_intervals: 400 });
    let status = if q.converged { ChoquetStatus::Converged } else { ChoquetStatus::TailTruncated };
    ChoquetResult { value: q.value, abs_err: q.abs_err, status }
}

/// `r/(p−r) · C0^{r/p}`, the constant displayed in the Markov-type bound for
/// `C_V[|X|^r]` under `x^p V(|X| ≥ x) ≤ C0`.
pub fn markov_choquet_bound(c0: f64, p: f64, r: f64) -> Result<f64> {
    if !(c0 > 0.0) || !(p > 0.0) || !(r > 0.0) || r >= p {
        return Err(Error::invalid(format!("Markov bound needs C0 > 0 and 0 < r < p, got C0={c0}, p={p}, r={r}")));
    }
    Ok(r / (p - r) * c0.powf(r / p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovCheck {
    /// `sup_x x^p V(|X| ≥ x)` on the probe grid.
    pub c0: f64,
    pub choquet: ChoquetResult,
    /// `r/(p−r) · C0^{r/p}`
    pub printed_bound: f64,
    /// `∫_0^∞ 1 ∧ (C0 x^{−p/r}) dx` by quadrature.
    pub middle_integral: f64,
    /// `p/(p−r) · C0^{r/p}`, the closed form of the middle integral.
    pub middle_closed_form: f64,
    pub holds_middle: bool,
    pub holds_printed: bool,
}

/// Estimate `C0` on a log grid, compute `C_V[|X|^r]` and compare it with both
/// the printed constant and the integral it is derived from.
pub fn markov_check(gen: &GeneratorSet, p: f64, r: f64, cfg: &ChoquetConfig) -> Result<MarkovCheck> {
    let mut grid: Vec<f64> = (-400..=1200).map(|k| 2f64.powf(k as f64 / 20.0)).collect();
    grid.extend(positive_abs_breakpoints(gen));
    let c0 = grid.iter().map(|&x| x.powf(p) * gen.upper_abs_ge(x)).fold(0.0, f64::max);
    let printed_bound = markov_choquet_bound(c0, p, r)?;
    let choquet = gen.choquet_abs_transform(&AbsTransform::Power(r), cfg)?;
    let knee = c0.powf(r / p);
    let middle = choquet_integral(|x| if x <= knee { 1.0 } else { c0 * x.powf(-p / r) }, &ChoquetConfig {
        breakpoints: vec![knee],
        ..cfg.clone()
    })?;
    let middle_closed_form = p / (p - r) * knee;
    let slack = cfg.tol * choquet.value.abs().max(1.0);
    Ok(MarkovCheck {
        c0,
        choquet,
        printed_bound,
        middle_integral: middle.value,
        middle_closed_form,
        holds_middle: choquet.value <= middle.value + slack,
        holds_printed: choquet.value <= printed_bound + slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Measure, Sign};

    #[test]
    fn normalizer_reference_values() {
        assert_eq!(normalizer(1), 2f64.sqrt());
        assert_eq!(normalizer(15), 30f64.sqrt());
        assert!((normalizer(16) - (32.0 * 16f64.ln().ln()).sqrt()).abs() < 1e-15);
        assert!((normalizer(16) - 5.712_530_6).abs() < 1e-7);
        for n in 1..=15 {
            assert_eq!(normalizer(n), (2.0 * n as f64).sqrt());
        }
        let t = normalizer_table(5000);
        assert!(t[1..].windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn eta_case_split() {
        let gen = GeneratorSet::new("pm", vec![Measure::dirac(2.0).unwrap(), Measure::dirac(-1.0).unwrap()]).unwrap();
        let cfg = ChoquetConfig::default();
        assert!((eta(&gen, 3.0, &cfg).unwrap().value - 8.0).abs() < 1e-9);
        let v = varsigma(&gen, &cfg).unwrap().value;
        assert_eq!(eta(&gen, 1.0, &cfg).unwrap().value, v);
        // |X| ≤ 15 gives loglog|X| = 1 and |X| ≤ e gives log|X| = 1.
        assert!((v - 4.0).abs() < 1e-9);
        assert!((eta(&gen, 2.0, &cfg).unwrap().value - 4.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_series_hand_value() {
        let one = GeneratorSet::singleton(Measure::dirac(1.0).unwrap());
        let c = series_truncated_moment(&one, 3.0, 1.0, 2, &[1, 2]).unwrap();
        assert!((c.points[1].partial_sum - (2f64.powf(-1.5) + 0.125)).abs() < 1e-12);
        assert!((c.points[1].partial_sum - 0.478_553).abs() < 1e-6);
        let zero = GeneratorSet::singleton(Measure::dirac(0.0).unwrap());
        let c = series_truncated_moment(&zero, 3.0, 1.0, 64, &default_checkpoints(64)).unwrap();
        assert!(c.points.iter().all(|p| p.partial_sum == 0.0));
    }

    #[test]
    fn excess_series_hand_value() {
        let three = GeneratorSet::singleton(Measure::dirac(3.0).unwrap());
        let c = series_excess_moment(&three, 1.0, 1, &[1], &ChoquetConfig::default()).unwrap();
        assert!((c.points[0].term - (3.0 - 2f64.sqrt()) / 2f64.sqrt()).abs() < 1e-9);
        let small = GeneratorSet::singleton(Measure::uniform_on(&[-1.4, 1.4]).unwrap());
        let c = series_excess_moment(&small, 2.0, 32, &default_checkpoints(32), &ChoquetConfig::default()).unwrap();
        assert!(c.points.iter().all(|p| p.partial_sum == 0.0));
    }

    #[test]
    fn markov_printed_constant_versus_integral() {
        assert_eq!(markov_choquet_bound(1.0, 2.0, 1.0).unwrap(), 1.0);
        assert_eq!(markov_choquet_bound(16.0, 4.0, 2.0).unwrap(), 4.0);
        assert!(markov_choquet_bound(1.0, 2.0, 2.0).is_err());
        let g = GeneratorSet::singleton(Measure::pareto(2.0, 1.0, Sign::Positive).unwrap());
        let m = markov_check(&g, 2.0, 1.0, &ChoquetConfig::default()).unwrap();
        assert!((m.c0 - 1.0).abs() < 1e-12, "{m:?}");
        assert!((m.choquet.value - 2.0).abs() < 1e-7);
        assert!((m.middle_integral - m.middle_closed_form).abs() < 1e-7);
        assert!(m.holds_middle);
        assert!(!m.holds_printed);
    }
}
