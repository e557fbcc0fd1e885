//! The sub-linear expectation generated by a finite family of laws.
//!
//! `Ê[φ(X)] = max_θ E_θ[φ(X)]`, `ε̂ = −Ê[−·]`, `V(A) = max_θ P_θ(A)` and
//! `v(A) = 1 − V(Aᶜ)`. With finitely many countably additive generators the
//! upper capacity is already countably sub-additive, so no separate outer
//! extension is kept.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::Event;
use crate::measure::Measure;
use crate::quadrature::{integrate, integrate_to_infinity, QuadConfig, TailConfig, TailStatus};
use crate::report::ext_real;
use crate::test_function::{truncate, FunctionClass, TestFunction};

/// Monotonicity slack on the evaluated survival grid.
const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSet {
    #[serde(default)]
    pub label: String,
    measures: Vec<Measure>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationConfig {
    pub rel_tol: f64,
    /// Distance past which non-shrinking tail blocks count as divergence.
    pub t_cap: f64,
}

impl Default for ExpectationConfig {
    fn default() -> Self {
        ExpectationConfig { rel_tol: 1e-8, t_cap: 1048576.0 }
    }
}

impl ExpectationConfig {
    fn tail(&self) -> TailConfig {
        TailConfig { tol: self.rel_tol * 1e-2, scale_floor: 1e-12, t_cap: self.t_cap, ..TailConfig::default() }
    }
}

impl GeneratorSet {
    pub fn new(label: impl Into<String>, measures: Vec<Measure>) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::invalid("generator set must contain at least one measure"));
        }
        Ok(GeneratorSet { label: label.into(), measures })
    }

    pub fn singleton(m: Measure) -> Self {
        GeneratorSet { label: String::new(), measures: vec![m] }
    }

    pub fn measures(&self) -> &[Measure] {
        &self.measures
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    /// Reject sets deserialized with an empty measure list.
    pub fn validate(&self) -> Result<()> {
        if self.measures.is_empty() {
            return Err(Error::invalid("generator set must contain at least one measure"));
        }
        Ok(())
    }

    /// Every generator's support points, as quadrature breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.measures.iter().flat_map(|m| m.breakpoints()).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// `E_θ[φ(X)]` for every generator θ.
    pub fn expectations(&self, phi: &TestFunction, cfg: &ExpectationConfig) -> Result<Vec<f64>> {
        let mut tail = cfg.tail();
        if matches!(phi.class(), FunctionClass::BoundedLipschitz { .. }) {
            // Bounded integrands cannot diverge against a probability law.
            tail.t_cap = f64::INFINITY;
        }
        let mut probe: Vec<f64> = (-12..=12).flat_map(|k| [2f64.powi(k), -(2f64.powi(k))]).collect();
        probe.push(0.0);
        probe.extend(self.breakpoints());
        phi.check_class(&probe)?;
        let f = phi.as_fn();
        self.measures
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let r = m.integrate(&f, phi.breakpoints(), &tail);
                match r.status {
                    TailStatus::Converged => Ok(r.value),
                    TailStatus::Diverging => Err(Error::DivergentIntegral {
                        generator: i,
                        detail: format!("E[{}] does not converge", phi.label()),
                    }),
                    TailStatus::TailTruncated => Err(Error::DivergentIntegral {
                        generator: i,
                        detail: format!("E[{}] did not settle within the block budget", phi.label()),
                    }),
                }
            })
            .collect()
    }

    /// `Ê[φ(X)] = max_θ E_θ[φ(X)]`
    pub fn upper_expectation(&self, phi: &TestFunction, cfg: &ExpectationConfig) -> Result<f64> {
        Ok(self.expectations(phi, cfg)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    /// `ε̂[φ(X)] = −Ê[−φ(X)] = min_θ E_θ[φ(X)]`
    pub fn conjugate_expectation(&self, phi: &TestFunction, cfg: &ExpectationConfig) -> Result<f64> {
        Ok(-self.upper_expectation(&phi.neg(), cfg)?)
    }

    /// `V(A) = max_θ P_θ(A)`
    pub fn capacity_upper(&self, event: &Event) -> f64 {
        self.measures.iter().map(|m| event.probability(m)).fold(0.0, f64::max)
    }

    /// `v(A) = 1 − V(Aᶜ)`
    pub fn capacity_lower(&self, event: &Event) -> f64 {
        1.0 - self.capacity_upper(&event.complement())
    }

    /// `V(X ≥ t)`
    pub fn upper_ge(&self, t: f64) -> f64 {
        self.measures.iter().map(|m| m.prob_ge(t)).fold(0.0, f64::max)
    }

    /// `V(|X| ≥ x)`
    pub fn upper_abs_ge(&self, x: f64) -> f64 {
        self.measures.iter().map(|m| m.abs_ge(x)).fold(0.0, f64::max)
    }

    /// `C_V[X]` for the generated capacity.
    pub fn choquet(&self, cfg: &ChoquetConfig) -> Result<ChoquetResult> {
        let cfg = cfg.clone().with_breakpoints(self.breakpoints());
        choquet_integral(|t| self.upper_ge(t), &cfg)
    }

    /// `C_V[h(|X|)]` for a non-decreasing `h ≥ 0` with `h(0) = 0`, evaluated
    /// through `V(h(|X|) ≥ t) = V(|X| ≥ h⁻¹(t))`.
    pub fn choquet_abs_transform(&self, h: &dyn MonotoneMap, cfg: &ChoquetConfig) -> Result<ChoquetResult> {
        let bps: Vec<f64> = self.breakpoints().into_iter().map(|x| h.apply(x.abs())).collect();
        let cfg = cfg.clone().with_breakpoints(bps);
        choquet_integral(
            |t| {
                if t <= 0.0 {
                    1.0
                } else {
                    self.upper_abs_ge(h.inverse(t))
                }
            },
            &cfg,
        )
    }

    /// `Ẽ[φ(X)] = lim_c Ê[φ(X)^(c)]` along `schedule`; stops at the first
    /// pair of consecutive schedule points whose values differ by less than
    /// `tol`.
    pub fn extended_expectation(
        &self,
        phi: &TestFunction,
        schedule: &[f64],
        tol: f64,
        cfg: &ExpectationConfig,
    ) -> Result<ExtendedExpectation> {
        if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] > w[0])) || schedule[0] <= 0.0 {
            return Err(Error::invalid("truncation schedule must be positive and increasing"));
        }
        let mut prev: Option<f64> = None;
        let mut last = f64::NAN;
        for &c in schedule {
            let v = self.upper_expectation(&phi.truncated(c), cfg)?;
            if let Some(p) = prev {
                if (v - p).abs() < tol {
                    return Ok(ExtendedExpectation { value: v, converged: true, last_level: c });
                }
            }
            prev = Some(v);
            last = v;
        }
        Ok(ExtendedExpectation { value: last, converged: false, last_level: *schedule.last().unwrap() })
    }
}

/// Default truncation schedule `c_k = 2^k`, `k = 0..=40`.
pub fn default_schedule() -> Vec<f64> {
    (0..=40).map(|k| 2f64.powi(k)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedExpectation {
    pub value: f64,
    pub converged: bool,
    pub last_level: f64,
}

/// An increasing map on `[0, ∞)` with its generalised inverse
/// `h⁻¹(t) = inf{x ≥ 0 : h(x) ≥ t}`.
pub trait MonotoneMap: Sync {
    fn apply(&self, x: f64) -> f64;

    fn inverse(&self, t: f64) -> f64 {
        invert_increasing(|x| self.apply(x), t)
    }
}

/// `inf{x ≥ 0 : h(x) ≥ t}` by bracket doubling and bisection to 1e-12
/// relative.
pub fn invert_increasing(h: impl Fn(f64) -> f64, t: f64) -> f64 {
    if h(0.0) >= t {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while h(hi) < t {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoquetConfig {
    /// Mixed tolerance: converged results satisfy
    /// `abs_err ≤ tol · max(scale_floor, |value|)`.
    pub tol: f64,
    pub scale_floor: f64,
    /// Past this point, four non-shrinking doublings declare divergence.
    pub t_cap: f64,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
}

impl Default for ChoquetConfig {
    fn default() -> Self {
        ChoquetConfig { tol: 1e-8, scale_floor: 1.0, t_cap: 1048576.0, breakpoints: Vec::new() }
    }
}

impl ChoquetConfig {
    pub fn relative(tol: f64) -> Self {
        ChoquetConfig { tol, scale_floor: 1e-300, ..Self::default() }
    }

    pub fn with_breakpoints(mut self, points: impl IntoIterator<Item = f64>) -> Self {
        self.breakpoints.extend(points.into_iter().filter(|x| x.is_finite()));
        self.breakpoints.sort_by(f64::total_cmp);
        self.breakpoints.dedup();
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChoquetStatus {
    Converged,
    Diverging,
    TailTruncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoquetResult {
    #[serde(with = "ext_real")]
    pub value: f64,
    #[serde(with = "ext_real")]
    pub abs_err: f64,
    pub status: ChoquetStatus,
}

impl ChoquetResult {
    pub fn exact(value: f64) -> Self {
        ChoquetResult { value, abs_err: 0.0, status: ChoquetStatus::Converged }
    }

    pub fn is_finite(&self) -> bool {
        self.status != ChoquetStatus::Diverging && self.value.is_finite()
    }
}

/// `C_V[X] = ∫_0^∞ V(X ≥ t) dt + ∫_{−∞}^0 [V(X ≥ t) − 1] dt` for a caller
/// supplied `survival(t) = V(X ≥ t)`.
///
/// Each half-line is integrated adaptively over a core `[0, b₀]` that covers
/// the breakpoints, then in doubling blocks. Every evaluated point is
/// recorded and the survival must be non-increasing on that grid.
pub fn choquet_integral(survival: impl Fn(f64) -> f64, cfg: &ChoquetConfig) -> Result<ChoquetResult> {
    if !(cfg.tol > 0.0) {
        return Err(Error::invalid("Choquet tolerance must be positive"));
    }
    let grid = RefCell::new(Vec::<(f64, f64)>::new());
    let s = |t: f64| {
        let v = survival(t);
        grid.borrow_mut().push((t, v));
        v
    };
    let pos_bp: Vec<f64> = cfg.breakpoints.iter().copied().filter(|&b| b > 0.0).collect();
    let neg_bp: Vec<f64> = cfg.breakpoints.iter().copied().filter(|&b| b < 0.0).map(|b| -b).collect();

    let pos = half_line(&s, &pos_bp, cfg);
    let below = |u: f64| 1.0 - s(-u);
    let neg = half_line(&below, &neg_bp, cfg);

    let mut g = grid.into_inner();
    g.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in g.windows(2) {
        let rise = w[1].1 - w[0].1;
        if rise > MONOTONE_SLACK {
            return Err(Error::MonotonicityViolation { at: w[1].0, increase: rise });
        }
    }
    if let Some(&(t, v)) = g.iter().find(|p| !(-1e-12..=1.0 + 1e-12).contains(&p.1)) {
        return Err(Error::invalid(format!("survival value {v} at t = {t} outside [0, 1]")));
    }

    let status = match (pos.status, neg.status) {
        (TailStatus::Diverging, _) | (_, TailStatus::Diverging) => ChoquetStatus::Diverging,
        (TailStatus::TailTruncated, _) | (_, TailStatus::TailTruncated) => ChoquetStatus::TailTruncated,
        _ => ChoquetStatus::Converged,
    };
    if status == ChoquetStatus::Diverging {
        let value = if pos.status == TailStatus::Diverging { f64::INFINITY } else { f64::NEG_INFINITY };
        return Ok(ChoquetResult { value, abs_err: f64::INFINITY, status });
    }
    let value = pos.value - neg.value;
    let abs_err = pos.abs_err + neg.abs_err;
    // Errors are judged against the halves, since their difference may cancel.
    let scale = cfg.scale_floor.max(pos.value.abs()).max(neg.value.abs());
    let status = if status == ChoquetStatus::Converged && abs_err > cfg.tol * scale {
        ChoquetStatus::TailTruncated
    } else {
        status
    };
    Ok(ChoquetResult { value, abs_err, status })
}

struct HalfLine {
    value: f64,
    abs_err: f64,
    status: TailStatus,
}

/// `∫_0^∞ f` for a non-increasing `f` with values in `[0, 1]`.
fn half_line(f: &dyn Fn(f64) -> f64, breakpoints: &[f64], cfg: &ChoquetConfig) -> HalfLine {
    let b0 = breakpoints.iter().copied().fold(1.0, f64::max);
    let mut points = vec![0.0, b0];
    points.extend_from_slice(breakpoints);
    let core = integrate(f, &points, &QuadConfig { abs_tol: 1e-3 * cfg.tol * cfg.scale_floor, rel_tol: 1e-3 * cfg.tol, max_intervals: 4000 });
    let at_edge = f(b0);
    if at_edge == 0.0 {
        let status = if core.converged { TailStatus::Converged } else { TailStatus::TailTruncated };
        return HalfLine { value: core.value, abs_err: core.abs_err, status };
    }
    let tail_cfg = TailConfig { tol: cfg.tol, scale_floor: cfg.scale_floor.max(core.value.abs()), t_cap: cfg.t_cap, ..TailConfig::default() };
    let shifted = |u: f64| f(b0 + u);
    let tail = integrate_to_infinity(&shifted, 0.0, b0, Some(&shifted), &tail_cfg);
    HalfLine { value: core.value + tail.value, abs_err: core.abs_err + tail.abs_err, status: tail.status }
}

/// Ready-made monotone maps on `[0, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AbsTransform {
    /// `x ↦ x^r`
    Power(f64),
    /// `x ↦ min(x, cap)^r`
    ClippedPower { r: f64, cap: f64 },
    /// `x ↦ ((x − shift)⁺)^r`
    ExcessPower { r: f64, shift: f64 },
}

impl MonotoneMap for AbsTransform {
    fn apply(&self, x: f64) -> f64 {
        match *self {
            AbsTransform::Power(r) => x.powf(r),
            AbsTransform::ClippedPower { r, cap } => x.min(cap).powf(r),
            AbsTransform::ExcessPower { r, shift } => (x - shift).max(0.0).powf(r),
        }
    }

    fn inverse(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            AbsTransform::Power(r) => t.powf(1.0 / r),
            AbsTransform::ClippedPower { r, cap } => {
                if t > cap.powf(r) {
                    f64::INFINITY
                } else {
                    t.powf(1.0 / r)
                }
            }
            AbsTransform::ExcessPower { r, shift } => shift + t.powf(1.0 / r),
        }
    }
}

/// Truncation helper mirroring [`truncate`] for callers of this module.
pub fn truncate_value(x: f64, c: f64) -> f64 {
    truncate(x, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Sign;

    fn two_point() -> GeneratorSet {
        GeneratorSet::new("pm1", vec![Measure::dirac(1.0).unwrap(), Measure::dirac(-1.0).unwrap()]).unwrap()
    }

    fn normals() -> GeneratorSet {
        GeneratorSet::new("n12", vec![Measure::normal(0.0, 1.0).unwrap(), Measure::normal(0.0, 2.0).unwrap()]).unwrap()
    }

    #[test]
    fn envelope_of_two_diracs() {
        let g = two_point();
        let cfg = ExpectationConfig::default();
        assert_eq!(g.upper_expectation(&TestFunction::identity(), &cfg).unwrap(), 1.0);
        assert_eq!(g.conjugate_expectation(&TestFunction::identity(), &cfg).unwrap(), -1.0);
        assert_eq!(g.capacity_upper(&Event::ge(0.5)), 1.0);
        assert_eq!(g.capacity_lower(&Event::ge(0.5)), 0.0);
    }

    #[test]
    fn empty_generator_set_is_rejected() {
        assert!(GeneratorSet::new("none", vec![]).is_err());
        let g: GeneratorSet = serde_json::from_str(r#"{"label":"x","measures":[]}"#).unwrap();
        assert!(g.validate().is_err());
    }

    #[test]
    fn normal_envelope_values() {
        let g = normals();
        let cfg = ExpectationConfig::default();
        let up = g.upper_expectation(&TestFunction::power(2), &cfg).unwrap();
        assert!((up - 4.0).abs() < 4e-6);
        let low = g.conjugate_expectation(&TestFunction::power(2), &cfg).unwrap();
        assert!((low - 1.0).abs() < 1e-6);
        let neg_abs = g.upper_expectation(&TestFunction::abs().neg(), &cfg).unwrap();
        assert!((neg_abs + (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn divergent_generator_is_named() {
        let g = GeneratorSet::new(
            "mix",
            vec![Measure::normal(0.0, 1.0).unwrap(), Measure::pareto(1.5, 1.0, Sign::Symmetric).unwrap()],
        )
        .unwrap();
        match g.upper_expectation(&TestFunction::power(2), &ExpectationConfig::default()) {
            Err(Error::DivergentIntegral { generator, .. }) => assert_eq!(generator, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn choquet_closed_forms() {
        let cfg = ChoquetConfig::default();
        let exp = choquet_integral(|t| if t < 0.0 { 1.0 } else { (-t).exp() }, &cfg).unwrap();
        assert_eq!(exp.status, ChoquetStatus::Converged);
        assert!((exp.value - 1.0).abs() < 1e-8);
        for c in [-3.5, 0.0, 2.25] {
            let r = choquet_integral(|t| if t <= c { 1.0 } else { 0.0 }, &cfg.clone().with_breakpoints([c])).unwrap();
            assert!((r.value - c).abs() < 1e-12, "c = {c}: {}", r.value);
        }
        let r = two_point().choquet(&cfg).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn choquet_rejects_increasing_survival() {
        let err = choquet_integral(|t| if t > 1.0 && t < 2.0 { 0.5 } else if t < 0.0 { 1.0 } else { 0.2 }, &ChoquetConfig::default());
        assert!(matches!(err, Err(Error::MonotonicityViolation { .. })));
    }

    #[test]
    fn choquet_flags_heavy_tail() {
        let r = choquet_integral(|t| if t <= 1.0 { 1.0 } else { 1.0 / t }, &ChoquetConfig::default()).unwrap();
        assert_eq!(r.status, ChoquetStatus::Diverging);
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn extended_expectation_cases() {
        let cfg = ExpectationConfig::default();
        let bounded = two_point();
        let r = bounded.extended_expectation(&TestFunction::identity(), &default_schedule(), 1e-9, &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.value, 1.0);
        assert_eq!(r.last_level, 2.0);

        let n = GeneratorSet::singleton(Measure::normal(0.0, 1.0).unwrap());
        let r = n.extended_expectation(&TestFunction::identity(), &default_schedule(), 1e-9, &cfg).unwrap();
        assert!(r.converged && r.value.abs() < 1e-9);

        let heavy = GeneratorSet::singleton(Measure::pareto(0.5, 1.0, Sign::Positive).unwrap());
        let r = heavy.extended_expectation(&TestFunction::abs(), &default_schedule(), 1e-6, &cfg).unwrap();
        assert!(!r.converged);
        // Analytic oracle: E[min(X, c)] = ∫_0^c G = 1 + 2(√c − 1) at c = 2^40.
        let c = 2f64.powi(40);
        assert!((r.value - (2.0 * c.sqrt() - 1.0)).abs() < 1e-6 * c.sqrt());
    }
}
