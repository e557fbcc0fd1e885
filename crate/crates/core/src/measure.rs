//! One-dimensional probability laws.
//!
//! Every law exposes its distribution function (with left limits, so that
//! open and closed events are exact for atoms), a quantile function, and
//! integration of real maps. Integration is exact summation for discrete
//! laws, density quadrature for the normal and Pareto families, and
//! quantile-scale quadrature for laws given by a survival or quantile map.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity, QuadConfig, TailConfig, TailStatus};

pub type RealMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const DISCRETE_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
    Symmetric,
}

/// `G(x) = P(|X| > x)` for `x ≥ 0`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurvivalFn {
    /// `min(1, (x / scale)^(-exponent))`
    Power { exponent: f64, scale: f64 },
    /// `exp(-rate x)`
    Exponential { rate: f64 },
    /// Piecewise linear through `(x[i], g[i])`, starting at `x = 0` and ending
    /// at zero survival.
    Tabulated { x: Vec<f64>, g: Vec<f64> },
    #[serde(skip)]
    Custom(RealMap),
}

impl fmt::Debug for SurvivalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurvivalFn::Power { exponent, scale } => write!(f, "Power({exponent}, {scale})"),
            SurvivalFn::Exponential { rate } => write!(f, "Exponential({rate})"),
            SurvivalFn::Tabulated { x, .. } => write!(f, "Tabulated({} knots)", x.len()),
            SurvivalFn::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl SurvivalFn {
    pub fn custom(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        SurvivalFn::Custom(Arc::new(g))
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return self.eval(0.0);
        }
        match self {
            SurvivalFn::Power { exponent, scale } => {
                if x <= *scale {
                    1.0
                } else {
                    (x / scale).powf(-exponent)
                }
            }
            SurvivalFn::Exponential { rate } => (-rate * x).exp(),
            SurvivalFn::Tabulated { x: xs, g } => piecewise_linear(xs, g, x, 0.0),
            SurvivalFn::Custom(g) => g(x),
        }
    }

    /// `inf{x ≥ 0 : G(x) ≤ v}`
    pub fn inverse(&self, v: f64) -> f64 {
        if self.eval(0.0) <= v {
            return 0.0;
        }
        if v <= 0.0 {
            return match self {
                SurvivalFn::Tabulated { x, .. } => *x.last().unwrap_or(&0.0),
                _ => f64::INFINITY,
            };
        }
        match self {
            SurvivalFn::Power { exponent, scale } => scale * v.powf(-1.0 / exponent),
            SurvivalFn::Exponential { rate } => -v.ln() / rate,
            _ => bisect_decreasing(|x| self.eval(x), v),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SurvivalFn::Power { exponent, scale } if !(*exponent > 0.0 && *scale > 0.0) => {
                return Err(Error::InvalidMeasure("power survival needs exponent > 0 and scale > 0".into()));
            }
            SurvivalFn::Exponential { rate } if !(*rate > 0.0) => {
                return Err(Error::InvalidMeasure("exponential survival needs rate > 0".into()));
            }
            SurvivalFn::Tabulated { x, g } => {
                if x.len() != g.len() || x.len() < 2 {
                    return Err(Error::InvalidMeasure("tabulated survival needs matching knots (at least 2)".into()));
                }
                if x[0] != 0.0 || x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidMeasure("tabulated survival knots must start at 0 and increase".into()));
                }
                if *g.last().unwrap() != 0.0 {
                    return Err(Error::InvalidMeasure("tabulated survival must end at 0".into()));
                }
            }
            _ => {}
        }
        let g0 = self.eval(0.0);
        if !(0.0..=1.0).contains(&g0) {
            return Err(Error::InvalidMeasure(format!("survival G(0) = {g0} outside [0, 1]")));
        }
        let mut prev = g0;
        for k in -20..=80 {
            let x = 2f64.powi(k);
            let g = self.eval(x);
            if !(0.0..=1.0).contains(&g) || g > prev + 1e-12 {
                return Err(Error::InvalidMeasure(format!("survival not non-increasing in [0, 1] at x = {x}")));
            }
            prev = g;
        }
        Ok(())
    }
}

/// A non-decreasing map `(0, 1) → ℝ`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuantileFn {
    Uniform { lo: f64, hi: f64 },
    /// Piecewise linear through `(u[i], q[i])` with `u` from 0 to 1.
    Tabulated { u: Vec<f64>, q: Vec<f64> },
    #[serde(skip)]
    Custom(RealMap),
}

impl fmt::Debug for QuantileFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantileFn::Uniform { lo, hi } => write!(f, "Uniform({lo}, {hi})"),
            QuantileFn::Tabulated { u, .. } => write!(f, "Tabulated({} knots)", u.len()),
            QuantileFn::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl QuantileFn {
    pub fn custom(q: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        QuantileFn::Custom(Arc::new(q))
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            QuantileFn::Uniform { lo, hi } => lo + (hi - lo) * u,
            QuantileFn::Tabulated { u: us, q } => piecewise_linear(us, q, u, q[q.len() - 1]),
            QuantileFn::Custom(q) => q(u),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            QuantileFn::Uniform { lo, hi } if !(lo < hi) => {
                return Err(Error::InvalidMeasure("uniform quantile needs lo < hi".into()));
            }
            QuantileFn::Tabulated { u, q } => {
                if u.len() != q.len() || u.len() < 2 || u[0] != 0.0 || u[u.len() - 1] != 1.0 {
                    return Err(Error::InvalidMeasure("tabulated quantile needs knots spanning [0, 1]".into()));
                }
                if u.windows(2).any(|w| !(w[1] > w[0])) || q.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidMeasure("tabulated quantile knots must increase and be finite".into()));
                }
            }
            _ => {}
        }
        let mut prev = f64::NEG_INFINITY;
        for k in 1..1024 {
            let v = self.eval(k as f64 / 1024.0);
            if v.is_nan() || v < prev {
                return Err(Error::InvalidMeasure(format!("quantile not non-decreasing at u = {}", k as f64 / 1024.0)));
            }
            prev = v;
        }
        Ok(())
    }
}

fn piecewise_linear(xs: &[f64], ys: &[f64], x: f64, beyond: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return beyond;
    }
    let i = xs.partition_point(|&k| k <= x);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Smallest `x ≥ 0` with `g(x) ≤ v` for a non-increasing `g`.
fn bisect_decreasing(g: impl Fn(f64) -> f64, v: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while g(hi) > v {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            break;
        }
        if g(mid) > v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Serialized form of [`Measure`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    Pareto {
        alpha: f64,
        xmin: f64,
        sign: Sign,
    },
    Survival {
        survival: SurvivalFn,
        #[serde(default)]
        negative_fraction: f64,
    },
    Quantile {
        quantile: QuantileFn,
    },
}

#[derive(Clone, Debug)]
enum Law {
    Discrete { atoms: Vec<(f64, f64)>, cum: Vec<f64> },
    Normal { mean: f64, sd: f64 },
    Pareto { alpha: f64, xmin: f64, sign: Sign },
    Survival { g: SurvivalFn, neg: f64 },
    Quantile { q: QuantileFn },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub struct Measure {
    law: Law,
    samplable: bool,
}

impl TryFrom<MeasureSpec> for Measure {
    type Error = Error;

    fn try_from(spec: MeasureSpec) -> Result<Self> {
        match spec {
            MeasureSpec::Discrete { values, probs } => {
                if values.len() != probs.len() {
                    return Err(Error::InvalidMeasure("discrete values and probs differ in length".into()));
                }
                Measure::discrete(values.into_iter().zip(probs).collect())
            }
            MeasureSpec::Normal { mean, sd } => Measure::normal(mean, sd),
            MeasureSpec::Pareto { alpha, xmin, sign } => Measure::pareto(alpha, xmin, sign),
            MeasureSpec::Survival { survival, negative_fraction } => Measure::survival(survival, negative_fraction),
            MeasureSpec::Quantile { quantile } => Measure::quantile(quantile),
        }
    }
}

impl From<Measure> for MeasureSpec {
    fn from(m: Measure) -> Self {
        match m.law {
            Law::Discrete { atoms, .. } => MeasureSpec::Discrete {
                values: atoms.iter().map(|a| a.0).collect(),
                probs: atoms.iter().map(|a| a.1).collect(),
            },
            Law::Normal { mean, sd } => MeasureSpec::Normal { mean, sd },
            Law::Pareto { alpha, xmin, sign } => MeasureSpec::Pareto { alpha, xmin, sign },
            Law::Survival { g, neg } => MeasureSpec::Survival { survival: g, negative_fraction: neg },
            Law::Quantile { q } => MeasureSpec::Quantile { quantile: q },
        }
    }
}

impl Measure {
    /// A finite-support law. Repeated support values are merged by summing
    /// their probabilities.
    pub fn discrete(support: Vec<(f64, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidMeasure("discrete law needs at least one atom".into()));
        }
        let mut total = 0.0;
        for &(x, p) in &support {
            if !x.is_finite() {
                return Err(Error::InvalidMeasure(format!("non-finite support value {x}")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidMeasure(format!("probability {p} outside [0, 1]")));
            }
            total += p;
        }
        if (total - 1.0).abs() > DISCRETE_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("probabilities sum to {total}, not 1")));
        }
        let mut sorted = support;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (x, p) in sorted {
            match atoms.last_mut() {
                Some(last) if last.0 == x => last.1 += p,
                _ => atoms.push((x, p)),
            }
        }
        atoms.retain(|a| a.1 > 0.0);
        let mut acc = 0.0;
        let cum = atoms
            .iter()
            .map(|a| {
                acc += a.1;
                acc
            })
            .collect();
        Ok(Measure { law: Law::Discrete { atoms, cum }, samplable: true })
    }

    /// Point mass at `c`.
    pub fn dirac(c: f64) -> Result<Self> {
        Self::discrete(vec![(c, 1.0)])
    }

    /// Equal mass on each listed value.
    pub fn uniform_on(values: &[f64]) -> Result<Self> {
        let p = 1.0 / values.len() as f64;
        Self::discrete(values.iter().map(|&v| (v, p)).collect())
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::InvalidMeasure(format!("normal needs finite mean and sd > 0 (got {mean}, {sd})")));
        }
        Ok(Measure { law: Law::Normal { mean, sd }, samplable: true })
    }

    /// Pareto law with `P(Y > y) = (xmin / y)^alpha` for `y ≥ xmin`, placed on
    /// the positive axis, the negative axis, or split evenly between them.
    pub fn pareto(alpha: f64, xmin: f64, sign: Sign) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && xmin > 0.0 && xmin.is_finite()) {
            return Err(Error::InvalidMeasure(format!("pareto needs alpha > 0, xmin > 0 (got {alpha}, {xmin})")));
        }
        Ok(Measure { law: Law::Pareto { alpha, xmin, sign }, samplable: true })
    }

    /// Law of `X` with `P(|X| > x) = G(x)`; a fraction `negative_fraction` of
    /// the non-zero mass lies on the negative axis.
    pub fn survival(g: SurvivalFn, negative_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&negative_fraction) {
            return Err(Error::InvalidMeasure("negative fraction outside [0, 1]".into()));
        }
        g.validate()?;
        Ok(Measure { law: Law::Survival { g, neg: negative_fraction }, samplable: true })
    }

    pub fn quantile(q: QuantileFn) -> Result<Self> {
        q.validate()?;
        Ok(Measure { law: Law::Quantile { q }, samplable: true })
    }

    pub fn with_samplable(mut self, samplable: bool) -> Self {
        self.samplable = samplable;
        self
    }

    pub fn is_samplable(&self) -> bool {
        self.samplable
    }

    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match &self.law {
            Law::Discrete { atoms, .. } => Some(atoms),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.law, Law::Discrete { .. })
    }

    /// Points where the distribution function may have a kink or jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.law {
            Law::Discrete { atoms, .. } => atoms.iter().map(|a| a.0).collect(),
            Law::Normal { mean, .. } => vec![*mean],
            Law::Pareto { xmin, sign, .. } => match sign {
                Sign::Positive => vec![*xmin],
                Sign::Negative => vec![-xmin],
                Sign::Symmetric => vec![-xmin, *xmin],
            },
            Law::Survival { .. } => vec![0.0],
            Law::Quantile { .. } => Vec::new(),
        }
    }

    /// `P(X ≤ x)`
    pub fn cdf(&self, x: f64) -> f64 {
        self.distribution(x, false)
    }

    /// `P(X < x)`
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.distribution(x, true)
    }

    /// `P(X ≥ t)`
    pub fn prob_ge(&self, t: f64) -> f64 {
        self.upper_tail(t, true)
    }

    /// `P(X > t)`
    pub fn prob_gt(&self, t: f64) -> f64 {
        self.upper_tail(t, false)
    }

    /// Upper tails evaluated directly where a closed form exists, so that
    /// small tail masses do not cancel against 1.
    fn upper_tail(&self, x: f64, inclusive: bool) -> f64 {
        match &self.law {
            Law::Normal { mean, sd } => 0.5 * erfc((x - mean) / (sd * SQRT_2)),
            Law::Pareto { alpha, xmin, sign } => {
                let tail = |y: f64| if y <= *xmin { 1.0 } else { (xmin / y).powf(*alpha) };
                match sign {
                    Sign::Positive => tail(x),
                    Sign::Negative => 1.0 - tail(-x),
                    Sign::Symmetric => 0.5 * tail(x) + 0.5 * (1.0 - tail(-x)),
                }
            }
            Law::Survival { g, neg } if x > 0.0 || (x == 0.0 && !inclusive) => (1.0 - neg) * g.eval(x),
            _ => 1.0 - self.distribution(x, inclusive),
        }
    }

    /// `P(|X| ≥ x)`
    pub fn abs_ge(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        (self.prob_ge(x) + self.cdf(-x)).min(1.0)
    }

    fn distribution(&self, x: f64, strict: bool) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match &self.law {
            Law::Discrete { atoms, cum } => {
                let idx = if strict { atoms.partition_point(|a| a.0 < x) } else { atoms.partition_point(|a| a.0 <= x) };
                if idx == 0 {
                    0.0
                } else {
                    cum[idx - 1].min(1.0)
                }
            }
            Law::Normal { mean, sd } => 0.5 * erfc(-(x - mean) / (sd * SQRT_2)),
            Law::Pareto { alpha, xmin, sign } => {
                let tail = |y: f64| if y <= *xmin { 1.0 } else { (xmin / y).powf(*alpha) };
                match sign {
                    Sign::Positive => 1.0 - tail(x),
                    Sign::Negative => tail(-x),
                    Sign::Symmetric => 0.5 * (1.0 - tail(x)) + 0.5 * tail(-x),
                }
            }
            Law::Survival { g, neg } => {
                if x > 0.0 || (x == 0.0 && !strict) {
                    1.0 - (1.0 - neg) * g.eval(x.max(0.0))
                } else {
                    neg * g.eval(-x)
                }
            }
            Law::Quantile { q } => {
                // sup{u : Q(u) ≤ x} (or < x) by bisection on u.
                let below = |u: f64| if strict { q.eval(u) < x } else { q.eval(u) <= x };
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if below(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Generalised inverse of the distribution function, `u ∈ (0, 1)`.
    pub fn quantile_at(&self, u: f64) -> f64 {
        match &self.law {
            Law::Discrete { atoms, cum } => {
                let idx = cum.partition_point(|&c| c < u).min(atoms.len() - 1);
                atoms[idx].0
            }
            Law::Normal { mean, sd } => mean - sd * SQRT_2 * erfc_inv(2.0 * u),
            Law::Pareto { alpha, xmin, sign } => match sign {
                Sign::Positive => xmin * (1.0 - u).powf(-1.0 / alpha),
                Sign::Negative => -xmin * u.powf(-1.0 / alpha),
                Sign::Symmetric => {
                    if u < 0.5 {
                        -xmin * (2.0 * u).powf(-1.0 / alpha)
                    } else {
                        xmin * (2.0 * (1.0 - u)).powf(-1.0 / alpha)
                    }
                }
            },
            Law::Survival { g, neg } => {
                let g0 = g.eval(0.0);
                if u <= neg * g0 {
                    -g.inverse(u / neg)
                } else if u < 1.0 - (1.0 - neg) * g0 {
                    0.0
                } else {
                    g.inverse((1.0 - u) / (1.0 - neg))
                }
            }
            Law::Quantile { q } => q.eval(u),
        }
    }

    /// `Q(1 − v)` evaluated without forming `1 − v`, so upper tails keep
    /// their resolution for `v` below machine epsilon.
    pub fn quantile_upper(&self, v: f64) -> f64 {
        match &self.law {
            Law::Normal { mean, sd } => mean + sd * SQRT_2 * erfc_inv(2.0 * v),
            Law::Pareto { alpha, xmin, sign: Sign::Positive } => xmin * v.powf(-1.0 / alpha),
            Law::Pareto { alpha, xmin, sign: Sign::Symmetric } if v < 0.5 => xmin * (2.0 * v).powf(-1.0 / alpha),
            Law::Survival { g, neg } if v < (1.0 - neg) * g.eval(0.0) => g.inverse(v / (1.0 - neg)),
            _ => self.quantile_at(1.0 - v),
        }
    }

    /// Integrate `phi` against the law. `breakpoints` are points where `phi`
    /// is not smooth.
    pub fn integrate(&self, phi: &dyn Fn(f64) -> f64, breakpoints: &[f64], cfg: &TailConfig) -> Integral {
        match &self.law {
            Law::Discrete { atoms, .. } => {
                let value = atoms.iter().map(|&(x, p)| p * phi(x)).sum::<f64>();
                Integral { value, abs_err: 0.0, status: TailStatus::Converged }
            }
            Law::Normal { mean, sd } => {
                let (mean, sd) = (*mean, *sd);
                let norm = 1.0 / (sd * (2.0 * PI).sqrt());
                let density = move |x: f64| {
                    let z = (x - mean) / sd;
                    norm * (-0.5 * z * z).exp()
                };
                integrate_density(phi, &density, mean - 8.0 * sd, mean + 8.0 * sd, sd, breakpoints, cfg)
            }
            Law::Pareto { alpha, xmin, sign } => {
                let (alpha, xmin) = (*alpha, *xmin);
                let density = move |y: f64| if y < xmin { 0.0 } else { alpha * xmin.powf(alpha) * y.powf(-alpha - 1.0) };
                let right = |w: f64| {
                    let pos: Vec<f64> = breakpoints.iter().map(|b| w * b).filter(|b| *b > xmin).collect();
                    let f = |y: f64| phi(w * y);
                    integrate_density(&f, &density, xmin, 4.0 * xmin, xmin, &pos, cfg)
                };
                match sign {
                    Sign::Positive => right(1.0),
                    Sign::Negative => right(-1.0),
                    Sign::Symmetric => right(1.0).combine(&right(-1.0), 0.5),
                }
            }
            Law::Survival { .. } | Law::Quantile { .. } => self.integrate_quantile_scale(phi, cfg),
        }
    }

    fn integrate_quantile_scale(&self, phi: &dyn Fn(f64) -> f64, cfg: &TailConfig) -> Integral {
        // ∫_0^1 φ(Q(u)) du, split at 1/2, with u = e^{-s}/2 on each half.
        let tail_cfg = TailConfig { t_cap: 64.0, ..*cfg };
        let lower = |s: f64| {
            let u = 0.5 * (-s).exp();
            if u <= f64::MIN_POSITIVE {
                return 0.0;
            }
            phi(self.quantile_at(u)) * u
        };
        let upper = |s: f64| {
            let v = 0.5 * (-s).exp();
            if v <= f64::MIN_POSITIVE {
                return 0.0;
            }
            phi(self.quantile_upper(v)) * v
        };
        let none = None::<&fn(f64) -> f64>;
        let lo = integrate_to_infinity(&lower, 0.0, 1.0, none, &tail_cfg);
        let hi = integrate_to_infinity(&upper, 0.0, 1.0, none, &tail_cfg);
        Integral::from_tail(&lo).combine(&Integral::from_tail(&hi), 1.0)
    }

    /// Inverse-transform sample from a uniform `u ∈ (0, 1)`.
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        self.quantile_at(u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub abs_err: f64,
    pub status: TailStatus,
}

impl Integral {
    fn from_tail(t: &crate::quadrature::TailResult) -> Self {
        Integral { value: t.value, abs_err: t.abs_err, status: t.status }
    }

    /// `w * (self + other)` with the weaker of the two statuses.
    fn combine(&self, other: &Integral, w: f64) -> Integral {
        let status = match (self.status, other.status) {
            (TailStatus::Diverging, _) | (_, TailStatus::Diverging) => TailStatus::Diverging,
            (TailStatus::TailTruncated, _) | (_, TailStatus::TailTruncated) => TailStatus::TailTruncated,
            _ => TailStatus::Converged,
        };
        Integral { value: w * (self.value + other.value), abs_err: w * (self.abs_err + other.abs_err), status }
    }
}

/// `∫ phi(x) density(x) dx` over a core `[lo, hi]` (widened to cover the
/// breakpoints) plus both tails when the density does not vanish there.
fn integrate_density(
    phi: &dyn Fn(f64) -> f64,
    density: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    width: f64,
    breakpoints: &[f64],
    cfg: &TailConfig,
) -> Integral {
    let finite_bp: Vec<f64> = breakpoints.iter().copied().filter(|b| b.is_finite()).collect();
    let lo = finite_bp.iter().copied().fold(lo, f64::min);
    let hi = finite_bp.iter().copied().fold(hi, f64::max);
    let mut points = vec![lo, hi];
    points.extend(finite_bp);
    let f = |x: f64| {
        let d = density(x);
        if d == 0.0 {
            0.0
        } else {
            phi(x) * d
        }
    };
    let core = integrate(&f, &points, &QuadConfig { abs_tol: 1e-15, rel_tol: 1e-3 * cfg.tol, max_intervals: 4000 });
    let mut out = Integral {
        value: core.value,
        abs_err: core.abs_err,
        status: if core.converged { TailStatus::Converged } else { TailStatus::TailTruncated },
    };
    let none = None::<&fn(f64) -> f64>;
    let right = |u: f64| f(hi + u);
    let r = integrate_to_infinity(&right, 0.0, width, none, cfg);
    out = out.combine(&Integral::from_tail(&r), 1.0);
    if density(lo - width * 1e-9) > 0.0 {
        let left = |u: f64| f(lo - u);
        let l = integrate_to_infinity(&left, 0.0, width, none, cfg);
        out = out.combine(&Integral::from_tail(&l), 1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TailConfig {
        TailConfig { tol: 1e-10, scale_floor: 1e-10, ..TailConfig::default() }
    }

    #[test]
    fn discrete_merges_ties_and_checks_mass() {
        let m = Measure::discrete(vec![(1.0, 0.25), (-1.0, 0.5), (1.0, 0.25)]).unwrap();
        assert_eq!(m.atoms().unwrap(), &[(-1.0, 0.5), (1.0, 0.5)]);
        assert!(Measure::discrete(vec![(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(Measure::discrete(vec![(0.0, 1.5), (1.0, -0.5)]).is_err());
    }

    #[test]
    fn discrete_cdf_distinguishes_open_and_closed() {
        let m = Measure::uniform_on(&[-1.0, 1.0]).unwrap();
        assert_eq!(m.cdf(-1.0), 0.5);
        assert_eq!(m.cdf_left(-1.0), 0.0);
        assert_eq!(m.prob_ge(1.0), 0.5);
        assert_eq!(m.prob_gt(1.0), 0.0);
        assert_eq!(m.abs_ge(1.0), 1.0);
    }

    #[test]
    fn normal_moments_by_quadrature() {
        let m = Measure::normal(0.0, 2.0).unwrap();
        let second = m.integrate(&|x| x * x, &[], &cfg());
        assert_eq!(second.status, TailStatus::Converged);
        assert!((second.value - 4.0).abs() < 1e-9);
        let abs = m.integrate(&|x: f64| x.abs(), &[0.0], &cfg());
        assert!((abs.value - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn pareto_second_moment_diverges_below_two() {
        let m = Measure::pareto(1.5, 1.0, Sign::Symmetric).unwrap();
        let r = m.integrate(&|x| x * x, &[], &cfg());
        assert_eq!(r.status, TailStatus::Diverging);
        let ok = Measure::pareto(3.0, 1.0, Sign::Positive).unwrap().integrate(&|x| x, &[], &cfg());
        assert!((ok.value - 1.5).abs() < 1e-8, "{}", ok.value);
    }

    #[test]
    fn survival_and_pareto_routes_agree() {
        // Power survival x^{-3} on [1, ∞) is the positive Pareto(3, 1) law.
        let s = Measure::survival(SurvivalFn::Power { exponent: 3.0, scale: 1.0 }, 0.0).unwrap();
        let p = Measure::pareto(3.0, 1.0, Sign::Positive).unwrap();
        for x in [0.5, 1.0, 2.0, 10.0] {
            assert!((s.cdf(x) - p.cdf(x)).abs() < 1e-15);
        }
        let a = s.integrate(&|x| x * x, &[], &cfg());
        let b = p.integrate(&|x| x * x, &[], &cfg());
        assert_eq!(a.status, TailStatus::Converged);
        assert!((a.value - 3.0).abs() < 1e-6, "{}", a.value);
        assert!((b.value - 3.0).abs() < 1e-6, "{}", b.value);
    }

    #[test]
    fn survival_law_with_infinite_second_moment_diverges() {
        let s = Measure::survival(SurvivalFn::Power { exponent: 2.0, scale: 1.0 }, 0.5).unwrap();
        assert_eq!(s.integrate(&|x| x * x, &[], &cfg()).status, TailStatus::Diverging);
    }

    #[test]
    fn survival_rejects_increasing_map() {
        let bad = SurvivalFn::custom(|x| (x / (1.0 + x)).min(1.0));
        assert!(Measure::survival(bad, 0.0).is_err());
    }

    #[test]
    fn quantile_law_cdf_inverts_quantile() {
        let m = Measure::quantile(QuantileFn::Uniform { lo: -1.0, hi: 3.0 }).unwrap();
        assert!((m.cdf(0.0) - 0.25).abs() < 1e-12);
        let mean = m.integrate(&|x| x, &[], &cfg());
        assert!((mean.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip_keeps_the_law() {
        let m = Measure::pareto(1.5, 2.0, Sign::Symmetric).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"kind":"pareto","alpha":1.5,"xmin":2.0,"sign":"symmetric"}"#);
        let back: Measure = serde_json::from_str(&s).unwrap();
        assert_eq!(back.cdf(3.0), m.cdf(3.0));
        let bad = serde_json::from_str::<Measure>(r#"{"kind":"normal","mean":0,"sd":-1}"#);
        assert!(bad.is_err());
        let unknown = serde_json::from_str::<Measure>(r#"{"kind":"normal","mean":0,"sd":1,"skew":2}"#);
        assert!(unknown.is_err());
    }
}
