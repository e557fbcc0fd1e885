//! Test functions integrated by the sub-linear expectation: bounded Lipschitz
//! maps and maps of polynomial growth, each carrying its non-smooth points.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::RealMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionClass {
    /// `|φ| ≤ bound` and `|φ(x) − φ(y)| ≤ lip |x − y|`.
    BoundedLipschitz { bound: f64, lip: f64 },
    /// `|φ(x)| ≤ coeff (1 + |x|^degree)`.
    PolynomialGrowth { degree: u32, coeff: f64 },
}

impl FunctionClass {
    fn as_growth(&self) -> (u32, f64) {
        match *self {
            FunctionClass::BoundedLipschitz { bound, .. } => (0, bound),
            FunctionClass::PolynomialGrowth { degree, coeff } => (degree, coeff),
        }
    }

    /// Growth degree relevant to integrability: 0 for bounded maps.
    pub fn degree(&self) -> u32 {
        self.as_growth().0
    }
}

#[derive(Clone)]
pub struct TestFunction {
    f: RealMap,
    class: FunctionClass,
    breakpoints: Vec<f64>,
    label: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("class", &self.class)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl TestFunction {
    pub fn new(class: FunctionClass, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction { f: Arc::new(f), class, breakpoints: Vec::new(), label: String::from("phi") }
    }

    pub fn bounded_lipschitz(bound: f64, lip: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(FunctionClass::BoundedLipschitz { bound, lip }, f)
    }

    pub fn polynomial(degree: u32, coeff: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(FunctionClass::PolynomialGrowth { degree, coeff }, f)
    }

    pub fn with_breakpoints(mut self, points: impl IntoIterator<Item = f64>) -> Self {
        self.breakpoints.extend(points);
        self.breakpoints.sort_by(f64::total_cmp);
        self.breakpoints.dedup();
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn identity() -> Self {
        Self::polynomial(1, 1.0, |x| x).with_label("x")
    }

    pub fn abs() -> Self {
        Self::polynomial(1, 1.0, f64::abs).with_breakpoints([0.0]).with_label("|x|")
    }

    /// `x ↦ x^k`
    pub fn power(k: u32) -> Self {
        Self::polynomial(k, 1.0, move |x| x.powi(k as i32)).with_label(format!("x^{k}"))
    }

    /// `x ↦ |x|^r` for real `r > 0`, declared with degree `⌈r⌉`.
    pub fn abs_power(r: f64) -> Self {
        Self::polynomial(r.ceil() as u32, 1.0, move |x: f64| x.abs().powf(r))
            .with_breakpoints([0.0])
            .with_label(format!("|x|^{r}"))
    }

    pub fn constant(c: f64) -> Self {
        Self::bounded_lipschitz(c.abs(), 0.0, move |_| c).with_label(format!("{c}"))
    }

    /// Piecewise-linear interpolation through the knots, constant beyond them.
    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid("piecewise-linear knots must be non-empty and strictly increasing"));
        }
        let bound = knots.iter().map(|k| k.1.abs()).fold(0.0, f64::max);
        let lip = knots.windows(2).map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()).fold(0.0, f64::max);
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let table = knots.clone();
        let f = move |x: f64| {
            if x <= table[0].0 {
                return table[0].1;
            }
            let last = table[table.len() - 1];
            if x >= last.0 {
                return last.1;
            }
            let i = table.partition_point(|k| k.0 <= x);
            let (a, b) = (table[i - 1], table[i]);
            a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
        };
        Ok(Self::bounded_lipschitz(bound, lip, f).with_breakpoints(xs).with_label("piecewise-linear"))
    }

    /// Trapezoid equal to `height` on `[lo, hi]`, zero outside
    /// `[lo − ramp, hi + ramp]`, linear in between.
    pub fn trapezoid(lo: f64, hi: f64, ramp: f64, height: f64) -> Result<Self> {
        if !(ramp > 0.0) || lo > hi {
            return Err(Error::invalid("trapezoid needs lo ≤ hi and ramp > 0"));
        }
        Self::piecewise_linear(vec![(lo - ramp, 0.0), (lo, height), (hi, height), (hi + ramp, 0.0)])
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn class(&self) -> FunctionClass {
        self.class
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn as_fn(&self) -> impl Fn(f64) -> f64 + '_ {
        move |x| (self.f)(x)
    }

    pub fn scale(&self, lambda: f64) -> Self {
        let f = self.f.clone();
        let class = match self.class {
            FunctionClass::BoundedLipschitz { bound, lip } => {
                FunctionClass::BoundedLipschitz { bound: bound * lambda.abs(), lip: lip * lambda.abs() }
            }
            FunctionClass::PolynomialGrowth { degree, coeff } => {
                FunctionClass::PolynomialGrowth { degree, coeff: coeff * lambda.abs() }
            }
        };
        TestFunction {
            f: Arc::new(move |x| lambda * f(x)),
            class,
            breakpoints: self.breakpoints.clone(),
            label: format!("{lambda}*({})", self.label),
        }
    }

    pub fn neg(&self) -> Self {
        let mut out = self.scale(-1.0);
        out.label = format!("-({})", self.label);
        out
    }

    pub fn add(&self, other: &TestFunction) -> Self {
        let (f, g) = (self.f.clone(), other.f.clone());
        let class = match (self.class, other.class) {
            (
                FunctionClass::BoundedLipschitz { bound: b1, lip: l1 },
                FunctionClass::BoundedLipschitz { bound: b2, lip: l2 },
            ) => FunctionClass::BoundedLipschitz { bound: b1 + b2, lip: l1 + l2 },
            (a, b) => {
                let (d1, c1) = a.as_growth();
                let (d2, c2) = b.as_growth();
                FunctionClass::PolynomialGrowth { degree: d1.max(d2), coeff: c1 + c2 }
            }
        };
        let mut bps = self.breakpoints.clone();
        bps.extend_from_slice(&other.breakpoints);
        TestFunction { f: Arc::new(move |x| f(x) + g(x)), class, breakpoints: Vec::new(), label: format!("{}+{}", self.label, other.label) }
            .with_breakpoints(bps)
    }

    /// `x ↦ (−c) ∨ φ(x) ∧ c`
    pub fn truncated(&self, c: f64) -> Self {
        let f = self.f.clone();
        let lip = match self.class {
            FunctionClass::BoundedLipschitz { lip, .. } => lip,
            // Local Lipschitz constants are not tracked for growth-class maps.
            FunctionClass::PolynomialGrowth { .. } => f64::INFINITY,
        };
        TestFunction {
            f: Arc::new(move |x| truncate(f(x), c)),
            class: FunctionClass::BoundedLipschitz { bound: c, lip },
            breakpoints: self.breakpoints.clone(),
            label: format!("({})^({c})", self.label),
        }
    }

    /// Spot-check the declared class on `points` (sorted internally).
    pub fn check_class(&self, points: &[f64]) -> Result<()> {
        let mut xs: Vec<f64> = points.iter().copied().filter(|x| x.is_finite()).collect();
        xs.extend_from_slice(&self.breakpoints);
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let vals: Vec<f64> = xs.iter().map(|&x| self.eval(x)).collect();
        for (&x, &v) in xs.iter().zip(&vals) {
            if v.is_nan() {
                return Err(Error::ConstantViolation { at: x, detail: "value is NaN".into() });
            }
            let allowed = match self.class {
                FunctionClass::BoundedLipschitz { bound, .. } => bound,
                FunctionClass::PolynomialGrowth { degree, coeff } => coeff * (1.0 + x.abs().powi(degree as i32)),
            };
            if v.abs() > allowed * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::ConstantViolation { at: x, detail: format!("|phi| = {} exceeds {allowed}", v.abs()) });
            }
        }
        if let FunctionClass::BoundedLipschitz { lip, .. } = self.class {
            for i in 1..xs.len() {
                let slope = (vals[i] - vals[i - 1]).abs() / (xs[i] - xs[i - 1]);
                if slope > lip * (1.0 + 1e-9) + 1e-9 {
                    return Err(Error::ConstantViolation {
                        at: xs[i],
                        detail: format!("difference quotient {slope} exceeds Lipschitz constant {lip}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// `X^(c) = (−c) ∨ x ∧ c`
pub fn truncate(x: f64, c: f64) -> f64 {
    x.clamp(-c, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncate_clamps_to_band() {
        assert_eq!(truncate(5.0, 2.0), 2.0);
        assert_eq!(truncate(-5.0, 2.0), -2.0);
        assert_eq!(truncate(1.5, 2.0), 1.5);
    }

    #[test]
    fn class_check_catches_false_declarations() {
        let liar = TestFunction::bounded_lipschitz(1.0, 1.0, |x| 2.0 * x.sin());
        assert!(liar.check_class(&[0.0, 1.0, 1.5, 3.0]).is_err());
        let steep = TestFunction::bounded_lipschitz(10.0, 1.0, |x| (5.0 * x).sin());
        assert!(steep.check_class(&[0.0, 0.01, 0.02]).is_err());
        let ok = TestFunction::trapezoid(0.0, 1.0, 0.5, 1.0).unwrap();
        ok.check_class(&[-1.0, -0.25, 0.5, 1.25, 2.0]).unwrap();
    }

    #[test]
    fn algebra_tracks_classes() {
        let t = TestFunction::trapezoid(0.0, 1.0, 0.5, 1.0).unwrap();
        let s = t.add(&t.scale(2.0));
        assert_eq!(s.class(), FunctionClass::BoundedLipschitz { bound: 3.0, lip: 6.0 });
        assert_eq!(s.eval(0.5), 3.0);
        let p = TestFunction::power(2).add(&t);
        assert_eq!(p.class(), FunctionClass::PolynomialGrowth { degree: 2, coeff: 2.0 });
        assert_eq!(TestFunction::identity().neg().eval(3.0), -3.0);
    }
}
