//! Executable right-hand sides: the exponential inequality for maxima of
//! centred partial sums, the dyadic blocking bound `g₁ + g₂ + g₃` and the
//! moment brackets.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::{choquet_integral, ChoquetConfig, ChoquetStatus, GeneratorSet};
use crate::functionals::{loglog, normalizer, normalizer_real};
use crate::quadrature::{integrate, integrate_to_infinity, QuadConfig, TailConfig, TailStatus};
use crate::report::ext_real;

/// Inputs of the exponential inequality for `n` independent summands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpIneqInputs {
    pub n: u64,
    pub x: f64,
    pub y: f64,
    pub p: f64,
    pub delta: f64,
    /// `Σ Ê[(X_i⁺ ∧ y)^p]`
    pub a_n: f64,
    /// `Σ Ẽ[(X_i ∧ y)²]`; may be `+∞`.
    #[serde(with = "ext_real")]
    pub b_n: f64,
    /// `V(max_k X_k > y)`
    pub tail_max: f64,
}

impl ExpIneqInputs {
    pub fn validate(&self) -> Result<()> {
        let ok = self.x > 0.0
            && self.y > 0.0
            && self.p >= 2.0
            && self.delta > 0.0
            && self.delta <= 1.0
            && self.a_n >= 0.0
            && self.b_n >= 0.0
            && (0.0..=1.0).contains(&self.tail_max);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("exponential inequality inputs out of range: {self:?}")))
        }
    }
}

/// The three terms of the right-hand side and their sum. The sum bounds a
/// probability but is not clamped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpIneqTerms {
    pub tail: f64,
    #[serde(with = "ext_real")]
    pub middle: f64,
    pub gaussian: f64,
    #[serde(with = "ext_real")]
    pub total: f64,
}

/// `V(max X_k > y) + 2e^{p^p} (A_n/y^p)^{δx/(10y)} + exp{−x²/(2B_n(1+δ))}`
pub fn exp_inequality_terms(inp: &ExpIneqInputs) -> Result<ExpIneqTerms> {
    inp.validate()?;
    let middle = if inp.a_n == 0.0 {
        0.0
    } else {
        let expo = inp.delta * inp.x / (10.0 * inp.y);
        (LN_2 + inp.p.powf(inp.p) + expo * (inp.a_n.ln() - inp.p * inp.y.ln())).exp()
    };
    let gaussian = if inp.b_n == 0.0 { 0.0 } else { (-inp.x * inp.x / (2.0 * inp.b_n * (1.0 + inp.delta))).exp() };
    Ok(ExpIneqTerms { tail: inp.tail_max, middle, gaussian, total: inp.tail_max + middle + gaussian })
}

pub fn exp_inequality_rhs(inp: &ExpIneqInputs) -> Result<f64> {
    Ok(exp_inequality_terms(inp)?.total)
}

/// Lemma inputs for `n` i.i.d. copies of `X` under Peng independence.
///
/// `V(max_k X_k > y) = 1 − (1 − V(X > y))^n` because the adversary can pick
/// the generator maximising `P(X > y)` at every step.
pub fn iid_inputs(gen: &GeneratorSet, n: u64, x: f64, y: f64, p: f64, delta: f64) -> Result<ExpIneqInputs> {
    if !gen.measures().iter().all(|m| m.is_discrete()) {
        return Err(Error::NotDiscrete { generator: gen.measures().iter().position(|m| !m.is_discrete()).unwrap() });
    }
    let upper = |f: &dyn Fn(f64) -> f64| {
        gen.measures()
            .iter()
            .map(|m| m.atoms().unwrap().iter().map(|&(v, q)| q * f(v)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let a1 = upper(&|v: f64| v.max(0.0).min(y).powf(p));
    // X ∧ y is bounded above; Ẽ of its square is the plain upper expectation.
    let b1 = upper(&|v: f64| v.min(y).powi(2));
    let p_gt = gen.measures().iter().map(|m| m.prob_gt(y)).fold(0.0, f64::max);
    let tail_max = 1.0 - (1.0 - p_gt).powf(n as f64);
    Ok(ExpIneqInputs { n, x, y, p, delta, a_n: n as f64 * a1, b_n: n as f64 * b1, tail_max })
}

/// The smallest right-hand side over a grid of `(y, δ, p)` choices; every
/// grid point is a valid bound on its own.
pub fn best_iid_rhs(gen: &GeneratorSet, n: u64, x: f64, ys: &[f64], deltas: &[f64], ps: &[f64]) -> Result<(f64, ExpIneqInputs)> {
    let mut best: Option<(f64, ExpIneqInputs)> = None;
    for &y in ys {
        for &d in deltas {
            for &p in ps {
                let inp = iid_inputs(gen, n, x, y, p, d)?;
                let v = exp_inequality_rhs(&inp)?;
                if best.is_none_or(|b| v < b.0) {
                    best = Some((v, inp));
                }
            }
        }
    }
    best.ok_or_else(|| Error::invalid("empty parameter grid"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockingInputs {
    pub r: f64,
    pub p: f64,
    pub z: f64,
    /// Blocks `k = 0..=k_max`, `n_k = 2^k`.
    pub k_max: u32,
    #[serde(with = "ext_real")]
    pub sigma_bar_sq: f64,
}

impl BlockingInputs {
    pub fn validate(&self) -> Result<()> {
        check_p_r(self.p, self.r)?;
        if !(self.z > 0.0) || !(self.sigma_bar_sq >= 0.0) || self.k_max > 60 {
            return Err(Error::invalid(format!("blocking inputs out of range: {self:?}")));
        }
        Ok(())
    }
}

fn check_p_r(p: f64, r: f64) -> Result<()> {
    if !(r > 0.0) || !(p > 2f64.max(r)) {
        return Err(Error::invalid(format!("need r > 0 and p > 2∨r, got r={r}, p={p}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub k: u32,
    pub n_k: u64,
    pub g1: f64,
    #[serde(with = "ext_real")]
    pub g2: f64,
    pub g3: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundReport {
    pub z: f64,
    #[serde(with = "ext_real")]
    pub g1: f64,
    #[serde(with = "ext_real")]
    pub g2: f64,
    #[serde(with = "ext_real")]
    pub g3: f64,
    /// Estimated contributions of the blocks beyond `k_max`.
    #[serde(with = "ext_real")]
    pub g1_tail: f64,
    #[serde(with = "ext_real")]
    pub g2_tail: f64,
    #[serde(with = "ext_real")]
    pub g3_tail: f64,
    #[serde(with = "ext_real")]
    pub total: f64,
    pub blocks: Vec<BlockRow>,
}

/// Blocks of at most this many terms are summed term by term in `g₁`.
const G1_EXACT_BLOCK: u64 = 4096;

/// `Ẽ[(|X| ∧ y)^p] = max_θ ∫_0^y p x^{p−1} P_θ(|X| ≥ x) dx`
pub fn clipped_moment(gen: &GeneratorSet, p: f64, y: f64) -> f64 {
    let mut pts = vec![0.0, y];
    pts.extend(gen.breakpoints().into_iter().map(f64::abs).filter(|&b| b > 0.0 && b < y));
    let quad = QuadConfig { abs_tol: 1e-300, rel_tol: 1e-12, max_intervals: 2000 };
    gen.measures()
        .iter()
        .map(|m| integrate(&|x: f64| p * x.powf(p - 1.0) * m.abs_ge(x), &pts, &quad).value)
        .fold(0.0, f64::max)
}

/// `g₁ + g₂ + g₃` at one `z`, with the block choices `x = z^{1/r} a_{n_{k+1}}`,
/// `y = x/30`, `δ = 1` and `c_p = 2e^{p^p}`.
pub fn blocking_bound(inp: &BlockingInputs, gen: &GeneratorSet) -> Result<BoundReport> {
    inp.validate()?;
    let (r, p, z) = (inp.r, inp.p, inp.z);
    let zr = z.powf(1.0 / r);
    let g1_term = |y: f64| gen.upper_abs_ge(zr * normalizer_real(y) / 30.0);
    let log_cp = LN_2 + p.powf(p);

    let blocks: Vec<BlockRow> = (0..=inp.k_max)
        .into_par_iter()
        .map(|k| {
            let (lo, hi) = if k == 0 { (1u64, 2u64) } else { ((1u64 << k) + 1, 1u64 << (k + 1)) };
            let g1 = if hi - lo < G1_EXACT_BLOCK {
                (lo..=hi).map(|n| 2.0 * g1_term(n as f64)).sum::<f64>()
            } else {
                // The summand is non-increasing in n, so f(lo) + ∫_lo^hi f bounds the block.
                let q = integrate(&g1_term, &[lo as f64, hi as f64], &QuadConfig { abs_tol: 1e-300, rel_tol: 1e-10, max_intervals: 400 });
                2.0 * (g1_term(lo as f64) + q.value + q.abs_err)
            };
            let n1 = 1u64 << (k + 1);
            let y = zr * normalizer(n1) / 30.0;
            let ratio = n1 as f64 * clipped_moment(gen, p, y) / y.powf(p);
            let g2 = if ratio == 0.0 { 0.0 } else { (log_cp + 3.0 * ratio.ln()).exp() };
            let g3 = if inp.sigma_bar_sq == 0.0 {
                0.0
            } else {
                (-z.powf(2.0 / r) * loglog(n1 as f64) / (4.0 * inp.sigma_bar_sq)).exp()
            };
            BlockRow { k, n_k: 1u64 << k, g1, g2, g3 }
        })
        .collect();

    let g1: f64 = blocks.iter().map(|b| b.g1).sum();
    let g2: f64 = blocks.iter().map(|b| b.g2).sum();
    let g3: f64 = blocks.iter().map(|b| b.g3).sum();

    let n_end = (1u64 << (inp.k_max + 1)) as f64;
    let g1_tail = if g1_term(n_end) == 0.0 {
        0.0
    } else {
        let t = integrate_to_infinity(&g1_term, n_end, n_end, Some(&g1_term), &TailConfig::default());
        if t.status == TailStatus::Diverging {
            f64::INFINITY
        } else {
            2.0 * (t.value + t.abs_err)
        }
    };
    let g2_tail = geometric_tail(&blocks.iter().map(|b| b.g2).collect::<Vec<_>>());
    let g3_tail = if inp.sigma_bar_sq == 0.0 {
        0.0
    } else {
        // Σ_{k > K} ((k+1) ln 2)^{−c} ≤ ∫_{K+1}^∞ ((k+1) ln 2)^{−c} dk for c > 1.
        let c = z.powf(2.0 / r) / (4.0 * inp.sigma_bar_sq);
        if c > 1.0 {
            let m = inp.k_max as f64 + 2.0;
            (-c * LN_2.ln() + (1.0 - c) * m.ln() - (c - 1.0).ln()).exp()
        } else {
            f64::INFINITY
        }
    };
    let total = g1 + g2 + g3 + g1_tail + g2_tail + g3_tail;
    Ok(BoundReport { z, g1, g2, g3, g1_tail, g2_tail, g3_tail, total, blocks })
}

/// Remainder of a series from the ratio of its last two terms.
fn geometric_tail(terms: &[f64]) -> f64 {
    let [.., a, b] = terms else { return 0.0 };
    if *b == 0.0 {
        0.0
    } else if b < a {
        let q = b / a;
        b * q / (1.0 - q)
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegratedBound {
    #[serde(with = "ext_real")]
    pub value: f64,
    /// `(z, 1 ∧ total(z))` on the grid.
    pub curve: Vec<(f64, f64)>,
    /// Cumulative integral at each grid point.
    pub cumulative: Vec<f64>,
    pub converged: bool,
}

/// Relative tolerance of the Cauchy check on the `z` grid.
pub const INTEGRATED_TOL: f64 = 1e-4;

/// `∫_0^∞ 1 ∧ (g₁+g₂+g₃)(z) dz` by the trapezoid rule on `z = 2^j`,
/// `j = −10..=30`; the stretch `[0, 2^{−10}]` contributes at most `2^{−10}`
/// and is counted in full.
pub fn integrated_bound(gen: &GeneratorSet, r: f64, p: f64, sigma_bar_sq: f64, k_max: u32) -> Result<IntegratedBound> {
    check_p_r(p, r)?;
    let zs: Vec<f64> = (-10..=30).map(|j| 2f64.powi(j)).collect();
    let vals: Vec<f64> = zs
        .iter()
        .map(|&z| blocking_bound(&BlockingInputs { r, p, z, k_max, sigma_bar_sq }, gen).map(|b| b.total.min(1.0)))
        .collect::<Result<_>>()?;
    let mut cumulative = Vec::with_capacity(zs.len());
    let mut acc = zs[0];
    cumulative.push(acc);
    for i in 1..zs.len() {
        acc += 0.5 * (vals[i] + vals[i - 1]) * (zs[i] - zs[i - 1]);
        cumulative.push(acc);
    }
    let n = cumulative.len();
    let converged = vals[n - 1] == 0.0 || (cumulative[n - 1] - cumulative[n - 2]) <= INTEGRATED_TOL * cumulative[n - 1];
    Ok(IntegratedBound {
        value: if converged { acc } else { f64::INFINITY },
        curve: zs.into_iter().zip(vals).collect(),
        cumulative,
        converged,
    })
}

/// `η + ς^{r/p} + σ̄^r`
pub fn theorem_a_bracket(varsigma: f64, eta: f64, sigma_bar: f64, r: f64, p: f64) -> Result<f64> {
    check_p_r(p, r)?;
    if [varsigma, eta, sigma_bar].iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(Error::invalid("bracket inputs must be non-negative"));
    }
    Ok(eta + varsigma.powf(r / p) + sigma_bar.powf(r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentBracket {
    /// `C_V[(X⁺)^r] / a_1^r`
    #[serde(with = "ext_real")]
    pub positive_part: f64,
    /// `C_V[|X|^r] / a_1^r`
    #[serde(with = "ext_real")]
    pub absolute: f64,
}

/// The `N = 1` values of the normalised max-moments, which bracket the
/// quantities controlled by the moment theorem.
pub fn moment_lower_bound(gen: &GeneratorSet, r: f64, cfg: &ChoquetConfig) -> Result<MomentBracket> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("moment bracket needs r > 0, got {r}")));
    }
    let a1r = normalizer(1).powf(r);
    let bps: Vec<f64> = gen.breakpoints().into_iter().map(|b| b.abs().powf(r)).collect();
    let cfg = cfg.clone().with_breakpoints(bps);
    let pos = choquet_integral(|t| if t <= 0.0 { 1.0 } else { gen.upper_ge(t.powf(1.0 / r)) }, &cfg)?;
    let abs = choquet_integral(|t| if t <= 0.0 { 1.0 } else { gen.upper_abs_ge(t.powf(1.0 / r)) }, &cfg)?;
    let value = |c: crate::expectation::ChoquetResult| {
        if c.status == ChoquetStatus::Diverging {
            f64::INFINITY
        } else {
            c.value / a1r
        }
    };
    Ok(MomentBracket { positive_part: value(pos), absolute: value(abs) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Measure;

    fn inputs(x: f64, y: f64, a_n: f64, b_n: f64, tail_max: f64) -> ExpIneqInputs {
        ExpIneqInputs { n: 1, x, y, p: 2.0, delta: 1.0, a_n, b_n, tail_max }
    }

    #[test]
    fn exp_inequality_reference_values() {
        let t = exp_inequality_terms(&inputs(10.0, 1.0, 1.0, f64::INFINITY, 0.0)).unwrap();
        assert!((t.middle - 2.0 * 4f64.exp()).abs() < 1e-10);
        assert!((t.middle - 109.196_300).abs() < 1e-6);
        assert_eq!(t.gaussian, 1.0);
        let v = exp_inequality_rhs(&inputs(2.0, 1.0, 0.0, 1.0, 0.0)).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(exp_inequality_rhs(&inputs(2.0, 1.0, 0.0, 0.0, 0.1)).unwrap(), 0.1);
        assert!(exp_inequality_rhs(&ExpIneqInputs { delta: 1.5, ..inputs(1.0, 1.0, 0.0, 0.0, 0.0) }).is_err());
    }

    #[test]
    fn g3_term_uses_the_log_convention() {
        let g = GeneratorSet::singleton(Measure::dirac(0.0).unwrap());
        let b = blocking_bound(&BlockingInputs { r: 2.0, p: 3.0, z: 4.0, k_max: 5, sigma_bar_sq: 1.0 }, &g).unwrap();
        assert!((b.blocks[3].g3 - (-(16f64.ln().ln())).exp()).abs() < 1e-15);
        assert!((b.blocks[3].g3 - 0.360_67).abs() < 1e-5);
        assert_eq!(b.g1, 0.0);
        assert_eq!(b.g2, 0.0);
    }

    #[test]
    fn bracket_and_moment_values() {
        assert_eq!(theorem_a_bracket(0.0, 0.0, 0.0, 1.0, 3.0).unwrap(), 0.0);
        assert_eq!(theorem_a_bracket(1.0, 1.0, 1.0, 1.5, 3.0).unwrap(), 3.0);
        assert!((theorem_a_bracket(16.0, 2.0, 1.0, 1.0, 4.0).unwrap() - 5.0).abs() < 1e-15);
        assert!(theorem_a_bracket(1.0, 1.0, 1.0, 1.0, 2.0).is_err());

        let cfg = ChoquetConfig::default();
        let one = GeneratorSet::singleton(Measure::dirac(1.0).unwrap());
        let b = moment_lower_bound(&one, 1.0, &cfg).unwrap();
        assert!((b.positive_part - 0.5f64.sqrt()).abs() < 1e-12);
        let neg = GeneratorSet::singleton(Measure::uniform_on(&[-2.0, -1.0]).unwrap());
        assert_eq!(moment_lower_bound(&neg, 1.0, &cfg).unwrap().positive_part, 0.0);
        let two = GeneratorSet::new("pm", vec![Measure::dirac(2.0).unwrap(), Measure::dirac(-3.0).unwrap()]).unwrap();
        assert!((moment_lower_bound(&two, 2.0, &cfg).unwrap().absolute - 4.5).abs() < 1e-12);
    }

    #[test]
    fn blocking_components_vanish_for_large_z() {
        let g = GeneratorSet::singleton(Measure::uniform_on(&[-1.0, 1.0]).unwrap());
        let mut last = f64::INFINITY;
        for z in [64.0, 256.0, 1024.0, 4096.0, 16384.0] {
            let b = blocking_bound(&BlockingInputs { r: 1.0, p: 3.0, z, k_max: 40, sigma_bar_sq: 1.0 }, &g).unwrap();
            assert!(b.total <= last, "z={z}: {} {} {} tails {} {} {}", b.g1, b.g2, b.g3, b.g1_tail, b.g2_tail, b.g3_tail);
            last = b.total;
        }
        assert!(last < 1e-10, "{last}");
    }
}
