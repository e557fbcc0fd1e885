//! Adaptive Gauss–Kronrod quadrature.
//!
//! [`integrate`] is a global adaptive scheme over a finite interval list (the
//! caller's breakpoints become the initial partition). [`integrate_to_infinity`]
//! walks a half-line in doubling blocks and classifies the tail as converged,
//! diverging or truncated.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

// 15-point Kronrod nodes on [0, 1]; odd indices are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Relative round-off floor on `∫ |f|` below which errors count as met.
pub const ROUNDOFF: f64 = 200.0 * f64::EPSILON;

/// Ratio of successive block increments at or above which a tail is treated
/// as non-summable.
pub const DIVERGENCE_RATIO: f64 = 0.9;

/// Consecutive non-shrinking blocks past the cap that declare divergence.
pub const DIVERGENCE_STREAK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub err: f64,
    /// Estimate of `∫ |f|` over the segment.
    pub resabs: f64,
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut err = err.abs();
    if resasc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / resasc).powf(1.5);
        err = if scale < 1.0 { resasc * scale } else { resasc };
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * resabs;
        if min_err > err {
            err = min_err;
        }
    }
    err
}

/// One 15-point Kronrod rule with its embedded 7-point Gauss estimate.
pub fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut resabs = fc.abs() * WGK[7];
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let err = rescale_error((res_k - res_g) * half, resabs * half.abs(), resasc * half.abs());
    Segment { a, b, value, err, resabs: resabs * half.abs() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err: f64,
    pub converged: bool,
    pub intervals: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 2000 }
    }
}

/// Integrate `f` over `[points[0], points[last]]`, using every entry of
/// `points` as an initial subdivision point. Points need not be sorted;
/// duplicates and non-finite entries are dropped.
pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(f: &F, points: &[f64], cfg: &QuadConfig) -> QuadResult {
    let mut pts: Vec<f64> = points.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 2 {
        return QuadResult { value: 0.0, abs_err: 0.0, converged: true, intervals: 0 };
    }
    let mut heap = BinaryHeap::with_capacity(pts.len() * 4);
    let mut total = 0.0f64;
    let mut err = 0.0;
    let mut resabs = 0.0;
    for w in pts.windows(2) {
        let s = gk15(f, w[0], w[1]);
        total += s.value;
        err += s.err;
        resabs += s.resabs;
        heap.push(s);
    }
    let mut count = heap.len();
    let mut met = false;
    loop {
        // Below the round-off floor further bisection cannot help.
        let target = cfg.abs_tol.max(cfg.rel_tol * total.abs()).max(ROUNDOFF * resabs);
        if err <= target || !total.is_finite() {
            met = err <= target;
            break;
        }
        if count >= cfg.max_intervals {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at machine resolution; its error cannot be reduced.
            heap.push(Segment { err: 0.0, ..worst });
            err -= worst.err;
            continue;
        }
        let left = gk15(f, worst.a, mid);
        let right = gk15(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.err + right.err - worst.err;
        resabs += left.resabs + right.resabs - worst.resabs;
        heap.push(left);
        heap.push(right);
        count += 1;
    }
    // Re-sum to shed the drift of incremental updates. The drift can move the
    // error across the target, so the loop's verdict stands.
    let (value, abs_err, resabs) =
        heap.iter().fold((0.0, 0.0, 0.0), |(v, e, r), s| (v + s.value, e + s.err, r + s.resabs));
    let target = cfg.abs_tol.max(cfg.rel_tol * value.abs()).max(ROUNDOFF * resabs);
    QuadResult { value, abs_err, converged: (met || abs_err <= target) && value.is_finite(), intervals: heap.len() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailStatus {
    Converged,
    Diverging,
    TailTruncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    /// Mixed tolerance: a quantity is small when it is below
    /// `tol * max(scale_floor, |running total|)`.
    pub tol: f64,
    pub scale_floor: f64,
    /// Distance from the start past which non-shrinking blocks count towards
    /// divergence.
    pub t_cap: f64,
    /// Level below which `level(edge)` permits cutting the tail.
    pub cut_level: f64,
    pub max_blocks: usize,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig { tol: 1e-8, scale_floor: 1.0, t_cap: 1048576.0, cut_level: 1e-14, max_blocks: 1000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailResult {
    pub value: f64,
    pub abs_err: f64,
    pub status: TailStatus,
    pub blocks: usize,
}

/// Integrate `f` over `[start, ∞)` in blocks `[start + w(2^{j-1}), start + w 2^j]`.
///
/// `level`, when supplied, is a non-negative envelope of the integrand's
/// remaining mass at a block edge (for a survival integrand, the survival
/// itself): an exact zero ends the walk, and a value below `cut_level`
/// together with a small block ends it as well.
///
/// A block whose increment is smaller than its predecessor by a ratio
/// `rho < DIVERGENCE_RATIO` yields a geometric remainder estimate; the walk
/// converges once that remainder is small. Past `t_cap`, four consecutive
/// blocks that are not small and do not shrink by that ratio declare
/// divergence.
pub fn integrate_to_infinity<F, L>(f: &F, start: f64, width: f64, level: Option<&L>, cfg: &TailConfig) -> TailResult
where
    F: Fn(f64) -> f64 + ?Sized,
    L: Fn(f64) -> f64 + ?Sized,
{
    let quad = QuadConfig { abs_tol: 0.0, rel_tol: 0.0, max_intervals: 200 };
    let mut total = 0.0f64;
    let mut err = 0.0;
    let mut prev: Option<f64> = None;
    let mut streak = 0usize;
    let mut lo = start;
    let mut span = width;
    for block in 0..cfg.max_blocks {
        let hi = start + span;
        if !hi.is_finite() {
            break;
        }
        let scale = cfg.scale_floor.max(total.abs());
        let q = integrate(
            f,
            &[lo, hi],
            &QuadConfig { abs_tol: 1e-3 * cfg.tol * scale, rel_tol: 1e-3 * cfg.tol, ..quad },
        );
        total += q.value;
        err += q.abs_err;
        if !total.is_finite() {
            return TailResult { value: total, abs_err: f64::INFINITY, status: TailStatus::Diverging, blocks: block + 1 };
        }
        let inc = q.value.abs();
        let scale = cfg.scale_floor.max(total.abs());
        let small = inc <= cfg.tol * scale;
        if let Some(level) = level {
            let lv = level(hi);
            if lv == 0.0 || (lv < cfg.cut_level && small) {
                return TailResult { value: total, abs_err: err, status: TailStatus::Converged, blocks: block + 1 };
            }
        }
        if inc == 0.0 && prev == Some(0.0) {
            return TailResult { value: total, abs_err: err, status: TailStatus::Converged, blocks: block + 1 };
        }
        let mut shrinking = false;
        if let Some(p) = prev {
            if p > 0.0 && inc < DIVERGENCE_RATIO * p {
                shrinking = true;
                let rho = inc / p;
                let rem = inc * rho / (1.0 - rho);
                if rem <= cfg.tol * scale && small {
                    return TailResult {
                        value: total,
                        abs_err: err + rem,
                        status: TailStatus::Converged,
                        blocks: block + 1,
                    };
                }
            }
        }
        if hi - start >= cfg.t_cap && prev.is_some() {
            if !small && !shrinking {
                streak += 1;
            } else {
                streak = 0;
            }
            if streak >= DIVERGENCE_STREAK {
                return TailResult {
                    value: f64::INFINITY,
                    abs_err: f64::INFINITY,
                    status: TailStatus::Diverging,
                    blocks: block + 1,
                };
            }
        }
        prev = Some(inc);
        lo = hi;
        span *= 2.0;
    }
    TailResult { value: total, abs_err: err, status: TailStatus::TailTruncated, blocks: cfg.max_blocks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_weights_sum_to_two() {
        let k: f64 = 2.0 * WGK[..7].iter().sum::<f64>() + WGK[7];
        let g: f64 = 2.0 * WG[..3].iter().sum::<f64>() + WG[3];
        assert!((k - 2.0).abs() < 1e-15);
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gk15_is_exact_for_high_degree_polynomials() {
        // Kronrod-15 integrates degree 22 exactly.
        for deg in 0..=22 {
            let s = gk15(&|x: f64| x.powi(deg), 0.0, 1.0);
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((s.value - exact).abs() < 1e-14, "degree {deg}: {} vs {exact}", s.value);
        }
    }

    #[test]
    fn adaptive_handles_kinks_with_and_without_breakpoints() {
        let f = |x: f64| (x - 0.3).abs();
        let exact = 0.5 * (0.3f64.powi(2) + 0.7f64.powi(2));
        let with = integrate(&f, &[0.0, 0.3, 1.0], &QuadConfig::default());
        assert!((with.value - exact).abs() < 1e-15);
        let without = integrate(&f, &[0.0, 1.0], &QuadConfig::default());
        assert!(without.converged);
        assert!((without.value - exact).abs() < 1e-10);
    }

    #[test]
    fn exponential_tail_converges() {
        let f = |x: f64| (-x).exp();
        let r = integrate_to_infinity(&f, 0.0, 1.0, Some(&f), &TailConfig::default());
        assert_eq!(r.status, TailStatus::Converged);
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn power_tail_converges_via_geometric_remainder() {
        // ∫_1^∞ x^{-3} dx = 1/2; blocks shrink by 1/4.
        let f = |x: f64| x.powi(-3);
        let r = integrate_to_infinity(&f, 1.0, 1.0, None::<&fn(f64) -> f64>, &TailConfig::default());
        assert_eq!(r.status, TailStatus::Converged);
        assert!((r.value - 0.5).abs() < 1e-8);
    }

    #[test]
    fn harmonic_tail_is_flagged_diverging() {
        let f = |x: f64| 1.0 / x;
        let cfg = TailConfig { t_cap: 1024.0, ..TailConfig::default() };
        let r = integrate_to_infinity(&f, 1.0, 1.0, Some(&f), &cfg);
        assert_eq!(r.status, TailStatus::Diverging);
        assert!(r.value.is_infinite());
    }

    #[test]
    fn growing_tail_is_flagged_diverging() {
        let f = |x: f64| x.sqrt().recip();
        let r = integrate_to_infinity(&f, 1.0, 1.0, None::<&fn(f64) -> f64>, &TailConfig::default());
        assert_eq!(r.status, TailStatus::Diverging);
    }
}
