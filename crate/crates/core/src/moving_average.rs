//! Moving-average processes `X_t = Σ_j β_j Y_{t−j}` driven by i.i.d.
//! innovations, their partial sums `T_n`, and empirical checks of the
//! iterated-logarithm band `limsup |T_n|/a_n ≤ |β| σ̄_Y` with `β = Σ_j β_j`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::{ChoquetConfig, ExpectationConfig, GeneratorSet};
use crate::functionals::{functional_report, normalizer_table, sigma_bar_sq};
use crate::paths::{Policy, Sampler, ScaleSequence, StatMode};
use crate::rng::Stream;
use crate::stats::median;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Coefficients {
    /// `β_{−J}, …, β_J`; odd length.
    FiniteWindow { values: Vec<f64> },
    /// `β_j = scale · ρ^{|j|}`
    Geometric { rho: f64, scale: f64 },
    /// `β_{j_min}, β_{j_min+1}, …`
    UserArray { j_min: i64, values: Vec<f64> },
}

impl Coefficients {
    /// `β_0 = 1`
    pub fn identity() -> Self {
        Coefficients::FiniteWindow { values: vec![1.0] }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Coefficients::FiniteWindow { values } => {
                if values.len() % 2 == 0 {
                    return Err(Error::invalid("finite window needs an odd number of coefficients"));
                }
                check_finite(values)
            }
            Coefficients::Geometric { rho, scale } => {
                if !(*rho > 0.0 && *rho < 1.0) || !scale.is_finite() {
                    return Err(Error::invalid(format!("geometric coefficients need 0 < rho < 1 and finite scale, got {rho}, {scale}")));
                }
                Ok(())
            }
            Coefficients::UserArray { values, .. } => {
                if values.is_empty() {
                    return Err(Error::invalid("empty coefficient array"));
                }
                check_finite(values)
            }
        }
    }

    fn taps_finite(&self) -> Option<Vec<(i64, f64)>> {
        match self {
            Coefficients::FiniteWindow { values } => {
                let j = (values.len() / 2) as i64;
                Some(values.iter().enumerate().map(|(i, &b)| (i as i64 - j, b)).collect())
            }
            Coefficients::UserArray { j_min, values } => {
                Some(values.iter().enumerate().map(|(i, &b)| (j_min + i as i64, b)).collect())
            }
            Coefficients::Geometric { .. } => None,
        }
    }

    /// Largest `|j|` with a stored coefficient, if the support is finite.
    pub fn extent(&self) -> Option<usize> {
        self.taps_finite().map(|t| t.iter().map(|&(j, _)| j.unsigned_abs() as usize).max().unwrap_or(0))
    }

    /// `β = Σ_j β_j`
    pub fn beta_sum(&self) -> f64 {
        match self {
            Coefficients::Geometric { rho, scale } => scale * (1.0 + rho) / (1.0 - rho),
            _ => self.taps_finite().unwrap().iter().map(|t| t.1).sum(),
        }
    }

    /// `B = Σ_j |β_j|`
    pub fn abs_sum(&self) -> f64 {
        match self {
            Coefficients::Geometric { rho, scale } => scale.abs() * (1.0 + rho) / (1.0 - rho),
            _ => self.taps_finite().unwrap().iter().map(|t| t.1.abs()).sum(),
        }
    }

    /// `Σ_{|j| > m} |β_j|`
    pub fn tail_abs(&self, m: usize) -> f64 {
        match self {
            Coefficients::Geometric { rho, scale } => 2.0 * scale.abs() * rho.powi(m as i32 + 1) / (1.0 - rho),
            _ => self.taps_finite().unwrap().iter().filter(|t| t.0.unsigned_abs() as usize > m).map(|t| t.1.abs()).sum(),
        }
    }

    /// Non-zero `(j, β_j)` with `|j| ≤ m`.
    pub fn taps(&self, m: usize) -> Vec<(i64, f64)> {
        let all = match self {
            Coefficients::Geometric { rho, scale } => {
                let m = m as i64;
                (-m..=m).map(|j| (j, scale * rho.powi(j.abs() as i32))).collect()
            }
            _ => self.taps_finite().unwrap(),
        };
        all.into_iter().filter(|&(j, b)| b != 0.0 && j.unsigned_abs() as usize <= m).collect()
    }

    /// `λ β`
    pub fn scaled(&self, lambda: f64) -> Self {
        match self {
            Coefficients::FiniteWindow { values } => {
                Coefficients::FiniteWindow { values: values.iter().map(|b| lambda * b).collect() }
            }
            Coefficients::Geometric { rho, scale } => Coefficients::Geometric { rho: *rho, scale: lambda * scale },
            Coefficients::UserArray { j_min, values } => {
                Coefficients::UserArray { j_min: *j_min, values: values.iter().map(|b| lambda * b).collect() }
            }
        }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|b| b.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("coefficients must be finite"))
    }
}

/// Smallest `m` with `Σ_{|j|>m} |β_j| · mean_abs ≤ eps · x`; by the
/// first-moment bound the discarded tail then exceeds `x` with capacity at
/// most `eps`. Coefficients with finite support return their extent.
pub fn tail_cutoff(coeffs: &Coefficients, mean_abs: f64, eps: f64, x: f64) -> Result<usize> {
    coeffs.validate()?;
    if !(eps > 0.0 && x > 0.0) || !(mean_abs >= 0.0 && mean_abs.is_finite()) {
        return Err(Error::invalid("tail cutoff needs eps, x > 0 and a finite mean_abs"));
    }
    if let Some(m) = coeffs.extent() {
        return Ok(m);
    }
    let target = eps * x;
    (0..100_000)
        .find(|&m| coeffs.tail_abs(m) * mean_abs <= target)
        .ok_or_else(|| Error::invalid("tail cutoff did not terminate"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// `Y_t = 0` for `t ≤ 0`.
    #[default]
    OneSided,
    /// Innovations at non-positive times are drawn as well.
    BiDirectional,
}

/// Innovations `Y_t` for `t = start, start+1, …`; zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct Innovations {
    pub start: i64,
    pub values: Vec<f64>,
}

impl Innovations {
    /// One-sided innovations `Y_1, Y_2, …`.
    pub fn from_positive(values: Vec<f64>) -> Self {
        Innovations { start: 1, values }
    }

    #[inline]
    pub fn at(&self, t: i64) -> f64 {
        let i = t - self.start;
        if i < 0 {
            0.0
        } else {
            self.values.get(i as usize).copied().unwrap_or(0.0)
        }
    }

    pub fn negated(&self) -> Self {
        Innovations { start: self.start, values: self.values.iter().map(|y| -y).collect() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaPath {
    pub innovations: Innovations,
    /// `X_1, …, X_N`
    pub x: Vec<f64>,
    /// `T_1, …, T_N`
    pub t: Vec<f64>,
    pub cutoff: usize,
}

/// Convolve with the taps `|j| ≤ m` and accumulate `T_n`.
pub fn ma_from_innovations(y: Innovations, coeffs: &Coefficients, m: usize, n: usize) -> MaPath {
    let taps = coeffs.taps(m);
    let mut x = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut acc = 0.0;
    for time in 1..=n as i64 {
        let v: f64 = taps.iter().map(|&(j, b)| b * y.at(time - j)).sum();
        acc += v;
        x.push(v);
        t.push(acc);
    }
    MaPath { innovations: y, x, t, cutoff: m }
}

/// Draw innovations `Y_t` for `t ≤ n + m` under `policy` (and, for the
/// bi-directional convention, `t > −m` from a separate lane).
pub fn draw_innovations(
    gen: &GeneratorSet,
    policy: &Policy,
    n: usize,
    m: usize,
    convention: Boundary,
    master: u64,
    index: u64,
    table: Option<Arc<Vec<f64>>>,
) -> Result<Innovations> {
    let len = n + m;
    let table = table.filter(|a| a.len() > len).unwrap_or_else(|| Arc::new(normalizer_table(len)));
    let ones = ScaleSequence::Ones;
    let sampler = Sampler::with_table(gen, policy, &ones, 1.0, StatMode::Absolute, len, table.clone())?;
    let mut pos = Vec::with_capacity(len);
    sampler.run(len, &mut Stream::new(master, index, 0), |_, x, _, _, _| pos.push(x));
    match convention {
        Boundary::OneSided => Ok(Innovations::from_positive(pos)),
        Boundary::BiDirectional => {
            let mut neg = Vec::with_capacity(m + len);
            if m > 0 {
                sampler.run(m, &mut Stream::new(master, index, 1), |_, x, _, _, _| neg.push(x));
            }
            // neg[i] is Y_{−i}
            neg.reverse();
            neg.extend(pos);
            Ok(Innovations { start: 1 - m as i64, values: neg })
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_ma(
    coeffs: &Coefficients,
    gen: &GeneratorSet,
    policy: &Policy,
    n: usize,
    m: usize,
    master: u64,
    index: u64,
    convention: Boundary,
) -> Result<MaPath> {
    coeffs.validate()?;
    let y = draw_innovations(gen, policy, n, m, convention, master, index, None)?;
    Ok(ma_from_innovations(y, coeffs, m, n))
}

/// Inclusive range `[n0, n]` of partial-sum indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub n0: usize,
    pub n: usize,
}

impl Window {
    /// `[⌊√N⌋, N]`
    pub fn sqrt(n: usize) -> Self {
        Window { n0: ((n as f64).sqrt().floor() as usize).max(1), n }
    }

    fn check(&self, len: usize) -> Result<()> {
        if self.n0 == 0 || self.n0 > self.n || self.n > len {
            return Err(Error::invalid(format!("window [{}, {}] outside path of length {len}", self.n0, self.n)));
        }
        Ok(())
    }
}

/// `max_{n in window} |T_n − β Σ_{t≤n} Y_t| / a_n`
pub fn approx_residual(path: &MaPath, coeffs: &Coefficients, window: Window, a: &[f64]) -> Result<f64> {
    window.check(path.t.len())?;
    let beta = coeffs.beta_sum();
    let mut s = 0.0;
    let mut best = 0.0f64;
    for k in 1..=window.n {
        s += path.innovations.at(k as i64);
        if k >= window.n0 {
            best = best.max((path.t[k - 1] - beta * s).abs() / a[k]);
        }
    }
    Ok(best)
}

/// `max_{n in window} |T_n| / a_n`
pub fn max_normalized(path: &MaPath, window: Window, a: &[f64]) -> Result<f64> {
    window.check(path.t.len())?;
    Ok((window.n0..=window.n).map(|k| path.t[k - 1].abs() / a[k]).fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilConfig {
    pub n: usize,
    /// Start of the window; `⌊√N⌋` when absent.
    #[serde(default)]
    pub n0: Option<usize>,
    pub seeds: usize,
    pub master_seed: u64,
    #[serde(default = "default_cut_eps")]
    pub cut_eps: f64,
    #[serde(default = "default_cut_x")]
    pub cut_x: f64,
    #[serde(default)]
    pub convention: Boundary,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_cut_eps() -> f64 {
    1e-6
}

fn default_cut_x() -> f64 {
    1.0
}

fn default_bins() -> usize {
    20
}

impl LilConfig {
    pub fn window(&self) -> Window {
        match self.n0 {
            Some(n0) => Window { n0, n: self.n },
            None => Window::sqrt(self.n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub max_over_window: f64,
    pub residual: f64,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilReport {
    pub per_seed: Vec<SeedSummary>,
    pub median: f64,
    pub median_residual: f64,
    /// `|β| σ̄_Y`
    pub target: f64,
    pub beta_sum: f64,
    pub sigma_bar: f64,
    pub cutoff: usize,
    pub window: Window,
    /// Premises of the iterated-logarithm theorem that failed.
    pub warnings: Vec<String>,
    pub coverage: CoverageReport,
}

impl LilReport {
    pub fn csv(&self) -> Result<String> {
        crate::report::csv_string(&self.per_seed)
    }
}

/// Visit counts of `T_n/a_n` over the window in equal bins on
/// `[−target, target]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub centers: Vec<f64>,
    pub totals: Vec<u64>,
    pub per_seed: Vec<Vec<u64>>,
    pub below: u64,
    pub above: u64,
}

impl CoverageReport {
    fn empty(bins: usize, target: f64) -> Self {
        let bins = if target > 0.0 { bins } else { 1 };
        let w = 2.0 * target / bins as f64;
        CoverageReport {
            centers: (0..bins).map(|i| -target + (i as f64 + 0.5) * w).collect(),
            totals: vec![0; bins],
            per_seed: Vec::new(),
            below: 0,
            above: 0,
        }
    }

    /// Every bin whose center satisfies `|center| ≤ frac · target` was
    /// visited by at least one path point.
    pub fn interior_visited(&self, frac: f64) -> bool {
        let target = self.centers.last().map_or(0.0, |c| c.abs()) + self.half_width();
        self.centers.iter().zip(&self.totals).all(|(c, &n)| c.abs() > frac * target || n > 0)
    }

    fn half_width(&self) -> f64 {
        match self.centers.as_slice() {
            [a, b, ..] => (b - a) / 2.0,
            _ => 0.0,
        }
    }

    /// Mirror-symmetry of the histogram with seeds as independent units:
    /// for each pair of mirrored bins the per-seed differences `d_s` must
    /// satisfy `|Σ d_s| ≤ k √(Σ d_s²)`.
    pub fn symmetric(&self, k: f64) -> bool {
        let bins = self.totals.len();
        (0..bins / 2).all(|i| {
            let (sum, sq) = self.per_seed.iter().fold((0.0, 0.0), |(s, q), h| {
                let d = h[i] as f64 - h[bins - 1 - i] as f64;
                (s + d, q + d * d)
            });
            sum.abs() <= k * sq.sqrt()
        })
    }
}

fn histogram(path: &MaPath, window: Window, a: &[f64], target: f64, bins: usize) -> (Vec<u64>, u64, u64) {
    let bins = if target > 0.0 { bins } else { 1 };
    let mut h = vec![0u64; bins];
    let (mut below, mut above) = (0, 0);
    for k in window.n0..=window.n {
        let v = path.t[k - 1] / a[k];
        if target > 0.0 {
            let pos = (v + target) / (2.0 * target) * bins as f64;
            if pos < 0.0 {
                below += 1;
            } else if pos >= bins as f64 {
                above += 1;
            } else {
                h[pos as usize] += 1;
            }
        } else if v == 0.0 {
            h[0] += 1;
        } else if v < 0.0 {
            below += 1;
        } else {
            above += 1;
        }
    }
    (h, below, above)
}

/// Premises on the innovations: zero upper and lower means and finite
/// `σ̄²` and `ς`.
pub fn premise_warnings(gen: &GeneratorSet) -> Result<Vec<String>> {
    let rep = functional_report(gen, 2.0, &ChoquetConfig::default())?;
    let mut w = Vec::new();
    if rep.mean_upper.value.abs() > 1e-8 || rep.mean_lower.value.abs() > 1e-8 {
        w.push(format!("innovation means are not zero: upper {}, lower {}", rep.mean_upper.value, rep.mean_lower.value));
    }
    if !rep.sigma_bar_sq.is_finite() {
        w.push("upper variance is infinite".into());
    }
    if !rep.varsigma.is_finite() {
        w.push("varsigma is infinite".into());
    }
    Ok(w)
}

/// Simulate `seeds` paths and compare `max_{window} |T_n|/a_n` with
/// `|β| σ̄_Y`. Under a non-singleton generator set the paths follow one
/// fixed policy, so the result is lower evidence only.
pub fn lil_estimate(coeffs: &Coefficients, gen: &GeneratorSet, policy: &Policy, cfg: &LilConfig) -> Result<LilReport> {
    coeffs.validate()?;
    if cfg.seeds == 0 || cfg.n == 0 || cfg.bins == 0 {
        return Err(Error::invalid("need at least one seed, n >= 1 and one bin"));
    }
    let window = cfg.window();
    window.check(cfg.n)?;
    let warnings = premise_warnings(gen)?;
    let sbar_sq = sigma_bar_sq(gen, &ExpectationConfig::default())?;
    let sigma_bar = sbar_sq.value.sqrt();
    let beta_sum = coeffs.beta_sum();
    let target = beta_sum.abs() * sigma_bar;
    let mean_abs = gen.upper_expectation(&crate::test_function::TestFunction::abs(), &ExpectationConfig::default())?;
    let m = tail_cutoff(coeffs, mean_abs, cfg.cut_eps, cfg.cut_x)?;
    let a = Arc::new(normalizer_table(cfg.n + m));

    let runs: Vec<(SeedSummary, (Vec<u64>, u64, u64))> = (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|s| -> Result<_> {
            let y = draw_innovations(gen, policy, cfg.n, m, cfg.convention, cfg.master_seed, s, Some(a.clone()))?;
            let path = ma_from_innovations(y, coeffs, m, cfg.n);
            let summary = SeedSummary {
                seed: s,
                max_over_window: max_normalized(&path, window, &a)?,
                residual: approx_residual(&path, coeffs, window, &a)?,
                target,
            };
            Ok((summary, histogram(&path, window, &a, target, cfg.bins)))
        })
        .collect::<Result<_>>()?;

    let mut coverage = CoverageReport::empty(cfg.bins, target);
    let mut per_seed = Vec::with_capacity(runs.len());
    for (summary, (h, below, above)) in runs {
        for (tot, c) in coverage.totals.iter_mut().zip(&h) {
            *tot += c;
        }
        coverage.below += below;
        coverage.above += above;
        coverage.per_seed.push(h);
        per_seed.push(summary);
    }
    let maxes: Vec<f64> = per_seed.iter().map(|s| s.max_over_window).collect();
    let residuals: Vec<f64> = per_seed.iter().map(|s| s.residual).collect();
    Ok(LilReport {
        median: median(&maxes),
        median_residual: median(&residuals),
        per_seed,
        target,
        beta_sum,
        sigma_bar,
        cutoff: m,
        window,
        warnings,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::normalizer;

    #[test]
    fn hand_convolution_and_residual() {
        let c = Coefficients::UserArray { j_min: 0, values: vec![0.5, 0.5] };
        let p = ma_from_innovations(Innovations::from_positive(vec![1.0, 2.0, 3.0]), &c, 1, 3);
        assert_eq!(p.x, vec![0.5, 1.5, 2.5]);
        assert_eq!(p.t[2], 4.5);
        let a = normalizer_table(3);
        let r = approx_residual(&p, &c, Window { n0: 3, n: 3 }, &a).unwrap();
        assert!((r - 1.5 / 6f64.sqrt()).abs() < 1e-15);
        assert!((r - 0.61237).abs() < 1e-5);
        assert_eq!(normalizer(3), 6f64.sqrt());
    }

    #[test]
    fn cutoff_examples() {
        let w = Coefficients::FiniteWindow { values: vec![0.1; 11] };
        assert_eq!(tail_cutoff(&w, 1.0, 1e-9, 1.0).unwrap(), 5);
        let g = Coefficients::Geometric { rho: 0.5, scale: 1.0 };
        assert_eq!(g.abs_sum(), 3.0);
        assert_eq!(g.beta_sum(), 3.0);
        assert_eq!(tail_cutoff(&g, 1.0, 0.01, 1.0).unwrap(), 8);
        assert_eq!(tail_cutoff(&g, 1.0, 3.0, 1.0).unwrap(), 0);
        assert!((g.tail_abs(7) - 2f64.powi(-6)).abs() < 1e-15);
    }

    #[test]
    fn identity_and_zero_coefficients() {
        let y = Innovations::from_positive(vec![0.3, -1.0, 2.0, 0.25]);
        let id = ma_from_innovations(y.clone(), &Coefficients::identity(), 0, 4);
        assert_eq!(id.t, vec![0.3, -0.7, 1.3, 1.55]);
        let a = normalizer_table(4);
        assert_eq!(approx_residual(&id, &Coefficients::identity(), Window { n0: 1, n: 4 }, &a).unwrap(), 0.0);
        let zero = ma_from_innovations(y, &Coefficients::FiniteWindow { values: vec![0.0; 3] }, 1, 4);
        assert!(zero.t.iter().all(|&t| t == 0.0));
    }
}
