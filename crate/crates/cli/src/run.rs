//! Dispatch of a resolved configuration and the run report.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use sublin::bounds::{blocking_bound, integrated_bound, theorem_a_bracket, BlockingInputs};
use sublin::expectation::{default_schedule, ChoquetConfig, ExpectationConfig};
use sublin::functionals::{
    default_checkpoints, eta, functional_report, series_excess_moment, series_truncated_moment, sigma_bar_sq,
    varsigma,
};
use sublin::moving_average::{lil_estimate, simulate_ma, tail_cutoff, LilConfig};
use sublin::paths::{
    brute_force_upper, exact_dp_upper, mc_choquet_max_moment, plateau_divergence_probe, AbsPartialSum, MaxStat,
    MaxStatConfig, NamedPolicy, PartialSum, PathFunctional, Policy, ProbeConfig, ScaleSequence, Scaled, StatMode,
    DEFAULT_STATE_CAP,
};
use sublin::report::csv_string;
use sublin::{GeneratorSet, TestFunction};

use crate::config::{
    BoundParams, ChoquetParams, DpParams, ExperimentConfig, FunctionalsParams, MaLilParams, Params, PathSpec,
    PolicySpec, ProbeParams, Resolved, SeriesKind, SeriesParams, SimulateParams, SCHEMA_VERSION,
};
use crate::error::{CliError, CliResult};
use crate::verify::{run_suite, CheckOutcome};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    /// See [`config_hash`].
    pub config_hash: String,
    pub results: Value,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<Vec<CheckOutcome>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.error.is_some() {
            1
        } else if self.verdicts.as_ref().is_some_and(|v| v.iter().any(|c| !c.passed)) {
            2
        } else {
            0
        }
    }
}

pub struct Outcome {
    pub report: RunReport,
    /// `(file stem, CSV text)`
    pub tables: Vec<(String, String)>,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
}

#[derive(Default)]
struct Dispatched {
    results: Value,
    tables: Vec<(String, String)>,
    summary: Vec<String>,
    verdicts: Option<Vec<CheckOutcome>>,
}

/// SHA-256 of the configuration without its output directory, which does not
/// affect results.
pub fn config_hash(config: &ExperimentConfig) -> CliResult<String> {
    let keyed = ExperimentConfig { out: None, ..config.clone() };
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&keyed)?)))
}

/// Run on a dedicated pool of `config.threads` workers. Module errors end up
/// in the report rather than aborting.
pub fn run(resolved: &Resolved) -> CliResult<Outcome> {
    let start = Instant::now();
    let hash = config_hash(&resolved.config)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(resolved.config.threads).build()?;
    let result = pool.install(|| dispatch(resolved));
    let wall = start.elapsed().as_secs_f64();
    let (d, error) = match result {
        Ok(d) => (d, None),
        Err(e) => (Dispatched { summary: vec![format!("error: {e}")], ..Default::default() }, Some(e.to_string())),
    };
    Ok(Outcome {
        report: RunReport {
            schema_version: SCHEMA_VERSION,
            config: resolved.config.clone(),
            config_hash: hash,
            results: d.results,
            wall_time_s: wall,
            verdicts: d.verdicts,
            error,
        },
        tables: d.tables,
        summary: d.summary,
    })
}

/// Write `report.json` and the CSV tables into `dir`.
pub fn write_outputs(outcome: &Outcome, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&outcome.report)?)?;
    for (name, csv) in &outcome.tables {
        fs::write(dir.join(format!("{name}.csv")), csv)?;
    }
    Ok(())
}

fn dispatch(resolved: &Resolved) -> CliResult<Dispatched> {
    let gen = resolved.config.dist.as_ref().map(|d| d.generators());
    let seed = resolved.config.seed;
    let need = || gen.clone().ok_or_else(|| CliError::Invalid("missing distribution".into()));
    match &resolved.params {
        Params::Choquet(p) => choquet(&need()?, p),
        Params::Functionals(p) => functionals(&need()?, p),
        Params::Series(p) => series(&need()?, p),
        Params::Bound(p) => bound(&need()?, p),
        Params::Dp(p) => dp(&need()?, p),
        Params::Simulate(p) => simulate(&need()?, p, seed),
        Params::Probe(p) => probe(&need()?, p, seed),
        Params::MaLil(p) => ma_lil(&need()?, p, seed),
        Params::Verify(suite) => {
            let outcomes = run_suite(suite, seed)?;
            let summary = outcomes.iter().map(CheckOutcome::line).collect();
            let rows: Vec<_> = outcomes
                .iter()
                .map(|c| VerdictRow { id: c.id, name: c.name.clone(), passed: c.passed, summary: c.summary.clone() })
                .collect();
            Ok(Dispatched {
                results: serde_json::to_value(&outcomes)?,
                tables: vec![("verdicts".into(), csv_string(&rows)?)],
                summary,
                verdicts: Some(outcomes),
            })
        }
    }
}

#[derive(Serialize)]
struct VerdictRow {
    id: u32,
    name: String,
    passed: bool,
    summary: String,
}

fn choquet(gen: &GeneratorSet, p: &ChoquetParams) -> CliResult<Dispatched> {
    let cfg = ChoquetConfig::relative(p.tol);
    let c = match &p.transform {
        Some(t) => gen.choquet_abs_transform(t, &cfg)?,
        None => gen.choquet(&cfg)?,
    };
    let ecfg = ExpectationConfig { rel_tol: p.tol, ..ExpectationConfig::default() };
    let up = gen.extended_expectation(&TestFunction::identity(), &default_schedule(), 1e-9, &ecfg)?;
    let down = gen.extended_expectation(&TestFunction::identity().neg(), &default_schedule(), 1e-9, &ecfg)?;
    Ok(Dispatched {
        summary: vec![
            format!("choquet = {} ({:?})", c.value, c.status),
            format!("upper mean = {}, lower mean = {}", up.value, 0.0 - down.value),
        ],
        results: json!({ "choquet": c, "upper_mean": up, "lower_mean_negated": down }),
        ..Default::default()
    })
}

fn functionals(gen: &GeneratorSet, p: &FunctionalsParams) -> CliResult<Dispatched> {
    let rep = functional_report(gen, p.r, &ChoquetConfig::relative(p.tol))?;
    Ok(Dispatched {
        summary: vec![
            format!("sigma_bar^2 = {}", rep.sigma_bar_sq.value),
            format!("varsigma = {}", rep.varsigma.value),
            format!("eta_{} = {}", p.r, rep.eta.value),
            format!("consistent = {}", rep.consistent()),
        ],
        results: json!({ "report": rep, "consistent": rep.consistent() }),
        ..Default::default()
    })
}

fn series(gen: &GeneratorSet, p: &SeriesParams) -> CliResult<Dispatched> {
    let cps = p.checkpoints.clone().unwrap_or_else(|| default_checkpoints(p.n_max));
    let curve = match p.kind {
        SeriesKind::Truncated => series_truncated_moment(gen, p.p, p.delta, p.n_max, &cps)?,
        SeriesKind::Excess => series_excess_moment(gen, p.r, p.n_max, &cps, &ChoquetConfig::relative(p.tol))?,
    };
    Ok(Dispatched {
        summary: vec![format!("{}: total {} over n <= {}, cauchy = {}", curve.label, curve.total, p.n_max, curve.cauchy)],
        tables: vec![("series".into(), curve.csv()?)],
        results: serde_json::to_value(&curve)?,
        ..Default::default()
    })
}

#[derive(Serialize)]
struct BlockCsv {
    z: f64,
    k: u32,
    n_k: u64,
    g1: f64,
    g2: f64,
    g3: f64,
}

fn bound(gen: &GeneratorSet, p: &BoundParams) -> CliResult<Dispatched> {
    let ecfg = ExpectationConfig::default();
    let sbar = sigma_bar_sq(gen, &ecfg)?.value;
    if !sbar.is_finite() {
        return Err(CliError::Invalid("the blocking bound needs a finite upper variance".into()));
    }
    let mut reports = Vec::with_capacity(p.z.len());
    let mut rows = Vec::new();
    let mut summary = vec!["z, g1, g2, g3, total".to_string()];
    for &z in &p.z {
        let b = blocking_bound(&BlockingInputs { r: p.r, p: p.p, z, k_max: p.k_max, sigma_bar_sq: sbar }, gen)?;
        summary.push(format!("{z}, {:.6e}, {:.6e}, {:.6e}, {:.6e}", b.g1, b.g2, b.g3, b.total));
        rows.extend(b.blocks.iter().map(|r| BlockCsv { z, k: r.k, n_k: r.n_k, g1: r.g1, g2: r.g2, g3: r.g3 }));
        reports.push(b);
    }
    let cfg = ChoquetConfig::default();
    let vs = varsigma(gen, &cfg)?.value;
    let et = eta(gen, p.r, &cfg)?.value;
    let bracket = if vs.is_finite() && et.is_finite() {
        theorem_a_bracket(vs, et, sbar.sqrt(), p.r, p.p)?
    } else {
        f64::INFINITY
    };
    summary.push(format!("bracket eta + varsigma^(r/p) + sigma_bar^r = {bracket}"));
    let integrated = if p.integrated { Some(integrated_bound(gen, p.r, p.p, sbar, p.k_max)?) } else { None };
    if let Some(i) = &integrated {
        summary.push(format!("integral of 1 ∧ bound over z = {} (converged: {})", i.value, i.converged));
    }
    Ok(Dispatched {
        results: json!({
            "sigma_bar_sq": sbar,
            "varsigma": ext(vs),
            "eta": ext(et),
            "bracket": ext(bracket),
            "bounds": reports,
            "integrated": integrated,
        }),
        tables: vec![("blocks".into(), csv_string(&rows)?)],
        summary,
        ..Default::default()
    })
}

fn run_dp<F: PathFunctional>(gen: &GeneratorSet, f: &F, p: &DpParams) -> CliResult<Dispatched> {
    let res = exact_dp_upper(gen, f, p.n, p.state_cap)?;
    let brute = if p.brute_force { Some(brute_force_upper(gen, f, p.n)?) } else { None };
    let mut summary = vec![format!("{:.6}", res.value)];
    if let Some(b) = brute {
        summary.push(format!("brute force: {b:.6}"));
    }
    Ok(Dispatched {
        results: json!({
            "functional": f.label(),
            "value": res.value,
            "states_per_level": res.states_per_level,
            "brute_force": brute,
        }),
        summary,
        ..Default::default()
    })
}

fn dp(gen: &GeneratorSet, p: &DpParams) -> CliResult<Dispatched> {
    match p.functional {
        PathSpec::PartialSum => run_dp(gen, &PartialSum, p),
        PathSpec::AbsPartialSum => run_dp(gen, &AbsPartialSum, p),
        PathSpec::MaxStat { r, mode } => run_dp(gen, &MaxStat { r, mode }, p),
    }
}

/// Build a sampling policy; `Dp` solves the exact programme for the
/// max-statistic with the given parameters.
pub fn build_policy(
    spec: &PolicySpec,
    gen: &GeneratorSet,
    n: usize,
    r: f64,
    mode: StatMode,
    scale: &ScaleSequence,
) -> CliResult<NamedPolicy> {
    let (label, policy) = match spec {
        PolicySpec::Constant { index } => (format!("constant:{index}"), Policy::Constant(*index)),
        PolicySpec::Cyclic { order } => (format!("cyclic:{order:?}"), Policy::Cyclic(order.clone())),
        PolicySpec::Greedy => ("greedy".to_string(), Policy::greedy(gen)?),
        PolicySpec::Dp => {
            let f = Scaled { inner: MaxStat { r, mode }, scale: scale.clone() };
            let table = exact_dp_upper(gen, &f, n, DEFAULT_STATE_CAP)?.policy;
            ("dp".to_string(), Policy::DpDerived(Arc::new(table)))
        }
    };
    Ok(NamedPolicy { label, policy })
}

fn simulate(gen: &GeneratorSet, p: &SimulateParams, seed: u64) -> CliResult<Dispatched> {
    let specs = p
        .policies
        .clone()
        .unwrap_or_else(|| (0..gen.len()).map(|index| PolicySpec::Constant { index }).collect());
    let named: Vec<NamedPolicy> =
        specs.iter().map(|s| build_policy(s, gen, p.n, p.r, p.mode, &p.scale)).collect::<CliResult<_>>()?;
    let cfg = MaxStatConfig { n: p.n, r: p.r, mode: p.mode, scale: p.scale.clone(), seed, replications: p.replications };
    let est = mc_choquet_max_moment(gen, &named, &cfg)?;
    let mut summary: Vec<String> = est
        .per_policy
        .iter()
        .map(|e| format!("{}: {:.6} ± {:.6}", e.policy, e.mean, e.se))
        .collect();
    summary.push(format!("envelope (lower estimate) = {:.6} via {}", est.envelope, est.envelope_policy));
    Ok(Dispatched {
        tables: vec![("policies".into(), csv_string(&est.per_policy)?), ("survival".into(), csv_string(&est.survival)?)],
        results: serde_json::to_value(&est)?,
        summary,
        ..Default::default()
    })
}

fn probe(gen: &GeneratorSet, p: &ProbeParams, seed: u64) -> CliResult<Dispatched> {
    let n = 1usize << p.k_max.min(30);
    let policy = build_policy(&p.policy, gen, n, p.r, p.mode, &ScaleSequence::Ones)?;
    let cfg = ProbeConfig {
        r: p.r,
        mode: p.mode,
        k_min: p.k_min,
        k_max: p.k_max,
        replications: p.replications,
        seed,
        plateau_tol: p.plateau_tol,
        growth_tol: p.growth_tol,
    };
    let rep = plateau_divergence_probe(gen, &policy.policy, &cfg)?;
    let mut summary: Vec<String> = rep.curve.iter().map(|c| format!("N = {}: {:.6} ± {:.6}", c.n, c.mean, c.se)).collect();
    summary.push(format!("verdict: {:?}", rep.verdict));
    Ok(Dispatched {
        tables: vec![("probe".into(), csv_string(&rep.curve)?)],
        results: serde_json::to_value(&rep)?,
        summary,
        ..Default::default()
    })
}

#[derive(Serialize)]
struct CoverageRow {
    center: f64,
    visits: u64,
}

#[derive(Serialize)]
struct PathRow {
    seed: u64,
    n: usize,
    t_n: f64,
}

fn ma_lil(gen: &GeneratorSet, p: &MaLilParams, seed: u64) -> CliResult<Dispatched> {
    let policy = match &p.policy {
        PolicySpec::Dp => return Err(CliError::Invalid("the dp policy is not available for innovations".into())),
        spec => build_policy(spec, gen, p.n, 1.0, StatMode::Absolute, &ScaleSequence::Ones)?,
    };
    let cfg = LilConfig {
        n: p.n,
        n0: p.n0,
        seeds: p.seeds,
        master_seed: seed,
        cut_eps: p.cut_eps,
        cut_x: p.cut_x,
        convention: p.convention,
        bins: p.bins,
    };
    let rep = lil_estimate(&p.coefficients, gen, &policy.policy, &cfg)?;
    let mut summary = vec![
        format!("median of max |T_n|/a_n over [{}, {}] = {:.6}", rep.window.n0, rep.window.n, rep.median),
        format!("target |beta| sigma_bar = {:.6} (ratio {:.4})", rep.target, rep.median / rep.target),
        format!("median residual = {:.6}", rep.median_residual),
    ];
    summary.extend(rep.warnings.iter().map(|w| format!("warning: {w}")));
    let coverage: Vec<CoverageRow> = rep
        .coverage
        .centers
        .iter()
        .zip(&rep.coverage.totals)
        .map(|(&center, &visits)| CoverageRow { center, visits })
        .collect();
    let mut tables = vec![("per_seed".into(), rep.csv()?), ("coverage".into(), csv_string(&coverage)?)];
    if p.dump_paths {
        summary.push(format!("warning: dumping {} paths of length {} (about {} MB)", p.seeds, p.n, p.seeds * p.n * 24 / 1_000_000));
        let mean_abs = gen.upper_expectation(&TestFunction::abs(), &ExpectationConfig::default())?;
        let m = tail_cutoff(&p.coefficients, mean_abs, p.cut_eps, p.cut_x)?;
        let mut rows = Vec::new();
        for s in 0..p.seeds as u64 {
            let path = simulate_ma(&p.coefficients, gen, &policy.policy, p.n, m, seed, s, p.convention)?;
            rows.extend(path.t.iter().enumerate().map(|(i, &t_n)| PathRow { seed: s, n: i + 1, t_n }));
        }
        tables.push(("paths".into(), csv_string(&rows)?));
    }
    Ok(Dispatched { results: serde_json::to_value(&rep)?, tables, summary, ..Default::default() })
}

/// Extended real as JSON: a number, or `"inf"`, `"-inf"`, `"nan"`.
fn ext(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}
