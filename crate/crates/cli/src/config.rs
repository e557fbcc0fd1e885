//! Experiment configuration: JSON schema, defaults, overrides, validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sublin::expectation::AbsTransform;
use sublin::moving_average::{Boundary, Coefficients};
use sublin::paths::{ScaleSequence, StatMode};
use sublin::{GeneratorSet, Measure};

use crate::error::{CliError, CliResult};
use crate::verify::SuiteConfig;

/// Version of the report and configuration layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Bundled defaults for the verification suite.
pub const VERIFY_DEFAULTS: &str = include_str!("../defaults/verify.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Choquet,
    Functionals,
    Series,
    Bound,
    Dp,
    Simulate,
    Probe,
    MaLil,
    Verify,
}

/// A generator set, or a single law standing for the singleton set.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistSpec {
    Set(GeneratorSet),
    Single(Measure),
}

impl DistSpec {
    pub fn generators(&self) -> GeneratorSet {
        match self {
            DistSpec::Set(g) => g.clone(),
            DistSpec::Single(m) => GeneratorSet::singleton(m.clone()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Subcommand parameters; resolved to the full typed form with defaults.
    #[serde(default = "empty_object")]
    pub params: Value,
}

fn one() -> usize {
    1
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoquetParams {
    /// Integrate `h(|X|)` instead of `X`.
    #[serde(default)]
    pub transform: Option<AbsTransform>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalsParams {
    #[serde(default = "two")]
    pub r: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    Truncated,
    Excess,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesParams {
    pub kind: SeriesKind,
    #[serde(default = "four")]
    pub p: f64,
    #[serde(default = "one_f")]
    pub delta: f64,
    #[serde(default = "one_f")]
    pub r: f64,
    #[serde(default = "two_pow_20")]
    pub n_max: u64,
    /// Defaults to powers of two.
    #[serde(default)]
    pub checkpoints: Option<Vec<u64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub r: f64,
    pub p: f64,
    #[serde(default = "default_z")]
    pub z: Vec<f64>,
    #[serde(default = "forty")]
    pub k_max: u32,
    #[serde(default)]
    pub integrated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PathSpec {
    PartialSum,
    AbsPartialSum,
    MaxStat { r: f64, mode: StatMode },
}

impl Default for PathSpec {
    fn default() -> Self {
        PathSpec::MaxStat { r: 1.0, mode: StatMode::Positive }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpParams {
    pub n: usize,
    #[serde(default)]
    pub functional: PathSpec,
    #[serde(default = "state_cap")]
    pub state_cap: usize,
    /// Also run the brute-force oracle (small instances only).
    #[serde(default)]
    pub brute_force: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PolicySpec {
    Constant { index: usize },
    Cyclic { order: Vec<usize> },
    /// Largest mean while the sum is non-negative, largest second moment
    /// otherwise.
    Greedy,
    /// Optimal selections from the exact programme (discrete laws only).
    Dp,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec::Constant { index: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub n: usize,
    #[serde(default = "one_f")]
    pub r: f64,
    #[serde(default = "positive")]
    pub mode: StatMode,
    #[serde(default = "ten_thousand")]
    pub replications: usize,
    /// Defaults to one constant policy per generator.
    #[serde(default)]
    pub policies: Option<Vec<PolicySpec>>,
    #[serde(default)]
    pub scale: ScaleSequence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeParams {
    #[serde(default = "one_f")]
    pub r: f64,
    #[serde(default = "absolute")]
    pub mode: StatMode,
    #[serde(default = "ten")]
    pub k_min: u32,
    #[serde(default = "twenty")]
    pub k_max: u32,
    #[serde(default = "two_hundred")]
    pub replications: usize,
    #[serde(default = "five_percent")]
    pub plateau_tol: f64,
    #[serde(default = "half")]
    pub growth_tol: f64,
    #[serde(default)]
    pub policy: PolicySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaLilParams {
    #[serde(default = "Coefficients::identity")]
    pub coefficients: Coefficients,
    #[serde(default = "two_pow_20_usize")]
    pub n: usize,
    #[serde(default)]
    pub n0: Option<usize>,
    #[serde(default = "sixty_four")]
    pub seeds: usize,
    #[serde(default = "cut_eps")]
    pub cut_eps: f64,
    #[serde(default = "one_f")]
    pub cut_x: f64,
    #[serde(default)]
    pub convention: Boundary,
    #[serde(default = "twenty_usize")]
    pub bins: usize,
    #[serde(default)]
    pub policy: PolicySpec,
    /// Write every path's `T_n` to CSV; 2^20 steps are about 20 MB per seed.
    #[serde(default)]
    pub dump_paths: bool,
}

fn default_tol() -> f64 {
    1e-8
}
fn two() -> f64 {
    2.0
}
fn four() -> f64 {
    4.0
}
fn one_f() -> f64 {
    1.0
}
fn two_pow_20() -> u64 {
    1 << 20
}
fn two_pow_20_usize() -> usize {
    1 << 20
}
fn default_z() -> Vec<f64> {
    vec![1.0, 4.0, 16.0, 64.0]
}
fn forty() -> u32 {
    40
}
fn state_cap() -> usize {
    sublin::paths::DEFAULT_STATE_CAP
}
fn positive() -> StatMode {
    StatMode::Positive
}
fn absolute() -> StatMode {
    StatMode::Absolute
}
fn ten_thousand() -> usize {
    10_000
}
fn ten() -> u32 {
    10
}
fn twenty() -> u32 {
    20
}
fn twenty_usize() -> usize {
    20
}
fn two_hundred() -> usize {
    200
}
fn five_percent() -> f64 {
    0.05
}
fn half() -> f64 {
    0.5
}
fn sixty_four() -> usize {
    64
}
fn cut_eps() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    Choquet(ChoquetParams),
    Functionals(FunctionalsParams),
    Series(SeriesParams),
    Bound(BoundParams),
    Dp(DpParams),
    Simulate(SimulateParams),
    Probe(ProbeParams),
    MaLil(MaLilParams),
    Verify(SuiteConfig),
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub subcommand: Option<Subcommand>,
    pub dist: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// `name=value` pairs; `name` is a dotted path into the parameters.
    pub tolerances: Vec<String>,
}

/// A validated configuration with every default filled in.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub params: Params,
}

fn typed<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| CliError::Config {
        path: format!("{prefix}.{}", e.path()),
        message: e.inner().to_string(),
    })
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn set_path(root: &mut Value, spec: &str, must_exist: bool) -> CliResult<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Invalid(format!("tolerance override `{spec}` is not name=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Invalid(format!("override `{path}`: `{key}` is not inside an object")))?;
        if i + 1 == keys.len() {
            if must_exist && !obj.contains_key(*key) {
                return Err(CliError::Config { path: format!("params.{path}"), message: "unknown setting".into() });
            }
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        if !obj.contains_key(*key) {
            if must_exist {
                return Err(CliError::Config { path: format!("params.{path}"), message: "unknown setting".into() });
            }
            obj.insert(key.to_string(), empty_object());
        }
        cur = obj.get_mut(*key).unwrap();
    }
    Ok(())
}

/// `p > 2∨r` and `r > 0`
pub fn check_moment_exponents(p: f64, r: f64) -> CliResult<()> {
    if !(r > 0.0) || !(p > 2f64.max(r)) {
        return Err(CliError::Config {
            path: "params.p".into(),
            message: format!("need r > 0 and p > 2∨r, got p={p}, r={r}"),
        });
    }
    Ok(())
}

/// Rejects repeated keys at any depth; `serde_json::Value` would silently
/// keep the last one.
struct NoDuplicates;

impl<'de> Deserialize<'de> for NoDuplicates {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(NoDuplicatesVisitor)
    }
}

struct NoDuplicatesVisitor;

impl<'de> serde::de::Visitor<'de> for NoDuplicatesVisitor {
    type Value = NoDuplicates;

    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str("any JSON value")
    }

    fn visit_map<A: serde::de::MapAccess<'de>>(self, mut map: A) -> Result<NoDuplicates, A::Error> {
        let mut seen = std::collections::HashSet::new();
        while let Some(key) = map.next_key::<String>()? {
            if !seen.insert(key.clone()) {
                return Err(serde::de::Error::custom(format!("duplicate key `{key}`")));
            }
            map.next_value::<NoDuplicates>()?;
        }
        Ok(NoDuplicates)
    }

    fn visit_seq<A: serde::de::SeqAccess<'de>>(self, mut seq: A) -> Result<NoDuplicates, A::Error> {
        while seq.next_element::<NoDuplicates>()?.is_some() {}
        Ok(NoDuplicates)
    }

    fn visit_bool<E>(self, _: bool) -> Result<NoDuplicates, E> {
        Ok(NoDuplicates)
    }
    fn visit_i64<E>(self, _: i64) -> Result<NoDuplicates, E> {
        Ok(NoDuplicates)
    }
    fn visit_u64<E>(self, _: u64) -> Result<NoDuplicates, E> {
        Ok(NoDuplicates)
    }
    fn visit_f64<E>(self, _: f64) -> Result<NoDuplicates, E> {
        Ok(NoDuplicates)
    }
    fn visit_str<E>(self, _: &str) -> Result<NoDuplicates, E> {
        Ok(NoDuplicates)
    }
    fn visit_unit<E>(self) -> Result<NoDuplicates, E> {
        Ok(NoDuplicates)
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> CliResult<T> {
    let config_err = |path: String, message: String| CliError::Config { path, message };
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize::<_, NoDuplicates>(de).map_err(|e| config_err(e.path().to_string(), e.inner().to_string()))?;
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| config_err(e.path().to_string(), e.inner().to_string()))
}

/// The configuration file as written; every field may come from flags.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    subcommand: Option<Subcommand>,
    #[serde(default)]
    dist: Option<DistSpec>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    threads: Option<usize>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    params: Option<Value>,
}

/// Parse a JSON document (or start from an empty one) and apply overrides.
pub fn parse_config(text: Option<&str>, ov: &Overrides) -> CliResult<Resolved> {
    let file: FileConfig = match text {
        Some(t) => parse_json(t)?,
        None => FileConfig::default(),
    };
    let subcommand = ov
        .subcommand
        .or(file.subcommand)
        .ok_or_else(|| CliError::Config { path: "subcommand".into(), message: "missing".into() })?;
    let dist = match &ov.dist {
        Some(d) => Some(parse_json::<DistSpec>(d).map_err(|e| match e {
            CliError::Config { path, message } => CliError::Config { path: format!("dist.{path}"), message },
            other => other,
        })?),
        None => file.dist,
    };
    let mut config = ExperimentConfig {
        subcommand,
        dist,
        seed: ov.seed.or(file.seed).unwrap_or(0),
        threads: ov.threads.or(file.threads).unwrap_or(1),
        out: ov.out.clone().or(file.out),
        params: file.params.unwrap_or_else(empty_object),
    };
    if config.threads == 0 {
        return Err(CliError::Config { path: "threads".into(), message: "must be at least 1".into() });
    }
    if !config.params.is_object() {
        return Err(CliError::Config { path: "params".into(), message: "must be an object".into() });
    }

    let mut params = config.params.clone();
    let is_verify = config.subcommand == Subcommand::Verify;
    if is_verify {
        let mut base: Value = serde_json::from_str(VERIFY_DEFAULTS)?;
        merge(&mut base, params);
        params = base;
    }
    for t in &ov.tolerances {
        set_path(&mut params, t, is_verify)?;
    }
    if !is_verify && config.dist.is_none() {
        return Err(CliError::Config { path: "dist".into(), message: "this subcommand needs a distribution".into() });
    }

    let typed_params = match config.subcommand {
        Subcommand::Choquet => Params::Choquet(typed(params, "params")?),
        Subcommand::Functionals => Params::Functionals(typed(params, "params")?),
        Subcommand::Series => Params::Series(typed(params, "params")?),
        Subcommand::Bound => {
            let b: BoundParams = typed(params, "params")?;
            check_moment_exponents(b.p, b.r)?;
            Params::Bound(b)
        }
        Subcommand::Dp => Params::Dp(typed(params, "params")?),
        Subcommand::Simulate => Params::Simulate(typed(params, "params")?),
        Subcommand::Probe => Params::Probe(typed(params, "params")?),
        Subcommand::MaLil => Params::MaLil(typed(params, "params")?),
        Subcommand::Verify => Params::Verify(typed(params, "params")?),
    };
    if let Some(d) = &config.dist {
        d.generators().validate()?;
    }
    config.params = match &typed_params {
        Params::Choquet(p) => serde_json::to_value(p)?,
        Params::Functionals(p) => serde_json::to_value(p)?,
        Params::Series(p) => serde_json::to_value(p)?,
        Params::Bound(p) => serde_json::to_value(p)?,
        Params::Dp(p) => serde_json::to_value(p)?,
        Params::Simulate(p) => serde_json::to_value(p)?,
        Params::Probe(p) => serde_json::to_value(p)?,
        Params::MaLil(p) => serde_json::to_value(p)?,
        Params::Verify(p) => serde_json::to_value(p)?,
    };
    Ok(Resolved { config, params: typed_params })
}

/// Re-parse a resolved configuration, e.g. one embedded in a report.
pub fn from_resolved(config: &ExperimentConfig) -> CliResult<Resolved> {
    let text = serde_json::to_string(config)?;
    parse_config(Some(&text), &Overrides::default())
}
