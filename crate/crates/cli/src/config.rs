//! Experiment configuration: TOML schema, defaults and validation.
//!
//! Every field left out of the file is filled here and its path recorded, so
//! the manifest lists exactly which values were defaulted.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Tiling,
    Ergodic,
    Ids,
    Process,
    Covering,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Zd,
    Heisenberg,
    Lamplighter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialName {
    Zero,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormName {
    Sup,
    Lp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessName {
    PointCount,
    Coordinate,
    Threshold,
    Affine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawName {
    Uniform,
    Bernoulli,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Option<Kind>,
    seed: Option<u64>,
    output: Option<String>,
    cache: Option<bool>,
    group: Option<RawGroup>,
    tiling: Option<RawTiling>,
    ensemble: Option<RawEnsemble>,
    grid: Option<RawGrid>,
    norm: Option<RawNorm>,
    estimate: Option<RawEstimate>,
    process: Option<RawProcess>,
    covering: Option<RawCovering>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    family: Option<FamilyName>,
    dim: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTiling {
    epsilon: Option<f64>,
    beta: Option<f64>,
    zeta: Option<f64>,
    strict: Option<bool>,
    target: Option<usize>,
    basis: Option<Vec<usize>>,
    uniform: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    hopping: Option<f64>,
    potential: Option<PotentialName>,
    lo: Option<f64>,
    hi: Option<f64>,
    range: Option<u32>,
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    js: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNorm {
    mode: Option<NormName>,
    p: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimate {
    samples: Option<usize>,
    probe: Option<u32>,
    center: Option<u32>,
    tolerance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProcess {
    kind: Option<ProcessName>,
    law: Option<LawName>,
    p: Option<f64>,
    level: Option<f64>,
    offset: Option<f64>,
    slope: Option<f64>,
    lambdas: Option<Vec<f64>>,
    samples: Option<usize>,
    seeds: Option<Vec<u64>>,
    trajectory: Option<Vec<usize>>,
    tolerance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCovering {
    instances: Option<usize>,
    side: Option<usize>,
    levels: Option<[usize; 2]>,
    density: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub family: FamilyName,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TilingConfig {
    pub epsilon: f64,
    pub beta: f64,
    pub zeta: f64,
    pub strict: bool,
    pub target: usize,
    /// Følner indices of the basis; `None` selects them from `L = B(1)`.
    pub basis: Option<Vec<usize>>,
    pub uniform: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub hopping: f64,
    pub potential: PotentialName,
    pub lo: f64,
    pub hi: f64,
    pub range: u32,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormConfig {
    pub mode: NormName,
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateConfig {
    pub samples: usize,
    pub probe: u32,
    pub center: u32,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProcessConfig {
    pub kind: ProcessName,
    pub law: LawName,
    pub p: f64,
    pub level: f64,
    pub offset: f64,
    pub slope: f64,
    pub lambdas: Vec<f64>,
    pub samples: usize,
    pub seeds: Vec<u64>,
    pub trajectory: Vec<usize>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveringConfig {
    pub instances: usize,
    pub side: usize,
    pub levels: [usize; 2],
    pub density: f64,
}

/// A validated configuration with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    pub output: String,
    pub cache: bool,
    pub group: GroupConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tiling: Option<TilingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub js: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covering: Option<CoveringConfig>,
    /// Paths of the fields filled by defaults.
    #[serde(skip)]
    pub defaults: Vec<String>,
}

/// A schema violation, located by its dotted path.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config error at {}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(path: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { path: path.into(), message: message.into() })
}

struct Defaults(Vec<String>);

impl Defaults {
    fn take<T>(&mut self, v: Option<T>, path: &str, d: T) -> T {
        v.unwrap_or_else(|| {
            self.0.push(path.into());
            d
        })
    }
}

fn require<T>(v: Option<T>, path: &str) -> Result<T, ConfigError> {
    v.ok_or(ConfigError { path: path.into(), message: "missing required field".into() })
}

fn check(ok: bool, path: &str, message: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        err(path, message)
    }
}

fn increasing(js: &[usize], path: &str) -> Result<(), ConfigError> {
    check(!js.is_empty(), path, "must not be empty")?;
    check(js[0] >= 1, path, "indices start at 1")?;
    check(js.windows(2).all(|w| w[0] < w[1]), path, "must be strictly increasing")
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { path: String::new(), message: format!("cannot read {}: {e}", path.display()) })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| ConfigError { path: String::new(), message: e.message().to_string() })?;
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        resolve(raw)
    }
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut d = Defaults(Vec::new());
    let kind = require(raw.kind, "kind")?;
    let seed = d.take(raw.seed, "seed", 0);
    let output = d.take(raw.output, "output", "out".into());
    let cache = d.take(raw.cache, "cache", true);
    let rg = raw.group.unwrap_or_default();
    let family = d.take(rg.family, "group.family", FamilyName::Zd);
    let dim = match family {
        FamilyName::Zd => d.take(rg.dim, "group.dim", 1),
        _ => {
            check(rg.dim.is_none(), "group.dim", "only meaningful for zd")?;
            0
        }
    };
    if family == FamilyName::Zd {
        check((1..=3).contains(&dim), "group.dim", format!("must be 1, 2 or 3, got {dim}"))?;
    }
    let group = GroupConfig { family, dim };

    let mut cfg = ExperimentConfig {
        kind,
        seed,
        output,
        cache,
        group,
        tiling: None,
        ensemble: None,
        js: None,
        norm: None,
        estimate: None,
        process: None,
        covering: None,
        defaults: Vec::new(),
    };
    let unused = |present: bool, name: &str| check(!present, name, format!("section not used by kind {kind:?}"));

    let needs_tiling = matches!(kind, Kind::Tiling);
    let wants_tiling = matches!(kind, Kind::Tiling | Kind::Ergodic);
    match raw.tiling {
        Some(t) if wants_tiling => cfg.tiling = Some(tiling(t, &mut d)?),
        None if needs_tiling => return err("tiling", "missing required section"),
        Some(_) => unused(true, "tiling")?,
        None => {}
    }
    let wants_ensemble = matches!(kind, Kind::Ergodic | Kind::Ids);
    if wants_ensemble {
        cfg.ensemble = Some(ensemble(raw.ensemble.unwrap_or_default(), &mut d)?);
    } else {
        unused(raw.ensemble.is_some(), "ensemble")?;
    }
    if matches!(kind, Kind::Ergodic | Kind::Ids | Kind::Process) {
        let js = require(raw.grid.and_then(|g| g.js), "grid.js")?;
        increasing(&js, "grid.js")?;
        cfg.js = Some(js);
    } else {
        unused(raw.grid.is_some(), "grid")?;
    }
    if matches!(kind, Kind::Ergodic | Kind::Ids) {
        cfg.norm = Some(norm(raw.norm.unwrap_or_default(), &mut d)?);
    } else {
        unused(raw.norm.is_some(), "norm")?;
    }
    match (kind, raw.estimate) {
        (Kind::Ids, Some(e)) => cfg.estimate = Some(estimate(e, &mut d)?),
        (_, e) => unused(e.is_some(), "estimate")?,
    }
    if kind == Kind::Process {
        cfg.process = Some(process(require(raw.process, "process")?, &mut d)?);
    } else {
        unused(raw.process.is_some(), "process")?;
    }
    if kind == Kind::Covering {
        cfg.covering = Some(covering(raw.covering.unwrap_or_default(), &mut d)?);
    } else {
        unused(raw.covering.is_some(), "covering")?;
    }
    cfg.defaults = d.0;
    Ok(cfg)
}

fn tiling(t: RawTiling, d: &mut Defaults) -> Result<TilingConfig, ConfigError> {
    let epsilon = require(t.epsilon, "tiling.epsilon")?;
    let strict = d.take(t.strict, "tiling.strict", false);
    let cap = if strict { 0.1 } else { 0.5 };
    check(epsilon > 0.0 && epsilon <= cap, "tiling.epsilon", format!("must lie in (0, {cap}], got {epsilon}"))?;
    let beta = d.take(t.beta, "tiling.beta", epsilon / 32.0);
    check(beta > 0.0 && beta < 1.0, "tiling.beta", format!("must lie in (0, 1), got {beta}"))?;
    let zeta = d.take(t.zeta, "tiling.zeta", 0.01);
    check(zeta > 0.0 && zeta < 1.0, "tiling.zeta", format!("must lie in (0, 1), got {zeta}"))?;
    let target = require(t.target, "tiling.target")?;
    check(target >= 1, "tiling.target", "Følner indices start at 1")?;
    if let Some(b) = &t.basis {
        check(!b.is_empty() && b[0] >= 1, "tiling.basis", "needs positive Følner indices")?;
        check(b.windows(2).all(|w| w[0] <= w[1]), "tiling.basis", "must be nondecreasing")?;
    } else {
        d.0.push("tiling.basis".into());
    }
    let uniform = d.take(t.uniform, "tiling.uniform", false);
    Ok(TilingConfig { epsilon, beta, zeta, strict, target, basis: t.basis, uniform })
}

fn ensemble(e: RawEnsemble, d: &mut Defaults) -> Result<EnsembleConfig, ConfigError> {
    let hopping = d.take(e.hopping, "ensemble.hopping", 1.0);
    check(hopping.is_finite(), "ensemble.hopping", "must be finite")?;
    let potential = d.take(e.potential, "ensemble.potential", PotentialName::Uniform);
    let lo = d.take(e.lo, "ensemble.lo", 0.0);
    let hi = d.take(e.hi, "ensemble.hi", 1.0);
    check(lo.is_finite() && hi.is_finite() && lo <= hi, "ensemble.hi", "need finite lo <= hi")?;
    let range = d.take(e.range, "ensemble.range", 1);
    check(range >= 1, "ensemble.range", "must be at least 1")?;
    let seeds = d.take(e.seeds, "ensemble.seeds", vec![1, 2]);
    check(!seeds.is_empty(), "ensemble.seeds", "must not be empty")?;
    Ok(EnsembleConfig { hopping, potential, lo, hi, range, seeds })
}

fn norm(n: RawNorm, d: &mut Defaults) -> Result<NormConfig, ConfigError> {
    let mode = d.take(n.mode, "norm.mode", NormName::Lp);
    let p = d.take(n.p, "norm.p", 2.0);
    let lo = d.take(n.lo, "norm.lo", -5.0);
    let hi = d.take(n.hi, "norm.hi", 5.0);
    check(p >= 1.0 && p.is_finite(), "norm.p", format!("must be finite and at least 1, got {p}"))?;
    check(lo < hi, "norm.hi", "need lo < hi")?;
    Ok(NormConfig { mode, p, lo, hi })
}

fn estimate(e: RawEstimate, d: &mut Defaults) -> Result<EstimateConfig, ConfigError> {
    let samples = d.take(e.samples, "estimate.samples", 10);
    check(samples >= 10, "estimate.samples", "must be at least 10")?;
    let probe = d.take(e.probe, "estimate.probe", 10);
    let center = d.take(e.center, "estimate.center", 2);
    check(center <= probe, "estimate.center", "must not exceed estimate.probe")?;
    let tolerance = d.take(e.tolerance, "estimate.tolerance", 0.07);
    check(tolerance > 0.0, "estimate.tolerance", "must be positive")?;
    Ok(EstimateConfig { samples, probe, center, tolerance })
}

fn process(p: RawProcess, d: &mut Defaults) -> Result<ProcessConfig, ConfigError> {
    let kind = require(p.kind, "process.kind")?;
    let default_law = if kind == ProcessName::PointCount { LawName::Bernoulli } else { LawName::Uniform };
    let law = d.take(p.law, "process.law", default_law);
    let prob = d.take(p.p, "process.p", 0.5);
    check((0.0..=1.0).contains(&prob), "process.p", format!("must lie in [0, 1], got {prob}"))?;
    let level = d.take(p.level, "process.level", 0.9);
    let offset = d.take(p.offset, "process.offset", 0.0);
    let slope = d.take(p.slope, "process.slope", 1.0);
    let lambdas = d.take(p.lambdas, "process.lambdas", vec![0.5]);
    check(lambdas.iter().all(|l| *l > 0.0), "process.lambdas", "must be positive")?;
    let samples = d.take(p.samples, "process.samples", 10_000);
    check(samples >= 100, "process.samples", format!("must be at least 100, got {samples}"))?;
    let seeds = d.take(p.seeds, "process.seeds", (0..4).collect());
    let trajectory = d.take(p.trajectory, "process.trajectory", vec![10, 100, 1000, 10_000]);
    increasing(&trajectory, "process.trajectory")?;
    let tolerance = d.take(p.tolerance, "process.tolerance", 0.01);
    Ok(ProcessConfig { kind, law, p: prob, level, offset, slope, lambdas, samples, seeds, trajectory, tolerance })
}

fn covering(c: RawCovering, d: &mut Defaults) -> Result<CoveringConfig, ConfigError> {
    let instances = d.take(c.instances, "covering.instances", 100);
    let side = d.take(c.side, "covering.side", 12);
    check(side >= 1, "covering.side", "must be at least 1")?;
    let levels = d.take(c.levels, "covering.levels", [1, 4]);
    check(levels[0] >= 1 && levels[0] <= levels[1], "covering.levels", "need 1 <= M <= N")?;
    let density = d.take(c.density, "covering.density", 0.3);
    check(density > 0.0 && density <= 1.0, "covering.density", "must lie in (0, 1]")?;
    Ok(CoveringConfig { instances, side, levels, density })
}
