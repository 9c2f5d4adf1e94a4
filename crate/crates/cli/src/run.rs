//! Run orchestration: cache lookup, execution, and output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use folner_core::tiling::Check;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::experiments::{execute, Outcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    digest: String,
    outcome: Outcome,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CacheInfo {
    pub enabled: bool,
    pub key: String,
    pub hit: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckSummary {
    pub total: usize,
    pub passed: usize,
    pub failures: Vec<Check>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: serde_json::Value,
    pub defaults: Vec<String>,
    /// Wall-clock seconds per stage, in execution order.
    pub timings: Vec<(String, f64)>,
    pub cache: CacheInfo,
    pub outputs: Vec<OutputFile>,
    pub checks: CheckSummary,
}

impl RunManifest {
    pub fn all_passed(&self) -> bool {
        self.checks.failures.is_empty()
    }
}

/// Content hash of the experiment-defining part of the config.
pub fn cache_key(cfg: &ExperimentConfig) -> Result<String> {
    let mut v = serde_json::to_value(cfg)?;
    if let Some(m) = v.as_object_mut() {
        m.remove("output");
        m.remove("cache");
    }
    let text = serde_json::to_string(&json!({ "config": v, "version": VERSION }))?;
    Ok(sha256_hex(text.as_bytes()))
}

fn load_cache(path: &Path, key: &str) -> Result<Outcome, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let entry: CacheEntry = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let body = serde_json::to_string(&entry.outcome).map_err(|e| e.to_string())?;
    if entry.key != key || entry.digest != sha256_hex(body.as_bytes()) {
        return Err("digest mismatch".into());
    }
    Ok(entry.outcome)
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Runs `cfg`, writing into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let mut timings = Vec::new();
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let key = cache_key(cfg)?;
    let cache_dir = out_dir.join(".cache");
    let cache_path = cache_dir.join(format!("{key}.json"));
    let mut warnings = Vec::new();
    let mut hit = false;
    let mut outcome = None;
    if cfg.cache && cache_path.exists() {
        let t0 = Instant::now();
        match load_cache(&cache_path, &key) {
            Ok(o) => {
                hit = true;
                outcome = Some(o);
            }
            Err(e) => {
                let msg = format!("cache entry {} is corrupt ({e}); recomputing", cache_path.display());
                eprintln!("warning: {msg}");
                warnings.push(msg);
            }
        }
        timings.push(("cache-read".into(), t0.elapsed().as_secs_f64()));
    }
    let outcome = match outcome {
        Some(o) => o,
        None => {
            let t0 = Instant::now();
            let o = execute(cfg)?;
            timings.push(("execute".into(), t0.elapsed().as_secs_f64()));
            if cfg.cache {
                fs::create_dir_all(&cache_dir)?;
                let body = serde_json::to_string(&o)?;
                let entry = CacheEntry { key: key.clone(), digest: sha256_hex(body.as_bytes()), outcome: o.clone() };
                fs::write(&cache_path, serde_json::to_string(&entry)?)?;
            }
            o
        }
    };

    let t0 = Instant::now();
    let passed = outcome.checks.iter().filter(|c| c.passed).count();
    let failures: Vec<Check> = outcome.checks.iter().filter(|c| !c.passed).cloned().collect();
    let summary = json!({
        "kind": cfg.kind,
        "summary": outcome.summary,
        "checks": outcome.checks,
        "passed": passed,
        "total": outcome.checks.len(),
    });
    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("results.csv".into(), csv_bytes(&outcome.header, &outcome.rows)?),
        ("summary.json".into(), (serde_json::to_string_pretty(&summary)? + "\n").into_bytes()),
    ];
    files.extend(outcome.extra.iter().map(|(n, c)| (n.clone(), c.clone().into_bytes())));
    let mut outputs = Vec::new();
    for (name, bytes) in &files {
        fs::write(out_dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
        outputs.push(OutputFile { path: name.clone(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
    }
    timings.push(("write".into(), t0.elapsed().as_secs_f64()));

    let manifest = RunManifest {
        tool: "folner".into(),
        version: VERSION.into(),
        config: serde_json::to_value(cfg)?,
        defaults: cfg.defaults.clone(),
        timings,
        cache: CacheInfo { enabled: cfg.cache, key, hit, warnings },
        outputs,
        checks: CheckSummary { total: outcome.checks.len(), passed, failures },
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// Output directory: relative paths resolve against the config file's directory.
pub fn output_dir(cfg: &ExperimentConfig, config_path: &Path) -> PathBuf {
    let out = Path::new(&cfg.output);
    if out.is_absolute() {
        out.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(out)
    }
}
