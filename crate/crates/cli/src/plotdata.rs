//! Pivot a results CSV into a plot-ready TSV.
//!
//! A spec names an `x` column, one or more `y` columns, an optional `series`
//! column whose values become separate columns, and an optional `where`
//! filter. Inline form: `x=j;y=sup_prev;series=seed;where=section=pointwise`.
//! A path to a TOML file with the same keys is also accepted.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    pub x: String,
    pub y: Vec<String>,
    #[serde(default)]
    pub series: Option<String>,
    /// `(column, value)` rows must match.
    #[serde(default, rename = "where")]
    pub filter: Option<String>,
}

impl PlotSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.is_file() {
            let text = std::fs::read_to_string(path)?;
            return toml::from_str(&text).with_context(|| format!("plot spec {}", path.display()));
        }
        let mut x = None;
        let mut y = Vec::new();
        let mut series = None;
        let mut filter = None;
        for part in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| anyhow!("expected key=value, got {part:?}"))?;
            match k.trim() {
                "x" => x = Some(v.trim().to_string()),
                "y" => y.extend(v.split(',').map(|s| s.trim().to_string())),
                "series" => series = Some(v.trim().to_string()),
                "where" => filter = Some(v.trim().to_string()),
                other => bail!("unknown plot spec key {other:?}"),
            }
        }
        let x = x.ok_or_else(|| anyhow!("plot spec needs x"))?;
        if y.is_empty() {
            bail!("plot spec needs at least one y column");
        }
        Ok(PlotSpec { x, y, series, filter })
    }
}

fn sort_keys(keys: &mut [String]) {
    if keys.iter().all(|k| k.parse::<f64>().is_ok()) {
        keys.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    } else {
        keys.sort();
    }
}

/// Reads `results` and returns the TSV text.
pub fn emit_plotdata(results: &Path, spec: &PlotSpec) -> Result<String> {
    let mut rdr = csv::Reader::from_path(results).with_context(|| format!("reading {}", results.display()))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let filter = match &spec.filter {
        Some(f) => {
            let (c, v) = f.split_once('=').ok_or_else(|| anyhow!("where needs column=value"))?;
            Some((c.trim().to_string(), v.trim().to_string()))
        }
        None => None,
    };
    let mut wanted: Vec<&str> = vec![spec.x.as_str()];
    wanted.extend(spec.y.iter().map(String::as_str));
    wanted.extend(spec.series.as_deref());
    wanted.extend(filter.as_ref().map(|f| f.0.as_str()));
    let missing: Vec<&str> = wanted.iter().copied().filter(|w| col(w).is_none()).collect();
    if !missing.is_empty() {
        bail!("missing column(s) in {}: {}", results.display(), missing.join(", "));
    }
    let xi = col(&spec.x).unwrap();
    let yi: Vec<usize> = spec.y.iter().map(|y| col(y).unwrap()).collect();
    let si = spec.series.as_deref().map(|s| col(s).unwrap());
    let fi = filter.as_ref().map(|f| (col(&f.0).unwrap(), f.1.clone()));

    // (x, series) -> y values
    let mut cells: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    let mut xs: Vec<String> = Vec::new();
    let mut ss: Vec<String> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if let Some((c, v)) = &fi {
            if rec.get(*c) != Some(v.as_str()) {
                continue;
            }
        }
        let x = rec[xi].to_string();
        let s = si.map(|i| rec[i].to_string()).unwrap_or_default();
        if !xs.contains(&x) {
            xs.push(x.clone());
        }
        if !ss.contains(&s) {
            ss.push(s.clone());
        }
        cells.insert((x, s), yi.iter().map(|&i| rec[i].to_string()).collect());
    }
    sort_keys(&mut xs);
    sort_keys(&mut ss);

    let mut head = vec![spec.x.clone()];
    match &spec.series {
        None => head.extend(spec.y.iter().cloned()),
        Some(sname) => {
            for s in &ss {
                for y in &spec.y {
                    head.push(if spec.y.len() == 1 { format!("{sname}={s}") } else { format!("{y}:{sname}={s}") });
                }
            }
        }
    }
    let mut out = head.join("\t") + "\n";
    for x in &xs {
        let mut line = vec![x.clone()];
        for s in &ss {
            match cells.get(&(x.clone(), s.clone())) {
                Some(v) => line.extend(v.iter().cloned()),
                None => line.extend(std::iter::repeat(String::new()).take(spec.y.len())),
            }
        }
        out += &line.join("\t");
        out.push('\n');
    }
    Ok(out)
}
