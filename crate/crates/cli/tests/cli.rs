use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn folner(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_folner"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn folner")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_in(dir: &Path, config: &Path, out: &str, envs: &[(&str, &str)]) -> Output {
    let out = dir.join(out);
    folner(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()], envs)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const COVERING: &str = "kind = \"covering\"\nseed = 3\n[group]\nfamily = \"zd\"\ndim = 2\n[covering]\ninstances = 100\n";

const TILING: &str = "kind = \"tiling\"\n[group]\nfamily = \"zd\"\ndim = 1\n\
[tiling]\nepsilon = 0.25\ntarget = 4096\nbasis = [1, 2, 4, 8, 16]\n";

const PROCESS: &str = "kind = \"process\"\n[grid]\njs = [10, 100]\n\
[process]\nkind = \"threshold\"\nlevel = 0.7\nsamples = 400\nseeds = [0, 1]\ntrajectory = [10, 100]\ntolerance = 0.2\n";

#[test]
fn covering_reports_all_instances() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", COVERING);
    let o = run_in(tmp.path(), &cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&tmp.path().join("out/summary.json"));
    assert_eq!(s["summary"]["passed"], 100);
    assert_eq!(s["summary"]["instances"], 100);
    let m = json(&tmp.path().join("out/manifest.json"));
    assert!(m["defaults"].as_array().unwrap().iter().any(|d| d == "covering.side"));
    assert_eq!(m["checks"]["passed"], m["checks"]["total"]);
}

#[test]
fn bad_epsilon_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "kind = \"tiling\"\n[tiling]\nepsilon = 1.5\ntarget = 10\n");
    let o = run_in(tmp.path(), &cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tiling.epsilon"));
    assert!(!tmp.path().join("out/results.csv").exists());
}

#[test]
fn unknown_field_is_reported_with_its_name() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "kind = \"covering\"\n[covering]\nradius = 3\n");
    let o = run_in(tmp.path(), &cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("radius"));
}

#[test]
fn rerun_hits_cache_with_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", COVERING);
    assert_eq!(run_in(tmp.path(), &cfg, "out", &[]).status.code(), Some(0));
    let first = fs::read(tmp.path().join("out/results.csv")).unwrap();
    assert_eq!(json(&tmp.path().join("out/manifest.json"))["cache"]["hit"], false);
    assert_eq!(run_in(tmp.path(), &cfg, "out", &[]).status.code(), Some(0));
    assert_eq!(json(&tmp.path().join("out/manifest.json"))["cache"]["hit"], true);
    assert_eq!(fs::read(tmp.path().join("out/results.csv")).unwrap(), first);
}

#[test]
fn corrupt_cache_is_recomputed_with_warning() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", COVERING);
    assert_eq!(run_in(tmp.path(), &cfg, "out", &[]).status.code(), Some(0));
    let key = json(&tmp.path().join("out/manifest.json"))["cache"]["key"].as_str().unwrap().to_string();
    fs::write(tmp.path().join(format!("out/.cache/{key}.json")), "{ not json").unwrap();
    let o = run_in(tmp.path(), &cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt"));
    let m = json(&tmp.path().join("out/manifest.json"));
    assert_eq!(m["cache"]["hit"], false);
    assert_eq!(m["cache"]["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", PROCESS);
    let mut outputs = Vec::new();
    for (dir, workers) in [("w1", "1"), ("w4", "4")] {
        let o = folner(
            &["run", cfg.to_str().unwrap(), "--no-cache", "--out", tmp.path().join(dir).to_str().unwrap()],
            &[("FOLNER_WORKERS", workers)],
        );
        assert!(o.status.code() == Some(0) || o.status.code() == Some(1), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(tmp.path().join(dir).join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(!tmp.path().join("w1/.cache").exists());
}

#[test]
fn results_csv_uses_crlf() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", COVERING);
    run_in(tmp.path(), &cfg, "out", &[]);
    let text = fs::read_to_string(tmp.path().join("out/results.csv")).unwrap();
    assert!(text.ends_with("\r\n"));
    assert_eq!(text.matches("\r\n").count(), text.matches('\n').count());
}

#[test]
fn tiling_run_writes_verifiable_tiling() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", TILING);
    let o = run_in(tmp.path(), &cfg, "out", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path = tmp.path().join("out/tiling.json");
    assert!(path.exists());
    let v = folner(&["verify", path.to_str().unwrap()], &[]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stdout));

    let mut doc = json(&path);
    let target = doc["tiling"]["target"].as_array_mut().unwrap();
    target.truncate(10);
    let bad = tmp.path().join("tampered.json");
    fs::write(&bad, serde_json::to_string(&doc).unwrap()).unwrap();
    let v = folner(&["verify", bad.to_str().unwrap()], &[]);
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stderr).contains("FAIL"));
}

#[test]
fn verify_rejects_unparseable_file() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(tmp.path(), "x.json", "[]");
    assert_eq!(folner(&["verify", p.to_str().unwrap()], &[]).status.code(), Some(2));
}

fn results_file(dir: &Path, body: &str) -> PathBuf {
    write_config(dir, "results.csv", body)
}

#[test]
fn plotdata_pivots_series() {
    let tmp = TempDir::new().unwrap();
    let r = results_file(tmp.path(), "j,seed,value\r\n10,2,0.5\r\n2,1,0.9\r\n10,1,0.4\r\n2,2,0.8\r\n");
    let o = folner(&["plotdata", r.to_str().unwrap(), "x=j;y=value;series=seed"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "j\tseed=1\tseed=2\n2\t0.9\t0.8\n10\t0.4\t0.5\n");
}

#[test]
fn plotdata_filters_and_writes_file() {
    let tmp = TempDir::new().unwrap();
    let r = results_file(tmp.path(), "section,j,value\r\na,1,1.0\r\nb,1,2.0\r\na,2,3.0\r\n");
    let out = tmp.path().join("plot.tsv");
    let o = folner(&["plotdata", r.to_str().unwrap(), "x=j;y=value;where=section=a", "-o", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out).unwrap(), "j\tvalue\n1\t1.0\n2\t3.0\n");
}

#[test]
fn plotdata_names_missing_column() {
    let tmp = TempDir::new().unwrap();
    let r = results_file(tmp.path(), "j,value\r\n1,2\r\n");
    let o = folner(&["plotdata", r.to_str().unwrap(), "x=j;y=sup_prev"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sup_prev"));
}

#[test]
fn plotdata_on_empty_results_gives_header_only() {
    let tmp = TempDir::new().unwrap();
    let r = results_file(tmp.path(), "j,value\r\n");
    let o = folner(&["plotdata", r.to_str().unwrap(), "x=j;y=value"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "j\tvalue\n");
}

#[test]
fn plotdata_reads_toml_spec() {
    let tmp = TempDir::new().unwrap();
    let r = results_file(tmp.path(), "j,a,b\r\n1,2,3\r\n");
    let spec = write_config(tmp.path(), "spec.toml", "x = \"j\"\ny = [\"b\", \"a\"]\n");
    let o = folner(&["plotdata", r.to_str().unwrap(), spec.to_str().unwrap()], &[]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "j\tb\ta\n1\t3\t2\n");
}

#[test]
fn relative_output_resolves_against_config_dir() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &format!("output = \"rel\"\n{COVERING}"));
    let o = folner(&["run", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(tmp.path().join("rel/summary.json").exists());
}
