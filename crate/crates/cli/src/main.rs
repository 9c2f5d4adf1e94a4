use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

mod config;
mod experiments;
mod plotdata;
mod run;

use config::ExperimentConfig;
use experiments::TilingFile;

/// Worker threads for independent experiment cells; defaults to all cores.
const WORKERS_ENV: &str = "FOLNER_WORKERS";

#[derive(Parser)]
#[command(name = "folner", version, about = "Quasi-tiling, ergodic-average and IDS experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ignore and do not write the result cache.
        #[arg(long)]
        no_cache: bool,
    },
    /// Pivot a results CSV into a TSV for plotting.
    Plotdata {
        results: PathBuf,
        /// Inline `x=..;y=..;series=..;where=col=value` or a TOML file.
        spec: String,
        /// Write to a file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Re-check a tiling written by `run`.
    Verify { tiling: PathBuf },
}

const OK: u8 = 0;
const INVARIANT_FAILURE: u8 = 1;
const USAGE: u8 = 2;

fn print_failures(checks: &[folner_core::tiling::Check]) {
    for c in checks.iter().filter(|c| !c.passed) {
        eprintln!("FAIL {}: measured {} vs {} {}", c.name, c.measured, c.threshold, c.detail);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let code = match cli.command {
        Command::Run { config, out, no_cache } => (|| {
            let mut cfg = match ExperimentConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(USAGE);
                }
            };
            if no_cache {
                cfg.cache = false;
            }
            let dir = out.unwrap_or_else(|| run::output_dir(&cfg, &config));
            let m = run::run(&cfg, &dir)?;
            println!(
                "{}/{} checks passed; outputs in {}{}",
                m.checks.passed,
                m.checks.total,
                dir.display(),
                if m.cache.hit { " (cached)" } else { "" }
            );
            print_failures(&m.checks.failures);
            Ok(if m.all_passed() { OK } else { INVARIANT_FAILURE })
        })(),
        Command::Plotdata { results, spec, output } => (|| {
            let spec = plotdata::PlotSpec::parse(&spec)?;
            let tsv = plotdata::emit_plotdata(&results, &spec)?;
            match output {
                Some(p) => std::fs::write(&p, tsv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{tsv}"),
            }
            Ok(OK)
        })(),
        Command::Verify { tiling } => (|| {
            let text = std::fs::read_to_string(&tiling).with_context(|| format!("reading {}", tiling.display()))?;
            let doc: TilingFile = serde_json::from_str(&text).context("parsing tiling file")?;
            let checks = experiments::verify_file(&doc)?;
            let passed = checks.iter().filter(|c| c.passed).count();
            println!("{passed}/{} checks passed", checks.len());
            print_failures(&checks);
            Ok(if passed == checks.len() { OK } else { INVARIANT_FAILURE })
        })(),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            let e: anyhow::Error = e;
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE)
        }
    }
}
