//! One runner per experiment kind, generic over the group.

use anyhow::{anyhow, Context, Result};
use folner_core::ergodic::{
    canonical_boundary_term, eps_disjoint_error_bound, folner_averages, tiling_limit_estimate, SetFunction,
};
use folner_core::group::{BoxFolner, FiniteSet, FolnerSequence, Group};
use folner_core::process::{
    check_vitali_cover, make_process, maximal_tails, pointwise_trajectory, vitali_cover, ConfigurationSpace,
    Cylinder, ProcessKind, SiteLaw,
};
use folner_core::site::Configuration;
use folner_core::spectral::{
    counting_set_function, ensemble_limit_estimate, ids_experiment, step_distance, NormMode, OperatorEnsemble,
    Potential,
};
use folner_core::tiling::{
    disjointify, min_family_coverage, quasi_tile, select_basis_indices, tiling_params, uniform_family, verify_family,
    verify_tiling, Check, Report, TilingDoc, TilingParams, UniformOptions,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{
    CoveringConfig, EnsembleConfig, ExperimentConfig, GroupConfig, LawName, NormConfig, NormName, PotentialName,
    ProcessConfig, ProcessName, TilingConfig,
};

/// Everything a run produces before it is written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
    /// Additional output files as `(name, contents)`.
    pub extra: Vec<(String, String)>,
}

/// A tiling file as written by `run` and read by `verify`.
#[derive(Debug, Serialize, Deserialize)]
pub struct TilingFile {
    pub group: GroupConfig,
    pub tiling: TilingDoc,
}

pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn check(name: &str, passed: bool, measured: f64, threshold: f64, detail: impl Into<String>) -> Check {
    Check { name: name.into(), passed, measured, threshold, detail: detail.into() }
}

/// Calls `$f::<G>(group, args..)` with the group named by the config.
#[macro_export]
macro_rules! with_group {
    ($spec:expr, $f:ident ( $($arg:expr),* )) => {
        match ($spec.family, $spec.dim) {
            ($crate::config::FamilyName::Zd, 1) => $f(folner_core::Lattice::<1>, $($arg),*),
            ($crate::config::FamilyName::Zd, 2) => $f(folner_core::Lattice::<2>, $($arg),*),
            ($crate::config::FamilyName::Zd, _) => $f(folner_core::Lattice::<3>, $($arg),*),
            ($crate::config::FamilyName::Heisenberg, _) => $f(folner_core::Heisenberg, $($arg),*),
            ($crate::config::FamilyName::Lamplighter, _) => $f(folner_core::Lamplighter, $($arg),*),
        }
    };
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    use crate::config::Kind;
    match cfg.kind {
        Kind::Tiling => with_group!(cfg.group, run_tiling(cfg)),
        Kind::Ergodic => with_group!(cfg.group, run_ergodic(cfg)),
        Kind::Ids => with_group!(cfg.group, run_ids(cfg)),
        Kind::Process => with_group!(cfg.group, run_process(cfg)),
        Kind::Covering => with_group!(cfg.group, run_covering(cfg)),
    }
}

fn params_of(t: &TilingConfig) -> Result<TilingParams> {
    Ok(tiling_params(t.epsilon, t.beta, t.zeta, t.strict)?)
}

fn basis_indices<G: BoxFolner>(seq: &FolnerSequence<G>, t: &TilingConfig, p: &TilingParams) -> Result<Vec<usize>> {
    match &t.basis {
        Some(b) if b.len() != p.n => Err(anyhow!("tiling.basis has {} entries but N = {}", b.len(), p.n)),
        Some(b) => Ok(b.clone()),
        None => {
            let g = &seq.group;
            let l = g.ball(1, g.default_metric())?;
            Ok(select_basis_indices(seq, p, &l)?)
        }
    }
}

fn report_checks(rep: Report, prefix: &str) -> Vec<Check> {
    rep.checks
        .into_iter()
        .map(|mut c| {
            c.name = format!("{prefix}{}", c.name);
            c
        })
        .collect()
}

fn run_tiling<G: BoxFolner>(g: G, cfg: &ExperimentConfig) -> Result<Outcome> {
    let t = cfg.tiling.as_ref().context("tiling section")?;
    let p = params_of(t)?;
    let seq = FolnerSequence::boxes(g.clone());
    let idx = basis_indices(&seq, t, &p)?;
    let basis: Vec<FiniteSet<G::Elem>> = idx.iter().map(|&n| seq.get(n)).collect::<Result<_, _>>()?;
    let target = seq.get(t.target)?;
    let qt = quasi_tile(&g, &target, &basis, &p)?;
    let l = g.ball(1, g.default_metric())?;
    let mut checks = Vec::new();
    let qt = match disjointify(&g, &qt, &l, p.zeta) {
        Ok(d) => d,
        Err(e) => {
            checks.push(check("disjointify", false, 0.0, 0.0, e.to_string()));
            qt
        }
    };
    checks.extend(report_checks(verify_tiling(&g, &qt), ""));
    let mut rows = Vec::new();
    for (i, s) in qt.stages.iter().enumerate() {
        rows.push(vec![
            s.stage.to_string(),
            idx[i].to_string(),
            basis[i].len().to_string(),
            s.centers.to_string(),
            num(s.density),
            num(s.eta),
            num(p.beta),
            num((s.density - s.eta).abs()),
            s.exhausted.to_string(),
        ]);
    }
    let coverage = qt.coverage(&g);
    let mut summary = json!({
        "target_size": target.len(),
        "basis_indices": idx,
        "n": p.n,
        "translates": qt.translate_count(),
        "coverage": coverage,
        "warnings": qt.warnings,
    });
    if t.uniform {
        let fam = uniform_family(&target, &basis, &p, &seq, &UniformOptions::default())?;
        let (cov, _) = min_family_coverage(&g, &fam);
        checks.push(check("uniform-coverage", cov >= 1.0 - 4.0 * p.epsilon, cov, 1.0 - 4.0 * p.epsilon, "min over Λ"));
        checks.extend(report_checks(verify_family(&g, &fam, 16), "uniform-"));
        summary["uniform"] = json!({ "lambda": fam.lambda.len(), "hull": fam.hull().len(), "min_coverage": cov });
    }
    let doc = TilingFile { group: cfg.group.clone(), tiling: TilingDoc::from_tiling(&g, &qt) };
    Ok(Outcome {
        header: header(&["stage", "basis_index", "tile_size", "centers", "density", "eta", "beta", "deviation", "exhausted"]),
        rows,
        summary,
        checks,
        extra: vec![("tiling.json".into(), serde_json::to_string(&doc)? + "\n")],
    })
}

fn ensemble_of<G: Group>(g: G, e: &EnsembleConfig) -> Result<OperatorEnsemble<G>> {
    let potential = match e.potential {
        PotentialName::Zero => Potential::Zero,
        PotentialName::Uniform => Potential::Uniform { lo: e.lo, hi: e.hi },
    };
    Ok(OperatorEnsemble::adjacency(g, e.hopping, potential, e.range)?)
}

fn norm_of(n: &NormConfig) -> NormMode {
    match n.mode {
        NormName::Sup => NormMode::Sup,
        NormName::Lp => NormMode::Lp { p: n.p, lo: n.lo, hi: n.hi },
    }
}

fn run_ergodic<G: BoxFolner>(g: G, cfg: &ExperimentConfig) -> Result<Outcome> {
    let e = cfg.ensemble.as_ref().context("ensemble section")?;
    let js = cfg.js.as_ref().context("grid.js")?;
    let ens = ensemble_of(g.clone(), e)?;
    let seq = FolnerSequence::boxes(g.clone());
    let mut f = counting_set_function(&ens, Configuration::new(&g, e.seeds[0]));
    f.norm = norm_of(cfg.norm.as_ref().context("norm section")?);
    let c = f.bound_constant();
    let avgs = folner_averages(&f, &seq, js)?;
    let mut checks = Vec::new();
    let worst = avgs.iter().map(|r| r.norm).fold(0.0, f64::max);
    checks.push(check("linear-bound", worst <= c + 1e-12, worst, c, "max ‖F(U_j)‖/|U_j|"));
    let rows = avgs
        .iter()
        .map(|r| vec![r.j.to_string(), r.size.to_string(), num(r.norm), opt(r.dist_prev), num(r.dist_last)])
        .collect();
    let mut summary = json!({ "seed": e.seeds[0], "bound_constant": c });
    if let Some(t) = &cfg.tiling {
        let p = params_of(t)?;
        let idx = basis_indices(&seq, t, &p)?;
        let basis: Vec<FiniteSet<G::Elem>> = idx.iter().map(|&n| seq.get(n)).collect::<Result<_, _>>()?;
        let q = seq.get(*js.last().unwrap())?;
        let qt = quasi_tile(&g, &q, &basis, &p)?;
        let l = g.ball(f.boundary_radius, g.default_metric())?;
        let term = canonical_boundary_term(&g, l, f.boundary_constant)?.with_admissibility(&seq, js[0].max(2))?;
        let d_tilde = term.d_tilde.unwrap_or(1.0);
        let parts: Vec<_> = qt.translates(&g).into_iter().map(|(_, s)| s).collect();
        match eps_disjoint_error_bound(&f, &q, &parts, p.epsilon, d_tilde) {
            Ok(b) => {
                checks.push(check("eps-disjoint-bound", b.holds(), b.defect, b.bound, format!("alpha = {}", b.alpha)))
            }
            Err(err) => checks.push(check("eps-disjoint-bound", false, 0.0, 0.0, err.to_string())),
        }
        let u = seq.get(t.target)?;
        let est = tiling_limit_estimate(&g, &f, &p, &basis, &u)?;
        let last = &avgs.last().unwrap().value;
        summary["limit_estimate_distance"] = json!(step_distance(&est, last, f.norm)?);
        summary["basis_indices"] = json!(idx);
        summary["d_tilde"] = json!(d_tilde);
    }
    Ok(Outcome {
        header: header(&["j", "size", "norm", "dist_prev", "dist_last"]),
        rows,
        summary,
        checks,
        extra: Vec::new(),
    })
}

fn run_ids<G: BoxFolner>(g: G, cfg: &ExperimentConfig) -> Result<Outcome> {
    let e = cfg.ensemble.as_ref().context("ensemble section")?;
    let js = cfg.js.as_ref().context("grid.js")?;
    let ens = ensemble_of(g.clone(), e)?;
    let seq = FolnerSequence::boxes(g);
    let norm = norm_of(cfg.norm.as_ref().context("norm section")?);
    let rep = ids_experiment(&ens, &seq, js, norm, &e.seeds)?;
    let mut checks = vec![check(
        "grid-complete",
        rep.truncated_at.is_none(),
        rep.js.len() as f64,
        js.len() as f64,
        rep.truncated_at.map(|j| format!("dimension cap reached at j = {j}")).unwrap_or_default(),
    )];
    let top = (0..e.seeds.len()).filter_map(|s| rep.tail(s)).map(|t| t.tail()).fold(0.0, f64::max);
    checks.push(check("normalized-mass", top <= 1.0 + 1e-12, top, 1.0, "largest normalized count"));
    let mut rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.j.to_string(),
                r.size.to_string(),
                r.dim.to_string(),
                opt(r.sup_prev),
                opt(r.norm_prev),
                opt(r.cross_sup),
                opt(r.cross_norm),
            ]
        })
        .collect();
    rows.sort_by_key(|r| (r[0].parse::<u64>().unwrap_or(0), r[1].parse::<usize>().unwrap_or(0)));
    let mut summary = json!({ "js": rep.js, "seeds": e.seeds });
    if let Some(est) = &cfg.estimate {
        let base = cfg.seed.wrapping_add(1 << 32);
        let x = ensemble_limit_estimate(&ens, est.samples, est.probe, est.center, base)?;
        let mut gap: f64 = 0.0;
        for s in 0..e.seeds.len() {
            if let Some(t) = rep.tail(s) {
                gap = gap.max(step_distance(&x.profile, t, NormMode::Sup)?);
            }
        }
        checks.push(check("ensemble-agreement", gap <= est.tolerance, gap, est.tolerance, "sup distance to tails"));
        summary["ensemble"] = json!({ "probe_dim": x.probe_dim, "central_sites": x.central_sites, "gap": gap,
            "boundary_gap": x.boundary_gap });
    }
    Ok(Outcome {
        header: header(&["seed", "j", "size", "dim", "sup_prev", "norm_prev", "cross_sup", "cross_norm"]),
        rows,
        summary,
        checks,
        extra: Vec::new(),
    })
}

fn process_of<G: Group>(g: G, p: &ProcessConfig) -> Result<folner_core::process::AdditiveProcess<G>> {
    let law = match p.law {
        LawName::Uniform => SiteLaw::Uniform,
        LawName::Bernoulli => SiteLaw::Bernoulli { p: p.p },
    };
    let kind = match p.kind {
        ProcessName::PointCount => ProcessKind::BernoulliPointCount { p: p.p },
        ProcessName::Coordinate => ProcessKind::AbsolutelyContinuous { f: Cylinder::Coordinate },
        ProcessName::Threshold => ProcessKind::AbsolutelyContinuous { f: Cylinder::Threshold { level: p.level } },
        ProcessName::Affine => {
            ProcessKind::AbsolutelyContinuous { f: Cylinder::Affine { offset: p.offset, slope: p.slope } }
        }
    };
    Ok(make_process(kind, ConfigurationSpace::new(g, law)?)?)
}

fn run_process<G: BoxFolner>(g: G, cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = cfg.process.as_ref().context("process section")?;
    let js = cfg.js.as_ref().context("grid.js")?;
    let f = process_of(g.clone(), p)?;
    let seq = FolnerSequence::boxes(g);
    let tails = maximal_tails(&f, &seq, &p.lambdas, js, p.samples, cfg.seed)?;
    let trajectories = p
        .seeds
        .par_iter()
        .map(|&s| pointwise_trajectory(&f, &f.space.sample(s), &seq, &p.trajectory))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let last = *js.last().unwrap();
    for m in &tails {
        rows.push(vec![
            "maximal".into(),
            num(m.lambda),
            last.to_string(),
            num(m.tail),
            num(m.bound.min(1.0)),
            num(m.sigma),
        ]);
        checks.push(check(
            &format!("maximal-tail-{}", m.lambda),
            m.plausible(),
            m.tail,
            m.bound.min(1.0) + 3.0 * m.sigma,
            format!("kappa~ = {}", m.kappa_tilde),
        ));
    }
    let mean = f.mean();
    for (s, t) in p.seeds.iter().zip(&trajectories) {
        for (j, v) in p.trajectory.iter().zip(t) {
            rows.push(vec!["pointwise".into(), s.to_string(), j.to_string(), num(*v), opt(mean), String::new()]);
        }
        if let (Some(m), Some(v)) = (mean, t.last()) {
            checks.push(check(&format!("pointwise-{s}"), (v - m).abs() <= p.tolerance, (v - m).abs(), p.tolerance, ""));
        }
    }
    Ok(Outcome {
        header: header(&["section", "parameter", "j", "value", "reference", "sigma"]),
        rows,
        summary: json!({ "mean": mean, "bound": f.bound, "samples": p.samples }),
        checks,
        extra: Vec::new(),
    })
}

fn run_covering<G: BoxFolner>(g: G, cfg: &ExperimentConfig) -> Result<Outcome> {
    let c: &CoveringConfig = cfg.covering.as_ref().context("covering section")?;
    let seq = FolnerSequence::boxes(g.clone());
    let [m, n] = c.levels;
    let levels: Vec<FiniteSet<G::Elem>> = (m..=n).map(|j| seq.get(j)).collect::<Result<_, _>>()?;
    let pool = seq.get(c.side)?;
    let results = (0..c.instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = StdRng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(k as u64));
            let b: FiniteSet<G::Elem> = pool.iter().filter(|_| rng.random_bool(c.density)).cloned().collect();
            let theta: std::collections::BTreeMap<G::Elem, usize> =
                b.iter().map(|x| (x.clone(), rng.random_range(m..=n))).collect();
            let th = |x: &G::Elem| theta[x];
            let chosen = vitali_cover(&g, &b, &th, &levels, m)?;
            let (disjoint, covers) = check_vitali_cover(&g, &b, &th, &levels, m, &chosen);
            Ok::<_, folner_core::Error>((b.len(), chosen.len(), disjoint, covers))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let passed = results.iter().filter(|r| r.2 && r.3).count();
    let rows = results
        .iter()
        .enumerate()
        .map(|(k, r)| vec![k.to_string(), r.0.to_string(), r.1.to_string(), r.2.to_string(), r.3.to_string()])
        .collect();
    Ok(Outcome {
        header: header(&["instance", "b_size", "chosen", "disjoint", "covers"]),
        rows,
        summary: json!({ "instances": c.instances, "passed": passed }),
        checks: vec![check(
            "covering",
            passed == c.instances,
            passed as f64,
            c.instances as f64,
            format!("{passed}/{} instances pass both postconditions", c.instances),
        )],
        extra: Vec::new(),
    })
}

/// Re-checks a saved tiling.
pub fn verify_file(doc: &TilingFile) -> Result<Vec<Check>> {
    fn go<G: Group>(g: G, doc: &TilingDoc) -> Result<Vec<Check>> {
        Ok(verify_tiling(&g, &doc.to_tiling(&g)?).checks)
    }
    with_group!(doc.group, go(&doc.tiling))
}
