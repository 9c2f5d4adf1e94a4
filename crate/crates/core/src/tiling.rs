//! ε-quasi tilings: greedy Ornstein–Weiss construction, disjoint cores,
//! uniform families of tilings and decomposition towers.
//!
//! Everything is discrete: index families Λ and Υ are finite subsets of the
//! group and all averages over them are plain means.

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{
    invariance_ratio, invariance_ratio_fast, inverse_set, k_boundary, product_set, BoxFolner,
    FiniteSet, FolnerSequence, Group, Index, Region,
};

/// Parameters of an ε-quasi tiling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilingParams {
    pub epsilon: f64,
    pub beta: f64,
    pub zeta: f64,
    pub n: usize,
    pub eta: Vec<f64>,
    pub delta0: f64,
    pub strict: bool,
}

impl TilingParams {
    pub fn eta_sum(&self) -> f64 {
        self.eta.iter().sum()
    }
}

/// `N = ⌈log ε / log(1−ε)⌉`, `η_i = ε(1−ε)^{N−i}`, `δ₀ = 6^{−N}β/4`.
///
/// Strict mode enforces `ε ≤ 1/10` and `β, ζ < 2^{−N}ε`; otherwise `ε ≤ 1/2`.
pub fn tiling_params(epsilon: f64, beta: f64, zeta: f64, strict: bool) -> Result<TilingParams> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    if !(beta > 0.0) || !(zeta > 0.0) {
        return Err(Error::invalid("beta and zeta must be positive"));
    }
    let n = (epsilon.ln() / (1.0 - epsilon).ln()).ceil().max(1.0) as usize;
    if strict {
        if epsilon > 0.1 {
            return Err(Error::Strict(format!("epsilon {epsilon} exceeds 1/10")));
        }
        let cap = 2f64.powi(-(n as i32)) * epsilon;
        if beta >= cap || zeta >= cap {
            return Err(Error::Strict(format!("beta and zeta must be below 2^-N·ε = {cap:e}")));
        }
    } else if epsilon > 0.5 {
        return Err(Error::invalid(format!("epsilon {epsilon} exceeds 1/2")));
    }
    let eta = (1..=n)
        .map(|i| epsilon * (1.0 - epsilon).powi((n - i) as i32))
        .collect();
    let delta0 = 6f64.powi(-(n as i32)) * beta / 4.0;
    Ok(TilingParams { epsilon, beta, zeta, n, eta, delta0, strict })
}

/// Outcome of the ε-disjointness test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Disjointness {
    /// Sequential cores certify ε-disjointness.
    Certified,
    /// Some pair overlaps in more than `ε(|A|+|B|)` elements, which no choice of cores survives.
    Violated,
    /// Neither the greedy certificate nor the pairwise obstruction applies.
    GreedyUndecided,
}

/// Decides ε-disjointness of a family; on success returns the sequential cores
/// `Ā_k = A_k ∖ (A_1 ∪ … ∪ A_{k−1})`.
pub fn is_eps_disjoint<E: Clone + Ord + std::hash::Hash>(
    family: &[FiniteSet<E>],
    epsilon: f64,
) -> Result<(Disjointness, Option<Vec<FiniteSet<E>>>)> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    if family.is_empty() {
        return Err(Error::invalid("empty family"));
    }
    let mut seen: FxHashSet<&E> = FxHashSet::default();
    let mut cores = Vec::with_capacity(family.len());
    let mut ok = true;
    for a in family {
        let core: FiniteSet<E> = a.iter().filter(|e| !seen.contains(e)).cloned().collect();
        if (core.len() as f64) < (1.0 - epsilon) * a.len() as f64 {
            ok = false;
        }
        seen.extend(a.iter());
        cores.push(core);
    }
    if ok {
        return Ok((Disjointness::Certified, Some(cores)));
    }
    for (i, a) in family.iter().enumerate() {
        for b in &family[i + 1..] {
            if a.intersection_len(b) as f64 > epsilon * (a.len() + b.len()) as f64 {
                return Ok((Disjointness::Violated, None));
            }
        }
    }
    Ok((Disjointness::GreedyUndecided, None))
}

/// `|A ∩ B| / |B|`.
pub fn alpha_coverage<E: Clone + Ord>(a: &FiniteSet<E>, b: &FiniteSet<E>) -> Result<f64> {
    if b.is_empty() {
        return Err(Error::invalid("alpha_coverage needs nonempty B"));
    }
    Ok(a.intersection_len(b) as f64 / b.len() as f64)
}

/// Smallest `n ≥ start` with `|∂_K(S_n)|/|S_n| < delta`.
///
/// Box sequences have nonincreasing ratios, so the search gallops and then
/// bisects; explicit prefixes are scanned linearly.
pub fn first_invariant_index<G: BoxFolner>(
    seq: &FolnerSequence<G>,
    k: &FiniteSet<G::Elem>,
    delta: f64,
    start: usize,
    limit: usize,
) -> Result<Option<usize>> {
    let g = &seq.group;
    let ok = |n: usize| -> Result<bool> { Ok(invariance_ratio_fast(g, k, &seq.get(n)?)? < delta) };
    if let Some(len) = seq.prefix_len() {
        for n in start.max(1)..=len.min(limit) {
            if ok(n)? {
                return Ok(Some(n));
            }
        }
        return Ok(None);
    }
    let start = start.max(1);
    if ok(start)? {
        return Ok(Some(start));
    }
    let mut lo = start;
    let mut step = 1;
    let hi = loop {
        let cand = lo + step;
        if cand > limit {
            if lo < limit && ok(limit)? {
                break limit;
            }
            return Ok(None);
        }
        if ok(cand)? {
            break cand;
        }
        lo = cand;
        step *= 2;
    };
    // Invariant: ok(lo) is false, ok(hi) is true.
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Default search limit for box sequences.
pub const SEARCH_LIMIT: usize = 1 << 22;

/// Nested basis `T_i = S_{n_i}` with `n_i ≥ i`, each `(L, ζ²)`-invariant, indices minimal.
pub fn select_basis<G: BoxFolner>(
    seq: &FolnerSequence<G>,
    params: &TilingParams,
    l: &FiniteSet<G::Elem>,
) -> Result<Vec<FiniteSet<G::Elem>>> {
    Ok(select_basis_indices(seq, params, l)?
        .into_iter()
        .map(|n| seq.get(n))
        .collect::<Result<_>>()?)
}

/// The Følner indices chosen by [`select_basis`].
pub fn select_basis_indices<G: BoxFolner>(
    seq: &FolnerSequence<G>,
    params: &TilingParams,
    l: &FiniteSet<G::Elem>,
) -> Result<Vec<usize>> {
    if !l.contains(&seq.group.identity()) {
        return Err(Error::invalid("L must contain the identity"));
    }
    if !seq.nested {
        return Err(Error::invalid("select_basis needs a nested sequence"));
    }
    let delta = params.zeta * params.zeta;
    let mut out = Vec::with_capacity(params.n);
    let mut prev = 1;
    for i in 1..=params.n {
        let start = prev.max(i);
        let n = first_invariant_index(seq, l, delta, start, SEARCH_LIMIT)?
            .ok_or(Error::NeedsLargerPrefix { stage: i })?;
        out.push(n);
        prev = n;
    }
    Ok(out)
}

/// Per-stage outcome of the greedy construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub centers: usize,
    pub density: f64,
    pub eta: f64,
    /// Candidates ran out before the density reached `η_i`.
    pub exhausted: bool,
}

/// An ε-quasi tiling of a finite target set.
#[derive(Clone, Debug)]
pub struct QuasiTiling<E> {
    pub params: TilingParams,
    pub basis: Vec<FiniteSet<E>>,
    /// Centers per stage, in acceptance order.
    pub centers: Vec<Vec<E>>,
    pub target: FiniteSet<E>,
    /// `cores[i][k] ⊆ T_i` for the center `centers[i][k]`.
    pub cores: Option<Vec<Vec<FiniteSet<E>>>>,
    pub stages: Vec<StageReport>,
    pub warnings: Vec<String>,
    /// Largest `|∂_L(T_i^c)| − |∂_L(T_i)| − ζ|T_i|` seen by [`disjointify`].
    pub core_boundary_excess: Option<f64>,
}

impl<E: Clone + Ord + std::hash::Hash> QuasiTiling<E> {
    /// Number of translates over all stages.
    pub fn translate_count(&self) -> usize {
        self.centers.iter().map(Vec::len).sum()
    }

    /// Union of all translates as a fraction of the target.
    pub fn coverage<G: Group<Elem = E>>(&self, g: &G) -> f64 {
        let mut seen: FxHashSet<E> = FxHashSet::default();
        for (i, cs) in self.centers.iter().enumerate() {
            for c in cs {
                for t in &self.basis[i] {
                    seen.insert(g.mul(t, c));
                }
            }
        }
        seen.len() as f64 / self.target.len().max(1) as f64
    }

    /// All translates `T_i c` with their stage.
    pub fn translates<G: Group<Elem = E>>(&self, g: &G) -> Vec<(usize, FiniteSet<E>)> {
        let mut out = Vec::with_capacity(self.translate_count());
        for (i, cs) in self.centers.iter().enumerate() {
            for c in cs {
                out.push((i, self.basis[i].iter().map(|t| g.mul(t, c)).collect()));
            }
        }
        out
    }
}

fn check_basis<G: Group>(g: &G, basis: &[FiniteSet<G::Elem>], n: usize) -> Result<()> {
    if basis.len() != n {
        return Err(Error::invalid(format!("basis has {} sets, N = {n}", basis.len())));
    }
    if !basis[0].contains(&g.identity()) {
        return Err(Error::invalid("T_1 must contain the identity"));
    }
    if basis.windows(2).any(|w| !w[0].is_subset(&w[1])) {
        return Err(Error::invalid("basis must be nested"));
    }
    Ok(())
}

/// Greedy Ornstein–Weiss tiling of `target`.
///
/// Stages run from `N` down to 1. A candidate center `c` (canonical order) is
/// accepted when `T_ic ⊆ T`, `T_ic` misses every earlier stage, its overlap
/// with the current stage is at most `ε|T_i|`, and the stage density moves
/// strictly closer to `η_i`.
pub fn quasi_tile<G: Group>(
    g: &G,
    target: &FiniteSet<G::Elem>,
    basis: &[FiniteSet<G::Elem>],
    params: &TilingParams,
) -> Result<QuasiTiling<G::Elem>> {
    check_basis(g, basis, params.n)?;
    if target.is_empty() {
        return Err(Error::invalid("empty target"));
    }
    let mut warnings = Vec::new();
    let tn = &basis[params.n - 1];
    let k = product_set(g, tn, &inverse_set(g, tn));
    let ratio = invariance_ratio_fast(g, &k, target)?;
    if ratio >= params.delta0 {
        let msg = format!(
            "target is not (T_N T_N^-1, δ0)-invariant: ratio {ratio:.3e} ≥ δ0 = {:.3e}",
            params.delta0
        );
        if params.strict {
            return Err(Error::Strict(msg));
        }
        warnings.push(msg);
    }
    let (centers, stages) = greedy_stages(g, target, basis, &params.eta, params.epsilon);
    for s in &stages {
        if (s.density - s.eta).abs() >= params.beta {
            warnings.push(format!(
                "stage {} density {:.5} misses η = {:.5} by ≥ β",
                s.stage, s.density, s.eta
            ));
        }
    }
    Ok(QuasiTiling {
        params: params.clone(),
        basis: basis.to_vec(),
        centers,
        target: target.clone(),
        cores: None,
        stages,
        warnings,
        core_boundary_excess: None,
    })
}

fn greedy_stages<G: Group>(
    g: &G,
    target: &FiniteSet<G::Elem>,
    basis: &[FiniteSet<G::Elem>],
    eta: &[f64],
    epsilon: f64,
) -> (Vec<Vec<G::Elem>>, Vec<StageReport>) {
    let n = basis.len();
    let index = Index::new(target);
    let total = target.len() as f64;
    // 0 = uncovered, s+1 = covered by stage s.
    let mut label = vec![0u8; target.len()];
    let mut centers = vec![Vec::new(); n];
    let mut stages = vec![];
    let mut idx = Vec::new();
    for i in (0..n).rev() {
        let ti = &basis[i];
        let me = (i + 1) as u8;
        let want = eta[i] * total;
        let allowed = (epsilon * ti.len() as f64).floor() as usize;
        let mut mass = 0usize;
        let mut exhausted = true;
        'cand: for c in target {
            if mass as f64 >= want {
                exhausted = false;
                break;
            }
            idx.clear();
            let mut overlap = 0usize;
            for t in ti {
                let Some(j) = index.get(&g.mul(t, c)) else { continue 'cand };
                match label[j] {
                    0 => {}
                    l if l == me => {
                        overlap += 1;
                        if overlap > allowed {
                            continue 'cand;
                        }
                    }
                    _ => continue 'cand,
                }
                idx.push(j);
            }
            let new_mass = mass + ti.len() - overlap;
            if (new_mass as f64 - want).abs() < (mass as f64 - want).abs() {
                for &j in &idx {
                    label[j] = me;
                }
                mass = new_mass;
                centers[i].push(c.clone());
            }
        }
        if mass as f64 >= want {
            exhausted = false;
        }
        stages.push(StageReport {
            stage: i + 1,
            centers: centers[i].len(),
            density: mass as f64 / total,
            eta: eta[i],
            exhausted,
        });
    }
    stages.reverse();
    (centers, stages)
}

/// Disjoint cores `T_i^c ⊆ T_i`: each translate drops what earlier translates
/// of its stage already cover.
///
/// Fails if a core keeps less than `(1−ε)|T_i|`; records the largest excess of
/// `|∂_L(T_i^c)|` over `|∂_L(T_i)| + ζ|T_i|`.
pub fn disjointify<G: Group>(
    g: &G,
    tiling: &QuasiTiling<G::Elem>,
    l: &FiniteSet<G::Elem>,
    zeta: f64,
) -> Result<QuasiTiling<G::Elem>> {
    let eps = tiling.params.epsilon;
    let mut covered: FxHashSet<G::Elem> = FxHashSet::default();
    let mut cores = Vec::with_capacity(tiling.centers.len());
    let mut excess = f64::NEG_INFINITY;
    for (i, cs) in tiling.centers.iter().enumerate() {
        let ti = &tiling.basis[i];
        let base = if l.len() > 1 { k_boundary(g, l, ti)?.len() as f64 } else { 0.0 };
        let mut stage_cores = Vec::with_capacity(cs.len());
        let mut seen_cores: FxHashMap<FiniteSet<G::Elem>, f64> = FxHashMap::default();
        for (k, c) in cs.iter().enumerate() {
            let core: FiniteSet<G::Elem> = ti
                .iter()
                .filter(|t| !covered.contains(&g.mul(t, c)))
                .cloned()
                .collect();
            if (core.len() as f64) < (1.0 - eps) * ti.len() as f64 {
                return Err(Error::CoreTooSmall { stage: i + 1, center: k, kept: core.len(), size: ti.len() });
            }
            for t in ti {
                covered.insert(g.mul(t, c));
            }
            if !core.is_empty() && l.len() > 1 {
                let b = match seen_cores.get(&core) {
                    Some(&b) => b,
                    None => {
                        let b = k_boundary(g, l, &core)?.len() as f64;
                        seen_cores.insert(core.clone(), b);
                        b
                    }
                };
                excess = excess.max(b - base - zeta * ti.len() as f64);
            } else {
                excess = excess.max(-zeta * ti.len() as f64);
            }
            stage_cores.push(core);
        }
        cores.push(stage_cores);
    }
    let mut out = tiling.clone();
    out.cores = Some(cores);
    out.core_boundary_excess = Some(excess);
    Ok(out)
}

/// One named check with its measured value and pass flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

/// A structured list of checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn push(&mut self, name: &str, passed: bool, measured: f64, threshold: f64, detail: String) {
        self.checks.push(Check { name: name.into(), passed, measured, threshold, detail });
    }
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks every quasi-tiling property, plus the cores when present.
pub fn verify_tiling<G: Group>(g: &G, tiling: &QuasiTiling<G::Elem>) -> Report {
    let mut rep = Report::default();
    let p = &tiling.params;
    let nested = tiling.basis.first().is_some_and(|t| t.contains(&g.identity()))
        && tiling.basis.windows(2).all(|w| w[0].is_subset(&w[1]));
    rep.push("basis-nested", nested, 0.0, 0.0, String::new());

    let index = Index::new(&tiling.target);
    let total = tiling.target.len() as f64;
    let mut outside = None;
    let mut stage_sets: Vec<FxHashSet<usize>> = Vec::new();
    let mut worst_disjoint = String::new();
    let mut disjoint_ok = true;
    for (i, cs) in tiling.centers.iter().enumerate() {
        let mut union: FxHashSet<usize> = FxHashSet::default();
        let mut family = Vec::with_capacity(cs.len());
        for (k, c) in cs.iter().enumerate() {
            let tr: FiniteSet<G::Elem> = tiling.basis[i].iter().map(|t| g.mul(t, c)).collect();
            for e in &tr {
                match index.get(e) {
                    Some(j) => {
                        union.insert(j);
                    }
                    None => {
                        if outside.is_none() {
                            outside = Some((i + 1, k, format!("{c:?}")));
                        }
                    }
                }
            }
            family.push(tr);
        }
        if !family.is_empty() {
            let (status, _) = is_eps_disjoint(&family, p.epsilon).unwrap_or((Disjointness::Violated, None));
            if status != Disjointness::Certified {
                disjoint_ok = false;
                worst_disjoint = format!("stage {}: {status:?}", i + 1);
            }
        }
        stage_sets.push(union);
    }
    rep.push(
        "contained",
        outside.is_none(),
        0.0,
        0.0,
        outside.map(|(i, k, c)| format!("stage {i}, center #{k} = {c}")).unwrap_or_default(),
    );
    rep.push("eps-disjoint", disjoint_ok, 0.0, p.epsilon, worst_disjoint);
    let mut clash = String::new();
    for a in 0..stage_sets.len() {
        for b in a + 1..stage_sets.len() {
            if !stage_sets[a].is_disjoint(&stage_sets[b]) && clash.is_empty() {
                clash = format!("stages {} and {}", a + 1, b + 1);
            }
        }
    }
    rep.push("stages-disjoint", clash.is_empty(), 0.0, 0.0, clash);
    let mut worst: f64 = 0.0;
    let mut worst_stage = 0;
    for (i, s) in stage_sets.iter().enumerate() {
        let dev = (s.len() as f64 / total - p.eta[i]).abs();
        if dev > worst {
            worst = dev;
            worst_stage = i + 1;
        }
    }
    rep.push(
        "density",
        worst < p.beta,
        worst,
        p.beta,
        format!("largest deviation at stage {worst_stage}"),
    );
    let cover = stage_sets.iter().map(|s| s.len()).sum::<usize>() as f64 / total;
    rep.push("coverage", cover >= 1.0 - 2.0 * p.epsilon, cover, 1.0 - 2.0 * p.epsilon, String::new());

    if let Some(cores) = &tiling.cores {
        let mut ok_sub = true;
        let mut ok_size = true;
        let mut seen: FxHashSet<G::Elem> = FxHashSet::default();
        let mut ok_disj = true;
        let mut mass = 0usize;
        for (i, cs) in cores.iter().enumerate() {
            for (k, core) in cs.iter().enumerate() {
                let ti = &tiling.basis[i];
                ok_sub &= core.is_subset(ti);
                ok_size &= core.len() as f64 >= (1.0 - p.epsilon) * ti.len() as f64;
                let c = &tiling.centers[i][k];
                for t in core {
                    ok_disj &= seen.insert(g.mul(t, c));
                }
                mass += core.len();
            }
        }
        let union: usize = stage_sets.iter().map(|s| s.len()).sum();
        rep.push("cores-subset", ok_sub, 0.0, 0.0, String::new());
        rep.push("cores-size", ok_size, 0.0, 1.0 - p.epsilon, String::new());
        rep.push("cores-disjoint", ok_disj, 0.0, 0.0, String::new());
        rep.push("cores-partition", mass == union, mass as f64, union as f64, String::new());
        if let Some(ex) = tiling.core_boundary_excess {
            rep.push("cores-boundary", ex <= 0.0, ex, 0.0, "max |∂_L core| − |∂_L T_i| − ζ|T_i|".into());
        }
    }
    rep
}

/// Serializable form of a tiling: elements as coordinate lists.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TilingDoc {
    pub params: TilingParams,
    pub basis: Vec<Vec<Vec<i64>>>,
    pub centers: Vec<Vec<Vec<i64>>>,
    pub target: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cores: Option<Vec<Vec<Vec<Vec<i64>>>>>,
}

impl TilingDoc {
    pub fn from_tiling<G: Group>(g: &G, t: &QuasiTiling<G::Elem>) -> Self {
        let enc = |s: &FiniteSet<G::Elem>| s.iter().map(|e| g.coords(e)).collect::<Vec<_>>();
        TilingDoc {
            params: t.params.clone(),
            basis: t.basis.iter().map(enc).collect(),
            centers: t.centers.iter().map(|cs| cs.iter().map(|c| g.coords(c)).collect()).collect(),
            target: enc(&t.target),
            cores: t.cores.as_ref().map(|cs| cs.iter().map(|v| v.iter().map(enc).collect()).collect()),
        }
    }

    pub fn to_tiling<G: Group>(&self, g: &G) -> Result<QuasiTiling<G::Elem>> {
        let dec = |v: &Vec<Vec<i64>>| -> Result<FiniteSet<G::Elem>> {
            v.iter().map(|c| g.from_coords(c)).collect::<Result<Vec<_>>>().map(FiniteSet::from_iter)
        };
        let basis = self.basis.iter().map(dec).collect::<Result<Vec<_>>>()?;
        let centers = self
            .centers
            .iter()
            .map(|cs| cs.iter().map(|c| g.from_coords(c)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let cores = match &self.cores {
            None => None,
            Some(cs) => Some(
                cs.iter()
                    .map(|v| v.iter().map(dec).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        if centers.len() != basis.len() {
            return Err(Error::invalid("centers and basis lengths differ"));
        }
        Ok(QuasiTiling {
            params: self.params.clone(),
            basis,
            centers,
            target: dec(&self.target)?,
            cores,
            stages: Vec::new(),
            warnings: Vec::new(),
            core_boundary_excess: None,
        })
    }
}

/// Maximal greedy packing of `target` by translates `Tc` that overlap the
/// union of earlier ones in at most `ε|T|` elements; returns the centers and
/// their sequential cores as subsets of the group.
fn pack<G: Group>(
    g: &G,
    target: &FiniteSet<G::Elem>,
    tile: &FiniteSet<G::Elem>,
    epsilon: f64,
) -> (Vec<G::Elem>, Vec<FiniteSet<G::Elem>>) {
    let index = Index::new(target);
    let mut covered = vec![false; target.len()];
    let allowed = (epsilon * tile.len() as f64).floor() as usize;
    let mut centers = Vec::new();
    let mut cores = Vec::new();
    let mut idx = Vec::with_capacity(tile.len());
    'cand: for c in target {
        idx.clear();
        let mut overlap = 0;
        for t in tile {
            let Some(j) = index.get(&g.mul(t, c)) else { continue 'cand };
            if covered[j] {
                overlap += 1;
                if overlap > allowed {
                    continue 'cand;
                }
            } else {
                idx.push(j);
            }
        }
        let elems = target.as_slice();
        cores.push(FiniteSet::from_iter(idx.iter().map(|&j| elems[j].clone())));
        for &j in &idx {
            covered[j] = true;
        }
        centers.push(c.clone());
    }
    (centers, cores)
}

/// Knobs of the uniform-family and tower constructions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformOptions {
    /// Background parameter ε₁; `None` picks ε² (or `min(ε²/100, β²)` in strict mode).
    pub eps1: Option<f64>,
    /// Invariance the background tile needs with respect to `T_N T_N⁻¹`; `None` uses ε.
    pub background_invariance: Option<f64>,
}

impl Default for UniformOptions {
    fn default() -> Self {
        UniformOptions { eps1: None, background_invariance: None }
    }
}

impl UniformOptions {
    pub fn eps1(&self, p: &TilingParams) -> f64 {
        self.eps1.unwrap_or(if p.strict {
            (p.epsilon * p.epsilon / 100.0).min(p.beta * p.beta)
        } else {
            p.epsilon * p.epsilon
        })
    }
}

/// A disjoint background tiling by translates of one Følner member, refined by
/// quasi-tilings of its cores with the basis `T_i`.
#[derive(Clone, Debug)]
pub struct Background<E> {
    pub hull: FiniteSet<E>,
    pub tile: FiniteSet<E>,
    pub centers: Vec<E>,
    /// The disjoint translates `T̄^c c` (as subsets of the group).
    pub cores: Vec<FiniteSet<E>>,
    /// Fine centers `Ĉ_i`, the union over cores of the core tilings.
    pub fine: Vec<FiniteSet<E>>,
    /// Stage deviations above β inside cores.
    pub fine_misses: usize,
}

impl<E: Clone + Ord + std::hash::Hash> Background<E> {
    /// `T̂ ∖ ∪ cores`.
    pub fn uncovered(&self) -> Vec<E> {
        let mut covered: FxHashSet<&E> = FxHashSet::default();
        for c in &self.cores {
            covered.extend(c.iter());
        }
        self.hull.iter().filter(|e| !covered.contains(e)).cloned().collect()
    }

    pub fn covered_fraction(&self) -> f64 {
        let m: usize = self.cores.iter().map(|c| c.len()).sum();
        m as f64 / self.hull.len().max(1) as f64
    }
}

fn build_background<G: BoxFolner>(
    seq: &FolnerSequence<G>,
    hull: FiniteSet<G::Elem>,
    basis: &[FiniteSet<G::Elem>],
    params: &TilingParams,
    eps1: f64,
    bg_delta: f64,
) -> Result<Background<G::Elem>> {
    let g = &seq.group;
    let tn = &basis[basis.len() - 1];
    let k = product_set(g, tn, &inverse_set(g, tn));
    let m = first_invariant_index(seq, &k, bg_delta, 1, SEARCH_LIMIT)?
        .ok_or(Error::NeedsLargerPrefix { stage: 0 })?;
    let mut tile = seq.get(m)?;
    // The background tile must contain T_N so that fine tiles fit in it.
    let mut m2 = m;
    while !tn.is_subset(&tile) {
        m2 += 1;
        tile = seq.get(m2)?;
    }
    let (centers, cores) = pack(g, &hull, &tile, eps1);
    let mut fine: Vec<Vec<G::Elem>> = vec![Vec::new(); basis.len()];
    let mut misses = 0;
    let mut cache: FxHashMap<Vec<Vec<i64>>, Vec<Vec<G::Elem>>> = FxHashMap::default();
    for (core, c) in cores.iter().zip(&centers) {
        // Cores that are translates of one shape share a tiling up to translation.
        let cinv = g.inv(c);
        let shape: FiniteSet<G::Elem> = core.iter().map(|e| g.mul(e, &cinv)).collect();
        let key: Vec<Vec<i64>> = shape.iter().map(|e| g.coords(e)).collect();
        let local = match cache.get(&key) {
            Some(v) => v.clone(),
            None => {
                let v = if shape.is_empty() {
                    vec![Vec::new(); basis.len()]
                } else {
                    let qt = quasi_tile_quiet(g, &shape, basis, params);
                    misses += qt.1;
                    qt.0
                };
                cache.insert(key, v.clone());
                v
            }
        };
        for (i, cs) in local.iter().enumerate() {
            fine[i].extend(cs.iter().map(|d| g.mul(d, c)));
        }
    }
    Ok(Background {
        hull,
        tile,
        centers,
        cores,
        fine: fine.into_iter().map(FiniteSet::from_iter).collect(),
        fine_misses: misses,
    })
}

fn quasi_tile_quiet<G: Group>(
    g: &G,
    target: &FiniteSet<G::Elem>,
    basis: &[FiniteSet<G::Elem>],
    params: &TilingParams,
) -> (Vec<Vec<G::Elem>>, usize) {
    let (centers, stages) = greedy_stages(g, target, basis, &params.eta, params.epsilon);
    let misses = stages.iter().filter(|s| (s.density - s.eta).abs() >= params.beta).count();
    (centers, misses)
}

/// `Λ = {a : Ta ⊆ T̂, |Ta ∖ ∪cores|/|T| ≤ √ε₁}`.
///
/// Depends only on `T`, the hull and the background cores.
pub fn lambda_from_background<G: Group>(
    g: &G,
    t: &FiniteSet<G::Elem>,
    hull: &Region<G::Elem>,
    cores: &[FiniteSet<G::Elem>],
    eps1: f64,
) -> FiniteSet<G::Elem> {
    let a = hull.fitting(g, t);
    let aix = Index::new(&a);
    let mut covered: FxHashSet<&G::Elem> = FxHashSet::default();
    for c in cores {
        covered.extend(c.iter());
    }
    let mut bad = vec![0u32; a.len()];
    let tinv = inverse_set(g, t);
    for w in hull.set.iter().filter(|e| !covered.contains(e)) {
        for ti in &tinv {
            if let Some(j) = aix.get(&g.mul(ti, w)) {
                bad[j] += 1;
            }
        }
    }
    let limit = eps1.sqrt() * t.len() as f64;
    a.iter()
        .zip(&bad)
        .filter(|(_, &b)| b as f64 <= limit)
        .map(|(e, _)| e.clone())
        .collect()
}

/// A uniform family of ε-quasi tilings of `target`, indexed by `Λ`.
#[derive(Clone, Debug)]
pub struct UniformFamily<E> {
    pub params: TilingParams,
    pub basis: Vec<FiniteSet<E>>,
    pub target: FiniteSet<E>,
    pub eps1: f64,
    pub background: Background<E>,
    /// Elements `a` with `Ta ⊆ T̂`.
    pub fitting: usize,
    pub lambda: FiniteSet<E>,
    /// `γ_i = card(Ĉ_i)/|T̂|`.
    pub gamma: Vec<f64>,
}

impl<E: Clone + Ord + std::hash::Hash> UniformFamily<E> {
    pub fn hull(&self) -> &FiniteSet<E> {
        &self.background.hull
    }
    pub fn hull_centers(&self) -> &[FiniteSet<E>] {
        &self.background.fine
    }

    /// `C_i^λ = {d ∈ T : dλ ∈ Ĉ_i}`.
    pub fn centers_for<G: Group<Elem = E>>(&self, g: &G, lambda: &E) -> Vec<FiniteSet<E>> {
        centers_through(g, &self.target, &self.background.fine, lambda)
    }
}

fn centers_through<G: Group>(
    g: &G,
    t: &FiniteSet<G::Elem>,
    hull_centers: &[FiniteSet<G::Elem>],
    lambda: &G::Elem,
) -> Vec<FiniteSet<G::Elem>> {
    hull_centers
        .iter()
        .map(|ch| t.iter().filter(|d| ch.contains(&g.mul(d, lambda))).cloned().collect())
        .collect()
}

/// `T ∩ Ĉλ⁻¹`, enumerated from the hull side.
fn centers_through_hull<G: Group>(
    g: &G,
    t: &FiniteSet<G::Elem>,
    hull_centers: &[FiniteSet<G::Elem>],
    lambda: &G::Elem,
) -> Vec<FiniteSet<G::Elem>> {
    let li = g.inv(lambda);
    hull_centers
        .iter()
        .map(|ch| ch.iter().map(|c| g.mul(c, &li)).filter(|d| t.contains(d)).collect())
        .collect()
}

/// Hull `T̂`: smallest Følner member that is `(KK⁻¹, δ)`-invariant.
fn hull_for<G: BoxFolner>(seq: &FolnerSequence<G>, k: &FiniteSet<G::Elem>, delta: f64) -> Result<FiniteSet<G::Elem>> {
    let g = &seq.group;
    let kk = product_set(g, k, &inverse_set(g, k));
    let m = first_invariant_index(seq, &kk, delta, 1, SEARCH_LIMIT)?
        .ok_or(Error::NeedsLargerPrefix { stage: 0 })?;
    seq.get(m)
}

fn enclosing_radius<G: Group>(g: &G, k: &FiniteSet<G::Elem>) -> u32 {
    let metric = g.default_metric();
    g.centroid(k)
        .and_then(|c| {
            let ci = g.inv(&c);
            k.iter().map(|e| g.metric_norm(&g.mul(e, &ci), metric)).max().flatten()
        })
        .map(|r| r as u32 + 1)
        .unwrap_or(0)
}

/// Uniform family of ε-quasi tilings of `target`.
///
/// The hull `T̂` is the smallest Følner member that is `(TT⁻¹, ε₁)`-invariant.
/// It is packed by disjoint background translates of one Følner member, each
/// of which is quasi-tiled by the basis, giving the hull centers `Ĉ_i`.
pub fn uniform_family<G: BoxFolner>(
    target: &FiniteSet<G::Elem>,
    basis: &[FiniteSet<G::Elem>],
    params: &TilingParams,
    seq: &FolnerSequence<G>,
    opts: &UniformOptions,
) -> Result<UniformFamily<G::Elem>> {
    let g = &seq.group;
    check_basis(g, basis, params.n)?;
    if target.is_empty() {
        return Err(Error::invalid("empty target"));
    }
    let eps1 = opts.eps1(params);
    let hull = hull_for(seq, target, eps1)?;
    let bg = build_background(
        seq,
        hull,
        basis,
        params,
        eps1,
        opts.background_invariance.unwrap_or(params.epsilon),
    )?;
    let metric = g.default_metric();
    let region = Region::new(g, bg.hull.clone(), metric, enclosing_radius(g, target) + 1)?;
    let fitting = region.fitting(g, target).len();
    let lambda = lambda_from_background(g, target, &region, &bg.cores, eps1);
    if lambda.is_empty() {
        return Err(Error::EmptyIndexSet(format!(
            "Λ is empty for ε₁ = {eps1}; {fitting} translates fit, background covers {:.4}",
            bg.covered_fraction()
        )));
    }
    let gamma = bg.fine.iter().map(|c| c.len() as f64 / bg.hull.len() as f64).collect();
    Ok(UniformFamily {
        params: params.clone(),
        basis: basis.to_vec(),
        target: target.clone(),
        eps1,
        background: bg,
        fitting,
        lambda,
        gamma,
    })
}

/// Per-λ coverage of `T` by the translates `T_i d`, `d ∈ C_i^λ`, that lie inside `T`.
///
/// Returns the minimum over `λ ∈ Λ` and the index attaining it.
pub fn min_family_coverage<G: Group>(g: &G, fam: &UniformFamily<G::Elem>) -> (f64, usize) {
    let t = &fam.target;
    // T_i d ⊆ T  ⟺  d ∈ A_i(T).
    let region = Region::new(g, t.clone(), g.default_metric(), enclosing_radius(g, fam.basis.last().unwrap()) + 1)
        .expect("metric supported");
    let inside: Vec<Index<G::Elem>> = fam.basis.iter().map(|ti| Index::new(&region.fitting(g, ti))).collect();
    // For each hull element, the fine tiles covering it.
    let hull_ix = Index::new(fam.hull());
    let mut cover: Vec<Vec<(u8, u32)>> = vec![Vec::new(); fam.hull().len()];
    let mut tiles: Vec<G::Elem> = Vec::new();
    for (i, ch) in fam.hull_centers().iter().enumerate() {
        for c in ch {
            let id = tiles.len() as u32;
            tiles.push(c.clone());
            for s in &fam.basis[i] {
                if let Some(j) = hull_ix.get(&g.mul(s, c)) {
                    cover[j].push((i as u8, id));
                }
            }
        }
    }
    let tsize = t.len() as f64;
    fam.lambda
        .iter()
        .enumerate()
        .map(|(k, lam)| {
            let li = g.inv(lam);
            let mut hits = 0usize;
            for d in t {
                let x = g.mul(d, lam);
                let j = hull_ix.get(&x).expect("Tλ ⊆ T̂");
                if cover[j].iter().any(|&(i, id)| inside[i as usize].contains(&g.mul(&tiles[id as usize], &li))) {
                    hits += 1;
                }
            }
            (hits as f64 / tsize, k)
        })
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
}

/// One row of the uniform density check on a window `S ⊆ T`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityRow {
    pub stage: usize,
    pub measured: f64,
    pub expected: f64,
    pub bound: f64,
}

impl DensityRow {
    pub fn passed(&self) -> bool {
        (self.measured - self.expected).abs() < self.bound
    }
}

/// `mean_λ card(C_i^λ ∩ S)/|T|` against `η_i|S|/(|T_i||T|)` with bound `4β/|T_i| + 2εγ_i`.
pub fn uniform_density<G: Group>(g: &G, fam: &UniformFamily<G::Elem>, window: &FiniteSet<G::Elem>) -> Vec<DensityRow> {
    let p = &fam.params;
    let lam = Index::new(&fam.lambda);
    let t = fam.target.len() as f64;
    let nl = fam.lambda.len() as f64;
    let winv: Vec<G::Elem> = window.iter().map(|s| g.inv(s)).collect();
    fam.hull_centers()
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            // Σ_λ card(C_i^λ ∩ S) = #{(s, c) : s⁻¹c ∈ Λ}.
            let mut count = 0usize;
            for c in ch {
                for si in &winv {
                    if lam.contains(&g.mul(si, c)) {
                        count += 1;
                    }
                }
            }
            let ti = fam.basis[i].len() as f64;
            DensityRow {
                stage: i + 1,
                measured: count as f64 / nl / t,
                expected: p.eta[i] * window.len() as f64 / (ti * t),
                bound: 4.0 * p.beta / ti + 2.0 * p.epsilon * fam.gamma[i],
            }
        })
        .collect()
}

/// Structural checks of a uniform family.
///
/// `samples` λ's (spread evenly over Λ) are used for the two-way center identity.
pub fn verify_family<G: Group>(g: &G, fam: &UniformFamily<G::Elem>, samples: usize) -> Report {
    let mut rep = Report::default();
    let p = &fam.params;
    let hull = fam.hull();
    let stride = (fam.lambda.len() / samples.max(1)).max(1);
    let picks: Vec<&G::Elem> = fam.lambda.iter().step_by(stride).collect();
    let inside = picks.iter().all(|l| fam.target.iter().all(|t| hull.contains(&g.mul(t, l))));
    rep.push("hull-contains-T-lambda", inside, picks.len() as f64, 0.0, String::new());
    let (cov, at) = min_family_coverage(g, fam);
    rep.push(
        "coverage-per-lambda",
        cov >= 1.0 - 4.0 * p.epsilon,
        cov,
        1.0 - 4.0 * p.epsilon,
        format!("minimum at λ = {:?}", fam.lambda.as_slice()[at]),
    );
    let mass: f64 = fam.gamma.iter().zip(&fam.basis).map(|(g, t)| g * t.len() as f64).sum();
    rep.push("gamma-mass", mass <= 2.0, mass, 2.0, String::new());
    let same = picks.iter().all(|l| {
        centers_through(g, &fam.target, fam.hull_centers(), l) == centers_through_hull(g, &fam.target, fam.hull_centers(), l)
    });
    rep.push("centers-identity", same, picks.len() as f64, 0.0, String::new());
    let e1 = fam.eps1;
    let floor = (1.0 - 6.0 * e1.sqrt()) * (1.0 - e1) * hull.len() as f64;
    rep.push(
        "lambda-size",
        fam.lambda.len() as f64 >= floor,
        fam.lambda.len() as f64,
        floor,
        String::new(),
    );
    rep
}

/// A uniform decomposition tower for `U` with hull `Û`.
#[derive(Clone, Debug)]
pub struct DecompositionTower<E> {
    pub params: TilingParams,
    pub basis: Vec<FiniteSet<E>>,
    pub target: FiniteSet<E>,
    pub eps1: f64,
    pub eps2: f64,
    pub eta: f64,
    /// Background of `Û`: disjoint translates `X_{lc}`.
    pub hull_background: Background<E>,
    /// Shared reference set `T̃` with its own background and fine centers.
    pub reference: Background<E>,
    pub upsilon: FiniteSet<E>,
    /// `|Υ(l,c)|` per background core of `Û`.
    pub upsilon_parts: Vec<usize>,
    pub lambda: FiniteSet<E>,
}

impl<E: Clone + Ord + std::hash::Hash> DecompositionTower<E> {
    pub fn hull(&self) -> &FiniteSet<E> {
        &self.hull_background.hull
    }

    /// `Ĉ_i^y`: centers `d` in a core `X` of `Û` with `dy ∈ Ĉ_i(T̃)` and `T_i d ⊆ X`.
    pub fn hull_centers<G: Group<Elem = E>>(&self, g: &G, y: &E) -> Vec<FiniteSet<E>> {
        let mut out: Vec<Vec<E>> = vec![Vec::new(); self.basis.len()];
        for core in &self.hull_background.cores {
            for d in core {
                let x = g.mul(d, y);
                for (i, ch) in self.reference.fine.iter().enumerate() {
                    if ch.contains(&x) && self.basis[i].iter().all(|t| core.contains(&g.mul(t, d))) {
                        out[i].push(d.clone());
                    }
                }
            }
        }
        out.into_iter().map(FiniteSet::from_iter).collect()
    }

    /// `C_i^{y,λ} = {d ∈ U : dλ ∈ Ĉ_i^y}`.
    pub fn derived_centers<G: Group<Elem = E>>(&self, g: &G, y: &E, lambda: &E) -> Vec<FiniteSet<E>> {
        centers_through(g, &self.target, &self.hull_centers(g, y), lambda)
    }
}

/// Uniform decomposition tower for `U`.
///
/// `Û` is the smallest Følner member that is `(UU⁻¹, η)`-invariant; `Λ` is
/// built from `U`, `Û` and the background of `Û` before any `y` is examined.
/// The reference set `T̃` is the smallest member that is `(ÛÛ⁻¹, ε₂)`-invariant
/// and `Υ = ∩ Υ(l,c)`, where `Υ(l,c)` collects the `y` with `X_{lc}y ⊆ T̃` and
/// at most a `√ε₂` fraction of `X_{lc}y` outside the background of `T̃`.
pub fn decomposition_tower<G: BoxFolner>(
    u: &FiniteSet<G::Elem>,
    basis: &[FiniteSet<G::Elem>],
    params: &TilingParams,
    seq: &FolnerSequence<G>,
    eta: f64,
    opts: &UniformOptions,
) -> Result<DecompositionTower<G::Elem>> {
    let g = &seq.group;
    check_basis(g, basis, params.n)?;
    if u.is_empty() {
        return Err(Error::invalid("empty target"));
    }
    let eps1 = opts.eps1(params);
    let eps2 = eps1;
    if !(eta > 0.0 && eta < eps1 / 2.0) {
        return Err(Error::invalid(format!("eta must lie in (0, ε₁/2) = (0, {})", eps1 / 2.0)));
    }
    let bg_delta = opts.background_invariance.unwrap_or(params.epsilon);
    let hull = hull_for(seq, u, eta)?;
    let hull_bg = build_background(seq, hull, basis, params, eps1, bg_delta)?;
    let metric = g.default_metric();
    let hull_region = Region::new(g, hull_bg.hull.clone(), metric, enclosing_radius(g, u) + 1)?;
    let lambda = lambda_from_background(g, u, &hull_region, &hull_bg.cores, eps1);
    if lambda.is_empty() {
        return Err(Error::EmptyIndexSet("Λ".into()));
    }

    let reference_set = hull_for(seq, &hull_bg.hull, eps2)?;
    let reference = build_background(seq, reference_set, basis, params, eps2, bg_delta)?;
    let cap = hull_bg.cores.iter().map(|c| enclosing_radius(g, c)).max().unwrap_or(0) + 1;
    let ref_region = Region::new(g, reference.hull.clone(), metric, cap)?;
    let uncovered = reference.uncovered();
    let limit_frac = eps2.sqrt();
    let mut upsilon: Option<FxHashSet<G::Elem>> = None;
    let mut parts = Vec::with_capacity(hull_bg.cores.len());
    for core in hull_bg.cores.iter().filter(|c| !c.is_empty()) {
        let fits = ref_region.fitting(g, core);
        let fix = Index::new(&fits);
        let mut bad = vec![0u32; fits.len()];
        let cinv = inverse_set(g, core);
        for v in &uncovered {
            for xi in &cinv {
                if let Some(j) = fix.get(&g.mul(xi, v)) {
                    bad[j] += 1;
                }
            }
        }
        let limit = limit_frac * core.len() as f64;
        let part: Vec<G::Elem> = fits
            .iter()
            .zip(&bad)
            .filter(|(_, &b)| b as f64 <= limit)
            .map(|(e, _)| e.clone())
            .collect();
        parts.push(part.len());
        upsilon = Some(match upsilon {
            None => part.into_iter().collect(),
            Some(mut acc) => {
                let here: FxHashSet<G::Elem> = part.into_iter().collect();
                acc.retain(|e| here.contains(e));
                acc
            }
        });
    }
    let upsilon: FiniteSet<G::Elem> = FiniteSet::from_iter(upsilon.unwrap_or_default());
    if upsilon.is_empty() {
        return Err(Error::EmptyIndexSet("Υ".into()));
    }
    Ok(DecompositionTower {
        params: params.clone(),
        basis: basis.to_vec(),
        target: u.clone(),
        eps1,
        eps2,
        eta,
        hull_background: hull_bg,
        reference,
        upsilon,
        upsilon_parts: parts,
        lambda,
    })
}

/// Checks of a decomposition tower; `(y, λ)` pairs are sampled evenly.
pub fn verify_tower<G: Group>(g: &G, tower: &DecompositionTower<G::Elem>, samples: usize) -> Report {
    let mut rep = Report::default();
    let p = &tower.params;
    let hull = tower.hull();
    let hsize = hull.len() as f64;
    let contained = tower.lambda.iter().all(|l| tower.target.iter().all(|t| hull.contains(&g.mul(t, l))));
    rep.push("hull-contains-U-lambda", contained, 0.0, 0.0, String::new());
    let nl = tower.lambda.len() as f64;
    rep.push(
        "lambda-size",
        nl >= (1.0 - p.beta) * hsize && nl <= hsize,
        nl / hsize,
        1.0 - p.beta,
        "|Λ|/|Û|".into(),
    );
    let region = Region::new(g, hull.clone(), g.default_metric(), enclosing_radius(g, &tower.target) + 1)
        .expect("metric supported");
    let again = lambda_from_background(g, &tower.target, &region, &tower.hull_background.cores, tower.eps1);
    rep.push("lambda-independent", again == tower.lambda, 0.0, 0.0, String::new());
    let ny = tower.upsilon.len() as f64;
    let worst = tower.upsilon_parts.iter().map(|&n| ny / n as f64).fold(f64::INFINITY, f64::min);
    rep.push("upsilon-size", worst >= 1.0 - tower.eps1, worst, 1.0 - tower.eps1, "min |Υ|/|Υ(l,c)|".into());
    let ys: Vec<&G::Elem> = tower.upsilon.iter().step_by((tower.upsilon.len() / samples.max(1)).max(1)).take(samples).collect();
    let ls: Vec<&G::Elem> = tower.lambda.iter().step_by((tower.lambda.len() / samples.max(1)).max(1)).take(samples).collect();
    let mut same = true;
    for y in &ys {
        let hc = tower.hull_centers(g, y);
        for l in &ls {
            same &= centers_through(g, &tower.target, &hc, l) == centers_through_hull(g, &tower.target, &hc, l);
        }
    }
    rep.push("centers-identity", same, (ys.len() * ls.len()) as f64, 0.0, String::new());
    rep
}

/// Invariance ratio with the brute-force boundary, exposed for small checks.
pub fn ratio_exact<G: Group>(g: &G, k: &FiniteSet<G::Elem>, t: &FiniteSet<G::Elem>) -> Result<f64> {
    invariance_ratio(g, k, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{box_set, Lattice};

    fn z1(r: std::ops::Range<i64>) -> FiniteSet<[i64; 1]> {
        r.map(|x| [x]).collect()
    }

    #[test]
    fn params_formulas() {
        let p = tiling_params(0.25, 0.25 / 32.0, 0.01, false).unwrap();
        assert_eq!(p.n, 5);
        let want = [0.0791, 0.1055, 0.1406, 0.1875, 0.25];
        for (a, b) in p.eta.iter().zip(want) {
            assert!((a - b).abs() < 5e-5);
        }
        assert!((p.eta_sum() - 0.7627).abs() < 5e-5);
        assert_eq!(tiling_params(0.1, 1e-9, 1e-9, false).unwrap().n, 22);
        assert!(tiling_params(1.5, 0.1, 0.1, false).is_err());
        assert!(tiling_params(0.25, 0.1, 0.1, true).is_err());
        assert!(tiling_params(0.1, 0.1, 0.1, true).is_err());
    }

    #[test]
    fn eps_disjoint_examples() {
        let a = z1(0..10);
        let b = z1(9..19);
        let (s, cores) = is_eps_disjoint(&[a.clone(), b.clone()], 0.1).unwrap();
        assert_eq!(s, Disjointness::Certified);
        let cores = cores.unwrap();
        assert!(cores[0].is_disjoint(&cores[1]));
        assert!(cores[0].len() >= 9 && cores[1].len() >= 9);
        let (s, _) = is_eps_disjoint(&[a.clone(), a.clone()], 0.1).unwrap();
        assert_eq!(s, Disjointness::Violated);
        let (s, _) = is_eps_disjoint(&[z1(0..3), z1(5..9)], 0.01).unwrap();
        assert_eq!(s, Disjointness::Certified);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_coverage(&z1(0..5), &z1(0..10)).unwrap(), 0.5);
        assert_eq!(alpha_coverage(&z1(-5..15), &z1(0..10)).unwrap(), 1.0);
        let sq = box_set([0, 0], [10, 10]);
        let a: FiniteSet<[i64; 2]> = (3..7).map(|x| [x, 0]).collect();
        assert_eq!(alpha_coverage(&a, &sq).unwrap(), 4.0 / 100.0);
        assert!(alpha_coverage(&a, &FiniteSet::default()).is_err());
    }

    #[test]
    fn basis_with_trivial_l_is_prefix() {
        let seq = FolnerSequence::boxes(Lattice::<1>);
        let p = tiling_params(0.25, 0.01, 0.1, false).unwrap();
        let idx = select_basis_indices(&seq, &p, &FiniteSet::singleton([0])).unwrap();
        assert_eq!(idx, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn basis_with_unit_l() {
        let seq = FolnerSequence::boxes(Lattice::<1>);
        let p = tiling_params(0.25, 0.01, 0.25, false).unwrap();
        let l = z1(-1..2);
        let idx = select_basis_indices(&seq, &p, &l).unwrap();
        // |∂_L([0,n))| = 4, so the first admissible box has 4/n < 1/16.
        assert_eq!(idx, vec![65; 5]);
        for &n in &idx {
            assert!(ratio_exact(&Lattice::<1>, &l, &seq.get(n).unwrap()).unwrap() < 0.0625);
        }
        let short = FolnerSequence::explicit(Lattice::<1>, (1..10).map(|n| z1(0..n)).collect());
        assert_eq!(
            select_basis_indices(&short, &p, &l),
            Err(Error::NeedsLargerPrefix { stage: 1 })
        );
    }

    #[test]
    fn singleton_basis_hits_densities() {
        let g = Lattice::<1>;
        let p = tiling_params(0.25, 0.25 / 32.0, 0.01, false).unwrap();
        let basis = vec![FiniteSet::singleton([0]); 5];
        let t = z1(0..100_000);
        let qt = quasi_tile(&g, &t, &basis, &p).unwrap();
        let rep = verify_tiling(&g, &qt);
        assert!(rep.all_passed(), "{:?}", rep.failures());
        for (i, s) in qt.stages.iter().enumerate() {
            assert!((qt.centers[i].len() as f64 / 1e5 - p.eta[i]).abs() < p.beta, "{s:?}");
        }
    }

    #[test]
    fn moved_center_is_reported() {
        let g = Lattice::<1>;
        let p = tiling_params(0.25, 0.25 / 32.0, 0.01, false).unwrap();
        let basis: Vec<_> = (1..=5).map(|i| z1(0..i)).collect();
        let t = z1(0..2000);
        let mut qt = quasi_tile(&g, &t, &basis, &p).unwrap();
        assert!(verify_tiling(&g, &qt).all_passed());
        qt.centers[2][0] = [5000];
        let rep = verify_tiling(&g, &qt);
        let c = rep.get("contained").unwrap();
        assert!(!c.passed);
        assert!(c.detail.contains("stage 3"), "{}", c.detail);
    }

    #[test]
    fn disjointify_two_tiles() {
        let g = Lattice::<1>;
        let p = tiling_params(0.25, 0.5, 0.5, false).unwrap();
        let mut basis = vec![z1(0..1); 4];
        basis.push(z1(0..8));
        let qt = QuasiTiling {
            params: p.clone(),
            basis: basis.clone(),
            centers: vec![vec![], vec![], vec![], vec![], vec![[0], [6]]],
            target: z1(0..14),
            cores: None,
            stages: vec![],
            warnings: vec![],
            core_boundary_excess: None,
        };
        let d = disjointify(&g, &qt, &z1(-1..2), 0.5).unwrap();
        let cores = d.cores.as_ref().unwrap();
        assert_eq!(cores[4][0], z1(0..8));
        assert_eq!(cores[4][1], z1(2..8));
        let rep = verify_tiling(&g, &d);
        assert!(rep.get("cores-partition").unwrap().passed);
        assert!(rep.get("cores-disjoint").unwrap().passed);
        // Already disjoint: cores equal the tiles.
        let mut qt2 = qt.clone();
        qt2.centers[4] = vec![[0], [8]];
        qt2.target = z1(0..16);
        let d2 = disjointify(&g, &qt2, &z1(-1..2), 0.5).unwrap();
        assert!(d2.cores.unwrap()[4].iter().all(|c| *c == basis[4]));
    }

    #[test]
    fn json_roundtrip() {
        let g = Lattice::<2>;
        let p = tiling_params(0.25, 0.25 / 32.0, 0.01, false).unwrap();
        let basis: Vec<_> = (1..=5).map(|i| box_set([0, 0], [i, i])).collect();
        let qt = quasi_tile(&g, &box_set([0, 0], [40, 40]), &basis, &p).unwrap();
        let qt = disjointify(&g, &qt, &FiniteSet::singleton([0, 0]), 0.01).unwrap();
        let doc = TilingDoc::from_tiling(&g, &qt);
        let text = serde_json::to_string(&doc).unwrap();
        let back: TilingDoc = serde_json::from_str(&text).unwrap();
        let qt2 = back.to_tiling(&g).unwrap();
        assert_eq!(qt2.centers, qt.centers);
        assert_eq!(qt2.cores, qt.cores);
    }

    #[test]
    fn small_uniform_family() {
        let seq = FolnerSequence::boxes(Lattice::<1>);
        let p = tiling_params(0.25, 0.25 / 32.0, 0.01, false).unwrap();
        let basis: Vec<_> = (1..=5).map(|i| z1(0..i)).collect();
        let fam = uniform_family(&z1(0..64), &basis, &p, &seq, &UniformOptions::default()).unwrap();
        let rep = verify_family(&Lattice::<1>, &fam, 16);
        assert!(rep.all_passed(), "{:?}", rep.failures());
        for row in uniform_density(&Lattice::<1>, &fam, &z1(10..40)) {
            assert!(row.passed(), "{row:?}");
        }
    }
}
