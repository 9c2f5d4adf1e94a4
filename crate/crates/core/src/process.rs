//! Bounded additive processes over iid fields, their dominating processes,
//! the Vitali-type covering lemma and Monte-Carlo maximal/pointwise experiments.
//!
//! A sample `ω` is a [`Configuration`]; the group acts by `(g·ω)(x) = ω(x·g)`.
//! Processes have the form `F(Q)(ω) = Σ_{g∈Q} f(g·ω)`.

use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{growth_constants, BoxFolner, FiniteSet, FolnerSequence, Group};
use crate::site::Configuration;

const FIELD_STREAM: u64 = 0x4649_454c;

/// Marginal law of the iid site values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum SiteLaw {
    /// Uniform on `[0, 1)`.
    Uniform,
    /// `1` with probability `p`, else `0`.
    Bernoulli { p: f64 },
}

/// iid product measure on `ℝ^G` with the right-shift action.
#[derive(Clone, Debug)]
pub struct ConfigurationSpace<G: Group> {
    pub group: G,
    pub law: SiteLaw,
}

impl<G: Group> ConfigurationSpace<G> {
    pub fn new(group: G, law: SiteLaw) -> Result<Self> {
        if let SiteLaw::Bernoulli { p } = law {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("Bernoulli parameter {p} outside [0,1]")));
            }
        }
        Ok(ConfigurationSpace { group, law })
    }

    pub fn sample(&self, seed: u64) -> Configuration<G::Elem> {
        Configuration::new(&self.group, seed)
    }

    /// `ω(x)`.
    pub fn value(&self, omega: &Configuration<G::Elem>, x: &G::Elem) -> f64 {
        let u = omega.uniform(&self.group, FIELD_STREAM, x);
        match self.law {
            SiteLaw::Uniform => u,
            SiteLaw::Bernoulli { p } => (u < p) as u8 as f64,
        }
    }

    /// Mean of a site value.
    pub fn mean(&self) -> f64 {
        match self.law {
            SiteLaw::Uniform => 0.5,
            SiteLaw::Bernoulli { p } => p,
        }
    }
}

/// A cylinder function `f(ω)` reading `ω` on a finite window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Cylinder<E> {
    Constant { value: f64 },
    /// `ω(id)`.
    Coordinate,
    /// `1{ω(id) > level}`.
    Threshold { level: f64 },
    /// `1{ω(id) < level}`.
    Below { level: f64 },
    /// `offset + slope·ω(id)`.
    Affine { offset: f64, slope: f64 },
    /// Mean of `ω` over the window.
    WindowMean { window: Vec<E> },
}

impl<E: Clone> Cylinder<E> {
    /// `sup |f|` given `|ω(x)| ≤ 1`.
    pub fn sup(&self) -> f64 {
        match self {
            Cylinder::Constant { value } => value.abs(),
            Cylinder::Coordinate | Cylinder::Threshold { .. } | Cylinder::Below { .. } | Cylinder::WindowMean { .. } => 1.0,
            Cylinder::Affine { offset, slope } => offset.abs().max((offset + slope).abs()),
        }
    }
}

/// Which process to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProcessKind<E> {
    /// `F(Q)(ω) = Σ_{g∈Q} f(g·ω)`.
    AbsolutelyContinuous { f: Cylinder<E> },
    /// `F(Q)(ω) = #{g ∈ Q : g occupied}`, sites occupied independently with
    /// probability `p`: `ω(g) < p` on a uniform field, `ω(g) = 1` on a Bernoulli(p) field.
    BernoulliPointCount { p: f64 },
}

/// `F(Q)(ω) = Σ_{g∈Q} f(g·ω)` with `|f| ≤ K`.
#[derive(Clone, Debug)]
pub struct AdditiveProcess<G: Group> {
    pub space: ConfigurationSpace<G>,
    pub f: Cylinder<G::Elem>,
    pub bound: f64,
}

pub fn make_process<G: Group>(kind: ProcessKind<G::Elem>, space: ConfigurationSpace<G>) -> Result<AdditiveProcess<G>> {
    let f = match kind {
        ProcessKind::AbsolutelyContinuous { f } => {
            if let Cylinder::WindowMean { window } = &f {
                if window.is_empty() {
                    return Err(Error::invalid("empty cylinder window"));
                }
            }
            f
        }
        ProcessKind::BernoulliPointCount { p } => match space.law {
            _ if !(0.0..=1.0).contains(&p) => {
                return Err(Error::invalid(format!("Bernoulli parameter {p} outside [0,1]")))
            }
            SiteLaw::Uniform => Cylinder::Below { level: p },
            SiteLaw::Bernoulli { p: q } if q == p => Cylinder::Coordinate,
            SiteLaw::Bernoulli { p: q } => {
                return Err(Error::Unsupported(format!("point count with p = {p} on a Bernoulli({q}) field")))
            }
        },
    };
    let bound = f.sup();
    Ok(AdditiveProcess { space, f, bound })
}

impl<G: Group> AdditiveProcess<G> {
    /// `f(g·ω)`.
    pub fn kernel(&self, omega: &Configuration<G::Elem>, g: &G::Elem) -> f64 {
        let grp = &self.space.group;
        let at = |w: &G::Elem| self.space.value(omega, &grp.mul(w, g));
        match &self.f {
            Cylinder::Constant { value } => *value,
            Cylinder::Coordinate => self.space.value(omega, g),
            Cylinder::Threshold { level } => (self.space.value(omega, g) > *level) as u8 as f64,
            Cylinder::Below { level } => (self.space.value(omega, g) < *level) as u8 as f64,
            Cylinder::Affine { offset, slope } => offset + slope * self.space.value(omega, g),
            Cylinder::WindowMean { window } => window.iter().map(at).sum::<f64>() / window.len() as f64,
        }
    }

    /// `F(Q)(ω)`.
    pub fn eval(&self, q: &FiniteSet<G::Elem>, omega: &Configuration<G::Elem>) -> f64 {
        q.iter().map(|g| self.kernel(omega, g)).sum()
    }

    /// `F⁰(Q)(ω) = Σ_{g∈Q} |f(g·ω)|`.
    pub fn dominating(&self, q: &FiniteSet<G::Elem>, omega: &Configuration<G::Elem>) -> f64 {
        q.iter().map(|g| self.kernel(omega, g).abs()).sum()
    }

    /// Exact mean of `f` when it has a closed form.
    pub fn mean(&self) -> Option<f64> {
        let m = self.space.mean();
        match (&self.f, self.space.law) {
            (Cylinder::Constant { value }, _) => Some(*value),
            (Cylinder::Coordinate, _) | (Cylinder::WindowMean { .. }, _) => Some(m),
            (Cylinder::Affine { offset, slope }, _) => Some(offset + slope * m),
            (Cylinder::Threshold { level }, SiteLaw::Uniform) => Some((1.0 - level.clamp(0.0, 1.0)).max(0.0)),
            (Cylinder::Threshold { level }, SiteLaw::Bernoulli { p }) => {
                Some(if *level < 0.0 { 1.0 } else if *level < 1.0 { p } else { 0.0 })
            }
            (Cylinder::Below { level }, SiteLaw::Uniform) => Some(level.clamp(0.0, 1.0)),
            (Cylinder::Below { level }, SiteLaw::Bernoulli { p }) => {
                Some(if *level > 1.0 { 1.0 } else if *level > 0.0 { 1.0 - p } else { 0.0 })
            }
        }
    }
}

/// `F⁰` as an evaluator.
pub struct DominatingProcess<'a, G: Group> {
    pub process: &'a AdditiveProcess<G>,
}

impl<G: Group> DominatingProcess<'_, G> {
    pub fn eval(&self, q: &FiniteSet<G::Elem>, omega: &Configuration<G::Elem>) -> f64 {
        self.process.dominating(q, omega)
    }
}

pub fn dominating_process<G: Group>(f: &AdditiveProcess<G>) -> DominatingProcess<'_, G> {
    DominatingProcess { process: f }
}

/// Greedy cover by descending level.
///
/// `levels[k]` is `U_{m+k}`; `theta[b]` must lie in `m..m+levels.len()`.
/// Returns the accepted elements in acceptance order.
pub fn vitali_cover<G: Group>(
    g: &G,
    b: &FiniteSet<G::Elem>,
    theta: &dyn Fn(&G::Elem) -> usize,
    levels: &[FiniteSet<G::Elem>],
    m: usize,
) -> Result<Vec<G::Elem>> {
    let top = m + levels.len();
    let mut by_level: Vec<Vec<&G::Elem>> = vec![Vec::new(); levels.len()];
    for x in b {
        let t = theta(x);
        if t < m || t >= top {
            return Err(Error::invalid(format!("θ({x:?}) = {t} outside [{m}, {})", top - 1)));
        }
        by_level[t - m].push(x);
    }
    let mut used: FxHashSet<G::Elem> = FxHashSet::default();
    let mut out = Vec::new();
    for k in (0..levels.len()).rev() {
        for x in &by_level[k] {
            let tile: Vec<G::Elem> = levels[k].iter().map(|u| g.mul(u, x)).collect();
            if tile.iter().all(|e| !used.contains(e)) {
                used.extend(tile);
                out.push((*x).clone());
            }
        }
    }
    Ok(out)
}

/// Brute-force check of a cover: `(pairwise disjoint, B ⊆ ∪ U_θ⁻¹U_θ b)`.
pub fn check_vitali_cover<G: Group>(
    g: &G,
    b: &FiniteSet<G::Elem>,
    theta: &dyn Fn(&G::Elem) -> usize,
    levels: &[FiniteSet<G::Elem>],
    m: usize,
    chosen: &[G::Elem],
) -> (bool, bool) {
    let tiles: Vec<FiniteSet<G::Elem>> =
        chosen.iter().map(|x| levels[theta(x) - m].iter().map(|u| g.mul(u, x)).collect()).collect();
    let mut disjoint = true;
    for i in 0..tiles.len() {
        for j in i + 1..tiles.len() {
            disjoint &= tiles[i].is_disjoint(&tiles[j]);
        }
    }
    let mut reach: FxHashSet<G::Elem> = FxHashSet::default();
    for x in chosen {
        let u = &levels[theta(x) - m];
        for a in u {
            let ai = g.inv(a);
            for c in u {
                reach.insert(g.mul(&g.mul(&ai, c), x));
            }
        }
    }
    (disjoint, b.iter().all(|x| reach.contains(x)))
}

/// Values of `F(U_j)(ω)` along a grid, computed from increments when nested.
struct Grid<E> {
    js: Vec<usize>,
    sizes: Vec<usize>,
    /// `U_{j_k} ∖ U_{j_{k−1}}` when nested, otherwise `U_{j_k}` itself.
    pieces: Vec<FiniteSet<E>>,
    nested: bool,
}

impl<E: Clone + Ord + std::hash::Hash> Grid<E> {
    fn new<G: BoxFolner<Elem = E>>(seq: &FolnerSequence<G>, js: &[usize]) -> Result<Self> {
        if js.is_empty() || js.windows(2).any(|w| w[0] >= w[1]) || js[0] == 0 {
            return Err(Error::invalid("j grid must be nonempty, positive and increasing"));
        }
        let mut pieces = Vec::with_capacity(js.len());
        let mut sizes = Vec::with_capacity(js.len());
        let mut prev: Option<FiniteSet<E>> = None;
        for &j in js {
            let u = seq.get(j)?;
            sizes.push(u.len());
            pieces.push(match (&prev, seq.nested) {
                (Some(p), true) => u.difference(p),
                _ => u.clone(),
            });
            prev = Some(u);
        }
        Ok(Grid { js: js.to_vec(), sizes, pieces, nested: seq.nested })
    }

    fn values(&self, mut f: impl FnMut(&FiniteSet<E>) -> f64) -> Vec<f64> {
        let mut acc = 0.0;
        self.pieces
            .iter()
            .map(|p| {
                let v = f(p);
                if self.nested {
                    acc += v;
                    acc
                } else {
                    v
                }
            })
            .collect()
    }
}

/// `F(U_j)(ω)/|U_j|` over the grid.
pub fn pointwise_trajectory<G: BoxFolner>(
    f: &AdditiveProcess<G>,
    omega: &Configuration<G::Elem>,
    seq: &FolnerSequence<G>,
    js: &[usize],
) -> Result<Vec<f64>> {
    let grid = Grid::new(seq, js)?;
    Ok(grid.values(|p| f.eval(p, omega)).iter().zip(&grid.sizes).map(|(v, n)| v / *n as f64).collect())
}

/// Monte-Carlo maximal tail against the dominated ergodic bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalTail {
    pub lambda: f64,
    pub samples: usize,
    /// Fraction of samples with `max_j |F(U_j)(ω)|/|U_j| > λ`.
    pub tail: f64,
    /// Binomial standard error of `tail`.
    pub sigma: f64,
    /// Estimate of `sup_j ‖F(U_j)‖_{L¹}/|U_j|`.
    pub l1_sup: f64,
    pub kappa: f64,
    pub kappa_tilde: f64,
    /// `κκ̃/λ · l1_sup`.
    pub bound: f64,
}

impl MaximalTail {
    /// `tail ≤ min(1, bound) + 3σ`.
    pub fn plausible(&self) -> bool {
        self.tail <= self.bound.min(1.0) + 3.0 * self.sigma
    }
}

/// Samples `ω` with seeds `base_seed..base_seed+n_samples`; `κ̃` is the
/// Tempelman constant of the grid's last index.
pub fn maximal_tail_estimate<G: BoxFolner>(
    f: &AdditiveProcess<G>,
    seq: &FolnerSequence<G>,
    lambda: f64,
    js: &[usize],
    n_samples: usize,
    base_seed: u64,
) -> Result<MaximalTail> {
    Ok(maximal_tails(f, seq, &[lambda], js, n_samples, base_seed)?.remove(0))
}

/// [`maximal_tail_estimate`] for several levels, sharing the samples and `κ̃`.
pub fn maximal_tails<G: BoxFolner>(
    f: &AdditiveProcess<G>,
    seq: &FolnerSequence<G>,
    lambdas: &[f64],
    js: &[usize],
    n_samples: usize,
    base_seed: u64,
) -> Result<Vec<MaximalTail>> {
    if n_samples < 100 {
        return Err(Error::invalid(format!("n_samples must be at least 100, got {n_samples}")));
    }
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::invalid("lambdas must be nonempty and positive"));
    }
    let grid = Grid::new(seq, js)?;
    let last = *js.last().unwrap();
    let kappa_tilde = growth_constants(seq, last.max(2))?.tempelman;
    let per_sample: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let omega = f.space.sample(base_seed + s);
            grid.values(|p| f.eval(p, &omega)).iter().zip(&grid.sizes).map(|(v, n)| v.abs() / *n as f64).collect()
        })
        .collect();
    let maxima: Vec<f64> = per_sample.iter().map(|v| v.iter().copied().fold(0.0, f64::max)).collect();
    let l1_sup = (0..grid.js.len())
        .map(|k| per_sample.iter().map(|v| v[k]).sum::<f64>() / n_samples as f64)
        .fold(0.0, f64::max);
    let kappa = 1.0;
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            let tail = maxima.iter().filter(|&&x| x > lambda).count() as f64 / n_samples as f64;
            MaximalTail {
                lambda,
                samples: n_samples,
                tail,
                sigma: (tail * (1.0 - tail) / n_samples as f64).sqrt().max(1.0 / n_samples as f64),
                l1_sup,
                kappa,
                kappa_tilde,
                bound: kappa * kappa_tilde / lambda * l1_sup,
            }
        })
        .collect())
}

/// `F_n(Q)(ω) = F(Q)(ω)` off `B_n = {ω : sup_j F⁰(U_j)(ω)/|U_j| > n}`, else 0.
#[derive(Clone, Debug)]
pub struct TruncatedProcess<G: Group> {
    pub process: AdditiveProcess<G>,
    pub level: f64,
    grid: Grid<G::Elem>,
}

pub fn truncate_process<G: BoxFolner>(
    f: &AdditiveProcess<G>,
    level: f64,
    seq: &FolnerSequence<G>,
    js: &[usize],
) -> Result<TruncatedProcess<G>> {
    if !(level >= 0.0) {
        return Err(Error::invalid("truncation level must be nonnegative"));
    }
    Ok(TruncatedProcess { process: f.clone(), level, grid: Grid::new(seq, js)? })
}

impl<G: Group> TruncatedProcess<G> {
    /// `ω ∈ B_n`.
    pub fn is_cut(&self, omega: &Configuration<G::Elem>) -> bool {
        let v = self.grid.values(|p| self.process.dominating(p, omega));
        v.iter().zip(&self.grid.sizes).any(|(x, n)| x / *n as f64 > self.level) || self.level == 0.0
    }

    pub fn eval(&self, q: &FiniteSet<G::Elem>, omega: &Configuration<G::Elem>) -> f64 {
        if self.is_cut(omega) {
            0.0
        } else {
            self.process.eval(q, omega)
        }
    }
}

impl<E: Clone> Clone for Grid<E> {
    fn clone(&self) -> Self {
        Grid { js: self.js.clone(), sizes: self.sizes.clone(), pieces: self.pieces.clone(), nested: self.nested }
    }
}

impl<E: std::fmt::Debug> std::fmt::Debug for Grid<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("js", &self.js).field("sizes", &self.sizes).finish()
    }
}

/// Monte-Carlo `(μ(B_n), E|F(Q) − F_n(Q)|)` over seeds `base_seed..base_seed+n_samples`.
pub fn truncation_stats<G: Group>(
    t: &TruncatedProcess<G>,
    q: &FiniteSet<G::Elem>,
    n_samples: usize,
    base_seed: u64,
) -> (f64, f64) {
    let (cut, dist) = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let omega = t.process.space.sample(base_seed + s);
            let full = t.process.eval(q, &omega);
            let trunc = t.eval(q, &omega);
            ((trunc == 0.0 && t.is_cut(&omega)) as usize, (full - trunc).abs())
        })
        .reduce(|| (0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (cut as f64 / n_samples as f64, dist / n_samples as f64)
}
