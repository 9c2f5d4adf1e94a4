//! Almost-additive set functions, boundary terms and their averages.
//!
//! Values live in concrete normed spaces (real vectors, step functions).
//! Convergence is reported as Cauchy diagnostics over finite grids.

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{boundary_len, translate_right, BoxFolner, FiniteSet, FolnerSequence, Group};
use crate::spectral::{CountingFunction, NormMode, StepFunction};
use crate::tiling::{is_eps_disjoint, Disjointness, TilingParams};

/// A vector space of set-function values.
pub trait Value: Clone + std::fmt::Debug + Send + Sync {
    fn zero() -> Self;
    /// `self + c·other`.
    fn axpy(&self, c: f64, other: &Self) -> Self;
    fn scale(&self, c: f64) -> Self {
        Self::zero().axpy(c, self)
    }
}

impl Value for Vec<f64> {
    fn zero() -> Self {
        Vec::new()
    }
    fn axpy(&self, c: f64, other: &Self) -> Self {
        let n = self.len().max(other.len());
        (0..n)
            .map(|i| self.get(i).copied().unwrap_or(0.0) + c * other.get(i).copied().unwrap_or(0.0))
            .collect()
    }
}

impl Value for StepFunction {
    fn zero() -> Self {
        StepFunction::zero()
    }
    fn axpy(&self, c: f64, other: &Self) -> Self {
        StepFunction::axpy(self, c, other)
    }
}

/// How `F(Qg)` relates to `F(Q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitMode {
    /// `F(Qg) = F(Q)` for every `g`.
    Invariant,
    /// `F(Qg)` must be evaluated on the translate.
    Evaluate,
    /// No group compatibility is available.
    Unsupported,
}

/// A bounded set function `Q ↦ F(Q)` with a boundary term.
pub trait SetFunction<G: Group>: Sync {
    type Value: Value;

    fn eval(&self, q: &FiniteSet<G::Elem>) -> Result<Self::Value>;

    fn norm(&self, v: &Self::Value) -> Result<f64>;

    /// `C` with `‖F(Q)‖ ≤ C|Q|`.
    fn bound_constant(&self) -> f64;

    /// `b(Q)`.
    fn boundary(&self, q: &FiniteSet<G::Elem>) -> Result<f64>;

    fn orbit_mode(&self) -> OrbitMode;

    /// `Σ_k F(Q_k)`.
    fn eval_sum(&self, parts: &[FiniteSet<G::Elem>]) -> Result<Self::Value> {
        let mut acc = Self::Value::zero();
        for p in parts {
            acc = acc.axpy(1.0, &self.eval(p)?);
        }
        Ok(acc)
    }
}

/// `F(Q) = |Q|·v` with the `p`-norm; exactly additive.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveVector {
    pub v: Vec<f64>,
    pub p: f64,
}

impl AdditiveVector {
    fn pnorm(&self, x: &[f64]) -> f64 {
        if self.p.is_infinite() {
            x.iter().fold(0.0, |m, a| m.max(a.abs()))
        } else {
            x.iter().map(|a| a.abs().powf(self.p)).sum::<f64>().powf(1.0 / self.p)
        }
    }
}

impl<G: Group> SetFunction<G> for AdditiveVector {
    type Value = Vec<f64>;
    fn eval(&self, q: &FiniteSet<G::Elem>) -> Result<Vec<f64>> {
        Ok(self.v.iter().map(|x| x * q.len() as f64).collect())
    }
    fn norm(&self, v: &Vec<f64>) -> Result<f64> {
        Ok(self.pnorm(v))
    }
    fn bound_constant(&self) -> f64 {
        self.pnorm(&self.v)
    }
    fn boundary(&self, _q: &FiniteSet<G::Elem>) -> Result<f64> {
        Ok(0.0)
    }
    fn orbit_mode(&self) -> OrbitMode {
        OrbitMode::Invariant
    }
}

impl<G: Group> SetFunction<G> for CountingFunction<G> {
    type Value = StepFunction;

    fn eval(&self, q: &FiniteSet<G::Elem>) -> Result<StepFunction> {
        self.counting(q)
    }

    fn norm(&self, v: &StepFunction) -> Result<f64> {
        v.norm(self.norm)
    }

    /// `dim H^R[Q] ≤ |Q|`, so `C = 1` in the sup norm and `|I|^{1/p}` in `L^p(I)`.
    fn bound_constant(&self) -> f64 {
        match self.norm {
            NormMode::Sup => 1.0,
            NormMode::Lp { p, lo, hi } => (hi - lo).powf(1.0 / p),
        }
    }

    fn boundary(&self, q: &FiniteSet<G::Elem>) -> Result<f64> {
        self.boundary_value(q)
    }

    fn orbit_mode(&self) -> OrbitMode {
        if self.is_translation_invariant() {
            OrbitMode::Invariant
        } else {
            OrbitMode::Evaluate
        }
    }

    /// Translates of one shape share their value when `F` is invariant.
    fn eval_sum(&self, parts: &[FiniteSet<G::Elem>]) -> Result<StepFunction> {
        if !self.is_translation_invariant() {
            let mut acc = StepFunction::zero();
            for p in parts {
                acc = acc.add(&self.eval(p)?);
            }
            return Ok(acc);
        }
        let g = &self.ensemble.group;
        let mut order: Vec<(FiniteSet<G::Elem>, usize)> = Vec::new();
        let mut seen: FxHashMap<Vec<Vec<i64>>, usize> = FxHashMap::default();
        for p in parts {
            let Some(first) = p.iter().next() else { continue };
            let fi = g.inv(first);
            let key: Vec<Vec<i64>> = p.iter().map(|e| g.coords(&g.mul(e, &fi))).collect();
            match seen.get(&key) {
                Some(&k) => order[k].1 += 1,
                None => {
                    seen.insert(key, order.len());
                    order.push((p.clone(), 1));
                }
            }
        }
        let mut acc = StepFunction::zero();
        for (p, count) in &order {
            acc = acc.axpy(*count as f64, &self.eval(p)?);
        }
        Ok(acc)
    }
}

/// `b(Q) = D|∂_L(Q)|` with its tiling-admissibility constant.
#[derive(Clone, Debug)]
pub struct BoundaryTerm<E> {
    pub l: FiniteSet<E>,
    pub d: f64,
    /// `D̃ = max{1, D, sup_n b(S_n)/|S_n|}` over a sequence prefix, once computed.
    pub d_tilde: Option<f64>,
}

impl<E: Clone + Ord + std::hash::Hash + std::fmt::Debug> BoundaryTerm<E> {
    pub fn eval<G: Group<Elem = E>>(&self, g: &G, q: &FiniteSet<E>) -> Result<f64> {
        if q.is_empty() || self.l.len() == 1 {
            return Ok(0.0);
        }
        Ok(self.d * boundary_len(g, &self.l, q)? as f64)
    }

    /// Sets `D̃` from the first `prefix` members of `seq`.
    pub fn with_admissibility<G: BoxFolner<Elem = E>>(mut self, seq: &FolnerSequence<G>, prefix: usize) -> Result<Self> {
        let mut sup: f64 = 0.0;
        for n in 1..=prefix {
            let s = seq.get(n)?;
            sup = sup.max(self.eval(&seq.group, &s)? / s.len() as f64);
        }
        self.d_tilde = Some(sup.max(self.d).max(1.0));
        Ok(self)
    }
}

pub fn canonical_boundary_term<G: Group>(g: &G, l: FiniteSet<G::Elem>, d: f64) -> Result<BoundaryTerm<G::Elem>> {
    if !l.contains(&g.identity()) {
        return Err(Error::invalid("L must contain the identity"));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::invalid(format!("D must be positive, got {d}")));
    }
    Ok(BoundaryTerm { l, d, d_tilde: None })
}

/// `(‖F(Q) − ΣF(Q_k)‖, Σb(Q_k))` for a disjoint partition of `Q`.
pub fn additivity_defect<G: Group, F: SetFunction<G>>(
    f: &F,
    q: &FiniteSet<G::Elem>,
    parts: &[FiniteSet<G::Elem>],
) -> Result<(f64, f64)> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    let union = parts.iter().fold(FiniteSet::default(), |acc: FiniteSet<G::Elem>, p| acc.union(p));
    if total != union.len() {
        return Err(Error::invalid("parts overlap"));
    }
    if union != *q {
        return Err(Error::invalid("parts do not cover Q exactly"));
    }
    let whole = f.eval(q)?;
    let sum = f.eval_sum(parts)?;
    let defect = f.norm(&whole.axpy(-1.0, &sum))?;
    let mut budget = 0.0;
    for p in parts {
        budget += f.boundary(p)?;
    }
    Ok((defect, budget))
}

/// `C(2ε + 1 − (1−ε)α)|Q| + 10D̃ε|Q| + b(Q) + (5D̃+1)Σb(Q_k)`.
pub fn eps_disjoint_bound(c: f64, eps: f64, alpha: f64, d_tilde: f64, q_len: f64, b_q: f64, sum_b: f64) -> f64 {
    c * (2.0 * eps + 1.0 - (1.0 - eps) * alpha) * q_len + 10.0 * d_tilde * eps * q_len + b_q + (5.0 * d_tilde + 1.0) * sum_b
}

/// Measured defect against the ε-disjoint error bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectBound {
    pub defect: f64,
    pub bound: f64,
    pub alpha: f64,
    pub b_q: f64,
    pub sum_b: f64,
}

impl DefectBound {
    pub fn holds(&self) -> bool {
        self.defect <= self.bound
    }
}

/// Compares `‖F(Q) − ΣF(Q_k)‖` for ε-disjoint `Q_k ⊆ Q` with the error bound.
pub fn eps_disjoint_error_bound<G: Group, F: SetFunction<G>>(
    f: &F,
    q: &FiniteSet<G::Elem>,
    parts: &[FiniteSet<G::Elem>],
    eps: f64,
    d_tilde: f64,
) -> Result<DefectBound> {
    if q.is_empty() {
        return Err(Error::invalid("empty Q"));
    }
    if parts.iter().any(|p| !p.is_subset(q)) {
        return Err(Error::invalid("parts must lie in Q"));
    }
    if !parts.is_empty() && is_eps_disjoint(parts, eps)?.0 != Disjointness::Certified {
        return Err(Error::CoresUnavailable);
    }
    let covered = parts.iter().fold(FiniteSet::default(), |acc: FiniteSet<G::Elem>, p| acc.union(p));
    let alpha = covered.len() as f64 / q.len() as f64;
    let whole = f.eval(q)?;
    let sum = f.eval_sum(parts)?;
    let defect = f.norm(&whole.axpy(-1.0, &sum))?;
    let b_q = f.boundary(q)?;
    let mut sum_b = 0.0;
    for p in parts {
        sum_b += f.boundary(p)?;
    }
    let bound = eps_disjoint_bound(f.bound_constant(), eps, alpha, d_tilde, q.len() as f64, b_q, sum_b);
    Ok(DefectBound { defect, bound, alpha, b_q, sum_b })
}

/// One normalized value `F(U_j)/|U_j|` with Cauchy diagnostics.
#[derive(Clone, Debug)]
pub struct AverageRow<V> {
    pub j: usize,
    pub size: usize,
    pub value: V,
    pub norm: f64,
    /// `‖v_j − v_{j'}‖` for the previous grid point.
    pub dist_prev: Option<f64>,
    /// `‖v_j − v_last‖`.
    pub dist_last: f64,
}

/// Normalized values along a grid of Følner indices.
pub fn folner_averages<G: BoxFolner, F: SetFunction<G>>(
    f: &F,
    seq: &FolnerSequence<G>,
    js: &[usize],
) -> Result<Vec<AverageRow<F::Value>>> {
    let mut rows: Vec<AverageRow<F::Value>> = Vec::with_capacity(js.len());
    for &j in js {
        let u = seq.get(j)?;
        let value = if u.is_empty() { F::Value::zero() } else { f.eval(&u)?.scale(1.0 / u.len() as f64) };
        let norm = f.norm(&value)?;
        let dist_prev = match rows.last() {
            Some(prev) => Some(f.norm(&value.axpy(-1.0, &prev.value))?),
            None => None,
        };
        rows.push(AverageRow { j, size: u.len(), value, norm, dist_prev, dist_last: 0.0 });
    }
    if let Some(last) = rows.last().map(|r| r.value.clone()) {
        for r in &mut rows {
            r.dist_last = f.norm(&r.value.axpy(-1.0, &last))?;
        }
    }
    Ok(rows)
}

/// Sums values in a balanced tree so the rounding pattern does not depend on scheduling.
fn tree_sum<V: Value>(mut vals: Vec<V>) -> V {
    if vals.is_empty() {
        return V::zero();
    }
    while vals.len() > 1 {
        let mut next = Vec::with_capacity(vals.len().div_ceil(2));
        let mut it = vals.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.axpy(1.0, &b),
                None => a,
            });
        }
        vals = next;
    }
    vals.pop().unwrap()
}

/// `|U|⁻¹ Σ_{g∈U} F(Qg)`.
pub fn orbit_average<G: Group, F: SetFunction<G>>(
    g: &G,
    f: &F,
    q: &FiniteSet<G::Elem>,
    u: &FiniteSet<G::Elem>,
) -> Result<F::Value> {
    if u.is_empty() {
        return Err(Error::invalid("empty averaging set"));
    }
    match f.orbit_mode() {
        OrbitMode::Invariant => f.eval(q),
        OrbitMode::Unsupported => Err(Error::Unsupported("set function has no group compatibility hook".into())),
        OrbitMode::Evaluate => {
            let vals = u
                .as_slice()
                .par_iter()
                .map(|x| f.eval(&translate_right(g, q, x)))
                .collect::<Result<Vec<_>>>()?;
            Ok(tree_sum(vals).scale(1.0 / u.len() as f64))
        }
    }
}

/// `Σ_i η_i S(T_i)/|T_i|` with `S` the orbit average over `u`.
pub fn tiling_limit_estimate<G: Group, F: SetFunction<G>>(
    g: &G,
    f: &F,
    params: &TilingParams,
    basis: &[FiniteSet<G::Elem>],
    u: &FiniteSet<G::Elem>,
) -> Result<F::Value> {
    if basis.len() != params.n {
        return Err(Error::invalid(format!("basis has {} sets, N = {}", basis.len(), params.n)));
    }
    let mut acc = F::Value::zero();
    for (t, eta) in basis.iter().zip(&params.eta) {
        if t.is_empty() {
            return Err(Error::invalid("empty basis set"));
        }
        let s = orbit_average(g, f, t, u)?;
        acc = acc.axpy(eta / t.len() as f64, &s);
    }
    Ok(acc)
}
