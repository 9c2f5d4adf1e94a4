//! Discrete amenable groups, finite subsets, boundaries and Følner sequences.
//!
//! Counting measure plays the role of Haar measure throughout, so `|A|` is
//! simply `A.len()`.

use std::collections::VecDeque;
use std::fmt::Debug;
use std::hash::Hash;
use std::sync::Arc;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finitely generated discrete group with canonically ordered elements.
pub trait Group: Clone + Debug + Send + Sync + 'static {
    type Elem: Clone + Eq + Ord + Hash + Debug + Send + Sync + 'static;

    fn identity(&self) -> Self::Elem;
    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem;
    fn inv(&self, a: &Self::Elem) -> Self::Elem;
    /// Symmetric generating set, used for the word metric.
    fn generators(&self) -> Vec<Self::Elem>;
    /// Canonical integer coordinates (used for hashing site values and serialization).
    fn coords(&self, a: &Self::Elem) -> Vec<i64>;
    fn from_coords(&self, c: &[i64]) -> Result<Self::Elem>;
    fn family(&self) -> Family;

    /// Closed ball of radius `r` around the identity.
    fn ball(&self, r: u32, metric: Metric) -> Result<FiniteSet<Self::Elem>> {
        match metric {
            Metric::Word => Ok(word_ball(self, r)),
            Metric::Sup => Err(Error::invalid(format!(
                "sup metric is not defined for {:?}",
                self.family()
            ))),
        }
    }

    /// The metric used when none is requested explicitly.
    fn default_metric(&self) -> Metric {
        Metric::Word
    }

    /// Length `|a|` in the given metric, when it has a closed form.
    fn metric_norm(&self, _a: &Self::Elem, _metric: Metric) -> Option<u64> {
        None
    }

    /// An element near the middle of `k`, used to enclose `k` in a small ball.
    fn centroid(&self, _k: &FiniteSet<Self::Elem>) -> Option<Self::Elem> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Zd,
    Heisenberg,
    Lamplighter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Sup,
    Word,
}

fn word_ball<G: Group + ?Sized>(g: &G, r: u32) -> FiniteSet<G::Elem> {
    let gens = g.generators();
    let mut seen: FxHashSet<G::Elem> = FxHashSet::default();
    let id = g.identity();
    seen.insert(id.clone());
    let mut frontier = vec![id];
    for _ in 0..r {
        let mut next = Vec::new();
        for x in &frontier {
            for s in &gens {
                let y = g.mul(s, x);
                if seen.insert(y.clone()) {
                    next.push(y);
                }
            }
        }
        frontier = next;
    }
    FiniteSet::from_iter(seen)
}

/// ℤ^D with addition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Lattice<const D: usize>;

impl<const D: usize> Group for Lattice<D> {
    type Elem = [i64; D];

    fn identity(&self) -> [i64; D] {
        [0; D]
    }
    fn mul(&self, a: &[i64; D], b: &[i64; D]) -> [i64; D] {
        std::array::from_fn(|k| a[k] + b[k])
    }
    fn inv(&self, a: &[i64; D]) -> [i64; D] {
        std::array::from_fn(|k| -a[k])
    }
    fn generators(&self) -> Vec<[i64; D]> {
        let mut out = Vec::with_capacity(2 * D);
        for k in 0..D {
            for s in [-1, 1] {
                let mut e = [0; D];
                e[k] = s;
                out.push(e);
            }
        }
        out
    }
    fn coords(&self, a: &[i64; D]) -> Vec<i64> {
        a.to_vec()
    }
    fn from_coords(&self, c: &[i64]) -> Result<[i64; D]> {
        c.try_into()
            .map_err(|_| Error::invalid(format!("expected {D} coordinates, got {}", c.len())))
    }
    fn family(&self) -> Family {
        Family::Zd
    }
    fn ball(&self, r: u32, metric: Metric) -> Result<FiniteSet<[i64; D]>> {
        match metric {
            Metric::Word => Ok(word_ball(self, r)),
            Metric::Sup => {
                let r = r as i64;
                Ok(box_set::<D>([-r; D], [r + 1; D]))
            }
        }
    }
    fn default_metric(&self) -> Metric {
        Metric::Sup
    }
    fn metric_norm(&self, a: &[i64; D], metric: Metric) -> Option<u64> {
        Some(match metric {
            Metric::Sup => a.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0),
            Metric::Word => a.iter().map(|x| x.unsigned_abs()).sum(),
        })
    }
    fn centroid(&self, k: &FiniteSet<[i64; D]>) -> Option<[i64; D]> {
        let first = k.iter().next()?;
        let mut lo = *first;
        let mut hi = *first;
        for e in k {
            for j in 0..D {
                lo[j] = lo[j].min(e[j]);
                hi[j] = hi[j].max(e[j]);
            }
        }
        Some(std::array::from_fn(|j| lo[j] + (hi[j] - lo[j]) / 2))
    }
}

/// All lattice points `x` with `lo[k] <= x[k] < hi[k]`, in canonical order.
pub fn box_set<const D: usize>(lo: [i64; D], hi: [i64; D]) -> FiniteSet<[i64; D]> {
    let mut out = Vec::new();
    if (0..D).any(|k| hi[k] <= lo[k]) {
        return FiniteSet::default();
    }
    let mut cur = lo;
    loop {
        out.push(cur);
        let mut k = D;
        loop {
            if k == 0 {
                // Lexicographic enumeration is already sorted.
                return FiniteSet { elems: out };
            }
            k -= 1;
            cur[k] += 1;
            if cur[k] < hi[k] {
                break;
            }
            cur[k] = lo[k];
        }
    }
}

/// Discrete Heisenberg group with (x,y,z)(x',y',z') = (x+x', y+y', z+z'+xy').
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Heisenberg;

impl Group for Heisenberg {
    type Elem = [i64; 3];

    fn identity(&self) -> [i64; 3] {
        [0; 3]
    }
    fn mul(&self, a: &[i64; 3], b: &[i64; 3]) -> [i64; 3] {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1]]
    }
    fn inv(&self, a: &[i64; 3]) -> [i64; 3] {
        [-a[0], -a[1], -a[2] + a[0] * a[1]]
    }
    fn generators(&self) -> Vec<[i64; 3]> {
        vec![[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]]
    }
    fn coords(&self, a: &[i64; 3]) -> Vec<i64> {
        a.to_vec()
    }
    fn from_coords(&self, c: &[i64]) -> Result<[i64; 3]> {
        c.try_into()
            .map_err(|_| Error::invalid(format!("expected 3 coordinates, got {}", c.len())))
    }
    fn family(&self) -> Family {
        Family::Heisenberg
    }
}

/// Element of the lamplighter group ℤ₂ ≀ ℤ: lit lamps (sorted) and the lighter position.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Lamp {
    pub pos: i64,
    pub lamps: Vec<i64>,
}

impl Lamp {
    pub fn new(mut lamps: Vec<i64>, pos: i64) -> Self {
        lamps.sort_unstable();
        // Pairs of equal entries cancel (ℤ₂ coefficients).
        let mut out: Vec<i64> = Vec::with_capacity(lamps.len());
        for l in lamps {
            if out.last() == Some(&l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Lamp { pos, lamps: out }
    }
}

/// Lamplighter group with (f,p)(f',p') = (f + shift_p f', p + p').
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Lamplighter;

fn xor_sorted(a: &[i64], b: impl Iterator<Item = i64>) -> Vec<i64> {
    let mut out = Vec::with_capacity(a.len());
    let mut b = b.peekable();
    let mut i = 0;
    loop {
        match (a.get(i), b.peek()) {
            (Some(&x), Some(&y)) => {
                if x < y {
                    out.push(x);
                    i += 1;
                } else if y < x {
                    out.push(y);
                    b.next();
                } else {
                    i += 1;
                    b.next();
                }
            }
            (Some(&x), None) => {
                out.push(x);
                i += 1;
            }
            (None, Some(&y)) => {
                out.push(y);
                b.next();
            }
            (None, None) => return out,
        }
    }
}

impl Group for Lamplighter {
    type Elem = Lamp;

    fn identity(&self) -> Lamp {
        Lamp::default()
    }
    fn mul(&self, a: &Lamp, b: &Lamp) -> Lamp {
        let p = a.pos;
        Lamp {
            pos: a.pos + b.pos,
            lamps: xor_sorted(&a.lamps, b.lamps.iter().map(|l| l + p)),
        }
    }
    fn inv(&self, a: &Lamp) -> Lamp {
        Lamp {
            pos: -a.pos,
            lamps: a.lamps.iter().map(|l| l - a.pos).collect(),
        }
    }
    fn generators(&self) -> Vec<Lamp> {
        vec![Lamp::new(vec![], 1), Lamp::new(vec![], -1), Lamp::new(vec![0], 0)]
    }
    /// `[pos, lamp_1, ..., lamp_k]`.
    fn coords(&self, a: &Lamp) -> Vec<i64> {
        let mut v = Vec::with_capacity(a.lamps.len() + 1);
        v.push(a.pos);
        v.extend_from_slice(&a.lamps);
        v
    }
    fn from_coords(&self, c: &[i64]) -> Result<Lamp> {
        let (&pos, lamps) = c
            .split_first()
            .ok_or_else(|| Error::invalid("lamplighter element needs a position"))?;
        let l = Lamp::new(lamps.to_vec(), pos);
        if l.lamps.len() != lamps.len() {
            return Err(Error::invalid("lamplighter lamps must be distinct"));
        }
        Ok(l)
    }
    fn family(&self) -> Family {
        Family::Lamplighter
    }
}

/// A finite set of group elements, stored sorted and without duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FiniteSet<E> {
    elems: Vec<E>,
}

impl<E> Default for FiniteSet<E> {
    fn default() -> Self {
        FiniteSet { elems: Vec::new() }
    }
}

impl<E: Ord> FromIterator<E> for FiniteSet<E> {
    fn from_iter<I: IntoIterator<Item = E>>(iter: I) -> Self {
        let mut elems: Vec<E> = iter.into_iter().collect();
        elems.sort_unstable();
        elems.dedup();
        FiniteSet { elems }
    }
}

impl<E: Ord + Clone> FiniteSet<E> {
    pub fn singleton(e: E) -> Self {
        FiniteSet { elems: vec![e] }
    }
    pub fn len(&self) -> usize {
        self.elems.len()
    }
    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }
    pub fn contains(&self, e: &E) -> bool {
        self.elems.binary_search(e).is_ok()
    }
    pub fn position(&self, e: &E) -> Option<usize> {
        self.elems.binary_search(e).ok()
    }
    pub fn iter(&self) -> std::slice::Iter<'_, E> {
        self.elems.iter()
    }
    pub fn as_slice(&self) -> &[E] {
        &self.elems
    }
    pub fn into_vec(self) -> Vec<E> {
        self.elems
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.len() && j < other.len() {
            match self.elems[i].cmp(&other.elems[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.elems[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.elems[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.elems[i].clone());
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.elems[i..]);
        out.extend_from_slice(&other.elems[j..]);
        FiniteSet { elems: out }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        FiniteSet {
            elems: small.elems.iter().filter(|e| large.contains(e)).cloned().collect(),
        }
    }

    pub fn difference(&self, other: &Self) -> Self {
        FiniteSet {
            elems: self.elems.iter().filter(|e| !other.contains(e)).cloned().collect(),
        }
    }

    pub fn intersection_len(&self, other: &Self) -> usize {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.elems.iter().filter(|e| large.contains(e)).count()
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.len() <= other.len() && self.elems.iter().all(|e| other.contains(e))
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.intersection_len(other) == 0
    }
}

impl<'a, E> IntoIterator for &'a FiniteSet<E> {
    type Item = &'a E;
    type IntoIter = std::slice::Iter<'a, E>;
    fn into_iter(self) -> Self::IntoIter {
        self.elems.iter()
    }
}

/// Dense index of a finite set, for O(1) membership in hot loops.
pub struct Index<E> {
    map: FxHashMap<E, u32>,
}

impl<E: Clone + Eq + Hash> Index<E> {
    pub fn new<'a, I: IntoIterator<Item = &'a E>>(elems: I) -> Self
    where
        E: 'a,
    {
        let mut map = FxHashMap::default();
        for (k, e) in elems.into_iter().enumerate() {
            map.insert(e.clone(), k as u32);
        }
        Index { map }
    }
    #[inline]
    pub fn get(&self, e: &E) -> Option<usize> {
        self.map.get(e).map(|&k| k as usize)
    }
    #[inline]
    pub fn contains(&self, e: &E) -> bool {
        self.map.contains_key(e)
    }
    pub fn len(&self) -> usize {
        self.map.len()
    }
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// `A·x`.
pub fn translate_right<G: Group>(g: &G, a: &FiniteSet<G::Elem>, x: &G::Elem) -> FiniteSet<G::Elem> {
    a.iter().map(|e| g.mul(e, x)).collect()
}

/// `x·A`.
pub fn translate_left<G: Group>(g: &G, x: &G::Elem, a: &FiniteSet<G::Elem>) -> FiniteSet<G::Elem> {
    a.iter().map(|e| g.mul(x, e)).collect()
}

/// `A⁻¹`.
pub fn inverse_set<G: Group>(g: &G, a: &FiniteSet<G::Elem>) -> FiniteSet<G::Elem> {
    a.iter().map(|e| g.inv(e)).collect()
}

/// `KT = {k·t}`.
pub fn product_set<G: Group>(
    g: &G,
    k: &FiniteSet<G::Elem>,
    t: &FiniteSet<G::Elem>,
) -> FiniteSet<G::Elem> {
    let mut seen: FxHashSet<G::Elem> = FxHashSet::default();
    seen.reserve(k.len().saturating_mul(t.len()).min(1 << 24));
    for a in k {
        for b in t {
            seen.insert(g.mul(a, b));
        }
    }
    FiniteSet::from_iter(seen)
}

/// `∂_K(T) = {g : Kg ∩ T ≠ ∅ and Kg ⊄ T}`, scanned over the candidates `K⁻¹T`.
pub fn k_boundary<G: Group>(
    g: &G,
    k: &FiniteSet<G::Elem>,
    t: &FiniteSet<G::Elem>,
) -> Result<FiniteSet<G::Elem>> {
    if k.is_empty() || t.is_empty() {
        return Err(Error::invalid("k_boundary needs nonempty K and T"));
    }
    let tix = Index::new(t);
    let kinv = inverse_set(g, k);
    let candidates = product_set(g, &kinv, t);
    let out = candidates
        .iter()
        .filter(|c| k.iter().any(|kk| !tix.contains(&g.mul(kk, c))))
        .cloned()
        .collect::<Vec<_>>();
    Ok(FiniteSet { elems: out })
}

/// `|∂_K(T)| / |T|`.
pub fn invariance_ratio<G: Group>(
    g: &G,
    k: &FiniteSet<G::Elem>,
    t: &FiniteSet<G::Elem>,
) -> Result<f64> {
    if t.is_empty() {
        return Err(Error::invalid("invariance_ratio needs nonempty T"));
    }
    Ok(k_boundary(g, k, t)?.len() as f64 / t.len() as f64)
}

/// `{x : Kx ⊆ A}`, the right translates of `K` that fit inside `A`.
pub fn fitting_translates<G: Group>(
    g: &G,
    k: &FiniteSet<G::Elem>,
    a: &FiniteSet<G::Elem>,
) -> FiniteSet<G::Elem> {
    let Some(k0) = k.iter().next() else {
        return FiniteSet::default();
    };
    let aix = Index::new(a);
    let k0inv = g.inv(k0);
    // x = k0⁻¹a for some a ∈ A is necessary; the scan is ordered since A is.
    a.iter()
        .map(|e| g.mul(&k0inv, e))
        .filter(|x| k.iter().all(|kk| aix.contains(&g.mul(kk, x))))
        .collect()
}

/// Metric interior, closure and boundary of a finite set.
#[derive(Clone, Debug)]
pub struct MetricBoundary<E> {
    pub interior: FiniteSet<E>,
    pub closure: FiniteSet<E>,
    pub boundary: FiniteSet<E>,
}

/// `Q_r = {g : d(g, G∖Q) > r}`, `Q^r = {g : d(g, Q) ≤ r}`, `∂^r Q = Q^r ∖ Q_r`.
///
/// Distances are right-invariant, `d(x, y) = |x y⁻¹|`, so the r-ball around
/// `x` is `B_r·x`.
pub fn metric_boundary<G: Group>(
    g: &G,
    q: &FiniteSet<G::Elem>,
    r: f64,
    metric: Metric,
) -> Result<MetricBoundary<G::Elem>> {
    if !(r >= 0.0) {
        return Err(Error::invalid(format!("radius must be nonnegative, got {r}")));
    }
    let ri = r.floor() as u32;
    let ball = g.ball(ri, metric)?;
    let interior = fitting_translates(g, &ball, q);
    let closure = product_set(g, &ball, q);
    let boundary = closure.difference(&interior);
    Ok(MetricBoundary { interior, closure, boundary })
}

/// The nonzero elements of the unit ball; BFS along these steps measures the metric.
pub fn metric_steps<G: Group>(g: &G, metric: Metric) -> Result<Vec<G::Elem>> {
    let id = g.identity();
    Ok(g.ball(1, metric)?.into_vec().into_iter().filter(|e| *e != id).collect())
}

/// A finite set with a dense index and each element's distance to the complement.
pub struct Region<E> {
    pub set: FiniteSet<E>,
    pub index: Index<E>,
    /// `d(x, G∖A)` capped at `cap`.
    pub dist: Vec<u32>,
    pub cap: u32,
    pub metric: Metric,
}

impl<E: Clone + Eq + Ord + Hash> Region<E> {
    pub fn new<G: Group<Elem = E>>(g: &G, set: FiniteSet<E>, metric: Metric, cap: u32) -> Result<Self> {
        let steps = metric_steps(g, metric)?;
        let index = Index::new(&set);
        let elems = set.as_slice();
        let mut dist = vec![u32::MAX; set.len()];
        let mut queue = VecDeque::new();
        for (k, e) in elems.iter().enumerate() {
            if steps.iter().any(|s| !index.contains(&g.mul(s, e))) {
                dist[k] = 1;
                queue.push_back(k);
            }
        }
        while let Some(k) = queue.pop_front() {
            let d = dist[k];
            if d >= cap {
                continue;
            }
            for s in &steps {
                if let Some(j) = index.get(&g.mul(s, &elems[k])) {
                    if dist[j] == u32::MAX {
                        dist[j] = d + 1;
                        queue.push_back(j);
                    }
                }
            }
        }
        for d in &mut dist {
            *d = (*d).min(cap);
        }
        Ok(Region { set, index, dist, cap, metric })
    }

    /// Number of points within distance `r` of the set (the closure `A^r`), by outward BFS.
    pub fn closure_len<G: Group<Elem = E>>(&self, g: &G, r: u32) -> Result<usize> {
        let steps = metric_steps(g, self.metric)?;
        let mut seen: FxHashSet<E> = FxHashSet::default();
        let mut frontier: Vec<E> = Vec::new();
        for (k, e) in self.set.iter().enumerate() {
            if self.dist[k] == 1 {
                for s in &steps {
                    let y = g.mul(s, e);
                    if !self.index.contains(&y) && seen.insert(y.clone()) {
                        frontier.push(y);
                    }
                }
            }
        }
        if r == 0 {
            return Ok(self.set.len());
        }
        for _ in 1..r {
            let mut next = Vec::new();
            for x in &frontier {
                for s in &steps {
                    let y = g.mul(s, x);
                    if !self.index.contains(&y) && seen.insert(y.clone()) {
                        next.push(y);
                    }
                }
            }
            frontier = next;
        }
        Ok(self.set.len() + seen.len())
    }

    /// `|A^r ∖ A_r| = |∂_{B_r}(A)|`.
    pub fn ball_boundary_len<G: Group<Elem = E>>(&self, g: &G, r: u32) -> Result<usize> {
        if r >= self.cap {
            return Err(Error::invalid("radius exceeds the region's distance cap"));
        }
        let interior = self.dist.iter().filter(|&&d| d > r).count();
        Ok(self.closure_len(g, r)? - interior)
    }

    /// `{x : Kx ⊆ A}`.
    ///
    /// Uses the distance field when `K` has a centroid `c` with `K ⊆ B_r c` and
    /// `r < cap`: then `d(cx, G∖A) > r` already certifies `Kx ⊆ A`.
    pub fn fitting<G: Group<Elem = E>>(&self, g: &G, k: &FiniteSet<E>) -> FiniteSet<E> {
        let Some(k0) = k.iter().next() else {
            return FiniteSet::default();
        };
        let k0inv = g.inv(k0);
        let enclosing = g.centroid(k).and_then(|c| {
            let cinv = g.inv(&c);
            let mut r = 0;
            for kk in k {
                r = r.max(g.metric_norm(&g.mul(kk, &cinv), self.metric)?);
            }
            (r < self.cap as u64).then_some((c, r as u32))
        });
        let mut out = Vec::new();
        for a in &self.set {
            let x = g.mul(&k0inv, a);
            let fast = enclosing.as_ref().is_some_and(|(c, r)| {
                self.index.get(&g.mul(c, &x)).is_some_and(|j| self.dist[j] > *r)
            });
            if fast || k.iter().all(|kk| self.index.contains(&g.mul(kk, &x))) {
                out.push(x);
            }
        }
        FiniteSet::from_iter(out)
    }
}

/// The radius `r` with `K = B_r`, if `K` is a ball of the given metric.
pub fn ball_radius_of<G: Group>(g: &G, k: &FiniteSet<G::Elem>, metric: Metric) -> Option<u32> {
    let mut r = 0u64;
    for e in k {
        r = r.max(g.metric_norm(e, metric)?);
    }
    let r = u32::try_from(r).ok()?;
    let ball_len = match (g.family(), metric) {
        (Family::Zd, Metric::Sup) => {
            let d = g.coords(&g.identity()).len() as u32;
            (2 * r as usize + 1).checked_pow(d)?
        }
        _ => g.ball(r, metric).ok()?.len(),
    };
    (ball_len == k.len()).then_some(r)
}

/// `|∂_K(T)|`, via the distance field when `K` is a metric ball, else by direct scan.
pub fn boundary_len<G: Group>(g: &G, k: &FiniteSet<G::Elem>, t: &FiniteSet<G::Elem>) -> Result<usize> {
    if k.is_empty() || t.is_empty() {
        return Err(Error::invalid("boundary needs nonempty K and T"));
    }
    let metric = g.default_metric();
    if let Some(r) = ball_radius_of(g, k, metric) {
        let region = Region::new(g, t.clone(), metric, r + 1)?;
        return region.ball_boundary_len(g, r);
    }
    Ok(k_boundary(g, k, t)?.len())
}

/// `|∂_K(T)| / |T|` with the same fast path as [`boundary_len`].
pub fn invariance_ratio_fast<G: Group>(
    g: &G,
    k: &FiniteSet<G::Elem>,
    t: &FiniteSet<G::Elem>,
) -> Result<f64> {
    if t.is_empty() {
        return Err(Error::invalid("invariance_ratio needs nonempty T"));
    }
    Ok(boundary_len(g, k, t)? as f64 / t.len() as f64)
}

/// How a Følner sequence produces its members.
#[derive(Clone)]
pub enum Generator<E> {
    /// The shipped box sequence for the group family.
    Boxes,
    /// An explicit finite prefix `S_1, S_2, ...`.
    Explicit(Arc<Vec<FiniteSet<E>>>),
}

impl<E> Debug for Generator<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Generator::Boxes => write!(f, "Boxes"),
            Generator::Explicit(v) => write!(f, "Explicit(len={})", v.len()),
        }
    }
}

/// A sequence `n ↦ S_n` (indices start at 1) with declared properties.
#[derive(Clone, Debug)]
pub struct FolnerSequence<G: Group> {
    pub group: G,
    pub generator: Generator<G::Elem>,
    pub nested: bool,
    pub strong: bool,
    pub tempered: bool,
}

/// Group families with a shipped box Følner sequence.
pub trait BoxFolner: Group {
    fn box_member(&self, n: usize) -> FiniteSet<Self::Elem>;
}

impl<const D: usize> BoxFolner for Lattice<D> {
    /// `[0, n)^D`.
    fn box_member(&self, n: usize) -> FiniteSet<[i64; D]> {
        box_set([0; D], [n as i64; D])
    }
}

impl BoxFolner for Heisenberg {
    /// `{|x|, |y| ≤ n, |z| ≤ n²}`.
    fn box_member(&self, n: usize) -> FiniteSet<[i64; 3]> {
        let n = n as i64;
        box_set([-n, -n, -n * n], [n + 1, n + 1, n * n + 1])
    }
}

impl BoxFolner for Lamplighter {
    /// `{(f, p) : supp f ⊆ [−n, n], |p| ≤ n}`.
    fn box_member(&self, n: usize) -> FiniteSet<Lamp> {
        let n = n as i64;
        let width = (2 * n + 1) as u32;
        assert!(width < 40, "lamplighter box too large");
        let mut out = Vec::new();
        for mask in 0u64..(1u64 << width) {
            let lamps: Vec<i64> = (0..width)
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| b as i64 - n)
                .collect();
            for p in -n..=n {
                out.push(Lamp { pos: p, lamps: lamps.clone() });
            }
        }
        FiniteSet::from_iter(out)
    }
}

impl<G: Group> FolnerSequence<G> {
    /// The shipped box sequence; nested, strong and tempered.
    pub fn boxes(group: G) -> Self
    where
        G: BoxFolner,
    {
        FolnerSequence { group, generator: Generator::Boxes, nested: true, strong: true, tempered: true }
    }

    /// An explicit prefix; nestedness is detected, the other flags are not claimed.
    pub fn explicit(group: G, sets: Vec<FiniteSet<G::Elem>>) -> Self {
        let id = group.identity();
        let nested = sets.first().is_some_and(|s| s.contains(&id))
            && sets.windows(2).all(|w| w[0].is_subset(&w[1]));
        FolnerSequence {
            group,
            generator: Generator::Explicit(Arc::new(sets)),
            nested,
            strong: false,
            tempered: false,
        }
    }

    /// Number of available members, if finite.
    pub fn prefix_len(&self) -> Option<usize> {
        match &self.generator {
            Generator::Boxes => None,
            Generator::Explicit(v) => Some(v.len()),
        }
    }
}

impl<G: BoxFolner> FolnerSequence<G> {
    /// `S_n`, `n ≥ 1`.
    pub fn get(&self, n: usize) -> Result<FiniteSet<G::Elem>> {
        if n == 0 {
            return Err(Error::invalid("Følner sequence indices start at 1"));
        }
        match &self.generator {
            Generator::Boxes => Ok(self.group.box_member(n)),
            Generator::Explicit(v) => v
                .get(n - 1)
                .cloned()
                .ok_or(Error::PrefixExhausted { index: n, available: v.len() }),
        }
    }
}

/// Tempelman and Shulman constants over the prefix `S_1..S_N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthConstants {
    pub tempelman: f64,
    pub shulman: f64,
}

/// `max_{M≤N} |∪_{i≤M} S_i⁻¹S_M| / |S_M|` and the same with `i < M`.
pub fn growth_constants<G: BoxFolner>(seq: &FolnerSequence<G>, n: usize) -> Result<GrowthConstants> {
    if n < 2 {
        return Err(Error::invalid("growth_constants needs N ≥ 2"));
    }
    let g = &seq.group;
    let sets: Vec<_> = (1..=n).map(|k| seq.get(k)).collect::<Result<_>>()?;
    let invs: Vec<_> = sets.iter().map(|s| inverse_set(g, s)).collect();
    let ratios: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|m| {
            let mut acc: FxHashSet<G::Elem> = FxHashSet::default();
            // Nested prefixes make the union collapse onto its largest term.
            let lower = if seq.nested && m > 0 { m - 1 } else { 0 };
            for inv in &invs[lower..m] {
                for a in inv {
                    for b in &sets[m] {
                        acc.insert(g.mul(a, b));
                    }
                }
            }
            let sm = sets[m].len() as f64;
            let shulman = acc.len() as f64 / sm;
            for a in &invs[m] {
                for b in &sets[m] {
                    acc.insert(g.mul(a, b));
                }
            }
            (acc.len() as f64 / sm, shulman)
        })
        .collect();
    let tempelman = ratios.iter().map(|r| r.0).fold(0.0, f64::max);
    let shulman = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(GrowthConstants { tempelman, shulman })
}
