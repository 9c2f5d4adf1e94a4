//! Eigenvalue counting for random finite-range operators on a group.
//!
//! Operators act on `ℓ²(G)` with kernel `h_ω(x,y) = a(xy⁻¹) + V_ω(x)·[x = y]`.
//! Restrictions to finite sets are dense symmetric matrices; their spectra come
//! from Householder tridiagonalization and Sturm bisection, with an independent
//! inertia count from a Bunch–Kaufman LDLᵀ factorization.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{FiniteSet, Group, Index, Region};
use crate::site::Configuration;

/// Largest dimension the dense eigensolver accepts by default.
pub const DEFAULT_DIM_CAP: usize = 3600;

/// Stream tag for potential values.
const POTENTIAL_STREAM: u64 = 0x5045_4e54;

/// Dense symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    /// Builds from rows; fails unless square and exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = SymMatrix::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::invalid("matrix is not square"));
            }
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        if !m.is_symmetric() {
            return Err(Error::invalid("matrix is not symmetric"));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i,j)` and `(j,i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
        if i != j {
            self.data[j * self.n + i] += v;
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Max absolute row sum, a bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Householder reduction to tridiagonal form `A = Q T Qᵀ`.
///
/// Returns the diagonal, the off-diagonal (`e[i]` couples `i` and `i+1`,
/// `e[n−1] = 0`) and the rows of `Q` for the requested indices.
fn tridiagonalize(m: &SymMatrix, track: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let n = m.n;
    let mut a = m.data.clone();
    let mut rows: Vec<Vec<f64>> = track
        .iter()
        .map(|&x| {
            let mut r = vec![0.0; n];
            r[x] = 1.0;
            r
        })
        .collect();
    let mut e = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let s = k + 1;
        let scale: f64 = (s..n).map(|i| a[i * n + k].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut sigma = 0.0;
        for i in s..n {
            v[i] = a[i * n + k] / scale;
            sigma += v[i] * v[i];
        }
        let alpha = if v[s] > 0.0 { -sigma.sqrt() } else { sigma.sqrt() };
        v[s] -= alpha;
        let vtv: f64 = v[s..n].iter().map(|x| x * x).sum();
        e[k] = alpha * scale;
        if vtv == 0.0 {
            continue;
        }
        let tau = 2.0 / vtv;
        for i in s..n {
            let row = &a[i * n + s..i * n + n];
            p[i] = tau * row.iter().zip(&v[s..n]).map(|(x, y)| x * y).sum::<f64>();
        }
        let kk = 0.5 * tau * v[s..n].iter().zip(&p[s..n]).map(|(x, y)| x * y).sum::<f64>();
        for i in s..n {
            p[i] -= kk * v[i];
        }
        for i in s..n {
            let (vi, wi) = (v[i], p[i]);
            let row = &mut a[i * n + s..i * n + n];
            for ((x, vj), wj) in row.iter_mut().zip(&v[s..n]).zip(&p[s..n]) {
                *x -= vi * wj + wi * vj;
            }
        }
        for r in &mut rows {
            let t = tau * r[s..n].iter().zip(&v[s..n]).map(|(x, y)| x * y).sum::<f64>();
            for (x, vi) in r[s..n].iter_mut().zip(&v[s..n]) {
                *x -= t * vi;
            }
        }
    }
    if n >= 2 {
        e[n - 2] = a[(n - 1) * n + n - 2];
    }
    let d = (0..n).map(|i| a[i * n + i]).collect();
    (d, e, rows)
}

/// Number of eigenvalues of the tridiagonal `(d, e)` below `x`.
fn sturm_below(d: &[f64], e: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] / q };
        q = d[i] - x - off;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues of a symmetric tridiagonal matrix, ascending, by bisection.
///
/// The matrix is split at zero couplings; 1×1 blocks are exact.
pub fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        if i + 1 == n || e[i] == 0.0 {
            if i == start {
                out.push(d[i]);
            } else {
                out.extend(bisect_block(&d[start..=i], &e[start..i]));
            }
            start = i + 1;
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    out
}

fn bisect_block(d: &[f64], e: &[f64]) -> Vec<f64> {
    let n = d.len();
    if n == 0 {
        return Vec::new();
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let norm = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let pad = 2.0 * f64::EPSILON * norm * n as f64 + f64::MIN_POSITIVE;
    lo -= pad;
    hi += pad;
    let emax = e.iter().map(|x| x * x).fold(1.0, f64::max);
    let pivmin = f64::MIN_POSITIVE * emax;
    let tol = 2.0 * f64::EPSILON * norm;
    let mut out = Vec::with_capacity(n);
    let mut stack = vec![(lo, hi, 0usize, n)];
    while let Some((a, b, na, nb)) = stack.pop() {
        if nb == na {
            continue;
        }
        let mid = 0.5 * (a + b);
        if b - a <= tol.max(2.0 * f64::EPSILON * a.abs().max(b.abs())) || mid <= a || mid >= b {
            out.extend(std::iter::repeat(mid).take(nb - na));
            continue;
        }
        let nm = sturm_below(d, e, mid, pivmin).clamp(na, nb);
        stack.push((a, mid, na, nm));
        stack.push((mid, b, nm, nb));
    }
    out
}

/// All eigenvalues of `h`, ascending.
pub fn symmetric_eigenvalues(h: &SymMatrix) -> Vec<f64> {
    let (d, e, _) = tridiagonalize(h, &[]);
    tridiagonal_eigenvalues(&d, &e)
}

/// Eigenvalues and selected eigenvector rows: `rows[r][k] = ψ_k(track[r])`.
///
/// Uses implicit QL on the tridiagonal form, applying rotations only to the
/// tracked rows of `Q`.
pub fn eigen_rows(h: &SymMatrix, track: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = h.dim();
    let (mut d, mut e, mut rows) = tridiagonalize(h, track);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numeric("QL iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for z in &mut rows {
                    let f = z[i + 1];
                    z[i + 1] = s * z[i] + c * f;
                    z[i] = c * z[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, rows))
}

/// Right-continuous step function: `values[k]` on `[breaks[k], breaks[k+1])`, 0 left of `breaks[0]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

/// Relative tolerance under which breakpoints are identified.
pub const BREAK_TOL: f64 = 1e-9;

fn same_break(a: f64, b: f64) -> bool {
    (a - b).abs() <= BREAK_TOL * a.abs().max(b.abs()).max(1.0)
}

impl StepFunction {
    pub fn zero() -> Self {
        StepFunction::default()
    }

    /// Builds from breaks and values; breaks must be strictly increasing.
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() {
            return Err(Error::invalid("breaks and values differ in length"));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("breaks must be finite and strictly increasing"));
        }
        Ok(StepFunction { breaks, values })
    }

    /// Counting function of a multiset of points: `E ↦ #{λ ≤ E}`.
    ///
    /// Points closer than `tol` are treated as one jump.
    pub fn counting(points: &[f64], tol: f64) -> Self {
        Self::cumulative(points.iter().map(|&p| (p, 1.0)).collect(), tol)
    }

    /// `E ↦ Σ_{λ ≤ E} w` for weighted points.
    pub fn cumulative(mut points: Vec<(f64, f64)>, tol: f64) -> Self {
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        let mut breaks: Vec<f64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut acc = 0.0;
        let mut anchor = f64::NEG_INFINITY;
        for (x, w) in points {
            acc += w;
            if x - anchor <= tol {
                *values.last_mut().unwrap() = acc;
            } else {
                anchor = x;
                breaks.push(x);
                values.push(acc);
            }
        }
        StepFunction { breaks, values }
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.breaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breaks.is_empty()
    }

    /// Value at `x` (right-continuous).
    pub fn eval(&self, x: f64) -> f64 {
        match self.breaks.partition_point(|&b| b <= x) {
            0 => 0.0,
            k => self.values[k - 1],
        }
    }

    /// Value as `x → +∞`.
    pub fn tail(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        StepFunction { breaks: self.breaks.clone(), values: self.values.iter().map(|v| v * c).collect() }
    }

    /// Pointwise `self + c·other` on merged breakpoints.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        let mut merged: Vec<f64> = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.len() || j < other.len() {
            let x = match (self.breaks.get(i), other.breaks.get(j)) {
                (Some(&a), Some(&b)) if a <= b => {
                    i += 1;
                    a
                }
                (Some(_), Some(&b)) => {
                    j += 1;
                    b
                }
                (Some(&a), None) => {
                    i += 1;
                    a
                }
                (None, Some(&b)) => {
                    j += 1;
                    b
                }
                (None, None) => unreachable!(),
            };
            merged.push(x);
        }
        // Clusters of nearby breaks collapse to their first point, carrying
        // the value after the last one.
        let mut breaks = Vec::with_capacity(merged.len());
        let mut values = Vec::with_capacity(merged.len());
        let mut k = 0;
        while k < merged.len() {
            let start = merged[k];
            let mut end = k;
            while end + 1 < merged.len() && same_break(merged[end + 1], start) {
                end += 1;
            }
            let last = merged[end];
            let v = self.eval(last) + c * other.eval(last);
            if values.last() != Some(&v) {
                breaks.push(start);
                values.push(v);
            }
            k = end + 1;
        }
        // A leading zero piece carries no information.
        while values.first() == Some(&0.0) {
            breaks.remove(0);
            values.remove(0);
        }
        StepFunction { breaks, values }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    /// `sup |f|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(∫_lo^hi |f|^p)^{1/p}`, exact on pieces.
    pub fn lp_norm(&self, p: f64, lo: f64, hi: f64) -> Result<f64> {
        check_lp(p, lo, hi)?;
        let mut acc = 0.0;
        for k in 0..self.len() {
            let a = self.breaks[k].max(lo);
            let b = self.breaks.get(k + 1).copied().unwrap_or(f64::INFINITY).min(hi);
            if b > a {
                acc += self.values[k].abs().powf(p) * (b - a);
            }
        }
        Ok(acc.powf(1.0 / p))
    }

    pub fn norm(&self, mode: NormMode) -> Result<f64> {
        match mode {
            NormMode::Sup => Ok(self.sup_norm()),
            NormMode::Lp { p, lo, hi } => self.lp_norm(p, lo, hi),
        }
    }
}

fn check_lp(p: f64, lo: f64, hi: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("p must lie in (1, ∞), got {p}")));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid("interval must be bounded and nonempty"));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct StepDoc {
    jumps: Vec<[f64; 2]>,
}

impl Serialize for StepFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StepDoc { jumps: self.breaks.iter().zip(&self.values).map(|(&b, &v)| [b, v]).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StepFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = StepDoc::deserialize(d)?;
        let (breaks, values) = doc.jumps.into_iter().map(|[b, v]| (b, v)).unzip();
        StepFunction::new(breaks, values).map_err(serde::de::Error::custom)
    }
}

/// Norm used to compare step functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum NormMode {
    Sup,
    Lp { p: f64, lo: f64, hi: f64 },
}

impl NormMode {
    /// `L²([−5, 5])`.
    pub fn default_lp() -> Self {
        NormMode::Lp { p: 2.0, lo: -5.0, hi: 5.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NormMode::Sup => Ok(()),
            NormMode::Lp { p, lo, hi } => check_lp(p, lo, hi),
        }
    }
}

/// `‖f − g‖` in the given mode.
pub fn step_distance(f: &StepFunction, g: &StepFunction, mode: NormMode) -> Result<f64> {
    f.sub(g).norm(mode)
}

/// Eigenvalue counting function `E ↦ #{λ ≤ E}` of `h`.
pub fn eigen_counting_function(h: &SymMatrix, cap: usize) -> Result<StepFunction> {
    if h.dim() > cap {
        return Err(Error::DimensionCap { dim: h.dim(), cap });
    }
    let ev = symmetric_eigenvalues(h);
    Ok(StepFunction::counting(&ev, BREAK_TOL * h.norm_inf().max(1.0)))
}

/// Number of eigenvalues `≤ e`, from the inertia of `H − e·I`.
///
/// A pivot within roundoff of zero means `e` sits on an eigenvalue; the count
/// is then taken at `e + τ`, `τ = 1e−12·‖H‖`, with a few widening retries.
pub fn inertia_count(h: &SymMatrix, e: f64) -> Result<usize> {
    let norm = h.norm_inf().max(f64::MIN_POSITIVE);
    let tau = 1e-12 * norm.max(1.0);
    let mut shift = e;
    for attempt in 0..4 {
        if let Some(neg) = ldlt_negatives(h, shift, norm) {
            return Ok(neg);
        }
        shift = e + tau * 10f64.powi(attempt);
    }
    Err(Error::Numeric(format!("LDLᵀ breakdown near E = {e}")))
}

/// Negative inertia of `H − sI` by Bunch–Kaufman; `None` on a near-zero pivot.
fn ldlt_negatives(h: &SymMatrix, s: f64, norm: f64) -> Option<usize> {
    let n = h.dim();
    let mut a = h.data.clone();
    for i in 0..n {
        a[i * n + i] -= s;
    }
    let tiny = 4.0 * f64::EPSILON * (norm + s.abs()) * (n as f64).sqrt();
    let alpha = (1.0 + 17f64.sqrt()) / 8.0;
    let swap = |a: &mut Vec<f64>, k: usize, i: usize, j: usize| {
        if i == j {
            return;
        }
        for c in k..n {
            a.swap(i * n + c, j * n + c);
        }
        for r in k..n {
            a.swap(r * n + i, r * n + j);
        }
    };
    let mut neg = 0;
    let mut k = 0;
    while k < n {
        let akk = a[k * n + k].abs();
        let (mut imax, mut colmax) = (k, 0.0);
        for i in k + 1..n {
            let v = a[i * n + k].abs();
            if v > colmax {
                colmax = v;
                imax = i;
            }
        }
        let two = if akk.max(colmax) <= tiny {
            return None;
        } else if akk >= alpha * colmax {
            false
        } else {
            let mut rowmax: f64 = 0.0;
            for j in k..n {
                if j != imax {
                    rowmax = rowmax.max(a[imax * n + j].abs());
                }
            }
            if akk * rowmax >= alpha * colmax * colmax {
                false
            } else if a[imax * n + imax].abs() >= alpha * rowmax {
                swap(&mut a, k, k, imax);
                false
            } else {
                swap(&mut a, k, k + 1, imax);
                true
            }
        };
        if !two {
            let d = a[k * n + k];
            if d.abs() <= tiny {
                return None;
            }
            if d < 0.0 {
                neg += 1;
            }
            for i in k + 1..n {
                let l = a[i * n + k] / d;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
            }
            k += 1;
        } else {
            let (p, q, r) = (a[k * n + k], a[k * n + k + 1], a[(k + 1) * n + k + 1]);
            let det = p * r - q * q;
            if det.abs() <= tiny * tiny {
                return None;
            }
            if det < 0.0 {
                neg += 1;
            } else if p + r < 0.0 {
                neg += 2;
            }
            for i in k + 2..n {
                let (x, y) = (a[i * n + k], a[i * n + k + 1]);
                // [l1 l2] = [x y] D⁻¹
                let l1 = (x * r - y * q) / det;
                let l2 = (y * p - x * q) / det;
                for j in k + 2..n {
                    a[i * n + j] -= l1 * a[k * n + j] + l2 * a[(k + 1) * n + j];
                }
            }
            k += 2;
        }
    }
    Some(neg)
}

/// Law of the iid potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Potential {
    Zero,
    Uniform { lo: f64, hi: f64 },
}

/// Random operators `H_ω` with kernel `a(xy⁻¹) + V_ω(x)δ_{xy}`.
///
/// `range` is the interior depth `R`: restrictions to `Q` live on
/// `Q_R = {x ∈ Q : d(x, G∖Q) ≥ R}`, and `a` must vanish beyond distance `R`.
#[derive(Clone, Debug)]
pub struct OperatorEnsemble<G: Group> {
    pub group: G,
    pub hopping: Vec<(G::Elem, f64)>,
    pub potential: Potential,
    pub range: u32,
}

impl<G: Group> OperatorEnsemble<G> {
    pub fn new(group: G, hopping: Vec<(G::Elem, f64)>, potential: Potential, range: u32) -> Result<Self> {
        let metric = group.default_metric();
        for (h, v) in &hopping {
            let back = hopping.iter().find(|(k, _)| *k == group.inv(h)).map(|x| x.1);
            if back != Some(*v) {
                return Err(Error::invalid(format!("hopping kernel is not symmetric at {h:?}")));
            }
            let r = group
                .metric_norm(h, metric)
                .or_else(|| word_length(&group, h))
                .ok_or_else(|| Error::invalid("cannot measure hopping support"))?;
            if r > range as u64 {
                return Err(Error::invalid(format!("hopping at distance {r} exceeds range {range}")));
            }
        }
        if let Potential::Uniform { lo, hi } = potential {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid("potential support must be a bounded interval"));
            }
        }
        Ok(OperatorEnsemble { group, hopping, potential, range })
    }

    /// `t` times the adjacency of the standard generators.
    pub fn adjacency(group: G, t: f64, potential: Potential, range: u32) -> Result<Self> {
        let hopping = group.generators().into_iter().map(|h| (h, t)).collect();
        Self::new(group, hopping, potential, range)
    }

    pub fn potential_at(&self, omega: &Configuration<G::Elem>, x: &G::Elem) -> f64 {
        match self.potential {
            Potential::Zero => 0.0,
            Potential::Uniform { lo, hi } => lo + (hi - lo) * omega.uniform(&self.group, POTENTIAL_STREAM, x),
        }
    }

    /// `sup |V| + Σ|a|`, a bound on `‖H_ω‖`.
    pub fn norm_bound(&self) -> f64 {
        let v = match self.potential {
            Potential::Zero => 0.0,
            Potential::Uniform { lo, hi } => lo.abs().max(hi.abs()),
        };
        v + self.hopping.iter().map(|(_, a)| a.abs()).sum::<f64>()
    }

    /// `Q_R`, canonically ordered.
    pub fn interior(&self, q: &FiniteSet<G::Elem>) -> Result<FiniteSet<G::Elem>> {
        if self.range == 0 || q.is_empty() {
            return Ok(q.clone());
        }
        let region = Region::new(&self.group, q.clone(), self.group.default_metric(), self.range)?;
        Ok(q.iter().zip(&region.dist).filter(|(_, &d)| d >= self.range).map(|(e, _)| e.clone()).collect())
    }

    /// Hopping elements are `±t·e_k` on a lattice with zero potential.
    fn free_lattice_hopping(&self) -> Option<f64> {
        if self.group.family() != crate::group::Family::Zd || self.potential != Potential::Zero {
            return None;
        }
        let t = self.hopping.first()?.1;
        let d = self.group.coords(&self.group.identity()).len();
        if self.hopping.len() != 2 * d {
            return None;
        }
        let mut seen = vec![[false; 2]; d];
        for (h, a) in &self.hopping {
            if *a != t {
                return None;
            }
            let c = self.group.coords(h);
            let nz: Vec<usize> = (0..d).filter(|&k| c[k] != 0).collect();
            if nz.len() != 1 || c[nz[0]].abs() != 1 {
                return None;
            }
            seen[nz[0]][(c[nz[0]] > 0) as usize] = true;
        }
        seen.iter().all(|s| s[0] && s[1]).then_some(t)
    }
}

fn word_length<G: Group>(g: &G, h: &G::Elem) -> Option<u64> {
    (0..=8).find(|&r| g.ball(r, crate::group::Metric::Word).map(|b| b.contains(h)).unwrap_or(false)).map(u64::from)
}

/// `H_ω^R[Q]` with its row labels.
pub fn restrict_operator<G: Group>(
    ens: &OperatorEnsemble<G>,
    omega: &Configuration<G::Elem>,
    q: &FiniteSet<G::Elem>,
) -> Result<(FiniteSet<G::Elem>, SymMatrix)> {
    let g = &ens.group;
    let sites = ens.interior(q)?;
    let index = Index::new(&sites);
    let mut h = SymMatrix::zeros(sites.len());
    for (i, x) in sites.iter().enumerate() {
        h.data[i * sites.len() + i] += ens.potential_at(omega, x);
        for (a, v) in &ens.hopping {
            // x·y⁻¹ = a  ⟺  y = a⁻¹·x
            if let Some(j) = index.get(&g.mul(&g.inv(a), x)) {
                h.data[i * sites.len() + j] += v;
            }
        }
    }
    Ok((sites, h))
}

/// Eigenvalues of `t`·adjacency on a box with the given side lengths.
pub fn free_box_eigenvalues(t: f64, sides: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0];
    for &m in sides {
        let one: Vec<f64> =
            (1..=m).map(|k| 2.0 * t * (k as f64 * std::f64::consts::PI / (m as f64 + 1.0)).cos()).collect();
        out = out.iter().flat_map(|a| one.iter().map(move |b| a + b)).collect();
        if m == 0 {
            return Vec::new();
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    out
}

/// Side lengths when `set` is a full coordinate box.
fn box_sides<G: Group>(g: &G, set: &FiniteSet<G::Elem>) -> Option<Vec<usize>> {
    let first = g.coords(set.iter().next()?);
    let mut lo = first.clone();
    let mut hi = first;
    for e in set {
        for (k, c) in g.coords(e).into_iter().enumerate() {
            lo[k] = lo[k].min(c);
            hi[k] = hi[k].max(c);
        }
    }
    let sides: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (b - a + 1) as usize).collect();
    (sides.iter().product::<usize>() == set.len()).then_some(sides)
}

/// Normalized counting profile of the `n`-site path, `E ↦ #{k : 2cos(kπ/(n+1)) ≤ E}/n`.
pub fn path_profile(n: usize) -> StepFunction {
    StepFunction::counting(&free_box_eigenvalues(1.0, &[n]), BREAK_TOL * 2.0).scale(1.0 / n as f64)
}

/// `Q ↦ F_ω(Q)`, the eigenvalue counting function of `H_ω^R[Q]`.
#[derive(Clone, Debug)]
pub struct CountingFunction<G: Group> {
    pub ensemble: OperatorEnsemble<G>,
    pub omega: Configuration<G::Elem>,
    pub norm: NormMode,
    pub cap: usize,
    /// `C̃` in `b(Q) = C̃|∂^{R̄}(Q)|`.
    pub boundary_constant: f64,
    /// `R̄`.
    pub boundary_radius: u32,
}

/// The counting set function with `C̃ = 2`, `R̄ = 2R` and the sup norm.
pub fn counting_set_function<G: Group>(ens: &OperatorEnsemble<G>, omega: Configuration<G::Elem>) -> CountingFunction<G> {
    CountingFunction {
        ensemble: ens.clone(),
        omega,
        norm: NormMode::Sup,
        cap: DEFAULT_DIM_CAP,
        boundary_constant: 2.0,
        boundary_radius: 2 * ens.range.max(1),
    }
}

impl<G: Group> CountingFunction<G> {
    /// Uses the closed-form spectrum when `H` is free and `Q_R` a box.
    pub fn counting(&self, q: &FiniteSet<G::Elem>) -> Result<StepFunction> {
        let ens = &self.ensemble;
        let sites = ens.interior(q)?;
        if sites.is_empty() {
            return Ok(StepFunction::zero());
        }
        if let Some(t) = ens.free_lattice_hopping() {
            if let Some(sides) = box_sides(&ens.group, &sites) {
                let tol = BREAK_TOL * ens.norm_bound().max(1.0);
                return Ok(StepFunction::counting(&free_box_eigenvalues(t, &sides), tol));
            }
        }
        let (_, h) = restrict_operator(ens, &self.omega, q)?;
        eigen_counting_function(&h, self.cap)
    }

    /// `C̃|∂^{R̄}(Q)|`.
    pub fn boundary_value(&self, q: &FiniteSet<G::Elem>) -> Result<f64> {
        if q.is_empty() {
            return Ok(0.0);
        }
        let g = &self.ensemble.group;
        let r = self.boundary_radius;
        let region = Region::new(g, q.clone(), g.default_metric(), r + 1)?;
        Ok(self.boundary_constant * region.ball_boundary_len(g, r)? as f64)
    }

    /// Free ensembles are translation invariant, so their value depends only
    /// on the shape of `Q`.
    pub fn is_translation_invariant(&self) -> bool {
        self.ensemble.potential == Potential::Zero
    }
}

/// One row of an IDS convergence run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsRow {
    pub seed: u64,
    pub j: usize,
    pub size: usize,
    pub dim: usize,
    /// Sup distance to the previous `j` of the same seed.
    pub sup_prev: Option<f64>,
    /// Distance in the chosen norm to the previous `j`.
    pub norm_prev: Option<f64>,
    /// Largest sup distance to the other seeds at this `j`.
    pub cross_sup: Option<f64>,
    /// Largest distance in the chosen norm to the other seeds at this `j`.
    pub cross_norm: Option<f64>,
}

/// Trajectories `F_ω(U_j)/|U_j|` per seed with Cauchy and cross-seed diagnostics.
#[derive(Clone, Debug)]
pub struct IdsReport {
    pub rows: Vec<IdsRow>,
    pub js: Vec<usize>,
    /// `trajectories[s][k]` for seed `s` at `js[k]`.
    pub trajectories: Vec<Vec<StepFunction>>,
    /// Seed average at each `j`.
    pub mean: Vec<StepFunction>,
    /// First `j` skipped because the dimension cap was reached.
    pub truncated_at: Option<usize>,
}

impl IdsReport {
    /// Final normalized counting function of seed `s`.
    pub fn tail(&self, s: usize) -> Option<&StepFunction> {
        self.trajectories.get(s)?.last()
    }
}

pub fn ids_experiment<G: crate::group::BoxFolner>(
    ens: &OperatorEnsemble<G>,
    seq: &crate::group::FolnerSequence<G>,
    js: &[usize],
    norm: NormMode,
    seeds: &[u64],
) -> Result<IdsReport> {
    norm.validate()?;
    if seeds.is_empty() || js.is_empty() {
        return Err(Error::invalid("need at least one seed and one j"));
    }
    let g = &ens.group;
    let mut kept = Vec::new();
    let mut truncated_at = None;
    for &j in js {
        let u = seq.get(j)?;
        let dim = ens.interior(&u)?.len();
        let f = counting_set_function(ens, Configuration::new(g, 0));
        if dim > f.cap && !(f.is_translation_invariant() && ens.free_lattice_hopping().is_some()) {
            truncated_at = Some(j);
            break;
        }
        kept.push((j, u, dim));
    }
    let mut trajectories = vec![Vec::new(); seeds.len()];
    let mut rows = Vec::new();
    for (k, (j, u, dim)) in kept.iter().enumerate() {
        for (s, &seed) in seeds.iter().enumerate() {
            let f = counting_set_function(ens, Configuration::new(g, seed));
            let v = f.counting(u)?.scale(1.0 / u.len() as f64);
            let (sup_prev, norm_prev) = match k {
                0 => (None, None),
                _ => {
                    let prev: &StepFunction = &trajectories[s][k - 1];
                    (Some(step_distance(&v, prev, NormMode::Sup)?), Some(step_distance(&v, prev, norm)?))
                }
            };
            trajectories[s].push(v);
            rows.push(IdsRow { seed, j: *j, size: u.len(), dim: *dim, sup_prev, norm_prev, cross_sup: None, cross_norm: None });
        }
    }
    let mut mean = Vec::with_capacity(kept.len());
    for k in 0..kept.len() {
        let mut m = StepFunction::zero();
        for t in &trajectories {
            m = m.axpy(1.0 / seeds.len() as f64, &t[k]);
        }
        mean.push(m);
        if seeds.len() > 1 {
            for s in 0..seeds.len() {
                let mut cs: f64 = 0.0;
                let mut cn: f64 = 0.0;
                for o in 0..seeds.len() {
                    if o != s {
                        cs = cs.max(step_distance(&trajectories[s][k], &trajectories[o][k], NormMode::Sup)?);
                        cn = cn.max(step_distance(&trajectories[s][k], &trajectories[o][k], norm)?);
                    }
                }
                let row = &mut rows[k * seeds.len() + s];
                row.cross_sup = Some(cs);
                row.cross_norm = Some(cn);
            }
        }
    }
    Ok(IdsReport { rows, js: kept.iter().map(|k| k.0).collect(), trajectories, mean, truncated_at })
}

/// Monte-Carlo estimate of the IDS from central diagonal entries of spectral projectors.
#[derive(Clone, Debug)]
pub struct EnsembleEstimate {
    /// `E ↦` mean over samples and central sites of `⟨δ_x, 1_{(−∞,E]}(H) δ_x⟩`.
    pub profile: StepFunction,
    pub samples: usize,
    pub probe_dim: usize,
    pub central_sites: usize,
    /// Sup distance between the central estimate and the probe's own normalized
    /// counting function; large values flag boundary effects or too few samples.
    pub boundary_gap: f64,
}

impl EnsembleEstimate {
    pub fn on_grid(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&e| self.profile.eval(e)).collect()
    }
}

/// Averages the spectral weight of the sites within `center` of the identity
/// in the probe ball of radius `probe`, over seeds `base_seed..base_seed+n_samples`.
pub fn ensemble_limit_estimate<G: Group>(
    ens: &OperatorEnsemble<G>,
    n_samples: usize,
    probe: u32,
    center: u32,
    base_seed: u64,
) -> Result<EnsembleEstimate> {
    if n_samples < 10 {
        return Err(Error::invalid(format!("n_samples must be at least 10, got {n_samples}")));
    }
    if center > probe {
        return Err(Error::invalid("central radius exceeds probe radius"));
    }
    let g = &ens.group;
    let metric = g.default_metric();
    let q = g.ball(probe + ens.range.saturating_sub(1), metric)?;
    let centre = g.ball(center, metric)?;
    let mut points = Vec::new();
    let mut all = Vec::new();
    let mut dim = 0;
    let mut tracked = 0;
    for s in 0..n_samples as u64 {
        let omega = Configuration::new(g, base_seed + s);
        let (sites, h) = restrict_operator(ens, &omega, &q)?;
        if h.dim() > DEFAULT_DIM_CAP {
            return Err(Error::DimensionCap { dim: h.dim(), cap: DEFAULT_DIM_CAP });
        }
        let track: Vec<usize> = centre.iter().filter_map(|x| sites.position(x)).collect();
        let (ev, rows) = eigen_rows(&h, &track)?;
        dim = h.dim();
        tracked = track.len();
        for r in &rows {
            for (k, &lam) in ev.iter().enumerate() {
                points.push((lam, r[k] * r[k]));
            }
        }
        all.extend(ev.iter().map(|&l| (l, 1.0)));
    }
    if tracked == 0 {
        return Err(Error::invalid("no central site survives the restriction"));
    }
    let tol = BREAK_TOL * ens.norm_bound().max(1.0);
    let profile = StepFunction::cumulative(points, tol).scale(1.0 / (n_samples * tracked) as f64);
    let whole = StepFunction::cumulative(all, tol).scale(1.0 / (n_samples * dim) as f64);
    let boundary_gap = step_distance(&profile, &whole, NormMode::Sup)?;
    Ok(EnsembleEstimate { profile, samples: n_samples, probe_dim: dim, central_sites: tracked, boundary_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{box_set, Lattice};

    fn path(n: usize) -> SymMatrix {
        let mut h = SymMatrix::zeros(n);
        for i in 0..n.saturating_sub(1) {
            h.set(i, i + 1, 1.0);
        }
        h
    }

    #[test]
    fn two_by_two() {
        let h = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let f = eigen_counting_function(&h, DEFAULT_DIM_CAP).unwrap();
        assert_eq!(f.len(), 2);
        assert!((f.breaks()[0] + 1.0).abs() < 1e-14 && (f.breaks()[1] - 1.0).abs() < 1e-14);
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(inertia_count(&h, 0.0).unwrap(), 1);
        assert_eq!(inertia_count(&h, -5.0).unwrap(), 0);
        assert_eq!(inertia_count(&h, 5.0).unwrap(), 2);
    }

    #[test]
    fn zero_matrix_single_jump() {
        let f = eigen_counting_function(&SymMatrix::zeros(4), DEFAULT_DIM_CAP).unwrap();
        assert_eq!(f.breaks(), &[0.0]);
        assert_eq!(f.values(), &[4.0]);
        assert_eq!(inertia_count(&SymMatrix::zeros(4), 0.0).unwrap(), 4);
    }

    #[test]
    fn three_site_path() {
        let f = eigen_counting_function(&path(3), DEFAULT_DIM_CAP).unwrap();
        let s = 2f64.sqrt();
        for (b, w) in f.breaks().iter().zip([-s, 0.0, s]) {
            assert!((b - w).abs() < 1e-12);
        }
        assert_eq!(f.eval(0.0), 2.0);
        assert_eq!(inertia_count(&path(3), 0.0).unwrap(), 2);
    }

    #[test]
    fn path_spectrum_matches_cosines() {
        for n in [1, 2, 7, 50, 181] {
            let ev = symmetric_eigenvalues(&path(n));
            let want = free_box_eigenvalues(1.0, &[n]);
            for (a, b) in ev.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn ql_rows_are_orthonormal() {
        let n = 30;
        let mut h = path(n);
        for i in 0..n {
            h.set(i, i, (i as f64 * 0.37).sin());
        }
        let (ev, rows) = eigen_rows(&h, &(0..n).collect::<Vec<_>>()).unwrap();
        let mut sorted = ev.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in sorted.iter().zip(symmetric_eigenvalues(&h)) {
            assert!((a - b).abs() < 1e-10);
        }
        for k in 0..n {
            let w: f64 = rows.iter().map(|r| r[k] * r[k]).sum();
            assert!((w - 1.0).abs() < 1e-10);
        }
        for x in 0..n {
            let w: f64 = rows[x].iter().map(|v| v * v).sum();
            assert!((w - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn step_norms() {
        let a = StepFunction::new(vec![0.0], vec![1.0]).unwrap();
        let b = StepFunction::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(step_distance(&a, &a, NormMode::default_lp()).unwrap(), 0.0);
        assert!((step_distance(&a, &b, NormMode::default_lp()).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(step_distance(&a, &b, NormMode::Sup).unwrap(), 1.0);
        let f = StepFunction::counting(&[-1.0, 0.5, 0.5, 3.0], 1e-12);
        let lp = f.lp_norm(2.0, -5.0, 5.0).unwrap();
        assert!(lp <= 10f64.sqrt() * f.sup_norm());
        assert!(f.lp_norm(1.0, -5.0, 5.0).is_err());
        assert!(f.lp_norm(2.0, 0.0, f64::INFINITY).is_err());
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"{"jumps":[[-1.0,1.0],[0.5,3.0],[3.0,4.0]]}"#);
        assert_eq!(serde_json::from_str::<StepFunction>(&json).unwrap(), f);
    }

    #[test]
    fn nearby_breaks_cancel() {
        let a = StepFunction::counting(&[0.1, 0.7], 1e-12);
        let b = StepFunction::counting(&[0.1 + 1e-14, 0.7], 1e-12);
        assert_eq!(a.sub(&b).sup_norm(), 0.0);
    }

    #[test]
    fn restriction_of_path() {
        let g = Lattice::<1>;
        let ens = OperatorEnsemble::adjacency(g, 1.0, Potential::Zero, 2).unwrap();
        let n = 9;
        let q: FiniteSet<[i64; 1]> = (0..n as i64 + 2).map(|x| [x]).collect();
        let (sites, h) = restrict_operator(&ens, &Configuration::new(&g, 0), &q).unwrap();
        assert_eq!(sites.len(), n);
        let ev = symmetric_eigenvalues(&h);
        for (a, b) in ev.iter().zip(free_box_eigenvalues(1.0, &[n])) {
            assert!((a - b).abs() < 1e-12);
        }
        let tiny: FiniteSet<[i64; 1]> = (0..3).map(|x| [x]).collect();
        assert_eq!(restrict_operator(&ens, &Configuration::new(&g, 0), &tiny).unwrap().1.dim(), 1);
        let dot = FiniteSet::singleton([0]);
        assert_eq!(restrict_operator(&ens, &Configuration::new(&g, 0), &dot).unwrap().1.dim(), 0);
    }

    #[test]
    fn closed_form_matches_dense() {
        let g = Lattice::<2>;
        let ens = OperatorEnsemble::adjacency(g, 1.0, Potential::Zero, 1).unwrap();
        let f = counting_set_function(&ens, Configuration::new(&g, 0));
        let q = box_set([0, 0], [6, 9]);
        let (_, h) = restrict_operator(&ens, &f.omega, &q).unwrap();
        let dense = eigen_counting_function(&h, DEFAULT_DIM_CAP).unwrap();
        assert_eq!(step_distance(&f.counting(&q).unwrap(), &dense, NormMode::Sup).unwrap(), 0.0);
    }

    #[test]
    fn rejects_long_hopping() {
        assert!(OperatorEnsemble::new(Lattice::<1>, vec![([2], 1.0), ([-2], 1.0)], Potential::Zero, 1).is_err());
        assert!(OperatorEnsemble::new(Lattice::<1>, vec![([1], 1.0)], Potential::Zero, 1).is_err());
    }

    #[test]
    fn dimension_cap() {
        assert_eq!(
            eigen_counting_function(&SymMatrix::zeros(5), 4),
            Err(Error::DimensionCap { dim: 5, cap: 4 })
        );
    }
}
