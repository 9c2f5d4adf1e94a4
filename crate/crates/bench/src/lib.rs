//! Fixtures shared by the benchmarks.

use folner_core::group::box_set;
use folner_core::spectral::SymMatrix;
use folner_core::FiniteSet;

/// Adjacency matrix of the path on `n` vertices.
pub fn path_matrix(n: usize) -> SymMatrix {
    let mut h = SymMatrix::zeros(n);
    for i in 0..n.saturating_sub(1) {
        h.set(i, i + 1, 1.0);
        h.set(i + 1, i, 1.0);
    }
    h
}

/// Dyadic boxes `[0, 2^i)^2` for `i = 1..=n`.
pub fn dyadic_basis(n: u32) -> Vec<FiniteSet<[i64; 2]>> {
    (1..=n).map(|i| box_set([0, 0], [1 << i, 1 << i])).collect()
}
