//! Counter-based hashing of (seed, site) pairs.
//!
//! Site values depend only on the seed and the canonical coordinates of the
//! site, so relabeling sites by a group shift reproduces them bit for bit.

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A 64-bit hash of the seed, a stream tag and the site coordinates.
pub fn site_hash(seed: u64, stream: u64, coords: &[i64]) -> u64 {
    let mut h = splitmix(seed ^ splitmix(stream.wrapping_add(0x5851_F42D_4C95_7F2D)));
    h = splitmix(h ^ coords.len() as u64);
    for &c in coords {
        h = splitmix(h ^ c as u64);
    }
    h
}

/// Uniform value in `[0, 1)` with 53 random bits.
pub fn site_uniform(seed: u64, stream: u64, coords: &[i64]) -> f64 {
    (site_hash(seed, stream, coords) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A sample `ω` of an iid field over a group.
///
/// The value of `ω` at site `x` is drawn from `x·offset`, and `g·ω` has offset
/// `g·offset`, so `(g·ω)(x) = ω(x·g)` holds exactly.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration<E> {
    pub seed: u64,
    pub offset: E,
}

impl<E: Clone> Configuration<E> {
    pub fn new<G: crate::group::Group<Elem = E>>(g: &G, seed: u64) -> Self {
        Configuration { seed, offset: g.identity() }
    }

    /// `h·ω`.
    pub fn shift<G: crate::group::Group<Elem = E>>(&self, g: &G, h: &E) -> Self {
        Configuration { seed: self.seed, offset: g.mul(h, &self.offset) }
    }

    /// Uniform `[0,1)` value of the given stream at site `x`.
    pub fn uniform<G: crate::group::Group<Elem = E>>(&self, g: &G, stream: u64, x: &E) -> f64 {
        site_uniform(self.seed, stream, &g.coords(&g.mul(x, &self.offset)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_spread() {
        assert_eq!(site_uniform(7, 0, &[1, 2]), site_uniform(7, 0, &[1, 2]));
        assert_ne!(site_uniform(7, 0, &[1, 2]), site_uniform(7, 0, &[2, 1]));
        assert_ne!(site_uniform(7, 0, &[1]), site_uniform(8, 0, &[1]));
        let n = 100_000;
        let mean: f64 = (0..n).map(|k| site_uniform(3, 1, &[k])).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn shift_relabels_sites() {
        use crate::group::Lattice;
        let g = Lattice::<2>;
        let w = Configuration::new(&g, 11);
        let h = [3, -4];
        let hw = w.shift(&g, &h);
        for x in [[0, 0], [5, 1], [-2, 7]] {
            assert_eq!(hw.uniform(&g, 0, &x), w.uniform(&g, 0, &[x[0] + 3, x[1] - 4]));
        }
    }
}
