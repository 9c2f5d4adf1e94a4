//! Constructive tools for discrete amenable groups: boundaries and Følner
//! sequences, Ornstein–Weiss quasi-tilings with uniform families and
//! decomposition towers, almost-additive averaging, bounded additive
//! processes, and eigenvalue counting for random finite-range operators.

pub mod error;
pub mod ergodic;
pub mod group;
pub mod process;
pub mod site;
pub mod spectral;
pub mod tiling;

pub use error::{Error, Result};
pub use group::{
    FiniteSet, FolnerSequence, Group, Heisenberg, Lamp, Lamplighter, Lattice, Metric,
};
