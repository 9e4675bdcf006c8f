//! Multivariate decomposition finite element method (MDFEM) for
//! `-(a(x, y) u')' = f` on (0, 1) with `a = a0 + Σ y_j φ_j` and `y` uniform on `[-1/2, 1/2]^ℕ`.
//!
//! The expected value of a linear functional `G(u)` is approximated by splitting the
//! integrand into anchored terms, keeping only the subsets that matter for a target
//! accuracy, and integrating each kept term with its own polynomial lattice rule and mesh.

pub mod activeset;
pub mod anchored;
pub mod cli;
pub mod config;
pub mod driver;
pub mod error;
pub mod fem1d;
pub mod gf2poly;
pub mod kernel;
pub mod oracles;
pub mod polylattice;
pub mod problem;
pub mod quadrature;

pub use error::{Error, Result};
