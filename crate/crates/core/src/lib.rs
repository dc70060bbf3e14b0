//! Numerical tools for `u_t + (-Δ + a|x|^{-2}) u = μ |x|^{-b} |u|^α u`:
//! exact exponent algebra for the well-posedness regions and a radial
//! mild-solution solver built on the Bessel heat kernel.

pub mod analysis;
pub mod error;
pub mod exponents;
pub mod grid;
pub mod io;
mod quad;
pub mod semigroup;
pub mod solver;

pub use error::{Error, Result};
pub use exponents::{
    classify, compute_exponents, find_aux_r, AuxPair, Criticality, Exponents, Lemma11Set,
    Lemma13Set, OpenInterval, Parameters, RegionVerdict,
};
pub use grid::{dilate, lq_norm, make_grid, RadialField, RadialGrid};
