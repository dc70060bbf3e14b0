//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use hardyheat::grid::gaussian_field;
use hardyheat::{make_grid, Parameters, RadialField, RadialGrid};

/// The dyadic grid used by the large-time runs: 449 nodes on `[2^-14, 2^14]`.
pub fn dyadic_grid() -> Arc<RadialGrid> {
    make_grid(3, 2f64.powi(-14), 2f64.powi(14), 449).expect("valid grid")
}

pub fn params(a: f64, mu: f64) -> Parameters {
    Parameters::new(3, a, 1.0, 2.0, mu).expect("valid parameters")
}

pub fn bump(grid: &Arc<RadialGrid>, c: f64) -> RadialField {
    gaussian_field(grid, c, 1.0).expect("finite data")
}
