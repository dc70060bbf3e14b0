//! Log-uniform radial grids, fields sampled on them, and quadrature-backed
//! Lebesgue norms.
//!
//! Integrals `∫ g(r) r^{d-1} dr` are computed in `x = log r` as
//! `∫ g e^{dx} dx` with the trapezoid rule plus sixth-order Gregory end
//! corrections. Interior weights are exactly trapezoidal, which keeps the
//! rule spectrally accurate for integrands that decay at both ends.

use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Gregory end weights (trapezoid plus corrections), exact for polynomials
/// of degree five in the log variable.
const GREGORY6: [f64; 6] = [
    19087.0 / 60480.0,
    84199.0 / 60480.0,
    18869.0 / 30240.0,
    37621.0 / 30240.0,
    55031.0 / 60480.0,
    61343.0 / 60480.0,
];

#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub d: u32,
    pub r_min: f64,
    pub r_max: f64,
    /// Spacing in `log r`.
    pub h: f64,
    pub nodes: Vec<f64>,
    /// Weights for `∫ g(r) r^{d-1} dr` over `[r_min, r_max]`.
    pub weights: Vec<f64>,
    /// Weights for `∫ g dx` in the log variable.
    pub log_weights: Vec<f64>,
    pub sphere_area: f64,
}

impl PartialEq for RadialGrid {
    fn eq(&self, o: &Self) -> bool {
        self.d == o.d && self.r_min == o.r_min && self.r_max == o.r_max && self.len() == o.len()
    }
}

pub fn make_grid(d: u32, r_min: f64, r_max: f64, n: usize) -> Result<Arc<RadialGrid>> {
    RadialGrid::new(d, r_min, r_max, n).map(Arc::new)
}

impl RadialGrid {
    pub fn new(d: u32, r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_min > 0.0) {
            return Err(Error::InvalidInput(format!("r_min = {r_min} must be positive")));
        }
        if !(r_max > r_min) || !r_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "r_max = {r_max} must be finite and exceed r_min"
            )));
        }
        if n < 16 {
            return Err(Error::InvalidInput(format!("N = {n} must be at least 16")));
        }
        if d < 1 {
            return Err(Error::InvalidInput("d must be positive".into()));
        }
        let (x0, x1) = (r_min.ln(), r_max.ln());
        let h = (x1 - x0) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| (x0 + h * i as f64).exp()).collect();
        nodes[0] = r_min;
        nodes[n - 1] = r_max;
        let mut log_weights = vec![h; n];
        for (k, g) in GREGORY6.iter().enumerate() {
            log_weights[k] = h * g;
            log_weights[n - 1 - k] = h * g;
        }
        let weights = nodes
            .iter()
            .zip(&log_weights)
            .map(|(r, w)| w * r.powi(d as i32))
            .collect();
        let df = d as f64;
        let sphere_area = 2.0 * std::f64::consts::PI.powf(df / 2.0) / gamma(df / 2.0);
        Ok(RadialGrid {
            d,
            r_min,
            r_max,
            h,
            nodes,
            weights,
            log_weights,
            sphere_area,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.r_min.ln() + self.h * i as f64
    }

    /// Same interval with `2N - 1` nodes: every old node is kept.
    pub fn refine(&self) -> Result<Arc<RadialGrid>> {
        make_grid(self.d, self.r_min, self.r_max, 2 * self.len() - 1)
    }

    /// `∫ g(r) r^{d-1} dr` over the grid interval (no sphere factor).
    pub fn integrate(&self, g: &[f64]) -> f64 {
        self.weights.iter().zip(g).map(|(w, v)| w * v).sum()
    }

    /// `∫ g dx` in the log variable.
    pub fn integrate_log(&self, g: &[f64]) -> f64 {
        self.log_weights.iter().zip(g).map(|(w, v)| w * v).sum()
    }
}

#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
    /// Known decay `f ≈ C r^{-γ}` near `r_max`.
    pub tail_exponent: Option<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>, tail_exponent: Option<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field values must be finite".into()));
        }
        Ok(RadialField {
            grid,
            values,
            tail_exponent,
        })
    }

    /// Skips the finiteness check; for solver internals that check norms.
    pub(crate) fn from_parts(grid: Arc<RadialGrid>, values: Vec<f64>, tail_exponent: Option<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        RadialField {
            grid,
            values,
            tail_exponent,
        }
    }

    pub fn from_fn(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> f64, tail_exponent: Option<f64>) -> Result<Self> {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        RadialField::new(grid.clone(), values, tail_exponent)
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        RadialField::from_parts(grid.clone(), vec![0.0; grid.len()], None)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn same_grid(&self, other: &RadialField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn scaled(&self, c: f64) -> RadialField {
        RadialField::from_parts(
            self.grid.clone(),
            self.values.iter().map(|v| c * v).collect(),
            self.tail_exponent,
        )
    }

    /// `self - other`; the tail is kept only when both tails agree.
    pub fn sub(&self, other: &RadialField) -> Result<RadialField> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let tail = if self.tail_exponent == other.tail_exponent {
            self.tail_exponent
        } else {
            None
        };
        Ok(RadialField::from_parts(
            self.grid.clone(),
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            tail,
        ))
    }
}

/// `(ω_{d-1} Σ w_i |f_i|^q)^{1/q}`, or `max |f_i|` for `q = ∞`.
pub fn lq_norm(f: &RadialField, q: f64) -> f64 {
    norm_of(&f.grid, &f.values, q)
}

pub(crate) fn norm_of(g: &RadialGrid, v: &[f64], q: f64) -> f64 {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if q.is_infinite() || m == 0.0 {
        return m;
    }
    let s: f64 = g
        .weights
        .iter()
        .zip(v)
        .map(|(w, x)| w * (x.abs() / m).powf(q))
        .sum();
    m * (g.sphere_area * s).powf(1.0 / q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    /// Norm increase if the tail `f(r_max) (r/r_max)^{-γ}` were included;
    /// infinite when that tail is not `q`-integrable.
    pub truncation_error: f64,
}

pub fn lq_norm_with_tail(f: &RadialField, q: f64) -> NormEstimate {
    let value = lq_norm(f, q);
    let g = &f.grid;
    let truncation_error = match f.tail_exponent {
        Some(gamma) if q.is_finite() => {
            let df = g.d as f64;
            let last = f.values[g.len() - 1].abs();
            if last == 0.0 {
                0.0
            } else if q * gamma > df {
                let tail = g.sphere_area * last.powf(q) * g.r_max.powf(df) / (q * gamma - df);
                (value.powf(q) + tail).powf(1.0 / q) - value
            } else {
                f64::INFINITY
            }
        }
        _ => 0.0,
    };
    NormEstimate {
        value,
        truncation_error,
    }
}

/// Hermite slopes in the log variable: fourth-order centred differences,
/// clipped to the monotonicity box `|m| <= 3 min(|δ_-|, |δ_+|)` and set to
/// zero at local extrema.
fn monotone_slopes(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let delta: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut m = vec![0.0; n];
    for i in 0..n {
        let raw = if n < 5 {
            if i == 0 {
                delta[0]
            } else if i == n - 1 {
                delta[n - 2]
            } else {
                0.5 * (delta[i - 1] + delta[i])
            }
        } else if i >= 2 && i + 2 < n {
            (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h)
        } else if i < 2 {
            // fourth-order one-sided stencils on nodes 0..4
            let c: [f64; 5] = if i == 0 {
                [-25.0, 48.0, -36.0, 16.0, -3.0]
            } else {
                [-3.0, -10.0, 18.0, -6.0, 1.0]
            };
            c.iter().zip(&v[..5]).map(|(c, y)| c * y).sum::<f64>() / (12.0 * h)
        } else {
            let c: [f64; 5] = if i == n - 1 {
                [3.0, -16.0, 36.0, -48.0, 25.0]
            } else {
                [-1.0, 6.0, -18.0, 10.0, 3.0]
            };
            c.iter().zip(&v[n - 5..]).map(|(c, y)| c * y).sum::<f64>() / (12.0 * h)
        };
        let (a, b) = match i {
            0 => (delta[0], delta[0]),
            _ if i == n - 1 => (delta[n - 2], delta[n - 2]),
            _ => (delta[i - 1], delta[i]),
        };
        m[i] = if a * b <= 0.0 || raw * a <= 0.0 {
            0.0
        } else {
            raw.signum() * raw.abs().min(3.0 * a.abs().min(b.abs()))
        };
    }
    m
}

fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, h: f64, u: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * h * m0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * h * m1
}

/// `(D_λ f)(r) = f(λ r)`.
pub fn dilate(f: &RadialField, lambda: f64) -> Result<RadialField> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda = {lambda} must be positive")));
    }
    let g = &f.grid;
    let n = g.len();
    let v = &f.values;
    let shift = lambda.ln() / g.h;
    let k = shift.round();
    if (shift - k).abs() < 1e-9 {
        let k = k as i64;
        let values = (0..n as i64)
            .map(|i| {
                let j = i + k;
                if (0..n as i64).contains(&j) {
                    v[j as usize]
                } else {
                    extrapolate(f, g.x(0) + g.h * j as f64)
                }
            })
            .collect();
        return Ok(RadialField::from_parts(g.clone(), values, f.tail_exponent));
    }
    let m = monotone_slopes(v, g.h);
    let x0 = g.x(0);
    let xn = g.x(n - 1);
    let ll = lambda.ln();
    let values = (0..n)
        .map(|i| {
            let x = g.x(i) + ll;
            if x < x0 || x > xn {
                return extrapolate(f, x);
            }
            let s = ((x - x0) / g.h).min((n - 1) as f64);
            let j = (s.floor() as usize).min(n - 2);
            let u = s - j as f64;
            hermite(v[j], v[j + 1], m[j], m[j + 1], g.h, u)
        })
        .collect();
    Ok(RadialField::from_parts(g.clone(), values, f.tail_exponent))
}

/// Value at log-radius `x` outside the grid: the tail law beyond `r_max`
/// (zero without one) and a two-node power-law continuation below `r_min`.
fn extrapolate(f: &RadialField, x: f64) -> f64 {
    let g = &f.grid;
    let v = &f.values;
    let n = g.len();
    if x > g.x(n - 1) {
        match f.tail_exponent {
            Some(gamma) => v[n - 1] * (-gamma * (x - g.x(n - 1))).exp(),
            None => 0.0,
        }
    } else {
        let (a, b) = (v[0], v[1]);
        if a != 0.0 && a.signum() == b.signum() {
            let slope = (b / a).ln() / g.h;
            a * (slope * (x - g.x(0))).exp()
        } else {
            a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff {
    /// Power law only for `r ≥ A`; the constant `c A^{-γ}` inside.
    Inner(f64),
    /// Zero for `r > R`.
    Outer(f64),
}

/// Samples `c r^{-γ}` with optional inner flattening and outer truncation.
pub fn power_law_field(
    grid: &Arc<RadialGrid>,
    c: f64,
    gamma: f64,
    inner: Option<f64>,
    outer: Option<f64>,
) -> Result<RadialField> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("gamma = {gamma} must be nonnegative")));
    }
    let tail = match outer {
        Some(r) if r < grid.r_max => None,
        _ => Some(gamma),
    };
    RadialField::from_fn(
        grid,
        |r| {
            if let Some(big) = outer {
                if r > big {
                    return 0.0;
                }
            }
            let rr = match inner {
                Some(a) => r.max(a),
                None => r,
            };
            c * rr.powf(-gamma)
        },
        tail,
    )
}

/// `c (1 + r^2)^{-γ/2}`.
pub fn smoothed_power_field(grid: &Arc<RadialGrid>, c: f64, gamma: f64) -> Result<RadialField> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("gamma = {gamma} must be nonnegative")));
    }
    RadialField::from_fn(grid, |r| c * (1.0 + r * r).powf(-gamma / 2.0), Some(gamma))
}

/// `c exp(-r^2 / (4 s))`.
pub fn gaussian_field(grid: &Arc<RadialGrid>, c: f64, s: f64) -> Result<RadialField> {
    RadialField::from_fn(grid, |r| c * (-r * r / (4.0 * s)).exp(), None)
}
