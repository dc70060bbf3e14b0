//! The heat semigroup of `-Δ + a|x|^{-2}` on radial fields.
//!
//! The radial kernel is
//! `K_t(r,ρ) = (2t)^{-1} (rρ)^{-(d-2)/2} e^{-(r-ρ)²/4t} [e^{-z} I_ν(z)]`,
//! `z = rρ/2t`, acting as `u(r) = ∫ K_t(r,ρ) f(ρ) ρ^{d-1} dρ`.
//!
//! Rows whose kernel spans at least one log-grid cell use the grid's
//! quadrature weights directly. Narrower rows (small `t`, large `r`) are
//! discretized by matching the zeroth to second moments of the kernel in the
//! log variable on the three nearest nodes, which keeps every entry
//! nonnegative and reproduces the identity as `t → 0`.

use std::sync::Arc;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::exponents::{decay_admissible, Exponents, Parameters};
use crate::grid::{lq_norm, RadialField, RadialGrid};
use crate::quad;

/// Evaluator for `e^{-z} I_ν(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselScaled {
    pub nu: f64,
    /// Power series below this argument, asymptotic expansion above.
    pub z_switch: f64,
    ln_gamma_nu1: f64,
}

impl BesselScaled {
    pub fn new(nu: f64) -> Self {
        assert!(nu >= 0.0 && nu.is_finite(), "order must be a nonnegative number");
        BesselScaled {
            nu,
            z_switch: 20f64.max(2.0 * nu * nu),
            ln_gamma_nu1: ln_gamma(nu + 1.0),
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        debug_assert!(z >= 0.0);
        if z == 0.0 {
            return if self.nu == 0.0 { 1.0 } else { 0.0 };
        }
        if z >= self.z_switch {
            if let Some(v) = self.asymptotic(z) {
                return v;
            }
        }
        self.series(z)
    }

    fn series(&self, z: f64) -> f64 {
        let nu = self.nu;
        let mut term = (nu * (0.5 * z).ln() - z - self.ln_gamma_nu1).exp();
        let q = 0.25 * z * z;
        let mut sum = term;
        let mut k = 0.0;
        loop {
            term *= q / ((k + 1.0) * (nu + k + 1.0));
            sum += term;
            k += 1.0;
            if term <= 1e-17 * sum && k > 0.5 * z {
                return sum;
            }
            if term == 0.0 {
                return sum;
            }
        }
    }

    /// `(2πz)^{-1/2} Σ (-1)^k a_k(ν) / z^k`, truncated at the smallest term.
    fn asymptotic(&self, z: f64) -> Option<f64> {
        let mu4 = 4.0 * self.nu * self.nu;
        let mut term = 1.0f64;
        let mut sum = 1.0;
        for k in 1..400 {
            let kf = k as f64;
            let next = -term * (mu4 - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * z);
            if next.abs() > term.abs() && term != 0.0 {
                break;
            }
            sum += next;
            term = next;
            if term.abs() < 1e-17 * sum.abs() {
                return Some(sum / (2.0 * std::f64::consts::PI * z).sqrt());
            }
        }
        None
    }
}

pub fn bessel_i_scaled(nu: f64, z: f64) -> f64 {
    BesselScaled::new(nu).eval(z)
}

/// `K_t(r, ρ)` in the overflow-safe grouping.
pub fn heat_kernel(d: u32, bessel: &BesselScaled, t: f64, r: f64, rho: f64) -> f64 {
    let half = 0.5 * (d as f64 - 2.0);
    let z = r * rho / (2.0 * t);
    let g = (r - rho).powi(2) / (4.0 * t);
    (r * rho).powf(-half) * (-g).exp() * bessel.eval(z) / (2.0 * t)
}

/// Gaussian exponent beyond which kernel entries are dropped.
const CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
struct SparseRow {
    start: usize,
    vals: Vec<f64>,
}

impl SparseRow {
    fn end(&self) -> usize {
        self.start + self.vals.len()
    }
}

/// Extra weight on the last node standing in for `∫_{r_max}^∞`, valid for
/// fields that continue as `f(r_max)(r/r_max)^{-γ}`.
#[derive(Debug, Clone, PartialEq)]
struct TailColumn {
    gamma: f64,
    col: Vec<f64>,
}

/// Row-compressed nonnegative kernel matrix on a radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    rows: Vec<SparseRow>,
    tails: Vec<TailColumn>,
}

impl KernelMatrix {
    pub(crate) fn zero(n: usize) -> Self {
        KernelMatrix {
            rows: (0..n).map(|_| SparseRow { start: 0, vals: Vec::new() }).collect(),
            tails: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let r = &self.rows[i];
        if j >= r.start && j < r.end() {
            r.vals[j - r.start]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    pub fn min_entry(&self) -> f64 {
        let rows = self.rows.iter().flat_map(|r| r.vals.iter());
        let tails = self.tails.iter().flat_map(|t| t.col.iter());
        rows.chain(tails).fold(0.0f64, |a, &v| a.min(v))
    }

    pub fn tail_exponents(&self) -> Vec<f64> {
        self.tails.iter().map(|t| t.gamma).collect()
    }

    fn tail_for(&self, gamma: Option<f64>) -> Option<&[f64]> {
        let g = gamma?;
        self.tails
            .iter()
            .find(|t| (t.gamma - g).abs() <= 1e-12 * g.abs().max(1.0))
            .map(|t| t.col.as_slice())
    }

    pub fn apply_values(&self, f: &[f64], tail: Option<f64>) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(f.len(), n);
        let last = f[n - 1];
        let tcol = self.tail_for(tail);
        (0..n)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let r = &self.rows[i];
                let mut s: f64 = r.vals.iter().zip(&f[r.start..r.end()]).map(|(a, b)| a * b).sum();
                if let Some(c) = tcol {
                    s += c[i] * last;
                }
                s
            })
            .collect()
    }

    /// `self += c · other`, widening row supports as needed.
    pub(crate) fn add_scaled(&mut self, other: &KernelMatrix, c: f64) {
        assert_eq!(self.dim(), other.dim());
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            if b.vals.is_empty() {
                continue;
            }
            if a.vals.is_empty() {
                a.start = b.start;
                a.vals = b.vals.iter().map(|v| c * v).collect();
                continue;
            }
            let start = a.start.min(b.start);
            let end = a.end().max(b.end());
            if start != a.start || end != a.end() {
                let mut v = vec![0.0; end - start];
                v[a.start - start..a.end() - start].copy_from_slice(&a.vals);
                a.start = start;
                a.vals = v;
            }
            let off = b.start - a.start;
            for (k, x) in b.vals.iter().enumerate() {
                a.vals[off + k] += c * x;
            }
        }
        for tb in &other.tails {
            match self.tails.iter_mut().find(|t| t.gamma == tb.gamma) {
                Some(ta) => {
                    for (x, y) in ta.col.iter_mut().zip(&tb.col) {
                        *x += c * y;
                    }
                }
                None => self.tails.push(TailColumn {
                    gamma: tb.gamma,
                    col: tb.col.iter().map(|y| c * y).collect(),
                }),
            }
        }
    }
}

/// Quadrature realization of `e^{-t𝓛ₐ}` on one grid.
#[derive(Debug, Clone)]
pub struct SemigroupOperator {
    grid: Arc<RadialGrid>,
    pub t: f64,
    pub nu: f64,
    pub matrix: KernelMatrix,
}

impl SemigroupOperator {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
}

pub fn build_operator(grid: &Arc<RadialGrid>, ex: &Exponents, t: f64) -> Result<SemigroupOperator> {
    build_operator_with_tails(grid, ex, t, &[])
}

/// As [`build_operator`], adding a far-field closure for each listed tail
/// exponent. A field whose `tail_exponent` matches one of them sees the
/// kernel mass beyond `r_max` instead of having it dropped.
pub fn build_operator_with_tails(
    grid: &Arc<RadialGrid>,
    ex: &Exponents,
    t: f64,
    tails: &[f64],
) -> Result<SemigroupOperator> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("t = {t} must be positive")));
    }
    let bessel = BesselScaled::new(ex.nu);
    let matrix = kernel_matrix(grid, &bessel, t, tails);
    Ok(SemigroupOperator {
        grid: grid.clone(),
        t,
        nu: ex.nu,
        matrix,
    })
}

pub(crate) fn kernel_matrix(grid: &RadialGrid, bessel: &BesselScaled, t: f64, tails: &[f64]) -> KernelMatrix {
    let n = grid.len();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| build_row(grid, bessel, t, i))
        .collect();
    let tails = tails
        .iter()
        .map(|&gamma| TailColumn {
            gamma,
            col: (0..n)
                .into_par_iter()
                .map(|i| tail_weight(grid, bessel, t, i, gamma))
                .collect(),
        })
        .collect();
    KernelMatrix { rows, tails }
}

fn build_row(g: &RadialGrid, bessel: &BesselScaled, t: f64, i: usize) -> SparseRow {
    let r = g.nodes[i];
    let sigma = (2.0 * t).sqrt() / r;
    if sigma < g.h {
        if let Some(row) = narrow_row(g, bessel, t, i, sigma) {
            return row;
        }
    }
    resolved_row(g, bessel, t, i)
}

fn resolved_row(g: &RadialGrid, bessel: &BesselScaled, t: f64, i: usize) -> SparseRow {
    let n = g.len();
    let r = g.nodes[i];
    let reach = (4.0 * CUTOFF * t).sqrt();
    let x0 = g.r_min.ln();
    let lo = r - reach;
    let start = if lo <= g.r_min {
        0
    } else {
        (((lo.ln() - x0) / g.h).ceil().max(0.0) as usize).min(i)
    };
    let end = ((((r + reach).ln() - x0) / g.h).floor() as usize + 1).clamp(i + 1, n);
    let vals = (start..end)
        .map(|j| heat_kernel(g.d, bessel, t, r, g.nodes[j]) * g.weights[j])
        .collect();
    SparseRow { start, vals }
}

/// Three-node (two at the ends) weights matching the first moments of
/// `k(x) = K_t(r_i, e^x) e^{dx}` about `x_i`; `None` if any would be negative.
fn narrow_row(g: &RadialGrid, bessel: &BesselScaled, t: f64, i: usize, sigma: f64) -> Option<SparseRow> {
    let n = g.len();
    let r = g.nodes[i];
    let xi = g.x(i);
    let a = (xi - 12.0 * sigma).max(g.x(0));
    let b = (xi + 12.0 * sigma).min(g.x(n - 1));
    let df = g.d as f64;
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (x, w) in quad::composite_n(&quad::uniform_breaks(a, b, 4), 16) {
        let k = heat_kernel(g.d, bessel, t, r, x.exp()) * (df * x).exp() * w;
        let y = x - xi;
        m0 += k;
        m1 += k * y;
        m2 += k * y * y;
    }
    let h = g.h;
    let (start, vals) = if i == 0 {
        (0, vec![m0 - m1 / h, m1 / h])
    } else if i == n - 1 {
        (n - 2, vec![-m1 / h, m0 + m1 / h])
    } else {
        let c = m2 / (h * h);
        (i - 1, vec![0.5 * (c - m1 / h), m0 - c, 0.5 * (c + m1 / h)])
    };
    if vals.iter().all(|v| *v >= 0.0) {
        Some(SparseRow { start, vals })
    } else {
        None
    }
}

fn tail_weight(g: &RadialGrid, bessel: &BesselScaled, t: f64, i: usize, gamma: f64) -> f64 {
    let r = g.nodes[i];
    let reach = (4.0 * CUTOFF * t).sqrt();
    if r + reach <= g.r_max {
        return 0.0;
    }
    let hi = r.max(g.r_max) + reach;
    let panels = (((hi - g.r_max) / (2.0 * t).sqrt()).ceil() as usize).max(1);
    let df = g.d as f64;
    quad::composite(&quad::uniform_breaks(g.r_max, hi, panels))
        .into_iter()
        .map(|(rho, w)| {
            w * heat_kernel(g.d, bessel, t, r, rho) * (rho / g.r_max).powf(-gamma) * rho.powf(df - 1.0)
        })
        .sum()
}

/// `e^{-t𝓛ₐ} f`. The tail exponent is carried through unchanged: the
/// kernel decays like a Gaussian, so a power tail `r^{-γ}` is the slower of
/// the two and survives.
pub fn apply(op: &SemigroupOperator, f: &RadialField) -> Result<RadialField> {
    if *f.grid().as_ref() != *op.grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    let v = op.matrix.apply_values(&f.values, f.tail_exponent);
    Ok(RadialField::from_parts(op.grid.clone(), v, f.tail_exponent))
}

/// Pointwise `r^{-b} f`.
pub fn weight_field(f: &RadialField, b: f64) -> RadialField {
    let g = f.grid();
    let v = g.nodes.iter().zip(&f.values).map(|(r, x)| r.powf(-b) * x).collect();
    RadialField::from_parts(g.clone(), v, f.tail_exponent.map(|t| t + b))
}

/// `e^{-t𝓛ₐ}(|·|^{-b} f)`.
pub fn apply_smoothing(op: &SemigroupOperator, f: &RadialField, b: f64) -> Result<RadialField> {
    if !(b >= 0.0) {
        return Err(Error::InvalidInput(format!("b = {b} must be nonnegative")));
    }
    apply(op, &weight_field(f, b))
}

/// `‖e^{-t𝓛ₐ}f‖_q / (t^{-(d/2)(1/p-1/q)} ‖f‖_p)` for each `t`.
pub fn decay_ratio_series(
    p: &Parameters,
    pq: (f64, f64),
    f: &RadialField,
    t_list: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if !decay_admissible(p, pq)? {
        return Err(Error::InadmissiblePair { p: pq.0, q: pq.1 });
    }
    decay_ratio_series_diagnostic(p, pq, f, t_list)
}

/// Same series without the admissibility check, for observing how the
/// ratio behaves outside the admissible range.
pub fn decay_ratio_series_diagnostic(
    p: &Parameters,
    pq: (f64, f64),
    f: &RadialField,
    t_list: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let ex = crate::exponents::compute_exponents(p)?;
    let (pp, qq) = pq;
    let df = p.d as f64;
    let fp = lq_norm(f, pp);
    let tails: Vec<f64> = f.tail_exponent.into_iter().collect();
    t_list
        .iter()
        .map(|&t| {
            let op = build_operator_with_tails(f.grid(), &ex, t, &tails)?;
            let u = apply(&op, f)?;
            let scale = t.powf(-0.5 * df * (1.0 / pp - 1.0 / qq));
            Ok((t, lq_norm(&u, qq) / (scale * fp)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::compute_exponents;
    use crate::grid::{gaussian_field, make_grid};

    fn half_order(z: f64) -> f64 {
        (2.0 / (std::f64::consts::PI * z)).sqrt() * 0.5 * (-(-2.0 * z).exp_m1())
    }

    #[test]
    fn bessel_half_order_closed_form() {
        let b = BesselScaled::new(0.5);
        assert!((b.eval(1.0) - 0.344_951_313_888_244_6).abs() < 1e-15);
        for &z in &[1e-8, 1e-3, 0.5, 1.0, 7.0, 19.9, 20.1, 35.0, 1e3, 1e6, 1e8] {
            let rel = (b.eval(z) / half_order(z) - 1.0).abs();
            assert!(rel < 1e-12, "z={z} rel={rel}");
        }
    }

    #[test]
    fn bessel_origin() {
        assert_eq!(bessel_i_scaled(0.0, 0.0), 1.0);
        assert_eq!(bessel_i_scaled(1.3, 0.0), 0.0);
    }

    #[test]
    fn bessel_switch_continuity() {
        for &nu in &[0.0, 0.25, 1.0, 1.5, 2.5] {
            let b = BesselScaled::new(nu);
            for k in 0..=40 {
                let z = 20.0 + 0.5 * k as f64;
                let s = b.series(z);
                let a = b.asymptotic(z).unwrap();
                assert!((s / a - 1.0).abs() < 1e-13, "nu={nu} z={z}");
            }
        }
    }

    #[test]
    fn gaussian_kernel_rows() {
        let b = BesselScaled::new(0.5);
        for &t in &[0.01, 0.3, 2.0] {
            for &(r, rho) in &[(0.01, 0.02), (1.0, 1.3), (5.0, 4.0), (40.0, 41.0)] {
                let z: f64 = r * rho / (2.0 * t);
                let g = (4.0 * std::f64::consts::PI * t).powf(-1.5)
                    * 4.0
                    * std::f64::consts::PI
                    * (-(r - rho) * (r - rho) / (4.0 * t)).exp()
                    * (-(-2.0 * z).exp_m1())
                    / (2.0 * z);
                let k = heat_kernel(3, &b, t, r, rho);
                assert!((k / g - 1.0).abs() < 1e-10, "t={t} r={r} rho={rho}");
            }
        }
    }

    #[test]
    fn gaussian_in_gaussian_out() {
        let p = Parameters::new(3, 0.0, 1.0, 2.0, 0.0).unwrap();
        let ex = compute_exponents(&p).unwrap();
        let g = make_grid(3, 1e-5, 40.0, 512).unwrap();
        let f = gaussian_field(&g, 1.0, 1.0).unwrap();
        for &t in &[0.1, 1.0] {
            let op = build_operator(&g, &ex, t).unwrap();
            assert!(op.matrix.min_entry() >= 0.0);
            let u = apply(&op, &f).unwrap();
            let exact = gaussian_field(&g, (1.0 + t).powf(-1.5), 1.0 + t).unwrap();
            let err = lq_norm(&u.sub(&exact).unwrap(), 2.0) / lq_norm(&exact, 2.0);
            assert!(err < 1e-6, "t={t} err={err}");
        }
    }

    #[test]
    fn small_time_is_near_identity() {
        let p = Parameters::new(3, 0.5, 1.0, 2.0, 0.0).unwrap();
        let ex = compute_exponents(&p).unwrap();
        let g = make_grid(3, 1e-4, 50.0, 300).unwrap();
        let f = RadialField::from_fn(&g, |r| if r < 2.0 { (1.0 - (r - 1.0).powi(2)).max(0.0).powi(3) } else { 0.0 }, None)
            .unwrap();
        let op = build_operator(&g, &ex, 1e-4).unwrap();
        let u = apply(&op, &f).unwrap();
        assert!(lq_norm(&u.sub(&f).unwrap(), 2.0) / lq_norm(&f, 2.0) < 1e-3);
    }
}
