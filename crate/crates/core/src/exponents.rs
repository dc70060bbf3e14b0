//! Exponent algebra: roots of the indicial equation, criticality, the local
//! well-posedness regions and the auxiliary exponents used by the existence
//! and asymptotics arguments.
//!
//! Everything here is plain `f64`. Predicates compare exactly as written, with
//! no tolerance; open bounds that can be infinite are carried as
//! `f64::INFINITY` chosen explicitly, never produced by dividing by zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The problem data `(d, a, b, alpha, mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub d: u32,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub mu: f64,
}

impl Parameters {
    pub fn new(d: u32, a: f64, b: f64, alpha: f64, mu: f64) -> Result<Self> {
        let p = Parameters { d, a, b, alpha, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> f64 {
        self.d as f64
    }

    /// Smallest admissible coupling, `-(d-2)^2/4`.
    pub fn hardy_floor(&self) -> f64 {
        let h = (self.dim() - 2.0) / 2.0;
        -h * h
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameters(m));
        if self.d < 2 {
            return bad(format!("d = {} must be at least 2", self.d));
        }
        if !(self.a.is_finite() && self.b.is_finite() && self.alpha.is_finite()) {
            return bad("a, b and alpha must be finite".into());
        }
        if self.a < self.hardy_floor() {
            return bad(format!(
                "a = {} is below -(d-2)^2/4 = {}",
                self.a,
                self.hardy_floor()
            ));
        }
        if !(self.b >= 0.0 && self.b < 2.0f64.min(self.dim())) {
            return bad(format!("b = {} must satisfy 0 <= b < min(2, d)", self.b));
        }
        if self.alpha <= 0.0 {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.mu == -1.0 || self.mu == 0.0 || self.mu == 1.0) {
            return bad(format!("mu = {} must be -1, 0 or 1", self.mu));
        }
        Ok(())
    }

    /// Decay exponent `(2-b)/alpha` of scale-invariant data.
    pub fn scaling_exponent(&self) -> f64 {
        (2.0 - self.b) / self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub s1: f64,
    pub s2: f64,
    pub s1t: f64,
    pub s2t: f64,
    pub nu: f64,
    pub qc: f64,
}

pub fn compute_exponents(p: &Parameters) -> Result<Exponents> {
    p.validate()?;
    let d = p.dim();
    let half = (d - 2.0) / 2.0;
    // a >= floor is validated, but rounding can push the radicand a hair below 0.
    let nu = (half * half + p.a).max(0.0).sqrt();
    let s1 = half - nu;
    let s2 = half + nu;
    Ok(Exponents {
        s1,
        s2,
        s1t: s1.max(0.0),
        s2t: s2.min(d - 2.0),
        nu,
        qc: d * p.alpha / (2.0 - p.b),
    })
}

/// Open interval `(lo, hi)`; `hi` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpenInterval {
    pub lo: f64,
    #[serde(with = "crate::io::inf_f64")]
    pub hi: f64,
}

impl OpenInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        OpenInterval { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo < self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn intersect(&self, other: &OpenInterval) -> OpenInterval {
        OpenInterval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    /// Midpoint of the interval after mapping `x -> 1/x` (for intervals of
    /// exponents with `lo > 0`); an infinite end contributes `0`.
    pub fn reciprocal_midpoint(&self) -> f64 {
        let a = recip(self.lo);
        let b = recip(self.hi);
        1.0 / (0.5 * (a + b))
    }
}

fn recip(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

/// `num/den` for a bound that is `+inf` whenever `den <= 0`.
fn bound_or_inf(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// `d / s1t`, infinite when `s1t = 0`.
pub fn upper_q(p: &Parameters, e: &Exponents) -> f64 {
    bound_or_inf(p.dim(), e.s1t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Sub,
    Critical,
    Super,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionVerdict {
    pub criticality: Criticality,
    pub in_region_a: bool,
    pub in_region_b: bool,
    /// Admissible range of the auxiliary exponent `r` (in `r`, not `1/r`).
    pub admissible_r_interval: Option<OpenInterval>,
}

pub fn classify(p: &Parameters, q: f64) -> Result<RegionVerdict> {
    let e = compute_exponents(p)?;
    if !(q >= 1.0) {
        return Err(Error::InvalidInput(format!("q = {q} must be at least 1")));
    }
    let d = p.dim();
    let criticality = if q < e.qc {
        Criticality::Sub
    } else if q == e.qc {
        Criticality::Critical
    } else {
        Criticality::Super
    };
    let q_hi = upper_q(p, &e);
    let lower_a = (d * (p.alpha + 1.0) / (e.s2t + 2.0 - p.b)).max(e.qc);
    let in_region_a = lower_a < q && q < q_hi;
    let in_region_b = e.qc <= q && q < q_hi && q > d / (e.s2t + 2.0);
    let admissible_r_interval = if in_region_b {
        let x = aux_interval(p, &e, q);
        if x.is_empty() {
            None
        } else {
            Some(OpenInterval::new(d / x.hi, bound_or_inf(d, x.lo)))
        }
    } else {
        None
    };
    Ok(RegionVerdict {
        criticality,
        in_region_a,
        in_region_b,
        admissible_r_interval,
    })
}

/// Interval for `d/r`: the chain `s1t < d/r < d/q < b + d(a+1)/r < s2t+2`
/// intersected with `beta (alpha+1) < 1`.
fn aux_interval(p: &Parameters, e: &Exponents, q: f64) -> OpenInterval {
    let d = p.dim();
    let a1 = p.alpha + 1.0;
    let chain = OpenInterval::new(
        e.s1t.max((d / q - p.b) / a1),
        ((e.s2t + 2.0 - p.b) / a1).min(d / q),
    );
    chain.intersect(&OpenInterval::new(d / q - 2.0 / a1, f64::INFINITY))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxPair {
    pub r: f64,
    pub beta: f64,
}

pub fn find_aux_r(p: &Parameters, q: f64) -> Result<AuxPair> {
    let verdict = classify(p, q)?;
    if !verdict.in_region_b {
        return Err(Error::NoAdmissibleR(format!("q = {q} lies outside region B")));
    }
    let e = compute_exponents(p)?;
    let x = aux_interval(p, &e, q);
    if x.is_empty() {
        return Err(Error::NoAdmissibleR(format!(
            "d/r interval ({}, {}) is empty",
            x.lo, x.hi
        )));
    }
    let d = p.dim();
    let r = d / (0.5 * (x.lo + x.hi));
    let pair = AuxPair {
        r,
        beta: 0.5 * d * (1.0 / q - 1.0 / r),
    };
    if !aux_chain_holds(p, &e, q, &pair) {
        return Err(Error::NoAdmissibleR(format!("midpoint r = {r} fails the chain")));
    }
    Ok(pair)
}

/// `s1t < d/r < d/q < b + d(alpha+1)/r < s2t+2` and `beta(alpha+1) < 1`.
pub fn aux_chain_holds(p: &Parameters, e: &Exponents, q: f64, pair: &AuxPair) -> bool {
    let d = p.dim();
    let dr = d / pair.r;
    let top = p.b + d * (p.alpha + 1.0) / pair.r;
    e.s1t < dr
        && dr < d / q
        && d / q < top
        && top < e.s2t + 2.0
        && pair.beta * (p.alpha + 1.0) < 1.0
}

/// `s1t < d/q <= d/p < s2t + 2`. Infinite exponents are allowed.
pub fn decay_admissible(p: &Parameters, pq: (f64, f64)) -> Result<bool> {
    let e = compute_exponents(p)?;
    let d = p.dim();
    let (dp, dq) = (d / pq.0, d / pq.1);
    Ok(e.s1t < dq && dq <= dp && dp < e.s2t + 2.0)
}

/// `s1t < d/q <= b + d/p < s2t + 2`.
pub fn smoothing_admissible(p: &Parameters, pq: (f64, f64), b: f64) -> Result<bool> {
    let e = compute_exponents(p)?;
    let d = p.dim();
    let (dp, dq) = (d / pq.0, d / pq.1);
    Ok(e.s1t < dq && dq <= b + dp && b + dp < e.s2t + 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma11Set {
    pub alpha1: f64,
    pub r1: f64,
    pub r2: f64,
    pub r12: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta12: f64,
}

/// Open range for `alpha1` given `alpha`.
pub fn alpha1_range(p: &Parameters) -> Result<OpenInterval> {
    let e = compute_exponents(p)?;
    let lo = ((2.0 - p.b) / (e.s2t + 2.0))
        .max(bound_or_inf(e.s1t * p.alpha, e.s2t + 2.0 - p.b - e.s1t * p.alpha));
    Ok(OpenInterval::new(lo, p.alpha))
}

/// Admissible range of `r1` for the given `alpha1`.
pub fn r1_interval(p: &Parameters, alpha1: f64) -> Result<OpenInterval> {
    let e = compute_exponents(p)?;
    let d = p.dim();
    let lo = ((alpha1 + 1.0) * d / (e.s2t + 2.0 - p.b)).max(d * alpha1 / (2.0 - p.b));
    let hi = bound_or_inf(d * alpha1 * (alpha1 + 1.0), 2.0 - p.b * (alpha1 + 1.0))
        .min(bound_or_inf(d * alpha1, e.s1t * p.alpha));
    Ok(OpenInterval::new(lo, hi))
}

fn lemma11_pre(p: &Parameters, alpha1: f64) -> Result<()> {
    let e = compute_exponents(p)?;
    let range = alpha1_range(p)?;
    let alpha_hi = bound_or_inf(2.0 - p.b, e.s1t);
    let alpha_lo = (2.0 - p.b) / (e.s2t + 2.0);
    if !(range.contains(alpha1) && alpha_lo < p.alpha && p.alpha < alpha_hi) {
        return Err(Error::EmptyInterval(format!(
            "alpha1 = {alpha1} must lie in ({}, {}) with alpha in ({alpha_lo}, {alpha_hi})",
            range.lo, range.hi
        )));
    }
    Ok(())
}

pub fn lemma11_construct(p: &Parameters, alpha1: f64) -> Result<Lemma11Set> {
    lemma11_pre(p, alpha1)?;
    let iv = r1_interval(p, alpha1)?;
    if iv.is_empty() {
        return Err(Error::EmptyInterval(format!(
            "r1 interval ({}, {}) is empty",
            iv.lo, iv.hi
        )));
    }
    lemma11_from_r1(p, alpha1, iv.reciprocal_midpoint())
}

/// Builds the set for a prescribed `r1` and validates all properties.
pub fn lemma11_from_r1(p: &Parameters, alpha1: f64, r1: f64) -> Result<Lemma11Set> {
    lemma11_pre(p, alpha1)?;
    let iv = r1_interval(p, alpha1)?;
    if !iv.contains(r1) {
        return Err(Error::EmptyInterval(format!(
            "r1 = {r1} outside ({}, {})",
            iv.lo, iv.hi
        )));
    }
    let set = lemma11_values(p, alpha1, r1);
    let report = lemma11_check(p, &set)?;
    if let Some(bad) = report.first_failure() {
        return Err(Error::EmptyInterval(format!("property {bad} fails at r1 = {r1}")));
    }
    Ok(set)
}

fn lemma11_values(p: &Parameters, alpha1: f64, r1: f64) -> Lemma11Set {
    let d = p.dim();
    let alpha = p.alpha;
    let r2 = alpha / alpha1 * r1;
    let beta1 = (2.0 - p.b) / (2.0 * alpha1) - d / (2.0 * r1);
    let beta2 = (2.0 - p.b) / (2.0 * alpha) - d / (2.0 * r2);
    let r12 = (alpha + 1.0) / (alpha1 + 1.0) * r1;
    let beta12 = (alpha1 + 1.0) / (alpha + 1.0) * beta1;
    Lemma11Set {
        alpha1,
        r1,
        r2,
        r12,
        beta1,
        beta2,
        beta12,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma11Report {
    /// Strict inequalities, by label.
    pub checks: Vec<(String, bool)>,
    pub identity_r2: f64,
    pub identity_mixed: f64,
}

impl Lemma11Report {
    pub fn all_hold(&self, tol: f64) -> bool {
        self.first_failure().is_none() && self.identity_r2.abs() < tol && self.identity_mixed.abs() < tol
    }

    fn first_failure(&self) -> Option<&str> {
        if self.identity_r2.abs() >= 1e-10 {
            return Some("identity_r2");
        }
        if self.identity_mixed.abs() >= 1e-10 {
            return Some("identity_mixed");
        }
        self.checks.iter().find(|c| !c.1).map(|c| c.0.as_str())
    }
}

/// Evaluates the positivity, chain, balance and weight conditions together with the companion claims on
/// `r1 < r2`, the two exponent chains, and the two pairs of bounds.
pub fn lemma11_check(p: &Parameters, s: &Lemma11Set) -> Result<Lemma11Report> {
    let e = compute_exponents(p)?;
    let d = p.dim();
    let (alpha, alpha1, b) = (p.alpha, s.alpha1, p.b);
    let top = e.s2t + 2.0;
    let mix = 0.5 * d * ((alpha + 1.0) / s.r12 - 1.0 / s.r1);
    let mut checks = Vec::new();
    let mut push = |name: &str, ok: bool| checks.push((name.to_string(), ok));

    push("positive:beta1", s.beta1 > 0.0);
    push("positive:beta2", s.beta2 > 0.0);
    push("positive:beta12", s.beta12 > 0.0);

    let c12 = b + (alpha + 1.0) * d / s.r12;
    push("chain:r1_r12", e.s1t < d / s.r1 && d / s.r1 < c12 && c12 < top);
    let c2 = b + (alpha + 1.0) * d / s.r2;
    push("chain:r2", e.s1t < d / s.r2 && d / s.r2 < c2 && c2 < top);

    let m2 = d * alpha / (2.0 * s.r2) + b / 2.0;
    push("balance:equal", (mix + b / 2.0 - m2).abs() < 1e-12 * (1.0 + m2.abs()));
    push("balance:below_one", m2 < 1.0);

    push("weight:beta2", s.beta2 * (alpha + 1.0) < 1.0);
    push("weight:beta12", s.beta12 * (alpha + 1.0) < 1.0);

    push("companion:r1<r2", s.r1 < s.r2);
    let ca1 = b + (alpha1 + 1.0) * d / s.r1;
    push("companion:chain_r1", e.s1t < d / s.r1 && d / s.r1 < ca1 && ca1 < top);
    push("companion:chain_r2", e.s1t < d / s.r2 && d / s.r2 < c2 && c2 < top);
    push("companion:bound_r1", d * alpha1 / (2.0 * s.r1) + b / 2.0 < 1.0);
    push("companion:bound_r2", m2 < 1.0);
    push("companion:beta1", s.beta1 * (alpha1 + 1.0) < 1.0);
    push("companion:beta2", s.beta2 * (alpha + 1.0) < 1.0);

    let identity_r2 = s.beta2 - d * alpha / (2.0 * s.r2) - b / 2.0 - s.beta2 * (alpha + 1.0) + 1.0;
    let identity_mixed = s.beta1 - mix - b / 2.0 - s.beta12 * (alpha + 1.0) + 1.0;
    Ok(Lemma11Report {
        checks,
        identity_r2,
        identity_mixed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma13Set {
    pub delta: f64,
    pub theta: f64,
    pub r_tilde: f64,
    pub beta_tilde: f64,
}

pub fn theta_of_delta(s: &Lemma11Set, p: &Parameters, delta: f64) -> f64 {
    let (alpha, alpha1) = (p.alpha, s.alpha1);
    1.0 / (alpha + 1.0)
        + 2.0 * alpha1 * alpha * delta / ((2.0 - p.b) * (alpha - alpha1) * (alpha + 1.0))
}

fn lemma13_values(s: &Lemma11Set, p: &Parameters, delta: f64) -> Lemma13Set {
    let theta = theta_of_delta(s, p, delta);
    Lemma13Set {
        delta,
        theta,
        r_tilde: 1.0 / (theta / s.r1 + (1.0 - theta) / s.r2),
        beta_tilde: theta * s.beta1 + (1.0 - theta) * s.beta2,
    }
}

/// Residual of condition (ii); zero in exact arithmetic.
pub fn lemma13_residual(s: &Lemma11Set, p: &Parameters, t: &Lemma13Set) -> f64 {
    let d = p.dim();
    let a1 = p.alpha + 1.0;
    s.beta1 + t.delta - 0.5 * d * (a1 / t.r_tilde - 1.0 / s.r1) - p.b / 2.0 - t.beta_tilde * a1
        + 1.0
}

/// Conditions (i) and (iii), plus `0 < theta < 1`.
pub fn lemma13_conditions(s: &Lemma11Set, p: &Parameters, t: &Lemma13Set) -> Result<bool> {
    let e = compute_exponents(p)?;
    let d = p.dim();
    let a1 = p.alpha + 1.0;
    let top = p.b + d * a1 / t.r_tilde;
    let cond_i = e.s1t < d / s.r1 && d / s.r1 < top && top < e.s2t + 2.0;
    let cond_iii =
        0.5 * d * (a1 / t.r_tilde - 1.0 / s.r1) + p.b / 2.0 < 1.0 && t.beta_tilde * a1 < 1.0;
    Ok(cond_i && cond_iii && t.theta > 0.0 && t.theta < 1.0)
}

/// Supremum of admissible `delta`, by bisection to relative width `1e-9`.
pub fn lemma13_delta0(s: &Lemma11Set, p: &Parameters) -> Result<f64> {
    // theta reaches 1 here; beyond it the interpolation leaves [r1, r2].
    let cap = (2.0 - p.b) * (p.alpha - s.alpha1) / (2.0 * s.alpha1);
    let ok = |delta: f64| lemma13_conditions(s, p, &lemma13_values(s, p, delta));
    if ok(cap)? {
        return Ok(cap);
    }
    let (mut lo, mut hi) = (0.0, cap);
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn lemma13_theta(s: &Lemma11Set, p: &Parameters, delta: f64) -> Result<Lemma13Set> {
    let t = lemma13_values(s, p, delta);
    if !(delta > 0.0) || !lemma13_conditions(s, p, &t)? {
        return Err(Error::DeltaTooLarge {
            delta,
            delta0: lemma13_delta0(s, p)?,
        });
    }
    Ok(t)
}

/// Iterates `1/r_{k+1} = 1/r_k - ((2-b)/d - alpha/r_k)/2` until the step would
/// cross `s1t/d`, then closes with the midpoint of `(s1t/d, 1/r_k)`. The
/// returned list starts with `r0`.
pub fn bootstrap_r_sequence(p: &Parameters, r0: f64) -> Result<Vec<f64>> {
    let e = compute_exponents(p)?;
    let d = p.dim();
    if !(r0 > e.qc) {
        return Err(Error::InvalidInput(format!(
            "r0 = {r0} must exceed q_c = {}",
            e.qc
        )));
    }
    if !(e.s1t < d / r0 && d / r0 < e.s2t + 2.0) {
        return Err(Error::InvalidInput(format!(
            "d/r0 = {} must lie in ({}, {})",
            d / r0,
            e.s1t,
            e.s2t + 2.0
        )));
    }
    let floor = e.s1t / d;
    let cap = bootstrap_length_bound(p, r0)?.floor() as usize + 1;
    let mut out = vec![r0];
    let mut x = 1.0 / r0;
    loop {
        let next = x * (1.0 + 0.5 * p.alpha) - (2.0 - p.b) / (2.0 * d);
        if next > floor && out.len() < cap {
            x = next;
            out.push(1.0 / x);
        } else {
            x = 0.5 * (floor + x);
            out.push(1.0 / x);
            return Ok(out);
        }
    }
}

pub fn bootstrap_length_bound(p: &Parameters, r0: f64) -> Result<f64> {
    let gap = (2.0 - p.b) / p.dim() - p.alpha / r0;
    if !(gap > 0.0) {
        return Err(Error::InvalidInput(format!("r0 = {r0} gives no decrease")));
    }
    Ok(1.0 + 2.0 / gap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Region boundary curves in the `(alpha, 1/q)` plane. Verticals span
/// `1/q` in `[0, 1]`.
pub fn region_boundary_sample(d: u32, a: f64, b: f64, alpha_grid: &[f64]) -> Result<Vec<Polyline>> {
    let p = Parameters::new(d, a, b, 1.0, 0.0)?;
    let e = compute_exponents(&p)?;
    let alpha_max = bound_or_inf(2.0 - b, e.s1t);
    if alpha_grid.windows(2).any(|w| !(w[0] < w[1]))
        || alpha_grid.iter().any(|&x| !(x > 0.0 && x < alpha_max))
    {
        return Err(Error::InvalidInput(format!(
            "alpha grid must be strictly increasing inside (0, {alpha_max})"
        )));
    }
    let df = d as f64;
    let curve = |label: &str, f: &dyn Fn(f64) -> f64| Polyline {
        label: label.to_string(),
        points: alpha_grid.iter().map(|&x| (x, f(x))).collect(),
    };
    let (first, last) = match (alpha_grid.first(), alpha_grid.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::InvalidInput("alpha grid is empty".into())),
    };
    let horizontal = |label: &str, y: f64| Polyline {
        label: label.to_string(),
        points: vec![(first, y), (last, y)],
    };
    let vertical = |label: &str, x: f64| Polyline {
        label: label.to_string(),
        points: vec![(x, 0.0), (x, 1.0)],
    };
    let mut out = vec![
        curve("critical", &|x| (2.0 - b) / (df * x)),
        curve("boundary", &|x| (e.s2t + 2.0 - b) / (df * (x + 1.0))),
        horizontal("lower", e.s1t / df),
        horizontal("upper", (e.s2t + 2.0) / df),
    ];
    if e.s2t > 0.0 {
        out.push(vertical("vertical_s2", (2.0 - b) / e.s2t));
    }
    if e.s1t > 0.0 {
        out.push(vertical("vertical_s1", (2.0 - b) / e.s1t));
    }
    Ok(out)
}
