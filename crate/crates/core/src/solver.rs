//! Mild solutions by Picard iteration on a time mesh.
//!
//! One step of the discrete Duhamel map reads
//! `w_{j+1} = P_h w_j + A_h F_j + B_h F_{j+1}`, `u_j = e^{-(t_j-t_0)𝓛}u_0 + μ w_j`,
//! where `F = r^{-b}|u|^α u` is interpolated linearly in time and
//! `A_h = ∫_0^h P_τ (τ/h) dτ`, `B_h = ∫_0^h P_τ (1-τ/h) dτ` are assembled from
//! kernel matrices by Gauss-Legendre quadrature in `s = (τ/h)^{1/2}`.
//! The iteration is of Jacobi type: each sweep evaluates `F` on the previous
//! iterate only, so its distances are those of the map itself.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::analysis::{fit_power_law, RateFit};
use crate::error::{Error, Result};
use crate::exponents::{compute_exponents, find_aux_r, Parameters};
use crate::grid::{dilate, lq_norm, norm_of, RadialField, RadialGrid};
use crate::quad;
use crate::semigroup::{kernel_matrix, BesselScaled, KernelMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Final time of a single solve; first horizon of a chained one.
    #[serde(rename = "T")]
    pub t_final: f64,
    /// Steps per segment.
    pub steps: usize,
    /// Grading exponent of the first segment, `t_j = T (j/M)^κ`.
    pub kappa: f64,
    pub picard_tol: f64,
    pub max_picard: usize,
    /// Overrides the sign in `Parameters` when set.
    pub mu: Option<f64>,
    pub q_report: f64,
    /// Norm of the contraction metric; derived from the critical exponent when absent.
    pub r_aux: Option<f64>,
    pub beta_aux: Option<f64>,
    /// Largest accepted `sup_t t^β ‖e^{-t𝓛}φ‖_r`.
    pub gate_threshold: f64,
    /// Largest accepted Picard contraction factor for gated runs.
    pub gate_factor: f64,
    pub require_convergence: bool,
    /// Probe nodes for the Duhamel residual.
    pub probes: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            t_final: 1.0,
            steps: 16,
            kappa: 2.0,
            picard_tol: 1e-8,
            max_picard: 60,
            mu: None,
            q_report: 6.0,
            r_aux: None,
            beta_aux: None,
            gate_threshold: 0.5,
            gate_factor: 0.9,
            require_convergence: true,
            probes: 8,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.into()));
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return bad("T must be positive and finite");
        }
        if self.steps < 2 {
            return bad("at least two steps are required");
        }
        if !(self.kappa >= 1.0) {
            return bad("kappa must be at least 1");
        }
        if !(self.picard_tol > 0.0) {
            return bad("picard_tol must be positive");
        }
        if self.max_picard == 0 {
            return bad("max_picard must be positive");
        }
        if let Some(mu) = self.mu {
            if !(mu == -1.0 || mu == 0.0 || mu == 1.0) {
                return bad("mu must be -1, 0 or 1");
            }
        }
        if !(self.q_report >= 1.0) {
            return bad("q_report must be at least 1");
        }
        Ok(())
    }

    /// Graded mesh `0 = t_0 < … < t_M = T`.
    pub fn time_nodes(&self) -> Vec<f64> {
        graded_mesh(self.t_final, self.steps, self.kappa)
    }

    pub fn sign(&self, p: &Parameters) -> f64 {
        self.mu.unwrap_or(p.mu)
    }

    /// `(r, β)` of the contraction metric.
    pub fn aux(&self, p: &Parameters) -> Result<(f64, f64)> {
        let lift = (2.0 - p.b) / (2.0 * p.alpha);
        match self.r_aux {
            Some(r) => Ok((r, self.beta_aux.unwrap_or(lift - 0.5 * p.dim() / r))),
            None => {
                let e = compute_exponents(p)?;
                let pair = find_aux_r(p, e.qc)?;
                Ok((pair.r, pair.beta))
            }
        }
    }
}

fn graded_mesh(t: f64, m: usize, kappa: f64) -> Vec<f64> {
    (0..=m)
        .map(|j| if j == m { t } else { t * (j as f64 / m as f64).powf(kappa) })
        .collect()
}

fn uniform_mesh(a: f64, b: f64, m: usize) -> Vec<f64> {
    (0..=m)
        .map(|j| if j == m { b } else { a + (b - a) * j as f64 / m as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    /// Relative distances `d(u^{k+1}, u^k) / sup_j t_j^β‖u^{k+1}_j‖_r`.
    pub distances: Vec<f64>,
    /// Ratio of the first two distances; zero when one sweep sufficed.
    pub contraction_factor: f64,
    pub converged: bool,
}

/// A run over a sequence of time nodes.
#[derive(Debug, Clone)]
pub struct Solution {
    pub params: Parameters,
    pub mu: f64,
    pub r_aux: f64,
    pub beta_aux: f64,
    pub q_report: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<RadialField>,
    /// `e^{-t𝓛ₐ}φ` at the same nodes.
    pub linear: Vec<RadialField>,
    /// Running `sup_{s≤t_j} s^β ‖u(s)‖_r`.
    pub weighted_norm_history: Vec<f64>,
    pub picard_report: Vec<PicardReport>,
    /// `(t, ‖u - Φ(u)‖_q / ‖u‖_q)` at the probe nodes of each segment.
    pub duhamel_residual: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub t: f64,
    pub norm_q: f64,
    pub norm_r: f64,
    pub weighted_r: f64,
}

impl Solution {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.snapshots[0].grid()
    }

    pub fn final_state(&self) -> &RadialField {
        self.snapshots.last().expect("nonempty run")
    }

    /// Index of the node equal to `t` up to relative rounding.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1e-300))
    }

    pub fn at(&self, t: f64) -> Option<&RadialField> {
        self.index_of(t).map(|i| &self.snapshots[i])
    }

    pub fn max_duhamel_residual(&self) -> f64 {
        self.duhamel_residual.iter().fold(0.0, |a, r| a.max(r.1))
    }

    /// `sup_{t>0} t^β ‖u(t)‖_r` over the run.
    pub fn weighted_sup(&self) -> f64 {
        self.weighted_norm_history.last().copied().unwrap_or(0.0)
    }

    pub fn norm_history(&self) -> Vec<NormRow> {
        self.times
            .iter()
            .zip(&self.snapshots)
            .map(|(&t, u)| {
                let norm_r = lq_norm(u, self.r_aux);
                NormRow {
                    t,
                    norm_q: lq_norm(u, self.q_report),
                    norm_r,
                    weighted_r: if t > 0.0 { t.powf(self.beta_aux) * norm_r } else { 0.0 },
                }
            })
            .collect()
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("t,norm_q,norm_r,weighted_r\n");
        for row in self.norm_history() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                crate::io::fmt17(row.t),
                crate::io::fmt17(row.norm_q),
                crate::io::fmt17(row.norm_r),
                crate::io::fmt17(row.weighted_r)
            ));
        }
        s
    }
}

/// `r^{-b} |u|^α u`.
pub fn nonlinearity(u: &RadialField, p: &Parameters) -> RadialField {
    let g = u.grid();
    let v = g
        .nodes
        .iter()
        .zip(&u.values)
        .map(|(&r, &x)| r.powf(-p.b) * x.abs().powf(p.alpha) * x)
        .collect();
    let tail = u.tail_exponent.map(|t| p.b + (p.alpha + 1.0) * t);
    RadialField::from_parts(g.clone(), v, tail)
}

/// Panels in `s = (τ/h)^{1/2}` for the step integrals, refined toward `τ = 0`
/// where rows near the origin change fastest.
const S_BREAKS: [f64; 7] = [0.0, 1.0 / 32.0, 1.0 / 16.0, 0.125, 0.25, 0.5, 1.0];
const S_POINTS: usize = 4;

/// Kernel matrices shared by every solve on one grid and parameter set.
pub struct Engine {
    grid: Arc<RadialGrid>,
    bessel: BesselScaled,
    tails: Vec<f64>,
    p_cache: Mutex<HashMap<u64, Arc<KernelMatrix>>>,
    ab_cache: Mutex<HashMap<u64, Arc<(KernelMatrix, KernelMatrix)>>>,
}

impl Engine {
    /// `tails` lists the far-field exponents that get a closure column.
    pub fn new(grid: &Arc<RadialGrid>, p: &Parameters, tails: &[f64]) -> Result<Self> {
        let e = compute_exponents(p)?;
        if grid.d != p.d {
            return Err(Error::InvalidInput(format!(
                "grid dimension {} differs from d = {}",
                grid.d, p.d
            )));
        }
        Ok(Engine {
            grid: grid.clone(),
            bessel: BesselScaled::new(e.nu),
            tails: tails.to_vec(),
            p_cache: Mutex::new(HashMap::new()),
            ab_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Engine with closures for a field with tail `γ` and its nonlinearity.
    pub fn for_field(phi: &RadialField, p: &Parameters) -> Result<Self> {
        let tails: Vec<f64> = match phi.tail_exponent {
            Some(g) => vec![g, p.b + (p.alpha + 1.0) * g],
            None => Vec::new(),
        };
        Engine::new(phi.grid(), p, &tails)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn propagator(&self, t: f64) -> Arc<KernelMatrix> {
        let key = t.to_bits();
        if let Some(m) = self.p_cache.lock().unwrap().get(&key) {
            return m.clone();
        }
        let m = Arc::new(kernel_matrix(&self.grid, &self.bessel, t, &self.tails));
        self.p_cache.lock().unwrap().insert(key, m.clone());
        m
    }

    /// `(A_h, B_h)`.
    pub fn step_integrals(&self, h: f64) -> Arc<(KernelMatrix, KernelMatrix)> {
        let key = h.to_bits();
        if let Some(m) = self.ab_cache.lock().unwrap().get(&key) {
            return m.clone();
        }
        let n = self.grid.len();
        let mut a = KernelMatrix::zero(n);
        let mut b = KernelMatrix::zero(n);
        for (s, w) in quad::composite_n(&S_BREAKS, S_POINTS) {
            let k = kernel_matrix(&self.grid, &self.bessel, h * s * s, &self.tails);
            // dτ = 2hs ds
            let jac = 2.0 * h * s * w;
            a.add_scaled(&k, jac * s * s);
            b.add_scaled(&k, jac * (1.0 - s * s));
        }
        let m = Arc::new((a, b));
        self.ab_cache.lock().unwrap().insert(key, m.clone());
        m
    }

    pub fn apply(&self, m: &KernelMatrix, f: &RadialField) -> RadialField {
        RadialField::from_parts(
            self.grid.clone(),
            m.apply_values(&f.values, f.tail_exponent),
            f.tail_exponent,
        )
    }

    pub fn flow(&self, t: f64, f: &RadialField) -> RadialField {
        if t == 0.0 {
            return f.clone();
        }
        self.apply(&self.propagator(t), f)
    }
}

fn axpy(y: &mut RadialField, c: f64, x: &RadialField) {
    for (a, b) in y.values.iter_mut().zip(&x.values) {
        *a += c * b;
    }
}

struct Segment {
    times: Vec<f64>,
    u: Vec<RadialField>,
    report: PicardReport,
    residual: Vec<(f64, f64)>,
}

struct Metric {
    r: f64,
    beta: f64,
}

impl Metric {
    fn weighted(&self, t: f64, v: &RadialField) -> f64 {
        if t > 0.0 {
            t.powf(self.beta) * norm_of(v.grid(), &v.values, self.r)
        } else {
            0.0
        }
    }
}

fn solve_segment(
    eng: &Engine,
    u0: &RadialField,
    times: &[f64],
    p: &Parameters,
    mu: f64,
    cfg: &SolveConfig,
    metric: &Metric,
) -> Result<Segment> {
    let n = times.len();
    let t0 = times[0];
    let lin: Vec<RadialField> = times.iter().map(|&t| eng.flow(t - t0, u0)).collect();
    let mut u = lin.clone();
    let mut report = PicardReport {
        distances: Vec::new(),
        contraction_factor: 0.0,
        converged: true,
    };
    let mut forcing: Vec<RadialField> = Vec::new();
    if mu != 0.0 {
        report.converged = false;
        let ops: Vec<_> = times
            .windows(2)
            .map(|w| {
                let h = w[1] - w[0];
                (eng.propagator(h), eng.step_integrals(h))
            })
            .collect();
        let mut growing = 0;
        for _ in 0..cfg.max_picard {
            forcing = u.iter().map(|x| nonlinearity(x, p)).collect();
            let mut next = Vec::with_capacity(n);
            next.push(u0.clone());
            let mut w = RadialField::zeros(eng.grid());
            w.tail_exponent = forcing[0].tail_exponent;
            for j in 0..n - 1 {
                let (pm, ab) = &ops[j];
                let mut nw = eng.apply(pm, &w);
                axpy(&mut nw, 1.0, &eng.apply(&ab.0, &forcing[j]));
                axpy(&mut nw, 1.0, &eng.apply(&ab.1, &forcing[j + 1]));
                let mut uj = lin[j + 1].clone();
                axpy(&mut uj, mu, &nw);
                next.push(uj);
                w = nw;
            }
            let mut dist = 0.0f64;
            let mut scale = 0.0f64;
            for j in 1..n {
                let diff = next[j].sub(&u[j])?;
                dist = dist.max(metric.weighted(times[j], &diff));
                scale = scale.max(metric.weighted(times[j], &next[j]));
            }
            let rel = if scale > 0.0 { dist / scale } else { dist };
            u = next;
            if !rel.is_finite() || !scale.is_finite() || scale > 1e200 {
                return Err(Error::NoConvergence {
                    factor: f64::INFINITY,
                    distance: rel,
                });
            }
            let k = report.distances.len();
            if k >= 1 {
                let ratio = rel / report.distances[k - 1];
                if k == 1 {
                    report.contraction_factor = ratio;
                }
                // Volterra iterations may grow for a while and still converge;
                // only growth at order-one distances counts as divergence.
                growing = if ratio >= 1.0 && rel > 0.1 { growing + 1 } else { 0 };
            }
            report.distances.push(rel);
            if rel < cfg.picard_tol {
                report.converged = true;
                break;
            }
            if growing >= 3 {
                return Err(Error::NoConvergence {
                    factor: rel / report.distances[k - 1],
                    distance: rel,
                });
            }
        }
        if !report.converged {
            let k = report.distances.len();
            let factor = if k >= 2 {
                report.distances[k - 1] / report.distances[k - 2]
            } else {
                f64::NAN
            };
            return Err(Error::NoConvergence {
                factor,
                distance: report.distances[k - 1],
            });
        }
        forcing = u.iter().map(|x| nonlinearity(x, p)).collect();
    }
    let residual = duhamel_residual(eng, u0, times, &u, &forcing, mu, cfg);
    Ok(Segment {
        times: times.to_vec(),
        u,
        report,
        residual,
    })
}

/// Compares the iterate with the integral equation written over the whole
/// history, `u(t_n) = P_{t_n-t_0}u_0 + μ Σ_k P_{t_n-t_{k+1}}(A_k F_k + B_k F_{k+1})`,
/// with every propagator built directly rather than by composition.
fn duhamel_residual(
    eng: &Engine,
    u0: &RadialField,
    times: &[f64],
    u: &[RadialField],
    forcing: &[RadialField],
    mu: f64,
    cfg: &SolveConfig,
) -> Vec<(f64, f64)> {
    let n = times.len();
    let probes = cfg.probes.clamp(1, n - 1);
    let mut idx: Vec<usize> = (1..=probes)
        .map(|k| ((k * (n - 1)) as f64 / probes as f64).round() as usize)
        .collect();
    idx.dedup();
    idx.into_iter()
        .map(|m| {
            let mut v = eng.flow(times[m] - times[0], u0);
            if mu != 0.0 {
                for k in 0..m {
                    let ab = eng.step_integrals(times[k + 1] - times[k]);
                    let mut g = eng.apply(&ab.0, &forcing[k]);
                    axpy(&mut g, 1.0, &eng.apply(&ab.1, &forcing[k + 1]));
                    let g = eng.flow(times[m] - times[k + 1], &g);
                    axpy(&mut v, mu, &g);
                }
            }
            let num = lq_norm(&u[m].sub(&v).unwrap_or_else(|_| v.clone()), cfg.q_report);
            let den = lq_norm(&u[m], cfg.q_report);
            (times[m], if den > 0.0 { num / den } else { num })
        })
        .collect()
}

fn check_data(phi: &RadialField, p: &Parameters, cfg: &SolveConfig) -> Result<()> {
    p.validate()?;
    cfg.validate()?;
    if phi.grid().d != p.d {
        return Err(Error::InvalidInput(format!(
            "field grid has d = {} but parameters have d = {}",
            phi.grid().d,
            p.d
        )));
    }
    Ok(())
}

struct Builder {
    params: Parameters,
    mu: f64,
    metric: Metric,
    q_report: f64,
    times: Vec<f64>,
    snapshots: Vec<RadialField>,
    reports: Vec<PicardReport>,
    residual: Vec<(f64, f64)>,
}

impl Builder {
    fn new(p: &Parameters, cfg: &SolveConfig, phi: &RadialField) -> Result<Self> {
        let (r, beta) = cfg.aux(p)?;
        Ok(Builder {
            params: *p,
            mu: cfg.sign(p),
            metric: Metric { r, beta },
            q_report: cfg.q_report,
            times: vec![0.0],
            snapshots: vec![phi.clone()],
            reports: Vec::new(),
            residual: Vec::new(),
        })
    }

    fn push(&mut self, seg: Segment) {
        self.times.extend_from_slice(&seg.times[1..]);
        self.snapshots.extend(seg.u.into_iter().skip(1));
        self.reports.push(seg.report);
        self.residual.extend(seg.residual);
    }

    fn finish(self, eng: &Engine) -> Solution {
        let phi = &self.snapshots[0];
        let linear: Vec<RadialField> = self.times.iter().map(|&t| eng.flow(t, phi)).collect();
        // Without the nonlinear term the mild solution is the flow itself;
        // restarted segments would only add propagator composition error.
        let snapshots = if self.mu == 0.0 { linear.clone() } else { self.snapshots };
        let mut sup = 0.0f64;
        let weighted_norm_history = self
            .times
            .iter()
            .zip(&snapshots)
            .map(|(&t, u)| {
                sup = sup.max(self.metric.weighted(t, u));
                sup
            })
            .collect();
        Solution {
            params: self.params,
            mu: self.mu,
            r_aux: self.metric.r,
            beta_aux: self.metric.beta,
            q_report: self.q_report,
            times: self.times,
            snapshots,
            linear,
            weighted_norm_history,
            picard_report: self.reports,
            duhamel_residual: self.residual,
        }
    }
}

fn accept(seg: &Segment, cfg: &SolveConfig) -> Result<()> {
    let worst = seg.residual.iter().fold(0.0f64, |a, r| a.max(r.1));
    if worst >= 10.0 * cfg.picard_tol {
        return Err(Error::GridUnderresolved(format!(
            "Duhamel residual {worst:.3e} exceeds ten times the Picard tolerance"
        )));
    }
    Ok(())
}

/// Single solve on the graded mesh `[0, T]`.
pub fn picard_solve(phi: &RadialField, p: &Parameters, cfg: &SolveConfig) -> Result<Solution> {
    let eng = Engine::for_field(phi, p)?;
    picard_solve_with(&eng, phi, p, cfg)
}

pub fn picard_solve_with(eng: &Engine, phi: &RadialField, p: &Parameters, cfg: &SolveConfig) -> Result<Solution> {
    check_data(phi, p, cfg)?;
    let mut b = Builder::new(p, cfg, phi)?;
    let seg = solve_segment(eng, phi, &cfg.time_nodes(), p, b.mu, cfg, &b.metric)?;
    accept(&seg, cfg)?;
    b.push(seg);
    Ok(b.finish(eng))
}

/// Solves on `[0, H_1]` (graded) and then on each `[H_k, H_{k+1}]` with `M`
/// uniform steps, restarting from the last snapshot.
pub fn chained_solve_with(
    eng: &Engine,
    phi: &RadialField,
    p: &Parameters,
    cfg: &SolveConfig,
    horizons: &[f64],
) -> Result<Solution> {
    check_data(phi, p, cfg)?;
    if horizons.is_empty() || horizons[0] <= 0.0 || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("horizons must be positive and increasing".into()));
    }
    let mut b = Builder::new(p, cfg, phi)?;
    let mut u0 = phi.clone();
    let mut start = 0.0;
    for &h in horizons {
        let times = if start == 0.0 {
            graded_mesh(h, cfg.steps, cfg.kappa)
        } else {
            uniform_mesh(start, h, cfg.steps)
        };
        let seg = solve_segment(eng, &u0, &times, p, b.mu, cfg, &b.metric)?;
        accept(&seg, cfg)?;
        u0 = seg.u.last().expect("nonempty segment").clone();
        b.push(seg);
        start = h;
    }
    Ok(b.finish(eng))
}

/// `sup_j t_j^β ‖e^{-t_j𝓛}φ‖_r` over the nodes of a chained run.
pub fn gate_statistic(eng: &Engine, phi: &RadialField, p: &Parameters, cfg: &SolveConfig, horizons: &[f64]) -> Result<f64> {
    let (r, beta) = cfg.aux(p)?;
    let metric = Metric { r, beta };
    let mut start = 0.0;
    let mut stat = 0.0f64;
    for &h in horizons {
        let times = if start == 0.0 {
            graded_mesh(h, cfg.steps, cfg.kappa)
        } else {
            uniform_mesh(start, h, cfg.steps)
        };
        for &t in &times[1..] {
            stat = stat.max(metric.weighted(t, &eng.flow(t, phi)));
        }
        start = h;
    }
    Ok(stat)
}

/// Small-data global run: gate on the linear flow, then chain the horizons.
pub fn global_solve(phi: &RadialField, p: &Parameters, cfg: &SolveConfig, horizons: &[f64]) -> Result<Solution> {
    let eng = Engine::for_field(phi, p)?;
    global_solve_with(&eng, phi, p, cfg, horizons)
}

pub fn global_solve_with(
    eng: &Engine,
    phi: &RadialField,
    p: &Parameters,
    cfg: &SolveConfig,
    horizons: &[f64],
) -> Result<Solution> {
    check_data(phi, p, cfg)?;
    let stat = gate_statistic(eng, phi, p, cfg, horizons)?;
    if !(stat <= cfg.gate_threshold) {
        return Err(Error::SmallnessGateFailed {
            statistic: stat,
            reason: format!("linear statistic above threshold {}", cfg.gate_threshold),
        });
    }
    let sol = match chained_solve_with(eng, phi, p, cfg, horizons) {
        Err(Error::NoConvergence { factor, .. }) => {
            return Err(Error::SmallnessGateFailed {
                statistic: stat,
                reason: format!("Picard iteration diverged (factor {factor:.3})"),
            })
        }
        other => other?,
    };
    let factor = sol.picard_report.iter().fold(0.0f64, |a, r| a.max(r.contraction_factor));
    if factor >= cfg.gate_factor {
        return Err(Error::SmallnessGateFailed {
            statistic: stat,
            reason: format!("contraction factor {factor:.3} is not below {}", cfg.gate_factor),
        });
    }
    Ok(sol)
}

#[derive(Debug, Clone)]
pub struct SelfSimilarReport {
    /// `U = u(1, ·)`.
    pub profile: RadialField,
    /// `(t, ‖u(t) - t^{-σ/2} U(·/√t)‖_q / ‖U‖_q)`.
    pub residuals: Vec<(f64, f64)>,
    pub max_residual: f64,
    pub solution: Solution,
}

/// Horizons `1/4, 1/2, …, 4` used by default for self-similar runs.
pub fn default_selfsimilar_horizons() -> Vec<f64> {
    (-2..=2).map(|k| 2f64.powi(k)).collect()
}

/// Solution from `φ = ω r^{-(2-b)/α}`; `horizons` must contain 1 and the probe times.
pub fn selfsimilar_solve(
    omega: f64,
    p: &Parameters,
    cfg: &SolveConfig,
    grid: &Arc<RadialGrid>,
    horizons: &[f64],
    probes: &[f64],
) -> Result<SelfSimilarReport> {
    let e = compute_exponents(p)?;
    let sigma = p.scaling_exponent();
    let lo = (2.0 - p.b) / (e.s2t + 2.0);
    let hi = if e.s1t > 0.0 { (2.0 - p.b) / e.s1t } else { f64::INFINITY };
    if !(lo < p.alpha && p.alpha < hi) {
        return Err(Error::InvalidParameters(format!(
            "alpha = {} must lie in ({lo}, {hi})",
            p.alpha
        )));
    }
    let phi = RadialField::from_fn(grid, |r| omega * r.powf(-sigma), Some(sigma))?;
    let eng = Engine::for_field(&phi, p)?;
    let sol = global_solve_with(&eng, &phi, p, cfg, horizons)?;
    let profile = sol
        .at(1.0)
        .ok_or_else(|| Error::InvalidInput("horizons must reach t = 1 exactly".into()))?
        .clone();
    let q = cfg.q_report;
    let base = lq_norm(&profile, q);
    let mut residuals = Vec::new();
    for &t in probes {
        let u = sol
            .at(t)
            .ok_or_else(|| Error::InvalidInput(format!("probe time {t} is not a mesh node")))?;
        let model = dilate(&profile, 1.0 / t.sqrt())?.scaled(t.powf(-0.5 * sigma));
        let num = lq_norm(&u.sub(&model)?, q);
        residuals.push((t, if base > 0.0 { num / base } else { num }));
    }
    let max_residual = residuals.iter().fold(0.0f64, |a, r| a.max(r.1));
    Ok(SelfSimilarReport {
        profile,
        residuals,
        max_residual,
        solution: sol,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupEstimate {
    /// Divergence times at `M` and `2M` steps per segment.
    pub t_coarse: f64,
    pub t_fine: f64,
    /// Richardson extrapolation `2 t_fine - t_coarse`.
    pub t_est: f64,
    pub fit: RateFit,
    /// `d/(2q) - (2-b)/(2α)`.
    pub bound_exponent: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FocusingOutcome {
    Blowup(BlowupEstimate),
    NoBlowupDetected { t_final: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FocusingReport {
    pub q: f64,
    /// `(t, ‖u(t)‖_q)` from the finer run.
    pub history: Vec<(f64, f64)>,
    pub outcome: FocusingOutcome,
}

struct March {
    history: Vec<(f64, f64)>,
    blowup_time: Option<f64>,
}

fn march(phi: &RadialField, p: &Parameters, cfg: &SolveConfig, q: f64) -> Result<March> {
    let eng = Engine::for_field(phi, p)?;
    let (r, beta) = cfg.aux(p)?;
    let metric = Metric { r, beta };
    let t_end = cfg.t_final;
    let floor = t_end * 2f64.powi(-34);
    let overflow = 1e12 * lq_norm(phi, q).max(f64::MIN_POSITIVE);
    let mut history = vec![(0.0, lq_norm(phi, q))];
    let mut u0 = phi.clone();
    let mut t = 0.0;
    let mut len = t_end / 8.0;
    while t < t_end {
        let end = (t + len).min(t_end);
        let times = if t == 0.0 {
            graded_mesh(end, cfg.steps, cfg.kappa)
        } else {
            uniform_mesh(t, end, cfg.steps)
        };
        match solve_segment(&eng, &u0, &times, p, 1.0, cfg, &metric) {
            Ok(seg) => {
                let mut blew = false;
                for (tj, uj) in seg.times.iter().zip(&seg.u).skip(1) {
                    let nq = lq_norm(uj, q);
                    if !(nq < overflow) {
                        blew = true;
                        break;
                    }
                    history.push((*tj, nq));
                }
                if blew {
                    return Ok(March {
                        history,
                        blowup_time: Some(t),
                    });
                }
                u0 = seg.u.last().expect("nonempty").clone();
                t = end;
            }
            Err(Error::NoConvergence { .. }) => {
                len *= 0.5;
                if len < floor {
                    return Ok(March {
                        history,
                        blowup_time: Some(t),
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(March {
        history,
        blowup_time: None,
    })
}

/// Focusing run (`μ = +1`) marched until the Picard map stops contracting on
/// ever shorter segments.
pub fn focusing_run(phi: &RadialField, p: &Parameters, cfg: &SolveConfig, q: f64) -> Result<FocusingReport> {
    let e = compute_exponents(p)?;
    if !(q > 1f64.max(e.qc)) {
        return Err(Error::InvalidInput(format!("q = {q} must exceed max(1, q_c)")));
    }
    let coarse = march(phi, p, cfg, q)?;
    let t_coarse = match coarse.blowup_time {
        None => {
            return Ok(FocusingReport {
                q,
                history: coarse.history,
                outcome: FocusingOutcome::NoBlowupDetected { t_final: cfg.t_final },
            })
        }
        Some(t) => t,
    };
    let fine_cfg = SolveConfig {
        steps: 2 * cfg.steps,
        ..cfg.clone()
    };
    let fine = march(phi, p, &fine_cfg, q)?;
    let t_fine = match fine.blowup_time {
        None => {
            return Ok(FocusingReport {
                q,
                history: fine.history,
                outcome: FocusingOutcome::NoBlowupDetected { t_final: cfg.t_final },
            })
        }
        Some(t) => t,
    };
    let last = fine.history.last().map(|h| h.0).unwrap_or(0.0);
    let mut t_est = 2.0 * t_fine - t_coarse;
    if !(t_est > last) {
        // extrapolation fell inside the resolved history; fall back to the
        // finer divergence time nudged past the last accepted node
        t_est = t_fine.max(last) + (t_fine - t_coarse).abs().max(cfg.t_final * 2f64.powi(-20));
    }
    // last resolved decade of T_est - t, widened until it holds eight samples
    let mut pts: Vec<(f64, f64)> = fine
        .history
        .iter()
        .filter(|(t, _)| *t > 0.0 && *t < t_est)
        .map(|&(t, n)| (t_est - t, n))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gap_min = pts.first().map_or(0.0, |p| p.0);
    let mut take = pts.iter().take_while(|p| p.0 < 10.0 * gap_min).count() + 1;
    take = take.max(8).min(pts.len());
    let (gaps, norms): (Vec<f64>, Vec<f64>) = pts[..take].iter().copied().unzip();
    let fit = fit_power_law(&gaps, &norms, None)?;
    Ok(FocusingReport {
        q,
        history: fine.history,
        outcome: FocusingOutcome::Blowup(BlowupEstimate {
            t_coarse,
            t_fine,
            t_est,
            fit,
            bound_exponent: 0.5 * p.dim() / q - 0.5 * (2.0 - p.b) / p.alpha,
        }),
    })
}
