use std::path::PathBuf;
use std::sync::Arc;

use hardyheat::analysis::{compare_asymptotics, fit_power_law, AsymMode};
use hardyheat::exponents::*;
use hardyheat::grid::gaussian_field;
use hardyheat::semigroup::{apply, build_operator, build_operator_with_tails};
use hardyheat::solver::*;
use hardyheat::{dilate, lq_norm, make_grid, RadialField, RadialGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::{write_json, AssertionFailed, ConfigError, Ctx};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

fn below(suite: &'static str, name: &'static str, value: f64, threshold: f64) -> Check {
    Check {
        suite,
        name,
        value,
        threshold,
        pass: value < threshold,
    }
}

pub fn cmd_verify(ctx: &Ctx, suite: &str, samples: usize, seed: u64, out: Option<PathBuf>) -> anyhow::Result<()> {
    if samples == 0 {
        return Err(ConfigError("--samples must be positive".into()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = suite == "all";
    let mut checks = Vec::new();
    if all || suite == "exponents" {
        checks.extend(exponents_suite(&mut rng, samples));
    }
    if all || suite == "semigroup" {
        checks.extend(semigroup_suite()?);
    }
    if all || suite == "solver" {
        checks.extend(solver_suite()?);
    }
    if all || suite == "asymptotics" {
        checks.extend(asymptotics_suite()?);
    }
    for c in &checks {
        println!(
            "{} {}/{}: {:.3e} (threshold {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.suite,
            c.name,
            c.value,
            c.threshold
        );
    }
    let passed = checks.iter().all(|c| c.pass);
    if let Some(out) = &out {
        ctx.open_output(out, json!({ "suite": suite, "samples": samples }), None, Some(seed))?;
        write_json(&out.join("report.json"), &json!({ "suite": suite, "seed": seed, "passed": passed, "checks": checks }))?;
    }
    if !passed {
        let n = checks.iter().filter(|c| !c.pass).count();
        return Err(AssertionFailed(format!("{n} of {} checks failed", checks.len())).into());
    }
    Ok(())
}

fn random_params(rng: &mut ChaCha8Rng) -> Parameters {
    let d = rng.gen_range(2..=7u32);
    let floor = -((d as f64 - 2.0) / 2.0).powi(2);
    let a = floor + rng.gen_range(0.0..4.0);
    let b = rng.gen_range(0.0..(2.0f64.min(d as f64)));
    let alpha = rng.gen_range(0.05..6.0);
    Parameters::new(d, a, b, alpha, 0.0).expect("sampled inside the admissible box")
}

fn random_lemma11(rng: &mut ChaCha8Rng) -> Option<(Parameters, Lemma11Set)> {
    let p = random_params(rng);
    let e = compute_exponents(&p).ok()?;
    let lo = (2.0 - p.b) / (e.s2t + 2.0);
    let hi = if e.s1t > 0.0 { (2.0 - p.b) / e.s1t } else { 6.0 };
    if !(lo < hi) {
        return None;
    }
    let p = Parameters::new(p.d, p.a, p.b, rng.gen_range(lo..hi), 0.0).ok()?;
    let range = alpha1_range(&p).ok()?;
    if range.is_empty() {
        return None;
    }
    let alpha1 = rng.gen_range(range.lo..range.hi);
    let iv = r1_interval(&p, alpha1).ok()?;
    if !(iv.hi > iv.lo) {
        return None;
    }
    let x = rng.gen_range(1.0 / iv.hi.min(1e300)..1.0 / iv.lo);
    lemma11_from_r1(&p, alpha1, 1.0 / x).ok().map(|s| (p, s))
}

fn exponents_suite(rng: &mut ChaCha8Rng, samples: usize) -> Vec<Check> {
    const S: &str = "exponents";
    let e = compute_exponents(&Parameters::new(3, -0.125, 1.0, 1.0, 0.0).unwrap()).unwrap();
    let r2 = 2f64.sqrt();
    let ticks = (e.s1 / 3.0 - (1.0 / 6.0 - r2 / 12.0))
        .abs()
        .max(((e.s2 + 2.0) / 3.0 - (5.0 / 6.0 + r2 / 12.0)).abs());

    let mut roots = 0.0f64;
    let mut a_not_b = 0usize;
    let mut aux_bad = 0usize;
    for _ in 0..samples {
        let p = random_params(rng);
        let e = compute_exponents(&p).unwrap();
        let d = p.dim();
        let scale = (d - 2.0).abs().max(p.a.abs()).max(1.0);
        let disc = ((d - 2.0) * (d - 2.0) + 4.0 * p.a).max(0.0).sqrt();
        roots = roots
            .max((e.s1 - 0.5 * (d - 2.0 - disc)).abs() / scale)
            .max((e.s2 - 0.5 * (d - 2.0 + disc)).abs() / scale)
            .max((e.s1 * e.s2 + p.a).abs() / scale);
        let q = rng.gen_range(0.0..5.0f64).exp();
        let v = classify(&p, q).unwrap();
        a_not_b += (v.in_region_a && !v.in_region_b) as usize;
        if let Ok(pair) = find_aux_r(&p, q) {
            let ok = pair.r > q
                && pair.beta > 0.0
                && pair.beta * (p.alpha + 1.0) < 1.0
                && v.admissible_r_interval.is_some_and(|iv| iv.contains(pair.r));
            aux_bad += (!ok) as usize;
        }
    }

    let p = Parameters::new(3, 0.0, 1.0, 2.0, 0.0).unwrap();
    let s = lemma11_from_r1(&p, 1.0, 6.0).unwrap();
    let got = [s.r2, s.beta1, s.beta2, s.r12, s.beta12];
    let want = [12.0, 0.25, 0.125, 9.0, 1.0 / 6.0];
    let instance = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    let theta = (lemma13_theta(&s, &p, 0.01).unwrap().theta - 0.346_666_7).abs();

    let mut l11_bad = 0usize;
    let mut l13 = 0.0f64;
    let mut drawn = 0;
    while drawn < (samples / 10).max(10) {
        let Some((p, s)) = random_lemma11(rng) else { continue };
        drawn += 1;
        if !lemma11_check(&p, &s).map(|r| r.all_hold(1e-10)).unwrap_or(false) {
            l11_bad += 1;
        }
        if let Ok(d0) = lemma13_delta0(&s, &p) {
            for k in 1..=5 {
                if let Ok(t) = lemma13_theta(&s, &p, d0 * k as f64 / 6.0) {
                    l13 = l13.max(lemma13_residual(&s, &p, &t).abs());
                }
            }
        }
    }
    vec![
        below(S, "figure_ticks", ticks, 1e-12),
        below(S, "root_identities", roots, 1e-12),
        below(S, "region_a_outside_b", a_not_b as f64, 0.5),
        below(S, "aux_pair_invalid", aux_bad as f64, 0.5),
        below(S, "lemma11_instance", instance, 1e-15),
        below(S, "lemma11_sweep_failures", l11_bad as f64, 0.5),
        below(S, "lemma13_theta_value", theta, 1e-7),
        below(S, "lemma13_residual", l13, 1e-10),
    ]
}

fn rel_l2(u: &RadialField, v: &RadialField) -> hardyheat::Result<f64> {
    Ok(lq_norm(&u.sub(v)?, 2.0) / lq_norm(v, 2.0))
}

fn params(a: f64, alpha: f64, mu: f64) -> hardyheat::Result<Parameters> {
    Parameters::new(3, a, 1.0, alpha, mu)
}

fn dyadic_grid() -> hardyheat::Result<Arc<RadialGrid>> {
    make_grid(3, 2f64.powi(-14), 2f64.powi(14), 449)
}

fn semigroup_suite() -> hardyheat::Result<Vec<Check>> {
    const S: &str = "semigroup";
    let g = make_grid(3, 1e-5, 40.0, 512)?;
    let ex = compute_exponents(&params(0.0, 1.0, 0.0)?)?;
    let phi = gaussian_field(&g, 1.0, 1.0)?;
    let mut oracle = 0.0f64;
    let mut min_entry = f64::INFINITY;
    for t in [0.1, 1.0] {
        let op = build_operator(&g, &ex, t)?;
        min_entry = min_entry.min(op.matrix.min_entry());
        let amp = (1.0 / (1.0 + t)).powf(1.5);
        let exact = RadialField::from_fn(&g, |r| amp * (-r * r / (4.0 * (1.0 + t))).exp(), None)?;
        oracle = oracle.max(rel_l2(&apply(&op, &phi)?, &exact)?);
    }
    let half = build_operator(&g, &ex, 0.5)?;
    let law = rel_l2(&apply(&half, &apply(&half, &phi)?)?, &apply(&build_operator(&g, &ex, 1.0)?, &phi)?)?;

    let g = dyadic_grid()?;
    let annulus = RadialField::from_fn(&g, |r| (-(r - 2.0) * (r - 2.0)).exp(), None)?;
    let mut scaling = 0.0f64;
    for a in [-0.125, 0.0, 1.0] {
        let ex = compute_exponents(&params(a, 1.0, 0.0)?)?;
        let small = build_operator(&g, &ex, 0.25)?;
        let big = build_operator(&g, &ex, 1.0)?;
        let lhs = apply(&small, &dilate(&annulus, 2.0)?)?;
        let rhs = dilate(&apply(&big, &annulus)?, 2.0)?;
        scaling = scaling.max(rel_l2(&lhs, &rhs)?);
    }

    let ex = compute_exponents(&params(0.0, 2.0, 0.0)?)?;
    let hom = RadialField::from_fn(&g, |r| r.powf(-0.5), Some(0.5))?;
    let stats = [0.01f64, 1.0, 100.0]
        .iter()
        .map(|&t| Ok(t.powf(0.125) * lq_norm(&apply(&build_operator_with_tails(&g, &ex, t, &[0.5])?, &hom)?, 12.0)))
        .collect::<hardyheat::Result<Vec<f64>>>()?;
    let spread = stats.iter().fold(0.0f64, |a, v| a.max(*v)) / stats.iter().fold(f64::INFINITY, |a, v| a.min(*v)) - 1.0;
    Ok(vec![
        below(S, "gaussian_oracle", oracle, 1e-6),
        below(S, "semigroup_law", law, 1e-6),
        Check {
            suite: S,
            name: "min_kernel_entry",
            value: min_entry,
            threshold: 0.0,
            pass: min_entry >= 0.0,
        },
        below(S, "scaling_identity", scaling, 1e-5),
        below(S, "homogeneous_decay_spread", spread, 1e-2),
    ])
}

fn solver_suite() -> hardyheat::Result<Vec<Check>> {
    const S: &str = "solver";
    let g = make_grid(3, 2f64.powi(-14), 2f64.powi(8), 353)?;
    let tol = 1e-6;
    let cfg = SolveConfig {
        steps: 32,
        picard_tol: tol,
        ..Default::default()
    };
    let p0 = params(0.0, 2.0, 0.0)?;
    let ex = compute_exponents(&p0)?;
    let phi = gaussian_field(&g, 1.0, 1.0)?;
    let lin = picard_solve(&phi, &p0, &SolveConfig { steps: 8, ..cfg.clone() })?;
    let mut linear = 0.0f64;
    for (t, u) in lin.times.iter().zip(&lin.snapshots).skip(1) {
        linear = linear.max(rel_l2(u, &apply(&build_operator(&g, &ex, *t)?, &phi)?)?);
    }

    let p = params(0.0, 2.0, -1.0)?;
    let phi = gaussian_field(&g, 0.1, 1.0)?;
    let eng = Engine::for_field(&phi, &p)?;
    let single = picard_solve_with(&eng, &phi, &p, &cfg)?;
    let chained = chained_solve_with(&eng, &phi, &p, &cfg, &[0.5, 1.0])?;
    let (a, b) = (single.final_state(), chained.final_state());
    let chain = lq_norm(&a.sub(b)?, 6.0) / lq_norm(a, 6.0);

    let amp = 2f64.powf(p.scaling_exponent());
    let scaled = dilate(&phi, 2.0)?.scaled(amp);
    let ul = picard_solve_with(&eng, &scaled, &p, &SolveConfig { t_final: 0.25, ..cfg.clone() })?;
    let mut cov = 0.0f64;
    for j in 1..ul.times.len() {
        let model = dilate(&single.snapshots[j], 2.0)?.scaled(amp);
        cov = cov.max(lq_norm(&ul.snapshots[j].sub(&model)?, 6.0) / lq_norm(&model, 6.0));
    }
    let duhamel = [&single, &chained, &ul]
        .iter()
        .map(|s| s.max_duhamel_residual())
        .fold(0.0f64, f64::max);
    Ok(vec![
        below(S, "linear_reduction", linear, 1e-12),
        below(S, "duhamel_residual", duhamel, 10.0 * tol),
        below(S, "chained_vs_single", chain, 10.0 * tol),
        below(S, "scaling_covariance", cov, 1e-3),
    ])
}

fn asymptotics_suite() -> hardyheat::Result<Vec<Check>> {
    const S: &str = "asymptotics";
    let p = params(0.0, 2.0, -1.0)?;
    let g = dyadic_grid()?;
    let cfg = SolveConfig {
        steps: 16,
        ..Default::default()
    };
    let rep = selfsimilar_solve(0.05, &p, &cfg, &g, &default_selfsimilar_horizons(), &[0.25, 1.0, 4.0])?;
    let s = &rep.solution;
    let norms: Vec<f64> = s.snapshots.iter().map(|u| lq_norm(u, 12.0)).collect();
    let slope = fit_power_law(&s.times, &norms, Some((0.25, 4.0)))?.exponent;

    let cfg = SolveConfig { q_report: 12.0, ..cfg };
    let horizons: Vec<f64> = (-2..=7).map(|k| 2f64.powi(k)).collect();
    let phi = RadialField::from_fn(&g, |r| 0.05 * r.max(1.0).powf(-0.5), Some(0.5))?;
    let psi = RadialField::from_fn(&g, |r| 0.05 * r.powf(-0.5), Some(0.5))?;
    let eng = Engine::for_field(&phi, &p)?;
    let u = global_solve_with(&eng, &phi, &p, &cfg, &horizons)?;
    let us = global_solve_with(&eng, &psi, &p, &cfg, &horizons)?;
    let cmp = &compare_asymptotics(&u, &us, AsymMode::Nonlinear, &p, 0.5, &[12.0], (1.0, 100.0))?[0];
    let margin = if cmp.degenerate { f64::NEG_INFINITY } else { cmp.margin };
    Ok(vec![
        below(S, "selfsimilar_residual", rep.max_residual, 1e-3),
        below(S, "selfsimilar_slope_error", (slope + 0.125).abs(), 1e-2),
        Check {
            suite: S,
            name: "decay_margin",
            value: margin,
            threshold: 0.005,
            pass: margin > 0.005,
        },
        below(S, "sandwich_ratio", cmp.sandwich_ratio, 1.1),
    ])
}
