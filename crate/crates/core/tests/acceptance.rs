//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use hardyheat::analysis::{compare_asymptotics, fit_power_law, verify_apriori, AsymMode};
use hardyheat::exponents::*;
use hardyheat::grid::{gaussian_field, power_law_field};
use hardyheat::io::{parse_polylines_csv, polylines_to_csv};
use hardyheat::semigroup::{apply, build_operator, build_operator_with_tails};
use hardyheat::solver::*;
use hardyheat::{dilate, lq_norm, make_grid, RadialField, RadialGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn params(d: u32, a: f64, b: f64, alpha: f64, mu: f64) -> Parameters {
    Parameters::new(d, a, b, alpha, mu).expect("valid parameters")
}

fn rel_l2(u: &RadialField, v: &RadialField) -> f64 {
    lq_norm(&u.sub(v).expect("same grid"), 2.0) / lq_norm(v, 2.0)
}

/// Roots of `s^2 - (d-2)s - a` from the quadratic formula.
fn quad_roots(d: f64, a: f64) -> (f64, f64) {
    let disc = ((d - 2.0) * (d - 2.0) + 4.0 * a).max(0.0).sqrt();
    (0.5 * ((d - 2.0) - disc), 0.5 * ((d - 2.0) + disc))
}

fn random_params(rng: &mut ChaCha8Rng) -> Parameters {
    let d = rng.gen_range(2..=7u32);
    let floor = -((d as f64 - 2.0) / 2.0).powi(2);
    let a = floor + rng.gen_range(0.0..4.0);
    let b = rng.gen_range(0.0..(2.0f64.min(d as f64)));
    let alpha = rng.gen_range(0.05..6.0);
    params(d, a, b, alpha, 0.0)
}

fn criterion_1() -> Verdict {
    let e = compute_exponents(&params(3, -0.125, 1.0, 1.0, 0.0)).unwrap();
    let r2 = 2f64.sqrt();
    let tick_lo = (e.s1 / 3.0 - (1.0 / 6.0 - r2 / 12.0)).abs();
    let tick_hi = ((e.s2 + 2.0) / 3.0 - (5.0 / 6.0 + r2 / 12.0)).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let p = random_params(&mut rng);
        let e = compute_exponents(&p).unwrap();
        let d = p.dim();
        let scale = (d - 2.0).abs().max(p.a.abs()).max(1.0);
        worst = worst.max((e.s1 + e.s2 - (d - 2.0)).abs() / scale);
        worst = worst.max((e.s1 * e.s2 + p.a).abs() / scale);
        let (q1, q2) = quad_roots(d, p.a);
        worst = worst.max((e.s1 - q1).abs().max((e.s2 - q2).abs()) / scale);
    }
    verdict(
        tick_lo < 1e-12 && tick_hi < 1e-12 && worst < 1e-12,
        format!("tick errors {tick_lo:.1e} {tick_hi:.1e}, worst root identity {worst:.1e}"),
    )
}

/// The defining conditions and the companion chains, written out from scratch.
fn lemma11_holds(p: &Parameters, s: &Lemma11Set) -> bool {
    let (q1, q2) = quad_roots(p.dim(), p.a);
    let d = p.dim();
    let lo = q1.max(0.0);
    let top = q2.min(d - 2.0) + 2.0;
    let (al, a1, b) = (p.alpha, s.alpha1, p.b);
    let chain = |r: f64, alph: f64| lo < d / r && d / r < b + (alph + 1.0) * d / r && b + (alph + 1.0) * d / r < top;
    let c12 = b + (al + 1.0) * d / s.r12;
    let m2 = d * al / (2.0 * s.r2) + b / 2.0;
    let mix = 0.5 * d * ((al + 1.0) / s.r12 - 1.0 / s.r1);
    let res5 = s.beta2 - m2 - s.beta2 * (al + 1.0) + 1.0;
    let res6 = s.beta1 - mix - b / 2.0 - s.beta12 * (al + 1.0) + 1.0;
    s.beta1 > 0.0
        && s.beta2 > 0.0
        && s.beta12 > 0.0
        && lo < d / s.r1
        && d / s.r1 < c12
        && c12 < top
        && chain(s.r2, al)
        && chain(s.r1, a1)
        && (mix + b / 2.0 - m2).abs() < 1e-10
        && m2 < 1.0
        && d * a1 / (2.0 * s.r1) + b / 2.0 < 1.0
        && s.beta2 * (al + 1.0) < 1.0
        && s.beta12 * (al + 1.0) < 1.0
        && s.beta1 * (a1 + 1.0) < 1.0
        && s.r1 < s.r2
        && res5.abs() < 1e-10
        && res6.abs() < 1e-10
}

/// Draws admissible `(p, alpha1, r1)` until one is found.
fn random_lemma11(rng: &mut ChaCha8Rng) -> (Parameters, Lemma11Set) {
    loop {
        let p = random_params(rng);
        let e = compute_exponents(&p).unwrap();
        let lo = (2.0 - p.b) / (e.s2t + 2.0);
        let hi = if e.s1t > 0.0 { (2.0 - p.b) / e.s1t } else { 6.0 };
        if !(lo < hi) {
            continue;
        }
        let p = params(p.d, p.a, p.b, rng.gen_range(lo..hi), 0.0);
        let range = alpha1_range(&p).unwrap();
        if range.is_empty() {
            continue;
        }
        let alpha1 = rng.gen_range(range.lo..range.hi);
        let iv = r1_interval(&p, alpha1).unwrap();
        if iv.is_empty() || !(iv.hi > iv.lo) {
            continue;
        }
        let x = rng.gen_range(1.0 / iv.hi.min(1e300)..1.0 / iv.lo);
        if let Ok(s) = lemma11_from_r1(&p, alpha1, 1.0 / x) {
            return (p, s);
        }
    }
}

fn criterion_2() -> Verdict {
    let p = params(3, 0.0, 1.0, 2.0, 0.0);
    let s = lemma11_from_r1(&p, 1.0, 6.0).unwrap();
    let want = [12.0, 0.25, 0.125, 9.0, 1.0 / 6.0];
    let got = [s.r2, s.beta1, s.beta2, s.r12, s.beta12];
    let exact = got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 4.0 * f64::EPSILON * w);
    let rep = lemma11_check(&p, &s).unwrap();
    let res_ok = rep.identity_r2.abs() < 1e-12 && rep.identity_mixed.abs() < 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = 0;
    for _ in 0..1000 {
        let (p, s) = random_lemma11(&mut rng);
        if !lemma11_holds(&p, &s) || !lemma11_check(&p, &s).unwrap().all_hold(1e-10) {
            failures += 1;
        }
    }
    verdict(
        exact && res_ok && lemma11_holds(&p, &s) && failures == 0,
        format!(
            "instance {got:?}, residuals {:.1e} {:.1e}, sweep failures {failures}/1000",
            rep.identity_r2, rep.identity_mixed
        ),
    )
}

fn criterion_3() -> Verdict {
    let p = params(3, 0.0, 1.0, 2.0, 0.0);
    let s = lemma11_from_r1(&p, 1.0, 6.0).unwrap();
    let theta = lemma13_theta(&s, &p, 0.01).unwrap().theta;
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases = vec![(p, s)];
    cases.extend((0..200).map(|_| random_lemma11(&mut rng)));
    let mut swept = 0;
    for (p, s) in &cases {
        let d0 = lemma13_delta0(s, p).unwrap();
        for k in 1..=20 {
            let delta = d0 * k as f64 / 21.0;
            if let Ok(t) = lemma13_theta(s, p, delta) {
                worst = worst.max(lemma13_residual(s, p, &t).abs());
                swept += 1;
            }
        }
    }
    verdict(
        worst < 1e-10 && (theta - 0.346_666_7).abs() < 1e-7 && swept > 1000,
        format!("theta(0.01) = {theta:.9}, worst residual {worst:.1e} over {swept} deltas"),
    )
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    let mut in_a = 0;
    for _ in 0..10_000 {
        let p = random_params(&mut rng);
        let q = (rng.gen_range(0.0..5.0f64)).exp();
        let v = classify(&p, q).unwrap();
        in_a += v.in_region_a as usize;
        if v.in_region_a && !v.in_region_b {
            violations += 1;
        }
    }
    let mut worst = 0.0f64;
    let mut curves_seen = 0;
    for &(d, a, b) in &[(3u32, -0.125, 1.0), (3, 0.0, 1.0), (4, 1.0, 0.5), (5, -2.0, 0.0)] {
        let (q1, q2) = quad_roots(d as f64, a);
        let (lo, top) = (q1.max(0.0), q2.min(d as f64 - 2.0) + 2.0);
        let df = d as f64;
        let amax = if lo > 0.0 { (2.0 - b) / lo } else { 8.0 };
        let grid: Vec<f64> = (1..200).map(|k| amax * k as f64 / 200.0).collect();
        let csv = polylines_to_csv(&region_boundary_sample(d, a, b, &grid).unwrap());
        for c in parse_polylines_csv(&csv).unwrap() {
            let f: Box<dyn Fn(f64) -> f64> = match c.label.as_str() {
                "critical" => Box::new(move |x| (2.0 - b) / (df * x)),
                "boundary" => Box::new(move |x| (top - b) / (df * (x + 1.0))),
                "lower" => Box::new(move |_| lo / df),
                "upper" => Box::new(move |_| top / df),
                _ => continue,
            };
            curves_seen += 1;
            for &(x, y) in &c.points {
                worst = worst.max((y - f(x)).abs() / f(x).abs().max(1e-300).max(1.0));
            }
        }
    }
    verdict(
        violations == 0 && in_a > 100 && worst < 1e-12 && curves_seen == 16,
        format!("A without B: {violations} of {in_a} in A; curve mismatch {worst:.1e} over {curves_seen} curves"),
    )
}

fn gaussian_exact(g: &Arc<RadialGrid>, s: f64, t: f64) -> RadialField {
    let amp = (s / (s + t)).powf(1.5);
    RadialField::from_fn(g, |r| amp * (-r * r / (4.0 * (s + t))).exp(), None).unwrap()
}

fn criterion_5() -> Verdict {
    let g = make_grid(3, 1e-5, 40.0, 512).unwrap();
    let ex = compute_exponents(&params(3, 0.0, 1.0, 1.0, 0.0)).unwrap();
    let phi = gaussian_field(&g, 1.0, 1.0).unwrap();
    let mut err = 0.0f64;
    let mut min_entry = f64::INFINITY;
    for &t in &[0.1, 1.0] {
        let op = build_operator(&g, &ex, t).unwrap();
        min_entry = min_entry.min(op.matrix.min_entry());
        err = err.max(rel_l2(&apply(&op, &phi).unwrap(), &gaussian_exact(&g, 1.0, t)));
    }
    let half = build_operator(&g, &ex, 0.5).unwrap();
    let one = build_operator(&g, &ex, 1.0).unwrap();
    min_entry = min_entry.min(half.matrix.min_entry());
    let twice = apply(&half, &apply(&half, &phi).unwrap()).unwrap();
    let law = rel_l2(&twice, &apply(&one, &phi).unwrap());
    let out_min = twice.values.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    verdict(
        err < 1e-6 && law < 1e-6 && min_entry >= 0.0 && out_min >= 0.0,
        format!("oracle error {err:.2e}, semigroup law {law:.2e}, min kernel entry {min_entry:.1e}"),
    )
}

fn criterion_6() -> Verdict {
    // ln 2 is a whole number of cells, so dilation by 2 or 1/2 is a node shift.
    let g = make_grid(3, 2f64.powi(-14), 2f64.powi(14), 449).unwrap();
    let data = [
        gaussian_field(&g, 1.0, 1.0).unwrap(),
        RadialField::from_fn(&g, |r| (-(r - 2.0) * (r - 2.0)).exp(), None).unwrap(),
    ];
    let mut worst = 0.0f64;
    for &a in &[-0.125, 0.0, 1.0] {
        let ex = compute_exponents(&params(3, a, 1.0, 1.0, 0.0)).unwrap();
        for &lam in &[0.5, 2.0] {
            for &t in &[0.25, 1.0] {
                let p_t = build_operator(&g, &ex, t).unwrap();
                let p_big = build_operator(&g, &ex, lam * lam * t).unwrap();
                for phi in &data {
                    let lhs = apply(&p_t, &dilate(phi, lam).unwrap()).unwrap();
                    let rhs = dilate(&apply(&p_big, phi).unwrap(), lam).unwrap();
                    worst = worst.max(rel_l2(&lhs, &rhs));
                }
            }
        }
    }
    verdict(worst < 1e-5, format!("worst relative discrepancy {worst:.2e}"))
}

fn criterion_7() -> Verdict {
    let g = make_grid(3, 2f64.powi(-14), 2f64.powi(14), 449).unwrap();
    let ex = compute_exponents(&params(3, 0.0, 1.0, 2.0, 0.0)).unwrap();
    let phi = power_law_field(&g, 1.0, 0.5, None, None).unwrap();
    let stats: Vec<f64> = (0..=16)
        .map(|k| {
            let t = 0.01 * 10f64.powf(k as f64 / 4.0);
            let op = build_operator_with_tails(&g, &ex, t, &[0.5]).unwrap();
            t.powf(0.125) * lq_norm(&apply(&op, &phi).unwrap(), 12.0)
        })
        .collect();
    let hi = stats.iter().fold(0.0f64, |a, v| a.max(*v));
    let lo = stats.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    verdict(
        hi / lo - 1.0 < 0.01,
        format!("statistic in [{lo:.8}, {hi:.8}], spread {:.1e}", hi / lo - 1.0),
    )
}

fn criterion_8() -> Verdict {
    let g = make_grid(3, 2f64.powi(-14), 2f64.powi(8), 353).unwrap();
    let tol = 1e-6;
    let cfg = SolveConfig {
        steps: 32,
        q_report: 6.0,
        picard_tol: tol,
        ..Default::default()
    };

    // μ = 0 against a directly built propagator.
    let p0 = params(3, 0.0, 1.0, 2.0, 0.0);
    let ex = compute_exponents(&p0).unwrap();
    let phi = gaussian_field(&g, 1.0, 1.0).unwrap();
    let lin = picard_solve(&phi, &p0, &SolveConfig { steps: 8, ..cfg.clone() }).unwrap();
    let mut linear_err = 0.0f64;
    for (t, u) in lin.times.iter().zip(&lin.snapshots).skip(1) {
        let direct = apply(&build_operator(&g, &ex, *t).unwrap(), &phi).unwrap();
        linear_err = linear_err.max(rel_l2(u, &direct));
    }

    let p = params(3, 0.0, 1.0, 2.0, -1.0);
    let phi = gaussian_field(&g, 0.1, 1.0).unwrap();
    let eng = Engine::for_field(&phi, &p).unwrap();
    let single = picard_solve_with(&eng, &phi, &p, &cfg).unwrap();
    let chained = chained_solve_with(&eng, &phi, &p, &cfg, &[0.5, 1.0]).unwrap();
    let (a, b) = (single.final_state(), chained.final_state());
    let chain_err = lq_norm(&a.sub(b).unwrap(), 6.0) / lq_norm(a, 6.0);

    // u_λ(t, r) = λ^{(2-b)/α} u(λ² t, λ r) with λ = 2, on the same nodes.
    let lam = 2.0f64;
    let amp = lam.powf(p.scaling_exponent());
    let phil = dilate(&phi, lam).unwrap().scaled(amp);
    let ul = picard_solve_with(&eng, &phil, &p, &SolveConfig { t_final: 0.25, ..cfg.clone() }).unwrap();
    let mut cov = 0.0f64;
    for j in 1..ul.times.len() {
        let model = dilate(&single.snapshots[j], lam).unwrap().scaled(amp);
        cov = cov.max(lq_norm(&ul.snapshots[j].sub(&model).unwrap(), 6.0) / lq_norm(&model, 6.0));
    }

    let duhamel = [&single, &chained, &ul]
        .iter()
        .map(|s| s.max_duhamel_residual())
        .fold(0.0f64, f64::max);
    verdict(
        linear_err < 1e-12 && duhamel < 10.0 * tol && chain_err < 10.0 * tol && cov < 1e-3,
        format!(
            "mu=0 error {linear_err:.1e}, Duhamel {duhamel:.2e}, chained vs single {chain_err:.2e}, scaling {cov:.2e} (tol {tol:.0e})"
        ),
    )
}

fn criterion_9() -> Verdict {
    let p = params(3, 0.0, 1.0, 2.0, -1.0);
    let g = make_grid(3, 2f64.powi(-14), 2f64.powi(14), 449).unwrap();
    let cfg = SolveConfig {
        steps: 16,
        q_report: 6.0,
        picard_tol: 1e-8,
        ..Default::default()
    };
    let rep = match selfsimilar_solve(0.05, &p, &cfg, &g, &default_selfsimilar_horizons(), &[0.25, 1.0, 4.0]) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("solve failed: {e}")),
    };
    let s = &rep.solution;
    let norms: Vec<f64> = s.snapshots.iter().map(|u| lq_norm(u, 12.0)).collect();
    let fit = fit_power_law(&s.times, &norms, Some((0.25, 4.0))).unwrap();
    verdict(
        rep.max_residual < 1e-3 && (fit.exponent + 0.125).abs() < 0.01,
        format!("profile residual {:.2e}, L12 slope {:.6}", rep.max_residual, fit.exponent),
    )
}

fn criterion_10() -> Verdict {
    let p = params(3, 0.0, 1.0, 2.0, -1.0);
    let g = make_grid(3, 2f64.powi(-14), 2f64.powi(14), 449).unwrap();
    let cfg = SolveConfig {
        steps: 16,
        q_report: 12.0,
        picard_tol: 1e-8,
        ..Default::default()
    };
    let horizons: Vec<f64> = (-2..=7).map(|k| 2f64.powi(k)).collect();
    let phi = RadialField::from_fn(&g, |r| 0.05 * r.max(1.0).powf(-0.5), Some(0.5)).unwrap();
    let psi = RadialField::from_fn(&g, |r| 0.05 * r.powf(-0.5), Some(0.5)).unwrap();
    let eng = Engine::for_field(&phi, &p).unwrap();
    let run = || -> hardyheat::Result<_> {
        let u = global_solve_with(&eng, &phi, &p, &cfg, &horizons)?;
        let us = global_solve_with(&eng, &psi, &p, &cfg, &horizons)?;
        compare_asymptotics(&u, &us, AsymMode::Nonlinear, &p, 0.5, &[12.0], (1.0, 100.0))
    };
    match run() {
        Ok(reps) => {
            let r = &reps[0];
            verdict(
                r.passed(0.005) && r.sandwich_ratio < 1.1,
                format!("margin {:.4}, sandwich ratio {:.4}", r.margin, r.sandwich_ratio),
            )
        }
        Err(e) => verdict(false, format!("solve failed: {e}")),
    }
}

fn criterion_11() -> Verdict {
    let p = params(3, 0.0, 1.0, 2.0, 1.0);
    let g = make_grid(3, 1e-6, 40.0, 400).unwrap();
    let cfg = SolveConfig {
        steps: 8,
        q_report: 8.0,
        picard_tol: 1e-8,
        max_picard: 200,
        t_final: 1.0,
        ..Default::default()
    };
    let phi = gaussian_field(&g, 3.0, 1.0).unwrap();
    let bound = (3.0 / 16.0 - 0.25) * 0.75;
    match focusing_run(&phi, &p, &cfg, 8.0) {
        Ok(rep) => match rep.outcome {
            FocusingOutcome::Blowup(b) => verdict(
                b.fit.exponent <= bound,
                format!(
                    "blow-up near t = {:.6} (runs {:.6}, {:.6}), fitted rate {:.4} <= {bound:.6}, r^2 {:.2}",
                    b.t_est, b.t_coarse, b.t_fine, b.fit.exponent, b.fit.r_squared
                ),
            ),
            FocusingOutcome::NoBlowupDetected { t_final } => {
                verdict(true, format!("NoBlowupDetected up to t = {t_final} (vacuous)"))
            }
        },
        Err(e) => verdict(false, format!("focusing run failed: {e}")),
    }
}

fn criterion_12() -> Verdict {
    let p = params(3, 0.0, 1.0, 2.0, 1.0);
    let (s, q) = (12.0, 24.0);
    let constant = |n: usize, steps: usize, c: f64| -> hardyheat::Result<_> {
        let g = make_grid(3, 2f64.powi(-12), 2f64.powi(8), n)?;
        let phi = gaussian_field(&g, c, 1.0)?;
        let cfg = SolveConfig {
            steps,
            picard_tol: 1e-8,
            t_final: 4.0,
            ..Default::default()
        };
        verify_apriori(&picard_solve(&phi, &p, &cfg)?, &p, s, q, None)
    };
    let run = || -> hardyheat::Result<_> {
        Ok((constant(321, 16, 0.5)?, constant(641, 32, 0.5)?, constant(321, 16, 0.25)?))
    };
    match run() {
        Ok((base, fine, half)) => {
            let refine = (fine.constant / base.constant).max(base.constant / fine.constant);
            let model = |a: f64| a * (1.0 + a.powf(p.alpha));
            let trend = (base.bound / half.bound) / (model(base.a) / model(half.a));
            verdict(
                base.passed && refine < 2.0 && (trend - 1.0).abs() < 0.3,
                format!(
                    "C = {:.5} (refined {:.5}, ratio {refine:.4}); halving: bound ratio / A(1+A^alpha) ratio = {trend:.4}",
                    base.constant, fine.constant
                ),
            )
        }
        Err(e) => verdict(false, format!("solve failed: {e}")),
    }
}

fn main() -> ExitCode {
    type Check = (&'static str, fn() -> Verdict, Option<Duration>);
    let checks: [Check; 12] = [
        ("exponent identities", criterion_1, Some(Duration::from_secs(1))),
        ("auxiliary exponent construction", criterion_2, Some(Duration::from_secs(1))),
        ("interpolated exponents", criterion_3, None),
        ("region logic and boundary curves", criterion_4, None),
        ("semigroup Gaussian oracle", criterion_5, Some(Duration::from_secs(5))),
        ("semigroup scaling identity", criterion_6, None),
        ("homogeneous-data decay", criterion_7, Some(Duration::from_secs(10))),
        ("mild solver consistency", criterion_8, None),
        ("self-similar solution", criterion_9, Some(Duration::from_secs(60))),
        ("large-time asymptotics", criterion_10, Some(Duration::from_secs(300))),
        ("blow-up rate consistency", criterion_11, None),
        ("a-priori propagation", criterion_12, None),
    ];
    let mut failed = 0;
    for (k, (name, f, limit)) in checks.iter().enumerate() {
        let start = Instant::now();
        let v = f();
        let took = start.elapsed();
        let in_time = limit.map_or(true, |l| took < l);
        let pass = v.pass && in_time;
        failed += !pass as usize;
        let budget = limit.map_or(String::new(), |l| format!(" / {:.0}s", l.as_secs_f64()));
        println!(
            "{} [{:>2}] {name}: {} ({:.2}s{budget})",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            v.detail,
            took.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
