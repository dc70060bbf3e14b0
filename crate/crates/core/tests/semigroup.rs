use std::sync::Arc;

use hardyheat::exponents::{compute_exponents, smoothing_admissible, Parameters};
use hardyheat::grid::{gaussian_field, power_law_field};
use hardyheat::semigroup::*;
use hardyheat::{analysis::fit_power_law, lq_norm, make_grid, Error, RadialField, RadialGrid};
use statrs::function::gamma::gamma;

fn params(a: f64, b: f64) -> Parameters {
    Parameters::new(3, a, b, 2.0, 0.0).unwrap()
}

fn annulus(g: &Arc<RadialGrid>) -> RadialField {
    RadialField::from_fn(g, |r| (-(r - 2.0) * (r - 2.0)).exp(), None).unwrap()
}

/// `e^{-z} I_ν(z)` by its power series, summed in log space.
fn series_oracle(nu: f64, z: f64) -> f64 {
    let mut s = 0.0;
    for k in 0..400 {
        let k = k as f64;
        let ln_term = (2.0 * k + nu) * (0.5 * z).ln() - statrs::function::gamma::ln_gamma(k + 1.0)
            - statrs::function::gamma::ln_gamma(k + nu + 1.0)
            - z;
        let term = ln_term.exp();
        s += term;
        if k > z && term < 1e-18 * s {
            break;
        }
    }
    s
}

#[test]
fn bessel_against_series_and_closed_forms() {
    for &nu in &[0.0, 0.354, 1.0, 1.118, 2.5] {
        for &z in &[1e-6, 0.01, 0.7, 3.0, 15.0, 25.0, 60.0] {
            let got = bessel_i_scaled(nu, z);
            let want = series_oracle(nu, z);
            assert!((got / want - 1.0).abs() < 1e-12, "nu {nu} z {z}: {got} vs {want}");
        }
    }
    // I_{3/2}(z) = sqrt(2/(πz)) (cosh z - sinh z / z)
    for &z in &[1.0, 5.0, 30.0, 1e3, 1e6, 1e8] {
        let e2 = (-2.0f64 * z).exp();
        let want = (2.0 / (std::f64::consts::PI * z)).sqrt() * (0.5 * (1.0 + e2) - 0.5 * (1.0 - e2) / z);
        let got = bessel_i_scaled(1.5, z);
        assert!((got / want - 1.0).abs() < 1e-12, "z {z}");
    }
    // Large argument: (2πz)^{-1/2} (1 - (4ν²-1)/(8z) + (4ν²-1)(4ν²-9)/(2(8z)²))
    let z = 1e6f64;
    for &nu in &[0.0, 0.7, 3.0] {
        let m = 4.0 * nu * nu;
        let c = 1.0 - (m - 1.0) / (8.0 * z) + (m - 1.0) * (m - 9.0) / (2.0 * (8.0 * z).powi(2));
        let want = c / (2.0 * std::f64::consts::PI * z).sqrt();
        assert!((bessel_i_scaled(nu, z) / want - 1.0).abs() < 1e-9);
    }
    // Leading small-z behaviour (z/2)^ν / Γ(ν+1).
    assert!((bessel_i_scaled(2.0, 1e-9) / (0.25e-18 / gamma(3.0)) - 1.0).abs() < 1e-8);
}

#[test]
fn positivity_for_all_couplings() {
    let g = make_grid(3, 1e-4, 50.0, 300).unwrap();
    for &a in &[-0.25, -0.125, 0.0, 1.0, 6.0] {
        let ex = compute_exponents(&params(a, 1.0)).unwrap();
        for &t in &[1e-6, 1e-3, 0.3, 10.0] {
            let op = build_operator_with_tails(&g, &ex, t, &[0.5]).unwrap();
            assert!(op.matrix.min_entry() >= 0.0, "a {a} t {t}");
            let u = apply(&op, &annulus(&g)).unwrap();
            assert!(u.values.iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn truncation_is_negligible_when_r_max_doubles() {
    // Same spacing on both grids, so the first 321 nodes coincide.
    let small = make_grid(3, 40.0 * 2f64.powi(-16), 40.0, 321).unwrap();
    let large = make_grid(3, 40.0 * 2f64.powi(-16), 80.0, 341).unwrap();
    assert!((small.h - large.h).abs() < 1e-15);
    for &a in &[-0.125, 0.0, 1.0] {
        let ex = compute_exponents(&params(a, 1.0)).unwrap();
        for t in [0.1, 1.0] {
            let ps = build_operator(&small, &ex, t).unwrap();
            let pl = build_operator(&large, &ex, t).unwrap();
            for data in [|g: &Arc<RadialGrid>| gaussian_field(g, 1.0, 1.0).unwrap(), annulus] {
                let us = apply(&ps, &data(&small)).unwrap();
                let ul = apply(&pl, &data(&large)).unwrap();
                let diff: Vec<f64> = us.values.iter().zip(&ul.values).map(|(x, y)| x - y).collect();
                let head = RadialField::new(small.clone(), diff, None).unwrap();
                let rel = lq_norm(&head, 2.0) / lq_norm(&us, 2.0);
                assert!(rel < 1e-8, "a {a} t {t}: {rel:e}");
            }
        }
    }
}

#[test]
fn identity_limit() {
    let g = make_grid(3, 1e-4, 40.0, 400).unwrap();
    let ex = compute_exponents(&params(0.5, 1.0)).unwrap();
    let phi = annulus(&g);
    let u = apply(&build_operator(&g, &ex, 1e-4).unwrap(), &phi).unwrap();
    assert!(lq_norm(&u.sub(&phi).unwrap(), 2.0) / lq_norm(&phi, 2.0) < 1e-3);
}

#[test]
fn semigroup_law_with_potential() {
    let g = make_grid(3, 2f64.powi(-14), 2f64.powi(8), 353).unwrap();
    for &a in &[-0.125, 1.0] {
        let ex = compute_exponents(&params(a, 1.0)).unwrap();
        let phi = annulus(&g);
        let a1 = build_operator(&g, &ex, 0.3).unwrap();
        let a2 = build_operator(&g, &ex, 0.7).unwrap();
        let one = build_operator(&g, &ex, 1.0).unwrap();
        let lhs = apply(&a2, &apply(&a1, &phi).unwrap()).unwrap();
        let rhs = apply(&one, &phi).unwrap();
        assert!(lq_norm(&lhs.sub(&rhs).unwrap(), 2.0) / lq_norm(&rhs, 2.0) < 1e-6);
    }
}

#[test]
fn smoothing_with_zero_weight_is_apply() {
    let g = make_grid(3, 1e-3, 30.0, 200).unwrap();
    let ex = compute_exponents(&params(0.0, 1.0)).unwrap();
    let op = build_operator(&g, &ex, 0.5).unwrap();
    let phi = annulus(&g);
    assert_eq!(apply_smoothing(&op, &phi, 0.0).unwrap().values, apply(&op, &phi).unwrap().values);
    assert!(matches!(apply_smoothing(&op, &phi, -1.0), Err(Error::InvalidInput(_))));
    let other = make_grid(3, 1e-3, 30.0, 201).unwrap();
    assert!(matches!(apply(&op, &annulus(&other)), Err(Error::GridMismatch)));
}

/// `sup_t t^{(d/2)(1/p-1/q)+b/2} ‖e^{-t𝓛}(r^{-b} f)‖_q` over `t ∈ [0.1, 100]`.
fn smoothing_sup(g: &Arc<RadialGrid>, p: &Parameters, pq: (f64, f64)) -> f64 {
    let ex = compute_exponents(p).unwrap();
    let f = gaussian_field(g, 1.0, 0.25).unwrap();
    let fp = lq_norm(&f, pq.0);
    let rate = 1.5 * (1.0 / pq.0 - 1.0 / pq.1) + 0.5 * p.b;
    (0..=12)
        .map(|k| {
            let t = 0.1 * 10f64.powf(k as f64 / 4.0);
            let op = build_operator(g, &ex, t).unwrap();
            t.powf(rate) * lq_norm(&apply_smoothing(&op, &f, p.b).unwrap(), pq.1) / fp
        })
        .fold(0.0, f64::max)
}

#[test]
fn smoothing_rate_bounded_and_refinement_stable() {
    let p = params(-0.125, 1.0);
    let pq = (2.0, 6.0);
    assert!(smoothing_admissible(&p, pq, 1.0).unwrap());
    let g = make_grid(3, 2f64.powi(-12), 2f64.powi(8), 161).unwrap();
    let coarse = smoothing_sup(&g, &p, pq);
    let fine = smoothing_sup(&g.refine().unwrap(), &p, pq);
    assert!(coarse.is_finite() && coarse > 0.0);
    assert!((fine / coarse).max(coarse / fine) < 2.0, "{coarse} vs {fine}");
}

#[test]
fn homogeneous_composite_slope() {
    let p = params(0.0, 1.0);
    let ex = compute_exponents(&p).unwrap();
    let g = make_grid(3, 2f64.powi(-14), 2f64.powi(14), 449).unwrap();
    let f = power_law_field(&g, 1.0, 0.5, None, None).unwrap();
    let q = 6.0;
    let ts: Vec<f64> = (0..=12).map(|k| 0.1 * 10f64.powf(k as f64 / 4.0)).collect();
    let norms: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let op = build_operator_with_tails(&g, &ex, t, &[1.5]).unwrap();
            lq_norm(&apply_smoothing(&op, &f, 1.0).unwrap(), q)
        })
        .collect();
    let fit = fit_power_law(&ts, &norms, None).unwrap();
    let want = -(0.5 + 1.0) / 2.0 + 3.0 / (2.0 * q);
    assert!((fit.exponent - want).abs() < 1e-2, "{} vs {want}", fit.exponent);
}

#[test]
fn decay_ratio_behaviour() {
    let g = make_grid(3, 1e-4, 200.0, 300).unwrap();
    let f = gaussian_field(&g, 1.0, 0.1).unwrap();
    let ts: Vec<f64> = (0..=12).map(|k| 0.1 * 10f64.powf(k as f64 / 4.0)).collect();

    let gauss = decay_ratio_series(&params(0.0, 1.0), (1.2, 2.0), &f, &ts).unwrap();
    // Closed form: ‖e^{-|x|²/4s}‖_p = (4πs/p)^{3/(2p)}, and the flow stays Gaussian.
    let (s, pi4) = (0.1, 4.0 * std::f64::consts::PI);
    for &(t, ratio) in &gauss {
        let num = (s / (s + t)).powf(1.5) * (pi4 * (s + t) / 2.0).powf(0.75);
        let want = num / (t.powf(-1.5 * (1.0 / 1.2 - 0.5)) * (pi4 * s / 1.2).powf(1.25));
        assert!((ratio / want - 1.0).abs() < 1e-6, "t {t}: {ratio} vs {want}");
    }
    assert!(gauss.iter().all(|x| x.1 < 1.0));

    let same = decay_ratio_series(&params(1.0, 1.0), (2.0, 2.0), &f, &ts).unwrap();
    assert!(same.iter().all(|x| x.1 <= 1.0 + 1e-12));
    assert!(same.windows(2).take(4).all(|w| w[1].1 <= w[0].1));

    // d/q below s̃₁ for a < 0: rejected, but the diagnostic still evaluates.
    let neg = params(-0.125, 1.0);
    assert!(matches!(
        decay_ratio_series(&neg, (2.0, 30.0), &f, &ts),
        Err(Error::InadmissiblePair { .. })
    ));
    assert_eq!(decay_ratio_series_diagnostic(&neg, (2.0, 30.0), &f, &ts).unwrap().len(), ts.len());
}
