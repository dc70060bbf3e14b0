//! Composite Gauss-Legendre helpers.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

fn rule(n: usize) -> &'static [(f64, f64)] {
    static RULES: [OnceLock<Vec<(f64, f64)>>; 17] = [const { OnceLock::new() }; 17];
    assert!((2..=16).contains(&n), "unsupported rule size {n}");
    RULES[n].get_or_init(|| {
        let gl = GaussLegendre::new(n).expect("valid degree");
        gl.nodes().copied().zip(gl.weights().copied()).collect()
    })
}

/// Nodes and weights of an 8-point rule mapped onto each panel of `breaks`.
pub(crate) fn composite(breaks: &[f64]) -> Vec<(f64, f64)> {
    composite_n(breaks, 8)
}

pub(crate) fn composite_n(breaks: &[f64], n: usize) -> Vec<(f64, f64)> {
    let r = rule(n);
    let mut out = Vec::with_capacity(r.len() * breaks.len().saturating_sub(1));
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (c, hw) = (0.5 * (a + b), 0.5 * (b - a));
        out.extend(r.iter().map(|&(x, wt)| (c + hw * x, hw * wt)));
    }
    out
}

pub(crate) fn uniform_breaks(a: f64, b: f64, panels: usize) -> Vec<f64> {
    (0..=panels).map(|k| a + (b - a) * k as f64 / panels as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        let q = composite(&uniform_breaks(0.0, 2.0, 3));
        let s: f64 = q.iter().map(|(x, w)| w * x.powi(15)).sum();
        assert!((s - 2f64.powi(16) / 16.0).abs() < 1e-9);
    }
}
