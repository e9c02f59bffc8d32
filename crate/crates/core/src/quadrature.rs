//! Small quadrature helpers: Gauss–Hermite expectations under a normal law
//! and Simpson's rule.

use std::sync::OnceLock;

use crate::scalar::Scalar;

const HERMITE_NODES: usize = 24;

/// Nodes and weights of the physicists' Gauss–Hermite rule, weight `exp(-x^2)`.
fn hermite_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(HERMITE_NODES))
}

/// Newton iteration on the orthonormal Hermite recurrence.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `E[f(Y)]` for `Y ~ N(mean, variance)`; exact for polynomials of degree
/// below 48.
pub fn gaussian_expectation<S: Scalar>(mean: S, variance: S, f: impl Fn(S) -> S) -> S {
    let (nodes, weights) = hermite_rule();
    let scale = (S::lit(2.0) * variance.max(S::zero())).sqrt();
    let inv_sqrt_pi = S::lit(std::f64::consts::PI.sqrt().recip());
    nodes.iter().zip(weights).map(|(&z, &w)| S::lit(w) * f(mean + scale * S::lit(z))).sum::<S>() * inv_sqrt_pi
}

/// Simpson's rule on one panel.
pub fn simpson<S: Scalar>(a: S, b: S, f: impl Fn(S) -> S) -> S {
    let mid = (a + b) / S::lit(2.0);
    (b - a) / S::lit(6.0) * (f(a) + S::lit(4.0) * f(mid) + f(b))
}
