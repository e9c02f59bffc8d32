use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::scalar::Scalar;

/// Gibbs density `p(rho) ∝ exp(-L(rho) / lambda)` tabulated on a uniform
/// grid and normalized with the trapezoidal rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsDensity<S: Scalar = f64> {
    rho: Vec<S>,
    /// `-L / lambda` shifted so that its maximum is zero.
    log_weights: Vec<S>,
    density: Vec<S>,
    log_normalizer: S,
}

fn trapezoid<S: Scalar>(values: &[S], h: S) -> S {
    let n = values.len();
    let inner: S = values.iter().copied().sum();
    h * (inner - (values[0] + values[n - 1]) / S::lit(2.0))
}

/// Tabulate the Gibbs density of `l` on `m` points spanning `range`.
pub fn gibbs_density<S: Scalar>(l: impl Fn(S) -> S, lambda: S, range: (S, S), m: usize) -> Result<GibbsDensity<S>> {
    if !(lambda > S::zero()) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    if m < 3 {
        return Err(Error::InvalidInput(format!("Gibbs grid needs at least 3 points, got {m}")));
    }
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidInput(format!("bad Gibbs grid range [{lo}, {hi}]")));
    }
    let h = (hi - lo) / S::from_usize(m - 1).unwrap();
    let rho: Vec<S> = (0..m).map(|j| if j == m - 1 { hi } else { lo + S::from_usize(j).unwrap() * h }).collect();
    let raw: Vec<S> = rho.iter().map(|&r| -l(r) / lambda).collect();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("Hamiltonian is not finite on the grid; narrow or re-center the rho range".into()));
    }
    let shift = raw.iter().copied().fold(S::neg_infinity(), S::max);
    let log_weights: Vec<S> = raw.iter().map(|&v| v - shift).collect();
    let weights: Vec<S> = log_weights.iter().map(|v| v.exp()).collect();
    if weights.iter().filter(|w| **w > S::zero()).count() < 3 {
        return Err(Error::Range(
            "all but a couple of Gibbs weights underflow; widen the grid or center it on the minimum of L".into(),
        ));
    }
    let mass = trapezoid(&weights, h);
    let density = weights.iter().map(|&w| w / mass).collect();
    Ok(GibbsDensity { rho, log_weights, density, log_normalizer: mass.ln() + shift })
}

/// Default grid: centered on the minimizer of `l`, half-width eight local
/// standard deviations.
pub fn gibbs_density_auto<S: Scalar>(l: impl Fn(S) -> S, lambda: S, m: usize) -> Result<GibbsDensity<S>> {
    let center = minimize_scalar(&l)?;
    let h = S::lit(1e-2) * (S::one() + center.abs());
    let curvature = (l(center + h) - S::lit(2.0) * l(center) + l(center - h)) / (h * h);
    let a_loc = curvature / S::lit(2.0);
    if !(a_loc > S::zero()) {
        return Err(Error::NonIntegrable { quadratic: a_loc.as_f64() });
    }
    let half = S::lit(8.0) * (lambda / (S::lit(2.0) * a_loc)).sqrt();
    gibbs_density(l, lambda, (center - half, center + half), m)
}

/// Downhill bracketing followed by golden-section search.
pub(crate) fn minimize_scalar<S: Scalar>(f: impl Fn(S) -> S) -> Result<S> {
    let golden = S::lit(1.618_033_988_749_895);
    let (mut a, mut b) = (S::zero(), S::one());
    let (mut fa, mut fb) = (f(a), f(b));
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = b + golden * (b - a);
    let mut fc = f(c);
    let mut expansions = 0;
    while fc < fb {
        expansions += 1;
        if expansions > 200 || !fc.is_finite() {
            return Err(Error::NonIntegrable { quadratic: f64::NEG_INFINITY });
        }
        a = b;
        b = c;
        fb = fc;
        c = b + golden * (b - a);
        fc = f(c);
    }
    let (mut lo, mut hi) = if a < c { (a, c) } else { (c, a) };
    let inv = S::one() / golden;
    let mut x1 = hi - inv * (hi - lo);
    let mut x2 = lo + inv * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (hi - lo).abs() <= S::lit(1e-12) * (S::one() + lo.abs() + hi.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv * (hi - lo);
            f2 = f(x2);
        }
    }
    Ok((lo + hi) / S::lit(2.0))
}

impl<S: Scalar> GibbsDensity<S> {
    pub fn rho(&self) -> &[S] {
        &self.rho
    }

    pub fn density(&self) -> &[S] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn step(&self) -> S {
        self.rho[1] - self.rho[0]
    }

    /// `ln Z` with `Z = int exp(-L / lambda) d rho` on the grid.
    pub fn log_normalizer(&self) -> S {
        self.log_normalizer
    }

    pub fn total_mass(&self) -> S {
        trapezoid(&self.density, self.step())
    }

    /// Both end densities are negligible against the peak.
    pub fn boundary_ok(&self) -> bool {
        let peak = self.density.iter().copied().fold(S::zero(), S::max);
        let tol = S::lit(1e-12) * peak;
        self.density[0] < tol && self.density[self.len() - 1] < tol
    }

    /// Mean and variance under the trapezoidal rule.
    pub fn moments(&self) -> (S, S) {
        let h = self.step();
        let xs: Vec<S> = self.rho.iter().zip(&self.density).map(|(&r, &p)| r * p).collect();
        let mean = trapezoid(&xs, h);
        let sq: Vec<S> = self.rho.iter().zip(&self.density).map(|(&r, &p)| (r - mean) * (r - mean) * p).collect();
        (mean, trapezoid(&sq, h))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "rho,density")?;
        for (r, p) in self.rho.iter().zip(&self.density) {
            writeln!(out, "{},{}", fmt_float(*r), fmt_float(*p))?;
        }
        Ok(())
    }
}

/// Grid argmax refined by the parabola through the log-density at the
/// three surrounding points. Near-equal maxima resolve to the smallest rho.
pub fn density_argmax<S: Scalar>(d: &GibbsDensity<S>) -> Result<S> {
    let tie = S::lit(1e-9);
    let peak = d.log_weights.iter().copied().fold(S::neg_infinity(), S::max);
    let j = d.log_weights.iter().position(|&w| w >= peak - tie).unwrap();
    if j == 0 || j == d.len() - 1 {
        return Err(Error::Range(format!(
            "density maximum sits on the grid boundary rho = {}; widen the grid",
            d.rho[j]
        )));
    }
    let (lm, l0, lp) = (d.log_weights[j - 1], d.log_weights[j], d.log_weights[j + 1]);
    let denom = lm - S::lit(2.0) * l0 + lp;
    let offset = if denom < S::zero() { (lm - lp) / (S::lit(2.0) * denom) } else { S::zero() };
    Ok(d.rho[j] + offset * d.step())
}

/// Inverse-CDF sampling; the density is linear inside each cell, matching
/// the trapezoidal normalization.
pub fn density_sample<S: Scalar>(d: &GibbsDensity<S>, n: usize, seed: u64) -> Vec<S> {
    let h = d.step();
    let half = S::lit(0.5);
    let mut cumulative = Vec::with_capacity(d.len());
    let mut acc = S::zero();
    cumulative.push(acc);
    for w in d.density.windows(2) {
        acc = acc + half * h * (w[0] + w[1]);
        cumulative.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let target = S::unit_uniform(&mut rng) * total;
            let cell = (cumulative.partition_point(|c| *c <= target).max(1) - 1).min(d.len() - 2);
            let r = target - cumulative[cell];
            let (p0, p1) = (d.density[cell], d.density[cell + 1]);
            let slope = (p1 - p0) / (S::lit(2.0) * h);
            let disc = (p0 * p0 + S::lit(4.0) * slope * r).max(S::zero());
            let denom = p0 + disc.sqrt();
            let s = if denom > S::zero() { S::lit(2.0) * r / denom } else { S::zero() };
            d.rho[cell] + s.max(S::zero()).min(h)
        })
        .collect()
}
