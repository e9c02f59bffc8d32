use crate::error::{Error, Result};
use crate::gibbs::value::QuadraticValue;
use crate::model::{CoefficientModel, CostSpec, ParamSet};
use crate::scalar::Scalar;

/// `L(rho) = a rho^2 + b rho + c`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic<S: Scalar = f64> {
    pub a: S,
    pub b: S,
    pub c: S,
}

impl<S: Scalar> Quadratic<S> {
    pub fn eval(&self, rho: S) -> S {
        (self.a * rho + self.b) * rho + self.c
    }

    /// Interpolating quadratic through `rho = -1, 0, 1`.
    pub fn fit(l: impl Fn(S) -> S) -> Self {
        let (lm, l0, lp) = (l(-S::one()), l(S::zero()), l(S::one()));
        let two = S::lit(2.0);
        Self { a: (lp + lm) / two - l0, b: (lp - lm) / two, c: l0 }
    }

    pub fn minimum(&self) -> S {
        self.c - self.b * self.b / (S::lit(4.0) * self.a)
    }
}

/// The integrand `L = f_hat + 1/2 sigma_hat^2 v_xx + b_hat v_x` whose
/// minimizer in `rho` identifies the unknown parameter.
pub fn hamiltonian<S: Scalar>(
    model: &CoefficientModel<S>,
    value: &QuadraticValue<S>,
    spec: &CostSpec<S>,
    params: &ParamSet<S>,
    t: S,
    x: S,
    rho: S,
) -> Result<S> {
    Ok(hamiltonian_fn(model, value, spec, params, t, x)?(rho))
}

/// `rho -> L(t, x, rho)` with the time-dependent pieces evaluated once.
pub fn hamiltonian_fn<'a, S: Scalar>(
    model: &'a CoefficientModel<S>,
    value: &QuadraticValue<S>,
    spec: &'a CostSpec<S>,
    params: &ParamSet<S>,
    t: S,
    x: S,
) -> Result<impl Fn(S) -> S + 'a> {
    let p = params.at(t)?;
    let vx = value.dx(t, x)?;
    let vxx = value.dxx(t)?;
    let half = S::lit(0.5);
    Ok(move |rho| {
        let s = model.sigma_hat(p, x, rho);
        spec.running(t, x, rho) + half * s * s * vxx + model.b_hat(p, x, rho) * vx
    })
}

/// Mean and variance of the Gibbs density `exp(-(a rho^2 + b rho)/lambda)`.
pub fn gaussian_reduce<S: Scalar>(a: S, b: S, lambda: S) -> Result<(S, S)> {
    if !(a > S::zero()) {
        return Err(Error::NonIntegrable { quadratic: a.as_f64() });
    }
    let two = S::lit(2.0);
    Ok((-b / (two * a), lambda / (two * a)))
}

/// Gaussian optimal density for a Hamiltonian quadratic in `rho`.
pub fn optimal_gaussian<S: Scalar>(
    model: &CoefficientModel<S>,
    value: &QuadraticValue<S>,
    spec: &CostSpec<S>,
    params: &ParamSet<S>,
    t: S,
    x: S,
) -> Result<(S, S)> {
    let q = Quadratic::fit(hamiltonian_fn(model, value, spec, params, t, x)?);
    gaussian_reduce(q.a, q.b, spec.lambda())
}

/// First-order condition `d_rho f_hat + sigma_hat d_rho sigma_hat v_xx +
/// d_rho b_hat v_x`, derivatives by central difference.
pub fn first_order_residual<S: Scalar>(
    model: &CoefficientModel<S>,
    value: &QuadraticValue<S>,
    spec: &CostSpec<S>,
    params: &ParamSet<S>,
    t: S,
    x: S,
    rho: S,
) -> Result<S> {
    let p = params.at(t)?;
    let vx = value.dx(t, x)?;
    let vxx = value.dxx(t)?;
    let h = S::lit(1e-6) * rho.abs().max(S::one());
    let d = |g: &dyn Fn(S) -> S| (g(rho + h) - g(rho - h)) / (S::lit(2.0) * h);
    let df = d(&|r| spec.running(t, x, r));
    let ds = d(&|r| model.sigma_hat(p, x, r));
    let db = d(&|r| model.b_hat(p, x, r));
    Ok(df + model.sigma_hat(p, x, rho) * ds * vxx + db * vx)
}
