use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{CoefficientModel, ParamCurve, Params};
use crate::quadrature::gaussian_expectation;
use crate::scalar::Scalar;

/// Time-indexed Gaussian family `pi_t = N(mean_slope(t) x, variance(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy<S: Scalar = f64> {
    mean_slope: ParamCurve<S>,
    variance: ParamCurve<S>,
}

impl<S: Scalar> GaussianPolicy<S> {
    pub fn new(mean_slope: ParamCurve<S>, variance: ParamCurve<S>) -> Result<Self> {
        if variance.values().iter().any(|v| !(*v > S::zero())) {
            return Err(Error::InvalidInput("policy variance must be positive".into()));
        }
        Ok(Self { mean_slope, variance })
    }

    pub fn mean_slope(&self) -> &ParamCurve<S> {
        &self.mean_slope
    }

    pub fn variance_curve(&self) -> &ParamCurve<S> {
        &self.variance
    }

    pub fn mean(&self, t: S, x: S) -> Result<S> {
        Ok(self.mean_slope.eval(t)? * x)
    }

    pub fn variance(&self, t: S) -> Result<S> {
        self.variance.eval(t)
    }

    pub fn pdf(&self, t: S, x: S, rho: S) -> Result<S> {
        let m = self.mean(t, x)?;
        let v = self.variance(t)?;
        let two_pi = S::lit(2.0) * S::PI();
        Ok((-(rho - m) * (rho - m) / (S::lit(2.0) * v)).exp() / (two_pi * v).sqrt())
    }

    pub fn sample<R: Rng + ?Sized>(&self, t: S, x: S, rng: &mut R) -> Result<S> {
        Ok(self.mean(t, x)? + self.variance(t)?.sqrt() * S::standard_normal(rng))
    }

    pub fn with_slope_offset(&self, offset: S) -> Self {
        Self { mean_slope: self.mean_slope.map(|c| c + offset), variance: self.variance.clone() }
    }

    pub fn with_variance_factor(&self, factor: S) -> Result<Self> {
        Self::new(self.mean_slope.clone(), self.variance.map(|v| v * factor))
    }
}

/// `int pi ln pi = -1/2 ln(2 pi e var(t))` for the Gaussian at time `t`.
pub fn entropy_term<S: Scalar>(policy: &GaussianPolicy<S>, t: S) -> Result<S> {
    Ok(gaussian_neg_entropy(policy.variance(t)?))
}

pub(crate) fn gaussian_neg_entropy<S: Scalar>(variance: S) -> S {
    -(S::lit(2.0) * S::PI() * S::E() * variance).ln() / S::lit(2.0)
}

/// Exploratory drift and diffusion `(b_tilde, sigma_tilde)` at state `x`
/// for a Gaussian control law `N(mean, variance)`; the positive root is
/// taken for the diffusion.
///
/// Named models are affine in the control with unit negative slope in both
/// coefficients, so `b_tilde = b_hat(mean)` and
/// `sigma_tilde^2 = sigma_hat(mean)^2 + variance`. Custom models go
/// through Gauss–Hermite quadrature.
pub fn exploratory_coefficients<S: Scalar>(
    model: &CoefficientModel<S>,
    p: Params<S>,
    x: S,
    mean: S,
    variance: S,
) -> (S, S) {
    if model.is_named() {
        let s = model.sigma_hat(p, x, mean);
        return (model.b_hat(p, x, mean), (s * s + variance).sqrt());
    }
    gauss_hermite_coefficients(model, p, x, mean, variance)
}

pub(crate) fn gauss_hermite_coefficients<S: Scalar>(
    model: &CoefficientModel<S>,
    p: Params<S>,
    x: S,
    mean: S,
    variance: S,
) -> (S, S) {
    let drift = gaussian_expectation(mean, variance, |rho| model.b_hat(p, x, rho));
    let second = gaussian_expectation(mean, variance, |rho| {
        let s = model.sigma_hat(p, x, rho);
        s * s
    });
    (drift, second.max(S::zero()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(var: f64) -> GaussianPolicy {
        GaussianPolicy::new(ParamCurve::constant(0.3, 0.0, 1.0).unwrap(), ParamCurve::constant(var, 0.0, 1.0).unwrap())
            .unwrap()
    }

    #[test]
    fn entropy_examples() {
        let pi2e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
        assert!(entropy_term(&policy(1.0 / pi2e), 0.5).unwrap().abs() < 1e-15);
        let v = std::f64::consts::E / (2.0 * std::f64::consts::PI);
        assert!((entropy_term(&policy(v), 0.5).unwrap() + 1.0).abs() < 1e-15);
        let a = entropy_term(&policy(0.2), 0.0).unwrap();
        let b = entropy_term(&policy(0.4), 0.0).unwrap();
        assert!((a - b - 0.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_variance() {
        let r = GaussianPolicy::new(
            ParamCurve::constant(0.3, 0.0, 1.0).unwrap(),
            ParamCurve::constant(0.0, 0.0, 1.0).unwrap(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn exploratory_moments_of_linear_cases() {
        // Gaussian second-moment expansion as oracle.
        let p: Params = Params::beta(0.3);
        let (x, mu, var) = (1.4, 0.42, 0.05);
        let (b, s) = exploratory_coefficients(&CoefficientModel::DiffusionParam, p, x, mu, var);
        assert!((b + mu).abs() < 1e-13);
        let e = (p.beta - 1.0) * x - mu;
        assert!((s * s - (e * e + var)).abs() < 1e-13);

        let (b, s) = exploratory_coefficients(&CoefficientModel::DriftParam, p, x, mu, var);
        assert!((b - ((p.beta - 1.0) * x - mu)).abs() < 1e-13);
        assert!((s * s - (mu * mu + var)).abs() < 1e-13);
    }

    #[test]
    fn closed_moments_agree_with_quadrature() {
        use crate::model::GeneralStep;
        let p: Params = Params { alpha: 0.2, beta: 0.4, beta_feedback: 0.37 };
        for model in [
            CoefficientModel::DiffusionParam,
            CoefficientModel::DriftParam,
            CoefficientModel::General(GeneralStep::DiffusionStep),
            CoefficientModel::General(GeneralStep::DriftStep),
        ] {
            for x in [-1.5, 0.0, 0.8] {
                let closed = exploratory_coefficients(&model, p, x, 0.3 * x + 0.1, 0.07);
                let quad = gauss_hermite_coefficients(&model, p, x, 0.3 * x + 0.1, 0.07);
                assert!((closed.0 - quad.0).abs() < 1e-13);
                assert!((closed.1 - quad.1).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        let pol = policy(0.05);
        let h = 1e-3;
        let total: f64 = (-2000..=2000).map(|j| pol.pdf(0.0, 1.0, 0.3 + j as f64 * h).unwrap() * h).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}
