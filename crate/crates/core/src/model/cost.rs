use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::coefficients::{CaseTag, GeneralStep, ParamSet};
use crate::model::curve::ParamCurve;
use crate::scalar::Scalar;

/// `(t, x, rho) -> f_hat`
pub type RunningCostFn<S> = Arc<dyn Fn(S, S, S) -> S + Send + Sync>;
pub type TerminalCostFn<S> = Arc<dyn Fn(S) -> S + Send + Sync>;

/// Running cost in the substituted control, terminal cost and temperature.
#[derive(Clone)]
pub struct CostSpec<S: Scalar = f64> {
    running: RunningCostFn<S>,
    terminal: TerminalCostFn<S>,
    lambda: S,
    uses_control: bool,
}

impl<S: Scalar> fmt::Debug for CostSpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostSpec")
            .field("lambda", &self.lambda)
            .field("uses_control", &self.uses_control)
            .finish_non_exhaustive()
    }
}

impl<S: Scalar> CostSpec<S> {
    /// `uses_control` declares whether the running cost reads `rho`; cost
    /// evaluation without a policy then needs recorded controls.
    pub fn new(
        running: impl Fn(S, S, S) -> S + Send + Sync + 'static,
        terminal: impl Fn(S) -> S + Send + Sync + 'static,
        lambda: S,
        uses_control: bool,
    ) -> Result<Self> {
        if !(lambda > S::zero() && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("temperature must satisfy lambda > 0, got {lambda}")));
        }
        Ok(Self { running: Arc::new(running), terminal: Arc::new(terminal), lambda, uses_control })
    }

    /// `f = 0`, `Phi = x^2`.
    pub fn terminal_square(lambda: S) -> Result<Self> {
        Self::new(|_, _, _| S::zero(), |x| x * x, lambda, false)
    }

    /// `f = (rho - c(t) x)^2`, `Phi = 0`.
    pub fn tracking(target: ParamCurve<S>, lambda: S) -> Result<Self> {
        Self::new(
            move |t, x, rho| {
                let e = rho - target.eval_clamped(t) * x;
                e * e
            },
            |_| S::zero(),
            lambda,
            true,
        )
    }

    /// Cost functional paired with a named case.
    pub fn for_case(tag: CaseTag, params: &ParamSet<S>, lambda: S) -> Result<Self> {
        match tag {
            CaseTag::DiffusionParam | CaseTag::General(GeneralStep::DiffusionStep) => Self::terminal_square(lambda),
            CaseTag::DriftParam => Self::tracking(params.beta.clone(), lambda),
            CaseTag::General(GeneralStep::DriftStep) => Self::tracking(params.alpha_curve()?.clone(), lambda),
            CaseTag::Custom => Err(Error::InvalidInput("custom cases need an explicit cost".into())),
        }
    }

    pub fn running(&self, t: S, x: S, rho: S) -> S {
        (self.running)(t, x, rho)
    }

    pub fn terminal(&self, x: S) -> S {
        (self.terminal)(x)
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    pub fn uses_control(&self) -> bool {
        self.uses_control
    }

    pub fn with_lambda(&self, lambda: S) -> Result<Self> {
        if !(lambda > S::zero()) {
            return Err(Error::InvalidInput(format!("temperature must satisfy lambda > 0, got {lambda}")));
        }
        Ok(Self { lambda, ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_costs() {
        let beta = ParamCurve::constant(0.5, 0.0, 1.0).unwrap();
        let params = ParamSet::beta(beta);
        let c = CostSpec::for_case(CaseTag::DriftParam, &params, 0.1).unwrap();
        assert_eq!(c.running(0.2, 2.0, 1.0), 0.0);
        assert_eq!(c.terminal(3.0), 0.0);
        assert!(c.uses_control());
        let d = CostSpec::for_case(CaseTag::DiffusionParam, &params, 0.1).unwrap();
        assert_eq!(d.terminal(3.0), 9.0);
        assert_eq!(d.running(0.0, 3.0, 1.0), 0.0);
    }

    #[test]
    fn lambda_must_be_positive() {
        assert!(CostSpec::<f64>::terminal_square(0.0).is_err());
        assert!(CostSpec::<f64>::terminal_square(-1.0).is_err());
    }
}
