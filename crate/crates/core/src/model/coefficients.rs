use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::curve::ParamCurve;
use crate::scalar::Scalar;

/// Parameter values frozen at one instant.
///
/// `beta_feedback` is the diffusion parameter the controller plugs into its
/// feedback law. It equals `beta` unless an estimate is being used in its
/// place (second step of the general case).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params<S: Scalar = f64> {
    pub alpha: S,
    pub beta: S,
    pub beta_feedback: S,
}

impl<S: Scalar> Params<S> {
    pub fn new(alpha: S, beta: S) -> Self {
        Self { alpha, beta, beta_feedback: beta }
    }

    pub fn beta(beta: S) -> Self {
        Self::new(S::zero(), beta)
    }
}

/// Time-varying parameters known to the simulated environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<S: Scalar = f64> {
    pub beta: ParamCurve<S>,
    pub alpha: Option<ParamCurve<S>>,
    pub beta_feedback: Option<ParamCurve<S>>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn beta(beta: ParamCurve<S>) -> Self {
        Self { beta, alpha: None, beta_feedback: None }
    }

    pub fn general(alpha: ParamCurve<S>, beta: ParamCurve<S>) -> Self {
        Self { beta, alpha: Some(alpha), beta_feedback: None }
    }

    pub fn with_beta_feedback(mut self, estimate: ParamCurve<S>) -> Self {
        self.beta_feedback = Some(estimate);
        self
    }

    pub fn at(&self, t: S) -> Result<Params<S>> {
        let beta = self.beta.eval(t)?;
        let alpha = match &self.alpha {
            Some(a) => a.eval(t)?,
            None => S::zero(),
        };
        let beta_feedback = match &self.beta_feedback {
            Some(b) => b.eval(t)?,
            None => beta,
        };
        Ok(Params { alpha, beta, beta_feedback })
    }

    /// Same as [`ParamSet::at`] with `t` clamped into the curve domains.
    pub fn at_clamped(&self, t: S) -> Params<S> {
        let beta = self.beta.eval_clamped(t);
        Params {
            alpha: self.alpha.as_ref().map_or(S::zero(), |a| a.eval_clamped(t)),
            beta,
            beta_feedback: self.beta_feedback.as_ref().map_or(beta, |b| b.eval_clamped(t)),
        }
    }

    /// Distance from `t` to the nearest jump of any parameter curve.
    pub fn distance_to_jump(&self, t: S) -> S {
        [Some(&self.beta), self.alpha.as_ref(), self.beta_feedback.as_ref()]
            .into_iter()
            .flatten()
            .map(|c| c.distance_to_jump(t))
            .fold(S::infinity(), S::min)
    }

    pub fn alpha_curve(&self) -> Result<&ParamCurve<S>> {
        self.alpha.as_ref().ok_or_else(|| Error::InvalidInput("general case needs an alpha curve".into()))
    }
}

/// Which step of the two-parameter procedure a general-case model encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneralStep {
    /// Terminal cost `x^2`; the randomized control substitutes `beta * x`.
    DiffusionStep,
    /// Tracking cost; the randomized control substitutes `alpha * x`.
    DriftStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    DiffusionParam,
    DriftParam,
    General(GeneralStep),
    Custom,
}

impl CaseTag {
    pub fn name(&self) -> &'static str {
        match self {
            CaseTag::DiffusionParam => "diffusion",
            CaseTag::DriftParam => "drift",
            CaseTag::General(GeneralStep::DiffusionStep) => "general-step1",
            CaseTag::General(GeneralStep::DriftStep) => "general-step2",
            CaseTag::Custom => "custom",
        }
    }
}

/// `(params, state, control) -> value`
pub type CoefficientFn<S> = Arc<dyn Fn(Params<S>, S, S) -> S + Send + Sync>;

/// User supplied dynamics. `feedback` maps the substituted control `rho`
/// back to the original control `u`.
#[derive(Clone)]
pub struct CustomCoefficients<S: Scalar = f64> {
    pub drift: CoefficientFn<S>,
    pub diffusion: CoefficientFn<S>,
    pub feedback: CoefficientFn<S>,
}

impl<S: Scalar> CustomCoefficients<S> {
    /// Dynamics given directly in substituted form, so `u = rho`.
    pub fn substituted(
        b_hat: impl Fn(Params<S>, S, S) -> S + Send + Sync + 'static,
        sigma_hat: impl Fn(Params<S>, S, S) -> S + Send + Sync + 'static,
    ) -> Self {
        Self { drift: Arc::new(b_hat), diffusion: Arc::new(sigma_hat), feedback: Arc::new(|_, _, rho| rho) }
    }
}

/// Drift/diffusion pair of a controlled scalar SDE together with the
/// feedback substitution that turns the unknown parameter into a control.
///
/// Named cases:
///
/// | case | `b(x,u)` | `sigma(x,u)` | `u(rho)` |
/// |------|----------|--------------|----------|
/// | diffusion | `x + u` | `beta x + u` | `-x - rho` |
/// | drift | `beta x + u` | `x + u` | `-x - rho` |
/// | general, step 1 | `alpha x + u` | `beta x + u` | `-x - rho` |
/// | general, step 2 | `alpha x + u` | `beta x + u` | `-rho - beta x` |
///
/// The substituted coefficients are always evaluated by composing `b` and
/// `sigma` with the substitution, so the classical feedback run and the
/// substituted run execute identical floating point operations and no
/// `rho / x` term ever appears.
#[derive(Clone)]
pub enum CoefficientModel<S: Scalar = f64> {
    DiffusionParam,
    DriftParam,
    General(GeneralStep),
    Custom(CustomCoefficients<S>),
}

impl<S: Scalar> fmt::Debug for CoefficientModel<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefficientModel({})", self.tag().name())
    }
}

impl<S: Scalar> CoefficientModel<S> {
    pub fn from_tag(tag: CaseTag) -> Result<Self> {
        match tag {
            CaseTag::DiffusionParam => Ok(Self::DiffusionParam),
            CaseTag::DriftParam => Ok(Self::DriftParam),
            CaseTag::General(step) => Ok(Self::General(step)),
            CaseTag::Custom => Err(Error::InvalidInput("custom models need explicit coefficient functions".into())),
        }
    }

    pub fn tag(&self) -> CaseTag {
        match self {
            Self::DiffusionParam => CaseTag::DiffusionParam,
            Self::DriftParam => CaseTag::DriftParam,
            Self::General(step) => CaseTag::General(*step),
            Self::Custom(_) => CaseTag::Custom,
        }
    }

    pub fn is_named(&self) -> bool {
        !matches!(self, Self::Custom(_))
    }

    /// Original drift `b(param, x, u)`.
    pub fn drift(&self, p: Params<S>, x: S, u: S) -> S {
        match self {
            Self::DiffusionParam => x + u,
            Self::DriftParam => p.beta * x + u,
            Self::General(_) => p.alpha * x + u,
            Self::Custom(c) => (c.drift)(p, x, u),
        }
    }

    /// Original diffusion `sigma(param, x, u)`.
    pub fn diffusion(&self, p: Params<S>, x: S, u: S) -> S {
        match self {
            Self::DiffusionParam | Self::General(_) => p.beta * x + u,
            Self::DriftParam => x + u,
            Self::Custom(c) => (c.diffusion)(p, x, u),
        }
    }

    /// Original control produced by the substituted control `rho`.
    pub fn substituted_control(&self, p: Params<S>, x: S, rho: S) -> S {
        match self {
            Self::DiffusionParam | Self::DriftParam | Self::General(GeneralStep::DiffusionStep) => -x - rho,
            Self::General(GeneralStep::DriftStep) => -rho - p.beta_feedback * x,
            Self::Custom(c) => (c.feedback)(p, x, rho),
        }
    }

    /// Substituted drift `b_hat(param, x, rho)`.
    pub fn b_hat(&self, p: Params<S>, x: S, rho: S) -> S {
        self.drift(p, x, self.substituted_control(p, x, rho))
    }

    /// Substituted diffusion `sigma_hat(param, x, rho)`.
    pub fn sigma_hat(&self, p: Params<S>, x: S, rho: S) -> S {
        self.diffusion(p, x, self.substituted_control(p, x, rho))
    }

    /// Parameter that the optimal substituted control recovers as `rho / x`.
    pub fn target_slope(&self, p: Params<S>) -> Option<S> {
        match self {
            Self::DiffusionParam | Self::DriftParam | Self::General(GeneralStep::DiffusionStep) => Some(p.beta),
            Self::General(GeneralStep::DriftStep) => Some(p.alpha),
            Self::Custom(_) => None,
        }
    }

    /// Classical optimal feedback `u*(param, x)`, written as the
    /// substitution evaluated at `rho = target * x`.
    pub fn optimal_feedback(&self, p: Params<S>, x: S) -> Option<S> {
        let slope = self.target_slope(p)?;
        Some(self.substituted_control(p, x, slope * x))
    }

    pub fn needs_alpha(&self) -> bool {
        matches!(self, Self::General(_))
    }

    pub fn validate_params(&self, params: &ParamSet<S>) -> Result<()> {
        if self.needs_alpha() {
            let alpha = params.alpha_curve()?;
            if alpha.t0() != params.beta.t0() || alpha.t_end() != params.beta.t_end() {
                return Err(Error::InvalidInput("alpha and beta curves must share a domain".into()));
            }
        }
        Ok(())
    }
}
