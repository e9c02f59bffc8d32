use crate::error::Result;
use crate::model::curve::ParamCurve;
use crate::scalar::Scalar;

/// Quadratic value function `v(t, x) = a1(t) x^2 + a2(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticValue<S: Scalar = f64> {
    pub a1: ParamCurve<S>,
    pub a2: ParamCurve<S>,
}

impl<S: Scalar> QuadraticValue<S> {
    pub fn new(a1: ParamCurve<S>, a2: ParamCurve<S>) -> Self {
        Self { a1, a2 }
    }

    pub fn value(&self, t: S, x: S) -> Result<S> {
        Ok(self.a1.eval(t)? * x * x + self.a2.eval(t)?)
    }

    /// `d/dx v = 2 a1(t) x`
    pub fn dx(&self, t: S, x: S) -> Result<S> {
        Ok(S::lit(2.0) * self.a1.eval(t)? * x)
    }

    /// `d^2/dx^2 v = 2 a1(t)`
    pub fn dxx(&self, t: S) -> Result<S> {
        Ok(S::lit(2.0) * self.a1.eval(t)?)
    }

    /// Central difference in time with half-width `h`.
    pub fn dt(&self, t: S, x: S, h: S) -> Result<S> {
        Ok((self.value(t + h, x)? - self.value(t - h, x)?) / (S::lit(2.0) * h))
    }

    /// Same value with `a1` multiplied by `factor`.
    pub fn scale_a1(&self, factor: S) -> Self {
        Self { a1: self.a1.map(|v| v * factor), a2: self.a2.clone() }
    }
}
