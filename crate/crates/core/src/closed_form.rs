//! Exact solutions of the three linear case studies and of the classical
//! (unexplored) diffusion problem.
//!
//! Every value function here has the form `a1(t) x^2 + a2(t)` with
//!
//! ```text
//! a1(t) = exp(int_t^T r(s) ds)
//! a2(t) = -(lambda/2) int_t^T ln(pi lambda / A(s)) ds
//! ```
//!
//! where `r` is a piecewise-constant rate and `A` is the coefficient of
//! `rho^2` in the Hamiltonian (`a1` itself, or `1` for the tracking costs).
//! `a2` solves `a2' = (lambda/2) ln(pi lambda / A)`, `a2(T) = 0`.
//!
//! Curves are node-valued on the supplied grid: `a1` is exact at every node
//! and `a2` is accumulated backwards from `T` with Simpson panels split at
//! the rate's knots. Between knots `ln a1` is linear, so the panels are
//! exact up to rounding.

use std::io::Write;

use crate::error::{Error, Result};
use crate::gibbs::{GaussianPolicy, QuadraticValue};
use crate::io::fmt_float;
use crate::model::{CaseTag, GeneralStep, ParamCurve, ParamSet, TimeGrid};
use crate::quadrature::simpson;
use crate::scalar::Scalar;

/// Value function and optimal Gaussian policy of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSolution<S: Scalar = f64> {
    pub value: QuadraticValue<S>,
    pub policy: GaussianPolicy<S>,
}

/// Both steps of the joint drift/diffusion problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralSolution<S: Scalar = f64> {
    /// `theta1(t) x^2 + theta2(t)` for the diffusion step.
    pub step1: CaseSolution<S>,
    /// Tracking step; its value carries no `x^2` term.
    pub step2: CaseSolution<S>,
}

/// Classical optimum of the diffusion case: `b1(t) x^2` with feedback
/// `rho* = slope(t) x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSolution<S: Scalar = f64> {
    pub value: QuadraticValue<S>,
    pub slope: ParamCurve<S>,
}

impl<S: Scalar> ClassicalSolution<S> {
    pub fn feedback(&self, t: S, x: S) -> Result<S> {
        Ok(self.slope.eval(t)? * x)
    }
}

fn check_lambda<S: Scalar>(lambda: S) -> Result<()> {
    if !(lambda > S::zero() && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

fn check_domain<S: Scalar>(curve: &ParamCurve<S>, grid: &TimeGrid<S>, name: &str) -> Result<()> {
    if curve.t0() > grid.t0() || curve.t_end() != grid.t_end() {
        return Err(Error::InvalidInput(format!(
            "{name} is defined on [{}, {}] but the grid spans [{}, {}]",
            curve.t0(),
            curve.t_end(),
            grid.t0(),
            grid.t_end()
        )));
    }
    Ok(())
}

/// `exp(int_t^T rate)` at every grid node.
fn exponential_nodes<S: Scalar>(rate: &ParamCurve<S>, grid: &TimeGrid<S>) -> Result<Vec<S>> {
    let t_end = grid.t_end();
    grid.times().into_iter().map(|t| rate.exp_integral(t, t_end)).collect()
}

/// `-(lambda/2) int_t^T ln(pi lambda / exp(int_s^T rate)) ds` at every grid
/// node, with `rate = None` meaning `A = 1`.
fn log_correction_nodes<S: Scalar>(rate: Option<&ParamCurve<S>>, lambda: S, grid: &TimeGrid<S>) -> Result<Vec<S>> {
    let log_pl = (S::PI() * lambda).ln();
    let half = lambda / S::lit(2.0);
    let times = grid.times();
    let n = grid.n_steps();
    let mut nodes = vec![S::zero(); n + 1];
    let Some(rate) = rate else {
        for (k, node) in nodes.iter_mut().enumerate() {
            *node = -half * (grid.t_end() - times[k]) * log_pl;
        }
        return Ok(nodes);
    };
    let t_end = grid.t_end();
    let integrand = |s: S| log_pl - rate.integral(s, t_end).unwrap_or_else(|_| S::zero());
    let knots: Vec<S> = rate.interior_knots().collect();
    let mut acc = S::zero();
    for k in (0..n).rev() {
        let (lo, hi) = (times[k], times[k + 1]);
        let mut a = lo;
        for &knot in knots.iter().filter(|&&c| c > lo && c < hi) {
            acc = acc + simpson(a, knot, integrand);
            a = knot;
        }
        acc = acc + simpson(a, hi, integrand);
        nodes[k] = -half * acc;
    }
    Ok(nodes)
}

fn policy_on_grid<S: Scalar>(
    slope: &ParamCurve<S>,
    a_nodes: &[S],
    lambda: S,
    grid: &TimeGrid<S>,
) -> Result<GaussianPolicy<S>> {
    let two = S::lit(2.0);
    let variance = a_nodes.iter().map(|&a| lambda / (two * a)).collect();
    GaussianPolicy::new(slope.clone(), ParamCurve::from_grid_nodes(grid, variance)?)
}

/// Diffusion-parameter case: `alpha1 = exp(int (1 - 2 beta))`, policy
/// `N(beta x, lambda / (2 alpha1))`.
pub fn diffusion_case<S: Scalar>(beta: &ParamCurve<S>, lambda: S, grid: &TimeGrid<S>) -> Result<CaseSolution<S>> {
    check_lambda(lambda)?;
    check_domain(beta, grid, "beta")?;
    let rate = beta.map(|b| S::one() - S::lit(2.0) * b);
    exponential_case(&rate, beta, lambda, grid)
}

fn exponential_case<S: Scalar>(
    rate: &ParamCurve<S>,
    slope: &ParamCurve<S>,
    lambda: S,
    grid: &TimeGrid<S>,
) -> Result<CaseSolution<S>> {
    let a1 = exponential_nodes(rate, grid)?;
    let a2 = log_correction_nodes(Some(rate), lambda, grid)?;
    let policy = policy_on_grid(slope, &a1, lambda, grid)?;
    let value = QuadraticValue::new(ParamCurve::from_grid_nodes(grid, a1)?, ParamCurve::from_grid_nodes(grid, a2)?);
    Ok(CaseSolution { value, policy })
}

fn tracking_case<S: Scalar>(slope: &ParamCurve<S>, lambda: S, grid: &TimeGrid<S>) -> Result<CaseSolution<S>> {
    let a2 = log_correction_nodes(None, lambda, grid)?;
    let ones = vec![S::one(); grid.n_steps() + 1];
    let policy = policy_on_grid(slope, &ones, lambda, grid)?;
    let value = QuadraticValue::new(
        ParamCurve::from_grid_nodes(grid, vec![S::zero(); grid.n_steps() + 1])?,
        ParamCurve::from_grid_nodes(grid, a2)?,
    );
    Ok(CaseSolution { value, policy })
}

/// Drift-parameter case: `alpha1 = 0`, policy `N(beta x, lambda / 2)`.
pub fn drift_case<S: Scalar>(beta: &ParamCurve<S>, lambda: S, grid: &TimeGrid<S>) -> Result<CaseSolution<S>> {
    check_lambda(lambda)?;
    check_domain(beta, grid, "beta")?;
    tracking_case(beta, lambda, grid)
}

/// Joint case: step 1 has `theta1 = exp(int (2(alpha - beta) - 1))` and
/// policy `N(beta x, lambda / (2 theta1))`; step 2 has policy
/// `N(alpha x, lambda / 2)`.
pub fn general_case<S: Scalar>(
    alpha: &ParamCurve<S>,
    beta: &ParamCurve<S>,
    lambda: S,
    grid: &TimeGrid<S>,
) -> Result<GeneralSolution<S>> {
    check_lambda(lambda)?;
    check_domain(alpha, grid, "alpha")?;
    check_domain(beta, grid, "beta")?;
    let two = S::lit(2.0);
    let rate = alpha.zip_with(beta, |a, b| two * (a - b) - S::one())?;
    Ok(GeneralSolution {
        step1: exponential_case(&rate, beta, lambda, grid)?,
        step2: tracking_case(alpha, lambda, grid)?,
    })
}

/// Closed-form solution for a named case; the general-case tags select
/// the matching step.
pub fn case_solution<S: Scalar>(
    tag: CaseTag,
    params: &ParamSet<S>,
    lambda: S,
    grid: &TimeGrid<S>,
) -> Result<CaseSolution<S>> {
    match tag {
        CaseTag::DiffusionParam => diffusion_case(&params.beta, lambda, grid),
        CaseTag::DriftParam => drift_case(&params.beta, lambda, grid),
        CaseTag::General(step) => {
            let sol = general_case(params.alpha_curve()?, &params.beta, lambda, grid)?;
            Ok(match step {
                GeneralStep::DiffusionStep => sol.step1,
                GeneralStep::DriftStep => sol.step2,
            })
        }
        CaseTag::Custom => Err(Error::InvalidInput("custom cases have no closed-form solution".into())),
    }
}

/// Unexplored optimum of the diffusion case.
pub fn classical_solution<S: Scalar>(beta: &ParamCurve<S>, grid: &TimeGrid<S>) -> Result<ClassicalSolution<S>> {
    check_domain(beta, grid, "beta")?;
    let rate = beta.map(|b| S::one() - S::lit(2.0) * b);
    let b1 = exponential_nodes(&rate, grid)?;
    let value = QuadraticValue::new(
        ParamCurve::from_grid_nodes(grid, b1)?,
        ParamCurve::from_grid_nodes(grid, vec![S::zero(); grid.n_steps() + 1])?,
    );
    Ok(ClassicalSolution { value, slope: beta.clone() })
}

/// CSV with header `t,alpha1,alpha2,mean_slope,variance`, one row per
/// grid node.
pub fn write_policy_curves<S: Scalar, W: Write>(
    solution: &CaseSolution<S>,
    grid: &TimeGrid<S>,
    mut out: W,
) -> Result<()> {
    writeln!(out, "t,alpha1,alpha2,mean_slope,variance")?;
    for t in grid.times() {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_float(t),
            fmt_float(solution.value.a1.eval(t)?),
            fmt_float(solution.value.a2.eval(t)?),
            fmt_float(solution.policy.mean_slope().eval(t)?),
            fmt_float(solution.policy.variance(t)?)
        )?;
    }
    Ok(())
}
