//! Recovering unknown parameters from interaction data, and a small
//! policy-iteration loop on the quadratic value ansatz.
//!
//! The data are `(t, x, rho)` triples produced by running the optimal
//! randomized policy in the true environment. Since the policy mean is
//! `param(t) x`, the parameter is the slope of `rho` on `x` through the
//! origin within each time bucket.

use std::io::Write;

use log::info;

use crate::closed_form::{case_solution, CaseSolution};
use crate::error::{Error, Result};
use crate::gibbs::{gaussian_reduce, hamiltonian_fn, GaussianPolicy, Quadratic, QuadraticValue};
use crate::io::fmt_float;
use crate::model::{CaseTag, CoefficientModel, CostSpec, GeneralStep, ParamCurve, ParamSet, TimeGrid};
use crate::scalar::Scalar;
use crate::sim::{mean_and_std_error, pathwise_costs, simulate, ControlLaw, PathBundle};

/// States closer to zero than this carry no slope information.
pub const REGRESSOR_EPS: f64 = 1e-6;
pub const MIN_PAIRS_PER_KNOT: usize = 30;
pub const MIN_EPISODES: usize = 100;
/// Guard of the ratio estimator `rho / x`.
pub const RATIO_MIN_ABS_STATE: f64 = 0.1;
/// Probe states of the policy-evaluation regression.
pub const PROBE_STATES: [f64; 6] = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];

/// `(x, rho)` pairs observed inside one time bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<S: Scalar = f64> {
    knot: usize,
    knot_time: S,
    states: Vec<S>,
    controls: Vec<S>,
}

impl<S: Scalar> SampleBatch<S> {
    pub fn new(knot: usize, knot_time: S) -> Self {
        Self { knot, knot_time, states: Vec::new(), controls: Vec::new() }
    }

    pub fn from_pairs(knot: usize, knot_time: S, pairs: impl IntoIterator<Item = (S, S)>) -> Self {
        let mut batch = Self::new(knot, knot_time);
        for (x, rho) in pairs {
            batch.push(x, rho);
        }
        batch
    }

    pub fn push(&mut self, x: S, rho: S) {
        self.states.push(x);
        self.controls.push(rho);
    }

    pub fn knot(&self) -> usize {
        self.knot
    }

    pub fn knot_time(&self) -> S {
        self.knot_time
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn controls(&self) -> &[S] {
        &self.controls
    }

    pub fn pairs(&self) -> impl Iterator<Item = (S, S)> + '_ {
        self.states.iter().copied().zip(self.controls.iter().copied())
    }
}

/// Least squares through the origin: slope `sum x rho / sum x^2` and its
/// standard error from the residual variance.
pub fn fit_mean_slope<S: Scalar>(batch: &SampleBatch<S>) -> Result<(S, S)> {
    let sxx: S = batch.states.iter().map(|&x| x * x).sum();
    let eps = S::lit(REGRESSOR_EPS);
    if !(sxx >= eps * eps) {
        return Err(Error::DegenerateRegressor { sum_sq: sxx.as_f64(), threshold: REGRESSOR_EPS * REGRESSOR_EPS });
    }
    let sxy: S = batch.pairs().map(|(x, r)| x * r).sum();
    let slope = sxy / sxx;
    let n = batch.len();
    if n < 2 {
        return Ok((slope, S::zero()));
    }
    let rss: S = batch.pairs().map(|(x, r)| (r - slope * x) * (r - slope * x)).sum();
    let sigma2 = rss / S::lit((n - 1) as f64);
    Ok((slope, (sigma2 / sxx).sqrt()))
}

/// Mean of `rho / x` over pairs with `|x| >= 0.1`, with its standard error.
pub fn ratio_estimate<S: Scalar>(batch: &SampleBatch<S>) -> Result<(S, S)> {
    let guard = S::lit(RATIO_MIN_ABS_STATE);
    let ratios: Vec<S> = batch.pairs().filter(|(x, _)| x.abs() >= guard).map(|(x, r)| r / x).collect();
    if ratios.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "ratio estimate at knot {} needs two states with |x| >= {RATIO_MIN_ABS_STATE}",
            batch.knot
        )));
    }
    Ok(mean_and_std_error(&ratios))
}

/// Per-knot parameter estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult<S: Scalar = f64> {
    pub curve: ParamCurve<S>,
    pub std_errors: Vec<S>,
    pub n_samples: Vec<usize>,
    /// Parameter values at the knots when the data were simulated.
    pub true_values: Option<Vec<S>>,
}

impl<S: Scalar> EstimateResult<S> {
    pub fn knot_times(&self) -> &[S] {
        self.curve.knots()
    }

    pub fn estimates(&self) -> &[S] {
        self.curve.values()
    }

    /// Largest `|estimate - truth| / std_error` over the knots.
    pub fn max_abs_z(&self) -> Option<S> {
        let truth = self.true_values.as_ref()?;
        Some(
            self.estimates()
                .iter()
                .zip(truth)
                .zip(&self.std_errors)
                .map(|((e, t), se)| (*e - *t).abs() / *se)
                .fold(S::zero(), S::max),
        )
    }

    /// CSV `knot_time,estimate,std_error,n_samples[,true_value]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let truth = self.true_values.as_ref();
        if truth.is_some() {
            writeln!(out, "knot_time,estimate,std_error,n_samples,true_value")?;
        } else {
            writeln!(out, "knot_time,estimate,std_error,n_samples")?;
        }
        for i in 0..self.n_samples.len() {
            write!(
                out,
                "{},{},{},{}",
                fmt_float(self.curve.knots()[i]),
                fmt_float(self.curve.values()[i]),
                fmt_float(self.std_errors[i]),
                self.n_samples[i]
            )?;
            if let Some(t) = truth {
                write!(out, ",{}", fmt_float(t[i]))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn check_knots<S: Scalar>(knots: &[S], grid: &TimeGrid<S>) -> Result<()> {
    if knots.is_empty() || knots[0] != grid.t0() {
        return Err(Error::InvalidInput("estimation knots must start at t0".into()));
    }
    if knots.windows(2).any(|w| w[0] >= w[1]) || *knots.last().unwrap() >= grid.t_end() {
        return Err(Error::InvalidInput("estimation knots must be strictly ascending and below T".into()));
    }
    Ok(())
}

/// Buckets every recorded `(x, rho)` by the last knot at or before its
/// time.
pub fn collect_batches<S: Scalar>(bundle: &PathBundle<S>, knots: &[S]) -> Result<Vec<SampleBatch<S>>> {
    if !bundle.has_controls() {
        return Err(Error::Contract("estimation needs recorded controls".into()));
    }
    let grid = bundle.grid();
    let mut batches: Vec<SampleBatch<S>> = knots.iter().enumerate().map(|(i, &t)| SampleBatch::new(i, t)).collect();
    let bucket_of: Vec<usize> =
        (0..grid.n_steps()).map(|k| knots.partition_point(|&c| c <= grid.time(k)).max(1) - 1).collect();
    for p in 0..bundle.n_paths() {
        let xs = bundle.path(p);
        let rhos = bundle.control_row(p).unwrap();
        for (k, &b) in bucket_of.iter().enumerate() {
            batches[b].push(xs[k], rhos[k]);
        }
    }
    Ok(batches)
}

fn fit_batches<S: Scalar>(
    batches: &[SampleBatch<S>],
    grid: &TimeGrid<S>,
    truth: Option<&ParamCurve<S>>,
) -> Result<EstimateResult<S>> {
    let mut estimates = Vec::with_capacity(batches.len());
    let mut std_errors = Vec::with_capacity(batches.len());
    let mut n_samples = Vec::with_capacity(batches.len());
    for b in batches {
        if b.len() < MIN_PAIRS_PER_KNOT {
            return Err(Error::InsufficientSamples(format!(
                "knot {} at t = {} has {} pairs, need at least {MIN_PAIRS_PER_KNOT}",
                b.knot,
                b.knot_time,
                b.len()
            )));
        }
        let (slope, se) = fit_mean_slope(b)?;
        estimates.push(slope);
        std_errors.push(se);
        n_samples.push(b.len());
    }
    let knots: Vec<S> = batches.iter().map(|b| b.knot_time).collect();
    let true_values = truth.map(|c| knots.iter().map(|&t| c.eval(t)).collect::<Result<Vec<_>>>()).transpose()?;
    Ok(EstimateResult { curve: ParamCurve::new(knots, estimates, grid.t_end())?, std_errors, n_samples, true_values })
}

#[allow(clippy::too_many_arguments)]
fn learn_from_policy<S: Scalar>(
    model: &CoefficientModel<S>,
    params: &ParamSet<S>,
    policy: &GaussianPolicy<S>,
    x0: S,
    grid: &TimeGrid<S>,
    knots: &[S],
    episodes: usize,
    seed: u64,
) -> Result<EstimateResult<S>> {
    let bundle = simulate(model, &ControlLaw::Randomized(policy.clone()), params, x0, grid, episodes, seed)?;
    let batches = collect_batches(&bundle, knots)?;
    fit_batches(&batches, grid, Some(policy.mean_slope()))
}

fn check_episodes(episodes: usize) -> Result<()> {
    if episodes < MIN_EPISODES {
        return Err(Error::InvalidInput(format!("need at least {MIN_EPISODES} episodes, got {episodes}")));
    }
    Ok(())
}

/// Runs `episodes` episodes from `x0` under the case's optimal randomized
/// policy and estimates its mean slope per knot bucket. The slope is `beta`
/// for the diffusion and drift cases, and `alpha` for the second step of
/// the general case.
#[allow(clippy::too_many_arguments)]
pub fn estimate_beta<S: Scalar>(
    tag: CaseTag,
    params: &ParamSet<S>,
    lambda: S,
    x0: S,
    grid: &TimeGrid<S>,
    knots: &[S],
    episodes: usize,
    seed: u64,
) -> Result<EstimateResult<S>> {
    check_episodes(episodes)?;
    check_knots(knots, grid)?;
    let model = CoefficientModel::from_tag(tag)?;
    let policy = case_solution(tag, params, lambda, grid)?.policy;
    learn_from_policy(&model, params, &policy, x0, grid, knots, episodes, seed)
}

/// Two-step estimation for the general case: `beta` from the diffusion
/// step, then `alpha` from the drift step with the estimated `beta`
/// plugged into the feedback. Returns `(alpha_hat, beta_hat)`.
#[allow(clippy::too_many_arguments)]
pub fn two_step_estimate<S: Scalar>(
    alpha: &ParamCurve<S>,
    beta: &ParamCurve<S>,
    lambda: S,
    x0: S,
    grid: &TimeGrid<S>,
    knots: &[S],
    episodes: usize,
    seed: u64,
) -> Result<(EstimateResult<S>, EstimateResult<S>)> {
    check_episodes(episodes)?;
    check_knots(knots, grid)?;
    let params = ParamSet::general(alpha.clone(), beta.clone());
    let step1 = CaseTag::General(GeneralStep::DiffusionStep);
    let beta_hat = estimate_beta(step1, &params, lambda, x0, grid, knots, episodes, seed)?;
    for (t, (b, se)) in beta_hat.knot_times().iter().zip(beta_hat.estimates().iter().zip(&beta_hat.std_errors)) {
        info!("step 1: beta_hat({t}) = {b} (se {se})");
    }
    let plugged = params.with_beta_feedback(beta_hat.curve.clone());
    let step2 = CaseTag::General(GeneralStep::DriftStep);
    let policy = case_solution(step2, &plugged, lambda, grid)?.policy;
    let model = CoefficientModel::from_tag(step2)?;
    let alpha_hat = learn_from_policy(&model, &plugged, &policy, x0, grid, knots, episodes, seed.wrapping_add(1))?;
    Ok((alpha_hat, beta_hat))
}

/// One policy-iteration sweep as recorded in the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<S: Scalar = f64> {
    pub iteration: usize,
    pub knot_times: Vec<S>,
    pub a1: Vec<S>,
    pub a1_std_error: Vec<S>,
    pub mean_slope: Vec<S>,
    pub slope_std_error: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyIterationOutcome<S: Scalar = f64> {
    pub value: QuadraticValue<S>,
    pub policy: GaussianPolicy<S>,
    pub trace: Vec<IterationRecord<S>>,
}

impl<S: Scalar> PolicyIterationOutcome<S> {
    /// CSV `iteration,knot_time,a1,a1_std_error,mean_slope,slope_std_error`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,knot_time,a1,a1_std_error,mean_slope,slope_std_error")?;
        for r in &self.trace {
            for i in 0..r.knot_times.len() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.iteration,
                    fmt_float(r.knot_times[i]),
                    fmt_float(r.a1[i]),
                    fmt_float(r.a1_std_error[i]),
                    fmt_float(r.mean_slope[i]),
                    fmt_float(r.slope_std_error[i])
                )?;
            }
        }
        Ok(())
    }
}

/// Settings of [`policy_iteration`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSettings<S: Scalar = f64> {
    pub lambda: S,
    /// Monte Carlo paths per probe state and knot.
    pub episodes: usize,
    pub n_iters: usize,
    /// Distance between evaluation knots, in grid steps.
    pub knot_stride: usize,
    pub seed: u64,
}

fn requires_positive_a1(tag: CaseTag) -> bool {
    matches!(tag, CaseTag::DiffusionParam | CaseTag::General(GeneralStep::DiffusionStep))
}

/// Gaussian policy that is optimal for `value` at every knot of its `a1`
/// curve, via the quadratic Hamiltonian at `x = 1`.
pub fn improve_policy<S: Scalar>(
    tag: CaseTag,
    params: &ParamSet<S>,
    value: &QuadraticValue<S>,
    lambda: S,
) -> Result<GaussianPolicy<S>> {
    let model = CoefficientModel::from_tag(tag)?;
    let spec = CostSpec::for_case(tag, params, lambda)?;
    let knots = value.a1.knots().to_vec();
    let mut slopes = Vec::with_capacity(knots.len());
    let mut variances = Vec::with_capacity(knots.len());
    for &t in &knots {
        let q = Quadratic::fit(hamiltonian_fn(&model, value, &spec, params, t, S::one())?);
        let (mean, var) = gaussian_reduce(q.a, q.b, lambda)?;
        slopes.push(mean);
        variances.push(var);
    }
    let t_end = value.a1.t_end();
    GaussianPolicy::new(ParamCurve::new(knots.clone(), slopes, t_end)?, ParamCurve::new(knots, variances, t_end)?)
}

/// Alternates Monte Carlo evaluation of the current policy with Gibbs
/// improvement.
///
/// Evaluation estimates the exploratory cost from each probe state at
/// every `knot_stride`-th grid node and regresses it on `{x^2, 1}`; all
/// probes share one seed. Improvement rebuilds the Gaussian policy from
/// the refitted value. With `n_iters = 0` the initial solution is returned
/// unchanged.
pub fn policy_iteration<S: Scalar>(
    tag: CaseTag,
    params: &ParamSet<S>,
    grid: &TimeGrid<S>,
    init: CaseSolution<S>,
    settings: IterationSettings<S>,
) -> Result<PolicyIterationOutcome<S>> {
    let model = CoefficientModel::from_tag(tag)?;
    let spec = CostSpec::for_case(tag, params, settings.lambda)?;
    if settings.n_iters > 0 && settings.episodes < 2 {
        return Err(Error::InvalidInput("policy evaluation needs at least two episodes".into()));
    }
    if settings.knot_stride == 0 {
        return Err(Error::InvalidInput("knot stride must be positive".into()));
    }
    let eval_nodes: Vec<usize> = (0..grid.n_steps()).step_by(settings.knot_stride).collect();
    let knot_times: Vec<S> = eval_nodes.iter().map(|&k| grid.time(k)).collect();
    let probes: Vec<S> = PROBE_STATES.iter().map(|&x| S::lit(x)).collect();
    let mut value = init.value;
    let mut policy = init.policy;
    let mut trace = Vec::with_capacity(settings.n_iters);
    for iteration in 1..=settings.n_iters {
        let mut a1 = Vec::with_capacity(eval_nodes.len());
        let mut a1_se = Vec::with_capacity(eval_nodes.len());
        let mut a2 = Vec::with_capacity(eval_nodes.len());
        for &k in &eval_nodes {
            let sub = grid.suffix(k)?;
            let mut costs = Vec::with_capacity(probes.len());
            for &x in &probes {
                let law = ControlLaw::ExploratoryMean(policy.clone());
                let bundle = simulate(&model, &law, params, x, &sub, settings.episodes, settings.seed)?;
                costs.push(mean_and_std_error(&pathwise_costs(&bundle, &spec, Some(&policy))?));
            }
            let (slope, intercept, slope_se) = regress_on_square(&probes, &costs);
            if requires_positive_a1(tag) && !(slope > S::zero()) {
                return Err(Error::Refit {
                    iteration,
                    reason: format!(
                        "refitted a1 = {slope} <= 0 at t = {}; increase the number of episodes",
                        grid.time(k)
                    ),
                });
            }
            a1.push(slope);
            a1_se.push(slope_se);
            a2.push(intercept);
        }
        let t_end = grid.t_end();
        value = QuadraticValue::new(
            ParamCurve::new(knot_times.clone(), a1.clone(), t_end)?,
            ParamCurve::new(knot_times.clone(), a2, t_end)?,
        );
        policy = improve_policy(tag, params, &value, settings.lambda)
            .map_err(|e| Error::Refit { iteration, reason: format!("policy improvement failed: {e}") })?;
        let mut slope_se = Vec::with_capacity(knot_times.len());
        for (i, &t) in knot_times.iter().enumerate() {
            slope_se.push(slope_sensitivity(tag, params, &value, settings.lambda, t, a1_se[i])?);
        }
        let mean_slope = policy.mean_slope().values().to_vec();
        info!("policy iteration {iteration}: a1(t0) = {}, slope(t0) = {}", a1[0], mean_slope[0]);
        trace.push(IterationRecord {
            iteration,
            knot_times: knot_times.clone(),
            a1,
            a1_std_error: a1_se,
            mean_slope,
            slope_std_error: slope_se,
        });
    }
    Ok(PolicyIterationOutcome { value, policy, trace })
}

/// Ordinary least squares of `J` on `x^2` with intercept. The slope's
/// standard error propagates the per-probe Monte Carlo errors as if they
/// were independent.
fn regress_on_square<S: Scalar>(xs: &[S], costs: &[(S, S)]) -> (S, S, S) {
    let n = S::lit(xs.len() as f64);
    let u: Vec<S> = xs.iter().map(|&x| x * x).collect();
    let mu = u.iter().copied().sum::<S>() / n;
    let mj = costs.iter().map(|c| c.0).sum::<S>() / n;
    let suu: S = u.iter().map(|&v| (v - mu) * (v - mu)).sum();
    let slope = u.iter().zip(costs).map(|(&v, c)| (v - mu) * (c.0 - mj)).sum::<S>() / suu;
    let var = u.iter().zip(costs).map(|(&v, c)| ((v - mu) / suu).powi(2) * c.1 * c.1).sum::<S>();
    (slope, mj - slope * mu, var.sqrt())
}

/// Half the change of the improved slope when `a1(t)` moves by `+-se`.
fn slope_sensitivity<S: Scalar>(
    tag: CaseTag,
    params: &ParamSet<S>,
    value: &QuadraticValue<S>,
    lambda: S,
    t: S,
    se: S,
) -> Result<S> {
    let model = CoefficientModel::from_tag(tag)?;
    let spec = CostSpec::for_case(tag, params, lambda)?;
    let slope_with = |shift: S| -> Result<S> {
        let a1 = value.a1.eval(t)? + shift;
        let shifted = QuadraticValue::new(ParamCurve::constant(a1, value.a1.t0(), value.a1.t_end())?, value.a2.clone());
        let q = Quadratic::fit(hamiltonian_fn(&model, &shifted, &spec, params, t, S::one())?);
        Ok(gaussian_reduce(q.a, q.b, lambda)?.0)
    };
    // Keep the lower probe on the positive side when a1 must stay positive.
    let down = if requires_positive_a1(tag) { se.min(value.a1.eval(t)? / S::lit(2.0)) } else { se };
    Ok((slope_with(se)? - slope_with(-down)?).abs() / S::lit(2.0))
}
