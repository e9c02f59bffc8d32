//! Numerical checks of the exploratory control derivations: HJB residuals,
//! one-step moment matching of the randomized dynamics, the vanishing
//! temperature limit and optimality of the Gaussian policy under
//! perturbation.

use std::fmt;
use std::io::Write;

use crate::closed_form::case_solution;
use crate::error::{Error, Result};
use crate::gibbs::{
    density_argmax, entropy_term, exploratory_coefficients, gaussian_reduce, gibbs_density_auto, hamiltonian_fn,
    GaussianPolicy, Quadratic, QuadraticValue,
};
use crate::io::fmt_float;
use crate::model::{CaseTag, CoefficientModel, CostSpec, GeneralStep, ParamSet, TimeGrid};
use crate::quadrature::gaussian_expectation;
use crate::scalar::Scalar;
use crate::sim::{pathwise_costs, simulate, ControlLaw};

pub const HJB_TOLERANCE: f64 = 1e-4;
/// Residual a perturbed value function must exceed to count as detected.
pub const HJB_DETECTION: f64 = 1e-2;
pub const Z_LIMIT: f64 = 3.0;
pub const ARGMAX_TOLERANCE: f64 = 1e-6;
pub const RATIO_TOLERANCE: f64 = 1e-10;
pub const MIN_MOMENT_PATHS: usize = 10_000;
pub const MIN_PERTURBATION_PATHS: usize = 100_000;
const GIBBS_POINTS: usize = 2001;

/// How a row's value is compared with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// `|value| <= tolerance`
    Within,
    /// `value > tolerance`
    Above,
    /// `value >= tolerance`
    AtLeast,
}

impl Criterion {
    fn holds(self, value: f64, tolerance: f64) -> bool {
        match self {
            Self::Within => value.abs() <= tolerance,
            Self::Above => value > tolerance,
            Self::AtLeast => value >= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub statistic: String,
    pub value: f64,
    pub tolerance: f64,
    pub criterion: Criterion,
    pub pass: bool,
}

/// Outcome of one check: named statistics, each with its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    check: String,
    grid: String,
    rows: Vec<ReportRow>,
    skipped: usize,
}

impl VerificationReport {
    pub fn new(check: impl Into<String>, grid: impl Into<String>) -> Self {
        Self { check: check.into(), grid: grid.into(), rows: Vec::new(), skipped: 0 }
    }

    pub fn push(&mut self, statistic: impl Into<String>, value: f64, tolerance: f64, criterion: Criterion) {
        let pass = criterion.holds(value, tolerance);
        self.rows.push(ReportRow { statistic: statistic.into(), value, tolerance, criterion, pass });
    }

    pub fn check(&self) -> &str {
        &self.check
    }

    pub fn grid(&self) -> &str {
        &self.grid
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn row(&self, statistic: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.statistic == statistic)
    }

    /// Grid nodes left out because they sit next to a parameter jump.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    /// Rows without a header, see [`write_reports_csv`].
    pub fn write_rows<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.check,
                r.statistic,
                fmt_float(r.value),
                fmt_float(r.tolerance),
                r.pass
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} [{}]", self.check, self.grid)?;
        if self.skipped > 0 {
            write!(f, " ({} nodes skipped near parameter jumps)", self.skipped)?;
        }
        for r in &self.rows {
            let op = match r.criterion {
                Criterion::Within => "|.| <=",
                Criterion::Above => ">",
                Criterion::AtLeast => ">=",
            };
            let mark = if r.pass { "ok" } else { "FAIL" };
            write!(f, "\n  {:<4} {} = {:.6e} ({op} {:.3e})", mark, r.statistic, r.value, r.tolerance)?;
        }
        Ok(())
    }
}

/// CSV `check,statistic,value,tolerance,pass` for a list of reports.
pub fn write_reports_csv<W: Write>(reports: &[VerificationReport], mut out: W) -> Result<()> {
    writeln!(out, "check,statistic,value,tolerance,pass")?;
    for r in reports {
        r.write_rows(&mut out)?;
    }
    Ok(())
}

/// `count` interior node indices spread evenly over the grid.
pub fn probe_nodes<S: Scalar>(grid: &TimeGrid<S>, count: usize) -> Vec<usize> {
    let n = grid.n_steps();
    if n < 2 || count == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![n / 2];
    }
    let span = (n - 2) as f64;
    let mut nodes: Vec<usize> =
        (0..count).map(|j| 1 + (j as f64 * span / (count - 1) as f64).round() as usize).collect();
    nodes.dedup();
    nodes
}

/// Central difference of `v(., x)` across the neighbouring grid nodes.
fn time_derivative<S: Scalar>(value: &QuadraticValue<S>, grid: &TimeGrid<S>, k: usize, x: S) -> Result<S> {
    let (prev, next) = (grid.time(k - 1), grid.time(k + 1));
    Ok((value.value(next, x)? - value.value(prev, x)?) / (next - prev))
}

/// Full HJB residual at node `k`:
/// `v_t + E_pi[f_hat + sigma_hat^2 v_xx / 2 + b_hat v_x] + lambda int pi ln pi`.
#[allow(clippy::too_many_arguments)]
pub fn residual_at<S: Scalar>(
    model: &CoefficientModel<S>,
    value: &QuadraticValue<S>,
    policy: &GaussianPolicy<S>,
    params: &ParamSet<S>,
    spec: &CostSpec<S>,
    grid: &TimeGrid<S>,
    k: usize,
    x: S,
) -> Result<S> {
    if k == 0 || k >= grid.n_steps() {
        return Err(Error::Domain(format!("node {k} has no two-sided neighbours")));
    }
    let t = grid.time(k);
    let l = hamiltonian_fn(model, value, spec, params, t, x)?;
    let expected = gaussian_expectation(policy.mean(t, x)?, policy.variance(t)?, l);
    Ok(time_derivative(value, grid, k, x)? + expected + spec.lambda() * entropy_term(policy, t)?)
}

/// Residual of the case-specific reduced equation, obtained by minimizing
/// the quadratic Hamiltonian by hand and inserting the Gaussian optimum.
/// `None` for custom models.
pub fn reduced_residual_at<S: Scalar>(
    model: &CoefficientModel<S>,
    value: &QuadraticValue<S>,
    params: &ParamSet<S>,
    lambda: S,
    grid: &TimeGrid<S>,
    k: usize,
    x: S,
) -> Result<Option<S>> {
    if k == 0 || k >= grid.n_steps() {
        return Err(Error::Domain(format!("node {k} has no two-sided neighbours")));
    }
    let t = grid.time(k);
    let p = params.at(t)?;
    let a1 = value.a1.eval(t)?;
    let vx = value.dx(t, x)?;
    let vxx = value.dxx(t)?;
    let two = S::lit(2.0);
    let one = S::one();
    // (rho^2 coefficient, minimized Hamiltonian)
    let (quad, minimum) = match model {
        CoefficientModel::DiffusionParam => {
            let lin = (one - p.beta) * x * vxx - vx;
            let mu = -lin / (two * a1);
            let sq = (p.beta - one) * (p.beta - one) * x * x;
            (a1, sq * a1 - mu * mu * a1)
        }
        CoefficientModel::DriftParam => {
            let mu = (two * p.beta * x + vx) / (two + vxx);
            let base = p.beta * p.beta * x * x + two * (p.beta - one) * a1 * x * x;
            (one + a1, base - mu * mu * (one + a1))
        }
        CoefficientModel::General(GeneralStep::DiffusionStep) => {
            let mu = ((p.beta - one) * x * vxx + vx) / vxx;
            let sq = (p.beta - one) * (p.beta - one) * a1 * x * x + two * (p.alpha - one) * a1 * x * x;
            (a1, sq - mu * mu * a1)
        }
        CoefficientModel::General(GeneralStep::DriftStep) => {
            let mu = (two * p.alpha * x + vx) / (two + vxx);
            let base = p.alpha * p.alpha * x * x + two * (p.alpha - p.beta_feedback) * a1 * x * x;
            (one + a1, base - mu * mu * (one + a1))
        }
        CoefficientModel::Custom(_) => return Ok(None),
    };
    if !(quad > S::zero()) {
        return Err(Error::NonIntegrable { quadratic: quad.as_f64() });
    }
    let log_term = lambda / two * (S::PI() * lambda / quad).ln();
    Ok(Some(time_derivative(value, grid, k, x)? + minimum - log_term))
}

/// Max absolute HJB residual over `t_nodes x xs`. Nodes within two steps
/// of a parameter jump are skipped and counted.
#[allow(clippy::too_many_arguments)]
pub fn hjb_residual<S: Scalar>(
    model: &CoefficientModel<S>,
    value: &QuadraticValue<S>,
    policy: &GaussianPolicy<S>,
    params: &ParamSet<S>,
    spec: &CostSpec<S>,
    grid: &TimeGrid<S>,
    t_nodes: &[usize],
    xs: &[S],
) -> Result<VerificationReport> {
    let mut report = VerificationReport::new(
        format!("hjb_residual/{}", model.tag().name()),
        format!("{}x{} nodes, dt={}", t_nodes.len(), xs.len(), grid.step()),
    );
    let (full, reduced) = residual_extremes(model, value, policy, params, spec, grid, t_nodes, xs, &mut report)?;
    report.push("max_abs_residual", full, HJB_TOLERANCE, Criterion::Within);
    if let Some(reduced) = reduced {
        report.push("max_abs_reduced_residual", reduced, HJB_TOLERANCE, Criterion::Within);
    }
    Ok(report)
}

/// Scales `a1` by `factor`, keeps the policy, and reports whether the
/// residual exceeds [`HJB_DETECTION`] somewhere on the grid.
#[allow(clippy::too_many_arguments)]
pub fn hjb_perturbation<S: Scalar>(
    model: &CoefficientModel<S>,
    value: &QuadraticValue<S>,
    policy: &GaussianPolicy<S>,
    params: &ParamSet<S>,
    spec: &CostSpec<S>,
    grid: &TimeGrid<S>,
    t_nodes: &[usize],
    xs: &[S],
    factor: S,
) -> Result<VerificationReport> {
    let perturbed = value.scale_a1(factor);
    let mut report = VerificationReport::new(
        format!("hjb_perturbation/{}", model.tag().name()),
        format!("a1 x {factor}, {}x{} nodes", t_nodes.len(), xs.len()),
    );
    let mut worst = S::zero();
    for &k in t_nodes {
        if !usable_node(params, grid, k) {
            report.skipped += 1;
            continue;
        }
        for &x in xs {
            worst = worst.max(residual_at(model, &perturbed, policy, params, spec, grid, k, x)?.abs());
        }
    }
    report.push("max_abs_residual", worst.as_f64(), HJB_DETECTION, Criterion::Above);
    Ok(report)
}

fn usable_node<S: Scalar>(params: &ParamSet<S>, grid: &TimeGrid<S>, k: usize) -> bool {
    k > 0 && k < grid.n_steps() && params.distance_to_jump(grid.time(k)) >= S::lit(2.0) * grid.step()
}

#[allow(clippy::too_many_arguments)]
fn residual_extremes<S: Scalar>(
    model: &CoefficientModel<S>,
    value: &QuadraticValue<S>,
    policy: &GaussianPolicy<S>,
    params: &ParamSet<S>,
    spec: &CostSpec<S>,
    grid: &TimeGrid<S>,
    t_nodes: &[usize],
    xs: &[S],
    report: &mut VerificationReport,
) -> Result<(f64, Option<f64>)> {
    let mut full = S::zero();
    let mut reduced: Option<S> = None;
    for &k in t_nodes {
        if !usable_node(params, grid, k) {
            report.skipped += 1;
            continue;
        }
        for &x in xs {
            full = full.max(residual_at(model, value, policy, params, spec, grid, k, x)?.abs());
            if let Some(r) = reduced_residual_at(model, value, params, spec.lambda(), grid, k, x)? {
                reduced = Some(reduced.unwrap_or_else(S::zero).max(r.abs()));
            }
        }
    }
    Ok((full.as_f64(), reduced.map(|r| r.as_f64())))
}

/// z-score of the sample mean of `d`; zero for an exactly vanishing sample.
fn z_score<S: Scalar>(d: &[S]) -> f64 {
    let n = d.len() as f64;
    let mean = d.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = d.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return if mean == 0.0 { 0.0 } else { f64::INFINITY.copysign(mean) };
    }
    mean / (var / n).sqrt()
}

/// Compares the one-step increments of the randomized-control dynamics
/// with the exploratory coefficients at five probe times:
/// `E[dX | X] / dt = b_tilde(X)` and
/// `E[dX^2 | X] / dt = sigma_tilde^2(X) + E_pi[b_hat^2] dt`.
pub fn moment_match<S: Scalar>(
    model: &CoefficientModel<S>,
    params: &ParamSet<S>,
    policy: &GaussianPolicy<S>,
    x0: S,
    grid: &TimeGrid<S>,
    n_paths: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if n_paths < MIN_MOMENT_PATHS {
        return Err(Error::InvalidInput(format!(
            "moment matching needs at least {MIN_MOMENT_PATHS} paths, got {n_paths}"
        )));
    }
    let n = grid.n_steps();
    if n < 6 {
        return Err(Error::InvalidInput("moment matching needs at least 6 steps".into()));
    }
    let bundle = simulate(model, &ControlLaw::Randomized(policy.clone()), params, x0, grid, n_paths, seed)?;
    let mut report = VerificationReport::new(
        format!("moment_match/{}", model.tag().name()),
        format!("{n_paths} paths, dt={}", grid.step()),
    );
    for j in 1..=5 {
        let k = (j * n + 3) / 6;
        let (t, dt) = (grid.time(k), grid.time(k + 1) - grid.time(k));
        let p = params.at(t)?;
        let slope = policy.mean_slope().eval(t)?;
        let var = policy.variance(t)?;
        let mut drift_dev = Vec::with_capacity(n_paths);
        let mut square_dev = Vec::with_capacity(n_paths);
        for i in 0..n_paths {
            let x = bundle.state(i, k);
            let dx = bundle.state(i, k + 1) - x;
            let mean = slope * x;
            let (b, s) = exploratory_coefficients(model, p, x, mean, var);
            let b2 = gaussian_expectation(mean, var, |r| {
                let v = model.b_hat(p, x, r);
                v * v
            });
            drift_dev.push(dx / dt - b);
            square_dev.push(dx * dx / dt - (s * s + b2 * dt));
        }
        let tf = t.as_f64();
        report.push(format!("drift_z@t={tf:.4}"), z_score(&drift_dev), Z_LIMIT, Criterion::Within);
        report.push(format!("second_moment_z@t={tf:.4}"), z_score(&square_dev), Z_LIMIT, Criterion::Within);
    }
    Ok(report)
}

/// Gibbs-density argmax and variance-to-temperature ratio across a
/// decreasing list of temperatures, at state `x` and time `t`.
pub fn dirac_limit<S: Scalar>(
    tag: CaseTag,
    params: &ParamSet<S>,
    lambdas: &[S],
    x: S,
    t: S,
    grid: &TimeGrid<S>,
) -> Result<VerificationReport> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > S::zero())) || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("temperatures must be positive and strictly decreasing".into()));
    }
    let model = CoefficientModel::from_tag(tag)?;
    let mut argmaxes = Vec::new();
    let mut ratios = Vec::new();
    let mut mean_error = 0.0f64;
    let mut closed_error = 0.0f64;
    for &lambda in lambdas {
        let sol = case_solution(tag, params, lambda, grid)?;
        let spec = CostSpec::for_case(tag, params, lambda)?;
        let l = hamiltonian_fn(&model, &sol.value, &spec, params, t, x)?;
        let density = gibbs_density_auto(&l, lambda, GIBBS_POINTS)?;
        let argmax = density_argmax(&density)?.as_f64();
        let q = Quadratic::fit(&l);
        let (_, var) = gaussian_reduce(q.a, q.b, lambda)?;
        let ratio = (var / lambda).as_f64();
        let closed = (sol.policy.variance(t)? / lambda).as_f64();
        mean_error = mean_error.max((argmax - sol.policy.mean(t, x)?.as_f64()).abs());
        closed_error = closed_error.max(((ratio - closed) / closed).abs());
        argmaxes.push(argmax);
        ratios.push(ratio);
    }
    let spread = |v: &[f64]| {
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let mut report = VerificationReport::new(
        format!("dirac_limit/{}", tag.name()),
        format!("{} temperatures, t={t}, x={x}", lambdas.len()),
    );
    report.push("argmax_spread", spread(&argmaxes), ARGMAX_TOLERANCE, Criterion::Within);
    report.push("argmax_vs_policy_mean", mean_error, ARGMAX_TOLERANCE, Criterion::Within);
    report.push("variance_ratio_rel_spread", spread(&ratios) / mean_ratio.abs(), RATIO_TOLERANCE, Criterion::Within);
    report.push("variance_ratio_vs_closed_form", closed_error, RATIO_TOLERANCE, Criterion::Within);
    Ok(report)
}

/// Change applied to the optimal policy before re-evaluating its cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyPerturbation<S: Scalar = f64> {
    SlopeOffset(S),
    VarianceFactor(S),
}

impl<S: Scalar> PolicyPerturbation<S> {
    pub fn apply(&self, policy: &GaussianPolicy<S>) -> Result<GaussianPolicy<S>> {
        match *self {
            Self::SlopeOffset(d) => Ok(policy.with_slope_offset(d)),
            Self::VarianceFactor(m) => policy.with_variance_factor(m),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::SlopeOffset(d) => format!("slope{:+}", d.as_f64()),
            Self::VarianceFactor(m) => format!("variance*{}", m.as_f64()),
        }
    }

    /// Slope offsets of 0.05 and 0.1 in both directions plus variance
    /// factors 0.5 and 2.
    pub fn standard_set() -> Vec<Self> {
        let l = S::lit;
        vec![
            Self::SlopeOffset(l(-0.1)),
            Self::SlopeOffset(l(-0.05)),
            Self::SlopeOffset(l(0.05)),
            Self::SlopeOffset(l(0.1)),
            Self::VarianceFactor(l(0.5)),
            Self::VarianceFactor(l(2.0)),
        ]
    }
}

/// Mean pathwise cost increase of each perturbed policy over the optimal
/// one under common random numbers. A row passes when the increase is at
/// least minus three standard errors of the paired differences.
#[allow(clippy::too_many_arguments)]
pub fn optimality_perturbation<S: Scalar>(
    tag: CaseTag,
    params: &ParamSet<S>,
    lambda: S,
    x0: S,
    grid: &TimeGrid<S>,
    n_paths: usize,
    seed: u64,
    perturbations: &[PolicyPerturbation<S>],
) -> Result<VerificationReport> {
    if n_paths < MIN_PERTURBATION_PATHS {
        return Err(Error::InvalidInput(format!(
            "perturbation checks need at least {MIN_PERTURBATION_PATHS} paths, got {n_paths}"
        )));
    }
    let model = CoefficientModel::from_tag(tag)?;
    let spec = CostSpec::for_case(tag, params, lambda)?;
    let optimal = case_solution(tag, params, lambda, grid)?.policy;
    let cost_of = |policy: &GaussianPolicy<S>| -> Result<Vec<S>> {
        let law = ControlLaw::ExploratoryMean(policy.clone());
        let bundle = simulate(&model, &law, params, x0, grid, n_paths, seed)?;
        pathwise_costs(&bundle, &spec, Some(policy))
    };
    let base = cost_of(&optimal)?;
    let mut report = VerificationReport::new(
        format!("optimality_perturbation/{}", tag.name()),
        format!("{n_paths} paths, {} steps, lambda={lambda}", grid.n_steps()),
    );
    for pert in perturbations {
        let costs = cost_of(&pert.apply(&optimal)?)?;
        let diffs: Vec<f64> = costs.iter().zip(&base).map(|(c, b)| (*c - *b).as_f64()).collect();
        let (gap, se) = paired_mean_and_se(&diffs);
        report.push(format!("cost_gap[{}]", pert.label()), gap, -Z_LIMIT * se, Criterion::AtLeast);
    }
    Ok(report)
}

fn paired_mean_and_se(d: &[f64]) -> (f64, f64) {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{diffusion_case, drift_case, general_case};
    use crate::model::{CustomCoefficients, ParamCurve};

    fn constant(v: f64) -> ParamCurve {
        ParamCurve::constant(v, 0.0, 1.0).unwrap()
    }

    fn xs() -> Vec<f64> {
        (0..50).map(|i| -2.0 + 4.0 * i as f64 / 49.0).collect()
    }

    #[test]
    fn criterion_semantics() {
        let mut r = VerificationReport::new("c", "g");
        r.push("a", -0.5, 0.5, Criterion::Within);
        r.push("b", 0.5, 0.5, Criterion::Above);
        r.push("c", -1.0, -1.0, Criterion::AtLeast);
        assert_eq!(r.rows().iter().map(|x| x.pass).collect::<Vec<_>>(), [true, false, true]);
        assert!(!r.passed());
        assert!(!VerificationReport::new("empty", "").passed());
    }

    #[test]
    fn csv_layout() {
        let mut r = VerificationReport::new("demo", "g");
        r.push("stat", 0.25, 1.0, Criterion::Within);
        let mut buf = Vec::new();
        write_reports_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "check,statistic,value,tolerance,pass\ndemo,stat,2.5000000000000000e-1,1.0000000000000000e0,true\n"
        );
    }

    #[test]
    fn probe_nodes_are_interior_and_spread() {
        let g = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let nodes = probe_nodes(&g, 50);
        assert_eq!(nodes.len(), 50);
        assert_eq!((nodes[0], nodes[49]), (1, 999));
    }

    #[test]
    fn diffusion_closed_form_residual() {
        let g = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let params = ParamSet::beta(constant(0.3));
        let sol = diffusion_case(&params.beta, 0.1, &g).unwrap();
        let spec = CostSpec::for_case(CaseTag::DiffusionParam, &params, 0.1).unwrap();
        let r = hjb_residual(
            &CoefficientModel::DiffusionParam,
            &sol.value,
            &sol.policy,
            &params,
            &spec,
            &g,
            &probe_nodes(&g, 50),
            &xs(),
        )
        .unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.skipped(), 0);
    }

    #[test]
    fn drift_residual_is_tiny_for_any_lambda() {
        // a2 is linear in t, so the central difference is exact.
        let g = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let params = ParamSet::beta(constant(0.5));
        for lambda in [0.01, 0.1, 2.0] {
            let sol = drift_case(&params.beta, lambda, &g).unwrap();
            let spec = CostSpec::for_case(CaseTag::DriftParam, &params, lambda).unwrap();
            let r = hjb_residual(
                &CoefficientModel::DriftParam,
                &sol.value,
                &sol.policy,
                &params,
                &spec,
                &g,
                &probe_nodes(&g, 20),
                &xs(),
            )
            .unwrap();
            assert!(r.row("max_abs_residual").unwrap().value < 1e-8, "{r}");
        }
    }

    #[test]
    fn knots_are_skipped() {
        let g = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let beta = ParamCurve::new(vec![0.0, 0.5], vec![0.2, 0.6], 1.0).unwrap();
        let params = ParamSet::beta(beta);
        let sol = diffusion_case(&params.beta, 0.1, &g).unwrap();
        let spec = CostSpec::for_case(CaseTag::DiffusionParam, &params, 0.1).unwrap();
        let nodes: Vec<usize> = (490..=510).collect();
        let r = hjb_residual(
            &CoefficientModel::DiffusionParam,
            &sol.value,
            &sol.policy,
            &params,
            &spec,
            &g,
            &nodes,
            &[1.0],
        )
        .unwrap();
        assert_eq!(r.skipped(), 3);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn scaled_a1_residual_matches_hand_computation() {
        // With the policy kept, scaling a1 by m leaves the x^2 terms
        // balanced and shifts the residual by (m - 1) lambda / 2.
        let g = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let params = ParamSet::beta(constant(0.3));
        let lambda = 0.1;
        let sol = diffusion_case(&params.beta, lambda, &g).unwrap();
        let spec = CostSpec::for_case(CaseTag::DiffusionParam, &params, lambda).unwrap();
        let r = hjb_perturbation(
            &CoefficientModel::DiffusionParam,
            &sol.value,
            &sol.policy,
            &params,
            &spec,
            &g,
            &probe_nodes(&g, 10),
            &[0.0, 1.0, 2.0],
            1.1,
        )
        .unwrap();
        let worst = r.row("max_abs_residual").unwrap().value;
        assert!((worst - 0.05 * lambda).abs() < 1e-4, "{worst}");
    }

    #[test]
    fn reduced_forms_agree_with_full_residual_off_optimum() {
        // Off the closed form but with the Gibbs-optimal policy rebuilt,
        // both residuals are the same number.
        let g = TimeGrid::new(0.0, 1.0, 200).unwrap();
        let params = ParamSet::general(constant(0.7), constant(0.2));
        let lambda = 0.1;
        for tag in [
            CaseTag::DiffusionParam,
            CaseTag::DriftParam,
            CaseTag::General(GeneralStep::DiffusionStep),
            CaseTag::General(GeneralStep::DriftStep),
        ] {
            let model = CoefficientModel::from_tag(tag).unwrap();
            let spec = CostSpec::for_case(tag, &params, lambda).unwrap();
            let value = QuadraticValue::new(
                ParamCurve::from_grid_nodes(&g, g.times().iter().map(|t| 1.3 + t * t).collect()).unwrap(),
                ParamCurve::from_grid_nodes(&g, g.times().iter().map(|t| 0.2 * t).collect()).unwrap(),
            );
            for k in [5, 77, 150] {
                for x in [-1.2, 0.4, 2.0] {
                    let t = g.time(k);
                    let (m, v) = crate::gibbs::optimal_gaussian(&model, &value, &spec, &params, t, x).unwrap();
                    let slope = if x == 0.0 { 0.0 } else { m / x };
                    let policy = GaussianPolicy::new(constant(slope), constant(v)).unwrap();
                    let full = residual_at(&model, &value, &policy, &params, &spec, &g, k, x).unwrap();
                    let reduced = reduced_residual_at(&model, &value, &params, lambda, &g, k, x).unwrap().unwrap();
                    assert!((full - reduced).abs() < 1e-10, "{tag:?} k={k} x={x}: {full} vs {reduced}");
                }
            }
        }
    }

    #[test]
    fn near_dirac_policy_recovers_substituted_coefficients() {
        let g = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let params = ParamSet::beta(constant(0.3));
        let pi = GaussianPolicy::new(constant(0.3), constant(1e-12)).unwrap();
        let r = moment_match(&CoefficientModel::DiffusionParam, &params, &pi, 1.0, &g, 10_000, 11).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn moment_match_on_custom_dynamics() {
        let model = CoefficientModel::Custom(CustomCoefficients::<f64>::substituted(
            |_, x, r| -0.5 * x + r * r,
            |_, _, r| 0.3 + r,
        ));
        let g = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let params = ParamSet::beta(constant(0.0));
        let pi = GaussianPolicy::new(constant(0.2), constant(0.04)).unwrap();
        let r = moment_match(&model, &params, &pi, 1.0, &g, 20_000, 3).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn moment_match_drift_case_and_path_minimum() {
        let g = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let params = ParamSet::beta(constant(0.3));
        let pi = GaussianPolicy::new(constant(0.3), constant(0.05)).unwrap();
        let report = moment_match(&CoefficientModel::DriftParam, &params, &pi, 1.0, &g, 20_000, 5).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.rows().len(), 10);
        assert!(moment_match(&CoefficientModel::DriftParam, &params, &pi, 1.0, &g, 100, 5).is_err());
    }

    #[test]
    fn dirac_limit_examples() {
        let g = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let lambdas = [1e-1, 1e-2, 1e-3, 1e-4];
        let params = ParamSet::beta(constant(0.3));
        let r = dirac_limit(CaseTag::DiffusionParam, &params, &lambdas, 1.0, 0.0, &g).unwrap();
        assert!(r.passed(), "{r}");
        let drift = ParamSet::beta(constant(0.3));
        let r = dirac_limit(CaseTag::DriftParam, &drift, &lambdas, 1.0, 0.0, &g).unwrap();
        assert!(r.passed(), "{r}");
        let sol = drift_case(&drift.beta, 0.01, &g).unwrap();
        assert_eq!(sol.policy.variance(0.3).unwrap() / 0.01, 0.5);
        assert!(dirac_limit(CaseTag::DriftParam, &drift, &[1e-3, 1e-2], 1.0, 0.0, &g).is_err());
    }

    #[test]
    fn dirac_limit_general_case() {
        let g = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let params = ParamSet::general(constant(0.2), constant(0.4));
        for step in [GeneralStep::DiffusionStep, GeneralStep::DriftStep] {
            let r = dirac_limit(CaseTag::General(step), &params, &[1e-1, 1e-3], -1.5, 0.5, &g).unwrap();
            assert!(r.passed(), "{r}");
        }
        let sol = general_case(&constant(0.2), &constant(0.4), 0.1, &g).unwrap();
        assert!(sol.step1.value.a1.eval(0.0).unwrap() > 0.0);
    }

    /// Second moment of the Euler scheme under the exploratory drift
    /// case dynamics `dX = -(1 + d) X dt + sqrt((b + d)^2 X^2 + v) dW`,
    /// summed with the left-endpoint rule.
    fn drift_offset_oracle(beta: f64, d: f64, var: f64, x0: f64, n: usize) -> f64 {
        let dt = 1.0 / n as f64;
        let (b, s2) = (-(1.0 + d), (beta + d) * (beta + d));
        let mut m = x0 * x0;
        let mut integral = 0.0;
        for _ in 0..n {
            integral += m * dt;
            m = (1.0 + b * dt).powi(2) * m + (s2 * m + var) * dt;
        }
        d * d * integral
    }

    #[test]
    fn perturbation_gaps_match_drift_case_oracles() {
        let g = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let params = ParamSet::beta(constant(0.5));
        let lambda = 0.1;
        let perts = [
            PolicyPerturbation::SlopeOffset(0.0),
            PolicyPerturbation::SlopeOffset(0.1),
            PolicyPerturbation::VarianceFactor(2.0),
            PolicyPerturbation::VarianceFactor(0.5),
        ];
        let r = optimality_perturbation(CaseTag::DriftParam, &params, lambda, 1.0, &g, 100_000, 8, &perts).unwrap();
        assert!(r.passed(), "{r}");
        let rows = r.rows();
        assert_eq!(rows[0].value, 0.0);
        let oracle = drift_offset_oracle(0.5, 0.1, lambda / 2.0, 1.0, 20);
        assert!((rows[1].value - oracle).abs() <= 3.0 * (-rows[1].tolerance / 3.0), "{} vs {oracle}", rows[1].value);
        let var = lambda / 2.0;
        for (row, m) in [(&rows[2], 2.0f64), (&rows[3], 0.5)] {
            let exact = (m - 1.0) * var - lambda / 2.0 * m.ln();
            assert!((row.value - exact).abs() < 1e-12, "{} vs {exact}", row.value);
        }
    }
}
