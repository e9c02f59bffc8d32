use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{entropy_term, GaussianPolicy};
use crate::model::CostSpec;
use crate::quadrature::gaussian_expectation;
use crate::scalar::Scalar;
use crate::sim::PathBundle;

/// Pathwise cost of every path: left-endpoint rectangle rule for the
/// running cost plus the terminal cost.
///
/// With a policy the running cost is averaged over `pi_t(. | x)` and the
/// entropy term `lambda int pi ln pi` is added. Without one the running
/// cost is read at the recorded controls, which must exist whenever the
/// cost depends on the control.
pub fn pathwise_costs<S: Scalar>(
    bundle: &PathBundle<S>,
    spec: &CostSpec<S>,
    policy: Option<&GaussianPolicy<S>>,
) -> Result<Vec<S>> {
    if policy.is_none() && spec.uses_control() && !bundle.has_controls() {
        return Err(Error::Contract(
            "running cost depends on the control but the bundle holds no controls and no policy was given".into(),
        ));
    }
    let grid = bundle.grid();
    let n = grid.n_steps();
    let times = grid.times();
    let dt: Vec<S> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let policy_rows = match policy {
        Some(pi) => {
            let mut slope = Vec::with_capacity(n);
            let mut var = Vec::with_capacity(n);
            let mut entropy = Vec::with_capacity(n);
            for &t in &times[..n] {
                slope.push(pi.mean_slope().eval(t)?);
                var.push(pi.variance(t)?);
                entropy.push(spec.lambda() * entropy_term(pi, t)?);
            }
            Some((slope, var, entropy))
        }
        None => None,
    };

    let costs = (0..bundle.n_paths())
        .into_par_iter()
        .map(|p| {
            let xs = bundle.path(p);
            let controls = bundle.control_row(p);
            let mut acc = S::zero();
            for k in 0..n {
                let (t, x) = (times[k], xs[k]);
                let running = match &policy_rows {
                    Some((slope, var, entropy)) => {
                        gaussian_expectation(slope[k] * x, var[k], |rho| spec.running(t, x, rho)) + entropy[k]
                    }
                    None => {
                        let rho = controls.map_or(S::zero(), |c| c[k]);
                        spec.running(t, x, rho)
                    }
                };
                acc = acc + running * dt[k];
            }
            acc + spec.terminal(xs[n])
        })
        .collect();
    Ok(costs)
}

/// Sample mean and its standard error `stdev / sqrt(n)`.
pub fn mean_and_std_error<S: Scalar>(samples: &[S]) -> (S, S) {
    let n = S::lit(samples.len() as f64);
    let mean = samples.iter().copied().sum::<S>() / n;
    if samples.len() < 2 {
        return (mean, S::zero());
    }
    let ss = samples.iter().map(|&c| (c - mean) * (c - mean)).sum::<S>();
    (mean, (ss / (n - S::one())).sqrt() / n.sqrt())
}

/// Monte Carlo estimate of the (exploratory, if a policy is given) cost
/// functional as `(estimate, std_error)`.
pub fn evaluate_cost<S: Scalar>(
    bundle: &PathBundle<S>,
    spec: &CostSpec<S>,
    policy: Option<&GaussianPolicy<S>>,
) -> Result<(S, S)> {
    Ok(mean_and_std_error(&pathwise_costs(bundle, spec, policy)?))
}
