//! Euler–Maruyama simulation of the classical, substituted, randomized and
//! exploratory dynamics, plus Monte Carlo cost evaluation.
//!
//! Every path draws from its own ChaCha stream selected by the path index,
//! so results are bit-identical for any number of rayon workers. Each step
//! consumes exactly two standard normals (Brownian increment, then control
//! noise) whatever the control law, which keeps the Brownian increments of
//! a path identical across laws for common-random-number comparisons.

mod cost;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{exploratory_coefficients, GaussianPolicy};
use crate::io::fmt_float;
use crate::model::{CoefficientModel, GeneralStep, ParamCurve, ParamSet, Params, TimeGrid};
use crate::scalar::Scalar;

pub use cost::{evaluate_cost, mean_and_std_error, pathwise_costs};

/// `(t, x) -> u`
pub type FeedbackFn<S> = Arc<dyn Fn(S, S) -> S + Send + Sync>;

#[derive(Clone)]
pub enum ControlLaw<S: Scalar = f64> {
    /// Original control `u(t, x)` fed to the unsubstituted coefficients.
    Feedback(FeedbackFn<S>),
    /// Deterministic substituted control `rho(t)`.
    SubstitutedCurve(ParamCurve<S>),
    /// Substituted control `rho = c(t) x`, the form the optimal control
    /// takes in the linear cases.
    SubstitutedSlope(ParamCurve<S>),
    /// Fresh `rho ~ pi_t` per path and step.
    Randomized(GaussianPolicy<S>),
    /// Exploratory SDE driven by the averaged coefficients of `pi`.
    ExploratoryMean(GaussianPolicy<S>),
}

impl<S: Scalar> fmt::Debug for ControlLaw<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Feedback(_) => "Feedback",
            Self::SubstitutedCurve(_) => "SubstitutedCurve",
            Self::SubstitutedSlope(_) => "SubstitutedSlope",
            Self::Randomized(_) => "Randomized",
            Self::ExploratoryMean(_) => "ExploratoryMean",
        };
        write!(f, "ControlLaw::{name}")
    }
}

impl<S: Scalar> ControlLaw<S> {
    /// Classical optimal feedback `u*(param_t, t, x)` of a named model.
    pub fn optimal_feedback(model: &CoefficientModel<S>, params: &ParamSet<S>) -> Result<Self> {
        if !model.is_named() {
            return Err(Error::Contract("optimal feedback is only known for named cases".into()));
        }
        let model = model.clone();
        let params = params.clone();
        Ok(Self::Feedback(Arc::new(move |t, x| {
            let p = params.at_clamped(t);
            model.optimal_feedback(p, x).unwrap_or_else(S::zero)
        })))
    }

    fn records_controls(&self) -> bool {
        !matches!(self, Self::Feedback(_) | Self::ExploratoryMean(_))
    }
}

/// Simulated paths with their Brownian increments and realized controls,
/// stored row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle<S: Scalar = f64> {
    grid: TimeGrid<S>,
    n_paths: usize,
    states: Vec<S>,
    noise: Vec<S>,
    controls: Option<Vec<S>>,
    seed: u64,
}

impl<S: Scalar> PathBundle<S> {
    pub fn grid(&self) -> &TimeGrid<S> {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self, path: usize, step: usize) -> S {
        self.states[path * (self.grid.n_steps() + 1) + step]
    }

    pub fn path(&self, path: usize) -> &[S] {
        let w = self.grid.n_steps() + 1;
        &self.states[path * w..(path + 1) * w]
    }

    pub fn noise(&self, path: usize, step: usize) -> S {
        self.noise[path * self.grid.n_steps() + step]
    }

    pub fn noise_row(&self, path: usize) -> &[S] {
        let w = self.grid.n_steps();
        &self.noise[path * w..(path + 1) * w]
    }

    pub fn has_controls(&self) -> bool {
        self.controls.is_some()
    }

    pub fn control(&self, path: usize, step: usize) -> Option<S> {
        self.controls.as_ref().map(|c| c[path * self.grid.n_steps() + step])
    }

    pub fn control_row(&self, path: usize) -> Option<&[S]> {
        let w = self.grid.n_steps();
        self.controls.as_ref().map(|c| &c[path * w..(path + 1) * w])
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = S> + '_ {
        (0..self.n_paths).map(move |p| self.state(p, self.grid.n_steps()))
    }

    /// CSV with header `path,step,time,state[,control]`; the control cell of
    /// the terminal step is empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let with_controls = self.controls.is_some();
        if with_controls {
            writeln!(out, "path,step,time,state,control")?;
        } else {
            writeln!(out, "path,step,time,state")?;
        }
        let n = self.grid.n_steps();
        for p in 0..self.n_paths {
            for k in 0..=n {
                write!(out, "{p},{k},{},{}", fmt_float(self.grid.time(k)), fmt_float(self.state(p, k)))?;
                if with_controls {
                    match self.control(p, k.min(n.saturating_sub(1))) {
                        Some(c) if k < n => write!(out, ",{}", fmt_float(c))?,
                        _ => write!(out, ",")?,
                    }
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

struct PathRows<S> {
    states: Vec<S>,
    noise: Vec<S>,
    controls: Vec<S>,
}

/// Per-step quantities shared by every path.
struct StepTable<S: Scalar> {
    times: Vec<S>,
    dt: Vec<S>,
    params: Vec<Params<S>>,
    slope: Vec<S>,
    std_dev: Vec<S>,
}

impl<S: Scalar> StepTable<S> {
    fn build(law: &ControlLaw<S>, params: &ParamSet<S>, grid: &TimeGrid<S>) -> Result<Self> {
        let n = grid.n_steps();
        let times: Vec<S> = grid.times();
        let dt = times.windows(2).map(|w| w[1] - w[0]).collect();
        let params = times[..n].iter().map(|&t| params.at(t)).collect::<Result<Vec<_>>>()?;
        let (slope, std_dev) = match law {
            ControlLaw::SubstitutedCurve(c) | ControlLaw::SubstitutedSlope(c) => {
                (times[..n].iter().map(|&t| c.eval(t)).collect::<Result<Vec<_>>>()?, vec![S::zero(); n])
            }
            ControlLaw::Randomized(pi) | ControlLaw::ExploratoryMean(pi) => {
                let slope = times[..n].iter().map(|&t| pi.mean_slope().eval(t)).collect::<Result<Vec<_>>>()?;
                let var = times[..n].iter().map(|&t| pi.variance(t)).collect::<Result<Vec<_>>>()?;
                if var.iter().any(|v| !(*v > S::zero())) {
                    return Err(Error::Contract("randomized laws need positive policy variance".into()));
                }
                (slope, var.into_iter().map(|v| v.sqrt()).collect())
            }
            ControlLaw::Feedback(_) => (vec![S::zero(); n], vec![S::zero(); n]),
        };
        Ok(Self { times, dt, params, slope, std_dev })
    }
}

/// Euler–Maruyama simulation `X_{k+1} = X_k + b dt + sigma dW_k` of
/// `n_paths` independent paths started at `x0`.
pub fn simulate<S: Scalar>(
    model: &CoefficientModel<S>,
    law: &ControlLaw<S>,
    params: &ParamSet<S>,
    x0: S,
    grid: &TimeGrid<S>,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle<S>> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("simulation needs at least one path".into()));
    }
    if !x0.is_finite() {
        return Err(Error::InvalidInput(format!("initial state must be finite, got {x0}")));
    }
    model.validate_params(params)?;
    let table = StepTable::build(law, params, grid)?;
    let n = grid.n_steps();
    let record = law.records_controls();

    let rows = (0..n_paths)
        .into_par_iter()
        .map(|path| simulate_path(model, law, &table, x0, n, path, seed, record))
        .collect::<Result<Vec<_>>>()?;

    let mut states = Vec::with_capacity(n_paths * (n + 1));
    let mut noise = Vec::with_capacity(n_paths * n);
    let mut controls = if record { Some(Vec::with_capacity(n_paths * n)) } else { None };
    for row in rows {
        states.extend_from_slice(&row.states);
        noise.extend_from_slice(&row.noise);
        if let Some(c) = controls.as_mut() {
            c.extend_from_slice(&row.controls);
        }
    }
    Ok(PathBundle { grid: *grid, n_paths, states, noise, controls, seed })
}

#[allow(clippy::too_many_arguments)]
fn simulate_path<S: Scalar>(
    model: &CoefficientModel<S>,
    law: &ControlLaw<S>,
    table: &StepTable<S>,
    x0: S,
    n: usize,
    path: usize,
    seed: u64,
    record: bool,
) -> Result<PathRows<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    let mut states = Vec::with_capacity(n + 1);
    let mut noise = Vec::with_capacity(n);
    let mut controls = Vec::with_capacity(if record { n } else { 0 });
    let mut x = x0;
    states.push(x);
    for k in 0..n {
        let dt = table.dt[k];
        let dw = dt.sqrt() * S::standard_normal(&mut rng);
        let z = S::standard_normal(&mut rng);
        let p = table.params[k];
        let (drift, diffusion) = match law {
            ControlLaw::Feedback(u) => {
                let u = u(table.times[k], x);
                (model.drift(p, x, u), model.diffusion(p, x, u))
            }
            ControlLaw::SubstitutedCurve(_) | ControlLaw::SubstitutedSlope(_) | ControlLaw::Randomized(_) => {
                let rho = match law {
                    ControlLaw::SubstitutedCurve(_) => table.slope[k],
                    ControlLaw::SubstitutedSlope(_) => table.slope[k] * x,
                    _ => table.slope[k] * x + table.std_dev[k] * z,
                };
                controls.push(rho);
                (model.b_hat(p, x, rho), model.sigma_hat(p, x, rho))
            }
            ControlLaw::ExploratoryMean(_) => {
                let sd = table.std_dev[k];
                exploratory_coefficients(model, p, x, table.slope[k] * x, sd * sd)
            }
        };
        x = x + drift * dt + diffusion * dw;
        if !x.is_finite() {
            return Err(Error::NonFinite { path, step: k + 1 });
        }
        states.push(x);
        noise.push(dw);
    }
    Ok(PathRows { states, noise, controls })
}

/// Largest gap between the classical optimal-feedback paths and the
/// substituted paths with `rho = param * x`, under identical noise.
pub fn path_equivalence<S: Scalar>(
    model: &CoefficientModel<S>,
    params: &ParamSet<S>,
    x0: S,
    grid: &TimeGrid<S>,
    n_paths: usize,
    seed: u64,
) -> Result<S> {
    let target = match model {
        CoefficientModel::General(GeneralStep::DriftStep) => params.alpha_curve()?.clone(),
        CoefficientModel::Custom(_) => {
            return Err(Error::Contract("path equivalence needs a named case".into()));
        }
        _ => params.beta.clone(),
    };
    let classical = simulate(model, &ControlLaw::optimal_feedback(model, params)?, params, x0, grid, n_paths, seed)?;
    let substituted = simulate(model, &ControlLaw::SubstitutedSlope(target), params, x0, grid, n_paths, seed)?;
    Ok(classical.states.iter().zip(&substituted.states).map(|(a, b)| (*a - *b).abs()).fold(S::zero(), S::max))
}
