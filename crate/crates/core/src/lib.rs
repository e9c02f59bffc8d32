//! Learning unknown deterministic drift and diffusion parameters of a
//! scalar SDE through entropy-regularized (exploratory) stochastic control.
//!
//! The unknown parameter inside a classical optimal feedback law is replaced
//! by a randomized control; the optimal exploratory density is Gaussian for
//! the linear cases, and its mean slope is the parameter. The crate provides
//! closed-form solutions, grid-based Gibbs densities, an Euler–Maruyama
//! simulator, numerical verification of the derivations and estimators.
//!
//! Every type is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below are the double-precision instantiations used by the CLI.

// `!(x > 0)` is the idiom used throughout to reject NaN alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod learner;
pub mod model;
pub mod quadrature;
pub mod scalar;
pub mod sim;
pub mod verification;

pub use error::{Error, Result};
pub use gibbs::{GaussianPolicy, GibbsDensity, QuadraticValue};
pub use model::{CaseTag, CoefficientModel, CostSpec, GeneralStep, ParamCurve, ParamSet, Params, TimeGrid};
pub use scalar::Scalar;
pub use sim::{ControlLaw, PathBundle};

pub type TimeGridF64 = TimeGrid<f64>;
pub type ParamCurveF64 = ParamCurve<f64>;
pub type ParamSetF64 = ParamSet<f64>;
pub type CoefficientModelF64 = CoefficientModel<f64>;
pub type CostSpecF64 = CostSpec<f64>;
pub type QuadraticValueF64 = QuadraticValue<f64>;
pub type GaussianPolicyF64 = GaussianPolicy<f64>;
pub type GibbsDensityF64 = GibbsDensity<f64>;
pub type PathBundleF64 = PathBundle<f64>;
pub type ControlLawF64 = ControlLaw<f64>;

pub type TimeGridF32 = TimeGrid<f32>;
pub type ParamCurveF32 = ParamCurve<f32>;
pub type GaussianPolicyF32 = GaussianPolicy<f32>;
pub type PathBundleF32 = PathBundle<f32>;
