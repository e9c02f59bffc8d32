//! Shared domain types: time grids, parameter curves, coefficient models
//! and cost functionals.

pub mod coefficients;
pub mod cost;
pub mod curve;
pub mod grid;

pub use coefficients::{CaseTag, CoefficientFn, CoefficientModel, CustomCoefficients, GeneralStep, ParamSet, Params};
pub use cost::CostSpec;
pub use curve::ParamCurve;
pub use grid::TimeGrid;
