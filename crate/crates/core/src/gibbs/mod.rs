//! Optimal exploratory densities: the Hamiltonian, its Gibbs density on a
//! grid, the Gaussian reduction for quadratic Hamiltonians, argmax,
//! sampling and entropy.

pub mod density;
pub mod hamiltonian;
pub mod policy;
pub mod value;

pub use density::{density_argmax, density_sample, gibbs_density, gibbs_density_auto, GibbsDensity};
pub use hamiltonian::{
    first_order_residual, gaussian_reduce, hamiltonian, hamiltonian_fn, optimal_gaussian, Quadratic,
};
pub use policy::{entropy_term, exploratory_coefficients, GaussianPolicy};
pub use value::QuadraticValue;
