//! Independent reference implementations used by tests and validation runs:
//! dense propagators, a spectral jump propagator, Monte Carlo and closed
//! forms. Nothing here shares numerical kernels with the solver modules; the
//! dense oracles rebuild stencil weights from scratch (Vandermonde solves)
//! and factor every linear problem densely.

mod closed_form;
mod dense;
mod mc;
mod spectral;

pub use closed_form::{black_scholes_call, black_scholes_put, cir_bond_price, norm_cdf};
pub use dense::{dense_expm_propagate, dense_lagrange_d1, dense_lagrange_weights, dense_solve, DenseMat};
pub use mc::{mc_price_diffusion, McConfig};
pub use spectral::spectral_jump_propagate;
