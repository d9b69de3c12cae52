//! Fitting Gaussian random field covariance models to spatial data through a
//! two-stage procedure: a convex weighted-l1 log-det solve for a sparse
//! precision matrix, followed by a least-squares fit of the covariance
//! kernel parameters. Includes GRF simulation, dataset segmentation for
//! large n, kriging prediction, a maximum-likelihood baseline, and a
//! replicated benchmark harness.

pub mod error;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod mle;
pub mod predict;
pub mod sampler;
pub mod segmentation;
pub mod simplex;
pub mod stage1;
pub mod stage2;
pub mod stream;

pub use error::{Error, Result};
pub use kernels::{correlation, covariance_matrix, CovarianceParams, KernelFamily, LocationSet};
pub use sampler::{distance_weights, near_sparsity_fraction, sample_covariance, sample_grf, SpatialDataset, WeightMatrix};
pub use stage1::{effective_bounds, prox_phi, prox_psi, solve_stage1, PrecisionEstimate, Stage1Config, Stage1Template};
pub use stage2::{
    block_residual, correlation_jacobian_min_sv, fit_stage2, inner_solution, inner_solution_no_nugget,
    invert_precision, outer_objective, ActiveCase, LongVectors, Stage2Options, Stage2Result,
};
