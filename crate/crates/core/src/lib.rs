//! Probabilistic meshless method (PMM) for linear and linearised PDEs.
//!
//! A Gaussian-process prior is conditioned on point evaluations of a PDE's
//! forcing and boundary data. The posterior mean coincides with symmetric
//! collocation and the posterior covariance describes the error caused by
//! only observing the forcing at finitely many points. That covariance is
//! then carried into Bayesian inverse problems, either in closed form
//! (linear forward models) or through a pseudo-marginal MCMC scheme that
//! importance-samples a latent forcing field (steady-state Allen–Cahn).
//!
//! Module map:
//!
//! - [`linalg`]: jittered Cholesky, Gaussian densities and sampling, seeded RNG streams.
//! - [`kernels`]: squared-exponential and Green's-function covariances under linear operators.
//! - [`pmm`]: block Gram assembly and the Gaussian forward posterior.
//! - [`problems`]: 1D Poisson and 2D Allen–Cahn problem definitions and coarse solvers.
//! - [`inverse`]: likelihoods, grid posteriors, Metropolis samplers, pseudo-marginal MCMC.
//! - [`cli`]: the experiment harness behind the `pmm` binary.

// `!(x > 0.0)` deliberately rejects NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod inverse;
pub mod kernels;
pub mod linalg;
pub mod pmm;
pub mod problems;

pub use error::{PmmError, Result};
pub use kernels::{Kernel, OperatorTag, Point, SqExpKernel};
pub use linalg::{RngStream, SymMatrix};
pub use pmm::{ForwardPosterior, ObservationBlock};
