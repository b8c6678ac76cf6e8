//! Bayesian inverse problems with a probabilistic forward solver.
//!
//! Two likelihoods are compared throughout. The plug-in likelihood
//! `N(y; û, Γ)` treats a point estimate of the solution as exact. The PN
//! likelihood `N(y; μ(θ), Γ + Σ(θ))` integrates the forward posterior out,
//! so a coarse forward solve widens the data covariance instead of
//! biasing the parameter posterior.

pub mod grid;
pub mod mcmc;
pub mod pseudo_marginal;

use nalgebra::DVector;

use crate::error::{PmmError, Result};
use crate::kernels::Point;
use crate::linalg::{mvn_logpdf, SymMatrix};
use crate::pmm::ForwardPosterior;

pub use grid::{grid_posterior, GridPosterior};
pub use mcmc::{rw_metropolis, Chain};
pub use pseudo_marginal::{importance_estimate, PMEstimate};

/// Gaussian observation noise `ξ ~ N(0, Γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    gamma: SymMatrix,
}

impl NoiseModel {
    /// `Γ = σ² I_n`.
    pub fn iid(sigma: f64, n: usize) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(PmmError::InvalidArgument(format!("noise level must be positive, got {sigma}")));
        }
        Ok(Self { gamma: SymMatrix::from_diagonal(&vec![sigma * sigma; n]) })
    }

    pub fn from_covariance(gamma: SymMatrix) -> Self {
        Self { gamma }
    }

    pub fn covariance(&self) -> &SymMatrix {
        &self.gamma
    }

    pub fn dim(&self) -> usize {
        self.gamma.n()
    }
}

/// Prior on a scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaPrior {
    Uniform { lo: f64, hi: f64 },
    HalfCauchy { scale: f64 },
    LogUniform { lo: f64, hi: f64 },
}

impl ThetaPrior {
    /// Log density; `-∞` outside the support. Uniform supports are open.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            ThetaPrior::Uniform { lo, hi } => {
                if x > lo && x < hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ThetaPrior::HalfCauchy { scale } => {
                if x > 0.0 {
                    (2.0 / (std::f64::consts::PI * scale)).ln() - (x / scale).powi(2).ln_1p()
                } else {
                    f64::NEG_INFINITY
                }
            }
            ThetaPrior::LogUniform { lo, hi } => {
                if x > lo && x < hi {
                    -x.ln() - (hi / lo).ln().ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            ThetaPrior::Uniform { lo, hi } | ThetaPrior::LogUniform { lo, hi } => (lo, hi),
            ThetaPrior::HalfCauchy { .. } => (0.0, f64::INFINITY),
        }
    }
}

/// `log N(y; û, Γ)`.
pub fn plugin_loglik(y: &DVector<f64>, mean_at_data: &DVector<f64>, noise: &NoiseModel) -> Result<f64> {
    mvn_logpdf(y, mean_at_data, noise.covariance())
}

/// `log N(y; μ(X), Γ + Σ(X))` with `μ, Σ` from the forward posterior at
/// the data locations.
pub fn pn_loglik(
    y: &DVector<f64>,
    posterior: &ForwardPosterior,
    data_locations: &[Point],
    noise: &NoiseModel,
) -> Result<f64> {
    if data_locations.len() != noise.dim() {
        return Err(PmmError::DimensionMismatch(format!(
            "{} data locations but noise covariance of dimension {}",
            data_locations.len(),
            noise.dim()
        )));
    }
    let mean = posterior.posterior_mean(data_locations)?;
    let cov = posterior.posterior_cov(data_locations)?.add(noise.covariance())?;
    mvn_logpdf(y, &mean, &cov)
}
