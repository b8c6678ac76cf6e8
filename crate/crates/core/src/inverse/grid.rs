use super::ThetaPrior;
use crate::error::{PmmError, Result};

/// Posterior density of a scalar parameter tabulated on a grid, normalised
/// so that its trapezoid integral is one.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    pub theta: Vec<f64>,
    pub density: Vec<f64>,
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (x[i + 1] - x[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Normalised `exp(loglik + logprior)` on `theta_grid`.
pub fn grid_posterior(
    theta_grid: &[f64],
    prior: &ThetaPrior,
    mut loglik: impl FnMut(f64) -> Result<f64>,
) -> Result<GridPosterior> {
    if theta_grid.len() < 50 {
        return Err(PmmError::InvalidArgument(format!("grid needs at least 50 points, got {}", theta_grid.len())));
    }
    if theta_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(PmmError::InvalidArgument("grid must be strictly increasing".into()));
    }
    let mut logp = Vec::with_capacity(theta_grid.len());
    for &t in theta_grid {
        let lp = prior.log_density(t);
        logp.push(if lp == f64::NEG_INFINITY { lp } else { lp + loglik(t)? });
    }
    let top = logp.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(PmmError::AllZeroMass);
    }
    let unnorm: Vec<f64> = logp.iter().map(|v| if v.is_finite() { (v - top).exp() } else { 0.0 }).collect();
    let w = trapezoid_weights(theta_grid);
    let z: f64 = unnorm.iter().zip(&w).map(|(p, w)| p * w).sum();
    if !(z > 0.0) {
        return Err(PmmError::AllZeroMass);
    }
    Ok(GridPosterior { theta: theta_grid.to_vec(), density: unnorm.iter().map(|p| p / z).collect() })
}

impl GridPosterior {
    fn weights(&self) -> Vec<f64> {
        trapezoid_weights(&self.theta)
    }

    /// Trapezoid integral of the density (one after normalisation).
    pub fn total_mass(&self) -> f64 {
        self.density.iter().zip(self.weights()).map(|(p, w)| p * w).sum()
    }

    pub fn mean(&self) -> f64 {
        self.density.iter().zip(self.weights()).zip(&self.theta).map(|((p, w), t)| p * w * t).sum()
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        let v: f64 =
            self.density.iter().zip(self.weights()).zip(&self.theta).map(|((p, w), t)| p * w * (t - m).powi(2)).sum();
        v.sqrt()
    }

    /// Grid value with the highest density.
    pub fn mode(&self) -> f64 {
        let i = self.density.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        self.theta[i]
    }
}
