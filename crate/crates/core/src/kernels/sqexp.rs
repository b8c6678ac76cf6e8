use super::{OperatorTag, Point};
use crate::error::{PmmError, Result};

/// Isotropic squared-exponential covariance `exp(-|x - y|² / 2ℓ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqExpKernel {
    lengthscale: f64,
    dim: usize,
}

impl SqExpKernel {
    pub fn new(lengthscale: f64, dim: usize) -> Result<Self> {
        if !(lengthscale > 0.0) || !lengthscale.is_finite() {
            return Err(PmmError::InvalidArgument(format!("length-scale must be positive, got {lengthscale}")));
        }
        if !(1..=2).contains(&dim) {
            return Err(PmmError::InvalidArgument(format!("dimension must be 1 or 2, got {dim}")));
        }
        Ok(Self { lengthscale, dim })
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &Point, y: &Point) -> f64 {
        (-0.5 * x.dist2(y) / (self.lengthscale * self.lengthscale)).exp()
    }

    /// `(L_x R_y k)(x, y)` for `L = a_L(-Δ) + c_L`, `R = a_R(-Δ) + c_R`.
    ///
    /// With `q = |x - y|²/ℓ²` and `g = exp(-q/2)`:
    /// `-Δg = (d - q) g / ℓ²` and `Δ²g = (q² - 2(d+2) q + d(d+2)) g / ℓ⁴`.
    /// Stationarity makes `Δ_y` act like `Δ_x`, so the mixed term is `Δ²g`.
    pub fn op_eval(&self, left: OperatorTag, right: OperatorTag, x: &Point, y: &Point) -> f64 {
        let (al, cl) = left.coefficients();
        let (ar, cr) = right.coefficients();
        let l2 = self.lengthscale * self.lengthscale;
        let d = self.dim as f64;
        let q = x.dist2(y) / l2;
        let g = (-0.5 * q).exp();
        let mut v = cl * cr * g;
        if al != 0.0 || ar != 0.0 {
            let neg_lap = (d - q) / l2 * g;
            v += (al * cr + cl * ar) * neg_lap;
            if al != 0.0 && ar != 0.0 {
                let bilap = (q * q - 2.0 * (d + 2.0) * q + d * (d + 2.0)) / (l2 * l2) * g;
                v += al * ar * bilap;
            }
        }
        v
    }
}
