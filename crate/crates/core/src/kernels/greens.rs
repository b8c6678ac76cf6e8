use nalgebra::DMatrix;

use super::{OperatorTag, Point, SqExpKernel};
use crate::error::{PmmError, Result};

/// Dirichlet Green's function of `-d²/dx²` on (0, 1).
pub fn dirichlet_green(x: f64, z: f64) -> f64 {
    x.min(z) * (1.0 - x.max(z))
}

/// Green's-function prior on (0, 1).
///
/// The solution is modelled as `u = ∫ G(·, z) f(z) dz` with the forcing
/// `f ~ GP(0, Λ)`, `Λ` a squared-exponential kernel, so that `-u'' = f`
/// and `u(0) = u(1) = 0` hold for every prior draw. With
/// `φ_x(y) = ∫ G(x, z) Λ(z, y) dz` (closed form in `erf`):
///
/// - `k(x, x')           = ∫ G(x', y) φ_x(y) dy`
/// - `(-∂²_x) k(x, x')   = φ_x'(x)`
/// - `(-∂²_x)(-∂²_x') k  = Λ(x, x')`
///
/// The outer integral uses composite two-point Gauss–Legendre with the
/// panels split at the kink of `G(x', ·)`, so the integrand is smooth on
/// every panel.
#[derive(Debug, Clone)]
pub struct GreensKernel1D {
    forcing: SqExpKernel,
    panels: usize,
}

impl GreensKernel1D {
    pub const DEFAULT_NODES: usize = 256;

    /// `quadrature_nodes` must be even and at least 4 (two nodes per panel).
    pub fn new(forcing_lengthscale: f64, quadrature_nodes: usize) -> Result<Self> {
        if quadrature_nodes < 4 || !quadrature_nodes.is_multiple_of(2) {
            return Err(PmmError::InvalidArgument(format!(
                "quadrature node count must be even and >= 4, got {quadrature_nodes}"
            )));
        }
        let forcing = SqExpKernel::new(forcing_lengthscale, 1)?;
        Ok(Self { forcing, panels: quadrature_nodes / 2 })
    }

    pub fn quadrature_nodes(&self) -> usize {
        2 * self.panels
    }

    pub fn forcing_lengthscale(&self) -> f64 {
        self.forcing.lengthscale()
    }

    fn check(points: &[Point]) -> Result<()> {
        for p in points {
            if p.x[1] != 0.0 || !(0.0..=1.0).contains(&p.x[0]) {
                return Err(PmmError::DimensionMismatch(format!(
                    "Green's kernel is defined on [0, 1], got point {:?}",
                    p.x
                )));
            }
        }
        Ok(())
    }

    /// `∫ G(x, z) Λ(z, y) dz` over (0, 1).
    fn smoothed_green(&self, x: f64, y: f64) -> f64 {
        let l = self.forcing.lengthscale();
        let s = std::f64::consts::SQRT_2 * l;
        let gauss = |z: f64| (-0.5 * ((z - y) / l).powi(2)).exp();
        let i0 = |a: f64, b: f64| {
            l * (0.5 * std::f64::consts::PI).sqrt() * (libm::erf((b - y) / s) - libm::erf((a - y) / s))
        };
        let i1 = |a: f64, b: f64| l * l * (gauss(a) - gauss(b)) + y * i0(a, b);
        (1.0 - x) * i1(0.0, x) + x * (i0(x, 1.0) - i1(x, 1.0))
    }

    /// `∫ G(x', y) φ_x(y) dy`, split at `y = x'`.
    fn prior_one_sided(&self, x: f64, xp: f64) -> f64 {
        if xp <= 0.0 || xp >= 1.0 {
            return 0.0;
        }
        let left = ((xp * self.panels as f64).round() as usize).clamp(1, self.panels - 1);
        let off = 0.5 / 3f64.sqrt();
        let mut sum = 0.0;
        for (a, b, n) in [(0.0, xp, left), (xp, 1.0, self.panels - left)] {
            let h = (b - a) / n as f64;
            for p in 0..n {
                let mid = a + (p as f64 + 0.5) * h;
                for y in [mid - off * h, mid + off * h] {
                    sum += 0.5 * h * dirichlet_green(xp, y) * self.smoothed_green(x, y);
                }
            }
        }
        sum
    }

    fn prior(&self, x: f64, xp: f64) -> f64 {
        0.5 * (self.prior_one_sided(x, xp) + self.prior_one_sided(xp, x))
    }

    /// Cross-covariance block between `left` applied at `xs` and `right` at `ys`.
    pub fn op_cross(&self, left: OperatorTag, xs: &[Point], right: OperatorTag, ys: &[Point]) -> Result<DMatrix<f64>> {
        Self::check(xs)?;
        Self::check(ys)?;
        let (al, cl) = left.coefficients();
        let (ar, cr) = right.coefficients();
        Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
            let (x, y) = (xs[i].x[0], ys[j].x[0]);
            let mut v = 0.0;
            if cl != 0.0 && cr != 0.0 {
                v += cl * cr * self.prior(x, y);
            }
            if al != 0.0 && cr != 0.0 {
                v += al * cr * self.smoothed_green(y, x);
            }
            if cl != 0.0 && ar != 0.0 {
                v += cl * ar * self.smoothed_green(x, y);
            }
            if al != 0.0 && ar != 0.0 {
                v += al * ar * self.forcing.eval(&xs[i], &ys[j]);
            }
            v
        }))
    }

    pub fn op_eval(&self, left: OperatorTag, right: OperatorTag, x: &Point, y: &Point) -> Result<f64> {
        Ok(self.op_cross(left, std::slice::from_ref(x), right, std::slice::from_ref(y))?[(0, 0)])
    }
}
