//! `-θ u'' = sin(2πx)` on (0, 1) with `u(0) = u(1) = 0`.

use std::f64::consts::PI;

use crate::error::{PmmError, Result};
use crate::kernels::{probe_grid_1d, Kernel, OperatorTag, Point, PROBE_1D};
use crate::linalg::RngStream;
use crate::pmm::{ForwardProblem, ObservationBlock};

/// Exact solution `sin(2πx) / (4π²θ)`.
pub fn poisson_exact(theta: f64, x: f64) -> f64 {
    (2.0 * PI * x).sin() / (4.0 * PI * PI * theta)
}

pub fn forcing(x: f64) -> f64 {
    (2.0 * PI * x).sin()
}

/// `n` equispaced points on [0, 1], endpoints included.
pub fn uniform_grid_1d(n: usize) -> Vec<Point> {
    assert!(n >= 2);
    (0..n).map(|i| Point::d1(i as f64 / (n - 1) as f64)).collect()
}

/// `m` equispaced interior points `i / (m + 1)`.
pub fn interior_design_1d(m: usize) -> Vec<Point> {
    (1..=m).map(|i| Point::d1(i as f64 / (m + 1) as f64)).collect()
}

/// Every `finest / m`-th of the points `i / (finest + 1)`, starting from
/// the first, so that designs for divisors of `finest` are nested and
/// equispaced. Coarse designs leave a wider gap at the right end, never
/// wider than their own spacing.
pub fn nested_design_1d(m: usize, finest: usize) -> Result<Vec<Point>> {
    if m == 0 || !finest.is_multiple_of(m) {
        return Err(PmmError::InvalidArgument(format!("design size {m} does not divide {finest}")));
    }
    let stride = finest / m;
    Ok((0..m).map(|i| Point::d1((i * stride + 1) as f64 / (finest + 1) as f64)).collect())
}

/// Placement of interior design points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignRule {
    /// [`interior_design_1d`]
    Uniform,
    /// [`nested_design_1d`] within the given finest size.
    Nested { finest: usize },
}

impl DesignRule {
    pub fn points(&self, m: usize) -> Result<Vec<Point>> {
        match *self {
            DesignRule::Uniform => Ok(interior_design_1d(m)),
            DesignRule::Nested { finest } => nested_design_1d(m, finest),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poisson1D {
    theta: f64,
    design: DesignRule,
}

impl Poisson1D {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(PmmError::InvalidArgument(format!("theta must be positive, got {theta}")));
        }
        Ok(Self { theta, design: DesignRule::Uniform })
    }

    pub fn with_design(self, design: DesignRule) -> Self {
        Self { design, ..self }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn interior_operator(&self) -> OperatorTag {
        OperatorTag::AffineInterior { a: self.theta, c: 0.0 }
    }
}

impl ForwardProblem for Poisson1D {
    /// Interior forcing on the design rule's points, plus boundary values
    /// at {0, 1} unless the kernel already pins them.
    fn observation_blocks(&self, m: usize, kernel: &Kernel) -> Result<Vec<ObservationBlock>> {
        if m == 0 {
            return Err(PmmError::EmptyDesign);
        }
        let pts = self.design.points(m)?;
        let g = pts.iter().map(|p| forcing(p.x[0])).collect();
        let mut blocks = vec![ObservationBlock::new(self.interior_operator(), pts, g)?];
        if !kernel.satisfies_dirichlet() {
            blocks.push(ObservationBlock::new(
                OperatorTag::BoundaryTrace,
                vec![Point::d1(0.0), Point::d1(1.0)],
                vec![0.0, 0.0],
            )?);
        }
        Ok(blocks)
    }

    fn exact_solution(&self, x: &Point) -> f64 {
        poisson_exact(self.theta, x.x[0])
    }

    fn probe_grid(&self) -> Vec<Point> {
        probe_grid_1d(PROBE_1D)
    }
}

/// `y_i = u(x_i; θ₀) + ξ_i`, `ξ_i ~ N(0, σ²)`.
pub fn generate_data(theta0: f64, locations: &[Point], sigma: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(PmmError::InvalidArgument(format!("noise level must be positive, got {sigma}")));
    }
    let p = Poisson1D::new(theta0)?;
    Ok(locations.iter().map(|x| p.exact_solution(x) + sigma * rng.standard_normal()).collect())
}
