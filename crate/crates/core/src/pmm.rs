//! Gaussian-process forward solver for linear PDE systems.
//!
//! Observations are grouped into [`ObservationBlock`]s, one per operator
//! equation. The block Gram matrix `ℒℒ̄K(X₀, X₀)` is assembled once, scaled
//! to unit diagonal and factorised with jitter; conditioning on the
//! stacked right-hand sides then gives the Gaussian posterior
//!
//! ```text
//! μ(X) = ℒ̄K(X, X₀) w,            w = [ℒℒ̄K(X₀, X₀)]⁻¹ [g; b]
//! Σ(X) = K(X, X) - ℒ̄K(X, X₀) [ℒℒ̄K(X₀, X₀)]⁻¹ ℒK(X₀, X)
//! ```
//!
//! The mean is the symmetric-collocation solution; the covariance is the
//! discretisation uncertainty.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{PmmError, Result};
use crate::kernels::{fill_distance, Kernel, OperatorTag, Point};
use crate::linalg::{chol_jitter_floor, mvn_sample, CholFactor, JitterSchedule, RngStream, SymMatrix};

/// One operator equation observed at a finite set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBlock {
    pub op: OperatorTag,
    pub points: Vec<Point>,
    pub rhs: Vec<f64>,
}

impl ObservationBlock {
    pub fn new(op: OperatorTag, points: Vec<Point>, rhs: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(PmmError::EmptyDesign);
        }
        if points.len() != rhs.len() {
            return Err(PmmError::DimensionMismatch(format!(
                "block has {} points but {} right-hand-side values",
                points.len(),
                rhs.len()
            )));
        }
        Ok(Self { op, points, rhs })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn on_boundary(p: &Point, dim: usize) -> bool {
    let edge = |t: f64| t == 0.0 || t == 1.0;
    let inside = |t: f64| (0.0..=1.0).contains(&t);
    if dim == 1 {
        edge(p.x[0])
    } else {
        inside(p.x[0]) && inside(p.x[1]) && (edge(p.x[0]) || edge(p.x[1]))
    }
}

fn in_interior(p: &Point, dim: usize) -> bool {
    let open = |t: f64| t > 0.0 && t < 1.0;
    open(p.x[0]) && (dim == 1 || open(p.x[1]))
}

fn validate_blocks(blocks: &[ObservationBlock], dim: usize) -> Result<()> {
    if blocks.is_empty() {
        return Err(PmmError::EmptyDesign);
    }
    for b in blocks {
        match b.op {
            OperatorTag::BoundaryTrace => {
                if let Some(p) = b.points.iter().find(|p| !on_boundary(p, dim)) {
                    return Err(PmmError::InvalidArgument(format!(
                        "boundary block contains non-boundary point {:?}",
                        p.x
                    )));
                }
            }
            OperatorTag::NegLaplacian { .. } | OperatorTag::AffineInterior { .. } => {
                if let Some(p) = b.points.iter().find(|p| !in_interior(p, dim)) {
                    return Err(PmmError::InvalidArgument(format!("interior block contains point {:?}", p.x)));
                }
            }
            OperatorTag::Identity => {}
        }
        if b.rhs.iter().any(|v| !v.is_finite()) {
            return Err(PmmError::NonFinite("observation block right-hand side"));
        }
    }
    Ok(())
}

/// `ℒℒ̄K(X₀, X₀)` laid out block by block in the order of `blocks`.
pub fn assemble_gram(blocks: &[ObservationBlock], kernel: &Kernel) -> Result<SymMatrix> {
    let offsets = block_offsets(blocks);
    let m = *offsets.last().unwrap_or(&0);
    let mut g = DMatrix::zeros(m, m);
    for (bi, a) in blocks.iter().enumerate() {
        for (bj, b) in blocks.iter().enumerate().skip(bi) {
            let c = kernel.op_cross(a.op, &a.points, b.op, &b.points)?;
            g.view_mut((offsets[bi], offsets[bj]), (a.len(), b.len())).copy_from(&c);
        }
    }
    // mirror the upper triangle so the result is exactly symmetric
    Ok(SymMatrix::from_fn(m, |i, j| g[(i, j)]))
}

fn block_offsets(blocks: &[ObservationBlock]) -> Vec<usize> {
    let mut off = vec![0];
    for b in blocks {
        off.push(off.last().unwrap() + b.len());
    }
    off
}

/// Factorised block Gram system: everything in the posterior that does not
/// depend on the right-hand sides.
#[derive(Debug)]
pub struct GramSystem {
    layout: Vec<(OperatorTag, Vec<Point>)>,
    kernel: Kernel,
    /// `diag(G)^{-1/2}` used to equilibrate before factorising
    scale: DVector<f64>,
    factor: CholFactor,
}

impl GramSystem {
    pub fn new(blocks: &[ObservationBlock], kernel: &Kernel) -> Result<Self> {
        Self::with_jitter_floor(blocks, kernel, 0.0)
    }

    /// Like [`GramSystem::new`] but adds at least `floor` to the diagonal of
    /// the equilibrated Gram matrix.
    pub fn with_jitter_floor(blocks: &[ObservationBlock], kernel: &Kernel, floor: f64) -> Result<Self> {
        validate_blocks(blocks, kernel.dim())?;
        let gram = assemble_gram(blocks, kernel)?;
        let scale = gram.diagonal().map(|d| if d > 0.0 && d.is_finite() { 1.0 / d.sqrt() } else { 1.0 });
        let scaled = SymMatrix::from_fn(gram.n(), |i, j| gram.get(i, j) * scale[i] * scale[j]);
        let s = JitterSchedule::relative_to(&scaled);
        let factor = chol_jitter_floor(&scaled, floor, s.min, s.max)?;
        Ok(Self {
            layout: blocks.iter().map(|b| (b.op, b.points.clone())).collect(),
            kernel: kernel.clone(),
            scale,
            factor,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn size(&self) -> usize {
        self.scale.len()
    }

    /// Jitter added to the unit-diagonal scaled Gram matrix.
    pub fn jitter_used(&self) -> f64 {
        self.factor.jitter_used()
    }

    pub fn design_points(&self) -> Vec<Point> {
        self.layout.iter().flat_map(|(_, p)| p.iter().copied()).collect()
    }

    /// `[op_x ℒ̄_y k](X, X₀)`: one row per point in `xs`.
    pub fn cross(&self, op: OperatorTag, xs: &[Point]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(xs.len(), self.size());
        let mut col = 0;
        for (bop, pts) in &self.layout {
            let c = self.kernel.op_cross(op, xs, *bop, pts)?;
            out.view_mut((0, col), (xs.len(), pts.len())).copy_from(&c);
            col += pts.len();
        }
        Ok(out)
    }

    /// `[ℒℒ̄K]⁻¹ data`.
    pub fn weights(&self, data: &DVector<f64>) -> Result<DVector<f64>> {
        if data.len() != self.size() {
            return Err(PmmError::DimensionMismatch(format!(
                "{} data values for {} observations",
                data.len(),
                self.size()
            )));
        }
        let scaled = data.component_mul(&self.scale);
        Ok(self.factor.solve_vec(&scaled).component_mul(&self.scale))
    }

    /// `L⁻¹ D^{-1/2} C(xs)ᵀ`: the whitened cross-covariance whose Gram gives
    /// the variance explained by the observations.
    fn whitened(&self, cross: &DMatrix<f64>) -> DMatrix<f64> {
        let mut ct = cross.transpose();
        for (i, s) in self.scale.iter().enumerate() {
            ct.row_mut(i).scale_mut(*s);
        }
        self.factor.solve_lower(&ct)
    }

    pub fn posterior_cov(&self, xs: &[Point]) -> Result<SymMatrix> {
        let v = self.whitened(&self.cross(OperatorTag::Identity, xs)?);
        let prior = self.kernel.gram(xs)?;
        SymMatrix::symmetrize(prior.as_matrix() - v.transpose() * v)
    }

    /// Pointwise posterior variances (diagonal of [`GramSystem::posterior_cov`]).
    pub fn posterior_var(&self, xs: &[Point]) -> Result<Vec<f64>> {
        let v = self.whitened(&self.cross(OperatorTag::Identity, xs)?);
        xs.iter().enumerate().map(|(i, x)| Ok(self.kernel.eval(x, x)? - v.column(i).norm_squared())).collect()
    }
}

/// Gaussian posterior over the PDE solution given all observation blocks.
#[derive(Debug, Clone)]
pub struct ForwardPosterior {
    blocks: Vec<ObservationBlock>,
    system: Arc<GramSystem>,
    weights: DVector<f64>,
}

/// Conditions the prior `GP(0, k)` on every block.
pub fn solve_forward(blocks: &[ObservationBlock], kernel: &Kernel) -> Result<ForwardPosterior> {
    let system = Arc::new(GramSystem::new(blocks, kernel)?);
    ForwardPosterior::from_system(system, blocks.to_vec())
}

/// Solves several related problems (e.g. a design refinement sequence)
/// with one common nugget: the largest jitter any of them needs on its own.
/// Nested designs then give pointwise non-increasing variances.
pub fn solve_forward_shared(block_sets: &[Vec<ObservationBlock>], kernel: &Kernel) -> Result<Vec<ForwardPosterior>> {
    let systems = block_sets.iter().map(|b| GramSystem::new(b, kernel)).collect::<Result<Vec<_>>>()?;
    let nugget = systems.iter().map(GramSystem::jitter_used).fold(0.0, f64::max);
    systems
        .into_iter()
        .zip(block_sets)
        .map(|(sys, blocks)| {
            let sys =
                if sys.jitter_used() < nugget { GramSystem::with_jitter_floor(blocks, kernel, nugget)? } else { sys };
            ForwardPosterior::from_system(Arc::new(sys), blocks.clone())
        })
        .collect()
}

impl ForwardPosterior {
    /// Reuses a factorised system; `blocks` must have the same operators
    /// and points as the ones the system was built from.
    pub fn from_system(system: Arc<GramSystem>, blocks: Vec<ObservationBlock>) -> Result<Self> {
        let same_layout = system.layout.len() == blocks.len()
            && system.layout.iter().zip(&blocks).all(|((op, pts), b)| *op == b.op && *pts == b.points);
        if !same_layout {
            return Err(PmmError::InvalidArgument("blocks do not match the factorised layout".into()));
        }
        let data = DVector::from_iterator(system.size(), blocks.iter().flat_map(|b| b.rhs.iter().copied()));
        let weights = system.weights(&data)?;
        Ok(Self { blocks, system, weights })
    }

    pub fn blocks(&self) -> &[ObservationBlock] {
        &self.blocks
    }

    pub fn system(&self) -> &Arc<GramSystem> {
        &self.system
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn kernel(&self) -> &Kernel {
        self.system.kernel()
    }

    pub fn posterior_mean(&self, xs: &[Point]) -> Result<DVector<f64>> {
        self.apply_to_mean(OperatorTag::Identity, xs)
    }

    /// `op` applied to the posterior mean, evaluated at `xs`.
    pub fn apply_to_mean(&self, op: OperatorTag, xs: &[Point]) -> Result<DVector<f64>> {
        Ok(self.system.cross(op, xs)? * &self.weights)
    }

    pub fn posterior_cov(&self, xs: &[Point]) -> Result<SymMatrix> {
        self.system.posterior_cov(xs)
    }

    pub fn posterior_var(&self, xs: &[Point]) -> Result<Vec<f64>> {
        self.system.posterior_var(xs)
    }

    /// `n` joint draws of the solution at `xs`.
    pub fn sample_paths(&self, xs: &[Point], n: usize, rng: &mut RngStream) -> Result<Vec<DVector<f64>>> {
        let mean = self.posterior_mean(xs)?;
        let cov = self.posterior_cov(xs)?;
        mvn_sample(&mean, &cov, n, rng)
    }
}

/// A linear forward problem with a known solution, used for convergence studies.
pub trait ForwardProblem {
    /// Observation blocks for a design with `m` interior points.
    fn observation_blocks(&self, m: usize, kernel: &Kernel) -> Result<Vec<ObservationBlock>>;
    fn exact_solution(&self, x: &Point) -> f64;
    /// Dense probe grid for fill-distance estimation.
    fn probe_grid(&self) -> Vec<Point>;
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub m: usize,
    pub h: f64,
    pub err_l2_rel: f64,
    pub cov_trace: f64,
}

/// Relative discrete L2 distance `|a - b| / |b|`.
pub fn relative_l2(approx: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = exact.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

/// Posterior-mean error against the exact solution and posterior-variance
/// trace on `eval_grid`, for each design size in `m_list`. All designs
/// share one nugget (see [`solve_forward_shared`]).
pub fn convergence_experiment(
    problem: &dyn ForwardProblem,
    kernel: &Kernel,
    m_list: &[usize],
    eval_grid: &[Point],
) -> Result<Vec<ConvergenceRow>> {
    let probe = problem.probe_grid();
    let exact: Vec<f64> = eval_grid.iter().map(|x| problem.exact_solution(x)).collect();
    let block_sets = m_list.iter().map(|&m| problem.observation_blocks(m, kernel)).collect::<Result<Vec<_>>>()?;
    let posts = solve_forward_shared(&block_sets, kernel)?;
    m_list
        .iter()
        .zip(block_sets.iter().zip(&posts))
        .map(|(&m, (blocks, post))| {
            let design: Vec<Point> = blocks.iter().flat_map(|b| b.points.iter().copied()).collect();
            let mean = post.posterior_mean(eval_grid)?;
            let var = post.posterior_var(eval_grid)?;
            Ok(ConvergenceRow {
                m,
                h: fill_distance(&design, &probe)?,
                err_l2_rel: relative_l2(mean.as_slice(), &exact),
                cov_trace: var.iter().sum(),
            })
        })
        .collect()
}
