//! Steady-state Allen–Cahn on the unit square:
//!
//! ```text
//! -δ Δu + δ⁻¹ (u³ - u) = 0    in (0, 1)²
//! u = +1 on x₁ ∈ {0, 1},  u = -1 on x₂ ∈ {0, 1}
//! ```
//!
//! A five-point finite-difference Newton solver with deflation finds the
//! coexisting solutions; each solution `û` induces a latent field
//! `z = -û³/δ`, and given `z` the system splits into the linear pair
//! `-δΔu - δ⁻¹u = z`, `u = (-δz)^{1/3}` that the PMM can condition on.

use crate::error::{PmmError, Result};
use crate::kernels::{OperatorTag, Point};
use crate::linalg::{BandedLu, RngStream};
use crate::pmm::ObservationBlock;

pub const DELTA_MIN: f64 = 0.02;
pub const DELTA_MAX: f64 = 0.15;

/// Dirichlet data: +1 on the x₁-edges, -1 on the x₂-edges, 0 at corners.
pub fn boundary_value(p: &Point) -> f64 {
    let e1 = p.x[0] == 0.0 || p.x[0] == 1.0;
    let e2 = p.x[1] == 0.0 || p.x[1] == 1.0;
    match (e1, e2) {
        (true, true) => 0.0,
        (true, false) => 1.0,
        (false, true) => -1.0,
        (false, false) => f64::NAN,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllenCahnSpec {
    delta: f64,
}

impl AllenCahnSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > DELTA_MIN && delta < DELTA_MAX) {
            return Err(PmmError::InvalidArgument(format!(
                "delta must lie in ({DELTA_MIN}, {DELTA_MAX}), got {delta}"
            )));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Regular `n × n` interior lattice with spacing `1/(n+1)`. Node `(i, j)`
/// sits at `((i+1)h, (j+1)h)` and is stored at `j·n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub n: usize,
}

impl Grid {
    pub fn h(&self) -> f64 {
        1.0 / (self.n + 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn node(&self, k: usize) -> Point {
        let h = self.h();
        Point::d2(((k % self.n) + 1) as f64 * h, ((k / self.n) + 1) as f64 * h)
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Value at extended index `(a, b)` in `0..=n+1`, boundary included.
    fn extended(&self, u: &[f64], a: usize, b: usize) -> f64 {
        let h = self.h();
        if a == 0 || b == 0 || a == self.n + 1 || b == self.n + 1 {
            boundary_value(&Point::d2(a as f64 * h, b as f64 * h))
        } else {
            u[(b - 1) * self.n + (a - 1)]
        }
    }

    /// Bilinear interpolation of a lattice field (with its boundary values)
    /// at an arbitrary point of the closed square.
    pub fn interpolate(&self, u: &[f64], p: &Point) -> f64 {
        let m = (self.n + 1) as f64;
        let s = (p.x[0].clamp(0.0, 1.0)) * m;
        let t = (p.x[1].clamp(0.0, 1.0)) * m;
        let a = (s.floor() as usize).min(self.n);
        let b = (t.floor() as usize).min(self.n);
        let (fs, ft) = (s - a as f64, t - b as f64);
        let v00 = self.extended(u, a, b);
        let v10 = self.extended(u, a + 1, b);
        let v01 = self.extended(u, a, b + 1);
        let v11 = self.extended(u, a + 1, b + 1);
        (1.0 - fs) * (1.0 - ft) * v00 + fs * (1.0 - ft) * v10 + (1.0 - fs) * ft * v01 + fs * ft * v11
    }
}

/// A converged lattice solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub grid: Grid,
    pub u_hat: Vec<f64>,
    /// 1-based label after sorting by the value at the domain centre.
    pub solution_index: usize,
    pub residual_norm: f64,
}

impl GridSolution {
    pub fn value_at(&self, p: &Point) -> f64 {
        self.grid.interpolate(&self.u_hat, p)
    }

    pub fn centre_value(&self) -> f64 {
        self.value_at(&Point::d2(0.5, 0.5))
    }

    /// Discrete L2 norm on the unit square.
    pub fn l2_norm(&self) -> f64 {
        self.grid.h() * self.u_hat.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Five-point residual `-δ Δ_h u + δ⁻¹(u³ - u)` at every interior node.
pub fn ac_residual(u: &[f64], grid: Grid, delta: f64) -> Vec<f64> {
    let n = grid.n;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut r = vec![0.0; grid.len()];
    for b in 1..=n {
        for a in 1..=n {
            let c = grid.extended(u, a, b);
            let nb = grid.extended(u, a - 1, b)
                + grid.extended(u, a + 1, b)
                + grid.extended(u, a, b - 1)
                + grid.extended(u, a, b + 1);
            r[(b - 1) * n + (a - 1)] = delta * (4.0 * c - nb) * inv_h2 + (c * c * c - c) / delta;
        }
    }
    r
}

fn jacobian(u: &[f64], grid: Grid, delta: f64) -> BandedLu {
    let n = grid.n;
    let off = -delta / (grid.h() * grid.h());
    let mut j = BandedLu::zeros(grid.len(), n, n);
    for k in 0..grid.len() {
        let (i, row) = (k % n, k / n);
        j.set(k, k, -4.0 * off + (3.0 * u[k] * u[k] - 1.0) / delta);
        if i > 0 {
            j.set(k, k - 1, off);
        }
        if i + 1 < n {
            j.set(k, k + 1, off);
        }
        if row > 0 {
            j.set(k, k - n, off);
        }
        if row + 1 < n {
            j.set(k, k + n, off);
        }
    }
    j
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Fixed step fraction while the residual is large.
    pub damping: f64,
    /// Convergence threshold on the residual sup-norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Below this residual the solver takes full steps.
    pub full_step_below: f64,
    /// Minimum sup-norm distance between distinct solutions.
    pub distinct: f64,
    pub max_restarts: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { damping: 1.0, tol: 1e-10, max_iter: 200, full_step_below: 1e-3, distinct: 0.1, max_restarts: 12 }
    }
}

/// Shifted inverse-square deflation `Π_f (1/‖u - u_f‖² + 1)`, `‖·‖` the
/// discrete L2 norm on the square. Returns `∇ log M · d`.
fn deflation_directional(u: &[f64], found: &[Vec<f64>], d: &[f64], h2: f64) -> f64 {
    found
        .iter()
        .map(|uf| {
            let mut e2 = 0.0;
            let mut ed = 0.0;
            for k in 0..u.len() {
                let e = u[k] - uf[k];
                e2 += e * e;
                ed += e * d[k];
            }
            e2 *= h2;
            ed *= h2;
            let m = 1.0 / e2 + 1.0;
            // ∇m = -2 e / ‖e‖⁴ (with the h² inner product)
            -2.0 * ed / (e2 * e2 * m)
        })
        .sum()
}

/// Deflated, damped Newton from `guess`. Returns the converged lattice
/// values or `None`.
fn deflated_newton(
    guess: Vec<f64>,
    grid: Grid,
    delta: f64,
    found: &[Vec<f64>],
    opts: &NewtonOptions,
) -> Option<Vec<f64>> {
    let mut u = guess;
    let h2 = grid.h() * grid.h();
    for _ in 0..opts.max_iter {
        let f = ac_residual(&u, grid, delta);
        let r = sup_norm(&f);
        if !r.is_finite() {
            return None;
        }
        if r < opts.tol {
            return Some(u);
        }
        let mut j = jacobian(&u, grid, delta);
        j.factor().ok()?;
        let mut d: Vec<f64> = f.iter().map(|v| -v).collect();
        j.solve_in_place(&mut d);
        let mut factor = 1.0;
        if !found.is_empty() {
            let beta = deflation_directional(&u, found, &d, h2);
            let denom = 1.0 - beta;
            if denom.abs() < 1e-12 {
                return None;
            }
            factor = 1.0 / denom;
        }
        let lambda = if r < opts.full_step_below { 1.0 } else { opts.damping };
        for (uk, dk) in u.iter_mut().zip(&d) {
            *uk += lambda * factor * dk;
        }
        if u.iter().any(|v| !v.is_finite() || v.abs() > 10.0) {
            return None;
        }
    }
    None
}

/// Initial guesses: an X-shaped saddle, a horizontal +1 band, a vertical
/// -1 band and zero.
fn initial_guesses(grid: Grid, delta: f64) -> Vec<Vec<f64>> {
    let w = 2f64.sqrt() * delta;
    let nodes = grid.nodes();
    vec![
        nodes.iter().map(|p| (((p.x[0] - 0.5).abs() - (p.x[1] - 0.5).abs()) / w).tanh()).collect(),
        nodes.iter().map(|p| -(((p.x[1] - 0.5).abs() - 0.25) / w).tanh()).collect(),
        nodes.iter().map(|p| (((p.x[0] - 0.5).abs() - 0.25) / w).tanh()).collect(),
        vec![0.0; grid.len()],
    ]
}

/// All distinct solutions reachable by deflated Newton from the standard
/// guesses, followed by randomly perturbed restarts until three are found
/// or the restart budget runs out. Solutions are sorted by centre value
/// (ties by L2 norm) and labelled 1, 2, 3, … in that order.
pub fn ac_deflated_solve(delta: f64, n: usize, rng: &mut RngStream) -> Result<Vec<GridSolution>> {
    ac_deflated_solve_with(delta, n, &NewtonOptions::default(), rng)
}

pub fn ac_deflated_solve_with(
    delta: f64,
    n: usize,
    opts: &NewtonOptions,
    rng: &mut RngStream,
) -> Result<Vec<GridSolution>> {
    AllenCahnSpec::new(delta)?;
    if n < 16 {
        return Err(PmmError::InvalidArgument(format!("grid size must be at least 16, got {n}")));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(PmmError::InvalidArgument(format!("damping must be in (0, 1], got {}", opts.damping)));
    }
    let grid = Grid { n };
    let guesses = initial_guesses(grid, delta);
    let mut found: Vec<Vec<f64>> = Vec::new();
    let try_guess = |g: Vec<f64>, found: &mut Vec<Vec<f64>>| {
        if let Some(u) = deflated_newton(g, grid, delta, found, opts) {
            let in_range = u.iter().all(|v| v.abs() <= 1.5);
            if in_range && found.iter().all(|f| sup_dist(f, &u) > opts.distinct) {
                found.push(u);
            }
        }
    };
    for g in &guesses {
        if found.len() >= 3 {
            break;
        }
        try_guess(g.clone(), &mut found);
    }
    let mut restarts = 0;
    while found.len() < 3 && restarts < opts.max_restarts {
        let base = &guesses[restarts % guesses.len()];
        let g = base.iter().map(|v| v + 0.3 * rng.standard_normal()).collect();
        try_guess(g, &mut found);
        restarts += 1;
    }
    if found.is_empty() {
        return Err(PmmError::SolveFailed(format!("no Allen-Cahn solution converged at delta = {delta}")));
    }
    let mut sols: Vec<GridSolution> = found
        .into_iter()
        .map(|u| {
            let residual_norm = sup_norm(&ac_residual(&u, grid, delta));
            GridSolution { grid, u_hat: u, solution_index: 0, residual_norm }
        })
        .collect();
    sols.sort_by(|a, b| {
        let (ca, cb) = (a.centre_value(), b.centre_value());
        if (ca - cb).abs() > 1e-6 {
            ca.total_cmp(&cb)
        } else {
            a.l2_norm().total_cmp(&b.l2_norm())
        }
    });
    for (i, s) in sols.iter_mut().enumerate() {
        s.solution_index = i + 1;
    }
    Ok(sols)
}

/// Latent field values at interior design points.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    pub z_values: Vec<f64>,
}

/// `z = -u³/δ` pointwise.
pub fn z_from_u(u_values: &[f64], delta: f64) -> Result<LatentField> {
    if !(delta > 0.0) {
        return Err(PmmError::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    Ok(LatentField { z_values: u_values.iter().map(|u| -u * u * u / delta).collect() })
}

/// `u = (-δz)^{1/3}` with the real (signed) cube root.
pub fn u_from_z(z: f64, delta: f64) -> f64 {
    (-delta * z).cbrt()
}

/// Latent field induced by a lattice solution at the given points.
pub fn latent_from_solution(sol: &GridSolution, points: &[Point], delta: f64) -> Result<LatentField> {
    let u: Vec<f64> = points.iter().map(|p| sol.value_at(p)).collect();
    z_from_u(&u, delta)
}

/// Interior tensor design and matching boundary points for the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Design2D {
    pub m_side: usize,
    pub interior: Vec<Point>,
    pub boundary: Vec<Point>,
    pub boundary_values: Vec<f64>,
}

impl Design2D {
    /// `m_side²` interior points at `(i/(m+1), j/(m+1))` and `m_side`
    /// points per edge at the same tangential coordinates.
    pub fn uniform(m_side: usize) -> Result<Self> {
        if m_side == 0 {
            return Err(PmmError::EmptyDesign);
        }
        let t: Vec<f64> = (1..=m_side).map(|i| i as f64 / (m_side + 1) as f64).collect();
        let interior = t.iter().flat_map(|&b| t.iter().map(move |&a| Point::d2(a, b))).collect();
        let mut boundary = Vec::with_capacity(4 * m_side);
        for &s in &t {
            boundary.push(Point::d2(0.0, s));
            boundary.push(Point::d2(1.0, s));
            boundary.push(Point::d2(s, 0.0));
            boundary.push(Point::d2(s, 1.0));
        }
        let boundary_values = boundary.iter().map(boundary_value).collect();
        Ok(Self { m_side, interior, boundary, boundary_values })
    }
}

/// The three observation blocks of the linearised system given `z`:
/// `(-δΔ - δ⁻¹) u = z` and `u = (-δz)^{1/3}` on the interior design, and
/// the Dirichlet data on the boundary design.
pub fn linearized_ac_blocks(delta: f64, z: &LatentField, design: &Design2D) -> Result<Vec<ObservationBlock>> {
    if z.z_values.len() != design.interior.len() {
        return Err(PmmError::DimensionMismatch(format!(
            "latent field has {} values for {} design points",
            z.z_values.len(),
            design.interior.len()
        )));
    }
    let identity_rhs = z.z_values.iter().map(|&v| u_from_z(v, delta)).collect();
    Ok(vec![
        ObservationBlock::new(
            OperatorTag::AffineInterior { a: delta, c: -1.0 / delta },
            design.interior.clone(),
            z.z_values.clone(),
        )?,
        ObservationBlock::new(OperatorTag::Identity, design.interior.clone(), identity_rhs)?,
        ObservationBlock::new(OperatorTag::BoundaryTrace, design.boundary.clone(), design.boundary_values.clone())?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;
    use crate::pmm::{relative_l2, solve_forward};
    use std::sync::OnceLock;

    fn solutions_004() -> &'static Vec<GridSolution> {
        static S: OnceLock<Vec<GridSolution>> = OnceLock::new();
        S.get_or_init(|| ac_deflated_solve(0.04, 31, &mut RngStream::new(0, 0)).unwrap())
    }

    #[test]
    fn spec_rejects_out_of_range_delta() {
        assert!(AllenCahnSpec::new(0.01).is_err());
        assert!(AllenCahnSpec::new(0.15).is_err());
        assert!(AllenCahnSpec::new(0.04).is_ok());
    }

    #[test]
    fn residual_of_constant_roots() {
        let grid = Grid { n: 16 };
        // +1 everywhere including the boundary: evaluate by hand on interior
        // nodes away from the -1 edges
        let ones = vec![1.0; grid.len()];
        let r = ac_residual(&ones, grid, 0.04);
        for b in 1..15 {
            assert!(r[b * 16].abs() < 1e-12, "left column touches only +1 edge");
        }
        let zeros = vec![0.0; grid.len()];
        let r = ac_residual(&zeros, grid, 0.04);
        let inner = 5 * 16 + 5;
        assert_eq!(r[inner], 0.0);
        // next to the left (+1) edge: -δ·(+1)/h²
        let h2 = grid.h() * grid.h();
        assert!((r[5 * 16] + 0.04 / h2).abs() < 1e-9);
        // next to the bottom (-1) edge
        assert!((r[5] - 0.04 / h2).abs() < 1e-9);
    }

    #[test]
    fn interpolation_reproduces_nodes_and_boundary() {
        let grid = Grid { n: 16 };
        let u: Vec<f64> = (0..grid.len()).map(|k| (k as f64).sin()).collect();
        for k in [0, 17, 100, 255] {
            assert!((grid.interpolate(&u, &grid.node(k)) - u[k]).abs() < 1e-14);
        }
        assert_eq!(grid.interpolate(&u, &Point::d2(0.0, 0.5)), 1.0);
        assert_eq!(grid.interpolate(&u, &Point::d2(0.5, 1.0)), -1.0);
    }

    #[test]
    fn three_solutions_at_delta_004() {
        let sols = solutions_004();
        assert_eq!(sols.len(), 3);
        for s in sols {
            assert!(s.residual_norm < 1e-9);
            assert!(s.u_hat.iter().all(|v| v.abs() <= 1.5));
        }
        for i in 0..3 {
            for j in 0..i {
                assert!(sup_dist(&sols[i].u_hat, &sols[j].u_hat) > 0.5);
            }
        }
        let labels: Vec<usize> = sols.iter().map(|s| s.solution_index).collect();
        assert_eq!(labels, vec![1, 2, 3]);
        assert!(sols[0].centre_value() < sols[1].centre_value());
        assert!(sols[1].centre_value() < sols[2].centre_value());
    }

    #[test]
    fn solution_set_is_reflection_invariant() {
        let sols = solutions_004();
        let n = 31;
        for s in sols {
            let refl: Vec<f64> = (0..n * n).map(|k| s.u_hat[(k / n) * n + (n - 1 - k % n)]).collect();
            assert!(sols.iter().any(|t| sup_dist(&t.u_hat, &refl) < 1e-6));
        }
    }

    #[test]
    fn solution_set_independent_of_damping() {
        let base = solutions_004();
        let opts = NewtonOptions { damping: 0.5, ..NewtonOptions::default() };
        let half = ac_deflated_solve_with(0.04, 31, &opts, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(half.len(), base.len());
        for (a, b) in half.iter().zip(base) {
            assert!(sup_dist(&a.u_hat, &b.u_hat) < 1e-6);
        }
    }

    #[test]
    fn solver_input_validation() {
        let mut rng = RngStream::new(0, 0);
        assert!(ac_deflated_solve(0.04, 8, &mut rng).is_err());
        assert!(ac_deflated_solve(0.2, 31, &mut rng).is_err());
        let opts = NewtonOptions { damping: 0.0, ..NewtonOptions::default() };
        assert!(ac_deflated_solve_with(0.04, 31, &opts, &mut rng).is_err());
    }

    #[test]
    fn latent_map_values() {
        assert_eq!(z_from_u(&[0.0], 0.04).unwrap().z_values, vec![-0.0]);
        assert!((z_from_u(&[1.0], 0.04).unwrap().z_values[0] + 25.0).abs() < 1e-12);
        assert!(z_from_u(&[1.0], 0.0).is_err());
        for k in 0..=300 {
            let u = -1.5 + 0.01 * k as f64;
            let z = z_from_u(&[u], 0.04).unwrap().z_values[0];
            assert!((u_from_z(z, 0.04) - u).abs() < 1e-12);
            assert_eq!(u_from_z(-z, 0.04), -u_from_z(z, 0.04));
        }
    }

    #[test]
    fn blocks_recombine_into_allen_cahn() {
        let design = Design2D::uniform(5).unwrap();
        let delta = 0.04;
        let z = LatentField { z_values: (0..25).map(|i| (i as f64 - 12.0) * 2.0).collect() };
        let blocks = linearized_ac_blocks(delta, &z, &design).unwrap();
        assert_eq!(blocks.len(), 3);
        assert_eq!(blocks[0].op, OperatorTag::AffineInterior { a: delta, c: -1.0 / delta });
        // block 1 rhs plus δ⁻¹u³ of block 2's rhs vanishes: z + δ⁻¹u³ = 0
        for (zi, ui) in blocks[0].rhs.iter().zip(&blocks[1].rhs) {
            assert!((zi + ui.powi(3) / delta).abs() < 1e-10);
        }
        for (p, v) in blocks[2].points.iter().zip(&blocks[2].rhs) {
            if p.x[0] == 0.0 || p.x[0] == 1.0 {
                assert_eq!(*v, 1.0);
            } else {
                assert_eq!(*v, -1.0);
            }
        }
        let short = LatentField { z_values: vec![0.0; 3] };
        assert!(linearized_ac_blocks(delta, &short, &design).is_err());
    }

    #[test]
    fn pmm_mean_reproduces_coarse_solution() {
        let delta = 0.04;
        let design = Design2D::uniform(10).unwrap();
        let grid = Grid { n: 31 };
        let nodes = grid.nodes();
        let kernel = Kernel::sqexp(0.08, 2).unwrap();
        for s in solutions_004() {
            let z = latent_from_solution(s, &design.interior, delta).unwrap();
            let post = solve_forward(&linearized_ac_blocks(delta, &z, &design).unwrap(), &kernel).unwrap();
            let mean = post.posterior_mean(&nodes).unwrap();
            let err = relative_l2(mean.as_slice(), &s.u_hat);
            assert!(err < 0.06, "branch {} relative L2 {err}", s.solution_index);
        }
    }
}
