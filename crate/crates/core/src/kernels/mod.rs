//! Covariance functions and their images under linear differential operators.
//!
//! Every operator in scope has the form `a·(-Δ) + c·Id`, so an operator pair
//! acting on both arguments of a kernel reduces to four scalar
//! coefficients and at most four kernel derivatives. The left operator acts
//! on the first argument, the right operator on the second.

mod greens;
mod sqexp;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

pub use greens::{dirichlet_green, GreensKernel1D};
pub use sqexp::SqExpKernel;

use crate::error::{PmmError, Result};
use crate::linalg::SymMatrix;

/// A point in the unit interval or unit square. One-dimensional points keep
/// their second coordinate at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: [f64; 2],
}

impl Point {
    pub const fn d1(x: f64) -> Self {
        Self { x: [x, 0.0] }
    }

    pub const fn d2(x1: f64, x2: f64) -> Self {
        Self { x: [x1, x2] }
    }

    pub fn dist2(&self, other: &Point) -> f64 {
        let a = self.x[0] - other.x[0];
        let b = self.x[1] - other.x[1];
        a * a + b * b
    }

    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

/// Linear operator applied to one argument of a covariance function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorTag {
    Identity,
    /// `scale · (-Δ)`
    NegLaplacian {
        scale: f64,
    },
    /// `a · (-Δ) + c · Id`
    AffineInterior {
        a: f64,
        c: f64,
    },
    /// Point evaluation on the boundary.
    BoundaryTrace,
}

impl OperatorTag {
    /// `(a, c)` such that the operator equals `a·(-Δ) + c·Id`.
    pub fn coefficients(&self) -> (f64, f64) {
        match *self {
            OperatorTag::Identity | OperatorTag::BoundaryTrace => (0.0, 1.0),
            OperatorTag::NegLaplacian { scale } => (scale, 0.0),
            OperatorTag::AffineInterior { a, c } => (a, c),
        }
    }

    /// True for operators that only evaluate the function.
    pub fn is_evaluation(&self) -> bool {
        matches!(self, OperatorTag::Identity | OperatorTag::BoundaryTrace)
    }

    /// Differential order `ρ` of the operator.
    pub fn order(&self) -> u32 {
        if self.coefficients().0 != 0.0 {
            2
        } else {
            0
        }
    }
}

impl fmt::Display for OperatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorTag::Identity => write!(f, "Identity"),
            OperatorTag::NegLaplacian { scale } => write!(f, "NegLaplacian({scale})"),
            OperatorTag::AffineInterior { a, c } => write!(f, "AffineInterior(a={a}, c={c})"),
            OperatorTag::BoundaryTrace => write!(f, "BoundaryTrace"),
        }
    }
}

/// Prior smoothness bookkeeping for the contraction condition
/// `β > ρ + d/2`. `beta = None` means unbounded (e.g. squared exponential).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessMeta {
    pub beta: Option<f64>,
    pub rho: u32,
    pub d: usize,
}

impl SmoothnessMeta {
    pub fn contraction_meaningful(&self) -> bool {
        match self.beta {
            None => true,
            Some(b) => b > self.rho as f64 + self.d as f64 / 2.0,
        }
    }
}

/// Prior covariance used by the forward solver.
#[derive(Debug, Clone)]
pub enum Kernel {
    SqExp(SqExpKernel),
    Greens(Arc<GreensKernel1D>),
}

impl Kernel {
    pub fn sqexp(lengthscale: f64, dim: usize) -> Result<Self> {
        Ok(Kernel::SqExp(SqExpKernel::new(lengthscale, dim)?))
    }

    pub fn greens(forcing_lengthscale: f64, quadrature_nodes: usize) -> Result<Self> {
        Ok(Kernel::Greens(Arc::new(GreensKernel1D::new(forcing_lengthscale, quadrature_nodes)?)))
    }

    pub fn dim(&self) -> usize {
        match self {
            Kernel::SqExp(k) => k.dim(),
            Kernel::Greens(_) => 1,
        }
    }

    /// Whether every prior draw already satisfies homogeneous Dirichlet
    /// conditions on (0, 1).
    pub fn satisfies_dirichlet(&self) -> bool {
        matches!(self, Kernel::Greens(_))
    }

    pub fn smoothness(&self, rho: u32) -> SmoothnessMeta {
        match self {
            Kernel::SqExp(k) => SmoothnessMeta { beta: None, rho, d: k.dim() },
            // u = G f gains two derivatives over the smooth forcing draw
            Kernel::Greens(_) => SmoothnessMeta { beta: None, rho, d: 1 },
        }
    }

    fn check_dim(&self, pts: &[Point]) -> Result<()> {
        if self.dim() == 1 {
            if let Some(p) = pts.iter().find(|p| p.x[1] != 0.0) {
                return Err(PmmError::DimensionMismatch(format!("1D kernel given 2D point {:?}", p.x)));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        self.op_eval(OperatorTag::Identity, OperatorTag::Identity, x, y)
    }

    /// `(left_x right_y k)(x, y)`.
    pub fn op_eval(&self, left: OperatorTag, right: OperatorTag, x: &Point, y: &Point) -> Result<f64> {
        self.check_dim(&[*x, *y])?;
        match self {
            Kernel::SqExp(k) => Ok(k.op_eval(left, right, x, y)),
            Kernel::Greens(k) => k.op_eval(left, right, x, y),
        }
    }

    /// Matrix `[left_x right_y k(xs[i], ys[j])]`.
    pub fn op_cross(&self, left: OperatorTag, xs: &[Point], right: OperatorTag, ys: &[Point]) -> Result<DMatrix<f64>> {
        self.check_dim(xs)?;
        self.check_dim(ys)?;
        match self {
            Kernel::SqExp(k) => Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| k.op_eval(left, right, &xs[i], &ys[j]))),
            Kernel::Greens(k) => k.op_cross(left, xs, right, ys),
        }
    }

    /// Plain Gram matrix `K(xs, xs)`.
    pub fn gram(&self, xs: &[Point]) -> Result<SymMatrix> {
        self.check_dim(xs)?;
        match self {
            Kernel::SqExp(k) => Ok(SymMatrix::from_fn(xs.len(), |i, j| k.eval(&xs[i], &xs[j]))),
            Kernel::Greens(k) => {
                SymMatrix::symmetrize(k.op_cross(OperatorTag::Identity, xs, OperatorTag::Identity, xs)?)
            }
        }
    }
}

/// Relative disagreement between the closed-form operator kernel and a
/// central finite-difference reconstruction.
///
/// One operator is differentiated numerically (second-order five-point
/// Laplacian stencil, step `h_fd`) and applied to a closed form of lower
/// differential order: the plain kernel when the other side is an
/// evaluation, otherwise the `(Identity, other)` closed form, which is
/// itself covered by the first case. The error is taken relative to
/// `max(|exact|, 1e-3·bound)`, where `bound` is the Cauchy–Schwarz bound
/// `sqrt(Var[left u(x)] · Var[right u(y)])`, so zero crossings of the
/// exact value do not inflate it.
pub fn fd_check(left: OperatorTag, right: OperatorTag, k: &SqExpKernel, x: &Point, y: &Point, h_fd: f64) -> f64 {
    let exact = k.op_eval(left, right, x, y);
    let (al, cl) = left.coefficients();
    let (ar, cr) = right.coefficients();
    let d = k.dim();
    let approx = if al != 0.0 {
        // differentiate in x
        let base = |p: &Point| k.op_eval(OperatorTag::Identity, right, p, y);
        al * neg_laplacian_fd(&base, x, d, h_fd) + cl * base(x)
    } else if ar != 0.0 {
        let base = |p: &Point| k.op_eval(left, OperatorTag::Identity, x, p);
        ar * neg_laplacian_fd(&base, y, d, h_fd) + cr * base(y)
    } else {
        cl * cr * k.eval(x, y)
    };
    let bound = (k.op_eval(left, left, x, x) * k.op_eval(right, right, y, y)).abs().sqrt();
    let denom = exact.abs().max(1e-3 * bound);
    if denom == 0.0 {
        (approx - exact).abs()
    } else {
        (approx - exact).abs() / denom
    }
}

fn neg_laplacian_fd(f: &dyn Fn(&Point) -> f64, p: &Point, d: usize, h: f64) -> f64 {
    let centre = f(p);
    let mut acc = 0.0;
    for axis in 0..d {
        let mut plus = *p;
        let mut minus = *p;
        plus.x[axis] += h;
        minus.x[axis] -= h;
        acc += f(&plus) - 2.0 * centre + f(&minus);
    }
    -acc / (h * h)
}

/// `max_{p ∈ probe} min_{x ∈ design} |p - x|`: a lower approximation to the
/// fill distance of `design` over the region sampled by `probe`.
pub fn fill_distance(design: &[Point], probe: &[Point]) -> Result<f64> {
    if design.is_empty() {
        return Err(PmmError::EmptyDesign);
    }
    Ok(probe.iter().map(|p| design.iter().map(|x| p.dist2(x)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max).sqrt())
}

/// `n` equispaced points on [0, 1], endpoints included.
pub fn probe_grid_1d(n: usize) -> Vec<Point> {
    (0..n).map(|i| Point::d1(i as f64 / (n - 1) as f64)).collect()
}

/// `n × n` tensor grid on [0, 1]², boundary included.
pub fn probe_grid_2d(n: usize) -> Vec<Point> {
    let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    t.iter().flat_map(|&a| t.iter().map(move |&b| Point::d2(a, b))).collect()
}

pub const PROBE_1D: usize = 10_000;
pub const PROBE_2D: usize = 200;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{chol_default, RngStream};
    use proptest::prelude::*;

    const NL: OperatorTag = OperatorTag::NegLaplacian { scale: 1.0 };

    fn tags() -> [OperatorTag; 5] {
        [
            OperatorTag::Identity,
            OperatorTag::BoundaryTrace,
            NL,
            OperatorTag::NegLaplacian { scale: 2.5 },
            OperatorTag::AffineInterior { a: 0.04, c: -25.0 },
        ]
    }

    fn random_point(rng: &mut RngStream, d: usize) -> Point {
        if d == 1 {
            Point::d1(rng.uniform())
        } else {
            Point::d2(rng.uniform(), rng.uniform())
        }
    }

    #[test]
    fn kernel_symmetry_random_pairs() {
        let k = Kernel::sqexp(0.3, 2).unwrap();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..100 {
            let (x, y) = (random_point(&mut rng, 2), random_point(&mut rng, 2));
            assert_eq!(k.eval(&x, &y).unwrap(), k.eval(&y, &x).unwrap());
        }
    }

    #[test]
    fn fd_check_anchor_cases() {
        let mut rng = RngStream::new(8, 0);
        let k1 = SqExpKernel::new(0.5, 1).unwrap();
        for _ in 0..20 {
            let (x, y) = (random_point(&mut rng, 1), random_point(&mut rng, 1));
            assert!(fd_check(NL, OperatorTag::Identity, &k1, &x, &y, 1e-4) < 1e-5);
            assert_eq!(fd_check(OperatorTag::Identity, OperatorTag::Identity, &k1, &x, &y, 1e-4), 0.0);
        }
        let k2 = SqExpKernel::new(0.5, 2).unwrap();
        for _ in 0..20 {
            let (x, y) = (random_point(&mut rng, 2), random_point(&mut rng, 2));
            assert!(fd_check(NL, NL, &k2, &x, &y, 1e-4) < 1e-4);
        }
    }

    #[test]
    fn adjoint_block_symmetry() {
        let mut rng = RngStream::new(12, 0);
        for d in [1, 2] {
            let k = Kernel::sqexp(0.4, d).unwrap();
            for l in tags() {
                for r in tags() {
                    let (x, y) = (random_point(&mut rng, d), random_point(&mut rng, d));
                    let a = k.op_eval(l, r, &x, &y).unwrap();
                    let b = k.op_eval(r, l, &y, &x).unwrap();
                    assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn gram_psd_for_random_tag_assignment() {
        let mut rng = RngStream::new(21, 0);
        for d in [1, 2] {
            let k = Kernel::sqexp(0.3, d).unwrap();
            for _ in 0..5 {
                let pts: Vec<Point> = (0..20).map(|_| random_point(&mut rng, d)).collect();
                let ops: Vec<OperatorTag> = (0..20).map(|_| tags()[rng.index(5)]).collect();
                let g = SymMatrix::from_fn(20, |i, j| k.op_eval(ops[i], ops[j], &pts[i], &pts[j]).unwrap());
                let f = chol_default(&g).unwrap();
                assert!(f.jitter_used() <= 1e-6 * g.mean_diagonal());
            }
        }
    }

    #[test]
    fn one_d_kernel_rejects_2d_points() {
        let k = Kernel::sqexp(0.3, 1).unwrap();
        assert!(matches!(k.eval(&Point::d2(0.1, 0.2), &Point::d1(0.1)), Err(PmmError::DimensionMismatch(_))));
    }

    #[test]
    fn fill_distance_cases() {
        let probe = probe_grid_1d(10_001);
        let h = fill_distance(&[Point::d1(0.5)], &probe).unwrap();
        assert!((h - 0.5).abs() <= 1e-4);
        assert_eq!(fill_distance(&probe, &probe).unwrap(), 0.0);
        assert_eq!(fill_distance(&[], &probe), Err(PmmError::EmptyDesign));
        for m in [3usize, 6, 11] {
            let s = 1.0 / (m - 1) as f64;
            let design: Vec<Point> = (0..m).map(|i| Point::d1(i as f64 * s)).collect();
            let h = fill_distance(&design, &probe).unwrap();
            assert!((h - s / 2.0).abs() <= 1e-4, "m={m}: {h}");
        }
    }

    #[test]
    fn smoothness_condition() {
        assert!(Kernel::sqexp(0.2, 2).unwrap().smoothness(2).contraction_meaningful());
        assert!(!SmoothnessMeta { beta: Some(2.0), rho: 2, d: 1 }.contraction_meaningful());
        assert!(SmoothnessMeta { beta: Some(3.0), rho: 2, d: 1 }.contraction_meaningful());
    }

    proptest! {
        #[test]
        fn closed_forms_match_finite_differences(
            seed in any::<u64>(),
            ell in 0.1f64..2.0,
            d in 1usize..=2,
            li in 0usize..5,
            ri in 0usize..5,
        ) {
            let mut rng = RngStream::new(seed, 0);
            let k = SqExpKernel::new(ell, d).unwrap();
            let (x, y) = (random_point(&mut rng, d), random_point(&mut rng, d));
            let err = fd_check(tags()[li], tags()[ri], &k, &x, &y, 1e-4);
            prop_assert!(err < 1e-4, "err {err}");
        }
    }
}
