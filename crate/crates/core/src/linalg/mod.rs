//! Dense symmetric positive-definite linear algebra.
//!
//! Kernel Gram matrices built from smooth covariances are numerically
//! singular long before they are mathematically singular, so every
//! factorisation goes through [`chol_jitter`], which retries with a
//! geometrically growing diagonal shift and reports the shift it used.

mod banded;
mod rng;

pub use banded::BandedLu;
pub use rng::RngStream;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{PmmError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Square symmetric matrix. Symmetry is enforced at construction by
/// evaluating the upper triangle once and mirroring it.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds an `n × n` matrix from `f(i, j)` evaluated for `i <= j` only.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    /// Replaces `m` by `(m + mᵀ) / 2`.
    pub fn symmetrize(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(PmmError::DimensionMismatch(format!(
                "expected square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let t = m.transpose();
        Ok(Self((m + t) * 0.5))
    }

    /// Wraps `m` after checking exact symmetry.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m != m.transpose() {
            return Err(PmmError::InvalidArgument("matrix is not exactly symmetric".into()));
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.0.diagonal()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn mean_diagonal(&self) -> f64 {
        if self.n() == 0 {
            0.0
        } else {
            self.trace() / self.n() as f64
        }
    }

    /// `self + other`; both operands symmetric so the sum is too.
    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.n() != other.n() {
            return Err(PmmError::DimensionMismatch(format!("{} vs {}", self.n(), other.n())));
        }
        Ok(Self(&self.0 + &other.0))
    }

    pub fn scaled(&self, s: f64) -> SymMatrix {
        Self(&self.0 * s)
    }

    /// Principal submatrix on the given index set.
    pub fn select(&self, idx: &[usize]) -> SymMatrix {
        Self::from_fn(idx.len(), |a, b| self.0[(idx[a], idx[b])])
    }
}

/// Jitter bounds for [`chol_jitter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterSchedule {
    pub min: f64,
    pub max: f64,
}

impl JitterSchedule {
    pub const REL_MIN: f64 = 1e-10;
    pub const REL_MAX: f64 = 1e-2;

    /// `[1e-10, 1e-2]` times the mean diagonal of `m` (or times one if the
    /// mean diagonal is not positive).
    pub fn relative_to(m: &SymMatrix) -> Self {
        let scale = m.mean_diagonal();
        let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
        Self { min: Self::REL_MIN * scale, max: Self::REL_MAX * scale }
    }

    /// The retry sequence: `0, min, 10·min, …` while `<= max`.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(0.0).chain(
            std::iter::successors(Some(self.min), |j| Some(j * 10.0))
                .take_while(move |j| *j <= self.max * (1.0 + 1e-12)),
        )
    }
}

/// Cholesky factor of `m + jitter_used · I`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    chol: Cholesky<f64, Dyn>,
    jitter_used: f64,
}

impl CholFactor {
    pub fn n(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `log det(m + jI)`.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `L⁻¹ b` (forward substitution only).
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    /// `L · v`.
    pub fn mul_lower(&self, v: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let n = l.nrows();
        DVector::from_fn(n, |i, _| (0..=i).map(|k| l[(i, k)] * v[k]).sum())
    }
}

/// Cholesky factorisation with adaptive diagonal jitter.
///
/// Tries `j = 0` first, then `jitter_min, 10·jitter_min, …` up to
/// `jitter_max`, and returns the first factor that succeeds. The unshifted
/// factor is only accepted if every squared pivot is at least
/// `jitter_min`; smaller pivots carry no usable information and make the
/// subsequent solves meaningless.
pub fn chol_jitter(m: &SymMatrix, jitter_min: f64, jitter_max: f64) -> Result<CholFactor> {
    chol_jitter_floor(m, 0.0, jitter_min, jitter_max)
}

/// [`chol_jitter`] that never uses less than `floor` jitter. Lets a family
/// of related matrices share one nugget, which keeps nested conditioning
/// monotone.
pub fn chol_jitter_floor(m: &SymMatrix, floor: f64, jitter_min: f64, jitter_max: f64) -> Result<CholFactor> {
    if !(jitter_min > 0.0) || jitter_max < jitter_min {
        return Err(PmmError::InvalidArgument(format!(
            "jitter bounds must satisfy 0 < min <= max, got [{jitter_min:e}, {jitter_max:e}]"
        )));
    }
    if !(floor >= 0.0) || floor > jitter_max {
        return Err(PmmError::InvalidArgument(format!("jitter floor {floor:e} outside [0, {jitter_max:e}]")));
    }
    if m.n() == 0 {
        return Err(PmmError::DimensionMismatch("empty matrix".into()));
    }
    if m.as_matrix().iter().any(|v| !v.is_finite()) {
        return Err(PmmError::NonFinite("chol_jitter input"));
    }
    let schedule = JitterSchedule { min: jitter_min, max: jitter_max };
    let candidates = std::iter::once(floor).chain(schedule.values().filter(|&j| j > floor));
    for j in candidates {
        let mut shifted = m.as_matrix().clone();
        if j > 0.0 {
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += j;
            }
        }
        if let Some(chol) = Cholesky::new(shifted) {
            let l = chol.l_dirty();
            let pivot_floor = if j == 0.0 { jitter_min } else { 0.0 };
            if (0..l.nrows()).all(|i| l[(i, i)].is_finite() && l[(i, i)] > 0.0 && l[(i, i)] * l[(i, i)] >= pivot_floor)
            {
                return Ok(CholFactor { chol, jitter_used: j });
            }
        }
    }
    Err(PmmError::NotPositiveDefinite { n: m.n(), jitter_max })
}

/// [`chol_jitter`] with the default scale-relative schedule.
pub fn chol_default(m: &SymMatrix) -> Result<CholFactor> {
    let s = JitterSchedule::relative_to(m);
    chol_jitter(m, s.min, s.max)
}

/// Solves `(m + jI) x = b` for every column of `b`.
pub fn psd_solve(f: &CholFactor, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != f.n() {
        return Err(PmmError::DimensionMismatch(format!("rhs has {} rows, factor is {}", b.nrows(), f.n())));
    }
    Ok(f.solve_matrix(b))
}

/// `log N(y; mu, cov)` using the jittered factor of `cov`.
pub fn mvn_logpdf(y: &DVector<f64>, mu: &DVector<f64>, cov: &SymMatrix) -> Result<f64> {
    let f = chol_default(cov)?;
    mvn_logpdf_factored(y, mu, &f)
}

/// `log N(y; mu, LLᵀ)` for an existing factor.
pub fn mvn_logpdf_factored(y: &DVector<f64>, mu: &DVector<f64>, f: &CholFactor) -> Result<f64> {
    let n = f.n();
    if y.len() != n || mu.len() != n {
        return Err(PmmError::DimensionMismatch(format!(
            "y has {}, mu has {}, covariance is {n}x{n}",
            y.len(),
            mu.len()
        )));
    }
    let white = f.solve_lower_vec(&(y - mu));
    Ok(-0.5 * (n as f64 * LN_2PI + f.log_det() + white.norm_squared()))
}

/// `n` draws of `mu + L ξ`, `ξ ~ N(0, I)`.
pub fn mvn_sample(mu: &DVector<f64>, cov: &SymMatrix, n: usize, rng: &mut RngStream) -> Result<Vec<DVector<f64>>> {
    if mu.len() != cov.n() {
        return Err(PmmError::DimensionMismatch(format!("mu has {}, cov is {}", mu.len(), cov.n())));
    }
    let f = chol_default(cov)?;
    Ok((0..n).map(|_| mvn_sample_factored(mu, &f, rng)).collect())
}

pub fn mvn_sample_factored(mu: &DVector<f64>, f: &CholFactor, rng: &mut RngStream) -> DVector<f64> {
    let xi = DVector::from_fn(mu.len(), |_, _| rng.standard_normal());
    mu + f.mul_lower(&xi)
}
