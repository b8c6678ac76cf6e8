use crate::error::{PmmError, Result};

/// LU factorisation with partial pivoting of a banded matrix.
///
/// Storage follows the LAPACK `gbtrf` layout: column `c` keeps rows
/// `c - ku - kl ..= c + kl`, with the extra `kl` super-diagonals reserved for
/// fill-in from row interchanges.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    factored: bool,
}

impl BandedLu {
    /// Zero matrix of order `n` with `kl` sub- and `ku` super-diagonals.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ldab, ab: vec![0.0; ldab * n], ipiv: vec![0; n], factored: false }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, c: usize) -> usize {
        c * self.ldab + (self.kl + self.ku + i - c)
    }

    /// Sets entry `(i, j)`; it must lie inside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(!self.factored, "matrix already factored");
        assert!(i < self.n && j < self.n);
        assert!(i <= j + self.kl && j <= i + self.ku, "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(i <= j + self.kl && j <= i + self.ku, "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    /// In-place factorisation.
    pub fn factor(&mut self) -> Result<()> {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = self.ab[j * self.ldab + kv].abs();
            for r in 1..=km {
                let v = self.ab[j * self.ldab + kv + r].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            self.ipiv[j] = j + jp;
            if !(best > 0.0) || !best.is_finite() {
                return Err(PmmError::SolveFailed(format!("singular banded matrix at column {j}")));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = self.idx(j, c);
                    let b = self.idx(j + jp, c);
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[j * self.ldab + kv];
            for r in 1..=km {
                self.ab[j * self.ldab + kv + r] /= piv;
            }
            for c in (j + 1)..=ju {
                let ujc = self.ab[self.idx(j, c)];
                if ujc == 0.0 {
                    continue;
                }
                for r in 1..=km {
                    let l = self.ab[j * self.ldab + kv + r];
                    let k = self.idx(j + r, c);
                    self.ab[k] -= l * ujc;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` in place. Requires [`BandedLu::factor`].
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored, "call factor() first");
        assert_eq!(b.len(), self.n);
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            for r in 1..=km {
                b[j + r] -= self.ab[j * self.ldab + kv + r] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[j * self.ldab + kv];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= self.ab[self.idx(i, j)] * bj;
            }
        }
    }
}
