//! Banded LU factorization with partial pivoting (LAPACK `gbtrf`/`gbtrs` layout).
//!
//! Elimination order is fixed, so factorizations are bit-reproducible.

use crate::fock::C64;

#[derive(Debug, Clone)]
pub(crate) struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
    ipiv: Vec<usize>,
    min_pivot: f64,
}

/// Square banded matrix being assembled before factorization.
pub(crate) struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
}

impl BandedMatrix {
    pub(crate) fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![C64::new(0.0, 0.0); ldab * n],
        }
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        // kv + row - col, kv = kl + ku
        (self.kl + self.ku + row - col) + col * self.ldab
    }

    pub(crate) fn add(&mut self, row: usize, col: usize, value: C64) {
        debug_assert!(row + self.ku >= col && col + self.kl >= row);
        let s = self.slot(row, col);
        self.ab[s] += value;
    }

    pub(crate) fn factor(self) -> BandedLu {
        let Self {
            n,
            kl,
            ku,
            ldab,
            mut ab,
        } = self;
        let kv = kl + ku;
        let mut ipiv = vec![0usize; n];
        let mut min_pivot = f64::INFINITY;
        let mut ju = 0usize;
        let idx = |row: usize, col: usize| kv + row - col + col * ldab;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = -1.0;
            for jj in 0..=km {
                let v = ab[kv + jj + j * ldab].norm();
                if v > best {
                    best = v;
                    jp = jj;
                }
            }
            ipiv[j] = j + jp;
            min_pivot = min_pivot.min(best);
            if best == 0.0 {
                continue;
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(idx(j, c), idx(j + jp, c));
                }
            }
            if km > 0 {
                let inv = C64::new(1.0, 0.0) / ab[kv + j * ldab];
                for jj in 1..=km {
                    ab[kv + jj + j * ldab] *= inv;
                }
                for c in j + 1..=ju {
                    let u = ab[idx(j, c)];
                    if u.re == 0.0 && u.im == 0.0 {
                        continue;
                    }
                    for jj in 1..=km {
                        let l = ab[kv + jj + j * ldab];
                        ab[idx(j + jj, c)] -= l * u;
                    }
                }
            }
        }
        BandedLu {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv,
            min_pivot,
        }
    }
}

impl BandedLu {
    /// Smallest pivot magnitude met during elimination (zero means singular).
    pub(crate) fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Solves `A x = b` in place.
    pub(crate) fn solve(&self, b: &mut [C64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        let ldab = self.ldab;
        let ab = &self.ab;
        for j in 0..n.saturating_sub(1) {
            let lm = self.kl.min(n - 1 - j);
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            if bj.re == 0.0 && bj.im == 0.0 {
                continue;
            }
            for jj in 1..=lm {
                b[j + jj] -= ab[kv + jj + j * ldab] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= ab[kv + j * ldab];
            let t = b[j];
            let lo = j.saturating_sub(kv);
            for i in lo..j {
                b[i] -= ab[kv + i - j + j * ldab] * t;
            }
        }
    }
}
