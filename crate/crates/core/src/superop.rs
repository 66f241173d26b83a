//! Sparse superoperators on column-stacked density matrices.
//!
//! `vec(rho)[i + j*D] = rho[i, j]`, so `vec(A rho B) = (B^T ⊗ A) vec(rho)`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fock::{CMatrix, Operator, C64};

/// Compressed-row sparse `D^2 x D^2` matrix acting on `vec(rho)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    /// Hilbert dimension of each tensor factor; their product is `D`.
    modes: Vec<usize>,
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl Superoperator {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(modes: Vec<usize>, triplets: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let dim: usize = modes.iter().product();
        let n = dim * dim;
        let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            *acc.entry((r, c)).or_insert(C64::new(0.0, 0.0)) += v;
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(acc.len());
        let mut values = Vec::with_capacity(acc.len());
        for ((r, c), v) in acc {
            if v.re == 0.0 && v.im == 0.0 {
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            modes,
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(modes: Vec<usize>) -> Self {
        Self::from_triplets(modes, std::iter::empty())
    }

    /// `rho -> rho`.
    pub fn identity(modes: Vec<usize>) -> Self {
        let dim: usize = modes.iter().product();
        Self::from_triplets(modes, (0..dim * dim).map(|k| (k, k, C64::new(1.0, 0.0))))
    }

    /// `rho -> A rho B`.
    pub fn sandwich(modes: Vec<usize>, left: &Operator, right: &Operator) -> Result<Self> {
        let dim: usize = modes.iter().product();
        for op in [left, right] {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: op.dim(),
                });
            }
        }
        let nz = |m: &CMatrix| {
            let mut out = Vec::new();
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    let v = m[(i, j)];
                    if v.re != 0.0 || v.im != 0.0 {
                        out.push((i, j, v));
                    }
                }
            }
            out
        };
        let a = nz(left.matrix());
        let b = nz(right.matrix());
        let mut triplets = Vec::with_capacity(a.len() * b.len());
        // entry (i + j D, k + l D) = A[i,k] * B[l,j]
        for &(l, j, bv) in &b {
            for &(i, k, av) in &a {
                triplets.push((i + j * dim, k + l * dim, av * bv));
            }
        }
        Ok(Self::from_triplets(modes, triplets))
    }

    /// `rho -> A rho`.
    pub fn left(modes: Vec<usize>, op: &Operator) -> Result<Self> {
        let id = Operator::identity(op.dim());
        Self::sandwich(modes, op, &id)
    }

    /// `rho -> rho B`.
    pub fn right(modes: Vec<usize>, op: &Operator) -> Result<Self> {
        let id = Operator::identity(op.dim());
        Self::sandwich(modes, &id, op)
    }

    /// Coherent part `-i [H, rho]`.
    pub fn hamiltonian(modes: Vec<usize>, h: &Operator) -> Result<Self> {
        let l = Self::left(modes.clone(), h)?.scale(C64::new(0.0, -1.0));
        let r = Self::right(modes, h)?.scale(C64::new(0.0, 1.0));
        l.add(&r)
    }

    /// Lindblad dissipator `c rho c^dagger - {c^dagger c, rho}/2`.
    pub fn lindblad(modes: Vec<usize>, jump: &Operator) -> Result<Self> {
        let jd = jump.adjoint();
        let cc = jd.mul(jump);
        let half = C64::new(-0.5, 0.0);
        let sandwich = Self::sandwich(modes.clone(), jump, &jd)?;
        let l = Self::left(modes.clone(), &cc)?.scale(half);
        let r = Self::right(modes, &cc)?.scale(half);
        sandwich.add(&l)?.add(&r)
    }

    /// Tensor-factor dimensions.
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    /// Hilbert dimension `D`.
    pub fn hilbert_dim(&self) -> usize {
        self.dim
    }

    /// Superoperator dimension `D^2`.
    pub fn size(&self) -> usize {
        self.dim * self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.size()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.modes != other.modes {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(Self::from_triplets(
            self.modes.clone(),
            self.entries().chain(other.entries()),
        ))
    }

    /// `out = L x` on a vectorized matrix.
    pub fn apply_vec(&self, x: &[C64], out: &mut [C64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o = acc;
        }
    }

    /// `L[rho]` for a `D x D` matrix.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let x = vectorize(rho);
        let mut out = vec![C64::new(0.0, 0.0); x.len()];
        self.apply_vec(&x, &mut out);
        unvectorize(&out, self.dim)
    }

    pub fn to_dense(&self) -> CMatrix {
        let n = self.size();
        let mut m = CMatrix::zeros(n, n);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    /// `max_j |tr L[E_j]|` over basis matrices; zero for trace-preserving maps.
    pub fn trace_preservation_error(&self) -> f64 {
        let mut col_sums = vec![C64::new(0.0, 0.0); self.size()];
        for i in 0..self.dim {
            let r = i + i * self.dim;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                col_sums[self.col_idx[k]] += self.values[k];
            }
        }
        col_sums.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest element magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Lower and upper bandwidths of the sparsity pattern.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lower = 0;
        let mut upper = 0;
        for (r, c, _) in self.entries() {
            if r > c {
                lower = lower.max(r - c);
            } else {
                upper = upper.max(c - r);
            }
        }
        (lower, upper)
    }
}

/// Column-stacking `vec`.
pub fn vectorize(m: &CMatrix) -> Vec<C64> {
    // nalgebra storage is column-major already
    m.as_slice().to_vec()
}

pub fn unvectorize(v: &[C64], dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v)
}
