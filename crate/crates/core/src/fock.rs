//! Truncated Fock-space operator algebra.
//!
//! All matrices are dense and indexed by photon number `0..=cutoff`. Product
//! spaces order basis states as `n_a * dim_b + n_b`, matching [`Operator::kron`].

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const POSITIVITY_TOL: f64 = 1e-10;

/// Single-mode Fock space `|0>, ..., |cutoff>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockSpace {
    cutoff: usize,
}

impl FockSpace {
    pub fn new(cutoff: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(Error::InvalidParameter("cutoff must be at least 1".into()));
        }
        Ok(Self { cutoff })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Hilbert-space dimension `cutoff + 1`.
    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }

    fn check_level(&self, n: usize) -> Result<()> {
        if n > self.cutoff {
            return Err(Error::LevelOutOfRange { n, cutoff: self.cutoff });
        }
        Ok(())
    }
}

/// Dense square operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
}

impl Operator {
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        Ok(Self { matrix })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }

    /// Largest element of `|M - M^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        let diff = &self.matrix - self.matrix.adjoint();
        diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn mul(&self, other: &Operator) -> Operator {
        Self {
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn add(&self, other: &Operator) -> Operator {
        Self {
            matrix: &self.matrix + &other.matrix,
        }
    }

    pub fn sub(&self, other: &Operator) -> Operator {
        Self {
            matrix: &self.matrix - &other.matrix,
        }
    }

    pub fn scale(&self, factor: C64) -> Operator {
        Self {
            matrix: self.matrix.map(|z| z * factor),
        }
    }

    /// Tensor product `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Operator {
        Self {
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }

    /// Commutator `[self, other]`.
    pub fn commutator(&self, other: &Operator) -> Operator {
        self.mul(other).sub(&other.mul(self))
    }
}

/// Lowering operator: `<n-1|a|n> = sqrt(n)`.
pub fn annihilation(space: FockSpace) -> Operator {
    let d = space.dim();
    let mut m = CMatrix::zeros(d, d);
    for n in 1..d {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Operator { matrix: m }
}

pub fn creation(space: FockSpace) -> Operator {
    annihilation(space).adjoint()
}

/// `a^dagger a`, exactly `diag(0, 1, ..., cutoff)`.
pub fn number(space: FockSpace) -> Operator {
    let d = space.dim();
    let mut m = CMatrix::zeros(d, d);
    for n in 0..d {
        m[(n, n)] = C64::new(n as f64, 0.0);
    }
    Operator { matrix: m }
}

/// Diagonal operator `sum_n f(n) |n><n|`.
pub fn number_function<F: Fn(usize) -> f64>(space: FockSpace, f: F) -> Result<Operator> {
    let d = space.dim();
    let mut m = CMatrix::zeros(d, d);
    for n in 0..d {
        let v = f(n);
        if !v.is_finite() {
            return Err(Error::NonFinite { n });
        }
        m[(n, n)] = C64::new(v, 0.0);
    }
    Ok(Operator { matrix: m })
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates hermiticity, unit trace and positivity.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidState("matrix is not square".into()));
        }
        let scale = matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let herm = (&matrix - matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > HERMITIAN_TOL * scale {
            return Err(Error::InvalidState(format!("hermiticity error {herm:e}")));
        }
        let trace = matrix.trace();
        if (trace - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {trace}")));
        }
        let state = Self { matrix };
        let min_eig = state.min_eigenvalue();
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(state)
    }

    /// Hermitizes `(M + M^dagger)/2` and divides by the trace before validating.
    pub fn from_unnormalized(matrix: CMatrix) -> Result<Self> {
        let herm = (&matrix + matrix.adjoint()).map(|z| z * 0.5);
        let trace = herm.trace().re;
        if !(trace.is_finite() && trace > 0.0) {
            return Err(Error::InvalidState(format!("trace {trace}")));
        }
        Self::new(herm.map(|z| z / trace))
    }

    /// Pure state `|psi><psi|` from an amplitude vector (normalized here).
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let d = amplitudes.len();
        let m = CMatrix::from_fn(d, d, |i, j| amplitudes[i] * amplitudes[j].conj() / (norm * norm));
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Diagonal `<n|rho|n>`.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.matrix[(n, n)].re).collect()
    }

    /// `tr(O rho)`.
    pub fn expect(&self, op: &Operator) -> C64 {
        (op.matrix() * &self.matrix).trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.matrix + self.matrix.adjoint()).map(|z| z * 0.5);
        herm.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest off-diagonal magnitude.
    pub fn max_offdiagonal(&self) -> f64 {
        let d = self.dim();
        let mut max = 0.0_f64;
        for j in 0..d {
            for i in 0..d {
                if i != j {
                    max = max.max(self.matrix[(i, j)].norm());
                }
            }
        }
        max
    }

    /// Reduced state of one factor of a bipartite space with factor
    /// dimensions `dims = [dim_a, dim_b]`. `keep` is 0 for mode a, 1 for mode b.
    pub fn partial_trace(&self, dims: [usize; 2], keep: usize) -> Result<DensityMatrix> {
        let [da, db] = dims;
        if da * db != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: da * db,
            });
        }
        if keep > 1 {
            return Err(Error::InvalidParameter("keep must be 0 or 1".into()));
        }
        let m = &self.matrix;
        let reduced = if keep == 0 {
            CMatrix::from_fn(da, da, |i, j| (0..db).map(|k| m[(i * db + k, j * db + k)]).sum())
        } else {
            CMatrix::from_fn(db, db, |i, j| (0..da).map(|k| m[(k * db + i, k * db + j)]).sum())
        };
        DensityMatrix::from_unnormalized(reduced)
    }
}

/// `|n><n|`.
pub fn fock_state(space: FockSpace, n: usize) -> Result<DensityMatrix> {
    space.check_level(n)?;
    let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
    amps[n] = C64::new(1.0, 0.0);
    DensityMatrix::pure(&amps)
}

/// Coherent-state amplitudes `e^{-|alpha|^2/2} alpha^n / sqrt(n!)` truncated
/// at the cutoff and renormalized.
pub fn coherent_amplitudes(space: FockSpace, alpha: C64) -> Result<Vec<C64>> {
    let limit = space.cutoff() as f64 / 4.0;
    if alpha.norm_sqr() > limit {
        return Err(Error::AmplitudeTooLarge {
            norm_sqr: alpha.norm_sqr(),
            limit,
        });
    }
    let mut amps = Vec::with_capacity(space.dim());
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..space.dim() {
        amps.push(c);
        c = c * alpha / ((n + 1) as f64).sqrt();
    }
    let norm = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    Ok(amps.into_iter().map(|c| c / norm).collect())
}

pub fn coherent_state(space: FockSpace, alpha: C64) -> Result<DensityMatrix> {
    DensityMatrix::pure(&coherent_amplitudes(space, alpha)?)
}
