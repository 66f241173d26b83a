//! Steady states, the micromaser detailed-balance solution, and time
//! propagation (single-time evolution and regression-theorem traces).

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::fock::{CMatrix, DensityMatrix, Operator, C64};
use crate::models::MicromaserParams;
use crate::ode::{Integrator, Tolerances};
use crate::superop::{unvectorize, vectorize, Superoperator};

/// Result of a nullspace solve.
#[derive(Debug, Clone)]
pub struct SteadyStateResult {
    pub state: DensityMatrix,
    /// `max |L[rho]|`.
    pub residual: f64,
    /// Truncation of each tensor factor.
    pub cutoffs: Vec<usize>,
    /// Population of basis states whose level in any factor is one of the
    /// top two.
    pub tail_population: f64,
}

impl SteadyStateResult {
    /// Cutoff of the first (or only) mode.
    pub fn cutoff_used(&self) -> usize {
        self.cutoffs[0]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SteadyStateOptions {
    pub residual_tol: f64,
    /// Minimum accepted magnitude of the smallest eigenvalue of the pinned
    /// system, in units of `gamma`.
    pub degeneracy_tol: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-9,
            degeneracy_tol: 1e-8,
        }
    }
}

/// Steady state with default options.
pub fn steady_state(l: &Superoperator) -> Result<SteadyStateResult> {
    steady_state_with(l, &SteadyStateOptions::default())
}

/// Solves `L vec(rho) = 0` for the unique steady state.
///
/// One diagonal element is fixed to one and its own equation dropped: trace
/// preservation makes that equation minus the sum of the other population
/// equations. The remaining square system keeps the band structure of `L`
/// and is solved by banded LU; the result is Hermitized and divided by its
/// trace. The first solve pins `rho_00`; when another level carries more
/// weight the solve is repeated pinned there, and a few evenly spaced levels
/// are tried if neither gives a well-conditioned system.
///
/// A non-unique nullspace makes the pinned system (nearly) singular; its
/// smallest eigenvalue is estimated by inverse iteration and compared with
/// `degeneracy_tol`.
pub fn steady_state_with(l: &Superoperator, opts: &SteadyStateOptions) -> Result<SteadyStateResult> {
    let n = l.size();
    let dim = l.hilbert_dim();
    if n < 2 {
        return Err(Error::InvalidParameter("superoperator too small".into()));
    }
    let most_populated = |x: &[C64]| {
        (0..dim)
            .max_by(|&i, &j| x[i + i * dim].re.total_cmp(&x[j + j * dim].re))
            .unwrap_or(0)
    };
    // A degenerate nullspace makes every pinned system singular, so the best
    // estimate over several pins is still a uniqueness test. Pinning a level
    // the steady state barely occupies (rho_00 for large <n>) is badly scaled,
    // hence the search for a well-populated level.
    let mut best: Option<(Vec<C64>, f64, usize)> = None;
    let consider = |level: usize, best: &mut Option<(Vec<C64>, f64, usize)>| {
        if best.as_ref().is_some_and(|b| b.2 == level) {
            return;
        }
        if let Some((x, est)) = pinned_solve(l, level) {
            if best.as_ref().is_none_or(|b| est > b.1) {
                *best = Some((x, est, level));
            }
        }
    };
    consider(0, &mut best);
    if let Some(top) = best.as_ref().map(|b| most_populated(&b.0)) {
        consider(top, &mut best);
    }
    if best.as_ref().is_none_or(|b| b.1 < opts.degeneracy_tol) {
        for level in [dim / 4, dim / 2, 3 * dim / 4] {
            consider(level, &mut best);
        }
        if let Some(top) = best.as_ref().map(|b| most_populated(&b.0)) {
            consider(top, &mut best);
        }
    }
    let x = match best {
        Some((x, est, _)) if est >= opts.degeneracy_tol => x,
        other => {
            return Err(Error::DegenerateNullspace {
                estimate: other.map_or(0.0, |b| b.1),
                tolerance: opts.degeneracy_tol,
            })
        }
    };
    let state = DensityMatrix::from_unnormalized(unvectorize(&x, dim))?;
    let residual = l.apply(state.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if residual > opts.residual_tol {
        return Err(Error::ResidualTooLarge {
            residual,
            tolerance: opts.residual_tol,
        });
    }
    let tail_population = tail_population(&state, l.modes());
    Ok(SteadyStateResult {
        state,
        residual,
        cutoffs: l.modes().iter().map(|d| d - 1).collect(),
        tail_population,
    })
}

/// Solves `L x = 0` with the diagonal element of basis state `level` fixed to
/// one, dropping that element's own equation. Returns the full vector and the
/// smallest-eigenvalue estimate of the reduced system, or `None` when the
/// reduced system is exactly singular.
fn pinned_solve(l: &Superoperator, level: usize) -> Option<(Vec<C64>, f64)> {
    let n = l.size();
    let pin = level + level * l.hilbert_dim();
    let m = n - 1;
    let shrink = |i: usize| if i > pin { i - 1 } else { i };
    let (mut kl, mut ku) = (0usize, 0usize);
    for (r, c, _) in l.entries() {
        if r == pin || c == pin {
            continue;
        }
        let (r, c) = (shrink(r), shrink(c));
        if r > c {
            kl = kl.max(r - c);
        } else {
            ku = ku.max(c - r);
        }
    }
    let mut band = BandedMatrix::zeros(m, kl, ku);
    let mut rhs = vec![C64::new(0.0, 0.0); m];
    for (r, c, v) in l.entries() {
        if r == pin {
            continue;
        }
        if c == pin {
            rhs[shrink(r)] -= v;
        } else {
            band.add(shrink(r), shrink(c), v);
        }
    }
    let lu = band.factor();
    if lu.min_pivot() == 0.0 {
        return None;
    }
    let estimate = smallest_eigenvalue_estimate(&lu, m);
    lu.solve(&mut rhs);
    let mut x = rhs;
    x.insert(pin, C64::new(1.0, 0.0));
    Some((x, estimate))
}

/// Inverse iteration on the pinned system: `|x| / |M^{-1} x|` after a few
/// sweeps approaches the smallest eigenvalue magnitude.
fn smallest_eigenvalue_estimate(lu: &crate::banded::BandedLu, m: usize) -> f64 {
    let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut x: Vec<C64> = (0..m).map(|k| C64::from_polar(1.0, 0.7 * k as f64)).collect();
    let n0 = norm(&x);
    x.iter_mut().for_each(|z| *z /= n0);
    let mut estimate = f64::INFINITY;
    for _ in 0..6 {
        let mut y = x.clone();
        lu.solve(&mut y);
        let ny = norm(&y);
        if !ny.is_finite() || ny == 0.0 {
            return 0.0;
        }
        estimate = 1.0 / ny;
        x = y.into_iter().map(|z| z / ny).collect();
    }
    estimate
}

/// Population in basis states whose level in any mode is `>= dim - 2`.
pub fn tail_population(state: &DensityMatrix, modes: &[usize]) -> f64 {
    let pops = state.populations();
    let mut total = 0.0;
    for (idx, p) in pops.iter().enumerate() {
        let mut rem = idx;
        let mut in_tail = false;
        for &d in modes.iter().rev() {
            let level = rem % d;
            rem /= d;
            if level + 2 >= d {
                in_tail = true;
            }
        }
        if in_tail {
            total += p;
        }
    }
    total
}

/// Growth rule for automatic truncation.
#[derive(Debug, Clone, Copy)]
pub struct CutoffPolicy {
    pub seed: usize,
    pub max: usize,
    pub tail_tol: f64,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        Self {
            seed: 10,
            max: 160,
            tail_tol: 1e-8,
        }
    }
}

/// Raises the cutoff until the top-two-level population drops below
/// `policy.tail_tol`. `build` maps a cutoff to a Liouvillian.
pub fn steady_state_converged<F>(build: F, policy: &CutoffPolicy) -> Result<SteadyStateResult>
where
    F: Fn(usize) -> Result<Superoperator>,
{
    steady_state_converged_with(build, policy, &SteadyStateOptions::default())
}

/// [`steady_state_converged`] with explicit solver options.
pub fn steady_state_converged_with<F>(
    build: F,
    policy: &CutoffPolicy,
    opts: &SteadyStateOptions,
) -> Result<SteadyStateResult>
where
    F: Fn(usize) -> Result<Superoperator>,
{
    let mut cutoff = policy.seed.max(2);
    loop {
        let result = steady_state_with(&build(cutoff)?, opts)?;
        if result.tail_population < policy.tail_tol {
            return Ok(result);
        }
        if cutoff >= policy.max {
            return Err(Error::CutoffNotConverged {
                cutoff,
                tail: result.tail_population,
            });
        }
        cutoff = (cutoff + 4).max(cutoff * 5 / 4).min(policy.max);
    }
}

/// Detailed-balance micromaser populations
/// `p_n = p_0 prod_{m=1}^{n} (N/gamma) sin^2(phi sqrt m) / m`, summed in log space.
pub fn micromaser_steady_analytic(p: &MicromaserParams) -> Result<DensityMatrix> {
    p.validate()?;
    let d = p.cutoff + 1;
    let mut logs = Vec::with_capacity(d);
    let mut acc = 0.0_f64;
    logs.push(0.0);
    for m in 1..d {
        let s = (p.rabi_angle * (m as f64).sqrt()).sin();
        acc += p.pump_ratio.ln() + 2.0 * s.abs().ln() - (m as f64).ln();
        logs.push(acc);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut m = CMatrix::zeros(d, d);
    for (n, w) in weights.iter().enumerate() {
        m[(n, n)] = C64::new(w / total, 0.0);
    }
    DensityMatrix::new(m)
}

const EVOLVE_TOL: Tolerances = Tolerances {
    rtol: 1e-10,
    atol: 1e-13,
};

/// `exp(L t)[rho0]` by adaptive Dormand–Prince integration.
pub fn evolve(l: &Superoperator, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter("evolution time must be >= 0".into()));
    }
    if rho0.dim() != l.hilbert_dim() {
        return Err(Error::DimensionMismatch {
            expected: l.hilbert_dim(),
            got: rho0.dim(),
        });
    }
    let mut y = vectorize(rho0.matrix());
    let mut integ = Integrator::new(y.len(), EVOLVE_TOL);
    let mut rhs = |_t: f64, x: &[C64], out: &mut [C64]| l.apply_vec(x, out);
    integ.advance(&mut rhs, &mut y, 0.0, t)?;
    let rho = unvectorize(&y, l.hilbert_dim());
    let drift = (rho.trace() - C64::new(1.0, 0.0)).norm();
    if drift > 1e-10 {
        return Err(Error::TraceDrift { drift });
    }
    DensityMatrix::from_unnormalized(rho)
}

/// Sampled two-time function.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTrace {
    pub times: Vec<f64>,
    pub values: Vec<C64>,
}

/// Uniform grid `0, dt, ..., t_max` with `points` samples.
pub fn uniform_times(t_max: f64, points: usize) -> Vec<f64> {
    let dt = t_max / (points - 1) as f64;
    (0..points).map(|k| k as f64 * dt).collect()
}

const REGRESSION_TOL: Tolerances = Tolerances {
    rtol: 1e-10,
    atol: 1e-14,
};

/// Quantum-regression trace `c(tau) = tr(left exp(L tau)[seed])` on a
/// nondecreasing grid of times `>= 0`. `seed` may be any matrix, e.g.
/// `a rho_ss` or `a rho_ss a^dagger`.
pub fn regression_trace(l: &Superoperator, left: &Operator, seed: &CMatrix, times: &[f64]) -> Result<CorrelationTrace> {
    let d = l.hilbert_dim();
    if left.dim() != d || seed.nrows() != d || seed.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: seed.nrows().max(left.dim()),
        });
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("times must be nondecreasing and >= 0".into()));
    }
    // tr(A X) = sum_{i,j} A[i,j] X[j,i], X[j,i] at j + i d
    let mut weights = Vec::new();
    for i in 0..d {
        for j in 0..d {
            let a = left.get(i, j);
            if a.re != 0.0 || a.im != 0.0 {
                weights.push((j + i * d, a));
            }
        }
    }
    let observe = |x: &[C64]| weights.iter().map(|&(k, a)| a * x[k]).sum::<C64>();
    let mut y = vectorize(seed);
    let mut integ = Integrator::new(y.len(), REGRESSION_TOL);
    let mut rhs = |_t: f64, x: &[C64], out: &mut [C64]| l.apply_vec(x, out);
    let mut values = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    for &t in times {
        integ.advance(&mut rhs, &mut y, t_prev, t)?;
        values.push(observe(&y));
        t_prev = t;
    }
    Ok(CorrelationTrace {
        times: times.to_vec(),
        values,
    })
}
