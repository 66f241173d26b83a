//! Photon statistics, Wigner functions, two-time correlations and emission
//! spectra.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::fock::{annihilation, number, DensityMatrix, FockSpace, C64};
use crate::models::{josephson_liouvillian, JosephsonParams};
use crate::solvers::{regression_trace, steady_state, uniform_times, CorrelationTrace};
use crate::superop::Superoperator;

/// Below this mean photon number, normalized moments are undefined.
const MIN_MEAN_N: f64 = 1e-14;

fn moments(rho: &DensityMatrix) -> (f64, f64) {
    rho.populations()
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(m1, m2), (n, p)| {
            let n = n as f64;
            (m1 + n * p, m2 + n * n * p)
        })
}

/// `<a^dagger a>` of a single-mode state.
pub fn mean_n(rho: &DensityMatrix) -> f64 {
    moments(rho).0
}

/// Fano factor `(<n^2> - <n>^2) / <n>`.
pub fn fano(rho: &DensityMatrix) -> Result<f64> {
    let (m1, m2) = moments(rho);
    if m1 < MIN_MEAN_N {
        return Err(Error::Undefined {
            quantity: "Fano factor",
            mean_n: m1,
        });
    }
    Ok((m2 - m1 * m1) / m1)
}

/// `<n(n-1)> / <n>^2`.
pub fn g2_zero(rho: &DensityMatrix) -> Result<f64> {
    let (m1, m2) = moments(rho);
    if m1 < MIN_MEAN_N {
        return Err(Error::Undefined {
            quantity: "g2(0)",
            mean_n: m1,
        });
    }
    Ok((m2 - m1) / (m1 * m1))
}

/// Overlap `<n|rho|n>` with a Fock state.
pub fn fidelity_fock(rho: &DensityMatrix, n: usize) -> Result<f64> {
    if n >= rho.dim() {
        return Err(Error::LevelOutOfRange {
            n,
            cutoff: rho.dim() - 1,
        });
    }
    Ok(rho.get(n, n).re)
}

/// Overlap `<psi|rho|psi>` with a normalized pure state.
pub fn fidelity_pure(rho: &DensityMatrix, amplitudes: &[C64]) -> Result<f64> {
    if amplitudes.len() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: amplitudes.len(),
        });
    }
    let m = rho.matrix();
    let mut acc = C64::new(0.0, 0.0);
    for (i, ai) in amplitudes.iter().enumerate() {
        for (j, aj) in amplitudes.iter().enumerate() {
            acc += ai.conj() * m[(i, j)] * aj;
        }
    }
    Ok(acc.re)
}

fn single_mode_space(rho: &DensityMatrix) -> Result<FockSpace> {
    FockSpace::new(rho.dim() - 1)
}

/// Rectangular phase-space grid, `alpha = (x + i p)/sqrt 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WignerGridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub x_points: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub p_points: usize,
}

impl WignerGridSpec {
    /// Square grid `[-half_width, half_width]^2`.
    pub fn square(half_width: f64, points: usize) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            x_points: points,
            p_min: -half_width,
            p_max: half_width,
            p_points: points,
        }
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let step = (hi - lo) / (n - 1) as f64;
        (0..n).map(|k| lo + k as f64 * step).collect()
    }

    fn validate(&self) -> Result<()> {
        let ok = self.x_points >= 2
            && self.p_points >= 2
            && self.x_max > self.x_min
            && self.p_max > self.p_min
            && [self.x_min, self.x_max, self.p_min, self.p_max]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad Wigner grid {self:?}")))
        }
    }
}

/// Sampled `W(x, p)`; `values[(i, j)]` is at `(x_axis[i], p_axis[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl WignerGrid {
    /// Riemann sum `sum W dx dp`.
    pub fn integral(&self) -> f64 {
        let dx = self.x_axis[1] - self.x_axis[0];
        let dp = self.p_axis[1] - self.p_axis[0];
        self.values.sum() * dx * dp
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }
}

/// Wigner function at a single phase-space point, normalized so that
/// `integral W dx dp = 1` (vacuum peak `1/pi`).
///
/// Uses the displaced-parity expansion in the form of a stable three-term
/// recurrence over the matrix elements `<m|D(alpha) Pi D(-alpha)|n>`.
pub fn wigner_point(rho: &DensityMatrix, x: f64, p: f64) -> f64 {
    let m = rho.matrix();
    let d = rho.dim();
    let a = C64::new(x, p) / std::f64::consts::SQRT_2;
    let mut w = vec![C64::new(0.0, 0.0); d];
    w[0] = C64::new((-2.0 * a.norm_sqr()).exp() / std::f64::consts::PI, 0.0);
    let mut total = m[(0, 0)].re * w[0].re;
    for n in 1..d {
        w[n] = a * w[n - 1] * (2.0 / (n as f64).sqrt());
        total += 2.0 * (m[(0, n)] * w[n]).re;
    }
    for row in 1..d {
        let sr = (row as f64).sqrt();
        let mut temp = w[row];
        w[row] = (a.conj() * temp * 2.0 - w[row - 1] * sr) / sr;
        total += (m[(row, row)] * w[row]).re;
        for n in row + 1..d {
            let next = (a * w[n - 1] * 2.0 - temp * sr) / (n as f64).sqrt();
            temp = w[n];
            w[n] = next;
            total += 2.0 * (m[(row, n)] * w[n]).re;
        }
    }
    total
}

/// Quadrature means and standard deviations `(x, sx, p, sp)`.
fn quadrature_moments(rho: &DensityMatrix) -> Result<(f64, f64, f64, f64)> {
    let space = single_mode_space(rho)?;
    let a = annihilation(space);
    let ea = rho.expect(&a);
    let ea2 = rho.expect(&a.mul(&a));
    let n = mean_n(rho);
    let x = std::f64::consts::SQRT_2 * ea.re;
    let p = std::f64::consts::SQRT_2 * ea.im;
    let x2 = ea2.re + n + 0.5;
    let p2 = -ea2.re + n + 0.5;
    Ok((x, (x2 - x * x).max(0.0).sqrt(), p, (p2 - p * p).max(0.0).sqrt()))
}

/// Wigner function on a grid. The grid must cover the mean plus or minus
/// four standard deviations of both quadratures.
pub fn wigner(rho: &DensityMatrix, spec: &WignerGridSpec) -> Result<WignerGrid> {
    spec.validate()?;
    let (x, sx, p, sp) = quadrature_moments(rho)?;
    let covered = spec.x_min <= x - 4.0 * sx
        && spec.x_max >= x + 4.0 * sx
        && spec.p_min <= p - 4.0 * sp
        && spec.p_max >= p + 4.0 * sp;
    if !covered {
        return Err(Error::GridTooSmall(format!(
            "need x in [{:.3}, {:.3}], p in [{:.3}, {:.3}]",
            x - 4.0 * sx,
            x + 4.0 * sx,
            p - 4.0 * sp,
            p + 4.0 * sp
        )));
    }
    let x_axis = WignerGridSpec::axis(spec.x_min, spec.x_max, spec.x_points);
    let p_axis = WignerGridSpec::axis(spec.p_min, spec.p_max, spec.p_points);
    let columns: Vec<Vec<f64>> = p_axis
        .par_iter()
        .map(|&pv| x_axis.iter().map(|&xv| wigner_point(rho, xv, pv)).collect())
        .collect();
    let values = DMatrix::from_fn(x_axis.len(), p_axis.len(), |i, j| columns[j][i]);
    Ok(WignerGrid { x_axis, p_axis, values })
}

/// `g2(tau) = tr[n exp(L tau)[a rho a^dagger]] / <n>^2`.
pub fn g2_tau(l: &Superoperator, rho_ss: &DensityMatrix, times: &[f64]) -> Result<CorrelationTrace> {
    let space = single_mode_space(rho_ss)?;
    let n_mean = mean_n(rho_ss);
    if n_mean < MIN_MEAN_N {
        return Err(Error::Undefined {
            quantity: "g2(tau)",
            mean_n: n_mean,
        });
    }
    let a = annihilation(space);
    let seed = a.matrix() * rho_ss.matrix() * a.adjoint().matrix();
    let mut trace = regression_trace(l, &number(space), &seed, times)?;
    let norm = n_mean * n_mean;
    trace.values.iter_mut().for_each(|v| *v /= norm);
    Ok(trace)
}

/// Uniform time grid for the field correlation behind a spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdWindow {
    /// Total window `T` in units of `1/gamma`.
    pub t_max: f64,
    /// Number of samples on `[0, T]`; a power of two `>= 1024`.
    pub points: usize,
    /// Optional apodization `exp(-rate tau)` applied before the transform.
    pub decay_rate: f64,
}

impl Default for PsdWindow {
    fn default() -> Self {
        Self {
            t_max: 200.0,
            points: 16384,
            decay_rate: 0.0,
        }
    }
}

impl PsdWindow {
    fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max >= 10.0) {
            return Err(Error::InvalidParameter("correlation window must be >= 10/gamma".into()));
        }
        if self.points < 1024 || !self.points.is_power_of_two() {
            return Err(Error::InvalidParameter(
                "correlation window needs a power-of-two number of points >= 1024".into(),
            ));
        }
        if !(self.decay_rate.is_finite() && self.decay_rate >= 0.0) {
            return Err(Error::InvalidParameter("window decay rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Uniform frequency axis `(omega - omega_0)/gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl FrequencyGrid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if points < 3
            || max.partial_cmp(&min) != Some(std::cmp::Ordering::Greater)
            || !min.is_finite()
            || !max.is_finite()
        {
            return Err(Error::InvalidParameter(
                "frequency grid needs >= 3 increasing points".into(),
            ));
        }
        Ok(Self { min, max, points })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|k| self.min + k as f64 * h).collect()
    }

    /// Index of the bin whose center is closest to `omega`, if inside.
    fn bin_of(&self, omega: f64) -> Option<usize> {
        let k = ((omega - self.min) / self.step()).round();
        (k >= 0.0 && k < self.points as f64).then_some(k as usize)
    }
}

/// Emission spectrum `S(omega) = Re int_0^inf exp(i omega tau) <a^dagger(tau) a(0)> dtau`.
///
/// The coherent part `pi |<a>|^2 delta(omega)` is deposited in a single
/// frequency bin with height `pi |<a>|^2 / d_omega`, so the discrete integral
/// of `psd` approximates `pi <n>`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub frequencies: Vec<f64>,
    pub psd: Vec<f64>,
    /// Divisor applied to `psd` (1 when unnormalized).
    pub normalization: f64,
    /// `|<a>|^2` (or its average over detunings).
    pub coherent_power: f64,
    /// `<n>` (or its average over detunings).
    pub mean_n: f64,
    /// Apodization rate used on the correlation, recorded for reproducibility.
    pub window_decay: f64,
}

impl SpectrumResult {
    /// Copy rescaled so the largest value is one.
    pub fn normalized(&self) -> SpectrumResult {
        let peak = self.psd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = self.clone();
        if peak > 0.0 {
            out.psd.iter_mut().for_each(|v| *v /= peak);
            out.normalization = self.normalization * peak;
        }
        out
    }

    /// Indices of interior local maxima exceeding `fraction` of the global maximum.
    pub fn local_maxima(&self, fraction: f64) -> Vec<usize> {
        let peak = self.psd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s = &self.psd;
        (1..s.len().saturating_sub(1))
            .filter(|&i| s[i] > s[i - 1] && s[i] >= s[i + 1] && s[i] > fraction * peak)
            .collect()
    }

    /// Rectangle-rule integral `sum S d_omega`.
    pub fn integral(&self) -> f64 {
        let h = self.frequencies[1] - self.frequencies[0];
        self.psd.iter().sum::<f64>() * h * self.normalization
    }
}

/// Fluctuation part of the field correlation, `c(tau) - |<a>|^2`, together
/// with `<a>` and `<n>`.
struct FieldCorrelation {
    dt: f64,
    values: Vec<C64>,
    coherent_power: f64,
    mean_n: f64,
}

fn field_correlation(l: &Superoperator, rho_ss: &DensityMatrix, window: &PsdWindow) -> Result<FieldCorrelation> {
    window.validate()?;
    let space = single_mode_space(rho_ss)?;
    let a = annihilation(space);
    let ea = rho_ss.expect(&a);
    let n_mean = mean_n(rho_ss);
    // seed a rho - <a> rho removes the stationary coherent part exactly
    let seed = a.matrix() * rho_ss.matrix() - rho_ss.matrix().map(|z| z * ea);
    let times = uniform_times(window.t_max, window.points);
    let trace = regression_trace(l, &a.adjoint(), &seed, &times)?;
    let mut values = trace.values;
    if window.decay_rate > 0.0 {
        for (v, t) in values.iter_mut().zip(&times) {
            *v *= (-window.decay_rate * t).exp();
        }
    }
    let start = values[0].norm();
    let end = values[values.len() - 1].norm();
    if end > 1e-4 * start + 1e-12 {
        return Err(Error::InsufficientWindow { ratio: end / start });
    }
    Ok(FieldCorrelation {
        dt: times[1] - times[0],
        values,
        coherent_power: ea.norm_sqr(),
        mean_n: n_mean,
    })
}

/// Weights of `int_0^1 exp(i theta s) (1 - s) ds` and `int_0^1 exp(i theta s) s ds`.
fn filon_weights(theta: f64) -> (C64, C64) {
    if theta.abs() < 1e-3 {
        let t2 = theta * theta;
        let lo = C64::new(0.5 - t2 / 24.0, theta / 6.0 - theta * t2 / 120.0);
        let hi = C64::new(0.5 - t2 / 8.0, theta / 3.0 - theta * t2 / 30.0);
        return (lo, hi);
    }
    let e = C64::from_polar(1.0, theta);
    let i = C64::new(0.0, 1.0);
    let hi = e / (i * theta) + (e - 1.0) / (theta * theta);
    let lo = (e - 1.0) / (i * theta) - hi;
    (lo, hi)
}

/// `Re int_0^T exp(i omega tau) c(tau) dtau` with `c` linear between samples.
fn filon_transform(c: &FieldCorrelation, omega: f64) -> f64 {
    let h = c.dt;
    let (lo, hi) = filon_weights(omega * h);
    let step = C64::from_polar(1.0, omega * h);
    let mut phase = C64::new(1.0, 0.0);
    let mut acc = C64::new(0.0, 0.0);
    for pair in c.values.windows(2) {
        acc += phase * (lo * pair[0] + hi * pair[1]);
        phase *= step;
    }
    (acc * h).re
}

/// Spectrum at a fixed detuning on a uniform frequency grid.
pub fn psd(
    l: &Superoperator,
    rho_ss: &DensityMatrix,
    window: &PsdWindow,
    grid: &FrequencyGrid,
) -> Result<SpectrumResult> {
    let corr = field_correlation(l, rho_ss, window)?;
    let frequencies = grid.values();
    let mut values: Vec<f64> = frequencies.par_iter().map(|&w| filon_transform(&corr, w)).collect();
    if let Some(k) = grid.bin_of(0.0) {
        values[k] += std::f64::consts::PI * corr.coherent_power / grid.step();
    }
    Ok(SpectrumResult {
        frequencies,
        psd: values,
        normalization: 1.0,
        coherent_power: corr.coherent_power,
        mean_n: corr.mean_n,
        window_decay: window.decay_rate,
    })
}

/// Gauss–Hermite rule for a standard normal variable: nodes `z_k` and
/// weights summing to one, via the Golub–Welsch eigenproblem.
pub fn gauss_hermite_normal(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::InvalidParameter("quadrature order must be >= 1".into()));
    }
    let jacobi = DMatrix::<f64>::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (std::f64::consts::SQRT_2 * eig.eigenvalues[k], v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // enforce the exact mirror symmetry of the rule
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for k in 0..order {
        let m = order - 1 - k;
        nodes[k] = 0.5 * (pairs[k].0 - pairs[m].0);
        weights[k] = 0.5 * (pairs[k].1 + pairs[m].1);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}

/// Quadrature over the static detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseQuadrature {
    /// Gauss–Hermite rule of the given order; convergence is checked against
    /// a rule of twice the order.
    GaussHermite { nodes: usize },
    /// Uniform detuning grid on `[-6 sigma, 6 sigma]` with Gaussian weights.
    /// Starts from `2 half_nodes + 1` points and halves the spacing (reusing
    /// every node already solved) until the result agrees with the previous
    /// level, or `max_half_nodes` is reached.
    Uniform { half_nodes: usize, max_half_nodes: usize },
}

/// Settings for the quasi-static noise average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseAverage {
    /// Standard deviation of the static detuning, in units of `gamma`.
    pub width: f64,
    pub rule: NoiseQuadrature,
    /// Require the convergence estimate to stay below 1e-4 of the peak.
    pub check_convergence: bool,
}

impl NoiseAverage {
    /// Adaptive uniform rule starting at 61 nodes. Incoherent lines narrower
    /// than the noise width (common near trapping) defeat low-order
    /// Gauss–Hermite rules.
    pub fn new(width: f64) -> Self {
        Self {
            width,
            rule: NoiseQuadrature::Uniform {
                half_nodes: 30,
                max_half_nodes: 480,
            },
            check_convergence: true,
        }
    }

    pub fn gauss_hermite(width: f64, nodes: usize) -> Self {
        Self {
            width,
            rule: NoiseQuadrature::GaussHermite { nodes },
            check_convergence: true,
        }
    }
}

/// Gaussian weights on `j h`, `j = -n..=n`, `h = 6/n`, normalised to one.
fn uniform_normal_rule(half_nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 6.0 / half_nodes as f64;
    let n = half_nodes as i64;
    let nodes: Vec<f64> = (-n..=n).map(|j| j as f64 * h).collect();
    let raw: Vec<f64> = nodes.iter().map(|z| (-0.5 * z * z).exp()).collect();
    let total: f64 = raw.iter().sum();
    (nodes, raw.into_iter().map(|w| w / total).collect())
}

fn detuned_steady(p: &JosephsonParams, detuning: f64) -> Result<(Superoperator, DensityMatrix)> {
    let l = josephson_liouvillian(&p.with_detuning(detuning))?;
    let ss = steady_state(&l)?;
    Ok((l, ss.state))
}

/// Field correlation of each detuning node.
fn node_correlations(p: &JosephsonParams, detunings: &[f64], window: &PsdWindow) -> Result<Vec<FieldCorrelation>> {
    detunings
        .par_iter()
        .map(|&delta| {
            let (l, rho) = detuned_steady(p, delta)?;
            field_correlation(&l, &rho, window)
        })
        .collect()
}

/// Combines node correlations into one whose transform is the average of the
/// shifted spectra, `sum_k w_k S_k(omega - delta_k)`. The shift is a phase
/// `exp(-i delta_k tau)` in the time domain, so one transform suffices.
fn shifted_mixture(nodes: &[&FieldCorrelation], detunings: &[f64], weights: &[f64]) -> (FieldCorrelation, f64) {
    let dt = nodes[0].dt;
    let mut values = vec![C64::new(0.0, 0.0); nodes[0].values.len()];
    let mut n_avg = 0.0;
    for ((corr, &delta), &w) in nodes.iter().zip(detunings).zip(weights) {
        let step = C64::from_polar(1.0, -delta * dt);
        let mut phase = C64::new(w, 0.0);
        for (acc, v) in values.iter_mut().zip(&corr.values) {
            *acc += phase * v;
            phase *= step;
        }
        n_avg += w * corr.mean_n;
    }
    let mixture = FieldCorrelation {
        dt,
        values,
        coherent_power: 0.0,
        mean_n: n_avg,
    };
    (mixture, n_avg)
}

fn rule_mixture(
    p: &JosephsonParams,
    sigma: f64,
    z: &[f64],
    w: &[f64],
    window: &PsdWindow,
) -> Result<(FieldCorrelation, f64)> {
    let d: Vec<f64> = z.iter().map(|z| sigma * z).collect();
    let nodes = node_correlations(p, &d, window)?;
    Ok(shifted_mixture(&nodes.iter().collect::<Vec<_>>(), &d, w))
}

fn transform_all(c: &FieldCorrelation, frequencies: &[f64]) -> Vec<f64> {
    frequencies.par_iter().map(|&w| filon_transform(c, w)).collect()
}

fn max_relative_change(fine: &[f64], coarse: &[f64]) -> f64 {
    let peak = fine.iter().copied().fold(0.0, f64::max);
    let diff = fine.iter().zip(coarse).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    diff / peak
}

const NOISE_TOL: f64 = 1e-4;

/// Averaged fluctuation spectrum, averaged `<n>`, and the last convergence
/// estimate (relative to the fluctuation peak).
fn averaged_fluctuation(
    p: &JosephsonParams,
    noise: &NoiseAverage,
    window: &PsdWindow,
    frequencies: &[f64],
) -> Result<(Vec<f64>, f64, Option<f64>)> {
    let sigma = noise.width;
    match noise.rule {
        NoiseQuadrature::GaussHermite { nodes } => {
            let (z, w) = gauss_hermite_normal(nodes)?;
            let (avg, n) = rule_mixture(p, sigma, &z, &w, window)?;
            let spectrum = transform_all(&avg, frequencies);
            let change = if noise.check_convergence {
                let (z2, w2) = gauss_hermite_normal(2 * nodes)?;
                let fine = transform_all(&rule_mixture(p, sigma, &z2, &w2, window)?.0, frequencies);
                Some(max_relative_change(&fine, &spectrum))
            } else {
                None
            };
            Ok((spectrum, n, change))
        }
        NoiseQuadrature::Uniform {
            half_nodes,
            max_half_nodes,
        } => {
            if half_nodes < 1 || max_half_nodes < half_nodes {
                return Err(Error::InvalidParameter(
                    "uniform noise rule needs 1 <= half_nodes <= max_half_nodes".into(),
                ));
            }
            let mut level = half_nodes;
            let (z, _) = uniform_normal_rule(level);
            let d: Vec<f64> = z.iter().map(|z| sigma * z).collect();
            let mut nodes = node_correlations(p, &d, window)?;
            let mut previous: Option<Vec<f64>> = None;
            loop {
                let (z, w) = uniform_normal_rule(level);
                let d: Vec<f64> = z.iter().map(|z| sigma * z).collect();
                let (mix, n) = shifted_mixture(&nodes.iter().collect::<Vec<_>>(), &d, &w);
                let spectrum = transform_all(&mix, frequencies);
                let change = previous.as_deref().map(|prev| max_relative_change(&spectrum, prev));
                let done = match change {
                    Some(c) => c <= NOISE_TOL || 2 * level > max_half_nodes,
                    None => !noise.check_convergence || 2 * level > max_half_nodes,
                };
                if done {
                    return Ok((spectrum, n, change));
                }
                // the new level interleaves fresh nodes between the old ones
                let (z_next, _) = uniform_normal_rule(2 * level);
                let fresh: Vec<f64> = z_next.iter().skip(1).step_by(2).map(|z| sigma * z).collect();
                let mut fresh_corr = node_correlations(p, &fresh, window)?.into_iter();
                let mut merged = Vec::with_capacity(z_next.len());
                for old in nodes {
                    merged.push(old);
                    if let Some(f) = fresh_corr.next() {
                        merged.push(f);
                    }
                }
                nodes = merged;
                level *= 2;
                previous = Some(spectrum);
            }
        }
    }
}

/// Spectrum of the Josephson-photonics cavity averaged over a Gaussian
/// distribution of static detunings (quasi-static voltage noise).
///
/// The smooth fluctuation part is averaged by the chosen detuning quadrature.
/// The coherent line of each detuning sits exactly at `omega = delta`, so its
/// average is the Gaussian density itself, weighted by `|<a>|^2` at that
/// detuning and integrated over each frequency bin analytically.
pub fn noise_averaged_psd(
    p: &JosephsonParams,
    noise: &NoiseAverage,
    window: &PsdWindow,
    grid: &FrequencyGrid,
) -> Result<SpectrumResult> {
    p.validate()?;
    if !(noise.width.is_finite() && noise.width > 0.0) {
        return Err(Error::InvalidParameter("noise width must be > 0".into()));
    }
    window.validate()?;
    let frequencies = grid.values();
    let (fluct, n_avg, change) = averaged_fluctuation(p, noise, window, &frequencies)?;

    let h = grid.step();
    let cdf = |x: f64| 0.5 * (1.0 + erf(x / (noise.width * std::f64::consts::SQRT_2)));
    let coherent: Vec<Result<(f64, f64)>> = frequencies
        .par_iter()
        .map(|&om| {
            let mass = cdf(om + 0.5 * h) - cdf(om - 0.5 * h);
            if mass < 1e-13 {
                return Ok((0.0, 0.0));
            }
            let (_, rho) = detuned_steady(p, om)?;
            let a = annihilation(single_mode_space(&rho)?);
            let power = rho.expect(&a).norm_sqr();
            Ok((std::f64::consts::PI * power * mass / h, power * mass))
        })
        .collect();
    let mut values = fluct;
    let mut coherent_power = 0.0;
    for (v, c) in values.iter_mut().zip(coherent) {
        let (density, power) = c?;
        *v += density;
        coherent_power += power;
    }

    if noise.check_convergence {
        if let Some(change) = change.filter(|c| *c > NOISE_TOL) {
            return Err(Error::QuadratureNotConverged { change });
        }
    }

    Ok(SpectrumResult {
        frequencies,
        psd: values,
        normalization: 1.0,
        coherent_power,
        mean_n: n_avg,
        window_decay: window.decay_rate,
    })
}
