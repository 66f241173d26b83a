//! Mean-field dynamics of the resonantly driven Josephson-photonics cavity.
//!
//! With `<a> = A e^{i phase}` and `x = 2 Delta_0 A`,
//!
//! ```text
//! d phase/dt = -(E Delta_0 / A) sin(phase) J1'(x)
//! dA/dt      = -A/2 + (E / 2A) cos(phase) J1(x)
//! ```
//!
//! where `E = E_J^*/(hbar gamma)`. Fixed points either have `sin(phase) = 0`
//! (phase-locked) or sit on an extremum of `J1` (amplitude-locked). Only the
//! drive and `Delta_0` of [`JosephsonParams`] enter; detuning and cutoff are
//! not used here.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::C64;
use crate::models::JosephsonParams;
use crate::ode::{Integrator, Tolerances};
use crate::special::{bessel_j1, bessel_j1_prime, bessel_j1_prime_zeros, bessel_j1_second, find_root};

/// Below this amplitude the `1/A` factors are replaced by their series.
const SMALL_AMPLITUDE: f64 = 1e-6;

/// Default search range `2 Delta_0 A_max`; spans the first three extrema of `J1`.
pub const DEFAULT_X_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScState {
    pub amplitude: f64,
    /// Radians in `(-pi, pi]`.
    pub phase: f64,
}

impl ScState {
    /// Folds a negative amplitude into the phase and wraps the phase.
    pub fn new(amplitude: f64, phase: f64) -> Self {
        let (a, ph) = if amplitude < 0.0 {
            (-amplitude, phase + std::f64::consts::PI)
        } else {
            (amplitude, phase)
        };
        Self {
            amplitude: a,
            phase: wrap_phase(ph),
        }
    }

    fn from_cartesian(u: f64, v: f64) -> Self {
        Self::new(u.hypot(v), v.atan2(u))
    }

    fn cartesian(&self) -> (f64, f64) {
        (self.amplitude * self.phase.cos(), self.amplitude * self.phase.sin())
    }

    /// Mean photon number `A^2`.
    pub fn photon_number(&self) -> f64 {
        self.amplitude * self.amplitude
    }
}

fn wrap_phase(phase: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut p = phase.rem_euclid(TAU);
    if p > PI {
        p -= TAU;
    }
    if p <= -PI {
        p += TAU;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FixedPointKind {
    PhaseLocked,
    AmplitudeLocked,
}

impl FixedPointKind {
    pub fn label(&self) -> &'static str {
        match self {
            FixedPointKind::PhaseLocked => "phase-locked",
            FixedPointKind::AmplitudeLocked => "amplitude-locked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub state: ScState,
    pub kind: FixedPointKind,
    pub stable: bool,
    pub jacobian_eigenvalues: [C64; 2],
}

fn drive(p: &JosephsonParams) -> Result<(f64, f64)> {
    p.validate()?;
    Ok((p.ej_star_ratio, p.delta0))
}

/// `J1(2 d A) / A`, finite at `A = 0`.
fn j1_over_a(d: f64, a: f64) -> f64 {
    if a < SMALL_AMPLITUDE {
        d * (1.0 - 0.5 * d * d * a * a)
    } else {
        bessel_j1(2.0 * d * a) / a
    }
}

/// Right-hand side `(d phase/dt, dA/dt)`. At `A = 0` the phase is undefined
/// and its rate is reported as zero.
pub fn eom_rhs(s: &ScState, p: &JosephsonParams) -> (f64, f64) {
    let (e, d) = (p.ej_star_ratio, p.delta0);
    let a = s.amplitude;
    let (sin, cos) = s.phase.sin_cos();
    let da = -0.5 * a + 0.5 * e * cos * j1_over_a(d, a);
    let dphi = if a == 0.0 {
        0.0
    } else {
        let x = 2.0 * d * a;
        let jp = if a < SMALL_AMPLITUDE {
            0.5 - 3.0 * x * x / 16.0
        } else {
            bessel_j1_prime(x)
        };
        -(e * d / a) * sin * jp
    };
    (dphi, da)
}

/// Cartesian form `(du/dt, dv/dt)` with `u + i v = <a>`, smooth through `A = 0`.
fn cartesian_rhs(u: f64, v: f64, e: f64, d: f64) -> (f64, f64) {
    let a2 = u * u + v * v;
    let a = a2.sqrt();
    if a < 1e-4 {
        let d3 = d * d * d;
        let du = -0.5 * u + e * (0.5 * d - 0.25 * d3 * (u * u + 3.0 * v * v));
        let dv = -0.5 * v + 0.5 * e * d3 * u * v;
        return (du, dv);
    }
    let x = 2.0 * d * a;
    let j1 = bessel_j1(x);
    let jp = bessel_j1_prime(x);
    let du = -0.5 * u + e * (u * u * j1 / (2.0 * a2 * a) + d * v * v * jp / a2);
    let dv = -0.5 * v + e * (u * v / a2) * (j1 / (2.0 * a) - d * jp);
    (du, dv)
}

fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [C64; 2] {
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = C64::new(half_tr * half_tr - det, 0.0).sqrt();
    [C64::new(half_tr, 0.0) + disc, C64::new(half_tr, 0.0) - disc]
}

/// Jacobian of `(d phase/dt, dA/dt)` with respect to `(phase, A)`; at the
/// origin the Cartesian Jacobian is used instead.
fn jacobian_eigenvalues(s: &ScState, e: f64, d: f64) -> [C64; 2] {
    let a = s.amplitude;
    if a < SMALL_AMPLITUDE {
        // du/du = -1/2, dv/dv = -1/2 at the origin; the drive only shifts
        return [C64::new(-0.5, 0.0), C64::new(-0.5, 0.0)];
    }
    let x = 2.0 * d * a;
    let (j1, jp, jpp) = (bessel_j1(x), bessel_j1_prime(x), bessel_j1_second(x));
    let (sin, cos) = s.phase.sin_cos();
    let m = [
        [
            -(e * d / a) * cos * jp,
            -e * d * sin * (-jp / (a * a) + 2.0 * d * jpp / a),
        ],
        [
            -(e / (2.0 * a)) * sin * j1,
            -0.5 + 0.5 * e * cos * (-j1 / (a * a) + 2.0 * d * jp / a),
        ],
    ];
    eigenvalues_2x2(m)
}

fn classify(state: ScState, kind: FixedPointKind, e: f64, d: f64) -> FixedPoint {
    let ev = jacobian_eigenvalues(&state, e, d);
    FixedPoint {
        state,
        kind,
        stable: ev.iter().all(|z| z.re < 0.0),
        jacobian_eigenvalues: ev,
    }
}

/// All fixed points with `0 <= A <= DEFAULT_X_MAX / (2 Delta_0)`.
pub fn find_fixed_points(p: &JosephsonParams) -> Result<Vec<FixedPoint>> {
    find_fixed_points_within(p, DEFAULT_X_MAX / (2.0 * p.delta0))
}

/// Fixed points with amplitude up to `a_max`, phase-locked first, ordered by
/// amplitude. Amplitude-locked points come in mirror pairs `(A, +-phase)`.
/// An empty result means `a_max` is too small to contain any of them.
pub fn find_fixed_points_within(p: &JosephsonParams, a_max: f64) -> Result<Vec<FixedPoint>> {
    let (e, d) = drive(p)?;
    if !(a_max.is_finite() && a_max > 0.0) {
        return Err(Error::InvalidParameter("a_max must be > 0".into()));
    }
    if e == 0.0 {
        return Ok(vec![classify(
            ScState::new(0.0, 0.0),
            FixedPointKind::PhaseLocked,
            e,
            d,
        )]);
    }
    let mut points = Vec::new();

    // phase-locked: A^2 = s E J1(2 d A) with s = cos(phase) = +-1
    const GRID: usize = 4000;
    for (sign, phase) in [(1.0, 0.0), (-1.0, std::f64::consts::PI)] {
        let h = |a: f64| a - sign * e * j1_over_a(d, a);
        let mut lo = 0.0;
        let mut f_lo = h(lo);
        for k in 1..=GRID {
            let hi = a_max * k as f64 / GRID as f64;
            let f_hi = h(hi);
            if f_lo.signum() != f_hi.signum() || f_hi == 0.0 {
                if let Some(root) = find_root(h, lo, hi, 1e-15) {
                    if root > 0.0 {
                        points.push(classify(ScState::new(root, phase), FixedPointKind::PhaseLocked, e, d));
                    }
                }
            }
            lo = hi;
            f_lo = f_hi;
        }
    }

    // amplitude-locked: 2 d A at an extremum of J1, cos(phase) = A^2 / (E J1)
    let count = {
        let mut n = 1;
        while bessel_j1_prime_zeros(n).last().is_some_and(|x| *x <= 2.0 * d * a_max) {
            n += 1;
        }
        n - 1
    };
    for x in bessel_j1_prime_zeros(count) {
        let a = x / (2.0 * d);
        let cos = a * a / (e * bessel_j1(x));
        // |cos| = 1 coincides with a phase-locked root
        if cos.abs() < 1.0 - 1e-12 {
            let phase = cos.acos();
            for ph in [phase, -phase] {
                points.push(classify(ScState::new(a, ph), FixedPointKind::AmplitudeLocked, e, d));
            }
        }
    }
    points.sort_by(|a, b| {
        (a.kind as u8, a.state.amplitude, a.state.phase)
            .partial_cmp(&(b.kind as u8, b.state.amplitude, b.state.phase))
            .unwrap()
    });
    Ok(points)
}

/// One row of the branch diagram. Mirror pairs of amplitude-locked points
/// appear once, with the non-negative phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchRow {
    pub ej_star_ratio: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub kind: FixedPointKind,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationScan {
    pub rows: Vec<BranchRow>,
    /// Drive at which the stable point changes kind, if the scan crosses it.
    pub threshold: Option<f64>,
}

impl BifurcationScan {
    /// Stable rows at a given drive.
    pub fn stable_at(&self, ej_star_ratio: f64) -> Vec<&BranchRow> {
        self.rows
            .iter()
            .filter(|r| r.ej_star_ratio == ej_star_ratio && r.stable)
            .collect()
    }
}

fn stable_kind(p: &JosephsonParams, a_max: f64) -> Result<Option<FixedPointKind>> {
    Ok(find_fixed_points_within(p, a_max)?
        .into_iter()
        .find(|fp| fp.stable)
        .map(|fp| fp.kind))
}

/// Fixed points over an increasing grid of drives, plus the drive at which the
/// stable branch switches from phase-locked to amplitude-locked (bisected to
/// 1e-9 relative). No crossing in range yields `threshold = None`.
pub fn bifurcation_scan(p: &JosephsonParams, ej_values: &[f64]) -> Result<BifurcationScan> {
    p.validate()?;
    if ej_values.is_empty() {
        return Err(Error::InvalidParameter("empty drive grid".into()));
    }
    if ej_values.iter().any(|e| !e.is_finite() || *e < 0.0) || ej_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("drive grid must be increasing and >= 0".into()));
    }
    let a_max = DEFAULT_X_MAX / (2.0 * p.delta0);
    let at = |e: f64| JosephsonParams { ej_star_ratio: e, ..*p };
    let per_point: Vec<Result<Vec<FixedPoint>>> = ej_values
        .par_iter()
        .map(|&e| find_fixed_points_within(&at(e), a_max))
        .collect();
    let mut rows = Vec::new();
    let mut kinds = Vec::with_capacity(ej_values.len());
    for (&e, points) in ej_values.iter().zip(per_point) {
        let points = points?;
        kinds.push(points.iter().find(|fp| fp.stable).map(|fp| fp.kind));
        for fp in points
            .iter()
            .filter(|fp| fp.state.phase >= 0.0 || fp.kind == FixedPointKind::PhaseLocked)
        {
            rows.push(BranchRow {
                ej_star_ratio: e,
                amplitude: fp.state.amplitude,
                phase: fp.state.phase,
                kind: fp.kind,
                stable: fp.stable,
            });
        }
    }
    let mut threshold = None;
    for k in 1..kinds.len() {
        if kinds[k - 1] == Some(FixedPointKind::PhaseLocked) && kinds[k] == Some(FixedPointKind::AmplitudeLocked) {
            let (mut lo, mut hi) = (ej_values[k - 1], ej_values[k]);
            while hi - lo > 1e-9 * hi {
                let mid = 0.5 * (lo + hi);
                if stable_kind(&at(mid), a_max)? == Some(FixedPointKind::AmplitudeLocked) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            threshold = Some(0.5 * (lo + hi));
            break;
        }
    }
    Ok(BifurcationScan { rows, threshold })
}

/// Sampled mean-field trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ScState>,
}

impl Trajectory {
    pub fn last(&self) -> ScState {
        *self.states.last().expect("trajectory has at least one sample")
    }
}

/// Integrates the mean-field equations from `s0` to `t_final`, sampling
/// `samples` equally spaced times including both ends. The integration runs
/// in Cartesian coordinates, so passing through `A = 0` is harmless.
pub fn integrate_trajectory(s0: ScState, p: &JosephsonParams, t_final: f64, samples: usize) -> Result<Trajectory> {
    let (e, d) = drive(p)?;
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidParameter("t_final must be > 0".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let (u0, v0) = s0.cartesian();
    let mut y = vec![u0, v0];
    let mut integ = Integrator::new(
        2,
        Tolerances {
            rtol: 1e-11,
            atol: 1e-13,
        },
    );
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let (du, dv) = cartesian_rhs(y[0], y[1], e, d);
        dy[0] = du;
        dy[1] = dv;
    };
    let times: Vec<f64> = (0..samples)
        .map(|k| t_final * k as f64 / (samples - 1) as f64)
        .collect();
    let mut states = Vec::with_capacity(samples);
    states.push(s0);
    for w in times.windows(2) {
        integ.advance(&mut rhs, &mut y, w[0], w[1])?;
        states.push(ScState::from_cartesian(y[0], y[1]));
    }
    Ok(Trajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(e: f64, d: f64) -> JosephsonParams {
        JosephsonParams::new(e, d, 1).unwrap()
    }

    #[test]
    fn phase_wrapping() {
        assert_eq!(ScState::new(1.0, PI).phase, PI);
        assert_eq!(ScState::new(1.0, -PI).phase, PI);
        let s = ScState::new(-2.0, 0.0);
        assert_eq!((s.amplitude, s.phase), (2.0, PI));
        assert!((ScState::new(1.0, 3.0 * PI / 2.0).phase + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rhs_examples() {
        let p = params(3.0, 0.2);
        for a in [0.1, 1.0, 5.0] {
            assert_eq!(eom_rhs(&ScState::new(a, 0.0), &p).0, 0.0);
        }
        let x1 = bessel_j1_prime_zeros(1)[0];
        for ph in [0.3, 1.0, -2.0] {
            assert!(eom_rhs(&ScState::new(x1 / 0.4, ph), &p).0.abs() < 1e-14);
        }
        let a = 1e-3;
        let (_, da) = eom_rhs(&ScState::new(a, 0.0), &p);
        assert!((da - (-0.5 * a + 3.0 * 0.2 / 2.0)).abs() < 1e-5);
        let (dphi, da) = eom_rhs(&ScState::new(0.0, 0.0), &p);
        assert_eq!(dphi, 0.0);
        assert!((da - 0.3).abs() < 1e-15);
    }

    #[test]
    fn series_branch_is_continuous() {
        let p = params(7.0, 0.8);
        for ph in [0.2, 1.4, 2.9] {
            let below = eom_rhs(&ScState::new(0.999e-6, ph), &p);
            let above = eom_rhs(&ScState::new(1.001e-6, ph), &p);
            // A dphi/dt is the smooth combination
            let (lo, hi) = (below.0 * 0.999e-6, above.0 * 1.001e-6);
            assert!((lo - hi).abs() < 1e-9 * hi.abs().max(1.0));
            assert!((below.1 - above.1).abs() < 2e-9);
        }
    }

    #[test]
    fn cartesian_matches_polar() {
        let (e, d) = (11.0, 0.3);
        let p = params(e, d);
        for (a, ph) in [(0.5, 0.4), (3.0, -2.2), (7.0, 1.9)] {
            let s = ScState::new(a, ph);
            let (dphi, da) = eom_rhs(&s, &p);
            let (u, v) = s.cartesian();
            let (du, dv) = cartesian_rhs(u, v, e, d);
            let du_ref = da * ph.cos() - a * dphi * ph.sin();
            let dv_ref = da * ph.sin() + a * dphi * ph.cos();
            assert!((du - du_ref).abs() < 1e-12 && (dv - dv_ref).abs() < 1e-12);
        }
        // small-amplitude series joins the exact form
        let (u, v) = (0.6e-4, 0.8e-4);
        let series = cartesian_rhs(u, v, e, d);
        let (u2, v2) = (0.6e-4 * 1.0001, 0.8e-4 * 1.0001);
        let exact = cartesian_rhs(u2, v2, e, d);
        assert!((series.0 - exact.0).abs() < 1e-6 && (series.1 - exact.1).abs() < 1e-6);
    }

    #[test]
    fn vacuum_is_the_only_undriven_fixed_point() {
        let fps = find_fixed_points(&params(0.0, 0.5)).unwrap();
        assert_eq!(fps.len(), 1);
        assert_eq!(fps[0].state.amplitude, 0.0);
        assert!(fps[0].stable);
    }

    #[test]
    fn weak_drive_has_one_stable_phase_locked_point() {
        let p = params(2.0, 0.1);
        let fps = find_fixed_points(&p).unwrap();
        let stable: Vec<_> = fps.iter().filter(|f| f.stable).collect();
        assert_eq!(stable.len(), 1);
        assert_eq!(stable[0].kind, FixedPointKind::PhaseLocked);
        assert_eq!(stable[0].state.phase, 0.0);
        // linear regime: A close to E Delta_0
        assert!((stable[0].state.amplitude - 0.2).abs() < 1e-3);
    }

    #[test]
    fn strong_drive_locks_the_amplitude() {
        let p = params(300.0, 0.1);
        let fps = find_fixed_points(&p).unwrap();
        let stable: Vec<_> = fps.iter().filter(|f| f.stable).collect();
        assert_eq!(stable.len(), 2, "mirror pair expected");
        let x1 = bessel_j1_prime_zeros(1)[0];
        for fp in stable {
            assert_eq!(fp.kind, FixedPointKind::AmplitudeLocked);
            assert!((fp.state.amplitude - x1 / 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_points_are_stationary_and_locked() {
        for (e, d) in [(5.0, 0.3), (60.0, 0.1), (200.0, 0.1), (40.0, 1.0)] {
            let p = params(e, d);
            for fp in find_fixed_points(&p).unwrap() {
                let (dphi, da) = eom_rhs(&fp.state, &p);
                assert!(dphi.hypot(da) < 1e-9, "{fp:?}");
                match fp.kind {
                    FixedPointKind::PhaseLocked => assert!(fp.state.phase.sin().abs() < 1e-9),
                    FixedPointKind::AmplitudeLocked => {
                        assert!(bessel_j1_prime(2.0 * d * fp.state.amplitude).abs() < 1e-9)
                    }
                }
            }
        }
    }

    #[test]
    fn tiny_search_range_finds_nothing() {
        assert!(find_fixed_points_within(&params(50.0, 0.1), 1e-3).unwrap().is_empty());
        assert!(find_fixed_points_within(&params(50.0, 0.1), 0.0).is_err());
    }

    #[test]
    fn threshold_matches_first_bessel_maximum() {
        let d = 0.1;
        let grid: Vec<f64> = (1..=40).map(|k| 10.0 * k as f64).collect();
        let scan = bifurcation_scan(&params(1.0, d), &grid).unwrap();
        let x1 = bessel_j1_prime_zeros(1)[0];
        let a = x1 / (2.0 * d);
        let expected = a * a / bessel_j1(x1);
        let th = scan.threshold.unwrap();
        assert!((th - expected).abs() < 1e-6 * expected, "{th} vs {expected}");
        for &e in &grid {
            assert_eq!(scan.stable_at(e).len(), 1, "drive {e}");
        }
    }

    #[test]
    fn scan_rejects_unordered_grids() {
        assert!(bifurcation_scan(&params(1.0, 0.1), &[2.0, 1.0]).is_err());
        assert!(bifurcation_scan(&params(1.0, 0.1), &[]).is_err());
    }

    #[test]
    fn undriven_amplitude_decays() {
        let p = params(0.0, 0.4);
        let traj = integrate_trajectory(ScState::new(2.0, 0.7), &p, 4.0, 9).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!((s.amplitude - 2.0 * (-0.5 * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_starting_on_fixed_point_stays() {
        let p = params(20.0, 0.1);
        let fp = find_fixed_points(&p).unwrap().into_iter().find(|f| f.stable).unwrap();
        let traj = integrate_trajectory(fp.state, &p, 10.0, 5).unwrap();
        let end = traj.last();
        assert!((end.amplitude - fp.state.amplitude).abs() < 1e-8);
        assert!(end.phase.abs() < 1e-8);
    }
}
