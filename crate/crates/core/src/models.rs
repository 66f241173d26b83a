//! Liouvillians of the micromaser, the single-cavity Josephson-photonics
//! device and its two-cavity extension.
//!
//! Rates are measured in units of the cavity damping rate `gamma` and
//! energies in units of `hbar * gamma`, so `hbar = gamma = 1` throughout
//! unless a builder takes an explicit rate.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::{annihilation, creation, number, number_function, FockSpace, Operator, C64};
use crate::special::laguerre_assoc1;
use crate::superop::Superoperator;

/// von Klitzing constant `h/e^2` in ohms.
pub const VON_KLITZING_OHMS: f64 = 25_812.807;

/// Default bound on the two-cavity product dimension `(cutoff_a+1)(cutoff_b+1)`.
pub const DEFAULT_MAX_PRODUCT_DIM: usize = 64;

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.to_string()))
    }
}

/// Micromaser pump ratio `N/gamma`, Rabi angle and truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicromaserParams {
    pub pump_ratio: f64,
    pub rabi_angle: f64,
    pub cutoff: usize,
}

impl MicromaserParams {
    pub fn new(pump_ratio: f64, rabi_angle: f64, cutoff: usize) -> Result<Self> {
        let p = Self {
            pump_ratio,
            rabi_angle,
            cutoff,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require(
            self.pump_ratio.is_finite() && self.pump_ratio > 0.0,
            "pump_ratio must be > 0",
        )?;
        require(
            self.rabi_angle.is_finite() && self.rabi_angle >= 0.0,
            "rabi_angle must be finite and >= 0",
        )?;
        FockSpace::new(self.cutoff).map(|_| ())
    }

    pub fn with_cutoff(self, cutoff: usize) -> Self {
        Self { cutoff, ..self }
    }

    pub fn space(&self) -> Result<FockSpace> {
        FockSpace::new(self.cutoff)
    }
}

/// Josephson-photonics drive `E_J^*/(hbar gamma)`, zero-point amplitude
/// `Delta_0`, detuning `delta/gamma` and truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JosephsonParams {
    pub ej_star_ratio: f64,
    pub delta0: f64,
    pub detuning_ratio: f64,
    pub cutoff: usize,
}

impl JosephsonParams {
    pub fn new(ej_star_ratio: f64, delta0: f64, cutoff: usize) -> Result<Self> {
        let p = Self {
            ej_star_ratio,
            delta0,
            detuning_ratio: 0.0,
            cutoff,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require(
            self.ej_star_ratio.is_finite() && self.ej_star_ratio >= 0.0,
            "ej_star_ratio must be >= 0",
        )?;
        require(self.delta0.is_finite() && self.delta0 > 0.0, "delta0 must be > 0")?;
        require(self.detuning_ratio.is_finite(), "detuning_ratio must be finite")?;
        FockSpace::new(self.cutoff).map(|_| ())
    }

    pub fn with_cutoff(self, cutoff: usize) -> Self {
        Self { cutoff, ..self }
    }

    pub fn with_detuning(self, detuning_ratio: f64) -> Self {
        Self { detuning_ratio, ..self }
    }

    pub fn space(&self) -> Result<FockSpace> {
        FockSpace::new(self.cutoff)
    }
}

/// Pair-creation scheme: a primary cavity `a` and an auxiliary cavity `b`
/// damped at `gamma_ratio_aux * gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoCavityParams {
    pub ej_star_ratio: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    pub gamma_ratio_aux: f64,
    pub cutoff_a: usize,
    pub cutoff_b: usize,
    pub max_product_dim: usize,
}

impl TwoCavityParams {
    pub fn new(
        ej_star_ratio: f64,
        delta_a: f64,
        delta_b: f64,
        gamma_ratio_aux: f64,
        cutoff_a: usize,
        cutoff_b: usize,
    ) -> Result<Self> {
        let p = Self {
            ej_star_ratio,
            delta_a,
            delta_b,
            gamma_ratio_aux,
            cutoff_a,
            cutoff_b,
            max_product_dim: DEFAULT_MAX_PRODUCT_DIM,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require(
            self.ej_star_ratio.is_finite() && self.ej_star_ratio >= 0.0,
            "ej_star_ratio must be >= 0",
        )?;
        require(self.delta_a.is_finite() && self.delta_a > 0.0, "delta_a must be > 0")?;
        require(self.delta_b.is_finite() && self.delta_b > 0.0, "delta_b must be > 0")?;
        require(
            self.gamma_ratio_aux.is_finite() && self.gamma_ratio_aux > 0.0,
            "gamma_ratio_aux must be > 0",
        )?;
        FockSpace::new(self.cutoff_a)?;
        FockSpace::new(self.cutoff_b)?;
        let dim = self.dims().iter().product();
        if dim > self.max_product_dim {
            return Err(Error::DimensionLimit {
                dim,
                limit: self.max_product_dim,
            });
        }
        Ok(())
    }

    /// `[cutoff_a + 1, cutoff_b + 1]`.
    pub fn dims(&self) -> [usize; 2] {
        [self.cutoff_a + 1, self.cutoff_b + 1]
    }
}

/// Atom-field gain `N [C rho C + S rho S^dagger - rho]` with
/// `C = cos(phi sqrt(a a^dagger))` and `S = a^dagger sin(phi sqrt(a a^dagger)) / sqrt(a a^dagger)`.
///
/// Functions of `a a^dagger` are evaluated at `n + 1` on `|n>`. The top level
/// has no upward transition, so `C` is set to one there; this keeps the
/// truncated map trace preserving and equals the sine-zero trapping closure.
pub fn micromaser_gain(p: &MicromaserParams, gamma: f64) -> Result<Superoperator> {
    p.validate()?;
    let space = p.space()?;
    let phi = p.rabi_angle;
    let cutoff = space.cutoff();
    let c = number_function(space, |n| {
        if n == cutoff {
            1.0
        } else {
            (phi * ((n + 1) as f64).sqrt()).cos()
        }
    })?;
    let sinc = number_function(space, |n| {
        let r = ((n + 1) as f64).sqrt();
        (phi * r).sin() / r
    })?;
    let s = creation(space).mul(&sinc);
    let modes = vec![space.dim()];
    let rate = C64::new(p.pump_ratio * gamma, 0.0);
    let gain = Superoperator::sandwich(modes.clone(), &c, &c)?
        .add(&Superoperator::sandwich(modes.clone(), &s, &s.adjoint())?)?
        .add(&Superoperator::identity(modes).scale(C64::new(-1.0, 0.0)))?;
    Ok(gain.scale(rate))
}

/// Zero-temperature damping `(gamma/2)(2 a rho a^dagger - a^dagger a rho - rho a^dagger a)`.
pub fn damping_dissipator(gamma: f64, space: FockSpace) -> Result<Superoperator> {
    require(gamma.is_finite() && gamma > 0.0, "damping rate must be > 0")?;
    Ok(Superoperator::lindblad(vec![space.dim()], &annihilation(space))?.scale(C64::new(gamma, 0.0)))
}

/// Rotating-wave Josephson-photonics Hamiltonian in units of `hbar gamma`:
/// `<n|H|n+1> = -i Delta_0 (E_J^*/2) L_n^1(Delta_0^2) / sqrt(n+1)`, its
/// conjugate below the diagonal and `delta * n` on the diagonal.
pub fn jj_hamiltonian(p: &JosephsonParams) -> Result<Operator> {
    p.validate()?;
    let space = p.space()?;
    let d = space.dim();
    let x = p.delta0 * p.delta0;
    let mut h = Operator::zeros(d).into_matrix();
    for n in 0..space.cutoff() {
        let amp = p.delta0 * p.ej_star_ratio / 2.0 * laguerre_assoc1(n, x) / ((n + 1) as f64).sqrt();
        h[(n, n + 1)] = C64::new(0.0, -amp);
        h[(n + 1, n)] = C64::new(0.0, amp);
    }
    if p.detuning_ratio != 0.0 {
        for n in 0..d {
            h[(n, n)] = C64::new(p.detuning_ratio * n as f64, 0.0);
        }
    }
    Operator::from_matrix(h)
}

/// `:a J_1(2 Delta sqrt(a^dagger a)) / sqrt(a^dagger a):` summed as
/// `sum_k c_k a^dagger^k a^(k+1)` with `c_k = (-1)^k Delta^(2k+1) / (k! (k+1)!)`.
///
/// Returns the partial sum over `order` terms and the largest element of the
/// first omitted term.
fn normal_ordered_lowering(space: FockSpace, delta: f64, order: usize) -> (Operator, f64) {
    let a = annihilation(space);
    let ad = creation(space);
    let mut monomial = a.clone();
    let mut coeff = delta;
    let mut sum = Operator::zeros(space.dim());
    for k in 0..order {
        sum = sum.add(&monomial.scale(C64::new(coeff, 0.0)));
        monomial = ad.mul(&monomial).mul(&a);
        coeff *= -delta * delta / ((k + 1) as f64 * (k + 2) as f64);
    }
    let next = coeff.abs() * monomial.max_abs();
    (sum, next)
}

/// Independent construction of the Josephson Hamiltonian from the
/// normal-ordered Bessel series. Fails when the first omitted order still
/// changes an element by more than `1e-10`.
pub fn jj_hamiltonian_oracle(p: &JosephsonParams, series_order: usize) -> Result<Operator> {
    p.validate()?;
    let space = p.space()?;
    let (k, next) = normal_ordered_lowering(space, p.delta0, series_order);
    let next = next * p.ej_star_ratio / 2.0;
    if next > 1e-10 {
        return Err(Error::SeriesNotConverged {
            order: series_order,
            next_term: next,
        });
    }
    // i E/2 (K^dagger - K)
    let mut h = k.adjoint().sub(&k).scale(C64::new(0.0, p.ej_star_ratio / 2.0));
    if p.detuning_ratio != 0.0 {
        h = h.add(&number(space).scale(C64::new(p.detuning_ratio, 0.0)));
    }
    Ok(h)
}

/// `E_J^* = E_J exp(-Delta_0^2 / 2)`.
pub fn ej_renormalize(ej: f64, delta0: f64) -> f64 {
    ej * (-delta0 * delta0 / 2.0).exp()
}

/// `Delta_0 = sqrt(4 pi Z_LC / R_K)`.
pub fn delta0_from_impedance(z_lc_ohms: f64) -> Result<f64> {
    require(z_lc_ohms.is_finite() && z_lc_ohms > 0.0, "impedance must be > 0")?;
    Ok((4.0 * PI * z_lc_ohms / VON_KLITZING_OHMS).sqrt())
}

/// `L = -i [H, .] + sum of dissipators`.
pub fn liouvillian(h: Option<&Operator>, dissipators: &[Superoperator]) -> Result<Superoperator> {
    let modes = match (dissipators.first(), h) {
        (Some(d), _) => d.modes().to_vec(),
        (None, Some(h)) => vec![h.dim()],
        (None, None) => {
            return Err(Error::InvalidParameter(
                "liouvillian needs a Hamiltonian or a dissipator".into(),
            ))
        }
    };
    let mut total = Superoperator::zeros(modes.clone());
    if let Some(h) = h {
        total = total.add(&Superoperator::hamiltonian(modes.clone(), h)?)?;
    }
    for d in dissipators {
        total = total.add(d)?;
    }
    Ok(total)
}

/// Micromaser gain plus unit-rate damping.
pub fn micromaser_liouvillian(p: &MicromaserParams) -> Result<Superoperator> {
    let gain = micromaser_gain(p, 1.0)?;
    let damping = damping_dissipator(1.0, p.space()?)?;
    liouvillian(None, &[gain, damping])
}

/// Josephson Hamiltonian plus unit-rate damping.
pub fn josephson_liouvillian(p: &JosephsonParams) -> Result<Superoperator> {
    let h = jj_hamiltonian(p)?;
    liouvillian(Some(&h), &[damping_dissipator(1.0, p.space()?)?])
}

/// Pair-creation Hamiltonian on `a ⊗ b`:
/// `<n_a, n_b|H|n_a+1, n_b+1> = -(E/2) D_a D_b L^1_{n_a}(D_a^2) L^1_{n_b}(D_b^2) / sqrt((n_a+1)(n_b+1))`.
pub fn two_cavity_hamiltonian(p: &TwoCavityParams) -> Result<Operator> {
    p.validate()?;
    let [da, db] = p.dims();
    let d = da * db;
    let xa = p.delta_a * p.delta_a;
    let xb = p.delta_b * p.delta_b;
    let mut h = Operator::zeros(d).into_matrix();
    for na in 0..da - 1 {
        let fa = p.delta_a * laguerre_assoc1(na, xa) / ((na + 1) as f64).sqrt();
        for nb in 0..db - 1 {
            let fb = p.delta_b * laguerre_assoc1(nb, xb) / ((nb + 1) as f64).sqrt();
            let v = C64::new(-p.ej_star_ratio / 2.0 * fa * fb, 0.0);
            let row = na * db + nb;
            let col = (na + 1) * db + nb + 1;
            h[(row, col)] = v;
            h[(col, row)] = v.conj();
        }
    }
    Operator::from_matrix(h)
}

/// Two-mode normal-ordered series oracle: `-(E/2)(K_a ⊗ K_b + h.c.)`.
pub fn two_cavity_hamiltonian_oracle(p: &TwoCavityParams, series_order: usize) -> Result<Operator> {
    p.validate()?;
    let sa = FockSpace::new(p.cutoff_a)?;
    let sb = FockSpace::new(p.cutoff_b)?;
    let (ka, na) = normal_ordered_lowering(sa, p.delta_a, series_order);
    let (kb, nb) = normal_ordered_lowering(sb, p.delta_b, series_order);
    let next = p.ej_star_ratio / 2.0 * (na * kb.max_abs() + nb * ka.max_abs() + na * nb);
    if next > 1e-10 {
        return Err(Error::SeriesNotConverged {
            order: series_order,
            next_term: next,
        });
    }
    let pair = ka.kron(&kb);
    Ok(pair.add(&pair.adjoint()).scale(C64::new(-p.ej_star_ratio / 2.0, 0.0)))
}

/// Pair-creation Hamiltonian with damping `gamma` on `a` and
/// `gamma_ratio_aux * gamma` on `b`.
pub fn two_cavity_liouvillian(p: &TwoCavityParams) -> Result<Superoperator> {
    let h = two_cavity_hamiltonian(p)?;
    let [da, db] = p.dims();
    let modes = vec![da, db];
    let a = annihilation(FockSpace::new(p.cutoff_a)?).kron(&Operator::identity(db));
    let b = Operator::identity(da).kron(&annihilation(FockSpace::new(p.cutoff_b)?));
    let damp_a = Superoperator::lindblad(modes.clone(), &a)?;
    let damp_b = Superoperator::lindblad(modes, &b)?.scale(C64::new(p.gamma_ratio_aux, 0.0));
    liouvillian(Some(&h), &[damp_a, damp_b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{fock_state, CMatrix};
    use std::f64::consts::{PI, SQRT_2};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn gain_vanishes_without_interaction() {
        let p = MicromaserParams::new(7.0, 0.0, 6).unwrap();
        let gain = micromaser_gain(&p, 1.0).unwrap();
        assert_eq!(gain.nnz(), 0);
    }

    #[test]
    fn gain_has_no_upward_rate_out_of_one_at_trap() {
        let p = MicromaserParams::new(10.0, PI / SQRT_2, 6).unwrap();
        let gain = micromaser_gain(&p, 1.0).unwrap();
        let rho = fock_state(p.space().unwrap(), 1).unwrap();
        let out = gain.apply(rho.matrix());
        assert!(out.iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn gain_maps_diagonal_to_diagonal() {
        let p = MicromaserParams::new(3.3, 1.234, 8).unwrap();
        let gain = micromaser_gain(&p, 1.0).unwrap();
        let d = p.cutoff + 1;
        for (r, col, _) in gain.entries() {
            let (i, j) = (r % d, r / d);
            let (k, l) = (col % d, col / d);
            assert_eq!(i == j, k == l, "entry couples diagonal and off-diagonal");
        }
    }

    #[test]
    fn damping_examples() {
        let space = FockSpace::new(4).unwrap();
        let l = damping_dissipator(2.0, space).unwrap();
        let vac = fock_state(space, 0).unwrap();
        assert!(l.apply(vac.matrix()).iter().all(|z| z.norm() == 0.0));
        let one = fock_state(space, 1).unwrap();
        let out = l.apply(one.matrix());
        let mut expected = CMatrix::zeros(5, 5);
        expected[(0, 0)] = c(2.0);
        expected[(1, 1)] = c(-2.0);
        assert!((out - expected).iter().all(|z| z.norm() < 1e-14));
        assert!(damping_dissipator(0.0, space).is_err());
    }

    #[test]
    fn jj_hamiltonian_elements() {
        let p = JosephsonParams::new(3.0, 0.8, 5).unwrap();
        let h = jj_hamiltonian(&p).unwrap();
        assert!((h.get(0, 1) - C64::new(0.0, -0.8 * 3.0 / 2.0)).norm() < 1e-15);
        assert!(h.hermiticity_error() < 1e-14);
        for i in 0..6usize {
            for j in 0..6 {
                if i.abs_diff(j) > 1 {
                    assert_eq!(h.get(i, j), c(0.0));
                }
            }
        }

        let trap = JosephsonParams::new(3.0, SQRT_2, 5).unwrap();
        assert!(jj_hamiltonian(&trap).unwrap().get(1, 2).norm() < 1e-14);
    }

    #[test]
    fn jj_hamiltonian_detuning_on_diagonal() {
        let p = JosephsonParams::new(1.0, 0.5, 3).unwrap().with_detuning(0.25);
        let h = jj_hamiltonian(&p).unwrap();
        assert_eq!(h.get(3, 3), c(0.75));
    }

    #[test]
    fn small_delta_is_linear_drive() {
        let (e, d0) = (10.0, 1e-3);
        let p = JosephsonParams::new(e, d0, 8).unwrap();
        let h = jj_hamiltonian(&p).unwrap();
        let space = p.space().unwrap();
        let linear = creation(space)
            .sub(&annihilation(space))
            .scale(C64::new(0.0, e * d0 / 2.0));
        for i in 0..9 {
            for j in 0..9 {
                let l = linear.get(i, j);
                if l.norm() > 0.0 {
                    assert!((h.get(i, j) - l).norm() / l.norm() < 1e-5);
                } else {
                    assert_eq!(h.get(i, j), c(0.0));
                }
            }
        }
    }

    #[test]
    fn oracle_matches_laguerre_form() {
        for &d0 in &[0.3, 0.5, 1.0, SQRT_2] {
            for cutoff in [6, 10, 12] {
                let p = JosephsonParams::new(2.5, d0, cutoff).unwrap().with_detuning(0.1);
                let direct = jj_hamiltonian(&p).unwrap();
                let oracle = jj_hamiltonian_oracle(&p, 60).unwrap();
                let diff = direct.sub(&oracle).max_abs();
                assert!(diff < 1e-9, "d0 = {d0}, cutoff = {cutoff}, diff = {diff:e}");
            }
        }
        let trap = JosephsonParams::new(1.0, SQRT_2, 6).unwrap();
        assert!(jj_hamiltonian_oracle(&trap, 60).unwrap().get(1, 2).norm() < 1e-12);
    }

    #[test]
    fn oracle_leading_order_is_linear_drive() {
        let p = JosephsonParams::new(4.0, 1e-6, 5).unwrap();
        let h = jj_hamiltonian_oracle(&p, 1).unwrap();
        let space = p.space().unwrap();
        let linear = creation(space)
            .sub(&annihilation(space))
            .scale(C64::new(0.0, 4.0 * 1e-6 / 2.0));
        assert!(h.sub(&linear).max_abs() < 1e-20);
    }

    #[test]
    fn oracle_reports_truncated_series() {
        let p = JosephsonParams::new(4.0, 1.0, 10).unwrap();
        assert!(matches!(
            jj_hamiltonian_oracle(&p, 3),
            Err(Error::SeriesNotConverged { order: 3, .. })
        ));
    }

    #[test]
    fn renormalization_and_impedance() {
        assert_eq!(ej_renormalize(1.0, 0.0), 1.0);
        assert!((ej_renormalize(1.0, SQRT_2) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((ej_renormalize(20.0, 1.0) - 12.130_613_194_252_668).abs() < 1e-12);
        let rk = VON_KLITZING_OHMS;
        assert!((delta0_from_impedance(rk / (4.0 * PI)).unwrap() - 1.0).abs() < 1e-14);
        assert!((delta0_from_impedance(rk / (2.0 * PI)).unwrap() - SQRT_2).abs() < 1e-14);
        // sqrt(4 pi 50 / 25812.807)
        assert!((delta0_from_impedance(50.0).unwrap() - 0.156_017_1).abs() < 1e-6);
        assert!(delta0_from_impedance(-1.0).is_err());
    }

    #[test]
    fn liouvillian_of_pure_damping_is_the_dissipator() {
        let space = FockSpace::new(5).unwrap();
        let d = damping_dissipator(1.0, space).unwrap();
        let l = liouvillian(None, std::slice::from_ref(&d)).unwrap();
        assert_eq!(l, d);
        assert!(liouvillian(None, &[]).is_err());
        let h = Operator::identity(4);
        assert!(liouvillian(Some(&h), &[d]).is_err());
    }

    #[test]
    fn every_liouvillian_preserves_trace() {
        let mm = micromaser_liouvillian(&MicromaserParams::new(12.0, 2.1, 15).unwrap()).unwrap();
        assert!(mm.trace_preservation_error() < 1e-10);
        let jj = josephson_liouvillian(&JosephsonParams::new(20.0, 1.1, 15).unwrap().with_detuning(0.3)).unwrap();
        assert!(jj.trace_preservation_error() < 1e-10);
        let two = two_cavity_liouvillian(&TwoCavityParams::new(8.0, 1.2, 0.7, 100.0, 5, 4).unwrap()).unwrap();
        assert!(two.trace_preservation_error() < 1e-10);
    }

    #[test]
    fn two_cavity_matches_series_oracle() {
        let p = TwoCavityParams::new(3.0, 0.9, SQRT_2, 100.0, 6, 5).unwrap();
        let direct = two_cavity_hamiltonian(&p).unwrap();
        let oracle = two_cavity_hamiltonian_oracle(&p, 60).unwrap();
        assert!(direct.sub(&oracle).max_abs() < 1e-9);
        assert!(direct.hermiticity_error() < 1e-14);
    }

    #[test]
    fn two_cavity_frozen_mode_reduces_to_single_mode() {
        // Delta_b -> 0 with E rescaled by 1/Delta_b: the b-vacuum to b-one block
        // carries the single-mode Josephson elements (up to the factor i).
        let (e, da, db) = (5.0, 1.1, 1e-3);
        let p = TwoCavityParams::new(e / db, da, db, 100.0, 6, 2).unwrap();
        let h2 = two_cavity_hamiltonian(&p).unwrap();
        let single = jj_hamiltonian(&JosephsonParams::new(e, da, 6).unwrap()).unwrap();
        let dimb = 3;
        for na in 0..6 {
            let pair = h2.get(na * dimb, (na + 1) * dimb + 1);
            let expected = single.get(na, na + 1) * C64::new(0.0, -1.0);
            assert!((pair - expected).norm() <= 1e-5 * expected.norm(), "na = {na}");
        }
    }

    #[test]
    fn two_cavity_dimension_limit() {
        let err = TwoCavityParams::new(1.0, 1.0, 1.0, 100.0, 10, 10).unwrap_err();
        assert_eq!(err, Error::DimensionLimit { dim: 121, limit: 64 });
    }
}
