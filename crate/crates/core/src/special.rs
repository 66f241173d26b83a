//! Special functions that parametrize the two cavity models.
//!
//! Associated Laguerre polynomials come from a three-term recurrence, so they
//! stay finite for large degree. The Bessel functions use the ascending series
//! for small arguments and Miller's backward recurrence elsewhere, which keeps
//! the absolute error at the level of a few ulps for every finite argument.

/// Below this magnitude the ascending series is used without cancellation issues.
const SERIES_LIMIT: f64 = 2.0;

/// Generalized Laguerre polynomial `L_n^(alpha)(x)` by upward recurrence.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Associated Laguerre polynomial with superscript one, `L_n^1(x)`.
pub fn laguerre_assoc1(n: usize, x: f64) -> f64 {
    laguerre(n, 1.0, x)
}

/// Coefficient of `x^(2k+1)` in the ascending series of `J_1`.
fn j1_series_coefficients() -> impl Iterator<Item = f64> {
    let mut coeff = 0.5;
    (0..).map(move |k: i32| {
        let c = coeff;
        let k = f64::from(k);
        coeff *= -0.25 / ((k + 1.0) * (k + 2.0));
        c
    })
}

/// Returns `(J_1, J_1', J_1'')` from the ascending series.
fn j1_series(x: f64) -> (f64, f64, f64) {
    let x2 = x * x;
    let (mut j, mut dj, mut ddj) = (0.0, 0.0, 0.0);
    // x^(2k), built incrementally
    let mut pow = 1.0;
    for (k, c) in j1_series_coefficients().enumerate().take(40) {
        let p = 2.0 * k as f64 + 1.0;
        let term = c * pow;
        j += term * x;
        dj += term * p;
        if k > 0 {
            ddj += term * p * (p - 1.0) / x;
        }
        if term.abs() < 1e-18 * j.abs().max(1e-300) && k > 2 {
            break;
        }
        pow *= x2;
    }
    (j, dj, ddj)
}

/// `(J_0(x), J_1(x))` for `x > 0` by Miller's backward recurrence, normalized
/// with `J_0 + 2 (J_2 + J_4 + ...) = 1`.
fn miller_j0_j1(x: f64) -> (f64, f64) {
    debug_assert!(x > 0.0);
    let start = (x + 10.0 * x.cbrt() + 30.0) as usize;
    let start = start + start % 2;
    let mut above = 0.0_f64;
    let mut cur = 1e-30_f64;
    let mut norm = 0.0_f64;
    let mut j1 = 0.0_f64;
    for k in (1..=start).rev() {
        // cur = f_k, above = f_{k+1}
        let below = 2.0 * k as f64 / x * cur - above;
        above = cur;
        cur = below;
        // cur is now f_{k-1}
        let idx = k - 1;
        if idx == 1 {
            j1 = cur;
        }
        if idx > 0 && idx % 2 == 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            above *= 1e-250;
            norm *= 1e-250;
            j1 *= 1e-250;
        }
    }
    norm += cur;
    (cur / norm, j1 / norm)
}

/// Bessel function of the first kind of order zero.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        let q = -0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            term *= q / (k as f64 * k as f64);
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        return sum;
    }
    miller_j0_j1(ax).0
}

/// Bessel function of the first kind of order one.
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    let value = if ax < SERIES_LIMIT {
        j1_series(ax).0
    } else {
        miller_j0_j1(ax).1
    };
    if x < 0.0 {
        -value
    } else {
        value
    }
}

/// Derivative `J_1'(x) = J_0(x) - J_1(x)/x`, an even function.
pub fn bessel_j1_prime(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        return j1_series(ax).1;
    }
    let (j0, j1) = miller_j0_j1(ax);
    j0 - j1 / ax
}

/// Second derivative, from Bessel's equation away from the origin.
pub fn bessel_j1_second(x: f64) -> f64 {
    let ax = x.abs();
    let value = if ax < SERIES_LIMIT {
        j1_series(ax).2
    } else {
        let (j0, j1) = miller_j0_j1(ax);
        let dj = j0 - j1 / ax;
        -dj / ax - (1.0 - 1.0 / (ax * ax)) * j1
    };
    if x < 0.0 {
        -value
    } else {
        value
    }
}

/// Bracketed root of `f` on `[lo, hi]` by bisection with a secant polish.
///
/// Returns `None` when `f(lo)` and `f(hi)` share a sign.
pub fn find_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol * mid.abs().max(1.0) || mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// The first `count` positive zeros of `J_1'`, i.e. the extrema of `J_1`.
pub fn bessel_j1_prime_zeros(count: usize) -> Vec<f64> {
    let mut zeros = Vec::with_capacity(count);
    let step = 0.05;
    let mut x = step;
    let mut fx = bessel_j1_prime(x);
    while zeros.len() < count {
        let next = x + step;
        let fnext = bessel_j1_prime(next);
        if fx.signum() != fnext.signum() {
            if let Some(r) = find_root(bessel_j1_prime, x, next, 1e-16) {
                zeros.push(r);
            }
        }
        x = next;
        fx = fnext;
    }
    zeros
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laguerre_low_orders() {
        for &x in &[-1.5, 0.0, 0.3, 2.0, 7.25] {
            assert_eq!(laguerre_assoc1(0, x), 1.0);
            assert!((laguerre_assoc1(1, x) - (2.0 - x)).abs() < 1e-14);
            let l2 = (x * x - 6.0 * x + 6.0) / 2.0;
            assert!((laguerre_assoc1(2, x) - l2).abs() < 1e-13);
        }
        assert_eq!(laguerre_assoc1(1, 2.0), 0.0);
    }

    #[test]
    fn laguerre_at_origin_is_binomial() {
        // L_n^1(0) = n + 1
        for n in 0..40 {
            assert!((laguerre_assoc1(n, 0.0) - (n as f64 + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn laguerre_high_degree_stays_finite() {
        for n in [50, 100, 200] {
            assert!(laguerre_assoc1(n, 3.7).is_finite());
        }
    }

    #[test]
    fn bessel_values_at_origin() {
        assert_eq!(bessel_j1(0.0), 0.0);
        assert!((bessel_j1_prime(0.0) - 0.5).abs() < 1e-16);
        assert_eq!(bessel_j0(0.0), 1.0);
    }

    #[test]
    fn bessel_parity() {
        for &x in &[0.5, 3.1, 12.0] {
            assert_eq!(bessel_j1(-x), -bessel_j1(x));
            assert_eq!(bessel_j1_prime(-x), bessel_j1_prime(x));
        }
    }

    #[test]
    fn series_and_recurrence_agree_at_switch() {
        let x = SERIES_LIMIT;
        let (j0, j1) = miller_j0_j1(x);
        let (s1, ds1, _) = j1_series(x);
        assert!((j1 - s1).abs() < 1e-15);
        assert!((j0 - j1 / x - ds1).abs() < 1e-15);
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        for &x in &[0.7, 1.9, 2.1, 6.3, 15.0] {
            let h = 1e-5;
            let fd = (bessel_j1_prime(x + h) - bessel_j1_prime(x - h)) / (2.0 * h);
            assert!((bessel_j1_second(x) - fd).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn first_extremum_location() {
        let zeros = bessel_j1_prime_zeros(3);
        assert!((zeros[0] - 1.841_183_781_340_659).abs() < 1e-12);
        assert!((zeros[1] - 5.331_442_773_525_033).abs() < 1e-12);
        assert!((zeros[2] - 8.536_316_366_346_286).abs() < 1e-12);
    }

    #[test]
    fn root_finder_requires_bracket() {
        assert!(find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
        let r = find_root(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }
}
