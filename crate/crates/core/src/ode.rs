//! Dormand–Prince 5(4) integrator with embedded error control.

use std::ops::{Add, AddAssign, Mul};

use crate::error::{Error, Result};
use crate::fock::C64;

pub(crate) trait Component: Copy + Default + Add<Output = Self> + AddAssign + Mul<f64, Output = Self> {
    fn magnitude(&self) -> f64;
}

impl Component for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Component for C64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Reusable integrator state. `step` carries the last accepted step size
/// across calls so a sequence of short intervals stays cheap.
pub(crate) struct Integrator<T: Component> {
    tol: Tolerances,
    k: [Vec<T>; 7],
    trial: Vec<T>,
    pub step: f64,
}

impl<T: Component> Integrator<T> {
    pub(crate) fn new(n: usize, tol: Tolerances) -> Self {
        Self {
            tol,
            k: std::array::from_fn(|_| vec![T::default(); n]),
            trial: vec![T::default(); n],
            step: 0.0,
        }
    }

    /// Advances `y` from `t0` to `t1` under `dy/dt = f(t, y)`.
    // Stage sums run over several parallel arrays at once, so indexing reads best.
    #[allow(clippy::needless_range_loop)]
    pub(crate) fn advance<F>(&mut self, f: &mut F, y: &mut Vec<T>, t0: f64, t1: f64) -> Result<()>
    where
        F: FnMut(f64, &[T], &mut [T]),
    {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        let n = y.len();
        let mut t = t0;
        let mut h = if self.step > 0.0 { self.step } else { span.min(1e-2) };
        f(t, y, &mut self.k[0]);
        loop {
            let remaining = t1 - t;
            if remaining <= 1e-14 * t1.abs().max(1.0) {
                break;
            }
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        if *a != 0.0 {
                            acc += self.k[j][i] * (a * h_try);
                        }
                    }
                    self.trial[i] = acc;
                }
                let (_, rest) = self.k.split_at_mut(s);
                f(t + C[s] * h_try, &self.trial, &mut rest[0]);
            }
            // trial holds the 5th-order solution (stage 7 abscissa is y_new)
            let mut err_sq = 0.0;
            for i in 0..n {
                let mut e = T::default();
                for (j, w) in E.iter().enumerate() {
                    if *w != 0.0 {
                        e += self.k[j][i] * (w * h_try);
                    }
                }
                let scale = self.tol.atol + self.tol.rtol * y[i].magnitude().max(self.trial[i].magnitude());
                let r = e.magnitude() / scale;
                err_sq += r * r;
            }
            let err = (err_sq / n.max(1) as f64).sqrt();
            if err <= 1.0 {
                t = if last { t1 } else { t + h_try };
                std::mem::swap(y, &mut self.trial);
                // first-same-as-last
                let (first, rest) = self.k.split_at_mut(1);
                std::mem::swap(&mut first[0], &mut rest[5]);
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last {
                    h = h_try * factor;
                } else {
                    h = h.max(h_try * factor);
                }
                self.step = h;
            } else {
                h = h_try * (0.9 * err.powf(-0.2)).max(0.1);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t });
                }
            }
        }
        Ok(())
    }
}
