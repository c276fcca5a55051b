//! Explicit one-step integrators for small autonomous systems `y' = F(y)`.
//!
//! Both methods produce, for every accepted step, the four vectors needed by
//! the nested dense-output form
//!
//! ```text
//! y(t0 + θh) = y0 + θ (c0 + (1−θ) (c1 + θ (c2 + (1−θ) c3)))
//! ```
//!
//! which is the quartic Dormand–Prince interpolant for the 5(4) pair and
//! reduces to cubic Hermite interpolation (`c3 = 0`) for classical RK4.

use crate::error::{Error, Result};
use crate::integrate::{IntegratorConfig, Method};

pub(crate) type Vector<const N: usize> = [f64; N];

/// One accepted step with its interpolation data.
#[derive(Debug, Clone)]
pub(crate) struct Segment<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: Vector<N>,
    pub y1: Vector<N>,
    pub coeffs: [Vector<N>; 4],
}

impl<const N: usize> Segment<N> {
    pub fn eval(&self, t: f64) -> Vector<N> {
        if t == self.t0 {
            return self.y0;
        }
        if t == self.t1 {
            return self.y1;
        }
        let theta = (t - self.t0) / (self.t1 - self.t0);
        interpolate(&self.y0, &self.coeffs, theta)
    }
}

#[inline]
pub(crate) fn interpolate<const N: usize>(y0: &Vector<N>, c: &[Vector<N>; 4], theta: f64) -> Vector<N> {
    let theta1 = 1.0 - theta;
    std::array::from_fn(|i| {
        y0[i] + theta * (c[0][i] + theta1 * (c[1][i] + theta * (c[2][i] + theta1 * c[3][i])))
    })
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Shampine's dense output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const PI_ALPHA: f64 = 0.17;
const PI_BETA: f64 = 0.04;

#[inline]
fn axpy<const N: usize>(y: &Vector<N>, terms: &[(f64, &Vector<N>)]) -> Vector<N> {
    std::array::from_fn(|i| y[i] + terms.iter().map(|(a, k)| a * k[i]).sum::<f64>())
}

#[derive(Debug, Clone, Copy)]
enum Control {
    Fixed { step: f64 },
    Adaptive { rel_tol: f64, abs_tol: f64 },
}

/// Integration state for an autonomous system. The step sequence depends only
/// on the initial state and the configuration, never on how far the caller
/// intends to integrate, unless a step is explicitly clamped to a stop time.
pub(crate) struct Stepper<const N: usize, F> {
    rhs: F,
    control: Control,
    t: f64,
    y: Vector<N>,
    dy: Vector<N>,
    h: f64,
    err_prev: f64,
    // Fixed-step grid anchor: t = base + count * step keeps the grid free of drift.
    base: f64,
    count: u64,
    accepted: usize,
    max_steps: usize,
    min_step: f64,
}

impl<const N: usize, F> Stepper<N, F>
where
    F: Fn(&Vector<N>) -> Vector<N>,
{
    pub fn new(rhs: F, y0: Vector<N>, cfg: &IntegratorConfig, min_step: f64) -> Self {
        let dy = rhs(&y0);
        let control = match cfg.method {
            Method::FixedRk4 => Control::Fixed { step: cfg.step },
            Method::AdaptiveDopri5 => Control::Adaptive {
                rel_tol: cfg.rel_tol,
                abs_tol: cfg.abs_tol,
            },
        };
        let mut stepper = Self {
            rhs,
            control,
            t: 0.0,
            y: y0,
            dy,
            h: 0.0,
            err_prev: 1e-4,
            base: 0.0,
            count: 0,
            accepted: 0,
            max_steps: cfg.max_steps,
            min_step,
        };
        stepper.h = match control {
            Control::Fixed { step } => step,
            Control::Adaptive { rel_tol, abs_tol } => stepper.initial_step(rel_tol, abs_tol),
        };
        stepper
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &Vector<N> {
        &self.y
    }

    /// Replaces the current state (used by tangent renormalization).
    pub fn reset_state(&mut self, y: Vector<N>) {
        self.dy = (self.rhs)(&y);
        self.y = y;
    }

    fn initial_step(&self, rel_tol: f64, abs_tol: f64) -> f64 {
        let scale: Vector<N> = std::array::from_fn(|i| abs_tol + rel_tol * self.y[i].abs());
        let d0 = rms_scaled(&self.y, &scale);
        let d1 = rms_scaled(&self.dy, &scale);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1 = axpy(&self.y, &[(h0, &self.dy)]);
        let f1 = (self.rhs)(&y1);
        let diff: Vector<N> = std::array::from_fn(|i| f1[i] - self.dy[i]);
        let d2 = rms_scaled(&diff, &scale) / h0;
        let dmax = d1.max(d2);
        let h1 = if dmax <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dmax).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }

    /// Takes one accepted step. With `stop = Some(ts)` the step is shortened
    /// so that it ends exactly at `ts`.
    pub fn step(&mut self, stop: Option<f64>) -> Result<Segment<N>> {
        if self.accepted >= self.max_steps {
            return Err(Error::MaxStepsExceeded {
                time: self.t,
                max_steps: self.max_steps,
            });
        }
        let segment = match self.control {
            Control::Fixed { step } => self.step_rk4(step, stop)?,
            Control::Adaptive { rel_tol, abs_tol } => self.step_dopri(rel_tol, abs_tol, stop)?,
        };
        self.accepted += 1;
        Ok(segment)
    }

    fn step_rk4(&mut self, step: f64, stop: Option<f64>) -> Result<Segment<N>> {
        let mut t1 = self.base + (self.count + 1) as f64 * step;
        let mut clamped = false;
        if let Some(ts) = stop {
            if t1 >= ts - 1e-9 * step {
                t1 = ts;
                clamped = true;
            }
        }
        let h = t1 - self.t;
        let y = &self.y;
        let k1 = self.dy;
        let k2 = (self.rhs)(&axpy(y, &[(0.5 * h, &k1)]));
        let k3 = (self.rhs)(&axpy(y, &[(0.5 * h, &k2)]));
        let k4 = (self.rhs)(&axpy(y, &[(h, &k3)]));
        let y1: Vector<N> =
            std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        if !y1.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "rk4 step" });
        }
        let f1 = (self.rhs)(&y1);
        let coeffs = hermite_coeffs(y, &y1, &k1, &f1, h);
        let segment = Segment {
            t0: self.t,
            t1,
            y0: self.y,
            y1,
            coeffs,
        };
        if clamped {
            self.base = t1;
            self.count = 0;
        } else {
            self.count += 1;
        }
        self.t = t1;
        self.y = y1;
        self.dy = f1;
        Ok(segment)
    }

    fn step_dopri(&mut self, rel_tol: f64, abs_tol: f64, stop: Option<f64>) -> Result<Segment<N>> {
        let mut rejected = false;
        loop {
            let mut h = self.h;
            let mut t1 = self.t + h;
            let mut clamped = false;
            if let Some(ts) = stop {
                if t1 >= ts {
                    h = ts - self.t;
                    t1 = ts;
                    clamped = true;
                }
            }
            if h < self.min_step && !clamped {
                return Err(Error::StepUnderflow {
                    time: self.t,
                    step: h,
                    min_step: self.min_step,
                });
            }

            let y = &self.y;
            let k1 = self.dy;
            let k2 = (self.rhs)(&axpy(y, &[(h * A21, &k1)]));
            let k3 = (self.rhs)(&axpy(y, &[(h * A31, &k1), (h * A32, &k2)]));
            let k4 = (self.rhs)(&axpy(y, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]));
            let k5 = (self.rhs)(&axpy(
                y,
                &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)],
            ));
            let k6 = (self.rhs)(&axpy(
                y,
                &[(h * A61, &k1), (h * A62, &k2), (h * A63, &k3), (h * A64, &k4), (h * A65, &k5)],
            ));
            let y1 = axpy(
                y,
                &[(h * A71, &k1), (h * A73, &k3), (h * A74, &k4), (h * A75, &k5), (h * A76, &k6)],
            );
            let k7 = (self.rhs)(&y1);

            let mut acc = 0.0;
            for i in 0..N {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = abs_tol + rel_tol * y[i].abs().max(y1[i].abs());
                acc += (e / sc) * (e / sc);
            }
            let mut err = (acc / N as f64).sqrt();
            if !err.is_finite() || !y1.iter().all(|v| v.is_finite()) {
                err = f64::INFINITY;
            }

            if err <= 1.0 {
                let mut factor = (SAFETY * err.powf(-PI_ALPHA) * self.err_prev.powf(PI_BETA))
                    .clamp(MIN_FACTOR, MAX_FACTOR);
                if rejected {
                    factor = factor.min(1.0);
                }
                self.err_prev = err.max(1e-4);
                // a step clamped to a stop keeps the unclamped proposal
                if !clamped {
                    self.h = h * factor;
                }

                let coeffs = dopri_coeffs(y, &y1, [&k1, &k3, &k4, &k5, &k6, &k7], h);
                let segment = Segment {
                    t0: self.t,
                    t1,
                    y0: self.y,
                    y1,
                    coeffs,
                };
                self.t = t1;
                self.y = y1;
                self.dy = k7;
                return Ok(segment);
            }

            rejected = true;
            let factor = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).max(MIN_FACTOR)
            } else {
                MIN_FACTOR
            };
            self.h = h * factor;
        }
    }
}

fn rms_scaled<const N: usize>(v: &Vector<N>, scale: &Vector<N>) -> f64 {
    let sum: f64 = v.iter().zip(scale).map(|(x, s)| (x / s) * (x / s)).sum();
    (sum / N as f64).sqrt()
}

fn hermite_coeffs<const N: usize>(
    y0: &Vector<N>,
    y1: &Vector<N>,
    f0: &Vector<N>,
    f1: &Vector<N>,
    h: f64,
) -> [Vector<N>; 4] {
    let c0: Vector<N> = std::array::from_fn(|i| y1[i] - y0[i]);
    let c1: Vector<N> = std::array::from_fn(|i| h * f0[i] - c0[i]);
    let c2: Vector<N> = std::array::from_fn(|i| c0[i] - h * f1[i] - c1[i]);
    [c0, c1, c2, [0.0; N]]
}

fn dopri_coeffs<const N: usize>(
    y0: &Vector<N>,
    y1: &Vector<N>,
    k: [&Vector<N>; 6],
    h: f64,
) -> [Vector<N>; 4] {
    let [k1, k3, k4, k5, k6, k7] = k;
    let mut c = hermite_coeffs(y0, y1, k1, k7, h);
    c[3] = std::array::from_fn(|i| {
        h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
    });
    c
}
