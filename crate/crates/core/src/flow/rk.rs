//! Dormand–Prince 5(4) with PI step control for systems of 2×2 complex matrices.

use crate::error::{CmcError, Result};
use crate::mat2::{self, Mat2, C64};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const ALPHA: f64 = 0.7 / 5.0;
const BETA: f64 = 0.4 / 5.0;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RkOptions {
    /// Mixed absolute/relative tolerance per step.
    pub tol: f64,
    /// Smallest admissible step length in the `log z` plane.
    pub h_min: f64,
    /// Largest admissible step length in the `log z` plane.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for RkOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            h_min: 1e-10,
            h_max: 0.5,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RkStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Sum of the local error estimates of accepted steps (max-norm, absolute).
    pub error_estimate: f64,
}

impl RkStats {
    pub fn merge(&mut self, other: &RkStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.error_estimate = self.error_estimate.max(other.error_estimate);
    }
}

/// Right-hand side `dy/ds` at the real path parameter `s`.
pub trait Rhs {
    fn eval(&self, s: f64, y: &[Mat2], dy: &mut [Mat2]);
}

impl<F: Fn(f64, &[Mat2], &mut [Mat2])> Rhs for F {
    fn eval(&self, s: f64, y: &[Mat2], dy: &mut [Mat2]) {
        self(s, y, dy)
    }
}

/// Adaptive integrator state; the step length persists across calls so a
/// path made of many short segments is integrated as one run.
pub struct Stepper {
    opts: RkOptions,
    /// Step length in `log z`.
    h_w: f64,
    err_prev: f64,
    k: [Vec<Mat2>; 7],
    stage: Vec<Mat2>,
    y_new: Vec<Mat2>,
    pub stats: RkStats,
}

impl Stepper {
    pub fn new(dim: usize, opts: RkOptions) -> Self {
        let z = || vec![Mat2::zeros(); dim];
        Self {
            opts,
            h_w: 0.02f64.min(opts.h_max),
            err_prev: 1.0,
            k: [z(), z(), z(), z(), z(), z(), z()],
            stage: z(),
            y_new: z(),
            stats: RkStats::default(),
        }
    }

    /// Integrate `y` over `s ∈ [0, 1]` of a segment whose `log z` length is
    /// `length`. `post` is applied to every accepted state (renormalization).
    /// `w_at` locates the parameter in the `log z` plane for error reports.
    pub fn run(
        &mut self,
        rhs: &impl Rhs,
        y: &mut [Mat2],
        length: f64,
        w_at: impl Fn(f64) -> C64,
        post: impl Fn(&mut [Mat2]),
    ) -> Result<()> {
        if length == 0.0 {
            return Ok(());
        }
        let mut s = 0.0;
        let tol = self.opts.tol;
        while s < 1.0 {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps
                || self.h_w < self.opts.h_min
                || !y.iter().all(|m| m.iter().all(|z| z.is_finite()))
            {
                return Err(CmcError::IntegrationStalled {
                    w: w_at(s),
                    step: self.h_w,
                });
            }
            let mut h = (self.h_w / length).min(1.0 - s);
            let last = h >= 1.0 - s - 1e-14;
            if last {
                h = 1.0 - s;
            }
            let (err_norm, err_abs) = self.attempt(rhs, y, s, h, tol);
            if err_norm <= 1.0 && err_norm.is_finite() {
                y.copy_from_slice(&self.y_new);
                post(y);
                s = if last { 1.0 } else { s + h };
                self.stats.accepted += 1;
                self.stats.error_estimate += err_abs;
                let e = err_norm.max(1e-10);
                let fac = SAFETY * e.powf(-ALPHA) * self.err_prev.powf(BETA);
                let fac = fac.clamp(MIN_FACTOR, MAX_FACTOR);
                self.err_prev = e;
                // a step truncated to hit the segment end does not shrink the controller
                let taken = h * length;
                let grown = taken * fac;
                self.h_w = if last { self.h_w.max(grown) } else { grown };
                self.h_w = self.h_w.min(self.opts.h_max);
            } else {
                self.stats.rejected += 1;
                let e = if err_norm.is_finite() { err_norm } else { 1e10 };
                let fac = (SAFETY * e.powf(-1.0 / 5.0)).clamp(MIN_FACTOR, 1.0);
                self.h_w = h * length * fac;
                if self.h_w < self.opts.h_min {
                    return Err(CmcError::IntegrationStalled {
                        w: w_at(s),
                        step: self.h_w,
                    });
                }
            }
        }
        Ok(())
    }

    fn attempt(&mut self, rhs: &impl Rhs, y: &[Mat2], s: f64, h: f64, tol: f64) -> (f64, f64) {
        let n = y.len();
        let sc = |x: f64| C64::new(x, 0.0);
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let stage = &mut self.stage;

        rhs.eval(s, y, k1);
        for i in 0..n {
            stage[i] = y[i] + (k1[i] * sc(A21 * h));
        }
        rhs.eval(s + C2 * h, stage, k2);
        for i in 0..n {
            stage[i] = y[i] + (k1[i] * sc(A31 * h) + k2[i] * sc(A32 * h));
        }
        rhs.eval(s + C3 * h, stage, k3);
        for i in 0..n {
            stage[i] = y[i] + (k1[i] * sc(A41 * h) + k2[i] * sc(A42 * h) + k3[i] * sc(A43 * h));
        }
        rhs.eval(s + C4 * h, stage, k4);
        for i in 0..n {
            stage[i] = y[i]
                + (k1[i] * sc(A51 * h)
                    + k2[i] * sc(A52 * h)
                    + k3[i] * sc(A53 * h)
                    + k4[i] * sc(A54 * h));
        }
        rhs.eval(s + C5 * h, stage, k5);
        for i in 0..n {
            stage[i] = y[i]
                + (k1[i] * sc(A61 * h)
                    + k2[i] * sc(A62 * h)
                    + k3[i] * sc(A63 * h)
                    + k4[i] * sc(A64 * h)
                    + k5[i] * sc(A65 * h));
        }
        rhs.eval(s + h, stage, k6);
        for i in 0..n {
            self.y_new[i] = y[i]
                + (k1[i] * sc(B1 * h)
                    + k3[i] * sc(B3 * h)
                    + k4[i] * sc(B4 * h)
                    + k5[i] * sc(B5 * h)
                    + k6[i] * sc(B6 * h));
        }
        rhs.eval(s + h, &self.y_new, k7);

        let mut err_norm = 0.0f64;
        let mut err_abs = 0.0f64;
        for i in 0..n {
            let e = k1[i] * sc(E1 * h)
                + k3[i] * sc(E3 * h)
                + k4[i] * sc(E4 * h)
                + k5[i] * sc(E5 * h)
                + k6[i] * sc(E6 * h)
                + k7[i] * sc(E7 * h);
            for r in 0..4 {
                let ea = e[r].norm();
                let scale = tol * (1.0 + y[i][r].norm().max(self.y_new[i][r].norm()));
                err_norm = err_norm.max(ea / scale);
                err_abs = err_abs.max(ea);
            }
        }
        (err_norm, err_abs)
    }
}

/// Divide by `√det` to pull the state back onto `SL(2, C)`.
pub fn renormalize_det(m: &mut Mat2) {
    let d = mat2::det(m);
    if d.norm() > 0.0 {
        *m /= d.sqrt();
    }
}
