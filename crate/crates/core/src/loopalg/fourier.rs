//! FFT plumbing between samples on a (possibly rotated) circle grid and
//! Laurent coefficients.
//!
//! Samples live at `λ_j = exp(2πi (j + δ) / L)`. The full spectrum stores
//! modes `k ∈ [-L/2, L/2]`; the Nyquist bin is split evenly between `±L/2`
//! so that the coefficient sequence reproduces the samples exactly.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::LoopGrid;
use crate::mat2::C64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn inverse_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

#[inline]
fn shift_phase(k: i64, grid: &LoopGrid) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * k as f64 * grid.offset / grid.len as f64)
}

/// Full spectrum, indexed `k + L/2` for `k ∈ [-L/2, L/2]` (length `L + 1`).
pub fn spectrum(samples: &[C64], grid: &LoopGrid) -> Vec<C64> {
    let len = grid.len;
    assert_eq!(samples.len(), len);
    let mut buf = samples.to_vec();
    forward_plan(len).process(&mut buf);
    let half = len / 2;
    let scale = 1.0 / len as f64;
    let mut out = vec![C64::new(0.0, 0.0); len + 1];
    for (m, x) in buf.iter().enumerate() {
        let x = x * scale;
        if m < half {
            let k = m as i64;
            out[(k + half as i64) as usize] = x * shift_phase(-k, grid);
        } else if m > half {
            let k = m as i64 - len as i64;
            out[(k + half as i64) as usize] = x * shift_phase(-k, grid);
        } else {
            let k = half as i64;
            out[len] = 0.5 * x * shift_phase(-k, grid);
            out[0] = 0.5 * x * shift_phase(k, grid);
        }
    }
    out
}

/// Samples on `grid` of `Σ_k c_k λ^k` with `coeffs[k + degree]`, `k ∈ [-degree, degree]`.
/// Modes are folded modulo `L`, which is exact on the grid.
pub fn synthesize(coeffs: &[C64], degree: usize, grid: &LoopGrid) -> Vec<C64> {
    let len = grid.len;
    let mut buf = vec![C64::new(0.0, 0.0); len];
    for (idx, &ck) in coeffs.iter().enumerate() {
        if ck == C64::new(0.0, 0.0) {
            continue;
        }
        let k = idx as i64 - degree as i64;
        let m = k.rem_euclid(len as i64) as usize;
        buf[m] += ck * shift_phase(k, grid);
    }
    inverse_plan(len).process(&mut buf);
    buf
}

/// Truncate a full spectrum (from [`spectrum`]) to `k ∈ [-degree, degree]`.
pub fn truncate(full: &[C64], len: usize, degree: usize) -> Vec<C64> {
    let half = len / 2;
    (0..=2 * degree).map(|i| full[i + half - degree]).collect()
}

/// Relative energy of the modes discarded by truncation to `degree`.
pub fn tail_energy(full: &[C64], len: usize, degree: usize) -> f64 {
    let half = len as i64 / 2;
    let mut total = 0.0;
    let mut tail = 0.0;
    for (i, z) in full.iter().enumerate() {
        let k = i as i64 - half;
        let e = z.norm_sqr();
        total += e;
        if k.unsigned_abs() as usize > degree {
            tail += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_of_monomial_on_rotated_grid() {
        let grid = LoopGrid::new(16, 8).unwrap().shifted();
        let samples: Vec<C64> = (0..16).map(|j| grid.lambda(j).powi(3)).collect();
        let full = spectrum(&samples, &grid);
        for (i, z) in full.iter().enumerate() {
            let k = i as i64 - 8;
            let expect = if k == 3 { 1.0 } else { 0.0 };
            assert!((z - expect).norm() < 1e-14, "k={k} z={z}");
        }
    }

    #[test]
    fn nyquist_split_round_trips() {
        let grid = LoopGrid::new(8, 4).unwrap().shifted();
        let samples: Vec<C64> = (0..8)
            .map(|j| C64::new((j as f64).sin(), j as f64))
            .collect();
        let full = spectrum(&samples, &grid);
        let back = synthesize(&full, 4, &grid);
        for (a, b) in samples.iter().zip(&back) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
