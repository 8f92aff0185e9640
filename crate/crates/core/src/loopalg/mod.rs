//! Scalar and 2×2 matrix loops on the unit circle in the loop parameter λ.
//!
//! A loop is held twice: as samples on an equispaced grid of `L` points
//! (products and pointwise algebra happen here) and as Laurent coefficients
//! `c_k`, `k ∈ [-N, N]` (evaluation off the grid and factorizations happen
//! here). `L` is a power of two and `N ≤ L/2`.

pub mod fourier;
pub mod spectral;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{CmcError, Result};
use crate::mat2::{self, Mat2, C64};

pub use spectral::{
    log_split, matrix_spectral_factor, scalar_spectral_factor, FactorOptions, SpectralFactor,
};

/// Round-trip tolerance between samples and coefficients.
pub const ROUND_TRIP_TOL: f64 = 1e-12;

/// Sample grid `λ_j = exp(2πi (j + offset) / len)` with truncation degree `degree`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopGrid {
    pub len: usize,
    pub degree: usize,
    /// Rotation of the grid in units of one grid step (0 or 1/2 in practice).
    #[serde(default)]
    pub offset: f64,
}

impl LoopGrid {
    pub fn new(len: usize, degree: usize) -> Result<Self> {
        if len < 2 || !len.is_power_of_two() {
            return Err(CmcError::InvalidConfig(format!(
                "loop grid length {len} is not a power of two"
            )));
        }
        if degree > len / 2 {
            return Err(CmcError::InvalidConfig(format!(
                "truncation degree {degree} exceeds half the grid length {len}"
            )));
        }
        Ok(Self {
            len,
            degree,
            offset: 0.0,
        })
    }

    /// The same grid rotated by half a step.
    pub fn shifted(self) -> Self {
        Self {
            offset: 0.5,
            ..self
        }
    }

    /// Twice the samples and twice the degree.
    pub fn refined(self) -> Self {
        Self {
            len: 2 * self.len,
            degree: 2 * self.degree,
            offset: self.offset,
        }
    }

    #[inline]
    pub fn theta(&self, j: usize) -> f64 {
        2.0 * PI * (j as f64 + self.offset) / self.len as f64
    }

    #[inline]
    pub fn lambda(&self, j: usize) -> C64 {
        C64::from_polar(1.0, self.theta(j))
    }

    pub fn lambdas(&self) -> Vec<C64> {
        (0..self.len).map(|j| self.lambda(j)).collect()
    }

    fn check_same(&self, other: &LoopGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(CmcError::GridMismatch {
                left: format!("{self:?}"),
                right: format!("{other:?}"),
            })
        }
    }
}

fn eval_laurent(coeffs: &[C64], degree: usize, lambda: C64) -> C64 {
    // Horner on the nonnegative and negative halves separately.
    let mut pos = C64::new(0.0, 0.0);
    for k in (0..=degree).rev() {
        pos = pos * lambda + coeffs[k + degree];
    }
    if degree == 0 {
        return pos;
    }
    let inv = lambda.inv();
    let mut neg = C64::new(0.0, 0.0);
    for k in (1..=degree).rev() {
        neg = (neg + coeffs[degree - k]) * inv;
    }
    pos + neg
}

/// Complex-valued loop.
#[derive(Clone, Debug)]
pub struct ScalarLoop {
    grid: LoopGrid,
    samples: Vec<C64>,
    coeffs: Vec<C64>,
    truncation: f64,
}

impl ScalarLoop {
    pub fn from_samples(grid: LoopGrid, samples: Vec<C64>) -> Self {
        assert_eq!(samples.len(), grid.len, "sample count must match the grid");
        let full = fourier::spectrum(&samples, &grid);
        let coeffs = fourier::truncate(&full, grid.len, grid.degree);
        let truncation = fourier::tail_energy(&full, grid.len, grid.degree);
        Self {
            grid,
            samples,
            coeffs,
            truncation,
        }
    }

    /// Coefficients `coeffs[k + N]` for `k ∈ [-N, N]`.
    pub fn from_coeffs(grid: LoopGrid, coeffs: Vec<C64>) -> Self {
        assert_eq!(coeffs.len(), 2 * grid.degree + 1);
        let samples = fourier::synthesize(&coeffs, grid.degree, &grid);
        Self {
            grid,
            samples,
            coeffs,
            truncation: 0.0,
        }
    }

    pub fn from_fn(grid: LoopGrid, f: impl Fn(C64) -> C64) -> Self {
        Self::from_samples(grid, grid.lambdas().into_iter().map(f).collect())
    }

    pub fn constant(grid: LoopGrid, value: C64) -> Self {
        let mut coeffs = vec![C64::new(0.0, 0.0); 2 * grid.degree + 1];
        coeffs[grid.degree] = value;
        Self {
            grid,
            samples: vec![value; grid.len],
            coeffs,
            truncation: 0.0,
        }
    }

    pub fn grid(&self) -> &LoopGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: i64) -> C64 {
        let n = self.grid.degree as i64;
        if k.abs() > n {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + n) as usize]
        }
    }

    /// Relative energy in modes `|k| > N` of the sampled function.
    pub fn truncation_residual(&self) -> f64 {
        self.truncation
    }

    pub fn eval(&self, lambda: C64) -> C64 {
        eval_laurent(&self.coeffs, self.grid.degree, lambda)
    }

    /// Fraction of coefficient energy in negative modes.
    pub fn negative_energy_fraction(&self) -> f64 {
        let n = self.grid.degree;
        let total: f64 = self.coeffs.iter().map(|z| z.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        self.coeffs[..n].iter().map(|z| z.norm_sqr()).sum::<f64>() / total
    }

    /// Trigonometric interpolation onto another grid using every resolved mode.
    pub fn resample(&self, grid: LoopGrid) -> ScalarLoop {
        let full = fourier::spectrum(&self.samples, &self.grid);
        let samples = fourier::synthesize(&full, self.grid.len / 2, &grid);
        ScalarLoop::from_samples(grid, samples)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> ScalarLoop {
        ScalarLoop::from_samples(self.grid, self.samples.iter().map(|&z| f(z)).collect())
    }

    pub fn mul(&self, other: &ScalarLoop) -> Result<ScalarLoop> {
        self.grid.check_same(&other.grid)?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a * b)
            .collect();
        Ok(ScalarLoop::from_samples(self.grid, samples))
    }

    /// `p†(λ) = conj(p(1/conj λ))`.
    pub fn star(&self) -> ScalarLoop {
        let n = self.grid.degree;
        let coeffs = (0..=2 * n).map(|i| self.coeffs[2 * n - i].conj()).collect();
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|z| z.conj()).collect(),
            coeffs,
            truncation: self.truncation,
        }
    }

    /// `[k, re, im]` triples for every coefficient above `1e-300` in magnitude.
    pub fn to_triples(&self) -> Vec<(i64, f64, f64)> {
        let n = self.grid.degree as i64;
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 1e-300)
            .map(|(i, z)| (i as i64 - n, z.re, z.im))
            .collect()
    }
}

/// 2×2-matrix-valued loop with entries `[[a, b], [c, d]]` sharing one grid.
#[derive(Clone, Debug)]
pub struct MatrixLoop {
    grid: LoopGrid,
    samples: Vec<Mat2>,
    coeffs: Vec<Mat2>,
    truncation: f64,
}

fn split_channels(samples: &[Mat2]) -> [Vec<C64>; 4] {
    let mut out: [Vec<C64>; 4] = Default::default();
    for m in samples {
        out[0].push(m[(0, 0)]);
        out[1].push(m[(0, 1)]);
        out[2].push(m[(1, 0)]);
        out[3].push(m[(1, 1)]);
    }
    out
}

fn join_channels(ch: &[Vec<C64>; 4]) -> Vec<Mat2> {
    (0..ch[0].len())
        .map(|i| mat2::mat(ch[0][i], ch[1][i], ch[2][i], ch[3][i]))
        .collect()
}

impl MatrixLoop {
    pub fn from_samples(grid: LoopGrid, samples: Vec<Mat2>) -> Self {
        assert_eq!(samples.len(), grid.len, "sample count must match the grid");
        let ch = split_channels(&samples);
        let mut coeff_ch: [Vec<C64>; 4] = Default::default();
        let mut tail = 0.0f64;
        let mut total = 0.0f64;
        for (slot, s) in coeff_ch.iter_mut().zip(&ch) {
            let full = fourier::spectrum(s, &grid);
            let e: f64 = full.iter().map(|z| z.norm_sqr()).sum();
            tail += fourier::tail_energy(&full, grid.len, grid.degree) * e;
            total += e;
            *slot = fourier::truncate(&full, grid.len, grid.degree);
        }
        let truncation = if total > 0.0 { tail / total } else { 0.0 };
        Self {
            grid,
            samples,
            coeffs: join_channels(&coeff_ch),
            truncation,
        }
    }

    pub fn from_coeffs(grid: LoopGrid, coeffs: Vec<Mat2>) -> Self {
        assert_eq!(coeffs.len(), 2 * grid.degree + 1);
        let ch = split_channels(&coeffs);
        let mut sample_ch: [Vec<C64>; 4] = Default::default();
        for (slot, c) in sample_ch.iter_mut().zip(&ch) {
            *slot = fourier::synthesize(c, grid.degree, &grid);
        }
        Self {
            grid,
            samples: join_channels(&sample_ch),
            coeffs,
            truncation: 0.0,
        }
    }

    pub fn from_fn(grid: LoopGrid, f: impl Fn(C64) -> Mat2) -> Self {
        Self::from_samples(grid, grid.lambdas().into_iter().map(f).collect())
    }

    pub fn constant(grid: LoopGrid, value: Mat2) -> Self {
        let mut coeffs = vec![Mat2::zeros(); 2 * grid.degree + 1];
        coeffs[grid.degree] = value;
        Self {
            grid,
            samples: vec![value; grid.len],
            coeffs,
            truncation: 0.0,
        }
    }

    pub fn identity(grid: LoopGrid) -> Self {
        Self::constant(grid, mat2::identity())
    }

    pub fn from_entries(entries: [&ScalarLoop; 4]) -> Result<Self> {
        let grid = *entries[0].grid();
        for e in &entries[1..] {
            grid.check_same(e.grid())?;
        }
        let samples = (0..grid.len)
            .map(|j| {
                mat2::mat(
                    entries[0].samples[j],
                    entries[1].samples[j],
                    entries[2].samples[j],
                    entries[3].samples[j],
                )
            })
            .collect();
        Ok(Self::from_samples(grid, samples))
    }

    pub fn entry(&self, row: usize, col: usize) -> ScalarLoop {
        ScalarLoop {
            grid: self.grid,
            samples: self.samples.iter().map(|m| m[(row, col)]).collect(),
            coeffs: self.coeffs.iter().map(|m| m[(row, col)]).collect(),
            truncation: self.truncation,
        }
    }

    pub fn grid(&self) -> &LoopGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Mat2] {
        &self.samples
    }

    pub fn coeffs(&self) -> &[Mat2] {
        &self.coeffs
    }

    pub fn coeff(&self, k: i64) -> Mat2 {
        let n = self.grid.degree as i64;
        if k.abs() > n {
            Mat2::zeros()
        } else {
            self.coeffs[(k + n) as usize]
        }
    }

    pub fn truncation_residual(&self) -> f64 {
        self.truncation
    }

    /// `Σ_k C_k λ^k` without domain checks.
    pub fn eval(&self, lambda: C64) -> Mat2 {
        let n = self.grid.degree;
        let mut pos = Mat2::zeros();
        for k in (0..=n).rev() {
            pos = pos * lambda + self.coeffs[k + n];
        }
        if n == 0 {
            return pos;
        }
        let inv = lambda.inv();
        let mut neg = Mat2::zeros();
        for k in (1..=n).rev() {
            neg = (neg + self.coeffs[n - k]) * inv;
        }
        pos + neg
    }

    /// Largest coefficient norm among negative modes.
    pub fn negative_mode_magnitude(&self) -> f64 {
        self.coeffs[..self.grid.degree]
            .iter()
            .map(mat2::max_abs)
            .fold(0.0, f64::max)
    }

    /// Fraction of coefficient energy in negative modes.
    pub fn negative_energy_fraction(&self) -> f64 {
        let energy = |m: &Mat2| m.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let total: f64 = self.coeffs.iter().map(energy).sum();
        if total == 0.0 {
            return 0.0;
        }
        self.coeffs[..self.grid.degree]
            .iter()
            .map(energy)
            .sum::<f64>()
            / total
    }

    /// Maximum of `|det l(λ_j) − 1|` over the samples.
    pub fn det_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|m| (mat2::det(m) - 1.0).norm())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(&Mat2) -> Mat2) -> MatrixLoop {
        MatrixLoop::from_samples(self.grid, self.samples.iter().map(f).collect())
    }

    /// Pointwise inverse on the samples.
    pub fn inverse(&self) -> Result<MatrixLoop> {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(j, m)| {
                mat2::inverse(m)
                    .ok_or_else(|| CmcError::Precondition(format!("loop singular at sample {j}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MatrixLoop::from_samples(self.grid, samples))
    }

    /// Trigonometric interpolation onto another grid using every resolved mode.
    pub fn resample(&self, grid: LoopGrid) -> MatrixLoop {
        let ch = split_channels(&self.samples);
        let mut out: [Vec<C64>; 4] = Default::default();
        for (slot, s) in out.iter_mut().zip(&ch) {
            let full = fourier::spectrum(s, &self.grid);
            *slot = fourier::synthesize(&full, self.grid.len / 2, &grid);
        }
        MatrixLoop::from_samples(grid, join_channels(&out))
    }

    /// Fourier derivative `d/dθ` evaluated at `λ = exp(iθ)`, using every resolved mode.
    pub fn theta_derivative_at(&self, theta: f64) -> Mat2 {
        let ch = split_channels(&self.samples);
        let half = self.grid.len as i64 / 2;
        let mut out = [C64::new(0.0, 0.0); 4];
        for (slot, s) in out.iter_mut().zip(&ch) {
            let full = fourier::spectrum(s, &self.grid);
            *slot = full
                .iter()
                .enumerate()
                .map(|(i, ck)| {
                    let k = i as i64 - half;
                    ck * C64::new(0.0, k as f64) * C64::from_polar(1.0, k as f64 * theta)
                })
                .sum();
        }
        mat2::mat(out[0], out[1], out[2], out[3])
    }

    /// Value at `λ = exp(iθ)` using every resolved mode.
    pub fn value_at_theta(&self, theta: f64) -> Mat2 {
        let ch = split_channels(&self.samples);
        let half = self.grid.len as i64 / 2;
        let mut out = [C64::new(0.0, 0.0); 4];
        for (slot, s) in out.iter_mut().zip(&ch) {
            let full = fourier::spectrum(s, &self.grid);
            *slot = full
                .iter()
                .enumerate()
                .map(|(i, ck)| ck * C64::from_polar(1.0, (i as i64 - half) as f64 * theta))
                .sum();
        }
        mat2::mat(out[0], out[1], out[2], out[3])
    }

    /// Serialized as `[[k, re, im], ...]` per entry `a, b, c, d`.
    pub fn to_triples(&self) -> [Vec<(i64, f64, f64)>; 4] {
        [
            self.entry(0, 0).to_triples(),
            self.entry(0, 1).to_triples(),
            self.entry(1, 0).to_triples(),
            self.entry(1, 1).to_triples(),
        ]
    }
}

/// Evaluate `Σ_k C_k λ^k` for `|λ| ∈ [inner_radius, 1]`, or at `λ = 0` when
/// the loop has no negative modes.
pub fn loop_eval(l: &MatrixLoop, lambda: C64, inner_radius: f64) -> Result<Mat2> {
    let r = lambda.norm();
    if r == 0.0 {
        let scale = l
            .coeffs
            .iter()
            .map(mat2::max_abs)
            .fold(0.0, f64::max)
            .max(1.0);
        let neg = l.negative_mode_magnitude();
        if neg > ROUND_TRIP_TOL * scale {
            return Err(CmcError::NotHolomorphicAtOrigin { magnitude: neg });
        }
        return Ok(l.coeff(0));
    }
    if r > 1.0 + 1e-12 || r < inner_radius {
        return Err(CmcError::OutsideEvaluationAnnulus {
            modulus: r,
            inner: inner_radius,
        });
    }
    Ok(l.eval(lambda))
}

/// Pointwise product on samples, coefficients refreshed.
pub fn loop_mul(x: &MatrixLoop, y: &MatrixLoop) -> Result<MatrixLoop> {
    x.grid.check_same(&y.grid)?;
    let samples = x
        .samples
        .iter()
        .zip(&y.samples)
        .map(|(a, b)| a * b)
        .collect();
    Ok(MatrixLoop::from_samples(x.grid, samples))
}

/// `l*(λ) = conj-transpose(l(1/conj λ))`; on the circle the pointwise adjoint.
pub fn loop_star(l: &MatrixLoop) -> MatrixLoop {
    let n = l.grid.degree;
    MatrixLoop {
        grid: l.grid,
        samples: l.samples.iter().map(mat2::dagger).collect(),
        coeffs: (0..=2 * n)
            .map(|i| mat2::dagger(&l.coeffs[2 * n - i]))
            .collect(),
        truncation: l.truncation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat2::{c, real_mat};
    use proptest::prelude::*;

    fn grid() -> LoopGrid {
        LoopGrid::new(32, 16).unwrap()
    }

    fn random_loop(seed: &[f64], grid: LoopGrid, width: i64) -> MatrixLoop {
        let mut coeffs = vec![Mat2::zeros(); 2 * grid.degree + 1];
        let mut it = seed.iter().cycle();
        for k in -width..=width {
            let mut m = Mat2::zeros();
            for e in m.iter_mut() {
                *e = c(*it.next().unwrap(), *it.next().unwrap());
            }
            coeffs[(k + grid.degree as i64) as usize] = m;
        }
        MatrixLoop::from_coeffs(grid, coeffs)
    }

    #[test]
    fn identity_evaluates_to_identity() {
        let l = MatrixLoop::identity(grid());
        let m = loop_eval(&l, c(0.5, 0.0), 0.25).unwrap();
        assert!(mat2::norm2(&(m - mat2::identity())) < 1e-15);
    }

    #[test]
    fn monomial_evaluation() {
        let g = grid();
        let mut coeffs = vec![Mat2::zeros(); 2 * g.degree + 1];
        coeffs[g.degree + 1] = real_mat(0.0, 1.0, 0.0, 0.0);
        let l = MatrixLoop::from_coeffs(g, coeffs);
        let m = loop_eval(&l, mat2::I, 0.5).unwrap();
        assert!(mat2::norm2(&(m - mat2::mat(mat2::ZERO, mat2::I, mat2::ZERO, mat2::ZERO))) < 1e-15);
    }

    #[test]
    fn origin_requires_holomorphy() {
        let g = grid();
        let l = MatrixLoop::from_fn(g, |lam| mat2::mat(lam.inv(), mat2::ZERO, mat2::ZERO, lam));
        let err = loop_eval(&l, mat2::ZERO, 0.0).unwrap_err();
        assert!(matches!(err, CmcError::NotHolomorphicAtOrigin { .. }));
        let h = MatrixLoop::from_fn(g, |lam| mat2::mat(mat2::ONE, lam, mat2::ZERO, mat2::ONE));
        let m = loop_eval(&h, mat2::ZERO, 0.0).unwrap();
        assert!(mat2::norm2(&(m - mat2::identity())) < 1e-14);
    }

    #[test]
    fn outside_annulus_rejected() {
        let l = MatrixLoop::identity(grid());
        assert!(loop_eval(&l, c(0.1, 0.0), 0.5).is_err());
        assert!(loop_eval(&l, c(1.5, 0.0), 0.5).is_err());
    }

    #[test]
    fn random_loop_reproduces_samples() {
        let g = grid();
        let seed: Vec<f64> = (0..97)
            .map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0)
            .collect();
        let l = random_loop(&seed, g, 4);
        for (j, s) in l.samples().iter().enumerate() {
            let m = loop_eval(&l, g.lambda(j), 0.5).unwrap();
            assert!(mat2::norm2(&(m - s)) < 1e-12);
        }
    }

    #[test]
    fn product_with_identity_and_inverse_pair() {
        let g = grid();
        let x = MatrixLoop::from_fn(g, |lam| mat2::mat(lam, lam * lam, mat2::ONE, lam.inv()));
        let p = loop_mul(&x, &MatrixLoop::identity(g)).unwrap();
        for (a, b) in p.samples().iter().zip(x.samples()) {
            assert!(mat2::norm2(&(a - b)) < 1e-15);
        }
        let d1 = MatrixLoop::from_fn(g, |lam| mat2::mat(lam, mat2::ZERO, mat2::ZERO, lam.inv()));
        let d2 = MatrixLoop::from_fn(g, |lam| mat2::mat(lam.inv(), mat2::ZERO, mat2::ZERO, lam));
        let p = loop_mul(&d1, &d2).unwrap();
        for k in -(g.degree as i64)..=g.degree as i64 {
            let expect = if k == 0 {
                mat2::identity()
            } else {
                Mat2::zeros()
            };
            assert!(mat2::norm2(&(p.coeff(k) - expect)) < 1e-14);
        }
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = MatrixLoop::identity(grid());
        let b = MatrixLoop::identity(LoopGrid::new(64, 16).unwrap());
        assert!(matches!(
            loop_mul(&a, &b),
            Err(CmcError::GridMismatch { .. })
        ));
    }

    #[test]
    fn star_of_monomial_and_identity() {
        let g = grid();
        let p = ScalarLoop::from_fn(g, |lam| lam);
        let ps = p.star();
        assert!((ps.coeff(-1) - 1.0).norm() < 1e-15);
        assert!(ps.coeff(1).norm() < 1e-15);
        let id = loop_star(&MatrixLoop::identity(g));
        assert!(mat2::norm2(&(id.coeff(0) - mat2::identity())) < 1e-15);
    }

    #[test]
    fn truncation_residual_flags_discarded_modes() {
        let g = LoopGrid::new(32, 2).unwrap();
        let l = MatrixLoop::from_fn(g, |lam| mat2::identity() * lam.powi(5));
        assert!(l.truncation_residual() > 0.99);
        let m = MatrixLoop::from_fn(g, |lam| mat2::identity() * lam.powi(2));
        assert!(m.truncation_residual() < 1e-28);
    }

    proptest! {
        #[test]
        fn star_is_involution_and_adjoint_on_circle(seed in prop::collection::vec(-1.0f64..1.0, 40)) {
            let g = grid();
            let l = random_loop(&seed, g, 5);
            let s = loop_star(&l);
            for (j, m) in l.samples().iter().enumerate() {
                let direct = s.eval(g.lambda(j));
                prop_assert!(mat2::norm2(&(direct - mat2::dagger(m))) < 1e-12);
            }
            let ss = loop_star(&s);
            for (a, b) in ss.coeffs().iter().zip(l.coeffs()) {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn fourier_round_trip_at_full_degree(seed in prop::collection::vec(-1.0f64..1.0, 64), shifted in any::<bool>()) {
            let mut g = LoopGrid::new(32, 16).unwrap();
            if shifted { g = g.shifted(); }
            let samples: Vec<Mat2> = seed.chunks(2).take(32)
                .map(|p| mat2::mat(c(p[0], p[1]), c(p[1], 0.0), c(0.0, p[0]), c(p[0] * p[1], 1.0)))
                .collect();
            let l = MatrixLoop::from_samples(g, samples.clone());
            let back = MatrixLoop::from_coeffs(g, l.coeffs().to_vec());
            for (a, b) in back.samples().iter().zip(&samples) {
                prop_assert!(mat2::norm2(&(a - b)) < 1e-12);
            }
        }

        #[test]
        fn pointwise_products(seed in prop::collection::vec(-1.0f64..1.0, 40)) {
            let g = grid();
            let x = random_loop(&seed, g, 3);
            let rev: Vec<f64> = seed.iter().rev().cloned().collect();
            let y = random_loop(&rev, g, 3);
            let p = loop_mul(&x, &y).unwrap();
            for j in 0..g.len {
                let expect = x.samples()[j] * y.samples()[j];
                prop_assert!(mat2::norm2(&(p.samples()[j] - expect)) < 1e-12);
                prop_assert!(mat2::norm2(&(p.eval(g.lambda(j)) - expect)) < 1e-12);
            }
        }
    }
}
