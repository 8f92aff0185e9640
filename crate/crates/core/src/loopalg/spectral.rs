//! Spectral (Wiener–Hopf) factorization of positive symbols on the circle.
//!
//! Scalar symbols are factored by splitting `log w` into its nonnegative
//! modes. Matrix symbols `h = B*B` are factored through the finite section
//! of the block Toeplitz operator `T_{kj} = h_{k-j}`, `0 ≤ j, k ≤ N`: the
//! first block column of `T⁻¹` holds the coefficients of `B⁻¹` up to a
//! right factor, and the Whittle (block Levinson) recursion computes it in
//! `O(N²)` block operations.

use super::{fourier, LoopGrid, MatrixLoop, ScalarLoop};
use crate::error::{CmcError, Result};
use crate::mat2::{self, Mat2, C64};

/// Nonnegative half of `log w`: coefficients `S_k`, `k = 0..=L/2`, with
/// `S_0 = h_0 / 2` so that `S + S† = h` on the circle.
pub fn log_split(log_samples: &[C64], grid: &LoopGrid) -> Vec<C64> {
    let len = grid.len;
    let half = len / 2;
    let full = fourier::spectrum(log_samples, grid);
    let mut out = Vec::with_capacity(half + 1);
    out.push(0.5 * full[half]);
    out.extend_from_slice(&full[half + 1..]);
    out
}

/// Samples of `Σ_{k≥0} s_k λ^k` on `grid`.
pub fn synthesize_nonneg(coeffs: &[C64], grid: &LoopGrid) -> Vec<C64> {
    let deg = coeffs.len() - 1;
    let mut full = vec![C64::new(0.0, 0.0); deg];
    full.extend_from_slice(coeffs);
    fourier::synthesize(&full, deg, grid)
}

/// `p` holomorphic and nonvanishing on the disk with `|p|² = w` on the circle
/// and `p(0) > 0`.
pub fn scalar_spectral_factor(w: &ScalarLoop, eps_pos: f64) -> Result<ScalarLoop> {
    let scale = w.samples().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let max_imag = w.samples().iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if max_imag > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(CmcError::NonrealSymbol { max_imag });
    }
    let floor = eps_pos * scale;
    let low: Vec<usize> = w
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, z)| !(z.re >= floor) || z.re <= 0.0)
        .map(|(j, _)| j)
        .collect();
    if !low.is_empty() {
        if w.grid().offset == 0.0 {
            // isolated zeros on the grid: retry half a step away
            let jittered = w.resample(w.grid().shifted());
            return scalar_spectral_factor(&jittered, eps_pos).map_err(|e| match e {
                CmcError::SymbolNotPositive { .. } => CmcError::SymbolNotPositive { indices: low },
                other => other,
            });
        }
        return Err(CmcError::SymbolNotPositive { indices: low });
    }
    let grid = *w.grid();
    let logs: Vec<C64> = w
        .samples()
        .iter()
        .map(|z| C64::new(z.re.ln(), 0.0))
        .collect();
    let split = log_split(&logs, &grid);
    let p = synthesize_nonneg(&split, &grid)
        .into_iter()
        .map(|s| s.exp())
        .collect();
    Ok(ScalarLoop::from_samples(grid, p))
}

#[derive(Clone, Copy, Debug)]
pub struct FactorOptions {
    /// Positivity floor relative to the largest eigenvalue.
    pub eps_pos: f64,
    /// Relative residual gate for `‖B*B − h‖`.
    pub tol_fact: f64,
    /// Apply one Newton step when the residual exceeds `tol_fact / 10`.
    pub refine: bool,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            eps_pos: 1e-10,
            tol_fact: 1e-7,
            refine: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralFactor {
    /// Positive factor: nonnegative modes, `B(0)` upper triangular with positive diagonal.
    pub b: MatrixLoop,
    /// Pointwise inverse of `B` on the samples.
    pub b_inv: Vec<Mat2>,
    /// `B(0)` as produced by the recursion.
    pub b0: Mat2,
    /// `max_j ‖B*B − h‖ / max_j ‖h‖`.
    pub residual: f64,
    pub refined: bool,
}

/// Forward block predictor `A(λ) = Σ_{j≤N} A_j λ^j` (`A_0 = I`) and its
/// prediction-error matrix `P` with `T [A_0 … A_N]^T = [P 0 … 0]^T`.
pub(crate) fn whittle_predictor(blocks: &[Mat2]) -> Result<(Vec<Mat2>, Mat2)> {
    let n_max = blocks.len() - 1;
    let mut fwd = vec![mat2::identity()];
    let mut bwd = vec![mat2::identity()];
    let mut pf = blocks[0];
    let mut pb = blocks[0];
    for n in 0..n_max {
        let mut delta = Mat2::zeros();
        for (j, a) in fwd.iter().enumerate() {
            delta += blocks[n + 1 - j] * a;
        }
        let pb_inv = mat2::inverse(&pb).ok_or(CmcError::IndefiniteSymbol {
            index: n,
            min_eig: 0.0,
        })?;
        let pf_inv = mat2::inverse(&pf).ok_or(CmcError::IndefiniteSymbol {
            index: n,
            min_eig: 0.0,
        })?;
        let ka = -(pb_inv * delta);
        let kb = -(pf_inv * mat2::dagger(&delta));
        let mut new_fwd = Vec::with_capacity(n + 2);
        let mut new_bwd = Vec::with_capacity(n + 2);
        for j in 0..=n + 1 {
            let a = if j <= n { fwd[j] } else { Mat2::zeros() };
            let b_shift = if j >= 1 { bwd[j - 1] } else { Mat2::zeros() };
            new_fwd.push(a + b_shift * ka);
            new_bwd.push(b_shift + a * kb);
        }
        pf += mat2::dagger(&delta) * ka;
        pb += delta * kb;
        fwd = new_fwd;
        bwd = new_bwd;
    }
    Ok((fwd, pf))
}

fn channel_spectra(samples: &[Mat2], grid: &LoopGrid) -> [Vec<C64>; 4] {
    let mut out: [Vec<C64>; 4] = Default::default();
    for (c, slot) in out.iter_mut().enumerate() {
        let s: Vec<C64> = samples.iter().map(|m| m[(c / 2, c % 2)]).collect();
        *slot = fourier::spectrum(&s, grid);
    }
    out
}

fn spectral_block(spec: &[Vec<C64>; 4], half: usize, k: i64) -> Mat2 {
    let i = (k + half as i64) as usize;
    mat2::mat(spec[0][i], spec[1][i], spec[2][i], spec[3][i])
}

fn residual_of(b: &[Mat2], h: &[Mat2], scale: f64) -> f64 {
    b.iter()
        .zip(h)
        .map(|(b, h)| mat2::norm2(&(mat2::dagger(b) * b - h)))
        .fold(0.0, f64::max)
        / scale
}

/// One Newton step for `B*B = h`: with `S = B^{-*}(h − B*B)B^{-1}`, set
/// `B ← (I + E)B` where `E` is the positive part of `S` (upper-triangular
/// half of the zero mode).
fn newton_step(b: &[Mat2], b_inv: &[Mat2], h: &[Mat2], grid: &LoopGrid) -> Vec<Mat2> {
    let s: Vec<Mat2> = b
        .iter()
        .zip(b_inv)
        .zip(h)
        .map(|((b, bi), h)| mat2::dagger(bi) * (h - mat2::dagger(b) * b) * bi)
        .collect();
    let spec = channel_spectra(&s, grid);
    let half = grid.len / 2;
    let mut pos = Vec::with_capacity(half + 1);
    let s0 = spectral_block(&spec, half, 0);
    pos.push(mat2::mat(
        C64::from(0.5 * s0[(0, 0)].re),
        s0[(0, 1)],
        mat2::ZERO,
        C64::from(0.5 * s0[(1, 1)].re),
    ));
    for k in 1..=half as i64 {
        pos.push(spectral_block(&spec, half, k));
    }
    let mut e_ch: [Vec<C64>; 4] = Default::default();
    for (c, slot) in e_ch.iter_mut().enumerate() {
        let coeffs: Vec<C64> = pos.iter().map(|m| m[(c / 2, c % 2)]).collect();
        *slot = synthesize_nonneg(&coeffs, grid);
    }
    b.iter()
        .enumerate()
        .map(|(j, b)| {
            let e = mat2::mat(e_ch[0][j], e_ch[1][j], e_ch[2][j], e_ch[3][j]);
            (mat2::identity() + e) * b
        })
        .collect()
}

/// Positive factor `B` of a hermitian positive-definite symbol, `h = B*B`.
pub fn matrix_spectral_factor(h: &MatrixLoop, opts: &FactorOptions) -> Result<SpectralFactor> {
    let grid = *h.grid();
    let samples = h.samples();
    let mut max_eig = 0.0f64;
    let mut herm_err = 0.0f64;
    let mut eigs = Vec::with_capacity(samples.len());
    for m in samples {
        herm_err = herm_err.max(mat2::norm2(&(m - mat2::dagger(m))));
        let (lo, hi) = mat2::hermitian_eigenvalues(m);
        max_eig = max_eig.max(hi);
        eigs.push(lo);
    }
    if !(max_eig > 0.0) || herm_err > 1e-9 * max_eig {
        return Err(CmcError::IndefiniteSymbol {
            index: 0,
            min_eig: f64::NAN,
        });
    }
    if let Some((index, &min_eig)) = eigs
        .iter()
        .enumerate()
        .find(|(_, &e)| !(e >= opts.eps_pos * max_eig))
    {
        return Err(CmcError::IndefiniteSymbol { index, min_eig });
    }
    let scale = samples.iter().map(mat2::norm2).fold(0.0, f64::max);

    let half = grid.len / 2;
    let degree = grid.degree;
    let spec = channel_spectra(samples, &grid);
    let blocks: Vec<Mat2> = (0..=degree as i64)
        .map(|k| spectral_block(&spec, half, k))
        .collect();
    let (pred, pf) = whittle_predictor(&blocks)?;
    let pf = (pf + mat2::dagger(&pf)).scale(0.5);
    let r = mat2::cholesky_upper(&pf).ok_or(CmcError::IndefiniteSymbol {
        index: 0,
        min_eig: mat2::hermitian_eigenvalues(&pf).0,
    })?;
    let r_inv = mat2::inverse(&r).expect("triangular factor with positive diagonal");

    let mut a_ch: [Vec<C64>; 4] = Default::default();
    for (c, slot) in a_ch.iter_mut().enumerate() {
        let coeffs: Vec<C64> = pred.iter().map(|m| m[(c / 2, c % 2)]).collect();
        *slot = synthesize_nonneg(&coeffs, &grid);
    }
    let mut b = Vec::with_capacity(grid.len);
    let mut b_inv = Vec::with_capacity(grid.len);
    for j in 0..grid.len {
        let a = mat2::mat(a_ch[0][j], a_ch[1][j], a_ch[2][j], a_ch[3][j]);
        let a_inv = mat2::inverse(&a).ok_or(CmcError::TruncationInsufficient {
            residual: f64::INFINITY,
            degree,
        })?;
        b.push(r * a_inv);
        b_inv.push(a * r_inv);
    }
    let mut residual = residual_of(&b, samples, scale);
    let mut refined = false;
    if opts.refine && residual > opts.tol_fact / 10.0 {
        let nb = newton_step(&b, &b_inv, samples, &grid);
        let nres = residual_of(&nb, samples, scale);
        if nres < residual {
            b_inv = nb
                .iter()
                .map(|m| mat2::inverse(m).unwrap_or(Mat2::zeros()))
                .collect();
            b = nb;
            residual = nres;
            refined = true;
        }
    }
    if !(residual <= opts.tol_fact) {
        return Err(CmcError::TruncationInsufficient { residual, degree });
    }
    let b0 = if refined {
        MatrixLoop::from_samples(grid, b.clone()).coeff(0)
    } else {
        r
    };
    Ok(SpectralFactor {
        b: MatrixLoop::from_samples(grid, b),
        b_inv,
        b0,
        residual,
        refined,
    })
}
