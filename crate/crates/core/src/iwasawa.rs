//! Pointwise Iwasawa factorization `Ψ = F·B` and the Sym formula.

use serde::Serialize;

use crate::error::{CmcError, Result};
use crate::loopalg::{matrix_spectral_factor, FactorOptions, LoopGrid, MatrixLoop};
use crate::mat2::{self, Mat2, C64};

#[derive(Clone, Copy, Debug)]
pub struct IwasawaOptions {
    pub factor: FactorOptions,
    /// Gate on `max_j ‖F F* − id‖`.
    pub tol_unit: f64,
    /// Number of grid doublings allowed after the first attempt.
    pub max_escalations: usize,
}

impl Default for IwasawaOptions {
    fn default() -> Self {
        Self {
            factor: FactorOptions::default(),
            tol_unit: 1e-7,
            max_escalations: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IwasawaFactors {
    pub f: MatrixLoop,
    pub b: MatrixLoop,
    pub b0: Mat2,
    /// `max_j ‖Ψ − F B‖`.
    pub residual: f64,
    /// `max_j ‖F F* − id‖`.
    pub unitarity: f64,
    /// `max_j ‖B*B − Ψ*Ψ‖ / max_j ‖Ψ*Ψ‖`.
    pub factor_residual: f64,
    pub negative_energy: f64,
    /// `|B(0)₂₁| + |Im B(0)₁₁| + |Im B(0)₂₂|`.
    pub b0_normalization: f64,
    pub escalations: usize,
}

/// Factor `Ψ` on its own grid.
pub fn iwasawa_factor(psi: &MatrixLoop, opts: &IwasawaOptions) -> Result<IwasawaFactors> {
    let grid = *psi.grid();
    let h: Vec<Mat2> = psi.samples().iter().map(|p| mat2::dagger(p) * p).collect();
    let h = MatrixLoop::from_samples(grid, h);
    let sf = matrix_spectral_factor(&h, &opts.factor)?;
    let f_samples: Vec<Mat2> = psi
        .samples()
        .iter()
        .zip(&sf.b_inv)
        .map(|(p, bi)| p * bi)
        .collect();
    let residual = psi
        .samples()
        .iter()
        .zip(&f_samples)
        .zip(sf.b.samples())
        .map(|((p, f), b)| mat2::norm2(&(p - f * b)))
        .fold(0.0, f64::max);
    let unitarity = f_samples
        .iter()
        .map(|f| mat2::norm2(&(f * mat2::dagger(f) - mat2::identity())))
        .fold(0.0, f64::max);
    if !(unitarity <= opts.tol_unit) {
        return Err(CmcError::FactorizationFailed {
            residual: unitarity,
        });
    }
    let b0 = sf.b0;
    let b0_normalization = b0[(1, 0)].norm() + b0[(0, 0)].im.abs() + b0[(1, 1)].im.abs();
    Ok(IwasawaFactors {
        f: MatrixLoop::from_samples(grid, f_samples),
        negative_energy: sf.b.negative_energy_fraction(),
        b: sf.b,
        b0,
        residual,
        unitarity,
        factor_residual: sf.residual,
        b0_normalization,
        escalations: 0,
    })
}

/// Factor `Ψ = build(grid)`, doubling the grid when the truncation or the
/// unitarity gate fails.
pub fn iwasawa_escalating(
    build: impl Fn(&LoopGrid) -> Result<MatrixLoop>,
    grid: &LoopGrid,
    opts: &IwasawaOptions,
) -> Result<IwasawaFactors> {
    let mut g = *grid;
    let mut attempt = 0;
    loop {
        let psi = build(&g)?;
        match iwasawa_factor(&psi, opts) {
            Ok(mut out) => {
                out.escalations = attempt;
                return Ok(out);
            }
            Err(
                e
                @ (CmcError::TruncationInsufficient { .. } | CmcError::FactorizationFailed { .. }),
            ) if attempt < opts.max_escalations => {
                let _ = e;
                attempt += 1;
                g = g.refined();
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ImmersionPoint {
    pub x: [f64; 3],
    /// Norm of the hermitian part of `F′F⁻¹`, relative to `max(1, ‖F′F⁻¹‖)`.
    /// A scalar imaginary trace from `det F ≠ 1` is dropped silently.
    pub projection_residual: f64,
}

/// Largest admissible `su(2)` projection residual.
pub const PROJECTION_TOL: f64 = 1e-6;

/// Project onto trace-free skew-hermitian matrices.
pub fn project_su2(m: &Mat2) -> Mat2 {
    let skew = (m - mat2::dagger(m)) * C64::new(0.5, 0.0);
    let half_trace = mat2::trace(&skew) * 0.5;
    skew - mat2::identity() * half_trace
}

/// `ψ = (i/2)(x₁σ₁ + x₂σ₂ + x₃σ₃)` inverted.
pub fn su2_to_r3(psi: &Mat2) -> [f64; 3] {
    let i = mat2::I;
    let x1 = -i * (psi[(0, 1)] + psi[(1, 0)]);
    let x2 = psi[(0, 1)] - psi[(1, 0)];
    let x3 = -2.0 * i * psi[(0, 0)];
    [x1.re, x2.re, x3.re]
}

pub fn r3_to_su2(x: &[f64; 3]) -> Mat2 {
    let half_i = C64::new(0.0, 0.5);
    mat2::mat(
        half_i * x[2],
        half_i * C64::new(x[0], -x[1]),
        half_i * C64::new(x[0], x[1]),
        -half_i * x[2],
    )
}

/// Sym formula at `λ = 1`: `ψ = F′ F⁻¹` with `′ = ∂/∂θ`, `λ = e^{iθ}`.
pub fn sym_point(f: &MatrixLoop) -> Result<ImmersionPoint> {
    let f1 = f.value_at_theta(0.0);
    let df = f.theta_derivative_at(0.0);
    let f_inv = mat2::inverse(&f1).ok_or(CmcError::FrameNotUnitary {
        residual: f64::INFINITY,
    })?;
    let psi = df * f_inv;
    let proj = project_su2(&psi);
    let hermitian = (psi + mat2::dagger(&psi)) * C64::new(0.5, 0.0);
    let projection_residual = mat2::norm2(&hermitian) / mat2::norm2(&psi).max(1.0);
    if !(projection_residual <= PROJECTION_TOL) {
        return Err(CmcError::FrameNotUnitary {
            residual: projection_residual,
        });
    }
    Ok(ImmersionPoint {
        x: su2_to_r3(&proj),
        projection_residual,
    })
}
