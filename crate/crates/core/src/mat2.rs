//! Small helpers for 2×2 complex matrices.

use nalgebra::Matrix2;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn mat(a: C64, b: C64, c: C64, d: C64) -> Mat2 {
    Mat2::new(a, b, c, d)
}

#[inline]
pub fn real_mat(a: f64, b: f64, c: f64, d: f64) -> Mat2 {
    Mat2::new(a.into(), b.into(), c.into(), d.into())
}

#[inline]
pub fn identity() -> Mat2 {
    Mat2::identity()
}

#[inline]
pub fn det(m: &Mat2) -> C64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

#[inline]
pub fn trace(m: &Mat2) -> C64 {
    m[(0, 0)] + m[(1, 1)]
}

/// Inverse via the adjugate. Returns `None` for a (numerically) zero determinant.
#[inline]
pub fn inverse(m: &Mat2) -> Option<Mat2> {
    let d = det(m);
    if d.norm() == 0.0 || !d.is_finite() {
        return None;
    }
    let r = d.inv();
    Some(mat(
        m[(1, 1)] * r,
        -m[(0, 1)] * r,
        -m[(1, 0)] * r,
        m[(0, 0)] * r,
    ))
}

/// Conjugate transpose.
#[inline]
pub fn dagger(m: &Mat2) -> Mat2 {
    m.adjoint()
}

/// Spectral (operator 2-) norm, computed in closed form.
pub fn norm2(m: &Mat2) -> f64 {
    let fro2: f64 = m.iter().map(|z| z.norm_sqr()).sum();
    let d2 = det(m).norm_sqr();
    let disc = (fro2 * fro2 - 4.0 * d2).max(0.0);
    ((fro2 + disc.sqrt()) / 2.0).sqrt()
}

pub fn max_abs(m: &Mat2) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of a hermitian 2×2 matrix, ascending.
pub fn hermitian_eigenvalues(m: &Mat2) -> (f64, f64) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)].conj());
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    (mean - rad, mean + rad)
}

/// Upper-triangular `R` with positive real diagonal and `R^H R = m`,
/// for hermitian positive-definite `m`.
pub fn cholesky_upper(m: &Mat2) -> Option<Mat2> {
    let p = m[(0, 0)].re;
    if !(p > 0.0) {
        return None;
    }
    let r00 = p.sqrt();
    let r01 = m[(0, 1)] / r00;
    let s = m[(1, 1)].re - r01.norm_sqr();
    if !(s > 0.0) {
        return None;
    }
    Some(mat(r00.into(), r01, ZERO, s.sqrt().into()))
}

/// Principal square root of a complex number close to the positive real axis.
#[inline]
pub fn csqrt(z: C64) -> C64 {
    z.sqrt()
}
