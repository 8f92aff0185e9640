//! The cylinder potential `ξ = Q(z, λ) dz/z` with
//! `Q = [[0, λ⁻¹], [λ/4 + (1−λ)² τ f(z), 0]]` for a Laurent polynomial `f`.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CmcError, Result};
use crate::mat2::{self, Mat2, C64};

/// Finite Laurent polynomial `f(z) = Σ a_k z^k` together with the scale `τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentSpec {
    pub tau: f64,
    coeffs: BTreeMap<i32, C64>,
}

impl LaurentSpec {
    pub fn new(tau: f64, coeffs: impl IntoIterator<Item = (i32, C64)>) -> Self {
        let mut map = BTreeMap::new();
        for (k, a) in coeffs {
            *map.entry(k).or_insert(C64::new(0.0, 0.0)) += a;
        }
        map.retain(|_, a: &mut C64| *a != C64::new(0.0, 0.0));
        Self { tau, coeffs: map }
    }

    pub fn zero() -> Self {
        Self::new(1.0, [])
    }

    pub fn constant(a0: f64) -> Self {
        Self::new(1.0, [(0, a0.into())])
    }

    /// `f(z) = a + b (z^n + z^{-n})`.
    pub fn symmetric_family(n: i32, a: f64, b: f64) -> Self {
        Self::new(1.0, [(0, a.into()), (n, b.into()), (-n, b.into())])
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self {
            tau,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn coeffs(&self) -> &BTreeMap<i32, C64> {
        &self.coeffs
    }

    pub fn coeff(&self, k: i32) -> C64 {
        self.coeffs.get(&k).copied().unwrap_or_default()
    }

    /// Coefficient of `τ f`.
    pub fn scaled_coeff(&self, k: i32) -> C64 {
        self.tau * self.coeff(k)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn min_degree(&self) -> i32 {
        self.coeffs.keys().next().copied().unwrap_or(0)
    }

    pub fn max_degree(&self) -> i32 {
        self.coeffs.keys().next_back().copied().unwrap_or(0)
    }

    /// Unscaled `f(z)`.
    pub fn f(&self, z: C64) -> C64 {
        self.coeffs.iter().map(|(&k, &a)| a * z.powi(k)).sum()
    }

    pub fn df(&self, z: C64) -> C64 {
        self.coeffs
            .iter()
            .filter(|(&k, _)| k != 0)
            .map(|(&k, &a)| a * k as f64 * z.powi(k - 1))
            .sum()
    }

    /// `τ f(z)`.
    pub fn scaled_f(&self, z: C64) -> C64 {
        self.tau * self.f(z)
    }
}

#[derive(Serialize, Deserialize)]
struct LaurentSpecJson {
    tau: f64,
    coeffs: Vec<(i32, f64, f64)>,
}

impl Serialize for LaurentSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LaurentSpecJson {
            tau: self.tau,
            coeffs: self.coeffs.iter().map(|(&k, a)| (k, a.re, a.im)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LaurentSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = LaurentSpecJson::deserialize(d)?;
        if !(raw.tau > 0.0) || !raw.tau.is_finite() {
            return Err(D::Error::custom(format!(
                "tau must be positive, got {}",
                raw.tau
            )));
        }
        if raw
            .coeffs
            .iter()
            .any(|(_, re, im)| !re.is_finite() || !im.is_finite())
        {
            return Err(D::Error::custom("non-finite Laurent coefficient"));
        }
        Ok(LaurentSpec::new(
            raw.tau,
            raw.coeffs
                .into_iter()
                .map(|(k, re, im)| (k, C64::new(re, im))),
        ))
    }
}

const SYMMETRY_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SymmetryReport {
    /// `f = conj(f ∘ ρ)` with `ρ(z) = conj z`: all coefficients real.
    pub rho_ok: bool,
    /// `f = conj(f ∘ σ)` with `σ(z) = 1/conj z`: `a_k = conj(a_{-k})`.
    pub sigma_ok: bool,
}

impl SymmetryReport {
    pub fn symmetric(&self) -> bool {
        self.rho_ok && self.sigma_ok
    }
}

pub fn validate_symmetry(spec: &LaurentSpec) -> SymmetryReport {
    let rho_ok = spec.coeffs.values().all(|a| a.im.abs() <= SYMMETRY_TOL);
    let keys: Vec<i32> = spec.coeffs.keys().copied().collect();
    let sigma_ok = keys
        .iter()
        .all(|&k| (spec.coeff(k) - spec.coeff(-k).conj()).norm() <= SYMMETRY_TOL);
    SymmetryReport { rho_ok, sigma_ok }
}

/// `κ = (τa₀)² − (τa₋₁)(τa₁)`, complex in general.
pub fn kappa_complex(spec: &LaurentSpec) -> C64 {
    let a0 = spec.scaled_coeff(0);
    a0 * a0 - spec.scaled_coeff(-1) * spec.scaled_coeff(1)
}

pub fn kappa(spec: &LaurentSpec) -> f64 {
    kappa_complex(spec).re
}

/// Connection coefficient of a loop potential `ξ = Q(z, λ) dz/z`, with its
/// first two λ-derivatives for the variational equations.
pub trait LoopPotential: Sync {
    fn q(&self, z: C64, lambda: C64) -> Mat2;
    fn dq_dlambda(&self, z: C64, lambda: C64) -> Mat2;
    fn d2q_dlambda2(&self, z: C64, lambda: C64) -> Mat2;

    /// `Q(z, λ_j)` for many `λ` at one `z`.
    fn q_batch(&self, z: C64, lambdas: &[C64], out: &mut [Mat2]) {
        for (o, &l) in out.iter_mut().zip(lambdas) {
            *o = self.q(z, l);
        }
    }
}

/// The cylinder potential built from a [`LaurentSpec`].
#[derive(Clone, Debug)]
pub struct CylinderPotential {
    spec: LaurentSpec,
}

impl CylinderPotential {
    pub fn new(spec: LaurentSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &LaurentSpec {
        &self.spec
    }

    #[inline]
    fn lower_left(tf: C64, lambda: C64) -> C64 {
        let one_minus = 1.0 - lambda;
        0.25 * lambda + one_minus * one_minus * tf
    }
}

impl LoopPotential for CylinderPotential {
    fn q(&self, z: C64, lambda: C64) -> Mat2 {
        let tf = self.spec.scaled_f(z);
        mat2::mat(
            mat2::ZERO,
            lambda.inv(),
            Self::lower_left(tf, lambda),
            mat2::ZERO,
        )
    }

    fn dq_dlambda(&self, z: C64, lambda: C64) -> Mat2 {
        let tf = self.spec.scaled_f(z);
        let inv = lambda.inv();
        mat2::mat(
            mat2::ZERO,
            -inv * inv,
            0.25 - 2.0 * (1.0 - lambda) * tf,
            mat2::ZERO,
        )
    }

    fn d2q_dlambda2(&self, z: C64, lambda: C64) -> Mat2 {
        let tf = self.spec.scaled_f(z);
        let inv = lambda.inv();
        mat2::mat(mat2::ZERO, 2.0 * inv * inv * inv, 2.0 * tf, mat2::ZERO)
    }

    fn q_batch(&self, z: C64, lambdas: &[C64], out: &mut [Mat2]) {
        let tf = self.spec.scaled_f(z);
        for (o, &l) in out.iter_mut().zip(lambdas) {
            *o = mat2::mat(mat2::ZERO, l.inv(), Self::lower_left(tf, l), mat2::ZERO);
        }
    }
}

/// `Q(z, λ)` with the poles at `z = 0` and `λ = 0` reported as errors.
pub fn eval_q(spec: &LaurentSpec, z: C64, lambda: C64) -> Result<Mat2> {
    if z.norm() == 0.0 || lambda.norm() == 0.0 {
        return Err(CmcError::PoleOfPotential { z, lambda });
    }
    Ok(CylinderPotential::new(spec.clone()).q(z, lambda))
}

/// Split `f = f₋ + f₀ + f₊` into negative, constant and positive modes.
pub fn superposition_split(spec: &LaurentSpec) -> (LaurentSpec, LaurentSpec, LaurentSpec) {
    let part = |pred: fn(i32) -> bool| {
        LaurentSpec::new(
            spec.tau,
            spec.coeffs
                .iter()
                .filter(|(&k, _)| pred(k))
                .map(|(&k, &a)| (k, a)),
        )
    };
    (part(|k| k < 0), part(|k| k == 0), part(|k| k > 0))
}

/// Gauge action on a connection coefficient: `g⁻¹ A g + g⁻¹ ∂g`, where
/// `A` is the `dz`-coefficient of the connection.
pub fn gauge_transform(a: &Mat2, g: &Mat2, dg: &Mat2, z: C64, lambda: C64) -> Result<Mat2> {
    let g_inv = mat2::inverse(g).ok_or(CmcError::GaugeSingular { z, lambda })?;
    if mat2::det(g).norm() < 1e-14 * mat2::max_abs(g).powi(2) {
        return Err(CmcError::GaugeSingular { z, lambda });
    }
    Ok(g_inv * a * g + g_inv * dg)
}

/// The gauge `g = diag(λ^{-1/2}, λ^{1/2}) diag(z^{-1/2}, z^{1/2}) [[1,0],[1/(2z),1]] [[1,-1],[0,1]]`
/// that straightens the cylinder potential at `λ = 1`. Square roots use the
/// principal branch unless continued explicitly by the caller.
#[derive(Clone, Copy, Debug)]
pub struct StraighteningGauge {
    pub sqrt_lambda: C64,
}

impl StraighteningGauge {
    pub fn new(lambda: C64) -> Self {
        Self {
            sqrt_lambda: lambda.sqrt(),
        }
    }

    pub fn at(&self, z: C64, sqrt_z: C64) -> Mat2 {
        let sl = self.sqrt_lambda;
        // diag(1/√λ, √λ) diag(1/√z, √z) [[1, -1], [1/(2z), 1 - 1/(2z)]]
        let u = mat2::mat(mat2::ONE, -mat2::ONE, 0.5 / z, 1.0 - 0.5 / z);
        let d = mat2::mat(1.0 / (sl * sqrt_z), mat2::ZERO, mat2::ZERO, sl * sqrt_z);
        d * u
    }

    /// `∂g/∂z`, coded analytically.
    pub fn dz(&self, z: C64, sqrt_z: C64) -> Mat2 {
        let sl = self.sqrt_lambda;
        let u = mat2::mat(mat2::ONE, -mat2::ONE, 0.5 / z, 1.0 - 0.5 / z);
        let du = mat2::mat(mat2::ZERO, mat2::ZERO, -0.5 / (z * z), 0.5 / (z * z));
        let d = mat2::mat(1.0 / (sl * sqrt_z), mat2::ZERO, mat2::ZERO, sl * sqrt_z);
        let dd = mat2::mat(
            -0.5 / (sl * sqrt_z * z),
            mat2::ZERO,
            mat2::ZERO,
            0.5 * sl / sqrt_z,
        );
        dd * u + d * du
    }

    /// `g(1)` at `λ = 1`: `[[1, -1], [1/2, 1/2]]`.
    pub fn at_base_point_lambda_one() -> Mat2 {
        mat2::real_mat(1.0, -1.0, 0.5, 0.5)
    }
}

/// `t = -(λ-1)² / (4λ)`, equal to `sin²(θ/2)` on the circle.
pub fn t_parameter(lambda: C64) -> C64 {
    let d = lambda - 1.0;
    -(d * d) / (4.0 * lambda)
}

/// The straightened connection `η₀ + t η₁` (coefficient of `dz`):
/// `η₀ = [[0, 1], [0, 0]]`, `η₁ = -4 τf(z)/z² [[1, -1], [1, -1]]`.
pub fn straightened_connection(spec: &LaurentSpec, z: C64, lambda: C64) -> Mat2 {
    let beta = -4.0 * spec.scaled_f(z) / (z * z);
    let t = t_parameter(lambda);
    mat2::mat(t * beta, 1.0 - t * beta, t * beta, -t * beta)
}
