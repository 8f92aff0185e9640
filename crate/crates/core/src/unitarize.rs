//! Diagonal unitarizer `V = diag(v, 1/v)` with `V M V⁻¹` unitary on the circle.
//!
//! With `M = [[a, b], [c, d]]` the conjugate is `[[a, v²b], [c/v², d]]`, so
//! only `|v|⁴ = |c|²/(−bc)` is forced pointwise. `v = √(p/q)` with `pp† = |c|²`
//! and `qq† = −bc` is built as `exp(½ (log p − log q))` from the nonnegative
//! halves of the two log-symbols.

use serde::Serialize;

use crate::error::{CmcError, Result};
use crate::flow::{self, FlowOptions, ReducedMonodromy};
use crate::loopalg::spectral::{log_split, synthesize_nonneg};
use crate::loopalg::{self, LoopGrid, MatrixLoop, ScalarLoop};
use crate::mat2::{self, Mat2, C64};
use crate::potential::LaurentSpec;

/// Largest admissible fraction of failing or singular samples.
pub const MAX_SINGULAR_FRACTION: f64 = 0.05;
/// Tolerance on `M₁₁ = conj(M₂₂)`.
pub const DIAGONAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleVerdict {
    Unitarizable,
    TriviallyUnitary,
    Fails,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaVerdict {
    pub samples: Vec<SampleVerdict>,
    pub failed: Vec<usize>,
}

impl DeltaVerdict {
    pub fn passed(&self) -> bool {
        self.failed.is_empty()
    }
}

fn sample_verdict(m: &Mat2, sign: f64) -> SampleVerdict {
    let ms = m * C64::new(sign, 0.0);
    if mat2::max_abs(&(ms - mat2::identity())) <= DIAGONAL_TOL {
        return SampleVerdict::TriviallyUnitary;
    }
    let tr = mat2::trace(&ms);
    let elliptic = tr.re.abs() < 2.0 && tr.im.abs() <= DIAGONAL_TOL;
    let conj = (m[(0, 0)] - m[(1, 1)].conj()).norm() <= DIAGONAL_TOL;
    let product = (m[(0, 0)] * m[(1, 1)]).re < 1.0;
    if elliptic && conj && product {
        SampleVerdict::Unitarizable
    } else {
        SampleVerdict::Fails
    }
}

/// Pointwise Δ-unitarizability; finitely many failures are tolerated.
pub fn delta_unitarizable_test(m: &MatrixLoop, sign: f64) -> Result<DeltaVerdict> {
    let samples: Vec<SampleVerdict> = m
        .samples()
        .iter()
        .map(|s| sample_verdict(s, sign))
        .collect();
    let failed: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == SampleVerdict::Fails)
        .map(|(j, _)| j)
        .collect();
    if failed.len() as f64 > MAX_SINGULAR_FRACTION * samples.len() as f64 {
        return Err(CmcError::NotDeltaUnitarizable {
            failed: failed.len(),
            total: samples.len(),
        });
    }
    Ok(DeltaVerdict { samples, failed })
}

#[derive(Clone, Debug)]
pub struct DiagonalUnitarizer {
    /// Coefficients `s_k`, `k ≥ 0`, of `log v = Σ s_k λ^k`.
    pub log_coeffs: Vec<C64>,
    /// The `(1,1)` entry sampled on the construction grid.
    pub v: ScalarLoop,
    /// Samples excluded from pointwise checks.
    pub singular: Vec<usize>,
    /// Largest `‖U U* − id‖` over non-singular samples, `U = V M V⁻¹`.
    pub residual: f64,
    /// Negative-mode energy fraction of `v`.
    pub negative_energy: f64,
}

impl DiagonalUnitarizer {
    /// `V = id` on `grid`, for a monodromy that is already unitary.
    pub fn identity(grid: LoopGrid) -> Self {
        Self {
            log_coeffs: vec![C64::new(0.0, 0.0)],
            v: ScalarLoop::constant(grid, C64::new(1.0, 0.0)),
            singular: Vec::new(),
            residual: 0.0,
            negative_energy: 0.0,
        }
    }

    pub fn grid(&self) -> &LoopGrid {
        self.v.grid()
    }

    /// `v(λ)` for `|λ| ≤ 1` from the log coefficients.
    pub fn v_at(&self, lambda: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for s in self.log_coeffs.iter().rev() {
            acc = acc * lambda + s;
        }
        acc.exp()
    }

    pub fn matrix_at(&self, lambda: C64) -> Mat2 {
        let v = self.v_at(lambda);
        mat2::mat(v, mat2::ZERO, mat2::ZERO, v.inv())
    }

    /// `V` on an arbitrary grid.
    pub fn on_grid(&self, grid: &LoopGrid) -> Vec<Mat2> {
        (0..grid.len)
            .map(|j| self.matrix_at(grid.lambda(j)))
            .collect()
    }

    /// `V M V⁻¹` on the grid of `m`.
    pub fn conjugate(&self, m: &MatrixLoop) -> MatrixLoop {
        let grid = *m.grid();
        let samples = m
            .samples()
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let v = self.v_at(grid.lambda(j));
                let v2 = v * v;
                mat2::mat(s[(0, 0)], s[(0, 1)] * v2, s[(1, 0)] / v2, s[(1, 1)])
            })
            .collect();
        MatrixLoop::from_samples(grid, samples)
    }

    /// Log coefficients as `[k, re, im]` triples.
    pub fn to_triples(&self) -> Vec<(i64, f64, f64)> {
        self.log_coeffs
            .iter()
            .enumerate()
            .map(|(k, s)| (k as i64, s.re, s.im))
            .collect()
    }
}

fn winding(samples: &[C64]) -> i64 {
    let mut total = 0.0;
    for j in 0..samples.len() {
        let a = samples[j];
        let b = samples[(j + 1) % samples.len()];
        total += (b / a).arg();
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i64
}

/// Replace values at `bad` indices by linear interpolation between the nearest good neighbours.
fn bridge(values: &mut [f64], bad: &[bool]) {
    let n = values.len();
    let good: Vec<usize> = (0..n).filter(|&j| !bad[j]).collect();
    if good.is_empty() || good.len() == n {
        return;
    }
    for j in 0..n {
        if !bad[j] {
            continue;
        }
        let next = good.iter().copied().find(|&g| g > j).unwrap_or(good[0] + n);
        let prev = good
            .iter()
            .rev()
            .copied()
            .find(|&g| g < j)
            .map_or(good[good.len() - 1] as i64 - n as i64, |g| g as i64);
        let (vp, vn) = (values[prev.rem_euclid(n as i64) as usize], values[next % n]);
        let t = (j as i64 - prev) as f64 / (next as i64 - prev) as f64;
        values[j] = vp + t * (vn - vp);
    }
}

/// Build `V` from the monodromy sampled on a grid avoiding `λ = 1`.
pub fn build_unitarizer(m: &MatrixLoop, sign: f64, eps_pos: f64) -> Result<DiagonalUnitarizer> {
    build_unitarizer_with(m, sign, eps_pos, None)
}

/// [`build_unitarizer`] with the off-diagonal entries `(b, c)` supplied
/// separately, each sample divided by a common real factor. Near `λ = 1`
/// both entries vanish to second order, and a representation with the
/// factor removed keeps full relative accuracy there.
pub fn build_unitarizer_with(
    m: &MatrixLoop,
    sign: f64,
    eps_pos: f64,
    offdiagonal: Option<&[(C64, C64)]>,
) -> Result<DiagonalUnitarizer> {
    let verdict = delta_unitarizable_test(m, sign)?;
    let grid = *m.grid();
    let n = grid.len;
    let bc_pairs: Vec<(C64, C64)> = match offdiagonal {
        Some(p) if p.len() == n => p.to_vec(),
        Some(p) => {
            return Err(CmcError::GridMismatch {
                left: format!("{} samples", n),
                right: format!("{} pairs", p.len()),
            })
        }
        None => m.samples().iter().map(|s| (s[(0, 1)], s[(1, 0)])).collect(),
    };
    let cc: Vec<f64> = bc_pairs.iter().map(|(_, c)| c.norm_sqr()).collect();
    let mbc: Vec<C64> = bc_pairs.iter().map(|(b, c)| -(b * c)).collect();
    let cc_max = cc.iter().copied().fold(0.0, f64::max);
    let bc_max = mbc.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(cc_max > 0.0) || !(bc_max > 0.0) {
        return Err(CmcError::QSymbolDegenerate { count: n });
    }
    let mut singular_mask = vec![false; n];
    let mut q_bad = 0;
    for j in 0..n {
        let q_ok = mbc[j].re >= eps_pos * bc_max
            && mbc[j].im.abs() <= 1e-6 * mbc[j].norm().max(eps_pos * bc_max);
        if !q_ok {
            q_bad += 1;
        }
        if !q_ok || cc[j] < eps_pos * cc_max || verdict.samples[j] == SampleVerdict::Fails {
            singular_mask[j] = true;
        }
    }
    if q_bad as f64 > MAX_SINGULAR_FRACTION * n as f64 {
        return Err(CmcError::QSymbolDegenerate { count: q_bad });
    }
    let singular: Vec<usize> = (0..n).filter(|&j| singular_mask[j]).collect();
    if singular.len() as f64 > MAX_SINGULAR_FRACTION * n as f64 {
        return Err(CmcError::NotDeltaUnitarizable {
            failed: singular.len(),
            total: n,
        });
    }
    let ratio: Vec<C64> = (0..n)
        .filter(|&j| !singular_mask[j])
        .map(|j| C64::new(cc[j], 0.0) / mbc[j])
        .collect();
    let w = winding(&ratio);
    if w != 0 {
        return Err(CmcError::BranchObstruction { winding: w });
    }

    let mut log_p: Vec<f64> = cc.iter().map(|x| x.max(f64::MIN_POSITIVE).ln()).collect();
    let mut log_q: Vec<f64> = mbc
        .iter()
        .map(|z| z.re.max(f64::MIN_POSITIVE).ln())
        .collect();
    bridge(&mut log_p, &singular_mask);
    bridge(&mut log_q, &singular_mask);
    let to_c = |v: &[f64]| v.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>();
    let sp = log_split(&to_c(&log_p), &grid);
    let sq = log_split(&to_c(&log_q), &grid);
    let log_coeffs: Vec<C64> = sp.iter().zip(&sq).map(|(p, q)| 0.5 * (p - q)).collect();
    let v_samples: Vec<C64> = synthesize_nonneg(&log_coeffs, &grid)
        .into_iter()
        .map(|s| s.exp())
        .collect();
    let v = ScalarLoop::from_samples(grid, v_samples);
    let negative_energy = v.negative_energy_fraction();
    let mut out = DiagonalUnitarizer {
        log_coeffs,
        v,
        singular,
        residual: 0.0,
        negative_energy,
    };
    let u = out.conjugate(m);
    out.residual = u
        .samples()
        .iter()
        .enumerate()
        .filter(|(j, _)| !singular_mask[*j])
        .map(|(_, s)| mat2::norm2(&(s * mat2::dagger(s) - mat2::identity())))
        .fold(0.0, f64::max);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RUnitaryReport {
    /// `max_j ‖U U* − id‖`.
    pub max_residual: f64,
    /// Largest coefficient of `U* − U⁻¹`.
    pub mode_balance: f64,
}

pub fn verify_r_unitary(u: &MatrixLoop) -> Result<RUnitaryReport> {
    let max_residual = u
        .samples()
        .iter()
        .map(|s| mat2::norm2(&(s * mat2::dagger(s) - mat2::identity())))
        .fold(0.0, f64::max);
    let star = loopalg::loop_star(u);
    let inv = u.inverse()?;
    let mode_balance = star
        .coeffs()
        .iter()
        .zip(inv.coeffs())
        .map(|(a, b)| mat2::max_abs(&(a - b)))
        .fold(0.0, f64::max);
    Ok(RUnitaryReport {
        max_residual,
        mode_balance,
    })
}

/// Default length of the unitarizer grid.
pub const UNITARIZER_LEN: usize = 1024;

/// Monodromy of `spec` on [`unitarizer_grid`] and its unitarizer.
pub fn unitarizer_for(
    spec: &LaurentSpec,
    len: usize,
    flow_opts: &FlowOptions,
    eps_pos: f64,
) -> Result<(DiagonalUnitarizer, MatrixLoop)> {
    let grid = unitarizer_grid(len)?;
    let reduced = flow::reduced_monodromy(spec, &grid, flow_opts)?;
    let m = reduced.monodromy();
    let sign = ReducedMonodromy::SIGN as f64;
    let verdict = delta_unitarizable_test(&m, sign)?;
    if verdict
        .samples
        .iter()
        .all(|v| *v == SampleVerdict::TriviallyUnitary)
    {
        return Ok((DiagonalUnitarizer::identity(grid), m));
    }
    let v = build_unitarizer_with(&m, sign, eps_pos, Some(&reduced.scaled_offdiagonal()))?;
    Ok((v, m))
}

/// The grid on which the unitarizer is built: `len` samples rotated by half a step.
pub fn unitarizer_grid(len: usize) -> Result<LoopGrid> {
    Ok(LoopGrid::new(len, len / 2)?.shifted())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat2::{c, real_mat};

    #[test]
    fn round_sphere_potential_needs_no_unitarizer() {
        let (v, m) =
            unitarizer_for(&LaurentSpec::zero(), 64, &FlowOptions::default(), 1e-10).unwrap();
        assert_eq!(v.log_coeffs.len(), 1);
        assert!(m
            .samples()
            .iter()
            .all(|s| mat2::norm2(&(s + mat2::identity())) < 1e-9));
    }

    fn elliptic() -> Mat2 {
        let (s, co) = 1f64.sin_cos();
        real_mat(co, 2.0 * s, -0.5 * s, co)
    }

    #[test]
    fn minus_identity_is_trivially_unitary() {
        let m = MatrixLoop::constant(LoopGrid::new(16, 8).unwrap(), -mat2::identity());
        let v = delta_unitarizable_test(&m, -1.0).unwrap();
        assert!(v
            .samples
            .iter()
            .all(|s| *s == SampleVerdict::TriviallyUnitary));
    }

    #[test]
    fn constant_elliptic_element() {
        let g = LoopGrid::new(16, 8).unwrap().shifted();
        let m = MatrixLoop::constant(g, elliptic());
        let v = delta_unitarizable_test(&m, 1.0).unwrap();
        assert!(v.passed() && v.samples.iter().all(|s| *s == SampleVerdict::Unitarizable));
        let u = build_unitarizer(&m, 1.0, 1e-10).unwrap();
        assert!(u.residual <= 1e-10);
        // |v|⁴ = |c|/|b| = 1/4
        for s in u.v.samples() {
            assert!((s.norm() - 0.5f64.sqrt()).abs() < 1e-12);
        }
        assert!(u.v_at(mat2::ZERO).im.abs() < 1e-15 && u.v_at(mat2::ZERO).re > 0.0);
    }

    #[test]
    fn hyperbolic_element_rejected() {
        let m = MatrixLoop::constant(LoopGrid::new(16, 8).unwrap(), real_mat(2.0, 0.0, 0.0, 0.5));
        assert!(matches!(
            delta_unitarizable_test(&m, 1.0),
            Err(CmcError::NotDeltaUnitarizable { .. })
        ));
    }

    #[test]
    fn already_unitary_gives_identity() {
        let (s, co) = 0.7f64.sin_cos();
        let m = MatrixLoop::constant(
            LoopGrid::new(16, 8).unwrap().shifted(),
            real_mat(co, s, -s, co),
        );
        let u = build_unitarizer(&m, 1.0, 1e-10).unwrap();
        for v in u.v.samples() {
            assert!((v - 1.0).norm() < 1e-13);
        }
    }

    #[test]
    fn r_unitary_examples() {
        let g = LoopGrid::new(16, 8).unwrap();
        assert_eq!(
            verify_r_unitary(&MatrixLoop::identity(g))
                .unwrap()
                .max_residual,
            0.0
        );
        let d = MatrixLoop::from_fn(g, |l| mat2::mat(l, mat2::ZERO, mat2::ZERO, l.inv()));
        let r = verify_r_unitary(&d).unwrap();
        assert!(r.max_residual < 1e-14 && r.mode_balance < 1e-14);
        let h = MatrixLoop::constant(g, real_mat(2.0, 0.0, 0.0, 0.5));
        assert!((verify_r_unitary(&h).unwrap().max_residual - 3.0).abs() < 1e-14);
    }

    fn delaunay_monodromy(len: usize) -> MatrixLoop {
        let g = unitarizer_grid(len).unwrap();
        flow::monodromy_circle(
            &LaurentSpec::constant(1.0 / 32.0),
            &g,
            &FlowOptions::default(),
        )
        .unwrap()
    }

    fn reduced_build(spec: &LaurentSpec, len: usize) -> DiagonalUnitarizer {
        let g = unitarizer_grid(len).unwrap();
        let red = flow::reduced_monodromy(spec, &g, &FlowOptions::default()).unwrap();
        build_unitarizer_with(
            &red.monodromy(),
            -1.0,
            1e-10,
            Some(&red.scaled_offdiagonal()),
        )
        .unwrap()
    }

    #[test]
    fn delaunay_unitarizer() {
        let m = delaunay_monodromy(256);
        let u = build_unitarizer(&m, -1.0, 1e-10).unwrap();
        assert!(u.residual < 1e-8, "{}", u.residual);
        assert!(u.negative_energy < 1e-10);
        assert!(u.singular.is_empty());
    }

    #[test]
    fn unique_up_to_constant_phase() {
        let spec = LaurentSpec::symmetric_family(2, 1.0 / 16.0, 0.01);
        let a = reduced_build(&spec, 1024);
        let b = reduced_build(&spec, 2048);
        let ratios: Vec<C64> = (0..16)
            .map(|k| {
                let l = C64::from_polar(1.0, 0.3 + 0.37 * k as f64);
                a.v_at(l) / b.v_at(l)
            })
            .collect();
        for r in &ratios {
            assert!((r - ratios[0]).norm() < 1e-8 && (r.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn depends_only_on_bc_and_abs_c() {
        let m = delaunay_monodromy(128);
        let phase = mat2::mat(
            C64::from_polar(1.0, 0.4),
            mat2::ZERO,
            mat2::ZERO,
            C64::from_polar(1.0, -0.4),
        );
        let m2 = m.map(|s| phase * s * mat2::dagger(&phase));
        let a = build_unitarizer(&m, -1.0, 1e-10).unwrap();
        let b = build_unitarizer(&m2, -1.0, 1e-10).unwrap();
        for (x, y) in a.v.samples().iter().zip(b.v.samples()) {
            assert!((x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn bridge_interpolates_gaps() {
        let mut v = vec![0.0, 1.0, 99.0, 3.0, 4.0, 99.0];
        bridge(&mut v, &[false, false, true, false, false, true]);
        assert_eq!(v[2], 2.0);
        assert_eq!(v[5], 2.0);
        assert_eq!(
            winding(&[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)]),
            1
        );
    }
}
