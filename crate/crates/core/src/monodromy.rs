//! Analysis of the unit-circle monodromy: closing conditions, the series
//! coefficient `A` in `M = s(id + A(λ−1)² + …)`, weight, trace profile and
//! the search for an admissible scale `τ₀`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{CmcError, Result};
use crate::flow::{self, FlowOptions, MonodromyJet};
use crate::loopalg::{LoopGrid, MatrixLoop};
use crate::mat2::{self, Mat2, C64};
use crate::potential::{self, LaurentSpec, StraighteningGauge};

/// Closing conditions hold when both residuals are below this.
pub const CLOSING_TOL: f64 = 1e-6;
/// Agreement required between the jet and the polynomial fit for `A`.
pub const FIT_TOL: f64 = 1e-6;
/// Slack on `|s·trace| ≤ 2`.
pub const TRACE_SLACK: f64 = 1e-9;
/// Largest admissible `|Im trace|`.
pub const TRACE_IMAG_TOL: f64 = 1e-8;
/// Number of samples nearest `λ = 1` used in local fits.
pub const FIT_SAMPLES: usize = 8;
/// Quadrature nodes of the P₁ oracle.
pub const P1_QUADRATURE_NODES: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Closing {
    pub sign: i8,
    /// `‖M(1) − s·id‖`.
    pub m_residual: f64,
    /// `‖M′(1)‖`.
    pub dm_residual: f64,
}

impl Closing {
    pub fn s(&self) -> f64 {
        self.sign as f64
    }
}

pub fn closing_check(jet: &MonodromyJet) -> Result<Closing> {
    let plus = mat2::norm2(&(jet.m - mat2::identity()));
    let minus = mat2::norm2(&(jet.m + mat2::identity()));
    let (sign, m_residual) = if minus <= plus {
        (-1, minus)
    } else {
        (1, plus)
    };
    let dm_residual = mat2::norm2(&jet.dm);
    let worst = m_residual.max(dm_residual);
    if !(worst <= CLOSING_TOL) {
        return Err(CmcError::ClosingViolated { residual: worst });
    }
    Ok(Closing {
        sign,
        m_residual,
        dm_residual,
    })
}

/// Indices of the `count` samples closest to `λ = 1`.
fn nearest_to_one(grid: &LoopGrid, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..grid.len).collect();
    idx.sort_by(|&a, &b| {
        let da = (grid.lambda(a) - 1.0).norm();
        let db = (grid.lambda(b) - 1.0).norm();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    idx.truncate(count);
    idx.sort_unstable();
    idx
}

/// Least-squares fit of `s·M(λ_j) − id ≈ Σ_{p=2}^{7} A_p (λ_j − 1)^p`; returns `A_2`.
pub fn fit_a(m: &MatrixLoop, sign: f64) -> Mat2 {
    let grid = m.grid();
    let idx = nearest_to_one(grid, FIT_SAMPLES);
    let h = idx
        .iter()
        .map(|&j| (grid.lambda(j) - 1.0).norm())
        .fold(0.0, f64::max);
    let powers = [2, 3, 4, 5, 6, 7];
    let x = DMatrix::from_fn(idx.len(), powers.len(), |r, c| {
        ((grid.lambda(idx[r]) - 1.0) / h).powi(powers[c])
    });
    let svd = x.svd(true, true);
    let mut a = Mat2::zeros();
    for e in 0..4 {
        let (row, col) = (e / 2, e % 2);
        let y = DVector::from_fn(idx.len(), |r, _| {
            let s = m.samples()[idx[r]] * C64::new(sign, 0.0) - mat2::identity();
            s[(row, col)]
        });
        let sol = svd.solve(&y, 1e-14).expect("svd with both factors");
        a[(row, col)] = sol[0] / (h * h);
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesCoefficient {
    /// `s·M″(1)/2` from the variational jet.
    #[serde(serialize_with = "ser_mat")]
    pub a: Mat2,
    /// Same coefficient from the polynomial fit on grid samples.
    #[serde(serialize_with = "ser_mat")]
    pub a_fit: Mat2,
    pub disagreement: f64,
}

/// `A` from the jet, cross-validated by the fit on `m`.
pub fn extract_a(
    jet: &MonodromyJet,
    closing: &Closing,
    m: &MatrixLoop,
) -> Result<SeriesCoefficient> {
    let a = jet.d2m * C64::new(closing.s() / 2.0, 0.0);
    let a_fit = fit_a(m, closing.s());
    let disagreement = mat2::max_abs(&(a - a_fit));
    if !(disagreement <= FIT_TOL) {
        return Err(CmcError::SeriesExtractionUnstable { disagreement });
    }
    Ok(SeriesCoefficient {
        a,
        a_fit,
        disagreement,
    })
}

/// `C = [[a₀, −a₋₁], [a₁, −a₀]]` from the scaled coefficients.
pub fn residue_matrix(spec: &LaurentSpec) -> Mat2 {
    mat2::mat(
        spec.scaled_coeff(0),
        -spec.scaled_coeff(-1),
        spec.scaled_coeff(1),
        -spec.scaled_coeff(0),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct P1Oracle {
    /// Residue theorem applied to `∮ β [[z, −z²], [1, −z]]` with `β = −4τf/z² dz`.
    #[serde(serialize_with = "ser_mat")]
    pub residue: Mat2,
    /// Trapezoidal quadrature of the same integral.
    #[serde(serialize_with = "ser_mat")]
    pub quadrature: Mat2,
    pub difference: f64,
    /// The closed form `2πi C` without the normalization constant.
    #[serde(serialize_with = "ser_mat")]
    pub printed: Mat2,
    /// `−(1/4) g(1) P₁ g(1)⁻¹` from the quadrature value.
    #[serde(serialize_with = "ser_mat")]
    pub a_prediction: Mat2,
    /// `−(1/4) g(1) (2πi C) g(1)⁻¹`.
    #[serde(serialize_with = "ser_mat")]
    pub a_printed: Mat2,
}

pub fn p1_residue_oracle(spec: &LaurentSpec) -> Result<P1Oracle> {
    let c = residue_matrix(spec);
    let two_pi_i = C64::new(0.0, 2.0 * PI);
    let residue = c * (-4.0 * two_pi_i);
    let n = P1_QUADRATURE_NODES;
    let mut quadrature = Mat2::zeros();
    for k in 0..n {
        let z = C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
        let beta = -4.0 * spec.scaled_f(z) / (z * z);
        let dz = C64::new(0.0, 2.0 * PI / n as f64) * z;
        quadrature += mat2::mat(z, -z * z, mat2::ONE, -z) * (beta * dz);
    }
    let difference = mat2::max_abs(&(quadrature - residue));
    if difference > 1e-9 {
        return Err(CmcError::Precondition(format!(
            "P1 quadrature and residue routes differ by {difference:.3e}"
        )));
    }
    let printed = c * two_pi_i;
    let g = StraighteningGauge::at_base_point_lambda_one();
    let g_inv = mat2::inverse(&g).expect("g(1) is invertible");
    let quarter = C64::new(-0.25, 0.0);
    Ok(P1Oracle {
        residue,
        quadrature,
        difference,
        printed,
        a_prediction: g * quadrature * g_inv * quarter,
        a_printed: g * printed * g_inv * quarter,
    })
}

/// Ratio between the quadrature value of `P₁` and the printed `2πi C`,
/// determined on the reference potential `f ≡ 1`.
pub fn normalization_constant() -> f64 {
    let oracle = p1_residue_oracle(&LaurentSpec::constant(1.0)).expect("reference oracle");
    let ratio = oracle.quadrature[(0, 0)] / oracle.printed[(0, 0)];
    ratio.re
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Weight {
    /// `√|det A|`.
    pub force_length: f64,
    /// Global constant `c` relating the true `A` to the printed one.
    pub normalization_constant: f64,
    /// `√|det A| / |c|`.
    pub weight: f64,
    /// `(π/2)√κ`.
    pub closed_form: f64,
    pub relative_deviation: f64,
}

pub fn weight(a: &Mat2, spec: &LaurentSpec) -> Weight {
    let force_length = mat2::det(a).norm().sqrt();
    let c = normalization_constant();
    let weight = force_length / c.abs();
    let closed_form = closed_form_weight(spec);
    let relative_deviation = if closed_form > 0.0 {
        (weight - closed_form).abs() / closed_form
    } else {
        weight
    };
    Weight {
        force_length,
        normalization_constant: c,
        weight,
        closed_form,
        relative_deviation,
    }
}

/// `(π/2)√κ`, zero for `κ ≤ 0`.
pub fn closed_form_weight(spec: &LaurentSpec) -> f64 {
    PI / 2.0 * potential::kappa(spec).max(0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceProfile {
    pub theta: Vec<f64>,
    /// `s·trace M(λ_j)`.
    pub trace: Vec<C64>,
    pub max_imag: f64,
    pub min: f64,
    pub max: f64,
    pub verdict: bool,
    /// First sample `(index, θ)` violating the bound.
    pub first_failure: Option<(usize, f64)>,
}

pub fn trace_profile(m: &MatrixLoop, sign: f64) -> TraceProfile {
    let grid = m.grid();
    let theta: Vec<f64> = (0..grid.len).map(|j| grid.theta(j)).collect();
    let trace: Vec<C64> = m.samples().iter().map(|s| mat2::trace(s) * sign).collect();
    let max_imag = trace.iter().map(|t| t.im.abs()).fold(0.0, f64::max);
    let min = trace.iter().map(|t| t.re).fold(f64::INFINITY, f64::min);
    let max = trace.iter().map(|t| t.re).fold(f64::NEG_INFINITY, f64::max);
    let first_failure = trace
        .iter()
        .position(|t| !(t.re.abs() <= 2.0 + TRACE_SLACK) || !(t.im.abs() <= TRACE_IMAG_TOL))
        .map(|j| (j, theta[j]));
    TraceProfile {
        theta,
        trace,
        max_imag,
        min,
        max,
        verdict: first_failure.is_none(),
        first_failure,
    }
}

pub fn write_trace_csv(profile: &TraceProfile, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "theta,re_trace,im_trace")?;
    for (th, t) in profile.theta.iter().zip(&profile.trace) {
        writeln!(out, "{th:.17e},{:.17e},{:.17e}", t.re, t.im)?;
    }
    out.flush()?;
    Ok(())
}

/// Slope of `log|s·trace − 2|` against `log|λ − 1|` over the samples nearest `λ = 1`.
pub fn trace_decay_exponent(m: &MatrixLoop, sign: f64) -> f64 {
    let grid = m.grid();
    let pts: Vec<(f64, f64)> = nearest_to_one(grid, FIT_SAMPLES + 1)
        .into_iter()
        .filter(|&j| j != 0 || grid.offset != 0.0)
        .map(|j| {
            let x = (grid.lambda(j) - 1.0).norm().ln();
            let y = (mat2::trace(&m.samples()[j]) * sign - 2.0).norm().ln();
            (x, y)
        })
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .take(FIT_SAMPLES)
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleSearch {
    pub tau0: f64,
    /// `(τ, verdict)` for every evaluated scale, in evaluation order.
    pub evaluations: Vec<(f64, bool)>,
    /// Verdict at `τ₀ / 2`, checked because monotonicity is not assumed.
    pub half_verdict: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleOptions {
    pub tau_min: f64,
    pub iterations: usize,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        Self {
            tau_min: 1e-4,
            iterations: 20,
        }
    }
}

/// Trace verdict of `spec` at its own scale.
pub fn trace_verdict(spec: &LaurentSpec, grid: &LoopGrid, flow_opts: &FlowOptions) -> Result<bool> {
    let scaled = spec.clone();
    let m = flow::monodromy_circle(&scaled, grid, flow_opts)?;
    let jet = flow::lambda_jet_at_one(&scaled, flow_opts)?;
    let closing = closing_check(&jet)?;
    Ok(trace_profile(&m, closing.s()).verdict)
}

/// Largest `τ ∈ (0, 1]` whose monodromy passes [`trace_profile`].
pub fn find_scale(
    spec: &LaurentSpec,
    grid: &LoopGrid,
    flow_opts: &FlowOptions,
    opts: &ScaleOptions,
) -> Result<ScaleSearch> {
    let mut evaluations = Vec::new();
    let mut eval = |tau: f64| -> Result<bool> {
        let v = trace_verdict(&spec.with_tau(tau), grid, flow_opts)?;
        evaluations.push((tau, v));
        Ok(v)
    };
    let tau0 = if eval(1.0)? {
        1.0
    } else {
        if !eval(opts.tau_min)? {
            return Err(CmcError::NoAdmissibleScale {
                tau_min: opts.tau_min,
            });
        }
        let (mut lo, mut hi) = (opts.tau_min, 1.0);
        for _ in 0..opts.iterations {
            let mid = 0.5 * (lo + hi);
            if eval(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let half_verdict = eval(0.5 * tau0)?;
    Ok(ScaleSearch {
        tau0,
        evaluations,
        half_verdict,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightPreservation {
    pub weight_m: f64,
    pub weight_u: f64,
    /// `‖A_U² − A_M²‖`; both squares are scalar for trace-free `A`.
    pub square_deviation: f64,
    pub weight_deviation: f64,
}

/// Compare the series coefficient of the unitarized monodromy `U` with `A` of `M`.
pub fn weight_preservation_check(a_m: &Mat2, sign: f64, u: &MatrixLoop) -> WeightPreservation {
    let a_u = fit_a(u, sign);
    let c = normalization_constant().abs();
    let weight_m = mat2::det(a_m).norm().sqrt() / c;
    let weight_u = mat2::det(&a_u).norm().sqrt() / c;
    WeightPreservation {
        weight_m,
        weight_u,
        square_deviation: mat2::norm2(&(a_u * a_u - a_m * a_m)),
        weight_deviation: (weight_u - weight_m).abs(),
    }
}

fn ser_mat<S: serde::Serializer>(m: &Mat2, s: S) -> std::result::Result<S::Ok, S::Error> {
    mat_rows(m).serialize(s)
}

/// Row-major `[[re, im]; 4]` layout used in reports.
pub fn mat_rows(m: &Mat2) -> [[[f64; 2]; 2]; 2] {
    let e = |r: usize, c: usize| [m[(r, c)].re, m[(r, c)].im];
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

#[derive(Clone, Debug, Serialize)]
pub struct MonodromyReport {
    pub tau: f64,
    pub sign: i8,
    pub closing: Closing,
    pub series: SeriesCoefficient,
    pub p1: P1Oracle,
    pub weight: Weight,
    pub kappa: f64,
    pub trace_range: [f64; 2],
    pub trace_verdict: bool,
    pub trace_max_imag: f64,
    pub trace_first_failure: Option<(usize, f64)>,
    pub diagonal_asymmetry: f64,
    pub trace_decay_exponent: f64,
    pub ode_error_estimate: f64,
    #[serde(skip)]
    pub profile: TraceProfile,
    #[serde(skip)]
    pub monodromy: MatrixLoop,
}

/// `max_j |M₁₁ − M₂₂|`.
pub fn diagonal_asymmetry(m: &MatrixLoop) -> f64 {
    m.samples()
        .iter()
        .map(|s| (s[(0, 0)] - s[(1, 1)]).norm())
        .fold(0.0, f64::max)
}

/// Full analysis at the scale stored in `spec`.
pub fn analyze(
    spec: &LaurentSpec,
    grid: &LoopGrid,
    flow_opts: &FlowOptions,
) -> Result<MonodromyReport> {
    let pot = potential::CylinderPotential::new(spec.clone());
    let (m, stats) = flow::monodromy_circle_potential(&pot, grid, flow_opts)?;
    let jet = flow::lambda_jet_potential(&pot, flow_opts)?;
    let closing = closing_check(&jet)?;
    let series = extract_a(&jet, &closing, &m)?;
    let p1 = p1_residue_oracle(spec)?;
    let profile = trace_profile(&m, closing.s());
    Ok(MonodromyReport {
        tau: spec.tau,
        sign: closing.sign,
        closing,
        weight: weight(&series.a, spec),
        series,
        p1,
        kappa: potential::kappa(spec),
        trace_range: [profile.min, profile.max],
        trace_verdict: profile.verdict,
        trace_max_imag: profile.max_imag,
        trace_first_failure: profile.first_failure,
        diagonal_asymmetry: diagonal_asymmetry(&m),
        trace_decay_exponent: trace_decay_exponent(&m, closing.s()),
        ode_error_estimate: stats.error_estimate,
        profile,
        monodromy: m,
    })
}
