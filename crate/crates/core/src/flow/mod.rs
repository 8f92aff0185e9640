//! Integration of `dΦ = Φ ξ` along paths in the punctured plane, written in
//! `w = log z` as `dΦ/dw = Φ Q(e^w, λ)`.

pub mod rk;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CmcError, Result};
use crate::loopalg::{LoopGrid, MatrixLoop};
use crate::mat2::{self, Mat2, C64};
use crate::potential::{CylinderPotential, LaurentSpec, LoopPotential};
pub use rk::{RkOptions, RkStats};

/// Number of λ samples integrated together with one shared step size.
const LAMBDA_CHUNK: usize = 8;

/// A path in the punctured plane. Circles start at angle 0 and close exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathSpec {
    /// `|z| = radius` once counterclockwise, recorded at `nodes` equal arcs.
    Circle {
        radius: f64,
        nodes: usize,
    },
    /// Radial segment at fixed angle, recorded at `nodes` points equally spaced in `log r`.
    Radial {
        angle: f64,
        r0: f64,
        r1: f64,
        nodes: usize,
    },
    /// Arc of `|z| = radius` from `theta0` to `theta1`, recorded at `nodes` equal arcs.
    Arc {
        radius: f64,
        theta0: f64,
        theta1: f64,
        nodes: usize,
    },
    Concat(Vec<PathSpec>),
}

/// Straight piece in the `log z` plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub w0: C64,
    pub w1: C64,
}

impl Segment {
    pub fn at(&self, s: f64) -> C64 {
        self.w0 + (self.w1 - self.w0) * s
    }
}

fn checked_log(r: f64) -> Result<f64> {
    if r > 0.0 && r.is_finite() {
        Ok(r.ln())
    } else {
        Err(CmcError::Precondition(format!(
            "path radius {r} does not avoid z = 0"
        )))
    }
}

fn pieces(w0: C64, w1: C64, nodes: usize, out: &mut Vec<Segment>) {
    let n = nodes.max(1);
    for k in 0..n {
        let a = w0 + (w1 - w0) * (k as f64 / n as f64);
        let b = if k + 1 == n {
            w1
        } else {
            w0 + (w1 - w0) * ((k + 1) as f64 / n as f64)
        };
        out.push(Segment { w0: a, w1: b });
    }
}

impl PathSpec {
    /// The path as recorded segments in the `log z` plane.
    pub fn segments(&self) -> Result<Vec<Segment>> {
        let mut out = Vec::new();
        self.push_segments(&mut out)?;
        Ok(out)
    }

    fn push_segments(&self, out: &mut Vec<Segment>) -> Result<()> {
        match *self {
            PathSpec::Circle { radius, nodes } => {
                let lr = checked_log(radius)?;
                pieces(C64::new(lr, 0.0), C64::new(lr, 2.0 * PI), nodes, out);
            }
            PathSpec::Radial {
                angle,
                r0,
                r1,
                nodes,
            } => {
                let a = checked_log(r0)?;
                let b = checked_log(r1)?;
                pieces(C64::new(a, angle), C64::new(b, angle), nodes, out);
            }
            PathSpec::Arc {
                radius,
                theta0,
                theta1,
                nodes,
            } => {
                let lr = checked_log(radius)?;
                pieces(C64::new(lr, theta0), C64::new(lr, theta1), nodes, out);
            }
            PathSpec::Concat(ref parts) => {
                for p in parts {
                    p.push_segments(out)?;
                }
            }
        }
        Ok(())
    }
}

/// Solutions along a path: `frames[node][j]` is `Φ(z_node, λ_j)`.
#[derive(Clone, Debug)]
pub struct FrameField {
    pub lambdas: Vec<C64>,
    /// Recorded points in `log z`; node 0 is the start of the path.
    pub nodes: Vec<C64>,
    pub frames: Vec<Vec<Mat2>>,
    pub stats: RkStats,
}

impl FrameField {
    pub fn last(&self) -> &[Mat2] {
        self.frames
            .last()
            .expect("frame field has at least the initial node")
    }

    pub fn z_nodes(&self) -> Vec<C64> {
        self.nodes.iter().map(|w| w.exp()).collect()
    }

    /// Largest `|det Φ − 1|` over all stored frames.
    pub fn det_residual(&self) -> f64 {
        self.frames
            .iter()
            .flatten()
            .map(|m| (mat2::det(m) - 1.0).norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    pub rk: RkOptions,
    /// Divide by `√det` after every accepted step.
    pub renormalize_det: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            rk: RkOptions::default(),
            renormalize_det: true,
        }
    }
}

impl FlowOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rk: RkOptions {
                tol,
                ..RkOptions::default()
            },
            ..Self::default()
        }
    }
}

fn integrate_chunk<P: LoopPotential + ?Sized>(
    potential: &P,
    segments: &[Segment],
    lambdas: &[C64],
    initial: &[Mat2],
    opts: &FlowOptions,
) -> Result<(Vec<Vec<Mat2>>, RkStats)> {
    let n = lambdas.len();
    let mut y = initial.to_vec();
    let mut out = Vec::with_capacity(segments.len() + 1);
    out.push(y.clone());
    let mut stepper = rk::Stepper::new(n, opts.rk);
    let renorm = opts.renormalize_det;
    for seg in segments {
        let dw = seg.w1 - seg.w0;
        let q = std::cell::RefCell::new(vec![Mat2::zeros(); n]);
        let rhs = |s: f64, y: &[Mat2], dy: &mut [Mat2]| {
            let z = seg.at(s).exp();
            let mut q = q.borrow_mut();
            potential.q_batch(z, lambdas, &mut q);
            for i in 0..y.len() {
                dy[i] = y[i] * q[i] * dw;
            }
        };
        stepper.run(
            &rhs,
            &mut y,
            dw.norm(),
            |s| seg.at(s),
            |y| {
                if renorm {
                    y.iter_mut().for_each(rk::renormalize_det);
                }
            },
        )?;
        out.push(y.clone());
    }
    Ok((out, stepper.stats))
}

/// Integrate `dΦ = Φ ξ` along `path` for every `λ` in `lambdas`, starting
/// from `initial[j]` (identity when `None`).
pub fn integrate_potential<P: LoopPotential + ?Sized>(
    potential: &P,
    path: &PathSpec,
    lambdas: &[C64],
    initial: Option<&[Mat2]>,
    opts: &FlowOptions,
) -> Result<FrameField> {
    if let Some(&l) = lambdas.iter().find(|l| l.norm() == 0.0) {
        return Err(CmcError::PoleOfPotential {
            z: C64::new(1.0, 0.0),
            lambda: l,
        });
    }
    let segments = path.segments()?;
    let init: Vec<Mat2> = match initial {
        Some(v) if v.len() == lambdas.len() => v.to_vec(),
        Some(v) => {
            return Err(CmcError::Precondition(format!(
                "{} initial conditions for {} lambda samples",
                v.len(),
                lambdas.len()
            )))
        }
        None => vec![mat2::identity(); lambdas.len()],
    };
    let chunks: Vec<(Vec<Vec<Mat2>>, RkStats)> = lambdas
        .par_chunks(LAMBDA_CHUNK)
        .zip(init.par_chunks(LAMBDA_CHUNK))
        .map(|(ls, ys)| integrate_chunk(potential, &segments, ls, ys, opts))
        .collect::<Result<_>>()?;

    let mut nodes = Vec::with_capacity(segments.len() + 1);
    nodes.push(segments.first().map_or(C64::new(0.0, 0.0), |s| s.w0));
    nodes.extend(segments.iter().map(|s| s.w1));
    let mut frames = vec![Vec::with_capacity(lambdas.len()); segments.len() + 1];
    let mut stats = RkStats::default();
    for (chunk_frames, chunk_stats) in &chunks {
        for (node, f) in chunk_frames.iter().enumerate() {
            frames[node].extend_from_slice(f);
        }
        stats.merge(chunk_stats);
    }
    Ok(FrameField {
        lambdas: lambdas.to_vec(),
        nodes,
        frames,
        stats,
    })
}

/// [`integrate_potential`] for the cylinder potential of `spec`.
pub fn integrate(
    spec: &LaurentSpec,
    path: &PathSpec,
    lambdas: &[C64],
    initial: Option<&[Mat2]>,
    opts: &FlowOptions,
) -> Result<FrameField> {
    integrate_potential(
        &CylinderPotential::new(spec.clone()),
        path,
        lambdas,
        initial,
        opts,
    )
}

/// Monodromy along the unit circle with `Φ(1) = id`, sampled on `grid`.
pub fn monodromy_circle_potential<P: LoopPotential + ?Sized>(
    potential: &P,
    grid: &LoopGrid,
    opts: &FlowOptions,
) -> Result<(MatrixLoop, RkStats)> {
    let path = PathSpec::Circle {
        radius: 1.0,
        nodes: 1,
    };
    let field = integrate_potential(potential, &path, &grid.lambdas(), None, opts)?;
    Ok((
        MatrixLoop::from_samples(*grid, field.last().to_vec()),
        field.stats,
    ))
}

pub fn monodromy_circle(
    spec: &LaurentSpec,
    grid: &LoopGrid,
    opts: &FlowOptions,
) -> Result<MatrixLoop> {
    Ok(monodromy_circle_potential(&CylinderPotential::new(spec.clone()), grid, opts)?.0)
}

/// `(M(1), M′(1), M″(1))`, derivatives in `λ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonodromyJet {
    pub m: Mat2,
    pub dm: Mat2,
    pub d2m: Mat2,
}

/// Jet of the unit-circle monodromy at `λ = 1` from the variational system
/// `Φ_λ' = Φ_λ Q + Φ Q_λ`, `Φ_λλ' = Φ_λλ Q + 2 Φ_λ Q_λ + Φ Q_λλ`.
pub fn lambda_jet_potential<P: LoopPotential + ?Sized>(
    potential: &P,
    opts: &FlowOptions,
) -> Result<MonodromyJet> {
    let one = C64::new(1.0, 0.0);
    let seg = Segment {
        w0: C64::new(0.0, 0.0),
        w1: C64::new(0.0, 2.0 * PI),
    };
    let dw = seg.w1 - seg.w0;
    let rhs = |s: f64, y: &[Mat2], dy: &mut [Mat2]| {
        let z = seg.at(s).exp();
        let q = potential.q(z, one);
        let q1 = potential.dq_dlambda(z, one);
        let q2 = potential.d2q_dlambda2(z, one);
        dy[0] = y[0] * q * dw;
        dy[1] = (y[1] * q + y[0] * q1) * dw;
        dy[2] = (y[2] * q + (y[1] * q1) * C64::new(2.0, 0.0) + y[0] * q2) * dw;
    };
    let mut y = vec![mat2::identity(), Mat2::zeros(), Mat2::zeros()];
    let mut stepper = rk::Stepper::new(3, opts.rk);
    stepper.run(&rhs, &mut y, dw.norm(), |s| seg.at(s), |_| {})?;
    Ok(MonodromyJet {
        m: y[0],
        dm: y[1],
        d2m: y[2],
    })
}

pub fn lambda_jet_at_one(spec: &LaurentSpec, opts: &FlowOptions) -> Result<MonodromyJet> {
    lambda_jet_potential(&CylinderPotential::new(spec.clone()), opts)
}

/// Monodromy computed in the straightening gauge `η = η₀ + tη₁`. With
/// `dN = N η`, `N(1) = id` and `N = E(id + tY)`, `E = exp((z−1)η₀)`, the
/// correction solves `Y′ = η₁ + [Y, η₀] + t Y η₁`, and
/// `M = −g(1) (id + tY) g(1)⁻¹`; the sign comes from `√z` in the gauge.
#[derive(Clone, Debug)]
pub struct ReducedMonodromy {
    pub grid: LoopGrid,
    /// `t(λ_j) = sin²(θ_j/2)`.
    pub t: Vec<f64>,
    /// `Y` after one turn.
    pub y: Vec<Mat2>,
    pub stats: RkStats,
}

impl ReducedMonodromy {
    pub const SIGN: i8 = -1;

    fn conjugated(&self, j: usize) -> Mat2 {
        let g = crate::potential::StraighteningGauge::at_base_point_lambda_one();
        let g_inv = mat2::inverse(&g).expect("g(1) is invertible");
        g * self.y[j] * g_inv
    }

    /// `M(λ_j)`.
    pub fn monodromy(&self) -> MatrixLoop {
        let samples = (0..self.grid.len)
            .map(|j| {
                let l = self.grid.lambda(j);
                let k = self.conjugated(j);
                let dkd = mat2::mat(k[(0, 0)], k[(0, 1)] / l, k[(1, 0)] * l, k[(1, 1)]);
                -(mat2::identity() + dkd * C64::new(self.t[j], 0.0))
            })
            .collect();
        MatrixLoop::from_samples(self.grid, samples)
    }

    /// `(b, c)` of `M` divided by the common real factor `−t`.
    pub fn scaled_offdiagonal(&self) -> Vec<(C64, C64)> {
        (0..self.grid.len)
            .map(|j| {
                let l = self.grid.lambda(j);
                let k = self.conjugated(j);
                (k[(0, 1)] / l, k[(1, 0)] * l)
            })
            .collect()
    }
}

pub fn reduced_monodromy(
    spec: &LaurentSpec,
    grid: &LoopGrid,
    opts: &FlowOptions,
) -> Result<ReducedMonodromy> {
    let t: Vec<f64> = (0..grid.len)
        .map(|j| (grid.theta(j) / 2.0).sin().powi(2))
        .collect();
    let seg = Segment {
        w0: C64::new(0.0, 0.0),
        w1: C64::new(0.0, 2.0 * PI),
    };
    let dw = seg.w1 - seg.w0;
    let eta0 = mat2::real_mat(0.0, 1.0, 0.0, 0.0);
    let shape = mat2::real_mat(1.0, -1.0, 1.0, -1.0);
    let chunks: Vec<(Vec<Mat2>, RkStats)> = t
        .par_chunks(LAMBDA_CHUNK)
        .map(|ts| {
            let rhs = |s: f64, y: &[Mat2], dy: &mut [Mat2]| {
                let z = seg.at(s).exp();
                let beta = -4.0 * spec.scaled_f(z) / (z * z);
                let eta1 = shape * beta;
                let scale = z * dw;
                for i in 0..y.len() {
                    let yi = y[i];
                    dy[i] =
                        (eta1 + yi * eta0 - eta0 * yi + yi * eta1 * C64::new(ts[i], 0.0)) * scale;
                }
            };
            let mut y = vec![Mat2::zeros(); ts.len()];
            let mut stepper = rk::Stepper::new(ts.len(), opts.rk);
            stepper.run(&rhs, &mut y, dw.norm(), |s| seg.at(s), |_| {})?;
            Ok((y, stepper.stats))
        })
        .collect::<Result<_>>()?;
    let mut y = Vec::with_capacity(grid.len);
    let mut stats = RkStats::default();
    for (c, st) in &chunks {
        y.extend_from_slice(c);
        stats.merge(st);
    }
    Ok(ReducedMonodromy {
        grid: *grid,
        t,
        y,
        stats,
    })
}

/// `exp(t D)` for a trace-free 2×2 matrix `D`.
pub fn expm_tracefree(d: &Mat2, t: C64) -> Mat2 {
    let w2 = -mat2::det(d);
    let w = w2.sqrt();
    let wt = w * t;
    let (ch, sh_over) = if wt.norm() < 1e-6 {
        (1.0 + wt * wt / 2.0, t * (1.0 + wt * wt / 6.0))
    } else {
        (wt.cosh(), wt.sinh() / w)
    };
    mat2::identity() * ch + d * sh_over
}

/// Closed form `exp(2πi D(λ))`, `D = [[0, λ⁻¹], [λ/4 + (1−λ)² τa₀, 0]]`: the
/// unit-circle monodromy of a constant potential.
pub fn constant_monodromy(tau_a0: f64, lambda: C64) -> Mat2 {
    let one_minus = 1.0 - lambda;
    let d = mat2::mat(
        mat2::ZERO,
        lambda.inv(),
        0.25 * lambda + one_minus * one_minus * tau_a0,
        mat2::ZERO,
    );
    expm_tracefree(&d, C64::new(0.0, 2.0 * PI))
}
