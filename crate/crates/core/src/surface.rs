//! Assembly of the immersion over the cylinder domain: mesh, umbilics,
//! symmetry planes, discrete mean curvature and OBJ export.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CmcError, Result};
use crate::flow::{integrate_potential, FlowOptions, PathSpec};
use crate::iwasawa::{iwasawa_escalating, sym_point, IwasawaOptions};
use crate::loopalg::{LoopGrid, MatrixLoop};
use crate::mat2::{Mat2, C64};
use crate::potential::{CylinderPotential, LaurentSpec};
use crate::unitarize::DiagonalUnitarizer;

pub type Point = [f64; 3];

/// Log-spaced radii times equally spaced angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl DomainGrid {
    pub fn new(r_min: f64, r_max: f64, n_r: usize, n_theta: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_min.is_finite()) {
            return Err(CmcError::Precondition(format!(
                "r_min = {r_min} must be positive"
            )));
        }
        if !(r_max >= r_min && r_max.is_finite()) {
            return Err(CmcError::Precondition(format!(
                "r_max = {r_max} is below r_min = {r_min}"
            )));
        }
        if n_r == 0 || n_theta == 0 || (n_r > 1 && r_max == r_min) {
            return Err(CmcError::Precondition(format!(
                "degenerate domain grid {n_theta}x{n_r}"
            )));
        }
        Ok(Self {
            r_min,
            r_max,
            n_r,
            n_theta,
        })
    }

    /// `[e⁻², e²]`.
    pub fn default_annulus(n_theta: usize, n_r: usize) -> Result<Self> {
        Self::new((-2f64).exp(), 2f64.exp(), n_r, n_theta)
    }

    pub fn radii(&self) -> Vec<f64> {
        if self.n_r == 1 {
            return vec![self.r_min];
        }
        let (a, b) = (self.r_min.ln(), self.r_max.ln());
        (0..self.n_r)
            .map(|i| (a + (b - a) * i as f64 / (self.n_r - 1) as f64).exp())
            .collect()
    }

    pub fn theta(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n_theta as f64
    }

    pub fn index(&self, i: usize, k: usize) -> usize {
        i * self.n_theta + k % self.n_theta
    }

    /// Whether `r ↦ 1/r` permutes the radii.
    pub fn inversion_symmetric(&self) -> bool {
        (self.r_min * self.r_max - 1.0).abs() <= 1e-12
    }

    /// Nearest vertex to `z`, if `z` lies in the annulus.
    pub fn nearest(&self, z: C64) -> Option<usize> {
        let r = z.norm();
        if r < self.r_min * (1.0 - 1e-12) || r > self.r_max * (1.0 + 1e-12) {
            return None;
        }
        let i = if self.n_r == 1 {
            0
        } else {
            let t = (r.ln() - self.r_min.ln()) / (self.r_max.ln() - self.r_min.ln());
            ((t * (self.n_r - 1) as f64).round() as usize).min(self.n_r - 1)
        };
        let arg = z.arg().rem_euclid(2.0 * PI);
        let k = (arg / (2.0 * PI) * self.n_theta as f64).round() as usize % self.n_theta;
        Some(self.index(i, k))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SurfaceOptions {
    pub lambda_grid: LoopGrid,
    pub flow: FlowOptions,
    pub iwasawa: IwasawaOptions,
    /// Closure gate relative to the bounding-box diagonal.
    pub closure_tol: f64,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        Self {
            lambda_grid: LoopGrid::new(256, 64).expect("valid default grid"),
            flow: FlowOptions::default(),
            iwasawa: IwasawaOptions::default(),
            closure_tol: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UmbilicMarker {
    pub re: f64,
    pub im: f64,
    pub vertex: usize,
    /// `|f|` at the root.
    pub residual: f64,
}

/// Worst factorization diagnostics over all gridpoints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct FactorStats {
    pub points: usize,
    pub reconstruction: f64,
    pub unitarity: f64,
    pub negative_energy: f64,
    pub b0_normalization: f64,
    pub projection: f64,
    pub escalations: usize,
}

impl FactorStats {
    fn merge(&mut self, o: &FactorStats) {
        self.points += o.points;
        self.reconstruction = self.reconstruction.max(o.reconstruction);
        self.unitarity = self.unitarity.max(o.unitarity);
        self.negative_energy = self.negative_energy.max(o.negative_energy);
        self.b0_normalization = self.b0_normalization.max(o.b0_normalization);
        self.projection = self.projection.max(o.projection);
        self.escalations = self.escalations.max(o.escalations);
    }
}

#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    pub grid: DomainGrid,
    /// Row-major in `(i, k)`: radius index outer.
    pub vertices: Vec<Point>,
    /// `x(r_i, 2π)`, the extra column used for the closure test.
    pub seam: Vec<Point>,
    pub umbilics: Vec<UmbilicMarker>,
    pub closure_residual: f64,
    pub bbox_diagonal: f64,
    pub closure_ok: bool,
    pub factor: FactorStats,
    pub ode_error_estimate: f64,
}

impl SurfaceMesh {
    pub fn vertex(&self, i: usize, k: usize) -> Point {
        self.vertices[self.grid.index(i, k)]
    }

    pub fn quad_mesh(&self) -> QuadMesh {
        let g = &self.grid;
        let mut faces = Vec::with_capacity(g.n_r.saturating_sub(1) * g.n_theta);
        for i in 0..g.n_r.saturating_sub(1) {
            for k in 0..g.n_theta {
                faces.push([
                    g.index(i, k),
                    g.index(i, k + 1),
                    g.index(i + 1, k + 1),
                    g.index(i + 1, k),
                ]);
            }
        }
        QuadMesh {
            vertices: self.vertices.clone(),
            faces,
            umbilics: self.umbilics.clone(),
        }
    }
}

fn bbox_diagonal(points: &[Point]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    if points.is_empty() {
        return 0.0;
    }
    (0..3).map(|d| (hi[d] - lo[d]).powi(2)).sum::<f64>().sqrt()
}

fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `Φ` at every radius on the spine `θ = 0`, integrated outward from `z = 1`.
fn spine(
    potential: &CylinderPotential,
    radii: &[f64],
    lambdas: &[C64],
    opts: &FlowOptions,
) -> Result<Vec<Vec<Mat2>>> {
    let mut out = vec![Vec::new(); radii.len()];
    let inward: Vec<usize> = (0..radii.len()).rev().filter(|&i| radii[i] < 1.0).collect();
    let outward: Vec<usize> = (0..radii.len()).filter(|&i| radii[i] >= 1.0).collect();
    for order in [inward, outward] {
        if order.is_empty() {
            continue;
        }
        let mut prev = 1.0;
        let parts = order
            .iter()
            .map(|&i| {
                let p = PathSpec::Radial {
                    angle: 0.0,
                    r0: prev,
                    r1: radii[i],
                    nodes: 1,
                };
                prev = radii[i];
                p
            })
            .collect();
        let field = integrate_potential(potential, &PathSpec::Concat(parts), lambdas, None, opts)?;
        for (n, &i) in order.iter().enumerate() {
            out[i] = field.frames[n + 1].clone();
        }
    }
    Ok(out)
}

fn immersion(
    phi: &[Mat2],
    v_base: &[Mat2],
    v: &DiagonalUnitarizer,
    base: &LoopGrid,
    opts: &IwasawaOptions,
) -> Result<(Point, FactorStats)> {
    let build = |g: &LoopGrid| -> Result<MatrixLoop> {
        if g.len == base.len {
            let s = phi.iter().zip(v_base).map(|(p, vm)| vm * p).collect();
            Ok(MatrixLoop::from_samples(*g, s))
        } else {
            let fine = MatrixLoop::from_samples(*base, phi.to_vec()).resample(*g);
            let vg = v.on_grid(g);
            let s = fine
                .samples()
                .iter()
                .zip(&vg)
                .map(|(p, vm)| vm * p)
                .collect();
            Ok(MatrixLoop::from_samples(*g, s))
        }
    };
    let f = iwasawa_escalating(build, base, opts)?;
    let x = sym_point(&f.f)?;
    let stats = FactorStats {
        points: 1,
        reconstruction: f.residual,
        unitarity: f.unitarity,
        negative_energy: f.negative_energy,
        b0_normalization: f.b0_normalization,
        projection: x.projection_residual,
        escalations: f.escalations,
    };
    Ok((x.x, stats))
}

/// Immersion of the domain grid for `spec` (already scaled) and unitarizer `v`.
pub fn build_surface(
    spec: &LaurentSpec,
    v: &DiagonalUnitarizer,
    grid: &DomainGrid,
    opts: &SurfaceOptions,
) -> Result<SurfaceMesh> {
    let potential = CylinderPotential::new(spec.clone());
    let base = opts.lambda_grid;
    let lambdas = base.lambdas();
    let v_base = v.on_grid(&base);
    let radii = grid.radii();
    let spine = spine(&potential, &radii, &lambdas, &opts.flow)?;

    let rings: Vec<(Vec<Point>, FactorStats, f64)> = radii
        .par_iter()
        .zip(spine.par_iter())
        .map(|(&r, start)| -> Result<_> {
            let path = PathSpec::Arc {
                radius: r,
                theta0: 0.0,
                theta1: 2.0 * PI,
                nodes: grid.n_theta,
            };
            let field = integrate_potential(&potential, &path, &lambdas, Some(start), &opts.flow)?;
            let cols: Vec<(Point, FactorStats)> = field
                .frames
                .par_iter()
                .map(|phi| immersion(phi, &v_base, v, &base, &opts.iwasawa))
                .collect::<Result<_>>()?;
            let mut stats = FactorStats::default();
            let mut pts = Vec::with_capacity(cols.len());
            for (p, s) in cols {
                stats.merge(&s);
                pts.push(p);
            }
            Ok((pts, stats, field.stats.error_estimate))
        })
        .collect::<Result<_>>()?;

    let mut vertices = Vec::with_capacity(grid.n_r * grid.n_theta);
    let mut seam = Vec::with_capacity(grid.n_r);
    let mut factor = FactorStats::default();
    let mut ode_error_estimate = 0.0f64;
    for (pts, stats, err) in &rings {
        vertices.extend_from_slice(&pts[..grid.n_theta]);
        seam.push(pts[grid.n_theta]);
        factor.merge(stats);
        ode_error_estimate = ode_error_estimate.max(*err);
    }
    if vertices.iter().flatten().any(|x| !x.is_finite()) {
        return Err(CmcError::Precondition("non-finite immersion point".into()));
    }
    let closure_residual = (0..grid.n_r)
        .map(|i| dist(&seam[i], &vertices[grid.index(i, 0)]))
        .fold(0.0, f64::max);
    let bbox = bbox_diagonal(&vertices);
    let umbilics = if spec.is_zero() {
        Vec::new()
    } else {
        umbilic_markers(spec, grid)?
    };
    Ok(SurfaceMesh {
        grid: *grid,
        vertices,
        seam,
        umbilics,
        closure_residual,
        bbox_diagonal: bbox,
        closure_ok: closure_residual <= opts.closure_tol * bbox,
        factor,
        ode_error_estimate,
    })
}

fn umbilic_markers(spec: &LaurentSpec, grid: &DomainGrid) -> Result<Vec<UmbilicMarker>> {
    let roots = find_umbilics(spec, grid.r_min, grid.r_max)?;
    Ok(roots
        .into_iter()
        .filter_map(|z| {
            grid.nearest(z).map(|vertex| UmbilicMarker {
                re: z.re,
                im: z.im,
                vertex,
                residual: spec.f(z).norm(),
            })
        })
        .collect())
}

/// Polynomial coefficients of `z^m f(z)`, lowest degree first, without
/// leading or trailing zeros; `m` is the returned shift.
fn polynomial(spec: &LaurentSpec) -> (Vec<C64>, i32) {
    let nz: Vec<(i32, C64)> = spec
        .coeffs()
        .iter()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(k, c)| (*k, *c))
        .collect();
    let (lo, hi) = match (nz.first(), nz.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return (Vec::new(), 0),
    };
    let mut p = vec![C64::new(0.0, 0.0); (hi - lo + 1) as usize];
    for (k, c) in nz {
        p[(k - lo) as usize] = c;
    }
    (p, -lo)
}

/// Roots of the companion matrix of a polynomial given lowest degree first.
pub fn polynomial_roots(p: &[C64]) -> Vec<C64> {
    let d = p.len().saturating_sub(1);
    if d == 0 {
        return Vec::new();
    }
    let lead = p[d];
    let mut m = DMatrix::<C64>::zeros(d, d);
    for r in 1..d {
        m[(r, r - 1)] = C64::new(1.0, 0.0);
    }
    for r in 0..d {
        m[(r, d - 1)] = -p[r] / lead;
    }
    let (_, t) = m.schur().unpack();
    (0..d).map(|i| t[(i, i)]).collect()
}

/// Zeros of `f` in `r_min ≤ |z| ≤ r_max`, Newton-polished.
pub fn find_umbilics(spec: &LaurentSpec, r_min: f64, r_max: f64) -> Result<Vec<C64>> {
    let (p, _) = polynomial(spec);
    if p.is_empty() {
        return Err(CmcError::Precondition(
            "f vanishes identically: the umbilic locus is the whole domain".into(),
        ));
    }
    let mut roots: Vec<C64> = polynomial_roots(&p)
        .into_iter()
        .map(|z| newton_polish(spec, z))
        .filter(|z| {
            let r = z.norm();
            r >= r_min * (1.0 - 1e-12) && r <= r_max * (1.0 + 1e-12)
        })
        .collect();
    roots.sort_by(|a, b| {
        a.norm()
            .total_cmp(&b.norm())
            .then(a.arg().total_cmp(&b.arg()))
    });
    Ok(roots)
}

fn newton_polish(spec: &LaurentSpec, mut z: C64) -> C64 {
    for _ in 0..50 {
        let f = spec.f(z);
        if f.norm() <= 1e-15 {
            break;
        }
        let df = spec.df(z);
        if df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        z -= step;
        if step.norm() <= 1e-16 * z.norm().max(1.0) {
            break;
        }
    }
    z
}

/// Best orthogonal map plus translation carrying one point set onto another.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IsometryFit {
    /// Largest pairing residual.
    pub residual: f64,
    /// `residual` divided by the bounding-box diagonal.
    pub relative: f64,
    /// `+1` for a rotation, `−1` for a reflection.
    pub determinant: f64,
    /// Plane normal for a reflection, rotation axis for a half-turn.
    pub axis: [f64; 3],
}

pub fn fit_isometry(p: &[Point], q: &[Point]) -> IsometryFit {
    let n = p.len().max(1) as f64;
    let mean = |s: &[Point]| {
        let mut m = Vector3::zeros();
        for x in s {
            m += Vector3::new(x[0], x[1], x[2]);
        }
        m / n
    };
    let (mp, mq) = (mean(p), mean(q));
    let mut h = Matrix3::<f64>::zeros();
    for (a, b) in p.iter().zip(q) {
        let da = Vector3::new(a[0], a[1], a[2]) - mp;
        let db = Vector3::new(b[0], b[1], b[2]) - mq;
        h += da * db.transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let r = vt.transpose() * u.transpose();
    let t = mq - r * mp;
    let residual = p
        .iter()
        .zip(q)
        .map(|(a, b)| {
            (r * Vector3::new(a[0], a[1], a[2]) + t - Vector3::new(b[0], b[1], b[2])).norm()
        })
        .fold(0.0, f64::max);
    let det = r.determinant();
    // reflection: I − R = 2nnᵀ; half-turn: I + R = 2aaᵀ
    let s = if det < 0.0 {
        Matrix3::identity() - r
    } else {
        Matrix3::identity() + r
    };
    let col = (0..3)
        .max_by(|&a, &b| s.column(a).norm().total_cmp(&s.column(b).norm()))
        .unwrap_or(0);
    let axis = s.column(col).normalize();
    let mut all = p.to_vec();
    all.extend_from_slice(q);
    let bbox = bbox_diagonal(&all);
    IsometryFit {
        residual,
        relative: if bbox > 0.0 {
            residual / bbox
        } else {
            residual
        },
        determinant: det.signum(),
        axis: [axis[0], axis[1], axis[2]],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymmetryPlanes {
    /// Pairing `(r, θ) ↔ (r, −θ)`.
    pub conjugation: IsometryFit,
    /// Pairing `(r, θ) ↔ (1/r, θ)`.
    pub inversion: Option<IsometryFit>,
    /// Pairing `(r, θ) ↔ (1/r, −θ)`.
    pub antipodal: Option<IsometryFit>,
    /// Angle between the two fitted reflection planes.
    pub plane_angle: Option<f64>,
    /// Largest relative residual among the two reflections.
    pub max_relative: f64,
}

impl SymmetryPlanes {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative <= tol
            && self
                .plane_angle
                .is_some_and(|a| (a - PI / 2.0).abs() <= tol)
    }
}

fn paired(
    mesh: &SurfaceMesh,
    map: impl Fn(usize, usize) -> (usize, usize),
) -> (Vec<Point>, Vec<Point>) {
    let g = &mesh.grid;
    let mut p = Vec::with_capacity(g.n_r * g.n_theta);
    let mut q = Vec::with_capacity(g.n_r * g.n_theta);
    for i in 0..g.n_r {
        for k in 0..g.n_theta {
            let (i2, k2) = map(i, k);
            p.push(mesh.vertex(i, k));
            q.push(mesh.vertex(i2, k2));
        }
    }
    (p, q)
}

/// Fits the isometries induced by `z ↦ z̄`, `z ↦ 1/z` and `z ↦ 1/z̄` and
/// reports the angle between the two that are reflections.
pub fn verify_symmetry_planes(mesh: &SurfaceMesh) -> SymmetryPlanes {
    let g = mesh.grid;
    let flip = |k: usize| (g.n_theta - k) % g.n_theta;
    let (p, q) = paired(mesh, |i, k| (i, flip(k)));
    let conjugation = fit_isometry(&p, &q);
    let (inversion, antipodal) = if g.inversion_symmetric() {
        let (p, q) = paired(mesh, |i, k| (g.n_r - 1 - i, k));
        let (p2, q2) = paired(mesh, |i, k| (g.n_r - 1 - i, flip(k)));
        (Some(fit_isometry(&p, &q)), Some(fit_isometry(&p2, &q2)))
    } else {
        (None, None)
    };
    let second = [inversion, antipodal]
        .into_iter()
        .flatten()
        .find(|f| f.determinant < 0.0);
    let plane_angle = second.map(|s| {
        let d: f64 = (0..3).map(|j| conjugation.axis[j] * s.axis[j]).sum();
        d.abs().min(1.0).acos()
    });
    let max_relative = second.map_or(f64::INFINITY, |s| s.relative.max(conjugation.relative));
    SymmetryPlanes {
        conjugation,
        inversion,
        antipodal,
        plane_angle,
        max_relative,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanCurvatureStats {
    pub mean: f64,
    pub std: f64,
    pub relative_std: f64,
    /// `max |H − mean| / |mean|`.
    pub max_deviation: f64,
    pub vertices: usize,
    pub excluded: usize,
    pub resolution_warning: bool,
}

fn sub(a: &Point, b: &Point) -> Vector3<f64> {
    Vector3::new(a[0] - b[0], a[1] - b[1], a[2] - b[2])
}

/// Per-vertex discrete mean curvature `‖Δx‖/2` from the cotangent Laplacian
/// with mixed Voronoi areas; `None` on the boundary rings.
pub fn discrete_mean_curvature(mesh: &SurfaceMesh) -> Vec<Option<f64>> {
    let g = &mesh.grid;
    let nv = mesh.vertices.len();
    let mut lap = vec![Vector3::<f64>::zeros(); nv];
    let mut area = vec![0.0f64; nv];
    let qm = mesh.quad_mesh();
    for f in &qm.faces {
        // both diagonals, each with weight one half
        for tri in [
            [f[0], f[1], f[2]],
            [f[0], f[2], f[3]],
            [f[0], f[1], f[3]],
            [f[1], f[2], f[3]],
        ] {
            let x = [
                mesh.vertices[tri[0]],
                mesh.vertices[tri[1]],
                mesh.vertices[tri[2]],
            ];
            let e = |a: usize, b: usize| sub(&x[b], &x[a]);
            let dbl = e(0, 1).cross(&e(0, 2)).norm();
            let weight = 0.5;
            if dbl == 0.0 {
                continue;
            }
            let mut cots = [0.0; 3];
            let mut obtuse = None;
            for t in 0..3 {
                let (u, w) = ((t + 1) % 3, (t + 2) % 3);
                let (a, b) = (e(t, u), e(t, w));
                let d = a.dot(&b);
                cots[t] = d / dbl;
                if d < 0.0 {
                    obtuse = Some(t);
                }
                lap[tri[u]] += sub(&x[w], &x[u]) * (weight * cots[t]);
                lap[tri[w]] += sub(&x[u], &x[w]) * (weight * cots[t]);
            }
            let tri_area = 0.5 * dbl;
            for t in 0..3 {
                let (u, w) = ((t + 1) % 3, (t + 2) % 3);
                area[tri[t]] += weight
                    * match obtuse {
                        None => {
                            0.125
                                * (e(t, u).norm_squared() * cots[w]
                                    + e(t, w).norm_squared() * cots[u])
                        }
                        Some(o) if o == t => 0.5 * tri_area,
                        Some(_) => 0.25 * tri_area,
                    };
            }
        }
    }
    (0..nv)
        .map(|v| {
            let i = v / g.n_theta;
            (i > 0 && i + 1 < g.n_r && area[v] > 0.0).then(|| lap[v].norm() / (4.0 * area[v]))
        })
        .collect()
}

pub fn mean_curvature_probe(mesh: &SurfaceMesh) -> MeanCurvatureStats {
    let g = &mesh.grid;
    let near_umbilic = |v: usize| {
        let (i, k) = ((v / g.n_theta) as i64, (v % g.n_theta) as i64);
        mesh.umbilics.iter().any(|u| {
            let (iu, ku) = ((u.vertex / g.n_theta) as i64, (u.vertex % g.n_theta) as i64);
            let dk = (k - ku).rem_euclid(g.n_theta as i64);
            (i - iu).abs() <= 2 && dk.min(g.n_theta as i64 - dk) <= 2
        })
    };
    let h = discrete_mean_curvature(mesh);
    let mut values = Vec::new();
    let mut excluded = 0;
    for (v, hv) in h.iter().enumerate() {
        if let Some(x) = hv {
            if near_umbilic(v) {
                excluded += 1;
            } else {
                values.push(*x);
            }
        }
    }
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let max_dev = values.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    MeanCurvatureStats {
        mean,
        std,
        relative_std: std / mean.abs(),
        max_deviation: max_dev / mean.abs(),
        vertices: values.len(),
        excluded,
        resolution_warning: g.n_r < 8 || g.n_theta < 8,
    }
}

/// Quad mesh with umbilic markers, as written to OBJ.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadMesh {
    pub vertices: Vec<Point>,
    /// 0-indexed.
    pub faces: Vec<[usize; 4]>,
    pub umbilics: Vec<UmbilicMarker>,
}

pub fn obj_string(mesh: &QuadMesh) -> String {
    let mut s = String::new();
    for u in &mesh.umbilics {
        let _ = writeln!(s, "# umbilic {} {} {}", u.re, u.im, u.vertex);
    }
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1, f[3] + 1);
    }
    s
}

pub fn checksum(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Write the OBJ file; returns the SHA-256 of its bytes.
pub fn export_obj(mesh: &QuadMesh, path: &Path) -> Result<String> {
    let s = obj_string(mesh);
    std::fs::write(path, s.as_bytes())?;
    Ok(checksum(s.as_bytes()))
}

pub fn import_obj(path: &Path) -> Result<QuadMesh> {
    let text = std::fs::read_to_string(path)?;
    let bad = |line: &str| CmcError::InvalidConfig(format!("malformed OBJ line: {line}"));
    let mut mesh = QuadMesh {
        vertices: Vec::new(),
        faces: Vec::new(),
        umbilics: Vec::new(),
    };
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xs: Vec<f64> = it
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(line))?;
                if xs.len() != 3 {
                    return Err(bad(line));
                }
                mesh.vertices.push([xs[0], xs[1], xs[2]]);
            }
            Some("f") => {
                let ix: Vec<usize> = it
                    .map(|t| t.split('/').next().unwrap_or("").parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(line))?;
                if ix.len() != 4 || ix.contains(&0) {
                    return Err(bad(line));
                }
                mesh.faces
                    .push([ix[0] - 1, ix[1] - 1, ix[2] - 1, ix[3] - 1]);
            }
            Some("#") if line.starts_with("# umbilic") => {
                let xs: Vec<&str> = it.skip(1).collect();
                if xs.len() != 3 {
                    return Err(bad(line));
                }
                let p = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
                let vertex = xs[2].parse::<usize>().map_err(|_| bad(line))?;
                mesh.umbilics.push(UmbilicMarker {
                    re: p(xs[0])?,
                    im: p(xs[1])?,
                    vertex,
                    residual: 0.0,
                });
            }
            _ => {}
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitarize::unitarizer_for;

    #[test]
    fn zero_inner_radius_is_rejected() {
        assert!(matches!(
            DomainGrid::new(0.0, 2.0, 4, 4),
            Err(CmcError::Precondition(_))
        ));
    }

    #[test]
    fn radii_are_log_spaced() {
        let g = DomainGrid::default_annulus(8, 5).unwrap();
        let r = g.radii();
        assert!((r[0] - (-2f64).exp()).abs() < 1e-15 && (r[2] - 1.0).abs() < 1e-15);
        assert!(g.inversion_symmetric());
    }

    #[test]
    fn umbilics_of_family_spec() {
        let spec = LaurentSpec::symmetric_family(2, 1.0 / 32.0, 1.0 / 100.0);
        let roots = find_umbilics(&spec, 1e-3, 1e3).unwrap();
        assert_eq!(roots.len(), 4);
        let disc: f64 = (25.0f64 / 8.0).powi(2) - 4.0;
        let w = [
            (-25.0 / 8.0 + disc.sqrt()) / 2.0,
            (-25.0 / 8.0 - disc.sqrt()) / 2.0,
        ];
        for z in &roots {
            assert!(spec.f(*z).norm() <= 1e-12);
            let z2 = z * z;
            assert!(w.iter().any(|wv| (z2 - wv).norm() < 1e-10));
            for other in [z.conj(), z.inv(), z.conj().inv()] {
                assert!(roots.iter().any(|r| (r - other).norm() < 1e-10));
            }
        }
    }

    #[test]
    fn trivial_umbilic_cases() {
        assert!(find_umbilics(&LaurentSpec::constant(0.5), 0.1, 10.0)
            .unwrap()
            .is_empty());
        let lin = LaurentSpec::new(1.0, [(1, C64::new(1.0, 0.0)), (0, C64::new(-1.0, 0.0))]);
        let r = find_umbilics(&lin, 0.1, 10.0).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0).norm() < 1e-14);
        assert!(find_umbilics(&LaurentSpec::zero(), 0.1, 10.0).is_err());
    }

    #[test]
    fn toy_obj_round_trip() {
        let mesh = QuadMesh {
            vertices: vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 1.0, 0.5],
            ],
            faces: vec![[0, 1, 2, 3]],
            umbilics: vec![UmbilicMarker {
                re: 0.25,
                im: -1.5,
                vertex: 2,
                residual: 0.0,
            }],
        };
        let s = obj_string(&mesh);
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(s.lines().filter(|l| l.starts_with("f ")).count(), 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.obj");
        let sum = export_obj(&mesh, &path).unwrap();
        assert_eq!(sum, checksum(&std::fs::read(&path).unwrap()));
        assert_eq!(import_obj(&path).unwrap(), mesh);
    }

    #[test]
    fn isometry_fit_recovers_reflection() {
        let pts: Vec<Point> = (0..20)
            .map(|j| {
                let t = j as f64 * 0.7;
                [t.cos(), (2.0 * t).sin(), 0.1 * t]
            })
            .collect();
        let refl: Vec<Point> = pts.iter().map(|p| [p[0], -p[1] + 2.0, p[2]]).collect();
        let fit = fit_isometry(&pts, &refl);
        assert!(fit.residual < 1e-12 && fit.determinant < 0.0);
        assert!((fit.axis[1].abs() - 1.0).abs() < 1e-12);
    }

    fn sphere(n_theta: usize, n_r: usize) -> SurfaceMesh {
        let spec = LaurentSpec::zero();
        let opts = SurfaceOptions {
            lambda_grid: LoopGrid::new(64, 16).unwrap(),
            ..Default::default()
        };
        let (v, _) = unitarizer_for(&spec, 64, &opts.flow, 1e-10).unwrap();
        let grid = DomainGrid::new(0.5, 2.0, n_r, n_theta).unwrap();
        build_surface(&spec, &v, &grid, &opts).unwrap()
    }

    /// Least-squares sphere `|x|² = 2c·x + k`; returns the spread of radii.
    fn sphere_spread(points: &[Point]) -> (f64, f64) {
        let a = DMatrix::from_fn(points.len(), 4, |r, c| {
            if c < 3 {
                2.0 * points[r][c]
            } else {
                1.0
            }
        });
        let b =
            nalgebra::DVector::from_fn(points.len(), |r, _| points[r].iter().map(|x| x * x).sum());
        let sol = a.svd(true, true).solve(&b, 1e-14).unwrap();
        let c = [sol[0], sol[1], sol[2]];
        let radii: Vec<f64> = points.iter().map(|p| dist(p, &c)).collect();
        let lo = radii.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = radii.iter().copied().fold(0.0, f64::max);
        (hi - lo, hi)
    }

    #[test]
    fn zero_potential_gives_round_sphere() {
        let mesh = sphere(32, 16);
        assert!(
            mesh.closure_residual <= 1e-6,
            "closure {}",
            mesh.closure_residual
        );
        assert!(mesh.closure_ok);
        let (spread, radius) = sphere_spread(&mesh.vertices);
        assert!(spread <= 1e-8 * radius, "spread {spread} radius {radius}");
        let sym = verify_symmetry_planes(&mesh);
        assert!(sym.conjugation.relative < 1e-8, "{sym:?}");
        let h = mean_curvature_probe(&mesh);
        assert!(h.relative_std < 0.01, "{h:?}");
    }

    #[test]
    fn coarse_grid_warns() {
        let h = mean_curvature_probe(&sphere(4, 4));
        assert!(h.resolution_warning);
    }
}
