//! Run configuration, the four subcommands and their reports.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{CmcError, Result};
use crate::flow::{self, FlowOptions, RkOptions};
use crate::iwasawa::IwasawaOptions;
use crate::loopalg::{FactorOptions, LoopGrid};
use crate::mat2::{self, C64};
use crate::monodromy::{self, ScaleOptions};
use crate::potential::{self, LaurentSpec};
use crate::surface::{self, DomainGrid, SurfaceOptions};
use crate::unitarize::{self, UNITARIZER_LEN};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CLOSING: i32 = 3;
pub const EXIT_UNITARIZE: i32 = 4;
pub const EXIT_FACTOR: i32 = 5;
pub const EXIT_CLOSURE: i32 = 6;

/// Largest admissible `‖U U* − id‖` of the unitarized monodromy.
pub const UNITARIZER_GATE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaGridConfig {
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(rename = "N")]
    pub degree: usize,
}

impl Default for LambdaGridConfig {
    fn default() -> Self {
        Self {
            len: 256,
            degree: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZGridConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl Default for ZGridConfig {
    fn default() -> Self {
        Self {
            r_min: (-2f64).exp(),
            r_max: 2f64.exp(),
            n_r: 64,
            n_theta: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tol_ode: f64,
    pub tol_fact: f64,
    pub tol_unit: f64,
    pub eps_pos: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_ode: 1e-11,
            tol_fact: 1e-7,
            tol_unit: 1e-7,
            eps_pos: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleSearchConfig {
    pub enabled: bool,
    pub tau_min: f64,
}

impl Default for ScaleSearchConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            tau_min: ScaleOptions::default().tau_min,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub obj_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P1Convention {
    /// `P₁` from quadrature and residues.
    Audited,
    /// The printed value `2πi C`.
    Printed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Oracle names; `None` selects all.
    pub select: Option<Vec<String>>,
    pub p1_convention: P1Convention,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            select: None,
            p1_convention: P1Convention::Audited,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub spec: LaurentSpec,
    pub lambda_grid: LambdaGridConfig,
    pub z_grid: ZGridConfig,
    pub tolerances: Tolerances,
    pub scale_search: ScaleSearchConfig,
    pub outputs: Outputs,
    pub oracles: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            spec: LaurentSpec::symmetric_family(2, 1.0 / 32.0, 1.0 / 1000.0),
            lambda_grid: LambdaGridConfig::default(),
            z_grid: ZGridConfig::default(),
            tolerances: Tolerances::default(),
            scale_search: ScaleSearchConfig::default(),
            outputs: Outputs::default(),
            oracles: OracleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(CmcError::InvalidConfig(m));
        let t = &self.tolerances;
        for (name, v) in [
            ("tol_ode", t.tol_ode),
            ("tol_fact", t.tol_fact),
            ("tol_unit", t.tol_unit),
            ("eps_pos", t.eps_pos),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerance {name} = {v} must be positive"));
            }
        }
        if !self.lambda_grid.len.is_power_of_two() {
            return bad(format!(
                "lambda_grid.L = {} is not a power of two",
                self.lambda_grid.len
            ));
        }
        if !(self.scale_search.tau_min > 0.0 && self.scale_search.tau_min <= 1.0) {
            return bad(format!(
                "scale_search.tau_min = {} outside (0, 1]",
                self.scale_search.tau_min
            ));
        }
        let o = &self.outputs;
        for (name, p) in [
            ("obj_path", &o.obj_path),
            ("report_path", &o.report_path),
            ("csv_path", &o.csv_path),
        ] {
            if p.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
                return bad(format!("outputs.{name} is empty"));
            }
        }
        self.loop_grid()?;
        self.domain_grid()?;
        Ok(())
    }

    pub fn loop_grid(&self) -> Result<LoopGrid> {
        LoopGrid::new(self.lambda_grid.len, self.lambda_grid.degree)
            .map_err(|e| CmcError::InvalidConfig(e.to_string()))
    }

    pub fn domain_grid(&self) -> Result<DomainGrid> {
        let z = &self.z_grid;
        DomainGrid::new(z.r_min, z.r_max, z.n_r, z.n_theta)
            .map_err(|e| CmcError::InvalidConfig(e.to_string()))
    }

    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions {
            rk: RkOptions {
                tol: self.tolerances.tol_ode,
                ..RkOptions::default()
            },
            ..FlowOptions::default()
        }
    }

    pub fn iwasawa_options(&self) -> IwasawaOptions {
        IwasawaOptions {
            factor: FactorOptions {
                eps_pos: self.tolerances.eps_pos,
                tol_fact: self.tolerances.tol_fact,
                refine: true,
            },
            tol_unit: self.tolerances.tol_unit,
            ..IwasawaOptions::default()
        }
    }

    pub fn surface_options(&self) -> Result<SurfaceOptions> {
        Ok(SurfaceOptions {
            lambda_grid: self.loop_grid()?,
            flow: self.flow_options(),
            iwasawa: self.iwasawa_options(),
            ..SurfaceOptions::default()
        })
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (n, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CmcError::InvalidConfig(format!("bad override key '{key}'")));
        }
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur.as_object_mut().expect("object ensured above");
        if n + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Read the JSON config (defaults when absent) and apply `key=value` overrides.
/// Values are parsed as JSON, falling back to a plain string.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| CmcError::InvalidConfig(format!("{}: {e}", p.display())))?
        }
        None => serde_json::to_value(RunConfig::default())?,
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CmcError::InvalidConfig(format!("override '{o}' is not key=value")))?;
        let parsed = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        set_path(&mut value, k.trim(), parsed)?;
    }
    let cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| CmcError::InvalidConfig(e.to_string()))?;
    cfg.check()?;
    Ok(cfg)
}

/// Every numeric default, embedded in reports.
pub fn defaults_table() -> Value {
    let t = Tolerances::default();
    let z = ZGridConfig::default();
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "L": LambdaGridConfig::default().len,
        "N": LambdaGridConfig::default().degree,
        "tol_ode": t.tol_ode,
        "tol_fact": t.tol_fact,
        "tol_unit": t.tol_unit,
        "eps_pos": t.eps_pos,
        "rk_h_min": RkOptions::default().h_min,
        "rk_h_max": RkOptions::default().h_max,
        "closing_tol": monodromy::CLOSING_TOL,
        "fit_tol": monodromy::FIT_TOL,
        "trace_slack": monodromy::TRACE_SLACK,
        "trace_imag_tol": monodromy::TRACE_IMAG_TOL,
        "fit_samples": monodromy::FIT_SAMPLES,
        "p1_quadrature_nodes": monodromy::P1_QUADRATURE_NODES,
        "tau_min": ScaleOptions::default().tau_min,
        "scale_iterations": ScaleOptions::default().iterations,
        "unitarizer_len": UNITARIZER_LEN,
        "unitarizer_gate": UNITARIZER_GATE,
        "max_singular_fraction": unitarize::MAX_SINGULAR_FRACTION,
        "max_escalations": IwasawaOptions::default().max_escalations,
        "projection_tol": crate::iwasawa::PROJECTION_TOL,
        "closure_tol": SurfaceOptions::default().closure_tol,
        "annulus": [z.r_min, z.r_max],
        "n_r": z.n_r,
        "n_theta": z.n_theta,
    })
}

/// Exit code, report and human-readable summary of one subcommand.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub code: i32,
    pub report: Value,
    pub summary: Vec<String>,
}

fn c_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

/// Hypotheses of the construction: both symmetries and `κ > 0`.
pub fn hypotheses(spec: &LaurentSpec) -> (Value, Vec<String>) {
    let sym = potential::validate_symmetry(spec);
    let kappa = potential::kappa(spec);
    let mut failures = Vec::new();
    if !sym.rho_ok {
        failures.push("rho symmetry violated".to_string());
    }
    if !sym.sigma_ok {
        failures.push("sigma symmetry violated".to_string());
    }
    if kappa == 0.0 {
        failures.push("kappa = 0".to_string());
    } else if !(kappa > 0.0) {
        failures.push(format!("kappa = {kappa:e} is not positive"));
    }
    let (neg, mid, pos) = potential::superposition_split(spec);
    let umbilics = match surface::find_umbilics(spec, 0.0, f64::INFINITY) {
        Ok(r) => json!(r.iter().map(|z| c_pair(*z)).collect::<Vec<_>>()),
        Err(e) => json!(e.to_string()),
    };
    let report = json!({
        "spec": spec,
        "rho_ok": sym.rho_ok,
        "sigma_ok": sym.sigma_ok,
        "kappa": kappa,
        "kappa_complex": c_pair(potential::kappa_complex(spec)),
        "split": {"negative": neg, "delaunay": mid, "positive": pos},
        "umbilics": umbilics,
        "failures": failures,
    });
    (report, failures)
}

fn finish(mut report: Value, code: i32, summary: Vec<String>, path: Option<&Path>) -> Outcome {
    report["exit_code"] = json!(code);
    let mut stripped = report.clone();
    if let Some(o) = stripped.as_object_mut() {
        o.remove("timings");
    }
    let sum = surface::checksum(stripped.to_string().as_bytes());
    report["report_checksum"] = json!(sum);
    let mut summary = summary;
    if let Some(p) = path {
        match serde_json::to_string_pretty(&report)
            .map_err(CmcError::from)
            .and_then(|s| Ok(std::fs::write(p, s)?))
        {
            Ok(()) => summary.push(format!("report written to {}", p.display())),
            Err(e) => {
                summary.push(format!("cannot write report: {e}"));
                return Outcome {
                    code: EXIT_CONFIG,
                    report,
                    summary,
                };
            }
        }
    }
    Outcome {
        code,
        report,
        summary,
    }
}

pub fn cmd_validate(cfg: &RunConfig) -> Outcome {
    let (report, failures) = hypotheses(&cfg.spec);
    let mut summary = vec![
        format!("rho symmetry: {}", report["rho_ok"]),
        format!("sigma symmetry: {}", report["sigma_ok"]),
        format!(
            "kappa = {:.6e}",
            report["kappa"].as_f64().unwrap_or(f64::NAN)
        ),
        format!("umbilics: {}", report["umbilics"]),
    ];
    summary.extend(failures.iter().cloned());
    let code = if failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_VALIDATE
    };
    finish(report, code, summary, cfg.outputs.report_path.as_deref())
}

fn closing_stage(e: &CmcError) -> i32 {
    match e {
        CmcError::NoAdmissibleScale { .. }
        | CmcError::NotDeltaUnitarizable { .. }
        | CmcError::QSymbolDegenerate { .. }
        | CmcError::BranchObstruction { .. } => EXIT_UNITARIZE,
        CmcError::Io(_) | CmcError::InvalidConfig(_) => EXIT_CONFIG,
        _ => EXIT_CLOSING,
    }
}

fn gate_failure(
    report: Value,
    code: i32,
    stage: &str,
    e: &CmcError,
    mut summary: Vec<String>,
    path: Option<&Path>,
) -> Outcome {
    let mut report = report;
    report["failure"] = json!({"stage": stage, "error": e.to_string()});
    summary.push(format!("{stage} failed: {e}"));
    finish(report, code, summary, path)
}

pub fn cmd_monodromy(cfg: &RunConfig, force: bool) -> Outcome {
    let path = cfg.outputs.report_path.as_deref();
    let (validation, failures) = hypotheses(&cfg.spec);
    let mut report = json!({
        "spec": cfg.spec,
        "validation": validation,
        "force": force,
        "defaults": defaults_table(),
        "tolerances": cfg.tolerances,
        "lambda_grid": cfg.lambda_grid,
    });
    let mut summary = Vec::new();
    if !failures.is_empty() && !force {
        summary.extend(failures);
        return finish(report, EXIT_VALIDATE, summary, path);
    }
    let t0 = Instant::now();
    let grid = match cfg.loop_grid() {
        Ok(g) => g,
        Err(e) => return gate_failure(report, EXIT_CONFIG, "config", &e, summary, path),
    };
    match monodromy::trace_verdict(&cfg.spec, &grid, &cfg.flow_options()) {
        Ok(true) => {}
        Ok(false) => {
            summary.push("trace leaves [-2, 2]: not unitarizable at this scale".into());
            return finish(report, EXIT_UNITARIZE, summary, path);
        }
        Err(e) => return gate_failure(report, closing_stage(&e), "closing", &e, summary, path),
    }
    let analysis = match monodromy::analyze(&cfg.spec, &grid, &cfg.flow_options()) {
        Ok(a) => a,
        Err(e) => return gate_failure(report, closing_stage(&e), "monodromy", &e, summary, path),
    };
    report["monodromy"] = serde_json::to_value(&analysis).unwrap_or(Value::Null);
    report["timings"] = json!({"monodromy_ms": t0.elapsed().as_millis()});
    summary.push(format!("sign s = {}", analysis.sign));
    summary.push(format!(
        "closing residuals: M {:.3e}, M' {:.3e}",
        analysis.closing.m_residual, analysis.closing.dm_residual
    ));
    summary.push(format!(
        "weight = {:.9} (closed form {:.9})",
        analysis.weight.weight, analysis.weight.closed_form
    ));
    summary.push(format!(
        "s*trace range [{:.6}, {:.6}], verdict {}",
        analysis.trace_range[0], analysis.trace_range[1], analysis.trace_verdict
    ));
    if let Some(p) = &cfg.outputs.csv_path {
        if let Err(e) = monodromy::write_trace_csv(&analysis.profile, p) {
            return gate_failure(report, EXIT_CONFIG, "csv", &e, summary, path);
        }
        summary.push(format!("trace profile written to {}", p.display()));
    }
    let code = if analysis.trace_verdict {
        match unitarize::delta_unitarizable_test(&analysis.monodromy, analysis.closing.s()) {
            Ok(v) => {
                report["delta_failures"] = json!(v.failed.len());
                EXIT_OK
            }
            Err(e) => {
                summary.push(e.to_string());
                EXIT_UNITARIZE
            }
        }
    } else {
        summary.push("trace leaves [-2, 2]: not unitarizable at this scale".into());
        EXIT_UNITARIZE
    };
    finish(report, code, summary, path)
}

fn ms(t: Instant) -> u128 {
    t.elapsed().as_millis()
}

pub fn cmd_surface(cfg: &RunConfig, force: bool) -> Outcome {
    let path = cfg.outputs.report_path.as_deref();
    let (validation, failures) = hypotheses(&cfg.spec);
    let mut timings = Map::new();
    let mut report = json!({
        "spec": cfg.spec,
        "validation": validation,
        "force": force,
        "grid": {"z": cfg.z_grid, "lambda": cfg.lambda_grid},
        "tolerances": cfg.tolerances,
        "defaults": defaults_table(),
    });
    let mut summary = Vec::new();
    if !failures.is_empty() && !force {
        summary.extend(failures);
        return finish(report, EXIT_VALIDATE, summary, path);
    }
    let (grid, domain, opts) = match (cfg.loop_grid(), cfg.domain_grid(), cfg.surface_options()) {
        (Ok(g), Ok(d), Ok(o)) => (g, d, o),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
            return gate_failure(report, EXIT_CONFIG, "config", &e, summary, path)
        }
    };
    let flow_opts = cfg.flow_options();

    let t = Instant::now();
    let tau0 = if cfg.scale_search.enabled {
        let so = ScaleOptions {
            tau_min: cfg.scale_search.tau_min,
            ..ScaleOptions::default()
        };
        match monodromy::find_scale(&cfg.spec, &grid, &flow_opts, &so) {
            Ok(s) => {
                report["scale_search"] = serde_json::to_value(&s).unwrap_or(Value::Null);
                s.tau0
            }
            Err(e) => {
                return gate_failure(report, closing_stage(&e), "scale search", &e, summary, path)
            }
        }
    } else {
        cfg.spec.tau
    };
    timings.insert("scale_search_ms".into(), json!(ms(t)));
    let spec = cfg.spec.with_tau(tau0);
    report["tau0"] = json!(tau0);
    report["kappa"] = json!(potential::kappa(&spec));
    summary.push(format!("tau0 = {tau0}"));

    let t = Instant::now();
    let analysis = match monodromy::analyze(&spec, &grid, &flow_opts) {
        Ok(a) => a,
        Err(e) => return gate_failure(report, closing_stage(&e), "monodromy", &e, summary, path),
    };
    timings.insert("monodromy_ms".into(), json!(ms(t)));
    report["sign"] = json!(analysis.sign);
    report["closing"] = serde_json::to_value(analysis.closing).unwrap_or(Value::Null);
    report["weight"] = serde_json::to_value(analysis.weight).unwrap_or(Value::Null);
    summary.push(format!(
        "weight = {:.9} (closed form {:.9})",
        analysis.weight.weight, analysis.weight.closed_form
    ));
    if !analysis.trace_verdict {
        report["timings"] = Value::Object(timings);
        let e = CmcError::NotDeltaUnitarizable {
            failed: 1,
            total: grid.len,
        };
        return gate_failure(report, EXIT_UNITARIZE, "trace", &e, summary, path);
    }

    let t = Instant::now();
    let (v, m_u) = match unitarize::unitarizer_for(
        &spec,
        UNITARIZER_LEN,
        &flow_opts,
        cfg.tolerances.eps_pos,
    ) {
        Ok(x) => x,
        Err(e) => return gate_failure(report, closing_stage(&e), "unitarize", &e, summary, path),
    };
    timings.insert("unitarize_ms".into(), json!(ms(t)));
    let preservation = monodromy::weight_preservation_check(
        &analysis.series.a,
        analysis.closing.s(),
        &v.conjugate(&m_u),
    );
    report["unitarizer"] = json!({
        "len": UNITARIZER_LEN,
        "residual": v.residual,
        "singular_samples": v.singular.len(),
        "negative_energy": v.negative_energy,
        "weight_preservation": preservation,
    });
    if !(v.residual <= UNITARIZER_GATE) {
        report["timings"] = Value::Object(timings);
        let e = CmcError::FactorizationFailed {
            residual: v.residual,
        };
        return gate_failure(report, EXIT_UNITARIZE, "unitarize", &e, summary, path);
    }

    let t = Instant::now();
    let mesh = match surface::build_surface(&spec, &v, &domain, &opts) {
        Ok(m) => m,
        Err(e) => {
            report["timings"] = Value::Object(timings);
            let code = if matches!(e, CmcError::IntegrationStalled { .. }) {
                EXIT_CLOSING
            } else {
                EXIT_FACTOR
            };
            return gate_failure(report, code, "surface", &e, summary, path);
        }
    };
    timings.insert("surface_ms".into(), json!(ms(t)));
    let t = Instant::now();
    let symmetry = potential::validate_symmetry(&spec)
        .symmetric()
        .then(|| surface::verify_symmetry_planes(&mesh));
    let mean_h = surface::mean_curvature_probe(&mesh);
    timings.insert("verify_ms".into(), json!(ms(t)));
    report["closure_residual"] = json!(mesh.closure_residual);
    report["closure_ok"] = json!(mesh.closure_ok);
    report["bbox_diagonal"] = json!(mesh.bbox_diagonal);
    report["factorization"] = serde_json::to_value(mesh.factor).unwrap_or(Value::Null);
    report["ode_error_estimate"] = json!(mesh.ode_error_estimate);
    report["umbilics"] = serde_json::to_value(&mesh.umbilics).unwrap_or(Value::Null);
    report["symmetry"] = serde_json::to_value(symmetry).unwrap_or(Value::Null);
    report["meanH"] = serde_json::to_value(mean_h).unwrap_or(Value::Null);
    summary.push(format!(
        "closure residual {:.3e} ({:.3e} of bbox diagonal)",
        mesh.closure_residual,
        mesh.closure_residual / mesh.bbox_diagonal
    ));
    if let Some(s) = symmetry {
        summary.push(format!(
            "symmetry planes: residual {:.3e} of bbox, angle {:.9} (pi/2 = {:.9})",
            s.max_relative,
            s.plane_angle.unwrap_or(f64::NAN),
            PI / 2.0
        ));
    }
    summary.push(format!(
        "mean curvature {:.6}, relative std {:.3e}",
        mean_h.mean, mean_h.relative_std
    ));
    if mean_h.resolution_warning {
        summary.push("resolution warning: grid too coarse to assess mean curvature".into());
    }

    if let Some(p) = &cfg.outputs.obj_path {
        let t = Instant::now();
        match surface::export_obj(&mesh.quad_mesh(), p) {
            Ok(sum) => {
                report["obj_checksum"] = json!(sum);
                summary.push(format!("mesh written to {}", p.display()));
            }
            Err(e) => return gate_failure(report, EXIT_CONFIG, "export", &e, summary, path),
        }
        timings.insert("export_ms".into(), json!(ms(t)));
    }
    report["timings"] = Value::Object(timings);
    let code = if mesh.closure_ok {
        EXIT_OK
    } else {
        summary.push("closure failed".into());
        EXIT_CLOSURE
    };
    finish(report, code, summary, path)
}

pub const ORACLES: [&str; 4] = [
    "constant_monodromy",
    "p1_residue",
    "weight_identity",
    "unitary_square",
];

struct OracleRow {
    name: &'static str,
    deviation: f64,
    tolerance: f64,
    note: String,
}

fn oracle_constant_monodromy(grid: &LoopGrid, flow_opts: &FlowOptions) -> Result<OracleRow> {
    let a0 = 1.0 / 32.0;
    let m = flow::monodromy_circle(&LaurentSpec::constant(a0), grid, flow_opts)?;
    let dev = |s: f64| {
        (0..grid.len)
            .map(|j| {
                mat2::norm2(
                    &(m.samples()[j]
                        - flow::constant_monodromy(a0, grid.lambda(j)) * C64::new(s, 0.0)),
                )
            })
            .fold(0.0, f64::max)
    };
    let (d_plus, d_minus) = (dev(1.0), dev(-1.0));
    let s = if d_plus <= d_minus { 1.0 } else { -1.0 };
    let tr = -2.0 * (2.0 * PI * (a0 * 4.0f64).sqrt()).cos();
    Ok(OracleRow {
        name: "constant_monodromy",
        deviation: d_plus.min(d_minus),
        tolerance: 1e-7,
        note: format!("f = 1/32: global factor {s:+}, s*trace(-1) = {tr:.6}"),
    })
}

fn oracle_p1(convention: P1Convention) -> Result<OracleRow> {
    let spec = LaurentSpec::symmetric_family(2, 1.0 / 32.0, 1.0 / 1000.0);
    let o = monodromy::p1_residue_oracle(&spec)?;
    let c = monodromy::normalization_constant();
    Ok(match convention {
        P1Convention::Audited => OracleRow {
            name: "p1_residue",
            deviation: o.difference,
            tolerance: 1e-10,
            note: format!("residue vs quadrature; global constant c = {c:.12} relative to the printed 2*pi*i*C"),
        },
        P1Convention::Printed => OracleRow {
            name: "p1_residue",
            deviation: mat2::norm2(&(o.printed - o.quadrature)),
            tolerance: 1e-10,
            note: format!("printed 2*pi*i*C vs quadrature: discrepancy by the global constant c = {c:.12}"),
        },
    })
}

fn oracle_weight(grid: &LoopGrid, flow_opts: &FlowOptions) -> Result<OracleRow> {
    let spec = LaurentSpec::symmetric_family(2, 1.0 / 32.0, 1.0 / 1000.0);
    let a = monodromy::analyze(&spec, grid, flow_opts)?;
    Ok(OracleRow {
        name: "weight_identity",
        deviation: a.weight.relative_deviation,
        tolerance: 1e-4,
        note: format!(
            "(2, 1/32, 1/1000): weight {:.9}, (pi/2)sqrt(kappa) {:.9}",
            a.weight.weight, a.weight.closed_form
        ),
    })
}

fn oracle_unitary_square(
    grid: &LoopGrid,
    flow_opts: &FlowOptions,
    eps_pos: f64,
) -> Result<OracleRow> {
    let spec = LaurentSpec::symmetric_family(2, 1.0 / 32.0, 1.0 / 1000.0);
    let a = monodromy::analyze(&spec, grid, flow_opts)?;
    let (v, m) = unitarize::unitarizer_for(&spec, UNITARIZER_LEN, flow_opts, eps_pos)?;
    let p = monodromy::weight_preservation_check(&a.series.a, a.closing.s(), &v.conjugate(&m));
    Ok(OracleRow {
        name: "unitary_square",
        deviation: p.weight_deviation,
        tolerance: 1e-5,
        note: format!("A_U^2 vs A_M^2 deviation {:.3e}", p.square_deviation),
    })
}

pub fn cmd_oracle(cfg: &RunConfig) -> Outcome {
    let path = cfg.outputs.report_path.as_deref();
    let selected: Vec<String> = match &cfg.oracles.select {
        Some(s) => s.clone(),
        None => ORACLES.iter().map(|s| s.to_string()).collect(),
    };
    let mut report = json!({"defaults": defaults_table(), "selected": selected});
    if selected.is_empty() {
        return finish(report, EXIT_OK, vec!["no oracles selected".into()], path);
    }
    if let Some(bad) = selected.iter().find(|s| !ORACLES.contains(&s.as_str())) {
        let e = CmcError::InvalidConfig(format!(
            "unknown oracle '{bad}' (known: {})",
            ORACLES.join(", ")
        ));
        return gate_failure(report, EXIT_CONFIG, "config", &e, Vec::new(), path);
    }
    let grid = match cfg.loop_grid() {
        Ok(g) => g,
        Err(e) => return gate_failure(report, EXIT_CONFIG, "config", &e, Vec::new(), path),
    };
    let flow_opts = cfg.flow_options();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut all_pass = true;
    for name in &selected {
        let row = match name.as_str() {
            "constant_monodromy" => oracle_constant_monodromy(&grid, &flow_opts),
            "p1_residue" => oracle_p1(cfg.oracles.p1_convention),
            "weight_identity" => oracle_weight(&grid, &flow_opts),
            _ => oracle_unitary_square(&grid, &flow_opts, cfg.tolerances.eps_pos),
        };
        let (pass, value) = match row {
            Ok(r) => {
                let pass = r.deviation <= r.tolerance;
                summary.push(format!(
                    "{:<20} {} deviation {:.3e} (tol {:.0e})  {}",
                    r.name,
                    if pass { "PASS" } else { "FAIL" },
                    r.deviation,
                    r.tolerance,
                    r.note
                ));
                (
                    pass,
                    json!({"name": r.name, "pass": pass, "deviation": r.deviation, "tolerance": r.tolerance, "note": r.note}),
                )
            }
            Err(e) => {
                summary.push(format!("{name:<20} FAIL {e}"));
                (
                    false,
                    json!({"name": name, "pass": false, "error": e.to_string()}),
                )
            }
        };
        all_pass &= pass;
        rows.push(value);
    }
    report["oracles"] = Value::Array(rows);
    finish(
        report,
        if all_pass { EXIT_OK } else { EXIT_VALIDATE },
        summary,
        path,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = load_config(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let cfg = load_config(
            None,
            &[
                "lambda_grid.L=128".into(),
                "spec.tau=0.5".into(),
                "z_grid.n_r=8".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.lambda_grid.len, 128);
        assert_eq!(cfg.spec.tau, 0.5);
        assert_eq!(cfg.z_grid.n_r, 8);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(load_config(None, &["lambda_grid.L=100".into()]).is_err());
        assert!(load_config(None, &["z_grid.r_min=0".into()]).is_err());
        assert!(load_config(None, &["tolerances.tol_ode=-1".into()]).is_err());
        assert!(load_config(None, &["nonsense=1".into()]).is_err());
        assert!(load_config(None, &["novalue".into()]).is_err());
    }

    #[test]
    fn malformed_json_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, "{\"spec\": {\"tau\": 1,,}}").unwrap();
        let msg = load_config(Some(&p), &[]).unwrap_err().to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn validate_verdicts() {
        let mut cfg = RunConfig::default();
        let out = cmd_validate(&cfg);
        assert_eq!(out.code, EXIT_OK);
        assert!((out.report["kappa"].as_f64().unwrap() - 9.765625e-4).abs() < 1e-12);
        cfg.spec = LaurentSpec::new(
            1.0,
            [
                (0, C64::new(1.0 / 32.0, 0.0)),
                (3, C64::new(0.02, 0.0)),
                (-3, C64::new(0.02, 0.0)),
                (4, C64::new(0.02, 0.0)),
            ],
        );
        let out = cmd_validate(&cfg);
        assert_eq!(out.code, EXIT_VALIDATE);
        assert!(out.summary.iter().any(|s| s == "sigma symmetry violated"));
        cfg.spec = LaurentSpec::zero();
        let out = cmd_validate(&cfg);
        assert_eq!(out.code, EXIT_VALIDATE);
        assert!(out.summary.iter().any(|s| s == "kappa = 0"));
    }

    #[test]
    fn empty_oracle_selection() {
        let mut cfg = RunConfig::default();
        cfg.oracles.select = Some(Vec::new());
        let out = cmd_oracle(&cfg);
        assert_eq!(out.code, EXIT_OK);
        assert_eq!(out.summary, vec!["no oracles selected".to_string()]);
    }

    #[test]
    fn printed_convention_exposes_constant() {
        let mut cfg = RunConfig::default();
        cfg.oracles.select = Some(vec!["p1_residue".into()]);
        assert_eq!(cmd_oracle(&cfg).code, EXIT_OK);
        cfg.oracles.p1_convention = P1Convention::Printed;
        let out = cmd_oracle(&cfg);
        assert_eq!(out.code, EXIT_VALIDATE);
        assert!(out.summary[0].contains("c = -4"), "{:?}", out.summary);
    }

    #[test]
    fn report_checksum_ignores_timings() {
        let a = finish(json!({"x": 1, "timings": {"t": 5}}), 0, Vec::new(), None);
        let b = finish(json!({"x": 1, "timings": {"t": 9}}), 0, Vec::new(), None);
        assert_eq!(a.report["report_checksum"], b.report["report_checksum"]);
    }
}
