//! Run configuration: JSON schema, overrides and diagnostics.

use rb_kinetic::hydro::{GravityTerm, HydroParams, WallKind, GAP};
use rb_kinetic::hydro::rolls::Branch;
use rb_kinetic::slab::WallCondition;
use rb_kinetic::CollisionModel;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::PathBuf;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Critical,
    NeutralCurve,
    Rolls,
    Evolve,
    Expand,
    Milne,
    Gap,
    Slab,
    Picard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub eps: f64,
    /// Gravity; `null` to derive it from `ra` and `lambda`.
    pub g: Option<f64>,
    /// Kinetic temperature gradient.
    pub lambda: Option<f64>,
    pub ra: Option<f64>,
    /// Distance from onset, `lambda_eff = lambda_c (1 + delta^2)`.
    pub delta: Option<f64>,
    /// Box aspect; `null` takes the critical wavelength.
    pub mu: Option<f64>,
    pub eta: f64,
    pub kappa: f64,
    pub walls: WallKind,
    pub gravity: GravityTerm,
    pub branch: Branch,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            eps: 0.01,
            g: Some(0.1),
            lambda: None,
            ra: None,
            delta: None,
            mu: None,
            eta: 1.0,
            kappa: 1.0,
            walls: WallKind::Rigid,
            gravity: GravityTerm::Explicit,
            branch: Branch::Clockwise,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Discretization {
    pub nx: usize,
    pub nz: usize,
    pub velocity_order: usize,
    pub model: CollisionModel,
    pub z_max: f64,
    pub dt: Option<f64>,
    pub t_final: f64,
    /// Finite-volume cells of the time-dependent slab run.
    pub cells: usize,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub n_alpha: usize,
    /// Expansion orders and the eps values of the residual scan.
    pub max_order: usize,
    pub eps_scan: Vec<f64>,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            nx: 12,
            nz: 32,
            velocity_order: 6,
            model: CollisionModel::BgkUnit,
            z_max: 64.0,
            dt: None,
            t_final: 100.0,
            cells: 64,
            alpha_min: 2.0,
            alpha_max: 5.0,
            n_alpha: 31,
            max_order: 3,
            eps_scan: vec![0.02, 0.04, 0.08],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub milne_tol: f64,
    pub milne_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { picard_tol: 1e-11, picard_max_iter: 60, milne_tol: 1e-14, milne_max_iter: 3000 }
    }
}

/// Incoming data of the `milne` command.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilneIndata {
    Zero,
    /// `v_x (1 + v_z)`.
    Shear,
    /// `v_z^2 - 1 + v_x`.
    Thermal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MilneOptions {
    pub indata: MilneIndata,
    /// Amplitude and decay rate of the layer force; zero amplitude disables it.
    pub force_g: f64,
    pub force_rate: f64,
}

impl Default for MilneOptions {
    fn default() -> Self {
        Self { indata: MilneIndata::Shear, force_g: 0.0, force_rate: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlabMode {
    Stationary,
    Evolve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlabOptions {
    pub mode: SlabMode,
    pub wall: WallCondition,
    /// Size of the seeded random source or initial datum.
    pub amplitude: f64,
    /// Use the laminar `q` in `L_J` instead of `q = 0`.
    pub laminar_q: bool,
}

impl Default for SlabOptions {
    fn default() -> Self {
        Self { mode: SlabMode::Stationary, wall: WallCondition::Diffuse, amplitude: 0.01, laminar_q: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub command: Command,
    pub physics: Physics,
    pub discretization: Discretization,
    pub tolerances: Tolerances,
    pub milne: MilneOptions,
    pub slab: SlabOptions,
    /// Amplitude of the seeded perturbation for `evolve`.
    pub perturbation: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: Command::Critical,
            physics: Physics::default(),
            discretization: Discretization::default(),
            tolerances: Tolerances::default(),
            milne: MilneOptions::default(),
            slab: SlabOptions::default(),
            perturbation: 1e-6,
            out_dir: PathBuf::from("rbk-out"),
            seed: 0,
        }
    }
}

/// A problem with one field of the configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Deserialize, reporting the path of the offending field.
pub fn from_value(v: Value) -> Result<RunConfig, Diagnostic> {
    serde_path_to_error::deserialize(v).map_err(|e| Diagnostic { field: e.path().to_string(), message: e.inner().to_string() })
}

/// Apply `a.b.c=value`; the value is parsed as JSON, else taken as a string.
pub fn apply_override(v: &mut Value, spec: &str) -> Result<(), Diagnostic> {
    let bad = |m: &str| Diagnostic { field: spec.to_string(), message: m.to_string() };
    let (key, raw) = spec.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = v;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| bad("path does not name an object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(bad("empty key"))
}

/// Rayleigh number, gravity and kinetic gradient, any two given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub ra: f64,
    pub g: f64,
    pub lambda: f64,
    pub lambda_eff: f64,
}

/// Critical Rayleigh number used for range checks only.
fn nominal_ra_c(walls: WallKind) -> f64 {
    match walls {
        WallKind::Rigid => 1707.76,
        WallKind::StressFree => 27.0 * std::f64::consts::PI.powi(4) / 4.0,
    }
}

impl Physics {
    pub fn hydro(&self, g: f64) -> HydroParams {
        HydroParams { g, eta: self.eta, kappa: self.kappa, walls: self.walls, gravity: self.gravity }
    }

    /// Complete the `(Ra, G, lambda)` triple. With all three given they must
    /// agree; with only `G` the Rayleigh number defaults to `1.05 Ra_c`.
    pub fn resolve(&self) -> Result<Resolved, Diagnostic> {
        let diag = |field: &str, message: String| Diagnostic { field: format!("physics.{field}"), message };
        let done = |p: HydroParams, ra: f64| Resolved { ra, g: p.g, lambda: p.lambda(ra), lambda_eff: p.lambda_eff(ra) };
        match (self.ra, self.g, self.lambda) {
            (Some(ra), Some(g), None) => Ok(done(self.hydro(g), ra)),
            (None, Some(g), Some(l)) => {
                let p = self.hydro(g);
                Ok(done(p, p.rayleigh(p.eff_from_lambda(l))))
            }
            (Some(ra), None, Some(l)) => {
                // c = G lambda_eff(G), solved for the small root
                let c = ra * self.eta * self.kappa / GAP.powi(4);
                let g = match self.gravity {
                    GravityTerm::Explicit => {
                        let disc = l * l - 1.6 * c;
                        if disc < 0.0 {
                            return Err(diag("g", format!("no gravity gives Ra = {ra} at lambda = {l}")));
                        }
                        2.0 * c / (l + disc.sqrt())
                    }
                    GravityTerm::ShiftedBoundary => {
                        let disc = 1.0 - 4.0 * c / l;
                        if disc < 0.0 {
                            return Err(diag("g", format!("no gravity gives Ra = {ra} at lambda = {l}")));
                        }
                        2.0 * c / l / (1.0 + disc.sqrt())
                    }
                    GravityTerm::Omitted => c / l,
                };
                Ok(done(self.hydro(g), ra))
            }
            (Some(ra), Some(g), Some(l)) => {
                let r = done(self.hydro(g), ra);
                if (r.lambda - l).abs() > 1e-9 * (1.0 + l.abs()) {
                    return Err(diag("lambda", format!("inconsistent with Ra = {ra} and G = {g}: expected {}", r.lambda)));
                }
                Ok(r)
            }
            (None, Some(g), None) => Ok(done(self.hydro(g), 1.05 * nominal_ra_c(self.walls))),
            _ => Err(diag("g", "give at least two of ra, g and lambda".into())),
        }
    }
}

fn push(out: &mut Vec<Diagnostic>, field: &str, message: String) {
    out.push(Diagnostic { field: field.into(), message });
}

/// Schema and physics-range checks. An empty list means the configuration
/// can be run.
pub fn validate(c: &RunConfig) -> Vec<Diagnostic> {
    let mut out = vec![];
    if c.schema_version != SCHEMA_VERSION {
        push(&mut out, "schema_version", format!("expected {SCHEMA_VERSION}, got {}", c.schema_version));
    }
    let p = &c.physics;
    if !(p.eps > 0.0) {
        push(&mut out, "physics.eps", format!("must be positive, got {}", p.eps));
    }
    for (name, v) in [("physics.eta", p.eta), ("physics.kappa", p.kappa)] {
        if !(v > 0.0) {
            push(&mut out, name, format!("must be positive, got {v}"));
        }
    }
    if let Some(g) = p.g {
        if !(g >= 0.0) {
            push(&mut out, "physics.g", format!("must be nonnegative, got {g}"));
        }
    }
    if let Some(m) = p.mu {
        if !(m > 0.0) {
            push(&mut out, "physics.mu", format!("must be positive, got {m}"));
        }
    }
    if let Some(d) = p.delta {
        if !(d > 0.0) {
            push(&mut out, "physics.delta", format!("must be positive, got {d}"));
        }
    }
    match p.resolve() {
        Err(d) => out.push(d),
        Ok(r) => {
                    if !(r.ra >= 0.0) {
                push(&mut out, "physics", format!("(G, lambda) = ({}, {}) implies Ra = {} below 0", r.g, r.lambda, r.ra));
            }
            if matches!(c.command, Command::Slab | Command::Picard) && 2.0 * std::f64::consts::PI * p.eps * r.lambda >= 1.0 {
                push(&mut out, "physics.lambda", format!("top wall temperature 1 - 2 pi eps lambda = {} is not positive", 1.0 - 2.0 * std::f64::consts::PI * p.eps * r.lambda));
            }
            let ra_c = nominal_ra_c(p.walls);
            if matches!(c.command, Command::Rolls | Command::Expand) {
                if r.ra <= ra_c {
                    push(&mut out, "physics.ra", format!("no steady roll at Ra = {} below onset {ra_c}", r.ra));
                }
                if let Some(d) = p.delta {
                    // lambda_eff = lambda_c (1 + delta^2) pins Ra as well
                    let ra_d = ra_c * (1.0 + d * d);
                    if p.ra.is_some() && (r.ra - ra_d).abs() > 1e-3 * ra_d {
                        push(&mut out, "physics.delta", format!("delta = {d} means Ra near {ra_d:.2}, but Ra = {}", r.ra));
                    }
                }
            }
        }
    }
    let d = &c.discretization;
    if d.nz < 4 {
        push(&mut out, "discretization.nz", format!("need at least 4, got {}", d.nz));
    }
    if d.nx < 4 {
        push(&mut out, "discretization.nx", format!("need at least 4, got {}", d.nx));
    }
    if !(4..=24).contains(&d.velocity_order) {
        push(&mut out, "discretization.velocity_order", format!("must lie in 4..=24, got {}", d.velocity_order));
    }
    if !(d.z_max > 0.0) {
        push(&mut out, "discretization.z_max", format!("must be positive, got {}", d.z_max));
    }
    if let Some(dt) = d.dt {
        if !(dt > 0.0) {
            push(&mut out, "discretization.dt", format!("must be positive, got {dt}"));
        }
    }
    if !(d.t_final > 0.0) {
        push(&mut out, "discretization.t_final", format!("must be positive, got {}", d.t_final));
    }
    if d.cells < 4 {
        push(&mut out, "discretization.cells", format!("need at least 4, got {}", d.cells));
    }
    if !(d.alpha_min > 0.0 && d.alpha_max > d.alpha_min) || d.n_alpha < 2 {
        push(&mut out, "discretization.alpha_min", format!("need 0 < alpha_min < alpha_max and n_alpha >= 2, got ({}, {}, {})", d.alpha_min, d.alpha_max, d.n_alpha));
    }
    if !(1..=3).contains(&d.max_order) {
        push(&mut out, "discretization.max_order", format!("must lie in 1..=3, got {}", d.max_order));
    }
    if d.eps_scan.len() < 2 || d.eps_scan.iter().any(|&e| !(e > 0.0)) {
        push(&mut out, "discretization.eps_scan", "need at least two positive values".into());
    }
    let t = &c.tolerances;
    if !(t.picard_tol > 0.0) || !(t.milne_tol > 0.0) {
        push(&mut out, "tolerances", "tolerances must be positive".into());
    }
    if !(c.perturbation > 0.0) {
        push(&mut out, "perturbation", format!("must be positive, got {}", c.perturbation));
    }
    if !(c.slab.amplitude.is_finite()) {
        push(&mut out, "slab.amplitude", "must be finite".into());
    }
    out
}
