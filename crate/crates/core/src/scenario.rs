//! Scenario documents and batch runs.
//!
//! A scenario is a TOML document describing one run: robot parameters, an
//! optional controller, the mode and its settings. Angles in documents are in
//! degrees; everything downstream works in radians.
//!
//! ```toml
//! schema_version = 1
//! name = "regulate"
//! mode = "simulate"
//!
//! [robot]
//! preset = "desk_scale"
//!
//! [controller]
//! theta_star_deg = 5.0
//! gamma = 0.05
//! kd = 1.0
//!
//! [simulation]
//! duration = 8.0
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, sig6, StiffnessMode, StiffnessReport};
use crate::controller::{self, convexity_bound, ControllerSpec, SaturationPolicy};
use crate::dynamics::{self, Controls, EventKind, IntegrationOptions, ProbeConfig, ProbeLoad, Trajectory};
use crate::error::{Error, Result};
use crate::ident::{self, Gauge, TensionNoise};
use crate::model::{self, RobotParams, State};
use crate::svg::{LineChart, Series, SeriesStyle};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Probe,
    SweepMu,
    SweepGamma,
    Identify,
    Equilibria,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Probe => "probe",
            Mode::SweepMu => "sweep_mu",
            Mode::SweepGamma => "sweep_gamma",
            Mode::Identify => "identify",
            Mode::Equilibria => "equilibria",
        }
    }
}

/// Named parameter sets a robot section can start from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    HardwareIdentified,
    DeskScale,
    StiffBeam,
}

impl Preset {
    pub fn params(&self) -> RobotParams {
        match self {
            Preset::HardwareIdentified => RobotParams::hardware_identified(),
            Preset::DeskScale => RobotParams::desk_scale(),
            Preset::StiffBeam => RobotParams::stiff_beam(),
        }
    }
}

/// Robot parameters: an optional preset overridden field by field.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_elastic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_bend: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<bool>,
}

impl RobotSection {
    pub fn from_params(p: &RobotParams) -> Self {
        RobotSection {
            preset: None,
            n: Some(p.n),
            ell: Some(p.ell),
            r: Some(p.r),
            m: Some(p.m),
            alpha1: Some(p.alpha1),
            alpha2: Some(p.alpha2),
            c1: Some(p.c1),
            c2: Some(p.c2),
            d: Some(p.d),
            k_elastic: Some(p.k_elastic),
            k_bend: Some(p.k_bend),
            u0: Some(p.u0),
            gravity: Some(p.gravity),
        }
    }

    pub fn resolve(&self) -> Result<RobotParams> {
        let base = self.preset.map(|p| p.params());
        macro_rules! field {
            ($name:ident) => {
                match (self.$name, &base) {
                    (Some(v), _) => v,
                    (None, Some(b)) => b.$name,
                    (None, None) => {
                        return Err(Error::invalid(
                            stringify!($name),
                            "missing (give a value or a preset)",
                        ))
                    }
                }
            };
        }
        let alpha2 = field!(alpha2);
        let ell = field!(ell);
        let r = field!(r);
        let p = RobotParams {
            n: field!(n),
            ell,
            r,
            m: field!(m),
            alpha1: field!(alpha1),
            alpha2,
            c1: field!(c1),
            c2: field!(c2),
            d: field!(d),
            k_elastic: self
                .k_elastic
                .or(base.as_ref().map(|b| b.k_elastic))
                .unwrap_or(alpha2 / 4.0 / (ell * ell + r * r)),
            k_bend: self.k_bend.or(base.as_ref().map(|b| b.k_bend)).unwrap_or(alpha2 / 4.0),
            u0: self.u0.or(base.as_ref().map(|b| b.u0)).unwrap_or(0.0),
            gravity: self.gravity.or(base.as_ref().map(|b| b.gravity)).unwrap_or(true),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Damping gain: a scalar times the identity or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Default for Gain {
    fn default() -> Self {
        Gain::Scalar(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub theta_star_deg: f64,
    #[serde(default)]
    pub tau2_star: f64,
    pub gamma: f64,
    #[serde(default)]
    pub kd: Gain,
    #[serde(default)]
    pub saturation: SaturationPolicy,
}

impl ControllerSection {
    pub fn spec(&self, n: usize) -> Result<ControllerSpec> {
        let kd = match &self.kd {
            Gain::Scalar(k) => DMatrix::identity(n, n) * *k,
            Gain::Matrix(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension {
                        what: "kd",
                        expected: n,
                        got: rows.len(),
                    });
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
        };
        Ok(ControllerSpec {
            theta_star: self.theta_star_deg.to_radians(),
            tau2_star: self.tau2_star,
            gamma: self.gamma,
            kd,
            saturation: self.saturation,
        })
    }
}

fn default_duration() -> f64 {
    8.0
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSection {
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Homogeneous initial angle (deg).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_theta_deg: Option<f64>,
    /// Initial joint angles (deg); takes precedence over `initial_theta_deg`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_q_deg: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_ext: Option<Vec<f64>>,
    /// Constant open-loop tensions (N), used when there is no controller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensions: Option<[f64; 2]>,
    /// Window for steady-state statistics (s); defaults to the second half.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_window: Option<[f64; 2]>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            duration: default_duration(),
            dt: default_dt(),
            initial_theta_deg: None,
            initial_q_deg: None,
            initial_p: None,
            tau_ext: None,
            tensions: None,
            steady_window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepSection {
    #[serde(default)]
    pub values: Vec<f64>,
    /// Probe displacement (m); defaults to 1e-4 of the chain length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_x: Option<f64>,
    /// Contact distance beyond the last link's centre (m); defaults to the tip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_correlation: Option<f64>,
    /// Also evaluate the analytic open-loop stiffness (`sweep_mu` only).
    #[serde(default)]
    pub compare_analytic: bool,
}

fn default_theta_min() -> f64 {
    -15.0
}
fn default_theta_max() -> f64 {
    15.0
}
fn default_angles() -> usize {
    15
}
fn default_repeats() -> usize {
    6
}
fn default_ident_tau2() -> f64 {
    25.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifySection {
    #[serde(default = "default_theta_min")]
    pub theta_min_deg: f64,
    #[serde(default = "default_theta_max")]
    pub theta_max_deg: f64,
    #[serde(default = "default_angles")]
    pub angles: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Pretension held while recording (N).
    #[serde(default = "default_ident_tau2")]
    pub tau2: f64,
    #[serde(default)]
    pub noise: TensionNoise,
    /// Parameter held fixed; defaults to `c1` at the robot's value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<Gauge>,
}

impl Default for IdentifySection {
    fn default() -> Self {
        IdentifySection {
            theta_min_deg: default_theta_min(),
            theta_max_deg: default_theta_max(),
            angles: default_angles(),
            repeats: default_repeats(),
            tau2: default_ident_tau2(),
            noise: TensionNoise::None,
            gauge: None,
        }
    }
}

impl IdentifySection {
    pub fn thetas(&self) -> Vec<f64> {
        let k = self.angles;
        (0..k)
            .map(|i| {
                let s = if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 };
                (self.theta_min_deg + s * (self.theta_max_deg - self.theta_min_deg)).to_radians()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EquilibriaSection {
    /// Homogeneous angles to test (deg).
    #[serde(default)]
    pub thetas_deg: Vec<f64>,
    /// Non-homogeneous configurations to test (deg per joint).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets_deg: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<String>,
    #[serde(default = "yes")]
    pub plots: bool,
    pub robot: RobotSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerSection>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identify: Option<IdentifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<EquilibriaSection>,
}

fn yes() -> bool {
    true
}

/// Line of the first `key = ...` assignment, optionally inside `[section]`.
fn line_of_key(doc: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in doc.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[') {
            current = Some(h.trim_end_matches(']').trim().to_string());
            continue;
        }
        let in_section = match section {
            Some(s) => current.as_deref() == Some(s),
            None => true,
        };
        if in_section {
            if let Some(rest) = t.strip_prefix(key) {
                let next = rest.chars().next();
                if matches!(next, Some(c) if c == '=' || c == ' ' || c == '_' || c == '\t') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn line_of_offset(doc: &str, offset: usize) -> usize {
    doc[..offset.min(doc.len())].matches('\n').count() + 1
}

/// Section a validation error most likely refers to.
fn section_for(name: &str) -> Option<&'static str> {
    match name {
        "theta_star" | "gamma" | "kd" | "tau2_star" => Some("controller"),
        "dt" | "duration" | "tau_ext" | "initial_p" | "initial_q" | "tensions" | "steady_window" => Some("simulation"),
        "values" | "delta_x" | "contact_offset" | "min_correlation" => Some("sweep"),
        "n" | "ell" | "r" | "m" | "alpha1" | "alpha2" | "c1" | "c2" | "d" | "k_elastic" | "k_bend" | "u0" => {
            Some("robot")
        }
        _ => None,
    }
}

fn scenario_error(doc: Option<&str>, err: Error) -> Error {
    let line = match (&err, doc) {
        (Error::InvalidParameter { name, .. }, Some(doc)) => line_of_key(doc, section_for(name), name),
        (Error::Dimension { what, .. }, Some(doc)) => line_of_key(doc, section_for(what), what),
        _ => None,
    };
    Error::Scenario {
        line,
        message: err.to_string(),
    }
}

impl Scenario {
    pub fn robot_params(&self) -> Result<RobotParams> {
        self.robot.resolve()
    }

    pub fn controller_spec(&self) -> Result<Option<ControllerSpec>> {
        let n = self.robot_params()?.n;
        self.controller.as_ref().map(|c| c.spec(n)).transpose()
    }

    pub fn initial_state(&self) -> Result<State> {
        let n = self.robot_params()?.n;
        let sim = &self.simulation;
        let q = match (&sim.initial_q_deg, sim.initial_theta_deg) {
            (Some(q), _) => {
                if q.len() != n {
                    return Err(Error::Dimension {
                        what: "initial_q",
                        expected: n,
                        got: q.len(),
                    });
                }
                DVector::from_iterator(n, q.iter().map(|d| d.to_radians()))
            }
            (None, Some(t)) => DVector::from_element(n, t.to_radians()),
            (None, None) => DVector::zeros(n),
        };
        let p = match &sim.initial_p {
            Some(p) => {
                if p.len() != n {
                    return Err(Error::Dimension {
                        what: "initial_p",
                        expected: n,
                        got: p.len(),
                    });
                }
                DVector::from_column_slice(p)
            }
            None => DVector::zeros(n),
        };
        State::new(q, p)
    }

    pub fn tau_ext(&self) -> Result<Option<DVector<f64>>> {
        let n = self.robot_params()?.n;
        match &self.simulation.tau_ext {
            Some(t) if t.len() != n => Err(Error::Dimension {
                what: "tau_ext",
                expected: n,
                got: t.len(),
            }),
            Some(t) => Ok(Some(DVector::from_column_slice(t))),
            None => Ok(None),
        }
    }

    pub fn probe_config(&self, params: &RobotParams) -> ProbeConfig {
        let mut cfg = ProbeConfig::for_params(params);
        if let Some(s) = &self.sweep {
            if let Some(dx) = s.delta_x {
                cfg.delta_x = dx;
            }
            if let Some(off) = s.contact_offset {
                cfg.contact_offset = off;
            }
        }
        cfg
    }

    /// Checks every physical and mode-specific invariant.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        {
            return Err(Error::invalid("name", "use letters, digits, '_', '-' or '.'"));
        }
        let params = self.robot_params()?;
        let spec = self.controller_spec()?;
        if let Some(spec) = &spec {
            spec.validate(&params)?;
        }
        let sim = &self.simulation;
        if !(sim.dt.is_finite() && sim.dt > 0.0) {
            return Err(Error::invalid("dt", "time step must be > 0"));
        }
        if !(sim.duration.is_finite() && sim.duration >= sim.dt) {
            return Err(Error::invalid("duration", "duration must be >= dt"));
        }
        let state = self.initial_state()?;
        params.check_configuration(&state.q)?;
        self.tau_ext()?;
        if let Some(u) = sim.tensions {
            if !(u[0] >= 0.0 && u[1] >= 0.0) {
                return Err(Error::invalid("tensions", "tendon tensions must be >= 0"));
            }
        }
        let sweep_values = self.sweep.as_ref().map(|s| s.values.as_slice()).unwrap_or(&[]);
        if let Some(s) = &self.sweep {
            if let Some(dx) = s.delta_x {
                if !(dx.is_finite() && dx > 0.0) {
                    return Err(Error::invalid("delta_x", "probe displacement must be > 0"));
                }
            }
            if sweep_values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("values", "sweep values must be finite"));
            }
        }
        match self.mode {
            Mode::Simulate | Mode::Probe => {}
            Mode::SweepMu => {
                if sweep_values.len() < 2 {
                    return Err(Error::invalid("values", "sweep_mu needs [sweep] values with >= 2 entries"));
                }
                if sweep_values.iter().any(|&v| v < 0.0) {
                    return Err(Error::invalid("values", "pretensions must be >= 0"));
                }
            }
            Mode::SweepGamma => {
                if spec.is_none() {
                    return Err(Error::invalid("controller", "sweep_gamma needs a [controller] section"));
                }
                if sweep_values.len() < 2 {
                    return Err(Error::invalid("values", "sweep_gamma needs [sweep] values with >= 2 entries"));
                }
                if sweep_values.iter().any(|&v| v <= 0.0) {
                    return Err(Error::invalid("gamma", "swept gains must be > 0"));
                }
            }
            Mode::Identify => {
                let id = self.identify.clone().unwrap_or_default();
                if id.angles < 3 || id.repeats < 1 {
                    return Err(Error::invalid("angles", "identification needs >= 3 angles and >= 1 repeat"));
                }
                if id.tau2.is_nan() || id.tau2 < 0.0 {
                    return Err(Error::invalid("tau2", "pretension must be >= 0"));
                }
            }
            Mode::Equilibria => {
                let eq = self
                    .equilibria
                    .as_ref()
                    .ok_or_else(|| Error::invalid("equilibria", "equilibria mode needs an [equilibria] section"))?;
                if eq.thetas_deg.is_empty() && eq.targets_deg.is_empty() {
                    return Err(Error::invalid("thetas_deg", "nothing to test"));
                }
                for t in &eq.targets_deg {
                    if t.len() != params.n {
                        return Err(Error::Dimension {
                            what: "targets_deg",
                            expected: params.n,
                            got: t.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// Parsed scenario with keys that were ignored in lenient mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub scenario: Scenario,
    pub warnings: Vec<String>,
}

/// Strict parse: unknown keys are errors.
pub fn parse_scenario(doc: &str) -> Result<Scenario> {
    parse_scenario_with(doc, true).map(|p| p.scenario)
}

pub fn parse_scenario_with(doc: &str, strict: bool) -> Result<Parsed> {
    let de = toml::Deserializer::parse(doc).map_err(|e| Error::Scenario {
        line: e.span().map(|s| line_of_offset(doc, s.start)),
        message: e.message().to_string(),
    })?;
    let mut ignored = Vec::new();
    let scenario: Scenario = serde_ignored::deserialize(de, |path| ignored.push(path.to_string())).map_err(
        |e: toml::de::Error| Error::Scenario {
            line: e.span().map(|s| line_of_offset(doc, s.start)),
            message: e.message().to_string(),
        },
    )?;
    if strict {
        if let Some(key) = ignored.first() {
            let (section, leaf) = match key.rsplit_once('.') {
                Some((s, l)) => (Some(s), l),
                None => (None, key.as_str()),
            };
            return Err(Error::Scenario {
                line: line_of_key(doc, section, leaf),
                message: format!("unknown key `{key}`"),
            });
        }
    }
    scenario.validate().map_err(|e| scenario_error(Some(doc), e))?;
    Ok(Parsed {
        scenario,
        warnings: ignored.into_iter().map(|k| format!("ignored unknown key `{k}`")).collect(),
    })
}

/// Pass/fail check evaluated at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Monitor {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Monitor {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Monitor {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub mode: Mode,
    pub monitors: Vec<Monitor>,
    /// Key numbers of the run.
    pub values: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
    /// `phase: message` when the run failed.
    pub failure: Option<String>,
}

impl RunReport {
    fn new(s: &Scenario) -> Self {
        RunReport {
            name: s.name.clone(),
            mode: s.mode,
            monitors: Vec::new(),
            values: BTreeMap::new(),
            notes: Vec::new(),
            files: Vec::new(),
            failure: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.monitors.iter().all(|m| m.passed)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[{}] mode = {}", self.name, self.mode.as_str());
        for (k, v) in &self.values {
            if v.fract() == 0.0 && v.abs() < 1e15 {
                let _ = writeln!(out, "{k} = {}", *v as i64);
            } else {
                let _ = writeln!(out, "{k} = {}", sig6(*v));
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        for m in &self.monitors {
            let _ = writeln!(
                out,
                "monitor {} = {} ({})",
                m.name,
                if m.passed { "PASS" } else { "FAIL" },
                m.detail
            );
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(out, "failed: {f}");
        }
        let _ = writeln!(out, "status = {}", if self.passed() { "ok" } else { "failed" });
        out
    }

    fn value(&mut self, key: &str, v: f64) {
        self.values.insert(key.into(), v);
    }

    fn write(&mut self, dir: &Path, file: &str, contents: &str) -> Result<()> {
        let path = dir.join(file);
        std::fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }
}

fn phase<T>(s: &Scenario, phase: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Phase {
        scenario: s.name.clone(),
        phase,
        source: Box::new(e),
    })
}

/// Runs a validated scenario, writing artifacts into `out_dir`.
///
/// The summary and the machine-readable record are written even when a phase
/// fails; the failure is recorded in the report rather than returned. Only
/// I/O errors on the output directory itself are returned.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunReport> {
    std::fs::create_dir_all(out_dir)?;
    let mut report = RunReport::new(scenario);
    let outcome = match scenario.mode {
        Mode::Simulate => run_simulate(scenario, out_dir, &mut report),
        Mode::Probe => run_probe(scenario, out_dir, &mut report),
        Mode::SweepMu => run_sweep_mu(scenario, out_dir, &mut report),
        Mode::SweepGamma => run_sweep_gamma(scenario, out_dir, &mut report),
        Mode::Identify => run_identify(scenario, out_dir, &mut report),
        Mode::Equilibria => run_equilibria(scenario, out_dir, &mut report),
    };
    if let Err(e) = outcome {
        report.failure = Some(match &e {
            Error::Phase { phase, source, .. } => format!("{phase}: {source}"),
            other => other.to_string(),
        });
    }
    let nonfinite: Vec<String> = report
        .values
        .iter()
        .filter(|(_, v)| !v.is_finite())
        .map(|(k, _)| k.clone())
        .collect();
    report.monitors.push(Monitor::new(
        "finite_values",
        nonfinite.is_empty(),
        if nonfinite.is_empty() {
            "all reported values finite".to_string()
        } else {
            format!("non-finite: {}", nonfinite.join(", "))
        },
    ));
    let summary = report.summary();
    std::fs::write(out_dir.join("summary.txt"), &summary)?;
    let record = toml::to_string(&report).unwrap_or_else(|e| format!("# record unavailable: {e}\n"));
    std::fs::write(out_dir.join("result.toml"), record)?;
    Ok(report)
}

fn mean_angle_chart(traj: &Trajectory, target_deg: Option<f64>) -> LineChart {
    let pts: Vec<(f64, f64)> = traj
        .t
        .iter()
        .zip(traj.mean_angles())
        .step_by((traj.len() / 2000).max(1))
        .map(|(t, a)| (*t, a.to_degrees()))
        .collect();
    let mut chart = LineChart::new("mean joint angle", "t (s)", "q_sum / n (deg)").with_series(Series::new(
        "simulation",
        pts,
        SeriesStyle::Line,
    ));
    if let (Some(target), Some(&t_end)) = (target_deg, traj.t.last()) {
        chart = chart.with_series(Series::new(
            "target",
            vec![(0.0, target), (t_end, target)],
            SeriesStyle::Dashed,
        ));
    }
    chart
}

fn run_simulate(s: &Scenario, dir: &Path, report: &mut RunReport) -> Result<()> {
    let params = phase(s, "setup", s.robot_params())?;
    let spec = phase(s, "setup", s.controller_spec())?;
    let initial = phase(s, "setup", s.initial_state())?;
    let mut opts = IntegrationOptions::new(s.simulation.dt, s.simulation.duration);
    if let Some(t) = phase(s, "setup", s.tau_ext())? {
        opts = opts.with_tau_ext(t);
    }
    let controls = match &spec {
        Some(spec) => {
            let regime = convexity_bound(&params).regime(spec.gamma);
            report.notes.push(format!("stability regime: {regime:?}"));
            Controls::Feedback(spec.clone())
        }
        None => Controls::Constant(s.simulation.tensions.unwrap_or([0.0, 0.0])),
    };
    let traj = match dynamics::integrate(&initial, &controls, &params, &opts) {
        Ok(t) => t,
        Err(Error::Aborted { t, reason, partial }) => {
            report.write(dir, "trajectory.csv", &partial.to_csv())?;
            return phase(
                s,
                "integrate",
                Err(Error::Aborted {
                    t,
                    reason,
                    partial,
                }),
            );
        }
        Err(e) => return phase(s, "integrate", Err(e)),
    };
    report.write(dir, "trajectory.csv", &traj.to_csv())?;

    let final_state = traj.last_state().expect("non-empty trajectory");
    report.value("final_mean_angle_deg", final_state.mean_angle().to_degrees());
    let [w0, w1] = s
        .simulation
        .steady_window
        .unwrap_or([s.simulation.duration / 2.0, s.simulation.duration]);
    if let Some((mean, sd)) = traj.mean_angle_stats(w0, w1) {
        report.value("steady_mean_angle_deg", mean.to_degrees());
        report.value("steady_std_angle_deg", sd.to_degrees());
    }
    let first = traj.energies[0];
    let last = *traj.energies.last().expect("non-empty trajectory");
    report.value("H_initial", first.h);
    report.value("H_final", last.h);
    if first.h != 0.0 {
        report.value("H_relative_drift", (last.h - first.h).abs() / first.h.abs());
    }

    let saturations = traj.count_events(|k| matches!(k, EventKind::Saturation { .. }));
    let violations = traj.count_events(|k| matches!(k, EventKind::ConstraintViolation { .. }));
    report.value("saturation_events", saturations as f64);
    report.value("constraint_violation_events", violations as f64);
    if let Some(req) = traj.max_tau2_min_required() {
        report.value("max_tau2_min_required", req);
    }
    let nonneg = traj.inputs.iter().all(|u| u[0] >= 0.0 && u[1] >= 0.0);
    report.monitors.push(Monitor::new(
        "tensions_nonnegative",
        nonneg,
        format!("{violations} steps with negative applied tension"),
    ));

    let dissipative = params.d >= 0.0
        && match &controls {
            Controls::Feedback(_) => true,
            Controls::Constant(u) => u[0] == 0.0 && u[1] == 0.0,
            Controls::Schedule(_) => false,
        };
    if dissipative {
        let (tol, label) = match &controls {
            Controls::Feedback(_) => (1e-8, "V = H_d - q^T tau_ext"),
            _ => (1e-9, "V = H - q^T tau_ext"),
        };
        let worst = traj
            .energies
            .windows(2)
            .map(|w| w[1].v - w[0].v)
            .fold(f64::NEG_INFINITY, f64::max);
        report.value("max_storage_increase", worst);
        report.monitors.push(Monitor::new(
            "storage_nonincreasing",
            worst <= tol,
            format!("{label}, largest step increase {}", sig6(worst)),
        ));
    }
    if let Some(spec) = &spec {
        report.value("target_deg", spec.theta_star.to_degrees());
        report.value(
            "final_error_deg",
            (final_state.mean_angle() - spec.theta_star).to_degrees().abs(),
        );
        if s.plots {
            report.write(dir, "mean_angle.svg", &mean_angle_chart(&traj, Some(spec.theta_star.to_degrees())).render())?;
        }
    } else if s.plots {
        report.write(dir, "mean_angle.svg", &mean_angle_chart(&traj, None).render())?;
    }
    Ok(())
}

fn run_probe(s: &Scenario, dir: &Path, report: &mut RunReport) -> Result<()> {
    let params = phase(s, "setup", s.robot_params())?;
    let spec = phase(s, "setup", s.controller_spec())?;
    let cfg = s.probe_config(&params);
    let (q0, load) = match &spec {
        Some(spec) => (spec.q_star(params.n), ProbeLoad::ClosedLoop(spec)),
        None => {
            let u = s.simulation.tensions.unwrap_or([0.0, 0.0]);
            (DVector::zeros(params.n), ProbeLoad::OpenLoop { u })
        }
    };
    let full = phase(s, "probe", dynamics::quasi_static_probe(&q0, load, &params, &cfg))?;
    let half = phase(
        s,
        "probe",
        dynamics::quasi_static_probe(&q0, load, &params, &cfg.with_delta_x(cfg.delta_x / 2.0)),
    )?;
    report.value("delta_x", cfg.delta_x);
    report.value("stiffness", full.stiffness);
    report.value("reaction", full.reaction);
    report.value("newton_iterations", full.iterations as f64);
    let gap = (full.stiffness - half.stiffness).abs() / full.stiffness.abs();
    report.value("half_step_relative_gap", gap);
    report
        .monitors
        .push(Monitor::new("probe_linearity", gap < 5e-3, format!("delta_x vs delta_x/2 gap {}", sig6(gap))));
    match (&spec, load) {
        (Some(spec), _) => {
            let k = phase(
                s,
                "analysis",
                analysis::closed_loop_transverse_stiffness(spec, &params, cfg.contact_offset),
            )?;
            report.value("linearized_stiffness", k);
        }
        (None, ProbeLoad::OpenLoop { u }) if u[0] == u[1] => {
            let k = phase(
                s,
                "analysis",
                analysis::open_loop_stiffness_analytic_at(u[0], &params, cfg.contact_offset),
            )?;
            report.value("analytic_stiffness", k);
        }
        _ => {}
    }
    let mut csv = String::from("sweep_value,stiffness\n");
    let _ = writeln!(csv, "{:.16e},{:.16e}", cfg.delta_x, full.stiffness);
    let _ = writeln!(csv, "{:.16e},{:.16e}", cfg.delta_x / 2.0, half.stiffness);
    report.write(dir, "stiffness.csv", &csv)?;
    Ok(())
}

fn stiffness_chart(report: &StiffnessReport, x_label: &str, extra: Option<&StiffnessReport>) -> LineChart {
    let pts: Vec<(f64, f64)> = report
        .sweep_values
        .iter()
        .copied()
        .zip(report.stiffness_values.iter().copied())
        .collect();
    let (x0, x1) = (
        pts.first().map_or(0.0, |p| p.0),
        pts.last().map_or(1.0, |p| p.0),
    );
    let fit = |x: f64| report.fit_slope * x + report.fit_intercept;
    let mut chart = LineChart::new("transverse stiffness", x_label, "K_T (N/m)")
        .with_series(Series::new(report.mode.to_string(), pts, SeriesStyle::Markers))
        .with_series(Series::new(
            "affine fit",
            vec![(x0, fit(x0)), (x1, fit(x1))],
            SeriesStyle::Line,
        ));
    if let Some(e) = extra {
        chart = chart.with_series(Series::new(
            e.mode.to_string(),
            e.sweep_values
                .iter()
                .copied()
                .zip(e.stiffness_values.iter().copied())
                .collect(),
            SeriesStyle::Dashed,
        ));
    }
    chart
}

fn record_sweep(report: &mut RunReport, sweep: &StiffnessReport, min_r: f64) {
    report.value("kappa1", sweep.fit_slope);
    report.value("kappa2", sweep.fit_intercept);
    report.value("correlation", sweep.correlation);
    report.monitors.push(Monitor::new(
        "sweep_complete",
        sweep.incomplete.is_none(),
        sweep.incomplete.clone().unwrap_or_else(|| format!("{} points", sweep.stiffness_values.len())),
    ));
    report.monitors.push(Monitor::new(
        "correlation",
        sweep.correlation >= min_r,
        format!("r = {} (target >= {min_r})", sig6(sweep.correlation)),
    ));
}

fn run_sweep_mu(s: &Scenario, dir: &Path, report: &mut RunReport) -> Result<()> {
    let params = phase(s, "setup", s.robot_params())?;
    let sweep_cfg = s.sweep.clone().unwrap_or_default();
    let cfg = s.probe_config(&params);
    let probe = phase(
        s,
        "sweep",
        analysis::open_loop_stiffness_sweep(&sweep_cfg.values, &params, &cfg, StiffnessMode::OpenLoopProbe),
    )?;
    report.write(dir, "stiffness.csv", &probe.to_csv())?;
    record_sweep(report, &probe, sweep_cfg.min_correlation.unwrap_or(0.98));
    report.monitors.push(Monitor::new(
        "strictly_increasing",
        probe.is_strictly_increasing(),
        "probe stiffness over mu",
    ));
    let analytic = if sweep_cfg.compare_analytic {
        let a = phase(
            s,
            "analysis",
            analysis::open_loop_stiffness_sweep(&sweep_cfg.values, &params, &cfg, StiffnessMode::OpenLoopAnalytic),
        )?;
        report.write(dir, "stiffness_analytic.csv", &a.to_csv())?;
        let worst = probe
            .stiffness_values
            .iter()
            .zip(&a.stiffness_values)
            .map(|(p, a)| ((p - a) / a).abs())
            .fold(0.0, f64::max);
        report.value("analytic_max_relative_gap", worst);
        report.monitors.push(Monitor::new(
            "analytic_agreement",
            worst < 0.01,
            format!("max relative gap {}", sig6(worst)),
        ));
        Some(a)
    } else {
        None
    };
    if s.plots {
        report.write(dir, "stiffness.svg", &stiffness_chart(&probe, "mu (N)", analytic.as_ref()).render())?;
    }
    Ok(())
}

fn run_sweep_gamma(s: &Scenario, dir: &Path, report: &mut RunReport) -> Result<()> {
    let params = phase(s, "setup", s.robot_params())?;
    let spec = phase(s, "setup", s.controller_spec())?
        .ok_or_else(|| Error::invalid("controller", "sweep_gamma needs a controller"))?;
    let sweep_cfg = s.sweep.clone().unwrap_or_default();
    let cfg = s.probe_config(&params);
    let sweep = phase(
        s,
        "sweep",
        analysis::transverse_stiffness_sweep(&spec, &sweep_cfg.values, &params, &cfg),
    )?;
    report.write(dir, "stiffness.csv", &sweep.to_csv())?;
    record_sweep(report, &sweep, sweep_cfg.min_correlation.unwrap_or(0.99));
    report.monitors.push(Monitor::new(
        "kappa1_positive",
        sweep.fit_slope > 0.0,
        format!("kappa1 = {}", sig6(sweep.fit_slope)),
    ));
    let disc = phase(s, "analysis", analysis::eigenvalue_discrepancy(&spec, &params))?;
    report.notes.push(disc.to_string());
    if s.plots {
        report.write(dir, "stiffness.svg", &stiffness_chart(&sweep, "gamma (N m/rad)", None).render())?;
    }
    Ok(())
}

fn run_identify(s: &Scenario, dir: &Path, report: &mut RunReport) -> Result<()> {
    let params = phase(s, "setup", s.robot_params())?;
    let id = s.identify.clone().unwrap_or_default();
    let data = phase(
        s,
        "generate",
        ident::generate_static_dataset(&params, &id.thetas(), id.repeats, id.tau2, id.noise, s.seed),
    )?;
    report.write(dir, "dataset.csv", &data.to_csv())?;
    report.value("samples", data.samples.len() as f64);
    report.value("rejected", data.rejected.len() as f64);
    if let Some(t2) = data.rejected.iter().filter_map(|r| r.min_tau2).reduce(f64::max) {
        report.notes.push(format!("rejected samples become feasible with tau2 >= {}", sig6(t2)));
    }
    let gauge = id.gauge.unwrap_or(Gauge::C1(params.c1));
    let fit = phase(s, "fit", ident::fit_parameters(&data.samples, params.n, gauge))?;
    report.write(dir, "ident.csv", &fit.to_csv())?;
    for (k, v) in [
        ("alpha1_hat", fit.alpha1_hat),
        ("alpha2_hat", fit.alpha2_hat),
        ("c1_hat", fit.c1_hat),
        ("c2_hat", fit.c2_hat),
        ("residual_rms", fit.residual_rms),
    ] {
        report.value(k, v);
    }
    for (k, e) in ["alpha1", "alpha2", "c1", "c2"].iter().zip(fit.relative_errors(&params)) {
        report.value(&format!("{k}_relative_error"), e);
    }
    report
        .monitors
        .push(Monitor::new("sign_ok", fit.sign_ok, "alpha1, alpha2, c1 > 0 and c2 < 0"));
    Ok(())
}

fn run_equilibria(s: &Scenario, dir: &Path, report: &mut RunReport) -> Result<()> {
    let params = phase(s, "setup", s.robot_params())?;
    let eq = s.equilibria.clone().unwrap_or_default();
    let gamma = s.controller.as_ref().map_or(params.alpha2, |c| c.gamma);
    let mut csv = String::from("theta_deg,assignable,residual_norm,tau1,tau2,u1,u2\n");
    let mut all_ok = true;
    for &deg in &eq.thetas_deg {
        let r = phase(s, "homogeneous", analysis::homogeneous_membership(deg.to_radians(), &params))?;
        let [u1, u2] = r.tensions();
        all_ok &= r.assignable;
        let _ = writeln!(
            csv,
            "{deg:.16e},{},{:.16e},{:.16e},{:.16e},{u1:.16e},{u2:.16e}",
            r.assignable, r.residual_norm, r.tau1, r.tau2
        );
    }
    report.write(dir, "equilibria.csv", &csv)?;
    if !eq.thetas_deg.is_empty() {
        report.monitors.push(Monitor::new(
            "homogeneous_assignable",
            all_ok,
            format!("{} homogeneous angles", eq.thetas_deg.len()),
        ));
    }
    for (i, target) in eq.targets_deg.iter().enumerate() {
        let q = DVector::from_iterator(params.n, target.iter().map(|d| d.to_radians()));
        let g = model::g1(&q, &params);
        let ones = crate::linalg::ones(params.n);
        let r = phase(
            s,
            "membership",
            analysis::assignable_membership_general(&q, &(&ones * params.c1), &(&ones * g), &params),
        )?;
        let residual = controller::matching_residual_for_target(&q, &q, gamma, &params).amax();
        report.value(&format!("target{}_matching_residual", i + 1), residual);
        report.notes.push(format!(
            "target {}: assignable = {} ({}), matching residual {}",
            i + 1,
            r.assignable,
            r.reason,
            sig6(residual)
        ));
    }
    Ok(())
}

/// Which scenario modes a command-line verb accepts.
pub fn modes_for_command(command: &str) -> &'static [Mode] {
    match command {
        "simulate" => &[Mode::Simulate],
        "sweep" => &[Mode::Probe, Mode::SweepMu, Mode::SweepGamma],
        "identify" => &[Mode::Identify],
        "equilibria" => &[Mode::Equilibria],
        _ => &[],
    }
}

/// Output directory of a scenario: `out/<name>` when `out` is given,
/// otherwise the document's `outputs` or `out/<name>` under the working
/// directory.
pub fn output_dir(s: &Scenario, out: Option<&Path>) -> PathBuf {
    match (out, &s.outputs) {
        (Some(dir), _) => dir.join(&s.name),
        (None, Some(o)) => PathBuf::from(o),
        (None, None) => PathBuf::from("out").join(&s.name),
    }
}

/// Parses and runs scenario files for one verb, at most `jobs` at a time.
///
/// Results keep the order of `files`; parse failures are reported per file.
pub fn run_batch(
    command: &str,
    files: &[PathBuf],
    out: Option<&Path>,
    jobs: usize,
    strict: bool,
) -> Vec<std::result::Result<RunReport, String>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let allowed = modes_for_command(command);
    let results: Mutex<Vec<Option<std::result::Result<RunReport, String>>>> = Mutex::new(vec![None; files.len()]);
    let next = AtomicUsize::new(0);
    let one = |path: &PathBuf| -> std::result::Result<RunReport, String> {
        let doc = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let parsed = parse_scenario_with(&doc, strict).map_err(|e| format!("{}: {e}", path.display()))?;
        let s = parsed.scenario;
        if !allowed.contains(&s.mode) {
            return Err(format!(
                "{}: mode `{}` cannot be run with `{command}`",
                path.display(),
                s.mode.as_str()
            ));
        }
        let mut report = run(&s, &output_dir(&s, out)).map_err(|e| format!("{}: {e}", path.display()))?;
        report.notes.extend(parsed.warnings);
        Ok(report)
    };
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(files.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= files.len() {
                    break;
                }
                let r = one(&files[i]);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every file processed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "regulate"
mode = "simulate"

[robot]
preset = "hardware_identified"

[controller]
theta_star_deg = 5.0
gamma = 0.1
kd = 1.0
"#;

    #[test]
    fn round_trip() {
        let s = parse_scenario(MINIMAL).unwrap();
        let again = parse_scenario(&s.to_toml()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn negative_gamma_names_the_invariant() {
        let doc = MINIMAL.replace("gamma = 0.1", "gamma = -1.0");
        match parse_scenario(&doc).unwrap_err() {
            Error::Scenario { line, message } => {
                assert!(message.contains("gamma"), "{message}");
                assert_eq!(line, Some(11));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn sweep_gamma_requires_values() {
        let doc = MINIMAL.replace("mode = \"simulate\"", "mode = \"sweep_gamma\"");
        let err = parse_scenario(&doc).unwrap_err().to_string();
        assert!(err.contains("values"), "{err}");
    }

    #[test]
    fn unknown_keys_strict_and_lenient() {
        let doc = MINIMAL.replace("kd = 1.0", "kd = 1.0\ngamme = 2.0");
        // the controller section rejects unknown fields in either mode
        assert!(parse_scenario_with(&doc, false).is_err());
        let doc = MINIMAL.replace("[robot]", "colour = \"red\"\n\n[robot]");
        match parse_scenario(&doc).unwrap_err() {
            Error::Scenario { line, message } => {
                assert!(message.contains("colour"));
                assert_eq!(line, Some(6));
            }
            e => panic!("{e}"),
        }
        let p = parse_scenario_with(&doc, false).unwrap();
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let doc = MINIMAL.replace("gamma = 0.1", "gamma = ");
        match parse_scenario(&doc).unwrap_err() {
            Error::Scenario { line, .. } => assert_eq!(line, Some(11)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn robot_overrides_apply_on_top_of_preset() {
        let doc = MINIMAL.replace("preset = \"hardware_identified\"", "preset = \"hardware_identified\"\nalpha2 = 0.6");
        let s = parse_scenario(&doc).unwrap();
        let p = s.robot_params().unwrap();
        assert_eq!(p.alpha2, 0.6);
        assert_eq!(p.c1, RobotParams::hardware_identified().c1);
    }

    #[test]
    fn command_modes() {
        assert!(modes_for_command("sweep").contains(&Mode::SweepMu));
        assert!(modes_for_command("bogus").is_empty());
    }
}
