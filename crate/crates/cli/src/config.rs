use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use polaron_core::crystal::CrystalSpec;
use polaron_core::defect::{ChargeBlob, DefectOptions};
use polaron_core::fields::{CoulombKernel, Coupling, Grid};
use polaron_core::macroscopic::{supercell_count, validate_ladder, CoupledOptions, DielectricOptions};
use polaron_core::multipolaron::NPolaronOptions;
use polaron_core::optimize::DescentOptions;
use polaron_core::DielectricTensor;
use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    PekarMin,
    Npolaron,
    Binding,
    CrystalScf,
    Defect,
    Decoupling,
    Dielectric,
    Macrolimit,
    Coupled,
    PekarLimit,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::PekarMin => "pekar-min",
            Scenario::Npolaron => "npolaron",
            Scenario::Binding => "binding",
            Scenario::CrystalScf => "crystal-scf",
            Scenario::Defect => "defect",
            Scenario::Decoupling => "decoupling",
            Scenario::Dielectric => "dielectric",
            Scenario::Macrolimit => "macrolimit",
            Scenario::Coupled => "coupled",
            Scenario::PekarLimit => "pekar-limit",
        }
    }
}

/// ε as a scalar, a diagonal or a full symmetric matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl EpsilonSpec {
    pub fn tensor(&self, d: usize) -> polaron_core::Result<DielectricTensor> {
        match self {
            EpsilonSpec::Scalar(e) => DielectricTensor::scalar(d, *e),
            EpsilonSpec::Diagonal(v) => DielectricTensor::diagonal(v),
            EpsilonSpec::Matrix(m) => DielectricTensor::new(m.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub dim: usize,
    pub points: usize,
    pub length: f64,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock { dim: 3, points: 32, length: 20.0 }
    }
}

impl GridBlock {
    pub fn build(&self) -> polaron_core::Result<std::sync::Arc<Grid>> {
        Grid::cubic_box(self.dim, self.length, self.points)
    }

    fn check(&self, path: &str, errs: &mut Vec<String>) {
        if !(1..=3).contains(&self.dim) {
            errs.push(format!("{path}.dim: must be 1, 2 or 3, got {}", self.dim));
        }
        if self.points < 4 || self.points % 2 == 1 {
            errs.push(format!("{path}.points: must be even and ≥ 4, got {}", self.points));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            errs.push(format!("{path}.length: must be positive, got {}", self.length));
        }
    }
}

/// ε or α, exactly one.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<EpsilonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl CouplingBlock {
    pub fn coupling(&self, d: usize) -> polaron_core::Result<Coupling> {
        match (&self.epsilon, self.alpha) {
            (Some(e), None) => Ok(Coupling::Dielectric(e.tensor(d)?)),
            (None, Some(a)) => Ok(Coupling::Isotropic { alpha: a }),
            _ => Err(polaron_core::Error::Invalid("exactly one of epsilon and alpha".into())),
        }
    }

    fn check(&self, path: &str, d: usize, errs: &mut Vec<String>) {
        match (&self.epsilon, self.alpha) {
            (Some(e), None) => {
                if let Err(err) = e.tensor(d) {
                    errs.push(format!("{path}.epsilon: {err}"));
                } else if e.tensor(d).map(|t| t.dim() != d).unwrap_or(false) {
                    errs.push(format!("{path}.epsilon: dimension does not match grid dimension {d}"));
                }
            }
            (None, Some(a)) => {
                if !(a >= 0.0) || !a.is_finite() {
                    errs.push(format!("{path}.alpha: must be non-negative, got {a}"));
                }
            }
            (None, None) => errs.push(format!("{path}: one of epsilon or alpha is required")),
            (Some(_), Some(_)) => errs.push(format!("{path}: epsilon and alpha are mutually exclusive")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PekarBlock {
    #[serde(flatten)]
    pub coupling: CouplingBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<CoulombKernel>,
    #[serde(default)]
    pub descent: DescentOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_width: Option<f64>,
    /// Relative amplitude of the seeded random perturbation of the starting orbital.
    #[serde(default)]
    pub perturbation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NPolaronBlock {
    pub particles: usize,
    #[serde(flatten)]
    pub coupling: CouplingBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<CoulombKernel>,
    #[serde(default)]
    pub options: NPolaronOptions,
    /// Distance between the Gaussians of the starting cluster.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectBlock {
    pub blobs: Vec<ChargeBlob>,
    #[serde(default = "default_ladder")]
    pub ladder: Vec<usize>,
    #[serde(default)]
    pub options: DefectOptions,
}

fn default_ladder() -> Vec<usize> {
    vec![8, 16, 32]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecouplingBlock {
    pub first: Vec<ChargeBlob>,
    pub second: Vec<ChargeBlob>,
    #[serde(default = "default_separations")]
    pub separations: Vec<usize>,
    #[serde(default = "default_supercell")]
    pub supercell: usize,
}

fn default_separations() -> Vec<usize> {
    vec![0, 2, 8]
}

fn default_supercell() -> usize {
    24
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroBlock {
    pub m_ladder: Vec<f64>,
    pub box_cells: f64,
    pub charge: f64,
    /// Macroscopic ε; extracted with the dielectric block when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<EpsilonSpec>,
    /// Width and grid size of the Gaussian ψ of the macrolimit ladder.
    pub psi_width: f64,
    pub psi_points: usize,
    pub particles: usize,
    /// Mass of the coupled scenario; the smallest ladder value when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    pub npolaron: NPolaronOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_width: Option<f64>,
    pub max_outer: usize,
    pub energy_tolerance: f64,
    pub tolerance: f64,
}

impl Default for MacroBlock {
    fn default() -> Self {
        let c = CoupledOptions::default();
        MacroBlock {
            m_ladder: vec![0.5, 0.25, 0.125],
            box_cells: c.box_cells,
            charge: c.charge,
            epsilon: None,
            psi_width: 1.0,
            psi_points: 64,
            particles: 1,
            mass: None,
            npolaron: c.npolaron,
            initial_width: c.initial_width,
            max_outer: c.max_outer,
            energy_tolerance: c.energy_tolerance,
            tolerance: c.tolerance,
        }
    }
}

impl MacroBlock {
    pub fn coupled_options(&self) -> CoupledOptions {
        CoupledOptions {
            box_cells: self.box_cells,
            charge: self.charge,
            npolaron: self.npolaron.clone(),
            initial_width: self.initial_width,
            max_outer: self.max_outer,
            energy_tolerance: self.energy_tolerance,
            tolerance: self.tolerance,
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass.unwrap_or_else(|| self.m_ladder.iter().cloned().fold(f64::INFINITY, f64::min))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence. Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pekar: Option<PekarBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub npolaron: Option<NPolaronBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crystal: Option<CrystalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<DefectBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoupling: Option<DecouplingBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dielectric: Option<DielectricOptions>,
    #[serde(default, rename = "macro", skip_serializing_if = "Option::is_none")]
    pub macroscopic: Option<MacroBlock>,
}

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Io(_) | ConfigError::Parse(_) => 2,
            ConfigError::Invalid(_) => 3,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse(m) => write!(f, "parse error: {m}"),
            ConfigError::Invalid(errs) => {
                writeln!(f, "invalid config ({} problem{}):", errs.len(), if errs.len() == 1 { "" } else { "s" })?;
                for e in errs {
                    writeln!(f, "  {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// JSON value that rejects repeated keys inside any object.
struct StrictValue(Value);

impl<'de> Deserialize<'de> for StrictValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(StrictVisitor).map(StrictValue)
    }
}

struct StrictVisitor;

impl<'de> Visitor<'de> for StrictVisitor {
    type Value = Value;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a JSON value")
    }

    fn visit_bool<E>(self, v: bool) -> Result<Value, E> {
        Ok(Value::Bool(v))
    }

    fn visit_i64<E>(self, v: i64) -> Result<Value, E> {
        Ok(Value::from(v))
    }

    fn visit_u64<E>(self, v: u64) -> Result<Value, E> {
        Ok(Value::from(v))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Value, E> {
        serde_json::Number::from_f64(v).map(Value::Number).ok_or_else(|| E::custom("non-finite number"))
    }

    fn visit_str<E>(self, v: &str) -> Result<Value, E> {
        Ok(Value::String(v.to_owned()))
    }

    fn visit_string<E>(self, v: String) -> Result<Value, E> {
        Ok(Value::String(v))
    }

    fn visit_unit<E>(self) -> Result<Value, E> {
        Ok(Value::Null)
    }

    fn visit_none<E>(self) -> Result<Value, E> {
        Ok(Value::Null)
    }

    fn visit_some<D: Deserializer<'de>>(self, d: D) -> Result<Value, D::Error> {
        StrictValue::deserialize(d).map(|v| v.0)
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Value, A::Error> {
        let mut out = Vec::new();
        while let Some(StrictValue(v)) = seq.next_element()? {
            out.push(v);
        }
        Ok(Value::Array(out))
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Value, A::Error> {
        let mut out = Map::new();
        let mut seen = HashSet::new();
        while let Some(k) = map.next_key::<String>()? {
            if !seen.insert(k.clone()) {
                return Err(de::Error::custom(format!("duplicate key \"{k}\"")));
            }
            let StrictValue(v) = map.next_value()?;
            out.insert(k, v);
        }
        Ok(Value::Object(out))
    }
}

/// Parses JSON text into a config; a result record is accepted and yields its embedded config.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let StrictValue(mut v) = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if let Some(obj) = v.as_object_mut() {
        if obj.contains_key("config_hash") {
            v = obj.remove("config").ok_or_else(|| ConfigError::Parse("record has no embedded config".into()))?;
        }
    }
    let cfg: RunConfig = serde_json::from_value(v).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let cfg = cfg.with_defaults();
    let errs = cfg.validation_errors();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(errs))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

impl RunConfig {
    /// Fills the optional blocks a scenario can run without.
    pub fn with_defaults(mut self) -> RunConfig {
        use Scenario::*;
        if matches!(self.scenario, Dielectric | Macrolimit | Coupled | PekarLimit) && self.dielectric.is_none() {
            self.dielectric = Some(DielectricOptions::default());
        }
        if matches!(self.scenario, Macrolimit | Coupled | PekarLimit) && self.macroscopic.is_none() {
            self.macroscopic = Some(MacroBlock::default());
        }
        self
    }

    /// Every violated requirement, each prefixed by its field path.
    pub fn validation_errors(&self) -> Vec<String> {
        use Scenario::*;
        let mut errs = Vec::new();
        let need = |present: bool, name: &str, errs: &mut Vec<String>| {
            if !present {
                errs.push(format!("{name}: block required by scenario \"{}\"", self.scenario.name()));
            }
        };
        match self.scenario {
            PekarMin => need(self.pekar.is_some(), "pekar", &mut errs),
            Npolaron | Binding => need(self.npolaron.is_some(), "npolaron", &mut errs),
            CrystalScf | Dielectric | Macrolimit | Coupled | PekarLimit => need(self.crystal.is_some(), "crystal", &mut errs),
            Defect => {
                need(self.crystal.is_some(), "crystal", &mut errs);
                need(self.defect.is_some(), "defect", &mut errs);
            }
            Decoupling => {
                need(self.crystal.is_some(), "crystal", &mut errs);
                need(self.decoupling.is_some(), "decoupling", &mut errs);
            }
        }
        if let Some(p) = &self.pekar {
            p.grid.check("pekar.grid", &mut errs);
            p.coupling.check("pekar", p.grid.dim, &mut errs);
            check_descent("pekar.descent", &p.descent, &mut errs);
            if let Some(w) = p.initial_width {
                positive("pekar.initial_width", w, &mut errs);
            }
            if !(p.perturbation >= 0.0 && p.perturbation < 1.0) {
                errs.push(format!("pekar.perturbation: must lie in [0, 1), got {}", p.perturbation));
            }
        }
        if let Some(n) = &self.npolaron {
            n.grid.check("npolaron.grid", &mut errs);
            n.coupling.check("npolaron", n.grid.dim, &mut errs);
            check_descent("npolaron.options.descent", &n.options.descent, &mut errs);
            if n.particles == 0 {
                errs.push("npolaron.particles: must be positive".into());
            }
            if self.scenario == Binding && n.particles < 2 {
                errs.push(format!("npolaron.particles: binding needs at least 2 particles, got {}", n.particles));
            }
            let b = &n.options.budget;
            let dims = n.particles * n.grid.dim;
            let values = (n.grid.points as f64).powi(dims as i32);
            if dims > b.max_dims || values > b.max_values as f64 {
                errs.push(format!(
                    "npolaron.grid: tensor of {values:.3e} values over {dims} dimensions exceeds the budget ({} values, {} dimensions)",
                    b.max_values, b.max_dims
                ));
            }
        }
        let d = self.crystal.as_ref().map(|c| c.dim());
        if let Some(c) = &self.crystal {
            errs.extend(c.validation_errors().into_iter().map(|e| format!("crystal.{e}")));
        }
        if let Some(b) = &self.defect {
            check_blobs("defect.blobs", &b.blobs, d, &mut errs);
            if b.ladder.is_empty() || b.ladder.iter().any(|&l| l == 0) {
                errs.push(format!("defect.ladder: expected positive supercell sizes, got {:?}", b.ladder));
            }
        }
        if let Some(b) = &self.decoupling {
            check_blobs("decoupling.first", &b.first, d, &mut errs);
            check_blobs("decoupling.second", &b.second, d, &mut errs);
            if b.supercell == 0 {
                errs.push("decoupling.supercell: must be positive".into());
            }
        }
        if let Some(o) = &self.dielectric {
            if let Err(e) = validate_ladder(&o.m_ladder) {
                errs.push(format!("dielectric.m_ladder: {e}"));
            }
            for &m in &o.m_ladder {
                if let Err(e) = supercell_count(o.box_cells, m) {
                    errs.push(format!("dielectric.box_cells: {e}"));
                }
            }
            positive("dielectric.probe_width", o.probe_width, &mut errs);
            positive("dielectric.max_residual", o.max_residual, &mut errs);
        }
        if let Some(m) = &self.macroscopic {
            if let Err(e) = validate_ladder(&m.m_ladder) {
                errs.push(format!("macro.m_ladder: {e}"));
            }
            let mut masses = m.m_ladder.clone();
            if let Some(x) = m.mass {
                masses.push(x);
            }
            for x in masses {
                if let Err(e) = supercell_count(m.box_cells, x) {
                    errs.push(format!("macro.box_cells: {e}"));
                }
            }
            positive("macro.charge", m.charge, &mut errs);
            positive("macro.psi_width", m.psi_width, &mut errs);
            positive("macro.tolerance", m.tolerance, &mut errs);
            if m.psi_points < 4 || m.psi_points % 2 == 1 {
                errs.push(format!("macro.psi_points: must be even and ≥ 4, got {}", m.psi_points));
            }
            if m.particles == 0 {
                errs.push("macro.particles: must be positive".into());
            }
            if let (Some(e), Some(d)) = (&m.epsilon, d) {
                match e.tensor(d) {
                    Ok(t) if t.dim() != d => errs.push(format!("macro.epsilon: dimension does not match crystal dimension {d}")),
                    Err(err) => errs.push(format!("macro.epsilon: {err}")),
                    _ => {}
                }
            }
            check_descent("macro.npolaron.descent", &m.npolaron.descent, &mut errs);
        }
        errs
    }

    /// SHA-256 of the canonical JSON form (sorted keys, defaults filled, output directory excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let v = serde_json::to_value(&c).expect("config serializes");
        let text = serde_json::to_string(&v).expect("value serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn positive(path: &str, v: f64, errs: &mut Vec<String>) {
    if !(v > 0.0) || !v.is_finite() {
        errs.push(format!("{path}: must be positive, got {v}"));
    }
}

fn check_descent(path: &str, o: &DescentOptions, errs: &mut Vec<String>) {
    positive(&format!("{path}.tolerance"), o.tolerance, errs);
    if o.max_iterations == 0 {
        errs.push(format!("{path}.max_iterations: must be positive"));
    }
}

fn check_blobs(path: &str, blobs: &[ChargeBlob], d: Option<usize>, errs: &mut Vec<String>) {
    for (i, b) in blobs.iter().enumerate() {
        positive(&format!("{path}[{i}].width"), b.width, errs);
        if let Some(d) = d {
            if !b.dipole.is_empty() && b.dipole.len() != d {
                errs.push(format!("{path}[{i}].dipole: expected {d} components, got {}", b.dipole.len()));
            }
            if !b.offset.is_empty() && b.offset.len() != d {
                errs.push(format!("{path}[{i}].offset: expected {d} components, got {}", b.offset.len()));
            }
        }
    }
}
