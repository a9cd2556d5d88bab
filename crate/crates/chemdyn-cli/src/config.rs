//! Scenario configs: a JSON envelope (`version`, `kind`, `seed`, `units`,
//! `qubit_cap`) wrapping one kind-specific payload. Parsing is strict —
//! unknown fields and unknown names are errors, with a nearest-match
//! suggestion — and the effective config (defaults folded in) is hashed so
//! manifests can name the exact inputs that produced them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use chemdyn::grid::{sample_potential, AxisExtent, GridSpec};
use chemdyn::kickback::QuantizeMode;
use chemdyn::prep::{HarmonicWell, ThermalSpec, WavepacketSpec};

use crate::CliError;

pub const SCHEMA_VERSION: u64 = 1;
pub const DEFAULT_QUBIT_CAP: usize = 26;

/// Scenario kind names, alphabetical; `list-builtins` and error messages
/// print them in this order.
pub const KINDS: &[&str] = &[
    "arithmetic-audit",
    "compare",
    "phase-estimate",
    "propagate",
    "rate",
    "resources",
    "state-to-state",
];

// --- envelope ---------------------------------------------------------------------

/// A validated scenario: the parsed payload plus the canonical config object
/// it came from.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub qubit_cap: usize,
    /// Effective config with `seed`, `units`, and `qubit_cap` folded in; the
    /// object the hash commits to.
    pub canonical: Value,
    pub hash: String,
    /// Directory table paths resolve against (the config file's parent).
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub enum ScenarioKind {
    ArithmeticAudit(AuditCfg),
    Compare(CompareCfg),
    PhaseEstimate(PhaseEstimateCfg),
    Propagate(PropagateCfg),
    Rate(RateCfg),
    Resources(ResourcesCfg),
    StateToState(StateToStateCfg),
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::ArithmeticAudit(_) => "arithmetic-audit",
            ScenarioKind::Compare(_) => "compare",
            ScenarioKind::PhaseEstimate(_) => "phase-estimate",
            ScenarioKind::Propagate(_) => "propagate",
            ScenarioKind::Rate(_) => "rate",
            ScenarioKind::Resources(_) => "resources",
            ScenarioKind::StateToState(_) => "state-to-state",
        }
    }
}

pub fn load_scenario(
    path: &Path,
    seed_override: Option<u64>,
    cap_override: Option<usize>,
) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let base_dir = match path.parent() {
        Some(p) if p.as_os_str().is_empty() => PathBuf::from("."),
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("."),
    };
    scenario_from_str(&text, seed_override, cap_override, base_dir)
}

pub fn scenario_from_str(
    text: &str,
    seed_override: Option<u64>,
    cap_override: Option<usize>,
    base_dir: PathBuf,
) -> Result<Scenario, CliError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Validation(format!("config is not valid JSON: {e}")))?;
    scenario_from_value(value, seed_override, cap_override, base_dir)
}

pub fn scenario_from_value(
    mut value: Value,
    seed_override: Option<u64>,
    cap_override: Option<usize>,
    base_dir: PathBuf,
) -> Result<Scenario, CliError> {
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Validation("config root must be a JSON object".into()))?;

    let version = match obj.get("version") {
        Some(v) => v.as_u64().ok_or_else(|| {
            CliError::validation("version", "must be an unsigned integer")
        })?,
        None => return Err(CliError::validation("version", "required field is missing")),
    };
    if version != SCHEMA_VERSION {
        return Err(CliError::validation(
            "version",
            format!("schema {version} is not supported; this build reads {SCHEMA_VERSION}"),
        ));
    }

    match obj.get("units") {
        None => {
            obj.insert("units".into(), Value::String("atomic".into()));
        }
        Some(Value::String(s)) if s == "atomic" => {}
        Some(Value::String(s)) => {
            return Err(CliError::validation(
                "units",
                format!("unsupported unit system {s:?}; only \"atomic\" is available"),
            ));
        }
        Some(_) => return Err(CliError::validation("units", "must be a string")),
    }

    let seed = match seed_override {
        Some(s) => s,
        None => match obj.get("seed") {
            None => 0,
            Some(v) => v
                .as_u64()
                .ok_or_else(|| CliError::validation("seed", "must be an unsigned integer"))?,
        },
    };
    obj.insert("seed".into(), Value::from(seed));

    let qubit_cap = match cap_override {
        Some(c) => c,
        None => match obj.get("qubit_cap") {
            None => DEFAULT_QUBIT_CAP,
            Some(v) => v
                .as_u64()
                .ok_or_else(|| CliError::validation("qubit_cap", "must be an unsigned integer"))?
                as usize,
        },
    };
    if qubit_cap == 0 {
        return Err(CliError::validation("qubit_cap", "must be at least 1"));
    }
    obj.insert("qubit_cap".into(), Value::from(qubit_cap as u64));

    let kind_name = match obj.get("kind") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(CliError::validation("kind", "must be a string")),
        None => {
            return Err(CliError::validation(
                "kind",
                format!("required field is missing (kinds: {})", KINDS.join(", ")),
            ))
        }
    };

    let mut payload = obj.clone();
    for key in ["version", "kind", "seed", "units", "qubit_cap"] {
        payload.remove(key);
    }
    let kind = parse_kind(&kind_name, Value::Object(payload))?;

    let hash = hash_value(&value);
    Ok(Scenario { kind, seed, qubit_cap, canonical: value, hash, base_dir })
}

fn parse_kind(name: &str, payload: Value) -> Result<ScenarioKind, CliError> {
    fn de<T: serde::de::DeserializeOwned>(kind: &str, payload: Value) -> Result<T, CliError> {
        serde_json::from_value(payload)
            .map_err(|e| CliError::Validation(format!("{kind} config: {e}")))
    }
    match name {
        "arithmetic-audit" => Ok(ScenarioKind::ArithmeticAudit(de(name, payload)?)),
        "compare" => Ok(ScenarioKind::Compare(de(name, payload)?)),
        "phase-estimate" => Ok(ScenarioKind::PhaseEstimate(de(name, payload)?)),
        "propagate" => Ok(ScenarioKind::Propagate(de(name, payload)?)),
        "rate" => Ok(ScenarioKind::Rate(de(name, payload)?)),
        "resources" => Ok(ScenarioKind::Resources(de(name, payload)?)),
        "state-to-state" => Ok(ScenarioKind::StateToState(de(name, payload)?)),
        other => Err(CliError::validation(
            "kind",
            format!(
                "unknown scenario kind {other:?}; did you mean {:?}? (kinds: {})",
                nearest(other, KINDS.iter().copied()),
                KINDS.join(", ")
            ),
        )),
    }
}

/// Hex SHA-256 of the compact serialization. `serde_json` objects are
/// key-sorted maps, so semantically equal configs hash identically.
pub fn hash_value(value: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(value).expect("JSON value serializes").as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

// --- shared pieces ----------------------------------------------------------------

fn default_axes() -> usize {
    1
}

fn default_mass() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

fn default_direction() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub qubits: usize,
    pub min: f64,
    pub max: f64,
    #[serde(default = "default_axes")]
    pub axes: usize,
}

impl GridCfg {
    pub fn build(&self, path: &str) -> Result<GridSpec, CliError> {
        if self.axes == 0 {
            return Err(CliError::validation(
                &format!("{path}.axes"),
                "need at least one axis",
            ));
        }
        GridSpec::new(
            self.qubits,
            vec![AxisExtent { min: self.min, max: self.max }; self.axes],
        )
        .map_err(|e| CliError::validation(path, e))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellCfg {
    pub omega: f64,
    pub mass: f64,
    #[serde(default)]
    pub center: f64,
}

impl WellCfg {
    pub fn build(&self, path: &str) -> Result<HarmonicWell, CliError> {
        require_positive(&format!("{path}.omega"), self.omega)?;
        require_positive(&format!("{path}.mass"), self.mass)?;
        require_finite(&format!("{path}.center"), self.center)?;
        Ok(HarmonicWell { omega: self.omega, mass: self.mass, center: self.center })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketCfg {
    pub center: f64,
    #[serde(default)]
    pub momentum: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenstateCfg {
    pub level: usize,
    pub omega: f64,
    pub mass: f64,
    #[serde(default)]
    pub center: f64,
}

/// Initial state: exactly one of a per-axis Gaussian packet list or a
/// harmonic eigenstate (one-dimensional grids only).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCfg {
    #[serde(default)]
    pub packets: Option<Vec<PacketCfg>>,
    #[serde(default)]
    pub eigenstate: Option<EigenstateCfg>,
}

impl InitialCfg {
    pub fn build(
        &self,
        spec: &GridSpec,
        path: &str,
    ) -> Result<chemdyn::GridWavefunction, CliError> {
        match (&self.packets, &self.eigenstate) {
            (Some(packets), None) => {
                if packets.len() != spec.axes() {
                    return Err(CliError::validation(
                        &format!("{path}.packets"),
                        format!("need one packet per axis ({}), got {}", spec.axes(), packets.len()),
                    ));
                }
                let specs: Vec<WavepacketSpec> = packets
                    .iter()
                    .map(|p| WavepacketSpec {
                        center: p.center,
                        momentum: p.momentum,
                        width: p.width,
                    })
                    .collect();
                chemdyn::prep::gaussian_packet(&specs, spec)
                    .map_err(|e| CliError::validation(&format!("{path}.packets"), e))
            }
            (None, Some(eig)) => {
                let well = WellCfg { omega: eig.omega, mass: eig.mass, center: eig.center }
                    .build(&format!("{path}.eigenstate"))?;
                chemdyn::prep::harmonic_eigenstate(eig.level, &well, spec)
                    .map_err(|e| CliError::validation(&format!("{path}.eigenstate"), e))
            }
            _ => Err(CliError::validation(
                path,
                "exactly one of \"packets\" or \"eigenstate\" must be given",
            )),
        }
    }
}

pub fn require_finite(path: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::validation(path, format!("must be finite, got {v}")))
    }
}

pub fn require_positive(path: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::validation(path, format!("must be a positive finite number, got {v}")))
    }
}

/// Validated mass list: defaults to 1.0 per axis.
pub fn build_masses(
    masses: &Option<Vec<f64>>,
    axes: usize,
    path: &str,
) -> Result<Vec<f64>, CliError> {
    match masses {
        None => Ok(vec![1.0; axes]),
        Some(list) => {
            if list.len() != axes {
                return Err(CliError::validation(
                    path,
                    format!("need one mass per axis ({axes}), got {}", list.len()),
                ));
            }
            for (i, &m) in list.iter().enumerate() {
                require_positive(&format!("{path}[{i}]"), m)?;
            }
            Ok(list.clone())
        }
    }
}

// --- built-in potentials ------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub enum Constraint {
    Positive,
    Finite,
}

impl Constraint {
    fn check(self, path: &str, v: f64) -> Result<(), CliError> {
        match self {
            Constraint::Positive => require_positive(path, v),
            Constraint::Finite => require_finite(path, v),
        }
    }

    fn describe(self) -> &'static str {
        match self {
            Constraint::Positive => "> 0",
            Constraint::Finite => "finite",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: Option<f64>,
    pub constraint: Constraint,
}

const fn param(name: &'static str, default: Option<f64>, constraint: Constraint) -> ParamSpec {
    ParamSpec { name, default, constraint }
}

#[derive(Debug, Clone, Copy)]
pub struct Builtin {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: &'static [ParamSpec],
    pub min_axes: usize,
    /// Analytic builtins sample energies on the grid; `table` instead loads
    /// integer oracle counts from a file.
    pub analytic: bool,
}

/// Potential catalog, alphabetical. The listing order is part of the CLI's
/// stable output.
pub const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "coulomb-pairwise",
        summary: "sum over axis pairs of charge_product/sqrt((xi-xj)^2 + softening^2)",
        params: &[
            param("charge_product", None, Constraint::Finite),
            param("softening", Some(1.0), Constraint::Positive),
        ],
        min_axes: 2,
        analytic: true,
    },
    Builtin {
        name: "double-well",
        summary: "height*(((x-center)/minima)^2 - 1)^2 summed per axis",
        params: &[
            param("height", None, Constraint::Positive),
            param("minima", None, Constraint::Positive),
            param("center", Some(0.0), Constraint::Finite),
        ],
        min_axes: 1,
        analytic: true,
    },
    Builtin {
        name: "eckart",
        summary: "height/cosh^2((x-center)/width) summed per axis",
        params: &[
            param("height", None, Constraint::Positive),
            param("width", None, Constraint::Positive),
            param("center", Some(0.0), Constraint::Finite),
        ],
        min_axes: 1,
        analytic: true,
    },
    Builtin {
        name: "free",
        summary: "zero potential",
        params: &[],
        min_axes: 1,
        analytic: true,
    },
    Builtin {
        name: "gaussian-barrier",
        summary: "height*exp(-((x-center)/width)^2) summed per axis",
        params: &[
            param("height", None, Constraint::Positive),
            param("width", None, Constraint::Positive),
            param("center", Some(0.0), Constraint::Finite),
        ],
        min_axes: 1,
        analytic: true,
    },
    Builtin {
        name: "harmonic",
        summary: "0.5*mass*omega^2*(x-center)^2 summed per axis",
        params: &[
            param("omega", None, Constraint::Positive),
            param("mass", Some(1.0), Constraint::Positive),
            param("center", Some(0.0), Constraint::Finite),
        ],
        min_axes: 1,
        analytic: true,
    },
    Builtin {
        name: "table",
        summary: "integer oracle counts loaded from a CSV file (one value per grid point)",
        params: &[],
        min_axes: 1,
        analytic: false,
    },
];

pub fn builtin(name: &str) -> Option<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name)
}

fn levenshtein(a: &str, b: &str) -> usize {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Closest candidate by edit distance; ties break alphabetically because the
/// candidate lists are sorted.
pub fn nearest<'a>(name: &str, candidates: impl IntoIterator<Item = &'a str>) -> &'a str {
    candidates
        .into_iter()
        .min_by_key(|c| levenshtein(name, c))
        .unwrap_or("")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialCfg {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// CSV path (relative to the config file) for the `table` potential.
    #[serde(default)]
    pub table: Option<String>,
}

impl PotentialCfg {
    /// Name/parameter check shared by every consumer; returns the builtin and
    /// the fully-defaulted parameter map.
    pub fn resolve(
        &self,
        path: &str,
        axes: usize,
    ) -> Result<(&'static Builtin, BTreeMap<&'static str, f64>), CliError> {
        let Some(b) = builtin(&self.name) else {
            let names: Vec<&str> = BUILTINS.iter().map(|b| b.name).collect();
            return Err(CliError::validation(
                &format!("{path}.name"),
                format!(
                    "unknown potential {:?}; did you mean {:?}? (builtins: {})",
                    self.name,
                    nearest(&self.name, names.iter().copied()),
                    names.join(", ")
                ),
            ));
        };
        if axes < b.min_axes {
            return Err(CliError::validation(
                path,
                format!("{} needs at least {} axes; the grid has {axes}", b.name, b.min_axes),
            ));
        }
        let expected: Vec<&str> = b.params.iter().map(|p| p.name).collect();
        for key in self.params.keys() {
            if !expected.contains(&key.as_str()) {
                let hint = if expected.is_empty() {
                    format!("{} takes no parameters", b.name)
                } else {
                    format!("expected: {}", expected.join(", "))
                };
                return Err(CliError::validation(
                    &format!("{path}.params.{key}"),
                    format!("unknown parameter for {}; {hint}", b.name),
                ));
            }
        }
        let mut resolved = BTreeMap::new();
        for p in b.params {
            let v = match self.params.get(p.name) {
                Some(&v) => v,
                None => p.default.ok_or_else(|| {
                    CliError::validation(
                        &format!("{path}.params.{}", p.name),
                        format!("required parameter is missing ({})", p.constraint.describe()),
                    )
                })?,
            };
            p.constraint.check(&format!("{path}.params.{}", p.name), v)?;
            resolved.insert(p.name, v);
        }
        if b.name == "table" {
            if self.table.is_none() {
                return Err(CliError::validation(
                    &format!("{path}.table"),
                    "the table potential needs a CSV path",
                ));
            }
        } else if self.table.is_some() {
            return Err(CliError::validation(
                &format!("{path}.table"),
                format!("only the table potential reads a file; {} is analytic", b.name),
            ));
        }
        Ok((b, resolved))
    }

    /// Samples an analytic builtin on the grid, one energy per flattened
    /// point.
    pub fn values(&self, path: &str, spec: &GridSpec) -> Result<Vec<f64>, CliError> {
        let (b, p) = self.resolve(path, spec.axes())?;
        if !b.analytic {
            return Err(CliError::validation(
                path,
                "the table potential provides oracle counts, not energies; pick an analytic builtin here",
            ));
        }
        let f: Box<dyn Fn(&[f64]) -> f64 + Sync> = match b.name {
            "harmonic" => {
                let (omega, mass, center) = (p["omega"], p["mass"], p["center"]);
                Box::new(move |x| {
                    x.iter().map(|&xi| 0.5 * mass * omega * omega * (xi - center).powi(2)).sum()
                })
            }
            "eckart" => {
                let (height, width, center) = (p["height"], p["width"], p["center"]);
                Box::new(move |x| {
                    x.iter().map(|&xi| height / ((xi - center) / width).cosh().powi(2)).sum()
                })
            }
            "gaussian-barrier" => {
                let (height, width, center) = (p["height"], p["width"], p["center"]);
                Box::new(move |x| {
                    x.iter().map(|&xi| height * (-((xi - center) / width).powi(2)).exp()).sum()
                })
            }
            "double-well" => {
                let (height, minima, center) = (p["height"], p["minima"], p["center"]);
                Box::new(move |x| {
                    x.iter()
                        .map(|&xi| {
                            let u = ((xi - center) / minima).powi(2) - 1.0;
                            height * u * u
                        })
                        .sum()
                })
            }
            "free" => Box::new(|_| 0.0),
            "coulomb-pairwise" => {
                let (charge, soft) = (p["charge_product"], p["softening"]);
                Box::new(move |x| {
                    let mut v = 0.0;
                    for i in 0..x.len() {
                        for j in i + 1..x.len() {
                            let d = x[i] - x[j];
                            v += charge / (d * d + soft * soft).sqrt();
                        }
                    }
                    v
                })
            }
            other => unreachable!("analytic builtin {other} not sampled"),
        };
        Ok(sample_potential(spec, f))
    }

    /// Loads the integer oracle table for the `table` potential: one
    /// nonnegative integer per line, one line per flattened grid point,
    /// values below 2^m.
    pub fn oracle_table(
        &self,
        path: &str,
        spec: &GridSpec,
        m: usize,
        base_dir: &Path,
    ) -> Result<Vec<u64>, CliError> {
        let (b, _) = self.resolve(path, spec.axes())?;
        if b.name != "table" {
            return Err(CliError::validation(
                path,
                format!("oracle tables come from the table potential, not {}", b.name),
            ));
        }
        let rel = self.table.as_deref().expect("resolve checked the path");
        let file = base_dir.join(rel);
        let text = fs::read_to_string(&file).map_err(|e| {
            CliError::validation(&format!("{path}.table"), format!("cannot read {}: {e}", file.display()))
        })?;
        let mut table = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: u64 = line.parse().map_err(|_| {
                CliError::validation(
                    &format!("{path}.table"),
                    format!("{}:{}: expected an unsigned integer, got {line:?}", file.display(), lineno + 1),
                )
            })?;
            table.push(v);
        }
        let expected = spec.total_points();
        if table.len() != expected {
            return Err(CliError::validation(
                &format!("{path}.table"),
                format!("{}: need {expected} values (one per grid point), got {}", file.display(), table.len()),
            ));
        }
        let limit = 1u64 << m;
        if let Some(&bad) = table.iter().find(|&&v| v >= limit) {
            return Err(CliError::validation(
                &format!("{path}.table"),
                format!("value {bad} does not fit {m} ancilla bits (must be < {limit})"),
            ));
        }
        Ok(table)
    }
}

// --- kind payloads ----------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionCfg {
    pub label: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Classical split-operator propagation with observable tracking.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagateCfg {
    pub grid: GridCfg,
    pub potential: PotentialCfg,
    #[serde(default)]
    pub masses: Option<Vec<f64>>,
    pub initial: InitialCfg,
    pub dt: f64,
    pub steps: usize,
    /// Observables are recorded every this many steps (0 = endpoints only).
    #[serde(default)]
    pub snapshot_stride: usize,
    /// Write full wavefunction CSVs at each recorded snapshot.
    #[serde(default)]
    pub write_wavefunctions: bool,
    #[serde(default)]
    pub regions: Vec<RegionCfg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantizeCfg {
    FixedStep,
    FixedStepPeriodic,
    MaxResolution,
}

impl QuantizeCfg {
    pub fn mode(self, dt: f64) -> QuantizeMode {
        match self {
            QuantizeCfg::FixedStep => QuantizeMode::FixedStep(dt),
            QuantizeCfg::FixedStepPeriodic => QuantizeMode::FixedStepPeriodic(dt),
            QuantizeCfg::MaxResolution => QuantizeMode::MaxResolution,
        }
    }
}

fn default_quantize() -> QuantizeCfg {
    QuantizeCfg::FixedStep
}

/// Gate-level kickback propagation against the table-exact classical
/// reference.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareCfg {
    pub grid: GridCfg,
    pub potential: PotentialCfg,
    #[serde(default)]
    pub masses: Option<Vec<f64>>,
    pub initial: InitialCfg,
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub snapshot_stride: usize,
    pub ancilla_bits: usize,
    #[serde(default = "default_quantize")]
    pub quantize: QuantizeCfg,
    /// Apply the kinetic half of the step (false = pure potential kick).
    #[serde(default = "default_true")]
    pub kinetic: bool,
    /// Final-state fidelity below this fails the run.
    #[serde(default)]
    pub min_fidelity: Option<f64>,
}

fn default_audit_widths() -> Vec<usize> {
    vec![2, 4, 8]
}

fn default_coulomb_widths() -> Vec<usize> {
    vec![16]
}

/// Reversible-arithmetic gate census against the closed-form counts.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditCfg {
    /// Register widths for the add/controlled-add/multiply rows.
    #[serde(default = "default_audit_widths")]
    pub widths: Vec<usize>,
    /// Register widths for the composed Coulomb-pair rows.
    #[serde(default = "default_coulomb_widths")]
    pub coulomb_widths: Vec<usize>,
}

fn default_degree() -> u64 {
    15
}

fn default_crossover_precision() -> usize {
    20
}

fn default_step_ratio() -> u64 {
    1000
}

fn default_atomic_numbers() -> Vec<u64> {
    vec![1, 10, 50, 100]
}

fn default_atoms_max() -> u64 {
    8
}

fn default_particles_max() -> u64 {
    12
}

/// Explicit-evolution vs fitted-surface cost comparison.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossoverCfg {
    #[serde(default = "default_degree")]
    pub degree: u64,
    #[serde(default = "default_crossover_precision")]
    pub precision_bits: usize,
    /// Electronic steps per nuclear step of the explicit propagation.
    #[serde(default = "default_step_ratio")]
    pub step_ratio: u64,
    #[serde(default = "default_atomic_numbers")]
    pub atomic_numbers: Vec<u64>,
    #[serde(default = "default_atoms_max")]
    pub atoms_max: u64,
}

/// Machine feasibility and scaling curves.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcesCfg {
    pub grid_qubits: usize,
    pub precision_bits: usize,
    pub gate_budget: u64,
    pub qubit_budget: u64,
    pub steps: u64,
    #[serde(default = "default_particles_max")]
    pub particles_max: u64,
    #[serde(default)]
    pub crossover: Option<CrossoverCfg>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalCfg {
    pub temperature: f64,
    pub e_max: f64,
    pub de: f64,
    pub levels: Vec<f64>,
}

impl ThermalCfg {
    pub fn build(&self) -> ThermalSpec {
        ThermalSpec {
            temperature: self.temperature,
            e_max: self.e_max,
            de: self.de,
            levels: self.levels.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncomingCfg {
    pub center: f64,
    pub width: f64,
    #[serde(default = "default_direction")]
    pub direction: f64,
}

/// Thermal rate constant over a one-dimensional barrier.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCfg {
    pub grid: GridCfg,
    pub potential: PotentialCfg,
    #[serde(default = "default_mass")]
    pub mass: f64,
    pub thermal: ThermalCfg,
    /// Grid points with x at or beyond this coordinate count as product.
    pub product_boundary: f64,
    pub packet: IncomingCfg,
    pub dt: f64,
    pub steps: usize,
    /// Monte Carlo sample count (0 = quadrature only).
    #[serde(default)]
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureCfg {
    pub level: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameCfg {
    pub grid: GridCfg,
    pub well: WellCfg,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapCfg {
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
}

/// Vibrational populations of a source-frame mixture re-expressed in a
/// product well.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateToStateCfg {
    pub source: FrameCfg,
    /// Mixture components in the source well; weights are renormalized.
    pub mixture: Vec<MixtureCfg>,
    #[serde(default)]
    pub map: Option<MapCfg>,
    pub product: FrameCfg,
    pub max_level: usize,
    /// Unassigned probability above this fails the run.
    #[serde(default)]
    pub max_residual: Option<f64>,
}

fn default_levels() -> Vec<usize> {
    vec![0, 1]
}

/// Phase estimation on one split-propagation step over a harmonic well.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseEstimateCfg {
    pub grid: GridCfg,
    pub well: WellCfg,
    pub ancilla_bits: usize,
    pub dt: f64,
    pub readout_bits: usize,
    pub shots: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn envelope(kind: &str, body: &str) -> String {
        format!("{{\"version\": 1, \"kind\": \"{kind}\", {body}}}")
    }

    fn load(text: &str) -> Result<Scenario, CliError> {
        scenario_from_str(text, None, None, PathBuf::from("."))
    }

    #[test]
    fn envelope_defaults_fold_into_the_canonical_object() {
        let sc = load(&envelope(
            "arithmetic-audit",
            "\"widths\": [2], \"coulomb_widths\": []",
        ))
        .unwrap();
        assert_eq!(sc.seed, 0);
        assert_eq!(sc.qubit_cap, DEFAULT_QUBIT_CAP);
        let obj = sc.canonical.as_object().unwrap();
        assert_eq!(obj["seed"], 0);
        assert_eq!(obj["units"], "atomic");
        assert_eq!(obj["qubit_cap"], DEFAULT_QUBIT_CAP as u64);
        // Folding happens before hashing, so spelling defaults out changes
        // nothing.
        let explicit = load(
            "{\"version\": 1, \"kind\": \"arithmetic-audit\", \"seed\": 0, \
             \"units\": \"atomic\", \"qubit_cap\": 26, \"widths\": [2], \
             \"coulomb_widths\": []}",
        )
        .unwrap();
        assert_eq!(sc.hash, explicit.hash);
    }

    #[test]
    fn seed_override_changes_the_hash() {
        let text = envelope("arithmetic-audit", "\"widths\": [2], \"coulomb_widths\": []");
        let a = load(&text).unwrap();
        let b = scenario_from_str(&text, Some(7), None, PathBuf::from(".")).unwrap();
        assert_eq!(b.seed, 7);
        assert_ne!(a.hash, b.hash);
    }

    #[test]
    fn wrong_version_units_and_kind_are_rejected_with_paths() {
        let e = load("{\"version\": 2, \"kind\": \"arithmetic-audit\"}").unwrap_err();
        assert!(e.to_string().starts_with("version:"), "{e}");
        let e = load("{\"version\": 1, \"kind\": \"arithmetic-audit\", \"units\": \"SI\"}")
            .unwrap_err();
        assert!(e.to_string().starts_with("units:"), "{e}");
        let e = load("{\"version\": 1, \"kind\": \"comprare\"}").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("did you mean \"compare\""), "{msg}");
    }

    #[test]
    fn unknown_fields_in_payloads_are_rejected() {
        let e = load(&envelope("arithmetic-audit", "\"widhts\": [2]")).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("unknown field"), "{msg}");
        assert!(msg.contains("widths"), "{msg}");
    }

    #[test]
    fn unknown_potential_names_suggest_the_nearest_builtin() {
        let cfg = PotentialCfg {
            name: "harmonc".into(),
            params: BTreeMap::new(),
            table: None,
        };
        let e = cfg.resolve("potential", 1).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("did you mean \"harmonic\""), "{msg}");
    }

    #[test]
    fn potential_parameters_are_defaulted_and_validated() {
        let mut params = BTreeMap::new();
        params.insert("omega".to_string(), 2.0);
        let cfg = PotentialCfg { name: "harmonic".into(), params, table: None };
        let (_, resolved) = cfg.resolve("potential", 1).unwrap();
        assert_eq!(resolved["omega"], 2.0);
        assert_eq!(resolved["mass"], 1.0);
        assert_eq!(resolved["center"], 0.0);

        let cfg = PotentialCfg { name: "eckart".into(), params: BTreeMap::new(), table: None };
        let e = cfg.resolve("potential", 1).unwrap_err();
        assert!(e.to_string().starts_with("potential.params.height:"), "{e}");

        let mut params = BTreeMap::new();
        params.insert("hieght".to_string(), 1.0);
        let cfg = PotentialCfg { name: "eckart".into(), params, table: None };
        let e = cfg.resolve("potential", 1).unwrap_err();
        assert!(e.to_string().contains("unknown parameter"), "{e}");
    }

    #[test]
    fn harmonic_sampling_matches_the_well_closed_form() {
        let spec = GridSpec::line(4, -2.0, 2.0).unwrap();
        let mut params = BTreeMap::new();
        params.insert("omega".to_string(), 0.5);
        params.insert("mass".to_string(), 2.0);
        let cfg = PotentialCfg { name: "harmonic".into(), params, table: None };
        let values = cfg.values("potential", &spec).unwrap();
        let well = HarmonicWell { omega: 0.5, mass: 2.0, center: 0.0 };
        for g in 0..spec.total_points() {
            let x = spec.coordinate(0, g);
            assert!((values[g] - well.potential(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn every_analytic_builtin_samples_at_its_minimum_axis_count() {
        for b in BUILTINS.iter().filter(|b| b.analytic) {
            let spec = GridSpec::new(
                2,
                vec![AxisExtent { min: -1.0, max: 1.0 }; b.min_axes],
            )
            .unwrap();
            let params: BTreeMap<String, f64> = b
                .params
                .iter()
                .map(|p| (p.name.to_string(), p.default.unwrap_or(1.0)))
                .collect();
            let cfg = PotentialCfg { name: b.name.into(), params, table: None };
            let values = cfg.values("potential", &spec).unwrap();
            assert_eq!(values.len(), spec.total_points());
            assert!(values.iter().all(|v| v.is_finite()), "{}", b.name);
        }
    }

    #[test]
    fn levenshtein_prefers_single_edits() {
        assert_eq!(nearest("eckhart", BUILTINS.iter().map(|b| b.name)), "eckart");
        assert_eq!(nearest("hramonic", BUILTINS.iter().map(|b| b.name)), "harmonic");
        assert_eq!(nearest("tabel", BUILTINS.iter().map(|b| b.name)), "table");
    }
}
