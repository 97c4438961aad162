//! Scenario files, the built-in demos and the run driver behind the command line.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    bands_csv, correlations_csv, effective_hamiltonian, extract_band_structure, gaussian_packet,
    occupations_and_correlations, single_particle_block, single_particle_block_dense, wavepacket_csv,
    wavepacket_stats, BandConfig, BandStructure,
};
use crate::device::{
    iteration_matrix, run_emulation, run_emulation_stepped, EmulationConfig, EmulationMode, SnapshotPolicy,
    StateVector,
};
use crate::error::{Error, Result};
use crate::exact::{exact_trajectory, fidelity, Method, DENSE_LIMIT, KRYLOV_DIM};
use crate::fock::{dimension, DimensionMode, FockBasis};
use crate::lattice::{build_lattice, LatticeGraph, LatticeSpec, HALL_ALPHA};
use crate::ops::build_hamiltonian;
use crate::schedule::{active_override, compile_schedule, AlphaSchedule, PhaseOverride};
use crate::trajectory::{Provenance, Snapshot, TimeTag, Trajectory};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "TIMEBIN_OUT";
pub const DEFAULT_OUT: &str = "timebin-out";
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;
/// Above this many sites band structures come from the Hamiltonian instead of the
/// emulated iteration, since the dense logarithm gets expensive.
pub const EMULATED_BAND_LIMIT: usize = 1024;
/// Exact runs are propagated in chunks of at most this many iterations.
const EXACT_CHUNK: u64 = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Tick,
    #[default]
    Fast,
    Exact,
    Both,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotChoice {
    PerPass,
    PerCycle,
    #[default]
    PerIteration,
}

impl From<SnapshotChoice> for SnapshotPolicy {
    fn from(c: SnapshotChoice) -> Self {
        match c {
            SnapshotChoice::PerPass => SnapshotPolicy::PerPass,
            SnapshotChoice::PerCycle => SnapshotPolicy::PerCycle,
            SnapshotChoice::PerIteration => SnapshotPolicy::PerIteration,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisName {
    #[default]
    All,
    LeftLeg,
    RightLeg,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Named(AxisName),
    Sites(Vec<usize>),
}

impl Default for AxisSpec {
    fn default() -> Self {
        AxisSpec::Named(AxisName::All)
    }
}

impl AxisSpec {
    pub fn resolve(&self, num_sites: usize) -> Result<Vec<usize>> {
        let sites: Vec<usize> = match self {
            AxisSpec::Named(AxisName::All) => (0..num_sites).collect(),
            AxisSpec::Named(AxisName::LeftLeg) => (0..num_sites).step_by(2).collect(),
            AxisSpec::Named(AxisName::RightLeg) => (1..num_sites).step_by(2).collect(),
            AxisSpec::Sites(s) => s.clone(),
        };
        if sites.is_empty() {
            return Err(config_err("axis", "axis selects no sites"));
        }
        if let Some(&bad) = sites.iter().find(|&&s| s >= num_sites) {
            return Err(config_err("axis", format!("site {bad} outside lattice of {num_sites}")));
        }
        Ok(sites)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    #[serde(default)]
    pub axis: AxisSpec,
    /// Centre in axis positions; the middle of the axis when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub k: f64,
}

fn default_sigma() -> f64 {
    4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialState {
    /// `(bin, boson count)` pairs.
    Fock(Vec<(usize, u32)>),
    /// Single boson in a Gaussian packet.
    Packet(PacketSpec),
}

impl InitialState {
    pub fn bosons(&self) -> usize {
        match self {
            InitialState::Fock(pairs) => pairs.iter().map(|&(_, c)| c as usize).sum(),
            InitialState::Packet(_) => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ramp {
    pub step: f64,
    #[serde(default = "one")]
    pub every: u64,
    pub count: u64,
}

/// One entry of the phase table. Exactly one of `add`, `edges`, `ramp` is set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaStep {
    pub from: u64,
    /// Uniform offset added to every edge phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub add: Option<f64>,
    /// `(m, n, alpha)` replacements.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize, f64)>>,
    /// Offsets `step * (j + 1)` starting at `from + j * every`, for `j < count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<Ramp>,
}

fn one() -> u64 {
    1
}

fn unit() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

pub fn expand_alpha_steps(steps: &[AlphaStep]) -> Result<AlphaSchedule> {
    let mut table = AlphaSchedule::new();
    for (i, s) in steps.iter().enumerate() {
        let path = format!("alpha_schedule[{i}]");
        let set = [s.add.is_some(), s.edges.is_some(), s.ramp.is_some()];
        if set.iter().filter(|&&b| b).count() != 1 {
            return Err(config_err(&path, "exactly one of add, edges, ramp must be given"));
        }
        if let Some(a) = s.add {
            table.insert(s.from, PhaseOverride::Additive(a));
        } else if let Some(edges) = &s.edges {
            let mut map = BTreeMap::new();
            for &(a, b, alpha) in edges {
                // stored with m < n; a reversed pair carries the conjugate phase
                let (key, value) = if a < b { ((a, b), alpha) } else { ((b, a), -alpha) };
                map.insert(key, value);
            }
            table.insert(s.from, PhaseOverride::PerEdge(map));
        } else if let Some(r) = &s.ramp {
            if r.every == 0 {
                return Err(config_err(&format!("{path}.ramp.every"), "must be positive"));
            }
            for j in 0..r.count {
                table.insert(s.from + j * r.every, PhaseOverride::Additive(r.step * (j + 1) as f64));
            }
        }
    }
    Ok(table)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analyses {
    #[serde(default, skip_serializing_if = "is_false")]
    pub bands: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub correlations: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub wavepacket: bool,
    /// Site ordering for packet statistics; defaults to the left leg on ladders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<AxisSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// `{"file": path}`, `{"builtin": {...}}`, or an inline lattice document.
    pub graph: Value,
    pub initial: InitialState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bosons: Option<usize>,
    #[serde(default)]
    pub mu: f64,
    #[serde(default, rename = "U")]
    pub u: f64,
    /// Multiplies every coupling and on-site energy.
    #[serde(default = "unit")]
    pub kappa_scale: f64,
    pub iterations: u64,
    #[serde(default)]
    pub mode: RunMode,
    /// Uniform offset applied to every edge phase before the table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha_schedule: Vec<AlphaStep>,
    #[serde(default)]
    pub snapshots: SnapshotChoice,
    #[serde(default = "one")]
    pub stride: u64,
    #[serde(default)]
    pub analyses: Analyses,
    #[serde(default, skip_serializing_if = "is_false")]
    pub record_states: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_cap: Option<u64>,
}

impl Scenario {
    pub fn new(name: &str, graph: Value, initial: InitialState, iterations: u64) -> Self {
        Scenario {
            name: name.into(),
            note: None,
            graph,
            initial,
            max_bosons: None,
            mu: 0.0,
            u: 0.0,
            kappa_scale: 1.0,
            iterations,
            mode: RunMode::Fast,
            alpha: None,
            alpha_schedule: Vec::new(),
            snapshots: SnapshotChoice::PerIteration,
            stride: 1,
            analyses: Analyses::default(),
            record_states: false,
            seed: 0,
            memory_cap: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_scale > 0.0 && self.kappa_scale.is_finite()) {
            return Err(config_err("kappa_scale", format!("must be positive, got {}", self.kappa_scale)));
        }
        for (name, v) in [("mu", self.mu), ("U", self.u)] {
            if !v.is_finite() {
                return Err(config_err(name, "must be finite"));
            }
        }
        if self.stride == 0 {
            return Err(config_err("stride", "must be positive"));
        }
        if self.mode == RunMode::Exact && self.snapshots != SnapshotChoice::PerIteration {
            return Err(config_err("snapshots", "exact runs only snapshot whole iterations"));
        }
        let bosons = self.initial.bosons();
        if let Some(cap) = self.max_bosons {
            if bosons > cap {
                return Err(config_err(
                    "initial",
                    format!("{bosons} bosons exceed max_bosons {cap}"),
                ));
            }
        }
        if bosons == 0 {
            return Err(config_err("initial", "initial state holds no bosons"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(config_err("name", "must be a non-empty plain file name"));
        }
        expand_alpha_steps(&self.alpha_schedule)?;
        Ok(())
    }
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinLattice {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rungs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub kappa: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub periodic: bool,
}

impl BuiltinLattice {
    pub fn build(&self) -> Result<LatticeGraph> {
        use crate::lattice::LatticeKind;
        let need = |v: Option<usize>, field: &str| {
            v.ok_or_else(|| config_err(&format!("graph.builtin.{field}"), "required for this kind"))
        };
        let kind: LatticeKind = self
            .kind
            .parse()
            .map_err(|e: Error| config_err("graph.builtin.kind", e.to_string()))?;
        let spec = match kind {
            LatticeKind::Chain => LatticeSpec::Chain {
                sites: need(self.sites, "sites")?,
            },
            LatticeKind::Grid2d => LatticeSpec::Grid2d {
                rows: need(self.rows, "rows")?,
                cols: need(self.cols, "cols")?,
            },
            LatticeKind::HallLadder => LatticeSpec::HallLadder {
                rungs: need(self.rungs, "rungs")?,
            },
            LatticeKind::Hypercube => LatticeSpec::Hypercube {
                dim: need(self.dim, "dim")?,
            },
        };
        build_lattice(spec, self.kappa, self.alpha, self.periodic)
    }
}

fn prefix_graph_error(e: Error, prefix: &str) -> Error {
    match e {
        Error::GraphDocument { context, message } => Error::Config {
            path: format!("{prefix}{}", context.trim_start_matches('$')),
            message,
        },
        other => other,
    }
}

/// Resolves a scenario's graph entry; relative file paths are taken from `base`.
pub fn load_graph(graph: &Value, base: &Path) -> Result<LatticeGraph> {
    let obj = graph
        .as_object()
        .ok_or_else(|| config_err("graph", "expected an object"))?;
    if let Some(file) = obj.get("file") {
        if obj.len() != 1 {
            return Err(config_err("graph", "a file reference takes no other fields"));
        }
        let file = file
            .as_str()
            .ok_or_else(|| config_err("graph.file", "expected a path string"))?;
        let path = base.join(file);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        return LatticeGraph::from_document(&text).map_err(|e| prefix_graph_error(e, &format!("{}: $", path.display())));
    }
    if let Some(b) = obj.get("builtin") {
        if obj.len() != 1 {
            return Err(config_err("graph", "a builtin lattice takes no other fields"));
        }
        let spec: BuiltinLattice = serde_path_to_error::deserialize(b).map_err(|e| Error::Config {
            path: format!("graph.builtin.{}", e.path()),
            message: e.inner().to_string(),
        })?;
        return spec.build();
    }
    LatticeGraph::from_value(graph).map_err(|e| prefix_graph_error(e, "graph"))
}

/// Reads a scenario file: either one scenario object or an array of them.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Config {
        path: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let one = |v: &Value, prefix: String| -> Result<Scenario> {
        let sc: Scenario = serde_path_to_error::deserialize(v).map_err(|e| Error::Config {
            path: format!("{prefix}{}", e.path()),
            message: e.inner().to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    };
    match &root {
        Value::Array(items) => {
            if items.is_empty() {
                return Err(config_err("$", "empty scenario list"));
            }
            let list = items
                .iter()
                .enumerate()
                .map(|(i, v)| one(v, format!("[{i}].")))
                .collect::<Result<Vec<_>>>()?;
            let mut names: Vec<&str> = list.iter().map(|s| s.name.as_str()).collect();
            names.sort_unstable();
            if names.windows(2).any(|w| w[0] == w[1]) {
                return Err(config_err("name", "scenario names in a list must be unique"));
            }
            Ok(list)
        }
        _ => Ok(vec![one(&root, String::new())?]),
    }
}

pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenarios(&text)
}

pub fn scenarios_to_json(list: &[Scenario]) -> String {
    if list.len() == 1 {
        return list[0].to_json();
    }
    let mut s = serde_json::to_string_pretty(list).expect("serializable");
    s.push('\n');
    s
}

/// Output directory from the flag, the environment, or the default.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Demo {
    Grid3x3,
    HallLadder,
    Lensing,
    Tesseract,
}

#[derive(Clone, Debug, Default)]
pub struct DemoOptions {
    pub rungs: Option<usize>,
    /// Flux for the ladder; a uniform phase offset elsewhere.
    pub alpha: Option<f64>,
}

fn builtin(v: Value) -> Value {
    json!({ "builtin": v })
}

/// Lensing defaults: tuned so the doublon contrast is visible at desk scale.
pub const LENSING_SITES: usize = 15;
pub const LENSING_KAPPA: f64 = 0.05;
pub const LENSING_U: f64 = 1.0;
pub const LENSING_STEP: f64 = 0.003;
pub const LENSING_ITERATIONS: u64 = 1200;

pub fn demo_scenarios(demo: Demo, opts: &DemoOptions) -> Vec<Scenario> {
    match demo {
        Demo::Grid3x3 => {
            let graph = builtin(json!({"kind": "grid2d", "rows": 3, "cols": 3, "kappa": 0.2}));
            let mut sc = Scenario::new("grid3x3", graph, InitialState::Fock(vec![(4, 1)]), 40);
            sc.mode = RunMode::Tick;
            sc.snapshots = SnapshotChoice::PerCycle;
            sc.alpha = opts.alpha;
            vec![sc]
        }
        Demo::HallLadder => {
            let rungs = opts.rungs.unwrap_or(64);
            let alpha = opts.alpha.unwrap_or(HALL_ALPHA);
            let graph = builtin(json!({
                "kind": "hall_ladder", "rungs": rungs, "kappa": 0.1, "alpha": alpha, "periodic": true
            }));
            let packet = PacketSpec {
                axis: AxisSpec::Named(AxisName::LeftLeg),
                x0: None,
                sigma: 4.0,
                k: 0.1,
            };
            let mut sc = Scenario::new("hall-ladder", graph, InitialState::Packet(packet), 200);
            sc.analyses = Analyses {
                bands: true,
                correlations: false,
                wavepacket: true,
                axis: Some(AxisSpec::Named(AxisName::LeftLeg)),
            };
            vec![sc]
        }
        Demo::Tesseract => {
            let graph = builtin(json!({"kind": "hypercube", "dim": 4, "kappa": 0.01}));
            let iterations = (PI / (2.0 * 0.01)).ceil() as u64;
            let mut sc = Scenario::new("tesseract", graph, InitialState::Fock(vec![(0, 1), (5, 1)]), iterations);
            sc.mode = RunMode::Tick;
            sc.alpha = opts.alpha;
            vec![sc]
        }
        Demo::Lensing => {
            let graph = builtin(json!({"kind": "chain", "sites": LENSING_SITES, "kappa": LENSING_KAPPA}));
            let centre = LENSING_SITES / 2;
            let ramp = vec![AlphaStep {
                from: 0,
                ramp: Some(Ramp {
                    step: LENSING_STEP,
                    every: 1,
                    count: LENSING_ITERATIONS,
                }),
                ..Default::default()
            }];
            let mut out = Vec::new();
            for (label, bosons) in [("doublon", 2), ("single", 1)] {
                for ramped in [true, false] {
                    let name = format!("lensing-{label}-{}", if ramped { "ramp" } else { "control" });
                    let mut sc = Scenario::new(
                        &name,
                        graph.clone(),
                        InitialState::Fock(vec![(centre, bosons)]),
                        LENSING_ITERATIONS,
                    );
                    sc.note = Some("qualitative reproduction; parameters tuned for desk scale".into());
                    sc.u = LENSING_U;
                    sc.alpha = opts.alpha;
                    if ramped {
                        sc.alpha_schedule = ramp.clone();
                    }
                    sc.analyses.wavepacket = true;
                    out.push(sc);
                }
            }
            out
        }
    }
}

/// Command-line overrides applied on top of a scenario.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mu: Option<f64>,
    pub u: Option<f64>,
    pub kappa_scale: Option<f64>,
    pub iterations: Option<u64>,
    pub mode: Option<RunMode>,
    pub alpha: Option<f64>,
    pub alpha_schedule: Option<Vec<AlphaStep>>,
    pub bands: bool,
    pub correlations: bool,
    pub wavepacket: bool,
    pub snapshots: Option<SnapshotChoice>,
    pub seed: Option<u64>,
    pub memory_cap: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, sc: &mut Scenario) {
        if let Some(v) = self.mu {
            sc.mu = v;
        }
        if let Some(v) = self.u {
            sc.u = v;
        }
        if let Some(v) = self.kappa_scale {
            sc.kappa_scale = v;
        }
        if let Some(v) = self.iterations {
            sc.iterations = v;
        }
        if let Some(v) = self.mode {
            sc.mode = v;
        }
        if let Some(v) = self.alpha {
            sc.alpha = Some(v);
        }
        if let Some(v) = &self.alpha_schedule {
            sc.alpha_schedule = v.clone();
        }
        if let Some(v) = self.snapshots {
            sc.snapshots = v;
        }
        if let Some(v) = self.seed {
            sc.seed = v;
        }
        if let Some(v) = self.memory_cap {
            sc.memory_cap = Some(v);
        }
        sc.analyses.bands |= self.bands;
        sc.analyses.correlations |= self.correlations;
        sc.analyses.wavepacket |= self.wavepacket;
    }
}

/// Rough peak footprint in bytes of a run.
pub fn estimate_memory(sc: &Scenario, dim: usize, sites: usize, edges: usize, max_bosons: usize) -> u64 {
    let dim = dim as u64;
    let vec = 16 * dim;
    let mut bytes = 4 * vec + dim * (max_bosons as u64) * 4;
    let exact = matches!(sc.mode, RunMode::Exact | RunMode::Both);
    if exact {
        let nnz = dim.saturating_mul(1 + 2 * edges as u64);
        bytes = bytes.saturating_add(nnz.saturating_mul(24));
        bytes = if dim as usize <= DENSE_LIMIT {
            bytes.saturating_add(dim.saturating_mul(dim).saturating_mul(48))
        } else {
            bytes.saturating_add((KRYLOV_DIM as u64 + 2) * vec)
        };
    }
    if sc.record_states || sc.analyses.correlations || sc.mode == RunMode::Both {
        let snaps = sc.iterations / sc.stride.max(1) + 2;
        let per_iter = match sc.snapshots {
            SnapshotChoice::PerIteration => 1,
            SnapshotChoice::PerCycle => edges.max(1) as u64,
            SnapshotChoice::PerPass => 3 * (edges.max(1) as u64) * (sites as u64 + 1),
        };
        let copies = if exact { 2 } else { 1 };
        bytes = bytes.saturating_add(snaps.saturating_mul(per_iter).saturating_mul(vec).saturating_mul(copies));
    }
    if sc.analyses.bands {
        let s = (sites as u64 + 1).pow(2);
        bytes = bytes.saturating_add(s.saturating_mul(16 * 6));
    }
    bytes
}

/// What a run produced, for callers that want numbers without re-reading files.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub name: String,
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub trajectory: Trajectory,
    pub exact: Option<Trajectory>,
    pub bands: Option<BandStructure>,
    pub summary: BTreeMap<String, Value>,
}

#[allow(clippy::too_many_arguments)]
fn exact_run(
    graph: &LatticeGraph,
    alphas: &AlphaSchedule,
    mu: f64,
    u: f64,
    initial: &StateVector,
    iterations: u64,
    stride: u64,
    record: bool,
) -> Result<Trajectory> {
    let basis = initial.basis().clone();
    let mut traj = Trajectory::new(Provenance::Exact);
    traj.push(Snapshot {
        tag: TimeTag::default(),
        time: 0.0,
        occupations: initial.occupations(),
        state: record.then(|| initial.amplitudes().to_vec()),
    });
    let mut psi = initial.clone();
    let mut t = 0u64;
    let mut cached: Option<(Option<u64>, crate::ops::SparseOperator)> = None;
    while t < iterations {
        let active = active_override(alphas, t);
        let key = active.map(|(k, _)| k);
        let next_key = alphas.range(t + 1..).next().map(|(k, _)| *k).unwrap_or(u64::MAX);
        let end = next_key.min(iterations).min(t + EXACT_CHUNK);
        if cached.as_ref().map(|(k, _)| *k) != Some(key) {
            let g = match active {
                Some((_, o)) => o.apply(graph)?,
                None => graph.clone(),
            };
            cached = Some((key, build_hamiltonian(&basis, &g, mu, u)?));
        }
        let h = &cached.as_ref().unwrap().1;
        let times: Vec<f64> = (1..=end - t).map(|j| j as f64).collect();
        let seg = exact_trajectory(h, &psi, &times, Method::Auto, true)?;
        let mut last = None;
        for snap in seg.snapshots.into_iter().skip(1) {
            let it = t + snap.tag.iteration;
            let state = snap.state.expect("recorded");
            if it.is_multiple_of(stride) || it == iterations {
                traj.push(Snapshot {
                    tag: TimeTag::iteration(it),
                    time: it as f64,
                    occupations: snap.occupations,
                    state: record.then(|| state.clone()),
                });
            }
            last = Some(state);
        }
        psi = StateVector::new(basis.clone(), last.expect("non-empty segment"))?;
        t = end;
    }
    Ok(traj)
}

fn band_config(graph: &LatticeGraph) -> BandConfig {
    let is_ladder = graph.metadata.get("kind").and_then(Value::as_str) == Some("hall_ladder");
    let base = if is_ladder {
        BandConfig::ladder(graph.num_sites() / 2)
    } else {
        BandConfig::default()
    };
    BandConfig {
        resolve_degenerate: true,
        ..base
    }
}

/// One-boson band structure of the emulated iteration, or of the Hamiltonian itself
/// when the lattice is too large for a dense logarithm. Returns the source used.
pub fn scenario_bands(graph: &LatticeGraph, mu: f64, u: f64, first: Option<&PhaseOverride>) -> Result<(BandStructure, &'static str)> {
    let basis = FockBasis::new(graph.num_sites(), 1)?;
    let cfg = band_config(graph);
    if graph.num_sites() <= EMULATED_BAND_LIMIT {
        let sched = compile_schedule(graph, first)?;
        let g = iteration_matrix(&basis, &sched, EmulationMode::Fast, mu, u)?;
        let h = effective_hamiltonian(&g)?;
        let block = single_particle_block_dense(&h, &basis)?;
        Ok((extract_band_structure(&block, &cfg)?, "emulated"))
    } else {
        let g = match first {
            Some(o) => o.apply(graph)?,
            None => graph.clone(),
        };
        let h = build_hamiltonian(&basis, &g, mu, u)?;
        Ok((extract_band_structure(&single_particle_block(&h, &basis)?, &cfg)?, "hamiltonian"))
    }
}

fn write_file(dir: &Path, name: &str, text: &str, files: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    files.push(name.to_string());
    Ok(())
}

fn plot_script(sites: usize, bands: bool, wavepacket: bool) -> String {
    let mut s = String::from("set datafile separator ','\nset key outside\n");
    let _ = writeln!(s, "set xlabel 'time'\nset ylabel 'occupation'");
    let _ = writeln!(
        s,
        "plot for [i=5:{}] 'occupations.csv' using 4:i with lines title columnhead(i)",
        4 + sites
    );
    if bands {
        s.push_str("pause -1\nset xlabel 'k'\nset ylabel 'E'\nset cbrange [0:1]\n");
        s.push_str("plot 'bands.csv' using 2:3:4 with points pt 7 palette title 'left-leg weight'\n");
    }
    if wavepacket {
        s.push_str("pause -1\nset xlabel 'time'\nset ylabel 'centre'\n");
        s.push_str("plot 'wavepacket.csv' using 1:2 with lines title 'centre of mass'\n");
    }
    s
}

/// Runs one scenario and writes its outputs into `out`.
pub fn run_scenario(sc: &Scenario, base: &Path, out: &Path) -> Result<RunReport> {
    let started = Instant::now();
    sc.validate()?;
    let raw = load_graph(&sc.graph, base)?;
    let mut graph = raw.scaled(sc.kappa_scale);
    if let Some(a) = sc.alpha {
        graph = PhaseOverride::Additive(a).apply(&graph)?;
    }
    let (mu, u) = (sc.mu * sc.kappa_scale, sc.u * sc.kappa_scale);
    let alphas = expand_alpha_steps(&sc.alpha_schedule)?;
    for o in alphas.values() {
        o.apply(&graph).map_err(|e| config_err("alpha_schedule", e.to_string()))?;
    }
    let l = graph.num_sites();
    let bosons = sc.initial.bosons();
    let cap = sc.max_bosons.unwrap_or(bosons);
    let sites = if sc.mode == RunMode::Tick { l + 1 } else { l };
    let dim128 = dimension(sites, cap, DimensionMode::DirectSum)?;
    let dim = usize::try_from(dim128).map_err(|_| Error::Overflow(format!("dimension {dim128}")))?;
    let mem_cap = sc.memory_cap.unwrap_or(DEFAULT_MEMORY_CAP);
    let bytes = estimate_memory(sc, dim, l, graph.edges().len(), cap);
    if bytes > mem_cap {
        return Err(Error::MemoryCap { bytes, cap: mem_cap, dim });
    }
    let basis = Arc::new(FockBasis::new(sites, cap)?);
    let initial = match &sc.initial {
        InitialState::Fock(pairs) => {
            if let Some(&(b, _)) = pairs.iter().find(|&&(b, _)| b >= l) {
                return Err(config_err("initial", format!("bin {b} outside lattice of {l} sites")));
            }
            StateVector::from_pairs(basis.clone(), pairs)?
        }
        InitialState::Packet(p) => {
            let axis = p.axis.resolve(l)?;
            let x0 = p.x0.unwrap_or(axis.len() as f64 / 2.0);
            gaussian_packet(basis.clone(), &axis, x0, p.sigma, p.k)?
        }
    };

    let wants_states = sc.record_states || sc.analyses.correlations || sc.mode == RunMode::Both;
    let emulated = match sc.mode {
        RunMode::Exact => None,
        mode => {
            let config = EmulationConfig {
                mu,
                u,
                iterations: sc.iterations,
                mode: if mode == RunMode::Tick { EmulationMode::Tick } else { EmulationMode::Fast },
                snapshots: sc.snapshots.into(),
                record_states: wants_states,
                stride: sc.stride,
                ..Default::default()
            };
            Some(if alphas.is_empty() {
                run_emulation(&initial, &compile_schedule(&graph, None)?, &config)?
            } else {
                run_emulation_stepped(&initial, &graph, &alphas, &config)?
            })
        }
    };
    let exact = match sc.mode {
        RunMode::Exact | RunMode::Both => Some(exact_run(
            &graph,
            &alphas,
            mu,
            u,
            &initial,
            sc.iterations,
            sc.stride,
            wants_states,
        )?),
        _ => None,
    };

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = Vec::new();
    let mut summary = BTreeMap::new();
    let primary = emulated.clone().or_else(|| exact.clone()).expect("one trajectory");
    write_file(out, "occupations.csv", &primary.occupations_csv(), &mut files)?;
    if sc.record_states {
        write_file(out, "amplitudes.txt", &primary.amplitudes_text(), &mut files)?;
    }
    if let (Some(em), Some(ex)) = (&emulated, &exact) {
        write_file(out, "occupations_exact.csv", &ex.occupations_csv(), &mut files)?;
        let by_iteration: BTreeMap<u64, &Snapshot> = ex.snapshots.iter().map(|s| (s.tag.iteration, s)).collect();
        let mut text = String::from("iteration,time,fidelity\n");
        let mut worst = 1.0f64;
        for s in em.snapshots.iter().filter(|s| s.tag.cycle == 0 && s.tag.pass == 0) {
            if let (Some(x), Some(a)) = (by_iteration.get(&s.tag.iteration), &s.state) {
                let fa = StateVector::new(basis.clone(), a.clone())?;
                let fb = StateVector::new(basis.clone(), x.state.clone().expect("recorded"))?;
                let f = fidelity(&fa, &fb)?;
                worst = worst.min(f);
                let _ = writeln!(text, "{},{},{:.15}", s.tag.iteration, s.time, f);
            }
        }
        write_file(out, "fidelity.csv", &text, &mut files)?;
        summary.insert("min_fidelity".into(), json!(worst));
    }
    if sc.analyses.correlations {
        let frames: Vec<_> = primary
            .snapshots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let amps = s.state.clone()?;
                let sv = StateVector::new(basis.clone(), amps).ok()?;
                Some((i, occupations_and_correlations(&sv).1))
            })
            .collect();
        write_file(out, "correlations.csv", &correlations_csv(&frames), &mut files)?;
    }
    if sc.analyses.wavepacket {
        let axis = match &sc.analyses.axis {
            Some(a) => a.clone(),
            None if band_config(&graph).partition.is_some() => AxisSpec::Named(AxisName::LeftLeg),
            None => AxisSpec::default(),
        };
        let stats = wavepacket_stats(&primary, &axis.resolve(l)?)?;
        write_file(out, "wavepacket.csv", &wavepacket_csv(&stats), &mut files)?;
        let first = stats.first().expect("two snapshots");
        let last = stats.last().expect("two snapshots");
        let late = &stats[stats.len() / 2..];
        let late_var = late.iter().map(|s| s.variance).sum::<f64>() / late.len() as f64;
        summary.insert("drift".into(), json!(last.center - first.center));
        summary.insert("final_variance".into(), json!(last.variance));
        summary.insert("late_mean_variance".into(), json!(late_var));
    }
    let mut bands = None;
    if sc.analyses.bands {
        let first = active_override(&alphas, 0).map(|(_, o)| o);
        let (mut b, source) = scenario_bands(&graph, mu, u, first)?;
        // report energies in unscaled units
        for p in &mut b.points {
            p.energy /= sc.kappa_scale;
        }
        write_file(out, "bands.csv", &bands_csv(&b.points), &mut files)?;
        summary.insert("bands_source".into(), json!(source));
        summary.insert("bands_retained".into(), json!(b.retained));
        summary.insert("bands_pruned".into(), json!(b.pruned));
        bands = Some(b);
    }
    write_file(
        out,
        "plot.gp",
        &plot_script(sites, sc.analyses.bands, sc.analyses.wavepacket),
        &mut files,
    )?;
    let schedule = compile_schedule(&graph, None)?;
    let manifest = json!({
        "name": sc.name,
        "note": sc.note,
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": serde_json::to_value(sc).expect("serializable"),
        "resolved": {
            "num_sites": l,
            "basis_sites": sites,
            "max_bosons": cap,
            "basis_dim": dim,
            "edges": graph.edges().len(),
            "cycles_per_iteration": schedule.cycles_per_iteration,
            "ticks_per_iteration": schedule.ticks_per_iteration,
            "mu": mu,
            "U": u,
            "estimated_bytes": bytes,
            "register_column": (sc.mode == RunMode::Tick).then_some(l),
        },
        "outputs": files.clone(),
        "summary": summary.clone(),
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
    text.push('\n');
    write_file(out, "manifest.json", &text, &mut files)?;
    Ok(RunReport {
        name: sc.name.clone(),
        out_dir: out.to_path_buf(),
        files,
        trajectory: primary,
        exact,
        bands,
        summary,
    })
}

/// Runs a list of scenarios, each in its own subdirectory when there is more than one.
/// With `parallel` the scenarios run concurrently.
pub fn run_suite(list: &[Scenario], base: &Path, out: &Path, parallel: bool) -> Vec<Result<RunReport>> {
    use rayon::prelude::*;
    let dir = |sc: &Scenario| if list.len() == 1 { out.to_path_buf() } else { out.join(&sc.name) };
    let results: Vec<Result<RunReport>> = if parallel {
        list.par_iter().map(|sc| run_scenario(sc, base, &dir(sc))).collect()
    } else {
        list.iter().map(|sc| run_scenario(sc, base, &dir(sc))).collect()
    };
    if list.len() > 1 {
        let mut text = String::from("name,status,drift,late_mean_variance,min_fidelity\n");
        for (sc, r) in list.iter().zip(&results) {
            let field = |r: &RunReport, key: &str| r.summary.get(key).map(|v| v.to_string()).unwrap_or_default();
            match r {
                Ok(r) => {
                    let _ = writeln!(
                        text,
                        "{},ok,{},{},{}",
                        sc.name,
                        field(r, "drift"),
                        field(r, "late_mean_variance"),
                        field(r, "min_fidelity")
                    );
                }
                Err(e) => {
                    let _ = writeln!(text, "{},error {},,,", sc.name, e.exit_code());
                }
            }
        }
        if std::fs::create_dir_all(out).is_ok() {
            let _ = std::fs::write(out.join("summary.csv"), text);
        }
    }
    results
}
