//! Line-oriented scenario files and the built-in examples.
//!
//! ```text
//! name = "example1"
//! [graph]
//! n = 6
//! topology = "cycle"          # or: edges = [[0, 1], [1, 2]]
//! [controller]
//! mode = "Reject"             # Baseline | Reject | ConstantPoint | Damped
//! k = 100.0                   # scalar broadcast or length-n list
//! m = 5.0
//! [disturbance]
//! kind = "constant"           # zero | constant | sinusoid
//! w = [-4.75, -2.75, -0.75, 1.25, 3.25, 5.25]
//! [init]
//! x0 = [-0.4, -0.2, 0.0, 0.4, 0.6, 0.8]
//! [sim]
//! T = 20.0
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::analysis::ConvergenceReport;
use crate::controller::{ControllerConfig, LoopState, Mode};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphMatrices};
use crate::sim::{simulate, DisturbanceSignal, SimSettings, Trajectory};
use crate::spectral::{best_mu, ultimate_bound, BoundReport};

/// `q` used by the constant-point variant.
pub const VARIANT_Q: f64 = 0.025;

const EXAMPLE_X0: [f64; 6] = [-0.4, -0.2, 0.0, 0.4, 0.6, 0.8];
const EXAMPLE_W: [f64; 6] = [-4.75, -2.75, -0.75, 1.25, 3.25, 5.25];
const EXAMPLE_ZETA: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Cycle,
    Path,
    Complete,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Cycle => "cycle",
            Topology::Path => "path",
            Topology::Complete => "complete",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [Topology::Cycle, Topology::Path, Topology::Complete]
            .into_iter()
            .find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Topology { kind: Topology, n: usize },
    Edges { n: usize, edges: Vec<(usize, usize)> },
}

impl GraphSpec {
    pub fn n(&self) -> usize {
        match self {
            GraphSpec::Topology { n, .. } | GraphSpec::Edges { n, .. } => *n,
        }
    }

    pub fn build(&self) -> Result<Graph> {
        match self {
            GraphSpec::Topology {
                kind: Topology::Cycle,
                n,
            } => Graph::cycle(*n),
            GraphSpec::Topology {
                kind: Topology::Path,
                n,
            } => Graph::path(*n),
            GraphSpec::Topology {
                kind: Topology::Complete,
                n,
            } => Graph::complete(*n),
            GraphSpec::Edges { n, edges } => Graph::new(*n, edges),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gain {
    Scalar(f64),
    List(Vec<f64>),
}

impl Gain {
    pub fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            Gain::Scalar(k) => vec![*k; n],
            Gain::List(k) => k.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec {
    pub mode: Mode,
    pub k: Gain,
    pub m: f64,
    pub q: Option<f64>,
    pub kappa: Option<f64>,
    pub zeta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSpec {
    Zero,
    Constant(Vec<f64>),
    Sinusoid {
        amplitude: Vec<f64>,
        omega: Vec<f64>,
        phase_deg: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputSpec {
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub graph: GraphSpec,
    pub controller: ControllerSpec,
    pub disturbance: DisturbanceSpec,
    pub x0: Vec<f64>,
    pub xhat0: Option<Vec<f64>>,
    pub what0: Option<Vec<f64>>,
    pub sim: SimSettings,
    pub output: OutputSpec,
}

/// Controller override applied on top of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    Reject,
    ConstantPoint,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Reject => "reject",
            Variant::ConstantPoint => "constant-point",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Variant::Baseline, Variant::Reject, Variant::ConstantPoint]
            .into_iter()
            .find(|v| v.name() == s)
    }
}

/// Everything one scenario run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: ConvergenceReport,
    pub bound: Option<BoundReport>,
}

pub fn builtin_example(id: u32) -> Result<Scenario> {
    let mut s = Scenario {
        name: format!("example{id}"),
        graph: GraphSpec::Topology {
            kind: Topology::Cycle,
            n: 6,
        },
        controller: ControllerSpec {
            mode: Mode::Reject,
            k: Gain::Scalar(100.0),
            m: 5.0,
            q: None,
            kappa: None,
            zeta: None,
        },
        disturbance: DisturbanceSpec::Constant(EXAMPLE_W.to_vec()),
        x0: EXAMPLE_X0.to_vec(),
        xhat0: None,
        what0: None,
        sim: SimSettings {
            horizon: 20.0,
            ..SimSettings::default()
        },
        output: OutputSpec::default(),
    };
    match id {
        1 => {}
        2 => {
            s.controller.mode = Mode::Damped;
            s.controller.kappa = Some(0.0025);
            s.disturbance = DisturbanceSpec::Sinusoid {
                amplitude: vec![1.0; 6],
                omega: vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2],
                phase_deg: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            };
            s.sim.horizon = 60.0;
        }
        3 => {
            s.controller.mode = Mode::ConstantPoint;
            s.controller.q = Some(VARIANT_Q);
            s.controller.zeta = Some(EXAMPLE_ZETA.to_vec());
            s.sim.horizon = 40.0;
        }
        other => return Err(Error::UnknownExample(other)),
    }
    Ok(s)
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let doc = Document::parse(text)?;
        let s = doc.into_scenario()?;
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        let c = &mut self.controller;
        c.q = None;
        c.kappa = None;
        match variant {
            Variant::Baseline => c.mode = Mode::Baseline,
            Variant::Reject => c.mode = Mode::Reject,
            Variant::ConstantPoint => {
                c.mode = Mode::ConstantPoint;
                c.q = Some(VARIANT_Q);
            }
        }
        self
    }

    /// Checks dimensions and mode invariants, and builds every derived object once.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let c = &self.controller;
        match (c.mode, c.q, c.kappa) {
            (Mode::ConstantPoint, None, _) => {
                return Err(Error::validation("controller.q", "required when mode is ConstantPoint"))
            }
            (Mode::Damped, _, None) => {
                return Err(Error::validation("controller.kappa", "required when mode is Damped"))
            }
            (m, Some(_), _) if m != Mode::ConstantPoint => {
                return Err(Error::validation(
                    "controller.q",
                    "only allowed when mode is ConstantPoint",
                ))
            }
            (m, _, Some(_)) if m != Mode::Damped => {
                return Err(Error::validation(
                    "controller.kappa",
                    "only allowed when mode is Damped",
                ))
            }
            _ => {}
        }
        if let Gain::List(k) = &c.k {
            check_len("controller.k", k, n)?;
        }
        if let Some(z) = &c.zeta {
            check_len("controller.zeta", z, n)?;
        }
        match &self.disturbance {
            DisturbanceSpec::Zero => {}
            DisturbanceSpec::Constant(w) => check_len("disturbance.w", w, n)?,
            DisturbanceSpec::Sinusoid {
                amplitude,
                omega,
                phase_deg,
            } => {
                check_len("disturbance.amplitude", amplitude, n)?;
                check_len("disturbance.omega", omega, n)?;
                check_len("disturbance.phase_deg", phase_deg, n)?;
            }
        }
        check_len("init.x0", &self.x0, n)?;
        if let Some(v) = &self.xhat0 {
            check_len("init.xhat0", v, n)?;
        }
        if let Some(v) = &self.what0 {
            check_len("init.what0", v, n)?;
        }
        self.sim.validate()?;
        GraphMatrices::new(&self.graph.build()?)?;
        self.controller_config()?;
        self.disturbance_signal()?;
        Ok(())
    }

    /// Fails if an output path points into a directory that does not exist.
    pub fn check_outputs(&self) -> Result<()> {
        for (field, path) in [("output.csv", &self.output.csv), ("output.report", &self.output.report)] {
            if let Some(p) = path {
                let dir = p
                    .parent()
                    .filter(|d| !d.as_os_str().is_empty())
                    .unwrap_or(Path::new("."));
                if !dir.is_dir() {
                    return Err(Error::validation(
                        field,
                        format!("directory {} does not exist", dir.display()),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn controller_config(&self) -> Result<ControllerConfig> {
        let c = &self.controller;
        ControllerConfig::new(
            c.mode,
            c.k.expand(self.n()),
            c.m,
            c.q.unwrap_or(0.0),
            c.kappa.unwrap_or(0.0),
            c.zeta.clone(),
        )
    }

    pub fn disturbance_signal(&self) -> Result<DisturbanceSignal> {
        match &self.disturbance {
            DisturbanceSpec::Zero => Ok(DisturbanceSignal::Zero { n: self.n() }),
            DisturbanceSpec::Constant(w) => Ok(DisturbanceSignal::Constant(DVector::from_column_slice(w))),
            DisturbanceSpec::Sinusoid {
                amplitude,
                omega,
                phase_deg,
            } => DisturbanceSignal::sinusoid_bank(
                amplitude.clone(),
                omega.clone(),
                phase_deg.iter().map(|d| d.to_radians()).collect(),
            ),
        }
    }

    pub fn initial_state(&self) -> LoopState {
        let n = self.n();
        let v = |o: &Option<Vec<f64>>| {
            o.as_ref()
                .map_or_else(|| DVector::zeros(n), |v| DVector::from_column_slice(v))
        };
        LoopState {
            x: DVector::from_column_slice(&self.x0),
            xhat: v(&self.xhat0),
            what: v(&self.what0),
        }
    }

    /// Ultimate bound at the best grid `μ`, for damped scenarios that satisfy the gain condition.
    pub fn bound(&self, gm: &GraphMatrices) -> Result<Option<BoundReport>> {
        let cfg = self.controller_config()?;
        if cfg.mode() != Mode::Damped {
            return Ok(None);
        }
        let rep = best_mu(gm, cfg.k(), cfg.m(), cfg.kappa())?;
        if !rep.feasible {
            return Ok(None);
        }
        let d = self.disturbance_signal()?;
        ultimate_bound(&rep, d.w_star(), d.wdot_star()).map(Some)
    }

    pub fn run(&self) -> Result<RunOutput> {
        let gm = GraphMatrices::new(&self.graph.build()?)?;
        let cfg = self.controller_config()?;
        let d = self.disturbance_signal()?;
        let trajectory = simulate(&cfg, &gm, &d, &self.initial_state(), &self.sim)?;
        let bound = self.bound(&gm)?;
        let report = ConvergenceReport::analyze(&trajectory, &cfg, &d, bound.as_ref())?;
        Ok(RunOutput {
            trajectory,
            report,
            bound,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", quote(&self.name));
        out.push_str("\n[graph]\n");
        let _ = writeln!(out, "n = {}", self.n());
        match &self.graph {
            GraphSpec::Topology { kind, .. } => {
                let _ = writeln!(out, "topology = {}", quote(kind.name()));
            }
            GraphSpec::Edges { edges, .. } => {
                let pairs: Vec<String> = edges.iter().map(|(i, j)| format!("[{i}, {j}]")).collect();
                let _ = writeln!(out, "edges = [{}]", pairs.join(", "));
            }
        }
        let c = &self.controller;
        out.push_str("\n[controller]\n");
        let _ = writeln!(out, "mode = {}", quote(c.mode.name()));
        match &c.k {
            Gain::Scalar(k) => {
                let _ = writeln!(out, "k = {k:?}");
            }
            Gain::List(k) => {
                let _ = writeln!(out, "k = {}", list(k));
            }
        }
        let _ = writeln!(out, "m = {:?}", c.m);
        if let Some(q) = c.q {
            let _ = writeln!(out, "q = {q:?}");
        }
        if let Some(kappa) = c.kappa {
            let _ = writeln!(out, "kappa = {kappa:?}");
        }
        if let Some(z) = &c.zeta {
            let _ = writeln!(out, "zeta = {}", list(z));
        }
        out.push_str("\n[disturbance]\n");
        match &self.disturbance {
            DisturbanceSpec::Zero => out.push_str("kind = \"zero\"\n"),
            DisturbanceSpec::Constant(w) => {
                let _ = writeln!(out, "kind = \"constant\"\nw = {}", list(w));
            }
            DisturbanceSpec::Sinusoid {
                amplitude,
                omega,
                phase_deg,
            } => {
                let _ = writeln!(
                    out,
                    "kind = \"sinusoid\"\namplitude = {}\nomega = {}\nphase_deg = {}",
                    list(amplitude),
                    list(omega),
                    list(phase_deg)
                );
            }
        }
        out.push_str("\n[init]\n");
        let _ = writeln!(out, "x0 = {}", list(&self.x0));
        if let Some(v) = &self.xhat0 {
            let _ = writeln!(out, "xhat0 = {}", list(v));
        }
        if let Some(v) = &self.what0 {
            let _ = writeln!(out, "what0 = {}", list(v));
        }
        out.push_str("\n[sim]\n");
        let _ = writeln!(
            out,
            "T = {:?}\nh = {:?}\nsample_every = {}",
            self.sim.horizon, self.sim.step, self.sim.sample_every
        );
        if self.output.csv.is_some() || self.output.report.is_some() {
            out.push_str("\n[output]\n");
            if let Some(p) = &self.output.csv {
                let _ = writeln!(out, "csv = {}", quote(&p.to_string_lossy()));
            }
            if let Some(p) = &self.output.report {
                let _ = writeln!(out, "report = {}", quote(&p.to_string_lossy()));
            }
        }
        out
    }
}

fn check_len(field: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::validation(
            field,
            format!("expected {n} entries, found {}", v.len()),
        ));
    }
    Ok(())
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Str(String),
    Num(f64),
    List(Vec<Value>),
}

struct Entry {
    line: usize,
    value: Value,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("", &["name"]),
    ("graph", &["n", "topology", "edges"]),
    ("controller", &["mode", "k", "m", "q", "kappa", "zeta"]),
    ("disturbance", &["kind", "w", "amplitude", "omega", "phase_deg"]),
    ("init", &["x0", "xhat0", "what0"]),
    ("sim", &["T", "h", "sample_every"]),
    ("output", &["csv", "report"]),
];

struct Document {
    entries: BTreeMap<String, Entry>,
    last_line: usize,
}

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = "";
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            let perr = |message: String| Error::Parse { line, message };
            if let Some(rest) = content.strip_prefix('[') {
                if !rest.starts_with('[') && !content.contains('=') {
                    let name = rest
                        .strip_suffix(']')
                        .ok_or_else(|| perr("unterminated section header".into()))?
                        .trim();
                    section = SECTIONS
                        .iter()
                        .find(|(s, _)| !s.is_empty() && *s == name)
                        .map(|(s, _)| *s)
                        .ok_or_else(|| perr(format!("unknown section [{name}]")))?;
                    continue;
                }
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| perr("expected `key = value`".into()))?;
            let key = key.trim();
            let allowed = SECTIONS
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, k)| *k)
                .unwrap_or(&[]);
            if !allowed.contains(&key) {
                let place = if section.is_empty() {
                    "top level".to_string()
                } else {
                    format!("[{section}]")
                };
                return Err(perr(format!("unknown key `{key}` in {place}")));
            }
            let value = ValueParser::new(value.trim()).parse_all().map_err(perr)?;
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if entries.contains_key(&full) {
                return Err(perr(format!("duplicate key `{full}`")));
            }
            entries.insert(full, Entry { line, value });
        }
        Ok(Document { entries, last_line })
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn missing(&self, key: &str) -> Error {
        Error::Parse {
            line: self.last_line.max(1),
            message: format!("missing required key `{key}`"),
        }
    }

    fn req(&mut self, key: &str) -> Result<Entry> {
        self.take(key).ok_or_else(|| self.missing(key))
    }

    fn into_scenario(mut self) -> Result<Scenario> {
        let name = self.req("name")?.string()?;

        let n = self.req("graph.n")?.count()?;
        let graph = match (self.take("graph.topology"), self.take("graph.edges")) {
            (Some(t), None) => {
                let line = t.line;
                let s = t.string()?;
                let kind = Topology::from_name(&s).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("unknown topology `{s}`"),
                })?;
                GraphSpec::Topology { kind, n }
            }
            (None, Some(e)) => GraphSpec::Edges { n, edges: e.edges()? },
            (Some(t), Some(_)) => {
                return Err(Error::Parse {
                    line: t.line,
                    message: "give either `topology` or `edges`, not both".into(),
                })
            }
            (None, None) => return Err(self.missing("graph.topology")),
        };

        let mode_entry = self.req("controller.mode")?;
        let line = mode_entry.line;
        let mode_name = mode_entry.string()?;
        let mode = Mode::from_name(&mode_name).ok_or_else(|| Error::Parse {
            line,
            message: format!("unknown mode `{mode_name}`"),
        })?;
        let k = match self.req("controller.k")? {
            Entry {
                value: Value::Num(v), ..
            } => Gain::Scalar(v),
            e => Gain::List(e.numbers()?),
        };
        let controller = ControllerSpec {
            mode,
            k,
            m: self.req("controller.m")?.number()?,
            q: self.take("controller.q").map(Entry::number).transpose()?,
            kappa: self.take("controller.kappa").map(Entry::number).transpose()?,
            zeta: self.take("controller.zeta").map(Entry::numbers).transpose()?,
        };

        let kind = match self.take("disturbance.kind") {
            Some(e) => {
                let line = e.line;
                Some((line, e.string()?))
            }
            None => None,
        };
        let disturbance = match kind.as_ref().map(|(l, s)| (*l, s.as_str())) {
            None | Some((_, "zero")) => DisturbanceSpec::Zero,
            Some((_, "constant")) => DisturbanceSpec::Constant(self.req("disturbance.w")?.numbers()?),
            Some((_, "sinusoid")) => DisturbanceSpec::Sinusoid {
                amplitude: self.req("disturbance.amplitude")?.numbers()?,
                omega: self.req("disturbance.omega")?.numbers()?,
                phase_deg: self.req("disturbance.phase_deg")?.numbers()?,
            },
            Some((line, other)) => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown disturbance kind `{other}`"),
                })
            }
        };

        let x0 = self.req("init.x0")?.numbers()?;
        let xhat0 = self.take("init.xhat0").map(Entry::numbers).transpose()?;
        let what0 = self.take("init.what0").map(Entry::numbers).transpose()?;

        let defaults = SimSettings::default();
        let sim = SimSettings {
            horizon: self
                .take("sim.T")
                .map(Entry::number)
                .transpose()?
                .unwrap_or(defaults.horizon),
            step: self
                .take("sim.h")
                .map(Entry::number)
                .transpose()?
                .unwrap_or(defaults.step),
            sample_every: self
                .take("sim.sample_every")
                .map(Entry::count)
                .transpose()?
                .unwrap_or(defaults.sample_every),
        };
        let output = OutputSpec {
            csv: self
                .take("output.csv")
                .map(Entry::string)
                .transpose()?
                .map(PathBuf::from),
            report: self
                .take("output.report")
                .map(Entry::string)
                .transpose()?
                .map(PathBuf::from),
        };

        if let Some((key, e)) = self.entries.iter().next() {
            return Err(Error::Parse {
                line: e.line,
                message: format!("key `{key}` does not apply here"),
            });
        }

        Ok(Scenario {
            name,
            graph,
            controller,
            disturbance,
            x0,
            xhat0,
            what0,
            sim,
            output,
        })
    }
}

impl Entry {
    fn err(&self, message: &str) -> Error {
        Error::Parse {
            line: self.line,
            message: message.to_string(),
        }
    }

    fn string(self) -> Result<String> {
        match self.value {
            Value::Str(s) => Ok(s),
            _ => Err(self.err("expected a quoted string")),
        }
    }

    fn number(self) -> Result<f64> {
        match self.value {
            Value::Num(v) => Ok(v),
            _ => Err(self.err("expected a number")),
        }
    }

    fn count(self) -> Result<usize> {
        match self.value {
            Value::Num(v) => as_count(v).ok_or_else(|| self.err("expected a non-negative integer")),
            _ => Err(self.err("expected a non-negative integer")),
        }
    }

    fn numbers(self) -> Result<Vec<f64>> {
        match &self.value {
            Value::List(items) => items
                .iter()
                .map(|v| match v {
                    Value::Num(x) => Ok(*x),
                    _ => Err(self.err("expected a list of numbers")),
                })
                .collect(),
            _ => Err(self.err("expected a list of numbers")),
        }
    }

    fn edges(self) -> Result<Vec<(usize, usize)>> {
        let bad = || self.err("expected a list of [i, j] index pairs");
        let Value::List(items) = &self.value else {
            return Err(bad());
        };
        items
            .iter()
            .map(|pair| match pair {
                Value::List(p) => match p.as_slice() {
                    [Value::Num(i), Value::Num(j)] => {
                        Ok((as_count(*i).ok_or_else(bad)?, as_count(*j).ok_or_else(bad)?))
                    }
                    _ => Err(bad()),
                },
                _ => Err(bad()),
            })
            .collect()
    }
}

fn as_count(v: f64) -> Option<usize> {
    (v >= 0.0 && v.fract() == 0.0 && v < 1e15).then_some(v as usize)
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

struct ValueParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> ValueParser<'a> {
    fn new(src: &'a str) -> Self {
        ValueParser { src, pos: 0 }
    }

    fn parse_all(mut self) -> std::result::Result<Value, String> {
        let v = self.value()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(format!("unexpected trailing text `{}`", &self.src[self.pos..]));
        }
        Ok(v)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> std::result::Result<Value, String> {
        self.skip_ws();
        match self.peek() {
            None => Err("missing value".into()),
            Some('"') => self.string(),
            Some('[') => self.list(),
            Some(_) => self.number(),
        }
    }

    fn string(&mut self) -> std::result::Result<Value, String> {
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.src[self.pos..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Ok(Value::Str(out));
                }
                '\\' => match chars.next() {
                    Some((_, e @ ('"' | '\\'))) => out.push(e),
                    _ => return Err("invalid escape in string".into()),
                },
                c => out.push(c),
            }
        }
        Err("unterminated string".into())
    }

    fn list(&mut self) -> std::result::Result<Value, String> {
        self.pos += 1;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(']') {
            self.pos += 1;
            return Ok(Value::List(items));
        }
        loop {
            items.push(self.value()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(']') => {
                    self.pos += 1;
                    return Ok(Value::List(items));
                }
                _ => return Err("expected `,` or `]` in list".into()),
            }
        }
    }

    fn number(&mut self) -> std::result::Result<Value, String> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'))
        {
            self.pos += 1;
        }
        let tok = &self.src[start..self.pos];
        if tok.is_empty() {
            return Err(format!("unexpected `{}`", &self.src[start..]));
        }
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::Num(v)),
            _ => Err(format!("invalid number `{tok}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(e: Error) -> usize {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn builtin_examples_match_published_values() {
        let e1 = builtin_example(1).unwrap();
        assert_eq!(
            e1.disturbance,
            DisturbanceSpec::Constant(vec![-4.75, -2.75, -0.75, 1.25, 3.25, 5.25])
        );
        assert_eq!(e1.controller.mode, Mode::Reject);
        assert_eq!(e1.controller_config().unwrap().k(), &[100.0; 6]);
        assert_eq!(e1.x0, vec![-0.4, -0.2, 0.0, 0.4, 0.6, 0.8]);
        let e2 = builtin_example(2).unwrap();
        match &e2.disturbance {
            DisturbanceSpec::Sinusoid {
                amplitude,
                omega,
                phase_deg,
            } => {
                assert_eq!(amplitude, &vec![1.0; 6]);
                assert_eq!(omega, &vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2]);
                assert_eq!(phase_deg, &vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(e2.controller.kappa, Some(0.0025));
        assert_eq!(e2.sim.horizon, 60.0);
        let w0 = e2.disturbance_signal().unwrap().evaluate(0.0);
        assert!((w0[0] - 10f64.to_radians().sin()).abs() < 1e-15);
        let e3 = builtin_example(3).unwrap();
        assert_eq!(e3.controller.zeta, Some(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]));
        assert_eq!(e3.controller.q, Some(0.025));
        assert_eq!(builtin_example(4), Err(Error::UnknownExample(4)));
        for id in 1..=3 {
            builtin_example(id).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn render_parse_round_trip() {
        for id in 1..=3 {
            let s = builtin_example(id).unwrap();
            assert_eq!(Scenario::parse(&s.render()).unwrap(), s);
        }
        let mut s = builtin_example(1).unwrap();
        s.name = "odd \"name\" # here".into();
        s.graph = GraphSpec::Edges {
            n: 6,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)],
        };
        s.controller.k = Gain::List(vec![1.0, 2.5, 1e-7, 3.0, 0.1 + 0.2, 1e300]);
        s.xhat0 = Some(vec![0.1; 6]);
        s.what0 = Some(vec![-1.0 / 3.0; 6]);
        s.output.csv = Some("out/x.csv".into());
        s.sim.sample_every = 1;
        assert_eq!(Scenario::parse(&s.render()).unwrap(), s);
    }

    #[test]
    fn variants_override_mode() {
        let base = builtin_example(3).unwrap();
        let b = base.clone().with_variant(Variant::Baseline);
        assert_eq!((b.controller.mode, b.controller.q), (Mode::Baseline, None));
        assert_eq!(b.controller.zeta, base.controller.zeta);
        let c = builtin_example(2).unwrap().with_variant(Variant::ConstantPoint);
        assert_eq!(
            (c.controller.mode, c.controller.q, c.controller.kappa),
            (Mode::ConstantPoint, Some(0.025), None)
        );
        c.validate().unwrap();
        assert_eq!(Variant::from_name("constant-point"), Some(Variant::ConstantPoint));
        assert_eq!(Variant::from_name("damped"), None);
    }

    #[test]
    fn short_x0_is_a_validation_error() {
        let text = builtin_example(1).unwrap().render().replace("x0 = [-0.4, ", "x0 = [");
        match Scenario::parse(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "init.x0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn damped_without_kappa_is_a_validation_error() {
        let text = builtin_example(2).unwrap().render().replace("kappa = 0.0025\n", "");
        match Scenario::parse(&text) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "controller.kappa"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let good = builtin_example(1).unwrap().render();
        let lines: Vec<&str> = good.lines().collect();
        let m_line = lines.iter().position(|l| l.starts_with("m = ")).unwrap() + 1;
        let bad = good.replace("m = 5.0", "m = five");
        assert_eq!(line_of(Scenario::parse(&bad).unwrap_err()), m_line);
        let bad = good.replace("m = 5.0", "mm = 5.0");
        assert_eq!(line_of(Scenario::parse(&bad).unwrap_err()), m_line);
        let bad = good.replace("[sim]", "[simulation]");
        assert!(matches!(Scenario::parse(&bad), Err(Error::Parse { .. })));
        let bad = format!("{good}m = 1.0\n");
        assert!(matches!(Scenario::parse(&bad), Err(Error::Parse { .. })));
        let bad = good.replace("x0 = [-0.4,", "x0 = [-0.4,,");
        assert!(matches!(Scenario::parse(&bad), Err(Error::Parse { .. })));
        let bad = good.replace("n = 6", "n = 6.5");
        assert!(matches!(Scenario::parse(&bad), Err(Error::Parse { .. })));
        assert!(matches!(Scenario::parse(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn comments_defaults_and_edges() {
        let text = r#"
# a path written out by hand
name = "p3"   # trailing comment
[graph]
n = 3
edges = [[0, 1], [1, 2]]
[controller]
mode = "ConstantPoint"
k = [1, 2, 3]
m = 2
q = 0.5
[init]
x0 = [1, 2, 3]
"#;
        let s = Scenario::parse(text).unwrap();
        assert_eq!(
            s.graph,
            GraphSpec::Edges {
                n: 3,
                edges: vec![(0, 1), (1, 2)]
            }
        );
        assert_eq!(s.disturbance, DisturbanceSpec::Zero);
        assert_eq!(s.sim, SimSettings::default());
        assert_eq!(s.controller.k, Gain::List(vec![1.0, 2.0, 3.0]));
        assert_eq!(s.initial_state().what, DVector::zeros(3));
    }

    #[test]
    fn graph_problems_surface() {
        let base = builtin_example(1).unwrap().render();
        let disconnected = base.replace("topology = \"cycle\"", "edges = [[0, 1], [2, 3], [3, 4], [4, 5]]");
        assert_eq!(Scenario::parse(&disconnected), Err(Error::NotConnected));
        let self_loop = base.replace("topology = \"cycle\"", "edges = [[0, 0]]");
        assert_eq!(Scenario::parse(&self_loop), Err(Error::SelfLoop(0)));
    }

    #[test]
    fn output_directory_check() {
        let mut s = builtin_example(1).unwrap();
        s.output.csv = Some("/definitely/not/here/x.csv".into());
        assert!(matches!(s.check_outputs(), Err(Error::Validation { .. })));
        s.output.csv = Some("x.csv".into());
        s.check_outputs().unwrap();
    }

    #[test]
    fn run_short_example() {
        let mut s = builtin_example(1).unwrap();
        s.sim.horizon = 0.5;
        let out = s.run().unwrap();
        assert_eq!(out.report.mode, "Reject");
        assert!(out.bound.is_none());
        assert!((out.trajectory.final_time() - 0.5).abs() < 1e-12);
    }
}
