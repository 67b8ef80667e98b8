//! Flat dotted-key experiment configs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use kappalab::kappa::{self, KappaConfig, SymmetricMode};
use kappalab::noise::{NoiseKnob, NoiseModel, MAX_SIM_QUBITS};
use kappalab::separability::{DeltaConfig, SeesawConfig, SolverConfig, MAX_SOLVER_QUBITS};
use kappalab::wstates::{CircuitStyle, FamilyKind, MAX_DENSE_QUBITS};
use serde::Serialize;
use serde_json::Value as Json;
use toml::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Delta,
    Kappa,
    KappaW,
    Regroup,
    NoisyKappa,
    FidelitySweep,
    Ldp,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Delta => "delta",
            Self::Kappa => "kappa",
            Self::KappaW => "kappa-w",
            Self::Regroup => "regroup",
            Self::NoisyKappa => "noisy-kappa",
            Self::FidelitySweep => "fidelity-sweep",
            Self::Ldp => "ldp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Bool,
    Str,
    IntList,
    FloatList,
}

impl Kind {
    fn describe(self) -> &'static str {
        match self {
            Self::Int => "a non-negative integer",
            Self::Float => "a number",
            Self::Bool => "a boolean",
            Self::Str => "a string",
            Self::IntList => "a list of non-negative integers",
            Self::FloatList => "a list of numbers",
        }
    }
}

const SCHEMA: &[(&str, Kind)] = &[
    ("experiment", Kind::Str),
    ("seed", Kind::Int),
    ("state.family", Kind::Str),
    ("state.n", Kind::Int),
    ("state.permutation", Kind::IntList),
    ("state.groups", Kind::IntList),
    ("delta.subset", Kind::IntList),
    ("solver.tol", Kind::Float),
    ("solver.max_iters", Kind::Int),
    ("seesaw.rank", Kind::Int),
    ("seesaw.restarts", Kind::Int),
    ("kappa.kmax", Kind::Int),
    ("kappa.assume_monotone", Kind::Bool),
    ("kappa.method", Kind::Str),
    ("kappa.samples", Kind::Int),
    ("kappa.symmetric_mode", Kind::Str),
    ("noise.depolarizing_1q", Kind::Float),
    ("noise.depolarizing_2q", Kind::Float),
    ("noise.amplitude_damping", Kind::Float),
    ("noise.dephasing", Kind::Float),
    ("noise.readout_flip", Kind::Float),
    ("noise.knob", Kind::Str),
    ("noise.levels", Kind::FloatList),
    ("circuit.style", Kind::Str),
    ("sweep.n", Kind::IntList),
    ("ldp.degrees", Kind::IntList),
    ("output.dir", Kind::Str),
];

fn kind_of(key: &str) -> Option<Kind> {
    SCHEMA.iter().find(|(k, _)| *k == key).map(|&(_, kind)| kind)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    UnknownKey,
    Type,
    Range,
    Cap,
    Parse,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = serde_json::to_value(self.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        write!(f, "{}: [{}] {}", self.path, kind, self.message)
    }
}

fn diag(path: &str, kind: DiagnosticKind, message: impl Into<String>) -> Diagnostic {
    Diagnostic { path: path.to_owned(), kind, message: message.into() }
}

/// Raw key/value pairs, flattened to dotted paths.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Value>,
    parse_errors: Vec<Diagnostic>,
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let path = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&path, t, out),
            v => {
                out.insert(path, v);
            }
        }
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Self {
        let mut cfg = Self::default();
        match text.parse::<toml::Table>() {
            Ok(table) => flatten("", table, &mut cfg.entries),
            Err(e) => cfg.parse_errors.push(diag("<config>", DiagnosticKind::Parse, e.message().to_owned())),
        }
        cfg
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// Applies a `key=value` override; the value is read as a TOML literal,
    /// falling back to a bare string.
    pub fn set(&mut self, assignment: &str) {
        let Some((key, raw)) = assignment.split_once('=') else {
            self.parse_errors.push(diag(assignment, DiagnosticKind::Parse, "override must look like key=value"));
            return;
        };
        let key = key.trim();
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_owned()));
        self.entries.insert(key.to_owned(), value);
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }
}

/// Fully resolved configuration; every field has a value.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub family: String,
    pub n: usize,
    /// One-based; empty means identity.
    pub permutation: Vec<usize>,
    pub groups: Vec<usize>,
    /// One-based; empty means all subsystems.
    pub delta_subset: Vec<usize>,
    pub tol: f64,
    pub max_iters: usize,
    /// 0 picks the rank automatically.
    pub rank: usize,
    pub restarts: usize,
    pub kmax: usize,
    pub assume_monotone: bool,
    pub method: String,
    pub samples: usize,
    pub symmetric_mode: String,
    pub noise: NoiseModel,
    pub knob: String,
    pub levels: Vec<f64>,
    pub style: String,
    pub sweep_n: Vec<usize>,
    pub degrees: Vec<usize>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let (n, sweep_n) = match experiment {
            Experiment::KappaW => (8, (4..=14).collect()),
            Experiment::FidelitySweep => (4, (2..=10).collect()),
            Experiment::Regroup => (6, Vec::new()),
            _ => (4, Vec::new()),
        };
        let family = if experiment == Experiment::Regroup { "catpairs" } else { "w" };
        Self {
            experiment,
            seed: 0,
            family: family.into(),
            n,
            permutation: Vec::new(),
            groups: if experiment == Experiment::Regroup { vec![2, 2, 2] } else { Vec::new() },
            delta_subset: Vec::new(),
            tol: SolverConfig::default().tol,
            max_iters: SolverConfig::default().max_iters,
            rank: 0,
            restarts: SeesawConfig::default().restarts,
            kmax: KappaConfig::default().kmax,
            assume_monotone: KappaConfig::default().assume_monotone,
            method: "enumerated".into(),
            samples: 200,
            symmetric_mode: KappaConfig::default().symmetric_mode.name().into(),
            noise: NoiseModel::ideal(),
            knob: "depolarizing_2q".into(),
            levels: vec![0.0],
            style: "linear_cascade".into(),
            sweep_n,
            degrees: vec![1, 2],
            output_dir: PathBuf::from("results"),
        }
    }

    pub fn family_kind(&self) -> FamilyKind {
        FamilyKind::parse(&self.family).expect("validated")
    }

    pub fn circuit_style(&self) -> CircuitStyle {
        CircuitStyle::parse(&self.style).expect("validated")
    }

    pub fn noise_knob(&self) -> NoiseKnob {
        NoiseKnob::parse(&self.knob).expect("validated")
    }

    pub fn kappa_config(&self) -> KappaConfig {
        KappaConfig {
            delta: DeltaConfig {
                solver: SolverConfig { tol: self.tol, max_iters: self.max_iters },
                seesaw: SeesawConfig { rank: (self.rank > 0).then_some(self.rank), restarts: self.restarts, seed: self.seed },
            },
            kmax: self.kmax,
            assume_monotone: self.assume_monotone,
            symmetric_mode: SymmetricMode::parse(&self.symmetric_mode).expect("validated"),
        }
    }

    /// Every key with its resolved value, sorted.
    pub fn resolved(&self) -> BTreeMap<String, Json> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Json| {
            m.insert(k.to_owned(), v);
        };
        put("experiment", self.experiment.name().into());
        put("seed", self.seed.into());
        put("state.family", self.family.clone().into());
        put("state.n", self.n.into());
        put("state.permutation", self.permutation.clone().into());
        put("state.groups", self.groups.clone().into());
        put("delta.subset", self.delta_subset.clone().into());
        put("solver.tol", self.tol.into());
        put("solver.max_iters", self.max_iters.into());
        put("seesaw.rank", self.rank.into());
        put("seesaw.restarts", self.restarts.into());
        put("kappa.kmax", self.kmax.into());
        put("kappa.assume_monotone", self.assume_monotone.into());
        put("kappa.method", self.method.clone().into());
        put("kappa.samples", self.samples.into());
        put("kappa.symmetric_mode", self.symmetric_mode.clone().into());
        put("noise.depolarizing_1q", self.noise.depolarizing_1q.into());
        put("noise.depolarizing_2q", self.noise.depolarizing_2q.into());
        put("noise.amplitude_damping", self.noise.amplitude_damping.into());
        put("noise.dephasing", self.noise.dephasing.into());
        put("noise.readout_flip", self.noise.readout_flip.into());
        put("noise.knob", self.knob.clone().into());
        put("noise.levels", self.levels.clone().into());
        put("circuit.style", self.style.clone().into());
        put("sweep.n", self.sweep_n.clone().into());
        put("ldp.degrees", self.degrees.clone().into());
        put("output.dir", self.output_dir.display().to_string().into());
        m
    }
}

struct Reader<'a> {
    raw: &'a RawConfig,
    diags: Vec<Diagnostic>,
}

impl Reader<'_> {
    fn typed(&mut self, key: &str) -> Option<&Value> {
        let v = self.raw.get(key)?;
        let kind = kind_of(key)?;
        let ok = match (kind, v) {
            (Kind::Int, Value::Integer(i)) => *i >= 0,
            (Kind::Float, Value::Float(_) | Value::Integer(_)) => true,
            (Kind::Bool, Value::Boolean(_)) => true,
            (Kind::Str, Value::String(_)) => true,
            (Kind::IntList, Value::Array(a)) => a.iter().all(|x| matches!(x, Value::Integer(i) if *i >= 0)),
            (Kind::FloatList, Value::Array(a)) => a.iter().all(|x| matches!(x, Value::Float(_) | Value::Integer(_))),
            _ => false,
        };
        if !ok {
            self.diags.push(diag(key, DiagnosticKind::Type, format!("expected {}, got {v}", kind.describe())));
            return None;
        }
        Some(v)
    }

    fn int(&mut self, key: &str, into: &mut usize) {
        if let Some(Value::Integer(i)) = self.typed(key) {
            *into = *i as usize;
        }
    }

    fn u64(&mut self, key: &str, into: &mut u64) {
        if let Some(Value::Integer(i)) = self.typed(key) {
            *into = *i as u64;
        }
    }

    fn float(&mut self, key: &str, into: &mut f64) {
        match self.typed(key) {
            Some(Value::Float(x)) => *into = *x,
            Some(Value::Integer(i)) => *into = *i as f64,
            _ => {}
        }
    }

    fn boolean(&mut self, key: &str, into: &mut bool) {
        if let Some(Value::Boolean(b)) = self.typed(key) {
            *into = *b;
        }
    }

    fn string(&mut self, key: &str, into: &mut String) {
        if let Some(Value::String(s)) = self.typed(key) {
            into.clone_from(s);
        }
    }

    fn ints(&mut self, key: &str, into: &mut Vec<usize>) {
        if let Some(Value::Array(a)) = self.typed(key) {
            *into = a.iter().filter_map(Value::as_integer).map(|i| i as usize).collect();
        }
    }

    fn floats(&mut self, key: &str, into: &mut Vec<f64>) {
        if let Some(Value::Array(a)) = self.typed(key) {
            *into = a.iter().filter_map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64))).collect();
        }
    }
}

/// Resolves `raw` against the defaults for `experiment`. The config is only
/// usable when the returned diagnostics are empty.
pub fn resolve(experiment: Experiment, raw: &RawConfig) -> (ExperimentConfig, Vec<Diagnostic>) {
    let mut cfg = ExperimentConfig::defaults(experiment);
    let mut r = Reader { raw, diags: raw.parse_errors.clone() };
    for key in raw.entries.keys() {
        if kind_of(key).is_none() {
            r.diags.push(diag(key, DiagnosticKind::UnknownKey, "not a recognised configuration key"));
        }
    }
    let mut named = String::new();
    r.string("experiment", &mut named);
    if !named.is_empty() && named != experiment.name() {
        r.diags.push(diag(
            "experiment",
            DiagnosticKind::Range,
            format!("file is for '{named}' but '{}' was requested", experiment.name()),
        ));
    }
    r.u64("seed", &mut cfg.seed);
    r.string("state.family", &mut cfg.family);
    r.int("state.n", &mut cfg.n);
    r.ints("state.permutation", &mut cfg.permutation);
    r.ints("state.groups", &mut cfg.groups);
    r.ints("delta.subset", &mut cfg.delta_subset);
    r.float("solver.tol", &mut cfg.tol);
    r.int("solver.max_iters", &mut cfg.max_iters);
    r.int("seesaw.rank", &mut cfg.rank);
    r.int("seesaw.restarts", &mut cfg.restarts);
    r.int("kappa.kmax", &mut cfg.kmax);
    r.boolean("kappa.assume_monotone", &mut cfg.assume_monotone);
    r.string("kappa.method", &mut cfg.method);
    r.int("kappa.samples", &mut cfg.samples);
    r.string("kappa.symmetric_mode", &mut cfg.symmetric_mode);
    r.float("noise.depolarizing_1q", &mut cfg.noise.depolarizing_1q);
    r.float("noise.depolarizing_2q", &mut cfg.noise.depolarizing_2q);
    r.float("noise.amplitude_damping", &mut cfg.noise.amplitude_damping);
    r.float("noise.dephasing", &mut cfg.noise.dephasing);
    r.float("noise.readout_flip", &mut cfg.noise.readout_flip);
    r.string("noise.knob", &mut cfg.knob);
    r.floats("noise.levels", &mut cfg.levels);
    r.string("circuit.style", &mut cfg.style);
    r.ints("sweep.n", &mut cfg.sweep_n);
    r.ints("ldp.degrees", &mut cfg.degrees);
    let mut dir = cfg.output_dir.display().to_string();
    r.string("output.dir", &mut dir);
    cfg.output_dir = PathBuf::from(dir);
    let mut diags = r.diags;
    // Type errors on a key make range checks on its default meaningless.
    let typed_bad: Vec<String> = diags.iter().map(|d| d.path.clone()).collect();
    let mut checks = Vec::new();
    check(&cfg, &mut checks);
    diags.extend(checks.into_iter().filter(|d| !typed_bad.contains(&d.path)));
    (cfg, diags)
}

/// Diagnostics only, no compute.
pub fn validate(experiment: Experiment, raw: &RawConfig) -> Vec<Diagnostic> {
    resolve(experiment, raw).1
}

fn cap(out: &mut Vec<Diagnostic>, path: &str, value: usize, max: usize, what: &str) {
    if value > max {
        out.push(diag(path, DiagnosticKind::Cap, format!("{value} exceeds the {what} cap of {max}")));
    }
}

fn range(out: &mut Vec<Diagnostic>, path: &str, msg: impl Into<String>) {
    out.push(diag(path, DiagnosticKind::Range, msg));
}

fn check(cfg: &ExperimentConfig, out: &mut Vec<Diagnostic>) {
    use Experiment::*;
    let exp = cfg.experiment;

    let family = FamilyKind::parse(&cfg.family);
    if family.is_err() {
        range(out, "state.family", format!("unknown family '{}' (w, dicke:k, catpairs, zero, product:seed)", cfg.family));
    }
    let uses_state = matches!(exp, Delta | Kappa | Regroup);
    if uses_state {
        if cfg.n == 0 {
            range(out, "state.n", "must be at least 1");
        }
        cap(out, "state.n", cfg.n, MAX_DENSE_QUBITS, "dense state");
        match family {
            Ok(FamilyKind::Dicke(k)) if k > cfg.n => range(out, "state.family", format!("dicke:{k} needs k <= state.n")),
            Ok(FamilyKind::CatPairs) if cfg.n % 2 != 0 => range(out, "state.n", "catpairs needs an even qubit count"),
            _ => {}
        }
        if !cfg.permutation.is_empty() {
            let mut sorted = cfg.permutation.clone();
            sorted.sort_unstable();
            if sorted != (1..=cfg.n).collect::<Vec<_>>() {
                range(out, "state.permutation", format!("must be a permutation of 1..={}", cfg.n));
            }
        }
    }
    match exp {
        Delta => {
            let size = if cfg.delta_subset.is_empty() { cfg.n } else { cfg.delta_subset.len() };
            if size < 2 {
                range(out, "delta.subset", "needs at least 2 qubits");
            }
            if cfg.delta_subset.iter().any(|&i| i == 0 || i > cfg.n) {
                range(out, "delta.subset", format!("indices must lie in 1..={}", cfg.n));
            }
            cap(out, if cfg.delta_subset.is_empty() { "state.n" } else { "delta.subset" }, size, MAX_SOLVER_QUBITS, "solver");
        }
        Kappa => match cfg.method.as_str() {
            "enumerated" => cap(out, "state.n", cfg.n, kappa::MAX_ENUMERATED_QUBITS, "enumeration"),
            "sampled" => {
                cap(out, "state.n", cfg.n, kappa::MAX_SAMPLED_QUBITS, "sampling");
                if cfg.samples < kappa::MIN_SAMPLES {
                    range(out, "kappa.samples", format!("must be at least {}", kappa::MIN_SAMPLES));
                }
            }
            other => range(out, "kappa.method", format!("unknown method '{other}' (enumerated, sampled)")),
        },
        KappaW => {
            if cfg.sweep_n.is_empty() {
                range(out, "sweep.n", "needs at least one size");
            }
            for &n in &cfg.sweep_n {
                if n < 2 {
                    range(out, "sweep.n", "every size must be at least 2");
                }
                cap(out, "sweep.n", n, 62, "symmetric W");
            }
        }
        Regroup => {
            if cfg.groups.is_empty() {
                range(out, "state.groups", "needs the group sizes");
            } else {
                if cfg.groups.iter().sum::<usize>() != cfg.n {
                    range(out, "state.groups", format!("sizes must sum to state.n = {}", cfg.n));
                }
                if cfg.groups.contains(&0) {
                    range(out, "state.groups", "group sizes must be positive");
                }
                if cfg.groups.len() < 2 {
                    range(out, "state.groups", "needs at least 2 groups");
                }
                for &g in &cfg.groups {
                    if g < 64 {
                        cap(out, "state.groups", 1 << g, kappa::MAX_GROUP_DIM, "group dimension");
                    } else {
                        cap(out, "state.groups", usize::MAX, kappa::MAX_GROUP_DIM, "group dimension");
                    }
                }
                cap(out, "state.groups", cfg.groups.len(), kappa::MAX_ENUMERATED_QUBITS, "enumeration");
            }
        }
        NoisyKappa => {
            if cfg.n < 2 {
                range(out, "state.n", "must be at least 2");
            }
            cap(out, "state.n", cfg.n, kappa::MAX_ENUMERATED_QUBITS, "enumeration");
        }
        FidelitySweep => {
            if cfg.sweep_n.is_empty() {
                range(out, "sweep.n", "needs at least one size");
            }
            for &n in &cfg.sweep_n {
                if n == 0 {
                    range(out, "sweep.n", "every size must be at least 1");
                }
                cap(out, "sweep.n", n, MAX_SIM_QUBITS, "simulation");
            }
        }
        Ldp => {
            if cfg.n == 0 {
                range(out, "state.n", "must be at least 1");
            }
            cap(out, "state.n", cfg.n, MAX_SIM_QUBITS, "simulation");
            for &d in &cfg.degrees {
                if d > cfg.n {
                    range(out, "ldp.degrees", format!("degree {d} exceeds state.n = {}", cfg.n));
                }
            }
        }
    }

    if !(cfg.tol > 0.0 && cfg.tol < 1.0) {
        range(out, "solver.tol", "must lie in (0, 1)");
    }
    if cfg.max_iters == 0 {
        range(out, "solver.max_iters", "must be positive");
    }
    if cfg.restarts == 0 {
        range(out, "seesaw.restarts", "must be positive");
    }
    if !(2..=kappa::MAX_KMAX).contains(&cfg.kmax) {
        range(out, "kappa.kmax", format!("must lie in 2..={}", kappa::MAX_KMAX));
    }
    if SymmetricMode::parse(&cfg.symmetric_mode).is_err() {
        range(out, "kappa.symmetric_mode", "expected 'compressed' or 'dense'");
    }
    if CircuitStyle::parse(&cfg.style).is_err() {
        range(out, "circuit.style", "expected 'linear_cascade' or 'log_depth_attempt'");
    }
    let n = &cfg.noise;
    for (key, v, hi) in [
        ("noise.depolarizing_1q", n.depolarizing_1q, 1.0),
        ("noise.depolarizing_2q", n.depolarizing_2q, 1.0),
        ("noise.amplitude_damping", n.amplitude_damping, 1.0),
        ("noise.dephasing", n.dephasing, 1.0),
        ("noise.readout_flip", n.readout_flip, 0.5),
    ] {
        if !(0.0..=hi).contains(&v) {
            range(out, key, format!("{v} is outside [0, {hi}]"));
        }
    }
    match NoiseKnob::parse(&cfg.knob) {
        None => range(out, "noise.knob", format!("unknown knob '{}'", cfg.knob)),
        Some(knob) => {
            if matches!(exp, NoisyKappa | Ldp) {
                if cfg.levels.is_empty() {
                    range(out, "noise.levels", "needs at least one level");
                }
                let hi = if knob == NoiseKnob::ReadoutFlip { 0.5 } else { 1.0 };
                for &p in &cfg.levels {
                    if !(0.0..=hi).contains(&p) {
                        range(out, "noise.levels", format!("{p} is outside [0, {hi}] for {}", knob.name()));
                    }
                }
            }
        }
    }
}
