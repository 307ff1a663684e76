//! Experiment configuration: a flat `key = value` file whose keys override
//! the preset named by `experiment_id`.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;
use uos_transfer::filter::EmptyPolicy;
use uos_transfer::synthesis::{system2, system3, InputGen, MismatchSpec, SystemMatrices};

use crate::presets;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    Preset(u8),
    Custom,
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentId::Preset(n) => write!(f, "{n}"),
            ExperimentId::Custom => f.write_str("custom"),
        }
    }
}

impl ExperimentId {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "custom" => Ok(ExperimentId::Custom),
            other => match other.parse::<u8>() {
                Ok(n @ 1..=5) => Ok(ExperimentId::Preset(n)),
                _ => Err(format!("experiment_id must be 1..5 or \"custom\", got {other:?}")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    /// A built-in system, with its transition matrix multiplied by `factor`.
    Named { name: String, factor: f64 },
    Inline(SystemMatrices),
}

impl SystemSpec {
    pub fn matrices(&self) -> SystemMatrices {
        match self {
            SystemSpec::Named { name, factor } => {
                let base = if name == "system2" { system2() } else { system3() };
                if *factor == 1.0 {
                    base
                } else {
                    base.scaled(*factor)
                }
            }
            SystemSpec::Inline(m) => m.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SystemSpec::Named { name, factor } if *factor == 1.0 => name.clone(),
            SystemSpec::Named { name, factor } => format!("{factor}*{name}"),
            SystemSpec::Inline(_) => "inline".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisGraph {
    V,
    U,
}

/// A validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment_id: ExperimentId,
    pub system: SystemSpec,
    /// One run of the whole grid per entry.
    pub n_sources: Vec<usize>,
    pub ratios: Vec<f64>,
    pub r: f64,
    pub rho: f64,
    pub horizon: usize,
    pub t_lo: usize,
    pub mc_runs: usize,
    pub mismatch: MismatchSpec,
    pub synthesis_graph: SynthesisGraph,
    pub alpha: f64,
    pub prior_halfwidth: f64,
    pub input_gen: InputGen,
    pub empty_policy: EmptyPolicy,
    pub master_seed: u64,
    /// `None` means the zero vector.
    pub initial_state: Option<Vec<f64>>,
}

/// File representation. Every key is optional; present keys override the
/// preset.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment_id: Option<toml::Value>,
    system: Option<toml::Value>,
    n_sources: Option<toml::Value>,
    ratios: Option<Vec<f64>>,
    r: Option<f64>,
    rho: Option<f64>,
    horizon: Option<i64>,
    t_lo: Option<i64>,
    mc_runs: Option<i64>,
    mismatch: Option<String>,
    synthesis_graph: Option<String>,
    alpha: Option<f64>,
    prior_halfwidth: Option<f64>,
    input_gen: Option<String>,
    empty_policy: Option<String>,
    master_seed: Option<i64>,
    initial_state: Option<Vec<f64>>,
}

/// Splits `name(a, b)` into the name and numeric arguments; a bare `name`
/// has no arguments.
fn parse_call(s: &str) -> Result<(String, Vec<f64>), String> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Ok((s.to_string(), Vec::new()));
    };
    let inner = s[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| format!("missing ')' in {s:?}"))?;
    let args = inner
        .split(',')
        .map(|a| a.trim().parse::<f64>().map_err(|_| format!("bad number {a:?} in {s:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((s[..open].trim().to_string(), args))
}

pub fn parse_mismatch(s: &str) -> Result<MismatchSpec, String> {
    let (name, args) = parse_call(s)?;
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("{name} takes {n} argument(s), got {}", args.len()))
        }
    };
    match name.as_str() {
        "none" => want(0).map(|_| MismatchSpec::None),
        "rotation" => want(1).map(|_| MismatchSpec::Rotation(args[0])),
        "dilation" => want(1).map(|_| MismatchSpec::Dilation(args[0])),
        "state_noise" => want(1).map(|_| MismatchSpec::StateNoise(args[0])),
        "radial_shift" => {
            want(2)?;
            if args[0] < 0.0 || args[0].fract() != 0.0 {
                return Err(format!("radial_shift index must be a non-negative integer, got {}", args[0]));
            }
            Ok(MismatchSpec::RadialShift {
                index: args[0] as usize,
                factor: args[1],
            })
        }
        _ => Err(format!("unknown mismatch {name:?}")),
    }
}

pub fn format_mismatch(m: &MismatchSpec) -> String {
    match m {
        MismatchSpec::None => "none".into(),
        MismatchSpec::Rotation(p) => format!("rotation({p})"),
        MismatchSpec::Dilation(s) => format!("dilation({s})"),
        MismatchSpec::StateNoise(a) => format!("state_noise({a})"),
        MismatchSpec::RadialShift { index, factor } => format!("radial_shift({index}, {factor})"),
    }
}

pub fn parse_input_gen(s: &str) -> Result<InputGen, String> {
    let (name, args) = parse_call(s)?;
    match (name.as_str(), args.as_slice()) {
        ("zero", []) => Ok(InputGen::Zero),
        ("step", [a]) => Ok(InputGen::Step(*a)),
        ("uniform", [lo, hi, seed]) if *seed >= 0.0 && seed.fract() == 0.0 => Ok(InputGen::UniformRandom {
            lo: *lo,
            hi: *hi,
            seed: *seed as u64,
        }),
        _ => Err(format!(
            "input_gen must be zero, step(a) or uniform(lo, hi, seed), got {s:?}"
        )),
    }
}

pub fn format_input_gen(g: &InputGen) -> String {
    match g {
        InputGen::Zero => "zero".into(),
        InputGen::Step(a) => format!("step({a})"),
        InputGen::UniformRandom { lo, hi, seed } => format!("uniform({lo}, {hi}, {seed})"),
    }
}

fn parse_policy(s: &str) -> Result<EmptyPolicy, String> {
    match s.trim() {
        "skip" => Ok(EmptyPolicy::Skip),
        "discard_run" => Ok(EmptyPolicy::DiscardRun),
        other => Err(format!("empty_policy must be skip or discard_run, got {other:?}")),
    }
}

pub fn format_policy(p: EmptyPolicy) -> &'static str {
    match p {
        EmptyPolicy::Skip => "skip",
        EmptyPolicy::DiscardRun => "discard_run",
    }
}

fn parse_matrix(v: &toml::Value, key: &str) -> Result<DMatrix<f64>, String> {
    let rows = v
        .as_array()
        .ok_or_else(|| format!("system.{key} must be an array of rows"))?;
    let mut data = Vec::new();
    let mut ncols = None;
    for row in rows {
        let row = row
            .as_array()
            .ok_or_else(|| format!("system.{key} rows must be arrays"))?;
        if *ncols.get_or_insert(row.len()) != row.len() {
            return Err(format!("system.{key} rows differ in length"));
        }
        for x in row {
            data.push(
                x.as_float()
                    .or_else(|| x.as_integer().map(|i| i as f64))
                    .ok_or_else(|| format!("system.{key} entries must be numbers"))?,
            );
        }
    }
    let ncols = ncols.unwrap_or(0);
    if rows.is_empty() || ncols == 0 {
        return Err(format!("system.{key} is empty"));
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

fn parse_system(v: &toml::Value) -> Result<SystemSpec, String> {
    match v {
        toml::Value::String(s) => {
            let (factor, name) = match s.split_once('*') {
                Some((f, n)) => (
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad factor in system {s:?}"))?,
                    n.trim(),
                ),
                None => (1.0, s.trim()),
            };
            if name != "system2" && name != "system3" {
                return Err(format!("unknown system {name:?} (system2, system3 or an inline table)"));
            }
            if !(factor.is_finite() && factor > 0.0) {
                return Err(format!("system factor must be positive, got {factor}"));
            }
            Ok(SystemSpec::Named {
                name: name.to_string(),
                factor,
            })
        }
        toml::Value::Table(t) => {
            if let Some(k) = t.keys().find(|k| !["a", "b", "c"].contains(&k.as_str())) {
                return Err(format!("unknown key system.{k}"));
            }
            let get = |k: &str| t.get(k).ok_or_else(|| format!("system.{k} missing"));
            let a = parse_matrix(get("a")?, "a")?;
            let b = parse_matrix(get("b")?, "b")?;
            let c = parse_matrix(get("c")?, "c")?;
            if !a.is_square() || b.nrows() != a.nrows() || c.ncols() != a.nrows() {
                return Err(format!(
                    "inline system shapes inconsistent: a {}x{}, b {}x{}, c {}x{}",
                    a.nrows(),
                    a.ncols(),
                    b.nrows(),
                    b.ncols(),
                    c.nrows(),
                    c.ncols()
                ));
            }
            Ok(SystemSpec::Inline(SystemMatrices { a, b, c }))
        }
        _ => Err("system must be a name or an inline table {a, b, c}".into()),
    }
}

fn parse_n_sources(v: &toml::Value) -> Result<Vec<usize>, String> {
    let one = |x: &toml::Value| match x.as_integer() {
        Some(i) if i >= 0 => Ok(i as usize),
        _ => Err(format!("n_sources entries must be integers >= 0, got {x}")),
    };
    match v {
        toml::Value::Array(a) => a.iter().map(one).collect(),
        other => one(other).map(|n| vec![n]),
    }
}

fn parse_experiment_id(v: &toml::Value) -> Result<ExperimentId, String> {
    match v {
        toml::Value::Integer(i) => ExperimentId::parse(&i.to_string()),
        toml::Value::String(s) => ExperimentId::parse(s),
        other => Err(format!("experiment_id must be 1..5 or \"custom\", got {other}")),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, None)
    }

    /// Parses `text`, overlaying it on the preset given by its
    /// `experiment_id`, or by `default_id` when the file has none.
    pub fn from_toml_str(text: &str, default_id: Option<ExperimentId>) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut errors = Vec::new();
        let id = match raw.experiment_id.as_ref().map(parse_experiment_id) {
            Some(Ok(id)) => id,
            Some(Err(e)) => {
                errors.push(e);
                ExperimentId::Custom
            }
            None => default_id.unwrap_or(ExperimentId::Custom),
        };
        let mut cfg = presets::preset(id);
        raw.apply(&mut cfg, &mut errors);
        cfg.collect_violations(&mut errors);
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        self.collect_violations(&mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    fn collect_violations(&self, errors: &mut Vec<String>) {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.r) {
            errors.push(format!("r must be positive, got {}", self.r));
        }
        if !positive(self.rho) {
            errors.push(format!("rho must be positive, got {}", self.rho));
        }
        if self.ratios.is_empty() {
            errors.push("ratios must not be empty".into());
        }
        if let Some(bad) = self.ratios.iter().find(|&&x| !positive(x)) {
            errors.push(format!("ratios must be positive, got {bad}"));
        }
        if self.n_sources.is_empty() {
            errors.push("n_sources must not be empty".into());
        }
        if self.horizon < 1 {
            errors.push("horizon must be at least 1".into());
        }
        if self.t_lo < 1 || self.t_lo > self.horizon {
            errors.push(format!(
                "t_lo must satisfy 1 <= t_lo <= horizon, got t_lo = {} with horizon = {}",
                self.t_lo, self.horizon
            ));
        }
        if self.mc_runs < 1 {
            errors.push("mc_runs must be at least 1".into());
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            errors.push(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !positive(self.prior_halfwidth) {
            errors.push(format!("prior_halfwidth must be positive, got {}", self.prior_halfwidth));
        }
        match self.mismatch {
            MismatchSpec::Rotation(p) if !p.is_finite() => errors.push("rotation angle must be finite".into()),
            MismatchSpec::Dilation(s) if !positive(s) => {
                errors.push(format!("dilation factor must be positive, got {s}"))
            }
            MismatchSpec::RadialShift { factor, .. } if !positive(factor) => {
                errors.push(format!("radial_shift factor must be positive, got {factor}"))
            }
            MismatchSpec::StateNoise(a) => {
                if self.synthesis_graph != SynthesisGraph::U {
                    errors.push("state_noise mismatch requires synthesis_graph = \"U\"".into());
                }
                if a != self.alpha {
                    errors.push(format!("state_noise({a}) disagrees with alpha = {}", self.alpha));
                }
            }
            _ => {}
        }
        if self.synthesis_graph == SynthesisGraph::V && self.alpha != 0.0 {
            errors.push("alpha must be 0 for synthesis_graph = \"V\"".into());
        }
        if let InputGen::UniformRandom { lo, hi, .. } = self.input_gen {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                errors.push(format!("uniform input bounds invalid: [{lo}, {hi}]"));
            }
        }
        let n = self.system.matrices().state_dim();
        if let Some(x) = &self.initial_state {
            if x.len() != n {
                errors.push(format!("initial_state has length {}, system has {n} states", x.len()));
            }
        }
        if let Err(e) = uos_transfer::synthesis::apply_mismatch(&self.system.matrices().a, &self.mismatch) {
            errors.push(format!("mismatch cannot be applied: {e}"));
        }
    }

    /// Desk-scale reduction: MC runs divided by `k` (rounded up), horizon
    /// divided by `k` but kept at least 50 (and at most the original), and
    /// `t_lo` moved proportionally.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        if k <= 1.0 {
            return out;
        }
        out.mc_runs = ((self.mc_runs as f64) / k).ceil().max(1.0) as usize;
        let horizon = ((self.horizon as f64 / k).round() as usize).max(50).min(self.horizon);
        out.t_lo = ((self.t_lo as f64 * horizon as f64 / self.horizon as f64).round() as usize)
            .clamp(1, horizon);
        out.horizon = horizon;
        out
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.initial_state
            .clone()
            .unwrap_or_else(|| vec![0.0; self.system.matrices().state_dim()])
    }

    /// Canonical `key = value` text that parses back to this configuration.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        let id = match self.experiment_id {
            ExperimentId::Preset(n) => n.to_string(),
            ExperimentId::Custom => "\"custom\"".into(),
        };
        let list = |v: &[f64]| {
            let items: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
            format!("[{}]", items.join(", "))
        };
        let system = match &self.system {
            SystemSpec::Inline(m) => {
                let mat = |m: &DMatrix<f64>| {
                    let rows: Vec<String> = m
                        .row_iter()
                        .map(|r| list(&r.iter().copied().collect::<Vec<_>>()))
                        .collect();
                    format!("[{}]", rows.join(", "))
                };
                format!("{{ a = {}, b = {}, c = {} }}", mat(&m.a), mat(&m.b), mat(&m.c))
            }
            named => format!("{:?}", named.label()),
        };
        let n_sources: Vec<String> = self.n_sources.iter().map(usize::to_string).collect();
        let graph = match self.synthesis_graph {
            SynthesisGraph::V => "V",
            SynthesisGraph::U => "U",
        };
        let lines = [
            format!("experiment_id = {id}"),
            format!("system = {system}"),
            format!("n_sources = [{}]", n_sources.join(", ")),
            format!("ratios = {}", list(&self.ratios)),
            format!("r = {:e}", self.r),
            format!("rho = {:e}", self.rho),
            format!("horizon = {}", self.horizon),
            format!("t_lo = {}", self.t_lo),
            format!("mc_runs = {}", self.mc_runs),
            format!("mismatch = {:?}", format_mismatch(&self.mismatch)),
            format!("synthesis_graph = {graph:?}"),
            format!("alpha = {:e}", self.alpha),
            format!("prior_halfwidth = {:e}", self.prior_halfwidth),
            format!("input_gen = {:?}", format_input_gen(&self.input_gen)),
            format!("empty_policy = {:?}", format_policy(self.empty_policy)),
            format!("master_seed = {}", self.master_seed),
        ];
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        if let Some(x) = &self.initial_state {
            out.push_str(&format!("initial_state = {}\n", list(x)));
        }
        out
    }
}

impl RawConfig {
    fn apply(self, cfg: &mut ExperimentConfig, errors: &mut Vec<String>) {
        fn set<T, U>(slot: &mut T, v: Option<U>, conv: impl FnOnce(U) -> Result<T, String>, errors: &mut Vec<String>) {
            if let Some(v) = v {
                match conv(v) {
                    Ok(x) => *slot = x,
                    Err(e) => errors.push(e),
                }
            }
        }
        let count = |key: &'static str| {
            move |i: i64| usize::try_from(i).map_err(|_| format!("{key} must be non-negative, got {i}"))
        };
        if let Some(id) = self.experiment_id.as_ref().and_then(|v| parse_experiment_id(v).ok()) {
            cfg.experiment_id = id;
        }
        set(&mut cfg.system, self.system, |v| parse_system(&v), errors);
        set(&mut cfg.n_sources, self.n_sources, |v| parse_n_sources(&v), errors);
        set(&mut cfg.ratios, self.ratios, Ok, errors);
        set(&mut cfg.r, self.r, Ok, errors);
        set(&mut cfg.rho, self.rho, Ok, errors);
        set(&mut cfg.horizon, self.horizon, count("horizon"), errors);
        set(&mut cfg.t_lo, self.t_lo, count("t_lo"), errors);
        set(&mut cfg.mc_runs, self.mc_runs, count("mc_runs"), errors);
        set(&mut cfg.mismatch, self.mismatch, |s| parse_mismatch(&s), errors);
        set(
            &mut cfg.synthesis_graph,
            self.synthesis_graph,
            |s| match s.trim() {
                "V" | "v" => Ok(SynthesisGraph::V),
                "U" | "u" => Ok(SynthesisGraph::U),
                other => Err(format!("synthesis_graph must be V or U, got {other:?}")),
            },
            errors,
        );
        set(&mut cfg.alpha, self.alpha, Ok, errors);
        set(&mut cfg.prior_halfwidth, self.prior_halfwidth, Ok, errors);
        set(&mut cfg.input_gen, self.input_gen, |s| parse_input_gen(&s), errors);
        set(&mut cfg.empty_policy, self.empty_policy, |s| parse_policy(&s), errors);
        set(
            &mut cfg.master_seed,
            self.master_seed,
            |i| u64::try_from(i).map_err(|_| format!("master_seed must be non-negative, got {i}")),
            errors,
        );
        if let Some(x) = self.initial_state {
            cfg.initial_state = Some(x);
        }
    }
}
