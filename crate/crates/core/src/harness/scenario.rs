//! Scenario files: a TOML document with one table per concern.
//!
//! Unknown keys are rejected. Relative paths are resolved against the
//! directory of the scenario file. Every key is listed below with its default;
//! keys without a default are required when the selected kind uses them.
//!
//! ```toml
//! [run]
//! name = "example"             # default: file stem
//! algorithm = "dda"            # oda | dda | ddda | doda
//! horizon = 200                # optional when a trace or generator fixes the length
//! seed = 0                     # default 0
//! bound_checks = ["delayed_da", "decreasing"]
//!
//! [geometry]
//! kind = "ball"                # ball | box | simplex | free
//! dim = 2                      # not used by box
//! radius = 1.0                 # ball, default 1
//! lower = [-1.0, -1.0]         # box
//! upper = [1.0, 1.0]           # box
//!
//! [losses]
//! kind = "random_linear"       # random_linear | quadratic | drifting_quadratic | trace
//!                              # | lb_periods | lb_zero_one | repeat
//! gbound = 1.0                 # random_linear: dual-norm radius (default 1);
//!                              # other kinds: declared bound on subgradient norms
//! scale = 1.0                  # quadratic kinds, default 1
//! center_radius = 1.0          # quadratic kinds, default 1
//! drift = 0.05                 # drifting_quadratic: step of the center random walk
//! path = "losses.txt"          # trace: rows `t offset g_1 … g_d`
//! m = 2                        # lb_periods, lb_zero_one
//! ell = 3                      # lb_periods, lb_zero_one
//! tau = 1                      # lb_periods, lb_zero_one, repeat
//! base_len = 64                # repeat: length of the random ±1 base
//!
//! [delays]
//! kind = "none"                # none | constant | geometric | trace
//! tau = 3                      # constant
//! p = 0.5                      # geometric, success probability in (0, 1]
//! cap = 10                     # geometric, optional
//! path = "arrivals.txt"        # trace: rows `origin producer consumer arrival|inf`
//! latency = "links.txt"        # optional: rows `producer consumer delay`
//! coordinator = 0              # optional: relay every message through this agent
//! lose = [5]                   # stamps whose feedback never arrives
//!
//! [network]
//! activation = "single"        # single | cyclic | random | open | trace
//! agents = 4                   # cyclic, random, open (open draws 1..=agents per time)
//! path = "active.txt"          # trace: rows `t agent`
//! reference = 0                # position of the reference agent among the active ones
//!
//! [rate]
//! policy = "decreasing"        # oda, dda: constant | decreasing | adadelay_o | adadelay_o_plus
//!                              #   | card_decreasing | adadelay_dist | tuned (default decreasing)
//!                              # ddda: constant | network_fixed | network_card (default network_fixed)
//!                              # doda: pair | relaxed | adaptive | variation (required)
//! eta = 0.1                    # constant, pair, relaxed
//! eta_tilde = 0.3              # pair
//! r = 1.0                      # default: sqrt(h(p)), or |p − x1| for doda; 1 when zero
//! g = 1.0                      # default: the declared loss bound
//! tau = 3                      # default: the largest delay of the timeline
//! l = 1.0                      # adaptive: smoothness bound
//! vbar = 34.0                  # variation: default the τ+1 variation of the losses
//! regime = "unavail"           # tuned: unavail | cumulative | lag
//! usage = "all"                # all | defer
//! strict = false               # pair: reject eta_tilde < (2τ+1)eta
//!
//! [optimistic]                 # doda only
//! guess = "zero"               # zero | last_uniform | field_global | field_local
//! tau = 1                      # last_uniform, default rate.tau or the constant delay
//! x_start = [0.0]              # default the origin
//!
//! [comparator]
//! kind = "hindsight"           # hindsight | point
//! point = [0.0, 0.0]           # point
//! radius = 1.0                 # hindsight on a free geometry: search ball around x1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::BoundId;
use crate::dda::Usage;
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::schedule::{DelayModel, LatencyTable, Relay};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub name: Option<String>,
    pub algorithm: String,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub bound_checks: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub kind: String,
    pub dim: Option<usize>,
    pub radius: Option<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub kind: String,
    pub gbound: Option<f64>,
    pub scale: Option<f64>,
    pub center_radius: Option<f64>,
    pub drift: Option<f64>,
    pub path: Option<String>,
    pub m: Option<usize>,
    pub ell: Option<usize>,
    pub tau: Option<usize>,
    pub base_len: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySection {
    pub kind: String,
    pub tau: Option<usize>,
    pub p: Option<f64>,
    pub cap: Option<usize>,
    pub path: Option<String>,
    pub latency: Option<String>,
    pub coordinator: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lose: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub activation: String,
    pub agents: Option<usize>,
    pub path: Option<String>,
    pub reference: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub policy: Option<String>,
    pub eta: Option<f64>,
    pub eta_tilde: Option<f64>,
    pub r: Option<f64>,
    pub g: Option<f64>,
    pub tau: Option<usize>,
    pub l: Option<f64>,
    pub vbar: Option<f64>,
    pub regime: Option<String>,
    pub usage: Option<String>,
    pub strict: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimisticSection {
    pub guess: Option<String>,
    pub tau: Option<usize>,
    pub x_start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparatorSection {
    pub kind: String,
    pub point: Option<Vec<f64>>,
    pub radius: Option<f64>,
}

/// The scenario exactly as written in the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub run: RunSection,
    pub geometry: GeometrySection,
    pub losses: LossSection,
    pub delays: Option<DelaySection>,
    pub network: Option<NetworkSection>,
    pub rate: Option<RateSection>,
    pub optimistic: Option<OptimisticSection>,
    pub comparator: Option<ComparatorSection>,
}

impl ScenarioFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unserializable scenario: {e}\n"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Undelayed dual averaging.
    Oda,
    /// Delayed dual averaging, one active agent per time.
    Dda,
    /// Decentralized delayed dual averaging.
    Ddda,
    /// Delayed optimistic dual averaging.
    Doda,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Oda => "oda",
            Algorithm::Dda => "dda",
            Algorithm::Ddda => "ddda",
            Algorithm::Doda => "doda",
        }
    }

    /// Whether a bound id can be evaluated on runs of this algorithm.
    pub fn supports(self, id: BoundId) -> bool {
        use BoundId::*;
        match self {
            Algorithm::Oda | Algorithm::Dda => !matches!(
                id,
                CollectiveGap
                    | NetworkFixed
                    | NetworkCard
                    | NetworkFlattened
                    | Optimistic
                    | OptimisticField
                    | OptimisticVariation
                    | OptimisticAdaptive
            ),
            Algorithm::Ddda => matches!(id, CollectiveGap | NetworkFixed | NetworkCard | NetworkFlattened),
            Algorithm::Doda => {
                matches!(id, Optimistic | OptimisticField | OptimisticVariation | OptimisticAdaptive)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    RandomLinear { g: f64 },
    Quadratic { scale: f64, center_radius: f64, drift: Option<f64>, gbound: Option<f64> },
    Trace { path: PathBuf, gbound: Option<f64> },
    LbPeriods { m: usize, ell: usize, tau: usize },
    LbZeroOne { m: usize, ell: usize, tau: usize },
    Repeat { base_len: usize, tau: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelaySpec {
    Model(DelayModel),
    Trace(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActivationSpec {
    Single,
    Cyclic(usize),
    Random(usize),
    /// A random non-empty subset of `0..n` at every time.
    Open(usize),
    Trace(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Constant,
    Decreasing,
    AdadelayO,
    AdadelayOPlus,
    CardDecreasing,
    AdadelayDist,
    Tuned,
    NetworkFixed,
    NetworkCard,
    Pair,
    Relaxed,
    Adaptive,
    Variation,
}

const POLICIES: [(&str, PolicyKind); 13] = [
    ("constant", PolicyKind::Constant),
    ("decreasing", PolicyKind::Decreasing),
    ("adadelay_o", PolicyKind::AdadelayO),
    ("adadelay_o_plus", PolicyKind::AdadelayOPlus),
    ("card_decreasing", PolicyKind::CardDecreasing),
    ("adadelay_dist", PolicyKind::AdadelayDist),
    ("tuned", PolicyKind::Tuned),
    ("network_fixed", PolicyKind::NetworkFixed),
    ("network_card", PolicyKind::NetworkCard),
    ("pair", PolicyKind::Pair),
    ("relaxed", PolicyKind::Relaxed),
    ("adaptive", PolicyKind::Adaptive),
    ("variation", PolicyKind::Variation),
];

impl PolicyKind {
    fn allowed(self, alg: Algorithm) -> bool {
        use PolicyKind::*;
        match alg {
            Algorithm::Oda | Algorithm::Dda => {
                matches!(self, Constant | Decreasing | AdadelayO | AdadelayOPlus | CardDecreasing | AdadelayDist | Tuned)
            }
            Algorithm::Ddda => matches!(self, Constant | NetworkFixed | NetworkCard),
            Algorithm::Doda => matches!(self, Pair | Relaxed | Adaptive | Variation),
        }
    }

    pub fn name(self) -> &'static str {
        POLICIES.iter().find(|(_, k)| *k == self).map(|(n, _)| *n).unwrap_or("?")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSpec {
    pub policy: PolicyKind,
    pub eta: Option<f64>,
    pub eta_tilde: Option<f64>,
    pub r: Option<f64>,
    pub g: Option<f64>,
    pub tau: Option<usize>,
    pub l: Option<f64>,
    pub vbar: Option<f64>,
    /// The constant-rate regime for `tuned`.
    pub regime: Option<BoundId>,
    pub usage: Usage,
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessKind {
    Zero,
    LastUniform,
    FieldGlobal,
    FieldLocal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticSpec {
    pub guess: GuessKind,
    pub tau: Option<usize>,
    pub x_start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComparatorSpec {
    Hindsight { radius: Option<f64> },
    Point(Vec<f64>),
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub algorithm: Algorithm,
    pub horizon: Option<usize>,
    pub seed: u64,
    pub bound_checks: Vec<BoundId>,
    pub geometry: Geometry,
    pub losses: LossSpec,
    pub delays: DelaySpec,
    pub latency: Option<PathBuf>,
    pub lose: Vec<usize>,
    pub activation: ActivationSpec,
    pub reference: usize,
    pub rate: RateSpec,
    pub optimistic: Option<OptimisticSpec>,
    pub comparator: ComparatorSpec,
    /// The file form, kept for dumps.
    pub source: ScenarioFile,
}

impl Scenario {
    /// The same scenario with another seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.source.run.seed = Some(seed);
        self
    }

    /// Builds the delay model, reading the latency table if one is given.
    pub fn delay_model(&self) -> Result<Option<DelayModel>> {
        let DelaySpec::Model(model) = &self.delays else {
            return Ok(None);
        };
        let mut model = model.clone();
        if let Some(path) = &self.latency {
            model.latency = crate::schedule::parse_latency_table(&read(path)?)?;
        }
        Ok(Some(model))
    }
}

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = read(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_scenario_str(&text, &base, &path.display().to_string(), &stem)
}

/// Validates scenario text; `origin` labels diagnostics and `base` resolves paths.
pub fn parse_scenario_str(text: &str, base: &Path, origin: &str, default_name: &str) -> Result<Scenario> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_string(), message: e.to_string() })?;
    let diag = Diag { text: Some(text), origin: origin.to_string() };
    validate(file, base, &diag, default_name)
}

/// Validates a scenario built in code.
pub fn scenario_from_file(file: ScenarioFile, base: &Path) -> Result<Scenario> {
    let name = file.run.name.clone().unwrap_or_else(|| "scenario".into());
    validate(file, base, &Diag { text: None, origin: "<scenario>".into() }, &name)
}

struct Diag<'a> {
    text: Option<&'a str>,
    origin: String,
}

impl Diag<'_> {
    /// Line of `key` inside `[section]`, 1-based.
    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        let text = self.text?;
        let mut current = String::new();
        let mut header_line = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = h.trim().to_string();
                if current == section {
                    header_line = Some(n + 1);
                }
                continue;
            }
            if current == section {
                if let Some((k, _)) = line.split_once('=') {
                    if k.trim() == key {
                        return Some(n + 1);
                    }
                }
            }
        }
        header_line
    }

    fn err(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
        let at = self.line_of(section, key).map(|l| format!("line {l}: ")).unwrap_or_default();
        Error::Parse { path: self.origin.clone(), message: format!("{at}field `{section}.{key}`: {msg}") }
    }
}

fn choice<T: Copy>(
    d: &Diag,
    section: &str,
    key: &str,
    value: &str,
    options: &[(&str, T)],
) -> Result<T> {
    options.iter().find(|(n, _)| *n == value).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        d.err(section, key, format!("unknown value `{value}`; expected one of {}", names.join(", ")))
    })
}

fn need<T: Clone>(d: &Diag, section: &str, key: &str, v: &Option<T>, why: &str) -> Result<T> {
    v.clone().ok_or_else(|| d.err(section, key, format!("required {why}")))
}

fn positive(d: &Diag, section: &str, key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(d.err(section, key, format!("must be a positive finite number, got {v}")))
    }
}

fn existing(d: &Diag, section: &str, key: &str, base: &Path, rel: &str) -> Result<PathBuf> {
    let p = base.join(rel);
    if !p.is_file() {
        return Err(d.err(section, key, format!("file `{}` does not exist", p.display())));
    }
    Ok(p)
}

fn validate(file: ScenarioFile, base: &Path, d: &Diag, default_name: &str) -> Result<Scenario> {
    let algorithm = choice(
        d,
        "run",
        "algorithm",
        &file.run.algorithm,
        &[("oda", Algorithm::Oda), ("dda", Algorithm::Dda), ("ddda", Algorithm::Ddda), ("doda", Algorithm::Doda)],
    )?;
    if file.run.horizon == Some(0) {
        return Err(d.err("run", "horizon", "must be at least 1"));
    }
    let mut bound_checks = Vec::new();
    for name in &file.run.bound_checks {
        let id: BoundId = name.parse().map_err(|_| {
            let all: Vec<&str> = BoundId::ALL.iter().map(|b| b.name()).collect();
            d.err("run", "bound_checks", format!("unknown bound id `{name}`; expected one of {}", all.join(", ")))
        })?;
        if !algorithm.supports(id) {
            return Err(d.err("run", "bound_checks", format!("bound `{id}` does not apply to {}", algorithm.name())));
        }
        if !bound_checks.contains(&id) {
            bound_checks.push(id);
        }
    }

    let geometry = parse_geometry(&file.geometry, d)?;
    if algorithm == Algorithm::Doda && !geometry.is_free() {
        return Err(d.err(
            "geometry",
            "kind",
            format!("doda runs on an unconstrained space (kind = \"free\"), got `{}`", file.geometry.kind),
        ));
    }
    let losses = parse_losses(&file.losses, &geometry, base, d)?;

    let delay_section = file.delays.clone().unwrap_or_else(|| DelaySection { kind: "none".into(), ..Default::default() });
    let (delays, latency, lose) = parse_delays(&delay_section, base, d)?;
    if algorithm == Algorithm::Oda {
        let undelayed = matches!(&delays, DelaySpec::Model(m) if m.base == crate::schedule::BaseDelay::Constant(0))
            && latency.is_none()
            && lose.is_empty();
        if !undelayed {
            return Err(d.err("delays", "kind", "oda receives every feedback immediately; use kind = \"none\""));
        }
    }

    let (activation, reference) = match &file.network {
        None => (ActivationSpec::Single, 0),
        Some(n) => parse_network(n, base, d)?,
    };
    if matches!(delays, DelaySpec::Trace(_)) && !matches!(activation, ActivationSpec::Single) {
        return Err(d.err("network", "activation", "an arrival trace already fixes the active agents"));
    }
    if algorithm != Algorithm::Ddda && matches!(activation, ActivationSpec::Open(_)) {
        return Err(d.err("network", "activation", "several agents may be active at once; use algorithm = \"ddda\""));
    }

    let rate = parse_rate(file.rate.as_ref(), algorithm, &losses, d)?;

    let optimistic = match (&file.optimistic, algorithm) {
        (Some(_), a) if a != Algorithm::Doda => {
            return Err(d.err("optimistic", "guess", "the [optimistic] section only applies to doda"))
        }
        (o, Algorithm::Doda) => Some(parse_optimistic(o.as_ref(), &geometry, d)?),
        _ => None,
    };

    let comparator = match &file.comparator {
        None => ComparatorSpec::Hindsight { radius: None },
        Some(c) => {
            let kind = choice(d, "comparator", "kind", &c.kind, &[("hindsight", 0u8), ("point", 1)])?;
            if kind == 0 {
                let radius = c.radius.map(|r| positive(d, "comparator", "radius", r)).transpose()?;
                if c.point.is_some() {
                    return Err(d.err("comparator", "point", "only used with kind = \"point\""));
                }
                if radius.is_some() && !geometry.is_free() {
                    return Err(d.err("comparator", "radius", "only used on a free geometry"));
                }
                ComparatorSpec::Hindsight { radius }
            } else {
                let p = need(d, "comparator", "point", &c.point, "for kind = \"point\"")?;
                if p.len() != geometry.dim {
                    return Err(d.err(
                        "comparator",
                        "point",
                        format!("has {} coordinates but the geometry has dimension {}", p.len(), geometry.dim),
                    ));
                }
                if !geometry.is_feasible(&crate::geometry::Point(p.clone())) {
                    return Err(d.err("comparator", "point", "is not a feasible point of the geometry"));
                }
                ComparatorSpec::Point(p)
            }
        }
    };
    if geometry.is_free() {
        if let ComparatorSpec::Hindsight { radius: None } = comparator {
            if !matches!(losses, LossSpec::Quadratic { .. }) {
                return Err(d.err(
                    "comparator",
                    "radius",
                    "a hindsight comparator on a free geometry needs a search radius",
                ));
            }
        }
    }

    Ok(Scenario {
        name: file.run.name.clone().unwrap_or_else(|| default_name.to_string()),
        algorithm,
        horizon: file.run.horizon,
        seed: file.run.seed.unwrap_or(0),
        bound_checks,
        geometry,
        losses,
        delays,
        latency,
        lose,
        activation,
        reference,
        rate,
        optimistic,
        comparator,
        source: file,
    })
}

fn parse_geometry(g: &GeometrySection, d: &Diag) -> Result<Geometry> {
    let kind = choice(d, "geometry", "kind", &g.kind, &[("ball", 0u8), ("box", 1), ("simplex", 2), ("free", 3)])?;
    let wrap = |key: &str, r: Result<Geometry>| r.map_err(|e| d.err("geometry", key, e));
    if kind == 1 {
        let lower = need(d, "geometry", "lower", &g.lower, "for a box")?;
        let upper = need(d, "geometry", "upper", &g.upper, "for a box")?;
        if g.dim.is_some_and(|n| n != lower.len()) {
            return Err(d.err("geometry", "dim", "disagrees with the length of `lower`"));
        }
        return wrap("lower", Geometry::boxed(lower, upper));
    }
    let dim = need(d, "geometry", "dim", &g.dim, "for this geometry")?;
    if dim == 0 {
        return Err(d.err("geometry", "dim", "must be at least 1"));
    }
    match kind {
        0 => {
            let radius = positive(d, "geometry", "radius", g.radius.unwrap_or(1.0))?;
            wrap("radius", Geometry::ball(dim, radius))
        }
        2 => wrap("dim", Geometry::simplex(dim)),
        _ => wrap("dim", Geometry::free(dim)),
    }
}

fn parse_losses(l: &LossSection, geom: &Geometry, base: &Path, d: &Diag) -> Result<LossSpec> {
    let kind = choice(
        d,
        "losses",
        "kind",
        &l.kind,
        &[
            ("random_linear", 0u8),
            ("quadratic", 1),
            ("drifting_quadratic", 2),
            ("trace", 3),
            ("lb_periods", 4),
            ("lb_zero_one", 5),
            ("repeat", 6),
        ],
    )?;
    let gbound = l.gbound.map(|g| positive(d, "losses", "gbound", g)).transpose()?;
    let scalar_only = |name: &str| {
        if geom.dim != 1 {
            Err(d.err("losses", "kind", format!("{name} generates scalar losses; set geometry.dim = 1")))
        } else {
            Ok(())
        }
    };
    let generator = |name: &str| -> Result<(usize, usize, usize)> {
        scalar_only(name)?;
        Ok((
            need(d, "losses", "m", &l.m, &format!("for {name}"))?,
            need(d, "losses", "ell", &l.ell, &format!("for {name}"))?,
            need(d, "losses", "tau", &l.tau, &format!("for {name}"))?,
        ))
    };
    Ok(match kind {
        0 => LossSpec::RandomLinear { g: gbound.unwrap_or(1.0) },
        1 | 2 => {
            let scale = positive(d, "losses", "scale", l.scale.unwrap_or(1.0))?;
            let center_radius = l.center_radius.unwrap_or(1.0);
            if !(center_radius >= 0.0 && center_radius.is_finite()) {
                return Err(d.err("losses", "center_radius", "must be a non-negative finite number"));
            }
            let drift = if kind == 2 {
                Some(positive(d, "losses", "drift", need(d, "losses", "drift", &l.drift, "for drifting_quadratic")?)?)
            } else {
                None
            };
            if geom.is_free() && gbound.is_none() {
                return Err(d.err(
                    "losses",
                    "gbound",
                    "required for quadratic losses on an unbounded geometry",
                ));
            }
            LossSpec::Quadratic { scale, center_radius, drift, gbound }
        }
        3 => {
            let rel = need(d, "losses", "path", &l.path, "for a loss trace")?;
            LossSpec::Trace { path: existing(d, "losses", "path", base, &rel)?, gbound }
        }
        4 => {
            let (m, ell, tau) = generator("lb_periods")?;
            if m <= tau {
                return Err(d.err("losses", "m", format!("lb_periods needs m > tau (m={m}, tau={tau})")));
            }
            if ell <= tau {
                return Err(d.err("losses", "ell", format!("lb_periods needs ell > tau (ell={ell}, tau={tau})")));
            }
            LossSpec::LbPeriods { m, ell, tau }
        }
        5 => {
            let (m, ell, tau) = generator("lb_zero_one")?;
            if m == 0 {
                return Err(d.err("losses", "m", "lb_zero_one needs m >= 1"));
            }
            if ell <= 4 * tau + 4 {
                return Err(d.err(
                    "losses",
                    "ell",
                    format!("lb_zero_one needs ell > 4tau+4 (ell={ell}, tau={tau})"),
                ));
            }
            LossSpec::LbZeroOne { m, ell, tau }
        }
        _ => {
            scalar_only("repeat")?;
            let base_len = need(d, "losses", "base_len", &l.base_len, "for repeat")?;
            if base_len == 0 {
                return Err(d.err("losses", "base_len", "must be at least 1"));
            }
            LossSpec::Repeat { base_len, tau: need(d, "losses", "tau", &l.tau, "for repeat")? }
        }
    })
}

type DelayParts = (DelaySpec, Option<PathBuf>, Vec<usize>);

fn parse_delays(s: &DelaySection, base: &Path, d: &Diag) -> Result<DelayParts> {
    let kind = choice(d, "delays", "kind", &s.kind, &[("none", 0u8), ("constant", 1), ("geometric", 2), ("trace", 3)])?;
    let latency = s.latency.as_ref().map(|rel| existing(d, "delays", "latency", base, rel)).transpose()?;
    let relay = s.coordinator.map_or(Relay::Direct, Relay::Coordinator);
    let model = |base: crate::schedule::BaseDelay| DelayModel { base, latency: LatencyTable::default(), relay };
    let spec = match kind {
        0 => DelaySpec::Model(model(crate::schedule::BaseDelay::Constant(0))),
        1 => DelaySpec::Model(model(crate::schedule::BaseDelay::Constant(need(
            d,
            "delays",
            "tau",
            &s.tau,
            "for constant delays",
        )?))),
        2 => {
            let p = need(d, "delays", "p", &s.p, "for geometric delays")?;
            if !(p > 0.0 && p <= 1.0) {
                return Err(d.err("delays", "p", format!("must lie in (0, 1], got {p}")));
            }
            DelaySpec::Model(model(crate::schedule::BaseDelay::IidGeometric { p, cap: s.cap }))
        }
        _ => {
            if latency.is_some() || s.coordinator.is_some() {
                return Err(d.err("delays", "latency", "an arrival trace already fixes every delivery"));
            }
            let rel = need(d, "delays", "path", &s.path, "for an arrival trace")?;
            DelaySpec::Trace(existing(d, "delays", "path", base, &rel)?)
        }
    };
    if s.lose.contains(&0) {
        return Err(d.err("delays", "lose", "stamps start at 1"));
    }
    Ok((spec, latency, s.lose.clone()))
}

fn parse_network(n: &NetworkSection, base: &Path, d: &Diag) -> Result<(ActivationSpec, usize)> {
    let kind = choice(
        d,
        "network",
        "activation",
        &n.activation,
        &[("single", 0u8), ("cyclic", 1), ("random", 2), ("open", 3), ("trace", 4)],
    )?;
    let agents = || -> Result<usize> {
        let a = need(d, "network", "agents", &n.agents, "for this activation")?;
        if a == 0 {
            return Err(d.err("network", "agents", "must be at least 1"));
        }
        Ok(a)
    };
    let act = match kind {
        0 => ActivationSpec::Single,
        1 => ActivationSpec::Cyclic(agents()?),
        2 => ActivationSpec::Random(agents()?),
        3 => ActivationSpec::Open(agents()?),
        _ => {
            let rel = need(d, "network", "path", &n.path, "for a network trace")?;
            ActivationSpec::Trace(existing(d, "network", "path", base, &rel)?)
        }
    };
    Ok((act, n.reference.unwrap_or(0)))
}

fn parse_rate(r: Option<&RateSection>, alg: Algorithm, losses: &LossSpec, d: &Diag) -> Result<RateSpec> {
    let empty = RateSection::default();
    let r = r.unwrap_or(&empty);
    let policy = match &r.policy {
        Some(name) => choice(d, "rate", "policy", name, &POLICIES)?,
        None => match alg {
            Algorithm::Oda | Algorithm::Dda => PolicyKind::Decreasing,
            Algorithm::Ddda => PolicyKind::NetworkFixed,
            Algorithm::Doda => return Err(d.err("rate", "policy", "required for doda")),
        },
    };
    if !policy.allowed(alg) {
        return Err(d.err("rate", "policy", format!("`{}` is not a rate policy of {}", policy.name(), alg.name())));
    }
    let opt_pos = |key: &str, v: Option<f64>| v.map(|x| positive(d, "rate", key, x)).transpose();
    let eta = opt_pos("eta", r.eta)?;
    let eta_tilde = match r.eta_tilde {
        Some(v) if !(v >= 0.0 && v.is_finite()) => {
            return Err(d.err("rate", "eta_tilde", "must be a non-negative finite number"))
        }
        v => v,
    };
    let usage = match r.usage.as_deref() {
        None => Usage::AllReceived,
        Some(u) => choice(d, "rate", "usage", u, &[("all", Usage::AllReceived), ("defer", Usage::DeferByCount)])?,
    };
    let regime = match (&r.regime, policy) {
        (Some(name), PolicyKind::Tuned) => Some(choice(
            d,
            "rate",
            "regime",
            name,
            &[
                ("unavail", BoundId::ConstUnavail),
                ("cumulative", BoundId::ConstCumulative),
                ("lag", BoundId::ConstLag),
            ],
        )?),
        (None, PolicyKind::Tuned) => return Err(d.err("rate", "regime", "required for the tuned policy")),
        (Some(_), _) => return Err(d.err("rate", "regime", "only used by the tuned policy")),
        (None, _) => None,
    };
    match policy {
        PolicyKind::Constant | PolicyKind::Relaxed => {
            need(d, "rate", "eta", &eta, &format!("for the {} policy", policy.name()))?;
        }
        PolicyKind::Pair => {
            need(d, "rate", "eta", &eta, "for the pair policy")?;
            need(d, "rate", "eta_tilde", &eta_tilde, "for the pair policy")?;
        }
        PolicyKind::Adaptive => {
            need(d, "rate", "l", &r.l, "for the adaptive policy")?;
        }
        PolicyKind::Tuned if matches!(losses, LossSpec::Quadratic { .. }) => {
            return Err(d.err("rate", "policy", "the tuned rate needs linear losses with known norms"));
        }
        PolicyKind::Variation if matches!(losses, LossSpec::Quadratic { .. }) && r.vbar.is_none() => {
            return Err(d.err("rate", "vbar", "required when the losses are not linear"));
        }
        _ => {}
    }
    if usage == Usage::DeferByCount && policy == PolicyKind::Tuned {
        return Err(d.err("rate", "usage", "the tuned rate is computed from the undeferred feedback"));
    }
    if usage == Usage::DeferByCount && matches!(alg, Algorithm::Doda) {
        return Err(d.err("rate", "usage", "deferred usage is not available for doda"));
    }
    Ok(RateSpec {
        policy,
        eta,
        eta_tilde,
        r: opt_pos("r", r.r)?,
        g: opt_pos("g", r.g)?,
        tau: r.tau,
        l: opt_pos("l", r.l)?,
        vbar: opt_pos("vbar", r.vbar)?,
        regime,
        usage,
        strict: r.strict.unwrap_or(false),
    })
}

fn parse_optimistic(o: Option<&OptimisticSection>, geom: &Geometry, d: &Diag) -> Result<OptimisticSpec> {
    let empty = OptimisticSection::default();
    let o = o.unwrap_or(&empty);
    let guess = match o.guess.as_deref() {
        None => GuessKind::Zero,
        Some(g) => choice(
            d,
            "optimistic",
            "guess",
            g,
            &[
                ("zero", GuessKind::Zero),
                ("last_uniform", GuessKind::LastUniform),
                ("field_global", GuessKind::FieldGlobal),
                ("field_local", GuessKind::FieldLocal),
            ],
        )?,
    };
    if let Some(x) = &o.x_start {
        if x.len() != geom.dim {
            return Err(d.err("optimistic", "x_start", format!("needs {} coordinates", geom.dim)));
        }
    }
    Ok(OptimisticSpec { guess, tau: o.tau, x_start: o.x_start.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario> {
        parse_scenario_str(text, Path::new("."), "test.toml", "test")
    }

    const MINIMAL: &str = "[run]\nalgorithm = \"dda\"\nhorizon = 10\n\n[geometry]\nkind = \"ball\"\ndim = 2\n\n[losses]\nkind = \"random_linear\"\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.seed, 0);
        assert_eq!(s.comparator, ComparatorSpec::Hindsight { radius: None });
        assert_eq!(s.rate.policy, PolicyKind::Decreasing);
        assert_eq!(s.activation, ActivationSpec::Single);
        assert!(s.bound_checks.is_empty());
    }

    #[test]
    fn unknown_policy_names_the_field() {
        let text = format!("{MINIMAL}\n[rate]\npolicy = \"adagrad\"\n");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("rate.policy"), "{msg}");
        assert!(msg.contains("line 13"), "{msg}");
        assert!(msg.contains("adagrad"), "{msg}");
    }

    #[test]
    fn generator_constraint_is_cited() {
        let text = "[run]\nalgorithm = \"doda\"\n[geometry]\nkind = \"free\"\ndim = 1\n\
                    [losses]\nkind = \"lb_periods\"\nm = 1\nell = 3\ntau = 1\n[rate]\npolicy = \"relaxed\"\neta = 0.1\n";
        let msg = parse(text).unwrap_err().to_string();
        assert!(msg.contains("losses.m") && msg.contains("m > tau"), "{msg}");
    }

    #[test]
    fn unknown_bound_id_rejected_at_parse_time() {
        let text = MINIMAL.replace("horizon = 10", "horizon = 10\nbound_checks = [\"made_up_bound\"]");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("run.bound_checks") && msg.contains("made_up_bound"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("dim = 2", "dim = 2\nfoo = 1");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("foo"), "{msg}");
    }

    #[test]
    fn doda_on_simplex_rejected() {
        let text = "[run]\nalgorithm = \"doda\"\nhorizon = 5\n[geometry]\nkind = \"simplex\"\ndim = 3\n\
                    [losses]\nkind = \"random_linear\"\n[rate]\npolicy = \"relaxed\"\neta = 0.1\n";
        let msg = parse(text).unwrap_err().to_string();
        assert!(msg.contains("geometry.kind") && msg.contains("unconstrained"), "{msg}");
    }

    #[test]
    fn missing_trace_file_rejected() {
        let text = MINIMAL.replace("kind = \"random_linear\"", "kind = \"trace\"\npath = \"nope.txt\"");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("losses.path") && msg.contains("does not exist"), "{msg}");
    }

    #[test]
    fn dump_round_trips() {
        let s = parse(MINIMAL).unwrap();
        let again = parse(&s.source.to_toml()).unwrap();
        assert_eq!(again.source, s.source);
    }
}
