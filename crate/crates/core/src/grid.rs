//! Static grid description, busbar topology state and the observation vector.
//!
//! Every substation has two busbars. Each element attached to a substation
//! (a line end, a load or a generator) sits on exactly one of them. The
//! element order inside a substation is canonical: line ends sorted by line
//! id, then loads by id, then generators by id. Configuration patterns index
//! into that order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowSolution;

/// The bundled adapted IEEE 14-bus case.
pub const IEEE14_GRID: &str = include_str!("../data/ieee14.grid");

#[derive(Debug, Error)]
pub enum GridError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid grid spec: {0}")]
    Invalid(String),
    #[error("substation {0} is on cooldown ({1} steps left)")]
    CooldownActive(usize, u32),
    #[error("configuration for substation {sub} has {got} entries, expected {expected}")]
    ConfigLength { sub: usize, expected: usize, got: usize },
    #[error("unknown substation {0}")]
    UnknownSubstation(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Busbar {
    One = 1,
    Two = 2,
}

impl Busbar {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn other(self) -> Busbar {
        match self {
            Busbar::One => Busbar::Two,
            Busbar::Two => Busbar::One,
        }
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }
}

/// A reference to one element connected to a substation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementRef {
    LineOrigin(usize),
    LineExtremity(usize),
    Load(usize),
    Generator(usize),
}

impl ElementRef {
    pub fn is_line_end(self) -> bool {
        matches!(self, ElementRef::LineOrigin(_) | ElementRef::LineExtremity(_))
    }

    pub fn is_injection(self) -> bool {
        !self.is_line_end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Nuclear,
    Thermal,
    Hydro,
    Wind,
    Solar,
}

impl GenKind {
    pub fn is_renewable(self) -> bool {
        matches!(self, GenKind::Wind | GenKind::Solar)
    }
}

impl FromStr for GenKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nuclear" => Ok(GenKind::Nuclear),
            "thermal" => Ok(GenKind::Thermal),
            "hydro" => Ok(GenKind::Hydro),
            "wind" => Ok(GenKind::Wind),
            "solar" => Ok(GenKind::Solar),
            other => Err(format!("unknown generator kind '{other}'")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Substation {
    pub id: usize,
    pub nominal_kv: f64,
    /// Canonical element order; defines configuration bit positions.
    pub elements: Vec<ElementRef>,
}

impl Substation {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from_sub: usize,
    pub to_sub: usize,
    pub reactance_pu: f64,
    pub thermal_limit_amps: f64,
    /// Thermal limit expressed in MW at the from-side nominal voltage.
    pub limit_mw: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Load {
    pub id: usize,
    pub sub: usize,
    pub base_mw: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub sub: usize,
    pub kind: GenKind,
    pub pmax_mw: f64,
}

/// Position of an element inside its substation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub sub: usize,
    pub pos: usize,
}

/// Immutable network description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub base_mva: f64,
    pub step_minutes: u32,
    pub episode_steps: usize,
    pub substations: Vec<Substation>,
    pub lines: Vec<Line>,
    pub loads: Vec<Load>,
    pub generators: Vec<Generator>,
    line_or_slot: Vec<Slot>,
    line_ex_slot: Vec<Slot>,
    load_slot: Vec<Slot>,
    gen_slot: Vec<Slot>,
}

impl GridSpec {
    /// Builds and validates a spec from its raw tables. Substation element
    /// lists are derived here, never taken from the caller.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(
        base_mva: f64,
        step_minutes: u32,
        episode_steps: usize,
        nominal_kv: Vec<f64>,
        mut lines: Vec<Line>,
        loads: Vec<Load>,
        generators: Vec<Generator>,
    ) -> Result<Self, GridError> {
        let n_sub = nominal_kv.len();
        if n_sub == 0 {
            return Err(GridError::Invalid("no substations".into()));
        }
        if !(base_mva > 0.0) {
            return Err(GridError::Invalid("base_mva must be positive".into()));
        }
        for (i, kv) in nominal_kv.iter().enumerate() {
            if !(*kv > 0.0) {
                return Err(GridError::Invalid(format!(
                    "substation {i} has non-positive nominal voltage"
                )));
            }
        }
        for (i, l) in lines.iter().enumerate() {
            if l.id != i {
                return Err(GridError::Invalid(format!("line ids must be 0..n, found {} at row {i}", l.id)));
            }
            for s in [l.from_sub, l.to_sub] {
                if s >= n_sub {
                    return Err(GridError::Invalid(format!(
                        "line {} references substation {s} (only {n_sub} substations)",
                        l.id
                    )));
                }
            }
            if l.from_sub == l.to_sub {
                return Err(GridError::Invalid(format!("line {} is a self-loop", l.id)));
            }
            if !(l.reactance_pu > 0.0) {
                return Err(GridError::Invalid(format!("line {} has non-positive reactance", l.id)));
            }
            if !(l.thermal_limit_amps > 0.0) {
                return Err(GridError::Invalid(format!("line {} has non-positive thermal limit", l.id)));
            }
        }
        for (i, d) in loads.iter().enumerate() {
            if d.id != i {
                return Err(GridError::Invalid(format!("load ids must be 0..n, found {} at row {i}", d.id)));
            }
            if d.sub >= n_sub {
                return Err(GridError::Invalid(format!(
                    "load {} references substation {} (only {n_sub} substations)",
                    d.id, d.sub
                )));
            }
            if !(d.base_mw >= 0.0) {
                return Err(GridError::Invalid(format!("load {} has negative base level", d.id)));
            }
        }
        for (i, g) in generators.iter().enumerate() {
            if g.id != i {
                return Err(GridError::Invalid(format!(
                    "generator ids must be 0..n, found {} at row {i}",
                    g.id
                )));
            }
            if g.sub >= n_sub {
                return Err(GridError::Invalid(format!(
                    "generator {} references substation {} (only {n_sub} substations)",
                    g.id, g.sub
                )));
            }
            if !(g.pmax_mw > 0.0) {
                return Err(GridError::Invalid(format!("generator {} has non-positive pmax", g.id)));
            }
        }

        for l in lines.iter_mut() {
            l.limit_mw = amps_to_mw(l.thermal_limit_amps, nominal_kv[l.from_sub]);
        }

        let mut elements: Vec<Vec<ElementRef>> = vec![Vec::new(); n_sub];
        for l in &lines {
            elements[l.from_sub].push(ElementRef::LineOrigin(l.id));
            elements[l.to_sub].push(ElementRef::LineExtremity(l.id));
        }
        for d in &loads {
            elements[d.sub].push(ElementRef::Load(d.id));
        }
        for g in &generators {
            elements[g.sub].push(ElementRef::Generator(g.id));
        }
        // Lines were pushed in id order, so line ends are already sorted.

        let mut line_or_slot = vec![Slot { sub: 0, pos: 0 }; lines.len()];
        let mut line_ex_slot = line_or_slot.clone();
        let mut load_slot = vec![Slot { sub: 0, pos: 0 }; loads.len()];
        let mut gen_slot = vec![Slot { sub: 0, pos: 0 }; generators.len()];
        for (sub, els) in elements.iter().enumerate() {
            for (pos, e) in els.iter().enumerate() {
                let slot = Slot { sub, pos };
                match *e {
                    ElementRef::LineOrigin(i) => line_or_slot[i] = slot,
                    ElementRef::LineExtremity(i) => line_ex_slot[i] = slot,
                    ElementRef::Load(i) => load_slot[i] = slot,
                    ElementRef::Generator(i) => gen_slot[i] = slot,
                }
            }
        }

        let substations = elements
            .into_iter()
            .enumerate()
            .map(|(id, elements)| Substation { id, nominal_kv: nominal_kv[id], elements })
            .collect();

        Ok(GridSpec {
            base_mva,
            step_minutes,
            episode_steps,
            substations,
            lines,
            loads,
            generators,
            line_or_slot,
            line_ex_slot,
            load_slot,
            gen_slot,
        })
    }

    pub fn ieee14() -> Self {
        parse_grid_spec(IEEE14_GRID).expect("bundled ieee14 grid is valid")
    }

    pub fn n_sub(&self) -> usize {
        self.substations.len()
    }
    pub fn n_line(&self) -> usize {
        self.lines.len()
    }
    pub fn n_load(&self) -> usize {
        self.loads.len()
    }
    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    pub fn slot(&self, e: ElementRef) -> Slot {
        match e {
            ElementRef::LineOrigin(i) => self.line_or_slot[i],
            ElementRef::LineExtremity(i) => self.line_ex_slot[i],
            ElementRef::Load(i) => self.load_slot[i],
            ElementRef::Generator(i) => self.gen_slot[i],
        }
    }

    /// Length of the observation vector: 2(N_gen + N_load + 2 N_line) + 2 N_line.
    pub fn observation_len(&self) -> usize {
        2 * (self.n_gen() + self.n_load() + 2 * self.n_line()) + 2 * self.n_line()
    }

    /// Number of element slots across all substations.
    pub fn n_elements(&self) -> usize {
        self.n_gen() + self.n_load() + 2 * self.n_line()
    }
}

/// Three-phase MW equivalent of a current limit at unit power factor.
pub fn amps_to_mw(amps: f64, kv: f64) -> f64 {
    3f64.sqrt() * kv * amps / 1000.0
}

pub fn load_grid_spec(path: impl AsRef<Path>) -> Result<GridSpec, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_grid_spec(&text)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    Substations,
    Lines,
    Loads,
    Generators,
}

pub fn parse_grid_spec(text: &str) -> Result<GridSpec, GridError> {
    let mut section = Section::Header;
    let mut base_mva = 100.0;
    let mut step_minutes = 5u32;
    let mut episode_steps = 8064usize;
    let mut kv: Vec<(usize, f64)> = Vec::new();
    let mut lines = Vec::new();
    let mut loads = Vec::new();
    let mut gens = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let lineno = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let perr = |msg: String| GridError::Parse { line: lineno, msg };
        let tok: Vec<&str> = content.split_whitespace().collect();
        match tok[0] {
            "SUBSTATIONS" => {
                section = Section::Substations;
                continue;
            }
            "LINES" => {
                section = Section::Lines;
                continue;
            }
            "LOADS" => {
                section = Section::Loads;
                continue;
            }
            "GENERATORS" => {
                section = Section::Generators;
                continue;
            }
            _ => {}
        }
        let num = |i: usize| -> Result<f64, GridError> {
            tok.get(i)
                .ok_or_else(|| perr(format!("missing column {}", i + 1)))?
                .parse::<f64>()
                .map_err(|e| perr(format!("column {}: {e}", i + 1)))
        };
        let idx = |i: usize| -> Result<usize, GridError> {
            tok.get(i)
                .ok_or_else(|| perr(format!("missing column {}", i + 1)))?
                .parse::<usize>()
                .map_err(|e| perr(format!("column {}: {e}", i + 1)))
        };
        match section {
            Section::Header => {
                if tok.len() != 2 {
                    return Err(perr(format!("expected 'KEY value', got '{content}'")));
                }
                match tok[0] {
                    "BASE_MVA" => base_mva = num(1)?,
                    "STEP_MINUTES" => step_minutes = idx(1)? as u32,
                    "EPISODE_STEPS" => episode_steps = idx(1)?,
                    other => return Err(perr(format!("unknown header key '{other}'"))),
                }
            }
            Section::Substations => {
                expect_cols(&tok, 2, lineno)?;
                kv.push((idx(0)?, num(1)?));
            }
            Section::Lines => {
                expect_cols(&tok, 5, lineno)?;
                lines.push(Line {
                    id: idx(0)?,
                    from_sub: idx(1)?,
                    to_sub: idx(2)?,
                    reactance_pu: num(3)?,
                    thermal_limit_amps: num(4)?,
                    limit_mw: 0.0,
                });
            }
            Section::Loads => {
                expect_cols(&tok, 3, lineno)?;
                loads.push(Load { id: idx(0)?, sub: idx(1)?, base_mw: num(2)? });
            }
            Section::Generators => {
                expect_cols(&tok, 4, lineno)?;
                let kind = tok[2].parse::<GenKind>().map_err(perr)?;
                gens.push(Generator { id: idx(0)?, sub: idx(1)?, kind, pmax_mw: num(3)? });
            }
        }
    }

    for (i, (id, _)) in kv.iter().enumerate() {
        if *id != i {
            return Err(GridError::Invalid(format!(
                "substation ids must be 0..n, found {id} at row {i}"
            )));
        }
    }
    GridSpec::new(
        base_mva,
        step_minutes,
        episode_steps,
        kv.into_iter().map(|(_, v)| v).collect(),
        lines,
        loads,
        gens,
    )
}

fn expect_cols(tok: &[&str], n: usize, line: usize) -> Result<(), GridError> {
    if tok.len() != n {
        return Err(GridError::Parse {
            line,
            msg: format!("expected {n} columns, got {}", tok.len()),
        });
    }
    Ok(())
}

/// Busbar assignment for every element of one substation, in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SubstationConfig(pub Vec<Busbar>);

impl SubstationConfig {
    pub fn default_for(n: usize) -> Self {
        SubstationConfig(vec![Busbar::One; n])
    }

    /// Bit `i` set means element `i` sits on busbar 2.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        SubstationConfig(
            (0..n)
                .map(|i| if bits >> i & 1 == 1 { Busbar::Two } else { Busbar::One })
                .collect(),
        )
    }

    pub fn bits(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, b)| if *b == Busbar::Two { acc | 1 << i } else { acc })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_default(&self) -> bool {
        self.0.iter().all(|b| *b == Busbar::One)
    }

    /// Mirror so the first element sits on busbar 1.
    pub fn canonical(&self) -> SubstationConfig {
        match self.0.first() {
            Some(Busbar::Two) => SubstationConfig(self.0.iter().map(|b| b.other()).collect()),
            _ => self.clone(),
        }
    }
}

impl fmt::Display for SubstationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{}", b.code())?;
        }
        Ok(())
    }
}

impl FromStr for SubstationConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '1' => Ok(Busbar::One),
                '2' => Ok(Busbar::Two),
                other => Err(format!("invalid busbar code '{other}'")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(SubstationConfig)
    }
}

impl From<SubstationConfig> for String {
    fn from(c: SubstationConfig) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for SubstationConfig {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Mutable per-episode grid state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyState {
    /// Busbar of each element, per substation in canonical element order.
    pub busbar: Vec<Vec<Busbar>>,
    pub line_in_service: Vec<bool>,
    pub overload_steps: Vec<u32>,
    pub trip_recovery_timer: Vec<u32>,
    pub outage_timer: Vec<u32>,
    /// Lines removed after an unresolved overload; they stay out until the episode ends.
    pub permanently_disconnected: Vec<bool>,
    pub cooldown: Vec<u32>,
}

impl TopologyState {
    /// Every element on busbar 1, every line in service, all timers zero.
    pub fn new(spec: &GridSpec) -> Self {
        TopologyState {
            busbar: spec
                .substations
                .iter()
                .map(|s| vec![Busbar::One; s.n_elements()])
                .collect(),
            line_in_service: vec![true; spec.n_line()],
            overload_steps: vec![0; spec.n_line()],
            trip_recovery_timer: vec![0; spec.n_line()],
            outage_timer: vec![0; spec.n_line()],
            permanently_disconnected: vec![false; spec.n_line()],
            cooldown: vec![0; spec.n_sub()],
        }
    }

    pub fn busbar_of(&self, spec: &GridSpec, e: ElementRef) -> Busbar {
        let s = spec.slot(e);
        self.busbar[s.sub][s.pos]
    }

    pub fn config_of(&self, sub: usize) -> SubstationConfig {
        SubstationConfig(self.busbar[sub].clone())
    }

    /// Replaces the busbar assignment of one substation and starts its cooldown.
    pub fn apply_substation_config(
        &mut self,
        sub: usize,
        config: &SubstationConfig,
        cooldown_steps: u32,
    ) -> Result<(), GridError> {
        let current = self.busbar.get_mut(sub).ok_or(GridError::UnknownSubstation(sub))?;
        if self.cooldown[sub] > 0 {
            return Err(GridError::CooldownActive(sub, self.cooldown[sub]));
        }
        if config.len() != current.len() {
            return Err(GridError::ConfigLength { sub, expected: current.len(), got: config.len() });
        }
        current.clone_from(&config.0);
        self.cooldown[sub] = cooldown_steps;
        Ok(())
    }

    /// Canonical (busbar-swap invariant) topology, one pattern per substation.
    pub fn canonical_topology(&self) -> Vec<SubstationConfig> {
        (0..self.busbar.len()).map(|s| self.config_of(s).canonical()).collect()
    }
}

/// Encodes a canonical topology as a compact key, substations separated by '|'.
pub fn topology_key(topo: &[SubstationConfig]) -> String {
    topo.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("|")
}

/// Load and generator MW for one time step.
#[derive(Clone, Copy, Debug)]
pub struct InjectionFrame<'a> {
    pub load_mw: &'a [f64],
    pub gen_mw: &'a [f64],
}

/// Feature vector seen by agents, in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Generators, loads, line origins, line extremities (MW).
    pub active_power: Vec<f64>,
    pub rho: Vec<f64>,
    /// Busbar codes in the same element order as `active_power`; 0 for ends of lines out of service.
    pub topo_config: Vec<f64>,
    pub overflow_steps: Vec<f64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.active_power.len() + self.rho.len() + self.topo_config.len() + self.overflow_steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.active_power);
        v.extend_from_slice(&self.rho);
        v.extend_from_slice(&self.topo_config);
        v.extend_from_slice(&self.overflow_steps);
        v
    }

    pub fn max_rho(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }
}

pub fn build_observation(
    spec: &GridSpec,
    state: &TopologyState,
    flow: &FlowSolution,
    inj: &InjectionFrame<'_>,
) -> Result<Observation, GridError> {
    let (ng, nd, nl) = (spec.n_gen(), spec.n_load(), spec.n_line());
    if flow.line_flow_mw.len() != nl || flow.rho.len() != nl {
        return Err(GridError::Dimension(format!(
            "flow has {} lines, spec has {nl}",
            flow.line_flow_mw.len()
        )));
    }
    if inj.gen_mw.len() != ng || inj.load_mw.len() != nd {
        return Err(GridError::Dimension(format!(
            "injections have {}/{} gen/load entries, spec has {ng}/{nd}",
            inj.gen_mw.len(),
            inj.load_mw.len()
        )));
    }
    let n_el = spec.n_elements();
    let mut active_power = Vec::with_capacity(n_el);
    let mut topo = Vec::with_capacity(n_el);
    for g in 0..ng {
        active_power.push(inj.gen_mw[g]);
        topo.push(state.busbar_of(spec, ElementRef::Generator(g)).code() as f64);
    }
    for d in 0..nd {
        active_power.push(inj.load_mw[d]);
        topo.push(state.busbar_of(spec, ElementRef::Load(d)).code() as f64);
    }
    for (end, sign) in [(0usize, 1.0), (1, -1.0)] {
        for l in 0..nl {
            if state.line_in_service[l] {
                active_power.push(sign * flow.line_flow_mw[l]);
                let e = if end == 0 { ElementRef::LineOrigin(l) } else { ElementRef::LineExtremity(l) };
                topo.push(state.busbar_of(spec, e).code() as f64);
            } else {
                active_power.push(0.0);
                topo.push(0.0);
            }
        }
    }
    let rho = (0..nl)
        .map(|l| if state.line_in_service[l] { flow.rho[l] } else { 0.0 })
        .collect();
    let overflow_steps = state.overload_steps.iter().map(|&s| s as f64).collect();
    Ok(Observation { active_power, rho, topo_config: topo, overflow_steps })
}
