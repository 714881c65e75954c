//! Agent architectures: options gate, greedy searches and learned policies.

mod greedy;
mod policy;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::grid::{InjectionFrame, Observation, TopologyState};

pub use greedy::{greedy_expert_act, substation_greedy_act, GreedyAgent, GreedySearch};
pub use policy::{
    build_agent, hierarchical_act, native_input_dim, AgentConfig, AgentError, Decision, HeadChoice,
    HierarchicalChoice, PolicyAgent, PolicyNets,
};

/// What an agent sees when asked for an action at step `t`.
pub struct DecisionContext<'a> {
    pub engine: &'a Engine,
    pub state: &'a TopologyState,
    pub observation: &'a Observation,
    /// Injections assumed for the step being decided (persistence forecast).
    pub forecast: InjectionFrame<'a>,
    pub t: usize,
}

pub trait Agent: Send {
    /// Index into the engine's action catalog.
    fn act(&mut self, ctx: &DecisionContext<'_>) -> usize;

    /// Called before the first step of every episode.
    fn begin_episode(&mut self, _scenario: usize) {}

    fn describe(&self) -> String;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateOption {
    DoNothing,
    Act,
}

/// Level-1 rule: the policy is queried only when some line reaches the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionsGate {
    pub rho_threshold: f64,
}

impl Default for OptionsGate {
    fn default() -> Self {
        OptionsGate { rho_threshold: 0.95 }
    }
}

impl OptionsGate {
    pub fn new(rho_threshold: f64) -> Result<Self, AgentError> {
        if !(rho_threshold > 0.0 && rho_threshold < 1.5) {
            return Err(AgentError::Config(format!("gate threshold {rho_threshold} outside (0, 1.5)")));
        }
        Ok(OptionsGate { rho_threshold })
    }

    pub fn gate_rho(&self, max_rho: f64) -> GateOption {
        if max_rho >= self.rho_threshold {
            GateOption::Act
        } else {
            GateOption::DoNothing
        }
    }

    pub fn gate(&self, obs: &Observation) -> GateOption {
        self.gate_rho(obs.max_rho())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Greedy,
    PpoNative,
    SacNative,
    PpoSubstation,
    SacSubstation,
    PpoHierarchical,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::Greedy,
        AgentKind::PpoNative,
        AgentKind::SacNative,
        AgentKind::PpoSubstation,
        AgentKind::SacSubstation,
        AgentKind::PpoHierarchical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Greedy => "greedy",
            AgentKind::PpoNative => "ppo_native",
            AgentKind::SacNative => "sac_native",
            AgentKind::PpoSubstation => "ppo_substation",
            AgentKind::SacSubstation => "sac_substation",
            AgentKind::PpoHierarchical => "ppo_hierarchical",
        }
    }

    pub fn is_trainable(self) -> bool {
        self != AgentKind::Greedy
    }

    pub fn is_sac(self) -> bool {
        matches!(self, AgentKind::SacNative | AgentKind::SacSubstation)
    }

    /// Level 3 is the greedy search over the chosen substation.
    pub fn is_substation(self) -> bool {
        matches!(self, AgentKind::PpoSubstation | AgentKind::SacSubstation)
    }

    pub fn is_native(self) -> bool {
        matches!(self, AgentKind::PpoNative | AgentKind::SacNative)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;
    fn from_str(s: &str) -> Result<Self, AgentError> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| AgentError::UnknownKind(s.to_string()))
    }
}

/// Network input: MW over 100, loadings and busbar codes as-is, overflow counters over 3.
pub fn normalize_observation(obs: &Observation) -> Vec<f64> {
    let mut v = Vec::with_capacity(obs.len());
    v.extend(obs.active_power.iter().map(|p| p / 100.0));
    v.extend(obs.rho.iter().copied());
    v.extend(obs.topo_config.iter().copied());
    v.extend(obs.overflow_steps.iter().map(|&s| s / 3.0));
    v
}

/// Always emits do-nothing.
#[derive(Clone, Debug, Default)]
pub struct DoNothingAgent;

impl Agent for DoNothingAgent {
    fn act(&mut self, _ctx: &DecisionContext<'_>) -> usize {
        0
    }
    fn describe(&self) -> String {
        "do_nothing".into()
    }
}
