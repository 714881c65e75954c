use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::greedy::substation_greedy_act;
use super::{normalize_observation, Agent, AgentKind, DecisionContext, GateOption, GreedyAgent, OptionsGate};
use crate::actions::{legal_substations, ActionCatalog};
use crate::engine::Engine;
use crate::grid::TopologyState;
use crate::nn::{argmax, masked_softmax, sample_categorical, Checkpoint, Mlp, NnError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("unknown agent kind '{0}'")]
    UnknownKind(String),
    #[error("agent config: {0}")]
    Config(String),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error("architecture mismatch: {0}")]
    Architecture(String),
}

/// Declarative agent description, usually read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub kind: AgentKind,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub rho_threshold: f64,
    /// Sample from the policy instead of taking the most likely action.
    #[serde(default)]
    pub sample: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_threshold() -> f64 {
    0.95
}

impl AgentConfig {
    pub fn new(kind: AgentKind) -> Self {
        AgentConfig { kind, checkpoint: None, rho_threshold: 0.95, sample: false, seed: 0 }
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| AgentError::Config(format!("{}: {e}", path.display())))
    }
}

/// A categorical choice made by one policy head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadChoice {
    pub index: usize,
    pub probs: Vec<f64>,
    pub mask: Vec<bool>,
    pub input: Vec<f64>,
}

impl HeadChoice {
    pub fn logp(&self) -> f64 {
        self.probs[self.index].ln()
    }
}

/// Everything a trainer needs to know about one call of a learned agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: usize,
    /// `None` when the gate kept the agent idle.
    pub top: Option<HeadChoice>,
    /// Hierarchical level-3 choice.
    pub config: Option<HeadChoice>,
    pub substation: Option<usize>,
    pub simulations: usize,
}

impl Decision {
    pub fn idle() -> Self {
        Decision { action: 0, top: None, config: None, substation: None, simulations: 0 }
    }
}

/// Actor networks of a learned agent.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNets {
    pub kind: AgentKind,
    /// Native: one logit per catalog action. Otherwise: do-nothing plus one per controllable substation.
    pub actor: Mlp,
    /// Hierarchical level 3 over observation plus substation one-hot.
    pub config_actor: Option<Mlp>,
}

pub fn native_input_dim(engine: &Engine) -> usize {
    engine.spec.observation_len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Meta {
    kind: AgentKind,
    obs_dim: usize,
    n_actions: usize,
    n_substations: usize,
}

impl PolicyNets {
    pub fn top_width(kind: AgentKind, catalog: &ActionCatalog) -> usize {
        if kind.is_native() {
            catalog.len()
        } else {
            catalog.n_controllable() + 1
        }
    }

    pub fn fresh<R: Rng + ?Sized>(kind: AgentKind, engine: &Engine, hidden: &[usize], rng: &mut R) -> Result<Self, AgentError> {
        if !kind.is_trainable() {
            return Err(AgentError::Config(format!("{kind} has no networks")));
        }
        let d = native_input_dim(engine);
        let cat = &engine.catalog;
        let actor = Mlp::new(d, hidden, Self::top_width(kind, cat), 0.01, rng);
        let config_actor = (kind == AgentKind::PpoHierarchical)
            .then(|| Mlp::new(d + cat.n_controllable(), hidden, cat.len(), 0.01, rng));
        Ok(PolicyNets { kind, actor, config_actor })
    }

    fn meta(&self, engine: &Engine) -> String {
        serde_json::to_string(&Meta {
            kind: self.kind,
            obs_dim: native_input_dim(engine),
            n_actions: engine.catalog.len(),
            n_substations: engine.catalog.n_controllable(),
        })
        .expect("meta serializes")
    }

    /// Checkpoint holding the actors plus any extra named networks (values, critics).
    pub fn to_checkpoint(&self, engine: &Engine, extra: Vec<(String, Mlp)>) -> Checkpoint {
        let mut nets = vec![("actor".to_string(), self.actor.clone())];
        if let Some(c) = &self.config_actor {
            nets.push(("config_actor".into(), c.clone()));
        }
        nets.extend(extra);
        Checkpoint { meta: self.meta(engine), nets }
    }

    pub fn from_checkpoint(ck: &Checkpoint, engine: &Engine, path: &str) -> Result<Self, AgentError> {
        let meta: Meta = serde_json::from_str(&ck.meta)
            .map_err(|e| AgentError::Checkpoint { path: path.into(), msg: format!("metadata: {e}") })?;
        let cat = &engine.catalog;
        let d = native_input_dim(engine);
        if meta.obs_dim != d || meta.n_actions != cat.len() || meta.n_substations != cat.n_controllable() {
            return Err(AgentError::Architecture(format!(
                "checkpoint built for obs {} / actions {} / substations {}, engine has {d} / {} / {}",
                meta.obs_dim,
                meta.n_actions,
                meta.n_substations,
                cat.len(),
                cat.n_controllable()
            )));
        }
        let actor = ck
            .get("actor")
            .cloned()
            .ok_or_else(|| AgentError::Checkpoint { path: path.into(), msg: "no actor network".into() })?;
        let want = Self::top_width(meta.kind, cat);
        if actor.input_dim() != d || actor.output_dim() != want {
            return Err(AgentError::Architecture(format!(
                "actor is {}->{}, {} needs {d}->{want}",
                actor.input_dim(),
                actor.output_dim(),
                meta.kind
            )));
        }
        let config_actor = if meta.kind == AgentKind::PpoHierarchical {
            let c = ck
                .get("config_actor")
                .cloned()
                .ok_or_else(|| AgentError::Checkpoint { path: path.into(), msg: "no config_actor network".into() })?;
            if c.input_dim() != d + cat.n_controllable() || c.output_dim() != cat.len() {
                return Err(AgentError::Architecture("config_actor shape".into()));
            }
            Some(c)
        } else {
            None
        };
        Ok(PolicyNets { kind: meta.kind, actor, config_actor })
    }

    /// Runs the learned levels after the gate fired. `rng = None` takes the most likely choices.
    pub fn decide(&self, ctx: &DecisionContext<'_>, rng: Option<&mut ChaCha8Rng>) -> Decision {
        let obs = normalize_observation(ctx.observation);
        let cat = &ctx.engine.catalog;
        if self.kind.is_native() {
            let mask = ctx.engine.legal_mask(ctx.state);
            let probs = masked_softmax(&self.actor.forward_one(&obs).expect("actor input"), Some(&mask));
            let index = pick(&probs, &mask, rng);
            return Decision {
                action: index,
                substation: cat.substation_of(index),
                top: Some(HeadChoice { index, probs, mask, input: obs }),
                config: None,
                simulations: 0,
            };
        }
        if self.kind.is_substation() {
            let mask = legal_substations(cat, ctx.state);
            let probs = masked_softmax(&self.actor.forward_one(&obs).expect("actor input"), Some(&mask));
            let slot = pick(&probs, &mask, rng);
            let top = Some(HeadChoice { index: slot, probs, mask, input: obs });
            if slot == 0 {
                return Decision { action: 0, top, config: None, substation: None, simulations: 0 };
            }
            let sub = cat.controllable_substations[slot - 1];
            let g = substation_greedy_act(ctx, sub);
            return Decision { action: g.action, top, config: None, substation: Some(sub), simulations: g.simulations };
        }
        let h = hierarchical_act(&obs, self, cat, ctx.state, rng);
        Decision { action: h.action, substation: h.substation, top: Some(h.top), config: h.config, simulations: 0 }
    }
}

fn pick(probs: &[f64], mask: &[bool], rng: Option<&mut ChaCha8Rng>) -> usize {
    match rng {
        Some(r) => sample_categorical(probs, r),
        None => argmax(probs, Some(mask)).unwrap_or(0),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalChoice {
    pub action: usize,
    pub substation: Option<usize>,
    pub top: HeadChoice,
    pub config: Option<HeadChoice>,
}

impl HierarchicalChoice {
    /// Joint log-probability of the emitted primitive action path.
    pub fn logp(&self) -> f64 {
        self.top.logp() + self.config.as_ref().map_or(0.0, |c| c.logp())
    }
}

/// Level 2 samples a substation slot (0 = do-nothing); level 3 samples a configuration
/// of that substation from the observation concatenated with the substation one-hot.
pub fn hierarchical_act(
    obs: &[f64],
    nets: &PolicyNets,
    catalog: &ActionCatalog,
    state: &TopologyState,
    mut rng: Option<&mut ChaCha8Rng>,
) -> HierarchicalChoice {
    let mask = legal_substations(catalog, state);
    let probs = masked_softmax(&nets.actor.forward_one(obs).expect("actor input"), Some(&mask));
    let slot = pick(&probs, &mask, rng.as_deref_mut());
    let top = HeadChoice { index: slot, probs, mask, input: obs.to_vec() };
    if slot == 0 {
        return HierarchicalChoice { action: 0, substation: None, top, config: None };
    }
    let sub = catalog.controllable_substations[slot - 1];
    let mut input = obs.to_vec();
    input.extend((0..catalog.n_controllable()).map(|i| if i + 1 == slot { 1.0 } else { 0.0 }));
    let range = catalog.range(sub).expect("controllable");
    let cmask: Vec<bool> = (0..catalog.len()).map(|i| range.contains(i)).collect();
    let cnet = nets.config_actor.as_ref().expect("hierarchical agent has a config actor");
    let cprobs = masked_softmax(&cnet.forward_one(&input).expect("config input"), Some(&cmask));
    let action = pick(&cprobs, &cmask, rng);
    HierarchicalChoice {
        action,
        substation: Some(sub),
        top,
        config: Some(HeadChoice { index: action, probs: cprobs, mask: cmask, input }),
    }
}

/// A learned agent in evaluation mode.
#[derive(Clone, Debug)]
pub struct PolicyAgent {
    pub nets: PolicyNets,
    pub gate: OptionsGate,
    pub sample: bool,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl PolicyAgent {
    pub fn new(nets: PolicyNets, gate: OptionsGate, sample: bool, seed: u64) -> Self {
        PolicyAgent { nets, gate, sample, seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Agent for PolicyAgent {
    fn act(&mut self, ctx: &DecisionContext<'_>) -> usize {
        if self.gate.gate(ctx.observation) == GateOption::DoNothing {
            return 0;
        }
        let rng = if self.sample { Some(&mut self.rng) } else { None };
        self.nets.decide(ctx, rng).action
    }

    fn begin_episode(&mut self, scenario: usize) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.rng.set_stream(scenario as u64);
    }

    fn describe(&self) -> String {
        let mut s = format!("{} (gate rho >= {})\n", self.nets.kind, self.gate.rho_threshold);
        let mut net = |name: &str, m: &Mlp| {
            let shapes: Vec<String> = m.layers.iter().map(|l| format!("{}x{}", l.w.nrows(), l.w.ncols())).collect();
            s.push_str(&format!("  {name}: {} params [{}]\n", m.n_params(), shapes.join(", ")));
        };
        net("actor", &self.nets.actor);
        if let Some(c) = &self.nets.config_actor {
            net("config_actor", c);
        }
        if self.nets.kind.is_substation() {
            s.push_str("  level 3: greedy search over the chosen substation\n");
        }
        s
    }
}

/// Assembles an agent; learned kinds load their checkpoint or start from a seeded initialization.
pub fn build_agent(config: &AgentConfig, engine: &Engine) -> Result<Box<dyn Agent>, AgentError> {
    let gate = OptionsGate::new(config.rho_threshold)?;
    if config.kind == AgentKind::Greedy {
        return Ok(Box::new(GreedyAgent::new(gate)));
    }
    let nets = match &config.checkpoint {
        Some(p) => {
            let ck = Checkpoint::load(p).map_err(|e: NnError| AgentError::Checkpoint {
                path: p.display().to_string(),
                msg: e.to_string(),
            })?;
            let nets = PolicyNets::from_checkpoint(&ck, engine, &p.display().to_string())?;
            if nets.kind != config.kind {
                return Err(AgentError::Architecture(format!("checkpoint holds {}, config asks for {}", nets.kind, config.kind)));
            }
            nets
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            PolicyNets::fresh(config.kind, engine, &crate::nn::DEFAULT_HIDDEN, &mut rng)?
        }
    };
    Ok(Box::new(PolicyAgent::new(nets, gate, config.sample, config.seed)))
}
