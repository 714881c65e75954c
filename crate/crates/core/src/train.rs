//! Training loops for the learned agents.
//!
//! Rollout workers play training scenarios with do-nothing below the gate
//! threshold and query the current policy snapshot above it. Each decision
//! opens a segment that collects rewards until the next decision, so the
//! learner sees one transition per decision with its segment length `k`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::legal_substations;
use crate::agents::{
    normalize_observation, Agent, AgentKind, DecisionContext, GateOption, HeadChoice, OptionsGate, PolicyAgent,
    PolicyNets,
};
use crate::engine::{Engine, EngineError};
use crate::grid::{Observation, TopologyState};
use crate::metrics::evaluate;
use crate::nn::{Checkpoint, Mlp, DEFAULT_HIDDEN};
use crate::rl::{
    compute_gae, ppo::ppo_policy_update, ppo_update, sac_update, Aggregation, Learner, PpoConfig, PpoSample,
    PrioritizedReplay, RlError, SacConfig, SacNets, Segment, Transition,
};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} is not trainable")]
    NotTrainable(AgentKind),
    #[error("training config: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Experimental regime; selects the hyperparameter column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    NoContingencies,
    Contingencies,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::NoContingencies => "no_contingencies",
            Regime::Contingencies => "contingencies",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s {
            "no_contingencies" => Ok(Regime::NoContingencies),
            "contingencies" => Ok(Regime::Contingencies),
            _ => Err(TrainError::Config(format!("unknown regime '{s}'"))),
        }
    }
}

/// PPO defaults per agent kind and regime.
pub fn default_ppo_config(kind: AgentKind, regime: Regime) -> PpoConfig {
    let base = PpoConfig::default();
    let outages = regime == Regime::Contingencies;
    match kind {
        AgentKind::PpoHierarchical => PpoConfig {
            lr: 5e-4,
            kl_coeff: 0.3,
            clip: 0.5,
            entropy_coeff: if outages { 0.025 } else { 0.0 },
            sgd_iters: if outages { 8 } else { 15 },
            ..base
        },
        AgentKind::PpoNative => PpoConfig {
            entropy_coeff: if outages { 0.01 } else { 0.0 },
            sgd_iters: if outages { 15 } else { 5 },
            ..base
        },
        _ => PpoConfig { sgd_iters: if outages { 15 } else { 5 }, ..base },
    }
}

/// SAC defaults per agent kind and regime.
pub fn default_sac_config(kind: AgentKind, regime: Regime) -> SacConfig {
    let base = SacConfig::default();
    if kind == AgentKind::SacSubstation {
        SacConfig { tau: 5e-4, target_update_freq: 10, alpha_entropy: 0.0, ..base }
    } else {
        let alpha_entropy = if regime == Regime::Contingencies { 0.01 } else { 0.05 };
        SacConfig { tau: 5e-3, target_update_freq: 100, alpha_entropy, ..base }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub kind: AgentKind,
    pub regime: Regime,
    pub seed: u64,
    /// Agent-environment interactions to collect: decisions taken while the gate is open.
    pub interactions: u64,
    pub hidden: Vec<usize>,
    pub rho_threshold: f64,
    pub workers: usize,
    /// Validation period in interactions.
    pub eval_interval: u64,
    /// Consecutive non-finite updates tolerated before the run is marked failed.
    pub max_failures: usize,
    /// Completed training episodes averaged in the reported return and length.
    pub episode_window: usize,
    /// Decisions collected per SAC iteration.
    pub sac_chunk: usize,
    pub ppo: PpoConfig,
    pub sac: SacConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::new(AgentKind::PpoSubstation, Regime::NoContingencies)
    }
}

impl TrainConfig {
    pub fn new(kind: AgentKind, regime: Regime) -> Self {
        TrainConfig {
            kind,
            regime,
            seed: 0,
            interactions: 200_000,
            hidden: DEFAULT_HIDDEN.to_vec(),
            rho_threshold: 0.95,
            workers: 1,
            eval_interval: 20_000,
            max_failures: 3,
            episode_window: 20,
            sac_chunk: 256,
            ppo: default_ppo_config(kind, regime),
            sac: default_sac_config(kind, regime),
        }
    }
}

/// One line of the training metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub kind: AgentKind,
    pub seed: u64,
    pub iteration: u64,
    /// Decisions taken so far.
    pub env_interactions: u64,
    /// Simulator steps so far, gated do-nothing steps included.
    pub env_steps: u64,
    pub episodes: u64,
    /// Mean over the most recent completed training episodes.
    pub mean_return: Option<f64>,
    pub mean_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_mean_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
}

/// Receives metrics rows and new best checkpoints while training runs.
pub trait TrainObserver {
    fn row(&mut self, _row: &MetricsRow) {}
    fn best(&mut self, _checkpoint: &Checkpoint, _row: &MetricsRow) {}
}

impl TrainObserver for () {}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub rows: Vec<MetricsRow>,
    pub interactions: u64,
    pub env_steps: u64,
    pub best_val_length: f64,
    /// Interactions at which the best checkpoint was taken.
    pub best_interactions: u64,
    /// Highest validation mean episode length seen.
    pub best: Checkpoint,
    pub last: Checkpoint,
    /// Set when the run stopped on repeated non-finite updates.
    pub failure: Option<String>,
}

/// A decision together with the rewards collected until the next one.
#[derive(Clone, Debug)]
pub struct SegmentRecord {
    pub top: HeadChoice,
    pub config: Option<HeadChoice>,
    pub reward: f64,
    pub k: usize,
    pub done: bool,
    pub next_input: Vec<f64>,
    /// Level-2 (or native) mask at the next decision; all false after a terminal step.
    pub next_mask: Vec<bool>,
}

struct Live {
    scenario: usize,
    horizon: usize,
    schedule: Vec<Vec<usize>>,
    state: TopologyState,
    obs: Observation,
    t: usize,
    ret: f64,
    pending: Option<Segment<(HeadChoice, Option<HeadChoice>)>>,
}

/// Rollout worker holding a possibly unfinished episode between iterations.
pub struct RolloutWorker {
    rng: ChaCha8Rng,
    live: Option<Live>,
    /// (return, length) of episodes finished since the last drain.
    pub finished: Vec<(f64, usize)>,
}

fn top_mask(kind: AgentKind, engine: &Engine, state: &TopologyState) -> Vec<bool> {
    if kind.is_native() {
        engine.legal_mask(state)
    } else {
        legal_substations(&engine.catalog, state)
    }
}

impl RolloutWorker {
    pub fn new(seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1000 + index as u64);
        RolloutWorker { rng, live: None, finished: Vec::new() }
    }

    /// Plays until `target` segments are closed; returns them and the environment steps taken.
    #[allow(clippy::too_many_arguments)]
    pub fn collect(
        &mut self,
        engine: &Engine,
        scenarios: &[Scenario],
        nets: &PolicyNets,
        gate: OptionsGate,
        gamma: f64,
        aggregation: Aggregation,
        target: usize,
    ) -> Result<(Vec<SegmentRecord>, u64), EngineError> {
        let mut segs = Vec::with_capacity(target);
        let mut steps = 0u64;
        let width = PolicyNets::top_width(nets.kind, &engine.catalog);
        loop {
            if self.live.is_none() {
                let i = self.rng.gen_range(0..scenarios.len());
                let s = &scenarios[i];
                let horizon = engine.config.horizon.min(s.n_steps);
                let state = TopologyState::new(&engine.spec);
                let obs = engine.observe(&state, &s.frame(0))?;
                self.live = Some(Live {
                    scenario: i,
                    horizon,
                    schedule: s.outage_schedule(horizon),
                    state,
                    obs,
                    t: 0,
                    ret: 0.0,
                    pending: None,
                });
            }
            let live = self.live.as_mut().expect("episode started");
            let scenario = &scenarios[live.scenario];
            let t = live.t;
            let mut action = 0;
            if gate.gate(&live.obs) == GateOption::Act {
                let input = normalize_observation(&live.obs);
                if let Some(p) = live.pending.take() {
                    segs.push(SegmentRecord {
                        top: p.payload.0,
                        config: p.payload.1,
                        reward: p.reward,
                        k: p.k,
                        done: false,
                        next_input: input,
                        next_mask: top_mask(nets.kind, engine, &live.state),
                    });
                }
                if segs.len() >= target {
                    break;
                }
                let ctx = DecisionContext {
                    engine,
                    state: &live.state,
                    observation: &live.obs,
                    forecast: scenario.frame(t.saturating_sub(1)),
                    t,
                };
                let d = nets.decide(&ctx, Some(&mut self.rng));
                action = d.action;
                let top = d.top.expect("learned agents report their level-2 choice");
                live.pending = Some(Segment::new((top, d.config), gamma, aggregation));
            }
            let res = engine.step(&mut live.state, t, &scenario.frame(t), &live.schedule[t], action)?;
            steps += 1;
            live.ret += res.reward;
            if let Some(p) = live.pending.as_mut() {
                p.add(res.reward);
            }
            live.obs = res.observation;
            live.t += 1;
            if res.done || live.t >= live.horizon {
                if let Some(p) = live.pending.take() {
                    segs.push(SegmentRecord {
                        top: p.payload.0,
                        config: p.payload.1,
                        reward: p.reward,
                        k: p.k,
                        done: true,
                        next_input: normalize_observation(&live.obs),
                        next_mask: vec![false; width],
                    });
                }
                let length = if res.done_reason.is_game_over() { t } else { live.horizon };
                self.finished.push((live.ret, length));
                self.live = None;
            }
        }
        Ok((segs, steps))
    }
}

struct Progress {
    iteration: u64,
    env_steps: u64,
    decisions: u64,
    episodes: u64,
    recent: VecDeque<(f64, usize)>,
    window: usize,
}

impl Progress {
    fn new(window: usize) -> Self {
        Progress { iteration: 0, env_steps: 0, decisions: 0, episodes: 0, recent: VecDeque::new(), window: window.max(1) }
    }

    fn absorb(&mut self, workers: &mut [RolloutWorker]) {
        for w in workers {
            for e in w.finished.drain(..) {
                self.episodes += 1;
                self.recent.push_back(e);
                if self.recent.len() > self.window {
                    self.recent.pop_front();
                }
            }
        }
    }

    fn row(&self, cfg: &TrainConfig) -> MetricsRow {
        let n = self.recent.len();
        let mean = |f: &dyn Fn(&(f64, usize)) -> f64| (n > 0).then(|| self.recent.iter().map(f).sum::<f64>() / n as f64);
        MetricsRow {
            kind: cfg.kind,
            seed: cfg.seed,
            iteration: self.iteration,
            env_interactions: self.decisions,
            env_steps: self.env_steps,
            episodes: self.episodes,
            mean_return: mean(&|e| e.0),
            mean_length: mean(&|e| e.1 as f64),
            val_mean_length: None,
            policy_loss: None,
            value_loss: None,
            entropy: None,
            kl: None,
        }
    }
}

/// Mean validation episode length of the deterministic policy.
pub fn validate(engine: &Engine, nets: &PolicyNets, gate: OptionsGate, scenarios: &[Scenario]) -> Result<f64, EngineError> {
    let make = || -> Box<dyn Agent> { Box::new(PolicyAgent::new(nets.clone(), gate, false, 0)) };
    Ok(evaluate(engine, &make, scenarios)?.0.mean_episode_length)
}

struct Best {
    length: f64,
    interactions: u64,
    checkpoint: Option<Checkpoint>,
}

impl Best {
    fn offer(&mut self, length: f64, interactions: u64, ck: impl FnOnce() -> Checkpoint, row: &MetricsRow, obs: &mut dyn TrainObserver) {
        if self.checkpoint.is_none() || length > self.length {
            let ck = ck();
            obs.best(&ck, row);
            *self = Best { length, interactions, checkpoint: Some(ck) };
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn collect_all(
    workers: &mut [RolloutWorker],
    engine: &Engine,
    scenarios: &[Scenario],
    nets: &PolicyNets,
    gate: OptionsGate,
    gamma: f64,
    aggregation: Aggregation,
    total: usize,
) -> Result<(Vec<Vec<SegmentRecord>>, u64), EngineError> {
    let n = workers.len();
    let out: Vec<(Vec<SegmentRecord>, u64)> = workers
        .par_iter_mut()
        .enumerate()
        .map(|(i, w)| {
            let share = total / n + usize::from(i < total % n);
            w.collect(engine, scenarios, nets, gate, gamma, aggregation, share.max(1))
        })
        .collect::<Result<_, _>>()?;
    let steps = out.iter().map(|o| o.1).sum();
    Ok((out.into_iter().map(|o| o.0).collect(), steps))
}

/// Trains one agent on `train` and keeps the checkpoint with the best validation mean episode length.
pub fn train(
    engine: &Engine,
    cfg: &TrainConfig,
    train: &[Scenario],
    val: &[Scenario],
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, TrainError> {
    if !cfg.kind.is_trainable() {
        return Err(TrainError::NotTrainable(cfg.kind));
    }
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Config("training and validation sets must be non-empty".into()));
    }
    if cfg.workers == 0 {
        return Err(TrainError::Config("at least one rollout worker is required".into()));
    }
    let gate = OptionsGate::new(cfg.rho_threshold).map_err(|e| TrainError::Config(e.to_string()))?;
    if cfg.kind.is_sac() {
        train_sac(engine, cfg, gate, train, val, observer)
    } else {
        train_ppo(engine, cfg, gate, train, val, observer)
    }
}

fn train_ppo(
    engine: &Engine,
    cfg: &TrainConfig,
    gate: OptionsGate,
    train: &[Scenario],
    val: &[Scenario],
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, TrainError> {
    let p = &cfg.ppo;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = PolicyNets::fresh(cfg.kind, engine, &cfg.hidden, &mut rng).map_err(|e| TrainError::Config(e.to_string()))?;
    let mut actor = Learner::new(init.actor, p.lr);
    let mut config_actor = init.config_actor.map(|c| Learner::new(c, p.lr));
    let mut value = Learner::new(Mlp::new(engine.spec.observation_len(), &cfg.hidden, 1, 1.0, &mut rng), p.lr);
    let mut workers: Vec<RolloutWorker> = (0..cfg.workers).map(|i| RolloutWorker::new(cfg.seed, i)).collect();
    let mut progress = Progress::new(cfg.episode_window);
    let mut rows = Vec::new();
    let mut best = Best { length: 0.0, interactions: 0, checkpoint: None };
    let mut failures = 0;
    let mut failure = None;
    let mut next_eval = 0u64;

    let snapshot = |a: &Learner, c: &Option<Learner>| PolicyNets {
        kind: cfg.kind,
        actor: a.net.clone(),
        config_actor: c.as_ref().map(|l| l.net.clone()),
    };

    let mut row = progress.row(cfg);
    loop {
        let nets = snapshot(&actor, &config_actor);
        let finished = progress.decisions >= cfg.interactions || failure.is_some();
        if progress.decisions >= next_eval || finished {
            let len = validate(engine, &nets, gate, val)?;
            row.val_mean_length = Some(len);
            let value_net = value.net.clone();
            best.offer(len, progress.decisions, || nets.to_checkpoint(engine, vec![("value".into(), value_net)]), &row, observer);
            next_eval = progress.decisions + cfg.eval_interval.max(1);
        }
        observer.row(&row);
        rows.push(row);
        if finished {
            break;
        }

        let (per_worker, steps) = collect_all(&mut workers, engine, train, &nets, gate, p.gamma, p.aggregation, p.batch)?;
        progress.env_steps += steps;
        progress.absorb(&mut workers);

        let mut top = Vec::new();
        let mut conf = Vec::new();
        for segs in &per_worker {
            if segs.is_empty() {
                continue;
            }
            let mut inputs: Vec<&[f64]> = segs.iter().map(|s| s.top.input.as_slice()).collect();
            inputs.push(&segs.last().expect("non-empty").next_input);
            let x = crate::rl::rows_to_matrix(inputs.into_iter(), value.net.input_dim());
            let v = value.net.forward(x.view()).map_err(|e| TrainError::Config(e.to_string()))?;
            let values: Vec<f64> = v.column(0).to_vec();
            let rewards: Vec<f64> = segs.iter().map(|s| s.reward).collect();
            let dones: Vec<bool> = segs.iter().map(|s| s.done).collect();
            let ks: Vec<usize> = segs.iter().map(|s| s.k).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, &ks, p.gamma, p.lambda)
                .map_err(|e| TrainError::Config(e.to_string()))?;
            for (i, s) in segs.iter().enumerate() {
                top.push(head_sample(&s.top, adv[i], ret[i]));
                if let Some(c) = &s.config {
                    conf.push(head_sample(c, adv[i], ret[i]));
                }
            }
        }
        progress.decisions += top.len() as u64;
        progress.iteration += 1;

        row = progress.row(cfg);
        let backup = (actor.clone(), config_actor.clone(), value.clone());
        let mut result = ppo_update(&mut actor, Some(&mut value), &top, p, &mut rng);
        if let (Ok(_), Some(c)) = (&result, config_actor.as_mut()) {
            if !conf.is_empty() {
                if let Err(e) = ppo_policy_update(c, &conf, p, &mut rng) {
                    result = Err(e);
                }
            }
        }
        match result {
            Ok(st) => {
                failures = 0;
                row.policy_loss = Some(st.policy_loss);
                row.value_loss = Some(st.value_loss);
                row.entropy = Some(st.entropy);
                row.kl = Some(st.kl);
            }
            Err(e) => {
                (actor, config_actor, value) = backup;
                failures += 1;
                if failures > cfg.max_failures {
                    failure = Some(format!("{e} (after {failures} consecutive rollbacks)"));
                }
            }
        }
    }

    let last = snapshot(&actor, &config_actor).to_checkpoint(engine, vec![("value".into(), value.net.clone())]);
    Ok(TrainOutcome {
        rows,
        interactions: progress.decisions,
        env_steps: progress.env_steps,
        best_val_length: best.length,
        best_interactions: best.interactions,
        best: best.checkpoint.unwrap_or_else(|| last.clone()),
        last,
        failure,
    })
}

fn head_sample(h: &HeadChoice, advantage: f64, ret: f64) -> PpoSample {
    PpoSample {
        obs: h.input.clone(),
        action: h.index,
        mask: h.mask.clone(),
        old_probs: h.probs.clone(),
        advantage,
        ret,
    }
}

fn train_sac(
    engine: &Engine,
    cfg: &TrainConfig,
    gate: OptionsGate,
    train: &[Scenario],
    val: &[Scenario],
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, TrainError> {
    let s = &cfg.sac;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = PolicyNets::fresh(cfg.kind, engine, &cfg.hidden, &mut rng).map_err(|e| TrainError::Config(e.to_string()))?;
    let d = engine.spec.observation_len();
    let w = PolicyNets::top_width(cfg.kind, &engine.catalog);
    let q1 = Mlp::new(d, &cfg.hidden, w, 1.0, &mut rng);
    let q2 = Mlp::new(d, &cfg.hidden, w, 1.0, &mut rng);
    let mut nets = SacNets::new(init.actor, q1, q2, s.lr);
    let mut replay = PrioritizedReplay::new(s.buffer_capacity, s.replay_alpha, s.replay_beta);
    let mut workers: Vec<RolloutWorker> = (0..cfg.workers).map(|i| RolloutWorker::new(cfg.seed, i)).collect();
    let mut progress = Progress::new(cfg.episode_window);
    let mut rows = Vec::new();
    let mut best = Best { length: 0.0, interactions: 0, checkpoint: None };
    let mut failures = 0;
    let mut failure = None;
    let mut next_eval = 0u64;
    let mut owed = 0.0f64;
    let mut good = nets.clone();

    let policy = |n: &SacNets| PolicyNets { kind: cfg.kind, actor: n.actor.net.clone(), config_actor: None };
    let critics = |n: &SacNets| vec![("q1".to_string(), n.q1.net.clone()), ("q2".to_string(), n.q2.net.clone())];

    let mut row = progress.row(cfg);
    loop {
        let pn = policy(&nets);
        let finished = progress.decisions >= cfg.interactions || failure.is_some();
        if progress.decisions >= next_eval || finished {
            let len = validate(engine, &pn, gate, val)?;
            row.val_mean_length = Some(len);
            let extra = critics(&nets);
            best.offer(len, progress.decisions, || pn.to_checkpoint(engine, extra), &row, observer);
            next_eval = progress.decisions + cfg.eval_interval.max(1);
            good = nets.clone();
        }
        observer.row(&row);
        rows.push(row);
        if finished {
            break;
        }

        let (per_worker, steps) =
            collect_all(&mut workers, engine, train, &pn, gate, s.gamma, Aggregation::RawSum, cfg.sac_chunk)?;
        progress.env_steps += steps;
        progress.absorb(&mut workers);
        for seg in per_worker.into_iter().flatten() {
            replay.push(Transition {
                obs: seg.top.input,
                action: seg.top.index,
                reward: seg.reward,
                next_obs: seg.next_input,
                done: seg.done,
                k: seg.k,
                mask: seg.top.mask,
                next_mask: seg.next_mask,
            });
            progress.decisions += 1;
            owed += s.updates_per_transition;
        }
        progress.iteration += 1;

        row = progress.row(cfg);
        if replay.len() >= s.learning_starts.max(s.batch) {
            let n = owed.floor() as usize;
            owed -= n as f64;
            let mut acc = (0.0, 0.0, 0.0);
            let mut done = 0;
            for _ in 0..n {
                match sac_update(&mut nets, &mut replay, s, &mut rng) {
                    Ok(st) if nets.actor.net.is_finite() && nets.q1.net.is_finite() && nets.q2.net.is_finite() => {
                        failures = 0;
                        acc.0 += st.actor_loss;
                        acc.1 += st.critic_loss;
                        acc.2 += st.entropy;
                        done += 1;
                    }
                    other => {
                        let msg = match other {
                            Err(e) => e.to_string(),
                            Ok(_) => RlError::NonFinite { what: "parameters", update: nets.updates, detail: String::new() }
                                .to_string(),
                        };
                        nets = good.clone();
                        failures += 1;
                        if failures > cfg.max_failures {
                            failure = Some(format!("{msg} (after {failures} consecutive rollbacks)"));
                        }
                        break;
                    }
                }
            }
            if done > 0 {
                let k = done as f64;
                row.policy_loss = Some(acc.0 / k);
                row.value_loss = Some(acc.1 / k);
                row.entropy = Some(acc.2 / k);
            }
        } else {
            owed = 0.0;
        }
    }

    let last = policy(&nets).to_checkpoint(engine, critics(&nets));
    Ok(TrainOutcome {
        rows,
        interactions: progress.decisions,
        env_steps: progress.env_steps,
        best_val_length: best.length,
        best_interactions: best.interactions,
        best: best.checkpoint.unwrap_or_else(|| last.clone()),
        last,
        failure,
    })
}
