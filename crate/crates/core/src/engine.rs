//! Environment step loop.
//!
//! One step runs in a fixed order: decrement timers and reconnect lines,
//! start scheduled outages, apply the action, solve, enforce the soft
//! line-loading rules (with cascading re-solves), check the hard
//! constraints, compute the reward and build the next observation.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{legal_actions, ActionCatalog, PrimitiveAction};
use crate::agents::{Agent, DecisionContext};
use crate::flow::{solve_state, ElectricalGraph, FlowSolution};
use crate::grid::{
    build_observation, topology_key, GridError, GridSpec, InjectionFrame, Observation, TopologyState,
};
use crate::metrics::topo_depth;
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("illegal action {action} at step {step}")]
    IllegalAction { step: usize, action: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("scenario {0} does not match the grid dimensions")]
    ScenarioShape(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub trip_threshold: f64,
    pub overload_grace_steps: u32,
    pub trip_recovery_steps: u32,
    pub cooldown_steps: u32,
    pub horizon: usize,
    pub outage_duration_steps: u32,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            trip_threshold: 1.5,
            overload_grace_steps: 2,
            trip_recovery_steps: 10,
            cooldown_steps: 3,
            horizon: 8064,
            outage_duration_steps: 48,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    None,
    DemandLost,
    GeneratorDisconnected,
    Island,
    Diverged,
    Horizon,
}

impl DoneReason {
    pub fn is_game_over(self) -> bool {
        !matches!(self, DoneReason::None | DoneReason::Horizon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineEventKind {
    Reconnected,
    OutageStarted,
    Tripped,
    PermanentlyDisconnected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineEvent {
    pub line: usize,
    pub kind: LineEventKind,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub done_reason: DoneReason,
    pub events: Vec<LineEvent>,
    /// Maximum loading right after the action, before any trip.
    pub pre_trip_max_rho: f64,
    pub flow: FlowSolution,
}

/// Margin reward: mean over lines of 1 - (1 - M)^2, M = (L - F)/L clipped at 0.
pub fn compute_reward(flow: &FlowSolution, spec: &GridSpec) -> f64 {
    let n = spec.n_line();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .map(|l| {
            if !flow.in_service[l] {
                return 0.0;
            }
            let f = flow.line_flow_mw[l].abs();
            let lim = spec.lines[l].limit_mw;
            let m = if f <= lim { (lim - f) / lim } else { 0.0 };
            1.0 - (1.0 - m) * (1.0 - m)
        })
        .sum();
    total / n as f64
}

/// Classifies the electrical graph against the hard constraints.
pub fn check_hard_constraints(graph: &ElectricalGraph, flow: &FlowSolution) -> DoneReason {
    let comps = &flow.islands;
    if comps.iter().any(|c| c.has_load && !c.has_generator) {
        return DoneReason::DemandLost;
    }
    let load_of = |c: &crate::flow::Component| -> f64 {
        c.nodes.iter().map(|&v| graph.node_loads[v].len() as f64).sum()
    };
    // The main component is the generator-bearing one serving the most loads.
    let main = comps
        .iter()
        .enumerate()
        .filter(|(_, c)| c.has_generator)
        .max_by(|a, b| load_of(a.1).total_cmp(&load_of(b.1)).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);
    let Some(main) = main else {
        return if comps.iter().any(|c| c.has_load) { DoneReason::DemandLost } else { DoneReason::None };
    };
    let others = || comps.iter().enumerate().filter(move |(i, _)| *i != main).map(|(_, c)| c);
    if others().any(|c| c.has_generator && !c.has_load) {
        return DoneReason::GeneratorDisconnected;
    }
    if others().any(|c| c.has_generator || c.has_load) {
        return DoneReason::Island;
    }
    if !flow.converged {
        return DoneReason::Diverged;
    }
    DoneReason::None
}

/// Result of a one-step look-ahead used by the greedy searches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOutcome {
    pub max_rho: f64,
    pub done_reason: DoneReason,
}

impl SimOutcome {
    /// Greedy score: post-action max loading; game over or divergence scores +inf.
    pub fn score(&self) -> f64 {
        if self.done_reason.is_game_over() || !self.max_rho.is_finite() {
            f64::INFINITY
        } else {
            self.max_rho
        }
    }
}

struct Advance {
    flow: FlowSolution,
    done_reason: DoneReason,
    pre_trip_max_rho: f64,
    events: Vec<LineEvent>,
}

/// Owns the grid description, the action catalog and the rule constants.
#[derive(Clone, Debug)]
pub struct Engine {
    pub spec: Arc<GridSpec>,
    pub catalog: Arc<ActionCatalog>,
    pub config: EpisodeConfig,
}

impl Engine {
    pub fn new(spec: Arc<GridSpec>, catalog: Arc<ActionCatalog>, config: EpisodeConfig) -> Self {
        Engine { spec, catalog, config }
    }

    pub fn is_legal(&self, state: &TopologyState, action: usize) -> bool {
        match self.catalog.actions.get(action) {
            Some(PrimitiveAction::DoNothing) => true,
            Some(PrimitiveAction::Reconfigure { substation, .. }) => state.cooldown[*substation] == 0,
            None => false,
        }
    }

    pub fn legal_mask(&self, state: &TopologyState) -> Vec<bool> {
        legal_actions(&self.catalog, state)
    }

    /// Observation of a state without running the step rules (episode start).
    pub fn observe(&self, state: &TopologyState, inj: &InjectionFrame<'_>) -> Result<Observation, EngineError> {
        let (_, flow) = solve_state(&self.spec, state, inj);
        Ok(build_observation(&self.spec, state, &flow, inj)?)
    }

    pub fn step(
        &self,
        state: &mut TopologyState,
        t: usize,
        inj: &InjectionFrame<'_>,
        outages: &[usize],
        action: usize,
    ) -> Result<StepResult, EngineError> {
        let adv = self.advance(state, t, inj, outages, action)?;
        let reward = if adv.flow.converged { compute_reward(&adv.flow, &self.spec) } else { 0.0 };
        let mut done_reason = adv.done_reason;
        if done_reason == DoneReason::None && t + 1 >= self.config.horizon {
            done_reason = DoneReason::Horizon;
        }
        let observation = build_observation(&self.spec, state, &adv.flow, inj)?;
        Ok(StepResult {
            observation,
            reward,
            done: done_reason != DoneReason::None,
            done_reason,
            events: adv.events,
            pre_trip_max_rho: adv.pre_trip_max_rho,
            flow: adv.flow,
        })
    }

    /// Runs the step rules on a copy of `state` with no outages.
    pub fn simulate(
        &self,
        state: &TopologyState,
        inj: &InjectionFrame<'_>,
        action: usize,
    ) -> Result<SimOutcome, EngineError> {
        let mut scratch = state.clone();
        let adv = self.advance(&mut scratch, 0, inj, &[], action)?;
        let max_rho = if adv.flow.converged { adv.pre_trip_max_rho } else { f64::INFINITY };
        Ok(SimOutcome { max_rho, done_reason: adv.done_reason })
    }

    fn advance(
        &self,
        state: &mut TopologyState,
        t: usize,
        inj: &InjectionFrame<'_>,
        outages: &[usize],
        action: usize,
    ) -> Result<Advance, EngineError> {
        if !self.is_legal(state, action) {
            return Err(EngineError::IllegalAction { step: t, action });
        }
        let cfg = &self.config;
        let mut events = Vec::new();

        for c in state.cooldown.iter_mut() {
            *c = c.saturating_sub(1);
        }
        for l in 0..self.spec.n_line() {
            state.trip_recovery_timer[l] = state.trip_recovery_timer[l].saturating_sub(1);
            state.outage_timer[l] = state.outage_timer[l].saturating_sub(1);
            if !state.line_in_service[l]
                && !state.permanently_disconnected[l]
                && state.trip_recovery_timer[l] == 0
                && state.outage_timer[l] == 0
            {
                state.line_in_service[l] = true;
                state.overload_steps[l] = 0;
                events.push(LineEvent { line: l, kind: LineEventKind::Reconnected });
            }
        }

        for &l in outages {
            state.outage_timer[l] = cfg.outage_duration_steps;
            if state.line_in_service[l] {
                state.line_in_service[l] = false;
                state.overload_steps[l] = 0;
                events.push(LineEvent { line: l, kind: LineEventKind::OutageStarted });
            }
        }

        if let PrimitiveAction::Reconfigure { substation, config } = &self.catalog.actions[action] {
            state.apply_substation_config(*substation, config, cfg.cooldown_steps)?;
        }

        let (mut graph, mut flow) = solve_state(&self.spec, state, inj);
        let pre_trip_max_rho = flow.max_rho();
        let mut overloads_counted = false;
        for _ in 0..=self.spec.n_line() + 1 {
            if !flow.converged {
                break;
            }
            let mut changed = false;
            for l in 0..self.spec.n_line() {
                if state.line_in_service[l] && flow.rho[l] >= cfg.trip_threshold {
                    state.line_in_service[l] = false;
                    state.trip_recovery_timer[l] = cfg.trip_recovery_steps;
                    state.overload_steps[l] = 0;
                    events.push(LineEvent { line: l, kind: LineEventKind::Tripped });
                    changed = true;
                }
            }
            if !changed && !overloads_counted {
                overloads_counted = true;
                for l in 0..self.spec.n_line() {
                    if !state.line_in_service[l] {
                        continue;
                    }
                    if flow.rho[l] >= 1.0 {
                        state.overload_steps[l] += 1;
                        if state.overload_steps[l] > cfg.overload_grace_steps {
                            state.line_in_service[l] = false;
                            state.permanently_disconnected[l] = true;
                            state.overload_steps[l] = 0;
                            events.push(LineEvent { line: l, kind: LineEventKind::PermanentlyDisconnected });
                            changed = true;
                        }
                    } else {
                        state.overload_steps[l] = 0;
                    }
                }
            }
            if !changed {
                break;
            }
            (graph, flow) = solve_state(&self.spec, state, inj);
        }

        let done_reason = check_hard_constraints(&graph, &flow);
        Ok(Advance { flow, done_reason, pre_trip_max_rho, events })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub scenario: usize,
    pub t: usize,
    pub action: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub substation: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<String>,
    pub topology_changed: bool,
    pub reward: f64,
    pub max_rho: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub events: Vec<LineEvent>,
    /// Canonical topology key after the step, recorded when it changed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub topology: Option<String>,
    pub topo_depth: usize,
    pub done_reason: DoneReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scenario: usize,
    /// Steps survived: the horizon when solved, else the index of the failing step.
    pub length: usize,
    pub done_reason: DoneReason,
    pub steps: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn solved(&self, horizon: usize) -> bool {
        self.length >= horizon
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> std::io::Result<EpisodeRecord> {
        let mut steps = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: StepRecord = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            steps.push(s);
        }
        let last = steps.last();
        let done_reason = last.map(|s| s.done_reason).unwrap_or(DoneReason::None);
        let scenario = last.map(|s| s.scenario).unwrap_or(0);
        let length = match done_reason {
            DoneReason::None | DoneReason::Horizon => steps.len(),
            _ => steps.len() - 1,
        };
        Ok(EpisodeRecord { scenario, length, done_reason, steps })
    }
}

/// Plays one scenario to the horizon or the first game over.
pub fn run_episode(engine: &Engine, scenario: &Scenario, agent: &mut dyn Agent) -> Result<EpisodeRecord, EngineError> {
    let spec = &engine.spec;
    if scenario.n_load != spec.n_load() || scenario.n_gen != spec.n_gen() {
        return Err(EngineError::ScenarioShape(scenario.id));
    }
    let horizon = engine.config.horizon.min(scenario.n_steps);
    let schedule = scenario.outage_schedule(horizon);
    agent.begin_episode(scenario.id);
    let mut state = TopologyState::new(spec);
    let mut obs = engine.observe(&state, &scenario.frame(0))?;
    let mut forecast_t = 0;
    let mut steps = Vec::with_capacity(horizon);
    let mut length = horizon;
    let mut done_reason = DoneReason::Horizon;

    #[allow(clippy::needless_range_loop)]
    for t in 0..horizon {
        let action = {
            let ctx = DecisionContext {
                engine,
                state: &state,
                observation: &obs,
                forecast: scenario.frame(forecast_t),
                t,
            };
            agent.act(&ctx)
        };
        let before = state.busbar.clone();
        let inj = scenario.frame(t);
        let res = engine.step(&mut state, t, &inj, &schedule[t], action)?;
        let topology_changed = state.busbar != before;
        let (substation, config) = match &engine.catalog.actions[action] {
            PrimitiveAction::DoNothing => (None, None),
            PrimitiveAction::Reconfigure { substation, config } => (Some(*substation), Some(config.to_string())),
        };
        steps.push(StepRecord {
            scenario: scenario.id,
            t,
            action,
            substation,
            config,
            topology_changed,
            reward: res.reward,
            max_rho: res.observation.max_rho(),
            events: res.events,
            topology: topology_changed.then(|| topology_key(&state.canonical_topology())),
            topo_depth: topo_depth(&state),
            done_reason: res.done_reason,
        });
        obs = res.observation;
        forecast_t = t;
        if res.done {
            done_reason = res.done_reason;
            if res.done_reason.is_game_over() {
                length = t;
            }
            break;
        }
    }
    Ok(EpisodeRecord { scenario: scenario.id, length, done_reason, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{enumerate_catalog, FilterRules};
    use crate::grid::{GenKind, Generator, Line, Load};

    fn toy_spec(lines: &[(usize, usize, f64, f64)], n_sub: usize, loads: &[usize], gens: &[usize]) -> GridSpec {
        GridSpec::new(
            100.0,
            5,
            100,
            vec![1.0; n_sub],
            lines
                .iter()
                .enumerate()
                .map(|(i, &(a, b, x, lim_mw))| Line {
                    id: i,
                    from_sub: a,
                    to_sub: b,
                    reactance_pu: x,
                    // 1 kV nominal: amps = MW * 1000 / sqrt(3)
                    thermal_limit_amps: lim_mw * 1000.0 / 3f64.sqrt(),
                    limit_mw: 0.0,
                })
                .collect(),
            loads.iter().enumerate().map(|(i, &s)| Load { id: i, sub: s, base_mw: 1.0 }).collect(),
            gens.iter()
                .enumerate()
                .map(|(i, &s)| Generator { id: i, sub: s, kind: GenKind::Thermal, pmax_mw: 1000.0 })
                .collect(),
        )
        .unwrap()
    }

    fn engine_for(spec: GridSpec) -> Engine {
        let cat = enumerate_catalog(&spec, &FilterRules::default());
        Engine::new(Arc::new(spec), Arc::new(cat), EpisodeConfig::default())
    }

    #[test]
    fn reward_analytic_cases() {
        let spec = toy_spec(&[(0, 1, 0.1, 10.0)], 2, &[1], &[0]);
        let mk = |f: f64| FlowSolution {
            line_flow_mw: vec![f],
            rho: vec![f.abs() / 10.0],
            in_service: vec![true],
            islands: vec![],
            slack_nodes: vec![],
            converged: true,
        };
        assert_eq!(compute_reward(&mk(0.0), &spec), 1.0);
        assert_eq!(compute_reward(&mk(10.0), &spec), 0.0);
        assert!((compute_reward(&mk(5.0), &spec) - 0.75).abs() < 1e-12);
        assert_eq!(compute_reward(&mk(25.0), &spec), 0.0);
        let mut off = mk(0.0);
        off.in_service[0] = false;
        assert_eq!(compute_reward(&off, &spec), 0.0);
    }

    /// Two parallel lines feeding a load; line 0 limit is what we vary.
    fn parallel(lim0: f64) -> Engine {
        engine_for(toy_spec(&[(0, 1, 0.1, lim0), (0, 1, 0.1, 100.0)], 2, &[1], &[0]))
    }

    #[test]
    fn quiescent_step_has_no_events() {
        let e = parallel(100.0);
        let mut st = TopologyState::new(&e.spec);
        let inj = InjectionFrame { load_mw: &[20.0], gen_mw: &[20.0] };
        let r = e.step(&mut st, 0, &inj, &[], 0).unwrap();
        assert!(!r.done);
        assert!(r.events.is_empty());
        assert_eq!(st.overload_steps, vec![0, 0]);
        assert!((r.observation.rho[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn heavy_overload_trips_immediately_and_recovers_after_ten_steps() {
        // 20 MW split 10/10; line 0 limit 6.25 -> rho = 1.6
        let e = parallel(6.25);
        let mut st = TopologyState::new(&e.spec);
        let inj = InjectionFrame { load_mw: &[20.0], gen_mw: &[20.0] };
        let r = e.step(&mut st, 0, &inj, &[], 0).unwrap();
        assert_eq!(r.events, vec![LineEvent { line: 0, kind: LineEventKind::Tripped }]);
        assert!(!st.line_in_service[0]);
        assert_eq!(st.trip_recovery_timer[0], 10);
        assert!(!r.done);
        // keep load light so the line survives its return
        let light = InjectionFrame { load_mw: &[2.0], gen_mw: &[2.0] };
        for t in 1..10 {
            e.step(&mut st, t, &light, &[], 0).unwrap();
            assert!(!st.line_in_service[0], "back too early at {t}");
        }
        let r = e.step(&mut st, 10, &light, &[], 0).unwrap();
        assert!(st.line_in_service[0]);
        assert!(r.events.contains(&LineEvent { line: 0, kind: LineEventKind::Reconnected }));
    }

    #[test]
    fn mild_overload_gets_two_steps_of_grace() {
        // rho = 10 / 8.333 = 1.2 on line 0
        let e = parallel(25.0 / 3.0);
        let mut st = TopologyState::new(&e.spec);
        let inj = InjectionFrame { load_mw: &[20.0], gen_mw: &[20.0] };
        e.step(&mut st, 0, &inj, &[], 0).unwrap();
        assert_eq!(st.overload_steps[0], 1);
        e.step(&mut st, 1, &inj, &[], 0).unwrap();
        assert_eq!(st.overload_steps[0], 2);
        assert!(st.line_in_service[0]);
        let r = e.step(&mut st, 2, &inj, &[], 0).unwrap();
        assert!(st.permanently_disconnected[0]);
        assert!(r.events.contains(&LineEvent { line: 0, kind: LineEventKind::PermanentlyDisconnected }));
        // all 20 MW now on line 1 (limit 100): no further trips
        assert!(!r.done);
        for t in 3..40 {
            e.step(&mut st, t, &inj, &[], 0).unwrap();
            assert!(!st.line_in_service[0]);
        }
    }

    #[test]
    fn overload_counter_resets_when_relieved() {
        let e = parallel(25.0 / 3.0);
        let mut st = TopologyState::new(&e.spec);
        let hi = InjectionFrame { load_mw: &[20.0], gen_mw: &[20.0] };
        let lo = InjectionFrame { load_mw: &[10.0], gen_mw: &[10.0] };
        e.step(&mut st, 0, &hi, &[], 0).unwrap();
        e.step(&mut st, 1, &hi, &[], 0).unwrap();
        e.step(&mut st, 2, &lo, &[], 0).unwrap();
        assert_eq!(st.overload_steps[0], 0);
        e.step(&mut st, 3, &hi, &[], 0).unwrap();
        assert!(st.line_in_service[0]);
    }

    #[test]
    fn cascade_trip_causes_demand_loss() {
        // single radial line: 1.2 for three steps -> disconnect -> load stranded
        let e = engine_for(toy_spec(&[(0, 1, 0.1, 10.0)], 2, &[1], &[0]));
        let mut st = TopologyState::new(&e.spec);
        let inj = InjectionFrame { load_mw: &[12.0], gen_mw: &[12.0] };
        assert!(!e.step(&mut st, 0, &inj, &[], 0).unwrap().done);
        assert!(!e.step(&mut st, 1, &inj, &[], 0).unwrap().done);
        let r = e.step(&mut st, 2, &inj, &[], 0).unwrap();
        assert!(r.done);
        assert_eq!(r.done_reason, DoneReason::DemandLost);
    }

    #[test]
    fn stranded_generator_and_split_island() {
        // 0 gen, 1 load, 2 gen only: losing line 1-2 strands generator 1
        let e = engine_for(toy_spec(&[(0, 1, 0.1, 100.0), (1, 2, 0.1, 100.0)], 3, &[1], &[0, 2]));
        let mut st = TopologyState::new(&e.spec);
        let inj = InjectionFrame { load_mw: &[10.0], gen_mw: &[5.0, 5.0] };
        let r = e.step(&mut st, 0, &inj, &[1], 0).unwrap();
        assert_eq!(r.done_reason, DoneReason::GeneratorDisconnected);

        // 0 gen+load, 1 gen+load: the only line goes out -> two live islands
        let e = engine_for(toy_spec(&[(0, 1, 0.1, 100.0)], 2, &[0, 1], &[0, 1]));
        let mut st = TopologyState::new(&e.spec);
        let inj = InjectionFrame { load_mw: &[5.0, 5.0], gen_mw: &[5.0, 5.0] };
        let r = e.step(&mut st, 0, &inj, &[0], 0).unwrap();
        assert_eq!(r.done_reason, DoneReason::Island);
    }

    #[test]
    fn outage_lasts_exactly_its_duration() {
        let e = parallel(100.0);
        let mut st = TopologyState::new(&e.spec);
        let inj = InjectionFrame { load_mw: &[20.0], gen_mw: &[20.0] };
        e.step(&mut st, 5, &inj, &[0], 0).unwrap();
        for t in 6..53 {
            e.step(&mut st, t, &inj, &[], 0).unwrap();
            assert!(!st.line_in_service[0], "reconnected early at {t}");
        }
        e.step(&mut st, 53, &inj, &[], 0).unwrap();
        assert!(st.line_in_service[0]);
    }

    #[test]
    fn cooldown_rejects_for_three_steps() {
        let spec = GridSpec::ieee14();
        let e = engine_for(spec);
        let mut st = TopologyState::new(&e.spec);
        let loads: Vec<f64> = e.spec.loads.iter().map(|l| l.base_mw * 0.5).collect();
        let total: f64 = loads.iter().sum();
        let gens = vec![total, 0.0, 0.0, 0.0, 0.0];
        let inj = InjectionFrame { load_mw: &loads, gen_mw: &gens };
        let a = e.catalog.range(1).unwrap().start + 1;
        e.step(&mut st, 0, &inj, &[], a).unwrap();
        for t in 1..=3 {
            assert!(matches!(
                e.step(&mut st.clone(), t, &inj, &[], a),
                Err(EngineError::IllegalAction { step, .. }) if step == t
            ));
            e.step(&mut st, t, &inj, &[], 0).unwrap();
        }
        assert!(e.step(&mut st, 4, &inj, &[], a).is_ok());
    }

    #[test]
    fn step_is_deterministic() {
        let e = parallel(25.0 / 3.0);
        let inj = InjectionFrame { load_mw: &[20.0], gen_mw: &[20.0] };
        let mut a = TopologyState::new(&e.spec);
        let mut b = a.clone();
        for t in 0..5 {
            let ra = e.step(&mut a, t, &inj, &[], 0).unwrap();
            let rb = e.step(&mut b, t, &inj, &[], 0).unwrap();
            assert_eq!(ra.observation, rb.observation);
            assert_eq!(ra.reward, rb.reward);
            assert_eq!(a, b);
        }
    }
}
