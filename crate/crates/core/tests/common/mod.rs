//! Independent oracles and fixtures shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use rand::Rng;

use topohrl::actions::{enumerate_catalog, FilterRules};
use topohrl::engine::{DoneReason, Engine, EpisodeConfig, EpisodeRecord, StepRecord};
use topohrl::flow::{ElectricalGraph, FlowSolution};
use topohrl::grid::{Busbar, ElementRef, GenKind, Generator, GridSpec, Line, Load, Substation, TopologyState};
use topohrl::rl::toy::ToyEnv;

/// Every distinct busbar split of a substation that a careful operator would accept:
/// all 2^n assignments, mirrors merged, each used busbar holding two or more
/// elements including a line end.
pub fn brute_force_configs(sub: &Substation) -> BTreeSet<Vec<u8>> {
    let n = sub.elements.len();
    let mut out = BTreeSet::new();
    for mask in 0u32..(1 << n) {
        let mut v: Vec<u8> = (0..n).map(|i| if mask >> i & 1 == 1 { 2 } else { 1 }).collect();
        if v.first() == Some(&2) {
            v.iter_mut().for_each(|b| *b = 3 - *b);
        }
        let ok = [1u8, 2].iter().all(|&bus| {
            let members: Vec<&ElementRef> = sub.elements.iter().zip(&v).filter(|(_, b)| **b == bus).map(|(e, _)| e).collect();
            members.is_empty()
                || (members.len() >= 2
                    && members.iter().any(|e| matches!(e, ElementRef::LineOrigin(_) | ElementRef::LineExtremity(_))))
        });
        if ok {
            out.insert(v);
        }
    }
    out
}

pub fn codes(config: &[Busbar]) -> Vec<u8> {
    config.iter().map(|b| b.code()).collect()
}

/// Uniformly random busbar assignment for every substation.
pub fn random_topology<R: Rng>(spec: &GridSpec, rng: &mut R) -> TopologyState {
    let mut st = TopologyState::new(spec);
    for sub in st.busbar.iter_mut() {
        for b in sub.iter_mut() {
            *b = if rng.gen_bool(0.5) { Busbar::Two } else { Busbar::One };
        }
    }
    for l in 0..spec.n_line() {
        if rng.gen_bool(0.1) {
            st.line_in_service[l] = false;
        }
    }
    st
}

/// Nodes reachable from each node by breadth-first search, as sorted groups.
pub fn bfs_components(graph: &ElectricalGraph) -> BTreeSet<Vec<usize>> {
    let n = graph.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for e in &graph.edges {
        adj[e.from].push(e.to);
        adj[e.to].push(e.from);
    }
    let mut seen = vec![false; n];
    let mut out = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    q.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.insert(comp);
    }
    out
}

/// Largest |net outflow - injection| over the nodes of generator-bearing components.
/// The slack node of each component absorbs the component's imbalance.
pub fn conservation_residual(graph: &ElectricalGraph, flow: &FlowSolution) -> f64 {
    let n = graph.nodes.len();
    let mut outflow = vec![0.0; n];
    for e in &graph.edges {
        outflow[e.from] += flow.line_flow_mw[e.line];
        outflow[e.to] -= flow.line_flow_mw[e.line];
    }
    let mut worst: f64 = 0.0;
    for comp in &flow.islands {
        if !comp.has_generator {
            // nothing to balance against: every flow must be zero
            for &v in &comp.nodes {
                worst = worst.max(outflow[v].abs());
            }
            continue;
        }
        let slack = *comp.nodes.iter().find(|v| flow.slack_nodes.contains(v)).expect("component has a slack");
        let imbalance: f64 = comp.nodes.iter().map(|&v| graph.injection_mw[v]).sum();
        for &v in &comp.nodes {
            let expected = if v == slack { graph.injection_mw[v] - imbalance } else { graph.injection_mw[v] };
            worst = worst.max((outflow[v] - expected).abs());
        }
    }
    worst
}

/// Grid with 1 kV substations so a line limit of `mw` is `mw * 1000 / sqrt(3)` amps.
pub fn toy_spec(lines: &[(usize, usize, f64, f64)], n_sub: usize, loads: &[usize], gens: &[usize]) -> GridSpec {
    GridSpec::new(
        100.0,
        5,
        1000,
        vec![1.0; n_sub],
        lines
            .iter()
            .enumerate()
            .map(|(i, &(a, b, x, mw))| Line {
                id: i,
                from_sub: a,
                to_sub: b,
                reactance_pu: x,
                thermal_limit_amps: mw * 1000.0 / 3f64.sqrt(),
                limit_mw: 0.0,
            })
            .collect(),
        loads.iter().enumerate().map(|(i, &s)| Load { id: i, sub: s, base_mw: 1.0 }).collect(),
        gens.iter()
            .enumerate()
            .map(|(i, &s)| Generator { id: i, sub: s, kind: GenKind::Thermal, pmax_mw: 1000.0 })
            .collect(),
    )
    .expect("valid toy grid")
}

pub fn engine_for(spec: GridSpec) -> Engine {
    let cat = enumerate_catalog(&spec, &FilterRules::default());
    Engine::new(Arc::new(spec), Arc::new(cat), EpisodeConfig::default())
}

pub fn ieee14_engine() -> Engine {
    engine_for(GridSpec::ieee14())
}

/// Injections scaled from the base loads, all generation on the first unit.
pub fn light_injections(spec: &GridSpec, scale: f64) -> (Vec<f64>, Vec<f64>) {
    let loads: Vec<f64> = spec.loads.iter().map(|l| l.base_mw * scale).collect();
    let mut gens = vec![0.0; spec.n_gen()];
    gens[0] = loads.iter().sum();
    (loads, gens)
}

/// Optimal and policy values of a finite-horizon toy MDP by backward induction.
pub struct ToyDp {
    pub n_states: usize,
    pub n_actions: usize,
    /// (next, reward, terminal) per state and action.
    pub table: Vec<Vec<(usize, f64, bool)>>,
    pub horizon: usize,
    pub gamma: f64,
}

impl ToyDp {
    pub fn from_env<E: ToyEnv + Clone>(env: &E, gamma: f64) -> Self {
        let (ns, na) = (env.n_states(), env.n_actions());
        let mut probe = env.clone();
        // the terminal state itself is never left; mark moves out of range as terminal
        let table = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        let (n, r, term) = probe.step(s, a);
                        if n < ns { (n, r, term) } else { (s, 0.0, true) }
                    })
                    .collect()
            })
            .collect();
        ToyDp { n_states: ns, n_actions: na, table, horizon: env.max_steps(), gamma }
    }

    fn backup(&self, choose: impl Fn(usize, &[f64]) -> f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        for _ in 0..self.horizon {
            let next: Vec<f64> = (0..self.n_states)
                .map(|s| {
                    let q: Vec<f64> = self.table[s]
                        .iter()
                        .map(|&(n, r, term)| r + if term { 0.0 } else { self.gamma * v[n] })
                        .collect();
                    choose(s, &q)
                })
                .collect();
            v = next;
        }
        v
    }

    pub fn optimal(&self, start: usize) -> f64 {
        self.backup(|_, q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max))[start]
    }

    pub fn policy_value(&self, start: usize, policy: &[Vec<f64>]) -> f64 {
        self.backup(|s, q| q.iter().zip(&policy[s]).map(|(q, p)| q * p).sum())[start]
    }
}

/// Step record with only the fields the statistics read.
pub fn record_step(t: usize, change: Option<(usize, &str, &str, usize)>) -> StepRecord {
    StepRecord {
        scenario: 0,
        t,
        action: change.map_or(0, |_| 1),
        substation: change.map(|c| c.0),
        config: change.map(|c| c.1.to_string()),
        topology_changed: change.is_some(),
        reward: 0.5,
        max_rho: 0.5,
        events: Vec::new(),
        topology: change.map(|c| c.2.to_string()),
        topo_depth: change.map_or(0, |c| c.3),
        done_reason: DoneReason::None,
    }
}

/// An episode of `len` steps with topology changes at the given steps.
pub fn record(scenario: usize, len: usize, changes: &[(usize, usize, &str, &str, usize)], reason: DoneReason) -> EpisodeRecord {
    let mut steps: Vec<StepRecord> = (0..len)
        .map(|t| {
            let c = changes.iter().find(|c| c.0 == t).map(|c| (c.1, c.2, c.3, c.4));
            let mut s = record_step(t, c);
            s.scenario = scenario;
            s
        })
        .collect();
    if let Some(last) = steps.last_mut() {
        last.done_reason = reason;
    }
    let length = if reason.is_game_over() { len - 1 } else { len };
    EpisodeRecord { scenario, length, done_reason: reason, steps }
}
