//! DC power flow over the electrical graph induced by busbar assignments.

use serde::{Deserialize, Serialize};

use crate::grid::{Busbar, ElementRef, GridSpec, InjectionFrame, TopologyState};

/// An occupied (substation, busbar) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub sub: usize,
    pub busbar: Busbar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub line: usize,
    /// Node of the line origin.
    pub from: usize,
    /// Node of the line extremity.
    pub to: usize,
    pub reactance_pu: f64,
}

/// Graph of occupied busbars joined by in-service lines.
#[derive(Clone, Debug)]
pub struct ElectricalGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Net injection per node (generation minus load), MW.
    pub injection_mw: Vec<f64>,
    pub node_gens: Vec<Vec<usize>>,
    pub node_loads: Vec<Vec<usize>>,
    /// Per-line MW limits, indexed by line id.
    pub limit_mw: Vec<f64>,
}

impl ElectricalGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_of(&self, sub: usize, busbar: Busbar) -> Option<usize> {
        self.nodes.iter().position(|n| n.sub == sub && n.busbar == busbar)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub nodes: Vec<usize>,
    pub has_generator: bool,
    pub has_load: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    /// Signed MW flow per line, positive from origin to extremity; 0 when out of service.
    pub line_flow_mw: Vec<f64>,
    pub rho: Vec<f64>,
    pub in_service: Vec<bool>,
    pub islands: Vec<Component>,
    /// Slack node of each generator-bearing component.
    pub slack_nodes: Vec<usize>,
    pub converged: bool,
}

impl FlowSolution {
    pub fn max_rho(&self) -> f64 {
        self.rho.iter().copied().fold(0.0, f64::max)
    }
}

pub fn derive_graph(
    spec: &GridSpec,
    state: &TopologyState,
    inj: &InjectionFrame<'_>,
) -> ElectricalGraph {
    // Node index per (sub, busbar); assigned in substation order, busbar 1 first.
    let mut occupied = vec![[false; 2]; spec.n_sub()];
    for (sub, s) in spec.substations.iter().enumerate() {
        for (pos, e) in s.elements.iter().enumerate() {
            let connected = match *e {
                ElementRef::LineOrigin(l) | ElementRef::LineExtremity(l) => state.line_in_service[l],
                _ => true,
            };
            if connected {
                occupied[sub][state.busbar[sub][pos].index()] = true;
            }
        }
    }
    let mut index = vec![[usize::MAX; 2]; spec.n_sub()];
    let mut nodes = Vec::new();
    for sub in 0..spec.n_sub() {
        for b in [Busbar::One, Busbar::Two] {
            if occupied[sub][b.index()] {
                index[sub][b.index()] = nodes.len();
                nodes.push(Node { sub, busbar: b });
            }
        }
    }
    let node_at = |e: ElementRef| {
        let slot = spec.slot(e);
        index[slot.sub][state.busbar[slot.sub][slot.pos].index()]
    };

    let n = nodes.len();
    let mut injection_mw = vec![0.0; n];
    let mut node_gens = vec![Vec::new(); n];
    let mut node_loads = vec![Vec::new(); n];
    for g in 0..spec.n_gen() {
        let k = node_at(ElementRef::Generator(g));
        injection_mw[k] += inj.gen_mw[g];
        node_gens[k].push(g);
    }
    for d in 0..spec.n_load() {
        let k = node_at(ElementRef::Load(d));
        injection_mw[k] -= inj.load_mw[d];
        node_loads[k].push(d);
    }
    let edges = spec
        .lines
        .iter()
        .filter(|l| state.line_in_service[l.id])
        .map(|l| Edge {
            line: l.id,
            from: node_at(ElementRef::LineOrigin(l.id)),
            to: node_at(ElementRef::LineExtremity(l.id)),
            reactance_pu: l.reactance_pu,
        })
        .collect();

    ElectricalGraph {
        nodes,
        edges,
        injection_mw,
        node_gens,
        node_loads,
        limit_mw: spec.lines.iter().map(|l| l.limit_mw).collect(),
    }
}

/// Connected components over in-service edges, in order of their lowest node.
pub fn detect_islands(graph: &ElectricalGraph) -> Vec<Component> {
    let n = graph.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in &graph.edges {
        let (a, b) = (find(&mut parent, e.from), find(&mut parent, e.to));
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent[hi] = lo;
        }
    }
    let mut comp_of_root = vec![usize::MAX; n];
    let mut comps: Vec<Component> = Vec::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        if comp_of_root[r] == usize::MAX {
            comp_of_root[r] = comps.len();
            comps.push(Component { nodes: Vec::new(), has_generator: false, has_load: false });
        }
        let c = &mut comps[comp_of_root[r]];
        c.nodes.push(v);
        c.has_generator |= !graph.node_gens[v].is_empty();
        c.has_load |= !graph.node_loads[v].is_empty();
    }
    comps
}

pub fn solve_dc(graph: &ElectricalGraph) -> FlowSolution {
    let n_line = graph.limit_mw.len();
    let islands = detect_islands(graph);
    let mut theta = vec![0.0; graph.n_nodes()];
    let mut converged = true;
    let mut slack_nodes = Vec::new();

    let mut local = vec![usize::MAX; graph.n_nodes()];
    for comp in islands.iter().filter(|c| c.has_generator) {
        let slack = *comp
            .nodes
            .iter()
            .filter(|&&v| !graph.node_gens[v].is_empty())
            .min_by_key(|&&v| graph.node_gens[v].iter().min().copied())
            .expect("generator-bearing component");
        slack_nodes.push(slack);
        let others: Vec<usize> = comp.nodes.iter().copied().filter(|&v| v != slack).collect();
        let m = others.len();
        if m == 0 {
            continue;
        }
        for (i, &v) in others.iter().enumerate() {
            local[v] = i;
        }
        let mut b = vec![0.0; m * m];
        let mut p: Vec<f64> = others.iter().map(|&v| graph.injection_mw[v]).collect();
        for e in &graph.edges {
            if !comp.nodes.contains(&e.from) {
                continue;
            }
            let y = 1.0 / e.reactance_pu;
            let (i, j) = (
                (e.from != slack).then(|| local[e.from]),
                (e.to != slack).then(|| local[e.to]),
            );
            if let Some(i) = i {
                b[i * m + i] += y;
            }
            if let Some(j) = j {
                b[j * m + j] += y;
            }
            if let (Some(i), Some(j)) = (i, j) {
                b[i * m + j] -= y;
                b[j * m + i] -= y;
            }
        }
        if solve_dense(&mut b, &mut p, m) {
            for (i, &v) in others.iter().enumerate() {
                theta[v] = p[i];
            }
        } else {
            converged = false;
        }
    }

    let mut line_flow_mw = vec![0.0; n_line];
    let mut rho = vec![0.0; n_line];
    let mut in_service = vec![false; n_line];
    for e in &graph.edges {
        in_service[e.line] = true;
        let f = (theta[e.from] - theta[e.to]) / e.reactance_pu;
        if !f.is_finite() {
            converged = false;
        }
        line_flow_mw[e.line] = f;
        rho[e.line] = f.abs() / graph.limit_mw[e.line];
    }
    FlowSolution { line_flow_mw, rho, in_service, islands, slack_nodes, converged }
}

/// In-place Gaussian elimination with partial pivoting; solution left in `rhs`.
/// Returns false when the matrix is numerically singular.
fn solve_dense(a: &mut [f64], rhs: &mut [f64], n: usize) -> bool {
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if a[piv * n + col].abs() < 1e-12 * scale {
            return false;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            rhs.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut s = rhs[r];
        for k in r + 1..n {
            s -= a[r * n + k] * rhs[k];
        }
        rhs[r] = s / a[r * n + r];
    }
    rhs.iter().all(|x| x.is_finite())
}

/// Derives the graph and solves it in one call.
pub fn solve_state(spec: &GridSpec, state: &TopologyState, inj: &InjectionFrame<'_>) -> (ElectricalGraph, FlowSolution) {
    let graph = derive_graph(spec, state, inj);
    let flow = solve_dc(&graph);
    (graph, flow)
}
