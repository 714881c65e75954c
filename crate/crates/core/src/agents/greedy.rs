use super::{Agent, DecisionContext, GateOption, OptionsGate};

/// Outcome of a greedy search: the chosen action and how many candidates were simulated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreedySearch {
    pub action: usize,
    pub score: f64,
    pub simulations: usize,
}

fn search(ctx: &DecisionContext<'_>, candidates: impl Iterator<Item = usize>) -> GreedySearch {
    let mut best = GreedySearch { action: 0, score: f64::INFINITY, simulations: 0 };
    let mut found = false;
    for a in candidates {
        if !ctx.engine.is_legal(ctx.state, a) {
            continue;
        }
        let score = ctx
            .engine
            .simulate(ctx.state, &ctx.forecast, a)
            .map(|o| o.score())
            .unwrap_or(f64::INFINITY);
        best.simulations += 1;
        if !found || score < best.score {
            best.action = a;
            best.score = score;
            found = true;
        }
    }
    if best.score == f64::INFINITY {
        // nothing simulates cleanly
        best.action = 0;
    }
    best
}

/// Simulates every legal action and keeps the one with the lowest resulting max loading.
pub fn greedy_expert_act(ctx: &DecisionContext<'_>) -> GreedySearch {
    search(ctx, 0..ctx.engine.catalog.len())
}

/// Greedy search restricted to one substation's configurations.
pub fn substation_greedy_act(ctx: &DecisionContext<'_>, substation: usize) -> GreedySearch {
    match ctx.engine.catalog.range(substation) {
        Ok(r) if ctx.state.cooldown[substation] == 0 => search(ctx, r.iter()),
        _ => GreedySearch { action: 0, score: f64::INFINITY, simulations: 0 },
    }
}

#[derive(Clone, Debug, Default)]
pub struct GreedyAgent {
    pub gate: OptionsGate,
}

impl GreedyAgent {
    pub fn new(gate: OptionsGate) -> Self {
        GreedyAgent { gate }
    }
}

impl Agent for GreedyAgent {
    fn act(&mut self, ctx: &DecisionContext<'_>) -> usize {
        match self.gate.gate(ctx.observation) {
            GateOption::DoNothing => 0,
            GateOption::Act => greedy_expert_act(ctx).action,
        }
    }

    fn describe(&self) -> String {
        format!("greedy expert (gate rho >= {}), no trainable parameters", self.gate.rho_threshold)
    }
}
