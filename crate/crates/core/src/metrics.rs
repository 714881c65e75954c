//! Episode statistics: lengths, normalized reward, topology and sequence metrics.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::Agent;
use crate::engine::{run_episode, DoneReason, Engine, EngineError, EpisodeRecord};
use crate::grid::TopologyState;
use crate::scenario::Scenario;

/// Number of substations whose canonical configuration is not all-busbar-1.
pub fn topo_depth(state: &TopologyState) -> usize {
    state.canonical_topology().iter().filter(|c| !c.is_default()).count()
}

/// One topology-changing action inside a sequence.
pub type SequenceStep = (usize, String);

/// Maximal runs of at least two consecutive topology-changing steps.
pub fn extract_sequences(record: &EpisodeRecord) -> Vec<Vec<SequenceStep>> {
    let mut out = Vec::new();
    let mut cur: Vec<SequenceStep> = Vec::new();
    let mut last_t: Option<usize> = None;
    for s in &record.steps {
        if !s.topology_changed {
            continue;
        }
        let item = (s.substation.unwrap_or(usize::MAX), s.config.clone().unwrap_or_default());
        if last_t.is_some_and(|t| t + 1 == s.t) {
            cur.push(item);
        } else {
            if cur.len() >= 2 {
                out.push(std::mem::take(&mut cur));
            }
            cur = vec![item];
        }
        last_t = Some(s.t);
    }
    if cur.len() >= 2 {
        out.push(cur);
    }
    out
}

/// Population mean and standard deviation; `None` for an empty sample.
pub fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (Some(m), Some(v.sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub scenario: usize,
    pub length: usize,
    pub done_reason: DoneReason,
    pub total_reward: f64,
    pub normalized_reward: f64,
    pub topo_changes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_scenarios: usize,
    pub horizon: usize,
    pub mean_episode_length: f64,
    /// Per-step mean reward scaled by the horizon, averaged over scenarios.
    pub mean_normalized_reward: f64,
    pub topo_changes: usize,
    pub unsolved_scenarios: usize,
    pub unique_topologies: usize,
    pub topo_depth_mean: Option<f64>,
    pub topo_depth_std: Option<f64>,
    pub unique_sequences: usize,
    pub sequence_length_mean: Option<f64>,
    pub sequence_length_std: Option<f64>,
    pub sequence_repeatability_mean: Option<f64>,
    pub sequence_repeatability_std: Option<f64>,
    /// Share of topology-changing actions per substation.
    pub substation_distribution: BTreeMap<usize, f64>,
    pub episodes: Vec<EpisodeSummary>,
}

/// Aggregates finished episodes. Records must be complete (horizon or game over).
pub fn aggregate(records: &[EpisodeRecord], horizon: usize) -> EvalReport {
    let n = records.len();
    let mut episodes = Vec::with_capacity(n);
    let mut topologies: HashSet<&str> = HashSet::new();
    let mut depths = Vec::new();
    let mut per_sub: BTreeMap<usize, usize> = BTreeMap::new();
    let mut seq_counts: HashMap<Vec<SequenceStep>, usize> = HashMap::new();
    let mut topo_changes = 0;
    for r in records {
        let mut changes = 0;
        for s in &r.steps {
            if s.topology_changed {
                changes += 1;
                depths.push(s.topo_depth as f64);
                if let Some(k) = &s.topology {
                    topologies.insert(k);
                }
                if let Some(sub) = s.substation {
                    *per_sub.entry(sub).or_default() += 1;
                }
            }
        }
        topo_changes += changes;
        for seq in extract_sequences(r) {
            *seq_counts.entry(seq).or_default() += 1;
        }
        let total = r.total_reward();
        let normalized = if r.steps.is_empty() { 0.0 } else { total / r.steps.len() as f64 * horizon as f64 };
        episodes.push(EpisodeSummary {
            scenario: r.scenario,
            length: r.length,
            done_reason: r.done_reason,
            total_reward: total,
            normalized_reward: normalized,
            topo_changes: changes,
        });
    }
    let (depth_mean, depth_std) = mean_std(&depths);
    let lens: Vec<f64> = seq_counts.keys().map(|s| s.len() as f64).collect();
    let reps: Vec<f64> = seq_counts.values().map(|&c| c as f64).collect();
    let (len_mean, len_std) = mean_std(&lens);
    let (rep_mean, rep_std) = mean_std(&reps);
    let total_sub: usize = per_sub.values().sum();
    let denom = n.max(1) as f64;
    EvalReport {
        n_scenarios: n,
        horizon,
        mean_episode_length: episodes.iter().map(|e| e.length as f64).sum::<f64>() / denom,
        mean_normalized_reward: episodes.iter().map(|e| e.normalized_reward).sum::<f64>() / denom,
        topo_changes,
        unsolved_scenarios: episodes.iter().filter(|e| e.length < horizon).count(),
        unique_topologies: topologies.len(),
        topo_depth_mean: depth_mean,
        topo_depth_std: depth_std,
        unique_sequences: seq_counts.len(),
        sequence_length_mean: len_mean,
        sequence_length_std: len_std,
        sequence_repeatability_mean: rep_mean,
        sequence_repeatability_std: rep_std,
        substation_distribution: per_sub.into_iter().map(|(s, c)| (s, c as f64 / total_sub as f64)).collect(),
        episodes,
    }
}

/// Runs one episode per scenario in parallel and aggregates. `make_agent` builds a fresh agent per worker.
pub fn evaluate(
    engine: &Engine,
    make_agent: &(dyn Fn() -> Box<dyn Agent> + Sync),
    scenarios: &[Scenario],
) -> Result<(EvalReport, Vec<EpisodeRecord>), EngineError> {
    let records: Vec<EpisodeRecord> = scenarios
        .par_iter()
        .map(|s| {
            let mut agent = make_agent();
            run_episode(engine, s, agent.as_mut())
        })
        .collect::<Result<_, _>>()?;
    Ok((aggregate(&records, engine.config.horizon), records))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| format!("{x:.2}"))
}

/// Aligned text table, one column per named report.
type Column = (&'static str, Box<dyn Fn(&EvalReport) -> String>);

pub fn format_table(reports: &[(&str, &EvalReport)]) -> String {
    let rows: Vec<Column> = vec![
        ("Mean episode length", Box::new(|r| format!("{:.2}", r.mean_episode_length))),
        ("Mean normalized reward", Box::new(|r| format!("{:.2}", r.mean_normalized_reward))),
        ("# of topo changes", Box::new(|r| r.topo_changes.to_string())),
        ("# unsolved scenarios", Box::new(|r| r.unsolved_scenarios.to_string())),
        ("# of unique topologies", Box::new(|r| r.unique_topologies.to_string())),
        ("Mean topo depth", Box::new(|r| opt(r.topo_depth_mean))),
        ("St. dev. of topo depth", Box::new(|r| opt(r.topo_depth_std))),
        ("# unique sequences", Box::new(|r| r.unique_sequences.to_string())),
        ("Mean sequence length", Box::new(|r| opt(r.sequence_length_mean))),
        ("St. dev. of sequence length", Box::new(|r| opt(r.sequence_length_std))),
        ("Mean sequence repeatability", Box::new(|r| opt(r.sequence_repeatability_mean))),
        ("St. dev. of sequence repeatability", Box::new(|r| opt(r.sequence_repeatability_std))),
    ];
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let cells: Vec<Vec<String>> = reports.iter().map(|(_, r)| rows.iter().map(|(_, f)| f(r)).collect()).collect();
    let col_w: Vec<usize> = reports
        .iter()
        .zip(&cells)
        .map(|((name, _), c)| c.iter().map(String::len).chain([name.len()]).max().unwrap_or(0))
        .collect();
    let mut out = format!("{:label_w$}", "");
    for ((name, _), w) in reports.iter().zip(&col_w) {
        out.push_str(&format!("  {name:>w$}"));
    }
    out.push('\n');
    for (i, (label, _)) in rows.iter().enumerate() {
        out.push_str(&format!("{label:label_w$}"));
        for (c, w) in cells.iter().zip(&col_w) {
            out.push_str(&format!("  {:>w$}", c[i]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StepRecord;

    fn step(t: usize, changed: bool) -> StepRecord {
        StepRecord {
            scenario: 0,
            t,
            action: changed as usize,
            substation: changed.then_some(1),
            config: changed.then(|| format!("c{t}")),
            topology_changed: changed,
            reward: 0.5,
            max_rho: 0.5,
            events: vec![],
            topology: changed.then(|| format!("topo{t}")),
            topo_depth: 1,
            done_reason: DoneReason::None,
        }
    }

    #[test]
    fn sequences_need_two_consecutive_changes() {
        let steps: Vec<StepRecord> = (0..60).map(|t| step(t, [3, 10, 11, 12, 30, 50, 51].contains(&t))).collect();
        let rec = EpisodeRecord { scenario: 0, length: 60, done_reason: DoneReason::Horizon, steps };
        let seqs = extract_sequences(&rec);
        assert_eq!(seqs.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2]);
    }

    #[test]
    fn mean_std_population() {
        assert_eq!(mean_std(&[]), (None, None));
        assert_eq!(mean_std(&[2.0]), (Some(2.0), Some(0.0)));
        assert_eq!(mean_std(&[1.0, 3.0]), (Some(2.0), Some(1.0)));
    }
}
