//! Synthetic chronics, contingency schedules and the difficulty-balanced split.
//!
//! Values are rounded to 0.01 MW at generation time so the CSV files on
//! disk reproduce the in-memory scenarios exactly.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, GreedyAgent};
use crate::engine::{Engine, EngineError};
use crate::grid::{GenKind, GridSpec, InjectionFrame};
use crate::metrics::evaluate;

pub const STEPS_PER_DAY: usize = 288;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {path} at line {line}: {msg}")]
    Format { path: String, line: usize, msg: String },
    #[error("missing scenario {0}")]
    Missing(usize),
    #[error("manifest: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io { path: path.display().to_string(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutageEvent {
    pub step: usize,
    pub line: usize,
    pub duration_steps: usize,
}

/// Load and generation time series plus an optional outage schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    pub n_steps: usize,
    pub n_load: usize,
    pub n_gen: usize,
    /// Row-major `[n_steps x n_load]`.
    pub load_mw: Vec<f64>,
    /// Row-major `[n_steps x n_gen]`.
    pub gen_mw: Vec<f64>,
    pub outages: Vec<OutageEvent>,
}

impl Scenario {
    pub fn frame(&self, t: usize) -> InjectionFrame<'_> {
        InjectionFrame {
            load_mw: &self.load_mw[t * self.n_load..(t + 1) * self.n_load],
            gen_mw: &self.gen_mw[t * self.n_gen..(t + 1) * self.n_gen],
        }
    }

    /// Lines whose outage starts at each step.
    pub fn outage_schedule(&self, horizon: usize) -> Vec<Vec<usize>> {
        let mut s = vec![Vec::new(); horizon];
        for ev in &self.outages {
            if ev.step < horizon {
                s[ev.step].push(ev.line);
            }
        }
        s
    }

    /// Truncated copy, for quick experiments.
    pub fn truncated(&self, n_steps: usize) -> Scenario {
        let n = n_steps.min(self.n_steps);
        Scenario {
            id: self.id,
            n_steps: n,
            n_load: self.n_load,
            n_gen: self.n_gen,
            load_mw: self.load_mw[..n * self.n_load].to_vec(),
            gen_mw: self.gen_mw[..n * self.n_gen].to_vec(),
            outages: self.outages.iter().copied().filter(|e| e.step < n).collect(),
        }
    }
}

/// Shape parameters of the synthetic load and renewable profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChronicsParams {
    pub n_steps: usize,
    /// Per-scenario demand level drawn uniformly from this range.
    pub level_range: (f64, f64),
    pub daily_amplitude: f64,
    /// Hour of the daily demand peak.
    pub peak_hour: f64,
    pub weekend_factor: f64,
    /// Seasonal drift across the 28 days (fraction of level).
    pub drift_amplitude: f64,
    pub ar_coefficient: f64,
    /// Stationary standard deviation of the multiplicative load noise.
    pub noise_std: f64,
    pub solar_capacity_factor: f64,
    pub wind_mean: f64,
    pub wind_std: f64,
    /// Nuclear share of the residual demand.
    pub nuclear_share: f64,
}

impl Default for ChronicsParams {
    fn default() -> Self {
        ChronicsParams {
            n_steps: 8064,
            level_range: (0.95, 1.25),
            daily_amplitude: 0.22,
            peak_hour: 18.0,
            weekend_factor: 0.88,
            drift_amplitude: 0.06,
            ar_coefficient: 0.985,
            noise_std: 0.04,
            solar_capacity_factor: 0.8,
            wind_mean: 0.35,
            wind_std: 0.2,
            nuclear_share: 0.45,
        }
    }
}

/// Independent random stream per (master seed, scenario, purpose).
pub fn scenario_rng(seed: u64, scenario: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((scenario as u64) << 8 | purpose);
    rng
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn generate_scenario(spec: &GridSpec, params: &ChronicsParams, seed: u64, id: usize) -> Scenario {
    let mut rng = scenario_rng(seed, id, 1);
    let n = params.n_steps;
    let (nd, ng) = (spec.n_load(), spec.n_gen());
    let level = rng.gen_range(params.level_range.0..=params.level_range.1);
    let phase_day = rng.gen_range(0..7);
    let drift_phase = rng.gen_range(0.0..2.0 * PI);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let innov = (1.0 - params.ar_coefficient.powi(2)).sqrt();

    let mut ar = vec![0.0; nd];
    for a in ar.iter_mut() {
        *a = params.noise_std * unit.sample(&mut rng);
    }
    // Per-load peak offsets give the network a non-uniform demand pattern.
    let offsets: Vec<f64> = (0..nd).map(|_| rng.gen_range(-1.5..1.5)).collect();

    let mut load_mw = vec![0.0; n * nd];
    for t in 0..n {
        let hour = (t % STEPS_PER_DAY) as f64 * 24.0 / STEPS_PER_DAY as f64;
        let day = t / STEPS_PER_DAY;
        let weekday = (day + phase_day) % 7;
        let week = if weekday >= 5 { params.weekend_factor } else { 1.0 };
        let drift = 1.0 + params.drift_amplitude * (2.0 * PI * t as f64 / n as f64 + drift_phase).sin();
        for d in 0..nd {
            ar[d] = params.ar_coefficient * ar[d] + params.noise_std * innov * unit.sample(&mut rng);
            let daily = 1.0
                + params.daily_amplitude
                    * (2.0 * PI * (hour - params.peak_hour - offsets[d]) / 24.0).cos();
            let v = spec.loads[d].base_mw * level * week * drift * daily * (1.0 + ar[d]);
            load_mw[t * nd + d] = round2(v.max(0.0));
        }
    }

    let mut gen_mw = vec![0.0; n * ng];
    let mut cloud = 0.0;
    let mut wind = vec![0.0; ng];
    let wind_innov = (1.0 - 0.995f64.powi(2)).sqrt();
    let mut nuclear_smooth: Option<f64> = None;
    for t in 0..n {
        let hour = (t % STEPS_PER_DAY) as f64 * 24.0 / STEPS_PER_DAY as f64;
        let demand: f64 = load_mw[t * nd..(t + 1) * nd].iter().sum();
        cloud = 0.99 * cloud + 0.14 * unit.sample(&mut rng);
        let mut renew = vec![0.0; ng];
        for (g, gen) in spec.generators.iter().enumerate() {
            match gen.kind {
                GenKind::Solar => {
                    let sun = ((hour - 6.0) / 12.0 * PI).sin().max(0.0);
                    let clear = (1.0 - 0.5 * cloud.abs()).clamp(0.2, 1.0);
                    renew[g] = gen.pmax_mw * params.solar_capacity_factor * sun * clear;
                }
                GenKind::Wind => {
                    wind[g] = 0.995 * wind[g] + wind_innov * unit.sample(&mut rng);
                    let cf = (params.wind_mean + params.wind_std * wind[g]).clamp(0.0, 1.0);
                    renew[g] = gen.pmax_mw * cf;
                }
                _ => {}
            }
        }
        let mut renew_total: f64 = renew.iter().sum();
        // Renewables never exceed half of the demand; excess is curtailed.
        if renew_total > 0.5 * demand {
            let k = 0.5 * demand / renew_total;
            renew.iter_mut().for_each(|r| *r *= k);
            renew_total = 0.5 * demand;
        }
        let residual = demand - renew_total;

        let dispatchable: Vec<usize> =
            (0..ng).filter(|&g| !spec.generators[g].kind.is_renewable()).collect();
        let nuclear: Vec<usize> =
            dispatchable.iter().copied().filter(|&g| spec.generators[g].kind == GenKind::Nuclear).collect();
        let flexible: Vec<usize> =
            dispatchable.iter().copied().filter(|&g| spec.generators[g].kind != GenKind::Nuclear).collect();

        let mut out = renew.clone();
        let target_nuc = params.nuclear_share * residual;
        // Nuclear ramps slowly.
        let nuc_total = match nuclear_smooth {
            Some(prev) => prev + 0.02 * (target_nuc - prev),
            None => target_nuc,
        };
        nuclear_smooth = Some(nuc_total);
        let nuc_cap: f64 = nuclear.iter().map(|&g| spec.generators[g].pmax_mw).sum();
        let nuc_total = if flexible.is_empty() { residual } else { nuc_total.min(nuc_cap).min(residual) };
        for &g in &nuclear {
            out[g] = nuc_total * spec.generators[g].pmax_mw / nuc_cap.max(1e-9);
        }
        let flex_need = residual - nuc_total;
        let flex_cap: f64 = flexible.iter().map(|&g| spec.generators[g].pmax_mw).sum();
        for &g in &flexible {
            out[g] = flex_need * spec.generators[g].pmax_mw / flex_cap.max(1e-9);
        }
        for v in out.iter_mut() {
            *v = round2(v.max(0.0));
        }
        // The last dispatchable unit closes the balance exactly.
        if let Some(&last) = dispatchable.last() {
            let others: f64 = (0..ng).filter(|&g| g != last).map(|g| out[g]).sum();
            out[last] = round2(demand - others);
            if out[last] < 0.0 {
                // fall back to the largest dispatchable unit
                out[last] = 0.0;
                let others: f64 = out.iter().sum();
                let big = dispatchable[0];
                out[big] = round2(out[big] + demand - others);
            }
        }
        gen_mw[t * ng..(t + 1) * ng].copy_from_slice(&out);
    }

    Scenario { id, n_steps: n, n_load: nd, n_gen: ng, load_mw, gen_mw, outages: Vec::new() }
}

/// Deterministic in `seed`; scenario `i` gets id `first_id + i`.
pub fn generate_scenarios(spec: &GridSpec, params: &ChronicsParams, count: usize, seed: u64) -> Vec<Scenario> {
    (0..count).into_par_iter().map(|id| generate_scenario(spec, params, seed, id)).collect()
}

/// Substation pairs whose connecting lines may suffer random outages.
pub const OUTAGE_PAIRS: [(usize, usize); 5] = [(3, 4), (3, 6), (3, 8), (6, 8), (11, 12)];

pub fn eligible_outage_lines(spec: &GridSpec) -> Vec<usize> {
    spec.lines
        .iter()
        .filter(|l| {
            OUTAGE_PAIRS.iter().any(|&(a, b)| {
                (l.from_sub == a && l.to_sub == b) || (l.from_sub == b && l.to_sub == a)
            })
        })
        .map(|l| l.id)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageRules {
    pub per_day: usize,
    pub duration_steps: usize,
    pub eligible_lines: Vec<usize>,
}

impl OutageRules {
    pub fn for_spec(spec: &GridSpec) -> Self {
        OutageRules { per_day: 2, duration_steps: 48, eligible_lines: eligible_outage_lines(spec) }
    }
}

/// Two non-overlapping single-line outages per day, 48 steps each.
pub fn attach_outages(mut scenario: Scenario, rules: &OutageRules, seed: u64) -> Scenario {
    let mut rng = scenario_rng(seed, scenario.id, 2);
    let days = scenario.n_steps / STEPS_PER_DAY;
    let dur = rules.duration_steps;
    let mut events: Vec<OutageEvent> = Vec::with_capacity(days * rules.per_day);
    if rules.eligible_lines.is_empty() {
        scenario.outages = events;
        return scenario;
    }
    for day in 0..days {
        for _ in 0..rules.per_day {
            let line = *rules.eligible_lines.choose(&mut rng).unwrap();
            let mut placed = false;
            for _ in 0..10_000 {
                let step = day * STEPS_PER_DAY + rng.gen_range(0..STEPS_PER_DAY);
                let clash = events
                    .iter()
                    .any(|e| step < e.step + e.duration_steps && e.step < step + dur);
                if !clash {
                    events.push(OutageEvent { step, line, duration_steps: dur });
                    placed = true;
                    break;
                }
            }
            assert!(placed, "day too short for {} outages of {dur} steps", rules.per_day);
        }
    }
    events.sort_by_key(|e| e.step);
    scenario.outages = events;
    scenario
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSet {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub id: usize,
    pub difficulty: u32,
    pub bucket: usize,
    pub set: SplitSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub entries: Vec<SplitEntry>,
}

impl SplitManifest {
    pub fn ids(&self, set: SplitSet) -> &[usize] {
        match set {
            SplitSet::Train => &self.train,
            SplitSet::Val => &self.val,
            SplitSet::Test => &self.test,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| ScenarioError::Manifest(e.to_string()))
    }
}

pub const N_BUCKETS: usize = 10;

/// Sorts by difficulty into 10 equal buckets and splits each 70/10/20.
pub fn split_by_difficulty(ids: &[usize], difficulty: &[u32], seed: u64) -> SplitManifest {
    assert_eq!(ids.len(), difficulty.len());
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| (difficulty[i], ids[i]));
    let n = ids.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n);
    let mut start = 0;
    for b in 0..N_BUCKETS {
        let end = (b + 1) * n / N_BUCKETS;
        let mut bucket: Vec<usize> = order[start..end].to_vec();
        bucket.shuffle(&mut rng);
        let m = bucket.len();
        let n_train = (m as f64 * 0.7).round() as usize;
        let n_val = ((m as f64 * 0.1).round() as usize).min(m - n_train);
        for (k, &i) in bucket.iter().enumerate() {
            let set = if k < n_train {
                SplitSet::Train
            } else if k < n_train + n_val {
                SplitSet::Val
            } else {
                SplitSet::Test
            };
            entries.push(SplitEntry { id: ids[i], difficulty: difficulty[i], bucket: b, set });
        }
        start = end;
    }
    let pick = |s: SplitSet| entries.iter().filter(|e| e.set == s).map(|e| e.id).collect::<Vec<_>>();
    SplitManifest { train: pick(SplitSet::Train), val: pick(SplitSet::Val), test: pick(SplitSet::Test), entries }
}

/// Difficulty score: topology-changing actions taken by the greedy expert on the scenario.
pub fn greedy_difficulty(engine: &Engine, scenarios: &[Scenario]) -> Result<Vec<u32>, EngineError> {
    let make = || -> Box<dyn Agent> { Box::new(GreedyAgent::default()) };
    let (report, _) = evaluate(engine, &make, scenarios)?;
    Ok(report.episodes.iter().map(|e| e.topo_changes as u32).collect())
}

/// Runs the greedy expert on every scenario and splits by its action count.
pub fn make_split(engine: &Engine, scenarios: &[Scenario], seed: u64) -> Result<SplitManifest, EngineError> {
    let difficulty = greedy_difficulty(engine, scenarios)?;
    let ids: Vec<usize> = scenarios.iter().map(|s| s.id).collect();
    Ok(split_by_difficulty(&ids, &difficulty, seed))
}

pub fn scenario_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("{id:04}"))
}

fn write_matrix(path: &Path, prefix: &str, cols: usize, data: &[f64]) -> Result<(), ScenarioError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    let header: Vec<String> = (0..cols).map(|c| format!("{prefix}_{c}")).collect();
    let mut buf = header.join(",");
    buf.push('\n');
    for row in data.chunks(cols) {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                buf.push(',');
            }
            buf.push_str(&format!("{v:.2}"));
        }
        buf.push('\n');
    }
    w.write_all(buf.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn read_matrix(path: &Path) -> Result<(usize, Vec<f64>), ScenarioError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| ScenarioError::Format { path: path.display().to_string(), line: 1, msg: "empty".into() })?
        .map_err(io_err(path))?;
    let cols = header.split(',').count();
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            data.push(tok.trim().parse::<f64>().map_err(|e| ScenarioError::Format {
                path: path.display().to_string(),
                line: i + 2,
                msg: e.to_string(),
            })?);
        }
        if data.len() - before != cols {
            return Err(ScenarioError::Format {
                path: path.display().to_string(),
                line: i + 2,
                msg: format!("expected {cols} columns"),
            });
        }
    }
    Ok((cols, data))
}

/// Writes `<root>/<id>/{loads.csv,gens.csv,outages.csv}`.
pub fn write_scenario(root: &Path, s: &Scenario) -> Result<(), ScenarioError> {
    let dir = scenario_dir(root, s.id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_matrix(&dir.join("loads.csv"), "load", s.n_load, &s.load_mw)?;
    write_matrix(&dir.join("gens.csv"), "gen", s.n_gen, &s.gen_mw)?;
    let p = dir.join("outages.csv");
    let mut text = String::from("step,line,duration_steps\n");
    for e in &s.outages {
        text.push_str(&format!("{},{},{}\n", e.step, e.line, e.duration_steps));
    }
    fs::write(&p, text).map_err(io_err(&p))
}

pub fn read_scenario(root: &Path, id: usize) -> Result<Scenario, ScenarioError> {
    let dir = scenario_dir(root, id);
    if !dir.is_dir() {
        return Err(ScenarioError::Missing(id));
    }
    let (n_load, load_mw) = read_matrix(&dir.join("loads.csv"))?;
    let (n_gen, gen_mw) = read_matrix(&dir.join("gens.csv"))?;
    let n_steps = load_mw.len() / n_load.max(1);
    if gen_mw.len() / n_gen.max(1) != n_steps {
        return Err(ScenarioError::Format {
            path: dir.display().to_string(),
            line: 0,
            msg: "loads and gens have different lengths".into(),
        });
    }
    let mut outages = Vec::new();
    let p = dir.join("outages.csv");
    if p.exists() {
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<usize> = line
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| ScenarioError::Format {
                    path: p.display().to_string(),
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            if f.len() != 3 {
                return Err(ScenarioError::Format {
                    path: p.display().to_string(),
                    line: i + 1,
                    msg: "expected step,line,duration_steps".into(),
                });
            }
            outages.push(OutageEvent { step: f[0], line: f[1], duration_steps: f[2] });
        }
    }
    Ok(Scenario { id, n_steps, n_load, n_gen, load_mw, gen_mw, outages })
}

pub fn read_scenarios(root: &Path, ids: &[usize]) -> Result<Vec<Scenario>, ScenarioError> {
    ids.par_iter().map(|&id| read_scenario(root, id)).collect()
}
