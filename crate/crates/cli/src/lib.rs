//! Subcommands of the `topohrl` binary.

pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use topohrl::actions::{enumerate_catalog, FilterRules, PrimitiveAction};
use topohrl::agents::{build_agent, Agent, AgentConfig, AgentKind};
use topohrl::engine::{Engine, EpisodeConfig};
use topohrl::grid::{load_grid_spec, GridSpec};
use topohrl::metrics::{evaluate, format_table};
use topohrl::nn::Checkpoint;
use topohrl::scenario::{
    attach_outages, generate_scenarios, make_split, read_scenarios, write_scenario, ChronicsParams, OutageRules,
    SplitManifest, SplitSet,
};
use topohrl::train::{train, MetricsRow, Regime, TrainObserver};

use config::ExperimentConfig;

pub const DATA_DIR_ENV: &str = "TOPOHRL_DATA";

/// Usage problems map to exit code 1, everything else to 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Parser, Debug)]
#[command(name = "topohrl", version, about = "Topology control agents for a two-busbar IEEE-14 grid")]
pub struct Cli {
    /// Base directory for scenarios and runs.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "data")]
    pub data_dir: PathBuf,
    /// Grid description file; defaults to the bundled IEEE-14 case.
    #[arg(long, global = true)]
    pub grid: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate scenarios and the difficulty-balanced split.
    Generate(GenerateArgs),
    /// Train a learned agent over one or more seeds.
    Train(TrainArgs),
    /// Evaluate an agent on a scenario set.
    Evaluate(EvaluateArgs),
    /// Render training curves from metrics streams.
    Plot(PlotArgs),
    #[command(subcommand)]
    Catalog(CatalogCommand),
    #[command(subcommand)]
    Agent(AgentCommand),
    #[command(subcommand)]
    Checkpoint(CheckpointCommand),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value = "no_contingencies")]
    pub regime: Regime,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Steps per scenario.
    #[arg(long, default_value_t = 8064)]
    pub steps: usize,
    /// Output directory; defaults to `<data-dir>/<regime>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Experiment file (TOML); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub agent: Option<AgentKind>,
    #[arg(long)]
    pub regime: Option<Regime>,
    /// Comma-separated seeds, or a count `n` meaning seeds 0..n when given as `--seeds n`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Interaction budget per seed.
    #[arg(long)]
    pub interactions: Option<u64>,
    #[arg(long)]
    pub eval_interval: Option<u64>,
    /// Scenario directory holding `chronics/` and `manifest.json`.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use only the first N training scenarios.
    #[arg(long)]
    pub max_train: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SetArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, conflicts_with = "agent_config")]
    pub agent: Option<AgentKind>,
    /// Agent description file (TOML).
    #[arg(long)]
    pub agent_config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    #[arg(long, default_value = "no_contingencies")]
    pub regime: Regime,
    #[arg(long, value_enum, default_value = "test")]
    pub set: SetArg,
    /// Evaluate only the first N scenarios of the set.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Sample from learned policies instead of taking the argmax.
    #[arg(long)]
    pub sample: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-scenario step records.
    #[arg(long)]
    pub records: bool,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Metrics files or directories searched for `metrics.jsonl`.
    #[arg(required = true)]
    pub streams: Vec<PathBuf>,
    #[arg(long, default_value = "curves.svg")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "mean-length")]
    pub metric: plot::Metric,
    /// Draw every seed instead of mean and standard error.
    #[arg(long)]
    pub per_seed: bool,
    #[arg(long, default_value_t = 60)]
    pub points: usize,
}

#[derive(Subcommand, Debug)]
pub enum CatalogCommand {
    /// Print the reduced action catalog.
    Dump {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand, Debug)]
pub enum AgentCommand {
    /// Print the assembled architecture of an agent.
    Describe {
        #[arg(long, conflicts_with = "agent_config")]
        agent: Option<AgentKind>,
        #[arg(long)]
        agent_config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum CheckpointCommand {
    /// Print metadata and per-layer norms of a checkpoint file.
    Inspect { path: PathBuf },
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return usage("--workers must be positive");
    }
    // A global pool may already exist when commands run in-process more than once.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    let ctx = Ctx { data_dir: cli.data_dir, grid: cli.grid, workers };
    match cli.command {
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Plot(a) => plot::cmd_plot(a),
        Command::Catalog(CatalogCommand::Dump { json }) => cmd_catalog(&ctx, json),
        Command::Agent(AgentCommand::Describe { agent, agent_config, checkpoint }) => {
            let engine = ctx.engine()?;
            let cfg = agent_config_from(agent, agent_config.as_deref(), checkpoint, false, 0)?;
            let a = build_agent(&cfg, &engine)?;
            println!("{}", a.describe());
            Ok(())
        }
        Command::Checkpoint(CheckpointCommand::Inspect { path }) => {
            let ck = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
            print!("{}", ck.describe());
            Ok(())
        }
    }
}

pub struct Ctx {
    pub data_dir: PathBuf,
    pub grid: Option<PathBuf>,
    pub workers: usize,
}

impl Ctx {
    pub fn spec(&self) -> Result<GridSpec> {
        match &self.grid {
            Some(p) => load_grid_spec(p).with_context(|| format!("loading grid {}", p.display())),
            None => Ok(GridSpec::ieee14()),
        }
    }

    pub fn engine(&self) -> Result<Engine> {
        let spec = self.spec()?;
        let catalog = enumerate_catalog(&spec, &FilterRules::default());
        Ok(Engine::new(Arc::new(spec), Arc::new(catalog), EpisodeConfig::default()))
    }

    fn scenario_dir(&self, given: Option<PathBuf>, regime: Regime) -> PathBuf {
        given.unwrap_or_else(|| self.data_dir.join(regime.name()))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct GenerateEcho<'a> {
    regime: Regime,
    count: usize,
    seed: u64,
    params: &'a ChronicsParams,
    outage_rules: Option<&'a OutageRules>,
}

fn cmd_generate(ctx: &Ctx, a: GenerateArgs) -> Result<()> {
    if a.count == 0 {
        return usage("--count must be positive");
    }
    let engine = ctx.engine()?;
    let out = ctx.scenario_dir(a.out, a.regime);
    let chronics = out.join("chronics");
    fs::create_dir_all(&chronics).with_context(|| format!("creating {}", chronics.display()))?;
    let params = ChronicsParams { n_steps: a.steps, ..ChronicsParams::default() };
    let rules = OutageRules::for_spec(&engine.spec);
    let mut scenarios = generate_scenarios(&engine.spec, &params, a.count, a.seed);
    if a.regime == Regime::Contingencies {
        scenarios = scenarios.into_iter().map(|s| attach_outages(s, &rules, a.seed)).collect();
    }
    for s in &scenarios {
        write_scenario(&chronics, s)?;
    }
    let manifest = make_split(&engine, &scenarios, a.seed)?;
    manifest.save(&out.join("manifest.json"))?;
    let echo = GenerateEcho {
        regime: a.regime,
        count: a.count,
        seed: a.seed,
        params: &params,
        outage_rules: (a.regime == Regime::Contingencies).then_some(&rules),
    };
    write_json(&out.join("generate.json"), &echo)?;
    println!(
        "wrote {} scenarios to {} (train {}, val {}, test {})",
        scenarios.len(),
        out.display(),
        manifest.train.len(),
        manifest.val.len(),
        manifest.test.len()
    );
    Ok(())
}

fn load_manifest(dir: &Path) -> Result<SplitManifest> {
    let p = dir.join("manifest.json");
    SplitManifest::load(&p).with_context(|| format!("reading {} (run `topohrl generate` first)", p.display()))
}

struct StreamWriter {
    metrics: BufWriter<fs::File>,
    dir: PathBuf,
    error: Option<anyhow::Error>,
}

impl TrainObserver for StreamWriter {
    fn row(&mut self, row: &MetricsRow) {
        let r = serde_json::to_writer(&mut self.metrics, row)
            .map_err(anyhow::Error::from)
            .and_then(|_| self.metrics.write_all(b"\n").map_err(Into::into))
            .and_then(|_| self.metrics.flush().map_err(Into::into));
        if let Err(e) = r {
            self.error.get_or_insert(e);
        }
        if let Some(v) = row.val_mean_length {
            eprintln!(
                "  {} seed {} | {} interactions | validation mean length {v:.1}",
                row.kind, row.seed, row.env_interactions
            );
        }
    }

    fn best(&mut self, ck: &Checkpoint, _row: &MetricsRow) {
        if let Err(e) = ck.save(&self.dir.join("best.ckpt")) {
            self.error.get_or_insert(e.into());
        }
    }
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    status: &'static str,
    failure: Option<String>,
    interactions: u64,
    env_steps: u64,
    best_val_mean_length: f64,
    best_interactions: u64,
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let mut exp = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => match a.agent {
            Some(k) => ExperimentConfig::new(k),
            None => return usage("train needs --agent or --config"),
        },
    };
    if let Some(k) = a.agent {
        exp.agent = k;
    }
    if let Some(r) = a.regime {
        exp.regime = r;
    }
    if let Some(s) = &a.seeds {
        exp.seeds = config::parse_seeds(s).map_err(UsageError)?;
    }
    if a.interactions.is_some() {
        exp.interactions = a.interactions;
    }
    if a.eval_interval.is_some() {
        exp.eval_interval = a.eval_interval;
    }
    if a.scenarios.is_some() {
        exp.scenarios = a.scenarios.clone();
    }
    if a.out.is_some() {
        exp.out = a.out.clone();
    }
    if a.max_train.is_some() {
        exp.max_train_scenarios = a.max_train;
    }
    if !exp.agent.is_trainable() {
        return usage(format!("{} is not trainable", exp.agent));
    }
    if exp.seeds.is_empty() {
        return usage("no seeds given");
    }
    // Resolve every seed's config up front so a bad override fails before any work.
    let configs = exp.seeds.iter().map(|&s| exp.resolve(s, ctx.workers)).collect::<Result<Vec<_>>>()?;

    let engine = ctx.engine()?;
    let scen_dir = ctx.scenario_dir(exp.scenarios.clone(), exp.regime);
    let manifest = load_manifest(&scen_dir)?;
    let mut train_ids = manifest.train.clone();
    if let Some(n) = exp.max_train_scenarios {
        train_ids.truncate(n);
    }
    let chronics = scen_dir.join("chronics");
    let train_set = read_scenarios(&chronics, &train_ids)?;
    let val_set = read_scenarios(&chronics, &manifest.val)?;
    let out = exp.out.clone().unwrap_or_else(|| ctx.data_dir.join("runs").join(exp.regime.name()));
    let agent_dir = out.join(exp.agent.name());
    fs::create_dir_all(&agent_dir).with_context(|| format!("creating {}", agent_dir.display()))?;
    fs::write(agent_dir.join("experiment.toml"), exp.to_toml()?)?;

    let mut failed = 0;
    for cfg in configs {
        let dir = agent_dir.join(format!("seed_{}", cfg.seed));
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("train_config.json"), &cfg)?;
        let file = fs::File::create(dir.join("metrics.jsonl"))?;
        let mut obs = StreamWriter { metrics: BufWriter::new(file), dir: dir.clone(), error: None };
        eprintln!("training {} seed {} ({} interactions)", cfg.kind, cfg.seed, cfg.interactions);
        let outcome = train(&engine, &cfg, &train_set, &val_set, &mut obs)?;
        if let Some(e) = obs.error.take() {
            return Err(e.context("writing training outputs"));
        }
        outcome.best.save(&dir.join("best.ckpt"))?;
        outcome.last.save(&dir.join("last.ckpt"))?;
        let status = if outcome.failure.is_some() { "failed" } else { "ok" };
        if let Some(f) = &outcome.failure {
            failed += 1;
            eprintln!("seed {} failed: {f}", cfg.seed);
        }
        write_json(
            &dir.join("summary.json"),
            &SeedSummary {
                seed: cfg.seed,
                status,
                failure: outcome.failure.clone(),
                interactions: outcome.interactions,
                env_steps: outcome.env_steps,
                best_val_mean_length: outcome.best_val_length,
                best_interactions: outcome.best_interactions,
            },
        )?;
        println!(
            "{} seed {}: {status}, best validation mean length {:.1} at {} interactions",
            cfg.kind, cfg.seed, outcome.best_val_length, outcome.best_interactions
        );
    }
    if failed == exp.seeds.len() {
        bail!("all {failed} seeds failed");
    }
    Ok(())
}

fn agent_config_from(
    agent: Option<AgentKind>,
    file: Option<&Path>,
    checkpoint: Option<PathBuf>,
    sample: bool,
    seed: u64,
) -> Result<AgentConfig> {
    let mut cfg = match (agent, file) {
        (_, Some(p)) => AgentConfig::load(p)?,
        (Some(k), None) => AgentConfig { sample, seed, ..AgentConfig::new(k) },
        (None, None) => return usage("need --agent or --agent-config"),
    };
    if checkpoint.is_some() {
        cfg.checkpoint = checkpoint;
    }
    if cfg.kind.is_trainable() && cfg.checkpoint.is_none() {
        eprintln!("note: {} has no checkpoint, using freshly initialized networks", cfg.kind);
    }
    Ok(cfg)
}

fn cmd_evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let engine = ctx.engine()?;
    let cfg = agent_config_from(a.agent, a.agent_config.as_deref(), a.checkpoint.clone(), a.sample, a.seed)?;
    // Fail on a bad checkpoint before touching scenarios.
    build_agent(&cfg, &engine)?;
    let scen_dir = ctx.scenario_dir(a.scenarios.clone(), a.regime);
    let manifest = load_manifest(&scen_dir)?;
    let mut ids: Vec<usize> = match a.set {
        SetArg::Train => manifest.ids(SplitSet::Train).to_vec(),
        SetArg::Val => manifest.ids(SplitSet::Val).to_vec(),
        SetArg::Test => manifest.ids(SplitSet::Test).to_vec(),
        SetArg::All => manifest.entries.iter().map(|e| e.id).collect(),
    };
    if let Some(n) = a.limit {
        ids.truncate(n);
    }
    let scenarios = read_scenarios(&scen_dir.join("chronics"), &ids)?;
    let make = || -> Box<dyn Agent> { build_agent(&cfg, &engine).expect("agent built once already") };
    let (report, records) = evaluate(&engine, &make, &scenarios)?;
    let name = cfg.kind.name();
    let table = format_table(&[(name, &report)]);
    print!("{table}");
    let out = a.out.unwrap_or_else(|| ctx.data_dir.join("eval").join(a.regime.name()).join(name));
    fs::create_dir_all(&out)?;
    write_json(&out.join("report.json"), &report)?;
    fs::write(out.join("report.txt"), &table)?;
    write_json(&out.join("agent.json"), &cfg)?;
    if a.records {
        let dir = out.join("records");
        fs::create_dir_all(&dir)?;
        for r in &records {
            let f = fs::File::create(dir.join(format!("{:04}.jsonl", r.scenario)))?;
            r.write_jsonl(BufWriter::new(f))?;
        }
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_catalog(ctx: &Ctx, json: bool) -> Result<()> {
    let engine = ctx.engine()?;
    let cat = &engine.catalog;
    if json {
        println!("{}", cat.to_json());
        return Ok(());
    }
    println!("{} actions, {} controllable substations", cat.len(), cat.n_controllable());
    for &s in &cat.controllable_substations {
        let r = cat.range(s)?;
        println!("substation {s:2}: {:2} configurations, actions {}..{}", r.len(), r.start, r.end);
    }
    for (i, a) in cat.actions.iter().enumerate() {
        match a {
            PrimitiveAction::DoNothing => println!("{i:4}  do-nothing"),
            PrimitiveAction::Reconfigure { substation, config } => println!("{i:4}  sub {substation:2}  {config}"),
        }
    }
    Ok(())
}
