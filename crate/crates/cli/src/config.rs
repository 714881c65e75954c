//! Experiment files: agent, regime, seeds and hyperparameter overrides.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use topohrl::agents::AgentKind;
use topohrl::train::{Regime, TrainConfig};

/// Declarative experiment. Fields under `[train]` are merged onto the
/// defaults for the agent kind and regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub agent: AgentKind,
    #[serde(default)]
    pub regime: Regime,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interactions: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_interval: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_train_scenarios: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<toml::Table>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn new(agent: AgentKind) -> Self {
        ExperimentConfig {
            agent,
            regime: Regime::default(),
            seeds: default_seeds(),
            interactions: None,
            eval_interval: None,
            scenarios: None,
            out: None,
            max_train_scenarios: None,
            train: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| crate::UsageError(format!("{}: {e}", path.display())).into())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Training configuration for one seed: regime defaults, then `[train]`, then the top-level fields.
    pub fn resolve(&self, seed: u64, workers: usize) -> Result<TrainConfig> {
        let base = TrainConfig { workers, ..TrainConfig::new(self.agent, self.regime) };
        let mut value = toml::Value::try_from(&base)?;
        if let Some(over) = &self.train {
            merge(&mut value, &toml::Value::Table(over.clone()));
        }
        let mut cfg: TrainConfig =
            value.try_into().map_err(|e| crate::UsageError(format!("[train] overrides: {e}")))?;
        if cfg.kind != self.agent || cfg.regime != self.regime {
            return Err(crate::UsageError("set agent and regime at the top level, not under [train]".into()).into());
        }
        cfg.seed = seed;
        if let Some(n) = self.interactions {
            cfg.interactions = n;
        }
        if let Some(n) = self.eval_interval {
            cfg.eval_interval = n;
        }
        Ok(cfg)
    }
}

fn merge(base: &mut toml::Value, over: &toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// `"0,3,7"` lists seeds; a single number `n` means seeds `0..n`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    let nums = parts
        .iter()
        .map(|p| p.parse::<u64>().map_err(|e| format!("bad seed '{p}': {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    match nums.as_slice() {
        [] => Err("no seeds given".into()),
        [n] => Ok((0..*n).collect()),
        _ => Ok(nums),
    }
}
