//! Checkpoint directories: `manifest.json` plus one `*.params.json` per
//! network.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{parse_config_str, RunConfig};
use crate::brhpo::{CheckpointSink, HierAgent, HierPolicies, ACT_DIM};
use crate::error::{Error, Result};
use crate::netopt::Mlp;
use crate::sac::{GaussianPolicy, SacLearner};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub env_step: u64,
    /// Flat run configuration, as accepted by the config parser.
    pub config: BTreeMap<String, Value>,
    /// Network name to file name, relative to the directory.
    pub networks: BTreeMap<String, String>,
}

fn learner_nets<'a>(level: &str, l: &'a SacLearner) -> Vec<(String, &'a Mlp)> {
    vec![
        (format!("{level}_policy"), &l.policy.trunk),
        (format!("{level}_q1"), &l.critic.q1),
        (format!("{level}_q2"), &l.critic.q2),
        (format!("{level}_target_q1"), &l.target.q1),
        (format!("{level}_target_q2"), &l.target.q2),
    ]
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every network of `agent` and a manifest into `dir`.
pub fn save_checkpoint(dir: &Path, env_step: u64, cfg: &RunConfig, agent: &HierAgent) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut networks = BTreeMap::new();
    for (name, net) in learner_nets("high", &agent.high).into_iter().chain(learner_nets("low", &agent.low)) {
        let file = format!("{name}.params.json");
        write(&dir.join(&file), &net.to_json()?)?;
        networks.insert(name, file);
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        env_step,
        config: cfg.to_flat(),
        networks,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("checkpoint manifest", e))?;
    write(&dir.join(MANIFEST), &text)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json("checkpoint manifest", e))?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::contract(format!("unsupported manifest version {}", m.version)));
    }
    Ok(m)
}

fn load_net(dir: &Path, m: &Manifest, name: &str) -> Result<Mlp> {
    let file = m
        .networks
        .get(name)
        .ok_or_else(|| Error::contract(format!("checkpoint has no network `{name}`")))?;
    let path = dir.join(file);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Mlp::from_json(&text)
}

/// A loaded checkpoint: its configuration and the two deterministic policies.
#[derive(Debug, Clone)]
pub struct LoadedCheckpoint {
    pub env_step: u64,
    pub config: RunConfig,
    pub policies: HierPolicies,
}

pub fn load_checkpoint(dir: &Path) -> Result<LoadedCheckpoint> {
    let m = read_manifest(dir)?;
    let cfg_text = serde_json::to_string(&m.config).map_err(|e| Error::json("checkpoint config", e))?;
    let config = parse_config_str(&cfg_text)?;
    let policy = |name: &str| -> Result<GaussianPolicy> {
        Ok(GaussianPolicy {
            trunk: load_net(dir, &m, name)?,
            action_low: vec![-1.0; ACT_DIM],
            action_high: vec![1.0; ACT_DIM],
        })
    };
    let policies = HierPolicies {
        high: policy("high_policy")?,
        low: policy("low_policy")?,
        k: config.brhpo.k,
        metric: config.brhpo.metric,
        stochastic: false,
    };
    policies.validate()?;
    Ok(LoadedCheckpoint {
        env_step: m.env_step,
        config,
        policies,
    })
}

/// Saves snapshots under `root/step_<n>`, plus the latest one under
/// `root/final` at the end of the run.
pub struct CheckpointDir {
    pub root: PathBuf,
    pub config: RunConfig,
    pub total_steps: usize,
    pub saved: Vec<PathBuf>,
}

impl CheckpointDir {
    pub fn new(root: impl Into<PathBuf>, config: &RunConfig) -> Self {
        CheckpointDir {
            root: root.into(),
            config: config.clone(),
            total_steps: config.total_steps,
            saved: Vec::new(),
        }
    }
}

impl CheckpointSink for CheckpointDir {
    fn save(&mut self, env_step: usize, agent: &HierAgent) -> Result<()> {
        let name = if env_step >= self.total_steps {
            "final".to_string()
        } else {
            format!("step_{env_step:09}")
        };
        let dir = self.root.join(name);
        save_checkpoint(&dir, env_step as u64, &self.config, agent)?;
        self.saved.push(dir);
        Ok(())
    }
}
