//! Run configuration as a flat JSON document of dotted keys.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::brhpo::{BrhpoConfig, TrainOptions};
use crate::envs::{make_env, EnvName, EnvSpec, RewardMode};
use crate::error::{Error, Result};
use crate::sac::SacConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvName,
    pub reward_mode: RewardMode,
    pub noise_sigma: f64,
    pub brhpo: BrhpoConfig,
    pub total_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Snapshot cadence in environment steps; 0 keeps only the final one.
    pub checkpoint_interval: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn defaults(env: EnvName) -> Self {
        let (reward_mode, total_steps) = match env {
            EnvName::PointSparse => (RewardMode::Sparse, 100_000),
            EnvName::PointMaze | EnvName::PointBigMaze => (RewardMode::Dense, 300_000),
        };
        RunConfig {
            env,
            reward_mode,
            noise_sigma: 0.0,
            brhpo: BrhpoConfig::for_env(env),
            total_steps,
            eval_interval: 5_000,
            eval_episodes: 10,
            checkpoint_interval: 50_000,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
        }
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        make_env(self.env, self.reward_mode, self.noise_sigma)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            total_steps: self.total_steps,
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
            checkpoint_interval: self.checkpoint_interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.brhpo.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("env.noise_sigma", "must be finite and >= 0"));
        }
        if self.eval_episodes < 1 {
            return Err(Error::config("run.eval_episodes", "must be at least 1"));
        }
        if self.eval_interval < 1 {
            return Err(Error::config("run.eval_interval", "must be at least 1"));
        }
        let b = &self.brhpo;
        if b.low.batch_size > b.start_steps {
            return Err(Error::config("low.batch_size", "exceeds the warm-up step count"));
        }
        if b.high.batch_size > b.start_steps / b.k {
            return Err(Error::config("high.batch_size", "exceeds the number of warm-up subtasks"));
        }
        Ok(())
    }

    /// Every key with its current value; feeding this back through
    /// [`parse_config_str`] reproduces the configuration.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let b = &self.brhpo;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        put("env.name", self.env.to_string().into());
        put("env.reward_mode", mode_name(self.reward_mode).into());
        put("env.noise_sigma", self.noise_sigma.into());
        put("brhpo.k", b.k.into());
        put("brhpo.lambda1", b.lambda1.into());
        put("brhpo.lambda2", b.lambda2.into());
        put("brhpo.metric", b.metric.to_string().into());
        put("brhpo.variant", b.variant.to_string().into());
        put("brhpo.reach_clip", b.reach_clip.into());
        put("brhpo.high_discount", b.high_discount.to_string().into());
        put("brhpo.reward_scale", b.reward_scale.into());
        put("brhpo.start_steps", b.start_steps.into());
        put("brhpo.updates_per_step", b.updates_per_step.into());
        put("buffer.high_capacity", b.high_buffer.into());
        put("buffer.low_capacity", b.low_buffer.into());
        for (level, c) in [("high", &b.high), ("low", &b.low)] {
            let key = |f: &str| format!("{level}.{f}");
            put(&key("hidden"), c.hidden.clone().into());
            put(&key("gamma"), c.gamma.into());
            put(&key("tau"), c.tau.into());
            put(&key("alpha"), c.alpha.into());
            put(&key("critic_lr"), c.critic_lr.into());
            put(&key("actor_lr"), c.actor_lr.into());
            put(&key("batch_size"), c.batch_size.into());
            put(&key("target_update_interval"), c.target_update_interval.into());
            put(&key("grad_clip"), c.grad_clip.into());
            put(&key("value_scale"), c.value_scale.into());
        }
        put("run.total_steps", self.total_steps.into());
        put("run.eval_interval", self.eval_interval.into());
        put("run.eval_episodes", self.eval_episodes.into());
        put("run.checkpoint_interval", self.checkpoint_interval.into());
        put("run.seed", self.seed.into());
        put("run.out_dir", self.out_dir.display().to_string().into());
        m
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_flat()).map_err(|e| Error::json("run config", e))
    }
}

fn mode_name(m: RewardMode) -> &'static str {
    match m {
        RewardMode::Dense => "dense",
        RewardMode::Sparse => "sparse",
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

/// Parses a flat document. Keys that change per-environment defaults
/// (`env.name`) are applied first, so the rest override them.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::json("run config", e))?;
    let Value::Object(map) = doc else {
        return Err(Error::config("<root>", "expected a JSON object"));
    };
    let env = match map.get("env.name") {
        Some(v) => as_str("env.name", v)?.parse()?,
        None => EnvName::PointMaze,
    };
    let mut cfg = RunConfig::defaults(env);
    apply(&mut cfg, &map)?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply(cfg: &mut RunConfig, map: &Map<String, Value>) -> Result<()> {
    for (key, v) in map {
        let k = key.as_str();
        let b = &mut cfg.brhpo;
        match k {
            "env.name" => {}
            "env.reward_mode" => cfg.reward_mode = as_str(k, v)?.parse()?,
            "env.noise_sigma" => cfg.noise_sigma = as_f64(k, v)?,
            "brhpo.k" => b.k = as_usize(k, v)?,
            "brhpo.lambda1" => b.lambda1 = as_f64(k, v)?,
            "brhpo.lambda2" => b.lambda2 = as_f64(k, v)?,
            "brhpo.metric" => b.metric = as_str(k, v)?.parse()?,
            "brhpo.variant" => b.variant = as_str(k, v)?.parse()?,
            "brhpo.reach_clip" => b.reach_clip = as_f64(k, v)?,
            "brhpo.high_discount" => b.high_discount = as_str(k, v)?.parse()?,
            "brhpo.reward_scale" => b.reward_scale = as_f64(k, v)?,
            "brhpo.start_steps" => b.start_steps = as_usize(k, v)?,
            "brhpo.updates_per_step" => b.updates_per_step = as_usize(k, v)?,
            "buffer.high_capacity" => b.high_buffer = as_usize(k, v)?,
            "buffer.low_capacity" => b.low_buffer = as_usize(k, v)?,
            "run.total_steps" => cfg.total_steps = as_usize(k, v)?,
            "run.eval_interval" => cfg.eval_interval = as_usize(k, v)?,
            "run.eval_episodes" => cfg.eval_episodes = as_usize(k, v)?,
            "run.checkpoint_interval" => cfg.checkpoint_interval = as_usize(k, v)?,
            "run.seed" => cfg.seed = as_usize(k, v)? as u64,
            "run.out_dir" => cfg.out_dir = PathBuf::from(as_str(k, v)?),
            _ => {
                let (level, field) = k.split_once('.').unwrap_or(("", k));
                let sac = match level {
                    "high" => &mut b.high,
                    "low" => &mut b.low,
                    _ => return Err(Error::config(k, "unknown key")),
                };
                apply_sac(sac, k, field, v)?;
            }
        }
    }
    Ok(())
}

fn apply_sac(c: &mut SacConfig, key: &str, field: &str, v: &Value) -> Result<()> {
    match field {
        "hidden" => {
            let arr = v.as_array().ok_or_else(|| Error::config(key, "expected an array of layer widths"))?;
            c.hidden = arr.iter().map(|x| as_usize(key, x)).collect::<Result<_>>()?;
        }
        "gamma" => c.gamma = as_f64(key, v)?,
        "tau" => c.tau = as_f64(key, v)?,
        "alpha" => c.alpha = as_f64(key, v)?,
        "critic_lr" => c.critic_lr = as_f64(key, v)?,
        "actor_lr" => c.actor_lr = as_f64(key, v)?,
        "batch_size" => c.batch_size = as_usize(key, v)?,
        "target_update_interval" => c.target_update_interval = as_usize(key, v)?,
        "grad_clip" => c.grad_clip = as_f64(key, v)?,
        "value_scale" => c.value_scale = as_f64(key, v)?,
        _ => return Err(Error::config(key, "unknown key")),
    }
    Ok(())
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::config(key, format!("expected a number, got {v}")))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::config(key, format!("expected a non-negative integer, got {v}")))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::config(key, format!("expected a string, got {v}")))
}
