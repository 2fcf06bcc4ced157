use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envs::{DistanceMetric, EnvName};
use crate::error::{Error, Result};
use crate::sac::SacConfig;

/// Which parts of the mutual response mechanism are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    /// Neither the high-level regularizer nor the low-level bonus.
    Vanilla,
    /// No high-level regularizer.
    NoReg,
    /// No low-level bonus.
    NoBonus,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "vanilla" => Ok(Variant::Vanilla),
            "noreg" => Ok(Variant::NoReg),
            "nobonus" => Ok(Variant::NoBonus),
            _ => Err(Error::config("brhpo.variant", format!("unknown variant {s:?}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::Vanilla => "vanilla",
            Variant::NoReg => "noreg",
            Variant::NoBonus => "nobonus",
        })
    }
}

/// Discount applied to one high-level transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighDiscount {
    /// `gamma` per subtask.
    PerSubtask,
    /// `gamma^k` per subtask.
    PerStep,
}

impl FromStr for HighDiscount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_subtask" => Ok(HighDiscount::PerSubtask),
            "per_step" => Ok(HighDiscount::PerStep),
            _ => Err(Error::config("brhpo.high_discount", format!("expected per_subtask or per_step, got {s:?}"))),
        }
    }
}

impl fmt::Display for HighDiscount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HighDiscount::PerSubtask => "per_subtask",
            HighDiscount::PerStep => "per_step",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrhpoConfig {
    /// Subtask horizon.
    pub k: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub metric: DistanceMetric,
    pub variant: Variant,
    pub reach_clip: f64,
    pub high: SacConfig,
    pub low: SacConfig,
    pub high_buffer: usize,
    pub low_buffer: usize,
    /// Environment steps with uniformly random actions at both levels.
    pub start_steps: usize,
    /// Low-level updates per environment step.
    pub updates_per_step: usize,
    pub reward_scale: f64,
    pub high_discount: HighDiscount,
}

impl BrhpoConfig {
    /// Defaults for `env`: horizon and bonus weight depend on the task family.
    pub fn for_env(env: EnvName) -> Self {
        let (k, lambda2) = match env {
            EnvName::PointMaze | EnvName::PointBigMaze => (20, 10.0),
            EnvName::PointSparse => (10, 5.0),
        };
        BrhpoConfig {
            k,
            lambda1: 2.0,
            lambda2,
            metric: DistanceMetric::L2,
            variant: Variant::Full,
            reach_clip: 2.0,
            high: SacConfig::default(),
            low: SacConfig::default(),
            high_buffer: 100_000,
            low_buffer: 1_000_000,
            start_steps: 5_000,
            updates_per_step: 1,
            reward_scale: 1.0,
            high_discount: HighDiscount::PerSubtask,
        }
    }

    /// Regularizer weight after the variant is applied.
    pub fn effective_lambda1(&self) -> f64 {
        match self.variant {
            Variant::Full | Variant::NoBonus => self.lambda1,
            Variant::Vanilla | Variant::NoReg => 0.0,
        }
    }

    /// Bonus weight after the variant is applied.
    pub fn effective_lambda2(&self) -> f64 {
        match self.variant {
            Variant::Full | Variant::NoReg => self.lambda2,
            Variant::Vanilla | Variant::NoBonus => 0.0,
        }
    }

    pub fn high_gamma(&self) -> f64 {
        match self.high_discount {
            HighDiscount::PerSubtask => self.high.gamma,
            HighDiscount::PerStep => self.high.gamma.powi(self.k as i32),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(Error::config(key, msg)) };
        check(self.k >= 1, "brhpo.k", "must be a positive integer")?;
        check(self.lambda1 >= 0.0 && self.lambda1.is_finite(), "brhpo.lambda1", "must be finite and >= 0")?;
        check(self.lambda2 >= 0.0 && self.lambda2.is_finite(), "brhpo.lambda2", "must be finite and >= 0")?;
        check(self.reach_clip > 0.0 && self.reach_clip.is_finite(), "brhpo.reach_clip", "must be finite and > 0")?;
        check(self.reward_scale.is_finite(), "brhpo.reward_scale", "must be finite")?;
        check(self.high_buffer >= 1, "buffer.high_capacity", "must be positive")?;
        check(self.low_buffer >= 1, "buffer.low_capacity", "must be positive")?;
        for (level, c) in [("high", &self.high), ("low", &self.low)] {
            let key = |f: &str| format!("{level}.{f}");
            check(c.critic_lr > 0.0, &key("critic_lr"), "must be > 0")?;
            check(c.actor_lr > 0.0, &key("actor_lr"), "must be > 0")?;
            check((0.0..1.0).contains(&c.gamma), &key("gamma"), "must lie in [0, 1)")?;
            check(c.tau > 0.0 && c.tau <= 1.0, &key("tau"), "must lie in (0, 1]")?;
            check(c.alpha >= 0.0, &key("alpha"), "must be >= 0")?;
            check(c.batch_size >= 1, &key("batch_size"), "must be positive")?;
            check(c.target_update_interval >= 1, &key("target_update_interval"), "must be positive")?;
            check(c.grad_clip > 0.0, &key("grad_clip"), "must be > 0")?;
            check(c.value_scale > 0.0, &key("value_scale"), "must be > 0")?;
            check(!c.hidden.is_empty() && c.hidden.iter().all(|&h| h > 0), &key("hidden"), "must be non-empty positive widths")?;
        }
        check(self.high.batch_size <= self.high_buffer, "high.batch_size", "exceeds the high-level buffer capacity")?;
        check(self.low.batch_size <= self.low_buffer, "low.batch_size", "exceeds the low-level buffer capacity")?;
        Ok(())
    }
}
