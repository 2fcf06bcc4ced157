//! Soft actor-critic machinery shared by both levels of the hierarchy.

pub mod buffer;
pub mod critic;
pub mod policy;
pub mod update;

pub use buffer::ReplayBuffer;
pub use critic::{Critic, QNetwork};
pub use policy::{GaussianPolicy, PolicySample, LOG_STD_MAX, LOG_STD_MIN};
pub use update::{
    actor_update, critic_update, soft_update, td_target, ActionPenalty, ActorStats, Batch,
    SacConfig, SacLearner, StepSizes, UpdateStats,
};
