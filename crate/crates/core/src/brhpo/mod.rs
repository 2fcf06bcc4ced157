//! Hierarchical policy optimisation with bidirectional subgoal reachability.

pub mod agent;
pub mod config;
pub mod regularizer;
pub mod trace;
pub mod train;

pub use agent::{
    high_obs, low_obs, observation, offset_action, propose_subgoal, subgoal_from_offset, HierController,
    HierPolicies, ACT_DIM, OBS_DIM,
};
pub use config::{BrhpoConfig, HighDiscount, Variant};
pub use regularizer::{high_actor_regularizer, ReachabilityPenalty};
pub use trace::{
    close_subtask, high_reward, low_reward, reachability, reachability_ratio, surrogate_low_rewards,
    HighTransition, LowTransition, SubtaskRecord, SubtaskTrace, TraceStep, EPS_DENOM,
};
pub use train::{run_training, CheckpointSink, HierAgent, NoCheckpoints, RunSummary, TrainOptions};
