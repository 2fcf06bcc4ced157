//! Observation layouts, subgoal proposal and the two-level controller.

use rand::Rng;

use crate::envs::{goal_map, Action, DistanceMetric, EnvSpec, Goal, State, V_MAX};
use crate::error::{Error, Result};
use crate::sac::GaussianPolicy;

/// Observation width at both levels: position, velocity, goal, time.
pub const OBS_DIM: usize = 7;
pub const ACT_DIM: usize = 2;

fn normalise(env: &EnvSpec, p: [f64; 2]) -> [f64; 2] {
    let b = &env.goal_box;
    let mut out = [0.0; 2];
    for i in 0..2 {
        let c = 0.5 * (b.min[i] + b.max[i]);
        let h = 0.5 * (b.max[i] - b.min[i]);
        out[i] = (p[i] - c) / h;
    }
    out
}

/// Elapsed episode fraction mapped to [-1, 1].
fn time_feature(env: &EnvSpec, s: &State) -> f64 {
    2.0 * s.t as f64 / env.episode_len as f64 - 1.0
}

/// `psi(s) ++ velocity ++ goal ++ time`, positions rescaled to the goal box.
pub fn observation(env: &EnvSpec, s: &State, goal: &Goal) -> [f64; OBS_DIM] {
    let p = normalise(env, s.pos);
    let g = normalise(env, goal.coords);
    [p[0], p[1], s.vel[0] / V_MAX, s.vel[1] / V_MAX, g[0], g[1], time_feature(env, s)]
}

/// High-level input: state with the task goal.
pub fn high_obs(env: &EnvSpec, s: &State, task_goal: &Goal) -> [f64; OBS_DIM] {
    observation(env, s, task_goal)
}

/// Low-level input: state with the current subgoal, the subgoal given
/// relative to the position in units of the subgoal range.
pub fn low_obs(env: &EnvSpec, s: &State, subgoal: &Goal) -> [f64; OBS_DIM] {
    let p = normalise(env, s.pos);
    let r = env.subgoal_range;
    [
        p[0],
        p[1],
        s.vel[0] / V_MAX,
        s.vel[1] / V_MAX,
        (subgoal.coords[0] - s.pos[0]) / r,
        (subgoal.coords[1] - s.pos[1]) / r,
        time_feature(env, s),
    ]
}

/// Absolute subgoal `psi(s) + offset`, clipped to the goal box.
pub fn subgoal_from_offset(env: &EnvSpec, from: [f64; 2], offset: [f64; 2]) -> Goal {
    env.clip_goal([from[0] + offset[0], from[1] + offset[1]])
}

/// Normalised offset that reproduces `g` from `s` (after clipping).
pub fn offset_action(env: &EnvSpec, s: &State, g: &Goal) -> [f64; 2] {
    let r = env.subgoal_range;
    [(g.coords[0] - s.pos[0]) / r, (g.coords[1] - s.pos[1]) / r]
}

/// Samples (or takes the mean of) the high-level offset and turns it into
/// an absolute subgoal.
pub fn propose_subgoal(
    high: &GaussianPolicy,
    env: &EnvSpec,
    s: &State,
    task_goal: &Goal,
    rng: &mut impl Rng,
    deterministic: bool,
) -> Result<Goal> {
    let (a, _) = high.sample_action(&high_obs(env, s, task_goal), rng, deterministic)?;
    let r = env.subgoal_range;
    Ok(subgoal_from_offset(env, goal_map(s).coords, [r * a[0], r * a[1]]))
}

/// Anything that can drive the environment at both levels.
pub trait HierController {
    fn subgoal(&self, env: &EnvSpec, s: &State, task_goal: &Goal, rng: &mut dyn rand::RngCore) -> Result<Goal>;
    fn action(&self, env: &EnvSpec, s: &State, subgoal: &Goal, rng: &mut dyn rand::RngCore) -> Result<Action>;
    /// Steps per subgoal.
    fn horizon(&self) -> usize;
    fn metric(&self) -> DistanceMetric;
}

/// A trained (or freshly initialised) pair of policies.
#[derive(Debug, Clone)]
pub struct HierPolicies {
    pub high: GaussianPolicy,
    pub low: GaussianPolicy,
    pub k: usize,
    pub metric: DistanceMetric,
    /// Sample instead of taking the policy mean.
    pub stochastic: bool,
}

impl HierPolicies {
    pub fn validate(&self) -> Result<()> {
        for p in [&self.high, &self.low] {
            if p.obs_dim() != OBS_DIM || p.act_dim() != ACT_DIM {
                return Err(Error::contract("policy shape does not match the observation layout"));
            }
        }
        if self.k == 0 {
            return Err(Error::contract("subtask horizon must be positive"));
        }
        Ok(())
    }
}

impl HierController for HierPolicies {
    fn subgoal(&self, env: &EnvSpec, s: &State, task_goal: &Goal, mut rng: &mut dyn rand::RngCore) -> Result<Goal> {
        propose_subgoal(&self.high, env, s, task_goal, &mut rng, !self.stochastic)
    }

    fn action(&self, env: &EnvSpec, s: &State, subgoal: &Goal, mut rng: &mut dyn rand::RngCore) -> Result<Action> {
        let (a, _) = self.low.sample_action(&low_obs(env, s, subgoal), &mut rng, !self.stochastic)?;
        Ok(Action { accel: [a[0], a[1]] })
    }

    fn horizon(&self) -> usize {
        self.k
    }

    fn metric(&self) -> DistanceMetric {
        self.metric
    }
}
