//! Reachability regularizer for the high-level actor.

use rand::Rng;

use super::agent::subgoal_from_offset;
use super::trace::{HighTransition, EPS_DENOM};
use crate::envs::{distance, distance_grad, DistanceMetric, EnvSpec, Goal, Rect};
use crate::error::Result;
use crate::sac::{ActionPenalty, GaussianPolicy};

/// Per-row reachability of a freshly proposed subgoal against the reached
/// state stored in a high-level transition. Actions are normalised offsets
/// in `[-1, 1]^2`, scaled by the environment's subgoal range.
#[derive(Debug, Clone)]
pub struct ReachabilityPenalty {
    /// `(psi(s), psi(s_next))` per batch row.
    rows: Vec<([f64; 2], [f64; 2])>,
    lambda1: f64,
    metric: DistanceMetric,
    clip: f64,
    goal_box: Rect,
    range: f64,
}

impl ReachabilityPenalty {
    pub fn new(
        env: &EnvSpec,
        batch: &[&HighTransition],
        lambda1: f64,
        metric: DistanceMetric,
        clip: f64,
    ) -> Self {
        ReachabilityPenalty {
            rows: batch.iter().map(|t| (t.s.pos, t.s_next.pos)).collect(),
            lambda1,
            metric,
            clip,
            goal_box: env.goal_box,
            range: env.subgoal_range,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Clipped reachability ratio for `row` and its gradient with respect to
    /// the normalised offset (unweighted).
    pub fn ratio(&self, row: usize, action: &[f64]) -> (f64, [f64; 2]) {
        let (from, reached) = self.rows[row];
        let raw = [from[0] + self.range * action[0], from[1] + self.range * action[1]];
        let g = Goal {
            coords: self.goal_box.clamp(raw),
        };
        let start = Goal { coords: from };
        let end = Goal { coords: reached };
        let num = distance(self.metric, &end, &g);
        let d0 = distance(self.metric, &start, &g);
        let den = d0.max(EPS_DENOM);
        let ratio = num / den;
        if ratio >= self.clip {
            return (self.clip, [0.0, 0.0]);
        }
        let dnum = distance_grad(self.metric, &end, &g);
        let dden = if d0 >= EPS_DENOM {
            distance_grad(self.metric, &start, &g)
        } else {
            [0.0, 0.0]
        };
        let mut grad = [0.0; 2];
        for i in 0..2 {
            let inside = raw[i] >= self.goal_box.min[i] && raw[i] <= self.goal_box.max[i];
            if inside {
                grad[i] = self.range * (dnum[i] * den - num * dden[i]) / (den * den);
            }
        }
        (ratio, grad)
    }
}

impl ActionPenalty for ReachabilityPenalty {
    fn eval(&self, row: usize, action: &[f64]) -> (f64, Vec<f64>) {
        let (r, g) = self.ratio(row, action);
        (self.lambda1 * r, vec![self.lambda1 * g[0], self.lambda1 * g[1]])
    }
}

/// Mean weighted penalty over a batch of reparameterised high-level samples
/// and its gradient with respect to the policy parameters.
pub fn high_actor_regularizer(
    policy: &GaussianPolicy,
    penalty: &ReachabilityPenalty,
    obs: &[f64],
    rng: &mut impl Rng,
) -> Result<(f64, Vec<f64>)> {
    let batch = penalty.len();
    let sample = policy.sample_batch(obs, batch, rng)?;
    let n = policy.act_dim();
    let inv = 1.0 / batch as f64;
    let mut value = 0.0;
    let mut d_action = vec![0.0; batch * n];
    for b in 0..batch {
        let (v, g) = penalty.eval(b, &sample.actions[b * n..(b + 1) * n]);
        value += v * inv;
        for (d, gi) in d_action[b * n..(b + 1) * n].iter_mut().zip(g) {
            *d = gi * inv;
        }
    }
    let grads = policy.backward_sample(&sample, &d_action, &vec![0.0; batch])?;
    Ok((value, grads))
}

/// Subgoal proposed from a normalised offset, as the penalty sees it.
pub fn penalised_subgoal(env: &EnvSpec, from: [f64; 2], action: &[f64]) -> Goal {
    subgoal_from_offset(env, from, [env.subgoal_range * action[0], env.subgoal_range * action[1]])
}
