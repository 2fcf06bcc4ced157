use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::brhpo::{reachability, HierController, SubtaskTrace};
use crate::envs::{self, Action, DistanceMetric, EnvSpec, Goal, State, DT};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub success_rate: f64,
    pub mean_return: f64,
    /// Mean unclipped reachability over all evaluation subtasks.
    pub mean_reachability: f64,
    pub episodes: usize,
    pub subtasks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub success: bool,
    pub ret: f64,
    pub reaches: Vec<f64>,
    pub final_state: State,
}

/// Rolls one full episode toward `task_goal`.
pub fn rollout(
    ctrl: &dyn HierController,
    env: &EnvSpec,
    task_goal: &Goal,
    rng: &mut dyn RngCore,
) -> Result<Episode> {
    let mut s = State::at_rest(env.start);
    let mut ret = 0.0;
    let mut reaches = Vec::new();
    let mut done = false;
    while !done {
        let g = ctrl.subgoal(env, &s, task_goal, rng)?;
        let mut trace = SubtaskTrace::new(s, g, ctrl.horizon(), ctrl.metric())?;
        while !trace.is_full() && !done {
            let a = ctrl.action(env, &s, &g, rng)?;
            let (next, r, d) = envs::step(env, &s, &a, task_goal, &mut &mut *rng)?;
            trace.push(s, a, r, next)?;
            ret += r;
            s = next;
            done = d;
        }
        trace.truncated = !trace.is_full();
        reaches.push(reachability(&trace, ctrl.metric())?);
    }
    Ok(Episode {
        success: envs::success(env, &s, task_goal),
        ret,
        reaches,
        final_state: s,
    })
}

/// Runs `n_episodes` on the environment's evaluation goals.
pub fn evaluate(
    ctrl: &dyn HierController,
    env: &EnvSpec,
    n_episodes: usize,
    rng: &mut impl Rng,
) -> Result<EvalResult> {
    let mut successes = 0usize;
    let mut total_return = 0.0;
    let mut reach_sum = 0.0;
    let mut subtasks = 0usize;
    for ep in 0..n_episodes {
        let goal = env.eval_goal(ep, rng);
        let e = rollout(ctrl, env, &goal, rng)?;
        successes += e.success as usize;
        total_return += e.ret;
        reach_sum += e.reaches.iter().sum::<f64>();
        subtasks += e.reaches.len();
    }
    let n = n_episodes.max(1) as f64;
    Ok(EvalResult {
        success_rate: successes as f64 / n,
        mean_return: total_return / n,
        mean_reachability: if subtasks == 0 { 0.0 } else { reach_sum / subtasks as f64 },
        episodes: n_episodes,
        subtasks,
    })
}

/// Hand-written controller for the U-maze: follows the corridor centre line
/// with a damped tracking law. Used to validate the environment and the
/// evaluation plumbing.
#[derive(Debug, Clone)]
pub struct ScriptedMazeController {
    pub k: usize,
}

impl ScriptedMazeController {
    fn waypoint(pos: [f64; 2], goal: &Goal) -> [f64; 2] {
        if pos[1] >= 12.0 {
            goal.coords
        } else if pos[0] >= 13.0 {
            [16.0, 16.0]
        } else {
            [16.0, 0.0]
        }
    }
}

impl HierController for ScriptedMazeController {
    fn subgoal(&self, env: &EnvSpec, s: &State, task_goal: &Goal, _rng: &mut dyn RngCore) -> Result<Goal> {
        let w = Self::waypoint(s.pos, task_goal);
        let r = env.subgoal_range;
        let off = [(w[0] - s.pos[0]).clamp(-r, r), (w[1] - s.pos[1]).clamp(-r, r)];
        Ok(env.clip_goal([s.pos[0] + off[0], s.pos[1] + off[1]]))
    }

    fn action(&self, _env: &EnvSpec, s: &State, subgoal: &Goal, _rng: &mut dyn RngCore) -> Result<Action> {
        let mut accel = [0.0; 2];
        for i in 0..2 {
            let v_des = (0.5 * (subgoal.coords[i] - s.pos[i])).clamp(-1.5, 1.5);
            accel[i] = ((v_des - s.vel[i]) / (5.0 * DT)).clamp(-1.0, 1.0);
        }
        Ok(Action { accel })
    }

    fn horizon(&self) -> usize {
        self.k
    }

    fn metric(&self) -> DistanceMetric {
        DistanceMetric::L2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brhpo::{HierPolicies, ACT_DIM, OBS_DIM};
    use crate::envs::{make_env, EnvName, RewardMode};
    use crate::rng;
    use crate::sac::GaussianPolicy;

    #[test]
    fn scripted_policy_solves_the_maze() {
        let env = make_env(EnvName::PointMaze, RewardMode::Dense, 0.0).unwrap();
        let res = evaluate(&ScriptedMazeController { k: 20 }, &env, 10, &mut rng::stream(0)).unwrap();
        assert_eq!(res.success_rate, 1.0);
        assert_eq!(res.subtasks, 10 * 25);
        assert!(res.mean_reachability < 1.0);
    }

    #[test]
    fn untrained_policies_rarely_succeed() {
        let env = make_env(EnvName::PointMaze, RewardMode::Dense, 0.0).unwrap();
        let mut r = rng::stream(9);
        let p = HierPolicies {
            high: GaussianPolicy::new(OBS_DIM, &[32, 32], vec![-1.0; ACT_DIM], vec![1.0; ACT_DIM], &mut r).unwrap(),
            low: GaussianPolicy::new(OBS_DIM, &[32, 32], vec![-1.0; ACT_DIM], vec![1.0; ACT_DIM], &mut r).unwrap(),
            k: 20,
            metric: DistanceMetric::L2,
            stochastic: false,
        };
        let res = evaluate(&p, &env, 10, &mut r).unwrap();
        assert!(res.success_rate <= 0.1);
    }

    /// Succeeds on exactly the episodes listed.
    struct Oracle(Vec<bool>, std::cell::Cell<usize>);

    impl HierController for Oracle {
        fn subgoal(&self, _: &EnvSpec, s: &State, _: &Goal, _: &mut dyn RngCore) -> Result<Goal> {
            Ok(Goal { coords: s.pos })
        }
        fn action(&self, _: &EnvSpec, s: &State, _: &Goal, _: &mut dyn RngCore) -> Result<Action> {
            // Decide once per episode, at its first step.
            if s.t == 0 {
                self.1.set(self.1.get() + 1);
            }
            let good = self.0[self.1.get() - 1];
            Ok(Action { accel: if good { [0.0, 0.0] } else { [1.0, 1.0] } })
        }
        fn horizon(&self) -> usize {
            10
        }
        fn metric(&self) -> DistanceMetric {
            DistanceMetric::L2
        }
    }

    #[test]
    fn success_rate_counts_episodes() {
        // Goal at the start: standing still succeeds, full throttle does not.
        let mut env = make_env(EnvName::PointSparse, RewardMode::Sparse, 0.0).unwrap();
        env.eval_goals = crate::envs::EvalGoals::Fixed(vec![env.start]);
        let pattern = vec![true, false, true, true, false, true, true, false, true, true];
        let o = Oracle(pattern, std::cell::Cell::new(0));
        let res = evaluate(&o, &env, 10, &mut rng::stream(1)).unwrap();
        assert_eq!(res.success_rate, 0.7);
    }
}
