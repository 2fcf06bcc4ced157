//! Subtask traces and the quantities derived from them: the high-level
//! reward, bidirectional subgoal reachability and the reachability-shaped
//! low-level rewards.

use serde::{Deserialize, Serialize};

use crate::envs::{distance, goal_map, Action, DistanceMetric, Goal, State};
use crate::error::{Error, Result};

/// Initial distances below this count as "already at the subgoal".
pub const EPS_DENOM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub state: State,
    pub action: Action,
    pub env_reward: f64,
    pub next_state: State,
    /// Distance from the pre-step state to the subgoal.
    pub pre_distance: f64,
}

/// The low-level steps taken under one subgoal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskTrace {
    pub start_state: State,
    pub subgoal: Goal,
    pub horizon: usize,
    pub metric: DistanceMetric,
    pub steps: Vec<TraceStep>,
    /// Set when the episode ended before the horizon was used up.
    pub truncated: bool,
}

impl SubtaskTrace {
    pub fn new(start_state: State, subgoal: Goal, horizon: usize, metric: DistanceMetric) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::contract("subtask horizon must be positive"));
        }
        Ok(SubtaskTrace {
            start_state,
            subgoal,
            horizon,
            metric,
            steps: Vec::with_capacity(horizon),
            truncated: false,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.steps.len() >= self.horizon
    }

    /// Appends a step. The step must start where the previous one ended.
    pub fn push(&mut self, state: State, action: Action, env_reward: f64, next_state: State) -> Result<()> {
        if self.is_full() {
            return Err(Error::contract("subtask trace is already at its horizon"));
        }
        let expected = self.steps.last().map_or(self.start_state, |s| s.next_state);
        if state != expected {
            return Err(Error::contract("trace steps must chain: state differs from previous next_state"));
        }
        let pre_distance = distance(self.metric, &goal_map(&state), &self.subgoal);
        self.steps.push(TraceStep {
            state,
            action,
            env_reward,
            next_state,
            pre_distance,
        });
        Ok(())
    }

    /// Last reached state (the start state for an empty trace).
    pub fn final_state(&self) -> State {
        self.steps.last().map_or(self.start_state, |s| s.next_state)
    }
}

/// Intrinsic low-level reward: negative distance from the reached position
/// to the subgoal.
pub fn low_reward(next_state: &State, subgoal: &Goal, m: DistanceMetric) -> f64 {
    -distance(m, &goal_map(next_state), subgoal)
}

/// Sum of environment rewards over the subtask.
pub fn high_reward(trace: &SubtaskTrace) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::contract("high reward of an empty subtask"));
    }
    Ok(trace.steps.iter().map(|s| s.env_reward).sum())
}

/// Ratio of final to initial distance to the subgoal, zero when the
/// initial distance is (numerically) zero.
pub fn reachability_ratio(initial: f64, fin: f64) -> f64 {
    if initial < EPS_DENOM {
        0.0
    } else {
        fin / initial
    }
}

/// Bidirectional subgoal reachability of a subtask. Reads only the stored
/// distance of the first step and the final reached state.
pub fn reachability(trace: &SubtaskTrace, m: DistanceMetric) -> Result<f64> {
    let (first, last) = match (trace.steps.first(), trace.steps.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::contract("reachability of an empty subtask")),
    };
    let initial = if m == trace.metric {
        first.pre_distance
    } else {
        distance(m, &goal_map(&first.state), &trace.subgoal)
    };
    let fin = distance(m, &goal_map(&last.next_state), &trace.subgoal);
    Ok(reachability_ratio(initial, fin))
}

/// Reachability-shaped low-level rewards: every step's intrinsic reward
/// minus the same `lambda2 * min(reach, clip)`.
pub fn surrogate_low_rewards(
    trace: &SubtaskTrace,
    reach: f64,
    lambda2: f64,
    reach_clip: f64,
    m: DistanceMetric,
) -> Vec<f64> {
    let bonus = lambda2 * reach.min(reach_clip);
    trace
        .steps
        .iter()
        .map(|s| low_reward(&s.next_state, &trace.subgoal, m) - bonus)
        .collect()
}

/// One high-level experience: a whole subtask seen as a single transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighTransition {
    pub s: State,
    pub task_goal: Goal,
    pub g: Goal,
    pub r_h: f64,
    pub s_next: State,
    pub reach: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowTransition {
    pub s: State,
    pub g: Goal,
    pub a: Action,
    pub r_hat: f64,
    pub s_next: State,
    pub done: bool,
}

/// Everything a finished subtask contributes to the replay buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtaskRecord {
    pub high: HighTransition,
    pub low: Vec<LowTransition>,
}

/// Turns a finished trace into replay records. `done_at` marks the step
/// index (if any) at which the episode ended.
pub fn close_subtask(
    trace: &SubtaskTrace,
    task_goal: Goal,
    lambda2: f64,
    reach_clip: f64,
    done_at: Option<usize>,
) -> Result<SubtaskRecord> {
    let reach = reachability(trace, trace.metric)?;
    let r_h = high_reward(trace)?;
    let rewards = surrogate_low_rewards(trace, reach, lambda2, reach_clip, trace.metric);
    let low = trace
        .steps
        .iter()
        .zip(rewards)
        .enumerate()
        .map(|(j, (s, r_hat))| LowTransition {
            s: s.state,
            g: trace.subgoal,
            a: s.action,
            r_hat,
            s_next: s.next_state,
            done: done_at == Some(j),
        })
        .collect();
    Ok(SubtaskRecord {
        high: HighTransition {
            s: trace.start_state,
            task_goal,
            g: trace.subgoal,
            r_h,
            s_next: trace.final_state(),
            reach,
            done: done_at.is_some(),
        },
        low,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    const ZERO: Action = Action { accel: [0.0, 0.0] };

    fn at(x: f64, y: f64) -> State {
        State::at_rest([x, y])
    }

    /// Trace that starts at `start`, ends at `end`, and wanders through
    /// `middle` points in between.
    fn trace_through(start: [f64; 2], middle: &[[f64; 2]], end: [f64; 2], subgoal: [f64; 2], m: DistanceMetric) -> SubtaskTrace {
        let horizon = middle.len() + 1;
        let mut t = SubtaskTrace::new(at(start[0], start[1]), Goal { coords: subgoal }, horizon, m).unwrap();
        let mut cur = at(start[0], start[1]);
        for p in middle.iter().chain(std::iter::once(&end)) {
            let next = at(p[0], p[1]);
            t.push(cur, ZERO, -1.0, next).unwrap();
            cur = next;
        }
        t
    }

    #[test]
    fn example_ordering_of_reachability() {
        let m = DistanceMetric::L2;
        let a = trace_through([0.0, 0.0], &[], [7.0, 0.0], [10.0, 0.0], m);
        let b = trace_through([0.0, 0.0], &[], [3.0, 0.0], [5.0, 0.0], m);
        let ra = reachability(&a, m).unwrap();
        let rb = reachability(&b, m).unwrap();
        assert!((ra - 0.3).abs() < 1e-12);
        assert!((rb - 0.4).abs() < 1e-12);
        assert!(ra < rb);
    }

    #[test]
    fn zero_initial_distance_gives_zero() {
        let m = DistanceMetric::L2;
        let t = trace_through([1.0, 1.0], &[[2.0, 2.0]], [5.0, 5.0], [1.0, 1.0], m);
        assert_eq!(reachability(&t, m).unwrap(), 0.0);
        let stay = trace_through([1.0, 1.0], &[], [1.0, 1.0], [1.0, 1.0], m);
        assert_eq!(reachability(&stay, m).unwrap(), 0.0);
        let reached = trace_through([0.0, 0.0], &[], [4.0, 4.0], [4.0, 4.0], m);
        assert_eq!(reachability(&reached, m).unwrap(), 0.0);
    }

    #[test]
    fn reachability_ignores_the_middle_of_the_trace() {
        let m = DistanceMetric::L1;
        let short = trace_through([0.0, 0.0], &[[1.0, 0.0]; 4], [2.0, 1.0], [6.0, 2.0], m);
        let wander: Vec<[f64; 2]> = (0..499).map(|i| [(i % 13) as f64, -(i as f64) * 0.1]).collect();
        let long = trace_through([0.0, 0.0], &wander, [2.0, 1.0], [6.0, 2.0], m);
        assert_eq!(short.len(), 5);
        assert_eq!(long.len(), 500);
        assert_eq!(reachability(&short, m).unwrap(), reachability(&long, m).unwrap());
    }

    #[test]
    fn reachability_matches_raw_state_recomputation() {
        let mut r = rng::stream(40);
        for m in [DistanceMetric::L1, DistanceMetric::L2, DistanceMetric::Linf] {
            for _ in 0..50 {
                let pts: Vec<[f64; 2]> = (0..12).map(|_| [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)]).collect();
                let sg = [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)];
                let t = trace_through(pts[0], &pts[1..11], pts[11], sg, m);
                let g = Goal { coords: sg };
                let d0 = distance(m, &Goal { coords: pts[0] }, &g);
                let d1 = distance(m, &Goal { coords: pts[11] }, &g);
                assert_eq!(reachability(&t, m).unwrap(), d1 / d0);
                // Stored per-step distances reproduce the same ratio.
                assert_eq!(t.steps[0].pre_distance, d0);
                assert_eq!(-low_reward(&t.steps[10].next_state, &g, m), d1);
            }
        }
    }

    #[test]
    fn empty_trace_errors() {
        let t = SubtaskTrace::new(at(0.0, 0.0), Goal::new(1.0, 1.0), 3, DistanceMetric::L2).unwrap();
        assert!(high_reward(&t).is_err());
        assert!(reachability(&t, DistanceMetric::L2).is_err());
        assert!(SubtaskTrace::new(at(0.0, 0.0), Goal::new(1.0, 1.0), 0, DistanceMetric::L2).is_err());
    }

    #[test]
    fn trace_enforces_chaining_and_horizon() {
        let mut t = SubtaskTrace::new(at(0.0, 0.0), Goal::new(1.0, 1.0), 2, DistanceMetric::L2).unwrap();
        assert!(t.push(at(5.0, 5.0), ZERO, 0.0, at(0.0, 0.0)).is_err());
        t.push(at(0.0, 0.0), ZERO, 0.0, at(0.1, 0.0)).unwrap();
        t.push(at(0.1, 0.0), ZERO, 0.0, at(0.2, 0.0)).unwrap();
        assert!(t.push(at(0.2, 0.0), ZERO, 0.0, at(0.3, 0.0)).is_err());
    }

    #[test]
    fn low_reward_examples() {
        let m = DistanceMetric::L2;
        assert_eq!(low_reward(&at(1.0, 1.0), &Goal::new(1.0, 1.0), m), 0.0);
        assert_eq!(low_reward(&at(0.0, 0.0), &Goal::new(3.0, 4.0), m), -5.0);
        let g = Goal::new(2.0, -1.0);
        let mut prev = low_reward(&at(2.0, -1.0), &g, m);
        for i in 1..20 {
            let d = i as f64 * 0.5;
            let cur = low_reward(&at(2.0 + 0.6 * d, -1.0 + 0.8 * d), &g, m);
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn high_reward_sums_env_rewards() {
        let mut t = SubtaskTrace::new(at(0.0, 0.0), Goal::new(1.0, 1.0), 3, DistanceMetric::L2).unwrap();
        for (i, r) in [-1.0, -1.0, 0.0].into_iter().enumerate() {
            t.push(at(i as f64, 0.0), ZERO, r, at(i as f64 + 1.0, 0.0)).unwrap();
        }
        assert_eq!(high_reward(&t).unwrap(), -2.0);

        let mut r = rng::stream(41);
        let mut t = SubtaskTrace::new(at(0.0, 0.0), Goal::new(1.0, 1.0), 20, DistanceMetric::L2).unwrap();
        let mut cur = at(0.0, 0.0);
        let mut rewards = Vec::new();
        for _ in 0..20 {
            let next = at(r.random(), r.random());
            let rew: f64 = r.random_range(-3.0..0.0);
            rewards.push(rew);
            t.push(cur, ZERO, rew, next).unwrap();
            cur = next;
        }
        let mut oracle = 0.0;
        for rew in &rewards {
            oracle += rew;
        }
        assert_eq!(high_reward(&t).unwrap(), oracle);
    }

    #[test]
    fn surrogate_reward_examples() {
        let m = DistanceMetric::L2;
        // r_l = -2 with lambda2 = 10 and reach = 0.3 gives -5.
        let t = trace_through([0.0, 0.0], &[], [0.0, 2.0], [0.0, 0.0], m);
        let r = surrogate_low_rewards(&t, 0.3, 10.0, 2.0, m);
        assert!((r[0] - -5.0).abs() < 1e-12);
        assert_eq!(surrogate_low_rewards(&t, 0.3, 0.0, 2.0, m), vec![-2.0]);
        // Clipped bonus.
        assert_eq!(surrogate_low_rewards(&t, 7.0, 1.0, 2.0, m), vec![-4.0]);
    }

    #[test]
    fn surrogate_rewards_shift_every_step_by_the_same_constant() {
        let mut r = rng::stream(42);
        let m = DistanceMetric::L2;
        let pts: Vec<[f64; 2]> = (0..21).map(|_| [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)]).collect();
        let t = trace_through(pts[0], &pts[1..20], pts[20], [1.0, 2.0], m);
        let reach = reachability(&t, m).unwrap();
        let shaped = surrogate_low_rewards(&t, reach, 10.0, 2.0, m);
        assert_eq!(shaped.len(), 20);
        let raw: Vec<f64> = t.steps.iter().map(|s| low_reward(&s.next_state, &t.subgoal, m)).collect();
        let shift = 10.0 * reach.min(2.0);
        for (a, b) in raw.iter().zip(&shaped) {
            assert!((a - b - shift).abs() < 1e-12);
        }
        let sum_shaped: f64 = shaped.iter().sum();
        let sum_raw: f64 = raw.iter().sum();
        assert!((sum_shaped - (sum_raw - 20.0 * shift)).abs() < 1e-9);
    }

    #[test]
    fn closing_a_subtask_is_consistent() {
        let m = DistanceMetric::L2;
        let t = trace_through([0.0, 0.0], &[[1.0, 0.0], [2.0, 0.0]], [3.0, 0.0], [4.0, 0.0], m);
        let rec = close_subtask(&t, Goal::new(0.0, 16.0), 10.0, 2.0, None).unwrap();
        assert_eq!(rec.high.r_h, high_reward(&t).unwrap());
        assert_eq!(rec.high.reach, reachability(&t, m).unwrap());
        assert_eq!(rec.high.s_next, at(3.0, 0.0));
        assert!(!rec.high.done);
        assert_eq!(rec.low.len(), 3);
        for (l, s) in rec.low.iter().zip(&t.steps) {
            assert_eq!(l.r_hat, low_reward(&s.next_state, &t.subgoal, m) - 10.0 * rec.high.reach);
            assert_eq!(l.g, t.subgoal);
        }
        let rec = close_subtask(&t, Goal::new(0.0, 16.0), 10.0, 2.0, Some(2)).unwrap();
        assert!(rec.high.done && rec.low[2].done && !rec.low[1].done);
    }
}
