//! Desk-scale point-mass navigation tasks.
//!
//! A double-integrator point mass moves inside an axis-aligned arena with
//! rectangular wall blocks. Goals live in the position plane; the state-to-goal
//! map [`goal_map`] simply drops the velocity.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integration step.
pub const DT: f64 = 0.1;
/// Per-axis speed limit.
pub const V_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    /// Environment steps taken since reset.
    pub t: usize,
}

impl State {
    pub fn at_rest(pos: [f64; 2]) -> Self {
        State {
            pos,
            vel: [0.0, 0.0],
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub coords: [f64; 2],
}

impl Goal {
    pub fn new(x: f64, y: f64) -> Self {
        Goal { coords: [x, y] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub accel: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvName {
    PointMaze,
    PointBigMaze,
    PointSparse,
}

impl std::str::FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PointMaze" | "point_maze" => Ok(EnvName::PointMaze),
            "PointBigMaze" | "point_big_maze" => Ok(EnvName::PointBigMaze),
            "PointSparse" | "point_sparse" => Ok(EnvName::PointSparse),
            other => Err(Error::config("env.name", format!("unknown environment `{other}`"))),
        }
    }
}

impl std::fmt::Display for EnvName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EnvName::PointMaze => "PointMaze",
            EnvName::PointBigMaze => "PointBigMaze",
            EnvName::PointSparse => "PointSparse",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Dense,
    Sparse,
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(RewardMode::Dense),
            "sparse" => Ok(RewardMode::Sparse),
            other => Err(Error::config("env.reward_mode", format!("unknown reward mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceMetric {
    L1,
    L2,
    Linf,
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(DistanceMetric::L1),
            "l2" => Ok(DistanceMetric::L2),
            "linf" => Ok(DistanceMetric::Linf),
            other => Err(Error::config("brhpo.metric", format!("unknown metric `{other}`"))),
        }
    }
}

impl std::fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistanceMetric::L1 => "L1",
            DistanceMetric::L2 => "L2",
            DistanceMetric::Linf => "Linf",
        })
    }
}

/// Closed axis-aligned rectangle. Only its interior is blocked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect {
            min: [x0, y0],
            max: [x1, y1],
        }
    }

    pub fn contains_strict(&self, p: [f64; 2]) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0].clamp(self.min[0], self.max[0]),
            p[1].clamp(self.min[1], self.max[1]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GoalSampler {
    Uniform { lo: [f64; 2], hi: [f64; 2] },
    /// Isotropic Gaussian, clipped to the goal box.
    Gaussian { mean: [f64; 2], std: f64 },
    /// One of a fixed set, picked uniformly.
    Choice(Vec<[f64; 2]>),
}

/// How evaluation episodes pick their task goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EvalGoals {
    /// Cycle deterministically through a fixed list.
    Fixed(Vec<[f64; 2]>),
    /// Draw from the training sampler with the evaluation stream.
    FromSampler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: EnvName,
    /// Outer boundary of the free space.
    pub arena: Rect,
    pub walls: Vec<Rect>,
    pub reward_mode: RewardMode,
    pub episode_len: usize,
    pub success_radius: f64,
    pub start: [f64; 2],
    /// Bounding box of the goal space.
    pub goal_box: Rect,
    pub goal_sampler: GoalSampler,
    pub eval_goals: EvalGoals,
    /// Positional Gaussian noise std added after each integration step.
    pub noise_sigma: f64,
    /// Half-width of the high-level subgoal offset box.
    pub subgoal_range: f64,
}

/// Builds one of the known environments.
pub fn make_env(name: EnvName, reward_mode: RewardMode, noise_sigma: f64) -> Result<EnvSpec> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::config("env.noise_sigma", "must be finite and non-negative"));
    }
    let spec = match name {
        // U-maze on 8-unit cells: corridor along the bottom, up the right side,
        // back along the top. The block in the middle forces the detour.
        EnvName::PointMaze => EnvSpec {
            name,
            arena: Rect::new(-4.0, -4.0, 20.0, 20.0),
            walls: vec![Rect::new(-4.0, 4.0, 12.0, 12.0)],
            reward_mode,
            episode_len: 500,
            success_radius: 5.0,
            start: [0.0, 0.0],
            goal_box: Rect::new(-4.0, -4.0, 20.0, 20.0),
            goal_sampler: GoalSampler::Uniform {
                lo: [-4.0, -4.0],
                hi: [20.0, 20.0],
            },
            eval_goals: EvalGoals::Fixed(vec![[0.0, 16.0]]),
            noise_sigma,
            subgoal_range: 4.0,
        },
        // S-shaped maze over twice the extent, with two candidate task goals.
        EnvName::PointBigMaze => EnvSpec {
            name,
            arena: Rect::new(-4.0, -4.0, 44.0, 44.0),
            walls: vec![
                Rect::new(-4.0, 4.0, 28.0, 12.0),
                Rect::new(12.0, 20.0, 44.0, 28.0),
            ],
            reward_mode,
            episode_len: 1000,
            success_radius: 5.0,
            start: [0.0, 0.0],
            goal_box: Rect::new(-4.0, -4.0, 44.0, 44.0),
            goal_sampler: GoalSampler::Choice(vec![[36.0, 16.0], [0.0, 36.0]]),
            eval_goals: EvalGoals::Fixed(vec![[36.0, 16.0], [0.0, 36.0]]),
            noise_sigma,
            subgoal_range: 4.0,
        },
        // Open workspace; the start sits in a corner away from the goal cloud.
        EnvName::PointSparse => EnvSpec {
            name,
            arena: Rect::new(-1.0, -1.0, 1.0, 1.0),
            walls: Vec::new(),
            reward_mode,
            episode_len: 100,
            success_radius: 0.25,
            start: [-0.75, -0.75],
            goal_box: Rect::new(-1.0, -1.0, 1.0, 1.0),
            goal_sampler: GoalSampler::Gaussian {
                mean: [0.0, 0.0],
                std: 0.1,
            },
            eval_goals: EvalGoals::FromSampler,
            noise_sigma,
            subgoal_range: 0.5,
        },
    };
    Ok(spec)
}

impl EnvSpec {
    /// True if `p` is inside the arena and not strictly inside any wall.
    pub fn is_free(&self, p: [f64; 2]) -> bool {
        self.arena.contains(p) && !self.walls.iter().any(|w| w.contains_strict(p))
    }

    pub fn clip_goal(&self, g: [f64; 2]) -> Goal {
        Goal {
            coords: self.goal_box.clamp(g),
        }
    }

    /// Draws a training task goal.
    pub fn sample_goal(&self, rng: &mut impl Rng) -> Goal {
        match &self.goal_sampler {
            GoalSampler::Uniform { lo, hi } => Goal::new(
                rng.random_range(lo[0]..=hi[0]),
                rng.random_range(lo[1]..=hi[1]),
            ),
            GoalSampler::Gaussian { mean, std } => {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                self.clip_goal([mean[0] + std * x, mean[1] + std * y])
            }
            GoalSampler::Choice(goals) => {
                let i = rng.random_range(0..goals.len());
                Goal { coords: goals[i] }
            }
        }
    }

    /// Task goal for the `episode`-th evaluation episode.
    pub fn eval_goal(&self, episode: usize, rng: &mut impl Rng) -> Goal {
        match &self.eval_goals {
            EvalGoals::Fixed(goals) => Goal {
                coords: goals[episode % goals.len()],
            },
            EvalGoals::FromSampler => self.sample_goal(rng),
        }
    }

    /// Axis-separated sweep of `pos` by `delta`: x first, then y. Returns the
    /// new position and, per axis, whether the motion was blocked.
    fn sweep(&self, pos: [f64; 2], delta: [f64; 2]) -> ([f64; 2], [bool; 2]) {
        let mut p = pos;
        let mut blocked = [false, false];
        for axis in 0..2 {
            let other = 1 - axis;
            let from = p[axis];
            let mut to = from + delta[axis];
            if to < self.arena.min[axis] {
                to = self.arena.min[axis];
                blocked[axis] = true;
            } else if to > self.arena.max[axis] {
                to = self.arena.max[axis];
                blocked[axis] = true;
            }
            for w in &self.walls {
                if !(p[other] > w.min[other] && p[other] < w.max[other]) {
                    continue;
                }
                if to > from && from <= w.min[axis] && to > w.min[axis] {
                    to = w.min[axis];
                    blocked[axis] = true;
                } else if to < from && from >= w.max[axis] && to < w.max[axis] {
                    to = w.max[axis];
                    blocked[axis] = true;
                }
            }
            p[axis] = to;
        }
        (p, blocked)
    }
}

/// Start state and a training task goal.
pub fn reset(env: &EnvSpec, rng: &mut impl Rng) -> (State, Goal) {
    (State::at_rest(env.start), env.sample_goal(rng))
}

/// One environment step: integrate, resolve collisions, inject noise, score.
pub fn step(
    env: &EnvSpec,
    s: &State,
    a: &Action,
    goal: &Goal,
    rng: &mut impl Rng,
) -> Result<(State, f64, bool)> {
    for (i, &u) in a.accel.iter().enumerate() {
        if !(-1.0..=1.0).contains(&u) {
            return Err(Error::contract(format!(
                "action component {i} = {u} outside [-1, 1]"
            )));
        }
    }
    let mut vel = [0.0; 2];
    for i in 0..2 {
        vel[i] = (s.vel[i] + a.accel[i] * DT).clamp(-V_MAX, V_MAX);
    }
    let (mut pos, blocked) = env.sweep(s.pos, [vel[0] * DT, vel[1] * DT]);
    for i in 0..2 {
        if blocked[i] {
            vel[i] = 0.0;
        }
    }
    if env.noise_sigma > 0.0 {
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        pos = env
            .sweep(pos, [env.noise_sigma * nx, env.noise_sigma * ny])
            .0;
    }
    let next = State {
        pos,
        vel,
        t: s.t + 1,
    };
    let d = distance(DistanceMetric::L2, &goal_map(&next), goal);
    let reward = match env.reward_mode {
        RewardMode::Dense => -d,
        RewardMode::Sparse => {
            if d <= env.success_radius {
                0.0
            } else {
                -1.0
            }
        }
    };
    Ok((next, reward, next.t >= env.episode_len))
}

/// State-to-goal map: the position components.
pub fn goal_map(s: &State) -> Goal {
    Goal { coords: s.pos }
}

pub fn distance(m: DistanceMetric, g1: &Goal, g2: &Goal) -> f64 {
    norm(m, g1.coords[0] - g2.coords[0], g1.coords[1] - g2.coords[1])
}

/// Distance between goal vectors of arbitrary (matching) dimension.
pub fn distance_slices(m: DistanceMetric, g1: &[f64], g2: &[f64]) -> Result<f64> {
    if g1.len() != g2.len() {
        return Err(Error::contract(format!(
            "distance between goals of dimension {} and {}",
            g1.len(),
            g2.len()
        )));
    }
    let diffs = g1.iter().zip(g2).map(|(a, b)| a - b);
    Ok(match m {
        DistanceMetric::L1 => diffs.map(f64::abs).sum(),
        DistanceMetric::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        DistanceMetric::Linf => diffs.map(f64::abs).fold(0.0, f64::max),
    })
}

#[inline]
fn norm(m: DistanceMetric, dx: f64, dy: f64) -> f64 {
    match m {
        DistanceMetric::L1 => dx.abs() + dy.abs(),
        DistanceMetric::L2 => dx.hypot(dy),
        DistanceMetric::Linf => dx.abs().max(dy.abs()),
    }
}

/// Gradient of `distance(m, from, g)` with respect to `g`.
///
/// At the non-differentiable points (zero difference, Linf ties) a valid
/// subgradient is returned: zero for a null difference, the first tied axis
/// for Linf.
pub fn distance_grad(m: DistanceMetric, from: &Goal, g: &Goal) -> [f64; 2] {
    let dx = g.coords[0] - from.coords[0];
    let dy = g.coords[1] - from.coords[1];
    match m {
        DistanceMetric::L1 => [sign(dx), sign(dy)],
        DistanceMetric::L2 => {
            let n = dx.hypot(dy);
            if n == 0.0 {
                [0.0, 0.0]
            } else {
                [dx / n, dy / n]
            }
        }
        DistanceMetric::Linf => {
            if dx.abs() >= dy.abs() {
                [sign(dx), 0.0]
            } else {
                [0.0, sign(dy)]
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// True iff the final position lies within the success radius of the goal.
pub fn success(env: &EnvSpec, final_state: &State, goal: &Goal) -> bool {
    distance(DistanceMetric::L2, &goal_map(final_state), goal) <= env.success_radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn maze() -> EnvSpec {
        make_env(EnvName::PointMaze, RewardMode::Dense, 0.0).unwrap()
    }

    #[test]
    fn point_maze_matches_task_layout() {
        let env = maze();
        assert_eq!(env.start, [0.0, 0.0]);
        assert_eq!(env.episode_len, 500);
        assert_eq!(env.success_radius, 5.0);
        let mut r = rng::stream(0);
        assert_eq!(env.eval_goal(0, &mut r), Goal::new(0.0, 16.0));
        assert!(env.is_free([0.0, 0.0]));
        assert!(env.is_free([0.0, 16.0]));
        assert!(!env.is_free([0.0, 8.0]));
    }

    #[test]
    fn point_sparse_settings() {
        let env = make_env(EnvName::PointSparse, RewardMode::Sparse, 0.0).unwrap();
        assert_eq!(env.success_radius, 0.25);
        assert_eq!(env.episode_len, 100);
        let noisy = make_env(EnvName::PointMaze, RewardMode::Dense, 0.05).unwrap();
        assert_eq!(noisy.noise_sigma, 0.05);
        assert!(make_env(EnvName::PointMaze, RewardMode::Dense, -1.0).is_err());
        assert!("Nowhere".parse::<EnvName>().is_err());
    }

    #[test]
    fn reset_starts_at_rest_and_samples_goal_in_box() {
        let env = maze();
        let mut r = rng::stream(3);
        for _ in 0..200 {
            let (s, g) = reset(&env, &mut r);
            assert_eq!(s.pos, [0.0, 0.0]);
            assert_eq!(s.vel, [0.0, 0.0]);
            assert!(env.goal_box.contains(g.coords));
        }
    }

    #[test]
    fn sparse_goals_are_centred_with_small_spread() {
        let env = make_env(EnvName::PointSparse, RewardMode::Sparse, 0.0).unwrap();
        let mut r = rng::stream(9);
        let n = 20_000;
        let (mut sx, mut sxx) = (0.0, 0.0);
        for _ in 0..n {
            let g = env.sample_goal(&mut r);
            sx += g.coords[0];
            sxx += g.coords[0] * g.coords[0];
        }
        let mean = sx / n as f64;
        let std = (sxx / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.005);
        assert!((std - 0.1).abs() < 0.005);
    }

    #[test]
    fn dense_reward_is_negative_l2_distance() {
        let env = maze();
        let s = State::at_rest([0.0, 0.0]);
        let a = Action { accel: [0.0, 0.0] };
        let mut r = rng::stream(0);
        let (s2, rew, done) = step(&env, &s, &a, &Goal::new(3.0, 4.0), &mut r).unwrap();
        assert_eq!(s2.pos, [0.0, 0.0]);
        assert_eq!(rew, -5.0);
        assert!(!done);
    }

    #[test]
    fn sparse_reward_levels() {
        let env = make_env(EnvName::PointSparse, RewardMode::Sparse, 0.0).unwrap();
        let a = Action { accel: [0.0, 0.0] };
        let mut r = rng::stream(0);
        let s = State::at_rest([0.5, 0.5]);
        let (_, at_goal, _) = step(&env, &s, &a, &Goal::new(0.5, 0.5), &mut r).unwrap();
        assert_eq!(at_goal, 0.0);
        let (_, far, _) = step(&env, &s, &a, &Goal::new(-0.5, -0.5), &mut r).unwrap();
        assert_eq!(far, -1.0);
    }

    #[test]
    fn out_of_bounds_action_is_rejected() {
        let env = maze();
        let mut r = rng::stream(0);
        let s = State::at_rest([0.0, 0.0]);
        let bad = Action { accel: [1.5, 0.0] };
        assert!(matches!(
            step(&env, &s, &bad, &Goal::new(0.0, 0.0), &mut r),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn done_at_episode_limit() {
        let env = make_env(EnvName::PointSparse, RewardMode::Sparse, 0.0).unwrap();
        let mut r = rng::stream(0);
        let mut s = State::at_rest(env.start);
        let a = Action { accel: [0.0, 0.0] };
        let g = Goal::new(0.0, 0.0);
        for t in 1..=env.episode_len {
            let (s2, _, done) = step(&env, &s, &a, &g, &mut r).unwrap();
            assert_eq!(done, t == env.episode_len);
            s = s2;
        }
    }

    #[test]
    fn wall_blocks_motion_and_zeroes_velocity() {
        let env = maze();
        let mut r = rng::stream(0);
        // Just below the central block, moving up at full speed.
        let s = State {
            pos: [0.0, 3.9],
            vel: [0.0, 2.0],
            t: 0,
        };
        let (s2, _, _) = step(&env, &s, &Action { accel: [0.0, 1.0] }, &Goal::new(0.0, 0.0), &mut r)
            .unwrap();
        assert_eq!(s2.pos, [0.0, 4.0]);
        assert_eq!(s2.vel[1], 0.0);
    }

    #[test]
    fn goal_map_projects_position() {
        let s = State {
            pos: [2.0, 3.0],
            vel: [1.0, 1.0],
            t: 4,
        };
        assert_eq!(goal_map(&s), Goal::new(2.0, 3.0));
        assert_eq!(goal_map(&s), goal_map(&s));
        let z = State {
            pos: [0.0, 0.0],
            vel: [-1.5, 0.3],
            t: 0,
        };
        assert_eq!(goal_map(&z), Goal::new(0.0, 0.0));
    }

    #[test]
    fn distance_examples() {
        let d = |m, a: [f64; 2], b: [f64; 2]| distance(m, &Goal { coords: a }, &Goal { coords: b });
        assert_eq!(d(DistanceMetric::L2, [0.0, 0.0], [3.0, 4.0]), 5.0);
        assert_eq!(d(DistanceMetric::L1, [1.0, 2.0], [4.0, 6.0]), 7.0);
        assert_eq!(d(DistanceMetric::Linf, [1.0, 2.0], [4.0, 6.0]), 4.0);
        assert!(distance_slices(DistanceMetric::L2, &[0.0, 1.0], &[0.0]).is_err());
        assert_eq!(
            distance_slices(DistanceMetric::L1, &[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap(),
            6.0
        );
    }

    #[test]
    fn success_boundary_is_inclusive() {
        let env = maze();
        let g = Goal::new(0.0, 16.0);
        assert!(success(&env, &State::at_rest([0.0, 12.0]), &g));
        assert!(!success(&env, &State::at_rest([0.0, 10.0]), &g));
        let sparse = make_env(EnvName::PointSparse, RewardMode::Sparse, 0.0).unwrap();
        assert!(success(&sparse, &State::at_rest([0.25, 0.0]), &Goal::new(0.0, 0.0)));
    }

    fn any_metric() -> impl Strategy<Value = DistanceMetric> {
        prop_oneof![
            Just(DistanceMetric::L1),
            Just(DistanceMetric::L2),
            Just(DistanceMetric::Linf)
        ]
    }

    fn any_goal() -> impl Strategy<Value = Goal> {
        (-50.0..50.0f64, -50.0..50.0f64).prop_map(|(x, y)| Goal::new(x, y))
    }

    proptest! {
        #[test]
        fn metric_axioms(m in any_metric(), a in any_goal(), b in any_goal(), c in any_goal(), k in 0.01..100.0f64) {
            let d = |x: &Goal, y: &Goal| distance(m, x, y);
            prop_assert!(d(&a, &b) >= 0.0);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert_eq!(d(&a, &a), 0.0);
            if a != b {
                prop_assert!(d(&a, &b) > 0.0);
            }
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
            let ka = Goal::new(k * a.coords[0], k * a.coords[1]);
            let kb = Goal::new(k * b.coords[0], k * b.coords[1]);
            let lhs = d(&ka, &kb);
            let rhs = k * d(&a, &b);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
        }

        #[test]
        fn random_rollouts_stay_in_free_space(
            seed in 0u64..10_000,
            actions in proptest::collection::vec((-1.0..=1.0f64, -1.0..=1.0f64), 1..300),
            noisy in proptest::bool::ANY,
            which in 0usize..3,
        ) {
            let name = [EnvName::PointMaze, EnvName::PointBigMaze, EnvName::PointSparse][which];
            let env = make_env(name, RewardMode::Dense, if noisy { 0.3 } else { 0.0 }).unwrap();
            let mut r = rng::stream(seed);
            let (mut s, g) = reset(&env, &mut r);
            for (ax, ay) in actions {
                let (s2, rew, _) = step(&env, &s, &Action { accel: [ax, ay] }, &g, &mut r).unwrap();
                prop_assert!(env.is_free(s2.pos), "{:?} not free", s2.pos);
                prop_assert!(s2.vel[0].abs() <= V_MAX && s2.vel[1].abs() <= V_MAX);
                prop_assert_eq!(rew, -distance(DistanceMetric::L2, &goal_map(&s2), &g));
                s = s2;
            }
        }

        #[test]
        fn noise_free_rollouts_are_deterministic(
            seed in 0u64..1000,
            actions in proptest::collection::vec((-1.0..=1.0f64, -1.0..=1.0f64), 1..100),
        ) {
            let env = maze();
            let run = |seed| {
                let mut r = rng::stream(seed);
                let (mut s, g) = reset(&env, &mut r);
                let mut traj = vec![s];
                for &(ax, ay) in &actions {
                    s = step(&env, &s, &Action { accel: [ax, ay] }, &g, &mut r).unwrap().0;
                    traj.push(s);
                }
                traj
            };
            prop_assert_eq!(run(seed), run(seed));
        }
    }
}
