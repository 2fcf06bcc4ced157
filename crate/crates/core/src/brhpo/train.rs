//! The two-level training loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::agent::{high_obs, low_obs, offset_action, subgoal_from_offset, HierPolicies, ACT_DIM, OBS_DIM};
use super::config::BrhpoConfig;
use super::regularizer::ReachabilityPenalty;
use super::trace::{close_subtask, HighTransition, LowTransition, SubtaskTrace};
use crate::envs::{self, goal_map, Action, EnvSpec};
use crate::error::{Error, Result};
use crate::harness::eval::evaluate;
use crate::harness::metrics::{MetricsRow, MetricsSink};
use crate::rng::{substream, Stream};
use crate::sac::{ActionPenalty, Batch, ReplayBuffer, SacLearner, UpdateStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub total_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Snapshot cadence in environment steps; 0 disables periodic snapshots.
    pub checkpoint_interval: usize,
}

/// Both learners and their replay buffers.
#[derive(Debug, Clone)]
pub struct HierAgent {
    pub high: SacLearner,
    pub low: SacLearner,
    pub high_buffer: ReplayBuffer<HighTransition>,
    pub low_buffer: ReplayBuffer<LowTransition>,
    pub cfg: BrhpoConfig,
    pub env: EnvSpec,
}

impl HierAgent {
    pub fn new(cfg: &BrhpoConfig, env: &EnvSpec, high_rng: &mut impl Rng, low_rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let mut high_cfg = cfg.high.clone();
        high_cfg.gamma = cfg.high_gamma();
        let bounds = || (vec![-1.0; ACT_DIM], vec![1.0; ACT_DIM]);
        let (lo, hi) = bounds();
        let high = SacLearner::new(OBS_DIM, lo, hi, high_cfg, high_rng)?;
        let (lo, hi) = bounds();
        let low = SacLearner::new(OBS_DIM, lo, hi, cfg.low.clone(), low_rng)?;
        Ok(HierAgent {
            high,
            low,
            high_buffer: ReplayBuffer::new(cfg.high_buffer)?,
            low_buffer: ReplayBuffer::new(cfg.low_buffer)?,
            cfg: cfg.clone(),
            env: env.clone(),
        })
    }

    pub fn policies(&self) -> HierPolicies {
        HierPolicies {
            high: self.high.policy.clone(),
            low: self.low.policy.clone(),
            k: self.cfg.k,
            metric: self.cfg.metric,
            stochastic: false,
        }
    }

    /// Stores a finished subtask in both buffers.
    pub fn store(&mut self, high: HighTransition, low: Vec<LowTransition>) {
        for t in low {
            self.low_buffer.push(t);
        }
        self.high_buffer.push(high);
    }

    pub fn low_batch(&self, rng: &mut impl Rng) -> Result<Batch> {
        let n = self.low.cfg.batch_size;
        let mut b = Batch::with_capacity(n, OBS_DIM, ACT_DIM);
        for t in self.low_buffer.sample(n, rng)? {
            b.push(
                &low_obs(&self.env, &t.s, &t.g),
                &t.a.accel,
                self.cfg.reward_scale * t.r_hat,
                &low_obs(&self.env, &t.s_next, &t.g),
                t.done,
            );
        }
        Ok(b)
    }

    /// A high-level batch and the transitions it was built from.
    pub fn high_batch(&self, rng: &mut impl Rng) -> Result<(Batch, Vec<HighTransition>)> {
        let n = self.high.cfg.batch_size;
        let mut b = Batch::with_capacity(n, OBS_DIM, ACT_DIM);
        let rows: Vec<HighTransition> = self.high_buffer.sample(n, rng)?.into_iter().copied().collect();
        for t in &rows {
            b.push(
                &high_obs(&self.env, &t.s, &t.task_goal),
                &offset_action(&self.env, &t.s, &t.g),
                self.cfg.reward_scale * t.r_h,
                &high_obs(&self.env, &t.s_next, &t.task_goal),
                t.done,
            );
        }
        Ok((b, rows))
    }

    pub fn update_low(&mut self, rng: &mut impl Rng) -> Result<UpdateStats> {
        let batch = self.low_batch(rng)?;
        self.low.update(&batch, None, rng)
    }

    pub fn update_high(&mut self, rng: &mut impl Rng) -> Result<UpdateStats> {
        let (batch, rows) = self.high_batch(rng)?;
        let lambda1 = self.cfg.effective_lambda1();
        if lambda1 > 0.0 {
            let refs: Vec<&HighTransition> = rows.iter().collect();
            let pen = ReachabilityPenalty::new(&self.env, &refs, lambda1, self.cfg.metric, self.cfg.reach_clip);
            self.high.update(&batch, Some(&pen as &dyn ActionPenalty), rng)
        } else {
            self.high.update(&batch, None, rng)
        }
    }
}

/// Receives periodic snapshots of the agent.
pub trait CheckpointSink {
    fn save(&mut self, env_step: usize, agent: &HierAgent) -> Result<()>;
}

/// Ignores snapshots.
pub struct NoCheckpoints;

impl CheckpointSink for NoCheckpoints {
    fn save(&mut self, _: usize, _: &HierAgent) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub env_steps: usize,
    pub episodes: usize,
    pub subtasks: usize,
    pub high_updates: u64,
    pub low_updates: u64,
    pub rows: Vec<MetricsRow>,
}

#[derive(Default)]
struct LossAccumulator {
    sums: [f64; 4],
    counts: [usize; 2],
}

impl LossAccumulator {
    fn add_high(&mut self, s: &UpdateStats) {
        self.sums[0] += s.actor.loss;
        self.sums[1] += s.critic_loss;
        self.counts[0] += 1;
    }

    fn add_low(&mut self, s: &UpdateStats) {
        self.sums[2] += s.actor.loss;
        self.sums[3] += s.critic_loss;
        self.counts[1] += 1;
    }

    fn take(&mut self) -> [f64; 4] {
        let mean = |s: f64, c: usize| if c == 0 { f64::NAN } else { s / c as f64 };
        let out = [
            mean(self.sums[0], self.counts[0]),
            mean(self.sums[1], self.counts[0]),
            mean(self.sums[2], self.counts[1]),
            mean(self.sums[3], self.counts[1]),
        ];
        *self = LossAccumulator::default();
        out
    }
}

fn random_action(rng: &mut impl Rng) -> [f64; 2] {
    [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]
}

fn sampled(policy: &crate::sac::GaussianPolicy, obs: &[f64], rng: &mut impl Rng) -> Result<[f64; 2]> {
    let (a, _) = policy.sample_action(obs, rng, false)?;
    Ok([a[0], a[1]])
}

struct Streams {
    env: Stream,
    high: Stream,
    low: Stream,
    eval: Stream,
}

/// Trains both levels for `opts.total_steps` environment steps, emitting an
/// evaluation row every `opts.eval_interval` steps and once at the end.
pub fn run_training(
    cfg: &BrhpoConfig,
    env: &EnvSpec,
    seed: u64,
    opts: &TrainOptions,
    sink: &mut dyn MetricsSink,
    checkpoints: &mut dyn CheckpointSink,
) -> Result<(HierAgent, RunSummary)> {
    if opts.eval_interval == 0 || opts.eval_episodes == 0 {
        return Err(Error::config("run.eval_interval", "evaluation interval and episodes must be positive"));
    }
    let mut rs = Streams {
        env: substream(seed, "env"),
        high: substream(seed, "high_actor"),
        low: substream(seed, "low_actor"),
        eval: substream(seed, "eval"),
    };
    let mut agent = HierAgent::new(cfg, env, &mut rs.high, &mut rs.low)?;
    let lambda2 = cfg.effective_lambda2();
    let mut losses = LossAccumulator::default();
    let mut summary = RunSummary {
        env_steps: 0,
        episodes: 0,
        subtasks: 0,
        high_updates: 0,
        low_updates: 0,
        rows: Vec::new(),
    };
    let mut t = 0usize;

    let mut emit = |t: usize, episodes: usize, agent: &HierAgent, losses: &mut LossAccumulator, eval_rng: &mut Stream, rows: &mut Vec<MetricsRow>| -> Result<()> {
        let res = evaluate(&agent.policies(), env, opts.eval_episodes, eval_rng)?;
        let l = losses.take();
        let row = MetricsRow {
            env_step: t as u64,
            episode: episodes as u64,
            eval_success_rate: res.success_rate,
            eval_return: res.mean_return,
            mean_reachability: res.mean_reachability,
            high_actor_loss: l[0],
            high_critic_loss: l[1],
            low_actor_loss: l[2],
            low_critic_loss: l[3],
        };
        sink.emit(&row)?;
        rows.push(row);
        Ok(())
    };

    'episodes: while t < opts.total_steps {
        let (mut s, task_goal) = envs::reset(env, &mut rs.env);
        summary.episodes += 1;
        let mut done = false;
        while !done {
            let offset = if t < cfg.start_steps {
                random_action(&mut rs.high)
            } else {
                sampled(&agent.high.policy, &high_obs(env, &s, &task_goal), &mut rs.high)?
            };
            let r = env.subgoal_range;
            let g = subgoal_from_offset(env, goal_map(&s).coords, [r * offset[0], r * offset[1]]);
            let mut trace = SubtaskTrace::new(s, g, cfg.k, cfg.metric)?;
            let mut done_at = None;
            while !trace.is_full() && !done && t < opts.total_steps {
                let accel = if t < cfg.start_steps {
                    random_action(&mut rs.low)
                } else {
                    sampled(&agent.low.policy, &low_obs(env, &s, &g), &mut rs.low)?
                };
                let a = Action { accel };
                let (next, reward, d) = envs::step(env, &s, &a, &task_goal, &mut rs.env)?;
                trace.push(s, a, reward, next)?;
                if d {
                    done_at = Some(trace.len() - 1);
                }
                s = next;
                done = d;
                t += 1;
                if agent.low_buffer.len() >= agent.low.cfg.batch_size {
                    for _ in 0..cfg.updates_per_step {
                        let st = agent.update_low(&mut rs.low)?;
                        losses.add_low(&st);
                        summary.low_updates += 1;
                    }
                }
                if t % opts.eval_interval == 0 {
                    emit(t, summary.episodes, &agent, &mut losses, &mut rs.eval, &mut summary.rows)?;
                }
                if opts.checkpoint_interval > 0 && t % opts.checkpoint_interval == 0 && t < opts.total_steps {
                    checkpoints.save(t, &agent)?;
                }
            }
            trace.truncated = !trace.is_full();
            let rec = close_subtask(&trace, task_goal, lambda2, cfg.reach_clip, done_at)?;
            agent.store(rec.high, rec.low);
            summary.subtasks += 1;
            if agent.high_buffer.len() >= agent.high.cfg.batch_size {
                let st = agent.update_high(&mut rs.high)?;
                losses.add_high(&st);
                summary.high_updates += 1;
            }
            if t >= opts.total_steps {
                break 'episodes;
            }
        }
    }
    if t % opts.eval_interval != 0 {
        emit(t, summary.episodes, &agent, &mut losses, &mut rs.eval, &mut summary.rows)?;
    }
    checkpoints.save(t, &agent)?;
    summary.env_steps = t;
    Ok((agent, summary))
}
