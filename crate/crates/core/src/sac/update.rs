use rand::Rng;

use super::critic::{Critic, QNetwork};
use super::policy::GaussianPolicy;
use crate::error::{Error, Result};
use crate::netopt::{clip_grad_norm, AdamState, Mlp};

/// Column-packed minibatch of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    pub act: Vec<f64>,
    pub reward: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn with_capacity(size: usize, obs_dim: usize, act_dim: usize) -> Self {
        Batch {
            size: 0,
            obs_dim,
            act_dim,
            obs: Vec::with_capacity(size * obs_dim),
            act: Vec::with_capacity(size * act_dim),
            reward: Vec::with_capacity(size),
            next_obs: Vec::with_capacity(size * obs_dim),
            done: Vec::with_capacity(size),
        }
    }

    pub fn push(&mut self, obs: &[f64], act: &[f64], reward: f64, next_obs: &[f64], done: bool) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(act.len(), self.act_dim);
        self.obs.extend_from_slice(obs);
        self.act.extend_from_slice(act);
        self.reward.push(reward);
        self.next_obs.extend_from_slice(next_obs);
        self.done.push(done);
        self.size += 1;
    }

    fn validate(&self) -> Result<()> {
        let n = self.size;
        if n == 0
            || self.obs.len() != n * self.obs_dim
            || self.next_obs.len() != n * self.obs_dim
            || self.act.len() != n * self.act_dim
            || self.reward.len() != n
            || self.done.len() != n
        {
            return Err(Error::contract("malformed transition batch"));
        }
        Ok(())
    }
}

/// Differentiable extra term added to the actor objective, one value per
/// batch row, as a function of the sampled action.
pub trait ActionPenalty {
    /// Penalty value and its gradient with respect to `action` for `row`.
    fn eval(&self, row: usize, action: &[f64]) -> (f64, Vec<f64>);
}

/// Soft Bellman target `r + gamma (1 - done) (min_q' - alpha log_pi')`.
pub fn td_target(reward: f64, gamma: f64, done: bool, min_q_next: f64, alpha: f64, logp_next: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (min_q_next - alpha * logp_next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub gamma: f64,
    pub alpha: f64,
    pub lr: f64,
    /// Global-norm gradient clip applied per network.
    pub grad_clip: f64,
}

/// One regression step of both critics towards the soft TD target.
/// Returns the mean of the two half-MSE losses.
pub fn critic_update(
    policy: &GaussianPolicy,
    q: &mut QNetwork,
    opts: &mut [AdamState; 2],
    targets: &QNetwork,
    batch: &Batch,
    step: StepSizes,
    rng: &mut impl Rng,
) -> Result<f64> {
    batch.validate()?;
    let n = batch.size;
    let next = policy.sample_batch(&batch.next_obs, n, rng)?;
    let min_next = targets.min_values(&batch.next_obs, &next.actions, n)?;
    let y: Vec<f64> = (0..n)
        .map(|b| {
            td_target(
                batch.reward[b],
                step.gamma,
                batch.done[b],
                min_next[b],
                step.alpha,
                next.log_probs[b],
            )
        })
        .collect();
    let x = q.inputs(&batch.obs, &batch.act, n)?;
    let mut total = 0.0;
    let mut grads_all = Vec::with_capacity(2);
    let c = q.scale();
    for net in q.nets() {
        let (pred, cache) = net.forward_batch(&x, n)?;
        let mut loss = 0.0;
        let mut d_out = Vec::with_capacity(n);
        for b in 0..n {
            let e = c * pred[b] - y[b];
            if !e.is_finite() {
                return Err(Error::numerical("critic loss", b, e));
            }
            loss += 0.5 * e * e;
            d_out.push(c * e / n as f64);
        }
        total += loss / n as f64;
        let (mut g, _) = net.backward(&cache, &d_out)?;
        clip_grad_norm(&mut g, step.grad_clip);
        grads_all.push(g);
    }
    for ((net, opt), g) in q.nets_mut().into_iter().zip(opts.iter_mut()).zip(&grads_all) {
        opt.step(net.params_mut(), g, step.lr)?;
    }
    Ok(total / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorStats {
    /// Mean objective, including the penalty.
    pub loss: f64,
    /// Mean penalty term alone (zero when none is supplied).
    pub penalty: f64,
    pub mean_log_prob: f64,
}

/// One step minimising `E[alpha log pi(a|s) - Q(s, a) + penalty(a)]` with
/// reparameterised actions.
pub fn actor_update(
    policy: &mut GaussianPolicy,
    opt: &mut AdamState,
    critic: &impl Critic,
    obs: &[f64],
    batch: usize,
    step: StepSizes,
    penalty: Option<&dyn ActionPenalty>,
    rng: &mut impl Rng,
) -> Result<ActorStats> {
    let n_act = policy.act_dim();
    let sample = policy.sample_batch(obs, batch, rng)?;
    let (q, dq) = critic.value_and_action_grad(obs, &sample.actions, batch)?;
    let inv = 1.0 / batch as f64;
    let mut d_action: Vec<f64> = dq.iter().map(|g| -g * inv).collect();
    let d_logp = vec![step.alpha * inv; batch];
    let mut loss = 0.0;
    let mut pen_total = 0.0;
    for b in 0..batch {
        let mut l = step.alpha * sample.log_probs[b] - q[b];
        if let Some(p) = penalty {
            let (v, g) = p.eval(b, &sample.actions[b * n_act..(b + 1) * n_act]);
            l += v;
            pen_total += v;
            for (d, gi) in d_action[b * n_act..(b + 1) * n_act].iter_mut().zip(g) {
                *d += gi * inv;
            }
        }
        if !l.is_finite() {
            return Err(Error::numerical("actor loss", b, l));
        }
        loss += l;
    }
    let mut grads = policy.backward_sample(&sample, &d_action, &d_logp)?;
    clip_grad_norm(&mut grads, step.grad_clip);
    opt.step(policy.trunk.params_mut(), &grads, step.lr)?;
    Ok(ActorStats {
        loss: loss * inv,
        penalty: pen_total * inv,
        mean_log_prob: sample.log_probs.iter().sum::<f64>() * inv,
    })
}

/// Polyak averaging `target <- (1 - tau) target + tau source`.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if target.sizes() != source.sizes() {
        return Err(Error::contract(format!(
            "soft update between shapes {:?} and {:?}",
            target.sizes(),
            source.sizes()
        )));
    }
    for (t, s) in target.params_mut().iter_mut().zip(source.params()) {
        *t = (1.0 - tau) * *t + tau * s;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub batch_size: usize,
    pub target_update_interval: usize,
    pub grad_clip: f64,
    /// Critic outputs are this multiple of the raw network output.
    #[serde(default = "unit")]
    pub value_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden: vec![256, 256],
            gamma: 0.99,
            tau: 0.005,
            alpha: 0.2,
            critic_lr: 1e-3,
            actor_lr: 1e-4,
            batch_size: 128,
            target_update_interval: 2,
            grad_clip: 10.0,
            value_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor: ActorStats,
}

/// Policy, twin critics, critic targets and their optimisers for one level.
#[derive(Debug, Clone)]
pub struct SacLearner {
    pub policy: GaussianPolicy,
    pub critic: QNetwork,
    pub target: QNetwork,
    pub policy_opt: AdamState,
    pub critic_opts: [AdamState; 2],
    pub cfg: SacConfig,
    pub updates: u64,
}

impl SacLearner {
    pub fn new(
        obs_dim: usize,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        cfg: SacConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let act_dim = action_low.len();
        let policy = GaussianPolicy::new(obs_dim, &cfg.hidden, action_low, action_high, rng)?;
        let critic = QNetwork::new(obs_dim, act_dim, &cfg.hidden, rng)?.with_scale(cfg.value_scale);
        let target = critic.clone();
        Ok(SacLearner {
            policy_opt: AdamState::new(policy.trunk.num_params()),
            critic_opts: [
                AdamState::new(critic.q1.num_params()),
                AdamState::new(critic.q2.num_params()),
            ],
            policy,
            critic,
            target,
            cfg,
            updates: 0,
        })
    }

    fn step_sizes(&self, lr: f64) -> StepSizes {
        StepSizes {
            gamma: self.cfg.gamma,
            alpha: self.cfg.alpha,
            lr,
            grad_clip: self.cfg.grad_clip,
        }
    }

    /// Critic step, actor step, then a target refresh every
    /// `target_update_interval` updates.
    pub fn update(
        &mut self,
        batch: &Batch,
        penalty: Option<&dyn ActionPenalty>,
        rng: &mut impl Rng,
    ) -> Result<UpdateStats> {
        let critic_step = self.step_sizes(self.cfg.critic_lr);
        let actor_step = self.step_sizes(self.cfg.actor_lr);
        let critic_loss = critic_update(
            &self.policy,
            &mut self.critic,
            &mut self.critic_opts,
            &self.target,
            batch,
            critic_step,
            rng,
        )?;
        let actor = actor_update(
            &mut self.policy,
            &mut self.policy_opt,
            &self.critic,
            &batch.obs,
            batch.size,
            actor_step,
            penalty,
            rng,
        )?;
        self.updates += 1;
        if self.updates % self.cfg.target_update_interval.max(1) as u64 == 0 {
            soft_update(&mut self.target.q1, &self.critic.q1, self.cfg.tau)?;
            soft_update(&mut self.target.q2, &self.critic.q2, self.cfg.tau)?;
        }
        Ok(UpdateStats { critic_loss, actor })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn td_target_arithmetic() {
        assert!((td_target(1.0, 0.99, false, 2.0, 0.2, 0.0) - 2.98).abs() < 1e-12);
        assert_eq!(td_target(1.5, 0.99, true, 123.0, 0.2, -4.0), 1.5);
        assert_eq!(td_target(1.5, 0.99, true, f64::NAN, 0.2, -4.0), 1.5);
    }

    #[test]
    fn swapping_twin_targets_leaves_td_target_unchanged() {
        let mut r = rng::stream(30);
        let policy = GaussianPolicy::new(2, &[4], vec![-1.0], vec![1.0], &mut r).unwrap();
        let t = QNetwork::new(2, 1, &[4], &mut r).unwrap();
        let swapped = QNetwork::from_parts(t.q2.clone(), t.q1.clone(), 2, 1).unwrap();
        let obs = [0.3, -0.2, 1.0, 0.5];
        let s = policy.sample_batch(&obs, 2, &mut r).unwrap();
        assert_eq!(
            t.min_values(&obs, &s.actions, 2).unwrap(),
            swapped.min_values(&obs, &s.actions, 2).unwrap()
        );
    }

    #[test]
    fn soft_update_examples() {
        let mut target = Mlp::zeros(&[1, 1]).unwrap();
        let mut source = Mlp::zeros(&[1, 1]).unwrap();
        source.params_mut().fill(1.0);
        soft_update(&mut target, &source, 0.005).unwrap();
        assert!(target.params().iter().all(|&v| v == 0.005));

        let mut r = rng::stream(31);
        let src = Mlp::new(&[3, 4, 2], &mut r).unwrap();
        let mut tgt = Mlp::new(&[3, 4, 2], &mut r).unwrap();
        let before = tgt.params().to_vec();
        soft_update(&mut tgt, &src, 0.0).unwrap();
        assert_eq!(tgt.params(), &before[..]);
        soft_update(&mut tgt, &src, 1.0).unwrap();
        assert_eq!(tgt.params(), src.params());

        let mut wrong = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert!(soft_update(&mut wrong, &src, 0.5).is_err());
    }

    #[test]
    fn soft_updates_contract_towards_frozen_source() {
        let mut r = rng::stream(32);
        let src = Mlp::new(&[2, 6, 1], &mut r).unwrap();
        let mut tgt = Mlp::new(&[2, 6, 1], &mut r).unwrap();
        let gap0: Vec<f64> = tgt.params().iter().zip(src.params()).map(|(a, b)| (a - b).abs()).collect();
        let tau = 0.005;
        for n in 1..=300 {
            soft_update(&mut tgt, &src, tau).unwrap();
            let factor = (1.0 - tau).powi(n);
            for ((t, s), g0) in tgt.params().iter().zip(src.params()).zip(&gap0) {
                assert!((t - s).abs() <= factor * g0 * (1.0 + 1e-9) + 1e-15);
            }
        }
    }

    #[test]
    fn critic_converges_to_reward_with_zero_discount() {
        let mut r = rng::stream(33);
        let policy = GaussianPolicy::new(2, &[8], vec![-1.0], vec![1.0], &mut r).unwrap();
        let mut q = QNetwork::new(2, 1, &[16], &mut r).unwrap();
        let targets = q.clone();
        let mut opts = [AdamState::new(q.q1.num_params()), AdamState::new(q.q2.num_params())];
        let mut batch = Batch::with_capacity(1, 2, 1);
        batch.push(&[0.5, -0.5], &[0.25], 1.7, &[0.1, 0.1], false);
        let step = StepSizes {
            gamma: 0.0,
            alpha: 0.2,
            lr: 1e-2,
            grad_clip: 10.0,
        };
        for _ in 0..2000 {
            critic_update(&policy, &mut q, &mut opts, &targets, &batch, step, &mut r).unwrap();
        }
        let (a, b) = q.values(&batch.obs, &batch.act, 1).unwrap();
        assert!((a[0] - 1.7).abs() < 1e-3 && (b[0] - 1.7).abs() < 1e-3, "{a:?} {b:?}");
    }

    struct Quadratic;

    impl Critic for Quadratic {
        fn value_and_action_grad(&self, _obs: &[f64], act: &[f64], _batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
            Ok((
                act.iter().map(|a| -(a - 0.5) * (a - 0.5)).collect(),
                act.iter().map(|a| -2.0 * (a - 0.5)).collect(),
            ))
        }
    }

    struct ZeroCritic;

    impl Critic for ZeroCritic {
        fn value_and_action_grad(&self, _obs: &[f64], act: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
            Ok((vec![0.0; batch], vec![0.0; act.len()]))
        }
    }

    struct PullTo(f64);

    impl ActionPenalty for PullTo {
        fn eval(&self, _row: usize, action: &[f64]) -> (f64, Vec<f64>) {
            let d = action[0] - self.0;
            (d * d, vec![2.0 * d])
        }
    }

    struct Nothing;

    impl ActionPenalty for Nothing {
        fn eval(&self, _row: usize, action: &[f64]) -> (f64, Vec<f64>) {
            (0.0, vec![0.0; action.len()])
        }
    }

    fn step(alpha: f64, lr: f64) -> StepSizes {
        StepSizes {
            gamma: 0.99,
            alpha,
            lr,
            grad_clip: 10.0,
        }
    }

    #[test]
    fn actor_finds_quadratic_optimum() {
        let mut r = rng::stream(34);
        let mut policy = GaussianPolicy::new(1, &[16], vec![-1.0], vec![1.0], &mut r).unwrap();
        let mut opt = AdamState::new(policy.trunk.num_params());
        let obs = vec![1.0; 64];
        for _ in 0..2000 {
            actor_update(&mut policy, &mut opt, &Quadratic, &obs, 64, step(0.01, 1e-3), None, &mut r).unwrap();
        }
        let (a, _) = policy.sample_action(&[1.0], &mut r, true).unwrap();
        assert!((a[0] - 0.5).abs() < 0.05, "{}", a[0]);
    }

    #[test]
    fn constant_critic_moves_only_under_penalty() {
        let mut r = rng::stream(35);
        let base = GaussianPolicy::new(2, &[8], vec![-1.0], vec![1.0], &mut r).unwrap();
        let obs = vec![0.2, 0.4, -0.1, 0.9];

        let mut p = base.clone();
        let mut opt = AdamState::new(p.trunk.num_params());
        actor_update(&mut p, &mut opt, &ZeroCritic, &obs, 2, step(0.0, 1e-3), None, &mut r).unwrap();
        assert_eq!(p, base);

        let mut p = base.clone();
        let mut opt = AdamState::new(p.trunk.num_params());
        actor_update(&mut p, &mut opt, &ZeroCritic, &obs, 2, step(0.0, 1e-3), Some(&PullTo(0.9)), &mut r)
            .unwrap();
        assert_ne!(p, base);
    }

    #[test]
    fn explicit_zero_penalty_is_identical_to_none() {
        let mut r = rng::stream(36);
        let base = GaussianPolicy::new(2, &[8], vec![-1.0], vec![1.0], &mut r).unwrap();
        let q = QNetwork::new(2, 1, &[8], &mut r).unwrap();
        let obs = vec![0.2, 0.4, -0.1, 0.9];
        let run = |pen: Option<&dyn ActionPenalty>| {
            let mut p = base.clone();
            let mut opt = AdamState::new(p.trunk.num_params());
            let stats = actor_update(&mut p, &mut opt, &q, &obs, 2, step(0.2, 1e-3), pen, &mut rng::stream(5)).unwrap();
            (p, stats.loss)
        };
        let (a, la) = run(None);
        let (b, lb) = run(Some(&Nothing));
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn non_finite_critic_loss_is_reported() {
        let mut r = rng::stream(37);
        let policy = GaussianPolicy::new(1, &[4], vec![-1.0], vec![1.0], &mut r).unwrap();
        let mut q = QNetwork::new(1, 1, &[4], &mut r).unwrap();
        let targets = q.clone();
        let mut opts = [AdamState::new(q.q1.num_params()), AdamState::new(q.q2.num_params())];
        let mut batch = Batch::with_capacity(2, 1, 1);
        batch.push(&[0.0], &[0.0], 1.0, &[0.0], true);
        batch.push(&[0.0], &[0.0], f64::NAN, &[0.0], true);
        let err = critic_update(&policy, &mut q, &mut opts, &targets, &batch, step(0.2, 1e-3), &mut r).unwrap_err();
        assert!(matches!(err, Error::Numerical { index: 1, .. }));
    }
}
