//! Finite-difference checks of every analytic gradient used in training.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::brhpo::{high_actor_regularizer, HighTransition, ReachabilityPenalty, OBS_DIM};
use crate::envs::{make_env, DistanceMetric, EnvName, Goal, RewardMode, State};
use crate::error::Result;
use crate::netopt::gradcheck::{central_difference, grad_check, relative_error, FD_STEP};
use crate::netopt::Mlp;
use crate::rng;
use crate::sac::{Critic, GaussianPolicy, QNetwork};

/// Worst relative error per component over all configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub configs: usize,
    pub mlp: f64,
    pub policy: f64,
    pub critic_action: f64,
    pub regularizer_offset: f64,
    pub regularizer_policy: f64,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        [self.mlp, self.policy, self.critic_action, self.regularizer_offset, self.regularizer_policy]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Gradient entries smaller than this on both sides are FD noise.
const NEGLIGIBLE: f64 = 1e-7;

fn compare(analytic: f64, numeric: f64) -> f64 {
    if analytic.abs() < NEGLIGIBLE && numeric.abs() < NEGLIGIBLE {
        0.0
    } else {
        relative_error(analytic, numeric)
    }
}

fn normal_vec(n: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

fn random_hidden(r: &mut impl Rng) -> Vec<usize> {
    (0..r.random_range(1..=3)).map(|_| r.random_range(2..=12)).collect()
}

fn check_policy(r: &mut impl Rng) -> Result<f64> {
    let obs_dim = r.random_range(1..=6);
    let act_dim = r.random_range(1..=3);
    let low: Vec<f64> = (0..act_dim).map(|_| r.random_range(-3.0..0.0)).collect();
    let high: Vec<f64> = low.iter().map(|l| l + r.random_range(0.5..4.0)).collect();
    let p = GaussianPolicy::new(obs_dim, &random_hidden(r), low, high, r)?;
    let batch = r.random_range(1..=4);
    let obs = normal_vec(obs_dim * batch, r);
    let d_action = normal_vec(act_dim * batch, r);
    let d_logp = normal_vec(batch, r);
    let seed = r.random::<u64>();
    let sample = p.sample_batch(&obs, batch, &mut rng::stream(seed))?;
    let grads = p.backward_sample(&sample, &d_action, &d_logp)?;
    let mut probe = p.clone();
    let mut params = p.trunk.params().to_vec();
    let mut objective = |theta: &[f64]| {
        probe.trunk.params_mut().copy_from_slice(theta);
        let s = probe.sample_batch(&obs, batch, &mut rng::stream(seed)).expect("shapes fixed");
        let a: f64 = s.actions.iter().zip(&d_action).map(|(x, y)| x * y).sum();
        let l: f64 = s.log_probs.iter().zip(&d_logp).map(|(x, y)| x * y).sum();
        a + l
    };
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let n = central_difference(&mut objective, &mut params, i, FD_STEP);
        worst = worst.max(compare(grads[i], n));
    }
    Ok(worst)
}

fn check_critic(r: &mut impl Rng) -> Result<f64> {
    let obs_dim = r.random_range(1..=6);
    let act_dim = r.random_range(1..=3);
    let q = QNetwork::new(obs_dim, act_dim, &random_hidden(r), r)?;
    let batch = r.random_range(1..=4);
    let obs = normal_vec(obs_dim * batch, r);
    let mut act: Vec<f64> = (0..act_dim * batch).map(|_| r.random_range(-1.0..1.0)).collect();
    let (_, grad) = q.value_and_action_grad(&obs, &act, batch)?;
    let mut f = |a: &[f64]| q.min_values(&obs, a, batch).expect("shapes fixed").iter().sum::<f64>();
    let mut worst: f64 = 0.0;
    for i in 0..act.len() {
        let n = central_difference(&mut f, &mut act, i, FD_STEP);
        // A row whose twins nearly tie is a kink of the min; skip it.
        let b = i / act_dim;
        let (v1, v2) = q.values(&obs[b * obs_dim..(b + 1) * obs_dim], &act[b * act_dim..(b + 1) * act_dim], 1)?;
        if (v1[0] - v2[0]).abs() < 1e-6 {
            continue;
        }
        worst = worst.max(compare(grad[i], n));
    }
    Ok(worst)
}

fn transition(s: [f64; 2], s_next: [f64; 2]) -> HighTransition {
    HighTransition {
        s: State::at_rest(s),
        task_goal: Goal::new(0.0, 16.0),
        g: Goal { coords: s_next },
        r_h: 0.0,
        s_next: State::at_rest(s_next),
        reach: 0.0,
        done: false,
    }
}

const METRICS: [DistanceMetric; 3] = [DistanceMetric::L1, DistanceMetric::L2, DistanceMetric::Linf];

fn check_regularizer_offset(metric: DistanceMetric, r: &mut impl Rng) -> Result<f64> {
    let env = make_env(EnvName::PointMaze, RewardMode::Dense, 0.0)?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 10 {
        let s = [r.random_range(-3.0..19.0), r.random_range(-3.0..19.0)];
        let s_next = [s[0] + r.random_range(-3.0..3.0), s[1] + r.random_range(-3.0..3.0)];
        let t = transition(s, s_next);
        let p = ReachabilityPenalty::new(&env, &[&t], 2.0, metric, 2.0);
        let mut a = vec![r.random_range(-0.95..0.95), r.random_range(-0.95..0.95)];
        let (_, g) = p.ratio(0, &a);
        let mut f = |x: &[f64]| p.ratio(0, x).0;
        let fd: Vec<f64> = (0..2).map(|i| central_difference(&mut f, &mut a, i, 1e-6)).collect();
        // Points within a step of a kink of the norm or of the clip are
        // not differentiable there; two step sizes disagree on them.
        let fd_wide: Vec<f64> = (0..2).map(|i| central_difference(&mut f, &mut a, i, 1e-5)).collect();
        if (0..2).any(|i| (fd[i] - fd_wide[i]).abs() > 1e-6 * (1.0 + fd[i].abs())) {
            continue;
        }
        for i in 0..2 {
            worst = worst.max(compare(g[i], fd[i]));
        }
        checked += 1;
    }
    Ok(worst)
}

fn check_regularizer_policy(metric: DistanceMetric, r: &mut impl Rng) -> Result<f64> {
    let env = make_env(EnvName::PointMaze, RewardMode::Dense, 0.0)?;
    let mut policy = GaussianPolicy::new(OBS_DIM, &random_hidden(r), vec![-1.0; 2], vec![1.0; 2], r)?;
    let batch = r.random_range(2..=6);
    let rows: Vec<HighTransition> = (0..batch)
        .map(|_| {
            let s = [r.random_range(0.0..16.0), r.random_range(0.0..16.0)];
            transition(s, [s[0] + r.random_range(-3.0..3.0), s[1] + r.random_range(-3.0..3.0)])
        })
        .collect();
    let refs: Vec<&HighTransition> = rows.iter().collect();
    // A loose clip keeps the objective smooth around the sampled offsets.
    let p = ReachabilityPenalty::new(&env, &refs, 2.0, metric, 50.0);
    let obs: Vec<f64> = (0..batch * OBS_DIM).map(|_| r.random_range(-1.0..1.0)).collect();
    let seed = r.random::<u64>();
    let (_, grads) = high_actor_regularizer(&policy, &p, &obs, &mut rng::stream(seed))?;
    let mut params = policy.trunk.params().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut f = |x: &[f64]| {
            policy.trunk.params_mut().copy_from_slice(x);
            high_actor_regularizer(&policy, &p, &obs, &mut rng::stream(seed)).expect("shapes fixed").0
        };
        let fd = central_difference(&mut f, &mut params, i, FD_STEP);
        let fd_wide = central_difference(&mut f, &mut params, i, 4.0 * FD_STEP);
        if (fd - fd_wide).abs() > 1e-6 * (1.0 + fd.abs()) {
            continue;
        }
        worst = worst.max(compare(grads[i], fd));
    }
    Ok(worst)
}

/// Runs every check on `n_configs` random shapes.
pub fn run_gradcheck_suite(n_configs: usize, seed: u64) -> Result<GradcheckReport> {
    let mut r = rng::stream(seed);
    let mut rep = GradcheckReport {
        configs: n_configs,
        mlp: 0.0,
        policy: 0.0,
        critic_action: 0.0,
        regularizer_offset: 0.0,
        regularizer_policy: 0.0,
    };
    for c in 0..n_configs {
        let mut sizes = vec![r.random_range(1..=6)];
        sizes.extend(random_hidden(&mut r));
        sizes.push(r.random_range(1..=4));
        let net = Mlp::new(&sizes, &mut r)?;
        let x = normal_vec(sizes[0], &mut r);
        rep.mlp = rep.mlp.max(grad_check(&net, &x, &mut r));
        rep.policy = rep.policy.max(check_policy(&mut r)?);
        rep.critic_action = rep.critic_action.max(check_critic(&mut r)?);
        let m = METRICS[c % 3];
        rep.regularizer_offset = rep.regularizer_offset.max(check_regularizer_offset(m, &mut r)?);
        rep.regularizer_policy = rep.regularizer_policy.max(check_regularizer_policy(m, &mut r)?);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_a_few_configs() {
        let rep = run_gradcheck_suite(4, 3).unwrap();
        assert!(rep.max_error() < 1e-4, "{rep:?}");
    }
}
