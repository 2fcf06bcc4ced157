use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::netopt::{Cache, Mlp};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
// Keeps squashed samples strictly inside the action box.
const TANH_LIMIT: f64 = 1.0 - 1e-12;

/// Tanh-squashed diagonal Gaussian policy.
///
/// The trunk emits `2 * act_dim` values per observation: the pre-squash mean
/// followed by the raw log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub trunk: Mlp,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

/// A reparameterised batch of samples, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub batch: usize,
    /// `batch x act_dim`, row-major.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    cache: Cache,
    noise: Vec<f64>,
    /// Squashed pre-scale values `tanh(u)`.
    squashed: Vec<f64>,
    std: Vec<f64>,
    log_std_clamped: Vec<bool>,
}

/// `log(1 - tanh(u)^2)`, computed without cancellation.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl GaussianPolicy {
    pub fn new(
        obs_dim: usize,
        hidden: &[usize],
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if action_low.len() != action_high.len() || action_low.is_empty() {
            return Err(Error::contract("action bounds must be non-empty and equal length"));
        }
        if action_low.iter().zip(&action_high).any(|(l, h)| !(l < h)) {
            return Err(Error::contract("every action lower bound must be below its upper bound"));
        }
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_low.len());
        Ok(GaussianPolicy {
            trunk: Mlp::new(&sizes, rng)?,
            action_low,
            action_high,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.action_low.len()
    }

    fn scale(&self, i: usize) -> f64 {
        0.5 * (self.action_high[i] - self.action_low[i])
    }

    fn offset(&self, i: usize) -> f64 {
        0.5 * (self.action_high[i] + self.action_low[i])
    }

    fn squash(&self, i: usize, u: f64) -> (f64, f64) {
        let t = u.tanh().clamp(-TANH_LIMIT, TANH_LIMIT);
        (t, self.offset(i) + self.scale(i) * t)
    }

    /// Mean and clamped log-std heads for one observation.
    pub fn heads(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.trunk.forward(obs)?.0;
        let n = self.act_dim();
        let log_std = out[n..]
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Ok((out[..n].to_vec(), log_std))
    }

    /// Samples one action. In deterministic mode the squashed mean is
    /// returned and the log-probability is omitted.
    pub fn sample_action(
        &self,
        obs: &[f64],
        rng: &mut impl Rng,
        deterministic: bool,
    ) -> Result<(Vec<f64>, Option<f64>)> {
        if deterministic {
            let (mean, _) = self.heads(obs)?;
            let act = mean
                .iter()
                .enumerate()
                .map(|(i, &m)| self.squash(i, m).1)
                .collect();
            return Ok((act, None));
        }
        let s = self.sample_batch(obs, 1, rng)?;
        Ok((s.actions, Some(s.log_probs[0])))
    }

    /// Reparameterised samples for a batch of observations.
    pub fn sample_batch(&self, obs: &[f64], batch: usize, rng: &mut impl Rng) -> Result<PolicySample> {
        let (out, cache) = self.trunk.forward_batch(obs, batch)?;
        let n = self.act_dim();
        let mut sample = PolicySample {
            batch,
            actions: Vec::with_capacity(batch * n),
            log_probs: Vec::with_capacity(batch),
            cache,
            noise: Vec::with_capacity(batch * n),
            squashed: Vec::with_capacity(batch * n),
            std: Vec::with_capacity(batch * n),
            log_std_clamped: Vec::with_capacity(batch * n),
        };
        for row in out.chunks_exact(2 * n) {
            let mut logp = 0.0;
            for i in 0..n {
                let raw = row[n + i];
                let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let std = log_std.exp();
                let xi: f64 = rng.sample(StandardNormal);
                let u = row[i] + std * xi;
                let (t, a) = self.squash(i, u);
                logp += -0.5 * xi * xi - log_std - HALF_LN_2PI
                    - log_one_minus_tanh_sq(u)
                    - self.scale(i).ln();
                sample.actions.push(a);
                sample.noise.push(xi);
                sample.squashed.push(t);
                sample.std.push(std);
                sample.log_std_clamped.push(raw != log_std);
            }
            sample.log_probs.push(logp);
        }
        Ok(sample)
    }

    /// Log-density of `action` under the policy at `obs`.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let (mean, log_std) = self.heads(obs)?;
        if action.len() != self.act_dim() {
            return Err(Error::contract("action dimension mismatch"));
        }
        let mut logp = 0.0;
        for i in 0..self.act_dim() {
            let t = (action[i] - self.offset(i)) / self.scale(i);
            if t.abs() >= 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let u = t.atanh();
            let z = (u - mean[i]) / log_std[i].exp();
            logp += -0.5 * z * z - log_std[i] - HALF_LN_2PI
                - log_one_minus_tanh_sq(u)
                - self.scale(i).ln();
        }
        Ok(logp)
    }

    /// Trunk parameter gradients of `sum_b (d_action[b] . action[b] + d_logp[b] * log_prob[b])`
    /// along the reparameterisation path (noise held fixed).
    pub fn backward_sample(
        &self,
        sample: &PolicySample,
        d_action: &[f64],
        d_logp: &[f64],
    ) -> Result<Vec<f64>> {
        let n = self.act_dim();
        if d_action.len() != sample.batch * n || d_logp.len() != sample.batch {
            return Err(Error::contract("policy backward gradient shapes do not match the sample"));
        }
        let mut d_out = vec![0.0; sample.batch * 2 * n];
        for b in 0..sample.batch {
            for i in 0..n {
                let k = b * n + i;
                let t = sample.squashed[k];
                // d action / d u and d log_prob / d u with the noise fixed.
                let du = d_action[k] * self.scale(i) * (1.0 - t * t) + d_logp[b] * 2.0 * t;
                d_out[b * 2 * n + i] = du;
                if !sample.log_std_clamped[k] {
                    d_out[b * 2 * n + n + i] = du * sample.std[k] * sample.noise[k] - d_logp[b];
                }
            }
        }
        Ok(self.trunk.backward(&sample.cache, &d_out)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netopt::gradcheck::{central_difference, relative_error};
    use crate::rng;

    fn policy_1d(mean: f64, log_std: f64, low: f64, high: f64) -> GaussianPolicy {
        let mut trunk = Mlp::zeros(&[1, 2]).unwrap();
        let (_, b) = trunk.layer_mut(0);
        b[0] = mean;
        b[1] = log_std;
        GaussianPolicy {
            trunk,
            action_low: vec![low],
            action_high: vec![high],
        }
    }

    #[test]
    fn tanh_correction_is_stable() {
        for u in [-30.0, -3.0, -0.2, 0.0, 0.7, 5.0, 40.0] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            if direct.is_finite() && u.abs() < 5.0 {
                assert!((log_one_minus_tanh_sq(u) - direct).abs() < 1e-12);
            }
            assert!(log_one_minus_tanh_sq(u).is_finite());
        }
    }

    #[test]
    fn narrow_centred_policy_acts_near_zero() {
        let p = policy_1d(0.0, LOG_STD_MIN, -1.0, 1.0);
        let mut r = rng::stream(1);
        let (a, lp) = p.sample_action(&[0.3], &mut r, false).unwrap();
        assert!(a[0].abs() < 1e-6);
        assert!(lp.is_some());
        let (a, lp) = p.sample_action(&[0.3], &mut r, true).unwrap();
        assert_eq!(a[0], 0.0);
        assert!(lp.is_none());
    }

    #[test]
    fn samples_stay_strictly_inside_bounds() {
        let mut r = rng::stream(2);
        for trial in 0..20 {
            let mut p = GaussianPolicy::new(3, &[8], vec![-2.0, 0.0], vec![2.0, 0.5], &mut r).unwrap();
            // Push some policies towards saturation.
            if trial % 2 == 0 {
                for w in p.trunk.params_mut() {
                    *w *= 50.0;
                }
            }
            let obs: Vec<f64> = (0..3 * 500).map(|_| r.random_range(-5.0..5.0)).collect();
            let s = p.sample_batch(&obs, 500, &mut r).unwrap();
            for row in s.actions.chunks_exact(2) {
                assert!(row[0] > -2.0 && row[0] < 2.0, "{row:?}");
                assert!(row[1] > 0.0 && row[1] < 0.5, "{row:?}");
            }
            for row in obs.chunks_exact(3) {
                let (_, ls) = p.heads(row).unwrap();
                assert!(ls.iter().all(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(v)));
            }
        }
    }

    #[test]
    fn sampled_log_prob_matches_density_formula() {
        let mut r = rng::stream(3);
        let p = GaussianPolicy::new(2, &[6], vec![-3.0, -1.0], vec![1.0, 1.0], &mut r).unwrap();
        let obs = [0.4, -0.9];
        for _ in 0..50 {
            let (a, lp) = p.sample_action(&obs, &mut r, false).unwrap();
            let direct = p.log_prob(&obs, &a).unwrap();
            assert!((lp.unwrap() - direct).abs() < 1e-6, "{} vs {direct}", lp.unwrap());
        }
    }

    #[test]
    fn reparameterised_gradients_match_finite_differences() {
        let mut r = rng::stream(4);
        let p = GaussianPolicy::new(3, &[5, 4], vec![-2.0, -1.0], vec![2.0, 3.0], &mut r).unwrap();
        let batch = 4;
        let obs: Vec<f64> = (0..3 * batch).map(|_| r.random_range(-1.0..1.0)).collect();
        let d_action: Vec<f64> = (0..2 * batch).map(|_| r.random_range(-1.0..1.0)).collect();
        let d_logp: Vec<f64> = (0..batch).map(|_| r.random_range(-1.0..1.0)).collect();
        let seed = 99;
        let sample = p.sample_batch(&obs, batch, &mut rng::stream(seed)).unwrap();
        let grads = p.backward_sample(&sample, &d_action, &d_logp).unwrap();
        let mut probe = p.clone();
        let mut params = p.trunk.params().to_vec();
        let mut objective = |theta: &[f64]| {
            probe.trunk.params_mut().copy_from_slice(theta);
            let s = probe.sample_batch(&obs, batch, &mut rng::stream(seed)).unwrap();
            let a: f64 = s.actions.iter().zip(&d_action).map(|(x, y)| x * y).sum();
            let l: f64 = s.log_probs.iter().zip(&d_logp).map(|(x, y)| x * y).sum();
            a + l
        };
        let mut worst: f64 = 0.0;
        for i in 0..params.len() {
            let n = central_difference(&mut objective, &mut params, i, 1e-5);
            worst = worst.max(relative_error(grads[i], n));
        }
        assert!(worst < 1e-4, "{worst}");
    }
}
