use rand::Rng;

use crate::error::{Error, Result};
use crate::netopt::{Cache, Mlp};

/// Anything the actor can be trained against: a batch of state-action
/// values together with their action gradients.
pub trait Critic {
    /// Returns `(q, dq/da)` for `batch` rows; `dq/da` is `batch x act_dim`.
    fn value_and_action_grad(
        &self,
        obs: &[f64],
        act: &[f64],
        batch: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Twin critics, each mapping `obs ++ action` to a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub q1: Mlp,
    pub q2: Mlp,
    obs_dim: usize,
    act_dim: usize,
    scale: f64,
}

pub(crate) fn join_rows(obs: &[f64], act: &[f64], batch: usize, od: usize, ad: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(batch * (od + ad));
    for b in 0..batch {
        x.extend_from_slice(&obs[b * od..(b + 1) * od]);
        x.extend_from_slice(&act[b * ad..(b + 1) * ad]);
    }
    x
}

impl QNetwork {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut sizes = vec![obs_dim + act_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(QNetwork {
            q1: Mlp::new(&sizes, rng)?,
            q2: Mlp::new(&sizes, rng)?,
            obs_dim,
            act_dim,
            scale: 1.0,
        })
    }

    pub fn from_parts(q1: Mlp, q2: Mlp, obs_dim: usize, act_dim: usize) -> Result<Self> {
        for q in [&q1, &q2] {
            if q.input_dim() != obs_dim + act_dim || q.output_dim() != 1 {
                return Err(Error::contract("critic shape does not match obs/action dims"));
            }
        }
        Ok(QNetwork {
            q1,
            q2,
            obs_dim,
            act_dim,
            scale: 1.0,
        })
    }

    /// Fixed factor applied to both raw network outputs.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub(crate) fn inputs(&self, obs: &[f64], act: &[f64], batch: usize) -> Result<Vec<f64>> {
        if obs.len() != batch * self.obs_dim || act.len() != batch * self.act_dim {
            return Err(Error::contract(format!(
                "critic expected {batch} rows of {}+{} values",
                self.obs_dim, self.act_dim
            )));
        }
        Ok(join_rows(obs, act, batch, self.obs_dim, self.act_dim))
    }

    /// Both critic outputs for a batch.
    pub fn values(&self, obs: &[f64], act: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.inputs(obs, act, batch)?;
        let c = self.scale;
        let mut a = self.q1.predict_batch(&x, batch)?;
        let mut b = self.q2.predict_batch(&x, batch)?;
        a.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= c);
        Ok((a, b))
    }

    /// Elementwise minimum of the twin critics.
    pub fn min_values(&self, obs: &[f64], act: &[f64], batch: usize) -> Result<Vec<f64>> {
        let (a, b) = self.values(obs, act, batch)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect())
    }

    pub(crate) fn forward_both(
        &self,
        obs: &[f64],
        act: &[f64],
        batch: usize,
    ) -> Result<[(Vec<f64>, Cache); 2]> {
        let x = self.inputs(obs, act, batch)?;
        Ok([self.q1.forward_batch(&x, batch)?, self.q2.forward_batch(&x, batch)?])
    }

    pub fn nets(&self) -> [&Mlp; 2] {
        [&self.q1, &self.q2]
    }

    pub fn nets_mut(&mut self) -> [&mut Mlp; 2] {
        [&mut self.q1, &mut self.q2]
    }
}

impl Critic for QNetwork {
    /// Minimum of the twins; the gradient flows through whichever is smaller.
    fn value_and_action_grad(
        &self,
        obs: &[f64],
        act: &[f64],
        batch: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let [(v1, c1), (v2, c2)] = self.forward_both(obs, act, batch)?;
        let pick_first: Vec<bool> = v1.iter().zip(&v2).map(|(a, b)| a <= b).collect();
        let c = self.scale;
        let g1: Vec<f64> = pick_first.iter().map(|&p| if p { c } else { 0.0 }).collect();
        let g2: Vec<f64> = pick_first.iter().map(|&p| if p { 0.0 } else { c }).collect();
        let d1 = self.q1.input_grad(&c1, &g1)?;
        let d2 = self.q2.input_grad(&c2, &g2)?;
        let width = self.obs_dim + self.act_dim;
        let mut q = Vec::with_capacity(batch);
        let mut da = Vec::with_capacity(batch * self.act_dim);
        for b in 0..batch {
            q.push(c * v1[b].min(v2[b]));
            let row = b * width + self.obs_dim..(b + 1) * width;
            for (x, y) in d1[row.clone()].iter().zip(&d2[row]) {
                da.push(x + y);
            }
        }
        Ok((q, da))
    }
}
