//! Finite MDPs, flat and two-level tabular policies, and their exact values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums must match 1 to this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// `table[s][a]` action probabilities.
pub type FlatPolicy = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `p[s][a][s']`.
    pub p: Vec<Vec<Vec<f64>>>,
    /// `r[s][a]`, already specialised to the task goal.
    pub r: Vec<Vec<f64>>,
    pub gamma: f64,
    pub goal: usize,
    /// Goal-space metric; goals are states.
    pub d: Vec<Vec<f64>>,
    /// Start state for marginal propagation.
    pub start: usize,
}

/// `high[s][g]` subgoal probabilities and `low[s][g][a]` action probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularHierPolicy {
    pub high: Vec<Vec<f64>>,
    pub low: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn check_row(row: &[f64], what: &str) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::contract(format!("{what} is not a probability row (sum {sum})")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n_states, self.n_actions);
        if n == 0 || m == 0 {
            return Err(Error::contract("MDP needs at least one state and one action"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::contract("discount must lie in (0, 1)"));
        }
        if self.p.len() != n || self.r.len() != n || self.d.len() != n || self.goal >= n || self.start >= n {
            return Err(Error::contract("MDP tables have inconsistent sizes"));
        }
        for s in 0..n {
            if self.p[s].len() != m || self.r[s].len() != m || self.d[s].len() != n {
                return Err(Error::contract("MDP tables have inconsistent sizes"));
            }
            for a in 0..m {
                if self.p[s][a].len() != n {
                    return Err(Error::contract("MDP tables have inconsistent sizes"));
                }
                check_row(&self.p[s][a], &format!("P[{s}][{a}]"))?;
            }
        }
        for s in 0..n {
            for t in 0..n {
                let dst = self.d[s][t];
                if dst < 0.0 || (s == t) != (dst == 0.0) || dst != self.d[t][s] {
                    return Err(Error::contract(format!("distance table is not a metric at ({s}, {t})")));
                }
                for u in 0..n {
                    if self.d[s][u] > dst + self.d[t][u] + 1e-12 {
                        return Err(Error::contract("distance table violates the triangle inequality"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn check_flat(&self, pi: &FlatPolicy) -> Result<()> {
        if pi.len() != self.n_states || pi.iter().any(|r| r.len() != self.n_actions) {
            return Err(Error::contract("policy table has the wrong shape"));
        }
        for (s, row) in pi.iter().enumerate() {
            check_row(row, &format!("pi[{s}]"))?;
        }
        Ok(())
    }

    pub fn check_hier(&self, h: &TabularHierPolicy) -> Result<()> {
        let n = self.n_states;
        if h.high.len() != n || h.low.len() != n {
            return Err(Error::contract("hierarchical policy has the wrong shape"));
        }
        for s in 0..n {
            if h.high[s].len() != n || h.low[s].len() != n {
                return Err(Error::contract("hierarchical policy has the wrong shape"));
            }
            check_row(&h.high[s], &format!("pi_h[{s}]"))?;
            for g in 0..n {
                if h.low[s][g].len() != self.n_actions {
                    return Err(Error::contract("hierarchical policy has the wrong shape"));
                }
                check_row(&h.low[s][g], &format!("pi_l[{s}][{g}]"))?;
            }
        }
        Ok(())
    }

    /// One-step state transition matrix under `pi`.
    pub fn transition_matrix(&self, pi: &FlatPolicy) -> Vec<Vec<f64>> {
        let n = self.n_states;
        let mut m = vec![vec![0.0; n]; n];
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = pi[s][a];
                if w == 0.0 {
                    continue;
                }
                for t in 0..n {
                    m[s][t] += w * self.p[s][a][t];
                }
            }
        }
        m
    }

    /// Expected one-step reward under `pi`.
    pub fn reward_vector(&self, pi: &FlatPolicy) -> Vec<f64> {
        (0..self.n_states)
            .map(|s| (0..self.n_actions).map(|a| pi[s][a] * self.r[s][a]).sum())
            .collect()
    }

    pub fn r_max(&self) -> f64 {
        self.r.iter().flatten().fold(0.0, |m, &x| m.max(x.abs()))
    }
}

impl TabularHierPolicy {
    /// Low-level policy for subgoal `g` as a flat table.
    pub fn low_for(&self, g: usize) -> FlatPolicy {
        self.low.iter().map(|row| row[g].clone()).collect()
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::numerical("singular linear system", col, a[piv][col]));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// `V = r + discount * M V`, solved directly.
fn evaluate_linear(m: &[Vec<f64>], r: &[f64], discount: f64) -> Result<Vec<f64>> {
    let n = r.len();
    let a = (0..n)
        .map(|i| (0..n).map(|j| (i == j) as u8 as f64 - discount * m[i][j]).collect())
        .collect();
    solve(a, r.to_vec())
}

/// Exact value of a flat policy.
pub fn flat_value(mdp: &TabularMdp, pi: &FlatPolicy) -> Result<Vec<f64>> {
    mdp.check_flat(pi)?;
    evaluate_linear(&mdp.transition_matrix(pi), &mdp.reward_vector(pi), mdp.gamma)
}

/// Row-vector times matrix.
pub(crate) fn push_forward(dist: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut out = vec![0.0; n];
    for (s, &w) in dist.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for t in 0..n {
            out[t] += w * m[s][t];
        }
    }
    out
}

/// Per-subgoal subtask statistics from every start state: the discounted
/// within-subtask reward and the k-step landing distribution.
#[derive(Debug, Clone)]
pub struct SubtaskModel {
    /// `reward[g][s]`.
    pub reward: Vec<Vec<f64>>,
    /// `kernel[g][s][s']`.
    pub kernel: Vec<Vec<Vec<f64>>>,
}

pub fn subtask_model(mdp: &TabularMdp, h: &TabularHierPolicy, k: usize) -> SubtaskModel {
    let n = mdp.n_states;
    let mut reward = vec![vec![0.0; n]; n];
    let mut kernel = vec![vec![vec![0.0; n]; n]; n];
    for g in 0..n {
        let pi = h.low_for(g);
        let m = mdp.transition_matrix(&pi);
        let rv = mdp.reward_vector(&pi);
        for s in 0..n {
            let mut dist = vec![0.0; n];
            dist[s] = 1.0;
            let mut acc = 0.0;
            let mut disc = 1.0;
            for _ in 0..k {
                acc += disc * dist.iter().zip(&rv).map(|(p, r)| p * r).sum::<f64>();
                dist = push_forward(&dist, &m);
                disc *= mdp.gamma;
            }
            reward[g][s] = acc;
            kernel[g][s] = dist;
        }
    }
    SubtaskModel { reward, kernel }
}

/// Subtask reward and landing kernel averaged over the subgoal choice.
pub fn block_terms(mdp: &TabularMdp, h: &TabularHierPolicy, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = mdp.n_states;
    let sm = subtask_model(mdp, h, k);
    let mut v0 = vec![0.0; n];
    let mut kern = vec![vec![0.0; n]; n];
    for s in 0..n {
        for g in 0..n {
            let w = h.high[s][g];
            if w == 0.0 {
                continue;
            }
            v0[s] += w * sm.reward[g][s];
            for t in 0..n {
                kern[s][t] += w * sm.kernel[g][s][t];
            }
        }
    }
    (v0, kern)
}

/// Exact value of the two-level policy with subtask horizon `k`.
pub fn joint_value(mdp: &TabularMdp, h: &TabularHierPolicy, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::contract("subtask horizon must be positive"));
    }
    mdp.check_hier(h)?;
    let (v0, kern) = block_terms(mdp, h, k);
    evaluate_linear(&kern, &v0, mdp.gamma.powi(k as i32))
}

/// Optimal deterministic flat policy by policy iteration.
pub fn optimal_flat_policy(mdp: &TabularMdp) -> Result<FlatPolicy> {
    let (n, m) = (mdp.n_states, mdp.n_actions);
    let mut choice = vec![0usize; n];
    let as_table = |c: &[usize]| -> FlatPolicy {
        c.iter()
            .map(|&a| (0..m).map(|b| (a == b) as u8 as f64).collect())
            .collect()
    };
    for _ in 0..1000 {
        let v = flat_value(mdp, &as_table(&choice))?;
        let mut changed = false;
        for s in 0..n {
            let q = |a: usize| mdp.r[s][a] + mdp.gamma * mdp.p[s][a].iter().zip(&v).map(|(p, x)| p * x).sum::<f64>();
            let best = (0..m).max_by(|&a, &b| q(a).total_cmp(&q(b))).unwrap_or(0);
            if q(best) > q(choice[s]) + 1e-12 {
                choice[s] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok(as_table(&choice));
        }
    }
    Err(Error::contract("policy iteration did not converge"))
}

/// Two-level policy induced from a flat one: subgoals are drawn from the
/// flat policy's k-step landing distribution and the low level ignores the
/// subgoal.
pub fn induce_hier_from_flat(mdp: &TabularMdp, pi: &FlatPolicy, k: usize) -> Result<TabularHierPolicy> {
    mdp.check_flat(pi)?;
    let n = mdp.n_states;
    let m = mdp.transition_matrix(pi);
    let mut high = vec![vec![0.0; n]; n];
    for (s, row) in high.iter_mut().enumerate() {
        let mut dist = vec![0.0; n];
        dist[s] = 1.0;
        for _ in 0..k {
            dist = push_forward(&dist, &m);
        }
        *row = dist;
    }
    let low = (0..n).map(|s| vec![pi[s].clone(); n]).collect();
    Ok(TabularHierPolicy { high, low })
}
