//! Random tabular instances and policies.

use rand::Rng;

use super::mdp::{optimal_flat_policy, FlatPolicy, TabularHierPolicy, TabularMdp};
use crate::error::Result;

/// Random point on the probability simplex (flat Dirichlet).
pub fn random_simplex(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    normalised(w)
}

fn normalised(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    for x in &mut w {
        *x /= s;
    }
    // Push the rounding residue onto the largest entry.
    let resid = 1.0 - w.iter().sum::<f64>();
    if let Some(i) = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])) {
        w[i] += resid;
    }
    w
}

pub fn random_flat_policy(n_states: usize, n_actions: usize, rng: &mut impl Rng) -> FlatPolicy {
    (0..n_states).map(|_| random_simplex(n_actions, rng)).collect()
}

pub fn random_hier_policy(n_states: usize, n_actions: usize, rng: &mut impl Rng) -> TabularHierPolicy {
    TabularHierPolicy {
        high: (0..n_states).map(|_| random_simplex(n_states, rng)).collect(),
        low: (0..n_states)
            .map(|_| (0..n_states).map(|_| random_simplex(n_actions, rng)).collect())
            .collect(),
    }
}

fn chain_distance(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|s| (0..n).map(|t| (s as f64 - t as f64).abs()).collect())
        .collect()
}

/// Slippery chain dynamics: action `a` aims `a - n_actions/2` cells along
/// the chain and lands there with a random probability in [0.6, 0.95],
/// otherwise on a random neighbour of the current cell.
fn chain_dynamics(n: usize, m: usize, rng: &mut impl Rng) -> Vec<Vec<Vec<f64>>> {
    let mut p = vec![vec![vec![0.0; n]; m]; n];
    for s in 0..n {
        for a in 0..m {
            let shift = a as i64 - (m / 2) as i64;
            let target = (s as i64 + shift).clamp(0, n as i64 - 1) as usize;
            let hit: f64 = rng.random_range(0.6..0.95);
            let lo = s.saturating_sub(1);
            let hi = (s + 1).min(n - 1);
            let spread = random_simplex(hi - lo + 1, rng);
            let mut row = vec![0.0; n];
            row[target] += hit;
            for (i, w) in spread.iter().enumerate() {
                row[lo + i] += (1.0 - hit) * w;
            }
            p[s][a] = normalised(row);
        }
    }
    p
}

/// Chain with arbitrary rewards in [-1, 1].
pub fn random_chain_mdp(n: usize, m: usize, gamma: f64, rng: &mut impl Rng) -> TabularMdp {
    let p = chain_dynamics(n, m, rng);
    let r = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
    TabularMdp {
        n_states: n,
        n_actions: m,
        p,
        r,
        gamma,
        goal: rng.random_range(0..n),
        d: chain_distance(n),
        start: 0,
    }
}

/// Chain whose reward is the expected reachability reward of the landing
/// state, `r(s, a) = E[1 - d(s', goal) / diam]`, which lies in [0, 1].
pub fn reachability_chain_mdp(n: usize, m: usize, gamma: f64, rng: &mut impl Rng) -> TabularMdp {
    let p = chain_dynamics(n, m, rng);
    let goal = rng.random_range(0..n);
    let d = chain_distance(n);
    let diam = (n - 1).max(1) as f64;
    let r = (0..n)
        .map(|s| {
            (0..m)
                .map(|a| (0..n).map(|t| p[s][a][t] * (1.0 - d[t][goal] / diam)).sum())
                .collect()
        })
        .collect();
    TabularMdp {
        n_states: n,
        n_actions: m,
        p,
        r,
        gamma,
        goal,
        d,
        start: 0,
    }
}

/// Hop distances on the undirected support graph; unreachable pairs get `n`.
pub fn hop_distance(p: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let n = p.len();
    let mut adj = vec![vec![false; n]; n];
    for s in 0..n {
        for row in &p[s] {
            for t in 0..n {
                if row[t] > 0.0 && s != t {
                    adj[s][t] = true;
                    adj[t][s] = true;
                }
            }
        }
    }
    let mut d = vec![vec![n as f64; n]; n];
    for src in 0..n {
        d[src][src] = 0.0;
        let mut frontier = vec![src];
        let mut depth = 0.0;
        while !frontier.is_empty() {
            depth += 1.0;
            let mut next = Vec::new();
            for &u in &frontier {
                for v in 0..n {
                    if adj[u][v] && d[src][v] == n as f64 && v != src {
                        d[src][v] = depth;
                        next.push(v);
                    }
                }
            }
            frontier = next;
        }
    }
    d
}

/// Random sparse dynamics (two successors per state-action) with arbitrary
/// rewards; goal distances are hop counts.
pub fn random_graph_mdp(n: usize, m: usize, gamma: f64, rng: &mut impl Rng) -> TabularMdp {
    let mut p = vec![vec![vec![0.0; n]; m]; n];
    for s in 0..n {
        for a in 0..m {
            let t1 = rng.random_range(0..n);
            let t2 = rng.random_range(0..n);
            let w: f64 = rng.random_range(0.1..0.9);
            let mut row = vec![0.0; n];
            row[t1] += w;
            row[t2] += 1.0 - w;
            p[s][a] = normalised(row);
        }
    }
    let d = hop_distance(&p);
    let r = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
    TabularMdp {
        n_states: n,
        n_actions: m,
        p,
        r,
        gamma,
        goal: rng.random_range(0..n),
        d,
        start: 0,
    }
}

/// Per-goal softmax over the optimal action values of the goal-reaching
/// task with reward `-E[d(s', g)]`.
pub fn near_optimal_low(mdp: &TabularMdp, beta: f64) -> Vec<Vec<Vec<f64>>> {
    let (n, m) = (mdp.n_states, mdp.n_actions);
    let mut low = vec![vec![vec![0.0; m]; n]; n];
    for g in 0..n {
        let rg: Vec<Vec<f64>> = (0..n)
            .map(|s| (0..m).map(|a| -(0..n).map(|t| mdp.p[s][a][t] * mdp.d[t][g]).sum::<f64>()).collect())
            .collect();
        let mut v = vec![0.0; n];
        let q = |v: &[f64], s: usize, a: usize| rg[s][a] + mdp.gamma * (0..n).map(|t| mdp.p[s][a][t] * v[t]).sum::<f64>();
        for _ in 0..2000 {
            let nv: Vec<f64> = (0..n).map(|s| (0..m).map(|a| q(&v, s, a)).fold(f64::NEG_INFINITY, f64::max)).collect();
            let delta = nv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = nv;
            if delta < 1e-13 {
                break;
            }
        }
        for s in 0..n {
            let qs: Vec<f64> = (0..m).map(|a| q(&v, s, a)).collect();
            let top = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            low[s][g] = normalised(qs.iter().map(|x| (beta * (x - top)).exp()).collect());
        }
    }
    low
}

/// Mixes each row of `a` with weight `1 - eta` and `b` with weight `eta`.
pub fn mix_rows(a: &[Vec<f64>], b: &[Vec<f64>], eta: f64) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| normalised(x.iter().zip(y).map(|(p, q)| (1.0 - eta) * p + eta * q).collect()))
        .collect()
}

/// One theorem-check instance: the MDP, the induced optimal hierarchy and
/// the hierarchy under test.
#[derive(Debug, Clone)]
pub struct TheoryInstance {
    pub mdp: TabularMdp,
    pub optimal: TabularHierPolicy,
    pub learned: TabularHierPolicy,
    pub k: usize,
}

/// Instance respecting the reward assumption: reachability-shaped chain
/// rewards, near-optimal goal-conditioned low level, and a high level that
/// mixes the induced optimum with uniform subgoals.
pub fn assumption_instance(n: usize, m: usize, k: usize, gamma: f64, rng: &mut impl Rng) -> Result<TheoryInstance> {
    let mdp = reachability_chain_mdp(n, m, gamma, rng);
    let pi_star = optimal_flat_policy(&mdp)?;
    let optimal = super::mdp::induce_hier_from_flat(&mdp, &pi_star, k)?;
    let beta = rng.random_range(2.0..10.0);
    let eta = rng.random_range(0.05..0.5);
    let uniform = vec![vec![1.0 / n as f64; n]; n];
    let learned = TabularHierPolicy {
        high: mix_rows(&optimal.high, &uniform, eta),
        low: near_optimal_low(&mdp, beta),
    };
    Ok(TheoryInstance { mdp, optimal, learned, k })
}

/// Instance with arbitrary dynamics, rewards and learned policy. A quarter
/// of the draws use a sparse high level, which may leave the optimum's
/// subgoals uncovered.
pub fn arbitrary_instance(n: usize, m: usize, k: usize, gamma: f64, rng: &mut impl Rng) -> Result<TheoryInstance> {
    let mdp = random_graph_mdp(n, m, gamma, rng);
    let pi_star = optimal_flat_policy(&mdp)?;
    let optimal = super::mdp::induce_hier_from_flat(&mdp, &pi_star, k)?;
    let mut learned = random_hier_policy(n, m, rng);
    if rng.random_range(0..4) == 0 {
        for row in &mut learned.high {
            let keep = rng.random_range(0..n);
            *row = (0..n).map(|g| (g == keep) as u8 as f64).collect();
        }
    }
    Ok(TheoryInstance { mdp, optimal, learned, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn generated_instances_are_valid() {
        let mut r = rng::stream(100);
        for _ in 0..20 {
            for mdp in [
                random_chain_mdp(5, 3, 0.9, &mut r),
                reachability_chain_mdp(5, 3, 0.9, &mut r),
                random_graph_mdp(5, 3, 0.9, &mut r),
            ] {
                mdp.validate().unwrap();
                mdp.check_flat(&random_flat_policy(5, 3, &mut r)).unwrap();
                mdp.check_hier(&random_hier_policy(5, 3, &mut r)).unwrap();
            }
            let a = assumption_instance(5, 3, 2, 0.9, &mut r).unwrap();
            a.mdp.check_hier(&a.learned).unwrap();
            a.mdp.check_hier(&a.optimal).unwrap();
            assert!(a.mdp.r.iter().flatten().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn hop_distance_examples() {
        // Path 0 - 1 - 2, state 3 isolated.
        let mut p = vec![vec![vec![0.0; 4]; 1]; 4];
        p[0][0][1] = 1.0;
        p[1][0][2] = 1.0;
        p[2][0][2] = 1.0;
        p[3][0][3] = 1.0;
        let d = hop_distance(&p);
        assert_eq!(d[0], vec![0.0, 1.0, 2.0, 4.0]);
        assert_eq!(d[2][0], 2.0);
        assert_eq!(d[3][3], 0.0);
    }

    #[test]
    fn near_optimal_low_prefers_moving_toward_the_goal() {
        let mut r = rng::stream(101);
        let mdp = reachability_chain_mdp(5, 3, 0.9, &mut r);
        let low = near_optimal_low(&mdp, 20.0);
        // Actions: 0 steps left, 2 steps right.
        assert!(low[0][4][2] > low[0][4][0]);
        assert!(low[4][0][0] > low[4][0][2]);
    }
}
