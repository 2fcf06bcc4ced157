//! Numerical checks of the subtask backup, marginal drift, policy
//! equivalence and the performance-difference bound.

use serde::{Deserialize, Serialize};

use super::instances::{
    arbitrary_instance, assumption_instance, random_chain_mdp, random_hier_policy,
    TheoryInstance,
};
use super::mdp::{
    flat_value, induce_hier_from_flat, joint_value, optimal_flat_policy, subtask_model, TabularHierPolicy,
    TabularMdp,
};
use crate::error::{Error, Result};
use crate::rng;

/// Max over states of `|V(s) - (V0(s) + gamma^k E[V(s_k)])|`, with the
/// right-hand side rebuilt from state-action marginals inside each subtask.
pub fn verify_lemma1(mdp: &TabularMdp, h: &TabularHierPolicy, k: usize, v: &[f64]) -> Result<f64> {
    mdp.check_hier(h)?;
    let (n, m) = (mdp.n_states, mdp.n_actions);
    if v.len() != n || k == 0 {
        return Err(Error::contract("value vector or horizon does not fit the instance"));
    }
    let gk = mdp.gamma.powi(k as i32);
    let mut worst: f64 = 0.0;
    for s0 in 0..n {
        let mut rhs = 0.0;
        for g in 0..n {
            let wg = h.high[s0][g];
            if wg == 0.0 {
                continue;
            }
            let mut state = vec![0.0; n];
            state[s0] = 1.0;
            let mut v0 = 0.0;
            for j in 0..k {
                let mut next = vec![0.0; n];
                for s in 0..n {
                    for a in 0..m {
                        let w = state[s] * h.low[s][g][a];
                        v0 += mdp.gamma.powi(j as i32) * w * mdp.r[s][a];
                        for t in 0..n {
                            next[t] += w * mdp.p[s][a][t];
                        }
                    }
                }
                state = next;
            }
            let tail: f64 = state.iter().zip(v).map(|(p, x)| p * x).sum();
            rhs += wg * (v0 + gk * tail);
        }
        worst = worst.max((v[s0] - rhs).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Check {
    /// Total variation between the two state marginals after `t` steps.
    pub lhs: f64,
    /// `t * eps`.
    pub rhs: f64,
    pub eps: f64,
    pub holds: bool,
    /// Total variation between the state-action marginals at step `t`.
    pub state_action_tv: f64,
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Propagates both low-level policies (for subgoal `g`) from the start state
/// for `t` steps and compares the marginal drift with `t * eps`.
pub fn verify_lemma2(
    mdp: &TabularMdp,
    low_a: &[Vec<Vec<f64>>],
    low_b: &[Vec<Vec<f64>>],
    g: usize,
    t: usize,
) -> Result<Lemma2Check> {
    let (n, m) = (mdp.n_states, mdp.n_actions);
    if g >= n || low_a.len() != n || low_b.len() != n {
        return Err(Error::contract("low-level tables do not fit the instance"));
    }
    let eps = (0..n).map(|s| tv(&low_a[s][g], &low_b[s][g])).fold(0.0, f64::max);
    let step = |dist: &[f64], low: &[Vec<Vec<f64>>]| {
        let mut next = vec![0.0; n];
        for s in 0..n {
            for a in 0..m {
                let w = dist[s] * low[s][g][a];
                for u in 0..n {
                    next[u] += w * mdp.p[s][a][u];
                }
            }
        }
        next
    };
    let mut da = vec![0.0; n];
    da[mdp.start] = 1.0;
    let mut db = da.clone();
    for _ in 0..t {
        da = step(&da, low_a);
        db = step(&db, low_b);
    }
    let lhs = tv(&da, &db);
    let sa = |d: &[f64], low: &[Vec<Vec<f64>>]| -> Vec<f64> {
        (0..n).flat_map(|s| (0..m).map(move |a| d[s] * low[s][g][a])).collect()
    };
    let state_action_tv = tv(&sa(&da, low_a), &sa(&db, low_b));
    let rhs = t as f64 * eps;
    Ok(Lemma2Check {
        lhs,
        rhs,
        eps,
        holds: lhs <= rhs + 1e-12,
        state_action_tv,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    /// Largest low-level total variation over states and reachable subgoals.
    pub eps: f64,
    /// `max_s E_{g ~ pi_h}(1 + pi_h* / pi_h)`; infinite when the learned high
    /// level misses a subgoal the optimum uses.
    pub ratio: f64,
    pub reach_max: f64,
    pub r_max: f64,
    /// The assembled bound (infinite when `ratio` is).
    pub c: f64,
}

impl BoundTerms {
    pub fn is_finite(&self) -> bool {
        self.c.is_finite()
    }
}

/// Assembles `C = 2 r_max / (1 - gamma)^2 * [(1 + gamma) ratio eps + 2 (R_max + 2 gamma^k)]`.
pub fn assemble_bound(gamma: f64, k: usize, eps: f64, ratio: f64, reach_max: f64, r_max: f64) -> f64 {
    let inconsistency = if eps == 0.0 && ratio.is_finite() {
        0.0
    } else {
        (1.0 + gamma) * ratio * eps
    };
    2.0 * r_max / (1.0 - gamma).powi(2) * (inconsistency + 2.0 * (reach_max + 2.0 * gamma.powi(k as i32)))
}

/// Expected reachability of a subtask started at `s`, for each `s`.
pub fn expected_reachability(mdp: &TabularMdp, h: &TabularHierPolicy, k: usize) -> Vec<f64> {
    let n = mdp.n_states;
    let sm = subtask_model(mdp, h, k);
    (0..n)
        .map(|s| {
            (0..n)
                .map(|g| {
                    let d0 = mdp.d[s][g];
                    if h.high[s][g] == 0.0 || d0 == 0.0 {
                        return 0.0;
                    }
                    let d1: f64 = (0..n).map(|t| sm.kernel[g][s][t] * mdp.d[t][g]).sum();
                    h.high[s][g] * d1 / d0
                })
                .sum()
        })
        .collect()
}

/// Components of the bound for the learned hierarchy `h` against `h_star`.
pub fn bound_rhs(mdp: &TabularMdp, h: &TabularHierPolicy, h_star: &TabularHierPolicy, k: usize) -> Result<BoundTerms> {
    mdp.check_hier(h)?;
    mdp.check_hier(h_star)?;
    let n = mdp.n_states;
    let support: Vec<usize> = (0..n).filter(|&g| (0..n).any(|s| h.high[s][g] > 0.0)).collect();
    let mut eps: f64 = 0.0;
    for s in 0..n {
        for &g in &support {
            eps = eps.max(tv(&h_star.low[s][g], &h.low[s][g]));
        }
    }
    let mut ratio: f64 = 0.0;
    for s in 0..n {
        let mut e = 0.0;
        for g in 0..n {
            let (p, q) = (h.high[s][g], h_star.high[s][g]);
            if p > 0.0 {
                e += p * (1.0 + q / p);
            } else if q > 0.0 {
                e = f64::INFINITY;
            }
        }
        ratio = ratio.max(e);
    }
    let reach_max = expected_reachability(mdp, h, k).into_iter().fold(0.0, f64::max);
    let r_max = mdp.r_max();
    Ok(BoundTerms {
        eps,
        ratio,
        reach_max,
        r_max,
        c: assemble_bound(mdp.gamma, k, eps, ratio, reach_max, r_max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// Instances satisfying the reward assumption; violations are failures.
    A,
    /// Arbitrary instances; violations are diagnostics.
    B,
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(Tier::A),
            "b" | "B" => Ok(Tier::B),
            _ => Err(Error::config("tier", format!("expected a, b or both, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub seed: u64,
    pub tier: Tier,
    /// `max_s V^{optimal}(s) - V^{learned}(s)`.
    pub gap: f64,
    /// `None` when the bound is infinite.
    pub bound: Option<f64>,
    pub slack: Option<f64>,
    pub holds: bool,
    pub terms: BoundTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub instances: usize,
    pub violations: usize,
    pub infinite_bounds: usize,
    pub min_slack: Option<f64>,
    pub mean_slack: Option<f64>,
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub tier: String,
    pub instances: Vec<InstanceReport>,
    pub summary: ReportSummary,
}

impl TheoremReport {
    /// Violations that count as failures (tier A only).
    pub fn failures(&self) -> usize {
        self.instances.iter().filter(|i| i.tier == Tier::A && !i.holds).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceShape {
    pub n_states: usize,
    pub n_actions: usize,
    pub k: usize,
    pub gamma: f64,
}

impl Default for InstanceShape {
    fn default() -> Self {
        InstanceShape {
            n_states: 5,
            n_actions: 3,
            k: 2,
            gamma: 0.9,
        }
    }
}

pub fn make_instance(tier: Tier, shape: &InstanceShape, seed: u64) -> Result<TheoryInstance> {
    let mut r = rng::stream(seed);
    let InstanceShape { n_states, n_actions, k, gamma } = *shape;
    match tier {
        Tier::A => assumption_instance(n_states, n_actions, k, gamma, &mut r),
        Tier::B => arbitrary_instance(n_states, n_actions, k, gamma, &mut r),
    }
}

pub fn check_instance(inst: &TheoryInstance, tier: Tier, seed: u64) -> Result<InstanceReport> {
    let v_star = joint_value(&inst.mdp, &inst.optimal, inst.k)?;
    let v = joint_value(&inst.mdp, &inst.learned, inst.k)?;
    let gap = v_star.iter().zip(&v).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    let terms = bound_rhs(&inst.mdp, &inst.learned, &inst.optimal, inst.k)?;
    let finite = terms.is_finite();
    Ok(InstanceReport {
        seed,
        tier,
        gap,
        bound: finite.then_some(terms.c),
        slack: finite.then_some(terms.c - gap),
        holds: gap <= terms.c + 1e-12,
        terms,
    })
}

/// Checks the bound on `n_instances` instances of each requested tier.
/// Instance `i` of a tier is generated from seed `seed + i`.
pub fn verify_theorem1(tiers: &[Tier], shape: &InstanceShape, n_instances: usize, seed: u64) -> Result<TheoremReport> {
    let mut instances = Vec::new();
    for &tier in tiers {
        for i in 0..n_instances {
            let s = seed.wrapping_add(i as u64);
            instances.push(check_instance(&make_instance(tier, shape, s)?, tier, s)?);
        }
    }
    let slacks: Vec<f64> = instances.iter().filter_map(|i| i.slack).collect();
    let summary = ReportSummary {
        instances: instances.len(),
        violations: instances.iter().filter(|i| !i.holds).count(),
        infinite_bounds: instances.iter().filter(|i| i.bound.is_none()).count(),
        min_slack: slacks.iter().cloned().reduce(f64::min),
        mean_slack: (!slacks.is_empty()).then(|| slacks.iter().sum::<f64>() / slacks.len() as f64),
        max_gap: instances.iter().map(|i| i.gap).fold(f64::NEG_INFINITY, f64::max),
    };
    let tier = match tiers {
        [Tier::A] => "a",
        [Tier::B] => "b",
        _ => "both",
    };
    Ok(TheoremReport {
        tier: tier.to_string(),
        instances,
        summary,
    })
}

/// Aggregate results of the full theory sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySuite {
    pub instances: usize,
    pub lemma1_max_residual: f64,
    pub prop1_max_gap: f64,
    pub lemma2_pairs: usize,
    pub lemma2_checks: usize,
    pub lemma2_violations: usize,
    pub theorem1: TheoremReport,
}

/// Runs every check over `n_instances` random instances of `shape`, plus
/// `lemma2_pairs` random low-level policy pairs for every `t <= max_t`.
pub fn run_theory_suite(
    shape: &InstanceShape,
    n_instances: usize,
    lemma2_pairs: usize,
    max_t: usize,
    seed: u64,
) -> Result<TheorySuite> {
    let InstanceShape { n_states, n_actions, k, gamma } = *shape;
    let mut lemma1: f64 = 0.0;
    let mut prop1: f64 = 0.0;
    for i in 0..n_instances {
        let mut r = rng::substream(seed.wrapping_add(i as u64), "backup");
        let mdp = random_chain_mdp(n_states, n_actions, gamma, &mut r);
        let h = random_hier_policy(n_states, n_actions, &mut r);
        let v = joint_value(&mdp, &h, k)?;
        lemma1 = lemma1.max(verify_lemma1(&mdp, &h, k, &v)?);
        let pi_star = optimal_flat_policy(&mdp)?;
        let induced = induce_hier_from_flat(&mdp, &pi_star, k)?;
        let vf = flat_value(&mdp, &pi_star)?;
        let vj = joint_value(&mdp, &induced, k)?;
        for (a, b) in vf.iter().zip(&vj) {
            prop1 = prop1.max((a - b).abs());
        }
    }
    let mut checks = 0;
    let mut violations = 0;
    for i in 0..lemma2_pairs {
        let mut r = rng::substream(seed.wrapping_add(i as u64), "drift");
        let mdp = random_chain_mdp(n_states, n_actions, gamma, &mut r);
        let a = random_hier_policy(n_states, n_actions, &mut r);
        let b = random_hier_policy(n_states, n_actions, &mut r);
        let g = mdp.goal;
        for t in 0..=max_t {
            checks += 1;
            if !verify_lemma2(&mdp, &a.low, &b.low, g, t)?.holds {
                violations += 1;
            }
        }
    }
    Ok(TheorySuite {
        instances: n_instances,
        lemma1_max_residual: lemma1,
        prop1_max_gap: prop1,
        lemma2_pairs,
        lemma2_checks: checks,
        lemma2_violations: violations,
        theorem1: verify_theorem1(&[Tier::A], shape, n_instances, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::instances::{random_chain_mdp, random_hier_policy};
    use rand::Rng;

    #[test]
    fn lemma1_residual_vanishes_at_the_fixed_point() {
        let mut r = rng::stream(110);
        for k in 1..4 {
            for _ in 0..10 {
                let mdp = random_chain_mdp(5, 3, 0.9, &mut r);
                let h = random_hier_policy(5, 3, &mut r);
                let v = joint_value(&mdp, &h, k).unwrap();
                assert!(verify_lemma1(&mdp, &h, k, &v).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn lemma1_with_unit_horizon_is_the_one_step_backup() {
        let mut r = rng::stream(111);
        let mdp = random_chain_mdp(5, 3, 0.9, &mut r);
        let h = random_hier_policy(5, 3, &mut r);
        let v = joint_value(&mdp, &h, 1).unwrap();
        for s in 0..5 {
            let mut rhs = 0.0;
            for g in 0..5 {
                for a in 0..3 {
                    let w = h.high[s][g] * h.low[s][g][a];
                    rhs += w * (mdp.r[s][a] + 0.9 * (0..5).map(|t| mdp.p[s][a][t] * v[t]).sum::<f64>());
                }
            }
            assert!((v[s] - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn lemma1_detects_a_perturbed_value() {
        // Deterministic 3-cycle: a two-step subtask never returns to its start.
        let n = 3;
        let mdp = TabularMdp {
            n_states: n,
            n_actions: 1,
            p: (0..n).map(|s| vec![(0..n).map(|t| (t == (s + 1) % n) as u8 as f64).collect()]).collect(),
            r: vec![vec![0.5], vec![-1.0], vec![0.25]],
            gamma: 0.9,
            goal: 0,
            d: (0..n).map(|s| (0..n).map(|t| (s as f64 - t as f64).abs()).collect()).collect(),
            start: 0,
        };
        let h = induce_hier_from_flat(&mdp, &vec![vec![1.0]; n], 2).unwrap();
        let mut v = joint_value(&mdp, &h, 2).unwrap();
        v[1] += 0.1;
        assert!(verify_lemma1(&mdp, &h, 2, &v).unwrap() >= 0.09);

        // In general the residual at the perturbed state is
        // 0.1 * (1 - gamma^k * P(return in k steps)).
        let mut r = rng::stream(112);
        for _ in 0..10 {
            let mdp = random_chain_mdp(5, 3, 0.9, &mut r);
            let h = random_hier_policy(5, 3, &mut r);
            let mut v = joint_value(&mdp, &h, 2).unwrap();
            let s = r.random_range(0..5);
            let (_, kern) = crate::oracle::mdp::block_terms(&mdp, &h, 2);
            v[s] += 0.1;
            let res = verify_lemma1(&mdp, &h, 2, &v).unwrap();
            assert!(res >= 0.1 * (1.0 - 0.81 * kern[s][s]) - 1e-12);
        }
    }

    #[test]
    fn proposition1_equivalence() {
        let mut r = rng::stream(113);
        for k in 1..4 {
            for _ in 0..20 {
                let mdp = random_chain_mdp(5, 3, 0.9, &mut r);
                let pi = optimal_flat_policy(&mdp).unwrap();
                let h = induce_hier_from_flat(&mdp, &pi, k).unwrap();
                let vf = flat_value(&mdp, &pi).unwrap();
                let vj = joint_value(&mdp, &h, k).unwrap();
                for s in 0..5 {
                    assert!((vf[s] - vj[s]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn lemma2_examples_and_sweep() {
        let mut r = rng::stream(114);
        let mdp = random_chain_mdp(5, 3, 0.9, &mut r);
        let a = random_hier_policy(5, 3, &mut r);
        let same = verify_lemma2(&mdp, &a.low, &a.low, 2, 7).unwrap();
        assert_eq!((same.lhs, same.rhs), (0.0, 0.0));
        let b = random_hier_policy(5, 3, &mut r);
        let zero = verify_lemma2(&mdp, &a.low, &b.low, 2, 0).unwrap();
        assert_eq!(zero.lhs, 0.0);
        assert!(zero.holds);
        for _ in 0..200 {
            let mdp = random_chain_mdp(5, 3, 0.9, &mut r);
            let a = random_hier_policy(5, 3, &mut r);
            let b = random_hier_policy(5, 3, &mut r);
            for t in 0..=10 {
                let c = verify_lemma2(&mdp, &a.low, &b.low, mdp.goal, t).unwrap();
                assert!(c.holds, "t={t}: {} > {}", c.lhs, c.rhs);
                // The joint marginal picks up one extra policy step.
                assert!(c.state_action_tv <= c.rhs + c.eps + 1e-12);
            }
        }
    }

    #[test]
    fn bound_arithmetic() {
        let c = assemble_bound(0.9, 2, 0.0, 2.0, 0.0, 1.0);
        assert!((c - 648.0).abs() < 1e-9);
        let c = assemble_bound(0.9, 2, 0.1, 2.0, 0.5, 2.0);
        let expect = 2.0 * 2.0 / 0.01 * (1.9 * 2.0 * 0.1 + 2.0 * (0.5 + 1.62));
        assert!((c - expect).abs() < 1e-9);
    }

    #[test]
    fn self_comparison_has_zero_gap() {
        for seed in 0..5 {
            let inst = make_instance(Tier::A, &InstanceShape::default(), seed).unwrap();
            let t = bound_rhs(&inst.mdp, &inst.optimal, &inst.optimal, 2).unwrap();
            assert_eq!(t.eps, 0.0);
            assert!((t.ratio - 2.0).abs() < 1e-12);
            let expect = 2.0 * t.r_max / 0.01 * 2.0 * (t.reach_max + 2.0 * 0.81);
            assert!((t.c - expect).abs() < 1e-9);
            let same = TheoryInstance {
                learned: inst.optimal.clone(),
                ..inst
            };
            let rep = check_instance(&same, Tier::A, seed).unwrap();
            assert!(rep.gap.abs() < 1e-12 && rep.holds);
            assert!((rep.slack.unwrap() - t.c).abs() < 1e-9);
        }
    }

    #[test]
    fn bound_components_match_direct_recomputation() {
        for seed in 0..10 {
            let inst = make_instance(Tier::B, &InstanceShape::default(), seed).unwrap();
            let (mdp, h, hs) = (&inst.mdp, &inst.learned, &inst.optimal);
            let t = bound_rhs(mdp, h, hs, 2).unwrap();
            // eps by brute force over all (s, g) with some state proposing g.
            let mut eps: f64 = 0.0;
            for g in 0..5 {
                if (0..5).all(|s| h.high[s][g] == 0.0) {
                    continue;
                }
                for s in 0..5 {
                    let d: f64 = (0..3).map(|a| (hs.low[s][g][a] - h.low[s][g][a]).abs()).sum();
                    eps = eps.max(d / 2.0);
                }
            }
            assert!((eps - t.eps).abs() < 1e-15);
            // Expected reachability by explicit two-step enumeration.
            let mut reach_max: f64 = 0.0;
            for s in 0..5 {
                let mut e = 0.0;
                for g in 0..5 {
                    if mdp.d[s][g] == 0.0 {
                        continue;
                    }
                    for a0 in 0..3 {
                        for s1 in 0..5 {
                            for a1 in 0..3 {
                                for s2 in 0..5 {
                                    let p = h.high[s][g]
                                        * h.low[s][g][a0]
                                        * mdp.p[s][a0][s1]
                                        * h.low[s1][g][a1]
                                        * mdp.p[s1][a1][s2];
                                    e += p * mdp.d[s2][g] / mdp.d[s][g];
                                }
                            }
                        }
                    }
                }
                reach_max = reach_max.max(e);
            }
            assert!((reach_max - t.reach_max).abs() < 1e-12);
            let r_max = mdp.r.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
            assert_eq!(r_max, t.r_max);
            let covered = (0..5).all(|s| (0..5).all(|g| h.high[s][g] > 0.0 || hs.high[s][g] == 0.0));
            assert_eq!(covered, t.ratio.is_finite());
        }
    }

    #[test]
    fn tier_a_holds_and_report_serialises() {
        let rep = verify_theorem1(&[Tier::A, Tier::B], &InstanceShape::default(), 10, 7).unwrap();
        assert_eq!(rep.tier, "both");
        assert_eq!(rep.instances.len(), 20);
        assert_eq!(rep.failures(), 0);
        let json = serde_json::to_value(&rep).unwrap();
        let first = &json["instances"][0];
        for key in ["seed", "gap", "bound", "slack", "holds"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert!(json.get("summary").is_some());
    }
}
