//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code under test except for the environment dynamics.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::Rng;
use sierl::env::{free_states, Action, AgentState, GridSpec};
use sierl::qlearn::{GoalQ, Learner, LearnerConfig};
use sierl::replay::{FrontierEntry, Transition, VisitationTable};
use sierl::TabularQ;

/// Positions reachable from the start, as goal states without a key.
pub fn goal_positions(spec: &GridSpec) -> Vec<AgentState> {
    let set: BTreeSet<(u16, u16)> = free_states(spec).iter().map(|s| (s.x, s.y)).collect();
    set.into_iter().map(|(x, y)| AgentState::new(x, y)).collect()
}

/// Plain BFS over positions only, written independently of the crate's BFS.
/// Returns the distance from every free state to `g`.
pub fn bfs_to_goal(spec: &GridSpec, g: AgentState) -> HashMap<AgentState, usize> {
    let states = free_states(spec);
    // Reverse edges of the deterministic dynamics.
    let mut preds: HashMap<AgentState, Vec<AgentState>> = HashMap::new();
    for &s in &states {
        if s.same_position(&g) {
            continue;
        }
        for a in Action::ALL {
            preds.entry(spec.move_agent(s, a)).or_default().push(s);
        }
    }
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    for &s in &states {
        if s.same_position(&g) {
            dist.insert(s, 0);
            queue.push_back(s);
        }
    }
    // The goal cell may also be entered from states that land on it with a
    // different key bit.
    for (&next, from) in &preds {
        if next.same_position(&g) {
            for &p in from {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(p) {
                    e.insert(1);
                    queue.push_back(p);
                }
            }
        }
    }
    while let Some(cur) = queue.pop_front() {
        let d = dist[&cur];
        if let Some(from) = preds.get(&cur) {
            for &p in from {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(p) {
                    e.insert(d + 1);
                    queue.push_back(p);
                }
            }
        }
    }
    dist
}

/// Synchronous value iteration on the goal-conditioned shortest-path MDP.
pub struct ValueIteration {
    pub q: HashMap<(AgentState, AgentState), [f64; 4]>,
}

impl ValueIteration {
    pub fn solve(spec: &GridSpec, discount: f64, tol: f64) -> Self {
        let states = free_states(spec);
        let goals = goal_positions(spec);
        let mut q: HashMap<(AgentState, AgentState), [f64; 4]> = HashMap::new();
        for &g in &goals {
            for &s in &states {
                q.insert((s, g), [0.0; 4]);
            }
        }
        loop {
            let mut delta: f64 = 0.0;
            let mut next = q.clone();
            for &g in &goals {
                for &s in &states {
                    if s.same_position(&g) {
                        continue;
                    }
                    let mut row = [0.0; 4];
                    for a in Action::ALL {
                        let s2 = spec.move_agent(s, a);
                        row[a.index()] = if s2.same_position(&g) {
                            0.0
                        } else {
                            let v = q[&(s2, g)].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                            -1.0 + discount * v
                        };
                        delta = delta.max((row[a.index()] - q[&(s, g)][a.index()]).abs());
                    }
                    next.insert((s, g), row);
                }
            }
            q = next;
            if delta < tol {
                return ValueIteration { q };
            }
        }
    }

    pub fn value(&self, s: AgentState, g: AgentState) -> f64 {
        self.q[&(s, g)].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl GoalQ for ValueIteration {
    fn q_values(&self, s: AgentState, g: AgentState) -> [f64; 4] {
        let g = AgentState::new(g.x, g.y);
        self.q.get(&(s, g)).copied().unwrap_or([0.0; 4])
    }
}

/// Closed form of the optimal value for a goal `d` steps away.
pub fn closed_form_value(d: usize, discount: f64) -> f64 {
    if d == 0 {
        0.0
    } else {
        -(1.0 - discount.powi(d as i32 - 1)) / (1.0 - discount)
    }
}

/// Every deterministic transition for every goal, built from `move_agent`.
pub fn all_transitions(spec: &GridSpec) -> Vec<Transition> {
    let mut out = Vec::new();
    for g in goal_positions(spec) {
        for s in free_states(spec) {
            if s.same_position(&g) {
                continue;
            }
            for a in Action::ALL {
                let next = spec.move_agent(s, a);
                let done = next.same_position(&g);
                out.push(Transition {
                    state: s,
                    action: a,
                    reward: if done { 0.0 } else { -1.0 },
                    next_state: next,
                    goal: g,
                    done,
                });
            }
        }
    }
    out
}

/// Full sweeps of tabular TD updates until the largest change is tiny.
pub fn train_tabular_to_convergence(spec: &GridSpec, discount: f64) -> TabularQ {
    let mut q = TabularQ::new(spec);
    let cfg = LearnerConfig { learning_rate: 1.0, discount, ..LearnerConfig::tabular(100) };
    let transitions = all_transitions(spec);
    for _ in 0..10_000 {
        let before = q.parameters();
        for chunk in transitions.chunks(256) {
            q.td_update(None, chunk, &cfg);
        }
        let after = q.parameters();
        let delta = before.iter().zip(&after).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if delta < 1e-12 {
            break;
        }
    }
    q
}

/// Greedy walk from `s` to `g` with lowest-index tie-breaking. Returns the
/// number of steps, or `None` if it does not arrive within `limit`.
pub fn greedy_path_length<Q: GoalQ>(
    spec: &GridSpec,
    q: &Q,
    mut s: AgentState,
    g: AgentState,
    limit: usize,
) -> Option<usize> {
    for t in 0..=limit {
        if s.same_position(&g) {
            return Some(t);
        }
        let row = q.q_values(s, g);
        let mut best = 0;
        for a in 1..4 {
            if row[a] > row[best] {
                best = a;
            }
        }
        s = spec.move_agent(s, Action::from_index(best));
    }
    None
}

/// Literal two-pass frontier filter.
pub fn brute_force_frontier(table: &VisitationTable, f_thr: f64, percentile: f64, skip: bool) -> Vec<FrontierEntry> {
    let all: Vec<FrontierEntry> = table.pairs().collect();
    let mut survivors = Vec::new();
    for p in &all {
        if skip || p.familiarity <= f_thr {
            survivors.push(*p);
        }
    }
    if survivors.is_empty() {
        return survivors;
    }
    let mut counts: Vec<u64> = survivors.iter().map(|p| p.count).collect();
    counts.sort();
    let n = counts.len();
    // Smallest rank k with k / n >= percentile / 100.
    let mut k = 1;
    while (k as f64) * 100.0 < percentile * n as f64 {
        k += 1;
    }
    let cutoff = counts[k.min(n) - 1];
    survivors.into_iter().filter(|p| p.count >= cutoff).collect()
}

/// Random table with at most `max_entries` state-action pairs.
pub fn random_table<R: Rng>(rng: &mut R, max_entries: usize) -> VisitationTable {
    let mut table = VisitationTable::new();
    let n = rng.gen_range(0..=max_entries);
    for _ in 0..n {
        let s = AgentState::new(rng.gen_range(0..16), rng.gen_range(0..16));
        let a = Action::from_index(rng.gen_range(0..4));
        // Coarse familiarity values produce exact threshold ties.
        let f = if rng.gen_bool(0.3) { rng.gen_range(0..=10) as f64 / 10.0 } else { rng.gen::<f64>() };
        table.insert_pair(s, a, rng.gen_range(0..30), f);
    }
    table
}

/// Softmin probabilities from first principles, without a shift.
pub fn softmin_reference(costs: &[f64], tau: f64) -> Vec<f64> {
    let w: Vec<f64> = costs.iter().map(|c| (-c / tau).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

/// Pearson chi-square statistic of `observed` against `expected` probabilities.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    observed
        .iter()
        .zip(expected)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

/// Random `(state, goal, action, target)` samples for a network check.
pub fn random_samples<R: Rng>(spec: &GridSpec, n: usize, rng: &mut R) -> Vec<(AgentState, AgentState, usize, f64)> {
    let states = free_states(spec);
    let goals = goal_positions(spec);
    (0..n)
        .map(|_| {
            let s = states[rng.gen_range(0..states.len())];
            let g = goals[rng.gen_range(0..goals.len())];
            (s, g, rng.gen_range(0..4), rng.gen_range(-20.0..0.0))
        })
        .collect()
}

/// Worst relative error between the analytic directional derivative and a
/// central difference, over `probes` random unit directions.
///
/// Parameters are jittered first: conv biases start at exactly zero, which
/// puts every empty cell on a ReLU kink where only a subgradient exists.
pub fn mlp_gradient_check<R: Rng>(
    q: &sierl::MlpQ,
    samples: &[(AgentState, AgentState, usize, f64)],
    probes: usize,
    rng: &mut R,
) -> f64 {
    let mut q = q.clone();
    let jittered: Vec<f64> = q.parameters().iter().map(|p| p + rng.gen_range(-0.05..0.05)).collect();
    q.set_parameters(&jittered).unwrap();
    let (_, grad) = q.loss_and_grad(samples);
    let base = q.parameters();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = q.clone();
    for _ in 0..probes {
        let mut v: Vec<f64> = (0..base.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let analytic: f64 = grad.iter().zip(&v).map(|(g, d)| g * d).sum();
        let shifted = |sign: f64| base.iter().zip(&v).map(|(p, d)| p + sign * h * d).collect::<Vec<f64>>();
        probe.set_parameters(&shifted(1.0)).unwrap();
        let up = probe.loss(samples);
        probe.set_parameters(&shifted(-1.0)).unwrap();
        let down = probe.loss(samples);
        let numeric = (up - down) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}
