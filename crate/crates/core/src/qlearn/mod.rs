//! Goal-conditioned action values: a dense table and a small network behind
//! one interface, plus the ε-greedy policy and evaluation rollouts.

mod checkpoint;
mod mlp;
mod tabular;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointError, LoadedQ,
};
pub use mlp::{MlpQ, MlpShape};
pub use tabular::TabularQ;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, AgentState, GridSpec};
use crate::replay::Transition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub batch_size: usize,
    pub target_update_period: u64,
    pub initial_collect_steps: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
}

impl LearnerConfig {
    /// Network defaults; `episode_length` sets the hard target update period.
    pub fn network(episode_length: u64) -> Self {
        LearnerConfig {
            learning_rate: 3e-4,
            discount: 0.95,
            batch_size: 128,
            target_update_period: episode_length,
            initial_collect_steps: 128,
            eps_start: 1.0,
            eps_end: 0.1,
            eps_decay_steps: 20_000,
        }
    }

    pub fn tabular(episode_length: u64) -> Self {
        LearnerConfig { learning_rate: 0.25, ..Self::network(episode_length) }
    }
}

/// Linear decay from `eps_start` to `eps_end`, then flat.
pub fn epsilon_at(step: u64, cfg: &LearnerConfig) -> f64 {
    if step >= cfg.eps_decay_steps {
        return cfg.eps_end;
    }
    let frac = step as f64 / cfg.eps_decay_steps as f64;
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
}

pub trait GoalQ {
    fn q_values(&self, s: AgentState, g: AgentState) -> [f64; 4];

    fn max_q(&self, s: AgentState, g: AgentState) -> f64 {
        self.q_values(s, g).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A trainable [`GoalQ`].
pub trait Learner: GoalQ + Clone {
    /// One learning step on `batch`; returns the mean squared TD error
    /// measured before the update.
    fn td_update(&mut self, target: Option<&Self>, batch: &[Transition], cfg: &LearnerConfig) -> f64;

    /// Whether training should keep a separate, periodically copied target.
    fn uses_target_network(&self) -> bool;

    fn kind(&self) -> &'static str;

    fn parameters(&self) -> Vec<f64>;

    fn set_parameters(&mut self, params: &[f64]) -> Result<(), CheckpointError>;

    /// Copies the weights of `source` (used for target refreshes).
    fn copy_weights_from(&mut self, source: &Self) {
        self.clone_from(source);
    }
}

/// Index of the largest value; ties go to the earliest action.
pub fn greedy_action(q: &[f64; 4]) -> Action {
    let mut best = 0;
    for i in 1..4 {
        if q[i] > q[best] {
            best = i;
        }
    }
    Action::from_index(best)
}

pub fn act<Q: GoalQ + ?Sized, R: Rng + ?Sized>(q: &Q, s: AgentState, g: AgentState, eps: f64, rng: &mut R) -> Action {
    if rng.gen::<f64>() < eps {
        Action::from_index(rng.gen_range(0..4))
    } else {
        greedy_action(&q.q_values(s, g))
    }
}

/// TD target `r` (terminal) or `r + γ max_a' Q_target(s', g)`.
pub fn td_target<Q: GoalQ + ?Sized>(target: &Q, t: &Transition, discount: f64) -> f64 {
    if t.done {
        t.reward
    } else {
        t.reward + discount * target.max_q(t.next_state, t.goal)
    }
}

/// Hard-copies `q` into `target` every `target_update_period` steps.
pub fn maybe_update_target<L: Learner>(step: u64, q: &L, target: &mut L, cfg: &LearnerConfig) -> bool {
    if cfg.target_update_period > 0 && step.is_multiple_of(cfg.target_update_period) {
        target.copy_weights_from(q);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rollout {
    pub success: bool,
    pub steps: usize,
}

/// Greedy episode from `spec.start` towards `g`. Reaching `g` is a success;
/// touching the environment's main goal first ends the episode.
pub fn greedy_rollout<Q: GoalQ + ?Sized, R: Rng + ?Sized>(
    spec: &GridSpec,
    q: &Q,
    g: AgentState,
    max_steps: usize,
    slip_prob: f64,
    rng: &mut R,
) -> Rollout {
    let mut s = spec.start;
    for t in 0..=max_steps {
        if s.same_position(&g) {
            return Rollout { success: true, steps: t };
        }
        if t == max_steps || s.same_position(&spec.main_goal) {
            break;
        }
        let a = greedy_action(&q.q_values(s, g));
        s = spec.move_agent(s, GridSpec::slip_action(a, slip_prob, rng));
    }
    Rollout { success: false, steps: max_steps }
}

/// Every goal-conditioned transition of the deterministic dynamics:
/// one per (state, action, goal position) with the state not at the goal.
pub fn exhaustive_transitions(spec: &GridSpec) -> Vec<Transition> {
    let states = crate::env::free_states(spec);
    let mut goals: Vec<AgentState> = Vec::new();
    for s in &states {
        if !goals.iter().any(|g| g.same_position(s)) {
            goals.push(AgentState::new(s.x, s.y));
        }
    }
    let mut out = Vec::with_capacity(states.len() * goals.len() * 4);
    for &g in &goals {
        for &s in &states {
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Fixed([f64; 4]);

    impl GoalQ for Fixed {
        fn q_values(&self, _: AgentState, _: AgentState) -> [f64; 4] {
            self.0
        }
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = LearnerConfig::network(150);
        assert_eq!(epsilon_at(0, &cfg), 1.0);
        assert!((epsilon_at(10_000, &cfg) - 0.55).abs() < 1e-12);
        assert_eq!(epsilon_at(20_000, &cfg), 0.1);
        assert_eq!(epsilon_at(1_000_000, &cfg), 0.1);
    }

    #[test]
    fn greedy_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = AgentState::new(1, 1);
        assert_eq!(act(&Fixed([-1.0, -2.0, -3.0, -4.0]), s, s, 0.0, &mut rng), Action::Up);
        assert_eq!(act(&Fixed([0.0; 4]), s, s, 0.0, &mut rng), Action::Up);
        assert_eq!(act(&Fixed([-3.0, -2.0, -1.0, -1.0]), s, s, 0.0, &mut rng), Action::Left);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = AgentState::new(1, 1);
        let n = 100_000;
        let mut freq = [0u32; 4];
        for _ in 0..n {
            freq[act(&Fixed([5.0, 0.0, 0.0, 0.0]), s, s, 1.0, &mut rng).index()] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for f in freq {
            assert!((f as f64 - n as f64 / 4.0).abs() < 3.0 * sigma, "{freq:?}");
        }
    }

    #[test]
    fn target_update_period() {
        let spec = crate::env::make_env("hallway", Some(2)).unwrap();
        let cfg = LearnerConfig::tabular(150);
        let mut q = TabularQ::new(&spec);
        let mut target = q.clone();
        let t = *exhaustive_transitions(&spec).iter().find(|t| !t.done).unwrap();
        q.td_update(None, &[t], &cfg);
        assert!(!maybe_update_target(149, &q, &mut target, &cfg));
        assert_ne!(target.parameters(), q.parameters());
        assert!(maybe_update_target(150, &q, &mut target, &cfg));
        for s in crate::env::free_states(&spec) {
            assert_eq!(target.q_values(s, spec.main_goal), q.q_values(s, spec.main_goal));
        }
    }

    #[test]
    fn rollout_to_start_is_immediate() {
        let spec = crate::env::make_env("hallway", Some(6)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = greedy_rollout(&spec, &Fixed([0.0; 4]), spec.start, 400, 0.0, &mut rng);
        assert_eq!(r, Rollout { success: true, steps: 0 });
        let r = greedy_rollout(&spec, &Fixed([0.0; 4]), spec.main_goal, 400, 0.0, &mut rng);
        assert!(!r.success);
    }
}
