use crate::env::{AgentState, GridSpec, StateIndex};
use crate::replay::Transition;

use super::{td_target, CheckpointError, GoalQ, Learner, LearnerConfig};

/// Dense `state × goal position × action` table, zero-initialised.
///
/// Updates use the live table as their own bootstrap target.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    index: std::sync::Arc<StateIndex>,
    values: Vec<f64>,
}

impl TabularQ {
    pub fn new(spec: &GridSpec) -> Self {
        let index = StateIndex::new(spec);
        let len = index.n_states() * index.n_goals() * 4;
        TabularQ { index: std::sync::Arc::new(index), values: vec![0.0; len] }
    }

    pub fn n_states(&self) -> usize {
        self.index.n_states()
    }

    pub fn n_goals(&self) -> usize {
        self.index.n_goals()
    }

    fn offset(&self, s: &AgentState, g: &AgentState) -> usize {
        let si = self.index.state(s).unwrap_or_else(|| panic!("state {s} is not reachable"));
        let gi = self.index.goal(g).unwrap_or_else(|| panic!("goal {g} is not reachable"));
        (si * self.index.n_goals() + gi) * 4
    }
}

impl GoalQ for TabularQ {
    fn q_values(&self, s: AgentState, g: AgentState) -> [f64; 4] {
        let o = self.offset(&s, &g);
        [self.values[o], self.values[o + 1], self.values[o + 2], self.values[o + 3]]
    }
}

impl Learner for TabularQ {
    fn td_update(&mut self, _target: Option<&Self>, batch: &[Transition], cfg: &LearnerConfig) -> f64 {
        let mut sq = 0.0;
        for t in batch {
            let y = td_target(&*self, t, cfg.discount);
            let i = self.offset(&t.state, &t.goal) + t.action.index();
            let err = y - self.values[i];
            sq += err * err;
            self.values[i] += cfg.learning_rate * err;
        }
        sq / batch.len().max(1) as f64
    }

    fn uses_target_network(&self) -> bool {
        false
    }

    fn kind(&self) -> &'static str {
        "tabular"
    }

    fn parameters(&self) -> Vec<f64> {
        self.values.clone()
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<(), CheckpointError> {
        if params.len() != self.values.len() {
            return Err(CheckpointError::Shape { expected: self.values.len(), found: params.len() });
        }
        self.values.copy_from_slice(params);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_env, Action};

    #[test]
    fn covers_free_states() {
        let spec = make_env("four_rooms", None).unwrap();
        let q = TabularQ::new(&spec);
        assert_eq!(q.n_states(), 104);
        assert_eq!(q.n_goals(), 104);
        assert_eq!(q.parameters().len(), 104 * 104 * 4);
    }

    #[test]
    fn single_updates() {
        let spec = make_env("hallway", Some(2)).unwrap();
        let cfg = LearnerConfig::tabular(150);
        let mut q = TabularQ::new(&spec);
        let g = spec.main_goal;
        let s = AgentState::new(4, 2);

        let done = Transition { state: s, action: Action::Right, reward: 0.0, next_state: g, goal: g, done: true };
        assert_eq!(q.td_update(None, &[done], &cfg), 0.0);
        assert_eq!(q.q_values(s, g)[3], 0.0);

        // Successor values all -1 give y = -1 + 0.95 * -1.
        let next = AgentState::new(2, 2);
        q.set_parameters(&vec![0.0; q.parameters().len()]).unwrap();
        let o = q.offset(&next, &g);
        q.values[o..o + 4].copy_from_slice(&[-1.0; 4]);
        let t = Transition {
            state: spec.start,
            action: Action::Right,
            reward: -1.0,
            next_state: next,
            goal: g,
            done: false,
        };
        assert_eq!(td_target(&q, &t, cfg.discount), -1.95);
        let loss = q.td_update(None, &[t], &cfg);
        assert!((loss - 1.95 * 1.95).abs() < 1e-12);
        assert!((q.q_values(spec.start, g)[3] - 0.25 * -1.95).abs() < 1e-12);
    }

    #[test]
    fn rejects_wrong_shape() {
        let spec = make_env("hallway", Some(2)).unwrap();
        let mut q = TabularQ::new(&spec);
        assert!(q.set_parameters(&[1.0]).is_err());
    }
}
