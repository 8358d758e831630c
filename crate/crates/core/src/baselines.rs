//! Comparison methods. All of them share the trainer; they differ in the
//! goal source and in how transitions are rewritten before storage.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{GoalSource, SierlConfig, TrainerConfig};
use crate::env::{free_states, AgentState, GridSpec};
use crate::replay::Transition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sierl,
    /// Plain ε-greedy Q-learning on the main goal.
    Qlearn,
    Her,
    Novelty,
    RandomGoals,
    Mega,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Sierl, Method::Qlearn, Method::Her, Method::Novelty, Method::RandomGoals, Method::Mega];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sierl => "sierl",
            Method::Qlearn => "qlearn",
            Method::Her => "her",
            Method::Novelty => "novelty",
            Method::RandomGoals => "random_goals",
            Method::Mega => "mega",
        }
    }

    /// Rewrites `base` into this method's trainer configuration.
    pub fn configure(self, base: &TrainerConfig) -> TrainerConfig {
        let mut cfg = base.clone();
        cfg.her = None;
        cfg.novelty = None;
        cfg.goal_source = GoalSource::MainGoal;
        match self {
            Method::Sierl => cfg.goal_source = GoalSource::Sierl,
            Method::Qlearn => {}
            Method::Her => cfg.her = Some(HerConfig::default()),
            Method::Novelty => cfg.novelty = Some(NoveltyBonusConfig::default()),
            Method::RandomGoals => cfg.goal_source = GoalSource::RandomGoals,
            Method::Mega => {
                cfg.goal_source = GoalSource::Sierl;
                cfg.sierl = mega_preset(&base.sierl);
            }
        }
        cfg
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
            format!("unknown method `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HerConfig {
    /// Probability that a stored transition also gets a relabelled copy.
    pub ratio: f64,
}

impl Default for HerConfig {
    fn default() -> Self {
        HerConfig { ratio: 1.0 }
    }
}

/// Copies of `episode` relabelled with its final achieved state as goal.
pub fn her_relabel<R: Rng + ?Sized>(episode: &[Transition], ratio: f64, rng: &mut R) -> Vec<Transition> {
    let Some(last) = episode.last() else {
        return Vec::new();
    };
    let goal = last.next_state;
    episode
        .iter()
        .filter(|_| ratio >= 1.0 || rng.gen::<f64>() < ratio)
        .map(|t| {
            let done = t.next_state.same_position(&goal);
            Transition { goal, reward: if done { 0.0 } else { -1.0 }, done, ..*t }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoveltyBonusConfig {
    pub beta: f64,
}

impl Default for NoveltyBonusConfig {
    fn default() -> Self {
        NoveltyBonusConfig { beta: 1.0 }
    }
}

/// `r + β / N(s')`, where `arrivals` counts entries into `s'` including
/// the current one.
pub fn novelty_reward(reward: f64, arrivals: u64, cfg: &NoveltyBonusConfig) -> f64 {
    reward + cfg.beta / arrivals.max(1) as f64
}

/// Uniform draws over free states other than the start.
#[derive(Debug, Clone)]
pub struct RandomGoalSampler {
    candidates: Vec<AgentState>,
}

impl RandomGoalSampler {
    pub fn new(spec: &GridSpec) -> Self {
        let mut candidates: Vec<AgentState> = Vec::new();
        for s in free_states(spec) {
            if !s.same_position(&spec.start) && !candidates.iter().any(|c| c.same_position(&s)) {
                candidates.push(AgentState::new(s.x, s.y));
            }
        }
        RandomGoalSampler { candidates }
    }

    pub fn candidates(&self) -> &[AgentState] {
        &self.candidates
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AgentState {
        self.candidates[rng.gen_range(0..self.candidates.len())]
    }
}

pub fn sample_random_goal<R: Rng + ?Sized>(spec: &GridSpec, rng: &mut R) -> AgentState {
    RandomGoalSampler::new(spec).sample(rng)
}

/// Novelty-only selection: no familiarity filter, rarest pairs preferred,
/// path terms off.
pub fn mega_preset(base: &SierlConfig) -> SierlConfig {
    SierlConfig { f_thr: 1.0, w_n: -1.0, w_c: 0.0, w_g: 0.0, w_r: 0.0, ..base.clone() }
}
