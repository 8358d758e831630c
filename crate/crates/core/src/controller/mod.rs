//! Sub-goal selection for two-phase episodes.
//!
//! Each episode first pursues a sub-goal drawn from the frontier (phase 1)
//! and then the main goal (phase 2). Candidates are scored with
//!
//! ```text
//! c = σ(z(-N))^w_n · σ(z(w_r·Q*(s, s_f) + w_c·Q*(s_I, s_f) + w_g·Q*(s_f, s_G)))
//! ```
//!
//! where `Q*(x, y) = max_a Q(x, y)[a]` and `z` standardises over the
//! candidate batch, and sampled with a softmin over `c`.

mod training;

pub use training::{
    run_training, EpisodeEnd, EpisodeEvent, GoalSource, Phase, PhaseState, StepEvent, Trainer, TrainerConfig,
    TrainingHooks, TrainingLog,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::AgentState;
use crate::qlearn::GoalQ;
use crate::replay::FrontierEntry;

#[derive(Debug, Error, PartialEq)]
pub enum SierlError {
    #[error("cannot score an empty frontier")]
    EmptyFrontier,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SierlConfig {
    pub f_thr: f64,
    pub w_n: f64,
    pub w_c: f64,
    pub w_g: f64,
    pub w_r: f64,
    pub softmin_temp: f64,
    pub p_switch_novel: f64,
    pub p_switch_familiar: f64,
    pub n_thr: u64,
    pub h1: usize,
    pub episode_length: usize,
    pub frontier_percentile: f64,
    /// Divide by the standard deviation instead of the variance in `z`.
    pub standardize_by_std: bool,
    pub no_early_switch: bool,
    pub no_frontier_filter: bool,
    pub no_prioritization: bool,
}

impl SierlConfig {
    pub fn new(f_thr: f64, episode_length: usize) -> Self {
        SierlConfig {
            f_thr,
            w_n: 1.5,
            w_c: 1.0,
            w_g: 0.5,
            w_r: 0.0,
            softmin_temp: 0.5,
            p_switch_novel: 1.0,
            p_switch_familiar: 0.0,
            n_thr: 1,
            h1: episode_length.saturating_sub(1),
            episode_length,
            frontier_percentile: 10.0,
            standardize_by_std: false,
            no_early_switch: false,
            no_frontier_filter: false,
            no_prioritization: false,
        }
    }

    pub fn validate(&self) -> Result<(), SierlError> {
        let bad = |m: &str| Err(SierlError::Config(m.to_string()));
        if self.softmin_temp.is_nan() || self.softmin_temp <= 0.0 {
            return bad("softmin_temp must be positive");
        }
        if !(self.f_thr > 0.0 && self.f_thr <= 1.0) {
            return bad("f_thr must lie in (0, 1]");
        }
        if self.episode_length == 0 || self.h1 >= self.episode_length {
            return bad("h1 must be smaller than episode_length");
        }
        for p in [self.p_switch_novel, self.p_switch_familiar] {
            if !(0.0..=1.0).contains(&p) {
                return bad("switch probabilities must lie in [0, 1]");
            }
        }
        if !(0.0..=100.0).contains(&self.frontier_percentile) {
            return bad("frontier_percentile must lie in [0, 100]");
        }
        Ok(())
    }
}

impl Default for SierlConfig {
    fn default() -> Self {
        SierlConfig::new(0.9, 150)
    }
}

/// Chosen phase-1 target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Subgoal {
    MainGoal,
    Frontier(FrontierEntry),
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `(x - mean) / var` (or `/ std`); all zeros for degenerate batches.
pub fn standardize(xs: &[f64], by_std: bool) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if xs.len() < 2 || var < 1e-12 {
        return vec![0.0; xs.len()];
    }
    let scale = if by_std { var.sqrt() } else { var };
    xs.iter().map(|x| (x - mean) / scale).collect()
}

pub fn score_candidates<Q: GoalQ + ?Sized>(
    frontier: &[FrontierEntry],
    q: &Q,
    s_init: AgentState,
    s_goal: AgentState,
    s_cur: AgentState,
    cfg: &SierlConfig,
) -> Result<Vec<f64>, SierlError> {
    if frontier.is_empty() {
        return Err(SierlError::EmptyFrontier);
    }
    let neg_counts: Vec<f64> = frontier.iter().map(|f| -(f.count as f64)).collect();
    let path: Vec<f64> = frontier
        .iter()
        .map(|f| {
            let mut c = 0.0;
            if cfg.w_r != 0.0 {
                c += cfg.w_r * q.max_q(s_cur, f.state);
            }
            if cfg.w_c != 0.0 {
                c += cfg.w_c * q.max_q(s_init, f.state);
            }
            if cfg.w_g != 0.0 {
                c += cfg.w_g * q.max_q(f.state, s_goal);
            }
            c
        })
        .collect();
    let z_novelty = standardize(&neg_counts, cfg.standardize_by_std);
    let z_path = standardize(&path, cfg.standardize_by_std);
    Ok(z_novelty.iter().zip(&z_path).map(|(n, p)| sigmoid(*n).powf(cfg.w_n) * sigmoid(*p)).collect())
}

/// `exp(-c_i / τ) / Σ_j exp(-c_j / τ)`, shifted by the minimum cost.
pub fn softmin_probabilities(costs: &[f64], temperature: f64) -> Vec<f64> {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = costs.iter().map(|c| (-(c - min) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[allow(clippy::too_many_arguments)]
pub fn select_subgoal<Q: GoalQ + ?Sized, R: Rng + ?Sized>(
    frontier: &[FrontierEntry],
    q: &Q,
    s_init: AgentState,
    s_goal: AgentState,
    s_cur: AgentState,
    cfg: &SierlConfig,
    rng: &mut R,
) -> Subgoal {
    if frontier.is_empty() {
        return Subgoal::MainGoal;
    }
    let i = if cfg.no_prioritization {
        rng.gen_range(0..frontier.len())
    } else {
        let costs = score_candidates(frontier, q, s_init, s_goal, s_cur, cfg).expect("frontier is non-empty");
        sample_categorical(&softmin_probabilities(&costs, cfg.softmin_temp), rng)
    };
    Subgoal::Frontier(frontier[i])
}

pub fn should_early_switch<R: Rng + ?Sized>(state_novel: bool, cfg: &SierlConfig, rng: &mut R) -> bool {
    let p = if state_novel { cfg.p_switch_novel } else { cfg.p_switch_familiar };
    rng.gen::<f64>() < p
}
