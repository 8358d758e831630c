use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{her_relabel, novelty_reward, HerConfig, NoveltyBonusConfig, RandomGoalSampler};
use crate::env::{AgentState, GridSpec};
use crate::qlearn::{act, epsilon_at, maybe_update_target, Learner, LearnerConfig};
use crate::replay::{get_frontier, Experience, Transition};

use super::{select_subgoal, should_early_switch, SierlConfig, SierlError, Subgoal};

/// Where each episode's behaviour goal comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoalSource {
    /// Frontier sub-goal, then the main goal.
    Sierl,
    /// The main goal for the whole episode.
    MainGoal,
    /// A fresh uniformly drawn free state per episode.
    RandomGoals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub learner: LearnerConfig,
    pub sierl: SierlConfig,
    pub goal_source: GoalSource,
    pub replay_capacity: usize,
    pub slip_prob: f64,
    pub her: Option<HerConfig>,
    pub novelty: Option<NoveltyBonusConfig>,
    /// Diagnostic: treat every frontier as empty.
    pub force_empty_frontier: bool,
}

impl TrainerConfig {
    pub fn new(learner: LearnerConfig, sierl: SierlConfig, replay_capacity: usize) -> Self {
        TrainerConfig {
            learner,
            sierl,
            goal_source: GoalSource::Sierl,
            replay_capacity,
            slip_prob: 0.0,
            her: None,
            novelty: None,
            force_empty_frontier: false,
        }
    }

    pub fn episode_length(&self) -> usize {
        self.sierl.episode_length
    }

    pub fn validate(&self) -> Result<(), SierlError> {
        self.sierl.validate()?;
        let bad = |m: &str| Err(SierlError::Config(m.to_string()));
        if self.replay_capacity == 0 {
            return bad("replay capacity must be positive");
        }
        if self.learner.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..=1.0).contains(&self.slip_prob) {
            return bad("slip probability must lie in [0, 1]");
        }
        if !(self.learner.discount >= 0.0 && self.learner.discount < 1.0) {
            return bad("discount must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    FrontierReach,
    MainGoal,
    RandomGoal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub phase: Phase,
    pub current_goal: AgentState,
    pub subgoal: Option<AgentState>,
    /// Steps spent in the current phase.
    pub t: usize,
    pub running_familiarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    MainGoal,
    AssignedGoal,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEvent {
    pub index: u64,
    pub end_step: u64,
    pub steps: usize,
    pub outcome: EpisodeEnd,
    pub subgoal: Option<AgentState>,
    pub subgoal_reached: bool,
    pub phase1_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    /// Environment steps taken so far, including this one.
    pub step: u64,
    pub transition: Transition,
    pub phase: Phase,
    pub epsilon: f64,
    pub loss: Option<f64>,
}

pub trait TrainingHooks {
    fn on_step(&mut self, _event: &StepEvent) {}
    fn on_episode(&mut self, _event: &EpisodeEvent) {}
}

impl TrainingHooks for () {}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainingLog {
    pub steps: u64,
    pub episodes: u64,
    pub main_goal_episodes: u64,
    pub mean_loss: f64,
}

/// Step-wise training loop: two-phase episodes driving a learner that
/// replays from a shared [`Experience`].
#[derive(Debug, Clone)]
pub struct Trainer<L: Learner> {
    spec: GridSpec,
    cfg: TrainerConfig,
    learner: L,
    target: Option<L>,
    experience: Experience,
    rng: ChaCha8Rng,
    goals: RandomGoalSampler,
    state: AgentState,
    phase: PhaseState,
    needs_reset: bool,
    global_step: u64,
    episode_t: usize,
    episode_index: u64,
    episode_start_step: u64,
    subgoal_reached: bool,
    phase1_steps: usize,
    episode: Vec<Transition>,
    arrivals: Vec<u64>,
    coverage: Vec<u64>,
    batch: Vec<Transition>,
    loss_sum: f64,
    loss_n: u64,
    main_goal_episodes: u64,
}

impl<L: Learner> Trainer<L> {
    pub fn new(spec: GridSpec, learner: L, cfg: TrainerConfig, rng: ChaCha8Rng) -> Result<Self, SierlError> {
        cfg.validate()?;
        let target = learner.uses_target_network().then(|| learner.clone());
        let n_cells = spec.n_cells();
        Ok(Trainer {
            goals: RandomGoalSampler::new(&spec),
            experience: Experience::new(cfg.replay_capacity),
            state: spec.start,
            phase: PhaseState {
                phase: Phase::MainGoal,
                current_goal: spec.main_goal,
                subgoal: None,
                t: 0,
                running_familiarity: 1.0,
            },
            spec,
            cfg,
            learner,
            target,
            rng,
            needs_reset: true,
            global_step: 0,
            episode_t: 0,
            episode_index: 0,
            episode_start_step: 0,
            subgoal_reached: false,
            phase1_steps: 0,
            episode: Vec::new(),
            arrivals: vec![0; n_cells * 2],
            coverage: vec![0; n_cells],
            batch: Vec::new(),
            loss_sum: 0.0,
            loss_n: 0,
            main_goal_episodes: 0,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn learner(&self) -> &L {
        &self.learner
    }

    pub fn into_learner(self) -> L {
        self.learner
    }

    pub fn experience(&self) -> &Experience {
        &self.experience
    }

    pub fn phase(&self) -> &PhaseState {
        &self.phase
    }

    pub fn state(&self) -> AgentState {
        self.state
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn episodes(&self) -> u64 {
        self.episode_index
    }

    /// Steps taken from each grid cell, indexed by [`GridSpec::cell_index`].
    pub fn coverage(&self) -> &[u64] {
        &self.coverage
    }

    pub fn log(&self) -> TrainingLog {
        TrainingLog {
            steps: self.global_step,
            episodes: self.episode_index,
            main_goal_episodes: self.main_goal_episodes,
            mean_loss: if self.loss_n == 0 { 0.0 } else { self.loss_sum / self.loss_n as f64 },
        }
    }

    fn enter_main_phase(&mut self) {
        self.phase = PhaseState {
            phase: Phase::MainGoal,
            current_goal: self.spec.main_goal,
            subgoal: self.phase.subgoal,
            t: 0,
            running_familiarity: 1.0,
        };
    }

    fn reset(&mut self) {
        let start = self.spec.start;
        self.state = start;
        self.episode_t = 0;
        self.episode_start_step = self.global_step;
        self.subgoal_reached = false;
        self.phase1_steps = 0;
        self.episode.clear();
        let (phase, goal, subgoal) = match self.cfg.goal_source {
            GoalSource::MainGoal => (Phase::MainGoal, self.spec.main_goal, None),
            GoalSource::RandomGoals => (Phase::RandomGoal, self.goals.sample(&mut self.rng), None),
            GoalSource::Sierl => {
                let s = &self.cfg.sierl;
                let frontier = if self.cfg.force_empty_frontier {
                    Vec::new()
                } else {
                    get_frontier(self.experience.table(), s.f_thr, s.frontier_percentile, s.no_frontier_filter)
                };
                match select_subgoal(&frontier, &self.learner, start, self.spec.main_goal, start, s, &mut self.rng) {
                    Subgoal::Frontier(f) if !f.state.same_position(&start) => {
                        (Phase::FrontierReach, f.state, Some(f.state))
                    }
                    Subgoal::Frontier(f) => {
                        self.subgoal_reached = true;
                        (Phase::MainGoal, self.spec.main_goal, Some(f.state))
                    }
                    Subgoal::MainGoal => (Phase::MainGoal, self.spec.main_goal, None),
                }
            }
        };
        self.phase = PhaseState { phase, current_goal: goal, subgoal, t: 0, running_familiarity: 1.0 };
        self.needs_reset = false;
    }

    /// Takes one environment step, learning from replay once the initial
    /// collection period has passed.
    pub fn step<H: TrainingHooks + ?Sized>(&mut self, hooks: &mut H) -> StepEvent {
        if self.needs_reset {
            self.reset();
        }
        let epsilon = epsilon_at(self.global_step, &self.cfg.learner);
        let s = self.state;
        let goal = self.phase.current_goal;
        let action = act(&self.learner, s, goal, epsilon, &mut self.rng);
        let res =
            self.spec.step(s, action, self.cfg.slip_prob, &mut self.rng).expect("episodes reset at the main goal");
        let next = res.next_state;
        let reached = next.same_position(&goal);
        let mut reward = if reached { 0.0 } else { -1.0 };
        if let Some(bonus) = &self.cfg.novelty {
            let i = self.spec.cell_index(&next) * 2 + next.has_key as usize;
            self.arrivals[i] += 1;
            reward = novelty_reward(reward, self.arrivals[i], bonus);
        }
        let t = Transition { state: s, action, reward, next_state: next, goal, done: reached };
        self.phase.running_familiarity = self.experience.record_step(t, self.phase.running_familiarity);
        self.coverage[self.spec.cell_index(&s)] += 1;
        if self.cfg.her.is_some() {
            self.episode.push(t);
        }
        self.global_step += 1;

        let loss = self.learn();
        let event = StepEvent { step: self.global_step, transition: t, phase: self.phase.phase, epsilon, loss };
        hooks.on_step(&event);

        self.state = next;
        self.phase.t += 1;
        self.episode_t += 1;
        if self.phase.phase == Phase::FrontierReach {
            self.phase1_steps += 1;
        }

        let outcome = if res.done {
            Some(EpisodeEnd::MainGoal)
        } else if self.phase.phase == Phase::RandomGoal && reached {
            Some(EpisodeEnd::AssignedGoal)
        } else if self.episode_t >= self.cfg.episode_length() {
            Some(EpisodeEnd::Timeout)
        } else {
            None
        };
        if let Some(outcome) = outcome {
            self.finish_episode(outcome, hooks);
        } else if self.phase.phase == Phase::FrontierReach {
            let s_cfg = &self.cfg.sierl;
            let switch = if reached {
                self.subgoal_reached = true;
                true
            } else {
                let novel = self.experience.table().state_count(&next) <= s_cfg.n_thr;
                (!s_cfg.no_early_switch && should_early_switch(novel, s_cfg, &mut self.rng)) || self.phase.t >= s_cfg.h1
            };
            if switch {
                self.enter_main_phase();
            }
        }
        event
    }

    fn learn(&mut self) -> Option<f64> {
        let cfg = &self.cfg.learner;
        if self.global_step < cfg.initial_collect_steps.max(1) {
            return None;
        }
        self.experience.sample_into(cfg.batch_size, &mut self.rng, &mut self.batch).ok()?;
        let loss = self.learner.td_update(self.target.as_ref(), &self.batch, cfg);
        if let Some(target) = self.target.as_mut() {
            maybe_update_target(self.global_step, &self.learner, target, cfg);
        }
        self.loss_sum += loss;
        self.loss_n += 1;
        Some(loss)
    }

    fn finish_episode<H: TrainingHooks + ?Sized>(&mut self, outcome: EpisodeEnd, hooks: &mut H) {
        if let Some(her) = &self.cfg.her {
            for t in her_relabel(&self.episode, her.ratio, &mut self.rng) {
                self.experience.push_synthetic(t);
            }
        }
        if outcome == EpisodeEnd::MainGoal {
            self.main_goal_episodes += 1;
        }
        let event = EpisodeEvent {
            index: self.episode_index,
            end_step: self.global_step,
            steps: self.episode_t,
            outcome,
            subgoal: self.phase.subgoal,
            subgoal_reached: self.subgoal_reached,
            phase1_steps: self.phase1_steps,
        };
        self.episode_index += 1;
        self.needs_reset = true;
        hooks.on_episode(&event);
    }
}

/// Runs `total_steps` environment steps.
pub fn run_training<L: Learner, H: TrainingHooks + ?Sized>(
    trainer: &mut Trainer<L>,
    total_steps: u64,
    hooks: &mut H,
) -> TrainingLog {
    for _ in 0..total_steps {
        trainer.step(hooks);
    }
    trainer.log()
}
