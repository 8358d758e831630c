//! Goal-conditioned exploration on gridworlds: each episode first chases a
//! sub-goal picked from the least familiar edge of the replay data, then
//! the real goal.
//!
//! ```
//! use rand::SeedableRng;
//! use sierl::controller::{run_training, Trainer, TrainerConfig, SierlConfig};
//! use sierl::env::make_env;
//! use sierl::qlearn::{LearnerConfig, TabularQ};
//!
//! let spec = make_env("hallway", Some(2)).unwrap();
//! let cfg = TrainerConfig::new(LearnerConfig::tabular(150), SierlConfig::new(0.9, 150), 100_000);
//! let q = TabularQ::new(&spec);
//! let mut trainer = Trainer::new(spec, q, cfg, rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
//! let log = run_training(&mut trainer, 1_000, &mut ());
//! assert_eq!(log.steps, 1_000);
//! ```

pub mod baselines;
pub mod controller;
pub mod env;
pub mod harness;
pub mod qlearn;
pub mod replay;

pub use baselines::Method;
pub use controller::{SierlConfig, Trainer, TrainerConfig};
pub use env::{Action, AgentState, GridSpec};
pub use qlearn::{GoalQ, Learner, LearnerConfig, MlpQ, TabularQ};
pub use replay::{Experience, FrontierEntry, Transition, VisitationTable};
