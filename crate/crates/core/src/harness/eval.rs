use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::RandomGoalSampler;
use crate::env::GridSpec;
use crate::qlearn::{greedy_rollout, GoalQ};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub step: u64,
    pub main_success: f64,
    pub random_success: f64,
    pub main_outcomes: Vec<bool>,
    pub random_outcomes: Vec<bool>,
}

fn fraction(outcomes: &[bool]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|&&o| o).count() as f64 / outcomes.len() as f64
}

/// Greedy rollouts to the main goal and to freshly drawn random goals.
/// Reads `q` only.
pub fn evaluate<Q: GoalQ + ?Sized, R: Rng + ?Sized>(
    spec: &GridSpec,
    q: &Q,
    n_main: usize,
    n_random: usize,
    episode_len: usize,
    slip_prob: f64,
    rng: &mut R,
) -> EvalReport {
    let main_outcomes: Vec<bool> =
        (0..n_main).map(|_| greedy_rollout(spec, q, spec.main_goal, episode_len, slip_prob, rng).success).collect();
    let sampler = RandomGoalSampler::new(spec);
    let random_outcomes: Vec<bool> = (0..n_random)
        .map(|_| {
            let g = sampler.sample(rng);
            greedy_rollout(spec, q, g, episode_len, slip_prob, rng).success
        })
        .collect();
    EvalReport {
        step: 0,
        main_success: fraction(&main_outcomes),
        random_success: fraction(&random_outcomes),
        main_outcomes,
        random_outcomes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_env;
    use crate::qlearn::TabularQ;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_q_fails_four_rooms() {
        let spec = make_env("four_rooms", None).unwrap();
        let q = TabularQ::new(&spec);
        let r = evaluate(&spec, &q, 10, 10, 500, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(r.main_success, 0.0);
        assert_eq!(r.main_outcomes.len(), 10);
        assert!((0.0..=1.0).contains(&r.random_success));
    }
}
