use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sierl::env::{bfs_distance, env_from_token, free_states, make_env, Action, AgentState, GridSpec};

mod common;

#[test]
fn hallway4_golden_layout() {
    let spec = make_env("hallway", Some(4)).unwrap();
    let expected = "\
###########
#~~~~~~~~~#
#S.......G#
#~~~~~~~~~#
###########
";
    assert_eq!(spec.to_ascii(), expected);
    assert_eq!(bfs_distance(&spec, spec.start, spec.main_goal), Some(8));
}

#[test]
fn four_rooms_golden_layout() {
    let spec = make_env("four_rooms", None).unwrap();
    let expected = "\
#############
#S....#.....#
#.....#.....#
#...........#
#.....#.....#
#.....#.....#
##.####.....#
#.....###.###
#.....#.....#
#.....#.....#
#...........#
#.....#....G#
#############
";
    assert_eq!(spec.to_ascii(), expected);
}

#[test]
fn ascii_roundtrip_preserves_dynamics() {
    for token in ["hallway3", "four_rooms", "bugtrap", "nine_rooms", "nine_rooms_locked", "empty5"] {
        let spec = env_from_token(token).unwrap();
        let again = GridSpec::from_ascii(token, &spec.to_ascii()).unwrap();
        assert_eq!(again.to_ascii(), spec.to_ascii(), "{token}");
        for s in free_states(&spec) {
            for a in Action::ALL {
                assert_eq!(again.move_agent(s, a), spec.move_agent(s, a));
            }
        }
    }
}

#[test]
fn slip_frequencies_are_80_10_10() {
    let spec = make_env("empty", Some(5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = AgentState::new(3, 3);
    let mut counts = [0u32; 4];
    let n = 100_000;
    for _ in 0..n {
        let next = spec.step(s, Action::Up, 0.2, &mut rng).unwrap().next_state;
        let a = Action::ALL.iter().position(|&a| spec.move_agent(s, a) == next).unwrap();
        counts[a] += 1;
    }
    let frac = |a: Action| counts[a.index()] as f64 / n as f64;
    assert!((frac(Action::Up) - 0.8).abs() < 0.01);
    for lat in Action::Up.laterals() {
        assert!((frac(lat) - 0.1).abs() < 0.01);
    }
    assert_eq!(counts[Action::Down.index()], 0);
}

#[test]
fn slide_cells_are_never_occupied() {
    for k in 1..=6 {
        let spec = make_env("hallway", Some(k)).unwrap();
        let free = free_states(&spec);
        assert_eq!(free.len(), 2 * k + 1);
        for s in &free {
            assert_eq!(spec.move_agent(*s, Action::Up), spec.start);
            assert_eq!(spec.move_agent(*s, Action::Down), spec.start);
        }
    }
}

#[test]
fn crate_bfs_agrees_with_reverse_bfs() {
    for token in ["four_rooms", "bugtrap", "nine_rooms_locked", "hallway5"] {
        let spec = env_from_token(token).unwrap();
        for g in common::goal_positions(&spec) {
            let dist = common::bfs_to_goal(&spec, g);
            for s in free_states(&spec) {
                assert_eq!(bfs_distance(&spec, s, g), dist.get(&s).copied(), "{token} {s} -> {g}");
            }
        }
    }
}

#[test]
fn main_goal_is_absorbing() {
    let spec = make_env("hallway", Some(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(spec.step(spec.main_goal, Action::Left, 0.0, &mut rng).is_err());
    let before = AgentState::new(spec.main_goal.x - 1, spec.main_goal.y);
    let r = spec.step(before, Action::Right, 0.0, &mut rng).unwrap();
    assert!(r.done && r.reward == 0.0);
}
