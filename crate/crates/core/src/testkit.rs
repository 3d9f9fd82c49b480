//! Helpers for tests, fuzzing and benchmarks: random playouts and state samplers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{ActionId, CardId, Engine, GameState, Hero};
use crate::learner::{Step, TrajectorySegment};
use crate::obsact::Encoder;

/// Lowest-index legal deck for any hero: commons 0..15, two copies each.
pub fn common_deck() -> Vec<CardId> {
    (0..15u16).flat_map(|i| [CardId(i), CardId(i)]).collect()
}

/// A started battle between two `common_deck`s.
pub fn battle(engine: &Engine, heroes: [Hero; 2], seed: u64) -> GameState {
    let deck = common_deck();
    engine.new_match_with_decks(heroes, [Some(&deck), Some(&deck)], seed).expect("common deck is legal")
}

/// Result of one uniform-random playout.
pub struct Playout {
    pub final_state: GameState,
    pub actions: Vec<ActionId>,
    pub violations: Vec<String>,
    pub reward_sum_nonzero: bool,
}

/// Play uniformly random legal actions to the end, optionally checking invariants after each step.
pub fn random_playout(engine: &Engine, heroes: [Hero; 2], seed: u64, check: bool) -> Playout {
    let mut s = engine.new_match(heroes[0], heroes[1], seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut actions = Vec::new();
    let mut violations = Vec::new();
    let mut reward_sum_nonzero = false;
    let mut legal = Vec::new();
    while !s.is_terminal() {
        legal.clear();
        legal.extend(engine.legal_actions(&s).expect("live state"));
        if legal.is_empty() {
            violations.push("no legal action".into());
            break;
        }
        let a = legal[rng.random_range(0..legal.len())];
        actions.push(a);
        let rewards = engine.step(&mut s, a).expect("legal action applies");
        reward_sum_nonzero |= rewards[0] + rewards[1] != 0;
        if check {
            if let Err(e) = engine.check_invariants(&s) {
                violations.push(e);
            }
        }
    }
    Playout { final_state: s, actions, violations, reward_sum_nonzero }
}

/// Non-terminal states sampled along random playouts, each kept with probability `keep`.
pub fn sample_states(engine: &Engine, seed: u64, count: usize, keep: f64) -> Vec<GameState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let heroes = [Hero::ALL[rng.random_range(0..3)], Hero::ALL[rng.random_range(0..3)]];
        let mut s = engine.new_match(heroes[0], heroes[1], rng.random());
        while !s.is_terminal() && out.len() < count {
            if rng.random_bool(keep) {
                out.push(s.clone());
            }
            let legal = engine.legal_actions(&s).expect("live state");
            let a = legal[rng.random_range(0..legal.len())];
            engine.step(&mut s, a).expect("legal action applies");
        }
    }
    out
}

/// Segments built from sampled states with random behavior probabilities,
/// values and rewards; `len` steps each, the last one terminal with probability 1/2.
pub fn synthetic_segments(encoder: &Encoder, seed: u64, count: usize, len: usize) -> Vec<TrajectorySegment> {
    let engine = encoder.engine();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = sample_states(engine, seed ^ 0x5eed, count * len, 0.1);
    states
        .chunks(len)
        .map(|chunk| {
            let terminal = rng.random_bool(0.5);
            let steps = chunk
                .iter()
                .enumerate()
                .map(|(t, s)| {
                    let me = s.to_move().expect("live state");
                    let obs = encoder.encode(s, me, rng.random_range(0..=30)).expect("encodable");
                    let legal: Vec<usize> = obs.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
                    let done = terminal && t + 1 == chunk.len();
                    let reward = if done { [-1.0, 1.0][rng.random_range(0..2)] } else { 0.0 };
                    Step {
                        action: ActionId(legal[rng.random_range(0..legal.len())] as u16),
                        obs,
                        behavior_prob: rng.random_range(0.02f32..1.0),
                        reward,
                        value: rng.random_range(-1.0f32..1.0),
                        done,
                    }
                })
                .collect();
            TrajectorySegment { hero: Hero::Mage, steps, bootstrap_value: rng.random_range(-1.0f32..1.0) }
        })
        .collect()
}
