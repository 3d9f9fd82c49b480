//! Scripted baselines: uniform-random over legal actions and a one-ply greedy
//! damage maximizer.

use rand::Rng;

use crate::engine::{ActionId, Engine, GameState};

/// Credited on top of the damage score when an action wins outright.
const LETHAL_BONUS: i32 = 1000;

pub fn random_action<R: Rng + ?Sized>(engine: &Engine, state: &GameState, rng: &mut R) -> ActionId {
    let legal = engine.legal_actions(state).expect("live state has legal actions");
    legal[rng.random_range(0..legal.len())]
}

fn enemy_effective_hp(state: &GameState, seat: usize) -> i32 {
    let p = &state.players[1 - seat];
    p.hero_hp.max(0) + p.armor
}

fn score_after(engine: &Engine, before: i32, seat: usize, next: &GameState) -> i32 {
    let mut score = before - enemy_effective_hp(next, seat);
    if next.outcome.and_then(|o| o.winner()) == Some(seat) {
        score += LETHAL_BONUS;
    }
    // the first of a two-step play is worth its best completion
    if next.pending_selection.is_some() && next.to_move() == Some(seat) {
        let completions = engine.legal_actions(next).expect("pending state has targets");
        score = completions
            .iter()
            .map(|&b| {
                let (n2, _) = engine.apply_action(next, b).expect("legal action applies");
                score_after(engine, before, seat, &n2)
            })
            .max()
            .unwrap_or(score);
    }
    score
}

/// Action maximizing immediate damage to the enemy hero; ties go to the lowest index.
pub fn greedy_action(engine: &Engine, state: &GameState) -> ActionId {
    let seat = state.to_move().expect("live state");
    let legal = engine.legal_actions(state).expect("live state has legal actions");
    let before = enemy_effective_hp(state, seat);
    let mut best = legal[0];
    let mut best_score = i32::MIN;
    for &a in &legal {
        let (next, _) = engine.apply_action(state, a).expect("legal action applies");
        let s = score_after(engine, before, seat, &next);
        if s > best_score {
            best = a;
            best_score = s;
        }
    }
    best
}
