//! OSFP on rock-paper-scissors with an exact best-response learner.
//!
//! Each LP the learner becomes the pure best response to the opponent mixture
//! the controller would serve (self-play with probability `p`, else the
//! historical sampler). Games against historical entries are then simulated
//! through the controller to drive the gate. Exploitability is measured on the
//! empirical mixture of every LP's learner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Opponent, OsfpConfig, OsfpState, PoolEntry};

/// Row player's payoff; actions are rock, paper, scissors.
pub const RPS_PAYOFF: [[f64; 3]; 3] = [[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]];

/// Best-response value against `mix`; the game value is 0.
pub fn exploitability(mix: &[f64; 3]) -> f64 {
    (0..3).map(|a| (0..3).map(|b| RPS_PAYOFF[a][b] * mix[b]).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpsReport {
    /// Exploitability of the empirical mixture after each LP.
    pub exploitability: Vec<f64>,
    pub mixture: [f64; 3],
    pub pool_size: usize,
    pub gate_added: Vec<bool>,
}

fn best_response(q: &[f64; 3]) -> usize {
    let mut best = 0;
    let mut best_u = f64::NEG_INFINITY;
    for (a, row) in RPS_PAYOFF.iter().enumerate() {
        let u: f64 = row.iter().zip(q).map(|(x, y)| x * y).sum();
        if u > best_u + 1e-12 {
            best = a;
            best_u = u;
        }
    }
    best
}

fn sample(mix: &[f64; 3], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, p) in mix.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    2
}

/// Run `lps` learning periods of `games_per_lp` simulated games each, starting from pure rock.
pub fn rps_harness(cfg: &OsfpConfig, lps: usize, games_per_lp: usize, seed: u64) -> RpsReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = OsfpState::new();
    let mut pool: Vec<[f64; 3]> = Vec::new();
    let mut learner = [1.0, 0.0, 0.0];
    let mut sum = [0.0; 3];
    let mut report = RpsReport { exploitability: Vec::new(), mixture: [0.0; 3], pool_size: 0, gate_added: Vec::new() };
    for lp in 0..lps {
        let (p_self, p_hist) = state.opponent_distribution(cfg);
        let mut q = learner.map(|x| x * p_self);
        for (w, h) in p_hist.iter().zip(&pool) {
            for a in 0..3 {
                q[a] += w * h[a];
            }
        }
        let mut next = [0.0; 3];
        next[best_response(&q)] = 1.0;
        learner = next;
        for a in 0..3 {
            sum[a] += learner[a];
        }

        for _ in 0..games_per_lp {
            if let Opponent::Historical(i) = state.sample_opponent(cfg, &mut rng) {
                let a = sample(&learner, &mut rng);
                let b = sample(&pool[i], &mut rng);
                state.record_result(i, RPS_PAYOFF[a][b] as i8).expect("index from sampler");
            }
        }
        let decision = state.end_of_lp_gate(cfg, PoolEntry { checkpoint: format!("rps-{lp}"), lp: lp as u64 });
        if decision.added() {
            pool.push(learner);
        }
        report.gate_added.push(decision.added());
        let n = (lp + 1) as f64;
        let mix = sum.map(|s| s / n);
        report.exploitability.push(exploitability(&mix));
        report.mixture = mix;
    }
    report.pool_size = pool.len();
    report
}
