//! Optimistic smooth fictitious play: learning periods, the historical pool,
//! payoff accumulators and the gate, plus per-match schedulers.

mod actor;
mod rps;
mod train;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Hero, DECK_SIZE};
use crate::learner::LearnerError;
use crate::obsact::CheatAssignment;
use crate::pipeline::PipelineError;
use crate::policy::PolicyError;

pub use actor::{run_games, ActorConfig, FinishedGame, GameEvent, GameJob, SeatAgent, SeatPlan};
pub use rps::{exploitability, rps_harness, RpsReport, RPS_PAYOFF};
pub use train::{plan_game, run_training, InstanceState, InstanceSummary, RunState, TrainConfig, TrainSummary};

/// Random-CB counts and their probabilities.
pub const RANDOM_CB_CHOICES: [(u8, f64); 4] = [(0, 0.5), (1, 0.25), (2, 0.125), (4, 0.125)];

#[derive(Debug, Error)]
pub enum OsfpError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("historical index {index} out of range ({len} entries)")]
    Index { index: usize, len: usize },
    #[error("state file: {0}")]
    State(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsfpConfig {
    /// Self-play probability.
    pub p: f64,
    /// Gate threshold on every historical winrate.
    pub xi: f64,
    /// Forced add once this many LPs passed without one.
    pub max_lp_count: u32,
    /// Environment steps consumed by the learner per LP.
    pub samples_per_lp: u64,
    /// Smoothing constant of the opponent sampler.
    pub sampler_lambda: f64,
    pub hero_isolation: bool,
    pub cheat: bool,
}

impl Default for OsfpConfig {
    fn default() -> Self {
        OsfpConfig {
            p: 0.6,
            xi: 0.55,
            max_lp_count: 6,
            samples_per_lp: 200_000,
            sampler_lambda: 0.1,
            hero_isolation: false,
            cheat: false,
        }
    }
}

impl OsfpConfig {
    pub fn validate(&self) -> Result<(), OsfpError> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(OsfpError::Config("p must lie in (0, 1)".into()));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(OsfpError::Config("xi must lie in (0, 1)".into()));
        }
        if self.max_lp_count == 0 || self.samples_per_lp == 0 {
            return Err(OsfpError::Config("max_lp_count and samples_per_lp must be positive".into()));
        }
        if !(self.sampler_lambda > 0.0) {
            return Err(OsfpError::Config("sampler lambda must be positive".into()));
        }
        Ok(())
    }
}

/// A frozen member of the historical pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    /// Checkpoint file name, content-addressed.
    pub checkpoint: String,
    /// LP at whose end the entry was added.
    pub lp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct OsfpState {
    pub pool: Vec<PoolEntry>,
    pub g: Vec<i64>,
    pub c: Vec<u64>,
    /// LPs since the last add.
    pub count: u32,
    pub lp_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Opponent {
    SelfPlay,
    Historical(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateDecision {
    Added { forced: bool },
    NotAdded,
}

impl GateDecision {
    pub fn added(self) -> bool {
        matches!(self, GateDecision::Added { .. })
    }
}

/// `((G + C) / 2 + 1) / (C + 2)`: winrate with one pseudo-win and one pseudo-loss.
pub fn smoothed_winrate(g: i64, c: u64) -> f64 {
    ((g as f64 + c as f64) / 2.0 + 1.0) / (c as f64 + 2.0)
}

/// `(G / C + 1) / 2`, with no games counting as an even record.
pub fn gate_winrate(g: i64, c: u64) -> f64 {
    if c == 0 {
        0.5
    } else {
        (g as f64 / c as f64 + 1.0) / 2.0
    }
}

impl OsfpState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&self) -> Result<(), OsfpError> {
        if self.g.len() != self.pool.len() || self.c.len() != self.pool.len() {
            return Err(OsfpError::State("payoff table length differs from pool".into()));
        }
        if self.g.iter().zip(&self.c).any(|(g, c)| g.unsigned_abs() > *c) {
            return Err(OsfpError::State("|G| exceeds C".into()));
        }
        Ok(())
    }

    /// Normalized sampler weights `f(i) ∝ 1 - winrate_i + lambda`.
    pub fn opponent_weights(&self, lambda: f64) -> Vec<f64> {
        let raw: Vec<f64> = self.g.iter().zip(&self.c).map(|(&g, &c)| 1.0 - smoothed_winrate(g, c) + lambda).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// Probability of self-play followed by each historical entry's probability.
    pub fn opponent_distribution(&self, cfg: &OsfpConfig) -> (f64, Vec<f64>) {
        if self.pool.is_empty() {
            return (1.0, Vec::new());
        }
        let w = self.opponent_weights(cfg.sampler_lambda);
        (cfg.p, w.into_iter().map(|x| x * (1.0 - cfg.p)).collect())
    }

    pub fn sample_opponent<R: Rng + ?Sized>(&self, cfg: &OsfpConfig, rng: &mut R) -> Opponent {
        if self.pool.is_empty() || rng.random_bool(cfg.p) {
            return Opponent::SelfPlay;
        }
        let w = self.opponent_weights(cfg.sampler_lambda);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, x) in w.iter().enumerate() {
            acc += x;
            if u < acc {
                return Opponent::Historical(i);
            }
        }
        Opponent::Historical(w.len() - 1)
    }

    /// Record a result from the learner's side: +1 win, -1 loss, 0 draw.
    pub fn record_result(&mut self, index: usize, g: i8) -> Result<(), OsfpError> {
        if index >= self.pool.len() {
            return Err(OsfpError::Index { index, len: self.pool.len() });
        }
        if !(-1..=1).contains(&g) {
            return Err(OsfpError::Config(format!("result {g} not in -1..=1")));
        }
        self.g[index] += g as i64;
        self.c[index] += 1;
        Ok(())
    }

    pub fn gate_decision(&self, cfg: &OsfpConfig) -> GateDecision {
        let beats_all = self.g.iter().zip(&self.c).all(|(&g, &c)| gate_winrate(g, c) > cfg.xi);
        if beats_all {
            GateDecision::Added { forced: false }
        } else if self.count > cfg.max_lp_count {
            GateDecision::Added { forced: true }
        } else {
            GateDecision::NotAdded
        }
    }

    /// Close the LP: apply the gate (adding `candidate` on success) and reset G/C.
    pub fn end_of_lp_gate(&mut self, cfg: &OsfpConfig, candidate: PoolEntry) -> GateDecision {
        let decision = self.gate_decision(cfg);
        self.apply_gate(decision, candidate);
        decision
    }

    /// Apply a decision taken earlier with [`OsfpState::gate_decision`].
    pub fn apply_gate(&mut self, decision: GateDecision, candidate: PoolEntry) {
        if decision.added() {
            self.pool.push(candidate);
            self.count = 0;
        } else {
            self.count += 1;
        }
        self.g = vec![0; self.pool.len()];
        self.c = vec![0; self.pool.len()];
        self.lp_index += 1;
    }

    pub fn save(&self, path: &Path) -> Result<(), OsfpError> {
        write_atomic(path, serde_json::to_string_pretty(self).expect("state serializes").as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, OsfpError> {
        let s: OsfpState =
            serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| OsfpError::State(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    /// Structured text table of the current payoffs.
    pub fn payoff_table(&self) -> String {
        let mut out = format!("lp {}\nentries {}\n", self.lp_index, self.pool.len());
        for (i, e) in self.pool.iter().enumerate() {
            out.push_str(&format!(
                "{i} {} G={} C={} winrate={:.4}\n",
                e.checkpoint,
                self.g[i],
                self.c[i],
                gate_winrate(self.g[i], self.c[i])
            ));
        }
        out
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), OsfpError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Per-match draws: heroes, random-CB counts and cheat prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSetup {
    /// Learner side first.
    pub heroes: [Hero; 2],
    pub random_cb: [u8; 2],
    pub cheat: CheatAssignment,
}

pub fn sample_hero<R: Rng + ?Sized>(rng: &mut R) -> Hero {
    Hero::ALL[rng.random_range(0..3)]
}

pub fn sample_random_cb<R: Rng + ?Sized>(rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (n, p) in RANDOM_CB_CHOICES {
        acc += p;
        if u < acc {
            return n;
        }
    }
    RANDOM_CB_CHOICES[RANDOM_CB_CHOICES.len() - 1].0
}

/// `n1, n2 ~ U{0..30}`, then `n2 = min(n1, n2)`.
pub fn sample_cheat<R: Rng + ?Sized>(rng: &mut R) -> CheatAssignment {
    let n1 = rng.random_range(0..=DECK_SIZE as u8);
    let n2 = rng.random_range(0..=DECK_SIZE as u8);
    cheat_from_draw(n1, n2)
}

pub fn cheat_from_draw(n1: u8, n2: u8) -> CheatAssignment {
    CheatAssignment { n_target: n1, n_opponent: n1.min(n2) }
}

/// Evaluation-time cheat: one `n ~ U{0..30}` for the cheating side only.
pub fn sample_eval_cheat<R: Rng + ?Sized>(rng: &mut R) -> u8 {
    rng.random_range(0..=DECK_SIZE as u8)
}

pub fn assign_match_setup<R: Rng + ?Sized>(cheat: bool, rng: &mut R) -> MatchSetup {
    let heroes = [sample_hero(rng), sample_hero(rng)];
    let random_cb = [sample_random_cb(rng), sample_random_cb(rng)];
    let cheat = if cheat { sample_cheat(rng) } else { CheatAssignment::NONE };
    MatchSetup { heroes, random_cb, cheat }
}
