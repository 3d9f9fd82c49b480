use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::action::ActionId;
use super::card::{CardId, Hero, PoolChecksum};
use super::state::{GameState, MatchResult};
use super::{Engine, EngineError};

const MAGIC: &str = "ministone-replay v1";

/// Everything needed to re-simulate a match bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replay {
    pub pool_checksum: PoolChecksum,
    pub heroes: [Hero; 2],
    pub seed: u64,
    pub decks: [Option<Vec<CardId>>; 2],
    /// Visible opponent-deck prefix per seat, kept so censored views can be rebuilt.
    pub cheat: [u8; 2],
    pub actions: Vec<ActionId>,
    pub outcome: Option<MatchResult>,
}

impl Replay {
    pub fn new(pool_checksum: PoolChecksum, heroes: [Hero; 2], seed: u64) -> Self {
        Replay { pool_checksum, heroes, seed, decks: [None, None], cheat: [0, 0], actions: Vec::new(), outcome: None }
    }

    /// Header for a state freshly returned by `new_match*`.
    pub fn for_state(state: &GameState) -> Self {
        let mut r = Replay::new(state.pool_checksum, state.heroes(), state.seed);
        for seat in 0..2 {
            if state.players[seat].prebuilt {
                r.decks[seat] = Some(state.players[seat].picks.clone());
            }
        }
        r
    }

    pub fn initial_state(&self, engine: &Engine) -> Result<GameState, EngineError> {
        if self.pool_checksum != engine.pool().checksum() {
            return Err(EngineError::ChecksumMismatch {
                expected: self.pool_checksum,
                found: engine.pool().checksum(),
            });
        }
        engine.new_match_with_decks(self.heroes, [self.decks[0].as_deref(), self.decks[1].as_deref()], self.seed)
    }

    /// Re-run every action and return the final state.
    pub fn simulate(&self, engine: &Engine) -> Result<GameState, EngineError> {
        let mut state = self.initial_state(engine)?;
        for &a in &self.actions {
            engine.step(&mut state, a)?;
        }
        if let Some(expected) = self.outcome {
            if state.outcome != Some(expected) {
                return Err(EngineError::MalformedReplay(format!(
                    "recorded outcome {expected:?} but simulation gave {:?}",
                    state.outcome
                )));
            }
        }
        Ok(state)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "pool {}", self.pool_checksum);
        let _ = writeln!(out, "heroes {} {}", self.heroes[0], self.heroes[1]);
        let _ = writeln!(out, "seed {}", self.seed);
        for (seat, deck) in self.decks.iter().enumerate() {
            if let Some(deck) = deck {
                let ids: Vec<String> = deck.iter().map(|c| c.to_string()).collect();
                let _ = writeln!(out, "deck{seat} {}", ids.join(" "));
            }
        }
        let _ = writeln!(out, "cheat {} {}", self.cheat[0], self.cheat[1]);
        let _ = writeln!(out, "actions {}", self.actions.len());
        for a in &self.actions {
            let _ = writeln!(out, "{a}");
        }
        if let Some(o) = self.outcome {
            let tag = match o {
                MatchResult::P0Win => "p0_win",
                MatchResult::P1Win => "p1_win",
                MatchResult::Draw => "draw",
            };
            let _ = writeln!(out, "outcome {tag}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, EngineError> {
        let bad = |msg: &str| EngineError::MalformedReplay(msg.to_string());
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let mut at = 0;
        let mut next = |key: &str| -> Result<&str, EngineError> {
            let line = lines.get(at).ok_or_else(|| bad(&format!("missing '{key}' line")))?;
            at += 1;
            if key.is_empty() {
                return Ok(line);
            }
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| bad(&format!("expected '{key}', got '{line}'")))
        };
        if next("")? != MAGIC {
            return Err(bad("missing replay magic"));
        }
        let pool_checksum: PoolChecksum = next("pool")?.parse()?;
        let hs: Vec<&str> = next("heroes")?.split_whitespace().collect();
        if hs.len() != 2 {
            return Err(bad("heroes line needs two heroes"));
        }
        let heroes = [hs[0].parse()?, hs[1].parse()?];
        let seed = next("seed")?.parse().map_err(|_| bad("bad seed"))?;
        let mut replay = Replay::new(pool_checksum, heroes, seed);

        let mut line = next("")?;
        for (seat, key) in ["deck0 ", "deck1 "].iter().enumerate() {
            if let Some(ids) = line.strip_prefix(key) {
                let deck = ids
                    .split_whitespace()
                    .map(|s| s.parse::<u16>().map(CardId))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad("bad deck card id"))?;
                replay.decks[seat] = Some(deck);
                line = next("")?;
            }
        }
        let cheat: Vec<u8> = line
            .strip_prefix("cheat ")
            .ok_or_else(|| bad("expected 'cheat'"))?
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad("bad cheat counts"))?;
        if cheat.len() != 2 || cheat.iter().any(|&n| n > 30) {
            return Err(bad("cheat needs two counts in 0..=30"));
        }
        replay.cheat = [cheat[0], cheat[1]];
        let count: usize = next("actions")?.parse().map_err(|_| bad("bad action count"))?;
        for _ in 0..count {
            let id = next("")?.parse::<u16>().map_err(|_| bad("bad action id"))?;
            replay.actions.push(ActionId(id));
        }
        if let Ok(line) = next("") {
            replay.outcome = Some(match line {
                "outcome p0_win" => MatchResult::P0Win,
                "outcome p1_win" => MatchResult::P1Win,
                "outcome draw" => MatchResult::Draw,
                other => return Err(bad(&format!("unexpected line '{other}'"))),
            });
            if next("").is_ok() {
                return Err(bad("trailing data after outcome"));
            }
        }
        Ok(replay)
    }
}

/// SHA-256 of the state's JSON serialization, for bit-exact comparisons.
pub fn state_digest(state: &GameState) -> [u8; 32] {
    let json = serde_json::to_vec(state).expect("state serializes");
    Sha256::digest(&json).into()
}
