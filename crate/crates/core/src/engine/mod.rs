//! MiniStone rules engine.
//!
//! A match runs through deck building (CB), where each seat drafts 30 cards
//! blind, and a turn-based battle (BT) that ends when a hero reaches 0 HP or
//! the half-turn cap forces a draw. Every transition is deterministic given
//! the seed, and states are plain values.

mod action;
mod card;
mod replay;
mod rules;
mod state;

use std::sync::Arc;

use thiserror::Error;

pub use action::{ActionId, ActionKind, ActionLayout};
pub use card::{
    CardId, CardKind, CardPool, CardSpec, EffectSpec, EffectVerb, Hero, HeroRestriction, Keywords, PoolChecksum,
    TargetClass, MINISTONE_V1, MINISTONE_V1_CHECKSUM,
};
pub use replay::{state_digest, Replay};
pub use state::{Attacker, GameState, MatchResult, MinionInstance, PendingSelection, PlayerState, Stage, Weapon};

pub const DECK_SIZE: usize = 30;
pub const HAND_SLOTS: usize = 10;
pub const BOARD_SLOTS: usize = 7;
pub const MAX_HERO_HP: i32 = 30;
pub const MAX_MANA: u8 = 10;
pub const HERO_POWER_COST: u8 = 2;
/// Ending half-turn number 120 forces a draw.
pub const HALF_TURN_CAP: u32 = 120;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid hero '{0}'")]
    InvalidHero(String),
    #[error("malformed card pool: {0}")]
    MalformedPool(String),
    #[error("pool checksum mismatch: expected {expected}, found {found}")]
    ChecksumMismatch { expected: PoolChecksum, found: PoolChecksum },
    #[error("match is over")]
    Terminal,
    #[error("illegal action {0}")]
    IllegalAction(ActionId),
    #[error("invalid deck: {0}")]
    InvalidDeck(String),
    #[error("malformed replay: {0}")]
    MalformedReplay(String),
}

/// Rules engine bound to one card pool.
#[derive(Debug, Clone)]
pub struct Engine {
    pool: Arc<CardPool>,
    layout: ActionLayout,
}

impl Engine {
    pub fn new(pool: Arc<CardPool>) -> Self {
        let layout = ActionLayout::new(pool.len());
        Engine { pool, layout }
    }

    pub fn ministone_v1() -> Self {
        Self::new(Arc::new(CardPool::ministone_v1()))
    }

    pub fn pool(&self) -> &CardPool {
        &self.pool
    }

    pub fn pool_arc(&self) -> &Arc<CardPool> {
        &self.pool
    }

    pub fn layout(&self) -> ActionLayout {
        self.layout
    }

    /// Check that a prebuilt deck is exactly 30 eligible cards within copy limits.
    pub fn validate_deck(&self, hero: Hero, deck: &[CardId]) -> Result<(), EngineError> {
        if deck.len() != DECK_SIZE {
            return Err(EngineError::InvalidDeck(format!("deck has {} cards, expected {DECK_SIZE}", deck.len())));
        }
        let mut counts = vec![0u8; self.pool.len()];
        for &id in deck {
            let card = self.pool.card(id).ok_or_else(|| EngineError::InvalidDeck(format!("unknown card {id}")))?;
            if !card.restriction.allows(hero) {
                return Err(EngineError::InvalidDeck(format!("{} is not available to {hero}", card.name)));
            }
            counts[id.index()] += 1;
            if counts[id.index()] > card.max_copies {
                return Err(EngineError::InvalidDeck(format!("{} exceeds {} copies", card.name, card.max_copies)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
