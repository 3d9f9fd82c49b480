use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::card::{CardId, Hero, PoolChecksum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Heroes are sampled outside the engine, so a live match never sits here.
    PickHero,
    Cb,
    Bt,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchResult {
    P0Win,
    P1Win,
    Draw,
}

impl MatchResult {
    pub fn winner(self) -> Option<usize> {
        match self {
            MatchResult::P0Win => Some(0),
            MatchResult::P1Win => Some(1),
            MatchResult::Draw => None,
        }
    }

    pub fn win_for(player: usize) -> Self {
        if player == 0 {
            MatchResult::P0Win
        } else {
            MatchResult::P1Win
        }
    }

    /// Terminal reward for each seat.
    pub fn rewards(self) -> [i8; 2] {
        match self {
            MatchResult::P0Win => [1, -1],
            MatchResult::P1Win => [-1, 1],
            MatchResult::Draw => [0, 0],
        }
    }

    /// Payoff from `player`'s perspective: +1, -1 or 0.
    pub fn payoff(self, player: usize) -> i8 {
        self.rewards()[player]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MinionInstance {
    pub spec_id: CardId,
    pub current_attack: i32,
    pub current_health: i32,
    pub max_health: i32,
    pub can_attack_this_turn: bool,
    pub has_taunt: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Weapon {
    pub spec_id: CardId,
    pub attack: i32,
    pub durability: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlayerState {
    pub hero: Hero,
    /// Cards in draft order; survives the BT shuffle so cheat views can use it.
    pub picks: Vec<CardId>,
    /// Draw pile, top card last.
    pub deck: Vec<CardId>,
    pub hand: Vec<CardId>,
    pub board: Vec<MinionInstance>,
    pub graveyard: Vec<CardId>,
    pub hero_hp: i32,
    pub armor: i32,
    pub weapon: Option<Weapon>,
    pub mana_current: u8,
    pub mana_cap: u8,
    pub fatigue_counter: u32,
    pub coin_flag: bool,
    pub turns_taken: u32,
    pub hero_power_used: bool,
    pub hero_attacked: bool,
    /// Deck supplied up front; this player skips CB.
    pub prebuilt: bool,
}

impl PlayerState {
    pub(crate) fn new(hero: Hero) -> Self {
        PlayerState {
            hero,
            picks: Vec::new(),
            deck: Vec::new(),
            hand: Vec::new(),
            board: Vec::new(),
            graveyard: Vec::new(),
            hero_hp: super::MAX_HERO_HP,
            armor: 0,
            weapon: None,
            mana_current: 0,
            mana_cap: 0,
            fatigue_counter: 0,
            coin_flag: false,
            turns_taken: 0,
            hero_power_used: false,
            hero_attacked: false,
            prebuilt: false,
        }
    }

    pub fn has_taunt(&self) -> bool {
        self.board.iter().any(|m| m.has_taunt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attacker {
    Minion(usize),
    Hero,
}

/// The type-card chosen by the first of two BT operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendingSelection {
    Play { hand_slot: usize },
    Attack(Attacker),
    HeroPower,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pub pool_checksum: PoolChecksum,
    pub seed: u64,
    pub stage: Stage,
    pub players: [PlayerState; 2],
    /// Half-turns started since BT began (1 on the first BT turn).
    pub turn_number: u32,
    pub active_player: u8,
    pub pending_selection: Option<PendingSelection>,
    pub rng_state: ChaCha8Rng,
    pub outcome: Option<MatchResult>,
}

impl GameState {
    pub fn active(&self) -> usize {
        self.active_player as usize
    }

    /// Seat that must act next, if any.
    pub fn to_move(&self) -> Option<usize> {
        match self.stage {
            Stage::Cb | Stage::Bt => Some(self.active()),
            _ => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.stage == Stage::Terminal
    }

    pub fn player(&self, seat: usize) -> &PlayerState {
        &self.players[seat]
    }

    pub fn heroes(&self) -> [Hero; 2] {
        [self.players[0].hero, self.players[1].hero]
    }
}
