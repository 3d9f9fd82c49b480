use std::fmt;

use serde::{Deserialize, Serialize};

use super::card::CardId;
use super::{BOARD_SLOTS, HAND_SLOTS};

/// Index into the fixed-size action table shared by masks and policy logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u16);

impl ActionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Decoded meaning of an [`ActionId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "slot", rename_all = "snake_case")]
pub enum ActionKind {
    /// Draft the given pool card.
    Pick(CardId),
    /// First operation: select my hand card.
    Hand(usize),
    /// First operation: select my minion to attack with.
    MyBoard(usize),
    /// Present for layout parity; never legal as a first operation.
    OppBoard(usize),
    HeroPower,
    /// First operation: attack with my hero's weapon.
    HeroAttack,
    EndTurn,
    TargetMyHero,
    TargetOppHero,
    TargetMyBoard(usize),
    TargetOppBoard(usize),
}

/// Layout of the action table:
///
/// ```text
/// [0, P)            CB picks, one per pool card
/// [P, P+10)         hand slots
/// [P+10, P+17)      my board slots
/// [P+17, P+24)      opponent board slots (always masked as a first op)
/// P+24              hero power
/// P+25              hero attack
/// P+26              end turn
/// P+27              target: my hero
/// P+28              target: opponent hero
/// [P+29, P+36)      target: my board slots
/// [P+36, P+43)      target: opponent board slots
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionLayout {
    pool_size: usize,
}

const HAND: usize = 0;
const MY_BOARD: usize = HAND + HAND_SLOTS;
const OPP_BOARD: usize = MY_BOARD + BOARD_SLOTS;
const HERO_POWER: usize = OPP_BOARD + BOARD_SLOTS;
const HERO_ATTACK: usize = HERO_POWER + 1;
const END_TURN: usize = HERO_ATTACK + 1;
const T_MY_HERO: usize = END_TURN + 1;
const T_OPP_HERO: usize = T_MY_HERO + 1;
const T_MY_BOARD: usize = T_OPP_HERO + 1;
const T_OPP_BOARD: usize = T_MY_BOARD + BOARD_SLOTS;
const BT_SIZE: usize = T_OPP_BOARD + BOARD_SLOTS;
const TYPE_SIZE: usize = T_MY_HERO;

impl ActionLayout {
    pub fn new(pool_size: usize) -> Self {
        ActionLayout { pool_size }
    }

    pub fn size(&self) -> usize {
        self.pool_size + BT_SIZE
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn cb_range(&self) -> std::ops::Range<usize> {
        0..self.pool_size
    }

    /// Entries usable as the first BT operation.
    pub fn type_range(&self) -> std::ops::Range<usize> {
        self.pool_size..self.pool_size + TYPE_SIZE
    }

    /// Entries usable as the second BT operation.
    pub fn target_range(&self) -> std::ops::Range<usize> {
        self.pool_size + TYPE_SIZE..self.size()
    }

    /// Everything after the CB region.
    pub fn bt_range(&self) -> std::ops::Range<usize> {
        self.pool_size..self.size()
    }

    pub fn encode(&self, kind: ActionKind) -> ActionId {
        let p = self.pool_size;
        let idx = match kind {
            ActionKind::Pick(card) => card.index(),
            ActionKind::Hand(s) => p + HAND + s,
            ActionKind::MyBoard(s) => p + MY_BOARD + s,
            ActionKind::OppBoard(s) => p + OPP_BOARD + s,
            ActionKind::HeroPower => p + HERO_POWER,
            ActionKind::HeroAttack => p + HERO_ATTACK,
            ActionKind::EndTurn => p + END_TURN,
            ActionKind::TargetMyHero => p + T_MY_HERO,
            ActionKind::TargetOppHero => p + T_OPP_HERO,
            ActionKind::TargetMyBoard(s) => p + T_MY_BOARD + s,
            ActionKind::TargetOppBoard(s) => p + T_OPP_BOARD + s,
        };
        ActionId(idx as u16)
    }

    pub fn decode(&self, id: ActionId) -> Option<ActionKind> {
        let i = id.index();
        let p = self.pool_size;
        if i < p {
            return Some(ActionKind::Pick(CardId(i as u16)));
        }
        let j = i - p;
        Some(match j {
            _ if j < MY_BOARD => ActionKind::Hand(j - HAND),
            _ if j < OPP_BOARD => ActionKind::MyBoard(j - MY_BOARD),
            _ if j < HERO_POWER => ActionKind::OppBoard(j - OPP_BOARD),
            HERO_POWER => ActionKind::HeroPower,
            HERO_ATTACK => ActionKind::HeroAttack,
            END_TURN => ActionKind::EndTurn,
            T_MY_HERO => ActionKind::TargetMyHero,
            T_OPP_HERO => ActionKind::TargetOppHero,
            _ if j < T_OPP_BOARD => ActionKind::TargetMyBoard(j - T_MY_BOARD),
            _ if j < BT_SIZE => ActionKind::TargetOppBoard(j - T_OPP_BOARD),
            _ => return None,
        })
    }

    pub fn end_turn(&self) -> ActionId {
        self.encode(ActionKind::EndTurn)
    }

    /// Human-readable label, used by transcripts and the schema file.
    pub fn label(&self, id: ActionId) -> String {
        match self.decode(id) {
            Some(ActionKind::Pick(c)) => format!("pick card {c}"),
            Some(ActionKind::Hand(s)) => format!("hand[{s}]"),
            Some(ActionKind::MyBoard(s)) => format!("my board[{s}]"),
            Some(ActionKind::OppBoard(s)) => format!("opponent board[{s}]"),
            Some(ActionKind::HeroPower) => "hero power".into(),
            Some(ActionKind::HeroAttack) => "hero attack".into(),
            Some(ActionKind::EndTurn) => "end turn".into(),
            Some(ActionKind::TargetMyHero) => "target my hero".into(),
            Some(ActionKind::TargetOppHero) => "target opponent hero".into(),
            Some(ActionKind::TargetMyBoard(s)) => format!("target my board[{s}]"),
            Some(ActionKind::TargetOppBoard(s)) => format!("target opponent board[{s}]"),
            None => format!("invalid action {id}"),
        }
    }
}
