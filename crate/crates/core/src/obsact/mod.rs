//! Observation encoding and action masks.
//!
//! Every observation is a flat `f32` vector laid out as `[common | cb | bt]`
//! plus a handful of card-slot indices that the policy looks up in its card
//! embedding table. The layout is described by [`FeatureSchema`], which can be
//! dumped as text so other tools agree on offsets.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    Attacker, CardId, CardKind, Engine, GameState, Hero, PendingSelection, Stage, BOARD_SLOTS, DECK_SIZE,
    HALF_TURN_CAP, HAND_SLOTS, MAX_HERO_HP,
};

pub const HAND_FEATURES: usize = 9;
pub const MINION_FEATURES: usize = 6;
pub const PLAYER_FEATURES: usize = 12;
/// Hand slots, then my board, then the opponent board.
pub const CARD_SLOTS: usize = HAND_SLOTS + 2 * BOARD_SLOTS;
const PENDING_SOURCES: usize = HAND_SLOTS + BOARD_SLOTS + 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObsError {
    #[error("cannot encode a terminal state")]
    Terminal,
    #[error("cheat prefix {0} outside 0..=30")]
    CheatOutOfRange(usize),
    #[error("player {0} out of range")]
    BadPlayer(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionType {
    Construct,
    Select,
    MinionBattlecry,
    SpellCard,
    Attack,
    HeroPower,
    /// Part of the one-hot layout; end turn resolves at once, so it is never pending.
    EndTurn,
}

impl DecisionType {
    pub const ALL: [DecisionType; 7] = [
        DecisionType::Construct,
        DecisionType::Select,
        DecisionType::MinionBattlecry,
        DecisionType::SpellCard,
        DecisionType::Attack,
        DecisionType::HeroPower,
        DecisionType::EndTurn,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Visible opponent-deck prefix lengths for a match.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CheatAssignment {
    /// Prefix seen by the learner-side seat.
    pub n_target: u8,
    /// Prefix seen by the other seat; never larger than `n_target`.
    pub n_opponent: u8,
}

impl CheatAssignment {
    pub const NONE: CheatAssignment = CheatAssignment { n_target: 0, n_opponent: 0 };

    pub fn is_valid(&self) -> bool {
        self.n_opponent <= self.n_target && self.n_target as usize <= DECK_SIZE
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub offset: usize,
    pub width: usize,
}

/// Offsets of every named field in the feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub pool_size: usize,
    pub action_size: usize,
    pub fields: Vec<FieldSpec>,
    /// End of the common block.
    pub common_end: usize,
    /// End of the CB block.
    pub cb_end: usize,
    pub total: usize,
    /// Rows in the card embedding table: empty, pool cards, the Coin.
    pub card_vocab: usize,
}

impl FeatureSchema {
    pub fn new(pool_size: usize, action_size: usize) -> Self {
        let bt_actions = action_size - pool_size;
        let mut b = Builder::default();
        b.push("delta", 1);
        b.push("my_hero", 3);
        b.push("cheat_cards", pool_size);
        b.push("cheat_n", 1);
        let common_end = b.at;
        b.push("card_selected", pool_size);
        b.push("card_can_select", pool_size);
        b.push("pick_progress", 1);
        let cb_end = b.at;
        b.push("decision_type", DecisionType::ALL.len());
        b.push("oppo_hero", 3);
        b.push("my_deck", pool_size);
        b.push("my_hand", HAND_SLOTS * HAND_FEATURES);
        b.push("my_board", BOARD_SLOTS * MINION_FEATURES);
        b.push("oppo_board", BOARD_SLOTS * MINION_FEATURES);
        b.push("my_graveyard", pool_size + 1);
        b.push("oppo_graveyard", pool_size + 1);
        b.push("my_player", PLAYER_FEATURES);
        b.push("oppo_player", PLAYER_FEATURES);
        b.push("bt_action_mask", bt_actions);
        b.push("pending_source", PENDING_SOURCES);
        b.push("turn", 1);
        FeatureSchema {
            pool_size,
            action_size,
            total: b.at,
            fields: b.fields,
            common_end,
            cb_end,
            card_vocab: pool_size + 2,
        }
    }

    pub fn for_engine(engine: &Engine) -> Self {
        Self::new(engine.pool().len(), engine.layout().size())
    }

    pub fn field(&self, name: &str) -> &FieldSpec {
        self.fields.iter().find(|f| f.name == name).unwrap_or_else(|| panic!("no feature field '{name}'"))
    }

    pub fn range(&self, name: &str) -> std::ops::Range<usize> {
        let f = self.field(name);
        f.offset..f.offset + f.width
    }

    pub fn bt_width(&self) -> usize {
        self.total - self.cb_end
    }

    /// One line per field: `name offset width`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# feature schema: pool {} actions {} total {}",
            self.pool_size, self.action_size, self.total
        );
        let _ = writeln!(out, "# card slots: hand {HAND_SLOTS}, my board {BOARD_SLOTS}, oppo board {BOARD_SLOTS}");
        for f in &self.fields {
            let _ = writeln!(out, "{} {} {}", f.name, f.offset, f.width);
        }
        out
    }

    /// Embedding row for a card; 0 means an empty slot.
    pub fn card_index(&self, id: CardId) -> u16 {
        if id.index() >= self.pool_size {
            (self.pool_size + 1) as u16
        } else {
            id.0 + 1
        }
    }
}

#[derive(Default)]
struct Builder {
    fields: Vec<FieldSpec>,
    at: usize,
}

impl Builder {
    fn push(&mut self, name: &str, width: usize) {
        self.fields.push(FieldSpec { name: name.to_string(), offset: self.at, width });
        self.at += width;
    }
}

/// One seat's censored view of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBundle {
    /// 1 in CB, 0 in BT.
    pub delta: f32,
    pub my_hero: Hero,
    /// Only revealed once battle starts.
    pub oppo_hero: Option<Hero>,
    pub decision_type: DecisionType,
    pub cheat_n: u8,
    pub features: Vec<f32>,
    /// Embedding rows for hand, my board and oppo board slots.
    pub card_slots: Vec<u16>,
    /// Legality over the full action table; all zero when `player` is not to move.
    pub mask: Vec<bool>,
}

impl ObservationBundle {
    pub fn is_cb(&self) -> bool {
        self.delta == 1.0
    }
}

/// Stage-level decision kind for the seat to move.
pub fn decision_type(engine: &Engine, state: &GameState) -> DecisionType {
    match state.stage {
        Stage::Cb | Stage::PickHero => DecisionType::Construct,
        _ => match state.pending_selection {
            None => DecisionType::Select,
            Some(PendingSelection::HeroPower) => DecisionType::HeroPower,
            Some(PendingSelection::Attack(_)) => DecisionType::Attack,
            Some(PendingSelection::Play { hand_slot }) => {
                let id = state.players[state.active()].hand[hand_slot];
                match engine.pool().card(id).map(|c| c.kind) {
                    Some(CardKind::Minion) => DecisionType::MinionBattlecry,
                    _ => DecisionType::SpellCard,
                }
            }
        },
    }
}

/// Legality mask for `player`; zero everywhere unless that seat is to move.
pub fn action_mask(engine: &Engine, state: &GameState, player: usize) -> Vec<bool> {
    if state.to_move() != Some(player) {
        return vec![false; engine.layout().size()];
    }
    engine.legal_mask(state).unwrap_or_else(|_| vec![false; engine.layout().size()])
}

/// Stateless encoder bound to an engine and its schema.
#[derive(Debug, Clone)]
pub struct Encoder {
    engine: Engine,
    schema: FeatureSchema,
}

impl Encoder {
    pub fn new(engine: Engine) -> Self {
        let schema = FeatureSchema::for_engine(&engine);
        Encoder { engine, schema }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn encode(&self, state: &GameState, player: usize, cheat_n: usize) -> Result<ObservationBundle, ObsError> {
        if player > 1 {
            return Err(ObsError::BadPlayer(player));
        }
        if cheat_n > DECK_SIZE {
            return Err(ObsError::CheatOutOfRange(cheat_n));
        }
        if matches!(state.stage, Stage::Terminal | Stage::PickHero) {
            return Err(ObsError::Terminal);
        }
        let sc = &self.schema;
        let pool = self.engine.pool();
        let mut f = vec![0f32; sc.total];
        let me = &state.players[player];
        let opp = &state.players[1 - player];
        let is_cb = state.stage == Stage::Cb;
        let mask = action_mask(&self.engine, state, player);
        let dt = decision_type(&self.engine, state);

        f[sc.field("delta").offset] = if is_cb { 1.0 } else { 0.0 };
        f[sc.field("my_hero").offset + me.hero.index()] = 1.0;
        let cheat = sc.field("cheat_cards").offset;
        for id in opp.picks.iter().take(cheat_n) {
            f[cheat + id.index()] += 0.5;
        }
        f[sc.field("cheat_n").offset] = cheat_n as f32 / DECK_SIZE as f32;

        let mut card_slots = vec![0u16; CARD_SLOTS];
        if is_cb {
            let sel = sc.field("card_selected").offset;
            for id in &me.picks {
                f[sel + id.index()] += 1.0;
            }
            let can = sc.field("card_can_select").offset;
            for (i, &m) in mask[..sc.pool_size].iter().enumerate() {
                if m {
                    f[can + i] = 1.0;
                }
            }
            f[sc.field("pick_progress").offset] = me.picks.len() as f32 / DECK_SIZE as f32;
        } else {
            if state.active() == player {
                f[sc.field("decision_type").offset + dt.index()] = 1.0;
            }
            f[sc.field("oppo_hero").offset + opp.hero.index()] = 1.0;
            let deck = sc.field("my_deck").offset;
            for id in &me.deck {
                f[deck + id.index()] += 0.5;
            }
            let hand = sc.field("my_hand").offset;
            for (slot, &id) in me.hand.iter().enumerate() {
                let o = hand + slot * HAND_FEATURES;
                f[o] = 1.0;
                card_slots[slot] = sc.card_index(id);
                if let Some(card) = pool.card(id) {
                    f[o + 1] = card.cost as f32 / 10.0;
                    f[o + 2] = card.attack as f32 / 10.0;
                    f[o + 3] = card.health as f32 / 10.0;
                    f[o + 4 + card.kind as usize] = 1.0;
                    f[o + 7] = card.keywords.taunt as u8 as f32;
                    f[o + 8] = card.keywords.charge as u8 as f32;
                }
            }
            for (name, p, base) in [("my_board", me, HAND_SLOTS), ("oppo_board", opp, HAND_SLOTS + BOARD_SLOTS)] {
                let off = sc.field(name).offset;
                for (slot, m) in p.board.iter().enumerate() {
                    let o = off + slot * MINION_FEATURES;
                    f[o] = 1.0;
                    f[o + 1] = m.current_attack as f32 / 10.0;
                    f[o + 2] = m.current_health as f32 / 10.0;
                    f[o + 3] = m.max_health as f32 / 10.0;
                    f[o + 4] = m.can_attack_this_turn as u8 as f32;
                    f[o + 5] = m.has_taunt as u8 as f32;
                    card_slots[base + slot] = sc.card_index(m.spec_id);
                }
            }
            for (name, p) in [("my_graveyard", me), ("oppo_graveyard", opp)] {
                let off = sc.field(name).offset;
                for id in &p.graveyard {
                    f[off + id.index().min(sc.pool_size)] += 0.5;
                }
            }
            for (name, p) in [("my_player", me), ("oppo_player", opp)] {
                let o = sc.field(name).offset;
                let weapon = p.weapon.unwrap_or(crate::engine::Weapon { spec_id: CardId(0), attack: 0, durability: 0 });
                let scalars = [
                    p.hand.len() as f32 / HAND_SLOTS as f32,
                    p.board.len() as f32 / BOARD_SLOTS as f32,
                    p.mana_current as f32 / 10.0,
                    p.mana_cap as f32 / 10.0,
                    weapon.attack as f32 / 10.0,
                    weapon.durability as f32 / 5.0,
                    p.hero_hp as f32 / MAX_HERO_HP as f32,
                    p.armor as f32 / 10.0,
                    p.fatigue_counter as f32 / 10.0,
                    p.deck.len() as f32 / DECK_SIZE as f32,
                    p.hero_power_used as u8 as f32,
                    p.coin_flag as u8 as f32,
                ];
                f[o..o + PLAYER_FEATURES].copy_from_slice(&scalars);
            }
            let bt_mask = sc.field("bt_action_mask").offset;
            for (i, &m) in mask[sc.pool_size..].iter().enumerate() {
                if m {
                    f[bt_mask + i] = 1.0;
                }
            }
            if state.active() == player {
                let src = match state.pending_selection {
                    Some(PendingSelection::Play { hand_slot }) => Some(hand_slot),
                    Some(PendingSelection::Attack(Attacker::Minion(i))) => Some(HAND_SLOTS + i),
                    Some(PendingSelection::Attack(Attacker::Hero)) => Some(HAND_SLOTS + BOARD_SLOTS),
                    Some(PendingSelection::HeroPower) | None => None,
                };
                if let Some(i) = src {
                    f[sc.field("pending_source").offset + i] = 1.0;
                }
            }
            f[sc.field("turn").offset] = state.turn_number as f32 / HALF_TURN_CAP as f32;
        }

        Ok(ObservationBundle {
            delta: if is_cb { 1.0 } else { 0.0 },
            my_hero: me.hero,
            oppo_hero: if is_cb { None } else { Some(opp.hero) },
            decision_type: dt,
            cheat_n: cheat_n as u8,
            features: f,
            card_slots,
            mask,
        })
    }
}
