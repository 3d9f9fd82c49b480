//! Censored per-seat views. Only the fields below ever leave the service, so
//! the type definitions double as the whitelist.

use serde::{Deserialize, Serialize};

use crate::engine::{ActionId, ActionKind, CardId, Engine, GameState, Hero, MatchResult, PendingSelection, Stage};
use crate::obsact::{decision_type, DecisionType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardView {
    pub id: CardId,
    pub name: String,
    pub cost: u8,
    pub attack: u8,
    pub health: u8,
    pub kind: String,
}

impl CardView {
    pub fn new(engine: &Engine, id: CardId) -> Self {
        let pool = engine.pool();
        match pool.card(id) {
            Some(c) => CardView {
                id,
                name: c.name.clone(),
                cost: c.cost,
                attack: c.attack,
                health: c.health,
                kind: format!("{:?}", c.kind).to_lowercase(),
            },
            None => CardView {
                id,
                name: pool.card_name(id).to_string(),
                cost: 0,
                attack: 0,
                health: 0,
                kind: "spell".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinionView {
    pub card: CardId,
    pub name: String,
    pub attack: i32,
    pub health: i32,
    pub max_health: i32,
    pub can_attack: bool,
    pub taunt: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeaponView {
    pub card: CardId,
    pub attack: i32,
    pub durability: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeroPanel {
    /// Hidden for the opponent until battle starts.
    pub hero: Option<Hero>,
    pub hp: i32,
    pub armor: i32,
    pub weapon: Option<WeaponView>,
    pub mana: u8,
    pub mana_cap: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MyView {
    pub panel: HeroPanel,
    pub hand: Vec<CardView>,
    pub board: Vec<MinionView>,
    pub deck_size: usize,
    /// Own picks in draft order.
    pub picks: Vec<CardId>,
    pub hero_power_used: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpponentView {
    pub panel: HeroPanel,
    pub hand_size: usize,
    pub deck_size: usize,
    pub board: Vec<MinionView>,
    /// First `cheat_n` opponent picks; empty outside cheat sessions.
    pub visible_picks: Vec<CardId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegalAction {
    pub id: ActionId,
    pub label: String,
}

/// One complete play: the first operation and, when needed, its target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seat: usize,
    pub actions: Vec<ActionId>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewOutcome {
    Win,
    Loss,
    Draw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub session_id: String,
    /// Bumped on every state change; long-poll clients wait on it.
    pub version: u64,
    pub stage: String,
    pub decision_type: Option<DecisionType>,
    pub seat: usize,
    /// The other side is to move.
    pub waiting: bool,
    pub turn_number: u32,
    pub me: MyView,
    pub opponent: OpponentView,
    /// Label of the first operation awaiting a target.
    pub pending: Option<String>,
    /// Empty unless this seat is to move.
    pub legal_actions: Vec<LegalAction>,
    /// The other side's most recent turn.
    pub transcript: Vec<TranscriptEntry>,
    pub outcome: Option<ViewOutcome>,
    pub cheat_n: u8,
}

fn minions(engine: &Engine, board: &[crate::engine::MinionInstance]) -> Vec<MinionView> {
    board
        .iter()
        .map(|m| MinionView {
            card: m.spec_id,
            name: engine.pool().card_name(m.spec_id).to_string(),
            attack: m.current_attack,
            health: m.current_health,
            max_health: m.max_health,
            can_attack: m.can_attack_this_turn,
            taunt: m.has_taunt,
        })
        .collect()
}

fn panel(state: &GameState, seat: usize, show_hero: bool) -> HeroPanel {
    let p = &state.players[seat];
    HeroPanel {
        hero: show_hero.then_some(p.hero),
        hp: p.hero_hp,
        armor: p.armor,
        weapon: p.weapon.map(|w| WeaponView { card: w.spec_id, attack: w.attack, durability: w.durability }),
        mana: p.mana_current,
        mana_cap: p.mana_cap,
    }
}

pub(crate) struct ViewInput<'a> {
    pub session_id: &'a str,
    pub version: u64,
    pub seat: usize,
    pub cheat_n: u8,
    pub transcript: &'a [TranscriptEntry],
}

pub(crate) fn build_view(engine: &Engine, state: &GameState, v: ViewInput<'_>) -> View {
    let seat = v.seat;
    let me = &state.players[seat];
    let opp = &state.players[1 - seat];
    let my_turn = state.to_move() == Some(seat);
    let legal_actions = if my_turn {
        engine
            .legal_actions(state)
            .unwrap_or_default()
            .into_iter()
            .map(|id| LegalAction { id, label: describe(engine, state, id) })
            .collect()
    } else {
        Vec::new()
    };
    let pending = state.pending_selection.filter(|_| my_turn).map(|p| match p {
        PendingSelection::Play { hand_slot } => format!("play {}", engine.pool().card_name(me.hand[hand_slot])),
        PendingSelection::Attack(_) => "attack".into(),
        PendingSelection::HeroPower => "hero power".into(),
    });
    let battle = state.stage != Stage::Cb && state.stage != Stage::PickHero;
    View {
        session_id: v.session_id.to_string(),
        version: v.version,
        stage: match state.stage {
            Stage::PickHero => "pick_hero",
            Stage::Cb => "cb",
            Stage::Bt => "bt",
            Stage::Terminal => "terminal",
        }
        .into(),
        decision_type: state.to_move().filter(|&s| s == seat).map(|_| decision_type(engine, state)),
        seat,
        waiting: state.to_move().is_some_and(|s| s != seat),
        turn_number: state.turn_number,
        me: MyView {
            panel: panel(state, seat, true),
            hand: me.hand.iter().map(|&c| CardView::new(engine, c)).collect(),
            board: minions(engine, &me.board),
            deck_size: me.deck.len(),
            picks: me.picks.clone(),
            hero_power_used: me.hero_power_used,
        },
        opponent: OpponentView {
            panel: panel(state, 1 - seat, battle),
            hand_size: opp.hand.len(),
            deck_size: opp.deck.len(),
            board: minions(engine, &opp.board),
            visible_picks: opp.picks.iter().take(v.cheat_n as usize).copied().collect(),
        },
        pending,
        legal_actions,
        transcript: v.transcript.to_vec(),
        outcome: state.outcome.map(|o| match o {
            MatchResult::Draw => ViewOutcome::Draw,
            o if o.winner() == Some(seat) => ViewOutcome::Win,
            _ => ViewOutcome::Loss,
        }),
        cheat_n: v.cheat_n,
    }
}

/// Text for `action` as taken by the seat to move in `state`.
pub fn describe(engine: &Engine, state: &GameState, action: ActionId) -> String {
    let pool = engine.pool();
    let Some(seat) = state.to_move() else { return engine.layout().label(action) };
    let me = &state.players[seat];
    let opp = &state.players[1 - seat];
    let minion = |board: &[crate::engine::MinionInstance], s: usize| {
        board.get(s).map_or_else(|| format!("slot {s}"), |m| pool.card_name(m.spec_id).to_string())
    };
    match engine.layout().decode(action) {
        Some(ActionKind::Pick(c)) => format!("pick {}", pool.card_name(c)),
        Some(ActionKind::Hand(s)) => {
            me.hand.get(s).map_or_else(|| format!("hand slot {s}"), |&c| format!("play {}", pool.card_name(c)))
        }
        Some(ActionKind::MyBoard(s)) => format!("attack with {}", minion(&me.board, s)),
        Some(ActionKind::HeroAttack) => "attack with hero".into(),
        Some(ActionKind::TargetMyHero) => "on own hero".into(),
        Some(ActionKind::TargetOppHero) => "on enemy hero".into(),
        Some(ActionKind::TargetMyBoard(s)) => format!("on own {}", minion(&me.board, s)),
        Some(ActionKind::TargetOppBoard(s)) => format!("on enemy {}", minion(&opp.board, s)),
        _ => engine.layout().label(action),
    }
}
