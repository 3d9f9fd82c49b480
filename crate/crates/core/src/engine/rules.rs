use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::action::{ActionId, ActionKind};
use super::card::{CardId, CardKind, EffectSpec, EffectVerb, Hero, TargetClass};
use super::state::{Attacker, GameState, MatchResult, MinionInstance, PendingSelection, PlayerState, Stage, Weapon};
use super::{
    Engine, EngineError, BOARD_SLOTS, DECK_SIZE, HALF_TURN_CAP, HAND_SLOTS, HERO_POWER_COST, MAX_HERO_HP, MAX_MANA,
};

/// A character reference relative to the active player.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    MyHero,
    OppHero,
    MyMinion(usize),
    OppMinion(usize),
}

impl Target {
    fn from_action(kind: ActionKind) -> Option<Target> {
        match kind {
            ActionKind::TargetMyHero => Some(Target::MyHero),
            ActionKind::TargetOppHero => Some(Target::OppHero),
            ActionKind::TargetMyBoard(s) => Some(Target::MyMinion(s)),
            ActionKind::TargetOppBoard(s) => Some(Target::OppMinion(s)),
            _ => None,
        }
    }

    fn action(self) -> ActionKind {
        match self {
            Target::MyHero => ActionKind::TargetMyHero,
            Target::OppHero => ActionKind::TargetOppHero,
            Target::MyMinion(s) => ActionKind::TargetMyBoard(s),
            Target::OppMinion(s) => ActionKind::TargetOppBoard(s),
        }
    }
}

impl Engine {
    /// Start a match in CB with both decks empty.
    pub fn new_match(&self, hero0: Hero, hero1: Hero, seed: u64) -> GameState {
        self.new_match_with_decks([hero0, hero1], [None, None], seed).expect("no prebuilt decks to validate")
    }

    /// Start a match where seats with a supplied deck skip deck building.
    pub fn new_match_with_decks(
        &self,
        heroes: [Hero; 2],
        decks: [Option<&[CardId]>; 2],
        seed: u64,
    ) -> Result<GameState, EngineError> {
        let mut players = [PlayerState::new(heroes[0]), PlayerState::new(heroes[1])];
        for seat in 0..2 {
            if let Some(deck) = decks[seat] {
                self.validate_deck(heroes[seat], deck)?;
                players[seat].picks = deck.to_vec();
                players[seat].deck = deck.to_vec();
                players[seat].prebuilt = true;
            }
        }
        let mut state = GameState {
            pool_checksum: self.pool().checksum(),
            seed,
            stage: Stage::Cb,
            players,
            turn_number: 0,
            active_player: 0,
            pending_selection: None,
            rng_state: ChaCha8Rng::seed_from_u64(seed),
            outcome: None,
        };
        match (state.players[0].prebuilt, state.players[1].prebuilt) {
            (true, true) => self.start_battle(&mut state),
            (true, false) => state.active_player = 1,
            _ => {}
        }
        Ok(state)
    }

    /// Legal actions for the seat to move, in ascending id order.
    pub fn legal_actions(&self, state: &GameState) -> Result<Vec<ActionId>, EngineError> {
        let mut out = Vec::with_capacity(64);
        self.collect_legal(state, &mut out)?;
        Ok(out)
    }

    /// Legality as a dense boolean vector over the action table.
    pub fn legal_mask(&self, state: &GameState) -> Result<Vec<bool>, EngineError> {
        let mut mask = vec![false; self.layout().size()];
        let mut out = Vec::with_capacity(64);
        self.collect_legal(state, &mut out)?;
        for a in out {
            mask[a.index()] = true;
        }
        Ok(mask)
    }

    pub fn is_legal(&self, state: &GameState, action: ActionId) -> bool {
        match self.legal_actions(state) {
            Ok(v) => v.binary_search(&action).is_ok(),
            Err(_) => false,
        }
    }

    pub fn outcome(&self, state: &GameState) -> Option<MatchResult> {
        state.outcome
    }

    /// Pure transition: returns the successor and each seat's terminal reward.
    pub fn apply_action(&self, state: &GameState, action: ActionId) -> Result<(GameState, [i8; 2]), EngineError> {
        let mut next = state.clone();
        let rewards = self.step(&mut next, action)?;
        Ok((next, rewards))
    }

    /// In-place transition. On error the state is left untouched.
    pub fn step(&self, state: &mut GameState, action: ActionId) -> Result<[i8; 2], EngineError> {
        if state.is_terminal() {
            return Err(EngineError::Terminal);
        }
        if !self.is_legal(state, action) {
            return Err(EngineError::IllegalAction(action));
        }
        let kind = self.layout().decode(action).ok_or(EngineError::IllegalAction(action))?;
        match state.stage {
            Stage::Cb => self.apply_pick(state, kind),
            Stage::Bt => match state.pending_selection.take() {
                None => self.apply_first_op(state, kind),
                Some(pending) => {
                    let target = Target::from_action(kind).ok_or(EngineError::IllegalAction(action))?;
                    self.apply_second_op(state, pending, target);
                }
            },
            _ => return Err(EngineError::Terminal),
        }
        Ok(state.outcome.map(|o| o.rewards()).unwrap_or([0, 0]))
    }

    fn collect_legal(&self, state: &GameState, out: &mut Vec<ActionId>) -> Result<(), EngineError> {
        let layout = self.layout();
        match state.stage {
            Stage::Cb => {
                let me = &state.players[state.active()];
                let mut counts = vec![0u8; self.pool().len()];
                for id in &me.picks {
                    counts[id.index()] += 1;
                }
                for card in self.pool().eligible(me.hero) {
                    if counts[card.id.index()] < card.max_copies {
                        out.push(layout.encode(ActionKind::Pick(card.id)));
                    }
                }
            }
            Stage::Bt => match state.pending_selection {
                None => {
                    let me = &state.players[state.active()];
                    for slot in 0..me.hand.len() {
                        if self.hand_playable(state, slot) {
                            out.push(layout.encode(ActionKind::Hand(slot)));
                        }
                    }
                    for (slot, m) in me.board.iter().enumerate() {
                        if m.can_attack_this_turn && m.current_attack > 0 {
                            out.push(layout.encode(ActionKind::MyBoard(slot)));
                        }
                    }
                    if !me.hero_power_used && me.mana_current >= HERO_POWER_COST {
                        out.push(layout.encode(ActionKind::HeroPower));
                    }
                    if me.weapon.is_some() && !me.hero_attacked {
                        out.push(layout.encode(ActionKind::HeroAttack));
                    }
                    out.push(layout.end_turn());
                }
                Some(pending) => {
                    for t in self.pending_targets(state, pending) {
                        out.push(layout.encode(t.action()));
                    }
                }
            },
            Stage::PickHero | Stage::Terminal => return Err(EngineError::Terminal),
        }
        Ok(())
    }

    fn hand_playable(&self, state: &GameState, slot: usize) -> bool {
        let me = &state.players[state.active()];
        let id = me.hand[slot];
        if self.pool().is_coin(id) {
            return true;
        }
        let card = &self.pool().cards()[id.index()];
        if card.cost > me.mana_current {
            return false;
        }
        match card.kind {
            CardKind::Minion => me.board.len() < BOARD_SLOTS,
            CardKind::Weapon => true,
            CardKind::Spell => {
                !card.effect.target.needs_choice() || !self.class_targets(state, card.effect.target).is_empty()
            }
        }
    }

    fn class_targets(&self, state: &GameState, class: TargetClass) -> Vec<Target> {
        let me = &state.players[state.active()];
        let opp = &state.players[1 - state.active()];
        match class {
            TargetClass::AnyCharacter => {
                let mut v = vec![Target::MyHero, Target::OppHero];
                v.extend((0..me.board.len()).map(Target::MyMinion));
                v.extend((0..opp.board.len()).map(Target::OppMinion));
                v
            }
            TargetClass::FriendlyMinion => (0..me.board.len()).map(Target::MyMinion).collect(),
            TargetClass::EnemyHero => vec![Target::OppHero],
            TargetClass::None => Vec::new(),
        }
    }

    fn pending_targets(&self, state: &GameState, pending: PendingSelection) -> Vec<Target> {
        match pending {
            PendingSelection::Play { hand_slot } => {
                let id = state.players[state.active()].hand[hand_slot];
                self.class_targets(state, self.pool().cards()[id.index()].effect.target)
            }
            PendingSelection::HeroPower => self.class_targets(state, TargetClass::AnyCharacter),
            PendingSelection::Attack(_) => {
                let opp = &state.players[1 - state.active()];
                if opp.has_taunt() {
                    opp.board
                        .iter()
                        .enumerate()
                        .filter(|(_, m)| m.has_taunt)
                        .map(|(i, _)| Target::OppMinion(i))
                        .collect()
                } else {
                    let mut v = vec![Target::OppHero];
                    v.extend((0..opp.board.len()).map(Target::OppMinion));
                    v
                }
            }
        }
    }

    fn apply_pick(&self, state: &mut GameState, kind: ActionKind) {
        let ActionKind::Pick(card) = kind else { unreachable!("legality checked") };
        let seat = state.active();
        state.players[seat].picks.push(card);
        state.players[seat].deck.push(card);
        if state.players[seat].picks.len() == DECK_SIZE {
            let other = 1 - seat;
            if state.players[other].picks.len() < DECK_SIZE {
                state.active_player = other as u8;
            } else {
                self.start_battle(state);
            }
        }
    }

    fn start_battle(&self, state: &mut GameState) {
        state.stage = Stage::Bt;
        for seat in 0..2 {
            let mut deck = std::mem::take(&mut state.players[seat].deck);
            deck.shuffle(&mut state.rng_state);
            state.players[seat].deck = deck;
        }
        for _ in 0..3 {
            draw(&mut state.players[0]);
        }
        for _ in 0..4 {
            draw(&mut state.players[1]);
        }
        state.players[1].hand.push(self.pool().coin());
        state.players[1].coin_flag = true;
        state.active_player = 0;
        state.turn_number = 1;
        begin_turn(&mut state.players[0]);
        self.resolve_deaths(state);
    }

    fn apply_first_op(&self, state: &mut GameState, kind: ActionKind) {
        let seat = state.active();
        match kind {
            ActionKind::Hand(slot) => {
                let id = state.players[seat].hand[slot];
                if self.pool().is_coin(id) {
                    let me = &mut state.players[seat];
                    me.hand.remove(slot);
                    me.graveyard.push(id);
                    me.mana_cap = (me.mana_cap + 1).min(MAX_MANA);
                    me.mana_current = (me.mana_current + 1).min(me.mana_cap);
                    return;
                }
                let card = &self.pool().cards()[id.index()];
                let needs =
                    card.effect.target.needs_choice() && !self.class_targets(state, card.effect.target).is_empty();
                if needs {
                    state.pending_selection = Some(PendingSelection::Play { hand_slot: slot });
                } else {
                    self.play_card(state, slot, None);
                }
            }
            ActionKind::MyBoard(slot) => {
                state.pending_selection = Some(PendingSelection::Attack(Attacker::Minion(slot)));
            }
            ActionKind::HeroAttack => {
                state.pending_selection = Some(PendingSelection::Attack(Attacker::Hero));
            }
            ActionKind::HeroPower => {
                let hero = state.players[seat].hero;
                match hero {
                    Hero::Mage => state.pending_selection = Some(PendingSelection::HeroPower),
                    Hero::Hunter => {
                        pay_hero_power(&mut state.players[seat]);
                        damage_hero(&mut state.players[1 - seat], 2);
                        self.resolve_deaths(state);
                    }
                    Hero::Warrior => {
                        pay_hero_power(&mut state.players[seat]);
                        state.players[seat].armor += 2;
                    }
                }
            }
            ActionKind::EndTurn => self.end_turn(state),
            _ => unreachable!("legality checked"),
        }
    }

    fn apply_second_op(&self, state: &mut GameState, pending: PendingSelection, target: Target) {
        let seat = state.active();
        match pending {
            PendingSelection::Play { hand_slot } => self.play_card(state, hand_slot, Some(target)),
            PendingSelection::HeroPower => {
                pay_hero_power(&mut state.players[seat]);
                damage_target(state, target, 1);
                self.resolve_deaths(state);
            }
            PendingSelection::Attack(attacker) => {
                let (me, opp) = split_players(state, seat);
                let attack = match attacker {
                    Attacker::Minion(i) => {
                        me.board[i].can_attack_this_turn = false;
                        me.board[i].current_attack
                    }
                    Attacker::Hero => {
                        me.hero_attacked = true;
                        me.weapon.expect("hero attack needs a weapon").attack
                    }
                };
                let retaliation = match target {
                    Target::OppHero => {
                        damage_hero(opp, attack);
                        0
                    }
                    Target::OppMinion(j) => {
                        opp.board[j].current_health -= attack;
                        opp.board[j].current_attack
                    }
                    _ => unreachable!("attacks only target the enemy side"),
                };
                match attacker {
                    Attacker::Minion(i) => me.board[i].current_health -= retaliation,
                    Attacker::Hero => {
                        damage_hero(me, retaliation);
                        let weapon = me.weapon.as_mut().expect("weapon present");
                        weapon.durability -= 1;
                        if weapon.durability <= 0 {
                            let spent = me.weapon.take().expect("weapon present");
                            me.graveyard.push(spent.spec_id);
                        }
                    }
                }
                self.resolve_deaths(state);
            }
        }
    }

    fn play_card(&self, state: &mut GameState, slot: usize, target: Option<Target>) {
        let seat = state.active();
        let id = state.players[seat].hand.remove(slot);
        let card = self.pool().cards()[id.index()].clone();
        state.players[seat].mana_current -= card.cost;
        match card.kind {
            CardKind::Minion => {
                state.players[seat].board.push(MinionInstance {
                    spec_id: id,
                    current_attack: card.attack as i32,
                    current_health: card.health as i32,
                    max_health: card.health as i32,
                    can_attack_this_turn: card.keywords.charge,
                    has_taunt: card.keywords.taunt,
                });
                self.apply_effect(state, card.effect, target);
            }
            CardKind::Spell => {
                self.apply_effect(state, card.effect, target);
                state.players[seat].graveyard.push(id);
            }
            CardKind::Weapon => {
                let me = &mut state.players[seat];
                if let Some(old) = me.weapon.take() {
                    me.graveyard.push(old.spec_id);
                }
                me.weapon = Some(Weapon { spec_id: id, attack: card.attack as i32, durability: card.health as i32 });
            }
        }
        self.resolve_deaths(state);
    }

    fn apply_effect(&self, state: &mut GameState, effect: EffectSpec, target: Option<Target>) {
        let seat = state.active();
        let m = effect.magnitude as i32;
        let target = match effect.target {
            TargetClass::EnemyHero => Some(Target::OppHero),
            _ => target,
        };
        match effect.verb {
            EffectVerb::None => {}
            EffectVerb::Damage => {
                if let Some(t) = target {
                    damage_target(state, t, m);
                }
            }
            EffectVerb::AoeDamageEnemyMinions => {
                for minion in &mut state.players[1 - seat].board {
                    minion.current_health -= m;
                }
            }
            EffectVerb::Heal => match target {
                Some(Target::MyHero) => heal_hero(&mut state.players[seat], m),
                Some(Target::OppHero) => heal_hero(&mut state.players[1 - seat], m),
                Some(Target::MyMinion(i)) => heal_minion(&mut state.players[seat].board[i], m),
                Some(Target::OppMinion(i)) => heal_minion(&mut state.players[1 - seat].board[i], m),
                None => {}
            },
            EffectVerb::Draw => {
                for _ in 0..m {
                    draw(&mut state.players[seat]);
                }
            }
            EffectVerb::Buff => {
                if let Some(Target::MyMinion(i)) = target {
                    let minion = &mut state.players[seat].board[i];
                    minion.current_attack += m;
                    minion.current_health += m;
                    minion.max_health += m;
                }
            }
            EffectVerb::GainArmor => state.players[seat].armor += m,
        }
    }

    fn end_turn(&self, state: &mut GameState) {
        state.turn_number += 1;
        if state.turn_number > HALF_TURN_CAP {
            state.stage = Stage::Terminal;
            state.outcome = Some(MatchResult::Draw);
            return;
        }
        let next = 1 - state.active();
        state.active_player = next as u8;
        begin_turn(&mut state.players[next]);
        self.resolve_deaths(state);
    }

    /// Remove dead minions, then settle the match if a hero fell. When both
    /// heroes fall together, the non-active seat wins.
    pub(crate) fn resolve_deaths(&self, state: &mut GameState) {
        for player in &mut state.players {
            let mut i = 0;
            while i < player.board.len() {
                if player.board[i].current_health <= 0 {
                    let dead = player.board.remove(i);
                    player.graveyard.push(dead.spec_id);
                } else {
                    i += 1;
                }
            }
        }
        let dead = [state.players[0].hero_hp <= 0, state.players[1].hero_hp <= 0];
        let outcome = match dead {
            [false, false] => return,
            [true, false] => MatchResult::P1Win,
            [false, true] => MatchResult::P0Win,
            [true, true] => MatchResult::win_for(1 - state.active()),
        };
        state.stage = Stage::Terminal;
        state.pending_selection = None;
        state.outcome = Some(outcome);
    }

    /// Verify every structural invariant of a state; used by fuzz tests.
    pub fn check_invariants(&self, state: &GameState) -> Result<(), String> {
        if state.is_terminal() != state.outcome.is_some() {
            return Err("TERMINAL must coincide with an outcome".into());
        }
        if state.active_player > 1 {
            return Err("active player out of range".into());
        }
        if state.pool_checksum != self.pool().checksum() {
            return Err("state belongs to another pool".into());
        }
        let coin = self.pool().coin();
        for (seat, p) in state.players.iter().enumerate() {
            let ctx = |msg: String| format!("seat {seat}: {msg}");
            if p.board.len() > BOARD_SLOTS {
                return Err(ctx(format!("board has {} minions", p.board.len())));
            }
            if p.hand.len() > HAND_SLOTS {
                return Err(ctx(format!("hand has {} cards", p.hand.len())));
            }
            if p.mana_current > p.mana_cap || p.mana_cap > MAX_MANA {
                return Err(ctx(format!("mana {}/{}", p.mana_current, p.mana_cap)));
            }
            if !(0..=MAX_HERO_HP).contains(&p.hero_hp) || p.armor < 0 {
                return Err(ctx(format!("hp {} armor {}", p.hero_hp, p.armor)));
            }
            if p.picks.len() > DECK_SIZE {
                return Err(ctx("more than 30 picks".into()));
            }
            if let Some(w) = p.weapon {
                if w.durability < 1 {
                    return Err(ctx("broken weapon still equipped".into()));
                }
            }
            if !state.is_terminal() && p.board.iter().any(|m| m.current_health < 1) {
                return Err(ctx("dead minion left on board".into()));
            }
            if p.board.iter().any(|m| m.current_health > m.max_health) {
                return Err(ctx("minion above max health".into()));
            }
            match state.stage {
                Stage::Cb => {
                    if p.deck != p.picks || !p.hand.is_empty() || !p.board.is_empty() {
                        return Err(ctx("CB zones inconsistent".into()));
                    }
                }
                Stage::Bt | Stage::Terminal if p.picks.len() == DECK_SIZE => {
                    let mut zones: HashMap<CardId, i32> = HashMap::new();
                    let cards = p
                        .deck
                        .iter()
                        .chain(&p.hand)
                        .chain(&p.graveyard)
                        .copied()
                        .chain(p.board.iter().map(|m| m.spec_id))
                        .chain(p.weapon.map(|w| w.spec_id));
                    for id in cards {
                        *zones.entry(id).or_default() += 1;
                    }
                    for id in &p.picks {
                        *zones.entry(*id).or_default() -= 1;
                    }
                    if p.coin_flag {
                        *zones.entry(coin).or_default() -= 1;
                    }
                    if zones.values().any(|&v| v != 0) {
                        return Err(ctx("card conservation violated".into()));
                    }
                }
                Stage::Bt | Stage::Terminal => return Err(ctx("battle started with an incomplete deck".into())),
                Stage::PickHero => {}
            }
        }
        if state.stage == Stage::Bt {
            let me = &state.players[state.active()];
            match state.pending_selection {
                Some(PendingSelection::Play { hand_slot }) if hand_slot >= me.hand.len() => {
                    return Err("pending hand slot out of range".into())
                }
                Some(PendingSelection::Attack(Attacker::Minion(i))) if i >= me.board.len() => {
                    return Err("pending attacker out of range".into())
                }
                _ => {}
            }
        } else if state.pending_selection.is_some() {
            return Err("pending selection outside BT".into());
        }
        Ok(())
    }
}

fn split_players(state: &mut GameState, seat: usize) -> (&mut PlayerState, &mut PlayerState) {
    let [a, b] = &mut state.players;
    if seat == 0 {
        (a, b)
    } else {
        (b, a)
    }
}

fn pay_hero_power(p: &mut PlayerState) {
    p.mana_current -= HERO_POWER_COST;
    p.hero_power_used = true;
}

fn begin_turn(p: &mut PlayerState) {
    p.turns_taken += 1;
    p.mana_cap = (p.turns_taken.min(MAX_MANA as u32)) as u8;
    p.mana_current = p.mana_cap;
    p.hero_power_used = false;
    p.hero_attacked = false;
    for m in &mut p.board {
        m.can_attack_this_turn = true;
    }
    draw(p);
}

/// Draw one card: fatigue on an empty deck, burn on a full hand.
pub(crate) fn draw(p: &mut PlayerState) {
    match p.deck.pop() {
        None => {
            p.fatigue_counter += 1;
            let dmg = p.fatigue_counter as i32;
            damage_hero(p, dmg);
        }
        Some(card) if p.hand.len() >= HAND_SLOTS => p.graveyard.push(card),
        Some(card) => p.hand.push(card),
    }
}

fn damage_hero(p: &mut PlayerState, amount: i32) {
    let absorbed = amount.min(p.armor);
    p.armor -= absorbed;
    p.hero_hp = (p.hero_hp - (amount - absorbed)).max(0);
}

fn heal_hero(p: &mut PlayerState, amount: i32) {
    p.hero_hp = (p.hero_hp + amount).min(MAX_HERO_HP);
}

fn heal_minion(m: &mut MinionInstance, amount: i32) {
    m.current_health = (m.current_health + amount).min(m.max_health);
}

fn damage_target(state: &mut GameState, target: Target, amount: i32) {
    let seat = state.active();
    match target {
        Target::MyHero => damage_hero(&mut state.players[seat], amount),
        Target::OppHero => damage_hero(&mut state.players[1 - seat], amount),
        Target::MyMinion(i) => state.players[seat].board[i].current_health -= amount,
        Target::OppMinion(i) => state.players[1 - seat].board[i].current_health -= amount,
    }
}
