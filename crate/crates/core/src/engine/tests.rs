use proptest::prelude::*;

use super::rules::draw;
use super::*;
use crate::testkit::{self, common_deck};

fn engine() -> Engine {
    Engine::ministone_v1()
}

fn battle(e: &Engine, h0: Hero, h1: Hero, seed: u64) -> GameState {
    testkit::battle(e, [h0, h1], seed)
}

fn minion(e: &Engine, id: u16) -> MinionInstance {
    let c = e.pool().card(CardId(id)).unwrap();
    MinionInstance {
        spec_id: CardId(id),
        current_attack: c.attack as i32,
        current_health: c.health as i32,
        max_health: c.health as i32,
        can_attack_this_turn: true,
        has_taunt: c.keywords.taunt,
    }
}

fn act(e: &Engine, s: &mut GameState, kind: ActionKind) -> [i8; 2] {
    e.step(s, e.layout().encode(kind)).unwrap()
}

fn kinds(e: &Engine, s: &GameState) -> Vec<ActionKind> {
    e.legal_actions(s).unwrap().into_iter().map(|a| e.layout().decode(a).unwrap()).collect()
}

/// Clears the zones that matter for hand-built fixtures. Cards removed here
/// break conservation, so fixtures built this way skip the invariant checker.
fn clear_table(s: &mut GameState) {
    for p in &mut s.players {
        p.hand.clear();
        p.board.clear();
    }
}

fn random_playout(e: &Engine, heroes: [Hero; 2], seed: u64, check: bool) -> (GameState, Vec<ActionId>) {
    let p = testkit::random_playout(e, heroes, seed, check);
    assert_eq!(p.violations, Vec::<String>::new());
    assert!(!p.reward_sum_nonzero);
    (p.final_state, p.actions)
}

#[test]
fn new_match_starts_in_cb() {
    let e = engine();
    let s = e.new_match(Hero::Mage, Hero::Mage, 42);
    assert_eq!(s.stage, Stage::Cb);
    for p in &s.players {
        assert!(p.deck.is_empty() && p.picks.is_empty());
        assert_eq!(p.hero_hp, 30);
    }
    assert_eq!(e.outcome(&s), None);
    e.check_invariants(&s).unwrap();
}

#[test]
fn new_match_is_deterministic() {
    let e = engine();
    let a = e.new_match(Hero::Hunter, Hero::Warrior, 7);
    let b = e.new_match(Hero::Hunter, Hero::Warrior, 7);
    assert_eq!(a, b);
    assert_eq!(state_digest(&a), state_digest(&b));
}

#[test]
fn seeds_only_change_the_rng_stream() {
    let e = engine();
    let a = e.new_match(Hero::Mage, Hero::Mage, 42);
    let b = e.new_match(Hero::Mage, Hero::Mage, 43);
    let strip = |s: &GameState| {
        let mut v = serde_json::to_value(s).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("rng_state");
        obj.remove("seed");
        v
    };
    assert_ne!(a.rng_state, b.rng_state);
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn copy_limit_removes_pick() {
    let e = engine();
    let mut s = e.new_match(Hero::Mage, Hero::Hunter, 1);
    let five = e.layout().encode(ActionKind::Pick(CardId(5)));
    assert!(e.legal_actions(&s).unwrap().contains(&five));
    e.step(&mut s, five).unwrap();
    assert!(e.legal_actions(&s).unwrap().contains(&five));
    e.step(&mut s, five).unwrap();
    assert!(!e.legal_actions(&s).unwrap().contains(&five));
}

#[test]
fn cb_offers_only_hero_eligible_cards() {
    let e = engine();
    let s = e.new_match(Hero::Warrior, Hero::Mage, 1);
    let legal = e.legal_actions(&s).unwrap();
    assert_eq!(legal.len(), 56);
    assert!(legal.iter().all(|a| {
        let ActionKind::Pick(c) = e.layout().decode(*a).unwrap() else { return false };
        e.pool().card(c).unwrap().restriction.allows(Hero::Warrior)
    }));
}

#[test]
fn cb_is_sequential_then_bt_deals_opening_hands() {
    let e = engine();
    let mut s = e.new_match(Hero::Mage, Hero::Hunter, 9);
    for i in 0..60 {
        assert_eq!(s.active(), usize::from(i >= 30));
        let a = e.legal_actions(&s).unwrap()[0];
        e.step(&mut s, a).unwrap();
    }
    assert_eq!(s.stage, Stage::Bt);
    assert_eq!(s.active(), 0);
    assert_eq!(s.turn_number, 1);
    // p0: 3 opening cards + turn draw; p1: 4 + Coin
    assert_eq!(s.players[0].hand.len(), 4);
    assert_eq!(s.players[1].hand.len(), 5);
    assert!(s.players[1].hand.contains(&e.pool().coin()));
    assert_eq!(s.players[0].mana_cap, 1);
    assert_eq!(s.players[0].deck.len(), 26);
    assert_eq!(s.players[1].deck.len(), 26);
    e.check_invariants(&s).unwrap();
}

#[test]
fn prebuilt_deck_skips_that_seats_cb() {
    let e = engine();
    let deck = common_deck();
    let s = e.new_match_with_decks([Hero::Mage, Hero::Mage], [Some(&deck), None], 3).unwrap();
    assert_eq!(s.stage, Stage::Cb);
    assert_eq!(s.active(), 1);
    let short = &deck[..29];
    assert!(matches!(
        e.new_match_with_decks([Hero::Mage, Hero::Mage], [Some(short), None], 3),
        Err(EngineError::InvalidDeck(_))
    ));
    let mut wrong = deck.clone();
    wrong[0] = CardId(56); // hunter card
    assert!(e.new_match_with_decks([Hero::Mage, Hero::Mage], [Some(&wrong), None], 3).is_err());
}

#[test]
fn low_mana_turn_offers_end_turn_and_charge_attackers() {
    let e = engine();
    let mut s = battle(&e, Hero::Warrior, Hero::Warrior, 5);
    clear_table(&mut s);
    // three 2-cost cards in hand, 1 mana
    s.players[0].hand = vec![CardId(6), CardId(7), CardId(8)];
    let mut charger = minion(&e, 2);
    charger.can_attack_this_turn = true;
    let mut sleeper = minion(&e, 0);
    sleeper.can_attack_this_turn = false;
    s.players[0].board = vec![charger, sleeper];
    assert_eq!(s.players[0].mana_current, 1);
    assert_eq!(kinds(&e, &s), vec![ActionKind::MyBoard(0), ActionKind::EndTurn]);
    assert!(kinds(&e, &s).iter().all(|k| !matches!(k, ActionKind::OppBoard(_))));
}

#[test]
fn taunt_restricts_attack_targets() {
    let e = engine();
    let mut s = battle(&e, Hero::Mage, Hero::Mage, 5);
    clear_table(&mut s);
    s.players[0].board = vec![minion(&e, 7)];
    s.players[1].board = vec![minion(&e, 6), minion(&e, 8), minion(&e, 1)];
    act(&e, &mut s, ActionKind::MyBoard(0));
    assert_eq!(kinds(&e, &s), vec![ActionKind::TargetOppBoard(1)]);
}

#[test]
fn simultaneous_combat_kills_both() {
    let e = engine();
    let mut s = battle(&e, Hero::Mage, Hero::Mage, 5);
    clear_table(&mut s);
    s.players[0].board = vec![minion(&e, 7)]; // 3/2
    s.players[1].board = vec![minion(&e, 6)]; // 2/3
    act(&e, &mut s, ActionKind::MyBoard(0));
    act(&e, &mut s, ActionKind::TargetOppBoard(0));
    assert!(s.players[0].board.is_empty());
    assert!(s.players[1].board.is_empty());
    assert_eq!(s.players[0].graveyard, vec![CardId(7)]);
    assert_eq!(s.players[1].graveyard, vec![CardId(6)]);
}

#[test]
fn minion_attacks_once_per_turn() {
    let e = engine();
    let mut s = battle(&e, Hero::Mage, Hero::Mage, 5);
    clear_table(&mut s);
    s.players[0].board = vec![minion(&e, 14)];
    act(&e, &mut s, ActionKind::MyBoard(0));
    act(&e, &mut s, ActionKind::TargetOppHero);
    assert_eq!(s.players[1].hero_hp, 27);
    assert!(!kinds(&e, &s).contains(&ActionKind::MyBoard(0)));
}

#[test]
fn cumulative_fatigue() {
    let mut p = PlayerState::new(Hero::Mage);
    for _ in 0..3 {
        draw(&mut p);
    }
    assert_eq!(p.hero_hp, 30 - 6);
    assert_eq!(p.fatigue_counter, 3);
}

#[test]
fn armor_absorbs_before_hp() {
    let mut p = PlayerState::new(Hero::Warrior);
    p.armor = 2;
    for _ in 0..2 {
        draw(&mut p);
    }
    assert_eq!((p.armor, p.hero_hp), (0, 29));
}

#[test]
fn full_hand_burns_draws() {
    let mut p = PlayerState::new(Hero::Mage);
    p.hand = vec![CardId(0); 10];
    p.deck = vec![CardId(3)];
    draw(&mut p);
    assert_eq!(p.hand.len(), 10);
    assert_eq!(p.graveyard, vec![CardId(3)]);
}

#[test]
fn hero_death_decides_match() {
    let e = engine();
    let mut s = battle(&e, Hero::Hunter, Hero::Mage, 5);
    s.players[1].hero_hp = 2;
    s.players[0].mana_current = 2;
    s.players[0].mana_cap = 2;
    let rewards = act(&e, &mut s, ActionKind::HeroPower);
    assert_eq!(s.players[1].hero_hp, 0);
    assert_eq!(e.outcome(&s), Some(MatchResult::P0Win));
    assert_eq!(rewards, [1, -1]);
    assert!(s.is_terminal());
    assert_eq!(e.legal_actions(&s), Err(EngineError::Terminal));
    e.check_invariants(&s).unwrap();
}

#[test]
fn dual_lethal_favors_defender() {
    let e = engine();
    let mut s = battle(&e, Hero::Mage, Hero::Mage, 5);
    // seat 0 is active; both heroes drop to 0 in one resolution
    s.players[0].hero_hp = 0;
    s.players[1].hero_hp = 0;
    e.resolve_deaths(&mut s);
    assert_eq!(s.outcome, Some(MatchResult::P1Win));

    let mut s = battle(&e, Hero::Mage, Hero::Mage, 5);
    act(&e, &mut s, ActionKind::EndTurn);
    s.players[0].hero_hp = 0;
    s.players[1].hero_hp = 0;
    e.resolve_deaths(&mut s);
    assert_eq!(s.outcome, Some(MatchResult::P0Win));
}

#[test]
fn self_fatigue_on_draw_spell_loses() {
    let e = engine();
    let mut s = battle(&e, Hero::Mage, Hero::Mage, 5);
    s.players[0].deck.clear();
    s.players[0].hero_hp = 1;
    s.players[0].hand = vec![CardId(12)];
    s.players[0].mana_current = 2;
    s.players[0].mana_cap = 2;
    act(&e, &mut s, ActionKind::Hand(0));
    assert_eq!(s.outcome, Some(MatchResult::P1Win));
}

#[test]
fn illegal_action_leaves_state_unchanged() {
    let e = engine();
    let s = battle(&e, Hero::Mage, Hero::Warrior, 11);
    let mut t = s.clone();
    let bad = e.layout().encode(ActionKind::OppBoard(0));
    assert_eq!(e.step(&mut t, bad), Err(EngineError::IllegalAction(bad)));
    assert_eq!(t, s);
    assert!(e.apply_action(&s, ActionId(9999)).is_err());
    let target = e.layout().encode(ActionKind::TargetOppHero);
    assert!(e.apply_action(&s, target).is_err());
}

#[test]
fn apply_action_does_not_mutate_input() {
    let e = engine();
    let s = battle(&e, Hero::Mage, Hero::Warrior, 11);
    let before = state_digest(&s);
    let (next, _) = e.apply_action(&s, e.layout().end_turn()).unwrap();
    assert_eq!(state_digest(&s), before);
    assert_eq!(next.active(), 1);
}

#[test]
fn coin_grants_temporary_mana() {
    let e = engine();
    let mut s = battle(&e, Hero::Mage, Hero::Warrior, 11);
    act(&e, &mut s, ActionKind::EndTurn);
    let coin_slot = s.players[1].hand.iter().position(|&c| e.pool().is_coin(c)).unwrap();
    assert_eq!((s.players[1].mana_current, s.players[1].mana_cap), (1, 1));
    act(&e, &mut s, ActionKind::Hand(coin_slot));
    assert_eq!((s.players[1].mana_current, s.players[1].mana_cap), (2, 2));
    act(&e, &mut s, ActionKind::EndTurn);
    act(&e, &mut s, ActionKind::EndTurn);
    assert_eq!(s.players[1].mana_cap, 2);
    e.check_invariants(&s).unwrap();
}

#[test]
fn targeted_spell_takes_two_operations() {
    let e = engine();
    let mut s = battle(&e, Hero::Mage, Hero::Mage, 11);
    clear_table(&mut s);
    s.players[0].hand = vec![CardId(4)]; // Jolt: 2 damage any character
    s.players[1].board = vec![minion(&e, 6)];
    act(&e, &mut s, ActionKind::Hand(0));
    assert_eq!(s.pending_selection, Some(PendingSelection::Play { hand_slot: 0 }));
    assert_eq!(kinds(&e, &s), vec![ActionKind::TargetMyHero, ActionKind::TargetOppHero, ActionKind::TargetOppBoard(0)]);
    act(&e, &mut s, ActionKind::TargetOppBoard(0));
    assert_eq!(s.players[1].board[0].current_health, 1);
    assert_eq!(s.players[0].mana_current, 0);
    assert_eq!(s.players[0].graveyard, vec![CardId(4)]);
}

#[test]
fn friendly_buff_needs_a_minion() {
    let e = engine();
    let mut s = battle(&e, Hero::Mage, Hero::Mage, 11);
    clear_table(&mut s);
    s.players[0].hand = vec![CardId(13), CardId(19)];
    s.players[0].mana_current = 10;
    s.players[0].mana_cap = 10;
    // Rallying Cry is unplayable without a target; Drill Sergeant's battlecry fizzles
    assert_eq!(kinds(&e, &s), vec![ActionKind::Hand(1), ActionKind::HeroPower, ActionKind::EndTurn]);
    act(&e, &mut s, ActionKind::Hand(1));
    assert_eq!(s.pending_selection, None);
    assert_eq!(s.players[0].board.len(), 1);
    act(&e, &mut s, ActionKind::Hand(0));
    act(&e, &mut s, ActionKind::TargetMyBoard(0));
    let m = &s.players[0].board[0];
    assert_eq!((m.current_attack, m.current_health), (5, 5));
}

#[test]
fn hero_powers() {
    let e = engine();
    let mut s = battle(&e, Hero::Warrior, Hero::Mage, 11);
    s.players[0].mana_current = 2;
    act(&e, &mut s, ActionKind::HeroPower);
    assert_eq!(s.players[0].armor, 2);
    assert!(!kinds(&e, &s).contains(&ActionKind::HeroPower));
    act(&e, &mut s, ActionKind::EndTurn);
    s.players[1].mana_current = 2;
    act(&e, &mut s, ActionKind::HeroPower);
    assert_eq!(s.pending_selection, Some(PendingSelection::HeroPower));
    act(&e, &mut s, ActionKind::TargetOppHero);
    assert_eq!((s.players[0].armor, s.players[0].hero_hp), (1, 30));
}

#[test]
fn weapon_attack_and_break() {
    let e = engine();
    let mut s = battle(&e, Hero::Warrior, Hero::Mage, 11);
    clear_table(&mut s);
    s.players[0].hand = vec![CardId(65)]; // 3/2 axe
    s.players[0].mana_current = 2;
    s.players[1].board = vec![minion(&e, 0)]; // 1/2
    act(&e, &mut s, ActionKind::Hand(0));
    act(&e, &mut s, ActionKind::HeroAttack);
    act(&e, &mut s, ActionKind::TargetOppBoard(0));
    assert!(s.players[1].board.is_empty());
    assert_eq!(s.players[0].hero_hp, 29);
    assert_eq!(s.players[0].weapon.unwrap().durability, 1);
    assert!(!kinds(&e, &s).contains(&ActionKind::HeroAttack));
    act(&e, &mut s, ActionKind::EndTurn);
    act(&e, &mut s, ActionKind::EndTurn);
    act(&e, &mut s, ActionKind::HeroAttack);
    act(&e, &mut s, ActionKind::TargetOppHero);
    assert_eq!(s.players[1].hero_hp, 27);
    assert!(s.players[0].weapon.is_none());
    assert_eq!(s.players[0].graveyard, vec![CardId(65)]);
}

#[test]
fn half_turn_cap_forces_draw() {
    let e = engine();
    let mut s = battle(&e, Hero::Warrior, Hero::Warrior, 2);
    let mut last = [0, 0];
    let mut ends = 0;
    while !s.is_terminal() {
        // keep both heroes alive through fatigue
        for p in &mut s.players {
            p.hero_hp = 30;
            p.fatigue_counter = 0;
        }
        last = act(&e, &mut s, ActionKind::EndTurn);
        ends += 1;
    }
    assert_eq!(ends, 120);
    assert_eq!(s.outcome, Some(MatchResult::Draw));
    assert_eq!(last, [0, 0]);
}

#[test]
fn random_playout_from_seed_42_terminates() {
    let e = engine();
    let (s, actions) = random_playout(&e, [Hero::Mage, Hero::Hunter], 42, true);
    assert!(s.outcome.is_some());
    assert!(s.turn_number <= HALF_TURN_CAP + 1);
    assert!(actions.len() > 60);
}

#[test]
fn replay_round_trip_reproduces_match() {
    let e = engine();
    let (s, actions) = random_playout(&e, [Hero::Warrior, Hero::Mage], 77, false);
    let mut r = Replay::new(e.pool().checksum(), [Hero::Warrior, Hero::Mage], 77);
    r.actions = actions;
    r.outcome = s.outcome;
    r.cheat = [4, 2];
    let text = r.to_text();
    let parsed = Replay::parse(&text).unwrap();
    assert_eq!(parsed, r);
    let again = parsed.simulate(&e).unwrap();
    assert_eq!(state_digest(&again), state_digest(&s));
}

#[test]
fn replay_with_prebuilt_decks() {
    let e = engine();
    let deck = common_deck();
    let s0 = e.new_match_with_decks([Hero::Mage, Hero::Hunter], [None, Some(&deck)], 5).unwrap();
    let r = Replay::for_state(&s0);
    let parsed = Replay::parse(&r.to_text()).unwrap();
    assert_eq!(parsed.decks[1].as_deref(), Some(deck.as_slice()));
    assert_eq!(parsed.initial_state(&e).unwrap(), s0);
}

#[test]
fn replay_rejects_bad_input() {
    let e = engine();
    let mut r = Replay::new(PoolChecksum(1), [Hero::Mage, Hero::Mage], 1);
    assert!(matches!(r.simulate(&e), Err(EngineError::ChecksumMismatch { .. })));
    r.pool_checksum = e.pool().checksum();
    r.actions = vec![ActionId(200)];
    assert!(r.simulate(&e).is_err());
    assert!(Replay::parse("nonsense").is_err());
    let text = Replay::new(e.pool().checksum(), [Hero::Mage, Hero::Mage], 1).to_text();
    assert!(Replay::parse(&format!("{text}outcome p0_win\nextra\n")).is_err());
    assert!(Replay::parse(&text.replace("actions 0", "actions 2")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_playouts_keep_invariants(seed in any::<u64>(), h0 in 0usize..3, h1 in 0usize..3) {
        let e = engine();
        let heroes = [Hero::from_index(h0).unwrap(), Hero::from_index(h1).unwrap()];
        let (s, actions) = random_playout(&e, heroes, seed, true);
        prop_assert!(s.is_terminal());
        let rewards = s.outcome.unwrap().rewards();
        prop_assert_eq!(rewards[0] + rewards[1], 0);
        let mut r = Replay::new(e.pool().checksum(), heroes, seed);
        r.actions = actions;
        prop_assert_eq!(r.simulate(&e).unwrap(), s);
    }
}
