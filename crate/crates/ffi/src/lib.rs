//! C ABI over the MiniStone engine and trained policies.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `ms_*_new`/`ms_*_load` call and released with the matching `ms_*_free`.
//! Fallible calls return an [`MsStatus`]; the message for the most recent
//! failure on the calling thread is available from [`ms_last_error`].
//!
//! Heroes are numbered 0 mage, 1 hunter, 2 warrior. Outcomes are -1 while the
//! match runs, the winning seat, or 2 for a draw.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ministone::engine::{ActionId, CardId, Engine, EngineError, GameState, Hero, MatchResult, Replay};
use ministone::evalharness::{greedy_action, random_action};
use ministone::obsact::Encoder;
use ministone::policy::{load_checkpoint, PolicyError, PolicyParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    IllegalAction = 3,
    Terminal = 4,
    PoolMismatch = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

pub struct MsEngine {
    engine: Engine,
    encoder: Encoder,
}

/// A match in progress together with the log that reproduces it.
pub struct MsState {
    state: GameState,
    replay: Replay,
}

pub struct MsPolicy {
    params: PolicyParams<f32>,
    rng: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Fail(MsStatus, String);

impl Fail {
    fn new(status: MsStatus, msg: impl Into<String>) -> Self {
        Fail(status, msg.into())
    }
}

impl From<EngineError> for Fail {
    fn from(e: EngineError) -> Self {
        let status = match e {
            EngineError::IllegalAction(_) => MsStatus::IllegalAction,
            EngineError::Terminal => MsStatus::Terminal,
            EngineError::ChecksumMismatch { .. } => MsStatus::PoolMismatch,
            _ => MsStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

impl From<PolicyError> for Fail {
    fn from(e: PolicyError) -> Self {
        let status = match e {
            PolicyError::PoolMismatch { .. } => MsStatus::PoolMismatch,
            PolicyError::Io(_) => MsStatus::Io,
            _ => MsStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MsStatus {
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Fail(MsStatus::Panic, msg))
    });
    match res {
        Ok(()) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            MsStatus::Ok
        }
        Err(Fail(status, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            status
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::new(MsStatus::NullArgument, format!("{what} is null")))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail::new(MsStatus::NullArgument, format!("{what} is null")))
}

fn hero(i: u8) -> Result<Hero, Fail> {
    Hero::ALL.get(i as usize).copied().ok_or_else(|| Fail::new(MsStatus::InvalidArgument, format!("hero {i}")))
}

/// Copy `s` plus a NUL into `buf`. `out_len` always receives the size needed.
unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, out_len: *mut usize) -> Result<(), Fail> {
    let need = s.len() + 1;
    if !out_len.is_null() {
        *out_len = need;
    }
    if buf.is_null() || len < need {
        return Err(Fail::new(MsStatus::BufferTooSmall, format!("need {need} bytes")));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

fn outcome_code(o: Option<MatchResult>) -> i32 {
    match o {
        None => -1,
        Some(MatchResult::P0Win) => 0,
        Some(MatchResult::P1Win) => 1,
        Some(MatchResult::Draw) => 2,
    }
}

/// Copy the last error message of this thread into `buf`.
#[no_mangle]
pub unsafe extern "C" fn ms_last_error(buf: *mut c_char, len: usize, out_len: *mut usize) -> MsStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    // not routed through `guard`, which would clear the message
    match write_str(&msg, buf, len, out_len) {
        Ok(()) => MsStatus::Ok,
        Err(Fail(s, _)) => s,
    }
}

/// The built-in engine. Never null.
#[no_mangle]
pub extern "C" fn ms_engine_new() -> *mut MsEngine {
    let engine = Engine::ministone_v1();
    let encoder = Encoder::new(engine.clone());
    Box::into_raw(Box::new(MsEngine { engine, encoder }))
}

#[no_mangle]
pub unsafe extern "C" fn ms_engine_free(engine: *mut MsEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Size of the action table; legal masks have this many entries.
#[no_mangle]
pub unsafe extern "C" fn ms_engine_action_count(engine: *const MsEngine) -> u32 {
    engine.as_ref().map_or(0, |e| e.engine.layout().size() as u32)
}

#[no_mangle]
pub unsafe extern "C" fn ms_engine_pool_size(engine: *const MsEngine) -> u32 {
    engine.as_ref().map_or(0, |e| e.engine.pool().len() as u32)
}

#[no_mangle]
pub unsafe extern "C" fn ms_engine_pool_checksum(engine: *const MsEngine) -> u64 {
    engine.as_ref().map_or(0, |e| e.engine.pool().checksum().0)
}

#[no_mangle]
pub unsafe extern "C" fn ms_action_label(
    engine: *const MsEngine,
    action: u16,
    buf: *mut c_char,
    len: usize,
    out_len: *mut usize,
) -> MsStatus {
    guard(|| {
        let e = as_ref(engine, "engine")?;
        if action as usize >= e.engine.layout().size() {
            return Err(Fail::new(MsStatus::InvalidArgument, format!("action {action}")));
        }
        write_str(&e.engine.layout().label(ActionId(action)), buf, len, out_len)
    })
}

/// Start a match. A non-null `deck0`/`deck1` of `len` card ids skips deck
/// building for that seat.
#[no_mangle]
pub unsafe extern "C" fn ms_match_new(
    engine: *const MsEngine,
    hero0: u8,
    hero1: u8,
    deck0: *const u16,
    len0: usize,
    deck1: *const u16,
    len1: usize,
    seed: u64,
    out: *mut *mut MsState,
) -> MsStatus {
    guard(|| {
        let e = as_ref(engine, "engine")?;
        let out = as_mut(out, "out")?;
        let deck = |p: *const u16, n: usize| -> Option<Vec<CardId>> {
            (!p.is_null()).then(|| std::slice::from_raw_parts(p, n).iter().map(|&c| CardId(c)).collect())
        };
        let decks = [deck(deck0, len0), deck(deck1, len1)];
        let state = e.engine.new_match_with_decks(
            [hero(hero0)?, hero(hero1)?],
            [decks[0].as_deref(), decks[1].as_deref()],
            seed,
        )?;
        let replay = Replay::for_state(&state);
        *out = Box::into_raw(Box::new(MsState { state, replay }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ms_state_free(state: *mut MsState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ms_state_clone(state: *const MsState, out: *mut *mut MsState) -> MsStatus {
    guard(|| {
        let s = as_ref(state, "state")?;
        let out = as_mut(out, "out")?;
        *out = Box::into_raw(Box::new(MsState { state: s.state.clone(), replay: s.replay.clone() }));
        Ok(())
    })
}

/// Seat to move, or -1 once the match is over.
#[no_mangle]
pub unsafe extern "C" fn ms_state_to_move(state: *const MsState) -> i32 {
    state.as_ref().and_then(|s| s.state.to_move()).map_or(-1, |p| p as i32)
}

#[no_mangle]
pub unsafe extern "C" fn ms_state_outcome(state: *const MsState) -> i32 {
    state.as_ref().map_or(-1, |s| outcome_code(s.state.outcome))
}

/// Hero hit points plus armor for `seat`.
#[no_mangle]
pub unsafe extern "C" fn ms_state_health(state: *const MsState, seat: u8) -> i32 {
    match state.as_ref() {
        Some(s) if seat < 2 => {
            let p = &s.state.players[seat as usize];
            p.hero_hp + p.armor
        }
        _ => 0,
    }
}

/// Write one byte per action (1 legal, 0 not) into `out`, which must hold
/// `ms_engine_action_count` bytes.
#[no_mangle]
pub unsafe extern "C" fn ms_legal_mask(
    engine: *const MsEngine,
    state: *const MsState,
    out: *mut u8,
    len: usize,
) -> MsStatus {
    guard(|| {
        let e = as_ref(engine, "engine")?;
        let s = as_ref(state, "state")?;
        if out.is_null() {
            return Err(Fail::new(MsStatus::NullArgument, "out is null"));
        }
        let mask = e.engine.legal_mask(&s.state)?;
        if len < mask.len() {
            return Err(Fail::new(MsStatus::BufferTooSmall, format!("need {} bytes", mask.len())));
        }
        for (i, &m) in mask.iter().enumerate() {
            *out.add(i) = m as u8;
        }
        Ok(())
    })
}

/// Apply `action` in place. `rewards`, if non-null, receives both seats'
/// rewards. On failure the state is unchanged.
#[no_mangle]
pub unsafe extern "C" fn ms_step(
    engine: *const MsEngine,
    state: *mut MsState,
    action: u16,
    rewards: *mut i8,
) -> MsStatus {
    guard(|| {
        let e = as_ref(engine, "engine")?;
        let s = as_mut(state, "state")?;
        let r = e.engine.step(&mut s.state, ActionId(action))?;
        s.replay.actions.push(ActionId(action));
        s.replay.outcome = s.state.outcome;
        if !rewards.is_null() {
            *rewards = r[0];
            *rewards.add(1) = r[1];
        }
        Ok(())
    })
}

/// Replay text of every action applied so far.
#[no_mangle]
pub unsafe extern "C" fn ms_state_replay(
    state: *const MsState,
    buf: *mut c_char,
    len: usize,
    out_len: *mut usize,
) -> MsStatus {
    guard(|| {
        let s = as_ref(state, "state")?;
        write_str(&s.replay.to_text(), buf, len, out_len)
    })
}

/// Re-simulate replay text; `out_outcome` receives the final outcome code.
#[no_mangle]
pub unsafe extern "C" fn ms_replay_verify(
    engine: *const MsEngine,
    text: *const c_char,
    out_outcome: *mut i32,
) -> MsStatus {
    guard(|| {
        let e = as_ref(engine, "engine")?;
        if text.is_null() {
            return Err(Fail::new(MsStatus::NullArgument, "text is null"));
        }
        let text = CStr::from_ptr(text).to_str().map_err(|e| Fail::new(MsStatus::InvalidArgument, e.to_string()))?;
        let replay = Replay::parse(text)?;
        let end = replay.simulate(&e.engine)?;
        if replay.outcome.is_some() && replay.outcome != end.outcome {
            return Err(Fail::new(MsStatus::InvalidArgument, "recorded outcome differs"));
        }
        if !out_outcome.is_null() {
            *out_outcome = outcome_code(end.outcome);
        }
        Ok(())
    })
}

/// Load a checkpoint; `seed` drives sampled actions.
#[no_mangle]
pub unsafe extern "C" fn ms_policy_load(
    engine: *const MsEngine,
    path: *const c_char,
    seed: u64,
    out: *mut *mut MsPolicy,
) -> MsStatus {
    guard(|| {
        let e = as_ref(engine, "engine")?;
        let out = as_mut(out, "out")?;
        if path.is_null() {
            return Err(Fail::new(MsStatus::NullArgument, "path is null"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|e| Fail::new(MsStatus::InvalidArgument, e.to_string()))?;
        let params = load_checkpoint::<f32>(Path::new(path), e.engine.pool().checksum())?;
        *out = Box::into_raw(Box::new(MsPolicy { params, rng: ChaCha8Rng::seed_from_u64(seed) }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ms_policy_free(policy: *mut MsPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Pick an action for the seat to move. `greedy` takes the most probable
/// action instead of sampling.
#[no_mangle]
pub unsafe extern "C" fn ms_policy_act(
    engine: *const MsEngine,
    policy: *mut MsPolicy,
    state: *const MsState,
    greedy: bool,
    out_action: *mut u16,
) -> MsStatus {
    guard(|| {
        let e = as_ref(engine, "engine")?;
        let p = as_mut(policy, "policy")?;
        let s = as_ref(state, "state")?;
        let out = as_mut(out_action, "out_action")?;
        let seat = s.state.to_move().ok_or_else(|| Fail::new(MsStatus::Terminal, "match is over"))?;
        let obs =
            e.encoder.encode(&s.state, seat, 0).map_err(|err| Fail::new(MsStatus::InvalidArgument, err.to_string()))?;
        let o = p.params.forward(&obs, false)?;
        *out = if greedy { o.argmax() } else { o.sample(&mut p.rng) }.0;
        Ok(())
    })
}

/// Scripted greedy bot move.
#[no_mangle]
pub unsafe extern "C" fn ms_greedy_action(
    engine: *const MsEngine,
    state: *const MsState,
    out_action: *mut u16,
) -> MsStatus {
    guard(|| {
        let e = as_ref(engine, "engine")?;
        let s = as_ref(state, "state")?;
        let out = as_mut(out_action, "out_action")?;
        if s.state.is_terminal() {
            return Err(Fail::new(MsStatus::Terminal, "match is over"));
        }
        *out = greedy_action(&e.engine, &s.state).0;
        Ok(())
    })
}

/// Uniformly random legal move drawn from `seed`.
#[no_mangle]
pub unsafe extern "C" fn ms_random_action(
    engine: *const MsEngine,
    state: *const MsState,
    seed: u64,
    out_action: *mut u16,
) -> MsStatus {
    guard(|| {
        let e = as_ref(engine, "engine")?;
        let s = as_ref(state, "state")?;
        let out = as_mut(out_action, "out_action")?;
        if s.state.is_terminal() {
            return Err(Fail::new(MsStatus::Terminal, "match is over"));
        }
        *out = random_action(&e.engine, &s.state, &mut ChaCha8Rng::seed_from_u64(seed)).0;
        Ok(())
    })
}
