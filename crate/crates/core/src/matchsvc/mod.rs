//! Human-versus-agent sessions: deck storage, live matches against any
//! checkpoint, censored views and replay export. [`http`] puts the service
//! behind a JSON-over-HTTP interface.

pub mod http;
mod view;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ActionId, CardId, Engine, EngineError, GameState, Hero, PoolChecksum, Replay};
use crate::obsact::Encoder;
use crate::policy::{load_checkpoint, PolicyError, PolicyParams};

pub use view::{
    describe, CardView, HeroPanel, LegalAction, MinionView, MyView, OpponentView, TranscriptEntry, View, ViewOutcome,
    WeaponView,
};

/// Upper bound on agent steps in one reply; a full CB plus the longest turn fits well inside.
pub const MAX_AGENT_STEPS: usize = 2_000;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error("illegal action {action}")]
    Illegal { action: ActionId, legal: Vec<ActionId> },
    #[error("session is over")]
    Terminal,
    #[error("not your turn")]
    NotYourTurn,
    #[error("invalid deck: {0}")]
    Deck(String),
    #[error("deck '{0}' already exists")]
    DuplicateDeck(String),
    #[error("unknown deck '{0}'")]
    UnknownDeck(String),
    #[error("agent exceeded {MAX_AGENT_STEPS} steps")]
    AgentStuck,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavedDeck {
    pub name: String,
    pub hero: Hero,
    pub cards: Vec<CardId>,
    pub owner: String,
    #[serde(default)]
    pub created: u64,
}

/// Where the human's deck comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HumanDeck {
    Saved { owner: String, name: String },
    Cards { cards: Vec<CardId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSession {
    /// Registered agent name or checkpoint path.
    pub agent: String,
    pub human_hero: Hero,
    /// `None` samples the agent's hero uniformly.
    #[serde(default)]
    pub agent_hero: Option<Hero>,
    #[serde(default)]
    pub human_deck: Option<HumanDeck>,
    /// Seat 0 moves first.
    #[serde(default)]
    pub human_seat: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Exhibition cheat: prefix of the human's picks shown to the agent.
    #[serde(default)]
    pub agent_cheat: u8,
    #[serde(default)]
    pub human_cheat: u8,
}

impl CreateSession {
    pub fn new(agent: impl Into<String>, human_hero: Hero) -> Self {
        CreateSession {
            agent: agent.into(),
            human_hero,
            agent_hero: None,
            human_deck: None,
            human_seat: 0,
            seed: None,
            agent_cheat: 0,
            human_cheat: 0,
        }
    }
}

pub struct Session {
    pub id: String,
    pub pool_checksum: PoolChecksum,
    pub human_seat: usize,
    pub agent_ref: String,
    agent: Arc<PolicyParams<f32>>,
    pub state: GameState,
    /// Header plus every action so far; replays to `state`.
    pub replay: Replay,
    /// Every complete play, both seats.
    pub log: Vec<TranscriptEntry>,
    /// Agent's plays since the human last moved.
    pub last_agent_turn: Vec<TranscriptEntry>,
    pub created: u64,
    pub updated: u64,
    pub version: u64,
}

impl Session {
    fn cheat(&self, seat: usize) -> u8 {
        self.replay.cheat[seat]
    }
}

struct Slot {
    session: Mutex<Session>,
    changed: Condvar,
}

pub struct MatchService {
    engine: Engine,
    encoder: Encoder,
    agents: RwLock<HashMap<String, Arc<PolicyParams<f32>>>>,
    /// Checkpoint paths may only be loaded from here; `None` forbids paths.
    checkpoint_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    decks: Mutex<Vec<SavedDeck>>,
    deck_file: Option<PathBuf>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl MatchService {
    pub fn new(engine: Engine) -> Self {
        MatchService {
            encoder: Encoder::new(engine.clone()),
            engine,
            agents: RwLock::new(HashMap::new()),
            checkpoint_dir: None,
            sessions: RwLock::new(HashMap::new()),
            decks: Mutex::new(Vec::new()),
            deck_file: None,
        }
    }

    /// Allow agents to be named by checkpoint file inside `dir`.
    pub fn with_checkpoint_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    /// Persist decks as JSON in `path`, loading any already there.
    pub fn with_deck_file(mut self, path: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let path = path.into();
        if path.exists() {
            let decks: Vec<SavedDeck> = serde_json::from_str(&fs::read_to_string(&path)?)
                .map_err(|e| ServiceError::Deck(format!("{}: {e}", path.display())))?;
            *lock(&self.decks) = decks;
        }
        self.deck_file = Some(path);
        Ok(self)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn register_agent(&self, name: impl Into<String>, params: PolicyParams<f32>) -> Result<(), ServiceError> {
        if params.meta.pool_checksum != self.engine.pool().checksum() {
            return Err(ServiceError::Policy(PolicyError::PoolMismatch {
                expected: self.engine.pool().checksum(),
                found: params.meta.pool_checksum,
            }));
        }
        self.agents.write().unwrap_or_else(|e| e.into_inner()).insert(name.into(), Arc::new(params));
        Ok(())
    }

    pub fn agent_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.agents.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect();
        v.sort();
        v
    }

    fn resolve_agent(&self, name: &str) -> Result<Arc<PolicyParams<f32>>, ServiceError> {
        if let Some(p) = self.agents.read().unwrap_or_else(|e| e.into_inner()).get(name) {
            return Ok(p.clone());
        }
        let dir = self.checkpoint_dir.as_ref().ok_or_else(|| ServiceError::UnknownAgent(name.into()))?;
        let file = Path::new(name).file_name().ok_or_else(|| ServiceError::UnknownAgent(name.into()))?;
        let path = dir.join(file);
        if !path.exists() {
            return Err(ServiceError::UnknownAgent(name.into()));
        }
        let params = Arc::new(load_checkpoint::<f32>(&path, self.engine.pool().checksum())?);
        self.agents.write().unwrap_or_else(|e| e.into_inner()).insert(name.into(), params.clone());
        Ok(params)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.into()))
    }

    pub fn create_session(&self, req: &CreateSession) -> Result<View, ServiceError> {
        if req.human_seat > 1 {
            return Err(ServiceError::Deck("human_seat must be 0 or 1".into()));
        }
        if req.agent_cheat as usize > crate::engine::DECK_SIZE || req.human_cheat as usize > crate::engine::DECK_SIZE {
            return Err(ServiceError::Deck("cheat prefix longer than a deck".into()));
        }
        let agent = self.resolve_agent(&req.agent)?;
        let seed = req.seed.unwrap_or_else(|| rand::rng().random());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agent_hero = req.agent_hero.unwrap_or_else(|| Hero::ALL[rng.random_range(0..3)]);
        let human_cards = match &req.human_deck {
            None => None,
            Some(HumanDeck::Cards { cards }) => Some(cards.clone()),
            Some(HumanDeck::Saved { owner, name }) => {
                let decks = lock(&self.decks);
                let d = decks
                    .iter()
                    .find(|d| &d.owner == owner && &d.name == name)
                    .ok_or_else(|| ServiceError::UnknownDeck(name.clone()))?;
                if d.hero != req.human_hero {
                    return Err(ServiceError::Deck(format!("deck '{name}' is for {}", d.hero)));
                }
                Some(d.cards.clone())
            }
        };
        if let Some(cards) = &human_cards {
            self.engine.validate_deck(req.human_hero, cards).map_err(|e| ServiceError::Deck(e.to_string()))?;
        }
        let h = req.human_seat;
        let mut heroes = [agent_hero; 2];
        heroes[h] = req.human_hero;
        let mut decks: [Option<&[CardId]>; 2] = [None, None];
        decks[h] = human_cards.as_deref();
        let state = self.engine.new_match_with_decks(heroes, decks, seed)?;
        let mut replay = Replay::for_state(&state);
        replay.cheat[h] = req.human_cheat;
        replay.cheat[1 - h] = req.agent_cheat;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let t = now_secs();
        let mut session = Session {
            id: id.clone(),
            pool_checksum: self.engine.pool().checksum(),
            human_seat: h,
            agent_ref: req.agent.clone(),
            agent,
            state,
            replay,
            log: Vec::new(),
            last_agent_turn: Vec::new(),
            created: t,
            updated: t,
            version: 0,
        };
        self.run_agent(&mut session)?;
        let view = self.view_of(&session);
        let slot = Arc::new(Slot { session: Mutex::new(session), changed: Condvar::new() });
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, slot);
        Ok(view)
    }

    fn view_of(&self, s: &Session) -> View {
        view::build_view(
            &self.engine,
            &s.state,
            view::ViewInput {
                session_id: &s.id,
                version: s.version,
                seat: s.human_seat,
                cheat_n: s.cheat(s.human_seat),
                transcript: &s.last_agent_turn,
            },
        )
    }

    pub fn get_view(&self, id: &str) -> Result<View, ServiceError> {
        let slot = self.slot(id)?;
        let s = lock(&slot.session);
        Ok(self.view_of(&s))
    }

    /// Block until the session version exceeds `since` or `timeout` passes.
    pub fn wait_view(&self, id: &str, since: u64, timeout: Duration) -> Result<View, ServiceError> {
        let slot = self.slot(id)?;
        let s = lock(&slot.session);
        let (s, _) =
            slot.changed.wait_timeout_while(s, timeout, |s| s.version <= since).unwrap_or_else(|e| e.into_inner());
        Ok(self.view_of(&s))
    }

    /// Apply the human's action, then let the agent play until the human is
    /// to move again or the match ends.
    pub fn submit_action(&self, id: &str, action: ActionId) -> Result<View, ServiceError> {
        let slot = self.slot(id)?;
        let mut s = lock(&slot.session);
        if s.state.is_terminal() {
            return Err(ServiceError::Terminal);
        }
        if s.state.to_move() != Some(s.human_seat) {
            return Err(ServiceError::NotYourTurn);
        }
        let legal = self.engine.legal_actions(&s.state)?;
        if legal.binary_search(&action).is_err() {
            return Err(ServiceError::Illegal { action, legal });
        }
        s.last_agent_turn.clear();
        self.apply_logged(&mut s, action)?;
        self.run_agent(&mut s)?;
        s.version += 1;
        s.updated = now_secs();
        let view = self.view_of(&s);
        drop(s);
        slot.changed.notify_all();
        Ok(view)
    }

    fn apply_logged(&self, s: &mut Session, action: ActionId) -> Result<(), ServiceError> {
        let seat = s.state.to_move().expect("live state");
        let text = describe(&self.engine, &s.state, action);
        // a target completes the play its first operation opened
        let continues = s.state.pending_selection.is_some();
        self.engine.step(&mut s.state, action)?;
        s.replay.actions.push(action);
        s.replay.outcome = s.state.outcome;
        let log = if seat == s.human_seat { None } else { Some(&mut s.last_agent_turn) };
        for list in [Some(&mut s.log), log].into_iter().flatten() {
            match list.last_mut() {
                Some(e) if continues && e.seat == seat => {
                    e.actions.push(action);
                    e.text = format!("{} {text}", e.text);
                }
                _ => list.push(TranscriptEntry { seat, actions: vec![action], text: text.clone() }),
            }
        }
        Ok(())
    }

    fn run_agent(&self, s: &mut Session) -> Result<(), ServiceError> {
        let agent_seat = 1 - s.human_seat;
        for _ in 0..MAX_AGENT_STEPS {
            if s.state.to_move() != Some(agent_seat) {
                return Ok(());
            }
            let obs = self
                .encoder
                .encode(&s.state, agent_seat, s.cheat(agent_seat) as usize)
                .map_err(|e| ServiceError::Deck(e.to_string()))?;
            let action = s.agent.forward(&obs, false)?.argmax();
            self.apply_logged(s, action)?;
        }
        Err(ServiceError::AgentStuck)
    }

    pub fn export_replay(&self, id: &str) -> Result<Replay, ServiceError> {
        let slot = self.slot(id)?;
        let s = lock(&slot.session);
        Ok(s.replay.clone())
    }

    /// Full log and metadata, for operators; never sent to players.
    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&Session) -> T) -> Result<T, ServiceError> {
        let slot = self.slot(id)?;
        let s = lock(&slot.session);
        Ok(f(&s))
    }

    pub fn save_deck(&self, mut deck: SavedDeck) -> Result<SavedDeck, ServiceError> {
        if deck.name.is_empty() || deck.owner.is_empty() {
            return Err(ServiceError::Deck("name and owner are required".into()));
        }
        self.engine.validate_deck(deck.hero, &deck.cards).map_err(|e| ServiceError::Deck(e.to_string()))?;
        let mut decks = lock(&self.decks);
        if decks.iter().any(|d| d.owner == deck.owner && d.name == deck.name) {
            return Err(ServiceError::DuplicateDeck(deck.name));
        }
        deck.created = now_secs();
        decks.push(deck.clone());
        self.persist_decks(&decks)?;
        Ok(deck)
    }

    pub fn list_decks(&self, owner: &str) -> Vec<SavedDeck> {
        lock(&self.decks).iter().filter(|d| d.owner == owner).cloned().collect()
    }

    pub fn get_deck(&self, owner: &str, name: &str) -> Result<SavedDeck, ServiceError> {
        lock(&self.decks)
            .iter()
            .find(|d| d.owner == owner && d.name == name)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownDeck(name.into()))
    }

    pub fn delete_deck(&self, owner: &str, name: &str) -> Result<(), ServiceError> {
        let mut decks = lock(&self.decks);
        let before = decks.len();
        decks.retain(|d| !(d.owner == owner && d.name == name));
        if decks.len() == before {
            return Err(ServiceError::UnknownDeck(name.into()));
        }
        self.persist_decks(&decks)
    }

    fn persist_decks(&self, decks: &[SavedDeck]) -> Result<(), ServiceError> {
        if let Some(path) = &self.deck_file {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, serde_json::to_string_pretty(decks).expect("decks serialize"))?;
            fs::rename(tmp, path)?;
        }
        Ok(())
    }
}
