//! Game runner shared by training actors and evaluation.
//!
//! Keeps several games in flight and batches policy inference across every
//! game waiting on the same parameters. Each seat draws from its own RNG
//! seeded by `(game seed, seat)`, so a game's course never depends on what
//! else happened to be in the batch.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{CardId, Engine, GameState, Hero, MatchResult, Replay, Stage};
use crate::evalharness::{greedy_action, random_action};
use crate::learner::{Step, TrajectorySegment, SEGMENT_LEN};
use crate::obsact::Encoder;
use crate::policy::PolicyParams;

use super::OsfpError;

#[derive(Debug, Clone)]
pub enum SeatAgent {
    /// Samples from the masked policy, or takes its argmax.
    Policy {
        params: Arc<PolicyParams<f32>>,
        argmax: bool,
    },
    Random,
    Greedy,
}

impl SeatAgent {
    pub fn policy(params: Arc<PolicyParams<f32>>) -> Self {
        SeatAgent::Policy { params, argmax: false }
    }
}

#[derive(Debug, Clone)]
pub struct SeatPlan {
    pub agent: SeatAgent,
    /// Emit trajectory segments for this seat. Requires a policy agent.
    pub collect: bool,
    /// Visible prefix of the opponent's picks.
    pub cheat_n: u8,
    /// Leading CB picks drawn uniformly over legal picks.
    pub random_cb: u8,
}

impl SeatPlan {
    pub fn new(agent: SeatAgent) -> Self {
        SeatPlan { agent, collect: false, cheat_n: 0, random_cb: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GameJob {
    /// Opaque caller tag echoed in every event.
    pub tag: u64,
    pub seed: u64,
    pub heroes: [Hero; 2],
    /// Prebuilt decks; a seat with a deck skips CB.
    pub decks: [Option<Vec<CardId>>; 2],
    pub seats: [SeatPlan; 2],
    /// Key stamped on emitted segments (the learner instance they feed).
    pub instance: Hero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinishedGame {
    pub tag: u64,
    pub outcome: MatchResult,
    pub replay: Replay,
    /// Decisions taken by each seat.
    pub decisions: [usize; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum GameEvent {
    Segment { tag: u64, seat: usize, segment: TrajectorySegment },
    Finished(FinishedGame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActorConfig {
    pub games_in_flight: usize,
    pub segment_len: usize,
}

impl Default for ActorConfig {
    fn default() -> Self {
        ActorConfig { games_in_flight: 32, segment_len: SEGMENT_LEN }
    }
}

pub(crate) fn seat_rng(seed: u64, seat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(seat as u64 + 1);
    rng
}

struct Live {
    job: GameJob,
    state: GameState,
    replay: Replay,
    rngs: [ChaCha8Rng; 2],
    pending: [Vec<Step>; 2],
    cb_decisions: [usize; 2],
    decisions: [usize; 2],
}

impl Live {
    fn new(engine: &Engine, job: GameJob) -> Result<Self, OsfpError> {
        let state = engine
            .new_match_with_decks(job.heroes, [job.decks[0].as_deref(), job.decks[1].as_deref()], job.seed)
            .map_err(|e| OsfpError::Config(format!("job deck: {e}")))?;
        let mut replay = Replay::for_state(&state);
        replay.cheat = [job.seats[0].cheat_n, job.seats[1].cheat_n];
        let rngs = [seat_rng(job.seed, 0), seat_rng(job.seed, 1)];
        Ok(Live {
            job,
            state,
            replay,
            rngs,
            pending: [Vec::new(), Vec::new()],
            cb_decisions: [0; 2],
            decisions: [0; 2],
        })
    }

    fn apply(&mut self, engine: &Engine, seat: usize, action: crate::engine::ActionId) -> Result<[i8; 2], OsfpError> {
        if self.state.stage == Stage::Cb {
            self.cb_decisions[seat] += 1;
        }
        self.decisions[seat] += 1;
        self.replay.actions.push(action);
        engine
            .step(&mut self.state, action)
            .map_err(|e| OsfpError::State(format!("actor produced an illegal action: {e}")))
    }
}

/// Play jobs from `next_job` until it runs dry, handing events to `sink`.
/// Returns early, without error, once `sink` returns `false`.
pub fn run_games(
    engine: &Engine,
    encoder: &Encoder,
    cfg: &ActorConfig,
    mut next_job: impl FnMut() -> Option<GameJob>,
    mut sink: impl FnMut(GameEvent) -> bool,
) -> Result<(), OsfpError> {
    if cfg.games_in_flight == 0 || cfg.segment_len == 0 {
        return Err(OsfpError::Config("games_in_flight and segment_len must be positive".into()));
    }
    let mut slots: Vec<Option<Live>> = (0..cfg.games_in_flight).map(|_| None).collect();
    let mut exhausted = false;
    loop {
        for slot in slots.iter_mut().filter(|s| s.is_none()) {
            if exhausted {
                break;
            }
            match next_job() {
                Some(job) => {
                    for plan in &job.seats {
                        if plan.collect && !matches!(plan.agent, SeatAgent::Policy { .. }) {
                            return Err(OsfpError::Config("only policy seats can be collected".into()));
                        }
                    }
                    *slot = Some(Live::new(engine, job)?);
                }
                None => exhausted = true,
            }
        }
        if slots.iter().all(|s| s.is_none()) {
            return Ok(());
        }

        // scripted seats move immediately; finished games leave their slot
        for slot in slots.iter_mut() {
            let Some(live) = slot.as_mut() else { continue };
            loop {
                let Some(seat) = live.state.to_move() else { break };
                let action = match &live.job.seats[seat].agent {
                    SeatAgent::Policy { .. } => break,
                    SeatAgent::Random => random_action(engine, &live.state, &mut live.rngs[seat]),
                    SeatAgent::Greedy => greedy_action(engine, &live.state),
                };
                live.apply(engine, seat, action)?;
            }
            if live.state.is_terminal() {
                let live = slot.take().expect("slot is live");
                if !finish(live, cfg, &mut sink) {
                    return Ok(());
                }
            }
        }

        // group policy decisions by parameter set
        let mut groups: Vec<(Arc<PolicyParams<f32>>, Vec<usize>)> = Vec::new();
        for (i, slot) in slots.iter().enumerate() {
            let Some(live) = slot else { continue };
            let seat = live.state.to_move().expect("live game awaits a policy seat");
            let SeatAgent::Policy { params, .. } = &live.job.seats[seat].agent else { unreachable!() };
            match groups.iter_mut().find(|(p, _)| Arc::ptr_eq(p, params)) {
                Some((_, v)) => v.push(i),
                None => groups.push((params.clone(), vec![i])),
            }
        }
        for (params, members) in groups {
            let mut obs = Vec::with_capacity(members.len());
            let mut random = Vec::with_capacity(members.len());
            for &i in &members {
                let live = slots[i].as_ref().expect("member is live");
                let seat = live.state.to_move().expect("awaiting");
                let plan = &live.job.seats[seat];
                obs.push(
                    encoder
                        .encode(&live.state, seat, plan.cheat_n as usize)
                        .map_err(|e| OsfpError::State(e.to_string()))?,
                );
                random.push(live.state.stage == Stage::Cb && live.cb_decisions[seat] < plan.random_cb as usize);
            }
            let refs: Vec<_> = obs.iter().collect();
            let out = params.forward_batch(&refs, &random)?;
            for ((&i, o), ob) in members.iter().zip(out.outputs).zip(obs) {
                let live = slots[i].as_mut().expect("member is live");
                let seat = live.state.to_move().expect("awaiting");
                let plan = &live.job.seats[seat];
                let SeatAgent::Policy { argmax, .. } = plan.agent else { unreachable!() };
                let action = if argmax { o.argmax() } else { o.sample(&mut live.rngs[seat]) };
                if plan.collect {
                    if live.pending[seat].len() >= cfg.segment_len {
                        let steps = std::mem::take(&mut live.pending[seat]);
                        let segment = TrajectorySegment { hero: live.job.instance, steps, bootstrap_value: o.value };
                        if !sink(GameEvent::Segment { tag: live.job.tag, seat, segment }) {
                            return Ok(());
                        }
                    }
                    live.pending[seat].push(Step {
                        obs: ob,
                        action,
                        behavior_prob: o.probs[action.index()],
                        reward: 0.0,
                        value: o.value,
                        done: false,
                    });
                }
                live.apply(engine, seat, action)?;
            }
        }
    }
}

fn finish(mut live: Live, cfg: &ActorConfig, sink: &mut impl FnMut(GameEvent) -> bool) -> bool {
    let outcome = live.state.outcome.expect("terminal state has an outcome");
    live.replay.outcome = Some(outcome);
    for seat in 0..2 {
        let mut steps = std::mem::take(&mut live.pending[seat]);
        let Some(last) = steps.last_mut() else { continue };
        last.reward = match outcome.winner() {
            Some(w) if w == seat => 1.0,
            Some(_) => -1.0,
            None => 0.0,
        };
        last.done = true;
        debug_assert!(steps.len() <= cfg.segment_len);
        let segment = TrajectorySegment { hero: live.job.instance, steps, bootstrap_value: 0.0 };
        if !sink(GameEvent::Segment { tag: live.job.tag, seat, segment }) {
            return false;
        }
    }
    sink(GameEvent::Finished(FinishedGame {
        tag: live.job.tag,
        outcome,
        replay: live.replay,
        decisions: live.decisions,
    }))
}
