//! The outer OSFP loop: actors feed a buffer, the learner consumes it, and
//! every learning period ends with a gate decision and a persisted state.
//!
//! Run directory:
//!
//! ```text
//! config.json              configuration snapshot
//! state.json               pools, payoffs and progress; rewritten after every gate
//! checkpoints/<sha>.ckpt   frozen pool members, content addressed
//! learner-<key>.ckpt       latest learner parameters per instance
//! payoffs/lp-NNNN-<key>.txt payoff table at each gate
//! events.jsonl             LP start/end and gate decisions
//! metrics.jsonl            learner updates and buffer rates
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{Engine, Hero};
use crate::learner::{Learner, LearnerConfig, TrainBatch, TrajectorySegment, SEGMENT_LEN};
use crate::obsact::{Encoder, FeatureSchema};
use crate::pipeline::{Buffer, BufferConfig, Discipline, Governor, SystemClock};
use crate::policy::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, NetDims, PolicyParams};

use super::actor::{run_games, ActorConfig, GameEvent, GameJob, SeatAgent, SeatPlan};
use super::{assign_match_setup, write_atomic, GateDecision, Opponent, OsfpConfig, OsfpError, OsfpState, PoolEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub osfp: OsfpConfig,
    pub learner: LearnerConfig,
    pub discipline: Discipline,
    /// Buffer capacity in segments.
    pub buffer_capacity: usize,
    /// Actor threads per instance.
    pub actors: usize,
    /// Pause and resume actors to hold the consumption ratio in band.
    #[serde(default)]
    pub governor: bool,
    pub games_in_flight: usize,
    /// Train until this many LPs have completed.
    pub lps: u64,
    pub seed: u64,
    pub embed: usize,
    pub hidden: usize,
    /// Apply the random-CB exploration schedule.
    pub random_cb: bool,
    /// Force every gate to this outcome instead of evaluating it.
    pub gate_override: Option<bool>,
    /// Learner updates between metric lines.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            osfp: OsfpConfig::default(),
            learner: LearnerConfig::default(),
            discipline: Discipline::Queue,
            buffer_capacity: 256,
            actors: 1,
            governor: false,
            games_in_flight: 32,
            lps: 2,
            seed: 0,
            embed: 16,
            hidden: 64,
            random_cb: true,
            gate_override: None,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), OsfpError> {
        self.osfp.validate()?;
        self.learner.validate()?;
        if self.actors == 0 || self.games_in_flight == 0 || self.embed == 0 || self.hidden == 0 {
            return Err(OsfpError::Config("actors, games_in_flight and network sizes must be positive".into()));
        }
        self.buffer_config().validate()?;
        Ok(())
    }

    /// Segments per learner update.
    pub fn segments_per_batch(&self) -> usize {
        self.learner.batch_size.div_ceil(SEGMENT_LEN).max(1)
    }

    pub fn buffer_config(&self) -> BufferConfig {
        BufferConfig {
            discipline: self.discipline,
            capacity: self.buffer_capacity,
            sample_reuse: self.learner.sample_reuse,
            batch_size: self.segments_per_batch(),
        }
    }

    /// Instance keys: one per hero under isolation, else a single shared one.
    pub fn instance_keys(&self) -> Vec<Option<Hero>> {
        if self.osfp.hero_isolation {
            Hero::ALL.iter().map(|&h| Some(h)).collect()
        } else {
            vec![None]
        }
    }
}

/// Persisted per-instance progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceState {
    pub key: Option<Hero>,
    pub osfp: OsfpState,
    pub updates: u64,
    pub env_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub lps_completed: u64,
    pub instances: Vec<InstanceState>,
}

impl RunState {
    pub fn load(dir: &Path) -> Result<Self, OsfpError> {
        let text = fs::read_to_string(dir.join("state.json"))?;
        let s: RunState = serde_json::from_str(&text).map_err(|e| OsfpError::State(e.to_string()))?;
        for i in &s.instances {
            i.osfp.check()?;
        }
        Ok(s)
    }

    fn save(&self, dir: &Path) -> Result<(), OsfpError> {
        write_atomic(&dir.join("state.json"), serde_json::to_string_pretty(self).expect("state serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub key: Option<Hero>,
    pub pool_size: usize,
    pub updates: u64,
    pub env_steps: u64,
    pub gates: Vec<GateDecision>,
    /// Latest learner parameters.
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub lps_completed: u64,
    pub instances: Vec<InstanceSummary>,
}

fn key_name(key: Option<Hero>) -> &'static str {
    key.map_or("shared", |h| h.name())
}

fn learner_path(dir: &Path, key: Option<Hero>) -> PathBuf {
    dir.join(format!("learner-{}.ckpt", key_name(key)))
}

struct Logs {
    events: Mutex<fs::File>,
    metrics: Mutex<fs::File>,
}

impl Logs {
    fn open(dir: &Path) -> Result<Self, OsfpError> {
        let open = |name: &str| OpenOptions::new().create(true).append(true).open(dir.join(name));
        Ok(Logs { events: Mutex::new(open("events.jsonl")?), metrics: Mutex::new(open("metrics.jsonl")?) })
    }

    fn event(&self, v: serde_json::Value) -> Result<(), OsfpError> {
        writeln!(self.events.lock().unwrap_or_else(|e| e.into_inner()), "{v}")?;
        Ok(())
    }

    fn metric(&self, line: &str) -> Result<(), OsfpError> {
        writeln!(self.metrics.lock().unwrap_or_else(|e| e.into_inner()), "{line}")?;
        Ok(())
    }
}

/// Store `params` under its content hash and return the file name.
fn freeze(dir: &Path, params: &PolicyParams<f32>) -> Result<String, OsfpError> {
    let bytes = write_checkpoint(params);
    let digest = Sha256::digest(&bytes);
    let name: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect::<String>() + ".ckpt";
    let path = dir.join("checkpoints").join(&name);
    if !path.exists() {
        write_atomic(&path, &bytes)?;
    }
    Ok(name)
}

/// Run (or resume) training in `dir` until `cfg.lps` learning periods have completed.
pub fn run_training(engine: &Engine, cfg: &TrainConfig, dir: &Path, resume: bool) -> Result<TrainSummary, OsfpError> {
    cfg.validate()?;
    let encoder = Encoder::new(engine.clone());
    let dims = NetDims::new(&FeatureSchema::for_engine(engine), cfg.embed, cfg.hidden);
    fs::create_dir_all(dir.join("checkpoints"))?;
    fs::create_dir_all(dir.join("payoffs"))?;
    let keys = cfg.instance_keys();

    let (mut state, mut learners) = if resume && dir.join("state.json").exists() {
        let old: TrainConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)
            .map_err(|e| OsfpError::State(format!("config.json: {e}")))?;
        if old.osfp.hero_isolation != cfg.osfp.hero_isolation || old.embed != cfg.embed || old.hidden != cfg.hidden {
            return Err(OsfpError::Config("resume config differs in isolation or network shape".into()));
        }
        let state = RunState::load(dir)?;
        let mut learners = Vec::new();
        for inst in &state.instances {
            let mut params = load_checkpoint::<f32>(&learner_path(dir, inst.key), engine.pool().checksum())?;
            params.meta.hero_tag = inst.key;
            learners.push(Learner::new(params, cfg.learner)?);
        }
        (state, learners)
    } else {
        let mut learners = Vec::new();
        let mut instances = Vec::new();
        for (k, key) in keys.iter().enumerate() {
            let mut params =
                PolicyParams::<f32>::init(dims, engine.pool().checksum(), cfg.seed.wrapping_add(k as u64))?;
            params.meta.hero_tag = *key;
            save_checkpoint(&params, &learner_path(dir, *key))?;
            learners.push(Learner::new(params, cfg.learner)?);
            instances.push(InstanceState { key: *key, osfp: OsfpState::new(), updates: 0, env_steps: 0 });
        }
        let state = RunState { lps_completed: 0, instances };
        state.save(dir)?;
        (state, learners)
    };
    write_atomic(&dir.join("config.json"), serde_json::to_string_pretty(cfg).expect("config serializes").as_bytes())?;
    let logs = Logs::open(dir)?;

    let mut gates: Vec<Vec<GateDecision>> = vec![Vec::new(); learners.len()];
    while state.lps_completed < cfg.lps {
        let lp = state.lps_completed;
        logs.event(serde_json::json!({"event": "lp_start", "lp": lp}))?;
        for (k, learner) in learners.iter_mut().enumerate() {
            let inst = &mut state.instances[k];
            let consumed = run_lp(engine, &encoder, cfg, dir, &logs, lp, inst, learner)?;
            inst.env_steps += consumed;
            inst.updates = learner.updates().max(inst.updates);

            let decision = match cfg.gate_override {
                Some(true) => GateDecision::Added { forced: false },
                Some(false) => GateDecision::NotAdded,
                None => inst.osfp.gate_decision(&cfg.osfp),
            };
            let table = inst.osfp.payoff_table();
            write_atomic(
                &dir.join("payoffs").join(format!("lp-{lp:04}-{}.txt", key_name(inst.key))),
                table.as_bytes(),
            )?;
            save_checkpoint(&learner.params, &learner_path(dir, inst.key))?;
            let checkpoint = if decision.added() { freeze(dir, &learner.params)? } else { String::new() };
            inst.osfp.apply_gate(decision, PoolEntry { checkpoint: checkpoint.clone(), lp });
            gates[k].push(decision);
            logs.event(serde_json::json!({
                "event": "gate",
                "lp": lp,
                "instance": key_name(inst.key),
                "decision": decision,
                "checkpoint": checkpoint,
                "pool_size": inst.osfp.pool.len(),
                "env_steps": consumed,
            }))?;
        }
        state.lps_completed += 1;
        state.save(dir)?;
        logs.event(serde_json::json!({"event": "lp_end", "lp": lp}))?;
    }

    let instances = state
        .instances
        .iter()
        .zip(gates)
        .map(|(inst, gates)| InstanceSummary {
            key: inst.key,
            pool_size: inst.osfp.pool.len(),
            updates: inst.updates,
            env_steps: inst.env_steps,
            gates,
            checkpoint: learner_path(dir, inst.key),
        })
        .collect();
    Ok(TrainSummary { lps_completed: state.lps_completed, instances })
}

/// Draw the seats of one training match. The tag packs the opponent
/// (0 self-play, i + 1 for pool entry i) above the learner seat bit.
pub fn plan_game<R: Rng + ?Sized>(
    cfg: &TrainConfig,
    key: Option<Hero>,
    current: &Arc<PolicyParams<f32>>,
    historical: &[Arc<PolicyParams<f32>>],
    opponent: Opponent,
    rng: &mut R,
) -> GameJob {
    let mut setup = assign_match_setup(cfg.osfp.cheat, rng);
    if let Some(h) = key {
        setup.heroes[0] = h;
    }
    let learner_seat = rng.random_range(0..2usize);
    let random_cb = if cfg.random_cb { setup.random_cb } else { [0, 0] };
    let mine = SeatPlan {
        agent: SeatAgent::policy(current.clone()),
        collect: true,
        cheat_n: setup.cheat.n_target,
        random_cb: random_cb[0],
    };
    let (theirs, opp_tag) = match opponent {
        Opponent::SelfPlay => (
            SeatPlan {
                agent: SeatAgent::policy(current.clone()),
                collect: true,
                cheat_n: setup.cheat.n_opponent,
                random_cb: random_cb[1],
            },
            0,
        ),
        Opponent::Historical(i) => (
            SeatPlan {
                agent: SeatAgent::policy(historical[i].clone()),
                collect: false,
                cheat_n: setup.cheat.n_opponent,
                random_cb: random_cb[1],
            },
            i as u64 + 1,
        ),
    };
    let (seats, heroes) = if learner_seat == 0 {
        ([mine, theirs], setup.heroes)
    } else {
        ([theirs, mine], [setup.heroes[1], setup.heroes[0]])
    };
    GameJob {
        tag: opp_tag << 1 | learner_seat as u64,
        seed: rng.random(),
        heroes,
        decks: [None, None],
        seats,
        // without isolation segments are keyed by the learner-side hero
        instance: key.unwrap_or(setup.heroes[0]),
    }
}

/// One LP for one instance; returns the environment steps consumed.
#[allow(clippy::too_many_arguments)]
fn run_lp(
    engine: &Engine,
    encoder: &Encoder,
    cfg: &TrainConfig,
    dir: &Path,
    logs: &Logs,
    lp: u64,
    inst: &mut InstanceState,
    learner: &mut Learner,
) -> Result<u64, OsfpError> {
    let pool_checksum = engine.pool().checksum();
    let historical: Vec<Arc<PolicyParams<f32>>> = inst
        .osfp
        .pool
        .iter()
        .map(|e| {
            let bytes = fs::read(dir.join("checkpoints").join(&e.checkpoint))?;
            Ok(Arc::new(read_checkpoint::<f32>(&bytes, pool_checksum)?))
        })
        .collect::<Result<_, OsfpError>>()?;
    let key = inst.key;
    let buffer = Arc::new(Buffer::<TrajectorySegment>::new(
        cfg.buffer_config(),
        Arc::new(SystemClock::new()),
        cfg.seed ^ lp.wrapping_mul(0x9e37_79b9),
    )?);
    let snapshot = RwLock::new(Arc::new(learner.params.clone()));
    let osfp = Mutex::new(std::mem::take(&mut inst.osfp));
    let stop = AtomicBool::new(false);
    let running = AtomicUsize::new(cfg.actors);
    let osfp_cfg = cfg.osfp;
    let per_batch = cfg.segments_per_batch();
    let reuse = cfg.learner.sample_reuse as u64;

    let result = std::thread::scope(|scope| -> Result<u64, OsfpError> {
        let mut handles = Vec::new();
        for actor_id in 0..cfg.actors {
            let (buffer, snapshot, osfp, stop, running, historical) =
                (&buffer, &snapshot, &osfp, &stop, &running, &historical);
            handles.push(scope.spawn(move || -> Result<(), OsfpError> {
                let stream = (lp << 16) | ((actor_id as u64) << 4) | key.map_or(3, |h| h.index() as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(stream);
                let next_job = || {
                    while actor_id >= running.load(Ordering::Relaxed) && !stop.load(Ordering::Relaxed) {
                        std::thread::sleep(Duration::from_millis(20));
                    }
                    if stop.load(Ordering::Relaxed) {
                        return None;
                    }
                    let current = snapshot.read().unwrap_or_else(|e| e.into_inner()).clone();
                    let opponent = osfp.lock().unwrap_or_else(|e| e.into_inner()).sample_opponent(&osfp_cfg, &mut rng);
                    Some(plan_game(cfg, key, &current, historical, opponent, &mut rng))
                };
                let sink = |ev: GameEvent| match ev {
                    GameEvent::Segment { segment, .. } => buffer.push(segment).is_ok(),
                    GameEvent::Finished(g) => {
                        let (opp, learner_seat) = (g.tag >> 1, (g.tag & 1) as usize);
                        if opp > 0 {
                            let r = match g.outcome.winner() {
                                Some(w) if w == learner_seat => 1,
                                Some(_) => -1,
                                None => 0,
                            };
                            let mut s = osfp.lock().unwrap_or_else(|e| e.into_inner());
                            if s.record_result(opp as usize - 1, r).is_err() {
                                return false;
                            }
                        }
                        !stop.load(Ordering::Relaxed)
                    }
                };
                let actor = ActorConfig { games_in_flight: cfg.games_in_flight, segment_len: SEGMENT_LEN };
                run_games(engine, encoder, &actor, next_job, sink)
            }));
        }

        let mut learn = || -> Result<u64, OsfpError> {
            let governor = Governor::default();
            let mut delivered_steps = 0u64;
            let started = Instant::now();
            while delivered_steps / reuse < osfp_cfg.samples_per_lp {
                if handles.iter().all(|h| h.is_finished()) {
                    return Err(OsfpError::State("every actor stopped before the LP budget was met".into()));
                }
                let Some(items) = buffer.pop_batch_timeout(per_batch, Duration::from_millis(200))? else { continue };
                let segments: Vec<TrajectorySegment> = items.into_iter().map(|d| d.item).collect();
                if let Some(h) = key {
                    if let Some(s) = segments.iter().find(|s| s.hero != h) {
                        return Err(OsfpError::State(format!(
                            "{} segment reached the {} learner",
                            s.hero.name(),
                            h.name()
                        )));
                    }
                }
                let mut batch = TrainBatch::new(segments);
                delivered_steps += batch.steps() as u64;
                let mut m = learner.update(&mut batch)?;
                *snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(learner.params.clone());
                if m.update % cfg.log_every.max(1) == 0 {
                    let pm = buffer.metrics();
                    m.c_ratio = pm.c;
                    logs.metric(&m.log_line())?;
                    logs.metric(&pm.log_line())?;
                    if cfg.governor {
                        let n = governor.adjust(pm.c, running.load(Ordering::Relaxed), cfg.actors);
                        running.store(n, Ordering::Relaxed);
                    }
                }
            }
            logs.metric(
                &serde_json::json!({
                    "lp": lp,
                    "instance": key_name(key),
                    "steps": delivered_steps / reuse,
                    "seconds": started.elapsed().as_secs_f64(),
                })
                .to_string(),
            )?;
            Ok(delivered_steps / reuse)
        };
        let outcome = learn();
        stop.store(true, Ordering::SeqCst);
        running.store(cfg.actors, Ordering::SeqCst);
        buffer.shutdown();
        let mut actor_err = None;
        for h in handles {
            match h.join() {
                Ok(Err(e)) => actor_err = Some(e),
                Ok(Ok(())) => {}
                Err(_) => actor_err = Some(OsfpError::State("actor thread panicked".into())),
            }
        }
        match (outcome, actor_err) {
            (Ok(n), None) => Ok(n),
            (Ok(_), Some(e)) => Err(e),
            (Err(e), _) => Err(e),
        }
    });
    inst.osfp = osfp.into_inner().unwrap_or_else(|e| e.into_inner());
    result
}
