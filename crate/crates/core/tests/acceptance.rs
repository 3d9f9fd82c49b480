//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

use std::cell::RefCell;
use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ministone::engine::{Engine, GameState, Hero, Replay, DECK_SIZE};
use ministone::evalharness::{report, run_winrate, Agent, EvalSpec};
use ministone::learner::{
    loss_and_grad, loss_value, vtrace_direct, vtrace_targets, LossBatch, LossTerm, LossWeights, TraceInput,
    TrajectorySegment, VTraceConfig, VTraceMode,
};
use ministone::obsact::{action_mask, Encoder, FeatureSchema, ObservationBundle};
use ministone::osfp::{
    assign_match_setup, gate_winrate, plan_game, rps_harness, run_games, run_training, ActorConfig, GameEvent,
    GateDecision, Opponent, OsfpConfig, OsfpState, PoolEntry, TrainConfig, RANDOM_CB_CHOICES,
};
use ministone::pipeline::{Buffer, BufferConfig, Discipline, ManualClock, RATE_WINDOW};
use ministone::policy::{load_checkpoint, NetDims, PolicyParams};
use ministone::testkit;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn tiny_params(engine: &Engine, seed: u64) -> PolicyParams<f32> {
    let dims = NetDims::new(&FeatureSchema::for_engine(engine), 4, 8);
    PolicyParams::init(dims, engine.pool().checksum(), seed).expect("params")
}

fn time_limit(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        return Err(format!("took {:.1}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()));
    }
    Ok(())
}

fn rand_trace(rng: &mut ChaCha8Rng, k: usize) -> (Vec<f64>, Vec<f64>, f64, Vec<f64>, Vec<f64>) {
    let r = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let end = rng.random_bool(0.3);
    let d = (0..k).map(|t| if end && t + 1 == k { 0.0 } else { 1.0 }).collect();
    let rho = (0..k).map(|_| rng.random_range(0.0..=3.0)).collect();
    (r, v, rng.random_range(-1.0..1.0), d, rho)
}

fn vtrace_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clipped = VTraceConfig::default();
    let canonical = VTraceConfig::canonical(1.0, 1.0);
    let floorless = VTraceConfig { mode: VTraceMode::Clipped, ..canonical };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=8);
        let (r, v, b, d, rho) = rand_trace(&mut rng, k);
        let input = TraceInput { rewards: &r, values: &v, bootstrap: b, discounts: &d, rhos: &rho };
        for cfg in [&clipped, &canonical] {
            let rec = vtrace_targets(input, cfg).map_err(|e| e.to_string())?;
            let direct = vtrace_direct(input, cfg).map_err(|e| e.to_string())?;
            for (a, o) in rec.vs.iter().zip(&direct) {
                worst = worst.max((a - o).abs());
            }
        }
        let a = vtrace_targets(input, &canonical).map_err(|e| e.to_string())?;
        let c = vtrace_targets(input, &floorless).map_err(|e| e.to_string())?;
        ensure!(a.vs == c.vs && a.advantages == c.advantages, "zero-floor clipped differs from canonical at k={k}");
    }
    ensure!(worst < 1e-10, "max deviation {worst:e}");
    time_limit(start, Duration::from_secs(10))?;
    Ok(format!("max |recursive - direct| = {worst:.1e}, floorless clip bit-exact"))
}

fn vtrace_fixture() -> Outcome {
    let (r, v, d, rho) = ([0.0, 1.0], [1.0, 2.0], [1.0, 1.0], [2.0, 0.0005]);
    let input = TraceInput { rewards: &r, values: &v, bootstrap: 0.5, discounts: &d, rhos: &rho };
    let clipped = vtrace_targets(input, &VTraceConfig::default()).map_err(|e| e.to_string())?.vs[0];
    let canonical = vtrace_targets(input, &VTraceConfig::canonical(1.0, 1.0)).map_err(|e| e.to_string())?.vs[0];
    // hand recursion: 1 + 1.007 * 1 + 1.007 * (1.9995 - 2)
    let hand = 1.0 + 1.007 + 1.007 * (1.9995 - 2.0);
    ensure!((clipped - hand).abs() < 1e-9, "clipped v0 = {clipped}, expected {hand}");
    ensure!(format!("{clipped:.5}") == "2.00650", "clipped v0 = {clipped:.5}");
    ensure!((canonical - 1.99975).abs() < 1e-9, "canonical v0 = {canonical}");
    Ok(format!("clipped v0 = {clipped:.7} (2.00650 to 5 places), canonical v0 = {canonical:.5}"))
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let engine = Engine::ministone_v1();
    let encoder = Encoder::new(engine.clone());
    let dims = NetDims::new(encoder.schema(), 4, 8);
    let mut worst: f64 = 0.0;
    for batch in 0..20u64 {
        let mut params =
            PolicyParams::<f64>::init(dims.clone(), engine.pool().checksum(), batch).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(batch);
        for x in &mut params.data {
            *x += rng.random_range(-0.2..0.2);
        }
        let segments = testkit::synthetic_segments(&encoder, 100 + batch, 2, 4);
        let obs: Vec<&ObservationBundle> = segments.iter().flat_map(|s| s.steps.iter().map(|st| &st.obs)).collect();
        let out = params.forward_batch(&obs, &vec![false; obs.len()]).map_err(|e| e.to_string())?;
        let acts = segments.iter().flat_map(|s| s.steps.iter().map(|st| st.action.index()));
        let pi: Vec<f64> = out.outputs.iter().zip(acts).map(|(o, a)| o.probs[a]).collect();
        let refs: Vec<&TrajectorySegment> = segments.iter().collect();
        let lb = LossBatch::build(&refs, &pi, &VTraceConfig::default()).map_err(|e| e.to_string())?;
        for term in LossTerm::ALL {
            let w = LossWeights::only(term);
            let (_, grad) = loss_and_grad(&params, &obs, &lb, &w, 0.2).map_err(|e| e.to_string())?;
            let eps = 1e-6;
            for t in params.layout().tensors() {
                for _ in 0..4 {
                    let idx = rng.random_range(t.range());
                    let orig = params.data[idx];
                    params.data[idx] = orig + eps;
                    let up = loss_value(&params, &obs, &lb, &w, 0.2).map_err(|e| e.to_string())?.total;
                    params.data[idx] = orig - eps;
                    let down = loss_value(&params, &obs, &lb, &w, 0.2).map_err(|e| e.to_string())?.total;
                    params.data[idx] = orig;
                    let fd = (up - down) / (2.0 * eps);
                    let err = (fd - grad[idx]).abs() / fd.abs().max(grad[idx].abs()).max(1e-4);
                    ensure!(err < 1e-4, "batch {batch} {term:?}: relative error {err:e}");
                    worst = worst.max(err);
                }
            }
        }
    }
    time_limit(start, Duration::from_secs(120))?;
    Ok(format!("5 loss terms x 20 minibatches, worst relative error {worst:.1e}"))
}

fn engine_integrity() -> Outcome {
    let start = Instant::now();
    let engine = Engine::ministone_v1();
    let n = 100_000u64;
    let mut steps = 0usize;
    for seed in 0..n {
        let heroes = [Hero::ALL[(seed % 3) as usize], Hero::ALL[(seed / 3 % 3) as usize]];
        let p = testkit::random_playout(&engine, heroes, seed, true);
        ensure!(p.violations.is_empty(), "seed {seed}: {}", p.violations[0]);
        ensure!(p.final_state.is_terminal(), "seed {seed}: did not terminate");
        ensure!(!p.reward_sum_nonzero, "seed {seed}: rewards not zero-sum");
        steps += p.actions.len();
        let mut replay = Replay::for_state(&engine.new_match(heroes[0], heroes[1], seed));
        replay.actions = p.actions;
        replay.outcome = p.final_state.outcome;
        let parsed = Replay::parse(&replay.to_text()).map_err(|e| e.to_string())?;
        let end = parsed.simulate(&engine).map_err(|e| e.to_string())?;
        ensure!(end == p.final_state, "seed {seed}: replay diverged");
    }
    time_limit(start, Duration::from_secs(300))?;
    Ok(format!("{n} playouts, {steps} steps, {:.0}s", start.elapsed().as_secs_f64()))
}

fn mask_soundness() -> Outcome {
    let engine = Engine::ministone_v1();
    let encoder = Encoder::new(engine.clone());
    let params = tiny_params(&engine, 3);
    let states = testkit::sample_states(&engine, 11, 10_000, 0.05);
    let mut cb = 0;
    for (i, s) in states.iter().enumerate() {
        let me = s.to_move().ok_or("terminal sample")?;
        let legal = engine.legal_actions(s).map_err(|e| e.to_string())?;
        let mask = action_mask(&engine, s, me);
        let from_mask: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        let from_engine: Vec<usize> = legal.iter().map(|a| a.index()).collect();
        ensure!(from_mask == from_engine, "state {i}: mask and legal actions differ");
        ensure!(action_mask(&engine, s, 1 - me).iter().all(|&m| !m), "state {i}: idle seat has legal actions");
        let obs = encoder.encode(s, me, 0).map_err(|e| e.to_string())?;
        let out = params.forward(&obs, false).map_err(|e| e.to_string())?;
        ensure!(out.probs.iter().zip(&mask).all(|(&p, &m)| m || p == 0.0), "state {i}: illegal action has mass");
        cb += (obs.delta == 1.0) as usize;
    }
    Ok(format!("{} states ({cb} deck-building), masks exact", states.len()))
}

fn pipeline_contracts() -> Outcome {
    // queue under concurrent producers
    let cfg = BufferConfig { discipline: Discipline::Queue, capacity: 64, sample_reuse: 2, batch_size: 8 };
    let buf = Arc::new(Buffer::<u64>::new(cfg, Arc::new(ManualClock::new()), 1).map_err(|e| e.to_string())?);
    let per = 2_500u64;
    let mut counts = vec![0u32; 4 * per as usize];
    let done = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|s| -> Result<(), String> {
        for p in 0..4u64 {
            let (buf, done) = (buf.clone(), &done);
            s.spawn(move || {
                for i in 0..per {
                    buf.push(p * per + i).expect("push");
                }
                done.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            });
        }
        loop {
            match buf.pop_batch_timeout(8, Duration::from_millis(50)).map_err(|e| e.to_string())? {
                Some(batch) => batch.into_iter().for_each(|d| counts[d.item as usize] += 1),
                // the tail can be shorter than a batch once production stops
                None if done.load(std::sync::atomic::Ordering::SeqCst) == 4 => {
                    while !buf.is_empty() {
                        for d in buf.pop_batch(1).map_err(|e| e.to_string())? {
                            counts[d.item as usize] += 1;
                        }
                    }
                    return Ok(());
                }
                None => {}
            }
        }
    })?;
    ensure!(counts.iter().all(|&c| c == 2), "queue delivery counts not all 2");
    ensure!(buf.metrics().overwrites == 0, "queue overwrote");

    // ring with production forced to twice consumption
    let ring = |push: usize, pop: usize| -> Result<(Option<f64>, u64, Vec<u32>), String> {
        let clock = ManualClock::new();
        let cfg = BufferConfig { discipline: Discipline::Ring, capacity: 64, sample_reuse: 2, batch_size: 1 };
        let buf = Buffer::<u64>::new(cfg, Arc::new(clock.clone()), 2).map_err(|e| e.to_string())?;
        let mut next = 0;
        // fill, then let the fill age out of the rate window
        for _ in 0..64 {
            buf.push(next).map_err(|e| e.to_string())?;
            next += 1;
        }
        clock.advance(RATE_WINDOW * 2);
        for _ in 0..300 {
            for _ in 0..push {
                buf.push(next).map_err(|e| e.to_string())?;
                next += 1;
            }
            buf.pop_batch(pop).map_err(|e| e.to_string())?;
            clock.advance(Duration::from_millis(100));
        }
        let m = buf.metrics();
        Ok((m.c, m.overwrites, buf.consumption_counts()))
    };
    let (c2, overwrites, hist) = ring(10, 10)?;
    let c2 = c2.ok_or("no ratio measured")?;
    ensure!((c2 - 2.0).abs() <= 0.2, "forced c=2 measured {c2}");
    ensure!(overwrites > 0, "ring never overwrote");
    let distinct: std::collections::BTreeSet<u32> = hist.iter().copied().collect();
    ensure!(distinct.len() > 1, "ring consumption histogram is uniform");
    let (c15, _, _) = ring(15, 20)?;
    let c15 = c15.ok_or("no ratio measured")?;
    ensure!((c15 - 1.5).abs() <= 0.15, "imposed c=1.5 measured {c15}");
    Ok(format!(
        "queue: 10000 segments x2, 0 overwrites; ring: c={c2:.3} (target 2), c={c15:.3} (target 1.5), {overwrites} overwrites, consumption counts {:?}",
        distinct
    ))
}

fn entry(i: u64) -> PoolEntry {
    PoolEntry { checkpoint: format!("h{i}"), lp: i }
}

fn state_with(rates: &[f64], count: u32) -> OsfpState {
    let mut s = OsfpState::new();
    for (i, &w) in rates.iter().enumerate() {
        s.pool.push(entry(i as u64));
        s.g.push(((2.0 * w - 1.0) * 100.0).round() as i64);
        s.c.push(100);
    }
    s.count = count;
    s
}

fn osfp_gate() -> Outcome {
    let cfg = OsfpConfig::default();
    let mut s = state_with(&[0.60, 0.58], 2);
    ensure!(s.end_of_lp_gate(&cfg, entry(9)) == GateDecision::Added { forced: false }, "all above xi not added");
    ensure!(s.pool.len() == 3 && s.count == 0 && s.g == vec![0; 3] && s.c == vec![0; 3], "add did not reset the table");

    let mut s = state_with(&[0.60, 0.50], 3);
    ensure!(s.end_of_lp_gate(&cfg, entry(9)) == GateDecision::NotAdded, "mixed rates added");
    ensure!(s.pool.len() == 2 && s.count == 4, "rejection did not count up");

    let mut s = state_with(&[0.1, 0.2], 7);
    ensure!(s.end_of_lp_gate(&cfg, entry(9)) == GateDecision::Added { forced: true }, "count > c not forced");
    ensure!(state_with(&[0.1], 6).gate_decision(&cfg) == GateDecision::NotAdded, "count == c forced");

    ensure!(gate_winrate(10, 100) == 0.55, "boundary winrate is {}", gate_winrate(10, 100));
    let mut s = OsfpState::new();
    s.pool.push(entry(0));
    s.g.push(10);
    s.c.push(100);
    ensure!(s.gate_decision(&cfg) == GateDecision::NotAdded, "winrate exactly 0.55 added");
    s.g[0] = 11;
    ensure!(s.gate_decision(&cfg).added(), "winrate 0.555 not added");
    ensure!(
        state_with(&[0.9, 0.55, 0.8], 0).gate_decision(&cfg) == GateDecision::NotAdded,
        "one boundary rate did not block"
    );
    Ok("all-above, forced (count > c), count == c, neither, and 0.55 boundary branches".into())
}

fn scheduler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let mut heroes = [[0usize; 3]; 2];
    let mut cb = [0usize; 5];
    for _ in 0..n {
        let m = assign_match_setup(true, &mut rng);
        for seat in 0..2 {
            heroes[seat][m.heroes[seat].index()] += 1;
        }
        cb[m.random_cb[0] as usize] += 1;
        ensure!(m.cheat.n_opponent <= m.cheat.n_target, "n2 > n1");
        ensure!(m.cheat.n_target as usize <= DECK_SIZE, "n1 out of range");
    }
    let mut worst: f64 = 0.0;
    for h in heroes.iter().flatten() {
        worst = worst.max((*h as f64 / n as f64 - 1.0 / 3.0).abs());
    }
    for (k, p) in RANDOM_CB_CHOICES {
        worst = worst.max((cb[k as usize] as f64 / n as f64 - p).abs());
    }
    ensure!(worst < 0.01, "max frequency error {worst}");
    ensure!(cb[3] == 0, "random-CB drew 3");
    Ok(format!("1e5 draws, max frequency error {worst:.4}, n2 <= n1 always"))
}

fn rps() -> Outcome {
    let start = Instant::now();
    let r = rps_harness(&OsfpConfig::default(), 20, 400, 7);
    let e = r.exploitability[19];
    ensure!(e < 0.1, "exploitability {e}");
    time_limit(start, Duration::from_secs(60))?;
    Ok(format!("exploitability after 20 LPs = {e:.4}, mixture {:.3?}", r.mixture))
}

fn training_smoke(out: &Mutex<Option<PathBuf>>, dir: &std::path::Path) -> Outcome {
    let start = Instant::now();
    let engine = Engine::ministone_v1();
    let encoder = Encoder::new(engine.clone());
    let mut cfg = TrainConfig { lps: 2, ..TrainConfig::default() };
    cfg.osfp.samples_per_lp = 200_000;
    cfg.learner.learning_rate = 3e-4;
    let summary = run_training(&engine, &cfg, dir, false).map_err(|e| e.to_string())?;
    let inst = &summary.instances[0];
    let trained = start.elapsed().as_secs_f64();
    *out.lock().unwrap() = Some(inst.checkpoint.clone());
    let params = load_checkpoint::<f32>(&inst.checkpoint, engine.pool().checksum()).map_err(|e| e.to_string())?;
    let a = Agent::policy("trained", Arc::new(params));
    let mut rates = Vec::new();
    for (b, need) in [(Agent::random(), 0.80), (Agent::greedy(), 0.55)] {
        let r = run_winrate(&engine, &encoder, &EvalSpec::new(a.clone(), b, 56, 12345)).map_err(|e| e.to_string())?;
        rates.push((r.b.clone(), r.winrate, r.tally.total(), need));
    }
    let text: Vec<String> = rates.iter().map(|(b, w, n, _)| format!("vs {b} {:.1}% over {n}", 100.0 * w)).collect();
    for (b, w, _, need) in &rates {
        ensure!(w >= need, "vs {b} {:.1}% < {:.0}% ({})", 100.0 * w, 100.0 * need, text.join(", "));
    }
    Ok(format!("{} env steps, train {trained:.0}s; {}", inst.env_steps, text.join(", ")))
}

fn expected_cheat_block(encoder: &Encoder, state: &GameState, seat: usize, n: usize) -> Vec<f32> {
    let mut block = vec![0f32; encoder.schema().pool_size];
    for id in state.players[1 - seat].picks.iter().take(n) {
        block[id.index()] += 0.5;
    }
    block
}

fn cheat_plumbing(trained: &Mutex<Option<PathBuf>>) -> Outcome {
    let engine = Engine::ministone_v1();
    let encoder = Encoder::new(engine.clone());
    let mut cfg = TrainConfig::default();
    cfg.osfp.cheat = true;
    let current = Arc::new(tiny_params(&engine, 1));
    let historical = vec![Arc::new(tiny_params(&engine, 2))];
    let range = encoder.schema().range("cheat_cards");
    let games = 10_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let plans: RefCell<HashMap<u64, ([u8; 2], [bool; 2], usize)>> = RefCell::default();
    let mut next = 0u64;
    let mut jobs = std::iter::from_fn(|| {
        (next < games).then(|| {
            let opponent = if next % 2 == 0 { Opponent::SelfPlay } else { Opponent::Historical(0) };
            let mut job = plan_game(&cfg, None, &current, &historical, opponent, &mut rng);
            let learner_seat = (job.tag & 1) as usize;
            plans.borrow_mut().insert(
                next,
                (
                    [job.seats[0].cheat_n, job.seats[1].cheat_n],
                    [job.seats[0].collect, job.seats[1].collect],
                    learner_seat,
                ),
            );
            job.tag = next;
            next += 1;
            job
        })
    });
    let mut pending: HashMap<(u64, usize), Vec<TrajectorySegment>> = HashMap::new();
    let mut checked = 0usize;
    let mut failure: Option<String> = None;
    let mut verify = |g: ministone::osfp::FinishedGame,
                      segs: [Vec<TrajectorySegment>; 2],
                      plan: ([u8; 2], [bool; 2], usize)|
     -> Result<(), String> {
        let (cheat, collect, learner) = plan;
        ensure!(cheat[1 - learner] <= cheat[learner], "game {}: opponent prefix exceeds learner prefix", g.tag);
        ensure!(g.replay.cheat == cheat, "game {}: replay header {:?} != {:?}", g.tag, g.replay.cheat, cheat);
        let mut steps: [Vec<&ObservationBundle>; 2] = [Vec::new(), Vec::new()];
        for seat in 0..2 {
            steps[seat] = segs[seat].iter().flat_map(|s| s.steps.iter().map(|st| &st.obs)).collect();
            if collect[seat] {
                ensure!(
                    steps[seat].len() == g.decisions[seat],
                    "game {}: seat {seat} collected {} of {}",
                    g.tag,
                    steps[seat].len(),
                    g.decisions[seat]
                );
            }
        }
        ensure!(collect[learner], "learner seat not collected");
        let mut state = g.replay.initial_state(&engine).map_err(|e| e.to_string())?;
        let mut k = [0usize; 2];
        for &a in &g.replay.actions {
            let seat = state.to_move().ok_or("moved after terminal")?;
            if collect[seat] {
                let obs = steps[seat][k[seat]];
                let n = cheat[seat] as usize;
                ensure!(obs.cheat_n == cheat[seat], "game {}: cheat_n {} != {n}", g.tag, obs.cheat_n);
                let block = &obs.features[range.clone()];
                ensure!(
                    block == expected_cheat_block(&encoder, &state, seat, n).as_slice(),
                    "game {}: cheat block mismatch",
                    g.tag
                );
                let revealed = (block.iter().sum::<f32>() * 2.0).round() as usize;
                ensure!(revealed <= n, "game {}: {revealed} picks revealed, prefix {n}", g.tag);
                if state.players[1 - seat].picks.len() == DECK_SIZE {
                    ensure!(revealed == n, "game {}: {revealed} picks revealed in battle, prefix {n}", g.tag);
                }
                k[seat] += 1;
            }
            engine.step(&mut state, a).map_err(|e| e.to_string())?;
        }
        checked += k[0] + k[1];
        Ok(())
    };
    let actor = ActorConfig { games_in_flight: 32, segment_len: 16 };
    run_games(
        &engine,
        &encoder,
        &actor,
        || jobs.next(),
        |ev| {
            match ev {
                GameEvent::Segment { tag, seat, segment } => pending.entry((tag, seat)).or_default().push(segment),
                GameEvent::Finished(g) => {
                    let segs = [
                        pending.remove(&(g.tag, 0)).unwrap_or_default(),
                        pending.remove(&(g.tag, 1)).unwrap_or_default(),
                    ];
                    let plan = plans.borrow_mut().remove(&g.tag).expect("planned game");
                    if let Err(e) = verify(g, segs, plan) {
                        failure = Some(e);
                        return false;
                    }
                }
            }
            true
        },
    )
    .map_err(|e| e.to_string())?;
    if let Some(e) = failure {
        return Err(e);
    }

    // directional, not gated
    let twin = match trained.lock().unwrap().clone() {
        Some(p) => load_checkpoint::<f32>(&p, engine.pool().checksum()).map_err(|e| e.to_string())?,
        None => tiny_params(&engine, 1),
    };
    let agent = Agent::policy("twin", Arc::new(twin));
    let mut spec = EvalSpec::new(Agent { name: "cheater".into(), ..agent.clone() }, agent, 8, 3);
    spec.cheat_a = true;
    let r = run_winrate(&engine, &encoder, &spec).map_err(|e| e.to_string())?;
    Ok(format!(
        "{games} matches, {checked} observations checked; cheat-vs-twin {:.1}% over {} (not gated)",
        100.0 * r.winrate,
        r.tally.total()
    ))
}

fn eval_harness() -> Outcome {
    let engine = Engine::ministone_v1();
    let encoder = Encoder::new(engine.clone());
    let agents = [Agent::random(), Agent::greedy(), Agent::policy("policy", Arc::new(tiny_params(&engine, 4)))];
    for a in &agents {
        let r =
            run_winrate(&engine, &encoder, &EvalSpec::new(a.clone(), a.clone(), 4, 21)).map_err(|e| e.to_string())?;
        ensure!(r.winrate == 0.5, "{} vs itself = {}", a.name, r.winrate);
    }
    let mut results = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let r = run_winrate(&engine, &encoder, &EvalSpec::new(agents[i].clone(), agents[j].clone(), 4, 22))
                    .map_err(|e| e.to_string())?;
                results.push((i, j, r));
            }
        }
    }
    for (i, j, r) in &results {
        let back = results.iter().find(|(a, b, _)| a == j && b == i).map(|x| x.2.winrate).ok_or("missing pair")?;
        ensure!(r.winrate + back == 1.0, "({i},{j}) + ({j},{i}) = {}", r.winrate + back);
    }
    let names: Vec<String> = agents.iter().map(|a| a.name.clone()).collect();
    let m = report(&names, &results).map_err(|e| e.to_string())?;
    for i in 0..3 {
        for j in 0..3 {
            let s = m.winrate[i][j].ok_or("hole in matrix")? + m.winrate[j][i].ok_or("hole in matrix")?;
            ensure!((s - 100.0).abs() < 1e-9, "matrix ({i},{j}) sums to {s}");
        }
    }
    Ok(format!(
        "self-play exactly 50.0% for 3 agents; 6 ordered pairs antisymmetric, greedy vs random {:.1}%",
        m.winrate[1][0].unwrap_or(0.0)
    ))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("tempdir");
    let trained = Mutex::new(None);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("vtrace oracle", Box::new(vtrace_oracle)),
        ("vtrace hand fixture", Box::new(vtrace_fixture)),
        ("loss gradient checks", Box::new(gradient_checks)),
        ("engine integrity", Box::new(engine_integrity)),
        ("mask soundness", Box::new(mask_soundness)),
        ("pipeline contracts", Box::new(pipeline_contracts)),
        ("osfp gate", Box::new(osfp_gate)),
        ("scheduler distributions", Box::new(scheduler)),
        ("matrix-game osfp", Box::new(rps)),
        ("training smoke", Box::new(|| training_smoke(&trained, tmp.path()))),
        ("cheat plumbing", Box::new(|| cheat_plumbing(&trained))),
        ("evaluation harness", Box::new(eval_harness)),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in &criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {name} [{secs:.1}s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1}s]: {why}");
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
