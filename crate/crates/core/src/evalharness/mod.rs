//! Machine-vs-machine evaluation: the 18-cell winrate criterion, Conquest Bo5
//! series and pairwise winrate matrices.
//!
//! Cells are paired: A moving first as hero `x` against B's hero `y` shares
//! its seeds with A moving second as hero `y` against B's `x`. Both games
//! then seat the same heroes with the same seeds, so an agent evaluated
//! against itself scores exactly one half.

mod bots;
mod tournament;

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, EngineError, Hero, MatchResult, Replay};
use crate::obsact::Encoder;
use crate::osfp::{run_games, sample_eval_cheat, ActorConfig, GameEvent, GameJob, OsfpError, SeatAgent, SeatPlan};
use crate::policy::{load_checkpoint, PolicyError, PolicyParams};

pub use bots::{greedy_action, random_action};
pub use tournament::{run_conquest_bo5, Lineup, SeriesGame, SeriesResult, TournamentSpec, WIN_TARGET};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation: {0}")]
    Config(String),
    #[error("no results to report")]
    Empty,
    #[error("player {0} has no playable deck left")]
    NoPlayableDeck(usize),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Osfp(#[from] OsfpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub enum AgentKind {
    Policy(Arc<PolicyParams<f32>>),
    Random,
    Greedy,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub name: String,
    pub kind: AgentKind,
    /// Policy agents play their argmax instead of sampling.
    pub argmax: bool,
}

impl Agent {
    pub fn random() -> Self {
        Agent { name: "random".into(), kind: AgentKind::Random, argmax: false }
    }

    pub fn greedy() -> Self {
        Agent { name: "greedy".into(), kind: AgentKind::Greedy, argmax: false }
    }

    pub fn policy(name: impl Into<String>, params: Arc<PolicyParams<f32>>) -> Self {
        Agent { name: name.into(), kind: AgentKind::Policy(params), argmax: false }
    }

    /// `random`, `greedy`, or a checkpoint path.
    pub fn load(spec: &str, engine: &Engine) -> Result<Self, EvalError> {
        match spec {
            "random" => Ok(Agent::random()),
            "greedy" => Ok(Agent::greedy()),
            path => {
                let params = load_checkpoint::<f32>(Path::new(path), engine.pool().checksum())?;
                Ok(Agent::policy(path, Arc::new(params)))
            }
        }
    }

    pub(crate) fn seat_agent(&self) -> SeatAgent {
        match &self.kind {
            AgentKind::Policy(p) => SeatAgent::Policy { params: p.clone(), argmax: self.argmax },
            AgentKind::Random => SeatAgent::Random,
            AgentKind::Greedy => SeatAgent::Greedy,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalSpec {
    pub a: Agent,
    pub b: Agent,
    pub matches_per_cell: usize,
    pub seed: u64,
    /// A sees a uniformly drawn prefix of B's picks.
    pub cheat_a: bool,
    pub games_in_flight: usize,
    /// Keep every match's replay in the result.
    pub keep_replays: bool,
}

impl EvalSpec {
    pub fn new(a: Agent, b: Agent, matches_per_cell: usize, seed: u64) -> Self {
        EvalSpec { a, b, matches_per_cell, seed, cheat_a: false, games_in_flight: 32, keep_replays: false }
    }
}

/// Wins, losses and draws from A's side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub wins: u64,
    pub losses: u64,
    pub draws: u64,
}

impl Tally {
    pub fn total(&self) -> u64 {
        self.wins + self.losses + self.draws
    }

    pub fn add(&mut self, o: Tally) {
        self.wins += o.wins;
        self.losses += o.losses;
        self.draws += o.draws;
    }

    /// Draws count half.
    pub fn winrate(&self) -> f64 {
        (self.wins as f64 + 0.5 * self.draws as f64) / self.total() as f64
    }

    /// Half-width of the normal-approximation 95% interval on the per-match score.
    pub fn ci95(&self) -> f64 {
        let n = self.total() as f64;
        let p = self.winrate();
        // per-match score variance with draws scored 0.5
        let second = (self.wins as f64 + 0.25 * self.draws as f64) / n;
        let var = (second - p * p).max(0.0);
        Z95 * (var / n).sqrt()
    }

    fn record(&mut self, outcome: MatchResult, a_seat: usize) {
        match outcome.winner() {
            Some(w) if w == a_seat => self.wins += 1,
            Some(_) => self.losses += 1,
            None => self.draws += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub a_first: bool,
    pub hero_a: Hero,
    pub hero_b: Hero,
}

impl Cell {
    /// All 18 cells: first/second × A's hero × B's hero.
    pub fn all() -> Vec<Cell> {
        let mut v = Vec::with_capacity(18);
        for a_first in [true, false] {
            for hero_a in Hero::ALL {
                for hero_b in Hero::ALL {
                    v.push(Cell { a_first, hero_a, hero_b });
                }
            }
        }
        v
    }

    fn a_seat(&self) -> usize {
        if self.a_first {
            0
        } else {
            1
        }
    }

    fn seat_heroes(&self) -> [Hero; 2] {
        if self.a_first {
            [self.hero_a, self.hero_b]
        } else {
            [self.hero_b, self.hero_a]
        }
    }

    /// Seed of match `k`; depends only on the seated heroes, which pairs cells.
    pub fn match_seed(&self, base: u64, k: usize) -> u64 {
        let h = self.seat_heroes();
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        rng.set_stream(1 + (h[0].index() * 3 + h[1].index()) as u64);
        rng.set_word_pos(2 * k as u128);
        rng.random()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub tally: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinrateResult {
    pub a: String,
    pub b: String,
    pub tally: Tally,
    pub winrate: f64,
    pub ci95: f64,
    pub cells: Vec<CellResult>,
    /// Per-match outcomes in job order (cell-major).
    pub outcomes: Vec<MatchResult>,
    #[serde(skip)]
    pub replays: Vec<Replay>,
}

impl WinrateResult {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} vs {}: winrate {:.2}% ± {:.2}% over {} matches (W {} L {} D {})\n",
            self.a,
            self.b,
            100.0 * self.winrate,
            100.0 * self.ci95,
            self.tally.total(),
            self.tally.wins,
            self.tally.losses,
            self.tally.draws
        );
        for c in &self.cells {
            out.push_str(&format!(
                "  {:<6} {:<7} vs {:<7} {:6.2}%  W {} L {} D {}\n",
                if c.cell.a_first { "first" } else { "second" },
                c.cell.hero_a.name(),
                c.cell.hero_b.name(),
                100.0 * c.tally.winrate(),
                c.tally.wins,
                c.tally.losses,
                c.tally.draws
            ));
        }
        out
    }
}

/// Random-CB is off; with `cheat_a`, A sees `n ~ U{0..30}` of B's picks.
pub fn run_winrate(engine: &Engine, encoder: &Encoder, spec: &EvalSpec) -> Result<WinrateResult, EvalError> {
    if spec.matches_per_cell == 0 {
        return Err(EvalError::Config("matches_per_cell must be at least 1".into()));
    }
    let cells = Cell::all();
    let n = spec.matches_per_cell;
    let total = cells.len() * n;
    let mut jobs = (0..total).map(|j| {
        let (ci, k) = (j / n, j % n);
        let cell = cells[ci];
        let seed = cell.match_seed(spec.seed, k);
        let a_seat = cell.a_seat();
        let mut a_plan = SeatPlan::new(spec.a.seat_agent());
        if spec.cheat_a {
            a_plan.cheat_n = sample_eval_cheat(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xc4ea_7000));
        }
        let b_plan = SeatPlan::new(spec.b.seat_agent());
        let seats = if a_seat == 0 { [a_plan, b_plan] } else { [b_plan, a_plan] };
        GameJob { tag: j as u64, seed, heroes: cell.seat_heroes(), decks: [None, None], seats, instance: cell.hero_a }
    });
    let mut outcomes: Vec<Option<MatchResult>> = vec![None; total];
    let mut replays: Vec<Option<Replay>> = vec![None; total];
    let actor = ActorConfig { games_in_flight: spec.games_in_flight.max(1), ..ActorConfig::default() };
    run_games(
        engine,
        encoder,
        &actor,
        || jobs.next(),
        |ev| {
            if let GameEvent::Finished(g) = ev {
                outcomes[g.tag as usize] = Some(g.outcome);
                if spec.keep_replays {
                    replays[g.tag as usize] = Some(g.replay);
                }
            }
            true
        },
    )?;

    let outcomes: Vec<MatchResult> = outcomes.into_iter().map(|o| o.expect("every job finishes")).collect();
    let mut tally = Tally::default();
    let mut cell_results = Vec::with_capacity(cells.len());
    for (ci, cell) in cells.iter().enumerate() {
        let mut t = Tally::default();
        for o in &outcomes[ci * n..(ci + 1) * n] {
            t.record(*o, cell.a_seat());
        }
        tally.add(t);
        cell_results.push(CellResult { cell: *cell, tally: t });
    }
    Ok(WinrateResult {
        a: spec.a.name.clone(),
        b: spec.b.name.clone(),
        tally,
        winrate: tally.winrate(),
        ci95: tally.ci95(),
        cells: cell_results,
        outcomes,
        replays: replays.into_iter().flatten().collect(),
    })
}

/// Pairwise winrates in percent; entry `(i, j)` is agent `i`'s winrate against `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub agents: Vec<String>,
    pub winrate: Vec<Vec<Option<f64>>>,
    pub ci95: Vec<Vec<Option<f64>>>,
}

/// Build the matrix from `(i, j, result)` triples; the transpose is filled as `100 - x`.
pub fn report(agents: &[String], results: &[(usize, usize, WinrateResult)]) -> Result<MatrixReport, EvalError> {
    if results.is_empty() || agents.is_empty() {
        return Err(EvalError::Empty);
    }
    let k = agents.len();
    let mut winrate = vec![vec![None; k]; k];
    let mut ci95 = vec![vec![None; k]; k];
    for i in 0..k {
        winrate[i][i] = Some(50.0);
    }
    for (i, j, r) in results {
        let (i, j) = (*i, *j);
        if i >= k || j >= k {
            return Err(EvalError::Config(format!("result ({i}, {j}) outside {k} agents")));
        }
        if i == j {
            continue;
        }
        let w = 100.0 * r.winrate;
        winrate[i][j] = Some(w);
        winrate[j][i] = Some(100.0 - w);
        ci95[i][j] = Some(100.0 * r.ci95);
        ci95[j][i] = Some(100.0 * r.ci95);
    }
    Ok(MatrixReport { agents: agents.to_vec(), winrate, ci95 })
}

impl MatrixReport {
    pub fn to_text(&self) -> String {
        let width = self.agents.iter().map(|a| a.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{:width$}", "");
        for a in &self.agents {
            out.push_str(&format!(" {a:>width$}"));
        }
        out.push('\n');
        for (i, a) in self.agents.iter().enumerate() {
            out.push_str(&format!("{a:width$}"));
            for j in 0..self.agents.len() {
                let cell = match (self.winrate[i][j], self.ci95[i][j]) {
                    (Some(w), Some(c)) => format!("{w:.1}±{c:.1}"),
                    (Some(w), None) => format!("{w:.1}"),
                    _ => "-".into(),
                };
                out.push_str(&format!(" {cell:>width$}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests;
