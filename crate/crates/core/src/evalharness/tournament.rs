//! Conquest best-of-five: a hero that wins a game is retired for its owner.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{CardId, Engine, Hero, MatchResult, Replay};
use crate::obsact::Encoder;
use crate::osfp::{run_games, ActorConfig, GameEvent, GameJob, SeatPlan};

use super::{Agent, EvalError};

pub const WIN_TARGET: u32 = 3;
/// Draws retire nothing; stop a series that keeps drawing.
const MAX_GAMES: usize = 15;

/// At most one deck per hero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineup {
    pub decks: Vec<(Hero, Vec<CardId>)>,
}

impl Lineup {
    pub fn validate(&self, engine: &Engine) -> Result<(), EvalError> {
        if self.decks.is_empty() || self.decks.len() > 3 {
            return Err(EvalError::Config("a lineup holds one to three decks".into()));
        }
        for (i, (hero, deck)) in self.decks.iter().enumerate() {
            if self.decks[..i].iter().any(|(h, _)| h == hero) {
                return Err(EvalError::Config(format!("two decks for {}", hero.name())));
            }
            engine.validate_deck(*hero, deck)?;
        }
        Ok(())
    }

    /// Reads `<hero>.deck` files of whitespace-separated card ids.
    pub fn load_dir(dir: &Path) -> Result<Self, EvalError> {
        let mut decks = Vec::new();
        for hero in Hero::ALL {
            let path = dir.join(format!("{}.deck", hero.name()));
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            let cards = text
                .split_whitespace()
                .map(|t| t.parse::<u16>().map(CardId))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
            decks.push((hero, cards));
        }
        Ok(Lineup { decks })
    }
}

#[derive(Debug, Clone)]
pub struct TournamentSpec {
    pub lineups: [Lineup; 2],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesGame {
    pub game: usize,
    /// Hero played by each series player.
    pub heroes: [Hero; 2],
    /// Series player in seat 0.
    pub first: usize,
    pub seed: u64,
    /// Winning series player, if any.
    pub winner: Option<usize>,
    pub replay: Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    pub games: Vec<SeriesGame>,
    pub score: [u32; 2],
    pub winner: Option<usize>,
}

impl SeriesResult {
    pub fn to_text(&self) -> String {
        let mut out = format!("series {}:{}\n", self.score[0], self.score[1]);
        for g in &self.games {
            let w = match g.winner {
                Some(p) => format!("player {p}"),
                None => "draw".into(),
            };
            out.push_str(&format!(
                "game {} seed {} {} vs {} -> {w}\n",
                g.game + 1,
                g.seed,
                g.heroes[0].name(),
                g.heroes[1].name()
            ));
        }
        out
    }
}

/// Play one Conquest Bo5 series. Each game, both players pick uniformly among
/// their remaining heroes; seat 0 alternates starting with player 0.
pub fn run_conquest_bo5(
    engine: &Engine,
    encoder: &Encoder,
    spec: &TournamentSpec,
    agents: [&Agent; 2],
) -> Result<SeriesResult, EvalError> {
    for l in &spec.lineups {
        l.validate(engine)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut available: [Vec<usize>; 2] =
        [(0..spec.lineups[0].decks.len()).collect(), (0..spec.lineups[1].decks.len()).collect()];
    let mut score = [0u32; 2];
    let mut games = Vec::new();
    while score[0] < WIN_TARGET && score[1] < WIN_TARGET && games.len() < MAX_GAMES {
        let mut pick = [0usize; 2];
        for p in 0..2 {
            if available[p].is_empty() {
                return Err(EvalError::NoPlayableDeck(p));
            }
            pick[p] = available[p][rng.random_range(0..available[p].len())];
        }
        let seed: u64 = rng.random();
        let first = games.len() % 2;
        let seat_player = [first, 1 - first];
        let deck = |p: usize| spec.lineups[p].decks[pick[p]].clone();
        let job = GameJob {
            tag: games.len() as u64,
            seed,
            heroes: [deck(seat_player[0]).0, deck(seat_player[1]).0],
            decks: [Some(deck(seat_player[0]).1), Some(deck(seat_player[1]).1)],
            seats: [
                SeatPlan::new(agents[seat_player[0]].seat_agent()),
                SeatPlan::new(agents[seat_player[1]].seat_agent()),
            ],
            instance: deck(seat_player[0]).0,
        };
        let mut once = Some(job);
        let mut finished = None;
        run_games(
            engine,
            encoder,
            &ActorConfig { games_in_flight: 1, ..ActorConfig::default() },
            || once.take(),
            |ev| {
                if let GameEvent::Finished(g) = ev {
                    finished = Some(g);
                }
                true
            },
        )?;
        let g = finished.expect("the job finishes");
        let winner = match g.outcome {
            MatchResult::Draw => None,
            o => o.winner().map(|seat| seat_player[seat]),
        };
        if let Some(w) = winner {
            score[w] += 1;
            available[w].retain(|&d| d != pick[w]);
        }
        games.push(SeriesGame {
            game: games.len(),
            heroes: [deck(0).0, deck(1).0],
            first,
            seed,
            winner,
            replay: g.replay,
        });
    }
    let winner = (0..2).find(|&p| score[p] >= WIN_TARGET);
    Ok(SeriesResult { games, score, winner })
}
