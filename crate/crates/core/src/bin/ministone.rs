use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use ministone::engine::{Engine, Replay};
use ministone::evalharness::{run_conquest_bo5, run_winrate, Agent, EvalSpec, Lineup, TournamentSpec};
use ministone::matchsvc::{http, MatchService};
use ministone::obsact::Encoder;
use ministone::osfp::{run_training, TrainConfig};
use ministone::pipeline::Discipline;
use ministone::policy::load_checkpoint;

#[derive(Parser)]
#[command(name = "ministone", version, about = "Train, evaluate and serve MiniStone agents")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run self-play training into a run directory.
    Train(TrainArgs),
    /// Win rate of A against B over every seat and hero pairing.
    Eval(EvalArgs),
    /// One Conquest best-of-five series.
    Tournament(TournamentArgs),
    /// Serve human-vs-agent matches over HTTP.
    Serve(ServeArgs),
    /// Re-simulate a replay file and print its outcome.
    Replay { file: PathBuf },
}

#[derive(Args)]
struct TrainArgs {
    /// Run directory (created if missing).
    #[arg(long, default_value = "run")]
    dir: PathBuf,
    /// Continue the run stored in this directory.
    #[arg(long, conflicts_with = "dir")]
    resume: Option<PathBuf>,
    #[arg(long)]
    cheat: bool,
    #[arg(long)]
    hero_isolation: bool,
    #[arg(long, default_value_t = 2)]
    lps: u64,
    #[arg(long, default_value_t = 200_000)]
    samples_per_lp: u64,
    #[arg(long, default_value_t = 7e-5)]
    lr: f64,
    /// Steps per minibatch.
    #[arg(long, default_value_t = 512)]
    batch_size: usize,
    #[arg(long, default_value = "queue")]
    buffer: Discipline,
    /// Buffer capacity in segments.
    #[arg(long, default_value_t = 256)]
    capacity: usize,
    #[arg(long, default_value_t = 1)]
    actors: usize,
    #[arg(long)]
    governor: bool,
    #[arg(long, default_value_t = 32)]
    games_in_flight: usize,
    #[arg(long, default_value_t = 16)]
    embed: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint path, `random` or `greedy`.
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    /// Matches per cell (18 cells).
    #[arg(long, default_value_t = 56)]
    n: usize,
    #[arg(long)]
    cheat_a: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report and replay directory.
    #[arg(long, default_value = "eval-out")]
    out: PathBuf,
}

#[derive(Args)]
struct TournamentArgs {
    /// Directory of `<hero>.deck` files.
    #[arg(long)]
    lineup_a: PathBuf,
    #[arg(long)]
    lineup_b: PathBuf,
    #[arg(long, default_value = "greedy")]
    a: String,
    #[arg(long, default_value = "greedy")]
    b: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tournament-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Agents as `name=checkpoint`.
    #[arg(long = "agent", value_parser = parse_agent)]
    agents: Vec<(String, PathBuf)>,
    /// Checkpoints here may be named directly by file name.
    #[arg(long)]
    checkpoints: Option<PathBuf>,
    #[arg(long, default_value = "decks.json")]
    decks: PathBuf,
}

fn parse_agent(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected name=checkpoint")?;
    Ok((name.to_string(), PathBuf::from(path)))
}

type Res = Result<(), Box<dyn std::error::Error>>;

fn train(engine: &Engine, a: TrainArgs) -> Res {
    let (dir, resume) = match a.resume {
        Some(d) => (d, true),
        None => (a.dir, false),
    };
    let mut cfg = TrainConfig {
        discipline: a.buffer,
        buffer_capacity: a.capacity,
        actors: a.actors,
        governor: a.governor,
        games_in_flight: a.games_in_flight,
        lps: a.lps,
        seed: a.seed,
        embed: a.embed,
        hidden: a.hidden,
        ..TrainConfig::default()
    };
    cfg.osfp.cheat = a.cheat;
    cfg.osfp.hero_isolation = a.hero_isolation;
    cfg.osfp.samples_per_lp = a.samples_per_lp;
    cfg.learner.learning_rate = a.lr;
    cfg.learner.batch_size = a.batch_size;
    let summary = run_training(engine, &cfg, &dir, resume)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn write_replays(dir: &Path, replays: &[Replay]) -> Res {
    let dir = dir.join("replays");
    fs::create_dir_all(&dir)?;
    for (i, r) in replays.iter().enumerate() {
        fs::write(dir.join(format!("{i:05}.replay")), r.to_text())?;
    }
    Ok(())
}

fn eval(engine: &Engine, a: EvalArgs) -> Res {
    let encoder = Encoder::new(engine.clone());
    let mut spec = EvalSpec::new(Agent::load(&a.a, engine)?, Agent::load(&a.b, engine)?, a.n, a.seed);
    spec.cheat_a = a.cheat_a;
    spec.keep_replays = true;
    let r = run_winrate(engine, &encoder, &spec)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("report.txt"), r.to_text())?;
    fs::write(a.out.join("report.json"), serde_json::to_string_pretty(&r)?)?;
    write_replays(&a.out, &r.replays)?;
    print!("{}", r.to_text());
    Ok(())
}

fn tournament(engine: &Engine, a: TournamentArgs) -> Res {
    let encoder = Encoder::new(engine.clone());
    let spec =
        TournamentSpec { lineups: [Lineup::load_dir(&a.lineup_a)?, Lineup::load_dir(&a.lineup_b)?], seed: a.seed };
    let agents = [Agent::load(&a.a, engine)?, Agent::load(&a.b, engine)?];
    let r = run_conquest_bo5(engine, &encoder, &spec, [&agents[0], &agents[1]])?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("report.txt"), r.to_text())?;
    let replays: Vec<Replay> = r.games.iter().map(|g| g.replay.clone()).collect();
    write_replays(&a.out, &replays)?;
    print!("{}", r.to_text());
    Ok(())
}

fn serve(engine: Engine, a: ServeArgs) -> Res {
    let checksum = engine.pool().checksum();
    let mut svc = MatchService::new(engine).with_deck_file(&a.decks)?;
    if let Some(dir) = a.checkpoints {
        svc = svc.with_checkpoint_dir(dir);
    }
    for (name, path) in a.agents {
        svc.register_agent(name, load_checkpoint::<f32>(&path, checksum)?)?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("listening on {}", a.addr);
    rt.block_on(http::serve(Arc::new(svc), a.addr))?;
    Ok(())
}

fn replay(engine: &Engine, file: &Path) -> Res {
    let r = Replay::parse(&fs::read_to_string(file)?)?;
    let end = r.simulate(engine)?;
    match end.outcome {
        Some(o) => println!("{} actions, outcome {o:?}", r.actions.len()),
        None => println!("{} actions, unfinished", r.actions.len()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let engine = Engine::ministone_v1();
    let res = match cli.cmd {
        Cmd::Train(a) => train(&engine, a),
        Cmd::Eval(a) => eval(&engine, a),
        Cmd::Tournament(a) => tournament(&engine, a),
        Cmd::Serve(a) => serve(engine, a),
        Cmd::Replay { file } => replay(&engine, &file),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
