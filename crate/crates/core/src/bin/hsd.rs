use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use hsd_core::analysis::{analyze_logs, write_analysis};
use hsd_core::trainer::{
    adhoc_evaluate, evaluate, load_checkpoint, read_replays, run_training, write_replays,
    TeammateSpec, TrainConfig, CHECKPOINT_DIR, REPLAY_DIR,
};
use hsd_core::HsdError;

#[derive(Parser)]
#[command(
    name = "hsd",
    about = "Hierarchical skill discovery on a team sports simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML config, writing metrics, checkpoints and replays to OUT.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy evaluation of a checkpoint against the scripted team.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write every episode as a replay log into this directory.
        #[arg(long)]
        replays: Option<PathBuf>,
    },
    /// Evaluation with some teammates replaced: scripted:<m>, skill:<k> or training.
    Adhoc {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        teammates: String,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-skill statistics from a run's replay logs, written to RUN/analysis.
    Analyze {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        skills: usize,
    },
}

fn run(cli: Cli) -> Result<(), HsdError> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = TrainConfig::load(&config)?;
            cfg.seed = seed;
            let start = Instant::now();
            let artifacts = run_training(cfg, &out, |m| {
                eprintln!(
                    "episode {:>6}  win {:.2}  lose {:.2}  draw {:.2}  alpha {:.2}  eps {:.3}  [{:.0}s]",
                    m.episode,
                    m.win_rate,
                    m.lose_rate,
                    m.draw_rate,
                    m.alpha,
                    m.epsilon,
                    start.elapsed().as_secs_f64()
                );
            })?;
            println!("{}", artifacts.dir.display());
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            replays,
        } => {
            let (cfg, agents, _) = load_checkpoint(&checkpoint)?;
            let record = if replays.is_some() { episodes } else { 0 };
            let report = evaluate(&agents, &cfg.env, episodes, seed, record)?;
            if let Some(dir) = replays {
                write_replays(&dir, &report.logs)?;
            }
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Adhoc {
            checkpoint,
            teammates,
            episodes,
            seed,
        } => {
            let spec: TeammateSpec = teammates.parse()?;
            let (cfg, agents, _) = load_checkpoint(&checkpoint)?;
            let report = adhoc_evaluate(&agents, &cfg.env, spec, episodes, seed, 0)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Analyze { run, skills } => {
            let cfg = TrainConfig::load(&run.join(CHECKPOINT_DIR).join("config.toml"))?;
            if skills != cfg.skills {
                return Err(HsdError::Config(format!(
                    "run was trained with {} skills, not {skills}",
                    cfg.skills
                )));
            }
            let logs = read_replays(&run.join(REPLAY_DIR))?;
            let analysis = analyze_logs(&logs, skills, cfg.t_seg, &cfg.env)?;
            let dir = run.join("analysis");
            write_analysis(&dir, &analysis)?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HsdError::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
