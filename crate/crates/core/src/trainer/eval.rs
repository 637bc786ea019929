use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::agents::Agents;
use super::{derive_seed, rng_stream, stream};
use crate::decoder::{preprocess_segment, DecoderInput};
use crate::env::{
    decoder_entry_indices, scripted_action, EnvConfig, EventRecord, GameState, Sts2Env, Team,
};
use crate::error::{HsdError, Result};

/// Who fills the home team's seats during an ad-hoc evaluation. Replaced
/// seats are taken from the end of the roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeammateSpec {
    Training,
    Scripted(usize),
    Skill(usize),
}

impl FromStr for TeammateSpec {
    type Err = HsdError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || HsdError::Config(format!("unknown teammate spec {s:?}"));
        if s == "training" {
            return Ok(TeammateSpec::Training);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let value: usize = arg.parse().map_err(|_| bad())?;
        match kind {
            "scripted" => Ok(TeammateSpec::Scripted(value)),
            "skill" => Ok(TeammateSpec::Skill(value)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seat {
    Learned,
    Scripted,
    Pinned(usize),
}

fn seats(agents: &Agents, spec: TeammateSpec) -> Result<Vec<Seat>> {
    let n = agents.n_agents;
    let mut seats = vec![Seat::Learned; n];
    match spec {
        TeammateSpec::Training => {}
        TeammateSpec::Scripted(m) => {
            if m >= n {
                return Err(HsdError::Config(format!(
                    "{m} scripted teammates leave no learned agent in a team of {n}"
                )));
            }
            for s in &mut seats[n - m..] {
                *s = Seat::Scripted;
            }
        }
        TeammateSpec::Skill(k) => {
            if !agents.algorithm.is_hierarchical() {
                return Err(HsdError::Config(format!(
                    "{} has no skills to pin",
                    agents.algorithm.name()
                )));
            }
            if k >= agents.skills {
                return Err(HsdError::Config(format!("skill {k} out of range")));
            }
            seats[n - 1] = Seat::Pinned(k);
        }
    }
    Ok(seats)
}

/// One simulator step of an evaluation episode: the state the actions were
/// chosen in, the actions, the active skills and what the step produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub state: GameState,
    pub home_actions: Vec<usize>,
    pub away_actions: Vec<usize>,
    pub skills: Option<Vec<usize>>,
    pub rewards: [f64; 2],
    pub events: Vec<EventRecord>,
    pub done: bool,
    pub winner: Option<Team>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub wins: usize,
    pub losses: usize,
    pub draws: usize,
    pub win_rate: f64,
    pub lose_rate: f64,
    pub draw_rate: f64,
    #[serde(skip)]
    pub logs: Vec<Vec<StepRecord>>,
}

impl EvalReport {
    pub fn margin(&self) -> f64 {
        self.win_rate - self.lose_rate
    }
}

/// Greedy play against the scripted away team.
pub fn evaluate(
    agents: &Agents,
    env: &EnvConfig,
    episodes: usize,
    seed: u64,
    record: usize,
) -> Result<EvalReport> {
    adhoc_evaluate(agents, env, TeammateSpec::Training, episodes, seed, record)
}

/// Greedy play with some home seats replaced according to `spec`. The first
/// `record` episodes are returned as step logs.
pub fn adhoc_evaluate(
    agents: &Agents,
    env_cfg: &EnvConfig,
    spec: TeammateSpec,
    episodes: usize,
    seed: u64,
    record: usize,
) -> Result<EvalReport> {
    if env_cfg.agents_per_team != agents.n_agents {
        return Err(HsdError::Config(
            "environment and policy team sizes differ".into(),
        ));
    }
    let seats = seats(agents, spec)?;
    let mut env = Sts2Env::new(env_cfg.clone())?;
    let n = agents.n_agents;
    let hierarchical = agents.algorithm.is_hierarchical();
    let (mut wins, mut losses, mut draws) = (0, 0, 0);
    let mut logs = Vec::new();
    for ep in 0..episodes {
        let ep_seed = derive_seed(seed, ep as u64);
        env.reset(ep_seed);
        let mut opp_rng = rng_stream(ep_seed, stream::OPPONENT);
        let mut mate_rng = rng_stream(ep_seed, stream::TEAMMATE);
        let mut skills = vec![0; n];
        let mut log = Vec::new();
        let mut t = 0;
        loop {
            let obs = env.observations(Team::Home);
            if hierarchical && t % agents.t_seg == 0 {
                let mut greedy_rng = rng_stream(0, 0);
                skills = agents.choose_skills(&obs, 0.0, &mut greedy_rng)?;
                for (z, seat) in skills.iter_mut().zip(&seats) {
                    if let Seat::Pinned(k) = seat {
                        *z = *k;
                    }
                }
            }
            let mut home = Vec::with_capacity(n);
            for i in 0..n {
                home.push(match seats[i] {
                    Seat::Scripted => {
                        scripted_action(env_cfg, env.state(), Team::Home, i, &mut mate_rng)
                    }
                    _ => agents.greedy_action(&obs[i], skills[i])?,
                });
            }
            let away: Vec<usize> = (0..n)
                .map(|j| scripted_action(env_cfg, env.state(), Team::Away, j, &mut opp_rng))
                .collect();
            let before = (ep < record).then(|| env.state().clone());
            let out = env.step(&home, &away)?;
            if let Some(state) = before {
                log.push(StepRecord {
                    episode: ep,
                    step: t,
                    state,
                    home_actions: home,
                    away_actions: away,
                    skills: hierarchical.then(|| skills.clone()),
                    rewards: out.rewards,
                    events: out.events.clone(),
                    done: out.done,
                    winner: out.winner,
                });
            }
            t += 1;
            if out.done {
                match out.winner {
                    Some(Team::Home) => wins += 1,
                    Some(Team::Away) => losses += 1,
                    None => draws += 1,
                }
                break;
            }
        }
        if ep < record {
            logs.push(log);
        }
    }
    let total = episodes.max(1) as f64;
    Ok(EvalReport {
        episodes,
        wins,
        losses,
        draws,
        win_rate: wins as f64 / total,
        lose_rate: losses as f64 / total,
        draw_rate: draws as f64 / total,
        logs,
    })
}

/// Completed segments from greedy rollouts against the scripted team,
/// preprocessed for the decoder and labelled with the active skill.
pub fn collect_segments(
    agents: &Agents,
    env_cfg: &EnvConfig,
    k_skip: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, DecoderInput)>> {
    if !agents.algorithm.is_hierarchical() {
        return Err(HsdError::Config(format!(
            "{} has no skills",
            agents.algorithm.name()
        )));
    }
    let n = agents.n_agents;
    let entries = decoder_entry_indices(n);
    let mut env = Sts2Env::new(env_cfg.clone())?;
    let mut out = Vec::with_capacity(count);
    let mut greedy_rng = rng_stream(0, 0);
    let mut ep = 0u64;
    while out.len() < count {
        let ep_seed = derive_seed(seed, ep);
        ep += 1;
        env.reset(ep_seed);
        let mut opp_rng = rng_stream(ep_seed, stream::OPPONENT);
        let mut skills = vec![0; n];
        let mut frames: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
        let mut t = 0;
        loop {
            let obs = env.observations(Team::Home);
            if t % agents.t_seg == 0 {
                skills = agents.choose_skills(&obs, 0.0, &mut greedy_rng)?;
                frames.iter_mut().for_each(Vec::clear);
            }
            let home = (0..n)
                .map(|i| agents.greedy_action(&obs[i], skills[i]))
                .collect::<Result<Vec<_>>>()?;
            let away: Vec<usize> = (0..n)
                .map(|j| scripted_action(env_cfg, env.state(), Team::Away, j, &mut opp_rng))
                .collect();
            for (f, o) in frames.iter_mut().zip(obs) {
                f.push(o);
            }
            let step = env.step(&home, &away)?;
            t += 1;
            if frames[0].len() == agents.t_seg {
                for (f, &z) in frames.iter().zip(&skills) {
                    if out.len() < count {
                        out.push((z, preprocess_segment(f, k_skip, &entries)?));
                    }
                }
            }
            if step.done || out.len() >= count {
                break;
            }
        }
    }
    Ok(out)
}

pub fn replay_path(dir: &Path, episode: usize) -> PathBuf {
    dir.join(format!("episode_{episode:05}.jsonl"))
}

/// Writes each episode log to `dir/episode_<i>.jsonl`, one step per line.
pub fn write_replays(dir: &Path, logs: &[Vec<StepRecord>]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, log) in logs.iter().enumerate() {
        let mut w = BufWriter::new(std::fs::File::create(replay_path(dir, i))?);
        for rec in log {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Reads every `*.jsonl` replay in `dir`, ordered by file name.
pub fn read_replays(dir: &Path) -> Result<Vec<Vec<StepRecord>>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut logs = Vec::with_capacity(paths.len());
    for p in paths {
        let file = std::io::BufReader::new(std::fs::File::open(&p)?);
        let mut log = Vec::new();
        for line in file.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                log.push(serde_json::from_str(&line)?);
            }
        }
        logs.push(log);
    }
    Ok(logs)
}
