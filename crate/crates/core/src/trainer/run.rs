use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agents::{save_checkpoint, Agents, CheckpointMeta};
use super::eval::{evaluate, write_replays, EvalReport};
use super::{derive_seed, rng_stream, stream, Algorithm, TrainConfig};
use crate::curriculum::AlphaSchedule;
use crate::decoder::{preprocess_segment, train_decoder, SkillDataset};
use crate::env::{decoder_entry_indices, scripted_action, GameEvent, StepOutcome, Sts2Env, Team};
use crate::error::{HsdError, Result};
use crate::high_level::{smdp_reward, smdp_reward_scaled};
use crate::low_level::step_reward_low;
use crate::replay::{HighTransition, LowTransition, ReplayBuffer};

/// One line of `metrics.jsonl`, written after every evaluation. Losses are
/// means over the updates since the previous evaluation (`null` when none ran).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub episode: usize,
    pub env_steps: u64,
    pub win_rate: f64,
    pub lose_rate: f64,
    pub draw_rate: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub high_loss: Option<f64>,
    pub low_loss: Option<f64>,
    pub decoder_loss: Option<f64>,
    pub decoder_accuracy: Option<f64>,
    pub decoder_rounds: usize,
}

/// Bookkeeping recorded when tracing is enabled, for checking the training
/// schedule from outside.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    /// Environment steps covered by each stored high-level transition.
    pub high_spans: Vec<usize>,
    /// Home team reward of every step, per training episode.
    pub episode_rewards: Vec<Vec<f64>>,
    /// Environment step count at each low-level update.
    pub low_updates: Vec<u64>,
    /// High-level step count at each high-level update.
    pub high_updates: Vec<u64>,
}

#[derive(Debug, Default)]
struct Window {
    high: Vec<f64>,
    low: Vec<f64>,
    decoder_loss: Vec<f64>,
    decoder_acc: Vec<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

struct Streams {
    env: ChaCha8Rng,
    opponent: ChaCha8Rng,
    high_explore: ChaCha8Rng,
    low_explore: ChaCha8Rng,
    high_sample: ChaCha8Rng,
    low_sample: ChaCha8Rng,
    decoder: ChaCha8Rng,
}

struct OpenSegment {
    state: Vec<f64>,
    observations: Vec<Vec<f64>>,
    skills: Vec<usize>,
    rewards: Vec<f64>,
    frames: Vec<Vec<Vec<f64>>>,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub agents: Agents,
    pub high_buffer: ReplayBuffer<HighTransition>,
    pub low_buffer: ReplayBuffer<LowTransition>,
    pub dataset: SkillDataset,
    pub alpha: AlphaSchedule,
    pub episode: usize,
    pub env_steps: u64,
    pub high_steps: u64,
    pub decoder_rounds: usize,
    pub trace: Option<Trace>,
    env: Sts2Env,
    rngs: Streams,
    window: Window,
    entries: [usize; 11],
    dataset_dump: Option<PathBuf>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let s = cfg.seed;
        Ok(Self {
            agents: Agents::new(&cfg, s),
            high_buffer: ReplayBuffer::new(cfg.buffer_capacity),
            low_buffer: ReplayBuffer::new(cfg.buffer_capacity),
            dataset: SkillDataset::new(),
            alpha: AlphaSchedule::new(cfg.alpha.clone()),
            episode: 0,
            env_steps: 0,
            high_steps: 0,
            decoder_rounds: 0,
            trace: None,
            env: Sts2Env::new(cfg.env.clone())?,
            rngs: Streams {
                env: rng_stream(s, stream::ENV),
                opponent: rng_stream(s, stream::OPPONENT),
                high_explore: rng_stream(s, stream::HIGH_EXPLORE),
                low_explore: rng_stream(s, stream::LOW_EXPLORE),
                high_sample: rng_stream(s, stream::HIGH_SAMPLE),
                low_sample: rng_stream(s, stream::LOW_SAMPLE),
                decoder: rng_stream(s, stream::DECODER_TRAIN),
            },
            window: Window::default(),
            entries: decoder_entry_indices(cfg.env.agents_per_team),
            dataset_dump: None,
            cfg,
        })
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Trace::default());
    }

    /// Appends every flushed decoder dataset to `path`.
    pub fn dump_dataset_to(&mut self, path: PathBuf) {
        self.dataset_dump = Some(path);
    }

    /// Plays one training episode with exploration and learning.
    pub fn train_episode(&mut self) -> Result<Option<Team>> {
        let cfg = &self.cfg;
        let n = cfg.env.agents_per_team;
        let algo = cfg.algorithm;
        let eps = cfg.epsilon(self.episode);
        let ep_seed = self.rngs.env.gen::<u64>();
        self.env.reset(ep_seed);
        let mut obs = self.env.observations(Team::Home);
        let mut state = self.env.state_vector(Team::Home);
        let mut skills = vec![0; n];
        let mut seg: Option<OpenSegment> = None;
        let mut rewards_log = Vec::new();
        let mut t = 0usize;
        let winner = loop {
            if algo.is_hierarchical() && t % self.cfg.t_seg == 0 {
                skills = self
                    .agents
                    .choose_skills(&obs, eps, &mut self.rngs.high_explore)?;
                seg = Some(OpenSegment {
                    state: state.clone(),
                    observations: obs.clone(),
                    skills: skills.clone(),
                    rewards: Vec::with_capacity(self.cfg.t_seg),
                    frames: vec![Vec::with_capacity(self.cfg.t_seg); n],
                });
                self.high_steps += 1;
                if self.high_steps % self.cfg.train_every as u64 == 0 {
                    self.update_high(self.high_steps)?;
                }
            }
            let home =
                self.agents
                    .choose_actions(&obs, &skills, eps, &mut self.rngs.low_explore)?;
            let away: Vec<usize> = (0..n)
                .map(|j| {
                    scripted_action(
                        &self.cfg.env,
                        self.env.state(),
                        Team::Away,
                        j,
                        &mut self.rngs.opponent,
                    )
                })
                .collect();
            let out = self.env.step(&home, &away)?;
            let r = out.reward(Team::Home);
            let next_obs = self.env.observations(Team::Home);
            let next_state = self.env.state_vector(Team::Home);
            t += 1;
            self.env_steps += 1;
            rewards_log.push(r);

            match algo {
                Algorithm::IqlFlat => {
                    for i in 0..n {
                        self.low_buffer.push(LowTransition {
                            observation: obs[i].clone(),
                            skill: 0,
                            action: home[i],
                            reward: r,
                            next_observation: next_obs[i].clone(),
                            terminal: out.done,
                        });
                    }
                }
                Algorithm::QmixFlat => {
                    self.high_buffer.push(HighTransition {
                        state: state.clone(),
                        observations: obs.clone(),
                        skills: home.clone(),
                        reward: r,
                        next_state: next_state.clone(),
                        next_observations: next_obs.clone(),
                        terminal: out.done,
                    });
                    if let Some(tr) = &mut self.trace {
                        tr.high_spans.push(1);
                    }
                }
                _ => {
                    let open = seg.as_mut().expect("segment opened at its first step");
                    open.rewards.push(r);
                    for (frames, o) in open.frames.iter_mut().zip(&obs) {
                        frames.push(o.clone());
                    }
                    let complete = open.rewards.len() == self.cfg.t_seg;
                    let intrinsic = self.close_segment_intrinsic(complete, &skills, &seg)?;
                    for i in 0..n {
                        let reward = self.low_reward(algo, r, intrinsic[i], skills[i], i, &out)?;
                        self.low_buffer.push(LowTransition {
                            observation: obs[i].clone(),
                            skill: skills[i],
                            action: home[i],
                            reward,
                            next_observation: next_obs[i].clone(),
                            terminal: out.done,
                        });
                    }
                    if complete {
                        let open = seg.take().expect("open segment");
                        let reward = if self.cfg.smdp_scaled {
                            smdp_reward_scaled(&open.rewards, self.cfg.t_seg, self.cfg.gamma)?
                        } else {
                            smdp_reward(&open.rewards, self.cfg.t_seg, self.cfg.gamma)?
                        };
                        self.high_buffer.push(HighTransition {
                            state: open.state,
                            observations: open.observations,
                            skills: open.skills,
                            reward,
                            next_state: next_state.clone(),
                            next_observations: next_obs.clone(),
                            terminal: out.done,
                        });
                        if let Some(tr) = &mut self.trace {
                            tr.high_spans.push(open.rewards.len());
                        }
                    }
                }
            }

            if self.env_steps % self.cfg.train_every as u64 == 0 {
                match algo {
                    Algorithm::QmixFlat => self.update_high(self.env_steps)?,
                    _ => self.update_low()?,
                }
            }
            if algo.uses_decoder() && self.dataset.len() >= self.cfg.decoder.n_batch {
                self.update_decoder()?;
            }
            obs = next_obs;
            state = next_state;
            if out.done {
                break out.winner;
            }
        };
        if let Some(tr) = &mut self.trace {
            tr.episode_rewards.push(rewards_log);
        }
        self.episode += 1;
        Ok(winner)
    }

    /// Decoder probabilities of the active skills for a segment that has just
    /// completed, and records the segments in the dataset. Zero otherwise.
    fn close_segment_intrinsic(
        &mut self,
        complete: bool,
        skills: &[usize],
        seg: &Option<OpenSegment>,
    ) -> Result<Vec<f64>> {
        let n = skills.len();
        if !complete || !self.cfg.algorithm.uses_decoder() {
            return Ok(vec![0.0; n]);
        }
        let open = seg.as_ref().expect("open segment");
        let decoder = self.agents.decoder.as_ref().expect("decoder present");
        let mut out = Vec::with_capacity(n);
        for (frames, &z) in open.frames.iter().zip(skills) {
            let x = preprocess_segment(frames, self.cfg.k_skip, &self.entries)?;
            out.push(decoder.intrinsic_reward(z, &x)?);
            self.dataset.push(z, x);
        }
        Ok(out)
    }

    fn low_reward(
        &self,
        algo: Algorithm,
        team_reward: f64,
        intrinsic: f64,
        skill: usize,
        agent: usize,
        out: &StepOutcome,
    ) -> Result<f64> {
        let alpha = self.alpha.alpha;
        let end = self.cfg.alpha.alpha_end;
        match algo {
            Algorithm::HsdExt => Ok(intrinsic),
            Algorithm::HsdScripted => {
                let wanted = if skill == 0 {
                    GameEvent::Goal
                } else {
                    GameEvent::Steal
                };
                let scripted = out
                    .events
                    .iter()
                    .filter(|e| e.team == Team::Home && e.player == agent && e.event == wanted)
                    .count() as f64;
                step_reward_low(team_reward, alpha, scripted, end)
            }
            _ => step_reward_low(team_reward, alpha, intrinsic, end),
        }
    }

    fn update_low(&mut self) -> Result<()> {
        let Some(low) = self.agents.low.as_mut() else {
            return Ok(());
        };
        let batch = match self
            .low_buffer
            .sample(self.cfg.minibatch, &mut self.rngs.low_sample)
        {
            Ok(b) => b,
            Err(HsdError::NotReady { .. }) => return Ok(()),
            Err(e) => return Err(e),
        };
        let loss = low.update_iql(
            &batch,
            self.cfg.gamma,
            self.cfg.learning_rate,
            self.cfg.target_factor,
        )?;
        self.window.low.push(loss);
        if let Some(tr) = &mut self.trace {
            tr.low_updates.push(self.env_steps);
        }
        Ok(())
    }

    fn update_high(&mut self, step: u64) -> Result<()> {
        let Some(high) = self.agents.high.as_mut() else {
            return Ok(());
        };
        let batch = match self
            .high_buffer
            .sample(self.cfg.minibatch, &mut self.rngs.high_sample)
        {
            Ok(b) => b,
            Err(HsdError::NotReady { .. }) => return Ok(()),
            Err(e) => return Err(e),
        };
        let loss = high.update_qmix(
            &batch,
            self.cfg.high_discount(),
            self.cfg.learning_rate,
            self.cfg.target_factor,
        )?;
        self.window.high.push(loss);
        if let Some(tr) = &mut self.trace {
            tr.high_updates.push(step);
        }
        Ok(())
    }

    fn update_decoder(&mut self) -> Result<()> {
        if let Some(path) = &self.dataset_dump {
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut w = std::io::BufWriter::new(file);
            self.dataset.dump(&mut w)?;
            w.flush()?;
        }
        let decoder = self.agents.decoder.as_mut().expect("decoder present");
        let round = train_decoder(
            decoder,
            &mut self.dataset,
            &self.cfg.decoder,
            &mut self.rngs.decoder,
        )?;
        self.window.decoder_loss.push(round.loss);
        self.window.decoder_acc.push(round.accuracy);
        self.decoder_rounds += 1;
        Ok(())
    }

    /// Greedy evaluation with the seeds reserved for evaluation `index`.
    pub fn evaluate(&self, index: u64, episodes: usize, record: usize) -> Result<EvalReport> {
        let seed = derive_seed(rng_stream(self.cfg.seed, stream::EVAL).gen(), index);
        evaluate(&self.agents, &self.cfg.env, episodes, seed, record)
    }

    /// Evaluates, feeds the win rate to the curriculum and returns the metrics record.
    pub fn evaluation_point(&mut self) -> Result<MetricsRecord> {
        let index = (self.episode / self.cfg.eval_every) as u64;
        let report = self.evaluate(index, self.cfg.eval_episodes, 0)?;
        let alpha = self.alpha.update_alpha(self.episode, report.win_rate)?;
        let w = std::mem::take(&mut self.window);
        Ok(MetricsRecord {
            episode: self.episode,
            env_steps: self.env_steps,
            win_rate: report.win_rate,
            lose_rate: report.lose_rate,
            draw_rate: report.draw_rate,
            alpha,
            epsilon: self.cfg.epsilon(self.episode),
            high_loss: mean(&w.high),
            low_loss: mean(&w.low),
            decoder_loss: mean(&w.decoder_loss),
            decoder_accuracy: mean(&w.decoder_acc),
            decoder_rounds: self.decoder_rounds,
        })
    }

    pub fn checkpoint_meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            episode: self.episode,
            env_steps: self.env_steps,
            alpha: self.alpha.alpha,
        }
    }
}

/// Paths of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub replays: PathBuf,
    pub records: Vec<MetricsRecord>,
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const REPLAY_DIR: &str = "replays";
pub const DATASET_FILE: &str = "dataset.jsonl";

/// Runs the full training schedule, writing metrics, checkpoints and final
/// replay logs under `out`. `progress` is called after every evaluation.
pub fn run_training(
    cfg: TrainConfig,
    out: &Path,
    mut progress: impl FnMut(&MetricsRecord),
) -> Result<RunArtifacts> {
    let mut trainer = Trainer::new(cfg)?;
    std::fs::create_dir_all(out)?;
    let metrics_path = out.join(METRICS_FILE);
    let checkpoint_dir = out.join(CHECKPOINT_DIR);
    let replay_dir = out.join(REPLAY_DIR);
    std::fs::write(out.join("config.toml"), trainer.cfg.to_toml())?;
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    if trainer.cfg.dump_dataset {
        let path = out.join(DATASET_FILE);
        std::fs::File::create(&path)?;
        trainer.dump_dataset_to(path);
    }
    save_checkpoint(
        &checkpoint_dir,
        &trainer.cfg,
        &trainer.agents,
        &trainer.checkpoint_meta(),
    )?;
    let mut records = Vec::new();
    while trainer.episode < trainer.cfg.total_episodes {
        trainer.train_episode()?;
        let e = trainer.episode;
        if e % trainer.cfg.eval_every == 0 {
            let rec = trainer.evaluation_point()?;
            serde_json::to_writer(&mut metrics, &rec)?;
            metrics.write_all(b"\n")?;
            metrics.flush()?;
            progress(&rec);
            records.push(rec);
        }
        if e % trainer.cfg.checkpoint_interval() == 0 || e == trainer.cfg.total_episodes {
            save_checkpoint(
                &checkpoint_dir,
                &trainer.cfg,
                &trainer.agents,
                &trainer.checkpoint_meta(),
            )?;
        }
    }
    if trainer.cfg.replay_episodes > 0 {
        let n = trainer.cfg.replay_episodes;
        let report = trainer.evaluate(u64::MAX, n, n)?;
        write_replays(&replay_dir, &report.logs)?;
    }
    Ok(RunArtifacts {
        dir: out.to_path_buf(),
        metrics: metrics_path,
        checkpoint: checkpoint_dir,
        replays: replay_dir,
        records,
    })
}
