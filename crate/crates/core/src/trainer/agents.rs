use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng_stream, stream, Algorithm, TrainConfig};
use crate::decoder::SkillDecoder;
use crate::env::{num_actions, obs_dim, state_dim};
use crate::error::{HsdError, Result};
use crate::high_level::{HighPolicy, HighPolicyConfig};
use crate::low_level::{LowPolicy, LowPolicyConfig};
use crate::nn::{checkpoint, ParamSet};

/// The learned team: whichever of the high level, low level and decoder the
/// algorithm uses.
#[derive(Debug, Clone)]
pub struct Agents {
    pub algorithm: Algorithm,
    pub n_agents: usize,
    pub skills: usize,
    pub t_seg: usize,
    pub high: Option<HighPolicy>,
    pub low: Option<LowPolicy>,
    pub decoder: Option<SkillDecoder>,
}

impl Agents {
    /// Fresh networks; each one is initialized from its own stream of `seed`.
    pub fn new(cfg: &TrainConfig, seed: u64) -> Self {
        let n = cfg.env.agents_per_team;
        let (o, s, a) = (obs_dim(n), state_dim(n), num_actions(n));
        let high_cfg = |choices: usize, hidden: &[usize]| HighPolicyConfig {
            n_agents: n,
            obs_dim: o,
            state_dim: s,
            n_choices: choices,
            utility_hidden: hidden.to_vec(),
            mixer_embed: cfg.mixer_embed,
            optimizer: cfg.optimizer,
        };
        let low_cfg = |skills: usize, hidden: &[usize]| LowPolicyConfig {
            obs_dim: o,
            n_skills: skills,
            n_actions: a,
            hidden: hidden.to_vec(),
            optimizer: cfg.optimizer,
        };
        let mut high_rng = rng_stream(seed, stream::HIGH_INIT);
        let mut low_rng = rng_stream(seed, stream::LOW_INIT);
        let mut dec_rng = rng_stream(seed, stream::DECODER_INIT);
        let (high, low) = match cfg.algorithm {
            Algorithm::QmixFlat => (
                Some(HighPolicy::new(
                    &high_cfg(a, &cfg.flat_hidden),
                    &mut high_rng,
                )),
                None,
            ),
            Algorithm::IqlFlat => (
                None,
                Some(LowPolicy::new(&low_cfg(1, &cfg.flat_hidden), &mut low_rng)),
            ),
            _ => (
                Some(HighPolicy::new(
                    &high_cfg(cfg.skills, &cfg.high_hidden),
                    &mut high_rng,
                )),
                Some(LowPolicy::new(
                    &low_cfg(cfg.skills, &cfg.low_hidden),
                    &mut low_rng,
                )),
            ),
        };
        let decoder = cfg.algorithm.uses_decoder().then(|| {
            SkillDecoder::new(11, cfg.decoder.hidden, cfg.skills, &mut dec_rng)
                .with_optimizer(cfg.optimizer)
        });
        Self {
            algorithm: cfg.algorithm,
            n_agents: n,
            skills: cfg.skills,
            t_seg: cfg.t_seg,
            high,
            low,
            decoder,
        }
    }

    fn high(&self) -> Result<&HighPolicy> {
        self.high
            .as_ref()
            .ok_or_else(|| HsdError::Usage(format!("{} has no high level", self.algorithm.name())))
    }

    fn low(&self) -> Result<&LowPolicy> {
        self.low
            .as_ref()
            .ok_or_else(|| HsdError::Usage(format!("{} has no low level", self.algorithm.name())))
    }

    /// Epsilon-greedy skill choice for every agent (hierarchical algorithms).
    pub fn choose_skills<R: Rng + ?Sized>(
        &self,
        obs: &[Vec<f64>],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        self.high()?.select_skills(obs, epsilon, rng)
    }

    /// Primitive actions for every agent given the active skills (ignored by
    /// the flat baselines).
    pub fn choose_actions<R: Rng + ?Sized>(
        &self,
        obs: &[Vec<f64>],
        skills: &[usize],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        match self.algorithm {
            Algorithm::QmixFlat => self.high()?.select_skills(obs, epsilon, rng),
            _ => {
                let low = self.low()?;
                obs.iter()
                    .zip(skills)
                    .map(|(o, &z)| low.select_action(o, z, epsilon, rng))
                    .collect()
            }
        }
    }

    /// Greedy primitive action of one agent under skill `skill`.
    pub fn greedy_action(&self, obs: &[f64], skill: usize) -> Result<usize> {
        match self.algorithm {
            Algorithm::QmixFlat => self.high()?.greedy(obs),
            _ => Ok(crate::nn::argmax(self.low()?.action_values(obs, skill)?)),
        }
    }

    pub fn param_sets(&self) -> BTreeMap<String, ParamSet> {
        let mut sets = BTreeMap::new();
        if let Some(h) = &self.high {
            sets.insert("high.utility".into(), h.utility.params.clone());
            sets.insert(
                "high.utility_target".into(),
                h.utility.target_or_online().clone(),
            );
            sets.insert("high.mixer".into(), h.mixer.params.clone());
            sets.insert(
                "high.mixer_target".into(),
                h.mixer.target_or_online().clone(),
            );
        }
        if let Some(l) = &self.low {
            sets.insert("low.q".into(), l.q.params.clone());
            sets.insert("low.q_target".into(), l.q.target_or_online().clone());
        }
        if let Some(d) = &self.decoder {
            sets.insert("decoder".into(), d.net.params.clone());
        }
        sets
    }

    /// Replaces the parameters with `sets`; every expected set must be present
    /// with matching shapes.
    pub fn load_param_sets(&mut self, sets: &BTreeMap<String, ParamSet>) -> Result<()> {
        let get = |name: &str, like: &ParamSet| -> Result<ParamSet> {
            let p = sets
                .get(name)
                .ok_or_else(|| HsdError::Checkpoint(format!("missing parameter set {name}")))?;
            if !p.same_shape(like) {
                return Err(HsdError::Checkpoint(format!(
                    "parameter set {name} has the wrong shape"
                )));
            }
            Ok(p.clone())
        };
        if let Some(h) = &mut self.high {
            h.utility.params = get("high.utility", &h.utility.params)?;
            h.utility.target = Some(get("high.utility_target", &h.utility.params)?);
            h.mixer.params = get("high.mixer", &h.mixer.params)?;
            h.mixer.target = Some(get("high.mixer_target", &h.mixer.params)?);
        }
        if let Some(l) = &mut self.low {
            l.q.params = get("low.q", &l.q.params)?;
            l.q.target = Some(get("low.q_target", &l.q.params)?);
        }
        if let Some(d) = &mut self.decoder {
            d.net.params = get("decoder", &d.net.params)?;
        }
        Ok(())
    }
}

/// Progress stored next to the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub episode: usize,
    pub env_steps: u64,
    pub alpha: f64,
}

pub const PARAMS_FILE: &str = "params.bin";
pub const CONFIG_FILE: &str = "config.toml";
pub const META_FILE: &str = "meta.json";

/// Writes `params.bin`, `config.toml` and `meta.json` into `dir`.
pub fn save_checkpoint(
    dir: &Path,
    cfg: &TrainConfig,
    agents: &Agents,
    meta: &CheckpointMeta,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    checkpoint::save(&dir.join(PARAMS_FILE), &agents.param_sets())?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml())?;
    std::fs::write(dir.join(META_FILE), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(TrainConfig, Agents, CheckpointMeta)> {
    let cfg = TrainConfig::load(&dir.join(CONFIG_FILE))?;
    let mut agents = Agents::new(&cfg, cfg.seed);
    let sets = checkpoint::load(&dir.join(PARAMS_FILE))
        .map_err(|e| HsdError::Checkpoint(format!("{}: {e}", dir.display())))?;
    agents.load_param_sets(&sets)?;
    let meta_text = std::fs::read_to_string(dir.join(META_FILE))
        .map_err(|e| HsdError::Checkpoint(format!("{}: {e}", dir.display())))?;
    let meta = serde_json::from_str(&meta_text)?;
    Ok((cfg, agents, meta))
}
