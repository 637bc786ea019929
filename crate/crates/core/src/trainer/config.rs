use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curriculum::AlphaConfig;
use crate::decoder::DecoderConfig;
use crate::env::EnvConfig;
use crate::error::{HsdError, Result};
use crate::nn::OptimizerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Skill selection with decoder-based intrinsic reward.
    Hsd,
    /// Value decomposition directly over primitive actions.
    QmixFlat,
    /// Independent Q-learning over primitive actions.
    IqlFlat,
    /// Two hand-written skills: scoring and stealing.
    HsdScripted,
    /// Low level trained on the intrinsic reward alone.
    HsdExt,
}

impl Algorithm {
    pub fn is_hierarchical(self) -> bool {
        matches!(
            self,
            Algorithm::Hsd | Algorithm::HsdScripted | Algorithm::HsdExt
        )
    }

    pub fn uses_decoder(self) -> bool {
        matches!(self, Algorithm::Hsd | Algorithm::HsdExt)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Hsd => "hsd",
            Algorithm::QmixFlat => "qmix_flat",
            Algorithm::IqlFlat => "iql_flat",
            Algorithm::HsdScripted => "hsd_scripted",
            Algorithm::HsdExt => "hsd_ext",
        }
    }
}

/// Everything a training run needs. Serialized as TOML with `[alpha]`,
/// `[decoder]` and `[env]` sub-tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub skills: usize,
    pub t_seg: usize,
    pub k_skip: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub buffer_capacity: usize,
    pub minibatch: usize,
    /// Update cadence, in steps of the respective level.
    pub train_every: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub total_episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_episodes: usize,
    pub target_factor: f64,
    /// Use `gamma^t_seg * sum(R)` instead of the discounted segment sum.
    pub smdp_scaled: bool,
    /// Bootstrap the high level with `gamma^t_seg` instead of `gamma`.
    pub high_discount_tseg: bool,
    pub high_hidden: Vec<usize>,
    pub mixer_embed: usize,
    pub low_hidden: Vec<usize>,
    /// Hidden layers of the flat baselines.
    pub flat_hidden: Vec<usize>,
    /// Checkpoint cadence in episodes; zero means every evaluation.
    pub checkpoint_every: usize,
    /// Episodes of the final evaluation written as replay logs.
    pub replay_episodes: usize,
    /// Append every flushed decoder dataset to `dataset.jsonl`.
    pub dump_dataset: bool,
    pub seed: u64,
    pub alpha: AlphaConfig,
    pub decoder: DecoderConfig,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Hsd,
            skills: 4,
            t_seg: 10,
            k_skip: 2,
            gamma: 0.99,
            learning_rate: 1e-4,
            optimizer: OptimizerKind::Adam,
            buffer_capacity: 100_000,
            minibatch: 256,
            train_every: 10,
            eval_every: 100,
            eval_episodes: 20,
            total_episodes: 50_000,
            epsilon_start: 0.5,
            epsilon_end: 0.05,
            epsilon_episodes: 1000,
            target_factor: 0.01,
            smdp_scaled: false,
            high_discount_tseg: false,
            high_hidden: vec![128, 128],
            mixer_embed: 64,
            low_hidden: vec![64, 64],
            flat_hidden: vec![128, 128],
            checkpoint_every: 0,
            replay_episodes: 20,
            dump_dataset: false,
            seed: 0,
            alpha: AlphaConfig::default(),
            decoder: DecoderConfig::default(),
            env: EnvConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| HsdError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HsdError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HsdError::Config(m));
        self.env.validate()?;
        self.alpha
            .validate()
            .map_err(|e| HsdError::Config(e.to_string()))?;
        if self.skills == 0 {
            return bad("skills must be at least 1".into());
        }
        match self.algorithm {
            Algorithm::QmixFlat | Algorithm::IqlFlat if self.skills != 1 => {
                return bad(format!(
                    "{} has no skills; set skills = 1 (got {})",
                    self.algorithm.name(),
                    self.skills
                ));
            }
            Algorithm::HsdScripted if self.skills != 2 => {
                return bad(format!(
                    "hsd_scripted defines exactly 2 skills (got {})",
                    self.skills
                ));
            }
            _ => {}
        }
        if self.k_skip == 0 || self.t_seg < 2 * self.k_skip {
            return bad(format!(
                "need t_seg >= 2 * k_skip >= 2 (t_seg = {}, k_skip = {})",
                self.t_seg, self.k_skip
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.target_factor) {
            return bad("target_factor must lie in [0, 1]".into());
        }
        for (name, e) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, v) in [
            ("buffer_capacity", self.buffer_capacity),
            ("minibatch", self.minibatch),
            ("train_every", self.train_every),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
            ("mixer_embed", self.mixer_embed),
            ("decoder.n_batch", self.decoder.n_batch),
            ("decoder.minibatch", self.decoder.minibatch),
            ("decoder.hidden", self.decoder.hidden),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.minibatch > self.buffer_capacity {
            return bad("minibatch exceeds buffer_capacity".into());
        }
        if !(self.decoder.learning_rate > 0.0 && self.decoder.learning_rate.is_finite()) {
            return bad("decoder.learning_rate must be positive".into());
        }
        for (name, h) in [
            ("high_hidden", &self.high_hidden),
            ("low_hidden", &self.low_hidden),
            ("flat_hidden", &self.flat_hidden),
        ] {
            if h.iter().any(|&w| w == 0) {
                return bad(format!("{name} has a zero-width layer"));
            }
        }
        Ok(())
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over `epsilon_episodes`.
    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.epsilon_episodes == 0 {
            return self.epsilon_end;
        }
        let frac = (episode as f64 / self.epsilon_episodes as f64).min(1.0);
        self.epsilon_start * (1.0 - frac) + self.epsilon_end * frac
    }

    pub fn checkpoint_interval(&self) -> usize {
        if self.checkpoint_every == 0 {
            self.eval_every
        } else {
            self.checkpoint_every
        }
    }

    /// Discount applied to the high-level bootstrap term.
    pub fn high_discount(&self) -> f64 {
        if self.algorithm.is_hierarchical() && self.high_discount_tseg {
            self.gamma.powi(self.t_seg as i32)
        } else {
            self.gamma
        }
    }
}
