//! Win-rate driven schedule for the extrinsic weight `alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaConfig {
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub alpha_step: f64,
    pub alpha_threshold: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self {
            alpha_start: 1.0,
            alpha_end: 0.6,
            alpha_step: 0.01,
            alpha_threshold: 0.70,
        }
    }
}

impl AlphaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.alpha_end)
            && (self.alpha_end..=1.0).contains(&self.alpha_start)
            && self.alpha_step >= 0.0
            && (0.0..=1.0).contains(&self.alpha_threshold);
        if ok {
            Ok(())
        } else {
            usage(format!("invalid alpha schedule {self:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSchedule {
    pub config: AlphaConfig,
    pub alpha: f64,
    /// `(episode, alpha after the update)` for every evaluation.
    pub history: Vec<(usize, f64)>,
}

impl AlphaSchedule {
    pub fn new(config: AlphaConfig) -> Self {
        Self {
            alpha: config.alpha_start,
            config,
            history: Vec::new(),
        }
    }

    /// Lowers alpha by one step, floored at `alpha_end`, when the win rate
    /// strictly exceeds the threshold.
    pub fn update_alpha(&mut self, episode: usize, win_rate: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&win_rate) {
            return usage(format!("win rate {win_rate} outside [0, 1]"));
        }
        if win_rate > self.config.alpha_threshold {
            self.alpha = (self.alpha - self.config.alpha_step).max(self.config.alpha_end);
        }
        self.history.push((episode, self.alpha));
        Ok(self.alpha)
    }
}
