//! Skill-conditioned action values trained by independent Q-learning with
//! shared parameters.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{usage, Result};
use crate::high_level::stack_rows;
use crate::nn::{argmax, MlpSpec, OptimizerKind, ParamSet, Trainable};
use crate::replay::LowTransition;

#[derive(Debug, Clone, PartialEq)]
pub struct LowPolicyConfig {
    pub obs_dim: usize,
    /// With a single skill the one-hot is dropped and the network is a plain
    /// per-agent Q-network.
    pub n_skills: usize,
    pub n_actions: usize,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerKind,
}

#[derive(Debug, Clone)]
pub struct LowPolicy {
    pub spec: MlpSpec,
    pub n_skills: usize,
    pub q: Trainable,
}

impl LowPolicy {
    pub fn new<R: Rng + ?Sized>(cfg: &LowPolicyConfig, rng: &mut R) -> Self {
        let extra = if cfg.n_skills > 1 { cfg.n_skills } else { 0 };
        let spec = MlpSpec::new(cfg.obs_dim + extra, &cfg.hidden, cfg.n_actions);
        let q = Trainable::new(spec.init(rng), cfg.optimizer, true);
        Self {
            spec,
            n_skills: cfg.n_skills,
            q,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.spec.input_dim - self.skill_width()
    }

    pub fn n_actions(&self) -> usize {
        self.spec.output_dim
    }

    fn skill_width(&self) -> usize {
        if self.n_skills > 1 {
            self.n_skills
        } else {
            0
        }
    }

    /// `o ⊕ onehot(z)`.
    pub fn input(&self, observation: &[f64], skill: usize) -> Result<Vec<f64>> {
        if observation.len() != self.obs_dim() {
            return usage(format!(
                "observation has length {}, expected {}",
                observation.len(),
                self.obs_dim()
            ));
        }
        if skill >= self.n_skills.max(1) {
            return usage(format!("skill {skill} out of range"));
        }
        let mut x = observation.to_vec();
        if self.n_skills > 1 {
            x.extend((0..self.n_skills).map(|k| if k == skill { 1.0 } else { 0.0 }));
        }
        Ok(x)
    }

    pub fn action_values(&self, observation: &[f64], skill: usize) -> Result<Vec<f64>> {
        self.spec
            .forward(&self.q.params, &self.input(observation, skill)?)
    }

    pub fn select_action<R: Rng + ?Sized>(
        &self,
        observation: &[f64],
        skill: usize,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<usize> {
        if rng.gen::<f64>() < epsilon {
            return Ok(rng.gen_range(0..self.n_actions()));
        }
        Ok(argmax(self.action_values(observation, skill)?))
    }

    fn stack_inputs<'a>(
        &self,
        batch: &'a [&LowTransition],
        pick: impl Fn(&'a LowTransition) -> &'a [f64],
    ) -> Result<Array2<f64>> {
        let rows = batch
            .iter()
            .map(|t| self.input(pick(t), t.skill))
            .collect::<Result<Vec<_>>>()?;
        stack_rows(rows.iter().map(|r| &r[..]), self.spec.input_dim)
    }

    /// `R_L + gamma * max_a Q_target(o', z, a)`, without bootstrap at terminals.
    pub fn td_targets(&self, batch: &[&LowTransition], gamma: f64) -> Result<Array1<f64>> {
        let next = self.stack_inputs(batch, |t| &t.next_observation)?;
        let q_next = self
            .spec
            .forward_batch(self.q.target_or_online(), next.view());
        Ok(Array1::from_iter(batch.iter().enumerate().map(|(b, t)| {
            if t.terminal {
                t.reward
            } else {
                let best = q_next
                    .row(b)
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                t.reward + gamma * best
            }
        })))
    }

    pub fn loss_and_grads(
        &self,
        batch: &[&LowTransition],
        targets: &Array1<f64>,
        params: &ParamSet,
    ) -> Result<(f64, ParamSet)> {
        let x = self.stack_inputs(batch, |t| &t.observation)?;
        let (q, cache) = self.spec.forward_cached(params, x);
        let bsz = batch.len() as f64;
        let mut d_q = Array2::zeros(q.raw_dim());
        let mut loss = 0.0;
        for (b, t) in batch.iter().enumerate() {
            if t.action >= self.n_actions() {
                return usage(format!("action {} out of range", t.action));
            }
            let r = q[[b, t.action]] - targets[b];
            loss += 0.5 * r * r;
            d_q[[b, t.action]] = r / bsz;
        }
        let mut grads = params.zeros_like();
        self.spec.backward(params, &cache, d_q, &mut grads);
        Ok((loss / bsz, grads))
    }

    /// One optimizer step plus soft target update; returns the pre-step loss.
    pub fn update_iql(
        &mut self,
        batch: &[&LowTransition],
        gamma: f64,
        lr: f64,
        target_factor: f64,
    ) -> Result<f64> {
        if batch.is_empty() {
            return usage("empty minibatch");
        }
        let targets = self.td_targets(batch, gamma)?;
        let (loss, grads) = self.loss_and_grads(batch, &targets, &self.q.params)?;
        self.q.grads = grads;
        self.q.apply_grads(lr)?;
        self.q.update_target(target_factor)?;
        Ok(loss)
    }
}

/// `alpha * R + (1 - alpha) * R_I`; callers pass `R_I = 0` on steps that do
/// not close a segment, which leaves `alpha * R`.
pub fn step_reward_low(
    team_reward: f64,
    alpha: f64,
    intrinsic: f64,
    alpha_end: f64,
) -> Result<f64> {
    if !(alpha_end..=1.0).contains(&alpha) {
        return usage(format!("alpha {alpha} outside [{alpha_end}, 1]"));
    }
    Ok(alpha * team_reward + (1.0 - alpha) * intrinsic)
}
