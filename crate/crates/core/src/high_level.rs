//! Skill selection: a shared per-agent utility network mixed into a joint
//! value for centralized training, with decentralized epsilon-greedy choice.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{usage, Result};
use crate::nn::{argmax, MixerSpec, MlpSpec, OptimizerKind, ParamSet, Trainable};
use crate::replay::HighTransition;

#[derive(Debug, Clone, PartialEq)]
pub struct HighPolicyConfig {
    pub n_agents: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    /// Number of choices per agent: skills, or primitive actions for the flat baseline.
    pub n_choices: usize,
    pub utility_hidden: Vec<usize>,
    pub mixer_embed: usize,
    pub optimizer: OptimizerKind,
}

/// Shared utility network plus mixer, each with a target copy.
#[derive(Debug, Clone)]
pub struct HighPolicy {
    pub utility_spec: MlpSpec,
    pub mixer_spec: MixerSpec,
    pub utility: Trainable,
    pub mixer: Trainable,
}

impl HighPolicy {
    pub fn new<R: Rng + ?Sized>(cfg: &HighPolicyConfig, rng: &mut R) -> Self {
        let utility_spec = MlpSpec::new(cfg.obs_dim, &cfg.utility_hidden, cfg.n_choices);
        let mixer_spec = MixerSpec::new(cfg.n_agents, cfg.state_dim, cfg.mixer_embed);
        let utility = Trainable::new(utility_spec.init(rng), cfg.optimizer, true);
        let mixer = Trainable::new(mixer_spec.init(rng), cfg.optimizer, true);
        Self {
            utility_spec,
            mixer_spec,
            utility,
            mixer,
        }
    }

    pub fn n_choices(&self) -> usize {
        self.utility_spec.output_dim
    }

    pub fn n_agents(&self) -> usize {
        self.mixer_spec.n_agents
    }

    pub fn utilities(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.utility_spec.forward(&self.utility.params, observation)
    }

    pub fn greedy(&self, observation: &[f64]) -> Result<usize> {
        Ok(argmax(self.utilities(observation)?))
    }

    /// Independent epsilon-greedy choice per agent; ties go to the lowest index.
    pub fn select_skills<R: Rng + ?Sized>(
        &self,
        observations: &[Vec<f64>],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        observations
            .iter()
            .map(|o| {
                if rng.gen::<f64>() < epsilon {
                    Ok(rng.gen_range(0..self.n_choices()))
                } else {
                    self.greedy(o)
                }
            })
            .collect()
    }

    /// Joint value of `choices` under the online parameters.
    pub fn q_tot(
        &self,
        observations: &[Vec<f64>],
        state: &[f64],
        choices: &[usize],
    ) -> Result<f64> {
        let u = observations
            .iter()
            .zip(choices)
            .map(|(o, &z)| Ok(self.utilities(o)?[z]))
            .collect::<Result<Vec<f64>>>()?;
        self.mixer_spec.forward(&self.mixer.params, &u, state)
    }

    /// TD targets `R + discount * Q_tot_target(s', z')` where every `z'^n` is
    /// the argmax of the target utility at `o'^n`; the bootstrap is dropped at terminals.
    pub fn td_targets(&self, batch: &[&HighTransition], discount: f64) -> Result<Array1<f64>> {
        let n = self.n_agents();
        let target_u = self.utility.target_or_online();
        let target_m = self.mixer.target_or_online();
        let next_obs = stack_obs(batch, n, self.utility_spec.input_dim, |t| {
            &t.next_observations
        })?;
        let next_u = self.utility_spec.forward_batch(target_u, next_obs.view());
        let mut chosen = Array2::zeros((batch.len(), n));
        for b in 0..batch.len() {
            for k in 0..n {
                let row = next_u.row(b * n + k);
                chosen[[b, k]] = row[argmax(row.iter().copied())];
            }
        }
        let next_states = stack_rows(
            batch.iter().map(|t| &t.next_state[..]),
            self.mixer_spec.state_dim,
        )?;
        let next_q = self
            .mixer_spec
            .forward_batch(target_m, chosen.view(), next_states.view())?;
        Ok(Array1::from_iter(batch.iter().zip(next_q.iter()).map(
            |(t, &q)| {
                if t.terminal {
                    t.reward
                } else {
                    t.reward + discount * q
                }
            },
        )))
    }

    /// Mean squared TD loss `mean((y - Q_tot)^2 / 2)` and its gradients with
    /// respect to the utility and mixer parameters.
    pub fn loss_and_grads(
        &self,
        batch: &[&HighTransition],
        targets: &Array1<f64>,
        utility_params: &ParamSet,
        mixer_params: &ParamSet,
    ) -> Result<(f64, ParamSet, ParamSet)> {
        let n = self.n_agents();
        let bsz = batch.len();
        let obs = stack_obs(batch, n, self.utility_spec.input_dim, |t| &t.observations)?;
        let states = stack_rows(
            batch.iter().map(|t| &t.state[..]),
            self.mixer_spec.state_dim,
        )?;
        let (u_all, u_cache) = self.utility_spec.forward_cached(utility_params, obs);
        let mut chosen = Array2::zeros((bsz, n));
        for (b, t) in batch.iter().enumerate() {
            if t.skills.len() != n || t.skills.iter().any(|&z| z >= self.n_choices()) {
                return usage("transition skills out of range");
            }
            for k in 0..n {
                chosen[[b, k]] = u_all[[b * n + k, t.skills[k]]];
            }
        }
        let (q, m_cache) =
            self.mixer_spec
                .forward_cached(mixer_params, chosen.view(), states.view())?;
        let resid = &q - targets;
        let loss = 0.5 * resid.mapv(|r| r * r).sum() / bsz as f64;
        let d_q = resid / bsz as f64;
        let mut g_mixer = mixer_params.zeros_like();
        let d_u = self
            .mixer_spec
            .backward(mixer_params, &m_cache, &d_q, &mut g_mixer);
        let mut d_all = Array2::zeros(u_all.raw_dim());
        for (b, t) in batch.iter().enumerate() {
            for k in 0..n {
                d_all[[b * n + k, t.skills[k]]] = d_u[[b, k]];
            }
        }
        let mut g_util = utility_params.zeros_like();
        self.utility_spec
            .backward(utility_params, &u_cache, d_all, &mut g_util);
        Ok((loss, g_util, g_mixer))
    }

    /// One optimizer step on the TD loss followed by soft target updates.
    /// Returns the loss before the step.
    pub fn update_qmix(
        &mut self,
        batch: &[&HighTransition],
        discount: f64,
        lr: f64,
        target_factor: f64,
    ) -> Result<f64> {
        if batch.is_empty() {
            return usage("empty minibatch");
        }
        let targets = self.td_targets(batch, discount)?;
        let (loss, g_util, g_mixer) =
            self.loss_and_grads(batch, &targets, &self.utility.params, &self.mixer.params)?;
        self.utility.grads = g_util;
        self.mixer.grads = g_mixer;
        self.utility.apply_grads(lr)?;
        self.mixer.apply_grads(lr)?;
        self.utility.update_target(target_factor)?;
        self.mixer.update_target(target_factor)?;
        Ok(loss)
    }
}

/// Per-segment high-level reward `sum_i gamma^i R_i`.
pub fn smdp_reward(rewards: &[f64], t_seg: usize, gamma: f64) -> Result<f64> {
    if rewards.len() != t_seg {
        return usage(format!(
            "segment has {} rewards, expected {t_seg}",
            rewards.len()
        ));
    }
    let mut discount = 1.0;
    let mut total = 0.0;
    for &r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    Ok(total)
}

/// Alternative form `gamma^t_seg * sum_i R_i`.
pub fn smdp_reward_scaled(rewards: &[f64], t_seg: usize, gamma: f64) -> Result<f64> {
    if rewards.len() != t_seg {
        return usage(format!(
            "segment has {} rewards, expected {t_seg}",
            rewards.len()
        ));
    }
    Ok(gamma.powi(t_seg as i32) * rewards.iter().sum::<f64>())
}

pub(crate) fn stack_rows<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    dim: usize,
) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut count = 0;
    for r in rows {
        if r.len() != dim {
            return usage(format!("row has length {}, expected {dim}", r.len()));
        }
        data.extend_from_slice(r);
        count += 1;
    }
    Ok(Array2::from_shape_vec((count, dim), data).expect("consistent rows"))
}

fn stack_obs(
    batch: &[&HighTransition],
    n: usize,
    dim: usize,
    pick: impl Fn(&HighTransition) -> &Vec<Vec<f64>>,
) -> Result<Array2<f64>> {
    if batch.iter().any(|t| pick(t).len() != n) {
        return usage("transition has the wrong number of observations");
    }
    stack_rows(
        batch.iter().flat_map(|t| pick(t).iter().map(|o| &o[..])),
        dim,
    )
}
