use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};

/// Named parameter blocks of one approximator. Vectors are stored as `1 x n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    blocks: Vec<Array2<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        self.names.push(name.into());
        self.blocks.push(value);
        self.blocks.len() - 1
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn block(&self, i: usize) -> &Array2<f64> {
        &self.blocks[i]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut Array2<f64> {
        &mut self.blocks[i]
    }

    pub fn blocks(&self) -> &[Array2<f64>] {
        &self.blocks
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.blocks[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.blocks[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.blocks.iter())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| Array2::zeros(b.raw_dim()))
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn fill(&mut self, value: f64) {
        for b in &mut self.blocks {
            b.fill(value);
        }
    }

    /// Reads the `k`-th scalar when all blocks are laid end to end in row-major order.
    pub fn flat_get(&self, mut k: usize) -> f64 {
        for b in &self.blocks {
            if k < b.len() {
                return b.as_slice().expect("standard layout")[k];
            }
            k -= b.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_set(&mut self, mut k: usize, v: f64) {
        for b in &mut self.blocks {
            if k < b.len() {
                b.as_slice_mut().expect("standard layout")[k] = v;
                return;
            }
            k -= b.len();
        }
        panic!("flat index out of range")
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Moves `target` toward `online`: `target <- (1 - factor) * target + factor * online`.
pub fn soft_update(target: &mut ParamSet, online: &ParamSet, factor: f64) -> Result<()> {
    if !target.same_shape(online) {
        return usage("soft_update on parameter sets of different shape");
    }
    for (t, o) in target.blocks.iter_mut().zip(&online.blocks) {
        Zip::from(t)
            .and(o)
            .for_each(|t, &o| *t = (1.0 - factor) * *t + factor * o);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Adaptive-moment (or plain gradient descent) update rule with its state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: ParamSet,
    v: ParamSet,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, like: &ParamSet) -> Self {
        Self {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.m) {
            return usage("optimizer step with mismatched shapes");
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.blocks.iter_mut().zip(&grads.blocks) {
                    Zip::from(p).and(g).for_each(|p, &g| *p -= lr * g);
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
                let c1 = 1.0 - b1.powi(self.step as i32);
                let c2 = 1.0 - b2.powi(self.step as i32);
                for (((p, g), m), v) in params
                    .blocks
                    .iter_mut()
                    .zip(&grads.blocks)
                    .zip(self.m.blocks.iter_mut())
                    .zip(self.v.blocks.iter_mut())
                {
                    Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let mhat = *m / c1;
                        let vhat = *v / c2;
                        *p -= lr * mhat / (vhat.sqrt() + eps);
                    });
                }
            }
        }
        Ok(())
    }
}

/// Parameters of one approximator together with their gradient accumulator,
/// optimizer state and optional target copy.
#[derive(Debug, Clone)]
pub struct Trainable {
    pub params: ParamSet,
    pub grads: ParamSet,
    pub optim: Optimizer,
    pub target: Option<ParamSet>,
}

impl Trainable {
    pub fn new(params: ParamSet, kind: OptimizerKind, with_target: bool) -> Self {
        Self {
            grads: params.zeros_like(),
            optim: Optimizer::new(kind, &params),
            target: with_target.then(|| params.clone()),
            params,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grads.fill(0.0);
    }

    pub fn apply_grads(&mut self, lr: f64) -> Result<()> {
        self.optim.step(&mut self.params, &self.grads, lr)
    }

    pub fn update_target(&mut self, factor: f64) -> Result<()> {
        match self.target.as_mut() {
            Some(t) => soft_update(t, &self.params, factor),
            None => Ok(()),
        }
    }

    /// Target copy when present, otherwise the online parameters.
    pub fn target_or_online(&self) -> &ParamSet {
        self.target.as_ref().unwrap_or(&self.params)
    }
}
