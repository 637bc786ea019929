//! Monotonic value mixing.
//!
//! Per-agent utilities `u` (length N) are combined with state-conditioned
//! weights produced by hypernetworks:
//!
//! ```text
//! hidden = elu(u . |W1(s)| + b1(s))        W1(s): N x E, b1(s): E
//! q_tot  = hidden . |w2(s)| + V(s)          w2(s): E,  V(s) = relu(s V1 + c1) v2 + c2
//! ```
//!
//! Taking absolute values of the generated weights keeps `q_tot`
//! non-decreasing in every utility.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::affine;
use super::{uniform, ParamSet};
use crate::error::{usage, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixerSpec {
    pub n_agents: usize,
    pub state_dim: usize,
    pub embed_dim: usize,
}

const HW1: usize = 0;
const HW1_B: usize = 1;
const HB1: usize = 2;
const HB1_B: usize = 3;
const HW2: usize = 4;
const HW2_B: usize = 5;
const V1: usize = 6;
const V1_B: usize = 7;
const V2: usize = 8;
const V2_B: usize = 9;

impl MixerSpec {
    pub fn new(n_agents: usize, state_dim: usize, embed_dim: usize) -> Self {
        Self {
            n_agents,
            state_dim,
            embed_dim,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let (s, n, e) = (self.state_dim, self.n_agents, self.embed_dim);
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut p = ParamSet::new();
        p.push("hyper_w1", uniform(rng, s, n * e, glorot(s, n * e)));
        p.push("hyper_w1_b", Array2::zeros((1, n * e)));
        p.push("hyper_b1", uniform(rng, s, e, glorot(s, e)));
        p.push("hyper_b1_b", Array2::zeros((1, e)));
        p.push("hyper_w2", uniform(rng, s, e, glorot(s, e)));
        p.push("hyper_w2_b", Array2::zeros((1, e)));
        p.push("hyper_v1", uniform(rng, s, e, (6.0 / s as f64).sqrt()));
        p.push("hyper_v1_b", Array2::zeros((1, e)));
        p.push(
            "hyper_v2",
            uniform(rng, e, 1, 1e-2 * (6.0 / e as f64).sqrt()),
        );
        p.push("hyper_v2_b", Array2::zeros((1, 1)));
        p
    }

    fn check(&self, utilities: &ArrayView2<f64>, states: &ArrayView2<f64>) -> Result<()> {
        if utilities.ncols() != self.n_agents
            || states.ncols() != self.state_dim
            || utilities.nrows() != states.nrows()
        {
            return usage(format!(
                "mixer expects {} utilities and state of length {} per row",
                self.n_agents, self.state_dim
            ));
        }
        Ok(())
    }

    /// `q_tot` for one sample.
    pub fn forward(&self, params: &ParamSet, utilities: &[f64], state: &[f64]) -> Result<f64> {
        let u = ArrayView2::from_shape((1, utilities.len()), utilities)
            .map_err(|e| crate::HsdError::Usage(e.to_string()))?;
        let s = ArrayView2::from_shape((1, state.len()), state)
            .map_err(|e| crate::HsdError::Usage(e.to_string()))?;
        Ok(self.forward_batch(params, u, s)?[0])
    }

    pub fn forward_batch(
        &self,
        params: &ParamSet,
        utilities: ArrayView2<f64>,
        states: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        self.check(&utilities, &states)?;
        Ok(self.run(params, utilities, states).0)
    }

    pub fn forward_cached(
        &self,
        params: &ParamSet,
        utilities: ArrayView2<f64>,
        states: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, MixerCache)> {
        self.check(&utilities, &states)?;
        Ok(self.run(params, utilities, states))
    }

    fn run(
        &self,
        p: &ParamSet,
        utilities: ArrayView2<f64>,
        states: ArrayView2<f64>,
    ) -> (Array1<f64>, MixerCache) {
        let (n, e) = (self.n_agents, self.embed_dim);
        let batch = states.nrows();
        let a1 = affine(states, p.block(HW1), p.block(HW1_B));
        let b1 = affine(states, p.block(HB1), p.block(HB1_B));
        let a2 = affine(states, p.block(HW2), p.block(HW2_B));
        let v_pre = affine(states, p.block(V1), p.block(V1_B));
        let v_hid = v_pre.mapv(|x| x.max(0.0));
        let v = affine(v_hid.view(), p.block(V2), p.block(V2_B));

        let mut h_pre = b1;
        for b in 0..batch {
            for k in 0..n {
                let u = utilities[[b, k]];
                let row = a1.slice(ndarray::s![b, k * e..(k + 1) * e]);
                Zip::from(h_pre.row_mut(b))
                    .and(&row)
                    .for_each(|h, &w| *h += u * w.abs());
            }
        }
        let hidden = h_pre.mapv(elu);
        let mut q = Array1::zeros(batch);
        for b in 0..batch {
            let mut s = v[[b, 0]];
            for j in 0..e {
                s += hidden[[b, j]] * a2[[b, j]].abs();
            }
            q[b] = s;
        }
        let cache = MixerCache {
            states: states.to_owned(),
            utilities: utilities.to_owned(),
            a1,
            a2,
            h_pre,
            hidden,
            v_hid,
        };
        (q, cache)
    }

    /// Accumulates parameter gradients for upstream gradient `d_q` (one entry
    /// per row) and returns the gradient with respect to the utilities.
    pub fn backward(
        &self,
        p: &ParamSet,
        cache: &MixerCache,
        d_q: &Array1<f64>,
        grads: &mut ParamSet,
    ) -> Array2<f64> {
        let (n, e) = (self.n_agents, self.embed_dim);
        let batch = d_q.len();
        let s = &cache.states;

        // Value path.
        let d_v = d_q.view().insert_axis(Axis(1)).to_owned();
        *grads.block_mut(V2) += &cache.v_hid.t().dot(&d_v);
        *grads.block_mut(V2_B) += &d_v.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d_vhid = d_v.dot(&p.block(V2).t());
        Zip::from(&mut d_vhid).and(&cache.v_hid).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0
            }
        });
        *grads.block_mut(V1) += &s.t().dot(&d_vhid);
        *grads.block_mut(V1_B) += &d_vhid.sum_axis(Axis(0)).insert_axis(Axis(0));

        // Second mixing layer.
        let mut d_a2 = Array2::zeros((batch, e));
        let mut d_hpre = Array2::zeros((batch, e));
        for b in 0..batch {
            for j in 0..e {
                let a = cache.a2[[b, j]];
                d_a2[[b, j]] = d_q[b] * cache.hidden[[b, j]] * a.signum_or_zero();
                let x = cache.h_pre[[b, j]];
                d_hpre[[b, j]] = d_q[b] * a.abs() * elu_grad(x);
            }
        }
        *grads.block_mut(HW2) += &s.t().dot(&d_a2);
        *grads.block_mut(HW2_B) += &d_a2.sum_axis(Axis(0)).insert_axis(Axis(0));

        // First mixing layer.
        *grads.block_mut(HB1) += &s.t().dot(&d_hpre);
        *grads.block_mut(HB1_B) += &d_hpre.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d_a1 = Array2::zeros((batch, n * e));
        let mut d_u = Array2::zeros((batch, n));
        for b in 0..batch {
            for k in 0..n {
                let u = cache.utilities[[b, k]];
                let mut du = 0.0;
                for j in 0..e {
                    let a = cache.a1[[b, k * e + j]];
                    let dh = d_hpre[[b, j]];
                    d_a1[[b, k * e + j]] = dh * u * a.signum_or_zero();
                    du += dh * a.abs();
                }
                d_u[[b, k]] = du;
            }
        }
        *grads.block_mut(HW1) += &s.t().dot(&d_a1);
        *grads.block_mut(HW1_B) += &d_a1.sum_axis(Axis(0)).insert_axis(Axis(0));
        d_u
    }
}

#[derive(Debug, Clone)]
pub struct MixerCache {
    states: Array2<f64>,
    utilities: Array2<f64>,
    a1: Array2<f64>,
    a2: Array2<f64>,
    h_pre: Array2<f64>,
    hidden: Array2<f64>,
    v_hid: Array2<f64>,
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}
