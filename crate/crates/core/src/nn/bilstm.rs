//! Bidirectional LSTM sequence classifier: per-frame outputs of the forward
//! and backward cells are concatenated, mean-pooled over time, and mapped to
//! class probabilities by a softmax layer.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::affine;
use super::{uniform, ParamSet};
use crate::error::{usage, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiLstmSpec {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
}

// Block layout: per direction [wx, wh, b], then the output head.
const OUT_W: usize = 6;
const OUT_B: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    Fwd,
    Bwd,
}

impl Dir {
    fn base(self) -> usize {
        match self {
            Dir::Fwd => 0,
            Dir::Bwd => 3,
        }
    }

    fn order(self, len: usize) -> Box<dyn Iterator<Item = usize>> {
        match self {
            Dir::Fwd => Box::new(0..len),
            Dir::Bwd => Box::new((0..len).rev()),
        }
    }
}

/// Activations of one direction at one time index.
#[derive(Debug, Clone)]
struct CellStep {
    gates: Array2<f64>, // [i | f | g | o] after nonlinearities, B x 4H
    c_prev: Array2<f64>,
    tanh_c: Array2<f64>,
    h_prev: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    inputs: Vec<Array2<f64>>,
    fwd: Vec<CellStep>,
    bwd: Vec<CellStep>,
    pooled: Array2<f64>,
}

impl BiLstmSpec {
    pub fn new(input_dim: usize, hidden: usize, classes: usize) -> Self {
        Self {
            input_dim,
            hidden,
            classes,
        }
    }

    /// Recurrent weights use the `1/sqrt(H)` uniform range of tanh/logistic
    /// gates; the output head is scaled by 1e-2 for near-uniform initial output.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let (d, h, k) = (self.input_dim, self.hidden, self.classes);
        let bound = 1.0 / (h as f64).sqrt();
        let mut p = ParamSet::new();
        for dir in ["fwd", "bwd"] {
            p.push(format!("{dir}_wx"), uniform(rng, d, 4 * h, bound));
            p.push(format!("{dir}_wh"), uniform(rng, h, 4 * h, bound));
            p.push(format!("{dir}_b"), Array2::zeros((1, 4 * h)));
        }
        let out_bound = 1e-2 * (6.0 / (2 * h + k) as f64).sqrt();
        p.push("out_w", uniform(rng, 2 * h, k, out_bound));
        p.push("out_b", Array2::zeros((1, k)));
        p
    }

    /// Class probabilities for one sequence of frames.
    pub fn classify(&self, params: &ParamSet, frames: &[Vec<f64>]) -> Result<Vec<f64>> {
        if frames.is_empty() {
            return usage("empty sequence");
        }
        let mut steps = Vec::with_capacity(frames.len());
        for f in frames {
            if f.len() != self.input_dim {
                return usage(format!(
                    "frame has length {}, expected {}",
                    f.len(),
                    self.input_dim
                ));
            }
            steps.push(Array2::from_shape_vec((1, f.len()), f.clone()).expect("row"));
        }
        let probs = self.probabilities(params, &steps)?;
        Ok(probs.row(0).to_vec())
    }

    /// Probabilities for a batch: `steps[t]` holds frame `t` of every sequence, one per row.
    pub fn probabilities(&self, params: &ParamSet, steps: &[Array2<f64>]) -> Result<Array2<f64>> {
        let (logits, _) = self.forward_cached(params, steps)?;
        Ok(softmax_rows(&logits))
    }

    pub fn forward_cached(
        &self,
        params: &ParamSet,
        steps: &[Array2<f64>],
    ) -> Result<(Array2<f64>, BiLstmCache)> {
        if steps.is_empty() {
            return usage("empty sequence");
        }
        let batch = steps[0].nrows();
        if steps
            .iter()
            .any(|x| x.ncols() != self.input_dim || x.nrows() != batch)
        {
            return usage("inconsistent frame shapes");
        }
        let len = steps.len();
        let h = self.hidden;
        let mut pooled = Array2::zeros((batch, 2 * h));
        let mut caches = Vec::with_capacity(2);
        for (dir, col) in [(Dir::Fwd, 0), (Dir::Bwd, h)] {
            let (cells, sum_h) = self.run_direction(params, steps, dir);
            pooled.slice_mut(s![.., col..col + h]).assign(&sum_h);
            caches.push(cells);
        }
        pooled /= len as f64;
        let logits = affine(pooled.view(), params.block(OUT_W), params.block(OUT_B));
        let bwd = caches.pop().unwrap_or_default();
        let fwd = caches.pop().unwrap_or_default();
        Ok((
            logits,
            BiLstmCache {
                inputs: steps.to_vec(),
                fwd,
                bwd,
                pooled,
            },
        ))
    }

    /// Runs one direction; cells are stored by time index, and the sum of
    /// hidden outputs over time is returned alongside.
    fn run_direction(
        &self,
        p: &ParamSet,
        steps: &[Array2<f64>],
        dir: Dir,
    ) -> (Vec<CellStep>, Array2<f64>) {
        let h = self.hidden;
        let batch = steps[0].nrows();
        let (wx, wh, bias) = (
            p.block(dir.base()),
            p.block(dir.base() + 1),
            p.block(dir.base() + 2),
        );
        let mut h_prev = Array2::zeros((batch, h));
        let mut c_prev = Array2::zeros((batch, h));
        let mut sum_h = Array2::zeros((batch, h));
        let mut cells: Vec<Option<CellStep>> = vec![None; steps.len()];
        for t in dir.order(steps.len()) {
            let mut z = steps[t].dot(wx);
            z += &h_prev.dot(wh);
            z += bias;
            for mut row in z.rows_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if (2 * h..3 * h).contains(&j) {
                        v.tanh()
                    } else {
                        sigmoid(*v)
                    };
                }
            }
            let i_g = z.slice(s![.., 0..h]);
            let f_g = z.slice(s![.., h..2 * h]);
            let g_g = z.slice(s![.., 2 * h..3 * h]);
            let o_g = z.slice(s![.., 3 * h..4 * h]);
            let c = &f_g * &c_prev + &i_g * &g_g;
            let tanh_c = c.mapv(f64::tanh);
            let h_new = &o_g * &tanh_c;
            sum_h += &h_new;
            cells[t] = Some(CellStep {
                gates: z.clone(),
                c_prev: std::mem::replace(&mut c_prev, c),
                tanh_c,
                h_prev: std::mem::replace(&mut h_prev, h_new),
            });
        }
        (
            cells.into_iter().map(|c| c.expect("visited")).collect(),
            sum_h,
        )
    }

    /// Backpropagates `d_logits` (gradient of the loss with respect to the
    /// pre-softmax outputs) and accumulates parameter gradients.
    pub fn backward(
        &self,
        p: &ParamSet,
        cache: &BiLstmCache,
        d_logits: &Array2<f64>,
        grads: &mut ParamSet,
    ) {
        let h = self.hidden;
        *grads.block_mut(OUT_W) += &cache.pooled.t().dot(d_logits);
        *grads.block_mut(OUT_B) += &d_logits.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_pooled = d_logits.dot(&p.block(OUT_W).t()) / cache.inputs.len() as f64;
        for (dir, cells, col) in [(Dir::Fwd, &cache.fwd, 0), (Dir::Bwd, &cache.bwd, h)] {
            let d_out = d_pooled.slice(s![.., col..col + h]);
            self.backward_direction(p, cache, cells, dir, d_out, grads);
        }
    }

    fn backward_direction(
        &self,
        p: &ParamSet,
        cache: &BiLstmCache,
        cells: &[CellStep],
        dir: Dir,
        d_out: ArrayView2<f64>,
        grads: &mut ParamSet,
    ) {
        let h = self.hidden;
        let batch = d_out.nrows();
        let wh = p.block(dir.base() + 1);
        let mut dh_next: Array2<f64> = Array2::zeros((batch, h));
        let mut dc_next: Array2<f64> = Array2::zeros((batch, h));
        let order: Vec<usize> = dir.order(cells.len()).collect();
        let mut dz = Array2::zeros((batch, 4 * h));
        for &t in order.iter().rev() {
            let cell = &cells[t];
            let dh = &d_out + &dh_next;
            let g = &cell.gates;
            for b in 0..batch {
                for j in 0..h {
                    let (ig, fg, gg, og) = (
                        g[[b, j]],
                        g[[b, h + j]],
                        g[[b, 2 * h + j]],
                        g[[b, 3 * h + j]],
                    );
                    let tc = cell.tanh_c[[b, j]];
                    let dhv = dh[[b, j]];
                    let dc = dc_next[[b, j]] + dhv * og * (1.0 - tc * tc);
                    dz[[b, j]] = dc * gg * ig * (1.0 - ig);
                    dz[[b, h + j]] = dc * cell.c_prev[[b, j]] * fg * (1.0 - fg);
                    dz[[b, 2 * h + j]] = dc * ig * (1.0 - gg * gg);
                    dz[[b, 3 * h + j]] = dhv * tc * og * (1.0 - og);
                    dc_next[[b, j]] = dc * fg;
                }
            }
            *grads.block_mut(dir.base()) += &cache.inputs[t].t().dot(&dz);
            *grads.block_mut(dir.base() + 1) += &cell.h_prev.t().dot(&dz);
            *grads.block_mut(dir.base() + 2) += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            dh_next = dz.dot(&wh.t());
        }
    }

    /// Mean cross-entropy of `labels` and its gradient, accumulated into `grads`.
    /// Returns `(loss, number of rows whose argmax equals the label)`.
    pub fn cross_entropy_step(
        &self,
        params: &ParamSet,
        steps: &[Array2<f64>],
        labels: &[usize],
        grads: &mut ParamSet,
    ) -> Result<(f64, usize)> {
        let (logits, cache) = self.forward_cached(params, steps)?;
        if labels.len() != logits.nrows() || labels.iter().any(|&z| z >= self.classes) {
            return usage("labels do not match the batch");
        }
        let mut probs = softmax_rows(&logits);
        let batch = labels.len() as f64;
        let mut loss = 0.0;
        let mut correct = 0;
        for (b, &z) in labels.iter().enumerate() {
            let row = probs.row(b);
            loss -= row[z].max(f64::MIN_POSITIVE).ln();
            if argmax(row.iter().copied()) == z {
                correct += 1;
            }
        }
        for (b, &z) in labels.iter().enumerate() {
            probs[[b, z]] -= 1.0;
        }
        probs /= batch;
        self.backward(params, &cache, &probs, grads);
        Ok((loss / batch, correct))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
