use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform, ParamSet};
use crate::error::{usage, Result};

/// Fully connected network with rectifier hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
        }
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(&self.hidden);
        d.push(self.output_dim);
        d
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return usage("MLP dimensions must be positive");
        }
        Ok(())
    }

    /// Blocks `w{l}` (`in x out`) and `b{l}` (`1 x out`). Hidden layers use
    /// rectifier-gain uniform init; the output layer is scaled down by 1e-2.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let dims = self.dims();
        let mut p = ParamSet::new();
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let mut bound = (6.0 / fan_in as f64).sqrt();
            if l == dims.len() - 2 {
                bound *= 1e-2;
            }
            p.push(format!("w{l}"), uniform(rng, fan_in, fan_out, bound));
            p.push(format!("b{l}"), Array2::zeros((1, fan_out)));
        }
        p
    }

    pub fn forward(&self, params: &ParamSet, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim {
            return usage(format!(
                "MLP input has length {}, expected {}",
                input.len(),
                self.input_dim
            ));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(params, x).into_raw_vec_and_offset().0)
    }

    /// Batched forward pass, one sample per row.
    pub fn forward_batch(&self, params: &ParamSet, x: ArrayView2<f64>) -> Array2<f64> {
        let layers = self.num_layers();
        let mut h = affine(x, params.block(0), params.block(1));
        for l in 1..layers {
            h.mapv_inplace(relu);
            h = affine(h.view(), params.block(2 * l), params.block(2 * l + 1));
        }
        h
    }

    pub fn forward_cached(&self, params: &ParamSet, x: Array2<f64>) -> (Array2<f64>, MlpCache) {
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut h = x;
        for l in 0..layers {
            let z = affine(h.view(), params.block(2 * l), params.block(2 * l + 1));
            inputs.push(h);
            h = if l + 1 < layers { z.mapv(relu) } else { z };
        }
        (h, MlpCache { inputs })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input rows.
    pub fn backward(
        &self,
        params: &ParamSet,
        cache: &MlpCache,
        d_out: Array2<f64>,
        grads: &mut ParamSet,
    ) -> Array2<f64> {
        let mut delta = d_out;
        for l in (0..self.num_layers()).rev() {
            let input = &cache.inputs[l];
            *grads.block_mut(2 * l) += &input.t().dot(&delta);
            let db: Array1<f64> = delta.sum_axis(Axis(0));
            *grads.block_mut(2 * l + 1) += &db.insert_axis(Axis(0));
            let mut d_in = delta.dot(&params.block(2 * l).t());
            if l > 0 {
                // `input` is relu(z) of the previous layer; its positivity is the mask.
                Zip::from(&mut d_in).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            delta = d_in;
        }
        delta
    }
}

/// Layer inputs recorded by [`MlpSpec::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
}

pub(crate) fn affine(x: ArrayView2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut z = x.dot(w);
    z += b;
    z
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_gradients, random_params};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_bias() {
        let spec = MlpSpec::new(3, &[4], 2);
        let mut p = spec.init(&mut ChaCha8Rng::seed_from_u64(0));
        p.fill(0.0);
        *p.get_mut("b1").unwrap() = array![[0.25, -1.5]];
        assert_eq!(
            spec.forward(&p, &[1.0, 2.0, 3.0]).unwrap(),
            vec![0.25, -1.5]
        );
    }

    #[test]
    fn identity_layer() {
        let spec = MlpSpec::new(3, &[], 3);
        let mut p = ParamSet::new();
        p.push("w0", Array2::eye(3));
        p.push("b0", Array2::zeros((1, 3)));
        assert_eq!(
            spec.forward(&p, &[0.5, -2.0, 7.0]).unwrap(),
            vec![0.5, -2.0, 7.0]
        );
    }

    #[test]
    fn shape_mismatch_is_error() {
        let spec = MlpSpec::new(3, &[4], 2);
        let p = spec.init(&mut ChaCha8Rng::seed_from_u64(0));
        assert!(spec.forward(&p, &[1.0]).is_err());
        assert!(MlpSpec::new(0, &[4], 2).validate().is_err());
    }

    #[test]
    fn matches_straight_line_oracle() {
        let spec = MlpSpec::new(5, &[7, 6], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_params(&spec.init(&mut rng), &mut rng, 1.0);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Explicit loops over the row-major blocks.
        let layer = |input: &[f64], w: &Array2<f64>, b: &Array2<f64>, act: bool| -> Vec<f64> {
            (0..w.ncols())
                .map(|j| {
                    let mut s = b[[0, j]];
                    for (i, xi) in input.iter().enumerate() {
                        s += xi * w[[i, j]];
                    }
                    if act && s < 0.0 {
                        0.0
                    } else {
                        s
                    }
                })
                .collect()
        };
        let h1 = layer(&x, p.block(0), p.block(1), true);
        let h2 = layer(&h1, p.block(2), p.block(3), true);
        let out = layer(&h2, p.block(4), p.block(5), false);
        let got = spec.forward(&p, &x).unwrap();
        for (a, b) in got.iter().zip(&out) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_loss_closed_form() {
        // L = |Wx + b - y|^2 / 2  =>  dL/dW = x (Wx + b - y)^T in (in x out) layout.
        let spec = MlpSpec::new(2, &[], 2);
        let mut p = ParamSet::new();
        p.push("w0", array![[1.0, 2.0], [3.0, 4.0]]);
        p.push("b0", Array2::zeros((1, 2)));
        let x = array![[0.5, -1.0]];
        let y = array![[1.0, 1.0]];
        let (out, cache) = spec.forward_cached(&p, x.clone());
        let resid = &out - &y;
        let mut g = p.zeros_like();
        spec.backward(&p, &cache, resid.clone(), &mut g);
        let expect = x.t().dot(&resid);
        assert_eq!(g.block(0), &expect);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let spec = MlpSpec::new(4, &[5], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = spec.init(&mut rng);
        let (_, cache) = spec.forward_cached(&p, Array2::ones((2, 4)));
        let mut g = p.zeros_like();
        spec.backward(&p, &cache, Array2::zeros((2, 3)), &mut g);
        assert_eq!(g.max_abs_diff(&p.zeros_like()), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let spec = MlpSpec::new(6, &[8, 8], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = uniform(&mut rng, 3, 6, 1.0);
        let c = uniform(&mut rng, 3, 4, 1.0);
        let loss = |p: &ParamSet| -> f64 {
            let out = spec.forward_batch(p, x.view());
            (&out * &c).sum() + 0.5 * out.mapv(|v| v * v).sum()
        };
        let grad = |p: &ParamSet| -> ParamSet {
            let (out, cache) = spec.forward_cached(p, x.clone());
            let mut g = p.zeros_like();
            spec.backward(p, &cache, &c + &out, &mut g);
            g
        };
        for _ in 0..3 {
            let p = random_params(&spec.init(&mut rng), &mut rng, 1.0);
            let report = check_gradients(&p, loss, grad(&p), None, &mut rng);
            assert!(report.max_rel_err <= 1e-4, "{report:?}");
        }
    }
}
