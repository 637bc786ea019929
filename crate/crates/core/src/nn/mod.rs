//! Small double-precision neural approximators with hand-written reverse-mode
//! gradients: rectifier MLPs, a monotonic mixing network driven by
//! hypernetworks, and a bidirectional LSTM sequence classifier.

pub mod bilstm;
pub mod checkpoint;
pub mod gradcheck;
pub mod mixer;
pub mod mlp;
mod params;

pub use bilstm::{argmax, softmax_rows, BiLstmSpec};
pub use mixer::MixerSpec;
pub use mlp::MlpSpec;
pub use params::{soft_update, Optimizer, OptimizerKind, ParamSet, Trainable};

use ndarray::Array2;
use rand::Rng;

/// `rows x cols` matrix with entries uniform in `[-bound, bound]`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        if bound == 0.0 {
            0.0
        } else {
            rng.gen_range(-bound..=bound)
        }
    })
}
