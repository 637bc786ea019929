//! Training loop, evaluation, checkpoints and run artifacts.

mod agents;
mod config;
mod eval;
mod run;

pub use agents::{load_checkpoint, save_checkpoint, Agents, CheckpointMeta};
pub use config::{Algorithm, TrainConfig};
pub use eval::{
    adhoc_evaluate, collect_segments, evaluate, read_replays, replay_path, write_replays,
    EvalReport, StepRecord, TeammateSpec,
};
pub use run::{
    run_training, MetricsRecord, RunArtifacts, Trace, Trainer, CHECKPOINT_DIR, DATASET_FILE,
    METRICS_FILE, REPLAY_DIR,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers; every consumer of randomness gets its own stream of the run seed.
pub mod stream {
    pub const HIGH_INIT: u64 = 1;
    pub const LOW_INIT: u64 = 2;
    pub const DECODER_INIT: u64 = 3;
    pub const ENV: u64 = 4;
    pub const OPPONENT: u64 = 5;
    pub const HIGH_EXPLORE: u64 = 6;
    pub const LOW_EXPLORE: u64 = 7;
    pub const HIGH_SAMPLE: u64 = 8;
    pub const LOW_SAMPLE: u64 = 9;
    pub const DECODER_TRAIN: u64 = 10;
    pub const EVAL: u64 = 11;
    pub const TEAMMATE: u64 = 12;
}

pub fn rng_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// SplitMix64 of `base + index`, used to give every episode its own seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
