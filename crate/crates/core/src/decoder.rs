//! Skill decoder `p(z | tau)`: segment preprocessing, the online
//! trajectory-skill dataset, supervised training and the intrinsic reward.

use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, HsdError, Result};
use crate::nn::{argmax, BiLstmSpec, OptimizerKind, Trainable};

/// Preprocessed segment: difference frames over the retained entries.
pub type DecoderInput = Vec<Vec<f64>>;

/// Downsamples `frames` to indices `0, k_skip, 2 k_skip, ...`, projects each
/// kept frame onto `entries`, and returns consecutive differences.
pub fn preprocess_segment(
    frames: &[Vec<f64>],
    k_skip: usize,
    entries: &[usize],
) -> Result<DecoderInput> {
    if k_skip == 0 {
        return usage("k_skip must be positive");
    }
    if frames.len() < 2 * k_skip {
        return usage(format!(
            "segment of {} frames is too short for k_skip = {k_skip}",
            frames.len()
        ));
    }
    let mut kept = Vec::with_capacity(frames.len() / k_skip + 1);
    for f in frames.iter().step_by(k_skip) {
        let mut row = Vec::with_capacity(entries.len());
        for &e in entries {
            match f.get(e) {
                Some(&v) => row.push(v),
                None => return usage(format!("frame has no entry {e}")),
            }
        }
        kept.push(row);
    }
    Ok(kept
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
        .collect())
}

/// Number of difference frames produced for a segment of `t_seg` steps.
pub fn decoder_input_len(t_seg: usize, k_skip: usize) -> usize {
    t_seg.div_ceil(k_skip) - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub hidden: usize,
    /// Dataset size that triggers a training round.
    pub n_batch: usize,
    pub passes: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            n_batch: 1000,
            passes: 10,
            minibatch: 100,
            learning_rate: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SkillDecoder {
    pub spec: BiLstmSpec,
    pub net: Trainable,
}

impl SkillDecoder {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        skills: usize,
        rng: &mut R,
    ) -> Self {
        let spec = BiLstmSpec::new(input_dim, hidden, skills);
        let net = Trainable::new(spec.init(rng), OptimizerKind::Adam, false);
        Self { spec, net }
    }

    pub fn with_optimizer(mut self, kind: OptimizerKind) -> Self {
        self.net = Trainable::new(self.net.params, kind, false);
        self
    }

    pub fn num_skills(&self) -> usize {
        self.spec.classes
    }

    pub fn probabilities(&self, input: &DecoderInput) -> Result<Vec<f64>> {
        self.spec.classify(&self.net.params, input)
    }

    /// `p(z | tau)`.
    pub fn intrinsic_reward(&self, skill: usize, input: &DecoderInput) -> Result<f64> {
        if skill >= self.num_skills() {
            return usage(format!("skill {skill} out of range"));
        }
        Ok(self.probabilities(input)?[skill])
    }

    /// Fraction of pairs whose most probable class is the label.
    pub fn accuracy(&self, pairs: &[(usize, DecoderInput)]) -> Result<f64> {
        if pairs.is_empty() {
            return Ok(0.0);
        }
        let (_, correct) = self.evaluate(pairs)?;
        Ok(correct as f64 / pairs.len() as f64)
    }

    /// Mean cross-entropy and number of correct predictions over `pairs`.
    pub fn evaluate(&self, pairs: &[(usize, DecoderInput)]) -> Result<(f64, usize)> {
        let mut loss = 0.0;
        let mut correct = 0;
        for chunk in pairs.chunks(500) {
            let steps = stack_steps(chunk)?;
            let probs = self.spec.probabilities(&self.net.params, &steps)?;
            for (row, (z, _)) in probs.rows().into_iter().zip(chunk) {
                loss -= row[*z].max(f64::MIN_POSITIVE).ln();
                if argmax(row.iter().copied()) == *z {
                    correct += 1;
                }
            }
        }
        Ok((loss / pairs.len() as f64, correct))
    }
}

/// Frame-major batch layout expected by the recurrent network.
fn stack_steps(pairs: &[(usize, DecoderInput)]) -> Result<Vec<Array2<f64>>> {
    let len = pairs[0].1.len();
    let dim = pairs[0].1.first().map_or(0, Vec::len);
    if pairs
        .iter()
        .any(|(_, x)| x.len() != len || x.iter().any(|f| f.len() != dim))
    {
        return usage("decoder inputs have inconsistent shapes");
    }
    Ok((0..len)
        .map(|t| {
            let data = pairs
                .iter()
                .flat_map(|(_, x)| x[t].iter().copied())
                .collect();
            Array2::from_shape_vec((pairs.len(), dim), data).expect("consistent shapes")
        })
        .collect())
}

/// Accumulated `(skill, preprocessed segment)` pairs awaiting a training round.
#[derive(Debug, Clone, Default)]
pub struct SkillDataset {
    pairs: Vec<(usize, DecoderInput)>,
}

impl SkillDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, skill: usize, input: DecoderInput) {
        self.pairs.push((skill, input));
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, DecoderInput)] {
        &self.pairs
    }

    pub fn class_counts(&self, skills: usize) -> Vec<usize> {
        let mut counts = vec![0; skills];
        for (z, _) in &self.pairs {
            if *z < skills {
                counts[*z] += 1;
            }
        }
        counts
    }

    /// One JSON object per line: `{"skill": z, "frames": [[...], ...]}`.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        for (z, frames) in &self.pairs {
            serde_json::to_writer(&mut w, &DumpRecord { skill: *z, frames })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct DumpRecord<'a> {
    skill: usize,
    frames: &'a DecoderInput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecoderRound {
    /// Mean cross-entropy over the dataset before any update.
    pub loss: f64,
    /// Accuracy over the dataset before any update.
    pub accuracy: f64,
    pub class_counts: Vec<usize>,
}

/// Runs `passes` shuffled minibatch passes over the dataset and empties it.
/// Fails with a not-ready error while the dataset is below `n_batch`.
pub fn train_decoder<R: Rng + ?Sized>(
    decoder: &mut SkillDecoder,
    dataset: &mut SkillDataset,
    cfg: &DecoderConfig,
    rng: &mut R,
) -> Result<DecoderRound> {
    if dataset.len() < cfg.n_batch.max(1) {
        return Err(HsdError::NotReady {
            have: dataset.len(),
            need: cfg.n_batch.max(1),
        });
    }
    let (loss, correct) = decoder.evaluate(&dataset.pairs)?;
    let round = DecoderRound {
        loss,
        accuracy: correct as f64 / dataset.len() as f64,
        class_counts: dataset.class_counts(decoder.num_skills()),
    };
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch = Vec::with_capacity(cfg.minibatch);
    for _ in 0..cfg.passes {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch.max(1)) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset.pairs[i].clone()));
            let labels: Vec<usize> = batch.iter().map(|(z, _)| *z).collect();
            let steps = stack_steps(&batch)?;
            decoder.net.zero_grad();
            let net = &mut decoder.net;
            decoder
                .spec
                .cross_entropy_step(&net.params, &steps, &labels, &mut net.grads)?;
            net.apply_grads(cfg.learning_rate)?;
        }
    }
    dataset.pairs.clear();
    Ok(round)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        decoder_entry_indices, encode_observation, EnvConfig, Possession, Sts2Env, Team, Vec2,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frames(n: usize, dim: usize, f: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|t| (0..dim).map(|e| f(t, e)).collect())
            .collect()
    }

    #[test]
    fn shapes_for_default_segmentation() {
        let raw = frames(10, 31, |t, e| (t * e) as f64);
        let x = preprocess_segment(&raw, 2, &decoder_entry_indices(3)).unwrap();
        assert_eq!(x.len(), 4);
        assert_eq!(decoder_input_len(10, 2), 4);
        assert!(x.iter().all(|f| f.len() == 11));
        assert_eq!(decoder_input_len(9, 2), 4);
        assert_eq!(preprocess_segment(&raw[..9], 2, &[0]).unwrap().len(), 4);
    }

    #[test]
    fn too_short_segments_are_rejected() {
        let raw = frames(3, 31, |_, _| 0.0);
        assert!(preprocess_segment(&raw, 2, &[0]).is_err());
        assert!(preprocess_segment(&raw, 0, &[0]).is_err());
        assert!(preprocess_segment(&raw, 1, &[40]).is_err());
    }

    #[test]
    fn constants_vanish_and_offsets_cancel() {
        let raw = frames(10, 31, |_, e| e as f64 * 0.1);
        let x = preprocess_segment(&raw, 2, &decoder_entry_indices(3)).unwrap();
        assert!(x.iter().flatten().all(|&v| v == 0.0));
        let moving = frames(10, 31, |t, e| (t as f64).sin() + e as f64);
        let shifted = frames(10, 31, |t, e| (t as f64).sin() + e as f64 + 7.0);
        let a = preprocess_segment(&moving, 2, &decoder_entry_indices(3)).unwrap();
        let b = preprocess_segment(&shifted, 2, &decoder_entry_indices(3)).unwrap();
        for (fa, fb) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((fa - fb).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_line_motion_gives_constant_differences() {
        let cfg = EnvConfig::default();
        let mut env = Sts2Env::new(cfg.clone()).unwrap();
        let mut state = env.reset(0).clone();
        state.possession = Possession::Free;
        state.ball = Vec2::new(0.0, 0.0);
        let c = Vec2::new(0.3, -0.1);
        let start = Vec2::new(-10.0, 2.0);
        let raw: Vec<Vec<f64>> = (0..10)
            .map(|t| {
                state.home[0].pos = start + c * t as f64;
                state.home[0].vel = c;
                encode_observation(&cfg, &state, Team::Home, 0)
            })
            .collect();
        let x = preprocess_segment(&raw, 2, &decoder_entry_indices(3)).unwrap();
        let (l, w) = (cfg.field_half_length, cfg.field_half_width);
        for f in &x {
            assert!((f[6] - 2.0 * c.x / l).abs() < 1e-12);
            assert!((f[7] - 2.0 * c.y / w).abs() < 1e-12);
            assert!((f[0] + 2.0 * c.x / l).abs() < 1e-12);
            assert!((f[1] + 2.0 * c.y / w).abs() < 1e-12);
            assert!(f[8].abs() < 1e-12 && f[9].abs() < 1e-12);
        }
    }

    #[test]
    fn zero_head_is_uniform_and_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut dec = SkillDecoder::new(11, 16, 4, &mut rng);
        let x = frames(4, 11, |t, e| ((t + 1) * (e + 2)) as f64 * 0.05);
        let total: f64 = (0..4).map(|z| dec.intrinsic_reward(z, &x).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        dec.net.params.get_mut("out_w").unwrap().fill(0.0);
        for z in 0..4 {
            assert!((dec.intrinsic_reward(z, &x).unwrap() - 0.25).abs() < 1e-15);
        }
        assert!(dec.intrinsic_reward(4, &x).is_err());
    }

    #[test]
    fn uniform_decoder_loss_is_ln_k_and_dataset_flushes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut dec = SkillDecoder::new(11, 8, 4, &mut rng);
        dec.net.params.get_mut("out_w").unwrap().fill(0.0);
        let cfg = DecoderConfig {
            hidden: 8,
            n_batch: 20,
            passes: 1,
            minibatch: 10,
            learning_rate: 1e-3,
        };
        let mut data = SkillDataset::new();
        for i in 0..19 {
            data.push(i % 4, frames(4, 11, |t, e| (i + t + e) as f64 * 0.01));
        }
        assert!(matches!(
            train_decoder(&mut dec, &mut data, &cfg, &mut rng),
            Err(HsdError::NotReady { have: 19, need: 20 })
        ));
        data.push(0, frames(4, 11, |_, _| 0.0));
        let round = train_decoder(&mut dec, &mut data, &cfg, &mut rng).unwrap();
        assert!((round.loss - 4f64.ln()).abs() < 1e-12);
        assert_eq!(round.class_counts, vec![6, 5, 5, 4]);
        assert_eq!(data.len(), 0);
    }

    #[test]
    fn repeated_single_pair_loss_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut dec = SkillDecoder::new(11, 8, 4, &mut rng);
        let cfg = DecoderConfig {
            hidden: 8,
            n_batch: 1,
            passes: 1,
            minibatch: 1,
            learning_rate: 1e-2,
        };
        let x = frames(4, 11, |t, e| ((t * 3 + e) % 5) as f64 * 0.1 - 0.2);
        let mut losses = Vec::new();
        for _ in 0..10 {
            let mut data = SkillDataset::new();
            data.push(2, x.clone());
            losses.push(
                train_decoder(&mut dec, &mut data, &cfg, &mut rng)
                    .unwrap()
                    .loss,
            );
        }
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn dump_is_line_delimited_json() {
        let mut data = SkillDataset::new();
        data.push(1, vec![vec![0.5, -1.0]]);
        data.push(3, vec![vec![0.0, 2.0]]);
        let mut out = Vec::new();
        data.dump(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["skill"], 1);
        assert_eq!(v["frames"][0][1], -1.0);
    }
}
