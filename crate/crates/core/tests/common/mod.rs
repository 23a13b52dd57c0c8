#![allow(dead_code)]

use aufuse_core::feature_store::{FusionInput, FusionSample};
use aufuse_core::model::ModelConfig;
use aufuse_core::{AuLabels, PredictionTrack, NUM_AUS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Small model: every width ≤ 8.
pub fn toy_config(seed: u64) -> ModelConfig {
    ModelConfig {
        visual_dim: 3,
        ghfeat_dim: 4,
        audio_dim: 5,
        text_dim: 3,
        proj_dim: 4,
        gru_hidden: 3,
        mlp_hidden: 6,
        n_aus: NUM_AUS,
        activation: Default::default(),
        seed,
    }
}

fn seq(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..dim).map(|_| normal(rng)).collect()).collect()
}

pub fn toy_input(rng: &mut ChaCha8Rng, cfg: &ModelConfig, lens: [usize; 3]) -> FusionInput {
    FusionInput {
        visual: seq(rng, 1, cfg.visual_dim).remove(0),
        ghfeat: seq(rng, 1, cfg.ghfeat_dim).remove(0),
        ghfeat_seq: seq(rng, lens[0], cfg.ghfeat_dim),
        audio_seq: seq(rng, lens[1], cfg.audio_dim),
        text_seq: seq(rng, lens[2], cfg.text_dim),
    }
}

/// `n` samples with sequence lengths in 1..=5 and random binary labels.
pub fn toy_batch(seed: u64, cfg: &ModelConfig, n: usize) -> Vec<FusionSample> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let lens = [r.random_range(1..=5), r.random_range(1..=5), r.random_range(1..=5)];
            FusionSample {
                input: toy_input(&mut r, cfg, lens),
                label: std::array::from_fn(|_| r.random_range(0..=1u8)),
            }
        })
        .collect()
}

/// Piecewise-constant labels with runs of `min_run..=2·min_run` frames, each
/// (run, AU) positive with probability `pos_rate`.
pub fn run_labels(r: &mut ChaCha8Rng, frames: usize, min_run: usize, pos_rate: f64) -> Vec<AuLabels> {
    let mut out = Vec::with_capacity(frames);
    while out.len() < frames {
        let len = r.random_range(min_run..=2 * min_run).min(frames - out.len());
        let row: AuLabels = std::array::from_fn(|_| i8::from(r.random_bool(pos_rate)));
        out.extend(std::iter::repeat_n(row, len));
    }
    out
}

/// Logits `±signal` by label plus iid N(0, noise²).
pub fn noisy_track(r: &mut ChaCha8Rng, id: &str, labels: &[AuLabels], signal: f64, noise: f64) -> PredictionTrack {
    let logits = labels
        .iter()
        .map(|l| std::array::from_fn(|j| if l[j] == 1 { signal } else { -signal } + noise * normal(r)))
        .collect();
    PredictionTrack::new(id, (0..labels.len()).collect(), logits).unwrap()
}

/// A set of noisy tracks over `videos` videos with per-AU offsets, so AUs
/// have different calibration.
pub fn synthetic_tracks(seed: u64, videos: usize, frames: usize) -> (Vec<PredictionTrack>, Vec<Vec<AuLabels>>) {
    let mut r = rng(seed);
    let bias: [f64; NUM_AUS] = std::array::from_fn(|_| r.random_range(-1.5..1.5));
    let pos: f64 = r.random_range(0.1..0.6);
    let mut tracks = Vec::new();
    let mut labels = Vec::new();
    for v in 0..videos {
        let l = run_labels(&mut r, frames, 5, pos);
        let mut t = noisy_track(&mut r, &format!("v{v}"), &l, 1.0, 1.5);
        for row in &mut t.logits {
            for j in 0..NUM_AUS {
                row[j] += bias[j];
            }
        }
        tracks.push(PredictionTrack::new(t.video_id.clone(), t.frames.clone(), t.logits).unwrap());
        labels.push(l);
    }
    (tracks, labels)
}
