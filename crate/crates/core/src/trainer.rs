//! Mini-batch training with AdamW, global-norm clipping, per-epoch
//! validation and early stopping on validation macro F1.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::au::{AuLabels, NUM_AUS};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::feature_store::{Dataset, FrameRef, FusionSample, Split};
use crate::losses::LossWeights;
use crate::metrics::{f1_per_au, macro_f1, EvalReport};
use crate::model::{backward, forward, init_model, InputStream, ModelConfig, ModelParams};
use crate::nn::{adamw_step, clip_global_norm, AdamWConfig, OptimizerState};
use crate::postprocess::{PredictionTrack, ThresholdVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    #[serde(default)]
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-5,
            weight_decay: 1e-5,
            clip_norm: 1.0,
            batch_size: 256,
            max_epochs: 20,
            patience: 5,
            seed: 0,
            loss_weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("train config: {m}")));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        self.loss_weights.validate()
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    pub val_per_au: [f64; NUM_AUS],
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned parameters; 0 means the initial model.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_macro_f1");
        for n in crate::au::AU_NAMES {
            let _ = write!(s, ",val_{n}");
        }
        s.push_str(",wall_secs\n");
        for e in &self.epochs {
            let _ = write!(s, "{},{:.8},{:.4}", e.epoch, e.train_loss, e.val_macro_f1);
            for v in e.val_per_au {
                let _ = write!(s, ",{v:.4}");
            }
            let _ = writeln!(s, ",{:.3}", e.wall_secs);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Patience-based stopping on a score to maximise; ties keep the earlier epoch.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    /// Records `score` for `epoch`; returns whether it improved and whether to stop.
    pub fn update(&mut self, epoch: usize, score: f64) -> (bool, StopDecision) {
        let improved = self.best.is_none_or(|(_, b)| score > b);
        if improved {
            self.best = Some((epoch, score));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        let decision = if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        };
        (improved, decision)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters and optimizer state of the best validation epoch.
    pub best: Checkpoint,
    pub history: TrainHistory,
}

fn assemble(ds: &Dataset, refs: &[FrameRef]) -> Result<Vec<FusionSample>> {
    refs.par_iter().map(|r| ds.sample(r)).collect()
}

/// Per-AU F1 of `params` on labeled frames of `split` at thresholds `tau`.
pub fn score_split(params: &ModelParams, ds: &Dataset, split: Split, tau: &ThresholdVector) -> Result<[f64; NUM_AUS]> {
    let refs = ds.labeled_frames(split);
    if refs.is_empty() {
        return Err(Error::Empty(format!("no labeled frames in {split} split")));
    }
    let preds = refs
        .par_iter()
        .map(|r| {
            let input = ds.assemble_input(r.video, r.frame)?;
            Ok(tau.apply(&forward(params, &input)?.probs))
        })
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<[u8; NUM_AUS]> = refs.iter().map(|r| r.label).collect();
    f1_per_au(&preds, &truth)
}

/// Trains on the `train` split, validating on `val` after every epoch with
/// thresholds fixed at 0.5.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    ds: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    model_cfg.matches(ds.dims)?;
    let mut train_refs = ds.labeled_frames(Split::Train);
    if train_refs.is_empty() {
        return Err(Error::Empty("no labeled frames in train split".into()));
    }
    if ds.labeled_frames(Split::Val).is_empty() {
        return Err(Error::Empty("no labeled frames in val split".into()));
    }

    let mut params = init_model(model_cfg)?;
    let mut opt = OptimizerState::new(cfg.adamw(), &params);
    let mut best = Checkpoint {
        config: model_cfg.clone(),
        params: params.clone(),
        optimizer: Some(opt.clone()),
        epoch: 0,
    };
    let mut history = TrainHistory::default();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let val_tau = ThresholdVector([0.5; NUM_AUS]);

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        train_refs.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (step, chunk) in train_refs.chunks(cfg.batch_size).enumerate() {
            let batch = assemble(ds, chunk)?;
            let (loss, mut grads) = backward(&params, &batch, None, &cfg.loss_weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { loss, epoch, step });
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            adamw_step(&mut opt, &mut params, &grads)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let val_per_au = score_split(&params, ds, Split::Val, &val_tau)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_macro_f1: macro_f1(&val_per_au),
            val_per_au,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        let (improved, decision) = stopper.update(epoch, record.val_macro_f1);
        history.epochs.push(record);
        if improved {
            best.params = params.clone();
            best.optimizer = Some(opt.clone());
            best.epoch = epoch as u64;
            history.best_epoch = epoch;
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    Ok(TrainOutcome { best, history })
}

/// Per-video predictions on every frame of a split, with aligned raw labels.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub tracks: Vec<PredictionTrack>,
    pub labels: Vec<Vec<AuLabels>>,
}

/// Runs the model over every frame of every video in `split`, with the
/// listed input streams zeroed.
pub fn predict_tracks(
    params: &ModelParams,
    ds: &Dataset,
    split: Split,
    zeroed: &[InputStream],
) -> Result<(Vec<PredictionTrack>, Vec<Vec<AuLabels>>)> {
    let mut tracks = Vec::new();
    let mut labels = Vec::new();
    for vi in ds.videos_in(split) {
        let v = &ds.videos[vi];
        let logits = (0..v.frame_count())
            .into_par_iter()
            .map(|f| {
                let mut input = ds.assemble_input(vi, f)?;
                input.zero_streams(zeroed);
                Ok(forward(params, &input)?.logits)
            })
            .collect::<Result<Vec<_>>>()?;
        tracks.push(PredictionTrack::new(
            v.entry.video_id.clone(),
            (0..v.frame_count()).collect(),
            logits,
        )?);
        labels.push(v.labels.clone());
    }
    Ok((tracks, labels))
}

/// Scores a checkpoint on `split` (labeled frames only) and returns the raw
/// tracks for post-processing.
pub fn evaluate(ckpt: &Checkpoint, ds: &Dataset, split: Split, tau: &ThresholdVector) -> Result<Evaluation> {
    ckpt.config.matches(ds.dims)?;
    let (tracks, labels) = predict_tracks(&ckpt.params, ds, split, &[])?;
    if tracks.is_empty() {
        return Err(Error::Empty(format!("no videos in {split} split")));
    }
    let probs: Vec<_> = tracks.iter().map(|t| t.probs.clone()).collect();
    let per_au = crate::postprocess::score(&probs, &labels, tau)?;
    Ok(Evaluation {
        report: EvalReport::single("Base", per_au),
        tracks,
        labels,
    })
}
