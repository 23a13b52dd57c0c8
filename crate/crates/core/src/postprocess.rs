//! Inference-time post-processing: temporal logit smoothing, per-AU
//! threshold tuning and AU-correlation probability fusion.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::au::{au_index, is_valid, AuLabels, AU_NAMES, DEFAULT_THRESHOLDS, NUM_AUS};
use crate::error::{Error, Result};
use crate::metrics::{ablation_table, f1_from_counts, f1_per_au, macro_f1, EvalReport, Stage};
use crate::nn::sigmoid;

/// Per-frame predictions for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrack {
    pub video_id: String,
    /// Strictly increasing.
    pub frames: Vec<usize>,
    pub logits: Vec<[f64; NUM_AUS]>,
    pub probs: Vec<[f64; NUM_AUS]>,
}

impl PredictionTrack {
    pub fn new(video_id: impl Into<String>, frames: Vec<usize>, logits: Vec<[f64; NUM_AUS]>) -> Result<Self> {
        if frames.len() != logits.len() {
            return Err(Error::dim("track rows", frames.len(), logits.len()));
        }
        if frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("track frame indices must be strictly increasing".into()));
        }
        let probs = logits.iter().map(|l| l.map(sigmoid)).collect();
        Ok(PredictionTrack {
            video_id: video_id.into(),
            frames,
            logits,
            probs,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `frame_index` then 12 logit columns named after the AUs.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame_index,");
        s.push_str(&AU_NAMES.join(","));
        s.push('\n');
        for (f, row) in self.frames.iter().zip(&self.logits) {
            let _ = write!(s, "{f}");
            for v in row {
                let _ = write!(s, ",{v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(video_id: impl Into<String>, text: &str, path: &Path) -> Result<Self> {
        let bad = |m: String| Error::Csv {
            path: path.into(),
            message: m,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let mut expected = vec!["frame_index"];
        expected.extend(AU_NAMES);
        if header.split(',').map(str::trim).collect::<Vec<_>>() != expected {
            return Err(bad("header must be frame_index followed by the 12 AU names".into()));
        }
        let mut frames = Vec::new();
        let mut logits = Vec::new();
        for (n, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != NUM_AUS + 1 {
                return Err(bad(format!("row {} has {} cells", n + 1, cells.len())));
            }
            frames.push(cells[0].parse().map_err(|_| bad(format!("bad frame index {:?}", cells[0])))?);
            let mut row = [0.0; NUM_AUS];
            for (j, c) in cells[1..].iter().enumerate() {
                row[j] = c.parse().map_err(|_| bad(format!("bad logit {c:?}")))?;
            }
            logits.push(row);
        }
        PredictionTrack::new(video_id, frames, logits)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_csv(id, &text, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector(pub [f64; NUM_AUS]);

impl Default for ThresholdVector {
    fn default() -> Self {
        ThresholdVector(DEFAULT_THRESHOLDS)
    }
}

impl ThresholdVector {
    pub fn new(tau: [f64; NUM_AUS]) -> Result<Self> {
        if let Some(t) = tau.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidArgument(format!("threshold {t} outside [0,1]")));
        }
        Ok(ThresholdVector(tau))
    }

    pub fn uniform(tau: f64) -> Result<Self> {
        Self::new([tau; NUM_AUS])
    }

    /// `1` iff `p > τ_j` (strict).
    pub fn apply(&self, probs: &[f64; NUM_AUS]) -> [u8; NUM_AUS] {
        std::array::from_fn(|j| u8::from(probs[j] > self.0[j]))
    }
}

/// Fuse `target ← mean(target, sources…)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RuleSpec", into = "RuleSpec")]
pub struct AuCorrRule {
    target: usize,
    sources: Vec<usize>,
}

impl AuCorrRule {
    pub fn new(target: usize, sources: Vec<usize>) -> Result<Self> {
        if target >= NUM_AUS || sources.iter().any(|&s| s >= NUM_AUS) {
            return Err(Error::InvalidArgument("AU index out of range".into()));
        }
        if sources.is_empty() {
            return Err(Error::InvalidArgument("rule needs at least one source".into()));
        }
        if sources.contains(&target) {
            return Err(Error::InvalidArgument(format!("{} cannot be its own source", AU_NAMES[target])));
        }
        let mut dedup = sources.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() != sources.len() {
            return Err(Error::InvalidArgument("duplicate source AU".into()));
        }
        Ok(AuCorrRule { target, sources })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }
}

/// Name-based form used in config files: `{ target = "AU24", sources = ["AU4"] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleSpec {
    pub target: String,
    pub sources: Vec<String>,
}

impl TryFrom<RuleSpec> for AuCorrRule {
    type Error = Error;

    fn try_from(r: RuleSpec) -> Result<Self> {
        let idx = |n: &str| au_index(n).ok_or_else(|| Error::InvalidArgument(format!("unknown AU {n:?}")));
        AuCorrRule::new(idx(&r.target)?, r.sources.iter().map(|s| idx(s)).collect::<Result<_>>()?)
    }
}

impl From<AuCorrRule> for RuleSpec {
    fn from(r: AuCorrRule) -> Self {
        RuleSpec {
            target: AU_NAMES[r.target].to_string(),
            sources: r.sources.iter().map(|&s| AU_NAMES[s].to_string()).collect(),
        }
    }
}

/// `p24 ← (p24 + p4)/2` and `p26 ← (p26 + p1 + p2)/3`.
pub fn default_rules() -> Vec<AuCorrRule> {
    vec![
        AuCorrRule { target: 9, sources: vec![2] },
        AuCorrRule { target: 11, sources: vec![0, 1] },
    ]
}

/// Moving average of each AU channel over `[t − ⌊(k−1)/2⌋, t + ⌊k/2⌋]`,
/// truncated at the track ends; probabilities are recomputed afterwards.
pub fn smooth_logits(track: &PredictionTrack, k: usize) -> Result<PredictionTrack> {
    if k == 0 {
        return Err(Error::InvalidArgument("smoothing window must be at least 1".into()));
    }
    let n = track.len();
    let left = (k - 1) / 2;
    let right = k / 2;
    let logits: Vec<[f64; NUM_AUS]> = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(left);
            let hi = (t + right).min(n - 1);
            let window = &track.logits[lo..=hi];
            let count = window.len() as f64;
            std::array::from_fn(|j| window.iter().map(|r| r[j]).sum::<f64>() / count)
        })
        .collect();
    let probs = logits.iter().map(|l| l.map(sigmoid)).collect();
    Ok(PredictionTrack {
        video_id: track.video_id.clone(),
        frames: track.frames.clone(),
        logits,
        probs,
    })
}

/// Applies `rules` to every row, reading only the unadjusted probabilities.
pub fn aucorr_adjust(probs: &[[f64; NUM_AUS]], rules: &[AuCorrRule]) -> Result<Vec<[f64; NUM_AUS]>> {
    for (i, row) in probs.iter().enumerate() {
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(format!("probability outside [0,1] in row {i}")));
        }
    }
    Ok(probs.iter().map(|row| adjust_row(row, rules)).collect())
}

fn adjust_row(row: &[f64; NUM_AUS], rules: &[AuCorrRule]) -> [f64; NUM_AUS] {
    let mut out = *row;
    for r in rules {
        let sum: f64 = row[r.target] + r.sources.iter().map(|&s| row[s]).sum::<f64>();
        out[r.target] = sum / (1 + r.sources.len()) as f64;
    }
    out
}

fn check_aligned(tracks: &[PredictionTrack], labels: &[Vec<AuLabels>]) -> Result<()> {
    if tracks.len() != labels.len() {
        return Err(Error::dim("label tracks", tracks.len(), labels.len()));
    }
    for (t, l) in tracks.iter().zip(labels) {
        if t.len() != l.len() {
            return Err(Error::dim(format!("labels of {}", t.video_id), t.len(), l.len()));
        }
    }
    Ok(())
}

/// Binary decisions and truth over all labeled rows (rows with any `-1` skipped).
fn decisions(
    probs: &[Vec<[f64; NUM_AUS]>],
    labels: &[Vec<AuLabels>],
    tau: &ThresholdVector,
) -> (Vec<[u8; NUM_AUS]>, Vec<[u8; NUM_AUS]>) {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (p, l) in probs.iter().zip(labels) {
        for (row, lab) in p.iter().zip(l) {
            if is_valid(lab) {
                pred.push(tau.apply(row));
                truth.push(lab.map(|v| v as u8));
            }
        }
    }
    (pred, truth)
}

/// Per-AU F1 (percent) of thresholded probabilities against labels.
pub fn score(probs: &[Vec<[f64; NUM_AUS]>], labels: &[Vec<AuLabels>], tau: &ThresholdVector) -> Result<[f64; NUM_AUS]> {
    let (pred, truth) = decisions(probs, labels, tau);
    f1_per_au(&pred, &truth)
}

fn track_probs(tracks: &[PredictionTrack]) -> Vec<Vec<[f64; NUM_AUS]>> {
    tracks.iter().map(|t| t.probs.clone()).collect()
}

pub fn smooth_all(tracks: &[PredictionTrack], k: usize) -> Result<Vec<PredictionTrack>> {
    tracks.par_iter().map(|t| smooth_logits(t, k)).collect()
}

/// Macro F1 after smoothing with each `k`, thresholded with `tau`.
pub fn sweep_window(
    tracks: &[PredictionTrack],
    labels: &[Vec<AuLabels>],
    k_values: &[usize],
    tau: &ThresholdVector,
) -> Result<Vec<(usize, f64)>> {
    if tracks.is_empty() {
        return Err(Error::Empty("prediction tracks".into()));
    }
    check_aligned(tracks, labels)?;
    k_values
        .iter()
        .map(|&k| {
            let smoothed = smooth_all(tracks, k)?;
            let f1 = score(&track_probs(&smoothed), labels, tau)?;
            Ok((k, macro_f1(&f1)))
        })
        .collect()
}

/// Default tuning grid: 0.05, 0.10, …, 0.95.
pub fn default_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Picks, per AU, the grid value maximising that AU's F1; ties go to the
/// smallest threshold.
pub fn tune_thresholds(tracks: &[PredictionTrack], labels: &[Vec<AuLabels>], grid: &[f64]) -> Result<ThresholdVector> {
    check_aligned(tracks, labels)?;
    tune_on_probs(&track_probs(tracks), labels, grid)
}

pub fn tune_on_probs(probs: &[Vec<[f64; NUM_AUS]>], labels: &[Vec<AuLabels>], grid: &[f64]) -> Result<ThresholdVector> {
    if grid.is_empty() {
        return Err(Error::Empty("threshold grid".into()));
    }
    if let Some(g) = grid.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::InvalidArgument(format!("grid value {g} outside [0,1]")));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut columns: Vec<Vec<(f64, bool)>> = vec![Vec::new(); NUM_AUS];
    for (p, l) in probs.iter().zip(labels) {
        for (row, lab) in p.iter().zip(l) {
            if is_valid(lab) {
                for j in 0..NUM_AUS {
                    columns[j].push((row[j], lab[j] == 1));
                }
            }
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Empty("no labeled frames to tune thresholds on".into()));
    }
    let tau = std::array::from_fn(|j| {
        let mut best = (f64::NEG_INFINITY, sorted[0]);
        for &t in &sorted {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for &(p, y) in &columns[j] {
                match (p > t, y) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            let f = f1_from_counts(tp, fp, fn_);
            if f > best.0 {
                best = (f, t);
            }
        }
        best.1
    });
    ThresholdVector::new(tau)
}

/// Settings for the full post-processing stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    pub window: usize,
    /// Thresholds for the un-tuned stages (Base, + Smooth).
    pub base_thresholds: ThresholdVector,
    /// Thresholds for the + Threshold and + AUcorr stages.
    pub thresholds: ThresholdVector,
    pub rules: Vec<AuCorrRule>,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            window: 6,
            base_thresholds: ThresholdVector([0.5; NUM_AUS]),
            thresholds: ThresholdVector::default(),
            rules: default_rules(),
        }
    }
}

/// Output of [`apply_stack`] for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedTrack {
    pub smoothed: PredictionTrack,
    pub fused_probs: Vec<[f64; NUM_AUS]>,
    pub decisions: Vec<[u8; NUM_AUS]>,
}

/// smooth → AUcorr on the smoothed probabilities → threshold every AU
/// (the rule targets with their own τ).
pub fn apply_stack(tracks: &[PredictionTrack], cfg: &PostprocessConfig) -> Result<Vec<ProcessedTrack>> {
    tracks
        .par_iter()
        .map(|t| {
            let smoothed = smooth_logits(t, cfg.window)?;
            let fused_probs = aucorr_adjust(&smoothed.probs, &cfg.rules)?;
            let decisions = fused_probs.iter().map(|p| cfg.thresholds.apply(p)).collect();
            Ok(ProcessedTrack {
                smoothed,
                fused_probs,
                decisions,
            })
        })
        .collect()
}

/// Scores the four ablation stages: Base, + Smooth, + Smooth + Threshold and
/// + Smooth + Threshold + AUcorr.
pub fn ablation(tracks: &[PredictionTrack], labels: &[Vec<AuLabels>], cfg: &PostprocessConfig) -> Result<EvalReport> {
    check_aligned(tracks, labels)?;
    let base = score(&track_probs(tracks), labels, &cfg.base_thresholds)?;
    let smoothed = track_probs(&smooth_all(tracks, cfg.window)?);
    let smooth = score(&smoothed, labels, &cfg.base_thresholds)?;
    let thresholded = score(&smoothed, labels, &cfg.thresholds)?;
    let fused = smoothed
        .iter()
        .map(|p| aucorr_adjust(p, &cfg.rules))
        .collect::<Result<Vec<_>>>()?;
    let corr = score(&fused, labels, &cfg.thresholds)?;
    ablation_table(vec![
        (Stage::Base, base),
        (Stage::Smooth, smooth),
        (Stage::Threshold, thresholded),
        (Stage::AuCorr, corr),
    ])
}
