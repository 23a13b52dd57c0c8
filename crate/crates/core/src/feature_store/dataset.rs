use std::ops::RangeInclusive;

use rayon::prelude::*;

use super::feature_file::FeatureMatrix;
use super::labels::{filter_labels, read_labels};
use super::manifest::{DatasetManifest, Split, Stream, StreamDims, VideoEntry};
use crate::au::{AuLabels, NUM_AUS};
use crate::error::{Error, Result};

/// Frames on each side of the centre frame in the temporal GH-Feat window.
pub const TEMPORAL_RADIUS: usize = 4;
pub const TEMPORAL_LEN: usize = 2 * TEMPORAL_RADIUS + 1;
/// Half-width, in seconds, of the audio and text context windows.
pub const CONTEXT_SECONDS: f64 = 2.0;

/// The five feature streams the model sees for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInput {
    /// Swin features of the frame.
    pub visual: Vec<f64>,
    /// GH-Feat features of the frame.
    pub ghfeat: Vec<f64>,
    /// GH-Feat features of frames t−4 … t+4, edges replicated.
    pub ghfeat_seq: Vec<Vec<f64>>,
    /// HuBERT rows within ±2 s.
    pub audio_seq: Vec<Vec<f64>>,
    /// RoBERTa rows within ±2 s; zero rows when there is no transcript.
    pub text_seq: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionSample {
    pub input: FusionInput,
    pub label: [u8; NUM_AUS],
}

/// Frame indices t−4 … t+4 with out-of-range indices replaced by the
/// nearest valid frame.
pub fn temporal_window(frame: usize, frame_count: usize) -> [usize; TEMPORAL_LEN] {
    let last = frame_count.saturating_sub(1) as isize;
    std::array::from_fn(|k| {
        let idx = frame as isize + k as isize - TEMPORAL_RADIUS as isize;
        idx.clamp(0, last) as usize
    })
}

/// Rows whose timestamp `j / fps` lies in `[t/fps − 2, t/fps + 2]`, clamped
/// to the video.
pub fn context_window(frame: usize, frame_count: usize, fps: f64) -> RangeInclusive<usize> {
    // Tolerance absorbs the rounding of j/fps at exact window edges.
    const EPS: f64 = 1e-9;
    let centre = frame as f64 / fps;
    let reach = (CONTEXT_SECONDS * fps).ceil() as usize + 1;
    let inside = |j: usize| (j as f64 / fps - centre).abs() <= CONTEXT_SECONDS + EPS;
    let lo = (frame.saturating_sub(reach)..=frame).find(|&j| inside(j)).unwrap_or(frame);
    let hi_bound = (frame + reach).min(frame_count - 1);
    let hi = (frame..=hi_bound).rev().find(|&j| inside(j)).unwrap_or(frame);
    lo..=hi
}

/// One video's features and labels held in memory.
#[derive(Debug, Clone)]
pub struct LoadedVideo {
    pub entry: VideoEntry,
    pub swin: FeatureMatrix,
    pub ghfeat: FeatureMatrix,
    pub hubert: FeatureMatrix,
    /// `None` when the video has no transcript features.
    pub roberta: Option<FeatureMatrix>,
    pub labels: Vec<AuLabels>,
}

impl LoadedVideo {
    fn load(manifest: &DatasetManifest, entry: &VideoEntry) -> Result<Self> {
        let read = |s: Stream| -> Result<Option<FeatureMatrix>> {
            entry
                .feature_path(s)
                .map(|p| FeatureMatrix::read(&manifest.resolve(p)))
                .transpose()
        };
        let missing = |s: Stream| Error::Manifest {
            path: manifest.root.clone(),
            message: format!("video {} has no {s} features", entry.video_id),
        };
        Ok(LoadedVideo {
            entry: entry.clone(),
            swin: read(Stream::Swin)?.ok_or_else(|| missing(Stream::Swin))?,
            ghfeat: read(Stream::GhFeat)?.ok_or_else(|| missing(Stream::GhFeat))?,
            hubert: read(Stream::Hubert)?.ok_or_else(|| missing(Stream::Hubert))?,
            roberta: read(Stream::Roberta)?,
            labels: read_labels(&manifest.resolve(&entry.label_path))?,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.entry.frame_count
    }
}

/// A reference to one labeled training/evaluation frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRef {
    pub video: usize,
    pub frame: usize,
    pub label: [u8; NUM_AUS],
}

/// In-memory dataset; read-only once loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub videos: Vec<LoadedVideo>,
    pub dims: StreamDims,
}

impl Dataset {
    /// Loads every video of the (validated) manifest.
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        Self::load_filtered(manifest, |_| true)
    }

    pub fn load_splits(manifest: &DatasetManifest, splits: &[Split]) -> Result<Self> {
        Self::load_filtered(manifest, |v| splits.contains(&v.split))
    }

    fn load_filtered(manifest: &DatasetManifest, keep: impl Fn(&VideoEntry) -> bool + Sync) -> Result<Self> {
        let dims = manifest.stream_dims.ok_or_else(|| Error::Empty("manifest has no videos".into()))?;
        let videos = manifest
            .videos
            .par_iter()
            .filter(|v| keep(v))
            .map(|v| LoadedVideo::load(manifest, v))
            .collect::<Result<Vec<_>>>()?;
        Self::from_videos(videos, dims)
    }

    pub fn from_videos(videos: Vec<LoadedVideo>, dims: StreamDims) -> Result<Self> {
        for v in &videos {
            let n = v.frame_count();
            let mut checks = vec![
                ("swin", v.swin.frame_count(), v.swin.dim(), dims.swin),
                ("ghfeat", v.ghfeat.frame_count(), v.ghfeat.dim(), dims.ghfeat),
                ("hubert", v.hubert.frame_count(), v.hubert.dim(), dims.hubert),
            ];
            if let Some(r) = &v.roberta {
                checks.push(("roberta", r.frame_count(), r.dim(), dims.roberta));
            }
            for (name, frames, dim, expected_dim) in checks {
                if frames != n {
                    return Err(Error::FrameCountMismatch {
                        video: v.entry.video_id.clone(),
                        what: format!("{name} features"),
                        expected: n,
                        found: frames,
                    });
                }
                if dim != expected_dim {
                    return Err(Error::dim(format!("{name} dim"), expected_dim, dim));
                }
            }
            if v.labels.len() != n {
                return Err(Error::FrameCountMismatch {
                    video: v.entry.video_id.clone(),
                    what: "label file".into(),
                    expected: n,
                    found: v.labels.len(),
                });
            }
        }
        Ok(Dataset { videos, dims })
    }

    pub fn video_index(&self, video_id: &str) -> Result<usize> {
        self.videos
            .iter()
            .position(|v| v.entry.video_id == video_id)
            .ok_or_else(|| Error::UnknownVideo(video_id.to_string()))
    }

    pub fn videos_in(&self, split: Split) -> impl Iterator<Item = usize> + '_ {
        (0..self.videos.len()).filter(move |&i| self.videos[i].entry.split == split)
    }

    /// All frames of `split` that survive label filtering, in video then frame order.
    pub fn labeled_frames(&self, split: Split) -> Vec<FrameRef> {
        self.videos_in(split)
            .flat_map(|vi| {
                filter_labels(&self.videos[vi].labels)
                    .into_iter()
                    .map(move |(frame, label)| FrameRef { video: vi, frame, label })
            })
            .collect()
    }

    /// Builds the model input for any frame, labeled or not.
    pub fn assemble_input(&self, video: usize, frame: usize) -> Result<FusionInput> {
        let v = self
            .videos
            .get(video)
            .ok_or_else(|| Error::UnknownVideo(format!("#{video}")))?;
        let n = v.frame_count();
        if frame >= n {
            return Err(Error::FrameOutOfRange {
                video: v.entry.video_id.clone(),
                frame,
                frame_count: n,
            });
        }
        let ghfeat_seq = temporal_window(frame, n)
            .iter()
            .map(|&f| v.ghfeat.row_f64(f))
            .collect();
        let ctx = context_window(frame, n, v.entry.fps);
        let audio_seq = ctx.clone().map(|f| v.hubert.row_f64(f)).collect();
        let text_seq = match &v.roberta {
            Some(m) => ctx.map(|f| m.row_f64(f)).collect(),
            None => ctx.map(|_| vec![0.0; self.dims.roberta]).collect(),
        };
        Ok(FusionInput {
            visual: v.swin.row_f64(frame),
            ghfeat: v.ghfeat.row_f64(frame),
            ghfeat_seq,
            audio_seq,
            text_seq,
        })
    }

    /// Builds a labeled sample; the centre frame must carry no `-1` label.
    pub fn assemble_sample(&self, video_id: &str, frame: usize) -> Result<FusionSample> {
        let vi = self.video_index(video_id)?;
        let input = self.assemble_input(vi, frame)?;
        let raw = self.videos[vi].labels[frame];
        if raw.iter().any(|&l| l < 0) {
            return Err(Error::InvalidArgument(format!(
                "frame {frame} of video {video_id} is unlabeled"
            )));
        }
        Ok(FusionSample {
            input,
            label: raw.map(|l| l as u8),
        })
    }

    pub fn sample(&self, r: &FrameRef) -> Result<FusionSample> {
        Ok(FusionSample {
            input: self.assemble_input(r.video, r.frame)?,
            label: r.label,
        })
    }
}
