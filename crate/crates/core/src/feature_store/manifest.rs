use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::feature_file::read_header;
use super::labels::read_labels;
use crate::au::AU_NAMES;
use crate::error::{Error, Result};

/// The four feature files a video may carry. The GH-Feat file feeds both the
/// static and the temporal visual stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Swin,
    GhFeat,
    Hubert,
    Roberta,
}

impl Stream {
    pub const ALL: [Stream; 4] = [Stream::Swin, Stream::GhFeat, Stream::Hubert, Stream::Roberta];

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Swin => "swin",
            Stream::GhFeat => "ghfeat",
            Stream::Hubert => "hubert",
            Stream::Roberta => "roberta",
        }
    }

    /// Text may be absent (no transcript); everything else is required.
    pub fn required(self) -> bool {
        self != Stream::Roberta
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stream {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stream::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stream {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub frame_count: usize,
    pub fps: f64,
    /// Stream name → path, relative to the manifest's directory.
    pub feature_paths: BTreeMap<String, PathBuf>,
    pub label_path: PathBuf,
    #[serde(default)]
    pub split: Split,
}

impl VideoEntry {
    pub fn feature_path(&self, stream: Stream) -> Option<&Path> {
        self.feature_paths.get(stream.as_str()).map(PathBuf::as_path)
    }
}

/// Feature width of each stream, read from file headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDims {
    pub swin: usize,
    pub ghfeat: usize,
    pub hubert: usize,
    pub roberta: usize,
}

impl StreamDims {
    pub fn get(&self, s: Stream) -> usize {
        match s {
            Stream::Swin => self.swin,
            Stream::GhFeat => self.ghfeat,
            Stream::Hubert => self.hubert,
            Stream::Roberta => self.roberta,
        }
    }

    pub fn total(&self) -> usize {
        self.swin + self.ghfeat + self.hubert + self.roberta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub au_names: Vec<String>,
    #[serde(default)]
    pub split_seed: u64,
    pub videos: Vec<VideoEntry>,
    /// Present after validation; `None` for an empty manifest.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stream_dims: Option<StreamDims>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(videos: Vec<VideoEntry>, root: impl Into<PathBuf>) -> Self {
        DatasetManifest {
            au_names: AU_NAMES.iter().map(|s| s.to_string()).collect(),
            split_seed: 0,
            videos,
            stream_dims: None,
            root: root.into(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn video(&self, id: &str) -> Result<&VideoEntry> {
        self.videos
            .iter()
            .find(|v| v.video_id == id)
            .ok_or_else(|| Error::UnknownVideo(id.to_string()))
    }

    pub fn videos_in(&self, split: Split) -> impl Iterator<Item = &VideoEntry> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Checks the structural invariants and every referenced file, filling in
    /// `stream_dims` from the headers.
    pub fn validate(&mut self, source: &Path) -> Result<()> {
        let bad = |message: String| Error::Manifest {
            path: source.into(),
            message,
        };
        if self.au_names != AU_NAMES {
            return Err(bad(format!("au_names must be {:?}", AU_NAMES)));
        }
        let mut seen = HashSet::new();
        for v in &self.videos {
            if !seen.insert(v.video_id.as_str()) {
                return Err(bad(format!("duplicate video_id {:?}", v.video_id)));
            }
            if v.frame_count == 0 {
                return Err(bad(format!("video {} has frame_count 0", v.video_id)));
            }
            if !(v.fps > 0.0 && v.fps.is_finite()) {
                return Err(bad(format!("video {} has non-positive fps", v.video_id)));
            }
            if let Some(key) = v.feature_paths.keys().find(|k| k.parse::<Stream>().is_err()) {
                return Err(bad(format!("video {} lists unknown stream {key:?}", v.video_id)));
            }
        }

        let mut dims: BTreeMap<Stream, usize> = BTreeMap::new();
        for v in &self.videos {
            for stream in Stream::ALL {
                let Some(rel) = v.feature_path(stream) else {
                    if stream.required() {
                        return Err(bad(format!("video {} has no {stream} features", v.video_id)));
                    }
                    continue;
                };
                let path = self.resolve(rel);
                let header = read_header(&path)?;
                if header.stream != stream.as_str() {
                    return Err(Error::Header {
                        path,
                        message: format!("stream is {:?}, manifest says {stream}", header.stream),
                    });
                }
                if header.frame_count != v.frame_count {
                    return Err(Error::FrameCountMismatch {
                        video: v.video_id.clone(),
                        what: format!("{stream} features"),
                        expected: v.frame_count,
                        found: header.frame_count,
                    });
                }
                let known = *dims.entry(stream).or_insert(header.dim);
                if known != header.dim {
                    return Err(Error::dim(format!("{stream} dim of video {}", v.video_id), known, header.dim));
                }
            }
            let labels = read_labels(&self.resolve(&v.label_path))?;
            if labels.len() != v.frame_count {
                return Err(Error::FrameCountMismatch {
                    video: v.video_id.clone(),
                    what: "label file".into(),
                    expected: v.frame_count,
                    found: labels.len(),
                });
            }
        }

        self.stream_dims = if self.videos.is_empty() {
            None
        } else {
            let roberta = dims.get(&Stream::Roberta).copied().ok_or_else(|| {
                bad("no video carries roberta features, so the text width is unknown".into())
            })?;
            Some(StreamDims {
                swin: dims[&Stream::Swin],
                ghfeat: dims[&Stream::GhFeat],
                hubert: dims[&Stream::Hubert],
                roberta,
            })
        };
        Ok(())
    }
}

/// Parses and validates a manifest; relative paths resolve against its directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.into(),
        message: e.to_string(),
    })?;
    m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    m.validate(path)?;
    Ok(m)
}

/// Assigns every unassigned video to train or val, video-independently.
///
/// `⌈val_fraction · N⌉` videos go to val, capped at `N − 1` so train is never
/// empty. Videos are ordered by id before the seeded shuffle, so the result
/// does not depend on manifest order.
pub fn split_videos(manifest: &DatasetManifest, val_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "val_fraction must be in (0,1), got {val_fraction}"
        )));
    }
    let mut ids: Vec<&str> = manifest
        .videos_in(Split::Unassigned)
        .map(|v| v.video_id.as_str())
        .collect();
    let n = ids.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 unassigned videos to split, found {n}"
        )));
    }
    ids.sort_unstable();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((val_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let val: HashSet<String> = ids[..n_val].iter().map(|s| s.to_string()).collect();

    let mut out = manifest.clone();
    out.split_seed = seed;
    for v in out.videos.iter_mut().filter(|v| v.split == Split::Unassigned) {
        v.split = if val.contains(&v.video_id) {
            Split::Val
        } else {
            Split::Train
        };
    }
    Ok(out)
}
