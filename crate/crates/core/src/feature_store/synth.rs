//! Seeded synthetic datasets with a planted labelling rule.
//!
//! Each video is cut into runs of at least `run_length` frames. A run draws a
//! mean vector per visual stream from N(0, 1); audio and text means are drawn
//! once per utterance of `utterance_runs` runs. Every frame's feature row is the mean
//! plus N(0, feature_noise²) noise. The run's clean labels are the sign
//! pattern of a planted linear map applied to the concatenated stream means,
//! so labels are piecewise constant. Each (run, AU) label is then flipped with
//! probability `noise_rate`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::feature_file::FeatureMatrix;
use super::labels::write_labels;
use super::manifest::{load_manifest, DatasetManifest, Split, Stream, StreamDims, VideoEntry};
use crate::au::{AuLabels, NUM_AUS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub fps: f64,
    pub dims: StreamDims,
    /// Row-major `12 × dims.total()` planted map; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<Vec<f64>>,
    pub noise_rate: f64,
    pub run_length: usize,
    pub feature_noise: f64,
    /// Audio and text means are held for this many consecutive runs
    /// (an utterance), so they change more slowly than the visual streams.
    #[serde(default = "default_utterance_runs")]
    pub utterance_runs: usize,
    /// Fraction of utterances with no transcript (all-zero text rows, zero text mean).
    pub silent_fraction: f64,
    /// Fraction of frames whose labels are replaced by -1.
    pub unlabeled_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 1,
            n_videos: 20,
            frames_per_video: 500,
            fps: 5.0,
            dims: StreamDims {
                swin: 768,
                ghfeat: 512,
                hubert: 1280,
                roberta: 1024,
            },
            planted: None,
            noise_rate: 0.05,
            run_length: 10,
            feature_noise: 0.1,
            utterance_runs: 4,
            silent_fraction: 0.2,
            unlabeled_rate: 0.0,
        }
    }
}

fn default_utterance_runs() -> usize {
    1
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic spec: {m}")));
        let d = self.dims;
        if d.swin == 0 || d.ghfeat == 0 || d.hubert == 0 || d.roberta == 0 {
            return bad("all stream dims must be positive");
        }
        if self.frames_per_video == 0 {
            return bad("frames_per_video must be positive");
        }
        if self.utterance_runs == 0 {
            return bad("utterance_runs must be at least 1");
        }
        if self.run_length == 0 {
            return bad("run_length must be at least 1");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive");
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad("noise_rate must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.unlabeled_rate) {
            return bad("unlabeled_rate must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.silent_fraction) {
            return bad("silent_fraction must be in [0, 1]");
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return bad("feature_noise must be non-negative");
        }
        if let Some(w) = &self.planted {
            if w.len() != NUM_AUS * d.total() {
                return Err(Error::dim("planted weight matrix", NUM_AUS * d.total(), w.len()));
            }
        }
        Ok(())
    }
}

/// One generated video before it is written out.
#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub video_id: String,
    pub features: [FeatureMatrix; 4],
    pub labels: Vec<AuLabels>,
    /// Labels before flipping and masking.
    pub clean_labels: Vec<[u8; NUM_AUS]>,
    /// (start, len) of each run.
    pub runs: Vec<(usize, usize)>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// The planted map used for `spec` (given or seeded).
pub fn planted_weights(spec: &SynthSpec) -> Vec<f64> {
    if let Some(w) = &spec.planted {
        return w.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0005_eed0_fa11);
    (0..NUM_AUS * spec.dims.total()).map(|_| normal(&mut rng)).collect()
}

/// Applies the planted map: AU `j` is on iff `Σ_k W[j][k] · means[k] > 0`.
pub fn planted_labels(weights: &[f64], means: &[f64]) -> [u8; NUM_AUS] {
    let d = means.len();
    std::array::from_fn(|j| {
        let s: f64 = weights[j * d..(j + 1) * d].iter().zip(means).map(|(w, m)| w * m).sum();
        u8::from(s > 0.0)
    })
}

pub fn generate_videos(spec: &SynthSpec) -> Result<Vec<SynthVideo>> {
    spec.validate()?;
    let weights = planted_weights(spec);
    let dims = [spec.dims.swin, spec.dims.ghfeat, spec.dims.hubert, spec.dims.roberta];
    let total = spec.dims.total();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.frames_per_video;

    let mut out = Vec::with_capacity(spec.n_videos);
    for vi in 0..spec.n_videos {
        let mut data: Vec<Vec<f32>> = dims.iter().map(|d| Vec::with_capacity(n * d)).collect();
        let mut labels = Vec::with_capacity(n);
        let mut clean_labels = Vec::with_capacity(n);
        let mut runs = Vec::new();
        let mut start = 0;
        let mut silent = false;
        let mut means = vec![0.0; total];
        let visual = spec.dims.swin + spec.dims.ghfeat;
        while start < n {
            let len = rng.random_range(spec.run_length..=2 * spec.run_length).min(n - start);
            if runs.len() % spec.utterance_runs == 0 {
                silent = rng.random_bool(spec.silent_fraction);
                let text_from = visual + spec.dims.hubert;
                for (k, m) in means.iter_mut().enumerate().skip(visual) {
                    *m = if k >= text_from && silent { 0.0 } else { normal(&mut rng) };
                }
            }
            for m in &mut means[..visual] {
                *m = normal(&mut rng);
            }
            let clean = planted_labels(&weights, &means);
            let noisy: [u8; NUM_AUS] =
                std::array::from_fn(|j| if rng.random_bool(spec.noise_rate) { 1 - clean[j] } else { clean[j] });
            for _ in 0..len {
                let mut offset = 0;
                for (s, &d) in dims.iter().enumerate() {
                    for k in 0..d {
                        let v = if s == 3 && silent {
                            0.0
                        } else {
                            means[offset + k] + spec.feature_noise * normal(&mut rng)
                        };
                        data[s].push(v as f32);
                    }
                    offset += d;
                }
                let masked = spec.unlabeled_rate > 0.0 && rng.random_bool(spec.unlabeled_rate);
                labels.push(if masked { [-1; NUM_AUS] } else { noisy.map(|v| v as i8) });
                clean_labels.push(clean);
            }
            runs.push((start, len));
            start += len;
        }
        let mut it = data.into_iter().zip(Stream::ALL).zip(dims);
        let mut next = || {
            let ((d, s), dim) = it.next().expect("four streams");
            FeatureMatrix::new(s.as_str(), n, dim, d)
        };
        let features = [next()?, next()?, next()?, next()?];
        out.push(SynthVideo {
            video_id: format!("synth{vi:03}"),
            features,
            labels,
            clean_labels,
            runs,
        });
    }
    Ok(out)
}

/// Writes a synthetic dataset under `out_dir` and returns the validated manifest.
///
/// Layout: `manifest.json`, `features/<video>.<stream>.bin`, `labels/<video>.csv`.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let videos = generate_videos(spec)?;
    let feat_dir = out_dir.join("features");
    let label_dir = out_dir.join("labels");
    for d in [out_dir, &feat_dir, &label_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut entries = Vec::with_capacity(videos.len());
    for v in &videos {
        let mut feature_paths = BTreeMap::new();
        for m in &v.features {
            let rel = PathBuf::from("features").join(format!("{}.{}.bin", v.video_id, m.header.stream));
            m.write(&out_dir.join(&rel))?;
            feature_paths.insert(m.header.stream.clone(), rel);
        }
        let label_rel = PathBuf::from("labels").join(format!("{}.csv", v.video_id));
        write_labels(&out_dir.join(&label_rel), &v.labels)?;
        entries.push(VideoEntry {
            video_id: v.video_id.clone(),
            frame_count: spec.frames_per_video,
            fps: spec.fps,
            feature_paths,
            label_path: label_rel,
            split: Split::Unassigned,
        });
    }
    let mut manifest = DatasetManifest::new(entries, out_dir);
    manifest.split_seed = spec.seed;
    let path = out_dir.join("manifest.json");
    manifest.save(&path)?;
    load_manifest(&path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            n_videos: 3,
            frames_per_video: 40,
            dims: StreamDims {
                swin: 4,
                ghfeat: 3,
                hubert: 2,
                roberta: 2,
            },
            noise_rate: 0.0,
            run_length: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn noiseless_labels_follow_planted_rule() {
        let spec = small(3);
        for v in generate_videos(&spec).unwrap() {
            for (l, c) in v.labels.iter().zip(&v.clean_labels) {
                assert_eq!(l.map(|x| x as u8), *c);
            }
        }
    }

    #[test]
    fn labels_are_piecewise_constant_in_runs() {
        let spec = SynthSpec {
            noise_rate: 0.2,
            ..small(4)
        };
        for v in generate_videos(&spec).unwrap() {
            let covered: usize = v.runs.iter().map(|r| r.1).sum();
            assert_eq!(covered, 40);
            for &(s, len) in &v.runs {
                assert!(v.labels[s..s + len].iter().all(|l| *l == v.labels[s]));
            }
            // all runs except possibly the truncated last one meet the minimum
            assert!(v.runs[..v.runs.len() - 1].iter().all(|r| r.1 >= 5));
        }
    }

    #[test]
    fn planted_map_can_be_supplied() {
        let mut spec = small(5);
        let total = spec.dims.total();
        // AU j fires iff the first swin mean is positive
        let mut w = vec![0.0; NUM_AUS * total];
        for j in 0..NUM_AUS {
            w[j * total] = 1.0;
        }
        spec.planted = Some(w);
        spec.feature_noise = 0.0;
        for v in generate_videos(&spec).unwrap() {
            for (f, l) in v.labels.iter().enumerate() {
                let on = v.features[0].row(f)[0] > 0.0;
                assert!(l.iter().all(|&x| x == i8::from(on)));
            }
        }
        spec.planted = Some(vec![0.0; 3]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small(1);
        s.noise_rate = 1.0;
        assert!(s.validate().is_err());
        let mut s = small(1);
        s.dims.hubert = 0;
        assert!(s.validate().is_err());
        let mut s = small(1);
        s.run_length = 0;
        assert!(s.validate().is_err());
    }
}
