use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aufuse_core::feature_store::{
    generate_synthetic, generate_videos, load_manifest, planted_labels, planted_weights, read_header, split_videos,
    write_labels, Dataset, FeatureMatrix, StreamDims, SynthSpec, TEMPORAL_LEN,
};
use aufuse_core::{DatasetManifest, Error, Split, VideoEntry, NUM_AUS};

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        n_videos: 3,
        frames_per_video: 40,
        dims: StreamDims {
            swin: 3,
            ghfeat: 2,
            hubert: 4,
            roberta: 2,
        },
        run_length: 4,
        ..SynthSpec::default()
    }
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for sub in ["features", "labels"] {
        for e in std::fs::read_dir(dir.join(sub)).unwrap() {
            let p = e.unwrap().path();
            out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
        }
    }
    out.insert("manifest.json".into(), std::fs::read(dir.join("manifest.json")).unwrap());
    out
}

/// Writes one video with the given per-stream frame counts.
fn write_video(dir: &Path, id: &str, frames: usize, feature_frames: usize, label_frames: usize) -> VideoEntry {
    std::fs::create_dir_all(dir).unwrap();
    let mut feature_paths = BTreeMap::new();
    for (stream, dim) in [("swin", 2), ("ghfeat", 2), ("hubert", 3), ("roberta", 2)] {
        let rel = PathBuf::from(format!("{id}.{stream}.bin"));
        FeatureMatrix::zeros(stream, feature_frames, dim).write(&dir.join(&rel)).unwrap();
        feature_paths.insert(stream.to_string(), rel);
    }
    let label_path = PathBuf::from(format!("{id}.csv"));
    write_labels(&dir.join(&label_path), &vec![[0; NUM_AUS]; label_frames]).unwrap();
    VideoEntry {
        video_id: id.into(),
        frame_count: frames,
        fps: 30.0,
        feature_paths,
        label_path,
        split: Split::Unassigned,
    }
}

fn save(dir: &Path, videos: Vec<VideoEntry>) -> PathBuf {
    let path = dir.join("manifest.json");
    DatasetManifest::new(videos, dir).save(&path).unwrap();
    path
}

#[test]
fn two_consistent_videos_load() {
    let dir = tempfile::tempdir().unwrap();
    let videos = vec![
        write_video(dir.path(), "a", 10, 10, 10),
        write_video(dir.path(), "b", 7, 7, 7),
    ];
    let m = load_manifest(&save(dir.path(), videos)).unwrap();
    assert_eq!(m.videos.len(), 2);
    assert_eq!(
        m.stream_dims,
        Some(StreamDims {
            swin: 2,
            ghfeat: 2,
            hubert: 3,
            roberta: 2
        })
    );
}

#[test]
fn label_feature_frame_count_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let v = write_video(dir.path(), "a", 100, 100, 99);
    let err = load_manifest(&save(dir.path(), vec![v])).unwrap_err();
    assert!(matches!(err, Error::FrameCountMismatch { .. }));
    assert!(err.to_string().contains("frame_count mismatch"), "{err}");

    let v = write_video(dir.path(), "b", 100, 99, 100);
    let err = load_manifest(&save(dir.path(), vec![v])).unwrap_err();
    assert!(err.to_string().contains("frame_count mismatch"), "{err}");
}

#[test]
fn missing_and_malformed_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let v = write_video(dir.path(), "a", 5, 5, 5);
    let path = save(dir.path(), vec![v]);
    std::fs::remove_file(dir.path().join("a.hubert.bin")).unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::Io { .. })));

    std::fs::write(dir.path().join("a.hubert.bin"), b"NOTMAGIC-and-more-bytes-here").unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::Header { .. })));

    assert!(matches!(load_manifest(&dir.path().join("absent.json")), Err(Error::Io { .. })));
    std::fs::write(&path, "{ not json").unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::Manifest { .. })));
}

#[test]
fn empty_video_list_is_a_valid_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = load_manifest(&save(dir.path(), vec![])).unwrap();
    assert!(m.videos.is_empty());
    assert!(Dataset::load(&m).is_err());
}

#[test]
fn optional_text_stream_falls_back_to_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_video(dir.path(), "a", 12, 12, 12);
    let mut b = write_video(dir.path(), "b", 12, 12, 12);
    b.feature_paths.remove("roberta");
    let m = load_manifest(&save(dir.path(), vec![a, b])).unwrap();
    let ds = Dataset::load(&m).unwrap();
    let vi = ds.video_index("b").unwrap();
    assert!(ds.videos[vi].roberta.is_none());
    let x = ds.assemble_input(vi, 6).unwrap();
    assert!(x.text_seq.iter().all(|r| r.len() == 2 && r.iter().all(|&v| v == 0.0)));
    assert_eq!(x.text_seq.len(), x.audio_seq.len());
}

#[test]
fn synthetic_generation_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_synthetic(&small_spec(1), a.path()).unwrap();
    generate_synthetic(&small_spec(1), b.path()).unwrap();
    assert_eq!(files_under(a.path()), files_under(b.path()));

    let c = tempfile::tempdir().unwrap();
    generate_synthetic(&small_spec(2), c.path()).unwrap();
    assert_ne!(files_under(a.path()), files_under(c.path()));
}

#[test]
fn synthetic_round_trips_through_loader() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(3);
    let m = generate_synthetic(&spec, dir.path()).unwrap();
    let videos = generate_videos(&spec).unwrap();
    let ds = Dataset::load(&m).unwrap();
    for (loaded, made) in ds.videos.iter().zip(&videos) {
        assert_eq!(loaded.entry.video_id, made.video_id);
        assert_eq!(loaded.labels, made.labels);
        assert_eq!(loaded.swin, made.features[0]);
        assert_eq!(loaded.roberta.as_ref(), Some(&made.features[3]));
    }
    let h = read_header(&dir.path().join(&m.videos[0].feature_paths["hubert"])).unwrap();
    assert_eq!((h.stream.as_str(), h.frame_count, h.dim), ("hubert", 40, 4));
}

#[test]
fn noiseless_labels_follow_the_planted_rule() {
    let spec = SynthSpec {
        noise_rate: 0.0,
        feature_noise: 0.0,
        run_length: 1,
        ..small_spec(4)
    };
    let w = planted_weights(&spec);
    for v in generate_videos(&spec).unwrap() {
        for f in 0..spec.frames_per_video {
            let means: Vec<f64> = v.features.iter().flat_map(|m| m.row_f64(f)).collect();
            assert_eq!(v.labels[f].map(|l| l as u8), v.clean_labels[f]);
            assert_eq!(planted_labels(&w, &means), v.clean_labels[f], "frame {f}");
        }
    }
}

#[test]
fn synthetic_labels_are_piecewise_constant_in_runs() {
    let spec = SynthSpec {
        run_length: 6,
        ..small_spec(5)
    };
    for v in generate_videos(&spec).unwrap() {
        let mut covered = 0;
        for &(start, len) in &v.runs {
            assert_eq!(start, covered);
            assert!(len >= 6 || start + len == spec.frames_per_video);
            assert!(v.labels[start..start + len].iter().all(|l| *l == v.labels[start]));
            covered += len;
        }
        assert_eq!(covered, spec.frames_per_video);
    }
}

#[test]
fn silent_utterances_have_zero_text() {
    let spec = SynthSpec {
        silent_fraction: 1.0,
        ..small_spec(6)
    };
    for v in generate_videos(&spec).unwrap() {
        assert!(v.features[3].as_slice().iter().all(|&x| x == 0.0));
    }
}

#[test]
fn invalid_specs_are_rejected() {
    for spec in [
        SynthSpec { noise_rate: 1.0, ..small_spec(0) },
        SynthSpec { run_length: 0, ..small_spec(0) },
        SynthSpec { frames_per_video: 0, ..small_spec(0) },
        SynthSpec { planted: Some(vec![1.0; 3]), ..small_spec(0) },
    ] {
        assert!(generate_videos(&spec).is_err());
    }
}

#[test]
fn samples_from_loaded_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        fps: 5.0,
        unlabeled_rate: 0.3,
        ..small_spec(7)
    };
    let m = split_videos(&generate_synthetic(&spec, dir.path()).unwrap(), 0.34, 1).unwrap();
    assert_eq!(m.videos_in(Split::Val).count(), 2);
    let ds = Dataset::load(&m).unwrap();
    let refs = ds.labeled_frames(Split::Train);
    assert!(!refs.is_empty() && refs.len() < 40);
    for r in &refs {
        let s = ds.sample(r).unwrap();
        assert_eq!(s.input.ghfeat_seq.len(), TEMPORAL_LEN);
        assert!(s.input.audio_seq.len() <= 21);
        assert!(s.label.iter().all(|&l| l <= 1));
    }
    let vid = &ds.videos[refs[0].video].entry.video_id;
    let unlabeled = ds.videos[refs[0].video].labels.iter().position(|l| l[0] < 0);
    if let Some(f) = unlabeled {
        assert!(ds.assemble_sample(vid, f).is_err());
    }
    assert!(matches!(ds.assemble_sample("nope", 0), Err(Error::UnknownVideo(_))));
    assert!(matches!(ds.assemble_sample(vid, 40), Err(Error::FrameOutOfRange { .. })));
    // frame 0 replicates itself for the missing history
    let x = ds.assemble_input(0, 0).unwrap();
    assert!(x.ghfeat_seq[..5].iter().all(|r| *r == x.ghfeat));
}
