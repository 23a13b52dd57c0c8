use aufuse_core::checkpoint::Checkpoint;
use aufuse_core::feature_store::{generate_synthetic, split_videos, Dataset, StreamDims, SynthSpec};
use aufuse_core::model::{init_model, ModelConfig};
use aufuse_core::nn::Params;
use aufuse_core::trainer::{evaluate, predict_tracks, train, TrainConfig};
use aufuse_core::{Error, Split, ThresholdVector, NUM_AUS};

fn dataset(seed: u64) -> (tempfile::TempDir, Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        seed,
        n_videos: 4,
        frames_per_video: 30,
        dims: StreamDims {
            swin: 3,
            ghfeat: 3,
            hubert: 2,
            roberta: 2,
        },
        run_length: 3,
        ..SynthSpec::default()
    };
    let m = split_videos(&generate_synthetic(&spec, dir.path()).unwrap(), 0.25, 0).unwrap();
    let ds = Dataset::load(&m).unwrap();
    (dir, ds)
}

fn small_model(ds: &Dataset) -> ModelConfig {
    ModelConfig {
        proj_dim: 4,
        gru_hidden: 3,
        mlp_hidden: 8,
        seed: 5,
        ..ModelConfig::for_dims(ds.dims)
    }
}

fn cfg(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 1e-2,
        batch_size: 16,
        max_epochs,
        patience: max_epochs.clamp(1, 3),
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_returns_initial_model() {
    let (_d, ds) = dataset(1);
    let mc = small_model(&ds);
    let out = train(&cfg(0), &mc, &ds, |_| panic!("no epochs expected")).unwrap();
    assert!(out.history.epochs.is_empty());
    assert_eq!(out.history.best_epoch, 0);
    assert_eq!(out.best.params, init_model(&mc).unwrap());
}

#[test]
fn training_is_deterministic() {
    let (_d, ds) = dataset(2);
    let mc = small_model(&ds);
    let a = train(&cfg(3), &mc, &ds, |_| {}).unwrap();
    let b = train(&cfg(3), &mc, &ds, |_| {}).unwrap();
    let strip = |h: &aufuse_core::TrainHistory| {
        h.epochs
            .iter()
            .map(|e| (e.train_loss.to_bits(), e.val_macro_f1.to_bits()))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a.history), strip(&b.history));
    assert_eq!(a.best.to_bytes().unwrap(), b.best.to_bytes().unwrap());
}

#[test]
fn best_checkpoint_never_trails_an_earlier_epoch() {
    let (_d, ds) = dataset(3);
    let mc = small_model(&ds);
    let mut seen = 0;
    let out = train(&cfg(6), &mc, &ds, |_| seen += 1).unwrap();
    let h = &out.history;
    assert_eq!(seen, h.epochs.len());
    assert!(!h.epochs.is_empty() && h.epochs.len() <= 6);
    let best = &h.epochs[h.best_epoch - 1];
    for e in &h.epochs[..h.best_epoch - 1] {
        assert!(e.val_macro_f1 < best.val_macro_f1);
    }
    for e in &h.epochs[h.best_epoch..] {
        assert!(e.val_macro_f1 <= best.val_macro_f1);
    }
    assert_eq!(out.best.epoch, h.best_epoch as u64);
    assert!(h.epochs.iter().all(|e| e.train_loss.is_finite()));

    let tau = ThresholdVector([0.5; NUM_AUS]);
    let eval = evaluate(&out.best, &ds, Split::Val, &tau).unwrap();
    assert!((eval.report.rows[0].macro_f1 - best.val_macro_f1).abs() < 1e-9);

    let csv = h.to_csv();
    assert!(csv.starts_with("epoch,train_loss,val_macro_f1,val_AU1"));
    assert_eq!(csv.lines().count(), h.epochs.len() + 1);
}

#[test]
fn training_reduces_loss() {
    let (_d, ds) = dataset(4);
    let out = train(&cfg(4), &small_model(&ds), &ds, |_| {}).unwrap();
    let e = &out.history.epochs;
    assert!(e.last().unwrap().train_loss < e[0].train_loss);
}

#[test]
fn checkpoint_survives_disk_and_resumes_scoring() {
    let (dir, ds) = dataset(5);
    let out = train(&cfg(2), &small_model(&ds), &ds, |_| {}).unwrap();
    let path = dir.path().join("best.ckpt");
    out.best.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.params, out.best.params);
    assert_eq!(back.config, out.best.config);
    assert_eq!(back.epoch, out.best.epoch);
    let opt = back.optimizer.as_ref().unwrap();
    assert_eq!(opt.step, out.best.optimizer.as_ref().unwrap().step);
    assert!(opt.m.congruent(&back.params));
}

#[test]
fn evaluation_emits_tracks_for_every_frame() {
    let (_d, ds) = dataset(6);
    let ck = Checkpoint::new(small_model(&ds), init_model(&small_model(&ds)).unwrap());
    let (tracks, labels) = predict_tracks(&ck.params, &ds, Split::Train, &[]).unwrap();
    assert_eq!(tracks.len(), 3);
    for (t, l) in tracks.iter().zip(&labels) {
        assert_eq!(t.len(), 30);
        assert_eq!(l.len(), 30);
        assert_eq!(t.frames, (0..30).collect::<Vec<_>>());
    }
    // Zero parameters: every probability is 0.5, so decisions depend only on τ vs 0.5.
    let zero = Checkpoint::new(ck.config.clone(), ck.params.zeros_like());
    let tau = ThresholdVector::default();
    let eval = evaluate(&zero, &ds, Split::Val, &tau).unwrap();
    for t in &eval.tracks {
        assert!(t.probs.iter().all(|p| *p == [0.5; NUM_AUS]));
    }
    for j in 0..NUM_AUS {
        if tau.0[j] >= 0.5 {
            assert_eq!(eval.report.rows[0].per_au[j], 0.0);
        } else {
            assert!(eval.report.rows[0].per_au[j] > 0.0);
        }
    }
}

#[test]
fn empty_splits_are_errors() {
    let (_d, mut ds) = dataset(7);
    let mc = small_model(&ds);
    for v in &mut ds.videos {
        if v.entry.split == Split::Val {
            v.entry.split = Split::Train;
        }
    }
    assert!(matches!(train(&cfg(1), &mc, &ds, |_| {}), Err(Error::Empty(_))));
    let ck = Checkpoint::new(mc.clone(), init_model(&mc).unwrap());
    assert!(evaluate(&ck, &ds, Split::Val, &ThresholdVector::default()).is_err());
}

#[test]
fn mismatched_model_widths_are_rejected() {
    let (_d, ds) = dataset(8);
    let mc = ModelConfig {
        audio_dim: 7,
        ..small_model(&ds)
    };
    assert!(train(&cfg(1), &mc, &ds, |_| {}).is_err());
}

#[test]
fn divergence_aborts_with_diagnostic() {
    let (_d, ds) = dataset(9);
    let mut mc = small_model(&ds);
    mc.seed = 1;
    let c = TrainConfig {
        lr: 1e300,
        ..cfg(2)
    };
    match train(&c, &mc, &ds, |_| {}) {
        Err(Error::NonFiniteLoss { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected NonFiniteLoss, got {:?}", other.map(|o| o.history)),
    }
}
