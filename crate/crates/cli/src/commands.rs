use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use aufuse_core::checkpoint::Checkpoint;
use aufuse_core::feature_store::{
    filter_labels, generate_synthetic, load_manifest, read_labels, split_videos, Dataset, StreamDims, SynthSpec,
};
use aufuse_core::metrics::{au_expr_pcc, au_pcc, macro_f1, mine_rules, EvalReport};
use aufuse_core::model::{InputStream, ModelConfig};
use aufuse_core::postprocess::{
    ablation, apply_stack, default_grid, score, smooth_all, sweep_window, tune_thresholds, PostprocessConfig,
};
use aufuse_core::trainer::{predict_tracks, train};
use aufuse_core::{AuLabels, DatasetManifest, PredictionTrack, Split, ThresholdVector, AU_NAMES, NUM_AUS};
use serde_json::json;

use crate::config::{load_or_default, set_if, RunConfig};
use crate::{record, AnalyzeCommand, Cli, Command, EvalArgs, PostprocessArgs, StageArg, SweepArgs, SynthArgs, TrainArgs};

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_or_default(cli.config.as_deref())?;
    let out = cfg.resolve_out(cli.out);
    match cli.command {
        Command::Synth(a) => synth(cfg, &out, a),
        Command::Train(a) => train_cmd(cfg, &out, a),
        Command::Eval(a) => eval(cfg, &out, a),
        Command::Postprocess(a) => postprocess(cfg, &out, a),
        Command::Sweep(a) => sweep(cfg, &out, a),
        Command::Analyze(a) => analyze(cfg, &out, a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn manifest_path(cfg: &mut RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = flag {
        cfg.manifest = Some(p);
    }
    cfg.manifest
        .clone()
        .ok_or_else(|| anyhow!("no manifest given (use --manifest or `manifest` in the config file)"))
}

fn synth(mut cfg: RunConfig, out: &Path, a: SynthArgs) -> Result<()> {
    set_if!(cfg.seed => a.seed);
    if a.dims.len() != 4 {
        bail!("--dims takes 4 comma-separated widths (swin,ghfeat,hubert,roberta), got {}", a.dims.len());
    }
    let spec = SynthSpec {
        seed: cfg.seed,
        n_videos: a.videos,
        frames_per_video: a.frames,
        fps: a.fps,
        dims: StreamDims {
            swin: a.dims[0],
            ghfeat: a.dims[1],
            hubert: a.dims[2],
            roberta: a.dims[3],
        },
        planted: None,
        noise_rate: a.noise,
        run_length: a.run_length,
        utterance_runs: a.utterance_runs,
        feature_noise: a.feature_noise,
        silent_fraction: a.silent_fraction,
        unlabeled_rate: a.unlabeled_rate,
    };
    create_dir(out)?;
    let mut manifest = generate_synthetic(&spec, out)?;
    let path = out.join("manifest.json");
    if a.val_fraction > 0.0 && manifest.videos.len() < 2 {
        log::warn!("a single video cannot be split; leaving it unassigned");
    } else if a.val_fraction > 0.0 {
        manifest = split_videos(&manifest, a.val_fraction, cfg.seed)?;
        manifest.save(&path)?;
    }
    cfg.manifest = Some(path.clone());
    record::write(out, "synth", &cfg, json!({ "spec": spec, "val_fraction": a.val_fraction }))?;
    println!(
        "wrote {} videos ({} train, {} val) to {}",
        manifest.videos.len(),
        manifest.videos_in(Split::Train).count(),
        manifest.videos_in(Split::Val).count(),
        path.display()
    );
    Ok(())
}

/// Copy of `m` whose paths no longer depend on where it is saved.
fn absolutize(m: &DatasetManifest) -> Result<DatasetManifest> {
    let mut out = m.clone();
    let root = std::path::absolute(&m.root).context("resolving manifest directory")?;
    for v in &mut out.videos {
        for p in v.feature_paths.values_mut() {
            *p = root.join(&*p);
        }
        v.label_path = root.join(&v.label_path);
    }
    Ok(out)
}

fn train_cmd(mut cfg: RunConfig, out: &Path, a: TrainArgs) -> Result<()> {
    let manifest_file = manifest_path(&mut cfg, a.manifest)?;
    set_if!(
        cfg.seed => a.seed,
        cfg.train.lr => a.lr,
        cfg.train.weight_decay => a.weight_decay,
        cfg.train.clip_norm => a.clip_norm,
        cfg.train.batch_size => a.batch_size,
        cfg.train.max_epochs => a.max_epochs,
        cfg.train.patience => a.patience,
        cfg.train.val_fraction => a.val_fraction,
        cfg.model.proj_dim => a.proj_dim,
        cfg.model.gru_hidden => a.gru_hidden,
        cfg.model.mlp_hidden => a.mlp_hidden,
    );
    cfg.validate()?;
    create_dir(out)?;

    let mut manifest = load_manifest(&manifest_file)?;
    let mut split_file = None;
    if manifest.videos_in(Split::Unassigned).next().is_some() {
        manifest = split_videos(&manifest, cfg.train.val_fraction, cfg.seed)?;
        let path = out.join("manifest.json");
        absolutize(&manifest)?.save(&path)?;
        log::info!("split unassigned videos with seed {}; wrote {}", cfg.seed, path.display());
        split_file = Some(path);
    }
    let ds = Dataset::load_splits(&manifest, &[Split::Train, Split::Val])?;
    let model_cfg = ModelConfig {
        proj_dim: cfg.model.proj_dim,
        gru_hidden: cfg.model.gru_hidden,
        mlp_hidden: cfg.model.mlp_hidden,
        activation: cfg.model.activation,
        seed: cfg.seed,
        ..ModelConfig::for_dims(ds.dims)
    };
    let outcome = train(&cfg.train_config(), &model_cfg, &ds, |e| {
        println!(
            "epoch {:>3}  loss {:.5}  val macro F1 {:.2}  ({:.1}s)",
            e.epoch, e.train_loss, e.val_macro_f1, e.wall_secs
        );
    })?;
    let ckpt = out.join("best.ckpt");
    outcome.best.save(&ckpt)?;
    write_file(&out.join("history.csv"), &outcome.history.to_csv())?;
    record::write(
        out,
        "train",
        &cfg,
        json!({
            "model": model_cfg,
            "split_manifest": split_file,
            "best_epoch": outcome.history.best_epoch,
            "epochs_run": outcome.history.epochs.len(),
        }),
    )?;
    println!("best epoch {}; wrote {}", outcome.history.best_epoch, ckpt.display());
    Ok(())
}

fn write_tracks(dir: &Path, tracks: &[PredictionTrack]) -> Result<()> {
    create_dir(dir)?;
    for t in tracks {
        t.write_csv(&dir.join(format!("{}.csv", t.video_id)))?;
    }
    Ok(())
}

fn eval(mut cfg: RunConfig, out: &Path, a: EvalArgs) -> Result<()> {
    let manifest_file = manifest_path(&mut cfg, a.manifest)?;
    set_if!(cfg.postprocess.window => a.window);
    cfg.validate()?;
    create_dir(out)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let ds = Dataset::load(&load_manifest(&manifest_file)?)?;
    ckpt.config.matches(ds.dims)?;
    let zeroed: Vec<InputStream> = a.zero_stream.iter().map(|&s| s.into()).collect();
    let split: Split = a.split.into();

    let (tracks, labels) = predict_tracks(&ckpt.params, &ds, split, &zeroed)?;
    if tracks.is_empty() {
        bail!("no videos in the {split} split");
    }
    let mut pcfg = cfg.postprocess_config();
    let mut tuned_on = None;
    if let Some(ts) = a.tune_split {
        let ts: Split = ts.into();
        let (tt, tl) = predict_tracks(&ckpt.params, &ds, ts, &zeroed)?;
        if tt.is_empty() {
            bail!("no videos in the {ts} split to tune on");
        }
        pcfg.thresholds = tune_thresholds(&smooth_all(&tt, pcfg.window)?, &tl, &default_grid())?;
        write_file(&out.join("thresholds.json"), &serde_json::to_string_pretty(&pcfg.thresholds)?)?;
        tuned_on = Some(ts.to_string());
    }
    let report = match a.stage {
        StageArg::Base => {
            let probs: Vec<_> = tracks.iter().map(|t| t.probs.clone()).collect();
            EvalReport::single("Base", score(&probs, &labels, &pcfg.base_thresholds)?)
        }
        StageArg::All => ablation(&tracks, &labels, &pcfg)?,
    };
    write_tracks(&out.join("predictions"), &tracks)?;
    write_file(&out.join("report.csv"), &report.to_csv())?;
    record::write(
        out,
        "eval",
        &cfg,
        json!({
            "checkpoint": a.checkpoint,
            "split": split.to_string(),
            "stage": format!("{:?}", a.stage).to_lowercase(),
            "tuned_on": tuned_on,
            "thresholds": pcfg.thresholds,
            "zeroed_streams": zeroed,
        }),
    )?;
    print!("{}", report.to_csv());
    Ok(())
}

fn read_tracks(dir: &Path) -> Result<Vec<PredictionTrack>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    paths.sort();
    if paths.is_empty() {
        bail!("no prediction tracks (*.csv) in {}", dir.display());
    }
    paths.iter().map(|p| Ok(PredictionTrack::read_csv(p)?)).collect()
}

/// Labels of each track's frames, looked up by video id.
fn aligned_labels(manifest: &DatasetManifest, tracks: &[PredictionTrack]) -> Result<Vec<Vec<AuLabels>>> {
    tracks
        .iter()
        .map(|t| {
            let entry = manifest.video(&t.video_id)?;
            let all = read_labels(&manifest.resolve(&entry.label_path))?;
            t.frames
                .iter()
                .map(|&f| {
                    all.get(f)
                        .copied()
                        .ok_or_else(|| anyhow!("{}: frame {f} beyond its {} labels", t.video_id, all.len()))
                })
                .collect()
        })
        .collect()
}

fn rows_csv(frames: &[usize], rows: impl Iterator<Item = String>) -> String {
    let mut s = format!("frame_index,{}\n", AU_NAMES.join(","));
    for (f, r) in frames.iter().zip(rows) {
        let _ = writeln!(s, "{f},{r}");
    }
    s
}

fn join<T: ToString>(row: &[T]) -> String {
    row.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn postprocess(mut cfg: RunConfig, out: &Path, a: PostprocessArgs) -> Result<()> {
    set_if!(cfg.postprocess.window => a.window);
    if let Some(p) = &a.thresholds {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let tau: ThresholdVector = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        cfg.postprocess.thresholds = ThresholdVector::new(tau.0)?;
    }
    if a.manifest.is_some() {
        cfg.manifest = a.manifest.clone();
    }
    cfg.validate()?;
    create_dir(out)?;
    let tracks = read_tracks(&a.predictions)?;
    let pcfg: PostprocessConfig = cfg.postprocess_config();
    for (t, p) in tracks.iter().zip(apply_stack(&tracks, &pcfg)?) {
        write_file(
            &out.join(format!("{}.probs.csv", t.video_id)),
            &rows_csv(&t.frames, p.fused_probs.iter().map(|r| join(&r.map(|v| format!("{v:?}"))))),
        )?;
        write_file(
            &out.join(format!("{}.decisions.csv", t.video_id)),
            &rows_csv(&t.frames, p.decisions.iter().map(|r| join(r))),
        )?;
    }
    if let Some(m) = &cfg.manifest {
        let labels = aligned_labels(&load_manifest(m)?, &tracks)?;
        let report = ablation(&tracks, &labels, &pcfg)?;
        write_file(&out.join("report.csv"), &report.to_csv())?;
        print!("{}", report.to_csv());
    }
    record::write(out, "postprocess", &cfg, json!({ "predictions": a.predictions, "thresholds_file": a.thresholds }))?;
    println!("processed {} tracks into {}", tracks.len(), out.display());
    Ok(())
}

/// `a..b` (inclusive) or a comma list.
pub fn parse_k(spec: &str) -> Result<Vec<usize>> {
    let ks: Vec<usize> = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo.trim().parse().with_context(|| format!("bad window range {spec:?}"))?;
        let hi: usize = hi.trim().trim_start_matches('=').parse().with_context(|| format!("bad window range {spec:?}"))?;
        (lo..=hi).collect()
    } else {
        spec.split(',')
            .map(|k| k.trim().parse().with_context(|| format!("bad window size {k:?}")))
            .collect::<Result<_>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        bail!("window sizes must be a non-empty set of positive integers, got {spec:?}");
    }
    Ok(ks)
}

fn sweep(mut cfg: RunConfig, out: &Path, a: SweepArgs) -> Result<()> {
    let manifest_file = manifest_path(&mut cfg, a.manifest)?;
    let ks = parse_k(&a.k)?;
    let tau = ThresholdVector::uniform(a.tau)?;
    create_dir(out)?;
    let tracks = read_tracks(&a.predictions)?;
    let labels = aligned_labels(&load_manifest(&manifest_file)?, &tracks)?;
    let mut csv = String::from("k,macro_f1\n");
    for (k, f1) in sweep_window(&tracks, &labels, &ks, &tau)? {
        let _ = writeln!(csv, "{k},{f1:.4}");
    }
    write_file(&out.join("sweep.csv"), &csv)?;
    record::write(out, "sweep", &cfg, json!({ "predictions": a.predictions, "k": ks, "tau": a.tau }))?;
    print!("{csv}");
    Ok(())
}

fn split_labels(manifest: &DatasetManifest, split: Option<Split>) -> Result<HashMap<String, Vec<AuLabels>>> {
    manifest
        .videos
        .iter()
        .filter(|v| split.is_none_or(|s| v.split == s))
        .map(|v| Ok((v.video_id.clone(), read_labels(&manifest.resolve(&v.label_path))?)))
        .collect()
}

fn labeled_rows(manifest: &DatasetManifest, split: Option<Split>) -> Result<Vec<[u8; NUM_AUS]>> {
    let mut by_video: Vec<_> = split_labels(manifest, split)?.into_iter().collect();
    by_video.sort_by(|a, b| a.0.cmp(&b.0));
    let rows: Vec<_> = by_video.iter().flat_map(|(_, l)| filter_labels(l).into_iter().map(|(_, r)| r)).collect();
    if rows.len() < 2 {
        bail!("need at least 2 labeled frames, found {}", rows.len());
    }
    Ok(rows)
}

fn analyze(mut cfg: RunConfig, out: &Path, cmd: AnalyzeCommand) -> Result<()> {
    create_dir(out)?;
    match cmd {
        AnalyzeCommand::Pcc { manifest, split } => {
            let m = load_manifest(&manifest_path(&mut cfg, manifest)?)?;
            let pcc = au_pcc(&labeled_rows(&m, split.map(Into::into))?)?;
            write_file(&out.join("au_pcc.csv"), &pcc.to_csv())?;
            record::write(out, "analyze pcc", &cfg, json!({ "split": split.map(|s| Split::from(s).to_string()) }))?;
            print!("{}", pcc.to_csv());
        }
        AnalyzeCommand::Expr { manifest, expr } => {
            let m = load_manifest(&manifest_path(&mut cfg, manifest)?)?;
            let labels = split_labels(&m, None)?;
            let text = std::fs::read_to_string(&expr).with_context(|| format!("reading {}", expr.display()))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            let header: Vec<&str> = lines.next().unwrap_or_default().split(',').map(str::trim).collect();
            if header.len() < 3 || header[0] != "video_id" || header[1] != "frame_index" {
                bail!("{}: header must be video_id,frame_index,<expression columns>", expr.display());
            }
            let names: Vec<String> = header[2..].iter().map(|s| s.to_string()).collect();
            let (mut au, mut ex) = (Vec::new(), Vec::new());
            for (n, line) in lines.enumerate() {
                let cells: Vec<&str> = line.split(',').map(str::trim).collect();
                if cells.len() != header.len() {
                    bail!("{}: row {} has {} cells", expr.display(), n + 1, cells.len());
                }
                let video = labels.get(cells[0]).ok_or_else(|| anyhow!("unknown video {:?}", cells[0]))?;
                let frame: usize = cells[1].parse().with_context(|| format!("bad frame index {:?}", cells[1]))?;
                let lab = video.get(frame).ok_or_else(|| anyhow!("{}: frame {frame} out of range", cells[0]))?;
                if lab.iter().any(|&v| v < 0) {
                    continue;
                }
                au.push(lab.map(|v| v as u8));
                ex.push(
                    cells[2..]
                        .iter()
                        .map(|c| c.parse::<f64>().with_context(|| format!("bad value {c:?}")))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            let pcc = au_expr_pcc(&au, &ex, &names)?;
            write_file(&out.join("au_expr_pcc.csv"), &pcc.to_csv())?;
            record::write(out, "analyze expr", &cfg, json!({ "expr": expr }))?;
            print!("{}", pcc.to_csv());
        }
        AnalyzeCommand::Rules {
            manifest,
            f1,
            row,
            threshold,
            min_gap,
            split,
        } => {
            let m = load_manifest(&manifest_path(&mut cfg, manifest)?)?;
            let pcc = au_pcc(&labeled_rows(&m, split.map(Into::into))?)?;
            let text = std::fs::read_to_string(&f1).with_context(|| format!("reading {}", f1.display()))?;
            let report = EvalReport::from_csv(&text)?;
            let r = match &row {
                Some(name) => report.row(name).ok_or_else(|| anyhow!("report has no row {name:?}"))?,
                None => report.rows.first().ok_or_else(|| anyhow!("report has no rows"))?,
            };
            let rules = mine_rules(&pcc, &r.per_au, threshold, min_gap)?;
            let json_rules = serde_json::to_string_pretty(&rules)?;
            write_file(&out.join("rules.json"), &(json_rules.clone() + "\n"))?;
            record::write(
                out,
                "analyze rules",
                &cfg,
                json!({ "f1": f1, "row": r.name, "threshold": threshold, "min_gap": min_gap, "macro_f1": macro_f1(&r.per_au) }),
            )?;
            println!("{json_rules}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_specs() {
        assert_eq!(parse_k("2..32").unwrap(), (2..=32).collect::<Vec<_>>());
        assert_eq!(parse_k("1..=3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_k("1, 6,12").unwrap(), vec![1, 6, 12]);
        assert!(parse_k("0..4").is_err());
        assert!(parse_k("5..2").is_err());
        assert!(parse_k("a").is_err());
    }
}
