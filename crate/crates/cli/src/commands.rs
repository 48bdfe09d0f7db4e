use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use parzc::dataset::{
    load_stats, save_manifest, split, stats_to_string, synth_generate_with, DatasetManifest, SplitKind,
    ZcDataset, ZcRecord,
};
use parzc::gbdt::{gbdt_fit, gbdt_predict, node_importance_report};
use parzc::mabn::{load_checkpoint, save_checkpoint, Checkpoint};
use parzc::netzoo::{collect_zc_record, gaussian_probe, load_dags, ProxyName};
use parzc::par::Exec;
use parzc::rank::{metrics_csv, MetricRow, RankBatch};
use parzc::rng::RngStream;
use parzc::train::{
    ablation_csv, ablation_suite, design_arms, evaluate_with, loss_arms, AblationArm, SearchOptions,
};

use crate::config::{resolve, FileConfig};
use crate::manifest::{ensure_dir, Recorder};
use crate::{AblationKind, Common, EvalSplit, TrainOpts, Usage};

/// Train/validation fraction used by `train`, `eval` and `ablate`.
pub const TRAIN_FRACTION: f64 = 0.6;

const COLLECT_STREAM: u64 = 0xc011;

fn labelled_dataset(stats: &Path, lmax: Option<usize>, split_seed: u64, fraction: f64) -> Result<ZcDataset> {
    let records = load_stats(stats)?;
    let source = stats.display().to_string();
    let ds = ZcDataset::from_records(records, lmax, source, split_seed)?;
    Ok(split(ds, fraction, split_seed)?)
}

fn loaded_layout(ck: &Checkpoint, path: &Path) -> Result<DatasetManifest> {
    ck.layout
        .clone()
        .ok_or_else(|| Usage(format!("{}: checkpoint carries no feature layout", path.display())).into())
}

pub fn synth(common: &Common, seed: Option<u64>, n: Option<usize>, argv: &[String]) -> Result<()> {
    let file = FileConfig::load(common.config.as_deref())?;
    let mut cfg = file.synth.unwrap_or_default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = n {
        cfg.n_archs = n;
    }
    let mut rec = Recorder::start("synth", argv);
    if let Some(c) = &common.config {
        rec.input(c);
    }
    rec.config(&cfg)?;
    rec.seed("synth", cfg.seed);

    let bench = synth_generate_with(&cfg, Exec::Parallel)?;
    ensure_dir(&common.out)?;
    let mut dags = String::new();
    for d in &bench.dags {
        dags.push_str(&d.to_json());
        dags.push('\n');
    }
    rec.write(&common.out, "stats.jsonl", stats_to_string(&bench.records))?;
    rec.write(&common.out, "truth.csv", bench.truth.to_csv())?;
    rec.write(&common.out, "dags.jsonl", dags)?;
    let layout = ZcDataset::from_records(bench.records, None, "synthetic", cfg.seed)?.manifest;
    let layout_path = common.out.join("dataset.json");
    save_manifest(&layout_path, &layout)?;
    rec.output(layout_path);
    println!("wrote {} architectures to {}", cfg.n_archs, common.out.display());
    rec.finish(&common.out)
}

fn dag_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    let entries = std::fs::read_dir(path).map_err(|e| parzc::Error::Io { path: path.to_path_buf(), source: e })?;
    for entry in entries {
        let p = entry.map_err(|e| parzc::Error::Io { path: path.to_path_buf(), source: e })?.path();
        if matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "jsonl")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn collect(
    common: &Common,
    dags: &Path,
    proxies: &[ProxyName],
    seed: u64,
    probe_batch: usize,
    argv: &[String],
) -> Result<()> {
    if probe_batch == 0 {
        return Err(Usage("--probe-batch must be positive".into()).into());
    }
    let mut proxies = proxies.to_vec();
    proxies.sort();
    proxies.dedup();
    let mut rec = Recorder::start("collect", argv);
    rec.config(&serde_json::json!({ "proxies": proxies, "probe_batch": probe_batch }))?;
    rec.seed("init", seed);

    let stream = RngStream::new(seed, COLLECT_STREAM);
    let mut records: Vec<ZcRecord> = Vec::new();
    let mut failed = Vec::new();
    let files = dag_files(dags)?;
    for file in &files {
        let result = load_dags(file).and_then(|dags| {
            dags.iter()
                .enumerate()
                .map(|(i, dag)| {
                    let batch = gaussian_probe(dag, probe_batch, stream.split((records.len() + i) as u64))?;
                    collect_zc_record(dag, &proxies, &batch, seed)
                })
                .collect::<parzc::Result<Vec<_>>>()
        });
        match result {
            Ok(rs) => {
                rec.input(file);
                records.extend(rs);
            }
            Err(e) => {
                eprintln!("skipping {}: {e}", file.display());
                failed.push(file.display().to_string());
            }
        }
    }

    ensure_dir(&common.out)?;
    rec.write(&common.out, "stats.jsonl", stats_to_string(&records))?;
    rec.note("failed_files", &failed);
    rec.finish(&common.out)?;
    println!("collected {} records from {} files", records.len(), files.len() - failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Usage(format!("{} of {} DAG files could not be collected", failed.len(), files.len())).into())
    }
}

pub fn train(common: &Common, stats: &Path, opts: &TrainOpts, argv: &[String]) -> Result<()> {
    let file = FileConfig::load(common.config.as_deref())?;
    let ds = labelled_dataset(stats, opts.lmax, opts.split_seed, TRAIN_FRACTION)?;
    let resolved = resolve(&file, opts, ds.x.cols)?;
    let mut rec = Recorder::start("train", argv);
    rec.input(stats);
    if let Some(c) = &common.config {
        rec.input(c);
    }
    rec.config(&resolved)?;
    rec.seed("model", resolved.model.seed);
    rec.seed("train", resolved.train.seed);
    rec.seed("split", opts.split_seed);

    let (params, report) = parzc::train::train(&ds, &resolved.model, &resolved.train)
        .with_context(|| format!("training on {}", stats.display()))?;
    ensure_dir(&common.out)?;
    let ckpt = common.out.join("model.ckpt");
    save_checkpoint(&ckpt, &Checkpoint { params, layout: Some(ds.manifest.clone()) })?;
    rec.output(ckpt);
    let layout_path = common.out.join("dataset.json");
    save_manifest(&layout_path, &ds.manifest)?;
    rec.output(layout_path);
    rec.write(&common.out, "losses.csv", report.losses_csv())?;
    rec.write(&common.out, "metrics.csv", metrics_csv(&[report.train.clone(), report.validation.clone()]))?;
    rec.note("train_seconds", report.wall_seconds);
    rec.note("optimizer", &report.optimizer);
    println!(
        "validation kendall {:.4} spearman {:.4} ({} epochs, {:.1}s)",
        report.validation.kendall,
        report.validation.spearman,
        report.epoch_losses.len(),
        report.wall_seconds
    );
    rec.finish(&common.out)
}

pub fn eval(
    common: &Common,
    stats: &Path,
    ckpt_path: &Path,
    which: EvalSplit,
    split_seed: Option<u64>,
    mc_samples: usize,
    argv: &[String],
) -> Result<()> {
    let ck = load_checkpoint(ckpt_path)?;
    let layout = loaded_layout(&ck, ckpt_path)?;
    let split_seed = split_seed.unwrap_or(layout.seed);
    let ds = ZcDataset::from_records(load_stats(stats)?, Some(layout.lmax), stats.display().to_string(), split_seed)?;
    if ds.manifest.proxy_order != layout.proxy_order {
        return Err(Usage(format!(
            "{} has proxies {:?}, the checkpoint expects {:?}",
            stats.display(),
            ds.manifest.proxy_order,
            layout.proxy_order
        ))
        .into());
    }
    let kind = match which {
        EvalSplit::Train => SplitKind::Train,
        EvalSplit::Validation => SplitKind::Validation,
        EvalSplit::All => SplitKind::All,
    };
    let ds = if kind == SplitKind::All { ds } else { split(ds, TRAIN_FRACTION, split_seed)? };

    let mut rec = Recorder::start("eval", argv);
    rec.input(stats);
    rec.input(ckpt_path);
    rec.config(&serde_json::json!({
        "split": kind.as_str(),
        "train_fraction": TRAIN_FRACTION,
        "mc_samples": mc_samples,
        "eval_batch": 50,
    }))?;
    rec.seed("split", split_seed);
    let row = evaluate_with(&ck.params, &ds, kind, 50, mc_samples, Exec::Parallel)?;
    ensure_dir(&common.out)?;
    rec.write(&common.out, "metrics.csv", metrics_csv(std::slice::from_ref(&row)))?;
    println!("{} kendall {:.4} spearman {:.4} (n = {})", row.split, row.kendall, row.spearman, row.n);
    rec.finish(&common.out)
}

pub fn ablate(
    common: &Common,
    stats: &Path,
    opts: &TrainOpts,
    which: AblationKind,
    seeds: &[u64],
    argv: &[String],
) -> Result<()> {
    let file = FileConfig::load(common.config.as_deref())?;
    let ds = labelled_dataset(stats, opts.lmax, opts.split_seed, TRAIN_FRACTION)?;
    let resolved = resolve(&file, opts, ds.x.cols)?;
    let mut arms: Vec<AblationArm> = match which {
        AblationKind::Design => design_arms(),
        AblationKind::Loss => loss_arms(),
        AblationKind::Both => design_arms().into_iter().chain(loss_arms()).collect(),
    };
    let mut seen = std::collections::BTreeSet::new();
    arms.retain(|a| seen.insert(a.name.clone()));

    let mut rec = Recorder::start("ablate", argv);
    rec.input(stats);
    if let Some(c) = &common.config {
        rec.input(c);
    }
    rec.config(&serde_json::json!({ "base": resolved, "arms": arms, "seeds": seeds }))?;
    rec.seed("split", opts.split_seed);

    let rows = ablation_suite(&ds, &resolved.model, &resolved.train, &arms, seeds, Exec::Parallel)?;
    ensure_dir(&common.out)?;
    rec.write(&common.out, "ablation.csv", ablation_csv(&rows))?;
    for r in &rows {
        println!("{:<28} kd {:.4} ± {:.4}  sp {:.4} ± {:.4}", r.arm.name, r.kd_mean, r.kd_std, r.sp_mean, r.sp_std);
        for f in &r.failures {
            eprintln!("{}: run failed: {f}", r.arm.name);
        }
    }
    rec.finish(&common.out)
}

pub fn search(
    common: &Common,
    stats: &Path,
    ckpt_path: &Path,
    top_k: usize,
    mc_samples: usize,
    argv: &[String],
) -> Result<()> {
    let ck = load_checkpoint(ckpt_path)?;
    let layout = loaded_layout(&ck, ckpt_path)?;
    let candidates = load_stats(stats)?;
    let opts = SearchOptions {
        top_k,
        mc_samples,
        ..SearchOptions::default()
    };
    let mut rec = Recorder::start("search", argv);
    rec.input(stats);
    rec.input(ckpt_path);
    rec.config(&serde_json::json!({ "top_k": top_k, "mc_samples": mc_samples, "eval_batch": opts.eval_batch }))?;
    let result = parzc::train::search(&ck.params, &layout, &candidates, opts)?;
    ensure_dir(&common.out)?;
    rec.write(&common.out, "search.csv", result.to_csv())?;
    rec.note("scoring_seconds", result.scoring_seconds);
    if let Some(best) = result.hits.first() {
        println!(
            "best {} (score {:.4}); scored {} candidates in {:.2}s",
            best.arch_id,
            best.score,
            candidates.len(),
            result.scoring_seconds
        );
    }
    rec.finish(&common.out)
}

pub fn importance(
    common: &Common,
    stats: &Path,
    lmax: Option<usize>,
    train_fraction: f64,
    seed: Option<u64>,
    argv: &[String],
) -> Result<()> {
    let file = FileConfig::load(common.config.as_deref())?;
    let mut cfg = file.gbdt.unwrap_or_default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let ds = labelled_dataset(stats, lmax, cfg.seed, train_fraction)?;
    let mut rec = Recorder::start("importance", argv);
    rec.input(stats);
    if let Some(c) = &common.config {
        rec.input(c);
    }
    rec.config(&serde_json::json!({ "gbdt": cfg, "train_fraction": train_fraction, "layout": ds.manifest }))?;
    rec.seed("split", cfg.seed);

    let train_idx = ds.indices(SplitKind::Train)?;
    let x = ds.x.select(&train_idx);
    let y: Vec<f64> = train_idx.iter().map(|&i| ds.y[i]).collect();
    let model = gbdt_fit(&x, &y, &cfg)?;
    let report = node_importance_report(&model, &ds.manifest.proxy_order, ds.manifest.lmax)?;

    let val_idx = ds.indices(SplitKind::Validation)?;
    let pred = gbdt_predict(&model, &ds.x.select(&val_idx))?;
    let truth: Vec<f64> = val_idx.iter().map(|&i| ds.y[i]).collect();
    let row = MetricRow::compute("validation", RankBatch::new(&pred, &truth)?)?;

    ensure_dir(&common.out)?;
    rec.write(&common.out, "importance.csv", report.to_csv())?;
    rec.write(&common.out, "metrics.csv", metrics_csv(std::slice::from_ref(&row)))?;
    for (k, p) in report.proxy_order.iter().enumerate() {
        println!("{p:<10} {:.4}", report.proxy_mass(k));
    }
    rec.finish(&common.out)
}
