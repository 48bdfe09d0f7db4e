use std::collections::BTreeMap;

use super::*;
use crate::dataset::{split, SplitKind, ZcDataset, ZcRecord};
use crate::mabn::MabnConfig;
use crate::netzoo::ProxyName;
use crate::par::Exec;
use crate::rng::RngStream;
use rand::Rng;

fn small_model(d: usize) -> MabnConfig {
    MabnConfig {
        segments: 4,
        segment_len: 6,
        mixer_depth: 1,
        ffn_expansion: 2.0,
        dropout: 0.1,
        ..MabnConfig::desk(d)
    }
}

fn random_records(n: usize, nodes: usize, seed: u64) -> Vec<ZcRecord> {
    let mut g = RngStream::new(seed, 1).generator(0);
    (0..n)
        .map(|i| {
            let proxies: BTreeMap<_, _> = [ProxyName::Snip, ProxyName::Synflow]
                .into_iter()
                .map(|p| (p, (0..nodes).map(|_| g.random::<f64>()).collect()))
                .collect();
            ZcRecord {
                arch_id: format!("a{i:04}"),
                num_nodes: nodes,
                accuracy: Some(g.random::<f64>()),
                proxies,
            }
        })
        .collect()
}

fn dataset(n: usize, seed: u64) -> ZcDataset {
    let ds = ZcDataset::from_records(random_records(n, 4, seed), None, "test", seed).unwrap();
    split(ds, 0.75, seed).unwrap()
}

#[test]
fn loss_spellings_round_trip() {
    for k in LossKind::all_combinations() {
        assert_eq!(k.to_string().parse::<LossKind>().unwrap(), k);
    }
    assert_eq!("rank+mse".parse::<LossKind>().unwrap().to_string(), "mse+rank");
    assert!("mse+mse".parse::<LossKind>().is_err());
    assert!("hinge".parse::<LossKind>().is_err());
}

#[test]
fn zero_epochs_rejected() {
    let ds = dataset(20, 1);
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    assert!(matches!(train(&ds, &small_model(8), &cfg), Err(crate::Error::Contract(_))));
}

#[test]
fn unrepresentable_flags_rejected() {
    let cfg = TrainConfig {
        use_mixer: true,
        use_mlp_baseline: true,
        ..TrainConfig::default()
    };
    assert!(cfg.validate().is_err());
    let cfg = TrainConfig {
        use_mixer: false,
        use_bayes: false,
        ..TrainConfig::default()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn feature_width_must_match() {
    let ds = dataset(20, 1);
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    assert!(train(&ds, &small_model(7), &cfg).is_err());
}

#[test]
fn same_seed_same_params() {
    let ds = dataset(30, 2);
    let cfg = TrainConfig {
        epochs: 3,
        loss: "all".parse().unwrap(),
        ..TrainConfig::default()
    };
    let (a, ra) = train(&ds, &small_model(8), &cfg).unwrap();
    let (b, rb) = train(&ds, &small_model(8), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.epoch_losses, rb.epoch_losses);
    assert_eq!(ra.epoch_losses.len(), 3);
    let (c, _) = train(&ds, &small_model(8), &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a, c);
}

fn memo_set() -> (ZcDataset, MabnConfig) {
    let ds = ZcDataset::from_records(random_records(20, 4, 5), None, "memo", 0).unwrap();
    let mut ds = split(ds, 0.5, 0).unwrap();
    ds.split.as_mut().unwrap().train = (0..20).collect();
    let model = MabnConfig {
        segments: 8,
        segment_len: 12,
        mixer_depth: 2,
        dropout: 0.0,
        ..MabnConfig::desk(8)
    };
    (ds, model)
}

#[test]
fn memorises_twenty_samples() {
    let (ds, model) = memo_set();
    let cfg = TrainConfig {
        epochs: 1000,
        lr: 1e-3,
        ..TrainConfig::default()
    };
    let (params, _) = train(&ds, &model, &cfg).unwrap();
    let row = evaluate(&params, &ds, SplitKind::Train).unwrap();
    assert!(row.kendall >= 0.95, "{row:?}");
}

#[test]
fn windowed_training_loss_does_not_increase() {
    let (ds, model) = memo_set();
    let cfg = TrainConfig {
        epochs: 400,
        ..TrainConfig::default()
    };
    let (_, report) = train(&ds, &model, &cfg).unwrap();
    let windows: Vec<f64> = report
        .epoch_losses
        .chunks(10)
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect();
    for w in windows.windows(2) {
        assert!(w[1] <= w[0], "{windows:?}");
    }
}

#[test]
fn untrained_model_is_uninformative_on_random_targets() {
    let ds = ZcDataset::from_records(random_records(400, 4, 9), None, "null", 0).unwrap();
    let params = crate::mabn::init_params(&small_model(8), 3).unwrap();
    let row = evaluate(&params, &ds, SplitKind::All).unwrap();
    assert!(row.kendall.abs() < 0.15, "{row:?}");
}

#[test]
fn evaluation_is_repeatable_and_batch_size_free() {
    let ds = dataset(60, 4);
    let params = crate::mabn::init_params(&small_model(8), 3).unwrap();
    let a = evaluate(&params, &ds, SplitKind::Validation).unwrap();
    let b = evaluate(&params, &ds, SplitKind::Validation).unwrap();
    let c = evaluate_with(&params, &ds, SplitKind::Validation, 7, 0, Exec::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn search_orders_and_ties() {
    let ds = dataset(40, 6);
    let params = crate::mabn::init_params(&small_model(8), 3).unwrap();
    let opts = SearchOptions {
        top_k: 40,
        ..SearchOptions::default()
    };
    let full = search(&params, &ds.manifest, &ds.records, opts).unwrap();
    assert_eq!(full.hits.len(), 40);
    for w in full.hits.windows(2) {
        assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].arch_id < w[1].arch_id));
    }
    let mut ids: Vec<&str> = full.hits.iter().map(|h| h.arch_id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 40);

    let mut reversed = ds.records.clone();
    reversed.reverse();
    let again = search(&params, &ds.manifest, &reversed, SearchOptions { exec: Exec::Sequential, ..opts }).unwrap();
    assert_eq!(full.hits, again.hits);

    // duplicated features tie exactly and fall back to id order
    let mut twins = vec![ds.records[0].clone(), ds.records[0].clone()];
    twins[0].arch_id = "zz".into();
    twins[1].arch_id = "aa".into();
    let t = search(&params, &ds.manifest, &twins, opts).unwrap();
    assert_eq!(t.hits[0].arch_id, "aa");
    assert!(t.to_csv().starts_with("rank,arch_id,score\n1,aa,"));
}

#[test]
fn search_rejects_bad_candidates() {
    let ds = dataset(20, 6);
    let params = crate::mabn::init_params(&small_model(8), 3).unwrap();
    let mut bad = ds.records[..3].to_vec();
    bad[1].proxies.remove(&ProxyName::Snip);
    let err = search(&params, &ds.manifest, &bad, SearchOptions::default()).unwrap_err();
    assert!(err.to_string().contains(&bad[1].arch_id), "{err}");
}

#[test]
fn ablation_single_seed_has_zero_std() {
    let ds = dataset(40, 7);
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let arms = vec![
        AblationArm::new(DesignArm::MixerBn, LossKind::DIFFKENDALL),
        AblationArm::new(DesignArm::Mlp, LossKind::MSE),
    ];
    let rows = ablation_suite(&ds, &small_model(8), &cfg, &arms, &[3], Exec::Parallel).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.kd_std, 0.0);
        assert!(r.kd_mean.is_finite() && r.sp_mean.is_finite());
    }
    let csv = ablation_csv(&rows);
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn ablation_records_failures_per_arm() {
    let ds = dataset(40, 7);
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let model = MabnConfig {
        mixer_depth: 0,
        ..small_model(8)
    };
    // the mixer arm cannot run without blocks; the bn arm still does
    let arms = vec![
        AblationArm::new(DesignArm::MixerOnly, LossKind::DIFFKENDALL),
        AblationArm::new(DesignArm::BnOnly, LossKind::DIFFKENDALL),
    ];
    let rows = ablation_suite(&ds, &model, &cfg, &arms, &[0, 1], Exec::Sequential).unwrap();
    assert_eq!(rows[0].failures.len(), 2);
    assert_eq!(rows[1].runs.len(), 2);
}
