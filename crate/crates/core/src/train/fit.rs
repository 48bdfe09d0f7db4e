use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ad::{Tape, Tensor};
use crate::dataset::{encode_minmax, FeatureMatrix, SplitKind, ZcDataset};
use crate::error::{Error, Result};
use crate::mabn::{init_params, predict, record_forward, ForwardMode, MabnConfig, MabnParams};
use crate::par::Exec;
use crate::rank::{diffkendall_on_tape, mse_on_tape, pairwise_rank_on_tape, MetricRow, RankBatch};
use crate::rng::RngStream;
use crate::train::config::TrainConfig;
use crate::train::optim::AdamW;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean mini-batch loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub train: MetricRow,
    pub validation: MetricRow,
    pub wall_seconds: f64,
    pub config: TrainConfig,
    pub model: MabnConfig,
    pub seed: u64,
    pub optimizer: String,
}

impl TrainReport {
    pub fn losses_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{},{l}\n", e + 1));
        }
        out
    }
}

pub(crate) fn to_tensor(x: &FeatureMatrix) -> Result<Tensor> {
    Tensor::new([x.rows, x.cols], x.data.clone())
}

fn numeric(e: Error, epoch: usize, batch: usize, cfg: &TrainConfig) -> Error {
    if e.is_numeric() {
        Error::NumericFault {
            node: format!("epoch {epoch}, batch {batch}, loss {}", cfg.loss),
            detail: e.to_string(),
        }
    } else {
        e
    }
}

/// Trains a fresh predictor on the dataset's train split.
///
/// `model.seed` fixes the initial weights and `cfg.seed` the batch order,
/// dropout masks and weight noise, so the result is a pure function of the
/// inputs. Regression targets are min-max scaled over the train split; the
/// ranking terms are unaffected by that.
pub fn train(dataset: &ZcDataset, model: &MabnConfig, cfg: &TrainConfig) -> Result<(MabnParams, TrainReport)> {
    let started = Instant::now();
    cfg.validate()?;
    let model = cfg.apply_design(model)?;
    if model.input_dim != dataset.x.cols {
        return Err(Error::contract(format!(
            "model input_dim {} does not match feature width {}",
            model.input_dim, dataset.x.cols
        )));
    }
    let train_idx = dataset.indices(SplitKind::Train)?;
    if dataset.split.is_none() {
        return Err(Error::contract("dataset has no train/validation split"));
    }
    if train_idx.len() < 2 && cfg.loss.needs_pairs() {
        return Err(Error::contract("train split needs at least 2 records"));
    }
    let y_train: Vec<f64> = train_idx.iter().map(|&i| dataset.y[i]).collect();
    let enc = encode_minmax(&y_train);
    let target: BTreeMap<usize, f64> = train_idx.iter().copied().zip(enc).collect();

    let mut params = init_params(&model, model.seed)?;
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let root = RngStream::new(cfg.seed, 0x7a41);
    let mut order = train_idx.clone();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mode = ForwardMode::train();

    for epoch in 0..cfg.epochs {
        let er = root.split(epoch as u64);
        order.shuffle(&mut er.generator(0));
        let (mut total, mut batches) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.train_batch).enumerate() {
            if chunk.len() < 2 && cfg.loss.needs_pairs() {
                continue;
            }
            let x = to_tensor(&dataset.x.select(chunk))?;
            let t: Vec<f64> = chunk.iter().map(|i| target[i]).collect();
            let mut tape = Tape::new(er.split(b as u64 + 1));
            let (_, pred) = record_forward(&mut tape, chunk.len(), &model, &mode)?;
            let mut terms = Vec::new();
            if cfg.loss.mse {
                terms.push(mse_on_tape(&mut tape, pred, &t)?);
            }
            if cfg.loss.rank {
                terms.push(pairwise_rank_on_tape(&mut tape, pred, &t, cfg.rank_margin)?);
            }
            if cfg.loss.diffkendall {
                terms.push(diffkendall_on_tape(&mut tape, pred, &t, cfg.alpha)?);
            }
            let loss = terms[1..].iter().fold(terms[0], |acc, &v| tape.add(acc, v));
            tape.forward(&(&params.tensors, [("x", x)]))
                .map_err(|e| numeric(e, epoch, b, cfg))?;
            let value = tape.value(loss).and_then(Tensor::item).unwrap_or(f64::NAN);
            if !value.is_finite() {
                return Err(numeric(
                    Error::NonFinite { op: "loss", index: loss.index() },
                    epoch,
                    b,
                    cfg,
                ));
            }
            let grads = tape.backward(loss, &Tensor::scalar(1.0))?.into_named();
            opt.step(&mut params.tensors, &grads);
            total += value;
            batches += 1;
        }
        epoch_losses.push(if batches == 0 { 0.0 } else { total / batches as f64 });
    }

    let train_row = evaluate_with(&params, dataset, SplitKind::Train, cfg.eval_batch, 0, Exec::Sequential)?;
    let val_row = evaluate_with(&params, dataset, SplitKind::Validation, cfg.eval_batch, 0, Exec::Sequential)?;
    let report = TrainReport {
        epoch_losses,
        train: train_row,
        validation: val_row,
        wall_seconds: started.elapsed().as_secs_f64(),
        config: cfg.clone(),
        model,
        seed: cfg.seed,
        optimizer: opt.describe(),
    };
    Ok((params, report))
}

/// Scores feature rows in chunks of `eval_batch`, concatenated in row order.
pub fn score_features(
    params: &MabnParams,
    x: &FeatureMatrix,
    eval_batch: usize,
    mc_samples: usize,
    exec: Exec,
) -> Result<Vec<f64>> {
    if eval_batch == 0 {
        return Err(Error::contract("eval_batch must be positive"));
    }
    let starts: Vec<usize> = (0..x.rows).step_by(eval_batch).collect();
    let rng = RngStream::new(params.seed, 0xe7a1);
    let parts = exec.map(&starts, |&s| {
        let idx: Vec<usize> = (s..(s + eval_batch).min(x.rows)).collect();
        let t = to_tensor(&x.select(&idx))?;
        predict(&t, params, mc_samples, rng.split(s as u64))
    });
    let mut out = Vec::with_capacity(x.rows);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Metrics over a whole split, in posterior-mean mode with eval batches of 50.
pub fn evaluate(params: &MabnParams, dataset: &ZcDataset, split: SplitKind) -> Result<MetricRow> {
    evaluate_with(params, dataset, split, 50, 0, Exec::Sequential)
}

pub fn evaluate_with(
    params: &MabnParams,
    dataset: &ZcDataset,
    split: SplitKind,
    eval_batch: usize,
    mc_samples: usize,
    exec: Exec,
) -> Result<MetricRow> {
    let idx = dataset.indices(split)?;
    if idx.is_empty() {
        return Err(Error::contract(format!("split `{}` is empty", split.as_str())));
    }
    let preds = score_features(params, &dataset.x.select(&idx), eval_batch, mc_samples, exec)?;
    let y: Vec<f64> = idx.iter().map(|&i| dataset.y[i]).collect();
    MetricRow::compute(split.as_str(), RankBatch::new(&preds, &y)?)
}
