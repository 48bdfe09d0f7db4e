//! Ranking and regression objectives.
//!
//! Each loss has a tape form (differentiable in the predictions) and a plain
//! `f64` form used for reporting and as a test cross-check.

use crate::ad::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rank::metrics::RankBatch;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smoothed sign: `sigmoid(alpha * delta) - sigmoid(-alpha * delta)`.
pub fn sigma_alpha(delta: f64, alpha: f64) -> f64 {
    sigmoid(alpha * delta) - sigmoid(-alpha * delta)
}

fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

fn pairwise(v: &[f64]) -> impl Iterator<Item = f64> + '_ {
    (0..v.len()).flat_map(move |i| (i + 1..v.len()).map(move |j| v[i] - v[j]))
}

/// Negated smoothed Kendall tau over the unordered pairs of the batch.
pub fn diffkendall_loss(batch: RankBatch<'_>, alpha: f64) -> Result<f64> {
    batch.require_pairs("diffkendall_loss")?;
    let total: f64 = pairwise(batch.predictions)
        .zip(pairwise(batch.targets))
        .map(|(dx, dy)| sigma_alpha(dx, alpha) * sigma_alpha(dy, alpha))
        .sum();
    Ok(-total / pair_count(batch.len()) as f64)
}

/// Tape form of [`diffkendall_loss`]; `predictions` must evaluate to a
/// vector with one entry per target.
pub fn diffkendall_on_tape(tape: &mut Tape, predictions: Var, targets: &[f64], alpha: f64) -> Result<Var> {
    if targets.len() < 2 {
        return Err(Error::contract("diffkendall_loss needs at least 2 items"));
    }
    let sy: Vec<f64> = pairwise(targets).map(|d| sigma_alpha(d, alpha)).collect();
    let d = tape.pairwise_diff(predictions);
    let a = tape.scale(d, alpha);
    let pos = tape.sigmoid(a);
    let neg_a = tape.scale(a, -1.0);
    let neg = tape.sigmoid(neg_a);
    let sx = tape.sub(pos, neg);
    let sy = tape.constant(Tensor::from_vec(sy));
    let prod = tape.mul(sx, sy);
    let total = tape.sum(prod);
    Ok(tape.scale(total, -1.0 / pair_count(targets.len()) as f64))
}

/// Mean squared residual.
pub fn mse_loss(batch: RankBatch<'_>) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::contract("mse_loss needs at least 1 item"));
    }
    let sse: f64 = batch
        .predictions
        .iter()
        .zip(batch.targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sse / batch.len() as f64)
}

pub fn mse_on_tape(tape: &mut Tape, predictions: Var, targets: &[f64]) -> Result<Var> {
    if targets.is_empty() {
        return Err(Error::contract("mse_loss needs at least 1 item"));
    }
    let t = tape.constant(Tensor::from_vec(targets.to_vec()));
    let r = tape.sub(predictions, t);
    let sq = tape.mul(r, r);
    Ok(tape.mean(sq))
}

/// Hinge loss over ordered pairs with `target_i > target_j`:
/// mean of `max(0, margin - (pred_i - pred_j))`. Zero when all targets tie.
pub fn pairwise_rank_loss(batch: RankBatch<'_>, margin: f64) -> Result<f64> {
    batch.require_pairs("pairwise_rank_loss")?;
    let (p, t) = (batch.predictions, batch.targets);
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..p.len() {
        for j in 0..p.len() {
            if t[i] > t[j] {
                total += (margin - (p[i] - p[j])).max(0.0);
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

pub fn pairwise_rank_on_tape(
    tape: &mut Tape,
    predictions: Var,
    targets: &[f64],
    margin: f64,
) -> Result<Var> {
    if targets.len() < 2 {
        return Err(Error::contract("pairwise_rank_loss needs at least 2 items"));
    }
    // Unordered pair (i, j) with t_i > t_j contributes relu(margin - d_ij);
    // with t_i < t_j it is the ordered pair (j, i): relu(margin + d_ij).
    let mut neg_sign = Vec::new();
    let mut mask = Vec::new();
    for dy in pairwise(targets) {
        let s = if dy > 0.0 {
            1.0
        } else if dy < 0.0 {
            -1.0
        } else {
            0.0
        };
        neg_sign.push(-s);
        mask.push(s * s);
    }
    let count: f64 = mask.iter().sum();
    let d = tape.pairwise_diff(predictions);
    if count == 0.0 {
        let z = tape.scale(d, 0.0);
        return Ok(tape.sum(z));
    }
    let s = tape.constant(Tensor::from_vec(neg_sign));
    let m = tape.constant(Tensor::from_vec(mask));
    let sd = tape.mul(d, s);
    let shifted = tape.add_scalar(sd, margin);
    let hinge = tape.relu(shifted);
    let masked = tape.mul(hinge, m);
    let total = tape.sum(masked);
    Ok(tape.scale(total, 1.0 / count))
}
