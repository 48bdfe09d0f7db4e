use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, ZcDataset, ZcRecord};
use crate::error::{Error, Result};
use crate::mabn::MabnParams;
use crate::par::Exec;
use crate::train::fit::score_features;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub rank: usize,
    pub arch_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub hits: Vec<SearchHit>,
    /// Time spent scoring, excluding encoding and sorting.
    pub scoring_seconds: f64,
}

impl SearchResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,arch_id,score\n");
        for h in &self.hits {
            out.push_str(&format!("{},{},{}\n", h.rank, h.arch_id, h.score));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub top_k: usize,
    pub eval_batch: usize,
    pub mc_samples: usize,
    pub exec: Exec,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            top_k: 10,
            eval_batch: 50,
            mc_samples: 0,
            exec: Exec::Parallel,
        }
    }
}

/// Scores every candidate and returns the `top_k` best, highest score
/// first, ties broken by `arch_id`.
pub fn search(
    params: &MabnParams,
    layout: &DatasetManifest,
    candidates: &[ZcRecord],
    opts: SearchOptions,
) -> Result<SearchResult> {
    if opts.top_k == 0 {
        return Err(Error::contract("top_k must be >= 1"));
    }
    if layout.feature_dim() != params.config.input_dim {
        return Err(Error::contract(format!(
            "layout has {} features, model expects {}",
            layout.feature_dim(),
            params.config.input_dim
        )));
    }
    let x = ZcDataset::encode_with(layout, candidates)?;
    let started = Instant::now();
    let scores = score_features(params, &x, opts.eval_batch, opts.mc_samples, opts.exec)?;
    let scoring_seconds = started.elapsed().as_secs_f64();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| candidates[a].arch_id.cmp(&candidates[b].arch_id))
    });
    let hits = order
        .into_iter()
        .take(opts.top_k)
        .enumerate()
        .map(|(r, i)| SearchHit {
            rank: r + 1,
            arch_id: candidates[i].arch_id.clone(),
            score: scores[i],
        })
        .collect();
    Ok(SearchResult { hits, scoring_seconds })
}
