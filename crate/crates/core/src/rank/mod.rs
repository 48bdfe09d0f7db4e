//! Rank-correlation metrics and ranking losses.

mod loss;
mod metrics;

pub use loss::{
    diffkendall_loss, diffkendall_on_tape, mse_loss, mse_on_tape, pairwise_rank_loss,
    pairwise_rank_on_tape, sigma_alpha,
};
pub use metrics::{
    average_ranks, kendall_tau, metrics_csv, pearson, spearman, spearman_at_topk, Corr, MetricRow,
    RankBatch,
};
