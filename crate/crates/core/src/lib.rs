//! Parametric zero-cost proxies.
//!
//! Node-wise zero-cost statistics are collected from small executable
//! networks ([`netzoo`]), encoded into a supervised dataset ([`dataset`]),
//! and fed to a mixer predictor with Bayesian linear layers ([`mabn`])
//! trained with a differentiable Kendall objective ([`rank`], [`train`]).
//! [`gbdt`] provides boosted regression trees for node-importance analysis.

pub mod ad;
pub mod dataset;
pub mod error;
pub mod gbdt;
pub mod mabn;
pub mod netzoo;
pub mod par;
pub mod rank;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
