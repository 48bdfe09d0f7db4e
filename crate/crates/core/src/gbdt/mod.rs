//! Gradient-boosted regression trees and node-wise importance.

mod importance;
mod model;
mod tree;

pub use importance::{node_importance_report, ImportanceReport, ImportanceRow};
pub use model::{gbdt_fit, gbdt_fit_with, gbdt_predict, gbdt_predict_staged, root_split, GbdtConfig, GbdtModel};
pub use tree::{prefer, sse, RegressionTree, SplitChoice, TreeNode, TIE_TOLERANCE};
