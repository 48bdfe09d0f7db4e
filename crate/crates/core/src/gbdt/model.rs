use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::gbdt::tree::{Grower, Presorted, RegressionTree, SplitChoice};
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Kept for provenance; split ties are broken deterministically.
    pub seed: u64,
    pub min_samples_leaf: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_estimators: 500,
            learning_rate: 0.05,
            max_depth: 3,
            seed: 42,
            min_samples_leaf: 1,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::contract("n_estimators must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::contract(format!("learning_rate must be in (0, 1], got {}", self.learning_rate)));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::contract("min_samples_leaf must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
    /// Summed squared-error reduction per feature, unnormalised.
    pub impurity_reduction: Vec<f64>,
}

impl GbdtModel {
    /// Normalised importances: non-negative and summing to 1, or all zero
    /// when no split was ever made.
    pub fn feature_importances(&self) -> Vec<f64> {
        let total: f64 = self.impurity_reduction.iter().sum();
        if total > 0.0 {
            self.impurity_reduction.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; self.n_features]
        }
    }
}

fn check(x: &FeatureMatrix) -> Result<()> {
    if x.data.len() != x.rows * x.cols {
        return Err(Error::Shape {
            op: "gbdt",
            detail: format!("{} values for a {}x{} matrix", x.data.len(), x.rows, x.cols),
        });
    }
    if x.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("gbdt features must be finite"));
    }
    Ok(())
}

/// Least-squares boosting: every tree fits the current residuals and is
/// added with weight `learning_rate`.
pub fn gbdt_fit(x: &FeatureMatrix, y: &[f64], cfg: &GbdtConfig) -> Result<GbdtModel> {
    gbdt_fit_with(x, y, cfg, Exec::default())
}

pub fn gbdt_fit_with(x: &FeatureMatrix, y: &[f64], cfg: &GbdtConfig, exec: Exec) -> Result<GbdtModel> {
    cfg.validate()?;
    check(x)?;
    if y.len() != x.rows {
        return Err(Error::Shape {
            op: "gbdt_fit",
            detail: format!("{} targets for {} rows", y.len(), x.rows),
        });
    }
    if x.rows < 2 {
        return Err(Error::contract("gbdt_fit needs at least 2 rows"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("gbdt targets must be finite"));
    }
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let sorted = Presorted::new(x);
    let grower = Grower {
        x,
        sorted: &sorted,
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_samples_leaf,
        exec,
    };
    let mut pred = vec![base; y.len()];
    let mut imp = vec![0.0; x.cols];
    let mut trees = Vec::with_capacity(cfg.n_estimators);
    for _ in 0..cfg.n_estimators {
        let r: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let tree = grower.grow(&r, &mut imp);
        for (i, p) in pred.iter_mut().enumerate() {
            *p += cfg.learning_rate * tree.predict_row(x.row(i));
        }
        trees.push(tree);
    }
    Ok(GbdtModel {
        base,
        learning_rate: cfg.learning_rate,
        n_features: x.cols,
        trees,
        impurity_reduction: imp,
    })
}

/// Base prediction plus the learning-rate-weighted sum of all trees.
pub fn gbdt_predict(model: &GbdtModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    gbdt_predict_staged(model, x, model.trees.len())
}

/// Prediction using only the first `n_trees` trees.
pub fn gbdt_predict_staged(model: &GbdtModel, x: &FeatureMatrix, n_trees: usize) -> Result<Vec<f64>> {
    check(x)?;
    if x.cols != model.n_features {
        return Err(Error::Shape {
            op: "gbdt_predict",
            detail: format!("{} features, model was fit on {}", x.cols, model.n_features),
        });
    }
    Ok((0..x.rows)
        .map(|i| {
            let row = x.row(i);
            model.base
                + model.trees[..n_trees.min(model.trees.len())]
                    .iter()
                    .map(|t| model.learning_rate * t.predict_row(row))
                    .sum::<f64>()
        })
        .collect())
}

/// The split the fitter would choose at the root for targets `r`.
pub fn root_split(x: &FeatureMatrix, r: &[f64], min_samples_leaf: usize) -> Option<SplitChoice> {
    let sorted = Presorted::new(x);
    let grower = Grower {
        x,
        sorted: &sorted,
        max_depth: 1,
        min_leaf: min_samples_leaf,
        exec: Exec::Sequential,
    };
    let rows: Vec<usize> = (0..x.rows).collect();
    grower.best_split(r, &rows)
}
