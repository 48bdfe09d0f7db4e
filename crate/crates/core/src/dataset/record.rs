use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netzoo::ProxyName;

/// Node-wise proxy vectors of one architecture plus its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZcRecord {
    pub arch_id: String,
    pub num_nodes: usize,
    /// Ground-truth accuracy or synthetic score; `None` for unlabeled
    /// collections.
    pub accuracy: Option<f64>,
    pub proxies: BTreeMap<ProxyName, Vec<f64>>,
}

impl ZcRecord {
    pub fn validate(&self) -> Result<()> {
        for (p, v) in &self.proxies {
            if v.len() != self.num_nodes {
                return Err(Error::contract(format!(
                    "record `{}`: {p} has {} values for {} nodes",
                    self.arch_id,
                    v.len(),
                    self.num_nodes
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::contract(format!(
                    "record `{}`: {p} contains non-finite values",
                    self.arch_id
                )));
            }
        }
        if let Some(a) = self.accuracy {
            if !a.is_finite() {
                return Err(Error::contract(format!(
                    "record `{}`: accuracy is not finite",
                    self.arch_id
                )));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> Result<f64> {
        self.accuracy
            .ok_or_else(|| Error::contract(format!("record `{}` has no accuracy", self.arch_id)))
    }
}

/// Layout and provenance shared by every matrix built from a stats file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(rename = "Lmax")]
    pub lmax: usize,
    pub proxy_order: Vec<ProxyName>,
    pub seed: u64,
    pub source: String,
}

impl DatasetManifest {
    pub fn feature_dim(&self) -> usize {
        self.lmax * self.proxy_order.len()
    }
}

/// Row-major feature matrix; may have zero rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copies the selected rows, in order.
    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Which part of a split to operate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Validation,
    All,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Validation => "validation",
            SplitKind::All => "all",
        }
    }
}

/// Supervised dataset: encoded, padded features `x` and labels `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcDataset {
    pub records: Vec<ZcRecord>,
    pub manifest: DatasetManifest,
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    pub split: Option<Split>,
}

impl ZcDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn indices(&self, kind: SplitKind) -> Result<Vec<usize>> {
        match (kind, &self.split) {
            (SplitKind::All, _) => Ok((0..self.len()).collect()),
            (SplitKind::Train, Some(s)) => Ok(s.train.clone()),
            (SplitKind::Validation, Some(s)) => Ok(s.validation.clone()),
            (_, None) => Err(Error::contract("dataset has no train/validation split")),
        }
    }
}
