use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::par::Exec;

/// Relative gain below which two candidate splits count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, at: usize) -> usize {
            match t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// `(feature, threshold)` of every split, in preorder.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                TreeNode::Split { feature, threshold, .. } => Some((feature, threshold)),
                TreeNode::Leaf { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Reduction of the summed squared error.
    pub gain: f64,
}

/// Column-sorted row order, computed once per fit.
pub(crate) struct Presorted {
    pub order: Vec<Vec<usize>>,
}

impl Presorted {
    pub fn new(x: &FeatureMatrix) -> Self {
        let order = (0..x.cols)
            .map(|f| {
                let mut idx: Vec<usize> = (0..x.rows).collect();
                idx.sort_by(|&a, &b| x.data[a * x.cols + f].total_cmp(&x.data[b * x.cols + f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { order }
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    // keep `lo <= m < hi` even when the two are adjacent floats
    if m >= hi { lo } else { m }
}

/// Better of two candidates: larger gain, ties (within [`TIE_TOLERANCE`])
/// resolved toward the lower feature index, then the lower threshold.
pub fn prefer(a: Option<SplitChoice>, b: Option<SplitChoice>) -> Option<SplitChoice> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let tol = TIE_TOLERANCE * a.gain.abs().max(b.gain.abs());
            if (a.gain - b.gain).abs() <= tol {
                if (b.feature, b.threshold) < (a.feature, a.threshold) {
                    Some(b)
                } else {
                    Some(a)
                }
            } else if b.gain > a.gain {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

/// Exhaustive midpoint scan of one feature over the rows flagged in `member`.
#[allow(clippy::too_many_arguments)]
fn scan_feature(
    x: &FeatureMatrix,
    f: usize,
    sorted: &[usize],
    member: &[bool],
    r: &[f64],
    n: usize,
    total: f64,
    min_leaf: usize,
) -> Option<SplitChoice> {
    let parent = total * total / n as f64;
    let (mut sum_l, mut n_l) = (0.0, 0usize);
    let mut best: Option<SplitChoice> = None;
    let mut prev: Option<usize> = None;
    for &i in sorted.iter().filter(|&&i| member[i]) {
        if let Some(p) = prev {
            let (lo, hi) = (x.data[p * x.cols + f], x.data[i * x.cols + f]);
            let n_r = n - n_l;
            if lo < hi && n_l >= min_leaf && n_r >= min_leaf {
                let sum_r = total - sum_l;
                let gain = sum_l * sum_l / n_l as f64 + sum_r * sum_r / n_r as f64 - parent;
                let c = SplitChoice {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    gain,
                };
                best = prefer(best, Some(c));
            }
        }
        sum_l += r[i];
        n_l += 1;
        prev = Some(i);
    }
    best
}

/// Sum of squared deviations from the mean over `rows`.
pub fn sse(r: &[f64], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let m = rows.iter().map(|&i| r[i]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&i| (r[i] - m).powi(2)).sum()
}

pub(crate) struct Grower<'a> {
    pub x: &'a FeatureMatrix,
    pub sorted: &'a Presorted,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub exec: Exec,
}

impl Grower<'_> {
    /// Best split of `rows` on residuals `r`, or `None` if no split reduces
    /// the squared error.
    pub fn best_split(&self, r: &[f64], rows: &[usize]) -> Option<SplitChoice> {
        let n = rows.len();
        if n < 2 * self.min_leaf.max(1) {
            return None;
        }
        let first = r[rows[0]];
        if rows.iter().all(|&i| r[i] == first) {
            return None;
        }
        // Centre within the node so the sum-of-squares gain does not cancel
        // catastrophically on near-constant residuals.
        let mean = rows.iter().map(|&i| r[i]).sum::<f64>() / n as f64;
        let mut member = vec![false; self.x.rows];
        let mut centred = vec![0.0; self.x.rows];
        for &i in rows {
            member[i] = true;
            centred[i] = r[i] - mean;
        }
        let total: f64 = rows.iter().map(|&i| centred[i]).sum();
        let per_feature = self.exec.map_range(self.x.cols, |f| {
            scan_feature(self.x, f, &self.sorted.order[f], &member, &centred, n, total, self.min_leaf)
        });
        let best = per_feature.into_iter().fold(None, prefer)?;
        let floor = TIE_TOLERANCE * sse(r, rows);
        (best.gain > floor).then_some(best)
    }

    /// Grows one tree on `r`, adding each split's gain to `importance`.
    pub fn grow(&self, r: &[f64], importance: &mut [f64]) -> RegressionTree {
        let mut tree = RegressionTree { nodes: Vec::new() };
        let all: Vec<usize> = (0..self.x.rows).collect();
        self.grow_node(&mut tree, r, all, 0, importance);
        tree
    }

    fn grow_node(&self, tree: &mut RegressionTree, r: &[f64], rows: Vec<usize>, depth: usize, imp: &mut [f64]) -> usize {
        let at = tree.nodes.len();
        let mean = rows.iter().map(|&i| r[i]).sum::<f64>() / rows.len() as f64;
        tree.nodes.push(TreeNode::Leaf { value: mean });
        if depth >= self.max_depth {
            return at;
        }
        let Some(s) = self.best_split(r, &rows) else {
            return at;
        };
        let (l, rr): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x.data[i * self.x.cols + s.feature] <= s.threshold);
        imp[s.feature] += s.gain;
        let left = self.grow_node(tree, r, l, depth + 1, imp);
        let right = self.grow_node(tree, r, rr, depth + 1, imp);
        tree.nodes[at] = TreeNode::Split {
            feature: s.feature,
            threshold: s.threshold,
            left,
            right,
        };
        at
    }
}
