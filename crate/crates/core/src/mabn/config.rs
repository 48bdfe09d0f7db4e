use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
}

/// Which network family to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelArch {
    /// Projection, Bayesian input layer, segment mixers, pooling and a
    /// Bayesian output layer.
    Mabn,
    /// Plain three-layer perceptron, the ablation baseline.
    MlpBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MabnConfig {
    pub input_dim: usize,
    /// Number of segments `S`.
    pub segments: usize,
    /// Length of each segment.
    pub segment_len: usize,
    pub mixer_depth: usize,
    /// Hidden width factor of the per-segment channel path.
    pub ffn_expansion: f64,
    /// Hidden width factor of the cross-segment (token) feed-forward.
    pub token_expansion: f64,
    /// Linear/ReLU/Dropout repeats in each channel path.
    pub head_repeats: usize,
    pub dropout: f64,
    pub pooling: Pooling,
    pub arch: ModelArch,
    /// When false the two Bayesian layers become deterministic linear maps.
    pub bayes: bool,
    /// Initial value of every `rho`; the initial weight std is `softplus(rho_init)`.
    pub rho_init: f64,
    pub seed: u64,
}

impl Default for MabnConfig {
    fn default() -> Self {
        Self::desk(0)
    }
}

impl MabnConfig {
    /// Desk-scale preset.
    pub fn desk(input_dim: usize) -> Self {
        Self {
            input_dim,
            segments: 16,
            segment_len: 47,
            mixer_depth: 5,
            ffn_expansion: 4.0,
            token_expansion: 0.5,
            head_repeats: 2,
            dropout: 0.18,
            pooling: Pooling::Mean,
            arch: ModelArch::Mabn,
            bayes: true,
            rho_init: -5.0,
            seed: 0,
        }
    }

    /// Segment length taken verbatim from the published NAS-Bench setup.
    pub fn paper_nb201(input_dim: usize) -> Self {
        Self {
            segment_len: 752,
            ..Self::desk(input_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::contract(format!("model config: {m}")));
        if self.input_dim == 0 {
            return fail("input_dim must be positive");
        }
        if self.segments == 0 || self.segment_len == 0 {
            return fail("segments and segment_len must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must be in [0, 1)");
        }
        if self.head_repeats == 0 && self.mixer_depth > 0 {
            return fail("head_repeats must be >= 1");
        }
        if !(self.ffn_expansion > 0.0 && self.token_expansion > 0.0) {
            return fail("expansion factors must be positive");
        }
        Ok(())
    }

    pub fn token_hidden(&self) -> usize {
        ((self.token_expansion * self.segments as f64).ceil() as usize).max(1)
    }

    /// Widths of the channel path: `[L, H, .., H, L]` with `head_repeats`
    /// linear maps, or `[L, L]` for a single repeat.
    pub fn channel_widths(&self) -> Vec<usize> {
        let l = self.segment_len;
        let h = ((self.ffn_expansion * l as f64).round() as usize).max(1);
        let r = self.head_repeats;
        let mut w = vec![l];
        for i in 0..r {
            w.push(if i + 1 == r { l } else { h });
        }
        w
    }

    pub fn hidden_dim(&self) -> usize {
        self.segments * self.segment_len
    }
}
