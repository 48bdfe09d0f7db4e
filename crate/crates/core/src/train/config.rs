use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mabn::{MabnConfig, ModelArch};

/// Sum of unit-weighted loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LossKind {
    pub mse: bool,
    pub rank: bool,
    pub diffkendall: bool,
}

impl LossKind {
    pub const DIFFKENDALL: LossKind = LossKind {
        mse: false,
        rank: false,
        diffkendall: true,
    };
    pub const MSE: LossKind = LossKind {
        mse: true,
        rank: false,
        diffkendall: false,
    };

    /// The seven non-empty combinations, in CLI spelling order.
    pub fn all_combinations() -> Vec<LossKind> {
        ["diffkendall", "mse", "rank", "mse+rank", "mse+diffkendall", "rank+diffkendall", "all"]
            .iter()
            .map(|s| s.parse().expect("known spelling"))
            .collect()
    }

    /// True when some term is defined only on pairs.
    pub fn needs_pairs(self) -> bool {
        self.rank || self.diffkendall
    }
}

impl Default for LossKind {
    fn default() -> Self {
        Self::DIFFKENDALL
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mse && self.rank && self.diffkendall {
            return f.write_str("all");
        }
        let parts: Vec<&str> = [(self.mse, "mse"), (self.rank, "rank"), (self.diffkendall, "diffkendall")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(LossKind {
                mse: true,
                rank: true,
                diffkendall: true,
            });
        }
        let mut k = LossKind {
            mse: false,
            rank: false,
            diffkendall: false,
        };
        for part in s.split('+') {
            let slot = match part.trim() {
                "mse" => &mut k.mse,
                "rank" => &mut k.rank,
                "diffkendall" => &mut k.diffkendall,
                other => return Err(Error::contract(format!("unknown loss term `{other}`"))),
            };
            if *slot {
                return Err(Error::contract(format!("loss term `{part}` repeated in `{s}`")));
            }
            *slot = true;
        }
        Ok(k)
    }
}

impl Serialize for LossKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LossKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The model-design arms of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignArm {
    Mlp,
    MixerOnly,
    BnOnly,
    MixerBn,
}

impl DesignArm {
    pub const ALL: [DesignArm; 4] = [DesignArm::Mlp, DesignArm::MixerOnly, DesignArm::BnOnly, DesignArm::MixerBn];

    /// `(use_mixer, use_bayes, use_mlp_baseline)`
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            DesignArm::Mlp => (false, false, true),
            DesignArm::MixerOnly => (true, false, false),
            DesignArm::BnOnly => (false, true, false),
            DesignArm::MixerBn => (true, true, false),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DesignArm::Mlp => "mlp",
            DesignArm::MixerOnly => "mixer",
            DesignArm::BnOnly => "bn",
            DesignArm::MixerBn => "mixer+bn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub train_batch: usize,
    pub eval_batch: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub loss: LossKind,
    /// Margin of the pairwise hinge term.
    pub rank_margin: f64,
    /// Drives shuffling, dropout masks and weight noise.
    pub seed: u64,
    pub use_mixer: bool,
    pub use_bayes: bool,
    pub use_mlp_baseline: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 1e-3,
            train_batch: 10,
            eval_batch: 50,
            epochs: DEFAULT_EPOCHS,
            alpha: 0.5,
            loss: LossKind::DIFFKENDALL,
            rank_margin: 0.1,
            seed: 0,
            use_mixer: true,
            use_bayes: true,
            use_mlp_baseline: false,
        }
    }
}

/// Epoch budget of the desk-scale default run.
pub const DEFAULT_EPOCHS: usize = 60;

impl TrainConfig {
    pub fn with_design(mut self, arm: DesignArm) -> Self {
        (self.use_mixer, self.use_bayes, self.use_mlp_baseline) = arm.flags();
        self
    }

    pub fn design(&self) -> Result<DesignArm> {
        let flags = (self.use_mixer, self.use_bayes, self.use_mlp_baseline);
        DesignArm::ALL
            .into_iter()
            .find(|a| a.flags() == flags)
            .ok_or_else(|| {
                Error::contract(format!(
                    "unsupported design flags use_mixer={} use_bayes={} use_mlp_baseline={}",
                    flags.0, flags.1, flags.2
                ))
            })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::contract(format!("train config: {m}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.train_batch == 0 || self.eval_batch == 0 {
            return fail("batch sizes must be positive".into());
        }
        if self.weight_decay < 0.0 || !self.alpha.is_finite() || self.alpha < 0.0 {
            return fail("weight_decay and alpha must be non-negative".into());
        }
        if self.loss.needs_pairs() && self.train_batch < 2 {
            return fail(format!("loss `{}` needs train_batch >= 2", self.loss));
        }
        self.design().map(|_| ())
    }

    /// The model config with the design flags applied.
    pub fn apply_design(&self, model: &MabnConfig) -> Result<MabnConfig> {
        let arm = self.design()?;
        let mut m = model.clone();
        let (mixer, bayes, mlp) = arm.flags();
        m.arch = if mlp { ModelArch::MlpBaseline } else { ModelArch::Mabn };
        m.bayes = bayes;
        if !mixer {
            m.mixer_depth = 0;
        } else if m.mixer_depth == 0 {
            return Err(Error::contract("use_mixer needs mixer_depth >= 1"));
        }
        Ok(m)
    }
}
