//! Layered run configuration: built-in defaults, then the preset, then the
//! TOML file, then command-line flags.

use std::path::Path;

use anyhow::{Context, Result};
use parzc::dataset::SynthBenchConfig;
use parzc::gbdt::GbdtConfig;
use parzc::mabn::MabnConfig;
use parzc::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::{Preset, TrainOpts, Usage};

/// Contents of a `--config` file. Every table is optional; `[model]` keys
/// override the chosen preset field by field.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub synth: Option<SynthBenchConfig>,
    pub model: Option<toml::Table>,
    pub train: Option<TrainConfig>,
    pub gbdt: Option<GbdtConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| parzc::Error::Io { path: path.to_path_buf(), source: e })?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// The paper-scale presets share one architecture; they differ only in the
/// benchmark they are meant for.
pub fn preset_model(preset: Preset, input_dim: usize) -> MabnConfig {
    match preset {
        Preset::Desk => MabnConfig::desk(input_dim),
        Preset::PaperNb101 | Preset::PaperNb201 | Preset::PaperNds => MabnConfig::paper_nb201(input_dim),
    }
}

/// Fully resolved model and training settings of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub model: MabnConfig,
    pub train: TrainConfig,
}

pub fn resolve(file: &FileConfig, opts: &TrainOpts, input_dim: usize) -> Result<Resolved> {
    let mut model = preset_model(opts.preset, input_dim);
    if let Some(table) = &file.model {
        if table.contains_key("input_dim") {
            return Err(Usage("[model] input_dim is fixed by the dataset layout".into()).into());
        }
        let mut merged = toml::Table::try_from(&model).context("serializing preset")?;
        merged.extend(table.clone());
        model = merged.try_into().context("in [model]")?;
    }
    let mut train = file.train.clone().unwrap_or_default();
    if let Some(loss) = opts.loss {
        train.loss = loss;
    }
    if let Some(alpha) = opts.alpha {
        train.alpha = alpha;
    }
    if let Some(epochs) = opts.epochs {
        train.epochs = epochs;
    }
    if let Some(seed) = opts.seed {
        train.seed = seed;
    }
    // one seed drives both streams unless [model] pins its own
    let model_seed_pinned = file.model.as_ref().is_some_and(|t| t.contains_key("seed"));
    if opts.seed.is_some() || !model_seed_pinned {
        model.seed = train.seed;
    }
    train.validate()?;
    Ok(Resolved { model, train })
}
