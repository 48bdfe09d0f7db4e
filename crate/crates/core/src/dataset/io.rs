use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::dataset::record::{DatasetManifest, Split, ZcDataset, ZcRecord};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Shuffles indices under `seed` and assigns the first
/// `round(train_fraction * n)` to training. Both sides keep at least one item.
pub fn split(mut dataset: ZcDataset, train_fraction: f64, seed: u64) -> Result<ZcDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::contract(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::contract(format!("cannot split {n} records")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut RngStream::new(seed, 0x5917).generator(0));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let validation = idx.split_off(n_train);
    dataset.split = Some(Split {
        train: idx,
        validation,
    });
    Ok(dataset)
}

/// Serializes records as JSON Lines. Floats are written in shortest
/// round-trip form, so loading restores them bit for bit.
pub fn stats_to_string(records: &[ZcRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").unwrap();
    }
    out
}

pub fn stats_from_str(text: &str) -> Result<Vec<ZcRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ZcRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn save_stats(path: &Path, records: &[ZcRecord]) -> Result<()> {
    std::fs::write(path, stats_to_string(records)).map_err(|e| Error::io(path, e))
}

pub fn load_stats(path: &Path) -> Result<Vec<ZcRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    stats_from_str(&text)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })
}
