use serde::{Deserialize, Serialize};

use crate::dataset::ZcDataset;
use crate::error::{Error, Result};
use crate::mabn::MabnConfig;
use crate::par::Exec;
use crate::train::config::{DesignArm, LossKind, TrainConfig};
use crate::train::fit::train;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationArm {
    pub name: String,
    pub design: DesignArm,
    pub loss: LossKind,
}

impl AblationArm {
    pub fn new(design: DesignArm, loss: LossKind) -> Self {
        Self {
            name: format!("{}/{}", design.as_str(), loss),
            design,
            loss,
        }
    }
}

/// The four model-design arms, each trained with DiffKendall.
pub fn design_arms() -> Vec<AblationArm> {
    DesignArm::ALL
        .into_iter()
        .map(|d| AblationArm::new(d, LossKind::DIFFKENDALL))
        .collect()
}

/// The full model under each of the seven loss combinations.
pub fn loss_arms() -> Vec<AblationArm> {
    LossKind::all_combinations()
        .into_iter()
        .map(|l| AblationArm::new(DesignArm::MixerBn, l))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub kendall: f64,
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: AblationArm,
    pub runs: Vec<SeedRun>,
    /// `seed: message` for every run that failed.
    pub failures: Vec<String>,
    pub kd_mean: f64,
    pub kd_std: f64,
    pub sp_mean: f64,
    pub sp_std: f64,
}

/// Mean and sample standard deviation; the deviation of one value is 0.
fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Trains every arm under every seed (used for both the model and the
/// training stream) and aggregates validation Kendall/Spearman. A failing
/// run is recorded on its arm without stopping the others.
pub fn ablation_suite(
    dataset: &ZcDataset,
    model: &MabnConfig,
    base: &TrainConfig,
    arms: &[AblationArm],
    seeds: &[u64],
    exec: Exec,
) -> Result<Vec<ArmSummary>> {
    if arms.is_empty() || seeds.is_empty() {
        return Err(Error::contract("ablation needs at least one arm and one seed"));
    }
    let jobs: Vec<(usize, u64)> = (0..arms.len())
        .flat_map(|a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results = exec.map(&jobs, |&(a, seed)| {
        let arm = &arms[a];
        let cfg = TrainConfig {
            loss: arm.loss,
            seed,
            ..base.clone()
        }
        .with_design(arm.design);
        let m = MabnConfig { seed, ..model.clone() };
        train(dataset, &m, &cfg).map(|(_, r)| SeedRun {
            seed,
            kendall: r.validation.kendall,
            spearman: r.validation.spearman,
        })
    });
    let mut out: Vec<ArmSummary> = arms
        .iter()
        .map(|arm| ArmSummary {
            arm: arm.clone(),
            runs: Vec::new(),
            failures: Vec::new(),
            kd_mean: f64::NAN,
            kd_std: f64::NAN,
            sp_mean: f64::NAN,
            sp_std: f64::NAN,
        })
        .collect();
    for (&(a, seed), r) in jobs.iter().zip(results) {
        match r {
            Ok(run) => out[a].runs.push(run),
            Err(e) => out[a].failures.push(format!("{seed}: {e}")),
        }
    }
    for s in &mut out {
        let kd: Vec<f64> = s.runs.iter().map(|r| r.kendall).collect();
        let sp: Vec<f64> = s.runs.iter().map(|r| r.spearman).collect();
        (s.kd_mean, s.kd_std) = mean_std(&kd);
        (s.sp_mean, s.sp_std) = mean_std(&sp);
    }
    Ok(out)
}

pub fn ablation_csv(rows: &[ArmSummary]) -> String {
    let mut out = String::from("arm,design,loss,seeds,kd_mean,kd_std,sp_mean,sp_std,failures\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.arm.name,
            r.arm.design.as_str(),
            r.arm.loss,
            r.runs.len(),
            r.kd_mean,
            r.kd_std,
            r.sp_mean,
            r.sp_std,
            r.failures.len()
        ));
    }
    out
}
