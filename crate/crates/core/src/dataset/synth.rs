//! Synthetic benchmark with a known ground truth.
//!
//! Random DAGs are instantiated and probed through [`crate::netzoo`]. The
//! label of each architecture is a hidden monotone function of its encoded
//! node-wise statistics, weighting nodes later in DFS order more heavily,
//! plus Gaussian noise.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::dataset::encode::encode_minmax;
use crate::dataset::record::ZcRecord;
use crate::error::{Error, Result};
use crate::netzoo::{collect_zc_record, ArchDag, DagBuilder, OpKind, ProxyName};
use crate::par::Exec;
use crate::rng::RngStream;

/// Hidden label function, evaluated on the min-max encoded proxy vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HiddenFn {
    /// `sum_k c_k * sum_p w_p e_k[p] / sum_p w_p` with
    /// `w_p = ((p + 1) / n)^gamma`.
    DepthWeighted {
        gamma: f64,
        coefficients: BTreeMap<ProxyName, f64>,
    },
    /// The encoded value of one proxy at one DFS position.
    SingleFeature { proxy: ProxyName, node: usize },
}

impl HiddenFn {
    pub fn default_depth_weighted() -> Self {
        HiddenFn::DepthWeighted {
            gamma: 3.0,
            coefficients: BTreeMap::from([
                (ProxyName::Fisher, 0.10),
                (ProxyName::Gradnorm, 0.20),
                (ProxyName::L2norm, 0.10),
                (ProxyName::Plain, 0.05),
                (ProxyName::Snip, 0.25),
                (ProxyName::Synflow, 0.30),
            ]),
        }
    }

    pub fn proxies(&self) -> Vec<ProxyName> {
        match self {
            HiddenFn::DepthWeighted { coefficients, .. } => coefficients.keys().copied().collect(),
            HiddenFn::SingleFeature { proxy, .. } => vec![*proxy],
        }
    }

    pub fn eval(&self, record: &ZcRecord) -> Result<f64> {
        let encoded = |p: &ProxyName| -> Result<Vec<f64>> {
            record
                .proxies
                .get(p)
                .map(|v| encode_minmax(v))
                .ok_or_else(|| Error::contract(format!("hidden function needs proxy {p}")))
        };
        match self {
            HiddenFn::DepthWeighted { gamma, coefficients } => {
                let n = record.num_nodes as f64;
                let w: Vec<f64> = (0..record.num_nodes)
                    .map(|p| ((p as f64 + 1.0) / n).powf(*gamma))
                    .collect();
                let wsum: f64 = w.iter().sum();
                let mut z = 0.0;
                for (p, c) in coefficients {
                    let e = encoded(p)?;
                    z += c * e.iter().zip(&w).map(|(e, w)| e * w).sum::<f64>() / wsum;
                }
                Ok(z)
            }
            HiddenFn::SingleFeature { proxy, node } => encoded(proxy)?
                .get(*node)
                .copied()
                .ok_or_else(|| Error::contract(format!("hidden node {node} out of range"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthBenchConfig {
    pub n_archs: usize,
    /// Inclusive range of parameter-based node counts.
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub widths: Vec<usize>,
    pub proxies: Vec<ProxyName>,
    pub hidden: HiddenFn,
    pub noise: f64,
    pub probe_batch: usize,
    pub seed: u64,
}

impl Default for SynthBenchConfig {
    fn default() -> Self {
        Self {
            n_archs: 1000,
            min_nodes: 8,
            max_nodes: 8,
            widths: vec![4, 8, 12, 16],
            proxies: ProxyName::ALL.to_vec(),
            hidden: HiddenFn::default_depth_weighted(),
            noise: 0.01,
            probe_batch: 16,
            seed: 7,
        }
    }
}

impl SynthBenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_nodes < 2 || self.max_nodes > 64 || self.min_nodes > self.max_nodes {
            return Err(Error::contract(format!(
                "node-count range {}..={} must lie within 2..=64",
                self.min_nodes, self.max_nodes
            )));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::contract("noise must be >= 0"));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::contract("widths must be non-empty and positive"));
        }
        if self.probe_batch == 0 {
            return Err(Error::contract("probe batch must be positive"));
        }
        for p in self.hidden.proxies() {
            if !self.proxies.contains(&p) {
                return Err(Error::contract(format!(
                    "hidden function uses {p}, which is not collected"
                )));
            }
        }
        if let HiddenFn::SingleFeature { node, .. } = self.hidden {
            if node >= self.min_nodes {
                return Err(Error::contract("hidden node index exceeds the smallest arch"));
            }
        }
        Ok(())
    }
}

/// Hidden ground truth of one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub arch_id: String,
    pub clean_score: f64,
    pub accuracy: f64,
    pub num_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTruth {
    pub rows: Vec<TruthRow>,
}

impl HiddenTruth {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("arch_id,clean_score,accuracy,num_nodes\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.arch_id, r.clean_score, r.accuracy, r.num_nodes).unwrap();
        }
        s
    }

    pub fn accuracy_of(&self, arch_id: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.arch_id == arch_id).map(|r| r.accuracy)
    }
}

fn pick<T: Copy>(g: &mut ChaCha8Rng, options: &[T]) -> T {
    options[g.random_range(0..options.len())]
}

/// Random DAG with exactly `n_linear` linear nodes, built from chain,
/// diamond and residual cells.
pub fn random_dag(arch_id: String, n_linear: usize, widths: &[usize], g: &mut ChaCha8Rng) -> ArchDag {
    let mut b = DagBuilder::new();
    let mut width = pick(g, widths);
    let input = b.node(OpKind::Identity, width, width);
    let mut cur = input.clone();
    let mut remaining = n_linear;
    while remaining > 0 {
        let cell = if remaining >= 2 { g.random_range(0..3) } else { g.random_range(0..2) * 2 };
        match cell {
            // chain: linear [-> relu]
            0 => {
                let w2 = pick(g, widths);
                let l = b.node(OpKind::Linear, width, w2);
                b.edge(&cur, &l);
                cur = l;
                width = w2;
                remaining -= 1;
                if g.random_bool(0.5) {
                    let r = b.node(OpKind::Relu, width, width);
                    b.edge(&cur, &r);
                    cur = r;
                }
            }
            // diamond: two linear branches joined by a sum
            1 => {
                let w2 = pick(g, widths);
                let a = b.node(OpKind::Linear, width, w2);
                let c = b.node(OpKind::Linear, width, w2);
                b.edge(&cur, &a);
                b.edge(&cur, &c);
                let ra = b.node(OpKind::Relu, w2, w2);
                b.edge(&a, &ra);
                let s = b.node(OpKind::Sum, w2, w2);
                b.edge(&ra, &s);
                b.edge(&c, &s);
                cur = s;
                width = w2;
                remaining -= 2;
            }
            // residual: linear -> relu, plus a skip, joined by a sum
            _ => {
                let l = b.node(OpKind::Linear, width, width);
                b.edge(&cur, &l);
                let r = b.node(OpKind::Relu, width, width);
                b.edge(&l, &r);
                let skip = b.node(OpKind::Identity, width, width);
                b.edge(&cur, &skip);
                let s = b.node(OpKind::Sum, width, width);
                b.edge(&r, &s);
                b.edge(&skip, &s);
                cur = s;
                remaining -= 1;
            }
        }
    }
    let out = cur.clone();
    b.finish(arch_id, &input, &out)
}

/// Output of [`synth_generate`].
#[derive(Debug, Clone)]
pub struct SynthBench {
    pub dags: Vec<ArchDag>,
    pub records: Vec<ZcRecord>,
    pub truth: HiddenTruth,
}

pub fn synth_generate(config: &SynthBenchConfig) -> Result<SynthBench> {
    synth_generate_with(config, Exec::default())
}

/// Generation is a pure function of `config`; `exec` only changes how the
/// per-architecture work is scheduled.
pub fn synth_generate_with(config: &SynthBenchConfig, exec: Exec) -> Result<SynthBench> {
    config.validate()?;
    let root = RngStream::new(config.seed, 0x5e7);
    let width = (config.n_archs.max(1) - 1).to_string().len();
    let results = exec.map_range(config.n_archs, |i| -> Result<(ArchDag, ZcRecord, TruthRow)> {
        let stream = root.split(i as u64);
        let mut g = stream.generator(0);
        let n_linear = g.random_range(config.min_nodes..=config.max_nodes);
        let dag = random_dag(format!("arch{i:0width$}"), n_linear, &config.widths, &mut g);
        let in_dim = dag.node(&dag.input).expect("input exists").in_dim;
        let mut bg = stream.generator(1);
        let batch: Vec<f64> = (0..config.probe_batch * in_dim)
            .map(|_| bg.sample(StandardNormal))
            .collect();
        let batch = Tensor::new([config.probe_batch, in_dim], batch)?;
        let mut rec = collect_zc_record(&dag, &config.proxies, &batch, stream.split(2).seed ^ i as u64)?;
        let clean = config.hidden.eval(&rec)?;
        let noise: f64 = stream.generator(3).sample(StandardNormal);
        let acc = clean + config.noise * noise;
        rec.accuracy = Some(acc);
        let truth = TruthRow {
            arch_id: rec.arch_id.clone(),
            clean_score: clean,
            accuracy: acc,
            num_nodes: rec.num_nodes,
        };
        Ok((dag, rec, truth))
    });
    let mut dags = Vec::with_capacity(config.n_archs);
    let mut records = Vec::with_capacity(config.n_archs);
    let mut rows = Vec::with_capacity(config.n_archs);
    for r in results {
        let (d, rec, t) = r?;
        dags.push(d);
        records.push(rec);
        rows.push(t);
    }
    Ok(SynthBench {
        dags,
        records,
        truth: HiddenTruth { rows },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::{spearman, RankBatch};

    fn small(n: usize) -> SynthBenchConfig {
        SynthBenchConfig {
            n_archs: n,
            min_nodes: 3,
            max_nodes: 9,
            ..Default::default()
        }
    }

    #[test]
    fn dags_are_valid_and_sized() {
        let mut g = RngStream::new(1, 1).generator(0);
        for n in 2..12 {
            let d = random_dag(format!("d{n}"), n, &[4, 8], &mut g);
            d.validate().unwrap();
            assert_eq!(d.param_node_count(), n);
            assert_eq!(d.dfs_param_order().unwrap().len(), n);
        }
    }

    #[test]
    fn generation_is_deterministic_across_modes() {
        let cfg = small(12);
        let a = synth_generate_with(&cfg, Exec::Sequential).unwrap();
        let b = synth_generate_with(&cfg, Exec::Parallel).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.truth, b.truth);
        assert!(a.records.iter().all(|r| (3..=9).contains(&r.num_nodes)));
    }

    #[test]
    fn noiseless_single_feature_preserves_ranks() {
        let cfg = SynthBenchConfig {
            n_archs: 40,
            noise: 0.0,
            hidden: HiddenFn::SingleFeature {
                proxy: ProxyName::L2norm,
                node: 5,
            },
            ..Default::default()
        };
        let bench = synth_generate(&cfg).unwrap();
        let column: Vec<f64> = bench
            .records
            .iter()
            .map(|r| encode_minmax(&r.proxies[&ProxyName::L2norm])[5])
            .collect();
        let acc: Vec<f64> = bench.records.iter().map(|r| r.accuracy.unwrap()).collect();
        let rho = spearman(RankBatch::new(&column, &acc).unwrap()).unwrap();
        assert!((rho.value - 1.0).abs() < 1e-12, "{rho:?}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = SynthBenchConfig {
            min_nodes: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthBenchConfig {
            noise: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthBenchConfig {
            proxies: vec![ProxyName::Snip],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
