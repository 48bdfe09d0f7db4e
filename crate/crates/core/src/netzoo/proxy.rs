use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::dataset::ZcRecord;
use crate::error::{Error, Result};
use crate::netzoo::dag::ArchDag;
use crate::netzoo::net::{instantiate, NodeStats, ProbeLoss};
use crate::rng::RngStream;

/// Node-wise zero-cost proxies. Variants are declared alphabetically, so the
/// derived `Ord` is the canonical feature-block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyName {
    Fisher,
    Gradnorm,
    L2norm,
    Plain,
    Snip,
    Synflow,
}

impl ProxyName {
    pub const ALL: [ProxyName; 6] = [
        ProxyName::Fisher,
        ProxyName::Gradnorm,
        ProxyName::L2norm,
        ProxyName::Plain,
        ProxyName::Snip,
        ProxyName::Synflow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProxyName::Fisher => "fisher",
            ProxyName::Gradnorm => "gradnorm",
            ProxyName::L2norm => "l2norm",
            ProxyName::Plain => "plain",
            ProxyName::Snip => "snip",
            ProxyName::Synflow => "synflow",
        }
    }
}

impl fmt::Display for ProxyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProxyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProxyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::contract(format!("unknown proxy `{s}`")))
    }
}

fn need<'a>(t: &'a Option<Tensor>, proxy: ProxyName, node: &str, what: &str) -> Result<&'a Tensor> {
    t.as_ref().ok_or_else(|| {
        Error::contract(format!("{proxy} needs the {what} of node `{node}`, which is missing"))
    })
}

fn l2(t: &Tensor) -> f64 {
    t.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scores one node.
///
/// * `l2norm`: `||W||_2`
/// * `gradnorm`: `||G||_2`
/// * `snip`: `sum |W * G|`
/// * `plain`: `sum W * G`
/// * `fisher`: `sum (A * dL/dA)^2` over the node's activations
/// * `synflow`: `sum |W| * G`, expecting statistics from
///   [`ExecutableNet::probe_synflow`](crate::netzoo::ExecutableNet::probe_synflow)
pub fn score_node(proxy: ProxyName, stats: &NodeStats) -> Result<f64> {
    let id = stats.node_id.as_str();
    let w = stats.weight.data();
    let score = match proxy {
        ProxyName::L2norm => l2(&stats.weight),
        ProxyName::Gradnorm => l2(need(&stats.grad, proxy, id, "weight gradient")?),
        ProxyName::Snip => {
            let g = need(&stats.grad, proxy, id, "weight gradient")?.data();
            w.iter().zip(g).map(|(w, g)| (w * g).abs()).sum()
        }
        ProxyName::Plain => {
            let g = need(&stats.grad, proxy, id, "weight gradient")?.data();
            w.iter().zip(g).map(|(w, g)| w * g).sum()
        }
        ProxyName::Synflow => {
            let g = need(&stats.grad, proxy, id, "weight gradient")?.data();
            w.iter().zip(g).map(|(w, g)| w.abs() * g).sum()
        }
        ProxyName::Fisher => {
            let ga = need(&stats.activation_grad, proxy, id, "activation gradient")?.data();
            stats
                .activation
                .data()
                .iter()
                .zip(ga)
                .map(|(a, g)| (a * g) * (a * g))
                .sum()
        }
    };
    if !score.is_finite() {
        return Err(Error::NumericFault {
            node: id.to_string(),
            detail: format!("{proxy} score is not finite"),
        });
    }
    Ok(score)
}

/// Loss used for the gradient-based proxies on unlabeled probe batches.
pub const PROBE_LOSS: ProbeLoss = ProbeLoss::SquaredErrorToZero;

/// `rows x dag-input-width` probe batch of standard normal draws.
pub fn gaussian_probe(dag: &ArchDag, rows: usize, rng: RngStream) -> Result<Tensor> {
    let input = dag
        .node(&dag.input)
        .ok_or_else(|| Error::contract(format!("arch `{}`: unknown input node `{}`", dag.arch_id, dag.input)))?;
    let mut g = rng.generator(0);
    let data = (0..rows * input.in_dim).map(|_| g.sample(StandardNormal)).collect();
    Tensor::new([rows, input.in_dim], data)
}

/// Instantiates `dag` with `seed`, probes it once with `batch` and scores
/// every parameter-based node in DFS order for each requested proxy.
/// The returned record has no accuracy label.
pub fn collect_zc_record(
    dag: &ArchDag,
    proxies: &[ProxyName],
    batch: &Tensor,
    seed: u64,
) -> Result<ZcRecord> {
    let order = dag.dfs_param_order()?;
    if order.is_empty() {
        return Err(Error::contract(format!(
            "arch `{}` has no parameter-based node",
            dag.arch_id
        )));
    }
    let net = instantiate(dag, seed)?;
    let needs_probe = proxies.iter().any(|p| *p != ProxyName::Synflow);
    let stats = if needs_probe {
        Some(net.probe(batch, PROBE_LOSS)?)
    } else {
        None
    };
    let synflow = if proxies.contains(&ProxyName::Synflow) {
        Some(net.probe_synflow()?)
    } else {
        None
    };

    let mut vectors = BTreeMap::new();
    for &proxy in proxies {
        let source = if proxy == ProxyName::Synflow {
            synflow.as_ref()
        } else {
            stats.as_ref()
        }
        .expect("probed above");
        let v = order
            .iter()
            .map(|id| score_node(proxy, &source[id]))
            .collect::<Result<Vec<_>>>()?;
        vectors.insert(proxy, v);
    }
    Ok(ZcRecord {
        arch_id: dag.arch_id.clone(),
        num_nodes: order.len(),
        accuracy: None,
        proxies: vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netzoo::dag::fixtures::{chain2, diamond};

    fn stats(w: Vec<f64>, g: Option<Vec<f64>>) -> NodeStats {
        let n = w.len();
        NodeStats {
            node_id: "n".into(),
            weight: Tensor::new([1, n], w).unwrap(),
            grad: g.map(|g| Tensor::new([1, n], g).unwrap()),
            activation: Tensor::zeros([1, 1]),
            activation_grad: None,
            hessian: None,
        }
    }

    #[test]
    fn hand_scores() {
        assert_eq!(score_node(ProxyName::L2norm, &stats(vec![3.0, 4.0], None)).unwrap(), 5.0);
        let s = stats(vec![-2.0, 3.0], Some(vec![1.0, 1.0]));
        assert_eq!(score_node(ProxyName::Snip, &s).unwrap(), 5.0);
        assert_eq!(score_node(ProxyName::Plain, &s).unwrap(), 1.0);
        let z = stats(vec![1.0, 2.0], Some(vec![0.0, 0.0]));
        assert_eq!(score_node(ProxyName::Gradnorm, &z).unwrap(), 0.0);
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let s = stats(vec![1.0], None);
        assert!(matches!(score_node(ProxyName::Snip, &s), Err(Error::Contract(_))));
        assert!(matches!(score_node(ProxyName::Fisher, &s), Err(Error::Contract(_))));
    }

    #[test]
    fn names_round_trip() {
        for p in ProxyName::ALL {
            assert_eq!(p.as_str().parse::<ProxyName>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{p}\""));
        }
        assert!("grasp".parse::<ProxyName>().is_err());
        let mut sorted = ProxyName::ALL;
        sorted.sort_by_key(|p| p.as_str());
        assert_eq!(sorted, ProxyName::ALL);
    }

    #[test]
    fn chain_l2norm_in_chain_order() {
        let dag = chain2();
        let batch = Tensor::full([16, 4], 0.3);
        let rec = collect_zc_record(&dag, &[ProxyName::L2norm], &batch, 9).unwrap();
        let net = instantiate(&dag, 9).unwrap();
        let want: Vec<f64> = ["lin0", "lin1"].iter().map(|id| l2(net.weight(id).unwrap())).collect();
        assert_eq!(rec.proxies[&ProxyName::L2norm], want);
        assert_eq!(rec.num_nodes, 2);
    }

    #[test]
    fn empty_proxy_list_is_valid() {
        let rec = collect_zc_record(&diamond(), &[], &Tensor::zeros([4, 3]), 1).unwrap();
        assert!(rec.proxies.is_empty());
        assert_eq!(rec.num_nodes, 2);
    }

    #[test]
    fn synflow_positive_on_positive_chain() {
        let dag = chain2();
        let rec = collect_zc_record(&dag, &[ProxyName::Synflow], &Tensor::zeros([2, 4]), 4).unwrap();
        assert!(rec.proxies[&ProxyName::Synflow].iter().all(|&s| s > 0.0));
    }

    #[test]
    fn record_lengths_agree_across_proxies() {
        let batch = Tensor::full([16, 3], 0.7);
        let rec = collect_zc_record(&diamond(), &ProxyName::ALL, &batch, 2).unwrap();
        for v in rec.proxies.values() {
            assert_eq!(v.len(), rec.num_nodes);
        }
    }
}
