use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ad::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::netzoo::dag::{ArchDag, OpKind, Topology};
use crate::rng::RngStream;

/// Scalar objective used for the probe's backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeLoss {
    SumOfOutputs,
    /// Mean of squared outputs, i.e. squared error against an all-zero target.
    SquaredErrorToZero,
}

/// Per-node statistics gathered from one forward/backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub node_id: String,
    /// `[out_dim, in_dim]`
    pub weight: Tensor,
    pub grad: Option<Tensor>,
    /// Node output, `[batch, out_dim]`.
    pub activation: Tensor,
    pub activation_grad: Option<Tensor>,
    /// Second-order statistics are not collected.
    pub hessian: Option<Tensor>,
}

/// A DAG with initialized weights for each linear node.
#[derive(Debug, Clone)]
pub struct ExecutableNet {
    dag: ArchDag,
    topo: Topology,
    weights: BTreeMap<usize, Tensor>,
}

fn weight_name(id: &str) -> String {
    format!("w:{id}")
}

/// Builds the net and draws each linear weight from `N(0, 1/in_dim)`.
pub fn instantiate(dag: &ArchDag, init_seed: u64) -> Result<ExecutableNet> {
    let topo = dag.topology()?;
    let rng = RngStream::new(init_seed, 0x1417);
    let mut weights = BTreeMap::new();
    for (i, node) in dag.nodes.iter().enumerate() {
        if node.op.is_parametric() {
            let mut g = rng.generator(i as u64);
            let std = 1.0 / (node.in_dim as f64).sqrt();
            let data = (0..node.in_dim * node.out_dim)
                .map(|_| std * g.sample::<f64, _>(StandardNormal))
                .collect();
            weights.insert(i, Tensor::new([node.out_dim, node.in_dim], data)?);
        }
    }
    Ok(ExecutableNet {
        dag: dag.clone(),
        topo,
        weights,
    })
}

struct Recorded {
    tape: Tape,
    out: Var,
    loss: Var,
    node_out: Vec<Var>,
}

impl ExecutableNet {
    pub fn dag(&self) -> &ArchDag {
        &self.dag
    }

    pub fn input_dim(&self) -> usize {
        self.dag.nodes[self.topo.input].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.dag.nodes[self.topo.output].out_dim
    }

    pub fn weight(&self, node_id: &str) -> Option<&Tensor> {
        let i = self.dag.nodes.iter().position(|n| n.id == node_id)?;
        self.weights.get(&i)
    }

    /// Replaces the weight of linear node `node_id`; the shape must match.
    pub fn with_weight(mut self, node_id: &str, w: Tensor) -> Result<Self> {
        let i = self
            .dag
            .nodes
            .iter()
            .position(|n| n.id == node_id)
            .filter(|i| self.weights.contains_key(i))
            .ok_or_else(|| Error::contract(format!("`{node_id}` is not a linear node")))?;
        if w.shape() != self.weights[&i].shape() {
            return Err(Error::Shape {
                op: "with_weight",
                detail: format!("{node_id}: {:?} vs {:?}", w.shape(), self.weights[&i].shape()),
            });
        }
        self.weights.insert(i, w);
        Ok(self)
    }

    pub fn param_count(&self) -> usize {
        self.weights.values().map(Tensor::len).sum()
    }

    fn record(&self, loss_kind: ProbeLoss) -> Recorded {
        let mut tape = Tape::new(RngStream::new(0, 0));
        let x = tape.input("x");
        let mut node_out: Vec<Option<Var>> = vec![None; self.dag.nodes.len()];
        for &i in &self.topo.order {
            let node = &self.dag.nodes[i];
            let h = if i == self.topo.input {
                x
            } else {
                let ps = &self.topo.parents[i];
                let mut acc = node_out[ps[0]].expect("topological order");
                for &p in &ps[1..] {
                    acc = tape.add(acc, node_out[p].expect("topological order"));
                }
                acc
            };
            let y = match node.op {
                OpKind::Linear => {
                    let w = tape.input(&weight_name(&node.id));
                    let wt = tape.transpose(w);
                    tape.matmul(h, wt)
                }
                OpKind::Relu => tape.relu(h),
                OpKind::Identity | OpKind::Sum => h,
            };
            node_out[i] = Some(y);
        }
        let out = node_out[self.topo.output].expect("output evaluated");
        let loss = match loss_kind {
            ProbeLoss::SumOfOutputs => tape.sum(out),
            ProbeLoss::SquaredErrorToZero => {
                let sq = tape.mul(out, out);
                tape.mean(sq)
            }
        };
        Recorded {
            tape,
            out,
            loss,
            node_out: node_out.into_iter().map(|v| v.expect("all nodes visited")).collect(),
        }
    }

    fn bindings(&self, batch: &Tensor, weights: &BTreeMap<usize, Tensor>) -> BTreeMap<String, Tensor> {
        let mut b: BTreeMap<String, Tensor> = weights
            .iter()
            .map(|(&i, w)| (weight_name(&self.dag.nodes[i].id), w.clone()))
            .collect();
        b.insert("x".into(), batch.clone());
        b
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.rank() != 2 || batch.shape()[1] != self.input_dim() {
            return Err(Error::Shape {
                op: "probe",
                detail: format!(
                    "batch {:?} does not match input width {}",
                    batch.shape(),
                    self.input_dim()
                ),
            });
        }
        Ok(())
    }

    /// Plain forward pass, `[batch, out_dim]`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut rec = self.record(ProbeLoss::SumOfOutputs);
        rec.tape.forward(&self.bindings(batch, &self.weights))?;
        Ok(rec.tape.value(rec.out).expect("evaluated").clone())
    }

    fn run_probe(
        &self,
        batch: &Tensor,
        loss_kind: ProbeLoss,
        weights: &BTreeMap<usize, Tensor>,
    ) -> Result<BTreeMap<String, NodeStats>> {
        self.check_batch(batch)?;
        let mut rec = self.record(loss_kind);
        if let Err(e) = rec.tape.forward(&self.bindings(batch, weights)) {
            return Err(match e {
                Error::NonFinite { index, .. } => {
                    // The first node whose output var is at or after the fault.
                    let node = self
                        .topo
                        .order
                        .iter()
                        .find(|&&i| rec.node_out[i].index() >= index)
                        .map(|&i| self.dag.nodes[i].id.clone())
                        .unwrap_or_else(|| "<loss>".into());
                    Error::NumericFault {
                        node,
                        detail: "non-finite activation".into(),
                    }
                }
                other => other,
            });
        }
        let grads = rec.tape.backward(rec.loss, &Tensor::scalar(1.0))?;
        let mut stats = BTreeMap::new();
        for (&i, w) in weights {
            let id = self.dag.nodes[i].id.clone();
            let y = rec.node_out[i];
            stats.insert(
                id.clone(),
                NodeStats {
                    node_id: id.clone(),
                    weight: w.clone(),
                    grad: grads.get(&weight_name(&id)).cloned(),
                    activation: rec.tape.value(y).expect("evaluated").clone(),
                    activation_grad: grads.wrt(y).cloned(),
                    hessian: None,
                },
            );
        }
        Ok(stats)
    }

    /// One forward and one backward pass on `batch`; statistics for every
    /// linear node.
    pub fn probe(&self, batch: &Tensor, loss_kind: ProbeLoss) -> Result<BTreeMap<String, NodeStats>> {
        self.run_probe(batch, loss_kind, &self.weights)
    }

    /// Statistics for synflow scoring: weights replaced by their absolute
    /// values, a single all-ones input row and the sum of outputs as objective.
    pub fn probe_synflow(&self) -> Result<BTreeMap<String, NodeStats>> {
        let abs: BTreeMap<usize, Tensor> = self
            .weights
            .iter()
            .map(|(&i, w)| (i, w.map(f64::abs)))
            .collect();
        let ones = Tensor::full([1, self.input_dim()], 1.0);
        self.run_probe(&ones, ProbeLoss::SumOfOutputs, &abs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netzoo::dag::fixtures::{chain2, diamond};
    use crate::netzoo::dag::DagBuilder;

    #[test]
    fn single_linear_net() {
        let mut b = DagBuilder::new();
        let l = b.node(OpKind::Linear, 4, 4);
        let dag = b.finish("one", &l, &l);
        let net = instantiate(&dag, 1).unwrap();
        assert_eq!(net.param_count(), 16);
        let w = net.weight("lin0").unwrap().clone();
        let stats = net
            .probe(&Tensor::full([3, 4], 1.0), ProbeLoss::SumOfOutputs)
            .unwrap();
        let a = &stats["lin0"].activation;
        assert_eq!(a.shape(), &[3, 4]);
        for r in 0..3 {
            for o in 0..4 {
                let row_sum: f64 = w.row(o).iter().sum();
                assert!((a.data()[r * 4 + o] - row_sum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diamond_evaluates() {
        let net = instantiate(&diamond(), 3).unwrap();
        let y = net.forward(&Tensor::full([16, 3], 0.5)).unwrap();
        assert_eq!(y.shape(), &[16, 5]);
    }

    #[test]
    fn zero_batch_gives_zero_gradients() {
        let net = instantiate(&chain2(), 5).unwrap();
        let stats = net
            .probe(&Tensor::zeros([8, 4]), ProbeLoss::SquaredErrorToZero)
            .unwrap();
        for s in stats.values() {
            assert!(s.grad.as_ref().unwrap().data().iter().all(|&g| g == 0.0));
            assert!(s.hessian.is_none());
        }
    }

    #[test]
    fn wrong_feature_width_errors() {
        let net = instantiate(&chain2(), 5).unwrap();
        assert!(net.probe(&Tensor::zeros([8, 5]), ProbeLoss::SumOfOutputs).is_err());
    }

    #[test]
    fn non_finite_activation_names_node() {
        let net = instantiate(&chain2(), 5).unwrap();
        let err = net
            .probe(&Tensor::full([2, 4], f64::INFINITY), ProbeLoss::SumOfOutputs)
            .unwrap_err();
        match err {
            Error::NumericFault { node, .. } => assert!(node == "id0" || node == "lin0", "{node}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let a = instantiate(&diamond(), 11).unwrap();
        let b = instantiate(&diamond(), 11).unwrap();
        let c = instantiate(&diamond(), 12).unwrap();
        assert_eq!(a.weight("lin0"), b.weight("lin0"));
        assert_ne!(a.weight("lin0"), c.weight("lin0"));
    }
}
