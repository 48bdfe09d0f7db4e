use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Operation carried by a DAG node. Only `Linear` holds parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Linear,
    Relu,
    #[serde(alias = "skip")]
    Identity,
    #[serde(alias = "sum-join")]
    Sum,
}

impl OpKind {
    pub fn is_parametric(self) -> bool {
        self == OpKind::Linear
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagNode {
    pub id: String,
    pub op: OpKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Candidate architecture. Children of a node are visited in the order their
/// edges appear in `edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchDag {
    pub arch_id: String,
    pub nodes: Vec<DagNode>,
    pub edges: Vec<(String, String)>,
    pub input: String,
    pub output: String,
}

/// Index-based view of a validated DAG.
#[derive(Debug, Clone)]
pub(crate) struct Topology {
    pub children: Vec<Vec<usize>>,
    pub parents: Vec<Vec<usize>>,
    pub order: Vec<usize>,
    pub input: usize,
    pub output: usize,
}

impl ArchDag {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dag serializes")
    }

    pub fn node(&self, id: &str) -> Option<&DagNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn param_node_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.op.is_parametric()).count()
    }

    pub(crate) fn topology(&self) -> Result<Topology> {
        let mut index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if index.insert(n.id.as_str(), i).is_some() {
                return Err(Error::Build(format!("duplicate node id `{}`", n.id)));
            }
            if n.in_dim == 0 || n.out_dim == 0 {
                return Err(Error::Build(format!("node `{}` has a zero dimension", n.id)));
            }
            if !n.op.is_parametric() && n.in_dim != n.out_dim {
                return Err(Error::Build(format!(
                    "parameter-free node `{}` must keep its width ({} != {})",
                    n.id, n.in_dim, n.out_dim
                )));
            }
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Build(format!("unknown node `{id}`")))
        };
        let input = lookup(&self.input)?;
        let output = lookup(&self.output)?;
        let n = self.nodes.len();
        let mut children = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        for (src, dst) in &self.edges {
            let (s, d) = (lookup(src)?, lookup(dst)?);
            if self.nodes[s].out_dim != self.nodes[d].in_dim {
                return Err(Error::Build(format!(
                    "edge {src} -> {dst}: output width {} does not match input width {}",
                    self.nodes[s].out_dim, self.nodes[d].in_dim
                )));
            }
            children[s].push(d);
            parents[d].push(s);
        }
        if !parents[input].is_empty() {
            return Err(Error::Build(format!("input node `{}` has incoming edges", self.input)));
        }
        if !children[output].is_empty() {
            return Err(Error::Build(format!("output node `{}` has outgoing edges", self.output)));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if i != input && parents[i].is_empty() {
                return Err(Error::Build(format!("node `{}` has no inputs", node.id)));
            }
            if node.op != OpKind::Sum && parents[i].len() > 1 {
                return Err(Error::Build(format!(
                    "node `{}` has {} inputs but only sum nodes may join",
                    node.id,
                    parents[i].len()
                )));
            }
        }

        // Kahn's algorithm, smallest index first for a stable order.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != n {
            return Err(Error::Build(format!("arch `{}` contains a cycle", self.arch_id)));
        }

        let mut reaches_output = vec![false; n];
        reaches_output[output] = true;
        for &i in order.iter().rev() {
            if children[i].iter().any(|&c| reaches_output[c]) {
                reaches_output[i] = true;
            }
        }
        if let Some(i) = (0..n).find(|&i| !reaches_output[i]) {
            return Err(Error::Build(format!(
                "node `{}` does not reach the output",
                self.nodes[i].id
            )));
        }
        // Every node other than the input has a parent and the graph is
        // acyclic, so every node is reachable from some source; the input is
        // the only source.
        Ok(Topology {
            children,
            parents,
            order,
            input,
            output,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.topology().map(|_| ())
    }

    /// Parameter-based node ids in depth-first preorder from the input,
    /// following children in declared order. Parameter-free nodes are
    /// traversed but not emitted.
    pub fn dfs_param_order(&self) -> Result<Vec<String>> {
        let topo = self.topology()?;
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![topo.input];
        let mut out = Vec::new();
        while let Some(i) = stack.pop() {
            if visited[i] {
                continue;
            }
            visited[i] = true;
            if self.nodes[i].op.is_parametric() {
                out.push(self.nodes[i].id.clone());
            }
            for &c in topo.children[i].iter().rev() {
                if !visited[c] {
                    stack.push(c);
                }
            }
        }
        Ok(out)
    }
}

/// Reads one DAG per file, or a JSON-Lines stream of DAGs.
pub fn load_dags(path: &Path) -> Result<Vec<ArchDag>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(dag) = serde_json::from_str::<ArchDag>(&text) {
        return Ok(vec![dag]);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Small builder used by the generator and tests.
#[derive(Debug, Default)]
pub struct DagBuilder {
    nodes: Vec<DagNode>,
    edges: Vec<(String, String)>,
    counts: BTreeMap<&'static str, usize>,
}

impl DagBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, op: OpKind, in_dim: usize, out_dim: usize) -> String {
        let prefix = match op {
            OpKind::Linear => "lin",
            OpKind::Relu => "relu",
            OpKind::Identity => "id",
            OpKind::Sum => "sum",
        };
        let c = self.counts.entry(prefix).or_default();
        let id = format!("{prefix}{c}");
        *c += 1;
        self.nodes.push(DagNode {
            id: id.clone(),
            op,
            in_dim,
            out_dim,
        });
        id
    }

    pub fn edge(&mut self, src: &str, dst: &str) {
        self.edges.push((src.to_string(), dst.to_string()));
    }

    pub fn finish(self, arch_id: impl Into<String>, input: &str, output: &str) -> ArchDag {
        ArchDag {
            arch_id: arch_id.into(),
            nodes: self.nodes,
            edges: self.edges,
            input: input.to_string(),
            output: output.to_string(),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn json_round_trip_and_schema() {
        let d = diamond();
        let s = d.to_json();
        assert!(s.contains("\"op\":\"linear\""));
        assert!(s.contains("[\"id0\",\"lin0\"]"));
        assert_eq!(ArchDag::from_json(&s).unwrap(), d);
        let skip = r#"{"arch_id":"a","nodes":[{"id":"x","op":"skip","in_dim":2,"out_dim":2}],
            "edges":[],"input":"x","output":"x"}"#;
        assert_eq!(ArchDag::from_json(skip).unwrap().nodes[0].op, OpKind::Identity);
    }

    #[test]
    fn cycle_is_rejected() {
        let mut d = chain2();
        d.nodes[2].out_dim = 4;
        d.edges.push(("lin1".into(), "lin0".into()));
        assert!(matches!(d.validate(), Err(Error::Build(_))));
    }

    #[test]
    fn width_mismatch_names_the_edge() {
        let mut d = chain2();
        d.nodes[2].in_dim = 7;
        let msg = d.validate().unwrap_err().to_string();
        assert!(msg.contains("lin0 -> lin1"), "{msg}");
    }

    #[test]
    fn dangling_node_is_rejected() {
        let mut d = chain2();
        d.nodes.push(DagNode {
            id: "lost".into(),
            op: OpKind::Linear,
            in_dim: 4,
            out_dim: 4,
        });
        d.edges.push(("lin0".into(), "lost".into()));
        assert!(d.validate().is_err());
    }

    #[test]
    fn dfs_preorder_skips_parameter_free_nodes() {
        assert_eq!(chain2().dfs_param_order().unwrap(), vec!["lin0", "lin1"]);
        assert_eq!(diamond().dfs_param_order().unwrap(), vec!["lin0", "lin1"]);
    }

    #[test]
    fn dfs_ignores_storage_order_of_unrelated_edges() {
        let d = diamond();
        let mut shuffled = d.clone();
        // Move edges around while keeping the relative order of id0's children.
        shuffled.edges = vec![
            ("lin1".into(), "sum0".into()),
            ("id0".into(), "lin0".into()),
            ("relu0".into(), "sum0".into()),
            ("lin0".into(), "relu0".into()),
            ("id0".into(), "lin1".into()),
        ];
        assert_eq!(d.dfs_param_order().unwrap(), shuffled.dfs_param_order().unwrap());
    }
}
