//! Toy executable networks and node-wise zero-cost proxies.

mod dag;
mod net;
mod proxy;

pub use dag::{load_dags, ArchDag, DagBuilder, DagNode, OpKind};
pub use net::{instantiate, ExecutableNet, NodeStats, ProbeLoss};
pub use proxy::{collect_zc_record, gaussian_probe, score_node, ProxyName, PROBE_LOSS};
