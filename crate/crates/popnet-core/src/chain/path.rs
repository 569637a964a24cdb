//! Deterministic shortest paths over the network graph.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::NodeName;
use crate::topology::Topology;

/// What a path should minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMetric {
    /// Number of links traversed.
    FewestHops,
    /// Sum of link delays.
    SmallestDelay,
}

impl Default for PathMetric {
    fn default() -> Self {
        PathMetric::FewestHops
    }
}

impl PathMetric {
    fn weight(&self, delay_ms: f64) -> f64 {
        match self {
            PathMetric::FewestHops => 1.0,
            PathMetric::SmallestDelay => delay_ms,
        }
    }
}

/// Finite, non-negative edge cost that can live in an ordered container.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .partial_cmp(&other.0)
            .expect("validated link attributes are finite")
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest path from `src` to `dst` under `metric`, as the full node
/// sequence including both ends. `src == dst` yields the one-node path.
///
/// Deterministic by construction: among equal-cost paths the
/// lexicographically smallest node sequence wins, so repeated runs — and
/// independent reimplementations — agree exactly.
pub fn compute_path(
    topology: &Topology,
    src: &NodeName,
    dst: &NodeName,
    metric: PathMetric,
) -> Result<Vec<NodeName>> {
    for node in [src, dst] {
        if !topology.contains_node(node) {
            return Err(Error::UnknownNode(node.clone()));
        }
    }
    if src == dst {
        return Ok(vec![src.clone()]);
    }

    // Dijkstra over (cost, node sequence). The heap orders entries by cost
    // and breaks ties on the sequence itself, so the first time a node is
    // settled it is reached by its minimal (cost, path). Graphs here are
    // desk-scale; carrying full paths keeps the tie-break exact and cheap.
    let mut heap: BinaryHeap<Reverse<(Cost, Vec<NodeName>)>> = BinaryHeap::new();
    let mut settled: BTreeSet<NodeName> = BTreeSet::new();
    heap.push(Reverse((Cost(0.0), vec![src.clone()])));

    while let Some(Reverse((cost, path))) = heap.pop() {
        let node = path.last().expect("paths are never empty").clone();
        if !settled.insert(node.clone()) {
            continue;
        }
        if node == *dst {
            return Ok(path);
        }
        for (next, attrs) in topology.neighbors(&node) {
            if settled.contains(next) {
                continue;
            }
            let mut extended = path.clone();
            extended.push(next.clone());
            heap.push(Reverse((Cost(cost.0 + metric.weight(attrs.delay_ms)), extended)));
        }
    }

    Err(Error::NoPath {
        from: src.clone(),
        to: dst.clone(),
    })
}

/// Total cost of a node sequence under `metric`; `None` if some consecutive
/// pair is not linked.
pub fn path_cost(topology: &Topology, path: &[NodeName], metric: PathMetric) -> Option<f64> {
    let mut total = 0.0;
    for pair in path.windows(2) {
        let attrs = topology.link(&pair[0], &pair[1])?;
        total += metric.weight(attrs.delay_ms);
    }
    Some(total)
}
