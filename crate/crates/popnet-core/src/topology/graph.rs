//! The compiled network graph.
//!
//! Each PoP is modelled as a single big switch: one graph node that both
//! hosts the PoP's instances and forwards traffic. Switch declarations add
//! plain forwarding nodes. The graph is undirected and immutable — platform
//! semantics (frozen capacity totals, installed flow entries) rely on the
//! network not changing underneath a running emulation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{NodeName, PopName};
use crate::model::ResourceModelRef;
use crate::topology::doc::{EndpointDecl, TopologyDoc};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkAttrs {
    pub delay_ms: f64,
    pub bandwidth_mbps: f64,
    /// Frame loss probability in [0, 1].
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Pop,
    Switch,
}

/// Static facts about one PoP, lifted out of the document.
#[derive(Debug, Clone, PartialEq)]
pub struct PopInfo {
    pub name: PopName,
    pub cpu_capacity_cus: u64,
    pub mem_capacity_mb: u64,
    pub storage_capacity_gb: u64,
    pub model: ResourceModelRef,
    pub endpoint: Option<EndpointDecl>,
}

/// Validated, immutable network graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: BTreeMap<NodeName, NodeKind>,
    adjacency: BTreeMap<NodeName, BTreeMap<NodeName, LinkAttrs>>,
    pops: BTreeMap<PopName, PopInfo>,
    pop_internal_bandwidth_mbps: f64,
}

impl Topology {
    /// Compiles a validated document. Fails with the full violation list if
    /// the document does not validate against the built-in registry context —
    /// callers that use custom models or endpoint types should validate
    /// explicitly first and then build.
    pub fn build(doc: &TopologyDoc) -> Result<Self> {
        use crate::model::ModelRegistry;
        use crate::topology::doc::ValidationContext;

        let registry = ModelRegistry::builtin();
        let violations = doc.validate(&ValidationContext::new(&registry));
        if !violations.is_empty() {
            return Err(Error::TopologyInvalid(violations));
        }
        Ok(Self::build_unchecked(doc))
    }

    /// Compiles a document the caller has already validated.
    pub fn build_unchecked(doc: &TopologyDoc) -> Self {
        let mut nodes = BTreeMap::new();
        let mut adjacency: BTreeMap<NodeName, BTreeMap<NodeName, LinkAttrs>> = BTreeMap::new();
        let mut pops = BTreeMap::new();

        for pop in &doc.pops {
            let node = NodeName::from(&pop.name);
            nodes.insert(node.clone(), NodeKind::Pop);
            adjacency.entry(node).or_default();
            pops.insert(
                pop.name.clone(),
                PopInfo {
                    name: pop.name.clone(),
                    cpu_capacity_cus: pop.cpu_cus,
                    mem_capacity_mb: pop.memory_mb,
                    storage_capacity_gb: pop.storage_gb,
                    model: pop.model.clone(),
                    endpoint: pop.endpoint.clone(),
                },
            );
        }
        for switch in &doc.switches {
            nodes.insert(switch.clone(), NodeKind::Switch);
            adjacency.entry(switch.clone()).or_default();
        }
        for link in &doc.links {
            let attrs = LinkAttrs {
                delay_ms: link.delay_ms.unwrap_or(doc.defaults.delay_ms),
                bandwidth_mbps: link.bandwidth_mbps.unwrap_or(doc.defaults.bandwidth_mbps),
                loss: link.loss.unwrap_or(doc.defaults.loss),
            };
            adjacency
                .entry(link.a.clone())
                .or_default()
                .insert(link.b.clone(), attrs);
            adjacency
                .entry(link.b.clone())
                .or_default()
                .insert(link.a.clone(), attrs);
        }

        Self {
            nodes,
            adjacency,
            pops,
            pop_internal_bandwidth_mbps: doc.defaults.pop_internal_bandwidth_mbps,
        }
    }

    pub fn contains_node(&self, node: &NodeName) -> bool {
        self.nodes.contains_key(node)
    }

    pub fn node_kind(&self, node: &NodeName) -> Option<NodeKind> {
        self.nodes.get(node).copied()
    }

    /// All node names in lexicographic order.
    pub fn nodes(&self) -> impl Iterator<Item = (&NodeName, NodeKind)> {
        self.nodes.iter().map(|(name, kind)| (name, *kind))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Neighbors of `node` in lexicographic order.
    pub fn neighbors(&self, node: &NodeName) -> impl Iterator<Item = (&NodeName, &LinkAttrs)> {
        self.adjacency.get(node).into_iter().flatten()
    }

    pub fn link(&self, a: &NodeName, b: &NodeName) -> Option<&LinkAttrs> {
        self.adjacency.get(a)?.get(b)
    }

    pub fn link_count(&self) -> usize {
        self.adjacency.values().map(BTreeMap::len).sum::<usize>() / 2
    }

    /// PoPs in lexicographic name order.
    pub fn pops(&self) -> impl Iterator<Item = &PopInfo> {
        self.pops.values()
    }

    pub fn pop(&self, name: &PopName) -> Option<&PopInfo> {
        self.pops.get(name)
    }

    pub fn pop_count(&self) -> usize {
        self.pops.len()
    }

    pub fn total_cpu_capacity_cus(&self) -> u64 {
        self.pops.values().map(|p| p.cpu_capacity_cus).sum()
    }

    pub fn pop_internal_bandwidth_mbps(&self) -> f64 {
        self.pop_internal_bandwidth_mbps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::doc::parse_topology;

    fn star_doc() -> TopologyDoc {
        parse_topology(
            r#"
format_version = 1
switches = ["hub"]

[[pops]]
name = "pop1"
cpu_cus = 4

[[pops]]
name = "pop2"
cpu_cus = 2

[[pops]]
name = "pop3"
cpu_cus = 2

[[links]]
a = "pop1"
b = "hub"

[[links]]
a = "pop2"
b = "hub"

[[links]]
a = "pop3"
b = "hub"
delay_ms = 3.0
"#,
        )
        .unwrap()
    }

    #[test]
    fn builds_nodes_links_and_pop_info() {
        let topology = Topology::build(&star_doc()).unwrap();
        assert_eq!(topology.node_count(), 4);
        assert_eq!(topology.link_count(), 3);
        assert_eq!(topology.pop_count(), 3);
        assert_eq!(topology.total_cpu_capacity_cus(), 8);
        assert_eq!(
            topology.node_kind(&NodeName::new("hub")),
            Some(NodeKind::Switch)
        );
        assert_eq!(
            topology.node_kind(&NodeName::new("pop1")),
            Some(NodeKind::Pop)
        );

        // Links are symmetric and carry defaults where unspecified.
        let attrs = topology
            .link(&NodeName::new("hub"), &NodeName::new("pop1"))
            .unwrap();
        assert_eq!(attrs.delay_ms, 0.0);
        assert_eq!(attrs.bandwidth_mbps, 1000.0);
        let attrs = topology
            .link(&NodeName::new("pop3"), &NodeName::new("hub"))
            .unwrap();
        assert_eq!(attrs.delay_ms, 3.0);
        assert!(topology
            .link(&NodeName::new("pop1"), &NodeName::new("pop2"))
            .is_none());
    }

    #[test]
    fn build_rejects_invalid_documents() {
        let mut doc = star_doc();
        doc.links.clear();
        let err = Topology::build(&doc).unwrap_err();
        assert!(matches!(err, Error::TopologyInvalid(_)));
    }

    #[test]
    fn neighbor_iteration_is_lexicographic() {
        let topology = Topology::build(&star_doc()).unwrap();
        let neighbors: Vec<&NodeName> = topology
            .neighbors(&NodeName::new("hub"))
            .map(|(n, _)| n)
            .collect();
        assert_eq!(
            neighbors,
            vec![
                &NodeName::new("pop1"),
                &NodeName::new("pop2"),
                &NodeName::new("pop3")
            ]
        );
    }
}
