//! Match/action flow tables.
//!
//! Forwarding state is modelled the way a software switch would hold it: per
//! node, a table keyed by *(ingress port, VLAN tag)* mapping to an egress
//! port plus an optional tag operation. Instances attach to their PoP node
//! through instance ports; links to neighbor nodes are link ports.
//!
//! A table never holds two actions for one key — installing a conflicting
//! entry fails — so a frame's fate is always uniquely determined by where it
//! entered and which tag it carries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{InstanceId, NodeName};

/// Where a frame enters or leaves a node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    /// The virtual port of an instance hosted on this node.
    Instance(InstanceId),
    /// The port facing a directly linked neighbor node.
    Link(NodeName),
}

impl std::fmt::Display for Port {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Port::Instance(id) => write!(f, "instance:{id}"),
            Port::Link(node) => write!(f, "link:{node}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowMatch {
    pub in_port: Port,
    /// Matched VLAN tag. Chain entries always match a concrete tag; `None`
    /// matches untagged frames.
    pub vlan: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VlanOp {
    /// Tag the frame before forwarding.
    Push(u16),
    /// Strip the tag — used on final delivery to an instance.
    Pop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowAction {
    pub out_port: Port,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vlan_op: Option<VlanOp>,
}

/// One installed rule: on `node`, frames matching `matches` are handled by
/// `action`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEntry {
    pub node: NodeName,
    pub matches: FlowMatch,
    pub action: FlowAction,
}

/// All per-node flow tables of the platform.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowTables {
    tables: BTreeMap<NodeName, BTreeMap<FlowMatch, FlowAction>>,
}

impl FlowTables {
    /// The action for a frame entering `node` as described by `matches`.
    pub fn lookup(&self, node: &NodeName, matches: &FlowMatch) -> Option<&FlowAction> {
        self.tables.get(node)?.get(matches)
    }

    /// Installs an entry. Re-installing an identical entry is a no-op;
    /// installing a *different* action for an existing key is a conflict.
    pub fn insert(&mut self, entry: FlowEntry) -> Result<()> {
        let table = self.tables.entry(entry.node.clone()).or_default();
        match table.get(&entry.matches) {
            None => {
                table.insert(entry.matches, entry.action);
                Ok(())
            }
            Some(existing) if *existing == entry.action => Ok(()),
            Some(_) => Err(Error::ChainConflict(format!(
                "node `{}` already forwards frames from {} with tag {:?} elsewhere",
                entry.node, entry.matches.in_port, entry.matches.vlan
            ))),
        }
    }

    pub fn remove(&mut self, node: &NodeName, matches: &FlowMatch) -> Option<FlowAction> {
        let table = self.tables.get_mut(node)?;
        let removed = table.remove(matches);
        if table.is_empty() {
            self.tables.remove(node);
        }
        removed
    }

    /// Every installed entry, ordered by node then match.
    pub fn entries(&self) -> impl Iterator<Item = FlowEntry> + '_ {
        self.tables.iter().flat_map(|(node, table)| {
            table.iter().map(|(matches, action)| FlowEntry {
                node: node.clone(),
                matches: matches.clone(),
                action: action.clone(),
            })
        })
    }

    pub fn len(&self) -> usize {
        self.tables.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}
