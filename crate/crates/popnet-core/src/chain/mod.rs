//! Service chains: VLAN-tagged forwarding paths through the switch graph.
//!
//! A chain strings two or more live instances together in order. Installing
//! one picks the lowest free VLAN tag, routes every consecutive instance pair
//! across the graph under the requested metric, and materializes the result
//! as flow entries on the traversed nodes. Because every entry matches the
//! chain's own tag, any number of chains — even over the same instances and
//! links — coexist without interfering; frames are assumed to enter the first
//! PoP already tagged, and the tag is stripped on final delivery.
//!
//! Installation is atomic: if any entry would conflict with forwarding state
//! already installed (possible when a chain revisits a PoP and then diverges)
//! nothing is modified.

mod flow;
mod path;

pub use flow::{FlowAction, FlowEntry, FlowMatch, FlowTables, Port, VlanOp};
pub use path::{compute_path, path_cost, PathMetric};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ChainId, InstanceId, NodeName};
use crate::platform::PlatformState;

pub const VLAN_MIN: u16 = 1;
pub const VLAN_MAX: u16 = 4094;

/// An installed service chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub id: ChainId,
    /// VLAN tag identifying this chain's frames; unique among installed
    /// chains and returned to the pool on removal.
    pub vlan_tag: u16,
    /// The instances, in traversal order.
    pub hops: Vec<InstanceId>,
    /// Node path for each consecutive hop pair. A single-node path means
    /// both instances share a PoP.
    pub segments: Vec<Vec<NodeName>>,
    pub metric: PathMetric,
    /// The flow entries this chain installed.
    pub entries: Vec<FlowEntry>,
}

/// Predicted behaviour of a payload pushed through a chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficReport {
    pub chain: ChainId,
    /// Links traversed end to end (PoP-internal handoffs count zero).
    pub hop_count: usize,
    pub end_to_end_delay_ms: f64,
    pub bottleneck_bandwidth_mbps: f64,
    /// Probability that a frame survives every traversed link.
    pub delivery_probability: f64,
    pub payload_mbits: f64,
    /// Delay plus serialization of the payload at the bottleneck.
    pub transfer_time_ms: f64,
}

impl PlatformState {
    /// Installs a chain over `hops` (at least two distinct live instances).
    ///
    /// Each consecutive pair is routed independently under `metric`; the
    /// resulting flow entries all match the chain's freshly assigned VLAN
    /// tag. Either every entry is installed or — on conflict or exhausted tag
    /// space — none are.
    pub fn set_chain(&mut self, hops: &[InstanceId], metric: PathMetric) -> Result<Chain> {
        if hops.len() < 2 {
            return Err(Error::InvalidRequest(
                "a chain needs at least two instances".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for hop in hops {
            if !seen.insert(hop) {
                return Err(Error::InvalidRequest(format!(
                    "a chain may not visit instance `{hop}` twice"
                )));
            }
            if self.instance(hop).is_none() {
                return Err(Error::UnknownInstance(hop.clone()));
            }
        }

        let vlan_tag = (VLAN_MIN..=VLAN_MAX)
            .find(|tag| !self.vlans_in_use.contains(tag))
            .ok_or(Error::VlanExhausted)?;

        let mut segments = Vec::with_capacity(hops.len() - 1);
        for pair in hops.windows(2) {
            let from = NodeName::from(&self.instance(&pair[0]).expect("checked live").pop);
            let to = NodeName::from(&self.instance(&pair[1]).expect("checked live").pop);
            segments.push(compute_path(self.topology(), &from, &to, metric)?);
        }

        let mut entries: Vec<FlowEntry> = Vec::new();
        for (k, pair) in hops.windows(2).enumerate() {
            let from = &pair[0];
            let to = &pair[1];
            let nodes = &segments[k];
            // Delivery to the chain's last instance strips the tag.
            let delivery_op = (k == hops.len() - 2).then_some(VlanOp::Pop);

            if nodes.len() == 1 {
                // Both instances sit on the same PoP: one local entry.
                entries.push(FlowEntry {
                    node: nodes[0].clone(),
                    matches: FlowMatch {
                        in_port: Port::Instance(from.clone()),
                        vlan: Some(vlan_tag),
                    },
                    action: FlowAction {
                        out_port: Port::Instance(to.clone()),
                        vlan_op: delivery_op,
                    },
                });
                continue;
            }

            // Source PoP: instance port onto the first link.
            entries.push(FlowEntry {
                node: nodes[0].clone(),
                matches: FlowMatch {
                    in_port: Port::Instance(from.clone()),
                    vlan: Some(vlan_tag),
                },
                action: FlowAction {
                    out_port: Port::Link(nodes[1].clone()),
                    vlan_op: None,
                },
            });
            // Transit nodes: link in, link out.
            for i in 1..nodes.len() - 1 {
                entries.push(FlowEntry {
                    node: nodes[i].clone(),
                    matches: FlowMatch {
                        in_port: Port::Link(nodes[i - 1].clone()),
                        vlan: Some(vlan_tag),
                    },
                    action: FlowAction {
                        out_port: Port::Link(nodes[i + 1].clone()),
                        vlan_op: None,
                    },
                });
            }
            // Destination PoP: off the last link into the instance port.
            entries.push(FlowEntry {
                node: nodes[nodes.len() - 1].clone(),
                matches: FlowMatch {
                    in_port: Port::Link(nodes[nodes.len() - 2].clone()),
                    vlan: Some(vlan_tag),
                },
                action: FlowAction {
                    out_port: Port::Instance(to.clone()),
                    vlan_op: delivery_op,
                },
            });
        }

        // A chain that reuses a (node, port, tag) key with the same action
        // (e.g. crossing the same switch twice in the same direction) is
        // fine; keep one copy of the entry.
        let mut deduped: Vec<FlowEntry> = Vec::with_capacity(entries.len());
        for entry in entries {
            if !deduped.contains(&entry) {
                deduped.push(entry);
            }
        }

        // All-or-nothing install: stage on a copy, swap on success.
        let mut staged = self.flow_tables.clone();
        for entry in &deduped {
            staged.insert(entry.clone())?;
        }
        self.flow_tables = staged;

        let chain = Chain {
            id: self.mint_chain_id(),
            vlan_tag,
            hops: hops.to_vec(),
            segments,
            metric,
            entries: deduped,
        };
        self.vlans_in_use.insert(vlan_tag);
        self.chains.insert(chain.id.clone(), chain.clone());
        Ok(chain)
    }

    /// Uninstalls a chain, removing its flow entries and returning its VLAN
    /// tag to the pool.
    pub fn remove_chain(&mut self, id: &ChainId) -> Result<Chain> {
        let chain = self
            .chains
            .remove(id)
            .ok_or_else(|| Error::UnknownChain(id.clone()))?;
        for entry in &chain.entries {
            self.flow_tables.remove(&entry.node, &entry.matches);
        }
        self.vlans_in_use.remove(&chain.vlan_tag);
        Ok(chain)
    }

    /// Predicts delay, bottleneck bandwidth, delivery probability and
    /// transfer time for `payload_mbits` pushed through the chain.
    pub fn simulate_traffic(&self, id: &ChainId, payload_mbits: f64) -> Result<TrafficReport> {
        if !(payload_mbits >= 0.0 && payload_mbits.is_finite()) {
            return Err(Error::InvalidRequest(format!(
                "payload must be finite and non-negative, got {payload_mbits}"
            )));
        }
        let chain = self
            .chains
            .get(id)
            .ok_or_else(|| Error::UnknownChain(id.clone()))?;

        let mut hop_count = 0usize;
        let mut delay_ms = 0.0;
        let mut bottleneck = f64::INFINITY;
        let mut delivery = 1.0;
        for segment in &chain.segments {
            if segment.len() == 1 {
                // PoP-internal handoff: no link, only the internal fabric.
                bottleneck = bottleneck.min(self.topology().pop_internal_bandwidth_mbps());
                continue;
            }
            for pair in segment.windows(2) {
                let attrs = self
                    .topology()
                    .link(&pair[0], &pair[1])
                    .expect("chain segments follow topology links");
                hop_count += 1;
                delay_ms += attrs.delay_ms;
                bottleneck = bottleneck.min(attrs.bandwidth_mbps);
                delivery *= 1.0 - attrs.loss;
            }
        }

        let transfer_time_ms = delay_ms + payload_mbits / bottleneck * 1000.0;
        Ok(TrafficReport {
            chain: chain.id.clone(),
            hop_count,
            end_to_end_delay_ms: delay_ms,
            bottleneck_bandwidth_mbps: bottleneck,
            delivery_probability: delivery,
            payload_mbits,
            transfer_time_ms,
        })
    }
}
