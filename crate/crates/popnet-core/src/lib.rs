//! Desk-scale emulation of a multi-PoP NFV infrastructure.
//!
//! A *platform* is built from a declarative topology of points of presence
//! (PoPs) and interconnecting switches. Each PoP exposes an IaaS-style
//! management surface through which compute instances are allocated and
//! released, while a pluggable *resource model* decides how much CPU time an
//! accepted instance may consume. Instances across PoPs can be wired into
//! *service chains*: VLAN-tagged forwarding paths installed as match/action
//! flow entries on the switch graph.
//!
//! The crate is organised around a single mutable [`PlatformState`]:
//!
//! * [`topology`] — parsing, validation and the immutable network graph,
//! * [`model`] — CPU limit computation and the model registry,
//! * [`platform`] — instance lifecycle and per-PoP accounting,
//! * [`chain`] — path selection, flow tables and traffic estimates,
//! * [`stack`] — template-driven, atomically created instance groups,
//! * [`sim`] — a deterministic discrete-time workload simulator.
//!
//! Everything here is synchronous and deterministic: map iteration orders are
//! stable, identifiers are drawn from monotonic counters, and repeated runs of
//! the same scenario produce byte-identical exports.

pub mod chain;
pub mod config;
pub mod error;
pub mod ids;
pub mod instance;
pub mod ledger;
pub mod model;
pub mod platform;
pub mod sim;
pub mod stack;
pub mod topology;

pub use chain::{Chain, FlowEntry, FlowMatch, FlowTables, PathMetric, Port, TrafficReport, VlanOp};
pub use config::GlobalConfig;
pub use error::{Error, Result};
pub use ids::{ChainId, InstanceId, NodeName, PopName, StackId};
pub use instance::{ComputeInstance, ResourceRequest};
pub use ledger::PopLedger;
pub use model::{
    AllocationOutcome, AllocationResult, ModelRegistry, RejectReason, ResourceModel,
    ResourceModelRef,
};
pub use platform::{PlatformState, PlatformStats};
pub use sim::{Scenario, UsageSample, UsageSeries};
pub use stack::{StackOutcome, StackRecord, StackTemplate};
pub use topology::{Topology, TopologyDoc, Violation};
