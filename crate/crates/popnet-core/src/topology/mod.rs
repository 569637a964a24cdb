//! Network topologies: the declarative TOML document format and the
//! immutable graph a validated document is compiled into.

mod doc;
mod graph;

pub use doc::{
    parse_topology, serialize_topology, EndpointDecl, LinkDecl, LinkDefaults, PopDecl,
    TopologyDoc, ValidationContext, Violation, ViolationKind, DEFAULT_ENDPOINT_TYPE,
    TOPOLOGY_FORMAT_VERSION,
};
pub use graph::{LinkAttrs, NodeKind, PopInfo, Topology};
