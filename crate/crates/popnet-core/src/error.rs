//! Crate-wide error type.
//!
//! Note the split between errors and *rejections*: running out of CPU, memory
//! or storage capacity is an expected outcome of an admission decision and is
//! reported as [`crate::model::RejectReason`] inside a successful result, not
//! through this enum. `Error` covers contract violations (bad arguments,
//! unknown identifiers, malformed documents) and genuine failures.

use crate::ids::{ChainId, InstanceId, NodeName, PopName, StackId};
use crate::topology::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("unknown PoP `{0}`")]
    UnknownPop(PopName),

    #[error("unknown instance `{0}`")]
    UnknownInstance(InstanceId),

    #[error("unknown chain `{0}`")]
    UnknownChain(ChainId),

    #[error("unknown stack `{0}`")]
    UnknownStack(StackId),

    #[error("unknown node `{0}`")]
    UnknownNode(NodeName),

    #[error("no path between `{from}` and `{to}`")]
    NoPath { from: NodeName, to: NodeName },

    #[error("all VLAN tags are in use")]
    VlanExhausted,

    #[error("chain is not realizable: {0}")]
    ChainConflict(String),

    #[error("`{0}` is already registered")]
    DuplicateRegistration(String),

    #[error("unknown resource model `{0}`")]
    UnknownModel(String),

    #[error("topology parse error: {0}")]
    TopologyParse(String),

    #[error("invalid topology:\n{}", format_violations(.0))]
    TopologyInvalid(Vec<Violation>),

    #[error("scenario parse error: {0}")]
    ScenarioParse(String),

    #[error("scenario error at t={at_s}s: {message}")]
    Scenario { at_s: f64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;
