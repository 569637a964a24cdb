//! The declarative topology document.
//!
//! Topologies are written in TOML: a list of PoPs (each with CPU/memory/
//! storage capacity, a resource model and an optional management endpoint),
//! a list of plain switches, and point-to-point links between any of those
//! nodes. Link attributes fall back to document-level defaults.
//!
//! Parsing and validation are separate steps on purpose: `parse_topology`
//! only rejects text that is not a well-formed document, while
//! [`TopologyDoc::validate`] collects *all* semantic problems — duplicate
//! names, dangling link endpoints, out-of-range attributes, port clashes,
//! unknown model or endpoint kinds, a disconnected graph — so a user can fix
//! a broken file in one round trip.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{NodeName, PopName};
use crate::model::{ModelRegistry, ResourceModelRef, MODEL_NONE, MODEL_SHARED_POOL};

pub const TOPOLOGY_FORMAT_VERSION: u32 = 1;

/// Endpoint kind assumed when a PoP declares a port but no type.
pub const DEFAULT_ENDPOINT_TYPE: &str = "heat-like";

const DEFAULT_MEM_CAPACITY_MB: u64 = 4096;
const DEFAULT_STORAGE_CAPACITY_GB: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "is_default_defaults")]
    pub defaults: LinkDefaults,
    pub pops: Vec<PopDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub switches: Vec<NodeName>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkDecl>,
}

fn is_default_defaults(defaults: &LinkDefaults) -> bool {
    *defaults == LinkDefaults::default()
}

/// Fallback link attributes, applied wherever a link omits a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkDefaults {
    pub delay_ms: f64,
    pub bandwidth_mbps: f64,
    pub loss: f64,
    /// Bandwidth assumed between two instances inside the same PoP, where no
    /// declared link is traversed.
    pub pop_internal_bandwidth_mbps: f64,
}

impl Default for LinkDefaults {
    fn default() -> Self {
        Self {
            delay_ms: 0.0,
            bandwidth_mbps: 1000.0,
            loss: 0.0,
            pop_internal_bandwidth_mbps: 10_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopDecl {
    pub name: PopName,
    /// CPU capacity in compute units (at least 1).
    pub cpu_cus: u64,
    #[serde(default = "default_mem_capacity")]
    pub memory_mb: u64,
    #[serde(default = "default_storage_capacity")]
    pub storage_gb: u64,
    #[serde(default)]
    pub model: ResourceModelRef,
    /// Management endpoint. PoPs without one can only be driven through the
    /// library API; bringing the platform up as a service requires every PoP
    /// to declare an endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointDecl>,
}

fn default_mem_capacity() -> u64 {
    DEFAULT_MEM_CAPACITY_MB
}

fn default_storage_capacity() -> u64 {
    DEFAULT_STORAGE_CAPACITY_GB
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointDecl {
    #[serde(rename = "type", default = "default_endpoint_type")]
    pub type_name: String,
    /// TCP port to listen on. Port 0 requests an ephemeral port and is
    /// exempt from the uniqueness rule.
    pub port: u16,
    #[serde(default = "default_bind")]
    pub bind: String,
}

fn default_endpoint_type() -> String {
    DEFAULT_ENDPOINT_TYPE.to_owned()
}

fn default_bind() -> String {
    "127.0.0.1".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDecl {
    pub a: NodeName,
    pub b: NodeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_mbps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

/// Parses a TOML topology document. Only syntax and the format version are
/// checked here; call [`TopologyDoc::validate`] for semantic problems.
pub fn parse_topology(text: &str) -> Result<TopologyDoc> {
    let doc: TopologyDoc = toml::from_str(text).map_err(|e| Error::TopologyParse(e.to_string()))?;
    if doc.format_version != TOPOLOGY_FORMAT_VERSION {
        return Err(Error::TopologyParse(format!(
            "unsupported format_version {} (this build reads version {})",
            doc.format_version, TOPOLOGY_FORMAT_VERSION
        )));
    }
    Ok(doc)
}

/// Serializes a document back to TOML. `parse_topology(&serialize_topology(d))`
/// reproduces `d` exactly.
pub fn serialize_topology(doc: &TopologyDoc) -> String {
    toml::to_string_pretty(doc).expect("topology documents always serialize")
}

/// Everything validation needs besides the document itself: which resource
/// models and endpoint types exist in this build.
#[derive(Debug)]
pub struct ValidationContext<'a> {
    pub models: &'a ModelRegistry,
    pub endpoint_types: BTreeSet<String>,
}

impl<'a> ValidationContext<'a> {
    pub fn new(models: &'a ModelRegistry) -> Self {
        Self {
            models,
            endpoint_types: BTreeSet::from([DEFAULT_ENDPOINT_TYPE.to_owned()]),
        }
    }

    pub fn with_endpoint_types<I, S>(mut self, types: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.endpoint_types = types.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NoPops,
    DuplicateNodeName,
    BadCapacity,
    UnknownModelKind,
    MixedGlobalModel,
    UnknownEndpointType,
    DuplicatePort,
    UnknownLinkEndpoint,
    SelfLoop,
    DuplicateLink,
    BadLinkAttribute,
    NotConnected,
}

/// One semantic problem found in a topology document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    fn new(kind: ViolationKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl TopologyDoc {
    /// Collects every semantic violation in the document. An empty result
    /// means the document can be compiled with [`Topology::build`].
    ///
    /// [`Topology::build`]: crate::topology::Topology::build
    pub fn validate(&self, ctx: &ValidationContext<'_>) -> Vec<Violation> {
        let mut violations = Vec::new();

        if self.pops.is_empty() {
            violations.push(Violation::new(
                ViolationKind::NoPops,
                "a topology needs at least one PoP",
            ));
        }

        // Node names: PoPs and switches share one namespace.
        let mut names: BTreeSet<&str> = BTreeSet::new();
        for name in self
            .pops
            .iter()
            .map(|p| p.name.as_str())
            .chain(self.switches.iter().map(|s| s.as_str()))
        {
            if !names.insert(name) {
                violations.push(Violation::new(
                    ViolationKind::DuplicateNodeName,
                    format!("node name `{name}` is declared more than once"),
                ));
            }
        }

        let mut global_kinds: BTreeSet<&str> = BTreeSet::new();
        let mut ports: BTreeMap<u16, &str> = BTreeMap::new();
        for pop in &self.pops {
            if pop.cpu_cus == 0 {
                violations.push(Violation::new(
                    ViolationKind::BadCapacity,
                    format!("PoP `{}` must declare at least one compute unit", pop.name),
                ));
            }
            if !ctx.models.contains(&pop.model.kind) {
                violations.push(Violation::new(
                    ViolationKind::UnknownModelKind,
                    format!(
                        "PoP `{}` references unknown resource model `{}`",
                        pop.name, pop.model.kind
                    ),
                ));
            }
            if pop.model.kind == MODEL_NONE || pop.model.kind == MODEL_SHARED_POOL {
                global_kinds.insert(pop.model.kind.as_str());
            } else {
                global_kinds.insert("");
            }
            if let Some(endpoint) = &pop.endpoint {
                if !ctx.endpoint_types.contains(&endpoint.type_name) {
                    violations.push(Violation::new(
                        ViolationKind::UnknownEndpointType,
                        format!(
                            "PoP `{}` references unknown endpoint type `{}`",
                            pop.name, endpoint.type_name
                        ),
                    ));
                }
                if endpoint.port != 0 {
                    if let Some(other) = ports.insert(endpoint.port, pop.name.as_str()) {
                        violations.push(Violation::new(
                            ViolationKind::DuplicatePort,
                            format!(
                                "PoPs `{other}` and `{}` both bind port {}",
                                pop.name, endpoint.port
                            ),
                        ));
                    }
                }
            }
        }

        // The platform-wide baselines only make sense when every PoP uses
        // them: mixing `none` or `shared_pool` with per-PoP models would give
        // some instances an equal share of resources other PoPs believe they
        // control exclusively.
        if global_kinds.len() > 1 && global_kinds.iter().any(|k| !k.is_empty()) {
            violations.push(Violation::new(
                ViolationKind::MixedGlobalModel,
                "`none` and `shared_pool` are platform-wide models and must be \
                 configured on every PoP or none",
            ));
        }

        let mut seen_links: BTreeSet<(&str, &str)> = BTreeSet::new();
        for link in &self.links {
            for end in [&link.a, &link.b] {
                if !names.contains(end.as_str()) {
                    violations.push(Violation::new(
                        ViolationKind::UnknownLinkEndpoint,
                        format!("link references undeclared node `{end}`"),
                    ));
                }
            }
            if link.a == link.b {
                violations.push(Violation::new(
                    ViolationKind::SelfLoop,
                    format!("link from `{}` to itself is not allowed", link.a),
                ));
            } else {
                let key = if link.a.as_str() <= link.b.as_str() {
                    (link.a.as_str(), link.b.as_str())
                } else {
                    (link.b.as_str(), link.a.as_str())
                };
                if !seen_links.insert(key) {
                    violations.push(Violation::new(
                        ViolationKind::DuplicateLink,
                        format!("link between `{}` and `{}` is declared twice", key.0, key.1),
                    ));
                }
            }

            let delay = link.delay_ms.unwrap_or(self.defaults.delay_ms);
            if !(delay >= 0.0 && delay.is_finite()) {
                violations.push(Violation::new(
                    ViolationKind::BadLinkAttribute,
                    format!(
                        "link `{}`–`{}`: delay must be finite and non-negative, got {delay}",
                        link.a, link.b
                    ),
                ));
            }
            let bandwidth = link.bandwidth_mbps.unwrap_or(self.defaults.bandwidth_mbps);
            if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                violations.push(Violation::new(
                    ViolationKind::BadLinkAttribute,
                    format!(
                        "link `{}`–`{}`: bandwidth must be finite and positive, got {bandwidth}",
                        link.a, link.b
                    ),
                ));
            }
            let loss = link.loss.unwrap_or(self.defaults.loss);
            if !(0.0..=1.0).contains(&loss) {
                violations.push(Violation::new(
                    ViolationKind::BadLinkAttribute,
                    format!(
                        "link `{}`–`{}`: loss must lie in [0, 1], got {loss}",
                        link.a, link.b
                    ),
                ));
            }
        }

        if !self.pops.is_empty() && !self.is_connected() {
            violations.push(Violation::new(
                ViolationKind::NotConnected,
                "the topology graph is not connected",
            ));
        }

        violations
    }

    /// Breadth-first reachability over the declared nodes and links.
    fn is_connected(&self) -> bool {
        let nodes: BTreeSet<&str> = self
            .pops
            .iter()
            .map(|p| p.name.as_str())
            .chain(self.switches.iter().map(|s| s.as_str()))
            .collect();
        let Some(&start) = nodes.iter().next() else {
            return true;
        };
        let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for link in &self.links {
            adjacency.entry(link.a.as_str()).or_default().push(link.b.as_str());
            adjacency.entry(link.b.as_str()).or_default().push(link.a.as_str());
        }
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            for &next in adjacency.get(node).into_iter().flatten() {
                if nodes.contains(next) && seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        seen.len() == nodes.len()
    }
}
