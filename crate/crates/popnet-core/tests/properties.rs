//! Randomized cross-module properties.
//!
//! Every test here drives the platform through arbitrary operation sequences
//! and checks it against an *independent* oracle: limits are recomputed from
//! scratch off the ledger, frames are walked through the flow tables by a
//! separate interpreter, and shortest paths are compared with an exhaustive
//! search. None of the oracles share code with the implementation under test
//! beyond the public types.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use popnet_core::chain::{compute_path, path_cost, PathMetric, VlanOp};
use popnet_core::ids::{InstanceId, NodeName, PopName};
use popnet_core::model::{
    cpu_limit_over_provisioned, MODEL_FIXED_LIMIT, MODEL_NONE, MODEL_OVER_PROVISIONING,
    MODEL_SHARED_POOL,
};
use popnet_core::platform::DEFAULT_IMAGE;
use popnet_core::sim::{
    run_scenario, ActionKind, AllocateAction, PopSelector, ReleaseAction, Scenario, TimedAction,
};
use popnet_core::topology::{
    parse_topology, serialize_topology, EndpointDecl, LinkDecl, LinkDefaults, PopDecl,
};
use popnet_core::{
    Chain, Error, FlowMatch, GlobalConfig, ModelRegistry, PlatformState, PopLedger, Port,
    RejectReason, ResourceModelRef, ResourceRequest, Topology, TopologyDoc,
};

const ALL_MODELS: [&str; 4] = [
    MODEL_NONE,
    MODEL_SHARED_POOL,
    MODEL_FIXED_LIMIT,
    MODEL_OVER_PROVISIONING,
];

/// Per-PoP models: changes in one PoP must never reach into another.
const POP_LOCAL_MODELS: [&str; 2] = [MODEL_FIXED_LIMIT, MODEL_OVER_PROVISIONING];

fn pop_decl(name: &str, cpu_cus: u64, model: &str) -> PopDecl {
    PopDecl {
        name: PopName::new(name),
        cpu_cus,
        memory_mb: 4096,
        storage_gb: 100,
        model: ResourceModelRef::named(model),
        endpoint: None,
    }
}

fn plain_link(a: &str, b: &str) -> LinkDecl {
    LinkDecl {
        a: NodeName::new(a),
        b: NodeName::new(b),
        delay_ms: None,
        bandwidth_mbps: None,
        loss: None,
    }
}

/// PoPs in a line (pop1 – pop2 – …), all running the same model.
fn line_platform(model: &str, capacities: &[u64]) -> PlatformState {
    let pops = capacities
        .iter()
        .enumerate()
        .map(|(i, c)| pop_decl(&format!("pop{}", i + 1), *c, model))
        .collect::<Vec<_>>();
    let links = (1..capacities.len())
        .map(|i| plain_link(&format!("pop{i}"), &format!("pop{}", i + 1)))
        .collect();
    let doc = TopologyDoc {
        format_version: 1,
        defaults: LinkDefaults::default(),
        pops,
        switches: vec![],
        links,
    };
    PlatformState::new(
        Topology::build(&doc).unwrap(),
        0.5,
        &ModelRegistry::builtin(),
    )
    .unwrap()
}

/// One step of a random workload.
#[derive(Debug, Clone)]
enum Op {
    Alloc {
        pop: usize,
        cpu_cus: u64,
        demand_pct: u8,
    },
    Release {
        pick: usize,
    },
}

fn arb_ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            3 => (0usize..4, 1u64..=3, 0u8..=100).prop_map(|(pop, cpu_cus, demand_pct)| {
                Op::Alloc { pop, cpu_cus, demand_pct }
            }),
            1 => (0usize..64).prop_map(|pick| Op::Release { pick }),
        ],
        1..32,
    )
}

/// Applies one op; allocation rejections are a legal outcome and ignored.
fn apply_op(state: &mut PlatformState, pops: &[PopName], op: &Op) {
    match op {
        Op::Alloc {
            pop,
            cpu_cus,
            demand_pct,
        } => {
            state
                .allocate(
                    &pops[pop % pops.len()],
                    ResourceRequest::cpu(*cpu_cus),
                    DEFAULT_IMAGE,
                    *demand_pct as f64 / 100.0,
                )
                .expect("well-formed requests never error");
        }
        Op::Release { pick } => {
            let live: Vec<InstanceId> = state.instances().map(|i| i.id.clone()).collect();
            if !live.is_empty() {
                state.release(&live[pick % live.len()]).unwrap();
            }
        }
    }
}

/// The incremental limits the platform maintains, frozen as bit patterns.
fn fraction_bits(state: &PlatformState) -> BTreeMap<InstanceId, u64> {
    state
        .instances()
        .map(|i| (i.id.clone(), i.cpu_fraction.to_bits()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// After every operation, pricing each PoP from scratch off the ledger
    /// must reproduce the incrementally maintained limits bit for bit.
    #[test]
    fn incremental_limits_match_from_scratch_recompute(
        model in prop::sample::select(ALL_MODELS.to_vec()),
        capacities in prop::collection::vec(1u64..=4, 1..=4),
        ops in arb_ops(),
    ) {
        let mut state = line_platform(model, &capacities);
        let pops: Vec<PopName> = state.ledgers().map(|l| l.pop.clone()).collect();
        for op in &ops {
            apply_op(&mut state, &pops, op);
            for pop in &pops {
                let fresh = state.recompute_pop_limits(pop).unwrap();
                for instance in state.instances_in(pop) {
                    prop_assert_eq!(
                        fresh[&instance.id].to_bits(),
                        instance.cpu_fraction.to_bits(),
                        "drift on {} in {}", instance.id, pop
                    );
                }
            }
        }
    }

    /// The sum of enforced fractions never exceeds the CPU budget, no matter
    /// the workload or model.
    #[test]
    fn enforced_fractions_stay_within_the_budget(
        model in prop::sample::select(ALL_MODELS.to_vec()),
        capacities in prop::collection::vec(1u64..=4, 1..=4),
        ops in arb_ops(),
    ) {
        let mut state = line_platform(model, &capacities);
        let pops: Vec<PopName> = state.ledgers().map(|l| l.pop.clone()).collect();
        for op in &ops {
            apply_op(&mut state, &pops, op);
            let used = state.cpu_budget_used();
            prop_assert!(
                used <= state.config().cpu_budget * (1.0 + 1e-9),
                "budget exceeded: {used}"
            );
        }
    }

    /// Per-PoP models isolate PoPs: arbitrary churn in pop1 leaves every
    /// limit in pop2 bitwise untouched.
    #[test]
    fn pop_local_models_keep_other_pops_bitwise_stable(
        model in prop::sample::select(POP_LOCAL_MODELS.to_vec()),
        ops in arb_ops(),
    ) {
        let mut state = line_platform(model, &[2, 2]);
        let pop1 = PopName::new("pop1");
        let pop2 = PopName::new("pop2");
        for _ in 0..2 {
            state
                .allocate(&pop2, ResourceRequest::cpu(1), DEFAULT_IMAGE, 1.0)
                .unwrap();
        }
        let snapshot = fraction_bits(&state);

        for op in &ops {
            // Redirect the whole workload onto pop1.
            match op {
                Op::Alloc { cpu_cus, demand_pct, .. } => {
                    state
                        .allocate(
                            &pop1,
                            ResourceRequest::cpu(*cpu_cus),
                            DEFAULT_IMAGE,
                            *demand_pct as f64 / 100.0,
                        )
                        .unwrap();
                }
                Op::Release { pick } => {
                    let live: Vec<InstanceId> =
                        state.instances_in(&pop1).map(|i| i.id.clone()).collect();
                    if !live.is_empty() {
                        state.release(&live[pick % live.len()]).unwrap();
                    }
                }
            }
            for (id, bits) in &snapshot {
                prop_assert_eq!(
                    state.instance(id).unwrap().cpu_fraction.to_bits(),
                    *bits,
                    "pop2 instance {} was re-priced by pop1 traffic", id
                );
            }
        }
    }

    /// A rejected allocation leaves the platform exactly as it was: same
    /// stats, same ledgers, same limits, same forwarding state.
    #[test]
    fn rejections_leave_no_trace(
        capacity in 1u64..=6,
        ops in arb_ops(),
    ) {
        let mut state = line_platform(MODEL_FIXED_LIMIT, &[capacity]);
        let pops: Vec<PopName> = state.ledgers().map(|l| l.pop.clone()).collect();
        for op in &ops {
            apply_op(&mut state, &pops, op);
        }

        let stats_before = state.platform_stats();
        let fractions_before = fraction_bits(&state);

        // More units than the whole PoP declares: always a CPU rejection.
        let result = state
            .allocate(&pops[0], ResourceRequest::cpu(capacity + 1), DEFAULT_IMAGE, 1.0)
            .unwrap();
        prop_assert_eq!(result.rejection(), Some(RejectReason::CpuExhausted));

        // More memory than the PoP has: rejected after passing CPU admission.
        let request = ResourceRequest { cpu_cus: 1, memory_mb: 1 << 40, storage_gb: 0 };
        let mut state2 = line_platform(MODEL_OVER_PROVISIONING, &[capacity]);
        for op in &ops {
            apply_op(&mut state2, &pops, op);
        }
        let stats2_before = state2.platform_stats();
        let result = state2.allocate(&pops[0], request, DEFAULT_IMAGE, 1.0).unwrap();
        prop_assert_eq!(result.rejection(), Some(RejectReason::MemoryExhausted));
        prop_assert_eq!(state2.platform_stats(), stats2_before);

        // An unknown PoP is also a rejection, also traceless.
        let result = state
            .allocate(&PopName::new("ghost"), ResourceRequest::cpu(1), DEFAULT_IMAGE, 1.0)
            .unwrap();
        prop_assert_eq!(result.rejection(), Some(RejectReason::UnknownPop));

        prop_assert_eq!(state.platform_stats(), stats_before);
        prop_assert_eq!(fraction_bits(&state), fractions_before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Pure-function properties of the over-provisioning share: equal to the
    /// fixed per-unit share within capacity, non-increasing in load, linear
    /// in instance size, and bounded by the budget.
    #[test]
    fn over_provisioning_share_behaves(
        capacity in 1u64..=16,
        allocated in 1u64..=64,
        cpu_cus in 1u64..=4,
    ) {
        let config = GlobalConfig::new(0.5, 1, capacity).unwrap();
        let ledger_at = |cus: u64| {
            let mut ledger = PopLedger::new(PopName::new("pop1"), capacity, 4096, 100);
            ledger.cpu_allocated_cus = cus;
            ledger
        };

        let share = cpu_limit_over_provisioned(cpu_cus, &ledger_at(allocated), &config);

        // Within capacity the model degenerates to the fixed per-unit share.
        if allocated <= capacity {
            prop_assert_eq!(share, config.per_cu() * cpu_cus as f64);
        }
        // One more unit in the PoP never grows anyone's share.
        let denser = cpu_limit_over_provisioned(cpu_cus, &ledger_at(allocated + 1), &config);
        prop_assert!(denser <= share);
        // Shares are linear in the instance's own units — bitwise, since the
        // factor is computed once and scaled.
        let per_unit = cpu_limit_over_provisioned(1, &ledger_at(allocated), &config);
        prop_assert_eq!(share.to_bits(), (per_unit * cpu_cus as f64).to_bits());
        // The PoP's total enforcement stays within the budget.
        prop_assert!(per_unit * allocated as f64 <= config.cpu_budget * (1.0 + 1e-9));
    }
}

// ---------------------------------------------------------------------------
// Topology documents
// ---------------------------------------------------------------------------

/// Floats that render to short decimal forms and parse back exactly.
const ATTR_MENU: [f64; 6] = [0.0, 0.5, 1.0, 2.5, 10.0, 12.75];

fn arb_doc() -> impl Strategy<Value = TopologyDoc> {
    let pop = (1u64..=8, 1024u64..=8192, prop::sample::select(ALL_MODELS.to_vec()),
               prop::option::of(1024u16..60000))
        .prop_map(|(cpu_cus, memory_mb, model, port)| (cpu_cus, memory_mb, model, port));
    (
        prop::collection::vec(pop, 1..=3),
        0usize..=2,
        prop::collection::vec(
            (0usize..5, 0usize..5, prop::option::of(0usize..ATTR_MENU.len())),
            0..=4,
        ),
    )
        .prop_map(|(pop_specs, n_switches, link_specs)| {
            let pops: Vec<PopDecl> = pop_specs
                .into_iter()
                .enumerate()
                .map(|(i, (cpu_cus, memory_mb, model, port))| PopDecl {
                    name: PopName::new(format!("pop{}", i + 1)),
                    cpu_cus,
                    memory_mb,
                    storage_gb: 100,
                    model: ResourceModelRef::named(model),
                    endpoint: port.map(|port| EndpointDecl {
                        type_name: "heat-like".to_owned(),
                        port,
                        bind: "127.0.0.1".to_owned(),
                    }),
                })
                .collect();
            let switches: Vec<NodeName> = (0..n_switches)
                .map(|i| NodeName::new(format!("s{}", i + 1)))
                .collect();
            let names: Vec<NodeName> = pops
                .iter()
                .map(|p| NodeName::from(&p.name))
                .chain(switches.iter().cloned())
                .collect();
            let links = link_specs
                .into_iter()
                .map(|(a, b, delay)| LinkDecl {
                    a: names[a % names.len()].clone(),
                    b: names[b % names.len()].clone(),
                    delay_ms: delay.map(|d| ATTR_MENU[d]),
                    bandwidth_mbps: None,
                    loss: None,
                })
                .collect();
            TopologyDoc {
                format_version: 1,
                defaults: LinkDefaults::default(),
                pops,
                switches,
                links,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Serializing a document and parsing the text back reproduces the
    /// document exactly — semantic validity is irrelevant to the format.
    #[test]
    fn topology_documents_roundtrip_through_toml(doc in arb_doc()) {
        let text = serialize_topology(&doc);
        let reparsed = parse_topology(&text).expect("serializer output always parses");
        prop_assert_eq!(reparsed, doc);
    }
}

// ---------------------------------------------------------------------------
// Random connected graphs: shortest paths and service chains
// ---------------------------------------------------------------------------

const DELAY_MENU: [f64; 4] = [0.0, 1.0, 2.0, 4.5];

#[derive(Debug, Clone)]
struct GraphSpec {
    n_pops: usize,
    n_switches: usize,
    /// `parents[i]` attaches node `i + 1` to an earlier node, forming a
    /// spanning tree — the graph is connected by construction.
    parents: Vec<usize>,
    extras: Vec<(usize, usize)>,
    delay_picks: Vec<usize>,
}

fn arb_graph() -> impl Strategy<Value = GraphSpec> {
    (2usize..=4, 0usize..=3).prop_flat_map(|(n_pops, n_switches)| {
        let n = n_pops + n_switches;
        (
            prop::collection::vec(any::<prop::sample::Index>(), n - 1),
            prop::collection::vec((0usize..n, 0usize..n), 0..=4),
            prop::collection::vec(0usize..DELAY_MENU.len(), n + 3),
        )
            .prop_map(move |(parent_picks, extras, delay_picks)| GraphSpec {
                n_pops,
                n_switches,
                parents: parent_picks
                    .iter()
                    .enumerate()
                    .map(|(i, pick)| pick.index(i + 1))
                    .collect(),
                extras,
                delay_picks,
            })
    })
}

fn graph_doc(spec: &GraphSpec, model: &str) -> TopologyDoc {
    let names: Vec<NodeName> = (1..=spec.n_pops)
        .map(|i| NodeName::new(format!("pop{i}")))
        .chain((1..=spec.n_switches).map(|i| NodeName::new(format!("s{i}"))))
        .collect();

    let mut seen: BTreeSet<(NodeName, NodeName)> = BTreeSet::new();
    let mut edges: Vec<(NodeName, NodeName)> = Vec::new();
    let mut add = |a: &NodeName, b: &NodeName| {
        if a == b {
            return;
        }
        let key = (a.min(b).clone(), a.max(b).clone());
        if seen.insert(key) {
            edges.push((a.clone(), b.clone()));
        }
    };
    for (i, parent) in spec.parents.iter().enumerate() {
        add(&names[i + 1], &names[*parent]);
    }
    for (a, b) in &spec.extras {
        add(&names[a % names.len()], &names[b % names.len()]);
    }

    TopologyDoc {
        format_version: 1,
        defaults: LinkDefaults::default(),
        pops: (1..=spec.n_pops)
            .map(|i| pop_decl(&format!("pop{i}"), 2, model))
            .collect(),
        switches: names[spec.n_pops..].to_vec(),
        links: edges
            .iter()
            .enumerate()
            .map(|(i, (a, b))| LinkDecl {
                a: a.clone(),
                b: b.clone(),
                delay_ms: Some(DELAY_MENU[spec.delay_picks[i % spec.delay_picks.len()]]),
                bandwidth_mbps: None,
                loss: None,
            })
            .collect(),
    }
}

/// Exhaustive simple-path enumeration — the oracle for `compute_path`.
/// Deliberately reimplements the metric weights.
fn all_simple_paths(
    topology: &Topology,
    from: &NodeName,
    to: &NodeName,
    metric: PathMetric,
) -> Vec<(f64, Vec<NodeName>)> {
    fn recurse(
        topology: &Topology,
        to: &NodeName,
        metric: PathMetric,
        trail: &mut Vec<NodeName>,
        cost: f64,
        out: &mut Vec<(f64, Vec<NodeName>)>,
    ) {
        let here = trail.last().unwrap().clone();
        if here == *to {
            out.push((cost, trail.clone()));
            return;
        }
        let steps: Vec<(NodeName, f64)> = topology
            .neighbors(&here)
            .map(|(next, attrs)| {
                let weight = match metric {
                    PathMetric::FewestHops => 1.0,
                    PathMetric::SmallestDelay => attrs.delay_ms,
                };
                (next.clone(), weight)
            })
            .collect();
        for (next, weight) in steps {
            if trail.contains(&next) {
                continue;
            }
            trail.push(next);
            recurse(topology, to, metric, trail, cost + weight, out);
            trail.pop();
        }
    }

    let mut out = Vec::new();
    recurse(
        topology,
        to,
        metric,
        &mut vec![from.clone()],
        0.0,
        &mut out,
    );
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// `compute_path` returns a true shortest path: its cost equals the
    /// minimum over every simple path, the sequence is one of the minimal
    /// ones, and repeated calls agree.
    #[test]
    fn computed_paths_are_optimal_and_deterministic(
        spec in arb_graph(),
        src_pick in any::<prop::sample::Index>(),
        dst_pick in any::<prop::sample::Index>(),
        metric in prop::sample::select(vec![PathMetric::FewestHops, PathMetric::SmallestDelay]),
    ) {
        let doc = graph_doc(&spec, MODEL_OVER_PROVISIONING);
        let topology = Topology::build(&doc).unwrap();
        let nodes: Vec<NodeName> = topology.nodes().map(|(n, _)| n.clone()).collect();
        let src = nodes[src_pick.index(nodes.len())].clone();
        let dst = nodes[dst_pick.index(nodes.len())].clone();

        let path = compute_path(&topology, &src, &dst, metric).expect("graph is connected");
        if src == dst {
            prop_assert_eq!(path, vec![src]);
            return Ok(());
        }

        let oracle = all_simple_paths(&topology, &src, &dst, metric);
        let best = oracle
            .iter()
            .map(|(cost, _)| *cost)
            .fold(f64::INFINITY, f64::min);
        let cost = path_cost(&topology, &path, metric)
            .expect("returned paths follow declared links");
        prop_assert_eq!(cost, best, "path {:?} is not minimal", path);
        prop_assert!(
            oracle.iter().any(|(c, p)| *c == best && *p == path),
            "returned sequence is not one of the oracle's minimal paths"
        );
        prop_assert_eq!(
            compute_path(&topology, &src, &dst, metric).unwrap(),
            path,
            "repeated queries disagree"
        );
    }
}

// ---------------------------------------------------------------------------
// Chains: tag management, atomicity, and an independent frame walker
// ---------------------------------------------------------------------------

/// Pushes one tagged frame through the flow tables, recording each instance
/// it is delivered to, until the tag is popped. Panics on dead ends, loops,
/// undeclared links, or tag rewrites — none of which a chain may produce.
fn walk_frame(state: &PlatformState, chain: &Chain) -> Vec<InstanceId> {
    let tables = state.flow_tables();
    let first = state.instance(&chain.hops[0]).expect("hops are live");
    let mut node = NodeName::from(&first.pop);
    let mut in_port = Port::Instance(chain.hops[0].clone());
    let mut delivered = Vec::new();

    for _ in 0..tables.len() + chain.hops.len() + 1 {
        let matches = FlowMatch {
            in_port: in_port.clone(),
            vlan: Some(chain.vlan_tag),
        };
        let action = tables
            .lookup(&node, &matches)
            .unwrap_or_else(|| panic!("dead end at `{node}` coming from {}", matches.in_port));
        match &action.out_port {
            Port::Instance(id) => {
                delivered.push(id.clone());
                match action.vlan_op {
                    Some(VlanOp::Pop) => return delivered,
                    None => in_port = Port::Instance(id.clone()),
                    Some(VlanOp::Push(_)) => panic!("delivery must not add tags"),
                }
            }
            Port::Link(next) => {
                assert!(action.vlan_op.is_none(), "transit must not rewrite tags");
                assert!(
                    state.topology().link(&node, next).is_some(),
                    "flow entry uses undeclared link `{node}` – `{next}`"
                );
                in_port = Port::Link(node.clone());
                node = next.clone();
            }
        }
    }
    panic!("frame for chain {} never left the network", chain.id);
}

fn live_tags(state: &PlatformState) -> BTreeSet<u16> {
    state.chains().map(|c| c.vlan_tag).collect()
}

#[derive(Debug, Clone)]
enum ChainOp {
    Install { hop_picks: Vec<usize>, by_delay: bool },
    Remove { pick: usize },
}

fn arb_chain_ops() -> impl Strategy<Value = Vec<ChainOp>> {
    prop::collection::vec(
        prop_oneof![
            3 => (prop::collection::vec(0usize..16, 2..=4), any::<bool>())
                .prop_map(|(hop_picks, by_delay)| ChainOp::Install { hop_picks, by_delay }),
            1 => (0usize..16).prop_map(|pick| ChainOp::Remove { pick }),
        ],
        1..=12,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Arbitrary chain churn on a random graph: tags are unique and always
    /// the lowest free one, installation is all-or-nothing, and a frame
    /// walked through the tables by an independent interpreter visits every
    /// live chain's hops in order.
    #[test]
    fn chains_route_frames_and_install_atomically(
        spec in arb_graph(),
        per_pop in 1usize..=2,
        ops in arb_chain_ops(),
    ) {
        let doc = graph_doc(&spec, MODEL_OVER_PROVISIONING);
        let mut state = PlatformState::new(
            Topology::build(&doc).unwrap(),
            0.5,
            &ModelRegistry::builtin(),
        )
        .unwrap();

        let pops: Vec<PopName> = state.ledgers().map(|l| l.pop.clone()).collect();
        let mut instances = Vec::new();
        for pop in &pops {
            for _ in 0..per_pop {
                let result = state
                    .allocate(pop, ResourceRequest::cpu(1), DEFAULT_IMAGE, 1.0)
                    .unwrap();
                instances.push(result.accepted().expect("never rejects").0.id.clone());
            }
        }

        for op in &ops {
            match op {
                ChainOp::Install { hop_picks, by_delay } => {
                    let mut hops: Vec<InstanceId> = Vec::new();
                    for pick in hop_picks {
                        let id = instances[pick % instances.len()].clone();
                        if !hops.contains(&id) {
                            hops.push(id);
                        }
                    }
                    if hops.len() < 2 {
                        continue;
                    }
                    let metric = if *by_delay {
                        PathMetric::SmallestDelay
                    } else {
                        PathMetric::FewestHops
                    };

                    let tables_before = state.flow_tables().clone();
                    let tags_before = live_tags(&state);
                    let expected_tag = (1u16..=4094)
                        .find(|t| !tags_before.contains(t))
                        .unwrap();

                    match state.set_chain(&hops, metric) {
                        Ok(chain) => {
                            prop_assert_eq!(chain.vlan_tag, expected_tag);
                            prop_assert_eq!(&walk_frame(&state, &chain), &chain.hops[1..]);
                        }
                        Err(Error::ChainConflict(_)) => {
                            // A chain that revisits a node and diverges is
                            // unrealizable — and must leave nothing behind.
                            prop_assert_eq!(state.flow_tables(), &tables_before);
                            prop_assert_eq!(live_tags(&state), tags_before);
                        }
                        Err(other) => return Err(TestCaseError::fail(format!(
                            "unexpected install failure: {other}"
                        ))),
                    }
                }
                ChainOp::Remove { pick } => {
                    let live: Vec<_> = state.chains().map(|c| c.id.clone()).collect();
                    if !live.is_empty() {
                        state.remove_chain(&live[pick % live.len()]).unwrap();
                    }
                }
            }

            // Global invariants after every step.
            let tags = live_tags(&state);
            prop_assert_eq!(tags.len(), state.chains().count(), "duplicate VLAN tags");
            for chain in state.chains() {
                let chain = chain.clone();
                prop_assert_eq!(&walk_frame(&state, &chain), &chain.hops[1..]);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Scenario exports
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// In every export row set, each PoP's aggregate equals the sum of its
    /// instance samples at that tick — bitwise, column by column.
    #[test]
    fn aggregates_conserve_instance_samples(
        model in prop::sample::select(vec![MODEL_OVER_PROVISIONING, MODEL_NONE, MODEL_SHARED_POOL]),
        alloc_specs in prop::collection::vec((0usize..2, 0u64..=5, 1u64..=2, 25u8..=100), 1..=6),
        n_releases in 0usize..=3,
        halve_tick in any::<bool>(),
    ) {
        let n_releases = n_releases.min(alloc_specs.len().saturating_sub(1));
        let mut actions: Vec<TimedAction> = alloc_specs
            .iter()
            .map(|(pop, at_s, cpu_cus, demand_pct)| TimedAction {
                at_s: *at_s as f64,
                kind: ActionKind::Allocate(AllocateAction {
                    pop: PopName::new(format!("pop{}", pop + 1)),
                    cpu_cus: *cpu_cus,
                    memory_mb: 0,
                    storage_gb: 0,
                    image: None,
                    demand: *demand_pct as f64 / 100.0,
                }),
            })
            .collect();
        // Releases strictly after the last allocation, so somebody is always
        // there to release (these models never reject).
        for i in 0..n_releases {
            actions.push(TimedAction {
                at_s: 6.0 + i as f64,
                kind: ActionKind::Release(ReleaseAction {
                    oldest: Some(PopSelector::default()),
                    ..ReleaseAction::default()
                }),
            });
        }

        let doc = TopologyDoc {
            format_version: 1,
            defaults: LinkDefaults::default(),
            pops: vec![pop_decl("pop1", 2, model), pop_decl("pop2", 2, model)],
            switches: vec![],
            links: vec![plain_link("pop1", "pop2")],
        };
        let scenario = Scenario {
            name: "conservation".into(),
            topology: doc,
            cpu_budget: 0.5,
            phys_capacity: None,
            model_override: None,
            duration_s: 10.0,
            tick_s: if halve_tick { 0.5 } else { 1.0 },
            actions,
        };
        let series = run_scenario(&scenario, &ModelRegistry::builtin()).unwrap();

        // Accumulate instance rows in series order (the same order the tick
        // summed them in), then compare on each aggregate row.
        let mut sums: BTreeMap<(u64, PopName), (f64, f64, f64)> = BTreeMap::new();
        for sample in &series.samples {
            let key = (sample.t_s.to_bits(), sample.pop.clone());
            if sample.is_aggregate() {
                let (usage, limit, expected) =
                    sums.get(&key).copied().unwrap_or((0.0, 0.0, 0.0));
                prop_assert_eq!(sample.usage.to_bits(), usage.to_bits());
                prop_assert_eq!(sample.limit.to_bits(), limit.to_bits());
                prop_assert_eq!(sample.expected.to_bits(), expected.to_bits());
            } else {
                let entry = sums.entry(key).or_insert((0.0, 0.0, 0.0));
                entry.0 += sample.usage;
                entry.1 += sample.limit;
                entry.2 += sample.expected;
            }
        }

        // And the whole series replays to the same bytes.
        let replay = run_scenario(&scenario, &ModelRegistry::builtin()).unwrap();
        prop_assert_eq!(replay.to_csv(), series.to_csv());
    }
}
