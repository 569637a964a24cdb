//! Shared fixtures for the criterion benches.

use popnet_core::model::{ModelRegistry, MODEL_OVER_PROVISIONING};
use popnet_core::topology::{parse_topology, Topology, TopologyDoc};
use popnet_core::PlatformState;

/// A ring of `n` PoPs (4 CUs each) with one cross link per PoP pair distance
/// n/2, giving the path search something to choose between.
pub fn ring_doc(n: usize) -> TopologyDoc {
    let mut text = String::from("format_version = 1\n");
    for i in 0..n {
        text.push_str(&format!(
            "\n[[pops]]\nname = \"pop{i:02}\"\ncpu_cus = 4\nmodel = {{ kind = \"{MODEL_OVER_PROVISIONING}\" }}\n"
        ));
    }
    for i in 0..n {
        text.push_str(&format!(
            "\n[[links]]\na = \"pop{i:02}\"\nb = \"pop{:02}\"\ndelay_ms = {}.0\n",
            (i + 1) % n,
            1 + (i % 3)
        ));
    }
    // One chord to create equal-cost alternatives.
    if n >= 4 {
        text.push_str(&format!(
            "\n[[links]]\na = \"pop00\"\nb = \"pop{:02}\"\ndelay_ms = 2.0\n",
            n / 2
        ));
    }
    parse_topology(&text).expect("generated document is well-formed")
}

pub fn ring_platform(n: usize) -> PlatformState {
    let topology = Topology::build(&ring_doc(n)).expect("generated document validates");
    PlatformState::new(topology, 0.5, &ModelRegistry::builtin()).expect("valid platform")
}
