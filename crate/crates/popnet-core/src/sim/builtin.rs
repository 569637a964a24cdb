//! Built-in validation scenarios.
//!
//! Two workloads ship with the platform, mirroring its reference
//! measurements:
//!
//! * **experiment1** — one 4-unit PoP under a 0.5 CPU budget. A saturating
//!   1-CU instance arrives every 20 s (eight attempts), then instances are
//!   torn down oldest-first every 20 s. Under `fixed_limit_A` four instances
//!   run at a constant per-unit share and the rest are rejected; under
//!   `over_provisioning_B` all eight fit and the per-instance share shrinks
//!   stepwise past four.
//! * **experiment2** — two 2-unit PoPs. PoP2 carries a constant pair of
//!   saturating instances; the load on PoP1 is swept over
//!   k ∈ {0, 1, 2, 4, 8, 16, 32} attempted instances, one scenario per point.
//!   Per-PoP models must hold PoP2's usage exactly constant over the sweep;
//!   the platform-wide baselines must not.
//!
//! Scenario names: `experiment1_modelA`, `experiment1_modelB`,
//! `experiment2_<variant>_k<K>` with variant one of `modelA`, `modelB`,
//! `none`, `shared_pool`. The sweep family `experiment2_<variant>` runs all
//! seven points and condenses each into steady-state rows.

use serde::Serialize;

use crate::error::Result;
use crate::ids::PopName;
use crate::model::{
    ModelRegistry, MODEL_FIXED_LIMIT, MODEL_NONE, MODEL_OVER_PROVISIONING, MODEL_SHARED_POOL,
};
use crate::sim::{
    run_scenario, ActionKind, AllocateAction, PopSelector, ReleaseAction, Scenario, TimedAction,
};
use crate::topology::parse_topology;

/// PoP1 instance counts swept by experiment2.
pub const EXPERIMENT2_POINTS: [u32; 7] = [0, 1, 2, 4, 8, 16, 32];

/// Canonical scenario and sweep names, for help output.
pub fn builtin_names() -> Vec<String> {
    let mut names = vec![
        "experiment1_modelA".to_owned(),
        "experiment1_modelB".to_owned(),
    ];
    for variant in VARIANTS {
        names.push(format!("experiment2_{variant}"));
    }
    for variant in VARIANTS {
        for k in EXPERIMENT2_POINTS {
            names.push(format!("experiment2_{variant}_k{k}"));
        }
    }
    names
}

const VARIANTS: [&str; 4] = ["modelA", "modelB", "none", "shared_pool"];

fn variant_kind(variant: &str) -> Option<&'static str> {
    match variant {
        "modelA" => Some(MODEL_FIXED_LIMIT),
        "modelB" => Some(MODEL_OVER_PROVISIONING),
        "none" => Some(MODEL_NONE),
        "shared_pool" => Some(MODEL_SHARED_POOL),
        _ => None,
    }
}

fn saturating_alloc(at_s: f64, pop: &str) -> TimedAction {
    TimedAction {
        at_s,
        kind: ActionKind::Allocate(AllocateAction {
            pop: PopName::new(pop),
            cpu_cus: 1,
            memory_mb: 0,
            storage_gb: 0,
            image: None,
            demand: 1.0,
        }),
    }
}

fn release_oldest(at_s: f64, pop: &str) -> TimedAction {
    TimedAction {
        at_s,
        kind: ActionKind::Release(ReleaseAction {
            oldest: Some(PopSelector {
                pop: Some(PopName::new(pop)),
            }),
            ..ReleaseAction::default()
        }),
    }
}

/// The experiment1 ramp on one 4-unit PoP. `teardowns` matches how many
/// instances the model actually admits, so the scenario drains to empty.
fn experiment1(name: &str, model_kind: &str, teardowns: u32) -> Scenario {
    let topology = parse_topology(&format!(
        "format_version = 1\n\n\
         [[pops]]\nname = \"pop1\"\ncpu_cus = 4\n\
         model = {{ kind = \"{model_kind}\" }}\n\
         endpoint = {{ port = 8081 }}\n"
    ))
    .expect("static document");

    let mut actions = Vec::new();
    for i in 0..8 {
        actions.push(saturating_alloc(i as f64 * 20.0, "pop1"));
    }
    for i in 0..teardowns {
        actions.push(release_oldest(160.0 + i as f64 * 20.0, "pop1"));
    }

    Scenario {
        name: name.to_owned(),
        topology,
        cpu_budget: 0.5,
        phys_capacity: None,
        model_override: None,
        duration_s: 340.0,
        tick_s: 1.0,
        actions,
    }
}

/// One experiment2 sweep point: two 2-unit PoPs, PoP2 fixed at two
/// saturating instances, `k` attempted on PoP1, everything at t = 0.
fn experiment2_point(variant: &str, k: u32) -> Option<Scenario> {
    let model_kind = variant_kind(variant)?;
    let topology = parse_topology(&format!(
        "format_version = 1\n\n\
         [[pops]]\nname = \"pop1\"\ncpu_cus = 2\n\
         model = {{ kind = \"{model_kind}\" }}\n\
         endpoint = {{ port = 8081 }}\n\n\
         [[pops]]\nname = \"pop2\"\ncpu_cus = 2\n\
         model = {{ kind = \"{model_kind}\" }}\n\
         endpoint = {{ port = 8082 }}\n\n\
         [[links]]\na = \"pop1\"\nb = \"pop2\"\n"
    ))
    .expect("static document");

    let mut actions = vec![saturating_alloc(0.0, "pop2"), saturating_alloc(0.0, "pop2")];
    for _ in 0..k {
        actions.push(saturating_alloc(0.0, "pop1"));
    }

    Some(Scenario {
        name: format!("experiment2_{variant}_k{k}"),
        topology,
        cpu_budget: 0.5,
        phys_capacity: None,
        model_override: None,
        duration_s: 10.0,
        tick_s: 1.0,
        actions,
    })
}

/// Resolves a built-in scenario name.
pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    match name {
        "experiment1_modelA" => Some(experiment1(name, MODEL_FIXED_LIMIT, 4)),
        "experiment1_modelB" => Some(experiment1(name, MODEL_OVER_PROVISIONING, 8)),
        _ => {
            let rest = name.strip_prefix("experiment2_")?;
            let (variant, k) = rest.rsplit_once("_k")?;
            experiment2_point(variant, k.parse().ok()?)
        }
    }
}

/// Resolves a sweep family name (`experiment2_<variant>`) to its variant.
pub fn builtin_sweep(name: &str) -> Option<&'static str> {
    let variant = name.strip_prefix("experiment2_")?;
    VARIANTS.iter().find(|v| **v == variant).copied()
}

/// Steady-state measurement of one PoP at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Instances attempted on PoP1.
    pub k: u32,
    pub pop: PopName,
    /// Instances actually live at the end of the run.
    pub instances: usize,
    /// Mean per-instance usage at the final tick (0 when the PoP is empty).
    pub per_instance_usage: f64,
    pub aggregate_usage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub name: String,
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    /// Pinned layout: `k,pop,instances,per_instance_usage,aggregate_usage`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,pop,instances,per_instance_usage,aggregate_usage\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.k, row.pop, row.instances, row.per_instance_usage, row.aggregate_usage
            ));
        }
        out
    }
}

/// Runs every experiment2 point for `variant` and summarizes the final tick
/// of each run, one row per (k, PoP).
pub fn run_sweep(variant: &str, registry: &ModelRegistry) -> Result<SweepSummary> {
    let mut rows = Vec::new();
    for k in EXPERIMENT2_POINTS {
        let scenario = experiment2_point(variant, k).ok_or_else(|| {
            crate::error::Error::InvalidRequest(format!("unknown sweep variant `{variant}`"))
        })?;
        let series = run_scenario(&scenario, registry)?;
        let final_t = series.samples.last().map(|s| s.t_s).unwrap_or(0.0);
        for pop in ["pop1", "pop2"] {
            let usages: Vec<f64> = series
                .at(final_t)
                .filter(|s| !s.is_aggregate() && s.pop.as_str() == pop)
                .map(|s| s.usage)
                .collect();
            let aggregate = series
                .at(final_t)
                .find(|s| s.is_aggregate() && s.pop.as_str() == pop)
                .map(|s| s.usage)
                .expect("every PoP emits an aggregate row");
            rows.push(SweepRow {
                k,
                pop: PopName::new(pop),
                instances: usages.len(),
                per_instance_usage: if usages.is_empty() {
                    0.0
                } else {
                    usages.iter().sum::<f64>() / usages.len() as f64
                },
                aggregate_usage: aggregate,
            });
        }
    }
    Ok(SweepSummary {
        name: format!("experiment2_{variant}"),
        rows,
    })
}
