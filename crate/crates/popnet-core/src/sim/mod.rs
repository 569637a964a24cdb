//! Deterministic discrete-time workload simulation.
//!
//! A [`Scenario`] bundles a topology, a CPU budget, and a timed action list
//! (allocate / release). [`run_scenario`] replays it on a fresh platform
//! under a virtual clock: actions take effect at tick boundaries, every tick
//! samples each live instance's usage (`min(demand, limit)`), and the result
//! is a [`UsageSeries`] that always exports to byte-identical CSV for the
//! same scenario.
//!
//! Virtual time is the only clock here. Wall-clock pacing is a concern of
//! interactive front ends, which simply call [`PlatformState::tick`] on a
//! timer; the numbers do not depend on when ticks happen, only on how many.

pub mod builtin;
mod export;

pub use export::POP_AGGREGATE_ID;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{InstanceId, PopName};
use crate::instance::ResourceRequest;
use crate::model::{
    AllocationResult, LimitScope, ModelRegistry, RejectReason, ResourceModelRef,
};
use crate::platform::{PlatformState, UsagePoint, DEFAULT_IMAGE};
use crate::topology::{parse_topology, Topology, TopologyDoc, ValidationContext};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// One usage measurement: an instance (or PoP aggregate) at one tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsageSample {
    pub t_s: f64,
    /// Instance id, or [`POP_AGGREGATE_ID`] for per-PoP aggregate rows.
    pub instance: InstanceId,
    pub pop: PopName,
    /// Measured CPU usage: demand clipped to the binding limit.
    pub usage: f64,
    /// The limit binding the instance at this tick (momentary equal share
    /// under the unlimited baseline).
    pub limit: f64,
    /// The same limit derived from scratch off the ledger — a drift detector
    /// for the incrementally maintained value.
    pub expected: f64,
}

impl UsageSample {
    pub fn is_aggregate(&self) -> bool {
        self.instance.as_str() == POP_AGGREGATE_ID
    }
}

/// Something that happened while replaying a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ScenarioEvent {
    Allocated {
        at_s: f64,
        instance: InstanceId,
        pop: PopName,
        cpu_fraction: f64,
    },
    Rejected {
        at_s: f64,
        pop: PopName,
        reason: RejectReason,
    },
    Released {
        at_s: f64,
        instance: InstanceId,
        pop: PopName,
    },
}

/// Everything a scenario run produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsageSeries {
    pub scenario: String,
    pub tick_s: f64,
    pub duration_s: f64,
    pub samples: Vec<UsageSample>,
    pub events: Vec<ScenarioEvent>,
}

impl UsageSeries {
    pub fn accepted_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, ScenarioEvent::Allocated { .. }))
            .count()
    }

    pub fn rejected_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, ScenarioEvent::Rejected { .. }))
            .count()
    }

    /// Instance samples (no aggregates) for `instance`, in time order.
    pub fn samples_for<'a>(&'a self, instance: &'a str) -> impl Iterator<Item = &'a UsageSample> {
        self.samples
            .iter()
            .filter(move |s| s.instance.as_str() == instance)
    }

    /// Aggregate samples for `pop`, in time order.
    pub fn aggregates_for<'a>(&'a self, pop: &'a str) -> impl Iterator<Item = &'a UsageSample> {
        self.samples
            .iter()
            .filter(move |s| s.is_aggregate() && s.pop.as_str() == pop)
    }

    /// All rows at one tick, instance rows first, then PoP aggregates.
    pub fn at(&self, t_s: f64) -> impl Iterator<Item = &UsageSample> {
        self.samples.iter().filter(move |s| s.t_s == t_s)
    }
}

/// Allocation request scheduled in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocateAction {
    pub pop: PopName,
    pub cpu_cus: u64,
    #[serde(default)]
    pub memory_mb: u64,
    #[serde(default)]
    pub storage_gb: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default = "default_demand")]
    pub demand: f64,
}

fn default_demand() -> f64 {
    1.0
}

/// Which instance a scheduled release targets: a concrete id, or the oldest /
/// newest live instance (optionally restricted to one PoP). Exactly one
/// selector must be set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReleaseAction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oldest: Option<PopSelector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newest: Option<PopSelector>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopSelector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pop: Option<PopName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Allocate(AllocateAction),
    Release(ReleaseAction),
}

/// An action and the virtual time it is due.
///
/// An action becomes due at the first tick boundary `t >= at_s`; due actions
/// apply *after* the samples at that boundary are recorded (actions at
/// `t = 0` apply before the first tick). Actions due at the same boundary
/// apply in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    pub at_s: f64,
    #[serde(flatten)]
    pub kind: ActionKind,
}

/// A ready-to-run scenario: self-contained, no file references left.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub topology: TopologyDoc,
    /// CPU budget handed to the platform (fraction of the physical machine).
    pub cpu_budget: f64,
    pub phys_capacity: Option<f64>,
    /// If set, replaces every PoP's resource model — handy for running one
    /// workload under several models.
    pub model_override: Option<ResourceModelRef>,
    pub duration_s: f64,
    pub tick_s: f64,
    pub actions: Vec<TimedAction>,
}

impl Scenario {
    fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidRequest(format!(
                "scenario duration must be positive and finite, got {}",
                self.duration_s
            )));
        }
        if !(self.tick_s > 0.0 && self.tick_s.is_finite()) {
            return Err(Error::InvalidRequest(format!(
                "tick length must be positive and finite, got {}",
                self.tick_s
            )));
        }
        for action in &self.actions {
            if !(action.at_s >= 0.0 && action.at_s <= self.duration_s) {
                return Err(Error::InvalidRequest(format!(
                    "action at t={}s lies outside the scenario duration {}s",
                    action.at_s, self.duration_s
                )));
            }
            if let ActionKind::Release(release) = &action.kind {
                let selectors = usize::from(release.instance.is_some())
                    + usize::from(release.oldest.is_some())
                    + usize::from(release.newest.is_some());
                if selectors != 1 {
                    return Err(Error::InvalidRequest(
                        "a release action needs exactly one of `instance`, `oldest`, `newest`"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn effective_topology(&self) -> TopologyDoc {
        let mut doc = self.topology.clone();
        if let Some(model) = &self.model_override {
            for pop in &mut doc.pops {
                pop.model = model.clone();
            }
        }
        doc
    }
}

impl PlatformState {
    /// Advances virtual time by `dt_s` and samples every live instance plus
    /// one aggregate per PoP (also for PoPs that are currently empty).
    ///
    /// Returned rows are ordered: instances by id, then PoPs by name.
    pub fn tick(&mut self, dt_s: f64) -> Result<Vec<UsageSample>> {
        if !(dt_s > 0.0 && dt_s.is_finite()) {
            return Err(Error::InvalidRequest(format!(
                "tick length must be positive and finite, got {dt_s}"
            )));
        }
        self.advance_clock(dt_s);
        let t_s = self.clock();

        // From-scratch limits per PoP, used for the `expected` column.
        let pops: Vec<PopName> = self.ledgers().map(|l| l.pop.clone()).collect();
        let mut expected: std::collections::BTreeMap<InstanceId, f64> = Default::default();
        for pop in &pops {
            match self.scope_of(pop) {
                LimitScope::Unlimited => {
                    let share = self.baseline_equal_share();
                    for instance in self.instances_in(pop) {
                        expected.insert(instance.id.clone(), share);
                    }
                }
                _ => expected.extend(self.recompute_pop_limits(pop)?),
            }
        }

        let mut samples = Vec::new();
        let mut per_pop: std::collections::BTreeMap<PopName, (f64, f64, f64)> =
            pops.iter().map(|p| (p.clone(), (0.0, 0.0, 0.0))).collect();
        for instance in self.instances() {
            let limit = self.effective_limit(instance);
            let usage = instance.demand.min(limit);
            let sample = UsageSample {
                t_s,
                instance: instance.id.clone(),
                pop: instance.pop.clone(),
                usage,
                limit,
                expected: expected[&instance.id],
            };
            let sums = per_pop.get_mut(&instance.pop).expect("pop is known");
            sums.0 += usage;
            sums.1 += limit;
            sums.2 += sample.expected;
            samples.push(sample);
        }
        for sample in &samples {
            self.stats.push_instance(
                &sample.instance,
                UsagePoint {
                    t_s,
                    usage: sample.usage,
                },
            );
        }
        for (pop, (usage, limit, expected)) in per_pop {
            self.stats.push_pop(&pop, UsagePoint { t_s, usage });
            samples.push(UsageSample {
                t_s,
                instance: InstanceId::new(POP_AGGREGATE_ID),
                pop,
                usage,
                limit,
                expected,
            });
        }
        Ok(samples)
    }

}

/// Replays `scenario` on a fresh platform and collects every sample and
/// event. Two runs of the same scenario yield equal [`UsageSeries`] values —
/// and therefore byte-identical CSV exports.
pub fn run_scenario(scenario: &Scenario, registry: &ModelRegistry) -> Result<UsageSeries> {
    scenario.validate()?;

    let doc = scenario.effective_topology();
    let violations = doc.validate(&ValidationContext::new(registry));
    if !violations.is_empty() {
        return Err(Error::TopologyInvalid(violations));
    }
    let mut state = PlatformState::new(
        Topology::build_unchecked(&doc),
        scenario.cpu_budget,
        registry,
    )?;
    if let Some(phys_capacity) = scenario.phys_capacity {
        state.set_phys_capacity(phys_capacity)?;
    }

    // Stable sort: equal timestamps keep declaration order.
    let mut pending: Vec<&TimedAction> = scenario.actions.iter().collect();
    pending.sort_by(|a, b| {
        a.at_s
            .partial_cmp(&b.at_s)
            .expect("validated timestamps are finite")
    });

    let mut series = UsageSeries {
        scenario: scenario.name.clone(),
        tick_s: scenario.tick_s,
        duration_s: scenario.duration_s,
        samples: Vec::new(),
        events: Vec::new(),
    };

    let mut next = 0usize;
    let apply_due = |state: &mut PlatformState,
                         series: &mut UsageSeries,
                         next: &mut usize|
     -> Result<()> {
        while *next < pending.len() && pending[*next].at_s <= state.clock() {
            apply_action(state, pending[*next], &mut series.events)?;
            *next += 1;
        }
        Ok(())
    };

    apply_due(&mut state, &mut series, &mut next)?;
    let ticks = (scenario.duration_s / scenario.tick_s).ceil() as u64;
    for _ in 0..ticks {
        series.samples.extend(state.tick(scenario.tick_s)?);
        apply_due(&mut state, &mut series, &mut next)?;
    }
    Ok(series)
}

fn apply_action(
    state: &mut PlatformState,
    action: &TimedAction,
    events: &mut Vec<ScenarioEvent>,
) -> Result<()> {
    let at_s = state.clock();
    let scenario_err = |message: String| Error::Scenario { at_s, message };

    match &action.kind {
        ActionKind::Allocate(alloc) => {
            let request = ResourceRequest {
                cpu_cus: alloc.cpu_cus,
                memory_mb: alloc.memory_mb,
                storage_gb: alloc.storage_gb,
            };
            let image = alloc.image.clone().unwrap_or_else(|| DEFAULT_IMAGE.into());
            let result = state
                .allocate(&alloc.pop, request, image, alloc.demand)
                .map_err(|e| scenario_err(e.to_string()))?;
            match result {
                AllocationResult::Accepted { instance, outcome } => {
                    events.push(ScenarioEvent::Allocated {
                        at_s,
                        instance: instance.id,
                        pop: instance.pop,
                        cpu_fraction: outcome.cpu_fraction,
                    });
                }
                AllocationResult::Rejected {
                    reason: RejectReason::UnknownPop,
                } => {
                    // A typo in the scenario, not an admission decision.
                    return Err(scenario_err(format!("unknown PoP `{}`", alloc.pop)));
                }
                AllocationResult::Rejected { reason } => {
                    events.push(ScenarioEvent::Rejected {
                        at_s,
                        pop: alloc.pop.clone(),
                        reason,
                    });
                }
            }
        }
        ActionKind::Release(release) => {
            let id = resolve_release(state, release)
                .map_err(|message| scenario_err(message))?;
            let pop = state
                .instance(&id)
                .expect("resolved to a live instance")
                .pop
                .clone();
            state.release(&id).map_err(|e| scenario_err(e.to_string()))?;
            events.push(ScenarioEvent::Released {
                at_s,
                instance: id,
                pop,
            });
        }
    }
    Ok(())
}

fn resolve_release(
    state: &PlatformState,
    release: &ReleaseAction,
) -> std::result::Result<InstanceId, String> {
    if let Some(id) = &release.instance {
        return if state.instance(id).is_some() {
            Ok(id.clone())
        } else {
            Err(format!("unknown instance `{id}`"))
        };
    }
    let (selector, newest) = match (&release.oldest, &release.newest) {
        (Some(s), None) => (s, false),
        (None, Some(s)) => (s, true),
        _ => return Err("a release action needs exactly one selector".into()),
    };
    let mut candidates: Vec<&crate::instance::ComputeInstance> = state
        .instances()
        .filter(|i| selector.pop.as_ref().is_none_or(|p| &i.pop == p))
        .collect();
    // Ids are monotonic, so (created_at, id) orders by true creation order.
    candidates.sort_by(|a, b| {
        a.created_at
            .partial_cmp(&b.created_at)
            .expect("clock values are finite")
            .then_with(|| a.id.cmp(&b.id))
    });
    let picked = if newest {
        candidates.last()
    } else {
        candidates.first()
    };
    picked.map(|i| i.id.clone()).ok_or_else(|| {
        match &selector.pop {
            Some(pop) => format!("no live instance to release in PoP `{pop}`"),
            None => "no live instance to release".into(),
        }
    })
}

/// On-disk scenario document. The topology comes either inline or from a
/// separate topology file referenced by path (resolved relative to the
/// scenario file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub format_version: u32,
    pub name: String,
    pub duration_s: f64,
    #[serde(default = "default_tick")]
    pub tick_s: f64,
    #[serde(default = "default_cpu_budget")]
    pub e_cpu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phys_capacity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_override: Option<ResourceModelRef>,
    pub topology: TopologyRef,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<TimedAction>,
}

fn default_tick() -> f64 {
    1.0
}

fn default_cpu_budget() -> f64 {
    crate::config::DEFAULT_CPU_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<TopologyDoc>,
}

pub fn parse_scenario(text: &str) -> Result<ScenarioDoc> {
    let doc: ScenarioDoc =
        toml::from_str(text).map_err(|e| Error::ScenarioParse(e.to_string()))?;
    if doc.format_version != SCENARIO_FORMAT_VERSION {
        return Err(Error::ScenarioParse(format!(
            "unsupported format_version {} (this build reads version {})",
            doc.format_version, SCENARIO_FORMAT_VERSION
        )));
    }
    Ok(doc)
}

/// Loads a scenario file and resolves its topology reference.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let doc = parse_scenario(&text)?;

    let topology = match (&doc.topology.path, &doc.topology.inline) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(Error::ScenarioParse(
                "topology must be given as exactly one of `path` or `inline`".into(),
            ))
        }
        (None, Some(inline)) => inline.clone(),
        (Some(relative), None) => {
            let base = path.parent().unwrap_or_else(|| std::path::Path::new("."));
            parse_topology(&std::fs::read_to_string(base.join(relative))?)?
        }
    };

    Ok(Scenario {
        name: doc.name,
        topology,
        cpu_budget: doc.e_cpu,
        phys_capacity: doc.phys_capacity,
        model_override: doc.model_override,
        duration_s: doc.duration_s,
        tick_s: doc.tick_s,
        actions: doc.actions,
    })
}
