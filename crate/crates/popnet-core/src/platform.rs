//! The mutable platform: per-PoP ledgers, live instances, and the allocation
//! / release lifecycle.
//!
//! All state lives in one [`PlatformState`] value. Management endpoints and
//! the CLI wrap it in a mutex; the simulator owns it outright. Mutations are
//! serialized, every map is ordered, and identifiers come from monotonic
//! counters, so any sequence of calls replays to an identical state.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use crate::chain::{Chain, FlowTables};
use crate::config::GlobalConfig;
use crate::error::{Error, Result};
use crate::ids::{ChainId, InstanceId, PopName, StackId};
use crate::instance::{ComputeInstance, ResourceRequest};
use crate::ledger::PopLedger;
use crate::model::{
    AllocationOutcome, AllocationResult, CuView, LimitScope, ModelRegistry, RejectReason,
    ResourceModel,
};
use crate::stack::StackRecord;
use crate::topology::Topology;

/// Ring-buffer depth for per-instance and per-PoP usage history (two hours at
/// one-second ticks).
pub const MAX_STAT_SAMPLES: usize = 7200;

/// Image name assumed when an allocation does not specify one.
pub const DEFAULT_IMAGE: &str = "stress";

/// A usage measurement at one point in virtual time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UsagePoint {
    pub t_s: f64,
    pub usage: f64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct StatsBuffer {
    per_instance: BTreeMap<InstanceId, VecDeque<UsagePoint>>,
    per_pop: BTreeMap<PopName, VecDeque<UsagePoint>>,
}

impl StatsBuffer {
    fn push(series: &mut VecDeque<UsagePoint>, point: UsagePoint) {
        if series.len() == MAX_STAT_SAMPLES {
            series.pop_front();
        }
        series.push_back(point);
    }

    pub(crate) fn push_instance(&mut self, id: &InstanceId, point: UsagePoint) {
        Self::push(self.per_instance.entry(id.clone()).or_default(), point);
    }

    pub(crate) fn push_pop(&mut self, pop: &PopName, point: UsagePoint) {
        Self::push(self.per_pop.entry(pop.clone()).or_default(), point);
    }

    fn drop_instance(&mut self, id: &InstanceId) {
        self.per_instance.remove(id);
    }

    fn instance_series(&self, id: &InstanceId) -> Vec<UsagePoint> {
        self.per_instance
            .get(id)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    fn latest_pop_usage(&self, pop: &PopName) -> f64 {
        self.per_pop
            .get(pop)
            .and_then(|s| s.back())
            .map(|p| p.usage)
            .unwrap_or(0.0)
    }
}

/// Point-in-time view of one instance, including its recorded usage history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceStats {
    pub id: InstanceId,
    pub pop: PopName,
    pub cpu_fraction: f64,
    pub demand: f64,
    /// Usage the instance would show if sampled right now.
    pub current_usage: f64,
    pub samples: Vec<UsagePoint>,
    /// Most recent aggregate usage of the hosting PoP.
    pub pop_aggregate_usage: f64,
}

/// Per-PoP slice of [`PlatformStats`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopStats {
    pub ledger: PopLedger,
    pub model_kind: String,
    pub instance_count: usize,
    /// Sum of enforced CPU fractions over the PoP's instances.
    pub cpu_fraction_total: f64,
    /// Aggregate usage at the most recent tick (0 before the first tick).
    pub aggregate_usage: f64,
}

/// Platform-wide snapshot served by the management endpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlatformStats {
    pub clock_s: f64,
    pub cpu_budget: f64,
    pub total_capacity_cus: u64,
    pub pool_allocated_cus: u64,
    pub instance_count: usize,
    pub chain_count: usize,
    pub stack_count: usize,
    pub pops: BTreeMap<PopName, PopStats>,
}

/// The whole emulated platform.
pub struct PlatformState {
    config: GlobalConfig,
    topology: Topology,
    ledgers: BTreeMap<PopName, PopLedger>,
    models: BTreeMap<PopName, Arc<dyn ResourceModel>>,
    instances: BTreeMap<InstanceId, ComputeInstance>,
    pub(crate) chains: BTreeMap<ChainId, Chain>,
    pub(crate) stacks: BTreeMap<StackId, StackRecord>,
    pub(crate) flow_tables: FlowTables,
    pub(crate) vlans_in_use: BTreeSet<u16>,
    pub(crate) stats: StatsBuffer,
    clock: f64,
    next_instance: u64,
    next_chain: u64,
    next_stack: u64,
}

impl std::fmt::Debug for PlatformState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlatformState")
            .field("config", &self.config)
            .field("clock", &self.clock)
            .field("ledgers", &self.ledgers)
            .field("instances", &self.instances.len())
            .field("chains", &self.chains.len())
            .field("stacks", &self.stacks.len())
            .finish_non_exhaustive()
    }
}

impl PlatformState {
    /// Brings a platform up on a compiled topology.
    ///
    /// The CPU budget (a fraction of the physical machine, in (0, 1]) and the
    /// total compute-unit capacity are frozen here: every per-unit share
    /// derived later uses these startup values.
    pub fn new(topology: Topology, cpu_budget: f64, registry: &ModelRegistry) -> Result<Self> {
        let config = GlobalConfig::new(
            cpu_budget,
            topology.pop_count(),
            topology.total_cpu_capacity_cus(),
        )?;

        let mut ledgers = BTreeMap::new();
        let mut models: BTreeMap<PopName, Arc<dyn ResourceModel>> = BTreeMap::new();
        for pop in topology.pops() {
            ledgers.insert(
                pop.name.clone(),
                PopLedger::new(
                    pop.name.clone(),
                    pop.cpu_capacity_cus,
                    pop.mem_capacity_mb,
                    pop.storage_capacity_gb,
                ),
            );
            models.insert(pop.name.clone(), registry.resolve(&pop.model, &config)?);
        }

        Ok(Self {
            config,
            topology,
            ledgers,
            models,
            instances: BTreeMap::new(),
            chains: BTreeMap::new(),
            stacks: BTreeMap::new(),
            flow_tables: FlowTables::default(),
            vlans_in_use: BTreeSet::new(),
            stats: StatsBuffer::default(),
            clock: 0.0,
            next_instance: 0,
            next_chain: 0,
            next_stack: 0,
        })
    }

    /// Overrides the normalized physical capacity used by the unlimited
    /// baseline (defaults to 1.0).
    pub fn set_phys_capacity(&mut self, phys_capacity: f64) -> Result<()> {
        self.config = self.config.clone().with_phys_capacity(phys_capacity)?;
        Ok(())
    }

    pub fn config(&self) -> &GlobalConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Current virtual time in seconds.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub(crate) fn advance_clock(&mut self, dt_s: f64) {
        self.clock += dt_s;
    }

    pub fn ledger(&self, pop: &PopName) -> Option<&PopLedger> {
        self.ledgers.get(pop)
    }

    pub fn ledgers(&self) -> impl Iterator<Item = &PopLedger> {
        self.ledgers.values()
    }

    pub fn model_kind(&self, pop: &PopName) -> Option<&str> {
        self.models.get(pop).map(|m| m.kind())
    }

    pub(crate) fn scope_of(&self, pop: &PopName) -> LimitScope {
        self.models[pop].scope()
    }

    pub fn instance(&self, id: &InstanceId) -> Option<&ComputeInstance> {
        self.instances.get(id)
    }

    /// Live instances in id order.
    pub fn instances(&self) -> impl Iterator<Item = &ComputeInstance> {
        self.instances.values()
    }

    pub fn instances_in<'a>(
        &'a self,
        pop: &'a PopName,
    ) -> impl Iterator<Item = &'a ComputeInstance> {
        self.instances.values().filter(move |i| &i.pop == pop)
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn chain(&self, id: &ChainId) -> Option<&Chain> {
        self.chains.get(id)
    }

    pub fn chains(&self) -> impl Iterator<Item = &Chain> {
        self.chains.values()
    }

    pub fn stack(&self, id: &StackId) -> Option<&StackRecord> {
        self.stacks.get(id)
    }

    pub fn stacks(&self) -> impl Iterator<Item = &StackRecord> {
        self.stacks.values()
    }

    pub fn flow_tables(&self) -> &FlowTables {
        &self.flow_tables
    }

    /// Compute units currently allocated platform-wide.
    pub fn pool_allocated_cus(&self) -> u64 {
        self.ledgers.values().map(|l| l.cpu_allocated_cus).sum()
    }

    /// Sum of enforced CPU fractions over all instances. Bounded by the CPU
    /// budget for every built-in model.
    pub fn cpu_budget_used(&self) -> f64 {
        self.instances.values().map(|i| i.cpu_fraction).sum()
    }

    pub(crate) fn mint_instance_id(&mut self) -> InstanceId {
        self.next_instance += 1;
        InstanceId::new(format!("c{:04}", self.next_instance))
    }

    pub(crate) fn mint_chain_id(&mut self) -> ChainId {
        self.next_chain += 1;
        ChainId::new(format!("ch{:04}", self.next_chain))
    }

    pub(crate) fn mint_stack_id(&mut self) -> StackId {
        self.next_stack += 1;
        StackId::new(format!("st{:04}", self.next_stack))
    }

    fn cu_view(&self, ledger: &PopLedger) -> CuView {
        CuView {
            pop_capacity_cus: ledger.cpu_capacity_cus,
            pop_allocated_cus: ledger.cpu_allocated_cus,
            pool_capacity_cus: self.config.total_capacity_cus,
            pool_allocated_cus: self.pool_allocated_cus(),
        }
    }

    /// Tries to place one instance in `pop`.
    ///
    /// A full PoP is a *rejection*, not an error: the result carries a typed
    /// reason (CPU, memory, storage, or unknown PoP) and the platform is left
    /// exactly as it was. Errors are reserved for malformed requests.
    ///
    /// On acceptance the returned outcome lists every co-located (or, under
    /// platform-wide models, every) instance whose enforced limit changed.
    pub fn allocate(
        &mut self,
        pop: &PopName,
        request: ResourceRequest,
        image: impl Into<String>,
        demand: f64,
    ) -> Result<AllocationResult> {
        request.validate()?;
        if !(0.0..=1.0).contains(&demand) {
            return Err(Error::InvalidRequest(format!(
                "demand must lie in [0, 1], got {demand}"
            )));
        }

        let Some(ledger) = self.ledgers.get(pop) else {
            return Ok(AllocationResult::Rejected {
                reason: RejectReason::UnknownPop,
            });
        };
        let model = Arc::clone(&self.models[pop]);

        // Admission: CPU first, then the hard memory and storage capacities.
        let view = self.cu_view(ledger);
        let reason = if !model.admits(request.cpu_cus, view, &self.config) {
            Some(RejectReason::CpuExhausted)
        } else if !ledger.fits_memory(&request) {
            Some(RejectReason::MemoryExhausted)
        } else if !ledger.fits_storage(&request) {
            Some(RejectReason::StorageExhausted)
        } else {
            None
        };
        if let Some(reason) = reason {
            return Ok(AllocationResult::Rejected { reason });
        }

        self.ledgers.get_mut(pop).expect("checked above").charge(&request);
        let id = self.mint_instance_id();
        self.instances.insert(
            id.clone(),
            ComputeInstance {
                id: id.clone(),
                pop: pop.clone(),
                image: image.into(),
                request,
                cpu_fraction: 0.0,
                demand,
                created_at: self.clock,
            },
        );

        let mut changed = self.reprice(pop, model.scope());
        changed.remove(&id);
        let instance = self.instances[&id].clone();
        self.debug_check_invariants();

        Ok(AllocationResult::Accepted {
            outcome: AllocationOutcome {
                accepted: true,
                cpu_fraction: instance.cpu_fraction,
                updated_fractions: changed,
            },
            instance,
        })
    }

    /// Releases one instance, returning capacity to its PoP.
    ///
    /// Any service chain that routes through the instance is removed first —
    /// a chain must never reference a dead instance — and a stack that listed
    /// it forgets the member. Remaining peers are re-priced per the PoP's
    /// model; the outcome lists those whose limit changed.
    pub fn release(&mut self, id: &InstanceId) -> Result<AllocationOutcome> {
        let instance = self
            .instances
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownInstance(id.clone()))?;

        let chained: Vec<ChainId> = self
            .chains
            .values()
            .filter(|c| c.hops.contains(id))
            .map(|c| c.id.clone())
            .collect();
        for chain_id in chained {
            self.remove_chain(&chain_id)?;
        }

        for stack in self.stacks.values_mut() {
            stack.instances.retain(|(_, member)| member != id);
        }
        self.stacks.retain(|_, s| !s.instances.is_empty());

        self.ledgers
            .get_mut(&instance.pop)
            .expect("live instances always have a ledger")
            .refund(&instance.request);
        self.instances.remove(id);
        self.stats.drop_instance(id);

        let scope = self.models[&instance.pop].scope();
        let changed = self.reprice(&instance.pop, scope);
        self.debug_check_invariants();

        Ok(AllocationOutcome {
            accepted: true,
            cpu_fraction: 0.0,
            updated_fractions: changed,
        })
    }

    /// Recomputes every affected instance's limit after a ledger change and
    /// applies the new values. Returns the instances whose value changed.
    fn reprice(&mut self, pop: &PopName, scope: LimitScope) -> BTreeMap<InstanceId, f64> {
        let pops: Vec<PopName> = match scope {
            LimitScope::Platform => self.ledgers.keys().cloned().collect(),
            _ => vec![pop.clone()],
        };
        let mut changed = BTreeMap::new();
        for pop in pops {
            let fresh = self
                .recompute_pop_limits(&pop)
                .expect("repricing only visits known pops");
            for (id, fraction) in fresh {
                let instance = self.instances.get_mut(&id).expect("id from live set");
                if instance.cpu_fraction != fraction {
                    instance.cpu_fraction = fraction;
                    changed.insert(id, fraction);
                }
            }
        }
        changed
    }

    /// Prices every instance in `pop` from scratch, straight from the current
    /// ledger — no incremental state involved. The platform applies exactly
    /// these values after each allocation and release, so externally
    /// maintained limits can always be cross-checked against this function.
    pub fn recompute_pop_limits(&self, pop: &PopName) -> Result<BTreeMap<InstanceId, f64>> {
        let ledger = self
            .ledgers
            .get(pop)
            .ok_or_else(|| Error::UnknownPop(pop.clone()))?;
        let model = &self.models[pop];
        let view = self.cu_view(ledger);
        Ok(self
            .instances_in(pop)
            .map(|i| {
                (
                    i.id.clone(),
                    model.cpu_fraction(i.request.cpu_cus, view, &self.config),
                )
            })
            .collect())
    }

    /// Momentary equal share of the physical machine under the unlimited
    /// baseline: capacity divided by the number of live instances.
    pub fn baseline_equal_share(&self) -> f64 {
        if self.instances.is_empty() {
            self.config.phys_capacity
        } else {
            self.config.phys_capacity / self.instances.len() as f64
        }
    }

    /// Usage every live instance would observe with no limits in place:
    /// `min(demand, equal share)`, the share being platform-wide.
    pub fn baseline_none_usage(&self) -> BTreeMap<InstanceId, f64> {
        let share = self.baseline_equal_share();
        self.instances
            .values()
            .map(|i| (i.id.clone(), i.demand.min(share)))
            .collect()
    }

    /// The limit actually binding an instance right now: its enforced
    /// fraction, or the momentary equal share where nothing is enforced.
    pub fn effective_limit(&self, instance: &ComputeInstance) -> f64 {
        match self.models[&instance.pop].scope() {
            LimitScope::Unlimited => self.baseline_equal_share(),
            _ => instance.cpu_fraction,
        }
    }

    /// Usage the instance shows when sampled: demand clipped to its limit.
    pub fn usage_of(&self, instance: &ComputeInstance) -> f64 {
        instance.demand.min(self.effective_limit(instance))
    }

    pub fn instance_stats(&self, id: &InstanceId) -> Result<InstanceStats> {
        let instance = self
            .instances
            .get(id)
            .ok_or_else(|| Error::UnknownInstance(id.clone()))?;
        Ok(InstanceStats {
            id: instance.id.clone(),
            pop: instance.pop.clone(),
            cpu_fraction: instance.cpu_fraction,
            demand: instance.demand,
            current_usage: self.usage_of(instance),
            samples: self.stats.instance_series(id),
            pop_aggregate_usage: self.stats.latest_pop_usage(&instance.pop),
        })
    }

    pub fn platform_stats(&self) -> PlatformStats {
        let pops = self
            .ledgers
            .iter()
            .map(|(name, ledger)| {
                (
                    name.clone(),
                    PopStats {
                        ledger: ledger.clone(),
                        model_kind: self.models[name].kind().to_owned(),
                        instance_count: self.instances_in(name).count(),
                        cpu_fraction_total: self
                            .instances_in(name)
                            .map(|i| i.cpu_fraction)
                            .sum(),
                        aggregate_usage: self.stats.latest_pop_usage(name),
                    },
                )
            })
            .collect();
        PlatformStats {
            clock_s: self.clock,
            cpu_budget: self.config.cpu_budget,
            total_capacity_cus: self.config.total_capacity_cus,
            pool_allocated_cus: self.pool_allocated_cus(),
            instance_count: self.instances.len(),
            chain_count: self.chains.len(),
            stack_count: self.stacks.len(),
            pops,
        }
    }

    /// Debug-build consistency audit: ledgers must equal the sums over live
    /// instances, hard capacities must hold, and enforced fractions must stay
    /// within the CPU budget.
    pub(crate) fn debug_check_invariants(&self) {
        #[cfg(debug_assertions)]
        {
            for (pop, ledger) in &self.ledgers {
                let cpu: u64 = self.instances_in(pop).map(|i| i.request.cpu_cus).sum();
                let mem: u64 = self.instances_in(pop).map(|i| i.request.memory_mb).sum();
                let storage: u64 = self.instances_in(pop).map(|i| i.request.storage_gb).sum();
                assert_eq!(cpu, ledger.cpu_allocated_cus, "CU ledger drift in {pop}");
                assert_eq!(mem, ledger.mem_allocated_mb, "memory ledger drift in {pop}");
                assert_eq!(
                    storage, ledger.storage_allocated_gb,
                    "storage ledger drift in {pop}"
                );
                assert!(ledger.mem_allocated_mb <= ledger.mem_capacity_mb);
                assert!(ledger.storage_allocated_gb <= ledger.storage_capacity_gb);
            }
            let used = self.cpu_budget_used();
            assert!(
                used <= self.config.cpu_budget * (1.0 + 1e-9),
                "enforced fractions {used} exceed the budget {}",
                self.config.cpu_budget
            );
        }
    }
}
