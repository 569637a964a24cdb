//! CPU resource-limitation models.
//!
//! A resource model answers two questions whenever the set of instances in a
//! PoP changes: *may this instance be admitted?* and *what fraction of the
//! physical CPU does each instance get?* The platform owns one model per PoP
//! and re-asks the second question for every affected instance after each
//! allocation or release, so limits always reflect the current ledger.
//!
//! Four models ship built in:
//!
//! * `none` — no limits at all; instances compete for an equal share of the
//!   physical machine. Baseline, offers no isolation.
//! * `shared_pool` — one platform-wide pool: the CPU budget is divided over
//!   all live compute units regardless of which PoP hosts them. Isolates the
//!   emulation from the host but not PoPs from each other.
//! * `fixed_limit_A` — every compute unit is worth the same fixed share of
//!   the budget and a PoP never hands out more units than it declares.
//!   Admission control, no over-provisioning.
//! * `over_provisioning_B` — like `fixed_limit_A` while the PoP is within
//!   capacity, but instead of rejecting, extra instances shrink every
//!   co-located instance's share proportionally. Never rejects for CPU.
//!
//! Additional models can be registered under new names via [`ModelRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::GlobalConfig;
use crate::error::{Error, Result};
use crate::ids::InstanceId;
use crate::instance::ComputeInstance;
use crate::ledger::PopLedger;

pub const MODEL_NONE: &str = "none";
pub const MODEL_SHARED_POOL: &str = "shared_pool";
pub const MODEL_FIXED_LIMIT: &str = "fixed_limit_A";
pub const MODEL_OVER_PROVISIONING: &str = "over_provisioning_B";

/// Why an allocation was turned down. A rejection is an expected outcome of
/// admission control, not an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    CpuExhausted,
    MemoryExhausted,
    StorageExhausted,
    UnknownPop,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::CpuExhausted => "cpu_exhausted",
            RejectReason::MemoryExhausted => "memory_exhausted",
            RejectReason::StorageExhausted => "storage_exhausted",
            RejectReason::UnknownPop => "unknown_pop",
        }
    }
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// How far a change in one PoP's allocations reaches.
///
/// The platform uses this to decide whose limits to recompute after an
/// allocation or release: nobody's (`Fixed` grants are final, `Unlimited`
/// grants nothing), every co-located instance (`Pop`), or every instance on
/// the platform (`Platform`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitScope {
    Fixed,
    Pop,
    Platform,
    Unlimited,
}

/// Compute-unit accounting visible to a limit function: the instance's own
/// PoP plus the platform-wide pool.
#[derive(Debug, Clone, Copy)]
pub struct CuView {
    pub pop_capacity_cus: u64,
    pub pop_allocated_cus: u64,
    pub pool_capacity_cus: u64,
    pub pool_allocated_cus: u64,
}

impl CuView {
    pub fn from_ledger(ledger: &PopLedger, config: &GlobalConfig) -> Self {
        Self {
            pop_capacity_cus: ledger.cpu_capacity_cus,
            pop_allocated_cus: ledger.cpu_allocated_cus,
            // Callers that track a platform-wide pool overwrite these; a bare
            // ledger view treats the PoP as the whole pool.
            pool_capacity_cus: config.total_capacity_cus,
            pool_allocated_cus: ledger.cpu_allocated_cus,
        }
    }
}

/// A CPU limitation strategy for one PoP.
///
/// `admits` sees the ledger *before* the candidate is charged; `cpu_fraction`
/// sees it *after*, i.e. `pop_allocated_cus` already includes the instance
/// being priced. Implementations must be pure functions of their inputs so
/// that recomputing every limit from scratch reproduces incrementally
/// maintained values bit for bit.
pub trait ResourceModel: Send + Sync {
    /// Registry name of this model.
    fn kind(&self) -> &str;

    /// May an instance of `cpu_cus` compute units join, given the
    /// pre-allocation view? Models without CPU admission control accept
    /// everything.
    fn admits(&self, cpu_cus: u64, view: CuView, config: &GlobalConfig) -> bool {
        let _ = (cpu_cus, view, config);
        true
    }

    /// Enforced CPU fraction for an instance of `cpu_cus` compute units under
    /// the post-allocation view. Returns `0.0` for uncapped models.
    fn cpu_fraction(&self, cpu_cus: u64, view: CuView, config: &GlobalConfig) -> f64;

    fn scope(&self) -> LimitScope;
}

/// `fixed_limit_A`: per-unit share with strict admission.
#[derive(Debug, Default)]
pub struct FixedLimit;

impl ResourceModel for FixedLimit {
    fn kind(&self) -> &str {
        MODEL_FIXED_LIMIT
    }

    fn admits(&self, cpu_cus: u64, view: CuView, _config: &GlobalConfig) -> bool {
        view.pop_allocated_cus + cpu_cus <= view.pop_capacity_cus
    }

    fn cpu_fraction(&self, cpu_cus: u64, _view: CuView, config: &GlobalConfig) -> f64 {
        config.per_cu() * cpu_cus as f64
    }

    fn scope(&self) -> LimitScope {
        LimitScope::Fixed
    }
}

/// `over_provisioning_B`: per-unit share, scaled down by `capacity /
/// allocated` once the PoP hands out more units than it declares. All
/// co-located instances share one scaling factor, so they shrink together.
#[derive(Debug, Default)]
pub struct OverProvisioning;

impl ResourceModel for OverProvisioning {
    fn kind(&self) -> &str {
        MODEL_OVER_PROVISIONING
    }

    fn cpu_fraction(&self, cpu_cus: u64, view: CuView, config: &GlobalConfig) -> f64 {
        let capacity = view.pop_capacity_cus as f64;
        let allocated = view.pop_allocated_cus.max(view.pop_capacity_cus) as f64;
        config.per_cu() * (capacity / allocated) * cpu_cus as f64
    }

    fn scope(&self) -> LimitScope {
        LimitScope::Pop
    }
}

/// `shared_pool`: over-provisioning applied to the platform-wide pool instead
/// of per PoP. Every instance everywhere shares one scaling factor, so a busy
/// PoP degrades an idle one — this is the "no isolation between PoPs"
/// reference point.
#[derive(Debug, Default)]
pub struct SharedPool;

impl ResourceModel for SharedPool {
    fn kind(&self) -> &str {
        MODEL_SHARED_POOL
    }

    fn cpu_fraction(&self, cpu_cus: u64, view: CuView, config: &GlobalConfig) -> f64 {
        let capacity = view.pool_capacity_cus as f64;
        let allocated = view.pool_allocated_cus.max(view.pool_capacity_cus) as f64;
        config.per_cu() * (capacity / allocated) * cpu_cus as f64
    }

    fn scope(&self) -> LimitScope {
        LimitScope::Platform
    }
}

/// `none`: no CPU limits whatsoever. Instances are stored with
/// `cpu_fraction = 0.0` (uncapped); their *observed* usage is derived at
/// sampling time from an equal share of the physical machine.
#[derive(Debug, Default)]
pub struct Unlimited;

impl ResourceModel for Unlimited {
    fn kind(&self) -> &str {
        MODEL_NONE
    }

    fn cpu_fraction(&self, _cpu_cus: u64, _view: CuView, _config: &GlobalConfig) -> f64 {
        0.0
    }

    fn scope(&self) -> LimitScope {
        LimitScope::Unlimited
    }
}

/// Fixed-limit CPU admission for one request against one PoP ledger.
///
/// Returns the granted fraction, or `None` when `cpu_cus` does not fit into
/// the PoP's remaining compute units. The ledger is the state *before* the
/// allocation.
pub fn cpu_limit_fixed(cpu_cus: u64, ledger: &PopLedger, config: &GlobalConfig) -> Option<f64> {
    let model = FixedLimit;
    let view = CuView::from_ledger(ledger, config);
    model
        .admits(cpu_cus, view, config)
        .then(|| model.cpu_fraction(cpu_cus, view, config))
}

/// Over-provisioned CPU share for one instance. The ledger must already
/// account for the instance's compute units (the factor depends on the total
/// including it). Never rejects.
pub fn cpu_limit_over_provisioned(cpu_cus: u64, ledger: &PopLedger, config: &GlobalConfig) -> f64 {
    OverProvisioning.cpu_fraction(cpu_cus, CuView::from_ledger(ledger, config), config)
}

/// Platform-pool CPU share for one instance, given pool-wide allocated units
/// (which must already include the instance).
pub fn cpu_limit_shared_pool(cpu_cus: u64, pool_allocated_cus: u64, config: &GlobalConfig) -> f64 {
    let view = CuView {
        pop_capacity_cus: config.total_capacity_cus,
        pop_allocated_cus: pool_allocated_cus,
        pool_capacity_cus: config.total_capacity_cus,
        pool_allocated_cus,
    };
    SharedPool.cpu_fraction(cpu_cus, view, config)
}

/// Free-form parameters handed to a model factory.
pub type ModelParams = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Integer(i64),
    Number(f64),
    Text(String),
}

/// Reference to a resource model by registry name, as written in topology
/// documents, plus whatever parameters the model's factory understands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceModelRef {
    pub kind: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: ModelParams,
}

impl ResourceModelRef {
    pub fn named(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            params: BTreeMap::new(),
        }
    }
}

impl Default for ResourceModelRef {
    /// PoPs that do not name a model get strict admission control.
    fn default() -> Self {
        Self::named(MODEL_FIXED_LIMIT)
    }
}

pub type ModelFactory =
    Arc<dyn Fn(&ModelParams, &GlobalConfig) -> Result<Arc<dyn ResourceModel>> + Send + Sync>;

/// Name → factory table used to resolve [`ResourceModelRef`]s at platform
/// startup. The four built-in models are pre-registered; platform embedders
/// may add their own under fresh names.
pub struct ModelRegistry {
    factories: BTreeMap<String, ModelFactory>,
}

impl std::fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelRegistry")
            .field("kinds", &self.names())
            .finish()
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ModelRegistry {
    /// Registry with the four built-in models.
    pub fn builtin() -> Self {
        let mut registry = Self::empty();
        let builtins: [(&str, ModelFactory); 4] = [
            (MODEL_NONE, Arc::new(|_, _| Ok(Arc::new(Unlimited)))),
            (MODEL_SHARED_POOL, Arc::new(|_, _| Ok(Arc::new(SharedPool)))),
            (MODEL_FIXED_LIMIT, Arc::new(|_, _| Ok(Arc::new(FixedLimit)))),
            (
                MODEL_OVER_PROVISIONING,
                Arc::new(|_, _| Ok(Arc::new(OverProvisioning))),
            ),
        ];
        for (name, factory) in builtins {
            registry
                .register(name, factory)
                .expect("built-in names are distinct");
        }
        registry
    }

    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Registers a factory under `name`. Names are unique; registering a
    /// duplicate is an error rather than a silent replacement.
    pub fn register(&mut self, name: impl Into<String>, factory: ModelFactory) -> Result<()> {
        let name = name.into();
        if self.factories.contains_key(&name) {
            return Err(Error::DuplicateRegistration(name));
        }
        self.factories.insert(name, factory);
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    /// Instantiates the model a reference points at.
    pub fn resolve(
        &self,
        model_ref: &ResourceModelRef,
        config: &GlobalConfig,
    ) -> Result<Arc<dyn ResourceModel>> {
        let factory = self
            .factories
            .get(&model_ref.kind)
            .ok_or_else(|| Error::UnknownModel(model_ref.kind.clone()))?;
        factory(&model_ref.params, config)
    }
}

/// Result of an accepted allocation or of a release: the subject's own limit
/// plus every *peer* whose limit changed as a side effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub accepted: bool,
    /// Enforced fraction of the subject instance (0.0 after a release or for
    /// uncapped models).
    pub cpu_fraction: f64,
    /// New limits of other instances that were re-priced by this event. Only
    /// instances whose value actually changed appear here.
    pub updated_fractions: BTreeMap<InstanceId, f64>,
}

/// What `allocate` produced: a live instance, or a typed rejection.
#[derive(Debug, Clone)]
pub enum AllocationResult {
    Accepted {
        instance: ComputeInstance,
        outcome: AllocationOutcome,
    },
    Rejected {
        reason: RejectReason,
    },
}

impl AllocationResult {
    pub fn is_accepted(&self) -> bool {
        matches!(self, AllocationResult::Accepted { .. })
    }

    pub fn accepted(&self) -> Option<(&ComputeInstance, &AllocationOutcome)> {
        match self {
            AllocationResult::Accepted { instance, outcome } => Some((instance, outcome)),
            AllocationResult::Rejected { .. } => None,
        }
    }

    pub fn rejection(&self) -> Option<RejectReason> {
        match self {
            AllocationResult::Accepted { .. } => None,
            AllocationResult::Rejected { reason } => Some(*reason),
        }
    }
}
