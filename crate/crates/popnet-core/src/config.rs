//! Platform-wide settings, frozen when a platform is brought up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default share of the physical CPU granted to the emulation as a whole.
pub const DEFAULT_CPU_BUDGET: f64 = 0.5;

/// Default normalized capacity of the physical machine, used only by the
/// unlimited baseline model to derive the momentary equal share.
pub const DEFAULT_PHYS_CAPACITY: f64 = 1.0;

/// Immutable platform-wide configuration.
///
/// `total_capacity_cus` is the sum of CPU compute units over all PoPs and is
/// frozen at startup: resource models divide the CPU budget by this constant,
/// so later topology edits would silently change every granted limit. The
/// platform therefore never mutates its topology after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalConfig {
    /// Fraction of physical CPU time granted to the whole emulation, in (0, 1].
    pub cpu_budget: f64,
    /// Normalized physical capacity backing the unlimited baseline.
    pub phys_capacity: f64,
    /// Number of PoPs in the topology (at least one).
    pub pop_count: usize,
    /// Sum of CPU compute units over all PoPs.
    pub total_capacity_cus: u64,
}

impl GlobalConfig {
    pub fn new(cpu_budget: f64, pop_count: usize, total_capacity_cus: u64) -> Result<Self> {
        if !(cpu_budget > 0.0 && cpu_budget <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cpu budget must lie in (0, 1], got {cpu_budget}"
            )));
        }
        if pop_count == 0 {
            return Err(Error::InvalidConfig(
                "a platform needs at least one PoP".into(),
            ));
        }
        if total_capacity_cus == 0 {
            return Err(Error::InvalidConfig(
                "total CPU capacity must be at least one compute unit".into(),
            ));
        }
        Ok(Self {
            cpu_budget,
            phys_capacity: DEFAULT_PHYS_CAPACITY,
            pop_count,
            total_capacity_cus,
        })
    }

    pub fn with_phys_capacity(mut self, phys_capacity: f64) -> Result<Self> {
        if !(phys_capacity > 0.0 && phys_capacity.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "physical capacity must be positive and finite, got {phys_capacity}"
            )));
        }
        self.phys_capacity = phys_capacity;
        Ok(self)
    }

    /// CPU fraction granted per compute unit: the budget spread evenly over
    /// every compute unit the topology declares.
    pub fn per_cu(&self) -> f64 {
        self.cpu_budget / self.total_capacity_cus as f64
    }
}
