//! Compute instances and their resource requests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{InstanceId, PopName};

/// Resources asked for at allocation time.
///
/// CPU is requested in whole *compute units*; what fraction of physical CPU
/// time one unit is worth is decided by the PoP's resource model, not by the
/// request. Memory and storage are plain hard-capacity reservations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRequest {
    pub cpu_cus: u64,
    #[serde(default)]
    pub memory_mb: u64,
    #[serde(default)]
    pub storage_gb: u64,
}

impl ResourceRequest {
    /// Request for CPU only.
    pub fn cpu(cpu_cus: u64) -> Self {
        Self {
            cpu_cus,
            memory_mb: 0,
            storage_gb: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cpu_cus == 0 {
            return Err(Error::InvalidRequest(
                "an instance must request at least one compute unit".into(),
            ));
        }
        Ok(())
    }
}

/// A running instance and its enforced CPU share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeInstance {
    pub id: InstanceId,
    pub pop: PopName,
    pub image: String,
    pub request: ResourceRequest,
    /// Enforced CPU time limit as a fraction of the physical CPU. `0.0` means
    /// uncapped (the unlimited baseline model grants no limit at all).
    pub cpu_fraction: f64,
    /// Fraction of the physical CPU the workload *tries* to consume each
    /// tick, in [0, 1]. Observed usage is `min(demand, limit)`.
    pub demand: f64,
    /// Virtual time of creation, in seconds.
    pub created_at: f64,
}
