//! Per-PoP capacity accounting.

use serde::{Deserialize, Serialize};

use crate::ids::PopName;
use crate::instance::ResourceRequest;

/// Book-keeping for one PoP: declared capacity versus currently allocated
/// resources. CPU is counted in compute units; memory and storage are hard
/// capacities that every resource model enforces identically.
///
/// Invariant: each `*_allocated` field equals the sum of the corresponding
/// request field over the PoP's live instances, and never exceeds capacity
/// for memory and storage. CPU allocation *may* exceed CPU capacity under
/// over-provisioning models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopLedger {
    pub pop: PopName,
    pub cpu_capacity_cus: u64,
    pub cpu_allocated_cus: u64,
    pub mem_capacity_mb: u64,
    pub mem_allocated_mb: u64,
    pub storage_capacity_gb: u64,
    pub storage_allocated_gb: u64,
}

impl PopLedger {
    pub fn new(
        pop: PopName,
        cpu_capacity_cus: u64,
        mem_capacity_mb: u64,
        storage_capacity_gb: u64,
    ) -> Self {
        Self {
            pop,
            cpu_capacity_cus,
            cpu_allocated_cus: 0,
            mem_capacity_mb,
            mem_allocated_mb: 0,
            storage_capacity_gb,
            storage_allocated_gb: 0,
        }
    }

    pub fn fits_memory(&self, request: &ResourceRequest) -> bool {
        self.mem_allocated_mb + request.memory_mb <= self.mem_capacity_mb
    }

    pub fn fits_storage(&self, request: &ResourceRequest) -> bool {
        self.storage_allocated_gb + request.storage_gb <= self.storage_capacity_gb
    }

    pub(crate) fn charge(&mut self, request: &ResourceRequest) {
        self.cpu_allocated_cus += request.cpu_cus;
        self.mem_allocated_mb += request.memory_mb;
        self.storage_allocated_gb += request.storage_gb;
    }

    pub(crate) fn refund(&mut self, request: &ResourceRequest) {
        self.cpu_allocated_cus -= request.cpu_cus;
        self.mem_allocated_mb -= request.memory_mb;
        self.storage_allocated_gb -= request.storage_gb;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charge_and_refund_are_inverse() {
        let mut ledger = PopLedger::new(PopName::new("pop1"), 4, 1024, 50);
        let request = ResourceRequest {
            cpu_cus: 2,
            memory_mb: 256,
            storage_gb: 10,
        };
        ledger.charge(&request);
        assert_eq!(ledger.cpu_allocated_cus, 2);
        assert_eq!(ledger.mem_allocated_mb, 256);
        assert_eq!(ledger.storage_allocated_gb, 10);

        ledger.refund(&request);
        assert_eq!(ledger, PopLedger::new(PopName::new("pop1"), 4, 1024, 50));
    }

    #[test]
    fn hard_capacity_checks() {
        let mut ledger = PopLedger::new(PopName::new("pop1"), 4, 100, 10);
        let big = ResourceRequest {
            cpu_cus: 1,
            memory_mb: 101,
            storage_gb: 0,
        };
        assert!(!ledger.fits_memory(&big));
        assert!(ledger.fits_storage(&big));

        ledger.charge(&ResourceRequest {
            cpu_cus: 1,
            memory_mb: 60,
            storage_gb: 10,
        });
        assert!(!ledger.fits_memory(&ResourceRequest {
            cpu_cus: 1,
            memory_mb: 41,
            storage_gb: 0,
        }));
        assert!(!ledger.fits_storage(&ResourceRequest {
            cpu_cus: 1,
            memory_mb: 0,
            storage_gb: 1,
        }));
    }
}
