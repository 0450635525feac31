//! Workspace memory accounting.
//!
//! The ledger tracks operator workspace only (distance blocks, candidate
//! buffers, conversion buffers). Inputs and final outputs are not charged.

use std::sync::Mutex;

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct State {
    current: u64,
    peak: u64,
}

/// A byte budget shared by every operator running on one (emulated) device.
#[derive(Debug)]
pub struct MemoryLedger {
    budget: u64,
    state: Mutex<State>,
}

impl MemoryLedger {
    pub fn new(budget_bytes: u64) -> Self {
        Self {
            budget: budget_bytes,
            state: Mutex::new(State::default()),
        }
    }

    /// A ledger that grants anything up to `u64::MAX`.
    pub fn unbounded() -> Self {
        Self::new(u64::MAX)
    }

    pub fn budget_bytes(&self) -> u64 {
        self.budget
    }

    pub fn current_bytes(&self) -> u64 {
        self.state.lock().unwrap().current
    }

    pub fn peak_bytes(&self) -> u64 {
        self.state.lock().unwrap().peak
    }

    pub fn remaining_bytes(&self) -> u64 {
        self.budget - self.current_bytes()
    }

    /// Reset the high-water mark to the current usage.
    pub fn reset_peak(&self) {
        let mut s = self.state.lock().unwrap();
        s.peak = s.current;
    }

    /// Reserve `bytes`. The grant is returned to the ledger when the guard drops.
    pub fn alloc(&self, bytes: u64) -> Result<Allocation<'_>> {
        let mut s = self.state.lock().unwrap();
        match s.current.checked_add(bytes) {
            Some(total) if total <= self.budget => {
                s.current = total;
                s.peak = s.peak.max(total);
                Ok(Allocation { ledger: self, bytes })
            }
            _ => Err(Error::BudgetExceeded {
                requested: bytes,
                current: s.current,
                budget: self.budget,
            }),
        }
    }

    /// Reserve room for `count` values of `bytes_each` bytes.
    pub fn alloc_values(&self, count: usize, bytes_each: usize) -> Result<Allocation<'_>> {
        self.alloc((count as u64).saturating_mul(bytes_each as u64))
    }

    fn release(&self, bytes: u64) {
        let mut s = self.state.lock().unwrap();
        debug_assert!(s.current >= bytes);
        s.current -= bytes;
    }
}

/// An outstanding grant. Dropping it frees the bytes.
#[derive(Debug)]
#[must_use = "dropping an allocation releases it immediately"]
pub struct Allocation<'a> {
    ledger: &'a MemoryLedger,
    bytes: u64,
}

impl Allocation<'_> {
    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    /// Grow this grant by `extra` bytes, failing without change if over budget.
    pub fn grow(&mut self, extra: u64) -> Result<()> {
        let more = self.ledger.alloc(extra)?;
        self.bytes += more.bytes;
        std::mem::forget(more);
        Ok(())
    }
}

impl Drop for Allocation<'_> {
    fn drop(&mut self) {
        self.ledger.release(self.bytes);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundary_grant_and_reject() {
        let ledger = MemoryLedger::new(100);
        let a = ledger.alloc(100).unwrap();
        assert_eq!(ledger.current_bytes(), 100);
        drop(a);

        let _half = ledger.alloc(50).unwrap();
        let err = ledger.alloc(51).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { requested: 51, current: 50, budget: 100 }));
        assert_eq!(ledger.current_bytes(), 50);
    }

    #[test]
    fn alloc_free_alloc_tracks_peak() {
        let ledger = MemoryLedger::new(100);
        let a = ledger.alloc(40).unwrap();
        drop(a);
        let _b = ledger.alloc(90).unwrap();
        assert_eq!(ledger.peak_bytes(), 90);
        assert_eq!(ledger.current_bytes(), 90);
    }

    #[test]
    fn single_oversized_request_is_rejected() {
        let ledger = MemoryLedger::new(64 << 20);
        assert!(ledger.alloc(80_000_000_000).is_err());
        assert!(ledger.alloc(u64::MAX).is_err());
        assert_eq!(ledger.peak_bytes(), 0);
    }

    #[test]
    fn grow_respects_budget() {
        let ledger = MemoryLedger::new(10);
        let mut a = ledger.alloc(4).unwrap();
        a.grow(6).unwrap();
        assert!(a.grow(1).is_err());
        assert_eq!(a.bytes(), 10);
        drop(a);
        assert_eq!(ledger.current_bytes(), 0);
    }

    #[test]
    fn concurrent_allocations_balance() {
        let ledger = MemoryLedger::new(1_000);
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    for _ in 0..1000 {
                        if let Ok(g) = ledger.alloc(100) {
                            assert!(ledger.current_bytes() <= 1_000);
                            drop(g);
                        }
                    }
                });
            }
        });
        assert_eq!(ledger.current_bytes(), 0);
        assert!(ledger.peak_bytes() <= 1_000);
    }

    proptest! {
        #[test]
        fn conservation_under_interleaving(ops in prop::collection::vec((any::<bool>(), 0u64..60), 0..80)) {
            let ledger = MemoryLedger::new(200);
            let mut live: Vec<Allocation<'_>> = Vec::new();
            for (is_alloc, x) in ops {
                if is_alloc || live.is_empty() {
                    if let Ok(g) = ledger.alloc(x) {
                        live.push(g);
                    }
                } else {
                    let idx = x as usize % live.len();
                    drop(live.swap_remove(idx));
                }
                let outstanding: u64 = live.iter().map(|g| g.bytes()).sum();
                prop_assert_eq!(ledger.current_bytes(), outstanding);
                prop_assert!(ledger.current_bytes() <= ledger.peak_bytes());
                prop_assert!(ledger.peak_bytes() <= 200);
            }
        }
    }
}
