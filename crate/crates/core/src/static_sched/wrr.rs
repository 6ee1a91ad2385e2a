//! Smooth weighted round-robin over VM types, with a per-type instance quota.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ScheduleError};
use crate::model::{Catalog, VmTypeId};
use crate::objective::wrr_weight;

/// Integer weight scale: the heaviest type gets this weight.
pub const WEIGHT_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    vm_type: VmTypeId,
    weight: i64,
    current: i64,
    remaining: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrrState {
    entries: Vec<Entry>,
}

impl WrrState {
    /// Weights from Gflops per price, scaled so the heaviest type weighs
    /// [`WEIGHT_SCALE`] and every type weighs at least 1. Quotas start at each
    /// type's `max_instances`.
    pub fn new(catalog: &Catalog, types: &[VmTypeId]) -> Result<Self, ModelError> {
        let raw = types
            .iter()
            .map(|&t| wrr_weight(catalog.get(t)))
            .collect::<Result<Vec<f64>, _>>()?;
        let max = raw.iter().copied().fold(0.0, f64::max);
        let entries = types
            .iter()
            .zip(raw)
            .map(|(&vm_type, w)| {
                let scaled = if max > 0.0 { (w * WEIGHT_SCALE / max).round() } else { 1.0 };
                Entry {
                    vm_type,
                    weight: (scaled as i64).max(1),
                    current: 0,
                    remaining: catalog.get(vm_type).max_instances,
                }
            })
            .collect();
        Ok(WrrState { entries })
    }

    /// State with explicit integer weights and quotas.
    pub fn from_weights(weights: &[(VmTypeId, i64, u32)]) -> Self {
        WrrState {
            entries: weights
                .iter()
                .map(|&(vm_type, weight, remaining)| Entry {
                    vm_type,
                    weight: weight.max(1),
                    current: 0,
                    remaining,
                })
                .collect(),
        }
    }

    pub fn weight(&self, vm_type: VmTypeId) -> Option<i64> {
        self.entries.iter().find(|e| e.vm_type == vm_type).map(|e| e.weight)
    }

    pub fn remaining(&self, vm_type: VmTypeId) -> u32 {
        self.entries
            .iter()
            .find(|e| e.vm_type == vm_type)
            .map_or(0, |e| e.remaining)
    }

    pub fn is_exhausted(&self) -> bool {
        self.entries.iter().all(|e| e.remaining == 0)
    }

    /// Type the next draw would return, ignoring `excluded`, without
    /// changing the state.
    pub fn peek(&self, excluded: &[VmTypeId]) -> Option<VmTypeId> {
        self.entries
            .iter()
            .filter(|e| e.remaining > 0 && !excluded.contains(&e.vm_type))
            .fold(None::<&Entry>, |best, e| match best {
                Some(b) if b.current + b.weight >= e.current + e.weight => Some(b),
                _ => Some(e),
            })
            .map(|e| e.vm_type)
    }

    /// Accepts one instance of `vm_type`: advances the rotation as if it had
    /// been drawn and consumes one unit of its quota.
    pub fn commit(&mut self, vm_type: VmTypeId) {
        let total: i64 = self.entries.iter().filter(|e| e.remaining > 0).map(|e| e.weight).sum();
        for e in self.entries.iter_mut().filter(|e| e.remaining > 0) {
            e.current += e.weight;
        }
        if let Some(e) = self.entries.iter_mut().find(|e| e.vm_type == vm_type) {
            e.current -= total;
            e.remaining = e.remaining.saturating_sub(1);
        }
    }

    /// Draws and accepts the next type.
    pub fn get_wrr_vm(&mut self) -> Result<VmTypeId, ScheduleError> {
        let t = self.peek(&[]).ok_or(ScheduleError::CatalogExhausted)?;
        self.commit(t);
        Ok(t)
    }

    /// Consumes quota without touching the rotation (instances added outside
    /// the round-robin).
    pub fn take_quota(&mut self, vm_type: VmTypeId) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.vm_type == vm_type) {
            e.remaining = e.remaining.saturating_sub(1);
        }
    }

    /// `(type, remaining quota)` pairs in insertion order.
    pub fn quotas(&self) -> Vec<(VmTypeId, u32)> {
        self.entries.iter().map(|e| (e.vm_type, e.remaining)).collect()
    }
}
