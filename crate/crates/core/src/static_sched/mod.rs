//! Primary (static) scheduling: greedy construction over spot VMs, iterated
//! local search, and burstable-instance allocation.

mod burst;
mod ils;
mod initial;
mod local_search;
pub mod plan;
pub mod wrr;

use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;

pub use burst::{burst_allocation, burst_allocation_plan};
pub use ils::{ils, ils_plan, IlsOutcome, IlsTrace};
pub use initial::{check_schedule, initial_plan, initial_solution};
pub use local_search::{local_search, moves_per_attempt};
pub use plan::{Move, PlanCtx, PlanState, Slot, VmPlan};
pub use wrr::WrrState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlsParams {
    pub max_iteration: u32,
    pub max_attempt: u32,
    pub swap_rate: f64,
    pub max_failed: u32,
    pub relax_rate: f64,
    pub burst_rate: f64,
    pub seed: u64,
}

impl Default for IlsParams {
    fn default() -> Self {
        IlsParams {
            max_iteration: 200,
            max_attempt: 50,
            swap_rate: 0.10,
            max_failed: 20,
            relax_rate: 0.25,
            burst_rate: 0.2,
            seed: 0,
        }
    }
}

impl IlsParams {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(ScheduleError::InvalidParams(format!("{name} must lie in ]0,1], got {v}")))
            }
        };
        if self.max_iteration < 1 || self.max_attempt < 1 || self.max_failed < 1 {
            return Err(ScheduleError::InvalidParams("iteration counts must be at least 1".into()));
        }
        unit("swap_rate", self.swap_rate)?;
        unit("relax_rate", self.relax_rate)?;
        unit("burst_rate", self.burst_rate)
    }
}
