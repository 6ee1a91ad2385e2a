//! The weighted cost/makespan objective, the internal spot bound and the
//! Gflops-per-dollar weight used to pick spot VMs.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{Catalog, EnvSpec, JobSpec, Market, Period, VmTypeId, VmTypeSpec, SECONDS_PER_HOUR};
use crate::solution::ScheduleSolution;

/// Internal makespan bound for spot instances: the deadline minus the time a
/// worst-case migration needs (boot plus the longest task on the slowest type).
pub fn compute_d_spot(job: &JobSpec, catalog: &Catalog, env: &EnvSpec) -> Result<Period, ModelError> {
    if catalog.types().iter().all(|t| t.market == Market::Spot) {
        return Err(ModelError::NoFallbackType);
    }
    let longest = job
        .tasks
        .iter()
        .flat_map(|t| catalog.types().iter().map(move |vt| t.exec_on(vt.id)))
        .max()
        .unwrap_or(0);
    let worst_case = env.startup_overhead + longest;
    if job.deadline <= worst_case {
        return Err(ModelError::InfeasibleDeadline { deadline: job.deadline, worst_case });
    }
    Ok(job.deadline - worst_case)
}

/// Scales cost and makespan into comparable units.
///
/// Cost is divided by the price of keeping one VM of every type in the
/// scheduling pool running for the whole deadline; makespan by the deadline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub cost_ub: f64,
    pub deadline: Period,
}

impl Normalizer {
    pub fn new<'a>(pool: impl IntoIterator<Item = &'a VmTypeSpec>, deadline: Period) -> Self {
        let hourly: f64 = pool.into_iter().map(|t| t.price).sum();
        Normalizer {
            cost_ub: hourly * deadline as f64 / SECONDS_PER_HOUR,
            deadline,
        }
    }

    pub fn for_types(catalog: &Catalog, ids: &[VmTypeId], deadline: Period) -> Self {
        Self::new(ids.iter().map(|&id| catalog.get(id)), deadline)
    }

    pub fn cost_norm(&self, cost: f64) -> f64 {
        if self.cost_ub > 0.0 {
            cost / self.cost_ub
        } else {
            0.0
        }
    }

    pub fn makespan_norm(&self, makespan: Period) -> f64 {
        makespan as f64 / self.deadline as f64
    }

    /// `alpha * cost_norm + (1 - alpha) * makespan_norm`.
    pub fn weighted(&self, alpha: f64, cost: f64, makespan: Period) -> f64 {
        alpha * self.cost_norm(cost) + (1.0 - alpha) * self.makespan_norm(makespan)
    }
}

/// Fitness of an evaluated solution; `+inf` when any instance runs past `d_spot`.
pub fn fitness(
    sol: &ScheduleSolution,
    catalog: &Catalog,
    norm: &Normalizer,
    env: &EnvSpec,
    d_spot: Period,
) -> f64 {
    if sol.per_vm_end.values().any(|&z| z > d_spot) {
        return f64::INFINITY;
    }
    norm.weighted(env.alpha, sol.cost(catalog), sol.makespan)
}

/// Gflops per dollar-hour.
pub fn wrr_weight(vt: &VmTypeSpec) -> Result<f64, ModelError> {
    if vt.price <= 0.0 {
        return Err(ModelError::UndefinedWeight(vt.id));
    }
    Ok(vt.gflops / vt.price)
}
