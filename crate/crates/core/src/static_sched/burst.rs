use crate::error::ScheduleError;
use crate::model::{Catalog, EnvSpec, ExecMode, JobSpec, Market, Period, VmTypeId};
use crate::solution::ScheduleSolution;

use super::plan::{PlanCtx, PlanState};

fn by_price(catalog: &Catalog, market: Market) -> Vec<VmTypeId> {
    let mut types = catalog.of_market(market);
    types.sort_by(|&a, &b| catalog.get(a).price.total_cmp(&catalog.get(b).price).then(a.cmp(&b)));
    types
}

/// Tasks on spot VMs that end after `d_spot`, latest end first.
fn violators(ctx: &PlanCtx<'_>, plan: &PlanState, d_spot: Period) -> Vec<usize> {
    let mut out: Vec<(Period, usize)> = plan
        .vms_of_market(ctx.catalog, Market::Spot)
        .flat_map(|v| plan.vms[v].slots.iter())
        .filter(|s| s.end > d_spot)
        .map(|s| (s.end, s.task))
        .collect();
    out.sort_by(|a, b| b.0.cmp(&a.0).then(ctx.job.tasks[a.1].id.cmp(&ctx.job.tasks[b.1].id)));
    out.into_iter().map(|(_, t)| t).collect()
}

fn place_on_demand(ctx: &PlanCtx<'_>, plan: &mut PlanState, task: usize, deadline: Period) -> bool {
    let od_types = by_price(ctx.catalog, Market::OnDemand);
    let mut existing: Vec<usize> = plan.vms_of_market(ctx.catalog, Market::OnDemand).collect();
    existing.sort_by(|&a, &b| {
        let (va, vb) = (&plan.vms[a], &plan.vms[b]);
        ctx.catalog
            .get(va.vm_type)
            .price
            .total_cmp(&ctx.catalog.get(vb.vm_type).price)
            .then(va.id.cmp(&vb.id))
    });
    if existing
        .into_iter()
        .any(|vm| plan.place_earliest(ctx, task, vm, ExecMode::Burst, deadline))
    {
        return true;
    }
    for vm_type in od_types {
        if plan.count_of_type(vm_type) >= ctx.catalog.get(vm_type).max_instances as usize {
            continue;
        }
        let vm = plan.add_vm(vm_type);
        if plan.place_earliest(ctx, task, vm, ExecMode::Burst, deadline) {
            return true;
        }
        plan.vms.pop();
    }
    false
}

/// Adds burstable instances to an ILS map.
///
/// `n = ceil(burst_rate * used VMs)` burstables are taken cheapest first.
/// Every task ending past `d_spot` on a spot VM moves to a free burstable
/// (one baseline task each) or else to the cheapest on-demand capacity.
/// Burstables left free then take the latest-finishing task they can
/// complete by `deadline`. Empty VMs are dropped.
pub fn burst_allocation_plan(
    ctx: &PlanCtx<'_>,
    mut plan: PlanState,
    burst_rate: f64,
    d_spot: Period,
    deadline: Period,
) -> Result<PlanState, ScheduleError> {
    plan.prune_empty();
    let want = (burst_rate * plan.vms.len() as f64).ceil() as usize;
    let mut burstables = Vec::new();
    'types: for vm_type in by_price(ctx.catalog, Market::Burstable) {
        let quota = ctx.catalog.get(vm_type).max_instances as usize;
        while plan.count_of_type(vm_type) < quota {
            if burstables.len() >= want {
                break 'types;
            }
            burstables.push(plan.add_vm(vm_type));
        }
    }

    let fits_baseline = |plan: &PlanState, vm: usize, task: usize| {
        plan.vms[vm].is_empty()
            && ctx.job.tasks[task].rm <= ctx.catalog.get(plan.vms[vm].vm_type).memory_mb()
            && ctx.env.startup_overhead + ctx.duration(task, plan.vms[vm].vm_type, ExecMode::Baseline)
                <= deadline
    };

    let mut failed = Vec::new();
    for task in violators(ctx, &plan, d_spot) {
        plan.unplace(ctx, task);
        if let Some(&vm) = burstables.iter().find(|&&b| fits_baseline(&plan, b, task)) {
            plan.place(ctx, task, vm, 0, ctx.env.startup_overhead, ExecMode::Baseline);
        } else if !place_on_demand(ctx, &mut plan, task, deadline) {
            failed.push(ctx.job.tasks[task].id);
        }
    }
    if !failed.is_empty() {
        failed.sort();
        return Err(ScheduleError::InfeasibleMap { tasks: failed });
    }

    for &b in &burstables {
        if !plan.vms[b].is_empty() {
            continue;
        }
        let mut candidates: Vec<(Period, usize)> = plan
            .vms
            .iter()
            .filter(|v| ctx.catalog.get(v.vm_type).market != Market::Burstable)
            .flat_map(|v| v.slots.iter().map(|s| (s.end, s.task)))
            .collect();
        candidates.sort_by(|a, b| b.0.cmp(&a.0).then(ctx.job.tasks[a.1].id.cmp(&ctx.job.tasks[b.1].id)));
        if let Some(&(_, task)) = candidates.iter().find(|&&(_, t)| fits_baseline(&plan, b, t)) {
            plan.unplace(ctx, task);
            plan.place(ctx, task, b, 0, ctx.env.startup_overhead, ExecMode::Baseline);
        }
    }
    plan.prune_empty();
    Ok(plan)
}

/// Explicit-form wrapper around [`burst_allocation_plan`].
pub fn burst_allocation(
    job: &JobSpec,
    catalog: &Catalog,
    env: &EnvSpec,
    sol: &ScheduleSolution,
    burst_rate: f64,
    d_spot: Period,
) -> Result<ScheduleSolution, ScheduleError> {
    let ctx = PlanCtx::new(job, catalog, env);
    let plan = PlanState::from_solution(&ctx, sol);
    let plan = burst_allocation_plan(&ctx, plan, burst_rate, d_spot, job.deadline)?;
    Ok(plan.to_solution(&ctx, d_spot))
}
