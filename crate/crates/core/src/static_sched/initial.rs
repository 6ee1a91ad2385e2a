use crate::error::ScheduleError;
use crate::model::{Catalog, EnvSpec, ExecMode, JobSpec, Period, VmTypeId};
use crate::solution::ScheduleSolution;

use super::plan::{PlanCtx, PlanState, VmPlan};
use super::wrr::WrrState;

/// True when `task` fits somewhere on `vm` without breaking memory and
/// finishing by `d_spot`.
pub fn check_schedule(ctx: &PlanCtx<'_>, task: usize, vm: &VmPlan, d_spot: Period) -> bool {
    let dur = ctx.duration(task, vm.vm_type, ExecMode::Burst);
    vm.earliest_slot(ctx, dur, ctx.job.tasks[task].rm, d_spot).is_some()
}

/// Greedy construction over the spot pool.
///
/// Tasks go in decreasing memory order. Each is placed first-fit on the
/// already selected VMs, cheapest first; otherwise a new VM is drawn from the
/// weighted round-robin. A drawn type that cannot host the task is skipped
/// for that task without consuming quota.
pub fn initial_plan(
    ctx: &PlanCtx<'_>,
    spot_pool: &[VmTypeId],
    d_spot: Period,
) -> Result<(PlanState, WrrState), ScheduleError> {
    let mut wrr = WrrState::new(ctx.catalog, spot_pool)?;
    let mut plan = PlanState::new(ctx.job.tasks.len());

    let mut order: Vec<usize> = (0..ctx.job.tasks.len()).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (&ctx.job.tasks[a], &ctx.job.tasks[b]);
        tb.rm.total_cmp(&ta.rm).then(ta.id.cmp(&tb.id))
    });

    for task in order {
        let mut selected: Vec<usize> = (0..plan.vms.len()).collect();
        selected.sort_by(|&a, &b| {
            let (va, vb) = (&plan.vms[a], &plan.vms[b]);
            ctx.catalog
                .get(va.vm_type)
                .price
                .total_cmp(&ctx.catalog.get(vb.vm_type).price)
                .then(va.id.cmp(&vb.id))
        });
        if selected
            .into_iter()
            .any(|vm| plan.place_earliest(ctx, task, vm, ExecMode::Burst, d_spot))
        {
            continue;
        }

        let mut rejected = Vec::new();
        loop {
            let Some(vm_type) = wrr.peek(&rejected) else {
                return Err(ScheduleError::ConstructionFailure {
                    task: ctx.job.tasks[task].id,
                    bound: d_spot,
                });
            };
            let candidate = VmPlan::new(crate::model::InstanceId(u32::MAX), vm_type);
            if check_schedule(ctx, task, &candidate, d_spot) {
                wrr.commit(vm_type);
                let vm = plan.add_vm(vm_type);
                let placed = plan.place_earliest(ctx, task, vm, ExecMode::Burst, d_spot);
                debug_assert!(placed);
                break;
            }
            rejected.push(vm_type);
        }
    }
    Ok((plan, wrr))
}

/// Explicit-form wrapper around [`initial_plan`].
pub fn initial_solution(
    job: &JobSpec,
    catalog: &Catalog,
    env: &EnvSpec,
    spot_pool: &[VmTypeId],
    d_spot: Period,
) -> Result<ScheduleSolution, ScheduleError> {
    let ctx = PlanCtx::new(job, catalog, env);
    let (plan, _) = initial_plan(&ctx, spot_pool, d_spot)?;
    Ok(plan.to_solution(&ctx, d_spot))
}
