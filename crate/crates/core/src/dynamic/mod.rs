//! Reactions to hibernations and idle VMs: task migration, work stealing
//! and the allocation-cycle termination rule.

use serde::{Deserialize, Serialize};

use crate::model::{ExecMode, InstanceId, Market, Period, TaskId, VmInstance, VmState};
use crate::sim::trace::Route;
use crate::sim::world::World;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationRequest {
    pub source: InstanceId,
    pub affected: Vec<TaskId>,
    pub at: Period,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub task: TaskId,
    pub source: InstanceId,
    pub target: InstanceId,
    pub route: Route,
    pub attempt: u8,
    pub mode: ExecMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Keep,
    Terminate,
}

/// At an allocation-cycle boundary only idle non-burstable instances stop.
pub fn termination_policy(vm: &VmInstance, idle: bool) -> Termination {
    let active = matches!(vm.state, VmState::Busy | VmState::Idle);
    if active && idle && !vm.is_burstable() {
        Termination::Terminate
    } else {
        Termination::Keep
    }
}

fn spot_first(m: Market) -> u8 {
    match m {
        Market::Spot => 0,
        Market::OnDemand => 1,
        Market::Burstable => 2,
    }
}

fn on_demand_first(m: Market) -> u8 {
    match m {
        Market::OnDemand => 0,
        Market::Spot => 1,
        Market::Burstable => 2,
    }
}

/// Whether `task` can move to `target` in `mode`: memory fits, the task ends
/// by the deadline on the earliest free vCPU, and on a spot target the time
/// left before the deadline stays strictly above the longest task there.
pub fn check_migration(world: &World<'_>, task: TaskId, target: InstanceId, mode: ExecMode) -> bool {
    let Some(t) = world.task_index(task) else {
        return false;
    };
    let Some(rt) = world.vms.get(&target) else {
        return false;
    };
    if !matches!(rt.vm.state, VmState::Busy | VmState::Idle) {
        return false;
    }
    let spec = world.spec_of(target);
    if world.memory_in_use(target) + world.job.tasks[t].rm > spec.memory_mb() {
        return false;
    }
    let (_, free_at) = world.earliest_vcpu(target);
    let finish = free_at + world.remaining_wall(t, target, mode);
    let deadline = world.deadline();
    if finish > deadline {
        return false;
    }
    if spec.market == Market::Spot {
        let end = world.instance_end(target).max(finish);
        let longest = rt
            .vm
            .tasks()
            .map(|q| world.job.tasks[world.task_index(q.task).unwrap()].exec_on(spec.id))
            .chain(std::iter::once(world.job.tasks[t].exec_on(spec.id)))
            .max()
            .unwrap_or(0);
        return deadline - end > longest;
    }
    true
}

fn place(world: &mut World<'_>, task: TaskId, source: InstanceId, target: InstanceId, mode: ExecMode, route: Route, attempt: u8) -> Decision {
    let (vcpu, _) = world.earliest_vcpu(target);
    world.migrate(task, target, vcpu, mode, route, attempt);
    Decision { task, source, target, route, attempt, mode }
}

/// Finds a new home for every affected task of a hibernated instance.
///
/// Per task, in order: an idle burstable with enough spare credits (burst
/// mode, only when the policy allows it); an idle regular instance, spot
/// first; a busy regular instance, spot first; a fresh on-demand instance
/// that can still meet the deadline. A task with no such target is flagged
/// and sent to a fresh on-demand or the earliest-free busy instance anyway,
/// or left in place when neither exists.
pub fn burst_migration(world: &mut World<'_>, req: &MigrationRequest) -> Vec<Decision> {
    let mut decisions = Vec::new();
    for &task in &req.affected {
        let Some(t) = world.task_index(task) else {
            continue;
        };
        if world.tasks[t].instance != req.source {
            continue;
        }
        if let Some(d) = migrate_one(world, task, t, req.source) {
            decisions.push(d);
            continue;
        }
        world.flag_risk(task, req.source);
        if let Some(&ty) = world.launchable_on_demand().first() {
            let id = world.launch_on_demand(ty);
            decisions.push(place(world, task, req.source, id, ExecMode::Burst, Route::Fallback, 5));
            continue;
        }
        let busy = world
            .sorted_instances(spot_first)
            .into_iter()
            .filter(|&id| id != req.source && world.is_busy(id) && !world.spec_of(id).is_burstable())
            .min_by_key(|&id| (world.earliest_vcpu(id).1, id));
        if let Some(id) = busy {
            decisions.push(place(world, task, req.source, id, ExecMode::Burst, Route::Fallback, 5));
        }
    }
    decisions
}

fn migrate_one(world: &mut World<'_>, task: TaskId, t: usize, source: InstanceId) -> Option<Decision> {
    if world.policy.burst {
        for id in world.sorted_instances(spot_first) {
            let spec = world.spec_of(id);
            if !spec.is_burstable() || !world.is_idle(id) {
                continue;
            }
            world.tick(id);
            let work = crate::sim::run::remaining_from_fraction(world.saved_fraction(t), world.job.tasks[t].exec_on(spec.id));
            let rcc = crate::sim::credits::required_credits(work, spec.burst_period);
            let vm = &world.vms[&id].vm;
            if vm.cc - vm.reserved_credits > rcc && check_migration(world, task, id, ExecMode::Burst) {
                return Some(place(world, task, source, id, ExecMode::Burst, Route::IdleBurstable, 1));
            }
        }
    }
    let regular: Vec<InstanceId> = world
        .sorted_instances(spot_first)
        .into_iter()
        .filter(|&id| id != source && !world.spec_of(id).is_burstable())
        .collect();
    for &id in &regular {
        if world.is_idle(id) && check_migration(world, task, id, ExecMode::Burst) {
            return Some(place(world, task, source, id, ExecMode::Burst, Route::IdleRegular, 2));
        }
    }
    for &id in &regular {
        if world.is_busy(id) && check_migration(world, task, id, ExecMode::Burst) {
            return Some(place(world, task, source, id, ExecMode::Burst, Route::BusyRegular, 3));
        }
    }
    let deadline = world.deadline();
    for ty in world.launchable_on_demand() {
        let work = crate::sim::run::remaining_from_fraction(world.saved_fraction(t), world.job.tasks[t].exec_on(ty));
        if world.now + world.env.startup_overhead + work < deadline {
            let id = world.launch_on_demand(ty);
            return Some(place(world, task, source, id, ExecMode::Burst, Route::NewOnDemand, 4));
        }
    }
    None
}

/// Pulls queued, not yet started tasks from busy regular instances onto
/// `idle`, on-demand sources first, latest projected start first. A task
/// moves only if it would finish earlier on `idle`. A burstable target takes
/// a single task in baseline mode.
pub fn work_stealing(world: &mut World<'_>, idle: InstanceId) -> Vec<Decision> {
    let mut decisions = Vec::new();
    if !world.is_idle(idle) {
        return decisions;
    }
    let burstable = world.spec_of(idle).is_burstable();
    let mode = if burstable { ExecMode::Baseline } else { ExecMode::Burst };
    let sources: Vec<InstanceId> = world
        .sorted_instances(on_demand_first)
        .into_iter()
        .filter(|&id| id != idle && world.is_busy(id) && !world.spec_of(id).is_burstable())
        .collect();
    for source in sources {
        loop {
            let pick = world
                .stealable(source)
                .into_iter()
                .find(|&(task, start)| steal_pays(world, task, start, source, idle, mode) && check_migration(world, task, idle, mode));
            let Some((task, _)) = pick else {
                break;
            };
            decisions.push(place(world, task, source, idle, mode, Route::Steal, 0));
            if burstable {
                return decisions;
            }
        }
    }
    decisions
}

/// True when `task`, due to start at `start` on `source`, would finish
/// earlier on `target`.
fn steal_pays(world: &World<'_>, task: TaskId, start: Period, source: InstanceId, target: InstanceId, mode: ExecMode) -> bool {
    let Some(t) = world.task_index(task) else {
        return false;
    };
    let queued = world.vms[&source].vm.tasks().find(|q| q.task == task).map_or(ExecMode::Burst, |q| q.mode);
    let here = start + world.remaining_wall(t, source, queued);
    let there = world.earliest_vcpu(target).1 + world.remaining_wall(t, target, mode);
    there < here
}
