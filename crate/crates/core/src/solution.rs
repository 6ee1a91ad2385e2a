//! Explicit form of a scheduling map: every task pinned to an instance, a
//! vCPU and a start period.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{
    Catalog, ExecMode, InstanceId, JobSpec, Period, QueuedTask, TaskId, VmInstance,
    SECONDS_PER_HOUR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub instance: InstanceId,
    pub vcpu: u32,
    pub start: Period,
    pub mode: ExecMode,
}

/// One `X = 1` entry of the assignment: `task` starts at `placement`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task: TaskId,
    #[serde(flatten)]
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    /// Kept sorted by task id. A well-formed solution lists every task once;
    /// the validator reports duplicates and omissions.
    pub allocation: Vec<Assignment>,
    pub selected_vms: Vec<VmInstance>,
    pub d_spot: Period,
    /// Last busy period of every instance that holds at least one task.
    pub per_vm_end: BTreeMap<InstanceId, Period>,
    pub makespan: Period,
}

impl ScheduleSolution {
    pub fn new(selected_vms: Vec<VmInstance>, d_spot: Period) -> Self {
        ScheduleSolution {
            allocation: Vec::new(),
            selected_vms,
            d_spot,
            per_vm_end: BTreeMap::new(),
            makespan: 0,
        }
    }

    pub fn assign(&mut self, task: TaskId, placement: Placement) {
        let at = self.allocation.partition_point(|a| a.task <= task);
        self.allocation.insert(at, Assignment { task, placement });
    }

    pub fn placement(&self, task: TaskId) -> Option<&Placement> {
        let at = self.allocation.partition_point(|a| a.task < task);
        self.allocation
            .get(at)
            .filter(|a| a.task == task)
            .map(|a| &a.placement)
    }

    pub fn instance(&self, id: InstanceId) -> Option<&VmInstance> {
        self.selected_vms.iter().find(|v| v.id == id)
    }

    /// Interval `[start, end)` occupied by one assignment.
    pub fn interval_of(
        &self,
        a: &Assignment,
        job: &JobSpec,
        catalog: &Catalog,
    ) -> Result<(Period, Period), ModelError> {
        let spec = job.task(a.task).ok_or(ModelError::UnknownTask(a.task))?;
        let vm = self
            .instance(a.placement.instance)
            .ok_or(ModelError::UnknownInstance(a.placement.instance))?;
        let vt = catalog.get(vm.vm_type);
        let start = a.placement.start;
        Ok((start, start + vt.wall_time(spec.exec_on(vt.id), a.placement.mode)))
    }

    /// Recomputes `per_vm_end` and `makespan` from the allocation.
    pub fn evaluate(&mut self, job: &JobSpec, catalog: &Catalog) -> Result<(), ModelError> {
        let mut ends = BTreeMap::new();
        for a in &self.allocation {
            let (_, end) = self.interval_of(a, job, catalog)?;
            let e = ends.entry(a.placement.instance).or_insert(0);
            *e = (*e).max(end);
        }
        self.makespan = ends.values().copied().max().unwrap_or(0);
        self.per_vm_end = ends;
        Ok(())
    }

    /// Monetary cost implied by the static map: every used instance is billed
    /// from launch until its last busy period.
    pub fn cost(&self, catalog: &Catalog) -> f64 {
        self.per_vm_end
            .iter()
            .filter_map(|(id, &end)| {
                self.instance(*id)
                    .map(|vm| catalog.get(vm.vm_type).price * end as f64 / SECONDS_PER_HOUR)
            })
            .sum()
    }

    /// Rebuilds every instance's per-vCPU queues from the allocation, ordered
    /// by start period (ties by task id).
    pub fn fill_queues(&mut self) {
        for vm in &mut self.selected_vms {
            vm.queues.iter_mut().for_each(|q| q.clear());
        }
        let mut entries = self.allocation.clone();
        entries.sort_by_key(|a| (a.placement.start, a.task));
        for a in entries {
            let p = a.placement;
            if let Some(vm) = self.selected_vms.iter_mut().find(|v| v.id == p.instance) {
                if let Some(q) = vm.queues.get_mut(p.vcpu as usize) {
                    q.push_back(QueuedTask { task: a.task, mode: p.mode });
                }
            }
        }
    }

    pub fn tasks_on(&self, instance: InstanceId) -> impl Iterator<Item = &Assignment> {
        self.allocation
            .iter()
            .filter(move |a| a.placement.instance == instance)
    }

    /// Drops selected instances that hold no task.
    pub fn prune_unused(&mut self) {
        let used: std::collections::BTreeSet<InstanceId> =
            self.allocation.iter().map(|a| a.placement.instance).collect();
        self.selected_vms.retain(|v| used.contains(&v.id));
    }
}
