//! Feasibility checks of a [`ScheduleSolution`] against the memory, vCPU,
//! unique-allocation, spot-bound and makespan constraints.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{Catalog, EnvSpec, InstanceId, JobSpec, Period, TaskId};
use crate::solution::ScheduleSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    Memory,
    Vcpu,
    UniqueAllocation,
    SpotBound,
    Makespan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    Memory { instance: InstanceId, at: Period, used_mb: f64, capacity_mb: f64 },
    Vcpu { instance: InstanceId, at: Period, running: u32, vcpus: u32 },
    VcpuOverlap { instance: InstanceId, vcpu: u32, first: TaskId, second: TaskId },
    NoSuchVcpu { task: TaskId, instance: InstanceId, vcpu: u32 },
    Unallocated { task: TaskId },
    Duplicated { task: TaskId, count: usize },
    UnknownTask { task: TaskId },
    UnknownInstance { task: TaskId, instance: InstanceId },
    StartBeforeBoot { task: TaskId, start: Period, ready: Period },
    EndAfterRecordedEnd { task: TaskId, end: Period, recorded: Period },
    EndAfterBound { instance: InstanceId, end: Period, bound: Period },
    MakespanNotMax { recorded: Period, actual: Period },
    MakespanAfterDeadline { makespan: Period, deadline: Period },
}

impl Violation {
    pub fn constraint(&self) -> Constraint {
        use Violation::*;
        match self {
            Memory { .. } => Constraint::Memory,
            Vcpu { .. } | VcpuOverlap { .. } | NoSuchVcpu { .. } => Constraint::Vcpu,
            Unallocated { .. } | Duplicated { .. } | UnknownTask { .. } | UnknownInstance { .. } => {
                Constraint::UniqueAllocation
            }
            StartBeforeBoot { .. } | EndAfterRecordedEnd { .. } | EndAfterBound { .. } => {
                Constraint::SpotBound
            }
            MakespanNotMax { .. } | MakespanAfterDeadline { .. } => Constraint::Makespan,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, c: Constraint) -> bool {
        self.violations.iter().any(|v| v.constraint() == c)
    }
}

struct Interval {
    task: TaskId,
    instance: InstanceId,
    vcpu: u32,
    start: Period,
    end: Period,
    rm: f64,
}

fn intervals(
    sol: &ScheduleSolution,
    job: &JobSpec,
    catalog: &Catalog,
) -> Result<Vec<Interval>, ModelError> {
    sol.allocation
        .iter()
        .map(|a| {
            let (start, end) = sol.interval_of(a, job, catalog)?;
            let rm = job.task(a.task).ok_or(ModelError::UnknownTask(a.task))?.rm;
            Ok(Interval {
                task: a.task,
                instance: a.placement.instance,
                vcpu: a.placement.vcpu,
                start,
                end,
                rm,
            })
        })
        .collect()
}

/// Memory constraint at period `t`: the footprints of the tasks running on
/// each instance at `t` must fit its memory.
pub fn validate_memory(
    sol: &ScheduleSolution,
    job: &JobSpec,
    catalog: &Catalog,
    t: Period,
) -> Result<bool, ModelError> {
    let mut used: BTreeMap<InstanceId, f64> = BTreeMap::new();
    for iv in intervals(sol, job, catalog)? {
        if iv.start <= t && t < iv.end {
            *used.entry(iv.instance).or_default() += iv.rm;
        }
    }
    Ok(used.iter().all(|(id, &mb)| {
        let vm = sol.instance(*id).expect("interval() resolved the instance");
        mb <= catalog.get(vm.vm_type).memory_mb()
    }))
}

/// vCPU constraint at period `t`: no more tasks than vCPUs run on an
/// instance, and no vCPU runs two tasks at once.
pub fn validate_vcpu(
    sol: &ScheduleSolution,
    job: &JobSpec,
    catalog: &Catalog,
    t: Period,
) -> Result<bool, ModelError> {
    let mut running: BTreeMap<InstanceId, u32> = BTreeMap::new();
    let mut per_vcpu: BTreeSet<(InstanceId, u32)> = BTreeSet::new();
    for iv in intervals(sol, job, catalog)? {
        if iv.start <= t && t < iv.end {
            *running.entry(iv.instance).or_default() += 1;
            if !per_vcpu.insert((iv.instance, iv.vcpu)) {
                return Ok(false);
            }
            let vm = sol.instance(iv.instance).expect("resolved");
            if iv.vcpu >= catalog.get(vm.vm_type).vcpus {
                return Ok(false);
            }
        }
    }
    Ok(running.iter().all(|(id, &n)| {
        let vm = sol.instance(*id).expect("resolved");
        n <= catalog.get(vm.vm_type).vcpus
    }))
}

/// Lists every violated constraint. Spot instances are bounded by the
/// solution's `d_spot`; other instances by the job deadline.
pub fn validate_solution(
    sol: &ScheduleSolution,
    job: &JobSpec,
    catalog: &Catalog,
    env: &EnvSpec,
) -> ValidationReport {
    let mut violations = Vec::new();

    // unique allocation
    let mut counts: BTreeMap<TaskId, usize> = BTreeMap::new();
    for a in &sol.allocation {
        *counts.entry(a.task).or_default() += 1;
        if job.task(a.task).is_none() {
            violations.push(Violation::UnknownTask { task: a.task });
        }
        if sol.instance(a.placement.instance).is_none() {
            violations.push(Violation::UnknownInstance {
                task: a.task,
                instance: a.placement.instance,
            });
        }
    }
    for t in &job.tasks {
        match counts.get(&t.id) {
            None => violations.push(Violation::Unallocated { task: t.id }),
            Some(&n) if n > 1 => violations.push(Violation::Duplicated { task: t.id, count: n }),
            _ => {}
        }
    }
    if !violations.is_empty() {
        // intervals are meaningless for dangling references
        if violations.iter().any(|v| {
            matches!(v, Violation::UnknownTask { .. } | Violation::UnknownInstance { .. })
        }) {
            return ValidationReport { violations };
        }
    }

    let ivs = intervals(sol, job, catalog).expect("references checked above");

    let mut by_vm: BTreeMap<InstanceId, Vec<&Interval>> = BTreeMap::new();
    for iv in &ivs {
        by_vm.entry(iv.instance).or_default().push(iv);
    }

    let mut actual_end: BTreeMap<InstanceId, Period> = BTreeMap::new();
    for (&id, list) in &by_vm {
        let vm = sol.instance(id).expect("checked");
        let vt = catalog.get(vm.vm_type);
        let ready = vm.ready_at(env);

        for iv in list {
            if iv.vcpu >= vt.vcpus {
                violations.push(Violation::NoSuchVcpu { task: iv.task, instance: id, vcpu: iv.vcpu });
            }
            if iv.start < ready {
                violations.push(Violation::StartBeforeBoot { task: iv.task, start: iv.start, ready });
            }
            let end = actual_end.entry(id).or_insert(0);
            *end = (*end).max(iv.end);
            if let Some(&recorded) = sol.per_vm_end.get(&id) {
                if iv.end > recorded {
                    violations.push(Violation::EndAfterRecordedEnd {
                        task: iv.task,
                        end: iv.end,
                        recorded,
                    });
                }
            }
        }

        // pairwise overlap on the same vCPU
        for (i, a) in list.iter().enumerate() {
            for b in &list[i + 1..] {
                if a.vcpu == b.vcpu && a.start < b.end && b.start < a.end {
                    let (first, second) = if a.task <= b.task { (a.task, b.task) } else { (b.task, a.task) };
                    violations.push(Violation::VcpuOverlap { instance: id, vcpu: a.vcpu, first, second });
                }
            }
        }

        // memory and concurrency peak at some task start
        let mut starts: Vec<Period> = list.iter().map(|iv| iv.start).collect();
        starts.sort_unstable();
        starts.dedup();
        let mut mem_reported = false;
        let mut cpu_reported = false;
        for t in starts {
            let active: Vec<&&Interval> = list.iter().filter(|iv| iv.start <= t && t < iv.end).collect();
            let used: f64 = active.iter().map(|iv| iv.rm).sum();
            if !mem_reported && used > vt.memory_mb() {
                violations.push(Violation::Memory {
                    instance: id,
                    at: t,
                    used_mb: used,
                    capacity_mb: vt.memory_mb(),
                });
                mem_reported = true;
            }
            let running = active.len() as u32;
            if !cpu_reported && running > vt.vcpus {
                violations.push(Violation::Vcpu { instance: id, at: t, running, vcpus: vt.vcpus });
                cpu_reported = true;
            }
        }
    }

    // instance end bounds
    for (&id, &actual) in &actual_end {
        let vm = sol.instance(id).expect("checked");
        let z = sol.per_vm_end.get(&id).copied().unwrap_or(actual).max(actual);
        let bound = if vm.market.is_spot() { sol.d_spot } else { job.deadline };
        if z > bound {
            violations.push(Violation::EndAfterBound { instance: id, end: z, bound });
        }
    }

    let actual_makespan = actual_end.values().copied().max().unwrap_or(0);
    if !sol.per_vm_end.is_empty() || sol.makespan != 0 {
        let recorded_max = sol.per_vm_end.values().copied().max().unwrap_or(0).max(actual_makespan);
        if sol.makespan != recorded_max {
            violations.push(Violation::MakespanNotMax { recorded: sol.makespan, actual: recorded_max });
        }
    }
    let zt = sol.makespan.max(actual_makespan);
    if zt > job.deadline {
        violations.push(Violation::MakespanAfterDeadline { makespan: zt, deadline: job.deadline });
    }

    ValidationReport { violations }
}
