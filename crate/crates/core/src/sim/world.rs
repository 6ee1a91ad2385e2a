//! Event loop and mutable state of one simulated execution.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::dynamic::{self, MigrationRequest, Termination};
use crate::error::SimError;
use crate::model::{
    Catalog, EnvSpec, ExecMode, InstanceId, JobSpec, Market, Period, QueuedTask, TaskId, VmInstance,
    VmState, VmTypeId, VmTypeSpec,
};
use crate::solution::ScheduleSolution;

use super::credits::{credit_tick, required_credits};
use super::events::{EventKind, SimEvent};
use super::run::{checkpoint_plan, remaining_from_fraction, TaskRun};
use super::trace::{Route, TraceRecord};

/// How the dynamic module reacts to hibernations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    /// Idle burstables may take migrated tasks in burst mode.
    pub burst: bool,
    /// Hibernated work waits for a resume until the last safe moment before
    /// it is migrated.
    pub defer_migration: bool,
}

impl Policy {
    pub const BURST_HADS: Policy = Policy { burst: true, defer_migration: false };
    pub const HADS_BASELINE: Policy = Policy { burst: false, defer_migration: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskPhase {
    Queued,
    Running,
    /// Started, then stopped by a hibernation.
    Frozen,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub id: TaskId,
    pub phase: TaskPhase,
    pub instance: InstanceId,
    pub vcpu: u32,
    pub mode: ExecMode,
    /// Fraction of the task secured by checkpoints and carried to the next run.
    pub saved: f64,
    pub run: Option<TaskRun>,
    /// Credits reserved on a burstable instance for this task.
    pub rcc: f64,
    pub epoch: u64,
    pub finished_at: Option<Period>,
    pub migrations: u32,
    /// Wall time spent taking checkpoints, over all runs.
    pub ckpt_wall: Period,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmRuntime {
    pub vm: VmInstance,
    /// Task index running on each vCPU.
    pub running: Vec<Option<usize>>,
    pub last_tick: Period,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub instances: Vec<VmInstance>,
    pub tasks: Vec<TaskState>,
    pub trace: Vec<TraceRecord>,
    /// Time of the last task completion, if the job finished.
    pub completed_at: Option<Period>,
    pub hibernations: u32,
    pub resumes: u32,
    pub on_demand_launched: u32,
    pub deadline_risks: Vec<(Period, TaskId)>,
}

pub struct World<'a> {
    pub job: &'a JobSpec,
    pub catalog: &'a Catalog,
    pub env: &'a EnvSpec,
    pub policy: Policy,
    pub now: Period,
    pub vms: BTreeMap<InstanceId, VmRuntime>,
    pub tasks: Vec<TaskState>,
    pub trace: Vec<TraceRecord>,
    pub hibernations: u32,
    pub resumes: u32,
    pub on_demand_launched: u32,
    pub deadline_risks: Vec<(Period, TaskId)>,
    index: BTreeMap<TaskId, usize>,
    queue: BinaryHeap<Reverse<SimEvent>>,
    seq: u64,
    next_instance: u32,
    applied_pairs: BTreeSet<u32>,
    open_tasks: usize,
    completed_at: Option<Period>,
    finished: bool,
}

fn integrity(at: Period, reason: impl Into<String>) -> SimError {
    SimError::Integrity { at, reason: reason.into() }
}

impl<'a> World<'a> {
    /// World at period 0 with every instance of `map` launched and the
    /// given hibernation events queued. The run is cut at `horizon`.
    pub fn new(
        job: &'a JobSpec,
        catalog: &'a Catalog,
        env: &'a EnvSpec,
        policy: Policy,
        map: &ScheduleSolution,
        injected: &[SimEvent],
        horizon: Period,
    ) -> Result<Self, SimError> {
        let index: BTreeMap<TaskId, usize> = job.tasks.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
        let mut world = World {
            job,
            catalog,
            env,
            policy,
            now: 0,
            vms: BTreeMap::new(),
            tasks: Vec::with_capacity(job.tasks.len()),
            trace: Vec::new(),
            hibernations: 0,
            resumes: 0,
            on_demand_launched: 0,
            deadline_risks: Vec::new(),
            index,
            queue: BinaryHeap::new(),
            seq: 0,
            next_instance: map.selected_vms.iter().map(|v| v.id.0 + 1).max().unwrap_or(0),
            applied_pairs: BTreeSet::new(),
            open_tasks: job.tasks.len(),
            completed_at: None,
            finished: false,
        };

        let mut seen = vec![None; job.tasks.len()];
        for a in &map.allocation {
            let i = *world
                .index
                .get(&a.task)
                .ok_or_else(|| integrity(0, format!("map assigns unknown task {}", a.task)))?;
            if seen[i].replace(a.placement).is_some() {
                return Err(integrity(0, format!("task {} assigned twice", a.task)));
            }
        }
        for (i, p) in seen.iter().enumerate() {
            let p = p.ok_or_else(|| integrity(0, format!("task {} is not assigned", job.tasks[i].id)))?;
            world.tasks.push(TaskState {
                id: job.tasks[i].id,
                phase: TaskPhase::Queued,
                instance: p.instance,
                vcpu: p.vcpu,
                mode: p.mode,
                saved: 0.0,
                run: None,
                rcc: 0.0,
                epoch: 0,
                finished_at: None,
                migrations: 0,
                ckpt_wall: 0,
            });
        }

        let mut ordered = map.selected_vms.clone();
        ordered.sort_by_key(|v| v.id);
        for mut vm in ordered {
            vm.launched_at = 0;
            vm.state = VmState::Busy;
            vm.queues.iter_mut().for_each(|q| q.clear());
            let vcpus = vm.queues.len();
            let id = vm.id;
            world.vms.insert(id, VmRuntime { vm, running: vec![None; vcpus], last_tick: 0, epoch: 0 });
            world.record_launch(id);
        }
        let mut entries: Vec<_> = map.allocation.clone();
        entries.sort_by_key(|a| (a.placement.start, a.task));
        for a in entries {
            let p = a.placement;
            let rt = world
                .vms
                .get_mut(&p.instance)
                .ok_or_else(|| integrity(0, format!("map uses unknown instance {}", p.instance)))?;
            let q = rt
                .vm
                .queues
                .get_mut(p.vcpu as usize)
                .ok_or_else(|| integrity(0, format!("no vCPU {} on {}", p.vcpu, p.instance)))?;
            q.push_back(QueuedTask { task: a.task, mode: p.mode });
        }
        let ids: Vec<InstanceId> = world.vms.keys().copied().collect();
        for id in ids {
            if world.vms[&id].vm.task_count() == 0 {
                world.vms.get_mut(&id).unwrap().vm.state = VmState::Idle;
            }
            world.schedule_lifecycle(id);
        }
        for e in injected {
            world.push(e.at, e.kind);
        }
        world.push(horizon, EventKind::SimEnd);
        if job.tasks.is_empty() {
            world.finish_job();
        }
        Ok(world)
    }

    fn push(&mut self, at: Period, kind: EventKind) {
        self.queue.push(Reverse(SimEvent { at, seq: self.seq, kind }));
        self.seq += 1;
    }

    fn schedule_lifecycle(&mut self, id: InstanceId) {
        let vm = &self.vms[&id].vm;
        let (boot, ac) = (vm.ready_at(self.env), vm.launched_at + vm.ac_len);
        self.push(boot, EventKind::Boot { instance: id });
        self.push(ac, EventKind::AcBoundary { instance: id });
    }

    fn record_launch(&mut self, id: InstanceId) {
        let vm = &self.vms[&id].vm;
        let spec = self.catalog.get(vm.vm_type);
        self.trace.push(TraceRecord::Launch {
            t: self.now,
            instance: id,
            vm_type: vm.vm_type,
            market: vm.market,
            price: spec.price,
        });
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn deadline(&self) -> Period {
        self.job.deadline
    }

    pub fn task_index(&self, id: TaskId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn spec_of(&self, id: InstanceId) -> &'a VmTypeSpec {
        self.catalog.get(self.vms[&id].vm.vm_type)
    }

    /// Pops and applies the next event. Returns false once the run is over.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.finished {
            return Ok(false);
        }
        let Some(Reverse(ev)) = self.queue.pop() else {
            self.finish_incomplete();
            return Ok(false);
        };
        self.now = self.now.max(ev.at);
        self.apply(ev.kind)?;
        Ok(!self.finished)
    }

    fn apply(&mut self, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::Hibernate { instance, pair } => self.on_hibernate(instance, pair),
            EventKind::Resume { instance, pair } => self.on_resume(instance, pair)?,
            EventKind::Boot { instance } => {
                if let Some(rt) = self.vms.get(&instance) {
                    if matches!(rt.vm.state, VmState::Busy | VmState::Idle) {
                        self.trace.push(TraceRecord::Boot { t: self.now, instance });
                        self.dispatch(instance);
                    }
                }
            }
            EventKind::VmIdle { instance } => {
                let rt = self.vms.get_mut(&instance).expect("idle event for a known instance");
                if rt.vm.state == VmState::Busy && rt.vm.task_count() == 0 {
                    rt.vm.state = VmState::Idle;
                    self.trace.push(TraceRecord::VmIdle { t: self.now, instance });
                }
            }
            EventKind::AcBoundary { instance } => self.on_ac_boundary(instance),
            EventKind::TaskFinish { task, instance, epoch } => self.on_finish(task, instance, epoch)?,
            EventKind::Checkpoint { task, instance, epoch } => self.on_checkpoint(task, instance, epoch),
            EventKind::DeferredMigration { instance, epoch } => {
                let rt = &self.vms[&instance];
                if rt.epoch == epoch && rt.vm.state == VmState::Hibernated {
                    let affected = self.affected_tasks(instance);
                    if !affected.is_empty() {
                        dynamic::burst_migration(
                            self,
                            &MigrationRequest { source: instance, affected, at: self.now },
                        );
                    }
                }
            }
            EventKind::SimEnd => self.finish_incomplete(),
        }
        Ok(())
    }

    // ---- credits -------------------------------------------------------

    fn burst_vcpus(&self, id: InstanceId) -> u32 {
        self.vms[&id]
            .running
            .iter()
            .flatten()
            .filter(|&&t| self.tasks[t].mode == ExecMode::Burst && self.tasks[t].phase == TaskPhase::Running)
            .count() as u32
    }

    /// Brings the credit balance of `id` up to now.
    pub fn tick(&mut self, id: InstanceId) {
        let spec = self.spec_of(id);
        if !spec.is_burstable() {
            return;
        }
        let burst = self.burst_vcpus(id);
        let now = self.now;
        let rt = self.vms.get_mut(&id).unwrap();
        let elapsed = now.saturating_sub(rt.last_tick);
        rt.last_tick = now;
        if credit_tick(&mut rt.vm, spec, elapsed, burst) {
            self.trace.push(TraceRecord::CreditsExhausted { t: now, instance: id });
            self.demote(id);
        }
    }

    fn demote(&mut self, id: InstanceId) {
        let spec = self.spec_of(id);
        let running: Vec<usize> = self.vms[&id].running.iter().flatten().copied().collect();
        for t in running {
            if self.tasks[t].mode != ExecMode::Burst {
                continue;
            }
            let now = self.now;
            let ts = &mut self.tasks[t];
            ts.mode = ExecMode::Baseline;
            let run = ts.run.as_mut().unwrap();
            run.advance(now);
            run.mode = ExecMode::Baseline;
            run.speed = spec.baseline_fraction;
            ts.epoch += 1;
            self.schedule_next(t);
        }
    }

    // ---- execution -----------------------------------------------------

    /// Starts queue heads on every free vCPU of a ready instance and marks
    /// the instance idle when it has nothing left.
    pub fn dispatch(&mut self, id: InstanceId) {
        let (state, ready) = {
            let vm = &self.vms[&id].vm;
            (vm.state, vm.ready_at(self.env))
        };
        if !matches!(state, VmState::Busy | VmState::Idle) {
            return;
        }
        if self.vms[&id].vm.task_count() == 0 {
            if state == VmState::Busy {
                self.push(self.now, EventKind::VmIdle { instance: id });
            }
            return;
        }
        self.vms.get_mut(&id).unwrap().vm.state = VmState::Busy;
        if self.now < ready {
            return;
        }
        let vcpus = self.vms[&id].running.len();
        for v in 0..vcpus {
            if self.vms[&id].running[v].is_some() {
                continue;
            }
            let Some(head) = self.vms[&id].vm.queues[v].front().copied() else {
                continue;
            };
            let t = self.index[&head.task];
            match self.tasks[t].phase {
                TaskPhase::Frozen => self.thaw(t, id, v),
                _ => self.start_task(t, id, v as u32),
            }
        }
    }

    fn start_task(&mut self, t: usize, id: InstanceId, vcpu: u32) {
        self.tick(id);
        let spec = self.spec_of(id);
        let ts = &self.tasks[t];
        let work = self.job.tasks[t].exec_on(spec.id);
        let ckpt = if spec.market == Market::Spot {
            checkpoint_plan(work, self.env.ckpt_overhead_budget, self.env.ckpt_unit_cost)
        } else {
            (0, 0.0)
        };
        let run = TaskRun::new(ts.id, id, vcpu, ts.mode, work, spec.speed(ts.mode), ts.saved, ckpt, self.now);
        self.trace.push(TraceRecord::TaskStart {
            t: self.now,
            instance: id,
            task: ts.id,
            vcpu,
            mode: ts.mode,
            work,
        });
        let ts = &mut self.tasks[t];
        ts.run = Some(run);
        ts.phase = TaskPhase::Running;
        ts.epoch += 1;
        self.vms.get_mut(&id).unwrap().running[vcpu as usize] = Some(t);
        self.schedule_next(t);
    }

    /// Continues a run frozen by a hibernation from where it stopped.
    fn thaw(&mut self, t: usize, id: InstanceId, v: usize) {
        let frozen_at = self.vms[&id]
            .vm
            .hibernation_intervals
            .last()
            .map_or(self.now, |&(s, _)| s);
        let now = self.now;
        let ts = &mut self.tasks[t];
        let run = ts.run.as_mut().expect("frozen task keeps its run");
        let pause_left = run.seg_start.saturating_sub(frozen_at);
        run.seg_start = now + pause_left;
        ts.phase = TaskPhase::Running;
        ts.epoch += 1;
        self.vms.get_mut(&id).unwrap().running[v] = Some(t);
        self.schedule_next(t);
    }

    fn schedule_next(&mut self, t: usize) {
        let ts = &self.tasks[t];
        let run = ts.run.as_ref().unwrap();
        let (at, kind) = match run.next_mark() {
            Some(m) => (
                run.time_of(m),
                EventKind::Checkpoint { task: ts.id, instance: ts.instance, epoch: ts.epoch },
            ),
            None => (
                run.finish_time(),
                EventKind::TaskFinish { task: ts.id, instance: ts.instance, epoch: ts.epoch },
            ),
        };
        self.push(at.max(self.now), kind);
    }

    fn live_run(&self, task: TaskId, instance: InstanceId, epoch: u64) -> Option<usize> {
        let t = self.task_index(task)?;
        let ts = &self.tasks[t];
        (ts.epoch == epoch && ts.instance == instance && ts.phase == TaskPhase::Running).then_some(t)
    }

    fn on_checkpoint(&mut self, task: TaskId, instance: InstanceId, epoch: u64) {
        let Some(t) = self.live_run(task, instance, epoch) else {
            return;
        };
        let now = self.now;
        let unit = self.env.ckpt_unit_cost;
        let ts = &mut self.tasks[t];
        let run = ts.run.as_mut().unwrap();
        run.advance(now);
        run.last_ckpt = run.progress;
        run.ckpt_count += 1;
        run.seg_start = now + unit;
        ts.ckpt_wall += unit;
        let progress = run.progress;
        self.trace.push(TraceRecord::Checkpoint { t: now, instance, task, progress });
        self.schedule_next(t);
    }

    fn on_finish(&mut self, task: TaskId, instance: InstanceId, epoch: u64) -> Result<(), SimError> {
        let Some(t) = self.live_run(task, instance, epoch) else {
            return Ok(());
        };
        self.tick(instance);
        let now = self.now;
        let ts = &mut self.tasks[t];
        let vcpu = ts.run.as_ref().unwrap().vcpu as usize;
        ts.run.as_mut().unwrap().advance(now);
        ts.phase = TaskPhase::Done;
        ts.finished_at = Some(now);
        let rcc = std::mem::take(&mut ts.rcc);
        let rt = self.vms.get_mut(&instance).unwrap();
        if rt.vm.state != VmState::Busy {
            return Err(integrity(now, format!("task {task} finished on {instance} in state {:?}", rt.vm.state)));
        }
        rt.running[vcpu] = None;
        let head = rt.vm.queues[vcpu].pop_front();
        debug_assert_eq!(head.map(|h| h.task), Some(task));
        rt.vm.reserved_credits = (rt.vm.reserved_credits - rcc).max(0.0);
        self.trace.push(TraceRecord::TaskFinish { t: now, instance, task });
        self.open_tasks -= 1;
        if self.open_tasks == 0 {
            self.finish_job();
        } else {
            self.dispatch(instance);
        }
        Ok(())
    }

    // ---- hibernation ---------------------------------------------------

    /// Unfinished tasks of `id`: started ones with a checkpoint first, then
    /// other started ones, then queued ones; ties by task id.
    pub fn affected_tasks(&self, id: InstanceId) -> Vec<TaskId> {
        let mut tasks: Vec<(u8, TaskId)> = self.vms[&id]
            .vm
            .tasks()
            .map(|q| {
                let ts = &self.tasks[self.index[&q.task]];
                let rank = match (&ts.phase, &ts.run) {
                    (TaskPhase::Frozen | TaskPhase::Running, Some(r)) if r.last_ckpt > 0.0 => 0,
                    (TaskPhase::Frozen | TaskPhase::Running, _) => 1,
                    _ => 2,
                };
                (rank, q.task)
            })
            .collect();
        tasks.sort();
        tasks.into_iter().map(|(_, t)| t).collect()
    }

    fn on_hibernate(&mut self, id: InstanceId, pair: u32) {
        let Some(rt) = self.vms.get(&id) else {
            return;
        };
        if rt.vm.market != Market::Spot || !matches!(rt.vm.state, VmState::Busy | VmState::Idle) {
            let what = format!("hibernate in state {:?}", rt.vm.state).to_lowercase();
            self.trace.push(TraceRecord::Discarded { t: self.now, instance: id, what });
            return;
        }
        let now = self.now;
        let running: Vec<usize> = rt.running.iter().flatten().copied().collect();
        for t in running {
            let ts = &mut self.tasks[t];
            ts.run.as_mut().unwrap().advance(now);
            ts.phase = TaskPhase::Frozen;
            ts.epoch += 1;
        }
        let rt = self.vms.get_mut(&id).unwrap();
        rt.running.iter_mut().for_each(|r| *r = None);
        rt.vm.state = VmState::Hibernated;
        rt.vm.hibernation_intervals.push((now, None));
        rt.epoch += 1;
        let epoch = rt.epoch;
        self.hibernations += 1;
        self.applied_pairs.insert(pair);
        let affected = self.affected_tasks(id);
        self.trace.push(TraceRecord::Hibernate { t: now, instance: id, affected: affected.clone() });
        if affected.is_empty() {
            return;
        }
        if self.policy.defer_migration {
            let at = self.deferred_migration_time(&affected);
            self.push(at, EventKind::DeferredMigration { instance: id, epoch });
        } else {
            dynamic::burst_migration(self, &MigrationRequest { source: id, affected, at: now });
        }
    }

    /// Latest moment at which the affected work, list-scheduled longest
    /// first at the slowest on-demand speed, still fits on one fresh
    /// on-demand instance with the fewest vCPUs.
    fn deferred_migration_time(&self, affected: &[TaskId]) -> Period {
        let od = self.catalog.of_market(Market::OnDemand);
        let vcpus = od.iter().map(|&ty| self.catalog.get(ty).vcpus).min().unwrap_or(1).max(1);
        let mut work: Vec<Period> = affected
            .iter()
            .map(|&task| {
                let t = self.index[&task];
                od.iter()
                    .map(|&ty| remaining_from_fraction(self.saved_fraction(t), self.job.tasks[t].exec_on(ty)))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        work.sort_unstable_by(|a, b| b.cmp(a));
        let mut tails = vec![0; vcpus as usize];
        for w in work {
            let k = (0..tails.len()).min_by_key(|&k| (tails[k], k)).unwrap();
            tails[k] += w;
        }
        let span = tails.into_iter().max().unwrap_or(0);
        self.job
            .deadline
            .saturating_sub(self.env.startup_overhead + span + 1)
            .max(self.now)
    }

    fn on_resume(&mut self, id: InstanceId, pair: u32) -> Result<(), SimError> {
        if !self.applied_pairs.remove(&pair) {
            self.trace.push(TraceRecord::Discarded {
                t: self.now,
                instance: id,
                what: "resume without hibernation".into(),
            });
            return Ok(());
        }
        let now = self.now;
        let rt = self.vms.get_mut(&id).unwrap();
        if rt.vm.state != VmState::Hibernated {
            return Err(integrity(now, format!("resume of {id} in state {:?}", rt.vm.state)));
        }
        if let Some(last) = rt.vm.hibernation_intervals.last_mut() {
            last.1 = Some(now);
        }
        rt.epoch += 1;
        let idle = rt.vm.task_count() == 0;
        rt.vm.state = if idle { VmState::Idle } else { VmState::Busy };
        self.resumes += 1;
        self.trace.push(TraceRecord::Resume { t: now, instance: id });
        if idle {
            dynamic::work_stealing(self, id);
        } else {
            self.dispatch(id);
        }
        Ok(())
    }

    fn on_ac_boundary(&mut self, id: InstanceId) {
        if self.vms[&id].vm.state == VmState::Terminated {
            return;
        }
        self.trace.push(TraceRecord::AcBoundary { t: self.now, instance: id });
        if self.is_idle(id) {
            dynamic::work_stealing(self, id);
        }
        if dynamic::termination_policy(&self.vms[&id].vm, self.is_idle(id)) == Termination::Terminate {
            self.terminate(id);
        } else {
            let ac = self.vms[&id].vm.ac_len;
            self.push(self.now + ac, EventKind::AcBoundary { instance: id });
        }
    }

    fn terminate(&mut self, id: InstanceId) {
        self.tick(id);
        let now = self.now;
        let rt = self.vms.get_mut(&id).unwrap();
        if let Some(last) = rt.vm.hibernation_intervals.last_mut() {
            if last.1.is_none() {
                last.1 = Some(now);
            }
        }
        rt.vm.state = VmState::Terminated;
        rt.vm.terminated_at = Some(now);
        self.trace.push(TraceRecord::Terminate { t: now, instance: id });
    }

    fn terminate_all(&mut self) {
        let ids: Vec<InstanceId> = self.vms.keys().copied().collect();
        for id in ids {
            if self.vms[&id].vm.state != VmState::Terminated {
                self.terminate(id);
            }
        }
    }

    fn finish_job(&mut self) {
        self.completed_at = Some(self.now);
        self.terminate_all();
        self.trace.push(TraceRecord::SimEnd { t: self.now, completed: true });
        self.finished = true;
    }

    fn finish_incomplete(&mut self) {
        if self.finished {
            return;
        }
        self.terminate_all();
        self.trace.push(TraceRecord::SimEnd { t: self.now, completed: false });
        self.finished = true;
    }

    // ---- queries used by the dynamic module ----------------------------

    /// Active, not hibernated and holding no task.
    pub fn is_idle(&self, id: InstanceId) -> bool {
        let vm = &self.vms[&id].vm;
        matches!(vm.state, VmState::Busy | VmState::Idle) && vm.task_count() == 0
    }

    pub fn is_busy(&self, id: InstanceId) -> bool {
        let vm = &self.vms[&id].vm;
        matches!(vm.state, VmState::Busy | VmState::Idle) && vm.task_count() > 0
    }

    /// Fraction of task `t` that a restart would keep.
    pub fn saved_fraction(&self, t: usize) -> f64 {
        let ts = &self.tasks[t];
        match (&ts.phase, &ts.run) {
            (TaskPhase::Frozen | TaskPhase::Running, Some(run)) => run.saved_fraction(),
            _ => ts.saved,
        }
    }

    /// Wall time task `t` would need on `target` in `mode`, checkpoints included.
    pub fn remaining_wall(&self, t: usize, target: InstanceId, mode: ExecMode) -> Period {
        let spec = self.spec_of(target);
        let work = self.job.tasks[t].exec_on(spec.id);
        let ckpt = if spec.market == Market::Spot {
            checkpoint_plan(work, self.env.ckpt_overhead_budget, self.env.ckpt_unit_cost)
        } else {
            (0, 0.0)
        };
        let probe = TaskRun::new(
            self.tasks[t].id,
            target,
            0,
            mode,
            work,
            spec.speed(mode),
            self.saved_fraction(t),
            ckpt,
            0,
        );
        probe.projected_end(self.env.ckpt_unit_cost)
    }

    /// Projected start of every task queued on `v` and the time `v` frees up.
    pub fn vcpu_schedule(&self, id: InstanceId, v: usize) -> (Vec<(TaskId, Period)>, Period) {
        let rt = &self.vms[&id];
        let mut at = self.now.max(rt.vm.ready_at(self.env));
        let mut starts = Vec::new();
        for (k, q) in rt.vm.queues[v].iter().enumerate() {
            let t = self.index[&q.task];
            if k == 0 && rt.running[v] == Some(t) {
                at = at.max(self.tasks[t].run.as_ref().unwrap().projected_end(self.env.ckpt_unit_cost));
                continue;
            }
            starts.push((q.task, at));
            at += self.remaining_wall(t, id, q.mode);
        }
        (starts, at)
    }

    /// vCPU of `id` that frees up first, and when.
    pub fn earliest_vcpu(&self, id: InstanceId) -> (u32, Period) {
        (0..self.vms[&id].running.len())
            .map(|v| (v as u32, self.vcpu_schedule(id, v).1))
            .min_by_key(|&(v, end)| (end, v))
            .expect("instances have at least one vCPU")
    }

    pub fn instance_end(&self, id: InstanceId) -> Period {
        (0..self.vms[&id].running.len())
            .map(|v| self.vcpu_schedule(id, v).1)
            .max()
            .unwrap_or(self.now)
    }

    pub fn memory_in_use(&self, id: InstanceId) -> f64 {
        self.vms[&id]
            .vm
            .tasks()
            .map(|q| self.job.tasks[self.index[&q.task]].rm)
            .sum()
    }

    /// Not-started tasks queued on `id` with their projected starts, latest
    /// first.
    pub fn stealable(&self, id: InstanceId) -> Vec<(TaskId, Period)> {
        let mut out: Vec<(Period, TaskId)> = (0..self.vms[&id].running.len())
            .flat_map(|v| self.vcpu_schedule(id, v).0)
            .filter(|&(task, _)| self.tasks[self.index[&task]].phase == TaskPhase::Queued)
            .map(|(task, at)| (at, task))
            .collect();
        out.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        out.into_iter().map(|(at, t)| (t, at)).collect()
    }

    /// Instances sorted by market rank (per `rank`), price, then id.
    pub fn sorted_instances(&self, rank: impl Fn(Market) -> u8) -> Vec<InstanceId> {
        let mut ids: Vec<InstanceId> = self.vms.keys().copied().collect();
        ids.sort_by(|a, b| {
            let (sa, sb) = (self.spec_of(*a), self.spec_of(*b));
            rank(sa.market)
                .cmp(&rank(sb.market))
                .then(sa.price.total_cmp(&sb.price))
                .then(a.cmp(b))
        });
        ids
    }

    /// On-demand types that may still be launched, cheapest first.
    pub fn launchable_on_demand(&self) -> Vec<VmTypeId> {
        let mut types: Vec<VmTypeId> = self
            .catalog
            .of_market(Market::OnDemand)
            .into_iter()
            .filter(|&ty| {
                let alive = self
                    .vms
                    .values()
                    .filter(|rt| rt.vm.vm_type == ty && rt.vm.state != VmState::Terminated)
                    .count();
                alive < self.catalog.get(ty).max_instances as usize
            })
            .collect();
        types.sort_by(|&a, &b| self.catalog.get(a).price.total_cmp(&self.catalog.get(b).price).then(a.cmp(&b)));
        types
    }

    pub fn launch_on_demand(&mut self, vm_type: VmTypeId) -> InstanceId {
        let id = InstanceId(self.next_instance);
        self.next_instance += 1;
        let spec = self.catalog.get(vm_type);
        let mut vm = VmInstance::new(id, spec, self.now, self.env.ac_len);
        vm.state = VmState::Busy;
        let vcpus = spec.vcpus as usize;
        self.vms.insert(id, VmRuntime { vm, running: vec![None; vcpus], last_tick: self.now, epoch: 0 });
        self.on_demand_launched += 1;
        self.record_launch(id);
        self.schedule_lifecycle(id);
        id
    }

    /// Moves task `task` onto vCPU `vcpu` of `target` and starts it if the
    /// vCPU is free. Work since the task's last checkpoint is dropped.
    pub fn migrate(&mut self, task: TaskId, target: InstanceId, vcpu: u32, mode: ExecMode, route: Route, attempt: u8) {
        let t = self.index[&task];
        let source = self.tasks[t].instance;
        let saved = self.saved_fraction(t);
        {
            let src = self.vms.get_mut(&source).unwrap();
            for q in &mut src.vm.queues {
                q.retain(|e| e.task != task);
            }
            for r in &mut src.running {
                if *r == Some(t) {
                    *r = None;
                }
            }
        }
        let spec = self.spec_of(target);
        let rcc = if spec.is_burstable() && mode == ExecMode::Burst {
            let work = remaining_from_fraction(saved, self.job.tasks[t].exec_on(spec.id));
            required_credits(work, spec.burst_period)
        } else {
            0.0
        };
        self.tick(target);
        let ts = &mut self.tasks[t];
        ts.saved = saved;
        ts.run = None;
        ts.phase = TaskPhase::Queued;
        ts.instance = target;
        ts.vcpu = vcpu;
        ts.mode = mode;
        ts.epoch += 1;
        ts.migrations += 1;
        ts.rcc = rcc;
        let rt = self.vms.get_mut(&target).unwrap();
        rt.vm.reserved_credits += rcc;
        rt.vm.queues[vcpu as usize].push_back(QueuedTask { task, mode });
        rt.vm.state = VmState::Busy;
        self.trace.push(TraceRecord::Migrate { t: self.now, task, source, target, route, attempt, mode });
        self.dispatch(target);
        if matches!(self.vms[&source].vm.state, VmState::Busy | VmState::Idle) {
            self.dispatch(source);
        }
    }

    pub fn flag_risk(&mut self, task: TaskId, source: InstanceId) {
        self.deadline_risks.push((self.now, task));
        self.trace.push(TraceRecord::DeadlineRisk { t: self.now, task, source });
    }

    pub fn into_outcome(self) -> SimOutcome {
        SimOutcome {
            instances: self.vms.into_values().map(|rt| rt.vm).collect(),
            tasks: self.tasks,
            trace: self.trace,
            completed_at: self.completed_at,
            hibernations: self.hibernations,
            resumes: self.resumes,
            on_demand_launched: self.on_demand_launched,
            deadline_risks: self.deadline_risks,
        }
    }
}

/// Runs a map to completion (or to `horizon`) under `policy` with the given
/// hibernation events.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    job: &JobSpec,
    catalog: &Catalog,
    env: &EnvSpec,
    policy: Policy,
    map: &ScheduleSolution,
    injected: &[SimEvent],
    horizon: Period,
) -> Result<SimOutcome, SimError> {
    let mut world = World::new(job, catalog, env, policy, map, injected, horizon)?;
    while world.step()? {}
    Ok(world.into_outcome())
}
