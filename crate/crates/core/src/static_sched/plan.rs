//! Mutable working form of a schedule used by the construction and search
//! procedures. Every VM keeps its slots left-packed: a task starts at the
//! VM's boot time or at the end of another task on the same VM.

use crate::model::{
    Catalog, EnvSpec, ExecMode, InstanceId, JobSpec, Market, Period, TaskId, VmInstance, VmTypeId,
    SECONDS_PER_HOUR,
};
use crate::objective::Normalizer;
use crate::solution::{Placement, ScheduleSolution};

/// Read-only inputs shared by every planning step.
#[derive(Clone, Copy)]
pub struct PlanCtx<'a> {
    pub job: &'a JobSpec,
    pub catalog: &'a Catalog,
    pub env: &'a EnvSpec,
}

impl<'a> PlanCtx<'a> {
    pub fn new(job: &'a JobSpec, catalog: &'a Catalog, env: &'a EnvSpec) -> Self {
        PlanCtx { job, catalog, env }
    }

    pub fn duration(&self, task: usize, vm_type: VmTypeId, mode: ExecMode) -> Period {
        let vt = self.catalog.get(vm_type);
        vt.wall_time(self.job.tasks[task].exec_on(vm_type), mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    /// Index into `job.tasks`.
    pub task: usize,
    pub vcpu: u32,
    pub start: Period,
    pub end: Period,
    pub rm: f64,
    pub mode: ExecMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmPlan {
    pub id: InstanceId,
    pub vm_type: VmTypeId,
    pub slots: Vec<Slot>,
    end: Period,
}

impl VmPlan {
    pub fn new(id: InstanceId, vm_type: VmTypeId) -> Self {
        VmPlan { id, vm_type, slots: Vec::new(), end: 0 }
    }

    /// Last busy period, 0 when empty.
    pub fn end(&self) -> Period {
        self.end
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn refresh_end(&mut self) {
        self.end = self.slots.iter().map(|s| s.end).max().unwrap_or(0);
    }

    fn memory_peak(&self, from: Period, to: Period) -> f64 {
        let mut points = vec![from];
        points.extend(self.slots.iter().filter(|s| s.start > from && s.start < to).map(|s| s.start));
        points
            .into_iter()
            .map(|p| {
                self.slots
                    .iter()
                    .filter(|s| s.start <= p && p < s.end)
                    .map(|s| s.rm)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    fn vcpu_free(&self, vcpu: u32, from: Period, to: Period) -> bool {
        self.slots
            .iter()
            .all(|s| s.vcpu != vcpu || s.end <= from || to <= s.start)
    }

    /// Earliest `(vcpu, start)` where a task of `dur` seconds and `rm` MB fits
    /// without exceeding memory and finishes by `bound`.
    pub fn earliest_slot(
        &self,
        ctx: &PlanCtx<'_>,
        dur: Period,
        rm: f64,
        bound: Period,
    ) -> Option<(u32, Period)> {
        let vt = ctx.catalog.get(self.vm_type);
        let capacity = vt.memory_mb();
        if rm > capacity {
            return None;
        }
        let unconstrained = self.slots.iter().map(|s| s.rm).sum::<f64>() + rm <= capacity;
        let ready = ctx.env.startup_overhead;
        let mut candidates: Vec<Period> = std::iter::once(ready)
            .chain(self.slots.iter().map(|s| s.end).filter(|&e| e > ready))
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        for start in candidates {
            let end = start + dur;
            if end > bound {
                break;
            }
            if !unconstrained && self.memory_peak(start, end) + rm > capacity {
                continue;
            }
            if let Some(vcpu) = (0..vt.vcpus).find(|&k| self.vcpu_free(k, start, end)) {
                return Some((vcpu, start));
            }
        }
        None
    }

    pub fn push(&mut self, slot: Slot) {
        self.end = self.end.max(slot.end);
        self.slots.push(slot);
    }

    /// Removes `task` and re-packs the remaining slots in their former start
    /// order.
    pub fn remove(&mut self, ctx: &PlanCtx<'_>, task: usize) -> Option<Slot> {
        let at = self.slots.iter().position(|s| s.task == task)?;
        let removed = self.slots.remove(at);
        self.repack(ctx);
        Some(removed)
    }

    pub fn repack(&mut self, ctx: &PlanCtx<'_>) {
        let mut old = std::mem::take(&mut self.slots);
        old.sort_by_key(|s| (s.start, s.vcpu, s.task));
        self.end = 0;
        let vt = ctx.catalog.get(self.vm_type);
        if old.iter().map(|s| s.rm).sum::<f64>() <= vt.memory_mb() {
            // Gap-free per-vCPU tails give the same slots as the general search.
            let mut tails = vec![ctx.env.startup_overhead; vt.vcpus as usize];
            for s in old {
                let dur = s.end - s.start;
                let (k, &start) = tails.iter().enumerate().min_by_key(|&(k, &t)| (t, k)).expect("vcpus >= 1");
                tails[k] = start + dur;
                self.push(Slot { vcpu: k as u32, start, end: start + dur, ..s });
            }
            return;
        }
        for s in old {
            let dur = s.end - s.start;
            let (vcpu, start) = self
                .earliest_slot(ctx, dur, s.rm, Period::MAX)
                .expect("a task that fitted before fits an emptier VM");
            self.push(Slot { vcpu, start, end: start + dur, ..s });
        }
        self.refresh_end();
    }
}

/// A pending relocation of one task, see [`PlanState::propose_move`].
#[derive(Debug, Clone)]
pub struct Move {
    pub task: usize,
    pub src: usize,
    pub dest: usize,
    src_plan: Option<VmPlan>,
    dest_plan: VmPlan,
}

/// A complete working schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    pub vms: Vec<VmPlan>,
    /// VM index of every task (by position in `job.tasks`).
    pub loc: Vec<Option<usize>>,
    next_id: u32,
}

impl PlanState {
    pub fn new(task_count: usize) -> Self {
        PlanState { vms: Vec::new(), loc: vec![None; task_count], next_id: 0 }
    }

    pub fn with_first_id(task_count: usize, first_id: u32) -> Self {
        PlanState { next_id: first_id, ..Self::new(task_count) }
    }

    /// Adds an empty VM and returns its index.
    pub fn add_vm(&mut self, vm_type: VmTypeId) -> usize {
        let id = InstanceId(self.next_id);
        self.next_id += 1;
        self.vms.push(VmPlan::new(id, vm_type));
        self.vms.len() - 1
    }

    pub fn place(&mut self, ctx: &PlanCtx<'_>, task: usize, vm: usize, vcpu: u32, start: Period, mode: ExecMode) {
        let vm_type = self.vms[vm].vm_type;
        let dur = ctx.duration(task, vm_type, mode);
        let rm = ctx.job.tasks[task].rm;
        self.vms[vm].push(Slot { task, vcpu, start, end: start + dur, rm, mode });
        self.loc[task] = Some(vm);
    }

    /// Places `task` at the earliest feasible slot of `vm`; false when none
    /// ends by `bound`.
    pub fn place_earliest(&mut self, ctx: &PlanCtx<'_>, task: usize, vm: usize, mode: ExecMode, bound: Period) -> bool {
        let dur = ctx.duration(task, self.vms[vm].vm_type, mode);
        let rm = ctx.job.tasks[task].rm;
        match self.vms[vm].earliest_slot(ctx, dur, rm, bound) {
            Some((vcpu, start)) => {
                self.place(ctx, task, vm, vcpu, start, mode);
                true
            }
            None => false,
        }
    }

    pub fn unplace(&mut self, ctx: &PlanCtx<'_>, task: usize) -> Option<Slot> {
        let vm = self.loc[task].take()?;
        self.vms[vm].remove(ctx, task)
    }

    /// Copy of the plan with `task` moved to the earliest slot of `dest`, or
    /// `None` when it does not fit within `bound`.
    pub fn with_move(&self, ctx: &PlanCtx<'_>, task: usize, dest: usize, bound: Period) -> Option<PlanState> {
        let mv = self.propose_move(ctx, task, dest, bound)?;
        let mut next = self.clone();
        next.apply(mv);
        Some(next)
    }

    /// The two VMs touched by moving `task` to `dest`, rebuilt without
    /// changing the plan.
    pub fn propose_move(&self, ctx: &PlanCtx<'_>, task: usize, dest: usize, bound: Period) -> Option<Move> {
        let src = self.loc[task]?;
        let mut src_plan = self.vms[src].clone();
        src_plan.remove(ctx, task)?;
        let dur = ctx.duration(task, self.vms[dest].vm_type, ExecMode::Burst);
        let rm = ctx.job.tasks[task].rm;
        let mut dest_plan = if src == dest { src_plan.clone() } else { self.vms[dest].clone() };
        let (vcpu, start) = dest_plan.earliest_slot(ctx, dur, rm, bound)?;
        dest_plan.push(Slot { task, vcpu, start, end: start + dur, rm, mode: ExecMode::Burst });
        Some(Move { task, src, dest, src_plan: (src != dest).then_some(src_plan), dest_plan })
    }

    /// Fitness the plan would have after `mv`.
    pub fn fitness_after(&self, ctx: &PlanCtx<'_>, norm: &Normalizer, bound: Period, mv: &Move) -> f64 {
        let mut cost = 0.0;
        let mut makespan = 0;
        for (i, v) in self.vms.iter().enumerate() {
            let end = if i == mv.dest {
                mv.dest_plan.end()
            } else if i == mv.src {
                mv.src_plan.as_ref().map_or(v.end(), VmPlan::end)
            } else {
                v.end()
            };
            if end > bound {
                return f64::INFINITY;
            }
            cost += ctx.catalog.get(v.vm_type).price * end as f64 / SECONDS_PER_HOUR;
            makespan = makespan.max(end);
        }
        norm.weighted(ctx.env.alpha, cost, makespan)
    }

    pub fn apply(&mut self, mv: Move) {
        if let Some(p) = mv.src_plan {
            self.vms[mv.src] = p;
        }
        self.vms[mv.dest] = mv.dest_plan;
        self.loc[mv.task] = Some(mv.dest);
    }

    pub fn makespan(&self) -> Period {
        self.vms.iter().map(VmPlan::end).max().unwrap_or(0)
    }

    pub fn cost(&self, catalog: &Catalog) -> f64 {
        self.vms
            .iter()
            .map(|v| catalog.get(v.vm_type).price * v.end() as f64 / SECONDS_PER_HOUR)
            .sum()
    }

    /// Weighted objective; `+inf` if some VM runs past `bound`.
    pub fn fitness(&self, ctx: &PlanCtx<'_>, norm: &Normalizer, bound: Period) -> f64 {
        if self.vms.iter().any(|v| v.end() > bound) {
            return f64::INFINITY;
        }
        norm.weighted(ctx.env.alpha, self.cost(ctx.catalog), self.makespan())
    }

    pub fn is_complete(&self) -> bool {
        self.loc.iter().all(Option::is_some)
    }

    pub fn prune_empty(&mut self) {
        let keep: Vec<bool> = self.vms.iter().map(|v| !v.is_empty()).collect();
        let mut remap = vec![None; self.vms.len()];
        let mut n = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = Some(n);
                n += 1;
            }
        }
        let mut i = 0;
        self.vms.retain(|_| {
            let k = keep[i];
            i += 1;
            k
        });
        for l in &mut self.loc {
            *l = l.and_then(|v| remap[v]);
        }
    }

    pub fn used_vm_count(&self) -> usize {
        self.vms.iter().filter(|v| !v.is_empty()).count()
    }

    pub fn count_of_type(&self, vm_type: VmTypeId) -> usize {
        self.vms.iter().filter(|v| v.vm_type == vm_type).count()
    }

    pub fn vms_of_market<'b>(&'b self, catalog: &'b Catalog, market: Market) -> impl Iterator<Item = usize> + 'b {
        self.vms
            .iter()
            .enumerate()
            .filter(move |(_, v)| catalog.get(v.vm_type).market == market)
            .map(|(i, _)| i)
    }

    /// Explicit solution for this plan; instances are launched at period 0.
    pub fn to_solution(&self, ctx: &PlanCtx<'_>, d_spot: Period) -> ScheduleSolution {
        let selected = self
            .vms
            .iter()
            .map(|v| VmInstance::new(v.id, ctx.catalog.get(v.vm_type), 0, ctx.env.ac_len))
            .collect();
        let mut sol = ScheduleSolution::new(selected, d_spot);
        for v in &self.vms {
            for s in &v.slots {
                sol.assign(
                    ctx.job.tasks[s.task].id,
                    Placement { instance: v.id, vcpu: s.vcpu, start: s.start, mode: s.mode },
                );
            }
        }
        sol.evaluate(ctx.job, ctx.catalog).expect("plan references only its own tasks and VMs");
        sol.fill_queues();
        sol
    }

    /// Working plan for an explicit solution. Task ids not in the job are
    /// ignored.
    pub fn from_solution(ctx: &PlanCtx<'_>, sol: &ScheduleSolution) -> Self {
        let next_id = sol.selected_vms.iter().map(|v| v.id.0 + 1).max().unwrap_or(0);
        let mut plan = PlanState::with_first_id(ctx.job.tasks.len(), next_id);
        for vm in &sol.selected_vms {
            plan.vms.push(VmPlan::new(vm.id, vm.vm_type));
        }
        let index_of: std::collections::BTreeMap<TaskId, usize> =
            ctx.job.tasks.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
        for a in &sol.allocation {
            let (Some(&task), Some(vm)) = (
                index_of.get(&a.task),
                plan.vms.iter().position(|v| v.id == a.placement.instance),
            ) else {
                continue;
            };
            let p = a.placement;
            plan.place(ctx, task, vm, p.vcpu, p.start, p.mode);
        }
        plan
    }
}
