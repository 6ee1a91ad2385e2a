//! Exhaustive reference solver for toy instances.
//!
//! Tasks are placed in non-decreasing start order. A task may start at boot
//! time, at the end of a task already placed on the same instance, or on a
//! coarse grid. Every schedule can be shifted left until each start is boot
//! time or another task's end without raising cost or makespan, so the
//! candidate set keeps an optimum. Capacity is checked at each start point,
//! which is where concurrency peaks for intervals. Branches whose partial
//! objective already reaches the incumbent are cut.

use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::model::{Catalog, EnvSpec, ExecMode, JobSpec, Period, VmInstance, SECONDS_PER_HOUR};
use crate::objective::Normalizer;
use crate::solution::{Placement, ScheduleSolution};

pub const MAX_TASKS: usize = 6;
pub const MAX_INSTANCES: usize = 3;
/// Largest accepted search-space estimate.
pub const MAX_CANDIDATES: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInstance {
    pub job: JobSpec,
    pub instances: Vec<VmInstance>,
    /// Spacing of extra start candidates after boot; 0 disables the grid.
    pub grid_step: Period,
}

#[derive(Clone, Copy)]
struct Placed {
    task: usize,
    vm: usize,
    start: Period,
    end: Period,
}

struct Search<'a> {
    inst: &'a OracleInstance,
    catalog: &'a Catalog,
    env: &'a EnvSpec,
    norm: &'a Normalizer,
    d_spot: Period,
    dur: Vec<Vec<Period>>,
    grid: Vec<Period>,
    stack: Vec<Placed>,
    used: Vec<bool>,
    best: Option<Vec<Placed>>,
    best_fitness: f64,
}

impl Search<'_> {
    fn objective(&self, placed: &[Placed]) -> f64 {
        let mut ends = vec![0; self.inst.instances.len()];
        for p in placed {
            ends[p.vm] = ends[p.vm].max(p.end);
        }
        let cost: f64 = ends
            .iter()
            .zip(&self.inst.instances)
            .map(|(&z, vm)| self.catalog.get(vm.vm_type).price * z as f64 / SECONDS_PER_HOUR)
            .sum();
        let makespan = ends.iter().copied().max().unwrap_or(0);
        self.norm.weighted(self.env.alpha, cost, makespan)
    }

    fn fits(&self, task: usize, vm: usize, start: Period) -> bool {
        let vt = self.catalog.get(self.inst.instances[vm].vm_type);
        let active = self
            .stack
            .iter()
            .filter(|p| p.vm == vm && p.start <= start && start < p.end);
        let (count, mem) = active.fold((0u32, 0.0), |(c, m), p| (c + 1, m + self.inst.job.tasks[p.task].rm));
        count < vt.vcpus && mem + self.inst.job.tasks[task].rm <= vt.memory_mb()
    }

    fn dfs(&mut self) {
        let n = self.inst.job.tasks.len();
        if self.stack.len() == n {
            let f = self.objective(&self.stack);
            if f < self.best_fitness {
                self.best_fitness = f;
                self.best = Some(self.stack.clone());
            }
            return;
        }
        if self.objective(&self.stack) >= self.best_fitness {
            return;
        }
        let last = self.stack.last().map(|p| (p.start, p.task));
        for task in 0..n {
            if self.used[task] {
                continue;
            }
            for vm in 0..self.inst.instances.len() {
                let mut starts: Vec<Period> = std::iter::once(self.env.startup_overhead)
                    .chain(self.stack.iter().filter(|p| p.vm == vm).map(|p| p.end))
                    .chain(self.grid.iter().copied())
                    .collect();
                starts.sort_unstable();
                starts.dedup();
                for start in starts {
                    if let Some((ls, lt)) = last {
                        if start < ls || (start == ls && task < lt) {
                            continue;
                        }
                    }
                    let end = start + self.dur[task][vm];
                    if end > self.d_spot || !self.fits(task, vm, start) {
                        continue;
                    }
                    self.used[task] = true;
                    self.stack.push(Placed { task, vm, start, end });
                    self.dfs();
                    self.stack.pop();
                    self.used[task] = false;
                }
            }
        }
    }
}

/// Upper bound on the number of leaves the search may visit.
pub fn search_size_estimate(inst: &OracleInstance, env: &EnvSpec, d_spot: Period) -> f64 {
    let n = inst.job.tasks.len();
    let m = inst.instances.len() as f64;
    let g = grid_points(inst.grid_step, env.startup_overhead, d_spot).len() as f64;
    (0..n).map(|k| (n - k) as f64 * m * (1.0 + k as f64 + g)).product()
}

fn grid_points(step: Period, boot: Period, bound: Period) -> Vec<Period> {
    if step == 0 {
        return Vec::new();
    }
    (1..)
        .map(|k| boot + k * step)
        .take_while(|&s| s < bound)
        .collect()
}

/// Minimum-fitness feasible schedule and its fitness. When nothing fits, the
/// solution has no allocation and the fitness is `+inf`.
pub fn brute_force_optimum(
    inst: &OracleInstance,
    catalog: &Catalog,
    env: &EnvSpec,
    norm: &Normalizer,
    d_spot: Period,
) -> Result<(ScheduleSolution, f64), OracleError> {
    let estimate = search_size_estimate(inst, env, d_spot);
    if inst.job.tasks.len() > MAX_TASKS || inst.instances.len() > MAX_INSTANCES || estimate > MAX_CANDIDATES {
        return Err(OracleError::TooLarge { estimate });
    }
    let dur = inst
        .job
        .tasks
        .iter()
        .map(|t| {
            inst.instances
                .iter()
                .map(|vm| catalog.get(vm.vm_type).wall_time(t.exec_on(vm.vm_type), ExecMode::Burst))
                .collect()
        })
        .collect();
    let mut search = Search {
        inst,
        catalog,
        env,
        norm,
        d_spot,
        dur,
        grid: grid_points(inst.grid_step, env.startup_overhead, d_spot),
        stack: Vec::new(),
        used: vec![false; inst.job.tasks.len()],
        best: None,
        best_fitness: f64::INFINITY,
    };
    search.dfs();

    let mut sol = ScheduleSolution::new(inst.instances.clone(), d_spot);
    let Some(best) = search.best else {
        return Ok((sol, f64::INFINITY));
    };
    // Colour intervals onto vCPUs in start order.
    let mut free_at: Vec<Vec<Period>> = inst
        .instances
        .iter()
        .map(|vm| vec![0; catalog.get(vm.vm_type).vcpus as usize])
        .collect();
    for p in &best {
        let vcpu = free_at[p.vm]
            .iter()
            .position(|&f| f <= p.start)
            .expect("concurrency was bounded by the vCPU count");
        free_at[p.vm][vcpu] = p.end;
        sol.assign(
            inst.job.tasks[p.task].id,
            Placement {
                instance: inst.instances[p.vm].id,
                vcpu: vcpu as u32,
                start: p.start,
                mode: ExecMode::Burst,
            },
        );
    }
    sol.evaluate(&inst.job, catalog).expect("oracle schedules only known tasks");
    sol.fill_queues();
    Ok((sol, search.best_fitness))
}
