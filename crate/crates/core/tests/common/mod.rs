#![allow(dead_code)]

use std::collections::BTreeMap;

use bursthads_core::{
    Catalog, ExecMode, InstanceId, JobSpec, Market, Period, Placement, ScheduleSolution, TaskId, TaskSpec,
    VmInstance, VmTypeId, VmTypeSpec,
};

pub fn vm_type(id: u16, name: &str, market: Market, vcpus: u32, memory_gb: f64, price: f64, gflops: f64) -> VmTypeSpec {
    let burstable = market == Market::Burstable;
    VmTypeSpec {
        id: VmTypeId(id),
        name: name.into(),
        market,
        vcpus,
        memory_gb,
        price,
        gflops,
        baseline_fraction: if burstable { 0.2 } else { 1.0 },
        credit_accrual: if burstable { 24.0 } else { 0.0 },
        initial_credits: if burstable { 60.0 } else { 0.0 },
        burst_period: 60,
        max_instances: 5,
    }
}

/// Spot and on-demand c3/c4 types plus a burstable t3.large, ids 0..=6.
pub fn sample_catalog() -> Catalog {
    Catalog::new(vec![
        vm_type(0, "c3.large-spot", Market::Spot, 2, 3.75, 0.0299, 28.0),
        vm_type(1, "c4.large-spot", Market::Spot, 2, 3.75, 0.0366, 32.0),
        vm_type(2, "c3.xlarge-spot", Market::Spot, 4, 7.5, 0.0634, 56.0),
        vm_type(3, "c3.large", Market::OnDemand, 2, 3.75, 0.105, 28.0),
        vm_type(4, "c4.large", Market::OnDemand, 2, 3.75, 0.100, 32.0),
        vm_type(5, "c3.xlarge", Market::OnDemand, 4, 7.5, 0.199, 56.0),
        vm_type(6, "t3.large", Market::Burstable, 2, 8.0, 0.0832, 30.0),
    ])
    .unwrap()
}

pub const C3_SPOT: VmTypeId = VmTypeId(0);
pub const C4_SPOT: VmTypeId = VmTypeId(1);
pub const C3X_SPOT: VmTypeId = VmTypeId(2);
pub const C3_OD: VmTypeId = VmTypeId(3);
pub const C4_OD: VmTypeId = VmTypeId(4);
pub const T3: VmTypeId = VmTypeId(6);

/// Task whose execution time is `e` on every catalog type.
pub fn task(id: u32, rm: f64, e: Period, catalog: &Catalog) -> TaskSpec {
    TaskSpec { id: TaskId(id), rm, exec_time: catalog.types().iter().map(|t| (t.id, e)).collect() }
}

pub fn task_with(id: u32, rm: f64, times: &[(VmTypeId, Period)]) -> TaskSpec {
    TaskSpec { id: TaskId(id), rm, exec_time: times.iter().copied().collect::<BTreeMap<_, _>>() }
}

pub fn uniform_job(specs: &[(f64, Period)], catalog: &Catalog, deadline: Period) -> JobSpec {
    JobSpec {
        tasks: specs.iter().enumerate().map(|(i, &(rm, e))| task(i as u32, rm, e, catalog)).collect(),
        deadline,
    }
}

pub fn instance(id: u32, catalog: &Catalog, vm_type: VmTypeId) -> VmInstance {
    VmInstance::new(InstanceId(id), catalog.get(vm_type), 0, 900)
}

pub fn burst(instance: u32, vcpu: u32, start: Period) -> Placement {
    Placement { instance: InstanceId(instance), vcpu, start, mode: ExecMode::Burst }
}

pub fn baseline(instance: u32, vcpu: u32, start: Period) -> Placement {
    Placement { instance: InstanceId(instance), vcpu, start, mode: ExecMode::Baseline }
}

/// Evaluated solution over `vms` with the given `(task, placement)` pairs.
pub fn solution(
    job: &JobSpec,
    catalog: &Catalog,
    vms: Vec<VmInstance>,
    d_spot: Period,
    placements: &[(u32, Placement)],
) -> ScheduleSolution {
    let mut sol = ScheduleSolution::new(vms, d_spot);
    for &(t, p) in placements {
        sol.assign(TaskId(t), p);
    }
    sol.evaluate(job, catalog).unwrap();
    sol
}

/// A J60-like job: 60 tasks, memory 2.85-12.20 MB, reference durations
/// 102-330 s scaled by per-vCPU Gflops against the slowest type.
pub fn j60_like(catalog: &Catalog, seed: u64) -> JobSpec {
    generated_job(catalog, 60, seed)
}

pub fn generated_job(catalog: &Catalog, count: u32, seed: u64) -> JobSpec {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let per_vcpu = |t: &VmTypeSpec| t.gflops / f64::from(t.vcpus);
    let reference = catalog.types().iter().map(per_vcpu).fold(f64::INFINITY, f64::min);
    let tasks = (0..count)
        .map(|i| {
            let base: Period = rng.gen_range(102..=330);
            let rm = (rng.gen_range(2.85..=12.20f64) * 100.0).round() / 100.0;
            let exec_time = catalog
                .types()
                .iter()
                .map(|t| (t.id, bursthads_core::ceil_div_f64(base as f64 * reference, per_vcpu(t))))
                .collect();
            TaskSpec { id: TaskId(i), rm, exec_time }
        })
        .collect();
    JobSpec { tasks, deadline: 2700 }
}

/// Spot ILS map with burstables added, as the burst-aware strategy builds it.
pub fn burst_map(job: &JobSpec, catalog: &Catalog, env: &bursthads_core::EnvSpec, seed: u64) -> ScheduleSolution {
    use bursthads_core::static_sched::{burst_allocation, ils, IlsParams};
    let d_spot = bursthads_core::compute_d_spot(job, catalog, env).unwrap();
    let spot = catalog.of_market(Market::Spot);
    let norm = bursthads_core::Normalizer::for_types(catalog, &spot, job.deadline);
    let params = IlsParams { max_iteration: 30, max_attempt: 10, seed, ..IlsParams::default() };
    let out = ils(job, catalog, env, &spot, &norm, &params, d_spot).unwrap();
    burst_allocation(job, catalog, env, &out.solution, params.burst_rate, d_spot).unwrap()
}
