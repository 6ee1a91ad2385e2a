mod common;

use std::collections::BTreeMap;

use bursthads_core::dynamic::{check_migration, termination_policy, work_stealing, Termination};
use bursthads_core::sim::{generate_events, EventKind, Policy, Route, ScenarioSpec, SimEvent, TaskPhase, TraceRecord, World};
use bursthads_core::{
    Catalog, EnvSpec, ExecMode, InstanceId, JobSpec, Market, Period, ScheduleSolution, TaskId, VmInstance, VmState,
};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn hibernate(at: Period, instance: u32) -> SimEvent {
    SimEvent { at, seq: 0, kind: EventKind::Hibernate { instance: InstanceId(instance), pair: 0 } }
}

/// Steps until `done` holds, panicking if the run ends first.
fn step_until(world: &mut World<'_>, done: impl Fn(&World<'_>) -> bool) {
    while !done(world) {
        assert!(world.step().unwrap(), "run ended early");
    }
}

fn started(world: &World<'_>) -> bool {
    world.trace.iter().any(|r| matches!(r, TraceRecord::TaskStart { .. }))
}

fn migrations(trace: &[TraceRecord]) -> Vec<(TaskId, InstanceId, Route, u8, ExecMode)> {
    trace
        .iter()
        .filter_map(|r| match *r {
            TraceRecord::Migrate { task, target, route, attempt, mode, .. } => Some((task, target, route, attempt, mode)),
            _ => None,
        })
        .collect()
}

fn run_all(world: &mut World<'_>) {
    while world.step().unwrap() {}
}

#[test]
fn idle_burstable_takes_the_task_first_and_spends_its_reservation() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = uniform_job(&[(100.0, 300)], &cat, 2700);
    let vms = vec![instance(0, &cat, C3_SPOT), instance(1, &cat, T3)];
    let map = solution(&job, &cat, vms, 2310, &[(0, burst(0, 0, 60))]);
    let events = [hibernate(100, 0)];
    let mut world = World::new(&job, &cat, &env, Policy::BURST_HADS, &map, &events, 8100).unwrap();
    {
        let t3 = &mut world.vms.get_mut(&InstanceId(1)).unwrap().vm;
        t3.cc = 10.0;
        t3.initial_credits = 10.0;
    }
    step_until(&mut world, |w| !migrations(&w.trace).is_empty());
    assert_eq!(
        migrations(&world.trace),
        vec![(TaskId(0), InstanceId(1), Route::IdleBurstable, 1, ExecMode::Burst)]
    );
    assert_eq!(world.vms[&InstanceId(1)].vm.reserved_credits, 5.0);
    run_all(&mut world);
    let out = world.into_outcome();
    let t3 = out.instances.iter().find(|v| v.id == InstanceId(1)).unwrap();
    assert!((t3.credits_consumed - 5.0).abs() < 1e-9, "{}", t3.credits_consumed);
    assert_eq!(t3.reserved_credits, 0.0);
    assert_eq!(out.completed_at, Some(400));
}

#[test]
fn burstable_short_of_credits_is_skipped() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = uniform_job(&[(100.0, 300)], &cat, 2700);
    let vms = vec![instance(0, &cat, C3_SPOT), instance(1, &cat, T3)];
    let map = solution(&job, &cat, vms, 2310, &[(0, burst(0, 0, 60))]);
    let events = [hibernate(100, 0)];
    let mut world = World::new(&job, &cat, &env, Policy::BURST_HADS, &map, &events, 8100).unwrap();
    // 4 + 24 * 100 / 3600 credits by the hibernation, short of 5
    world.vms.get_mut(&InstanceId(1)).unwrap().vm.cc = 4.0;
    step_until(&mut world, |w| !migrations(&w.trace).is_empty());
    let (_, target, route, attempt, _) = migrations(&world.trace)[0];
    assert_ne!(target, InstanceId(1));
    assert_eq!((route, attempt), (Route::NewOnDemand, 4));
}

#[test]
fn busy_spot_with_enough_spare_time_takes_the_task() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = uniform_job(&[(100.0, 200), (100.0, 200)], &cat, 2700);
    let vms = vec![instance(0, &cat, C3_SPOT), instance(1, &cat, C4_SPOT)];
    let map = solution(&job, &cat, vms, 2310, &[(0, burst(0, 0, 60)), (1, burst(1, 0, 60))]);
    let mut world = World::new(&job, &cat, &env, Policy::BURST_HADS, &map, &[hibernate(100, 0)], 8100).unwrap();
    run_all(&mut world);
    assert_eq!(
        migrations(&world.trace),
        vec![(TaskId(0), InstanceId(1), Route::BusyRegular, 3, ExecMode::Burst)]
    );
}

#[test]
fn idle_spot_is_preferred_over_idle_on_demand() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = uniform_job(&[(100.0, 200)], &cat, 2700);
    let vms = vec![instance(0, &cat, C3_SPOT), instance(1, &cat, C4_OD), instance(2, &cat, C4_SPOT)];
    let map = solution(&job, &cat, vms, 2310, &[(0, burst(0, 0, 60))]);
    let mut world = World::new(&job, &cat, &env, Policy::BURST_HADS, &map, &[hibernate(100, 0)], 8100).unwrap();
    run_all(&mut world);
    assert_eq!(
        migrations(&world.trace),
        vec![(TaskId(0), InstanceId(2), Route::IdleRegular, 2, ExecMode::Burst)]
    );
}

#[test]
fn no_target_before_the_deadline_is_flagged() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = uniform_job(&[(100.0, 600)], &cat, 700);
    let map = solution(&job, &cat, vec![instance(0, &cat, C3_SPOT)], 700, &[(0, burst(0, 0, 60))]);
    let mut world = World::new(&job, &cat, &env, Policy::BURST_HADS, &map, &[hibernate(200, 0)], 2100).unwrap();
    run_all(&mut world);
    let out = world.into_outcome();
    assert_eq!(out.deadline_risks, vec![(200, TaskId(0))]);
    assert!(out.trace.iter().any(|r| matches!(r, TraceRecord::DeadlineRisk { t: 200, task: TaskId(0), .. })));
    let (_, _, route, attempt, _) = migrations(&out.trace)[0];
    assert_eq!((route, attempt), (Route::Fallback, 5));
    assert!(out.completed_at.unwrap() > 700);
}

/// Task 0 (e=500) runs on spot 1; on-demand 0 and spot 2 are empty; on-demand
/// 3 holds task 1 (1000 MB).
fn probe_world<'a>(job: &'a JobSpec, cat: &'a Catalog, env: &'a EnvSpec) -> World<'a> {
    let vms = vec![instance(0, cat, C3_OD), instance(1, cat, C4_SPOT), instance(2, cat, C3_SPOT), instance(3, cat, C3_OD)];
    let map = solution(job, cat, vms, job.deadline, &[(0, burst(1, 0, 60)), (1, burst(3, 0, 60))]);
    let mut world = World::new(job, cat, env, Policy::BURST_HADS, &map, &[], 3 * job.deadline).unwrap();
    step_until(&mut world, started);
    assert_eq!(world.now, 60);
    world
}

fn probe_job(cat: &Catalog, rm: f64, deadline: Period) -> JobSpec {
    uniform_job(&[(rm, 500), (1000.0, 500)], cat, deadline)
}

#[test]
fn on_demand_target_may_finish_exactly_at_the_deadline() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = probe_job(&cat, 100.0, 560);
    assert!(check_migration(&probe_world(&job, &cat, &env), TaskId(0), InstanceId(0), ExecMode::Burst));
    let job = probe_job(&cat, 100.0, 559);
    assert!(!check_migration(&probe_world(&job, &cat, &env), TaskId(0), InstanceId(0), ExecMode::Burst));
}

#[test]
fn spot_target_needs_spare_time_above_the_longest_task() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    // 60 + 500 + 10 checkpoints of 5 s = 610, then 500 of spare time
    let job = probe_job(&cat, 100.0, 1110);
    assert!(!check_migration(&probe_world(&job, &cat, &env), TaskId(0), InstanceId(2), ExecMode::Burst));
    let job = probe_job(&cat, 100.0, 1111);
    assert!(check_migration(&probe_world(&job, &cat, &env), TaskId(0), InstanceId(2), ExecMode::Burst));
}

#[test]
fn memory_overflow_rejects_the_target() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = probe_job(&cat, 3000.0, 2700);
    assert!(!check_migration(&probe_world(&job, &cat, &env), TaskId(0), InstanceId(3), ExecMode::Burst));
    let job = probe_job(&cat, 2800.0, 2700);
    assert!(check_migration(&probe_world(&job, &cat, &env), TaskId(0), InstanceId(3), ExecMode::Burst));
}

#[test]
fn burstable_steals_a_single_task_in_baseline() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = JobSpec {
        tasks: (0..5).map(|i| task_with(i, 100.0, &[(C3_OD, 300), (T3, 60)])).collect(),
        deadline: 2700,
    };
    let vms = vec![instance(0, &cat, C3_OD), instance(1, &cat, T3)];
    let places: Vec<_> = (0..5u32).map(|i| (i, burst(0, i % 2, 60 + 300 * Period::from(i / 2)))).collect();
    let map = solution(&job, &cat, vms, 2310, &places);
    let mut world = World::new(&job, &cat, &env, Policy::BURST_HADS, &map, &[], 8100).unwrap();
    step_until(&mut world, started);
    let decisions = work_stealing(&mut world, InstanceId(1));
    assert_eq!(decisions.len(), 1);
    assert_eq!(decisions[0].task, TaskId(4));
    assert_eq!((decisions[0].route, decisions[0].mode), (Route::Steal, ExecMode::Baseline));
    assert_eq!(world.vms[&InstanceId(1)].vm.task_count(), 1);
    assert_eq!(world.vms[&InstanceId(1)].vm.reserved_credits, 0.0);
}

#[test]
fn idle_spot_drains_the_on_demand_queue() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = uniform_job(&[(100.0, 300); 4], &cat, 2700);
    let vms = vec![instance(0, &cat, C3_OD), instance(1, &cat, C3_SPOT)];
    let places: Vec<_> = (0..4u32).map(|i| (i, burst(0, i % 2, 60 + 300 * Period::from(i / 2)))).collect();
    let map = solution(&job, &cat, vms, 2310, &places);
    let mut world = World::new(&job, &cat, &env, Policy::BURST_HADS, &map, &[], 8100).unwrap();
    step_until(&mut world, started);
    let mut stolen: Vec<TaskId> = work_stealing(&mut world, InstanceId(1)).iter().map(|d| d.task).collect();
    stolen.sort();
    assert_eq!(stolen, vec![TaskId(2), TaskId(3)]);
    assert!(world.stealable(InstanceId(0)).is_empty());
    assert_eq!(world.vms[&InstanceId(0)].vm.task_count(), 2);
}

#[test]
fn nothing_to_steal_leaves_the_target_idle() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = uniform_job(&[(100.0, 300), (100.0, 300)], &cat, 2700);
    let vms = vec![instance(0, &cat, T3), instance(1, &cat, C3_SPOT)];
    let map = solution(&job, &cat, vms, 2310, &[(0, baseline(0, 0, 60)), (1, baseline(0, 0, 1560))]);
    let mut world = World::new(&job, &cat, &env, Policy::BURST_HADS, &map, &[], 8100).unwrap();
    step_until(&mut world, started);
    assert!(work_stealing(&mut world, InstanceId(1)).is_empty());
    assert!(world.is_idle(InstanceId(1)));
}

fn shell(market: Market, state: VmState) -> VmInstance {
    let cat = sample_catalog();
    let ty = match market {
        Market::Spot => C3_SPOT,
        Market::OnDemand => C3_OD,
        Market::Burstable => T3,
    };
    let mut vm = instance(0, &cat, ty);
    vm.state = state;
    vm
}

#[test]
fn cycle_boundary_rule() {
    assert_eq!(termination_policy(&shell(Market::Spot, VmState::Idle), true), Termination::Terminate);
    assert_eq!(termination_policy(&shell(Market::OnDemand, VmState::Idle), true), Termination::Terminate);
    assert_eq!(termination_policy(&shell(Market::OnDemand, VmState::Busy), false), Termination::Keep);
    assert_eq!(termination_policy(&shell(Market::Burstable, VmState::Idle), true), Termination::Keep);
    assert_eq!(termination_policy(&shell(Market::Spot, VmState::Hibernated), false), Termination::Keep);
}

fn random_world_case(seed: u64, k_h: f64, k_r: f64) -> (JobSpec, Catalog, ScheduleSolution, Vec<SimEvent>) {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = generated_job(&cat, 14, seed);
    let map = burst_map(&job, &cat, &env, seed);
    let spots: Vec<_> = map.selected_vms.iter().filter(|v| v.market == Market::Spot).map(|v| (v.id, v.vm_type)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(7));
    let scenario = ScenarioSpec { name: "p".into(), k_h, k_r, seed: 0 };
    let events = generate_events(&scenario, &spots, job.deadline, &mut rng);
    (job, cat, map, events)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn migration_and_stealing_invariants(seed in any::<u64>(), k_h in 0.5f64..6.0, k_r in 0.0f64..6.0) {
        let env = EnvSpec::default();
        let (job, cat, map, events) = random_world_case(seed, k_h, k_r);
        let mut world = World::new(&job, &cat, &env, Policy::BURST_HADS, &map, &events, 3 * job.deadline).unwrap();
        // task -> instance it currently runs on
        let mut running: BTreeMap<TaskId, InstanceId> = BTreeMap::new();
        let mut seen = 0;
        while world.step().unwrap() {
            for r in &world.trace[seen..] {
                match *r {
                    TraceRecord::TaskStart { task, instance, .. } => {
                        running.insert(task, instance);
                    }
                    TraceRecord::TaskFinish { task, .. } => {
                        running.remove(&task);
                    }
                    TraceRecord::Migrate { task, route, .. } => {
                        prop_assert!(route != Route::Steal || !running.contains_key(&task), "stole running {task}");
                        running.remove(&task);
                    }
                    _ => {}
                }
            }
            seen = world.trace.len();

            for (id, rt) in &world.vms {
                if rt.vm.state == VmState::Hibernated {
                    // only hibernations that found no target keep their tasks
                    for q in rt.vm.tasks() {
                        prop_assert!(world.deadline_risks.iter().any(|&(_, t)| t == q.task), "{} left on {id}", q.task);
                    }
                }
                if rt.vm.is_burstable() {
                    let rcc: f64 = world
                        .tasks
                        .iter()
                        .filter(|t| t.instance == *id && t.phase != TaskPhase::Done)
                        .map(|t| t.rcc)
                        .sum();
                    prop_assert!((rt.vm.reserved_credits - rcc).abs() < 1e-9);
                    let baseline = rt.vm.tasks().filter(|q| q.mode == ExecMode::Baseline).count();
                    let steals = world
                        .tasks
                        .iter()
                        .filter(|t| t.instance == *id && t.phase != TaskPhase::Done && t.mode == ExecMode::Baseline && t.migrations > 0)
                        .count();
                    prop_assert!(steals <= 1 && baseline <= 1 + map.allocation.iter().filter(|a| a.placement.instance == *id).count());
                }
            }
        }
    }
}
