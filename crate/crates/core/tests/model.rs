mod common;

use bursthads_core::validate::{validate_memory, validate_solution, validate_vcpu, Constraint};
use bursthads_core::{
    compute_d_spot, fitness, wrr_weight, Catalog, EnvSpec, JobSpec, Market, ModelError, Normalizer, TaskId,
    VmTypeSpec,
};
use common::*;
use proptest::prelude::*;

fn two_task_job(catalog: &Catalog, rm: f64) -> JobSpec {
    uniform_job(&[(rm, 200), (rm, 200)], catalog, 2700)
}

#[test]
fn memory_overflow_when_two_2gb_tasks_overlap_on_c3_large() {
    let cat = sample_catalog();
    let job = two_task_job(&cat, 2048.0);
    let sol = solution(&job, &cat, vec![instance(0, &cat, C3_SPOT)], 2310, &[(0, burst(0, 0, 60)), (1, burst(0, 1, 60))]);
    // 4096 MB > 3.75 * 1024 MB
    assert!(!validate_memory(&sol, &job, &cat, 100).unwrap());
    assert!(validate_memory(&sol, &job, &cat, 10).unwrap());
}

#[test]
fn smallest_j60_footprint_fits_every_type() {
    let cat = sample_catalog();
    let job = uniform_job(&[(2.85, 200)], &cat, 2700);
    for t in cat.types() {
        let sol = solution(&job, &cat, vec![instance(0, &cat, t.id)], 2310, &[(0, burst(0, 0, 60))]);
        assert!(validate_memory(&sol, &job, &cat, 100).unwrap(), "{}", t.name);
    }
}

#[test]
fn empty_task_set_is_memory_feasible() {
    let cat = sample_catalog();
    let job = JobSpec { tasks: vec![], deadline: 2700 };
    let sol = solution(&job, &cat, vec![instance(0, &cat, C3_SPOT)], 2310, &[]);
    assert!(validate_memory(&sol, &job, &cat, 0).unwrap());
}

#[test]
fn unknown_task_is_a_validation_error() {
    let cat = sample_catalog();
    let job = uniform_job(&[(10.0, 200)], &cat, 2700);
    let mut sol = solution(&job, &cat, vec![instance(0, &cat, C3_SPOT)], 2310, &[(0, burst(0, 0, 60))]);
    sol.assign(TaskId(9), burst(0, 1, 60));
    assert_eq!(validate_memory(&sol, &job, &cat, 100), Err(ModelError::UnknownTask(TaskId(9))));
}

#[test]
fn three_concurrent_tasks_exceed_c4_large_vcpus() {
    let cat = sample_catalog();
    let job = uniform_job(&[(10.0, 200), (10.0, 200), (10.0, 200)], &cat, 2700);
    let vms = vec![instance(0, &cat, C4_SPOT)];
    let sol = solution(&job, &cat, vms.clone(), 2310, &[(0, burst(0, 0, 60)), (1, burst(0, 1, 60)), (2, burst(0, 0, 60))]);
    assert!(!validate_vcpu(&sol, &job, &cat, 100).unwrap());
    let sol = solution(&job, &cat, vms, 2310, &[(0, burst(0, 0, 60)), (1, burst(0, 1, 60)), (2, burst(0, 2, 60))]);
    assert!(!validate_vcpu(&sol, &job, &cat, 100).unwrap());
}

#[test]
fn two_concurrent_tasks_fit_c4_large() {
    let cat = sample_catalog();
    let job = two_task_job(&cat, 10.0);
    let sol = solution(&job, &cat, vec![instance(0, &cat, C4_SPOT)], 2310, &[(0, burst(0, 0, 60)), (1, burst(0, 1, 60))]);
    assert!(validate_vcpu(&sol, &job, &cat, 100).unwrap());
    assert!(validate_memory(&sol, &job, &cat, 100).unwrap());
}

#[test]
fn single_task_is_vcpu_feasible() {
    let cat = sample_catalog();
    let job = uniform_job(&[(10.0, 200)], &cat, 2700);
    for t in cat.types() {
        let sol = solution(&job, &cat, vec![instance(0, &cat, t.id)], 2310, &[(0, burst(0, 0, 60))]);
        assert!(validate_vcpu(&sol, &job, &cat, 100).unwrap());
    }
}

#[test]
fn hand_built_schedule_is_feasible() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = two_task_job(&cat, 10.0);
    // both on vCPU 0, back to back after boot: [60,260) and [260,460)
    let sol = solution(&job, &cat, vec![instance(0, &cat, C3_SPOT)], 2310, &[(0, burst(0, 0, 60)), (1, burst(0, 0, 260))]);
    assert_eq!(sol.makespan, 460);
    assert_eq!(sol.per_vm_end.values().copied().collect::<Vec<_>>(), vec![460]);
    let report = validate_solution(&sol, &job, &cat, &env);
    assert!(report.is_feasible(), "{:?}", report.violations);
}

#[test]
fn duplicated_task_breaks_unique_allocation() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = two_task_job(&cat, 10.0);
    let mut sol =
        solution(&job, &cat, vec![instance(0, &cat, C3_SPOT)], 2310, &[(0, burst(0, 0, 60)), (1, burst(0, 0, 260))]);
    sol.assign(TaskId(0), burst(0, 1, 60));
    sol.evaluate(&job, &cat).unwrap();
    let report = validate_solution(&sol, &job, &cat, &env);
    assert!(report.violates(Constraint::UniqueAllocation));
    assert!(!report.violates(Constraint::Memory));
}

#[test]
fn ending_one_period_after_d_spot_breaks_the_spot_bound() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = uniform_job(&[(10.0, 200)], &cat, 2700);
    let d_spot = 2310;
    let ok = solution(&job, &cat, vec![instance(0, &cat, C3_SPOT)], d_spot, &[(0, burst(0, 0, d_spot - 200))]);
    assert!(validate_solution(&ok, &job, &cat, &env).is_feasible());
    let late = solution(&job, &cat, vec![instance(0, &cat, C3_SPOT)], d_spot, &[(0, burst(0, 0, d_spot - 199))]);
    let report = validate_solution(&late, &job, &cat, &env);
    assert!(report.violates(Constraint::SpotBound), "{:?}", report.violations);
}

#[test]
fn d_spot_for_the_reference_deadline() {
    let cat = sample_catalog();
    let env = EnvSpec { startup_overhead: 60, ..EnvSpec::default() };
    let job = uniform_job(&[(10.0, 102), (10.0, 330)], &cat, 2700);
    assert_eq!(compute_d_spot(&job, &cat, &env), Ok(2700 - (60 + 330)));
}

#[test]
fn d_spot_of_an_instantaneous_task_is_the_deadline() {
    let cat = sample_catalog();
    let env = EnvSpec { startup_overhead: 0, ..EnvSpec::default() };
    let job = uniform_job(&[(10.0, 0)], &cat, 2700);
    assert_eq!(compute_d_spot(&job, &cat, &env), Ok(2700));
}

#[test]
fn d_spot_without_slack_is_an_error() {
    let cat = sample_catalog();
    let env = EnvSpec { startup_overhead: 60, ..EnvSpec::default() };
    let job = uniform_job(&[(10.0, 330)], &cat, 300);
    assert!(matches!(compute_d_spot(&job, &cat, &env), Err(ModelError::InfeasibleDeadline { .. })));
}

#[test]
fn d_spot_needs_a_non_spot_type() {
    let cat = Catalog::new(vec![vm_type(0, "s", Market::Spot, 2, 3.75, 0.03, 28.0)]).unwrap();
    let job = uniform_job(&[(10.0, 100)], &cat, 2700);
    assert_eq!(compute_d_spot(&job, &cat, &EnvSpec::default()), Err(ModelError::NoFallbackType));
}

#[test]
fn fitness_is_infinite_past_d_spot() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = uniform_job(&[(10.0, 300)], &cat, 2700);
    let sol = solution(&job, &cat, vec![instance(0, &cat, C3_SPOT)], 300, &[(0, burst(0, 0, 60))]);
    let norm = Normalizer::new(cat.types(), 2700);
    assert_eq!(fitness(&sol, &cat, &norm, &env, 359), f64::INFINITY);
    assert!(fitness(&sol, &cat, &norm, &env, 360).is_finite());
}

#[test]
fn fitness_weighs_normalized_terms() {
    let norm = Normalizer { cost_ub: 1.0, deadline: 1000 };
    assert!((norm.weighted(0.5, 0.4, 600) - 0.5).abs() < 1e-12);
}

#[test]
fn fitness_matches_cost_and_makespan_of_the_map() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let job = uniform_job(&[(10.0, 300)], &cat, 2700);
    let sol = solution(&job, &cat, vec![instance(0, &cat, C4_SPOT)], 2310, &[(0, burst(0, 0, 60))]);
    let norm = Normalizer::new(cat.types(), 2700);
    // billed from launch to the end of the task, boot included
    let cost = 0.0366 * 360.0 / 3600.0;
    let ub: f64 = cat.types().iter().map(|t| t.price).sum::<f64>() * 2700.0 / 3600.0;
    let expect = 0.5 * cost / ub + 0.5 * 360.0 / 2700.0;
    assert!((fitness(&sol, &cat, &norm, &env, 2310) - expect).abs() < 1e-12);
}

#[test]
fn alpha_one_orders_by_cost_only() {
    let cat = sample_catalog();
    let env = EnvSpec { alpha: 1.0, ..EnvSpec::default() };
    let job = uniform_job(&[(10.0, 300), (10.0, 300)], &cat, 2700);
    let norm = Normalizer::new(cat.types(), 2700);
    // sequential on one cheap VM: slower but cheaper
    let cheap = solution(&job, &cat, vec![instance(0, &cat, C3_SPOT)], 2310, &[(0, burst(0, 0, 60)), (1, burst(0, 0, 360))]);
    let fast = solution(
        &job,
        &cat,
        vec![instance(0, &cat, C3_SPOT), instance(1, &cat, C4_SPOT)],
        2310,
        &[(0, burst(0, 0, 60)), (1, burst(1, 0, 60))],
    );
    assert!(cheap.makespan > fast.makespan);
    let by_cost = cheap.cost(&cat) < fast.cost(&cat);
    let by_fitness = fitness(&cheap, &cat, &norm, &env, 2310) < fitness(&fast, &cat, &norm, &env, 2310);
    assert_eq!(by_cost, by_fitness);
}

#[test]
fn wrr_weight_is_gflops_per_dollar() {
    let mut vt = vm_type(0, "c3.large", Market::OnDemand, 2, 3.75, 0.105, 100.0);
    assert!((wrr_weight(&vt).unwrap() - 952.38).abs() < 0.01);
    vt.gflops = 0.0;
    assert_eq!(wrr_weight(&vt).unwrap(), 0.0);
    vt.price = 0.0;
    assert!(matches!(wrr_weight(&vt), Err(ModelError::UndefinedWeight(_))));
}

#[test]
fn wrr_weight_ignores_common_scaling() {
    let a = vm_type(0, "a", Market::Spot, 2, 3.75, 0.0299, 28.0);
    let mut b = a.clone();
    b.gflops *= 2.0;
    b.price *= 2.0;
    assert!((wrr_weight(&a).unwrap() - wrr_weight(&b).unwrap()).abs() < 1e-9);
}

#[test]
fn catalog_rejects_inconsistent_burstable_flags() {
    let mut vt = vm_type(0, "x", Market::Spot, 2, 3.75, 0.03, 28.0);
    vt.baseline_fraction = 0.5;
    assert!(Catalog::new(vec![vt]).is_err());
    let mut vt = vm_type(0, "x", Market::Burstable, 2, 8.0, 0.08, 30.0);
    vt.baseline_fraction = 1.0;
    assert!(Catalog::new(vec![vt]).is_err());
    let mut vt = vm_type(0, "x", Market::Spot, 2, 3.75, 0.03, 28.0);
    vt.vcpus = 0;
    assert!(Catalog::new(vec![vt]).is_err());
}

#[test]
fn job_validation_requires_a_time_for_every_type() {
    let cat = sample_catalog();
    let env = EnvSpec::default();
    let mut job = uniform_job(&[(10.0, 100)], &cat, 2700);
    assert!(job.validate(&cat, &env).is_ok());
    job.tasks[0].exec_time.remove(&C4_SPOT);
    assert!(job.validate(&cat, &env).is_err());
    let job = uniform_job(&[(0.0, 100)], &cat, 2700);
    assert!(job.validate(&cat, &env).is_err());
    let job = uniform_job(&[(10.0, 100)], &cat, 60);
    assert!(job.validate(&cat, &env).is_err());
}

fn scaled(cat: &Catalog, k: f64) -> Catalog {
    Catalog::new(
        cat.types()
            .iter()
            .map(|t| VmTypeSpec { price: t.price * k, ..t.clone() })
            .collect(),
    )
    .unwrap()
}

/// Random placements of up to 5 tasks on two c4.large spot instances.
fn random_solution() -> impl Strategy<Value = (JobSpec, Vec<(u32, u32, u32, u64)>)> {
    let cat = sample_catalog();
    prop::collection::vec((1.0f64..2500.0, 10u64..400), 1..=5).prop_flat_map(move |specs| {
        let n = specs.len();
        let job = uniform_job(&specs, &cat, 2700);
        let places = prop::collection::vec((0u32..2, 0u32..2, 60u64..900), n)
            .prop_map(|v| v.into_iter().enumerate().map(|(i, (vm, c, s))| (i as u32, vm, c, s)).collect());
        (Just(job), places)
    })
}

fn build(job: &JobSpec, places: &[(u32, u32, u32, u64)], cat: &Catalog) -> bursthads_core::ScheduleSolution {
    let p: Vec<_> = places.iter().map(|&(t, vm, c, s)| (t, burst(vm, c, s))).collect();
    solution(job, cat, vec![instance(0, cat, C4_SPOT), instance(1, cat, C4_SPOT)], 2310, &p)
}

proptest! {
    #[test]
    fn removing_a_task_keeps_memory_and_vcpu_feasibility((job, places) in random_solution(), drop in 0usize..5) {
        let cat = sample_catalog();
        let env = EnvSpec::default();
        let sol = build(&job, &places, &cat);
        let before = validate_solution(&sol, &job, &cat, &env);
        prop_assume!(!before.violates(Constraint::Memory) && !before.violates(Constraint::Vcpu));
        let drop = drop % places.len();
        let mut rest = places.clone();
        rest.remove(drop);
        let sub = JobSpec {
            tasks: job.tasks.iter().filter(|t| t.id != TaskId(places[drop].0)).cloned().collect(),
            deadline: job.deadline,
        };
        let after = validate_solution(&build(&sub, &rest, &cat), &sub, &cat, &env);
        prop_assert!(!after.violates(Constraint::Memory));
        prop_assert!(!after.violates(Constraint::Vcpu));
    }

    #[test]
    fn makespan_is_the_latest_instance_end((job, places) in random_solution()) {
        let cat = sample_catalog();
        let env = EnvSpec::default();
        let sol = build(&job, &places, &cat);
        prop_assert_eq!(Some(sol.makespan), sol.per_vm_end.values().copied().max());
        if validate_solution(&sol, &job, &cat, &env).is_feasible() {
            prop_assert!(sol.makespan <= sol.d_spot);
        }
    }

    #[test]
    fn fitness_strictly_increases_with_each_term(
        alpha in 0.0f64..=1.0, c in 0.0f64..10.0, dc in 0.001f64..5.0, m in 0u64..2700, dm in 1u64..500,
    ) {
        let norm = Normalizer { cost_ub: 12.0, deadline: 2700 };
        if alpha > 0.0 {
            prop_assert!(norm.weighted(alpha, c + dc, m) > norm.weighted(alpha, c, m));
        }
        if alpha < 1.0 {
            prop_assert!(norm.weighted(alpha, c, m + dm) > norm.weighted(alpha, c, m));
        }
    }

    #[test]
    fn price_scaling_preserves_fitness_order(
        (job, a) in random_solution(), seed in any::<u64>(), k in 0.01f64..100.0,
    ) {
        use rand::{Rng, SeedableRng};
        let cat = sample_catalog();
        let env = EnvSpec::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<_> = a.iter().map(|&(t, _, _, _)| (t, rng.gen_range(0..2), rng.gen_range(0..2), rng.gen_range(60..900))).collect();
        let big = scaled(&cat, k);
        let order = |c: &Catalog| {
            let norm = Normalizer::new(c.types(), 2700);
            let fa = fitness(&build(&job, &a, c), c, &norm, &env, 2310);
            let fb = fitness(&build(&job, &b, c), c, &norm, &env, 2310);
            (fa, fb)
        };
        let (fa, fb) = order(&cat);
        let (ga, gb) = order(&big);
        prop_assert!((fa - ga).abs() < 1e-9 || fa == ga);
        prop_assert!((fb - gb).abs() < 1e-9 || fb == gb);
        if (fa - fb).abs() > 1e-9 {
            prop_assert_eq!(fa < fb, ga < gb);
        }
    }

    #[test]
    fn wrr_weight_order_survives_price_scaling(k in 0.01f64..100.0) {
        let cat = sample_catalog();
        let big = scaled(&cat, k);
        let rank = |c: &Catalog| {
            let mut ids: Vec<_> = c.types().iter().map(|t| (wrr_weight(t).unwrap(), t.id)).collect();
            ids.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            ids.into_iter().map(|(_, id)| id).collect::<Vec<_>>()
        };
        prop_assert_eq!(rank(&cat), rank(&big));
    }
}
