use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;
use crate::model::{Catalog, EnvSpec, JobSpec, Period, VmTypeId};
use crate::objective::Normalizer;
use crate::solution::ScheduleSolution;

use super::initial::initial_plan;
use super::local_search::local_search;
use super::plan::{PlanCtx, PlanState};
use super::IlsParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlsOutcome {
    pub solution: ScheduleSolution,
    pub initial_fitness: f64,
    pub best_fitness: f64,
    /// Relaxed bound in effect after the last iteration.
    pub relaxed_bound: f64,
    /// `(iteration, new relaxed bound)` for every relaxation.
    pub relaxations: Vec<(u32, f64)>,
}

/// Iterated local search over the spot pool. Returns the best plan, its
/// fitness against the unrelaxed `d_spot`, and the initial greedy fitness.
pub fn ils_plan(
    ctx: &PlanCtx<'_>,
    spot_pool: &[VmTypeId],
    norm: &Normalizer,
    params: &IlsParams,
    d_spot: Period,
) -> Result<(PlanState, IlsTrace), ScheduleError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (initial, mut wrr) = initial_plan(ctx, spot_pool, d_spot)?;
    let initial_fitness = initial.fitness(ctx, norm, d_spot);

    let mut current = local_search(ctx, initial, norm, params.max_attempt, params.swap_rate, d_spot, &mut rng);
    let mut best_fitness = current.fitness(ctx, norm, d_spot);
    let mut best = current.clone();
    let mut last_best = 0u32;
    let mut relaxed = d_spot as f64;
    let mut relaxations = Vec::new();

    for it in 1..=params.max_iteration {
        let unused: Vec<VmTypeId> = wrr
            .quotas()
            .into_iter()
            .flat_map(|(t, n)| std::iter::repeat(t).take(n as usize))
            .collect();
        if !unused.is_empty() {
            let vm_type = unused[rng.gen_range(0..unused.len())];
            wrr.take_quota(vm_type);
            current.add_vm(vm_type);
        }
        if it - last_best > params.max_failed {
            relaxed *= 1.0 + params.relax_rate;
            relaxations.push((it, relaxed));
        }
        current = local_search(
            ctx,
            current,
            norm,
            params.max_attempt,
            params.swap_rate,
            relaxed.floor() as Period,
            &mut rng,
        );
        let f = current.fitness(ctx, norm, d_spot);
        if f < best_fitness {
            best = current.clone();
            best_fitness = f;
            last_best = it;
        }
    }
    best.prune_empty();
    Ok((
        best,
        IlsTrace { initial_fitness, best_fitness, relaxed_bound: relaxed, relaxations },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlsTrace {
    pub initial_fitness: f64,
    pub best_fitness: f64,
    pub relaxed_bound: f64,
    pub relaxations: Vec<(u32, f64)>,
}

/// Explicit-form wrapper around [`ils_plan`].
pub fn ils(
    job: &JobSpec,
    catalog: &Catalog,
    env: &EnvSpec,
    spot_pool: &[VmTypeId],
    norm: &Normalizer,
    params: &IlsParams,
    d_spot: Period,
) -> Result<IlsOutcome, ScheduleError> {
    let ctx = PlanCtx::new(job, catalog, env);
    let (plan, trace) = ils_plan(&ctx, spot_pool, norm, params, d_spot)?;
    Ok(IlsOutcome {
        solution: plan.to_solution(&ctx, d_spot),
        initial_fitness: trace.initial_fitness,
        best_fitness: trace.best_fitness,
        relaxed_bound: trace.relaxed_bound,
        relaxations: trace.relaxations,
    })
}
