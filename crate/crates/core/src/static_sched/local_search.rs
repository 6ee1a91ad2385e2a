use rand::Rng;

use crate::model::Period;
use crate::objective::Normalizer;

use super::plan::{PlanCtx, PlanState};

/// Tasks moved per attempt: `ceil(swap_rate * |B|)`, at least one.
pub fn moves_per_attempt(swap_rate: f64, tasks: usize) -> usize {
    ((swap_rate * tasks as f64).ceil() as usize).max(1)
}

/// Hill climbing by relocating random tasks.
///
/// Each of `max_attempt` rounds picks a random destination VM, starts from
/// the best plan so far and moves `moves_per_attempt` random tasks there one
/// after another, each to its earliest slot within `bound`. Moves accumulate
/// within the round; the best plan is replaced whenever the running plan
/// strictly lowers the fitness.
pub fn local_search<R: Rng + ?Sized>(
    ctx: &PlanCtx<'_>,
    plan: PlanState,
    norm: &Normalizer,
    max_attempt: u32,
    swap_rate: f64,
    bound: Period,
    rng: &mut R,
) -> PlanState {
    let tasks = ctx.job.tasks.len();
    if tasks == 0 || plan.vms.is_empty() {
        return plan;
    }
    let n = moves_per_attempt(swap_rate, tasks);
    let mut best_fitness = plan.fitness(ctx, norm, bound);
    let mut best = plan;

    for _ in 0..max_attempt {
        let dest = rng.gen_range(0..best.vms.len());
        let mut working: Option<PlanState> = None;
        for _ in 0..n {
            let task = rng.gen_range(0..tasks);
            let current = working.as_ref().unwrap_or(&best);
            let Some(mv) = current.propose_move(ctx, task, dest, bound) else {
                continue;
            };
            let f = current.fitness_after(ctx, norm, bound, &mv);
            let mut next = working.take().unwrap_or_else(|| best.clone());
            next.apply(mv);
            if f < best_fitness {
                best_fitness = f;
                best = next.clone();
            }
            working = Some(next);
        }
    }
    best
}
