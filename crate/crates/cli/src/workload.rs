//! Synthetic jobs and the reference VM catalog.

use std::collections::BTreeMap;

use bursthads_core::{ceil_div_f64, Catalog, JobSpec, Market, Period, TaskId, TaskSpec, VmTypeId, VmTypeSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Uniformly drawn tasks: integer base durations and memory in MB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorBlock {
    pub count: u32,
    pub duration: [Period; 2],
    pub memory_mb: [f64; 2],
    #[serde(default)]
    pub seed: u64,
}

/// Lowest per-vCPU Gflops in the catalog; base durations are measured on it.
pub fn reference_speed(catalog: &Catalog) -> f64 {
    catalog
        .types()
        .iter()
        .map(|t| t.gflops / f64::from(t.vcpus))
        .fold(f64::INFINITY, f64::min)
}

/// Duration of a reference-speed task of length `base` on every type.
pub fn scale_durations(base: Period, catalog: &Catalog) -> BTreeMap<VmTypeId, Period> {
    let reference = reference_speed(catalog);
    catalog
        .types()
        .iter()
        .map(|t| {
            let per_vcpu = t.gflops / f64::from(t.vcpus);
            (t.id, ceil_div_f64(base as f64 * reference, per_vcpu).max(1))
        })
        .collect()
}

pub fn generate_job(block: &GeneratorBlock, catalog: &Catalog, deadline: Period) -> Result<JobSpec, String> {
    let [dlo, dhi] = block.duration;
    let [mlo, mhi] = block.memory_mb;
    if block.count == 0 {
        return Err("generator count must be at least 1".into());
    }
    if dlo == 0 || dlo > dhi {
        return Err(format!("invalid duration range [{dlo}, {dhi}]"));
    }
    if !(mlo > 0.0 && mlo <= mhi) {
        return Err(format!("invalid memory range [{mlo}, {mhi}]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(block.seed);
    let tasks = (0..block.count)
        .map(|i| {
            let base = rng.gen_range(dlo..=dhi);
            let rm = (rng.gen_range(mlo..=mhi) * 100.0).round() / 100.0;
            TaskSpec { id: TaskId(i), rm, exec_time: scale_durations(base, catalog) }
        })
        .collect();
    Ok(JobSpec { tasks, deadline })
}

fn vm(id: u16, name: &str, market: Market, vcpus: u32, memory_gb: f64, price: f64, gflops: f64) -> VmTypeSpec {
    VmTypeSpec {
        id: VmTypeId(id),
        name: name.into(),
        market,
        vcpus,
        memory_gb,
        price,
        gflops,
        baseline_fraction: 1.0,
        credit_accrual: 0.0,
        initial_credits: 0.0,
        burst_period: 60,
        max_instances: 5,
    }
}

/// Spot and on-demand c3.large, c4.large and c3.xlarge plus a burstable t3.large.
pub fn sample_catalog() -> Catalog {
    let mut t3 = vm(6, "t3.large", Market::Burstable, 2, 8.0, 0.0832, 30.0);
    t3.baseline_fraction = 0.2;
    t3.credit_accrual = 24.0;
    t3.initial_credits = 60.0;
    Catalog::new(vec![
        vm(0, "c3.large-spot", Market::Spot, 2, 3.75, 0.0299, 28.0),
        vm(1, "c4.large-spot", Market::Spot, 2, 3.75, 0.0366, 32.0),
        vm(2, "c3.xlarge-spot", Market::Spot, 4, 7.5, 0.0634, 56.0),
        vm(3, "c3.large", Market::OnDemand, 2, 3.75, 0.105, 28.0),
        vm(4, "c4.large", Market::OnDemand, 2, 3.75, 0.100, 32.0),
        vm(5, "c3.xlarge", Market::OnDemand, 4, 7.5, 0.199, 56.0),
        t3,
    ])
    .expect("sample catalog is valid")
}
