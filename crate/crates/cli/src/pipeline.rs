use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use bursthads_core::accounting::{comparison_report, ComparisonReport, RunReport};
use bursthads_core::sim::{generate_events, simulate, write_jsonl, Policy, ScenarioSpec, SimOutcome, TraceRecord};
use bursthads_core::static_sched::{burst_allocation_plan, ils_plan, initial_plan, IlsParams, PlanCtx};
use bursthads_core::{
    compute_d_spot, Catalog, EnvSpec, JobSpec, Market, Normalizer, Period, ScheduleError, ScheduleSolution, SimError,
    VmTypeId,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Strategy};

/// Simulated time limit as a multiple of the deadline.
pub const HORIZON_FACTOR: Period = 3;

/// A stable 64-bit seed for the given labels.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

pub fn policy(strategy: Strategy) -> Policy {
    match strategy {
        Strategy::HadsBaseline => Policy::HADS_BASELINE,
        Strategy::BurstHads | Strategy::OndemandIls => Policy::BURST_HADS,
    }
}

/// The static map a strategy starts from.
pub fn build_map(
    strategy: Strategy,
    job: &JobSpec,
    catalog: &Catalog,
    env: &EnvSpec,
    ils: &IlsParams,
) -> Result<ScheduleSolution, ScheduleError> {
    let d_spot = compute_d_spot(job, catalog, env)?;
    let ctx = PlanCtx::new(job, catalog, env);
    let spot = catalog.of_market(Market::Spot);
    let plan = match strategy {
        Strategy::BurstHads => {
            let norm = Normalizer::for_types(catalog, &spot, job.deadline);
            let (plan, _) = ils_plan(&ctx, &spot, &norm, ils, d_spot)?;
            burst_allocation_plan(&ctx, plan, ils.burst_rate, d_spot, job.deadline)?
        }
        Strategy::HadsBaseline => initial_plan(&ctx, &spot, d_spot)?.0,
        Strategy::OndemandIls => {
            let od = catalog.of_market(Market::OnDemand);
            let norm = Normalizer::for_types(catalog, &od, job.deadline);
            ils_plan(&ctx, &od, &norm, ils, d_spot)?.0
        }
    };
    Ok(plan.to_solution(&ctx, d_spot))
}

pub fn spot_instances(map: &ScheduleSolution) -> Vec<(bursthads_core::InstanceId, VmTypeId)> {
    map.selected_vms
        .iter()
        .filter(|v| v.market == Market::Spot)
        .map(|v| (v.id, v.vm_type))
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunKey {
    pub strategy: Strategy,
    pub scenario: usize,
    pub replication: u32,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub strategy: Strategy,
    pub scenario: String,
    pub replication: u32,
    pub seed: u64,
    pub map: ScheduleSolution,
    pub result: Result<(RunReport, SimOutcome), SimError>,
}

impl RunArtifacts {
    pub fn file_stem(&self) -> String {
        format!("{}__{}__r{}", self.strategy, self.scenario, self.replication)
    }

    pub fn report(&self) -> Option<&RunReport> {
        self.result.as_ref().ok().map(|(r, _)| r)
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.result.as_ref().ok().map(|(_, o)| o.trace.as_slice())
    }
}

/// Builds the map, injects the scenario's hibernations and simulates one run.
pub fn run_single(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    scenario: &ScenarioSpec,
    replication: u32,
) -> Result<RunArtifacts, ScheduleError> {
    let seed = derive_seed(cfg.master_seed, &[strategy.name(), &scenario.name, &replication.to_string()]);
    let ils = IlsParams { seed: derive_seed(seed, &["ils"]), ..cfg.ils.clone() };
    let map = build_map(strategy, &cfg.job, &cfg.catalog, &cfg.env, &ils)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["events"]));
    let events = generate_events(scenario, &spot_instances(&map), cfg.job.deadline, &mut rng);
    let horizon = cfg.job.deadline * HORIZON_FACTOR;
    let result = simulate(&cfg.job, &cfg.catalog, &cfg.env, policy(strategy), &map, &events, horizon).map(|outcome| {
        let report = RunReport::from_outcome(
            strategy.name(),
            &scenario.name,
            seed,
            &outcome,
            &cfg.catalog,
            &cfg.env,
            cfg.job.deadline,
        );
        (report, outcome)
    });
    Ok(RunArtifacts { strategy, scenario: scenario.name.clone(), replication, seed, map, result })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub runs: Vec<RunArtifacts>,
    pub comparison: Option<ComparisonReport>,
}

impl ExperimentResult {
    pub fn integrity_failures(&self) -> impl Iterator<Item = (&RunArtifacts, &SimError)> {
        self.runs.iter().filter_map(|r| r.result.as_ref().err().map(|e| (r, e)))
    }

    pub fn reports_by_strategy(&self) -> BTreeMap<String, Vec<RunReport>> {
        let mut out: BTreeMap<String, Vec<RunReport>> = BTreeMap::new();
        for r in &self.runs {
            if let Some(rep) = r.report() {
                out.entry(r.strategy.name().to_string()).or_default().push(rep.clone());
            }
        }
        out
    }
}

/// Every (strategy, scenario, replication) run, in parallel, returned in
/// configuration order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let keys: Vec<RunKey> = cfg
        .strategies
        .iter()
        .flat_map(|&strategy| {
            (0..cfg.scenarios.len()).flat_map(move |scenario| {
                (0..cfg.replications).map(move |replication| RunKey { strategy, scenario, replication })
            })
        })
        .collect();
    let runs = keys
        .par_iter()
        .map(|k| {
            run_single(cfg, k.strategy, &cfg.scenarios[k.scenario], k.replication).with_context(|| {
                format!("{} on {} (replication {})", k.strategy, cfg.scenarios[k.scenario].name, k.replication)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut result = ExperimentResult { runs, comparison: None };
    if result.integrity_failures().next().is_none() {
        let reference = cfg.strategies.iter().find(|s| **s != Strategy::BurstHads).map(|s| s.name());
        result.comparison = Some(comparison_report(&result.reports_by_strategy(), reference)?);
    }
    Ok(result)
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    strategy: &'a str,
    scenario: &'a str,
    seed: u64,
    cost: String,
    makespan: Period,
    deadline_met: bool,
    hibernations: u32,
    resumes: u32,
    on_demand_launched: u32,
}

pub fn write_runs_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in result.runs.iter().filter_map(RunArtifacts::report) {
        w.serialize(CsvRow {
            strategy: &r.strategy,
            scenario: &r.scenario,
            seed: r.seed,
            cost: format!("{:.6}", r.total_cost),
            makespan: r.makespan,
            deadline_met: r.deadline_met,
            hibernations: r.hibernation_count,
            resumes: r.resume_count,
            on_demand_launched: r.launched_on_demand_count,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `runs.csv`, `reports.json`, the comparison, maps and, when
/// `trace` is set, one JSONL event trace per run.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path, trace: bool) -> Result<()> {
    fs::create_dir_all(dir.join("maps")).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut csv = create(&dir.join("runs.csv"))?;
    write_runs_csv(result, &mut csv)?;
    csv.flush()?;

    let reports: Vec<&RunReport> = result.runs.iter().filter_map(RunArtifacts::report).collect();
    write_json(&dir.join("reports.json"), &reports)?;
    for r in &result.runs {
        write_json(&dir.join("maps").join(format!("{}.json", r.file_stem())), &r.map)?;
    }
    if trace {
        fs::create_dir_all(dir.join("traces"))?;
        for r in &result.runs {
            if let Some(t) = r.trace() {
                let mut w = create(&dir.join("traces").join(format!("{}.jsonl", r.file_stem())))?;
                write_jsonl(t, &mut w)?;
                w.flush()?;
            }
        }
    }
    if let Some(c) = &result.comparison {
        fs::write(dir.join("comparison.txt"), c.to_text())?;
        write_json(&dir.join("comparison.json"), c)?;
    }
    let failures: Vec<String> = result
        .integrity_failures()
        .map(|(r, e)| format!("{}: {e}", r.file_stem()))
        .collect();
    if !failures.is_empty() {
        fs::write(dir.join("failures.txt"), failures.join("\n") + "\n")?;
    }
    Ok(())
}

pub fn print_summary(result: &ExperimentResult, out: &mut dyn io::Write) -> io::Result<()> {
    if let Some(c) = &result.comparison {
        out.write_all(c.to_text().as_bytes())?;
    }
    for (r, e) in result.integrity_failures() {
        writeln!(out, "integrity error in {}: {e}", r.file_stem())?;
    }
    Ok(())
}
