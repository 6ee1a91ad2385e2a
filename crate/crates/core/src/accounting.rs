//! Monetary cost and makespan of simulated runs, and strategy comparisons.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::ReportError;
use crate::model::{Catalog, EnvSpec, InstanceId, Market, Period, VmInstance, VmTypeId, SECONDS_PER_HOUR};
use crate::sim::trace::TraceRecord;
use crate::sim::world::SimOutcome;

fn billed(active: Period, granularity: Period) -> Period {
    active.div_ceil(granularity.max(1)) * granularity.max(1)
}

/// Price of `vm` for its active (launched, not hibernated) seconds up to its
/// termination or `until`, rounded up to the billing granularity.
pub fn instance_cost(vm: &VmInstance, catalog: &Catalog, env: &EnvSpec, until: Period) -> f64 {
    let price = catalog.get(vm.vm_type).price;
    price / SECONDS_PER_HOUR * billed(vm.active_seconds(until), env.billing_granularity) as f64
}

/// Per-instance cost rebuilt from launch, hibernate, resume and terminate
/// records alone.
pub fn cost_from_trace(trace: &[TraceRecord], env: &EnvSpec) -> BTreeMap<InstanceId, f64> {
    struct Acc {
        price: f64,
        active: Period,
        since: Option<Period>,
    }
    let mut acc: BTreeMap<InstanceId, Acc> = BTreeMap::new();
    let mut last = 0;
    for r in trace {
        last = last.max(r.time());
        match *r {
            TraceRecord::Launch { t, instance, price, .. } => {
                acc.insert(instance, Acc { price, active: 0, since: Some(t) });
            }
            TraceRecord::Hibernate { t, instance, .. } | TraceRecord::Terminate { t, instance } => {
                if let Some(a) = acc.get_mut(&instance) {
                    if let Some(s) = a.since.take() {
                        a.active += t - s;
                    }
                }
            }
            TraceRecord::Resume { t, instance } => {
                if let Some(a) = acc.get_mut(&instance) {
                    a.since.get_or_insert(t);
                }
            }
            _ => {}
        }
    }
    acc.into_iter()
        .map(|(id, mut a)| {
            if let Some(s) = a.since.take() {
                a.active += last - s;
            }
            (id, a.price / SECONDS_PER_HOUR * billed(a.active, env.billing_granularity) as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLine {
    pub instance: InstanceId,
    pub vm_type: VmTypeId,
    pub market: Market,
    pub active_seconds: Period,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: String,
    pub scenario: String,
    pub seed: u64,
    pub total_cost: f64,
    /// Time of the last task completion, or of the end of the run when the
    /// job did not finish.
    pub makespan: Period,
    pub completed: bool,
    pub deadline_met: bool,
    pub hibernation_count: u32,
    pub resume_count: u32,
    pub launched_on_demand_count: u32,
    pub deadline_risk_count: usize,
    pub lines: Vec<CostLine>,
}

impl RunReport {
    pub fn from_outcome(
        strategy: &str,
        scenario: &str,
        seed: u64,
        outcome: &SimOutcome,
        catalog: &Catalog,
        env: &EnvSpec,
        deadline: Period,
    ) -> Self {
        let end = outcome.trace.last().map_or(0, TraceRecord::time);
        let lines: Vec<CostLine> = outcome
            .instances
            .iter()
            .map(|vm| CostLine {
                instance: vm.id,
                vm_type: vm.vm_type,
                market: vm.market,
                active_seconds: vm.active_seconds(end),
                cost: instance_cost(vm, catalog, env, end),
            })
            .collect();
        let makespan = outcome.completed_at.unwrap_or(end);
        RunReport {
            strategy: strategy.to_string(),
            scenario: scenario.to_string(),
            seed,
            total_cost: lines.iter().map(|l| l.cost).sum(),
            makespan,
            completed: outcome.completed_at.is_some(),
            deadline_met: outcome.completed_at.is_some_and(|m| m <= deadline),
            hibernation_count: outcome.hibernations,
            resume_count: outcome.resumes,
            launched_on_demand_count: outcome.on_demand_launched,
            deadline_risk_count: outcome.deadline_risks.len(),
            lines,
        }
    }
}

/// `100 * (a - b) / a`, with `a` the reference value.
pub fn pct_diff(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        100.0 * (a - b) / a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub scenario: Option<String>,
    pub runs: usize,
    pub mean_cost: f64,
    pub mean_makespan: f64,
    pub violation_rate: f64,
    pub mean_hibernations: f64,
    pub mean_resumes: f64,
    pub mean_on_demand_launched: f64,
}

impl StrategySummary {
    fn of(strategy: &str, scenario: Option<&str>, runs: &[&RunReport]) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = |f: &dyn Fn(&RunReport) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
        StrategySummary {
            strategy: strategy.to_string(),
            scenario: scenario.map(str::to_string),
            runs: runs.len(),
            mean_cost: mean(&|r| r.total_cost),
            mean_makespan: mean(&|r| r.makespan as f64),
            violation_rate: mean(&|r| f64::from(u8::from(!r.deadline_met))),
            mean_hibernations: mean(&|r| f64::from(r.hibernation_count)),
            mean_resumes: mean(&|r| f64::from(r.resume_count)),
            mean_on_demand_launched: mean(&|r| f64::from(r.launched_on_demand_count)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diff {
    pub reference: String,
    pub other: String,
    pub scenario: Option<String>,
    /// Positive when `other` is cheaper.
    pub cost_pct: f64,
    /// Positive when `other` is faster.
    pub makespan_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: String,
    pub overall: Vec<StrategySummary>,
    pub per_scenario: Vec<StrategySummary>,
    pub diffs: Vec<Diff>,
}

/// Means per strategy, overall and per scenario, and percentage differences
/// of every strategy against `reference` (the first strategy if `None`).
pub fn comparison_report(
    runs: &BTreeMap<String, Vec<RunReport>>,
    reference: Option<&str>,
) -> Result<ComparisonReport, ReportError> {
    let mut expected: Option<Vec<String>> = None;
    for (strategy, list) in runs {
        if list.is_empty() {
            return Err(ReportError::EmptyStrategy(strategy.clone()));
        }
        let found: Vec<String> = list
            .iter()
            .map(|r| r.scenario.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        match &expected {
            None => expected = Some(found),
            Some(e) if *e != found => {
                return Err(ReportError::ScenarioMismatch {
                    strategy: strategy.clone(),
                    expected: e.clone(),
                    found,
                })
            }
            Some(_) => {}
        }
    }
    let scenarios = expected.unwrap_or_default();
    let reference = reference
        .filter(|r| runs.contains_key(*r))
        .map(str::to_string)
        .or_else(|| runs.keys().next().cloned())
        .unwrap_or_default();

    let mut overall = Vec::new();
    let mut per_scenario = Vec::new();
    for (strategy, list) in runs {
        overall.push(StrategySummary::of(strategy, None, &list.iter().collect::<Vec<_>>()));
        for sc in &scenarios {
            let subset: Vec<&RunReport> = list.iter().filter(|r| &r.scenario == sc).collect();
            per_scenario.push(StrategySummary::of(strategy, Some(sc), &subset));
        }
    }

    let mut diffs = Vec::new();
    let find = |rows: &[StrategySummary], s: &str, sc: &Option<String>| {
        rows.iter().find(|r| r.strategy == s && &r.scenario == sc).cloned()
    };
    for other in runs.keys().filter(|s| **s != reference) {
        let keys = std::iter::once(None).chain(scenarios.iter().cloned().map(Some));
        for sc in keys {
            let rows = if sc.is_none() { &overall } else { &per_scenario };
            if let (Some(a), Some(b)) = (find(rows, &reference, &sc), find(rows, other, &sc)) {
                diffs.push(Diff {
                    reference: reference.clone(),
                    other: other.clone(),
                    scenario: sc,
                    cost_pct: pct_diff(a.mean_cost, b.mean_cost),
                    makespan_pct: pct_diff(a.mean_makespan, b.mean_makespan),
                });
            }
        }
    }
    Ok(ComparisonReport { reference, overall, per_scenario, diffs })
}

impl ComparisonReport {
    /// Aligned plain-text tables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:<10} {:>5} {:>10} {:>10} {:>8} {:>7} {:>7} {:>7}",
            "strategy", "scenario", "runs", "cost", "makespan", "viol%", "hib", "res", "od"
        );
        for s in self.overall.iter().chain(&self.per_scenario) {
            let _ = writeln!(
                out,
                "{:<16} {:<10} {:>5} {:>10.4} {:>10.1} {:>8.1} {:>7.2} {:>7.2} {:>7.2}",
                s.strategy,
                s.scenario.as_deref().unwrap_or("all"),
                s.runs,
                s.mean_cost,
                s.mean_makespan,
                100.0 * s.violation_rate,
                s.mean_hibernations,
                s.mean_resumes,
                s.mean_on_demand_launched,
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<16} {:<16} {:<10} {:>10} {:>12}",
            "reference", "other", "scenario", "cost diff", "mkspan diff"
        );
        for d in &self.diffs {
            let _ = writeln!(
                out,
                "{:<16} {:<16} {:<10} {:>9.2}% {:>11.2}%",
                d.reference,
                d.other,
                d.scenario.as_deref().unwrap_or("all"),
                d.cost_pct,
                d.makespan_pct
            );
        }
        out
    }
}
