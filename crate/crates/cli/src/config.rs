//! Experiment configuration document.
//!
//! ```toml
//! strategies = ["burst-hads", "hads-baseline"]
//! replications = 3
//!
//! [[vm_type]]
//! name = "c3.large-spot"
//! market = "spot"
//! vcpus = 2
//! memory_gb = 3.75
//! price = 0.0299
//! gflops = 28.0
//!
//! [job]
//! deadline = 2700
//! [job.generator]
//! count = 60
//! duration = [102, 330]
//! memory_mb = [2.85, 12.20]
//! seed = 7
//!
//! [[scenario]]
//! name = "sc_1"
//! k_h = 1.0
//! k_r = 0.0
//! ```
//!
//! `examples/reference_setup.toml` in this crate documents every key.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;
use std::str::FromStr;

use bursthads_core::sim::ScenarioSpec;
use bursthads_core::static_sched::IlsParams;
use bursthads_core::{Catalog, EnvSpec, JobSpec, Market, Period, TaskId, TaskSpec, VmTypeId, VmTypeSpec};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::workload::{generate_job, GeneratorBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    BurstHads,
    HadsBaseline,
    OndemandIls,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::BurstHads, Strategy::HadsBaseline, Strategy::OndemandIls];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::BurstHads => "burst-hads",
            Strategy::HadsBaseline => "hads-baseline",
            Strategy::OndemandIls => "ondemand-ils",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected burst-hads, hads-baseline or ondemand-ils)"))
    }
}

/// A configuration error pointing at a line of the document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of(text: &str, span: Range<usize>) -> usize {
    text[..span.start.min(text.len())].matches('\n').count() + 1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVmType {
    name: Spanned<String>,
    market: Market,
    vcpus: u32,
    memory_gb: f64,
    price: f64,
    gflops: f64,
    #[serde(default)]
    baseline_fraction: Option<f64>,
    #[serde(default)]
    credit_accrual: f64,
    #[serde(default)]
    initial_credits: f64,
    #[serde(default = "default_burst_period")]
    burst_period: Period,
    #[serde(default = "default_max_instances")]
    max_instances: u32,
}

fn default_burst_period() -> Period {
    60
}

fn default_max_instances() -> u32 {
    5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    rm: f64,
    /// Duration on a reference vCPU, scaled to every type.
    #[serde(default)]
    base: Option<Period>,
    /// Explicit duration per type name.
    #[serde(default)]
    exec_time: Option<BTreeMap<String, Period>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJob {
    deadline: Period,
    #[serde(default)]
    generator: Option<Spanned<GeneratorBlock>>,
    #[serde(default)]
    task: Vec<Spanned<RawTask>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    k_h: f64,
    k_r: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    master_seed: u64,
    replications: Spanned<u32>,
    strategies: Spanned<Vec<Strategy>>,
    #[serde(default)]
    trace: bool,
    #[serde(default)]
    env: EnvSpec,
    #[serde(default)]
    ils: IlsParams,
    vm_type: Spanned<Vec<RawVmType>>,
    job: Spanned<RawJob>,
    scenario: Spanned<Vec<Spanned<RawScenario>>>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub catalog: Catalog,
    pub job: JobSpec,
    pub env: EnvSpec,
    pub ils: IlsParams,
    pub scenarios: Vec<ScenarioSpec>,
    pub strategies: Vec<Strategy>,
    pub replications: u32,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub trace: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(text, s)),
            message: e.message().to_string(),
        })?;
        let at = |span: Range<usize>, message: String| ConfigError { line: Some(line_of(text, span)), message };

        if *raw.replications.get_ref() < 1 {
            return Err(at(raw.replications.span(), "replications must be at least 1".into()));
        }
        if raw.strategies.get_ref().is_empty() {
            return Err(at(raw.strategies.span(), "strategies must not be empty".into()));
        }
        raw.env.validate().map_err(|e| ConfigError { line: None, message: e.to_string() })?;
        raw.ils.validate().map_err(|e| ConfigError { line: None, message: e.to_string() })?;

        let vm_span = raw.vm_type.span();
        let mut types = Vec::new();
        for (i, v) in raw.vm_type.into_inner().into_iter().enumerate() {
            let span = v.name.span();
            let name = v.name.into_inner();
            if types.iter().any(|t: &VmTypeSpec| t.name == name) {
                return Err(at(span, format!("duplicate vm_type name `{name}`")));
            }
            let burstable = v.market == Market::Burstable;
            let spec = VmTypeSpec {
                id: VmTypeId(i as u16),
                name,
                market: v.market,
                vcpus: v.vcpus,
                memory_gb: v.memory_gb,
                price: v.price,
                gflops: v.gflops,
                baseline_fraction: v.baseline_fraction.unwrap_or(if burstable { 0.2 } else { 1.0 }),
                credit_accrual: v.credit_accrual,
                initial_credits: v.initial_credits,
                burst_period: v.burst_period,
                max_instances: v.max_instances,
            };
            spec.validate().map_err(|e| at(span.clone(), e.to_string()))?;
            types.push(spec);
        }
        if types.is_empty() {
            return Err(at(vm_span, "at least one vm_type is required".into()));
        }
        let catalog = Catalog::new(types).map_err(|e| at(vm_span, e.to_string()))?;

        let job_span = raw.job.span();
        let raw_job = raw.job.into_inner();
        let job = match (raw_job.generator, raw_job.task.is_empty()) {
            (Some(_), false) => {
                return Err(at(job_span, "job takes either a generator block or tasks, not both".into()))
            }
            (Some(g), true) => {
                let span = g.span();
                generate_job(g.get_ref(), &catalog, raw_job.deadline).map_err(|e| at(span, e))?
            }
            (None, false) => inline_job(&catalog, raw_job.deadline, raw_job.task, &at)?,
            (None, true) => return Err(at(job_span, "job has no tasks".into())),
        };
        job.validate(&catalog, &raw.env).map_err(|e| at(job_span, e.to_string()))?;

        let sc_span = raw.scenario.span();
        let mut scenarios: Vec<ScenarioSpec> = Vec::new();
        for s in raw.scenario.into_inner() {
            let span = s.span();
            let s = s.into_inner();
            if !(s.k_h >= 0.0 && s.k_r >= 0.0) {
                return Err(at(span, format!("scenario `{}`: k_h and k_r must be non-negative", s.name)));
            }
            if scenarios.iter().any(|x| x.name == s.name) {
                return Err(at(span, format!("duplicate scenario name `{}`", s.name)));
            }
            scenarios.push(ScenarioSpec { name: s.name, k_h: s.k_h, k_r: s.k_r, seed: 0 });
        }
        if scenarios.is_empty() {
            return Err(at(sc_span, "at least one scenario is required".into()));
        }

        let mut strategies = raw.strategies.into_inner();
        strategies.dedup();
        Ok(ExperimentConfig {
            catalog,
            job,
            env: raw.env,
            ils: raw.ils,
            scenarios,
            strategies,
            replications: raw.replications.into_inner(),
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            master_seed: raw.master_seed,
            trace: raw.trace,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_toml(&text).map_err(|e| ConfigError {
            line: e.line,
            message: format!("{}: {}", path.display(), e.message),
        })
    }
}

fn inline_job(
    catalog: &Catalog,
    deadline: Period,
    tasks: Vec<Spanned<RawTask>>,
    at: &dyn Fn(Range<usize>, String) -> ConfigError,
) -> Result<JobSpec, ConfigError> {
    let mut out = Vec::new();
    for (i, t) in tasks.into_iter().enumerate() {
        let span = t.span();
        let t = t.into_inner();
        let exec_time = match (t.base, t.exec_time) {
            (Some(base), None) => crate::workload::scale_durations(base, catalog),
            (None, Some(map)) => {
                let mut e = BTreeMap::new();
                for (name, d) in map {
                    let vt = catalog
                        .by_name(&name)
                        .ok_or_else(|| at(span.clone(), format!("unknown vm_type `{name}`")))?;
                    e.insert(vt.id, d);
                }
                e
            }
            _ => return Err(at(span, "a task needs exactly one of `base` or `exec_time`".into())),
        };
        out.push(TaskSpec { id: TaskId(i as u32), rm: t.rm, exec_time });
    }
    Ok(JobSpec { tasks: out, deadline })
}
