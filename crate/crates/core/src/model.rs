//! Domain types shared by every scheduling stage.
//!
//! Time is a 1-second grid: every duration and period index is a whole
//! number of seconds counted from the moment the primary map is launched.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// A period index or duration on the 1-second grid.
pub type Period = u64;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Megabytes per gigabyte, used to compare task footprints against VM memory.
pub const MB_PER_GB: f64 = 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VmTypeId(pub u16);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vm{}", self.0)
    }
}

impl fmt::Display for VmTypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "type{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Market {
    Spot,
    OnDemand,
    Burstable,
}

impl Market {
    pub fn is_spot(self) -> bool {
        self == Market::Spot
    }

    pub fn is_burstable(self) -> bool {
        self == Market::Burstable
    }
}

impl fmt::Display for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Market::Spot => "spot",
            Market::OnDemand => "on-demand",
            Market::Burstable => "burstable",
        })
    }
}

/// Execution speed of a task on a burstable VM. Non-burstable VMs only run
/// `Burst` entries, which there simply means full speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Burst,
    Baseline,
}

/// One task of the bag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    /// Memory footprint in megabytes.
    pub rm: f64,
    /// Full-speed execution time on each VM type, in seconds.
    pub exec_time: BTreeMap<VmTypeId, Period>,
}

impl TaskSpec {
    pub fn exec_on(&self, vm_type: VmTypeId) -> Period {
        self.exec_time.get(&vm_type).copied().unwrap_or_else(|| {
            panic!("task {} has no execution time for {}", self.id, vm_type)
        })
    }
}

/// A market offering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmTypeSpec {
    pub id: VmTypeId,
    pub name: String,
    pub market: Market,
    pub vcpus: u32,
    pub memory_gb: f64,
    /// Price in USD per hour.
    pub price: f64,
    pub gflops: f64,
    /// Fraction of full speed available without spending credits. 1.0 for
    /// non-burstable types.
    pub baseline_fraction: f64,
    /// Credits earned per hour while not bursting.
    pub credit_accrual: f64,
    pub initial_credits: f64,
    /// Seconds of full-speed single-vCPU execution covered by one credit.
    pub burst_period: Period,
    pub max_instances: u32,
}

impl VmTypeSpec {
    pub fn memory_mb(&self) -> f64 {
        self.memory_gb * MB_PER_GB
    }

    pub fn is_burstable(&self) -> bool {
        self.market.is_burstable()
    }

    /// Wall time needed to run `work` seconds of full-speed work in `mode`.
    pub fn wall_time(&self, work: Period, mode: ExecMode) -> Period {
        match mode {
            ExecMode::Burst => work,
            ExecMode::Baseline => ceil_div_f64(work as f64, self.baseline_fraction),
        }
    }

    pub fn speed(&self, mode: ExecMode) -> f64 {
        match mode {
            ExecMode::Burst => 1.0,
            ExecMode::Baseline => self.baseline_fraction,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| {
            Err(ModelError::InvalidVmType {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.vcpus < 1 {
            return bad("vcpus must be at least 1");
        }
        if !(self.price >= 0.0) {
            return bad("price must be non-negative");
        }
        if !(self.memory_gb > 0.0) {
            return bad("memory must be positive");
        }
        if !(self.baseline_fraction > 0.0 && self.baseline_fraction <= 1.0) {
            return bad("baseline_fraction must lie in ]0,1]");
        }
        if self.market.is_burstable() != (self.baseline_fraction < 1.0) {
            return bad("only burstable types may have a baseline fraction below 1");
        }
        if self.max_instances < 1 {
            return bad("max_instances must be at least 1");
        }
        if self.market.is_burstable() && self.burst_period == 0 {
            return bad("burst_period must be positive for burstable types");
        }
        Ok(())
    }
}

/// Division rounded up, tolerant to floating-point noise just above an
/// integer (so 300 / 0.2 is 1500, not 1501).
pub fn ceil_div_f64(num: f64, den: f64) -> Period {
    let q = num / den;
    let r = q.round();
    if (q - r).abs() < 1e-9 {
        r.max(0.0) as Period
    } else {
        q.ceil().max(0.0) as Period
    }
}

/// The set of VM offerings, indexed by [`VmTypeId`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    types: Vec<VmTypeSpec>,
}

impl Catalog {
    /// Builds a catalog; type ids must be `0..n` in order.
    pub fn new(types: Vec<VmTypeSpec>) -> Result<Self, ModelError> {
        for (i, t) in types.iter().enumerate() {
            if t.id.0 as usize != i {
                return Err(ModelError::InvalidVmType {
                    name: t.name.clone(),
                    reason: format!("expected id {i}, found {}", t.id.0),
                });
            }
            t.validate()?;
        }
        Ok(Catalog { types })
    }

    pub fn get(&self, id: VmTypeId) -> &VmTypeSpec {
        &self.types[id.0 as usize]
    }

    pub fn types(&self) -> &[VmTypeSpec] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn by_name(&self, name: &str) -> Option<&VmTypeSpec> {
        self.types.iter().find(|t| t.name == name)
    }

    pub fn of_market(&self, market: Market) -> Vec<VmTypeId> {
        self.types
            .iter()
            .filter(|t| t.market == market)
            .map(|t| t.id)
            .collect()
    }
}

/// The bag of tasks and its deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub tasks: Vec<TaskSpec>,
    pub deadline: Period,
}

impl JobSpec {
    pub fn task(&self, id: TaskId) -> Option<&TaskSpec> {
        // ids are usually dense and sorted; fall back to a scan otherwise
        match self.tasks.get(id.0 as usize) {
            Some(t) if t.id == id => Some(t),
            _ => self.tasks.iter().find(|t| t.id == id),
        }
    }

    pub fn validate(&self, catalog: &Catalog, env: &EnvSpec) -> Result<(), ModelError> {
        if self.deadline <= env.startup_overhead {
            return Err(ModelError::InvalidJob(format!(
                "deadline {} must exceed the startup overhead {}",
                self.deadline, env.startup_overhead
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tasks {
            if !seen.insert(t.id) {
                return Err(ModelError::InvalidJob(format!("duplicate task id {}", t.id)));
            }
            if !(t.rm > 0.0) {
                return Err(ModelError::InvalidJob(format!("task {} has non-positive memory", t.id)));
            }
            for vt in catalog.types() {
                match t.exec_time.get(&vt.id) {
                    Some(&e) if e > 0 => {}
                    Some(_) => {
                        return Err(ModelError::InvalidJob(format!(
                            "task {} has a zero duration on {}",
                            t.id, vt.name
                        )))
                    }
                    None => {
                        return Err(ModelError::InvalidJob(format!(
                            "task {} has no duration for {}",
                            t.id, vt.name
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    /// Boot delay of every VM before it can execute tasks.
    pub startup_overhead: Period,
    /// Weight of cost against makespan in the objective.
    pub alpha: f64,
    pub billing_granularity: Period,
    /// Allocation-cycle length.
    pub ac_len: Period,
    /// Maximum checkpoint overhead as a fraction of task execution time.
    pub ckpt_overhead_budget: f64,
    /// Wall time taken by one checkpoint.
    pub ckpt_unit_cost: Period,
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec {
            startup_overhead: 60,
            alpha: 0.5,
            billing_granularity: 1,
            ac_len: 900,
            ckpt_overhead_budget: 0.10,
            ckpt_unit_cost: 5,
        }
    }
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ModelError::InvalidEnv("alpha must lie in [0,1]".into()));
        }
        if self.ac_len == 0 {
            return Err(ModelError::InvalidEnv("ac_len must be positive".into()));
        }
        if self.billing_granularity == 0 {
            return Err(ModelError::InvalidEnv("billing_granularity must be positive".into()));
        }
        if !(self.ckpt_overhead_budget >= 0.0) {
            return Err(ModelError::InvalidEnv("ckpt_overhead_budget must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VmState {
    Busy,
    Idle,
    Hibernated,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueuedTask {
    pub task: TaskId,
    pub mode: ExecMode,
}

/// A launched (or planned) VM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmInstance {
    pub id: InstanceId,
    pub vm_type: VmTypeId,
    pub market: Market,
    pub state: VmState,
    pub launched_at: Period,
    /// Credit balance. Non-burstable instances carry `f64::INFINITY`,
    /// written as `null`.
    #[serde(with = "unbounded")]
    pub cc: f64,
    pub reserved_credits: f64,
    /// Per-vCPU ordered task queues; the head of a queue is the one that runs.
    pub queues: Vec<VecDeque<QueuedTask>>,
    pub ac_len: Period,
    /// Closed or still-open `(start, end)` hibernation intervals.
    pub hibernation_intervals: Vec<(Period, Option<Period>)>,
    pub terminated_at: Option<Period>,
    pub credits_accrued: f64,
    pub credits_consumed: f64,
    #[serde(with = "unbounded")]
    pub initial_credits: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl VmInstance {
    pub fn new(id: InstanceId, spec: &VmTypeSpec, launched_at: Period, ac_len: Period) -> Self {
        let credits = if spec.is_burstable() {
            spec.initial_credits
        } else {
            f64::INFINITY
        };
        VmInstance {
            id,
            vm_type: spec.id,
            market: spec.market,
            state: VmState::Idle,
            launched_at,
            cc: credits,
            reserved_credits: 0.0,
            queues: vec![VecDeque::new(); spec.vcpus as usize],
            ac_len,
            hibernation_intervals: Vec::new(),
            terminated_at: None,
            credits_accrued: 0.0,
            credits_consumed: 0.0,
            initial_credits: credits,
        }
    }

    pub fn is_burstable(&self) -> bool {
        self.market.is_burstable()
    }

    pub fn task_count(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &QueuedTask> {
        self.queues.iter().flat_map(|q| q.iter())
    }

    pub fn holds(&self, task: TaskId) -> bool {
        self.tasks().any(|q| q.task == task)
    }

    /// Time the instance can start executing tasks.
    pub fn ready_at(&self, env: &EnvSpec) -> Period {
        self.launched_at + env.startup_overhead
    }

    /// Seconds the instance was billable up to `until` (or its termination).
    pub fn active_seconds(&self, until: Period) -> Period {
        let end = self.terminated_at.unwrap_or(until).max(self.launched_at);
        let hibernated: Period = self
            .hibernation_intervals
            .iter()
            .map(|&(s, e)| {
                let e = e.unwrap_or(end).min(end);
                e.saturating_sub(s)
            })
            .sum();
        (end - self.launched_at).saturating_sub(hibernated)
    }
}
