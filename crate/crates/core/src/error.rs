use thiserror::Error;

use crate::model::{InstanceId, Period, TaskId, VmTypeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid VM type `{name}`: {reason}")]
    InvalidVmType { name: String, reason: String },
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("invalid environment: {0}")]
    InvalidEnv(String),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("unknown instance {0}")]
    UnknownInstance(InstanceId),
    #[error("deadline {deadline} leaves no slack: worst-case migration needs {worst_case}s")]
    InfeasibleDeadline { deadline: Period, worst_case: Period },
    #[error("the catalog has no non-spot VM type to migrate to")]
    NoFallbackType,
    #[error("weight undefined for {0}: price is zero")]
    UndefinedWeight(VmTypeId),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("task {task} fits no spot VM within the bound {bound}")]
    ConstructionFailure { task: TaskId, bound: Period },
    #[error("every VM type quota is exhausted")]
    CatalogExhausted,
    #[error("tasks {tasks:?} cannot be placed within the deadline")]
    InfeasibleMap { tasks: Vec<TaskId> },
    #[error("invalid ILS parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("instance too large for exhaustive search ({estimate:.3e} candidate assignments)")]
    TooLarge { estimate: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation integrity violated at t={at}: {reason}")]
    Integrity { at: Period, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("no runs for strategy `{0}`")]
    EmptyStrategy(String),
    #[error("strategy `{strategy}` covers scenarios {found:?}, expected {expected:?}")]
    ScenarioMismatch {
        strategy: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
}
