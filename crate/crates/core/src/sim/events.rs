use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::model::{InstanceId, Period, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// `pair` links a hibernation with its resume.
    Hibernate { instance: InstanceId, pair: u32 },
    Resume { instance: InstanceId, pair: u32 },
    Boot { instance: InstanceId },
    VmIdle { instance: InstanceId },
    AcBoundary { instance: InstanceId },
    TaskFinish { task: TaskId, instance: InstanceId, epoch: u64 },
    Checkpoint { task: TaskId, instance: InstanceId, epoch: u64 },
    DeferredMigration { instance: InstanceId, epoch: u64 },
    SimEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub at: Period,
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
