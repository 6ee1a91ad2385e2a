use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::model::{ExecMode, InstanceId, Market, Period, TaskId, VmTypeId};

/// Which step of the migration procedure placed a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    IdleBurstable,
    IdleRegular,
    BusyRegular,
    NewOnDemand,
    Steal,
    /// Last-resort placement that may miss the deadline.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceRecord {
    Launch { t: Period, instance: InstanceId, vm_type: VmTypeId, market: Market, price: f64 },
    Boot { t: Period, instance: InstanceId },
    TaskStart { t: Period, instance: InstanceId, task: TaskId, vcpu: u32, mode: ExecMode, work: Period },
    Checkpoint { t: Period, instance: InstanceId, task: TaskId, progress: f64 },
    TaskFinish { t: Period, instance: InstanceId, task: TaskId },
    VmIdle { t: Period, instance: InstanceId },
    AcBoundary { t: Period, instance: InstanceId },
    Hibernate { t: Period, instance: InstanceId, affected: Vec<TaskId> },
    Resume { t: Period, instance: InstanceId },
    Discarded { t: Period, instance: InstanceId, what: String },
    Migrate {
        t: Period,
        task: TaskId,
        source: InstanceId,
        target: InstanceId,
        route: Route,
        attempt: u8,
        mode: ExecMode,
    },
    DeadlineRisk { t: Period, task: TaskId, source: InstanceId },
    CreditsExhausted { t: Period, instance: InstanceId },
    Terminate { t: Period, instance: InstanceId },
    SimEnd { t: Period, completed: bool },
}

impl TraceRecord {
    pub fn time(&self) -> Period {
        match *self {
            TraceRecord::Launch { t, .. }
            | TraceRecord::Boot { t, .. }
            | TraceRecord::TaskStart { t, .. }
            | TraceRecord::Checkpoint { t, .. }
            | TraceRecord::TaskFinish { t, .. }
            | TraceRecord::VmIdle { t, .. }
            | TraceRecord::AcBoundary { t, .. }
            | TraceRecord::Hibernate { t, .. }
            | TraceRecord::Resume { t, .. }
            | TraceRecord::Discarded { t, .. }
            | TraceRecord::Migrate { t, .. }
            | TraceRecord::DeadlineRisk { t, .. }
            | TraceRecord::CreditsExhausted { t, .. }
            | TraceRecord::Terminate { t, .. }
            | TraceRecord::SimEnd { t, .. } => t,
        }
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write>(records: &[TraceRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> serde_json::Result<Vec<TraceRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
