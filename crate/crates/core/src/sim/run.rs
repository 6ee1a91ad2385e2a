use serde::{Deserialize, Serialize};

use crate::model::{ceil_div_f64, ExecMode, InstanceId, Period, TaskId};

/// Progress of a task on the instance currently holding it. Work is measured
/// in full-speed seconds of that instance's type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRun {
    pub task: TaskId,
    pub instance: InstanceId,
    pub vcpu: u32,
    pub mode: ExecMode,
    /// Full-speed execution time on this instance.
    pub work: Period,
    pub speed: f64,
    pub progress: f64,
    pub last_ckpt: f64,
    pub ckpt_count: u32,
    /// Work between two checkpoints; 0 when none are planned.
    pub ckpt_interval: f64,
    pub ckpt_limit: u32,
    /// Wall time at which `progress` was last brought up to date. During a
    /// checkpoint pause this lies in the future.
    pub seg_start: Period,
}

/// Number of checkpoints and the work between them for a task of `work`
/// seconds: as many `unit`-second pauses as fit in `budget * work`, spread
/// evenly.
pub fn checkpoint_plan(work: Period, budget: f64, unit: Period) -> (u32, f64) {
    if unit == 0 || budget <= 0.0 {
        return (0, 0.0);
    }
    let n = (budget * work as f64 / unit as f64 + 1e-9).floor() as u32;
    if n == 0 {
        (0, 0.0)
    } else {
        (n, work as f64 / f64::from(n + 1))
    }
}

impl TaskRun {
    pub fn new(
        task: TaskId,
        instance: InstanceId,
        vcpu: u32,
        mode: ExecMode,
        work: Period,
        speed: f64,
        done_fraction: f64,
        ckpt: (u32, f64),
        now: Period,
    ) -> Self {
        let progress = done_fraction * work as f64;
        TaskRun {
            task,
            instance,
            vcpu,
            mode,
            work,
            speed,
            progress,
            last_ckpt: progress,
            ckpt_count: 0,
            ckpt_interval: ckpt.1,
            ckpt_limit: ckpt.0,
            seg_start: now,
        }
    }

    /// Work done by wall time `t`.
    pub fn progress_at(&self, t: Period) -> f64 {
        if t <= self.seg_start {
            return self.progress;
        }
        (self.progress + self.speed * (t - self.seg_start) as f64).min(self.work as f64)
    }

    /// Brings `progress` up to `t` and starts a new segment there.
    pub fn advance(&mut self, t: Period) {
        if t > self.seg_start {
            self.progress = self.progress_at(t);
            self.seg_start = t;
        }
    }

    /// Next checkpoint mark beyond the current progress, if the budget allows.
    pub fn next_mark(&self) -> Option<f64> {
        if self.ckpt_interval <= 0.0 || self.ckpt_count >= self.ckpt_limit {
            return None;
        }
        let k = (self.progress / self.ckpt_interval + 1e-9).floor() + 1.0;
        let mark = k * self.ckpt_interval;
        (k <= f64::from(self.ckpt_limit) && mark < self.work as f64 - 1e-9).then_some(mark)
    }

    fn wall_to(&self, target: f64) -> Period {
        self.seg_start + ceil_div_f64((target - self.progress).max(0.0), self.speed)
    }

    /// Wall time at which the run reaches `mark`.
    pub fn time_of(&self, mark: f64) -> Period {
        self.wall_to(mark)
    }

    /// Projected completion ignoring future checkpoints.
    pub fn finish_time(&self) -> Period {
        self.wall_to(self.work as f64)
    }

    /// Projected completion including remaining checkpoint pauses.
    pub fn projected_end(&self, unit: Period) -> Period {
        let mut pending = 0;
        if self.ckpt_interval > 0.0 {
            let mut probe = self.clone();
            while let Some(m) = probe.next_mark() {
                probe.progress = m;
                probe.ckpt_count += 1;
                pending += 1;
            }
        }
        self.finish_time() + pending * unit
    }

    /// Fraction of the task secured by the last checkpoint.
    pub fn saved_fraction(&self) -> f64 {
        if self.work == 0 {
            1.0
        } else {
            (self.last_ckpt / self.work as f64).clamp(0.0, 1.0)
        }
    }
}

/// Full-speed work left for a run frozen on `run`'s instance when it restarts
/// on a type where the task takes `e_target` seconds: the work since the last
/// checkpoint is lost and the rest is rescaled to the target's speed.
pub fn remaining_time(run: &TaskRun, e_target: Period) -> Period {
    remaining_from_fraction(run.saved_fraction(), e_target)
}

pub fn remaining_from_fraction(saved: f64, e_target: Period) -> Period {
    ceil_div_f64(e_target as f64 * (1.0 - saved), 1.0)
}
