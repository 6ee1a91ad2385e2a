//! Discrete-event simulation of VM lifecycles, task execution, CPU credits,
//! checkpoints and injected hibernations.

pub mod credits;
pub mod events;
pub mod poisson;
pub mod run;
pub mod trace;
pub mod world;

pub use credits::{credit_tick, required_credits};
pub use events::{EventKind, SimEvent};
pub use poisson::{generate_events, poisson_arrivals, ScenarioSpec};
pub use run::{checkpoint_plan, remaining_time, TaskRun};
pub use trace::{read_jsonl, write_jsonl, Route, TraceRecord};
pub use world::{simulate, Policy, SimOutcome, TaskPhase, TaskState, World};
