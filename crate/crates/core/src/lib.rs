//! Deadline-constrained Bag-of-Tasks scheduling on spot, on-demand and
//! burstable cloud VMs, with a discrete-event simulator to exercise it.

pub mod accounting;
pub mod dynamic;
pub mod error;
pub mod model;
pub mod objective;
pub mod oracle;
pub mod sim;
pub mod solution;
pub mod static_sched;
pub mod validate;

pub use error::{ModelError, OracleError, ReportError, ScheduleError, SimError};
pub use model::*;
pub use objective::{compute_d_spot, fitness, wrr_weight, Normalizer};
pub use solution::{Assignment, Placement, ScheduleSolution};
