//! Household control ownership: time-bounded leases over devices and
//! environment variables, recorded on the household hub's chain, and an
//! event-condition-action engine whose actions require a held lease.

pub mod eca;
pub mod lease;

pub use eca::{execute_eca, Action, Cmp, Condition, EcaRule, Event, Outcome, Suppressed};
pub use lease::{ControlLease, ControlResource, LeaseTable, ResourceKind};
