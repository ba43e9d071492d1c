//! The three market timescales and what happens around delivery: the
//! session calendar, intraday deviation handling, real-time objective
//! tracking, imbalance settlement and the utility boundary.

pub mod accounting;
pub mod calendar;
pub mod imbalance;
pub mod intraday;
pub mod realtime;

pub use accounting::{boundary_flow, BoundaryFlow};
pub use calendar::Calendar;
pub use imbalance::{settle_imbalance, settle_overdelivery, ImbalanceRecord};
pub use intraday::{absorb_deviation, Absorption, StorageHeadroom};
pub use realtime::{baseline_reference, track_realtime, DeliveryAssessment, ObjectiveKind, RealTimeObjective};
