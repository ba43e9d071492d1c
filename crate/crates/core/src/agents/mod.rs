//! Behavior of the actors: household energy management and trading, the
//! distribution operator, and aggregators.

pub mod dso;
pub mod forecast;
pub mod orders;
pub mod profile;
pub mod schedule;

pub use dso::{assess_reduction, proof_of_flow, BASELINE_WINDOW};
pub use forecast::{forecast_day, intraday_estimate, noise_rng, ForecastDay, NetPositionForecast};
pub use orders::{ask_limit, bid_limit, build_orders, call_orders, intent_for, Intent, Margins};
pub use profile::{spread, DayTrace, FlexDevice, FlexibleAppliance, HouseholdProfile, Storage, DEFAULT_PV_SHAPE};
pub use schedule::{
    apply_runs, plan_storage, price_expectation, schedule_appliances, schedule_cost, schedule_day, slot_cost,
    ApplianceRun, Schedule, SlotPrice, StoragePlan,
};
