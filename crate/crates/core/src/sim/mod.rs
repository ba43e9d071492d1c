//! The simulation: every node of a scenario on one simulated network,
//! driven tick by tick, followed by accounting and a self-audit.

mod actors;
mod engine;
mod household;
mod node;
mod report;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use actors::RoundRow;
pub use engine::run;
pub use household::DayPlan;
pub use node::Msg;
pub use report::{
    audit_chain, balancing_ppm, ChainDump, ControlRow, DecisionRow, Failure, HouseholdRow, MetricRow, Summary, TokenRow,
};

use crate::market::Calendar;
use crate::scenario::Scenario;
use crate::simnet::{NodeId, TraceRecord};
use crate::units::{SignedWh, Tick};

/// What agents need to know about the world at the current tick.
pub struct Ctx<'a> {
    pub sc: &'a Scenario,
    pub cal: &'a Calendar,
    pub now: Tick,
    pub end: Tick,
    pub operator: NodeId,
    /// Wait before rebroadcasting anything unacknowledged.
    pub resend: Tick,
    /// How far ahead of time-bound actions nodes move.
    pub lead: Tick,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub trace_messages: bool,
}

/// Everything a run produces.
pub struct RunOutput {
    pub summary: Summary,
    pub metrics: Vec<MetricRow>,
    pub rounds: Vec<RoundRow>,
    pub tokens: Vec<TokenRow>,
    pub decisions: Vec<DecisionRow>,
    pub households: Vec<HouseholdRow>,
    pub control: Vec<ControlRow>,
    pub messages: Vec<TraceRecord>,
    /// Main-ledger validators first, then household hubs.
    pub chains: Vec<ChainDump>,
    /// Index into `chains` of the chain the accounting used.
    pub reference: usize,
    /// Per household, net consumption per real-time tick.
    pub meters: Vec<(String, Vec<SignedWh>)>,
    pub node_names: Vec<String>,
    pub failures: Vec<Failure>,
}

impl RunOutput {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}
