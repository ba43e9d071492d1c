//! Call-market engine: order books per slot, multi-unit double auction with
//! trade reduction, clearing against ledger balances and tokens, and the
//! settlement arithmetic applied when the flow has been verified.

mod book;
mod call;
mod clear;
pub(crate) mod contract;
mod mda;
mod order;

pub use book::{Ack, OrderBook, SubmitReject};
pub use call::match_call;
pub use clear::{clear, ClearOutcome, ClearingView};
pub use contract::{settle, ContractState, ContractTerms, SettlementPlan, TradeContract};
pub use mda::{match_mda, Allocation, MatchResult};
pub use order::{MarketKind, Order, Side, SignedOrder};
