//! Deterministic core of a residential virtual-distribution-grid market simulator.
//!
//! Household agents forecast their net position, schedule flexible appliances,
//! and trade surplus, deficit and flexibility on day-ahead, intraday and
//! real-time local markets. Markets clear with a trade-reduction multi-unit
//! double auction and settle on an append-only ledger that carries two token
//! kinds: currency and slot-bound energy tokens (ecoins) that only gain value
//! once the distribution operator attests the physical flow.
//!
//! Everything here is `no_std` + `alloc`: no clocks, no files, no threads.
//! Time is the simulated tick, randomness is seeded ChaCha, and every output
//! is a pure function of the scenario. File formats and the command line live
//! in the `vdg` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod agents;
pub mod auction;
pub mod codec;
pub mod control;
pub mod crypto;
pub mod ledger;
pub mod market;
pub mod scenario;
pub mod sim;
pub mod simnet;
pub mod tokens;
pub mod units;

pub use crypto::{AgentId, Hash32, KeyPair, PublicKey, Signature};
pub use units::{Centi, PricePerKwh, TimeSlot, Wh, TRADE_UNIT_WH};
