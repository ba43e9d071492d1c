//! Append-only ledger: signed transactions, the state they fold into,
//! blocks, a fork-aware chain and the validator node that maintains it.

pub mod block;
pub mod chain;
pub mod state;
pub mod tx;
pub mod validator;

pub use block::LedgerBlock;
pub use chain::{AppendVerdict, BlockReject, Chain};
pub use state::{Account, BlockContext, Debt, InvariantViolation, LedgerState, Reject};
pub use tx::{GenesisConfig, MarketRecord, Participant, Payload, ProofOfFlow, Role, SignedTransaction};
pub use validator::{LedgerMsg, Target, ValidatorBehavior, ValidatorNode, ValidatorStats};

#[cfg(test)]
pub(crate) mod tests;
