use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tx::{GenesisConfig, Payload, SignedTransaction};
use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::crypto::{tagged_hash, AgentId, Hash32, KeyPair, PublicKey, Signature};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerBlock {
    pub height: u64,
    /// Proposal round; fixes the proposer and the block's timestamp.
    pub round: u64,
    pub parent_hash: Hash32,
    pub proposer: AgentId,
    pub transactions: Vec<SignedTransaction>,
    pub block_hash: Hash32,
    pub proposer_signature: Signature,
}

impl LedgerBlock {
    pub fn compute_hash(
        height: u64,
        round: u64,
        parent_hash: &Hash32,
        proposer: &AgentId,
        transactions: &[SignedTransaction],
    ) -> Hash32 {
        let mut w = Writer::new();
        w.u64(height).u64(round).put(parent_hash).put(proposer).u32(transactions.len() as u32);
        for tx in transactions {
            w.put(&tx.tx_id);
        }
        tagged_hash("vdg/block", &[&w.finish()])
    }

    pub fn new(key: &KeyPair, height: u64, round: u64, parent_hash: Hash32, transactions: Vec<SignedTransaction>) -> Self {
        let proposer = key.agent_id();
        let block_hash = Self::compute_hash(height, round, &parent_hash, &proposer, &transactions);
        LedgerBlock {
            height,
            round,
            parent_hash,
            proposer,
            transactions,
            proposer_signature: key.sign(&block_hash.0),
            block_hash,
        }
    }

    pub fn genesis(config: &GenesisConfig) -> Self {
        let tx = SignedTransaction::assemble(AgentId::default(), 0, Payload::Genesis(config.clone()), Signature::ZERO);
        let transactions = alloc::vec![tx];
        let block_hash = Self::compute_hash(0, 0, &Hash32::ZERO, &AgentId::default(), &transactions);
        LedgerBlock {
            height: 0,
            round: 0,
            parent_hash: Hash32::ZERO,
            proposer: AgentId::default(),
            transactions,
            block_hash,
            proposer_signature: Signature::ZERO,
        }
    }

    /// Hash matches content and every transaction id matches its fields.
    pub fn hash_is_consistent(&self) -> bool {
        self.transactions.iter().all(|t| t.tx_id == t.compute_id())
            && self.block_hash
                == Self::compute_hash(self.height, self.round, &self.parent_hash, &self.proposer, &self.transactions)
    }

    pub fn signature_valid(&self, key: &PublicKey) -> bool {
        key.verify(&self.block_hash.0, &self.proposer_signature)
    }

    pub fn genesis_config(&self) -> Option<&GenesisConfig> {
        match self.transactions.first().map(|t| &t.payload) {
            Some(Payload::Genesis(g)) if self.height == 0 => Some(g),
            _ => None,
        }
    }
}

impl Encode for LedgerBlock {
    fn encode(&self, w: &mut Writer) {
        w.u64(self.height)
            .u64(self.round)
            .put(&self.parent_hash)
            .put(&self.proposer)
            .list(&self.transactions)
            .put(&self.block_hash)
            .put(&self.proposer_signature);
    }
}

impl Decode for LedgerBlock {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(LedgerBlock {
            height: r.u64()?,
            round: r.u64()?,
            parent_hash: r.get()?,
            proposer: r.get()?,
            transactions: r.list()?,
            block_hash: r.get()?,
            proposer_signature: r.get()?,
        })
    }
}
