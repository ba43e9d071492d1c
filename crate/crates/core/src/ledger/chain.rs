use alloc::collections::{BTreeMap, BTreeSet};
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::block::LedgerBlock;
use super::state::{BlockContext, LedgerState, Reject};
use super::tx::{GenesisConfig, SignedTransaction};
use crate::crypto::{Hash32, KeyPair, PublicKey};

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockReject {
    #[error("block hash does not match content")]
    BadHash,
    #[error("unknown parent")]
    BadParent,
    #[error("height is not parent height + 1")]
    BadHeight,
    #[error("round not after parent round")]
    StaleRound,
    #[error("proposer is not scheduled for this round")]
    WrongProposer,
    #[error("bad proposer signature")]
    BadSignature,
    #[error("transaction {index} invalid: {reason}")]
    InvalidTxInBlock { index: usize, reason: Reject },
}

impl BlockReject {
    pub fn code(&self) -> &'static str {
        match self {
            BlockReject::BadHash => "bad-hash",
            BlockReject::BadParent => "bad-parent",
            BlockReject::BadHeight => "bad-height",
            BlockReject::StaleRound => "stale-round",
            BlockReject::WrongProposer => "wrong-proposer",
            BlockReject::BadSignature => "bad-signature",
            BlockReject::InvalidTxInBlock { .. } => "invalid-tx-in-block",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppendVerdict {
    /// Stored. If the tip moved, `abandoned` holds transactions that were on
    /// the old best chain and are not on the new one.
    Accepted { tip_changed: bool, abandoned: Vec<SignedTransaction> },
    Duplicate,
    Rejected(BlockReject),
}

struct Entry {
    block: Rc<LedgerBlock>,
    state: Option<Rc<LedgerState>>,
}

/// One validator's view: every valid block it has seen, arranged as a tree,
/// with the best chain selected by height and then by lower hash.
pub struct Chain {
    config: GenesisConfig,
    keys: Vec<PublicKey>,
    entries: BTreeMap<Hash32, Entry>,
    invalid: BTreeMap<Hash32, BlockReject>,
    /// Best chain, indexed by height.
    main: Vec<Hash32>,
    /// Transaction id to height, for transactions on the best chain.
    main_txs: BTreeMap<Hash32, u64>,
    with_state: BTreeSet<(u64, Hash32)>,
    state_window: u64,
    /// Off only for fault-injection runs.
    pub check_signatures: bool,
}

impl Chain {
    pub fn new(genesis: LedgerBlock) -> Result<Self, String> {
        let config = genesis.genesis_config().ok_or("block 0 carries no genesis configuration")?.clone();
        if genesis.transactions.len() != 1 || !genesis.hash_is_consistent() || genesis.parent_hash != Hash32::ZERO {
            return Err("malformed genesis block".into());
        }
        let state = LedgerState::genesis(&config)?;
        let keys = config
            .validators
            .iter()
            .map(|v| state.accounts[v].public_key)
            .collect();
        let hash = genesis.block_hash;
        let mut main_txs = BTreeMap::new();
        main_txs.insert(genesis.transactions[0].tx_id, 0);
        let mut entries = BTreeMap::new();
        entries.insert(hash, Entry { block: Rc::new(genesis), state: Some(Rc::new(state)) });
        Ok(Chain {
            config,
            keys,
            entries,
            invalid: BTreeMap::new(),
            main: alloc::vec![hash],
            main_txs,
            with_state: BTreeSet::new(),
            state_window: 64,
            check_signatures: true,
        })
    }

    pub fn from_config(config: &GenesisConfig) -> Result<Self, String> {
        Self::new(LedgerBlock::genesis(config))
    }

    pub fn config(&self) -> &GenesisConfig {
        &self.config
    }

    pub fn genesis_hash(&self) -> Hash32 {
        self.main[0]
    }

    pub fn tip_hash(&self) -> Hash32 {
        *self.main.last().expect("genesis")
    }

    pub fn height(&self) -> u64 {
        self.main.len() as u64 - 1
    }

    pub fn tip(&self) -> &LedgerBlock {
        &self.entries[&self.tip_hash()].block
    }

    pub fn block(&self, hash: &Hash32) -> Option<&LedgerBlock> {
        self.entries.get(hash).map(|e| &*e.block)
    }

    pub fn contains(&self, hash: &Hash32) -> bool {
        self.entries.contains_key(hash)
    }

    pub fn known_invalid(&self, hash: &Hash32) -> Option<&BlockReject> {
        self.invalid.get(hash)
    }

    pub fn block_count(&self) -> usize {
        self.entries.len()
    }

    /// Blocks of the best chain from genesis to tip.
    pub fn main_chain(&self) -> impl Iterator<Item = &LedgerBlock> {
        self.main.iter().map(|h| &*self.entries[h].block)
    }

    pub fn main_hash_at(&self, height: u64) -> Option<Hash32> {
        self.main.get(height as usize).copied()
    }

    /// Height at which a transaction sits on the best chain.
    pub fn tx_height(&self, tx_id: &Hash32) -> Option<u64> {
        self.main_txs.get(tx_id).copied()
    }

    pub fn scheduled_proposer(&self, round: u64) -> usize {
        (round % self.config.validators.len() as u64) as usize
    }

    pub fn context_for(&self, height: u64, round: u64) -> BlockContext {
        BlockContext { height, time: round * self.config.round_ticks }
    }

    pub fn tip_state(&self) -> Rc<LedgerState> {
        self.state_at(&self.tip_hash()).expect("tip is known")
    }

    /// State after `hash`, replaying from the nearest retained ancestor.
    pub fn state_at(&self, hash: &Hash32) -> Option<Rc<LedgerState>> {
        let mut path = Vec::new();
        let mut cur = *hash;
        let base = loop {
            let e = self.entries.get(&cur)?;
            if let Some(s) = &e.state {
                break s.clone();
            }
            path.push(e.block.clone());
            cur = e.block.parent_hash;
        };
        if path.is_empty() {
            return Some(base);
        }
        let mut state = (*base).clone();
        for b in path.iter().rev() {
            let ctx = self.context_for(b.height, b.round);
            for tx in &b.transactions {
                state.apply_with(tx, ctx, self.check_signatures).expect("stored blocks are valid");
            }
        }
        Some(Rc::new(state))
    }

    /// Checks a block against its parent without storing it.
    fn evaluate(&self, block: &LedgerBlock) -> Result<Rc<LedgerState>, BlockReject> {
        if !block.hash_is_consistent() {
            return Err(BlockReject::BadHash);
        }
        let parent = self.entries.get(&block.parent_hash).ok_or(BlockReject::BadParent)?;
        if block.height != parent.block.height + 1 {
            return Err(BlockReject::BadHeight);
        }
        if block.round <= parent.block.round {
            return Err(BlockReject::StaleRound);
        }
        let idx = self.scheduled_proposer(block.round);
        if block.proposer != self.config.validators[idx] {
            return Err(BlockReject::WrongProposer);
        }
        if !block.signature_valid(&self.keys[idx]) {
            return Err(BlockReject::BadSignature);
        }
        let parent_state = self.state_at(&block.parent_hash).expect("parent known");
        if block.transactions.is_empty() {
            return Ok(parent_state);
        }
        let mut state = (*parent_state).clone();
        let ctx = self.context_for(block.height, block.round);
        for (index, tx) in block.transactions.iter().enumerate() {
            state
                .apply_with(tx, ctx, self.check_signatures)
                .map_err(|reason| BlockReject::InvalidTxInBlock { index, reason })?;
        }
        Ok(Rc::new(state))
    }

    pub fn append(&mut self, block: LedgerBlock) -> AppendVerdict {
        if self.entries.contains_key(&block.block_hash) {
            return AppendVerdict::Duplicate;
        }
        if let Some(r) = self.invalid.get(&block.block_hash) {
            if block.hash_is_consistent() {
                return AppendVerdict::Rejected(r.clone());
            }
        }
        let state = match self.evaluate(&block) {
            Ok(s) => s,
            Err(e) => {
                if e != BlockReject::BadParent && e != BlockReject::BadHash {
                    self.invalid.insert(block.block_hash, e.clone());
                }
                return AppendVerdict::Rejected(e);
            }
        };
        let hash = block.block_hash;
        let height = block.height;
        self.entries.insert(hash, Entry { block: Rc::new(block), state: Some(state) });
        self.with_state.insert((height, hash));

        let tip = self.tip();
        let better = height > tip.height || (height == tip.height && hash < tip.block_hash);
        let abandoned = if better { self.switch_to(hash) } else { Vec::new() };
        self.prune_states();
        AppendVerdict::Accepted { tip_changed: better, abandoned }
    }

    fn switch_to(&mut self, new_tip: Hash32) -> Vec<SignedTransaction> {
        let mut branch = Vec::new();
        let mut cur = new_tip;
        loop {
            let b = &self.entries[&cur].block;
            if self.main.get(b.height as usize) == Some(&cur) {
                break;
            }
            branch.push(cur);
            cur = b.parent_hash;
        }
        let fork_height = self.entries[&cur].block.height as usize;
        let mut abandoned = Vec::new();
        for h in self.main.drain(fork_height + 1..) {
            for tx in &self.entries[&h].block.transactions {
                self.main_txs.remove(&tx.tx_id);
                abandoned.push(tx.clone());
            }
        }
        for h in branch.into_iter().rev() {
            let b = &self.entries[&h].block;
            for tx in &b.transactions {
                self.main_txs.insert(tx.tx_id, b.height);
            }
            self.main.push(h);
        }
        abandoned.retain(|t| !self.main_txs.contains_key(&t.tx_id));
        abandoned
    }

    fn prune_states(&mut self) {
        let tip_height = self.height();
        while let Some(&(h, hash)) = self.with_state.first() {
            if h + self.state_window >= tip_height {
                break;
            }
            self.with_state.pop_first();
            if let Some(e) = self.entries.get_mut(&hash) {
                e.state = None;
            }
        }
    }

    /// Builds the next block on the tip: every pending transaction that
    /// validates in order, sorted by sender then nonce, with repeated passes
    /// so that a transaction enabled by an earlier one in the same block is
    /// picked up. Returns the block and the transactions left out, with the
    /// reason each failed.
    pub fn propose(
        &self,
        key: &KeyPair,
        round: u64,
        pending: &[SignedTransaction],
        max_txs: usize,
    ) -> (LedgerBlock, Vec<(SignedTransaction, Reject)>) {
        let height = self.height() + 1;
        if pending.is_empty() {
            return (LedgerBlock::new(key, height, round, self.tip_hash(), Vec::new()), Vec::new());
        }
        let ctx = self.context_for(height, round);
        let mut sorted: Vec<&SignedTransaction> = pending.iter().collect();
        sorted.sort_by_key(|a| (a.sender, a.nonce, a.tx_id));
        sorted.dedup_by_key(|t| t.tx_id);

        let mut state = (*self.tip_state()).clone();
        let mut included = Vec::new();
        let mut failed: BTreeMap<Hash32, Reject> = BTreeMap::new();
        let mut remaining = sorted;
        loop {
            let mut progress = false;
            let mut next = Vec::new();
            for tx in remaining {
                if included.len() >= max_txs || self.main_txs.contains_key(&tx.tx_id) {
                    next.push(tx);
                    continue;
                }
                match state.apply_with(tx, ctx, self.check_signatures) {
                    Ok(()) => {
                        failed.remove(&tx.tx_id);
                        included.push(tx.clone());
                        progress = true;
                    }
                    Err(r) => {
                        failed.insert(tx.tx_id, r);
                        next.push(tx);
                    }
                }
            }
            remaining = next;
            if !progress || remaining.is_empty() {
                break;
            }
        }
        let rejected = remaining
            .into_iter()
            .filter_map(|t| failed.remove(&t.tx_id).map(|r| (t.clone(), r)))
            .collect();
        (LedgerBlock::new(key, height, round, self.tip_hash(), included), rejected)
    }
}
