//! A validator node: mempool, round-robin block proposal, block gossip with
//! parent fetching, and scripted byzantine behavior.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::block::LedgerBlock;
use super::chain::{AppendVerdict, Chain};
use super::state::Reject;
use super::tx::{Payload, SignedTransaction};
use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::crypto::{Hash32, KeyPair, Signature};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LedgerMsg {
    Tx(SignedTransaction),
    Block(LedgerBlock),
    GetBlock(Hash32),
}

impl LedgerMsg {
    pub fn kind(&self) -> &'static str {
        match self {
            LedgerMsg::Tx(_) => "tx",
            LedgerMsg::Block(_) => "block",
            LedgerMsg::GetBlock(_) => "get-block",
        }
    }
}

impl Encode for LedgerMsg {
    fn encode(&self, w: &mut Writer) {
        match self {
            LedgerMsg::Tx(t) => w.u8(0).put(t),
            LedgerMsg::Block(b) => w.u8(1).put(b),
            LedgerMsg::GetBlock(h) => w.u8(2).put(h),
        };
    }
}

impl Decode for LedgerMsg {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            0 => LedgerMsg::Tx(r.get()?),
            1 => LedgerMsg::Block(r.get()?),
            2 => LedgerMsg::GetBlock(r.get()?),
            tag => return Err(DecodeError::BadTag { what: "ledger message", tag }),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidatorBehavior {
    #[default]
    Honest,
    /// Proposes a block carrying a forged transaction on every turn.
    Byzantine,
}

/// Where a node wants a message to go.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target<P> {
    AllValidators,
    Peer(P),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorStats {
    pub proposed: u64,
    pub blocks_accepted: u64,
    pub blocks_rejected: u64,
    pub reorgs: u64,
    pub txs_rejected: u64,
}

struct Pending {
    tx: SignedTransaction,
    first_round: u64,
}

pub struct ValidatorNode<P> {
    pub index: usize,
    key: KeyPair,
    pub chain: Chain,
    pub behavior: ValidatorBehavior,
    pub stats: ValidatorStats,
    mempool: BTreeMap<Hash32, Pending>,
    orphans: BTreeMap<Hash32, (P, LedgerBlock)>,
    current_round: u64,
    pub mempool_ttl: u64,
    pub max_block_txs: usize,
    pub max_orphans: usize,
}

impl<P: Clone> ValidatorNode<P> {
    pub fn new(index: usize, key: KeyPair, chain: Chain, behavior: ValidatorBehavior) -> Self {
        ValidatorNode {
            index,
            key,
            chain,
            behavior,
            stats: ValidatorStats::default(),
            mempool: BTreeMap::new(),
            orphans: BTreeMap::new(),
            current_round: 0,
            mempool_ttl: 240,
            max_block_txs: 1000,
            max_orphans: 512,
        }
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn handle(&mut self, from: P, msg: LedgerMsg) -> Vec<(Target<P>, LedgerMsg)> {
        match msg {
            LedgerMsg::Tx(tx) => {
                self.add_pending(tx);
                Vec::new()
            }
            LedgerMsg::Block(b) => self.on_block(from, b),
            LedgerMsg::GetBlock(h) => match self.chain.block(&h) {
                Some(b) => alloc::vec![(Target::Peer(from), LedgerMsg::Block(b.clone()))],
                None => Vec::new(),
            },
        }
    }

    fn add_pending(&mut self, tx: SignedTransaction) {
        if self.chain.tx_height(&tx.tx_id).is_some() || self.mempool.contains_key(&tx.tx_id) {
            return;
        }
        let first_round = self.current_round;
        self.mempool.insert(tx.tx_id, Pending { tx, first_round });
    }

    fn on_block(&mut self, from: P, block: LedgerBlock) -> Vec<(Target<P>, LedgerMsg)> {
        let mut out = Vec::new();
        let mut queue = alloc::vec![(from, block)];
        while let Some((from, block)) = queue.pop() {
            let hash = block.block_hash;
            let parent = block.parent_hash;
            match self.chain.append(block.clone()) {
                AppendVerdict::Accepted { tip_changed, abandoned } => {
                    self.stats.blocks_accepted += 1;
                    if tip_changed && !abandoned.is_empty() {
                        self.stats.reorgs += 1;
                    }
                    for tx in abandoned {
                        self.add_pending(tx);
                    }
                    out.push((Target::AllValidators, LedgerMsg::Block(block)));
                    let children: Vec<Hash32> = self
                        .orphans
                        .iter()
                        .filter(|(_, (_, b))| b.parent_hash == hash)
                        .map(|(h, _)| *h)
                        .collect();
                    for h in children {
                        let (f, b) = self.orphans.remove(&h).expect("listed");
                        queue.push((f, b));
                    }
                }
                AppendVerdict::Duplicate => {}
                AppendVerdict::Rejected(super::chain::BlockReject::BadParent) => {
                    if !self.orphans.contains_key(&hash) {
                        if self.orphans.len() >= self.max_orphans {
                            continue;
                        }
                        self.orphans.insert(hash, (from.clone(), block));
                    }
                    let mut missing = parent;
                    while let Some((_, b)) = self.orphans.get(&missing) {
                        missing = b.parent_hash;
                    }
                    out.push((Target::Peer(from), LedgerMsg::GetBlock(missing)));
                }
                AppendVerdict::Rejected(_) => self.stats.blocks_rejected += 1,
            }
        }
        out
    }

    fn prune_mempool(&mut self, round: u64) {
        let state = self.chain.tip_state();
        let ttl = self.mempool_ttl;
        let chain = &self.chain;
        let floor = chain.height().saturating_sub(64);
        self.orphans.retain(|h, (_, b)| chain.block(h).is_none() && b.height > floor);
        self.mempool.retain(|id, p| {
            chain.tx_height(id).is_none()
                && p.tx.nonce > state.nonce(&p.tx.sender)
                && round.saturating_sub(p.first_round) <= ttl
        });
    }

    /// Round start. The scheduled proposer builds, stores and announces its
    /// block; everyone else only tidies its mempool.
    pub fn on_round(&mut self, round: u64) -> Vec<(Target<P>, LedgerMsg)> {
        self.current_round = round;
        self.prune_mempool(round);
        if self.chain.scheduled_proposer(round) != self.index {
            return Vec::new();
        }
        self.stats.proposed += 1;
        match self.behavior {
            ValidatorBehavior::Honest => {
                let pending: Vec<SignedTransaction> = self.mempool.values().map(|p| p.tx.clone()).collect();
                let (block, rejected) = self.chain.propose(&self.key, round, &pending, self.max_block_txs);
                for (tx, reason) in rejected {
                    self.stats.txs_rejected += 1;
                    if !Reject::is_transient(&reason) {
                        self.mempool.remove(&tx.tx_id);
                    }
                }
                match self.chain.append(block.clone()) {
                    AppendVerdict::Accepted { .. } => {
                        self.stats.blocks_accepted += 1;
                        alloc::vec![(Target::AllValidators, LedgerMsg::Block(block))]
                    }
                    _ => Vec::new(),
                }
            }
            ValidatorBehavior::Byzantine => {
                let block = self.forge_block(round);
                alloc::vec![(Target::AllValidators, LedgerMsg::Block(block))]
            }
        }
    }

    /// A correctly signed block whose content is invalid: pending
    /// transactions plus a transfer whose signature has been zeroed.
    fn forge_block(&self, round: u64) -> LedgerBlock {
        let state = self.chain.tip_state();
        let mut txs: Vec<SignedTransaction> = self.mempool.values().map(|p| p.tx.clone()).take(8).collect();
        let from = state.accounts.iter().find(|(_, a)| a.balance > 0);
        let to = state.accounts.keys().find(|k| Some(*k) != from.map(|f| f.0));
        if let (Some((from, a)), Some(to)) = (from, to) {
            let payload = Payload::Transfer { to: *to, amount: 1 };
            txs.push(SignedTransaction::assemble(*from, a.nonce + 1, payload, Signature::ZERO));
        }
        LedgerBlock::new(&self.key, self.chain.height() + 1, round, self.chain.tip_hash(), txs)
    }
}
