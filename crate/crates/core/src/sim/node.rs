//! Plumbing shared by the agent nodes: the wire message, a transaction
//! outbox that rebroadcasts and re-signs, and an order desk that resends
//! until the auctioneer acknowledges.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::auction::{SignedOrder, SubmitReject};
use crate::crypto::{AgentId, Hash32, KeyPair};
use crate::ledger::{Chain, LedgerMsg, LedgerState, Payload, SignedTransaction};
use crate::simnet::NodeId;
use crate::units::{Tick, TimeSlot};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Msg {
    Ledger(LedgerMsg),
    Order(SignedOrder),
    OrderAck { order_id: Hash32, result: Result<u64, SubmitReject> },
    /// The auctioneer asks flexible households to offer for `slot`.
    FlexCall { slot: TimeSlot },
}

impl Msg {
    pub fn kind(&self) -> &'static str {
        match self {
            Msg::Ledger(m) => m.kind(),
            Msg::Order(_) => "order",
            Msg::OrderAck { .. } => "order-ack",
            Msg::FlexCall { .. } => "flex-call",
        }
    }
}

/// What an agent wants sent.
#[derive(Clone, Debug)]
pub enum Out {
    /// To every validator of the main ledger.
    Tx(SignedTransaction),
    /// To the household's on-premises ledger.
    HubTx(SignedTransaction),
    To(NodeId, Msg),
}

struct Tracked {
    tx: SignedTransaction,
    last_sent: Tick,
    deadline: Tick,
}

/// Transactions sent but not yet seen on chain.
pub struct Outbox {
    key: KeyPair,
    agent: AgentId,
    nonce: u64,
    pending: BTreeMap<Hash32, Tracked>,
    pub resigned: u64,
    pub expired: u64,
}

impl Outbox {
    pub fn new(key: KeyPair) -> Self {
        let agent = key.agent_id();
        Outbox { key, agent, nonce: 0, pending: BTreeMap::new(), resigned: 0, expired: 0 }
    }

    pub fn agent(&self) -> AgentId {
        self.agent
    }

    pub fn key(&self) -> &KeyPair {
        &self.key
    }

    /// Signs without tracking.
    pub fn sign(&mut self, payload: Payload, view: &LedgerState) -> SignedTransaction {
        self.nonce = self.nonce.max(view.nonce(&self.agent)) + 1;
        SignedTransaction::new(&self.key, self.nonce, payload)
    }

    /// Signs and tracks until included or `deadline`.
    pub fn submit(&mut self, payload: Payload, view: &LedgerState, now: Tick, deadline: Tick) -> SignedTransaction {
        let tx = self.sign(payload, view);
        self.pending.insert(tx.tx_id, Tracked { tx: tx.clone(), last_sent: now, deadline });
        tx
    }

    pub fn pending(&self) -> impl Iterator<Item = &Payload> {
        self.pending.values().map(|t| &t.tx.payload)
    }

    /// Drops what the view has included, rebroadcasts what is overdue, and
    /// re-signs anything whose nonce the chain has moved past.
    pub fn poll(&mut self, chain: &Chain, now: Tick, resend: Tick) -> Vec<SignedTransaction> {
        let state = chain.tip_state();
        let chain_nonce = state.nonce(&self.agent);
        let ids: Vec<Hash32> = self.pending.keys().copied().collect();
        let mut out = Vec::new();
        for id in ids {
            if chain.tx_height(&id).is_some() {
                self.pending.remove(&id);
                continue;
            }
            let t = &self.pending[&id];
            if now >= t.deadline {
                self.pending.remove(&id);
                self.expired += 1;
                continue;
            }
            if now < t.last_sent + resend {
                continue;
            }
            let mut t = self.pending.remove(&id).expect("listed");
            if chain_nonce >= t.tx.nonce {
                t.tx = self.sign(t.tx.payload.clone(), &state);
                self.resigned += 1;
            }
            t.last_sent = now;
            out.push(t.tx.clone());
            self.pending.insert(t.tx.tx_id, t);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum OrderState {
    Sent,
    Acked,
    Rejected,
}

struct OutOrder {
    signed: SignedOrder,
    close: Tick,
    last_sent: Tick,
    state: OrderState,
}

/// Orders in flight to the auctioneer.
#[derive(Default)]
pub struct OrderDesk {
    orders: BTreeMap<Hash32, OutOrder>,
    pub acked: u64,
    pub rejected: u64,
}

impl OrderDesk {
    pub fn submit(&mut self, signed: SignedOrder, close: Tick, now: Tick) -> SignedOrder {
        self.orders.insert(
            signed.order.order_id,
            OutOrder { signed: signed.clone(), close, last_sent: now, state: OrderState::Sent },
        );
        signed
    }

    pub fn poll(&mut self, now: Tick, resend: Tick) -> Vec<SignedOrder> {
        let mut out = Vec::new();
        for o in self.orders.values_mut() {
            if o.state == OrderState::Sent && now < o.close && now >= o.last_sent + resend {
                o.last_sent = now;
                out.push(o.signed.clone());
            }
        }
        self.orders.retain(|_, o| now < o.close || o.state != OrderState::Sent);
        out
    }

    pub fn ack(&mut self, order_id: &Hash32, result: &Result<u64, SubmitReject>) {
        let Some(o) = self.orders.get_mut(order_id) else { return };
        if o.state != OrderState::Sent {
            return;
        }
        match result {
            Ok(_) => {
                o.state = OrderState::Acked;
                self.acked += 1;
            }
            // Tokens may not have reached the auctioneer's ledger view yet.
            Err(SubmitReject::NoAvailability) => {}
            Err(_) => {
                o.state = OrderState::Rejected;
                self.rejected += 1;
            }
        }
    }

}
