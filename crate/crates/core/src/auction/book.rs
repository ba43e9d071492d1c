use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::clear::ClearingView;
use super::order::{MarketKind, Order, Side, SignedOrder};
use crate::crypto::{AgentId, Hash32};
use crate::tokens::Direction;
use crate::units::{amount, TimeSlot, TRADE_UNIT_WH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub order_id: Hash32,
    pub arrival_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum SubmitReject {
    #[error("round closed")]
    RoundClosed,
    #[error("no registered availability")]
    NoAvailability,
    #[error("insufficient funds")]
    InsufficientFunds,
    #[error("volume is not a positive multiple of the trade unit")]
    BadGranularity,
    #[error("order addressed to another book")]
    WrongBook,
    #[error("bad order signature")]
    BadSignature,
}

/// The book for one (market, slot, direction), owned by the auctioneer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderBook {
    pub market: MarketKind,
    pub slot: TimeSlot,
    pub direction: Direction,
    open: bool,
    orders: Vec<Order>,
    signed: BTreeMap<Hash32, SignedOrder>,
    last_seq: u64,
}

impl OrderBook {
    pub fn new(market: MarketKind, slot: TimeSlot, direction: Direction) -> Self {
        OrderBook {
            market,
            slot,
            direction,
            open: true,
            orders: Vec::new(),
            signed: BTreeMap::new(),
            last_seq: 0,
        }
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn close(&mut self) {
        self.open = false;
    }

    pub fn orders(&self) -> &[Order] {
        &self.orders
    }

    pub fn signed(&self, order_id: &Hash32) -> Option<&SignedOrder> {
        self.signed.get(order_id)
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// Admits an order, assigning the next arrival sequence number.
    /// Re-submitting an already admitted order returns its original ack.
    pub fn submit(
        &mut self,
        signed: SignedOrder,
        view: &dyn ClearingView,
    ) -> Result<Ack, SubmitReject> {
        let o = &signed.order;
        if let Some(existing) = self.orders.iter().find(|x| x.order_id == o.order_id) {
            return Ok(Ack { order_id: existing.order_id, arrival_seq: existing.arrival_seq });
        }
        if !self.open {
            return Err(SubmitReject::RoundClosed);
        }
        if o.market != self.market || o.slot != self.slot || o.direction != self.direction {
            return Err(SubmitReject::WrongBook);
        }
        let key = view.public_key(&o.agent).ok_or(SubmitReject::BadSignature)?;
        if !signed.verify(&key) {
            return Err(SubmitReject::BadSignature);
        }
        if o.volume == 0 || !o.volume.is_multiple_of(TRADE_UNIT_WH) {
            return Err(SubmitReject::BadGranularity);
        }
        match o.side {
            Side::Ask => {
                let booked: u64 = self.agent_volume(&o.agent, Side::Ask);
                let available = view.available(&o.agent, o.slot, o.direction);
                if booked + o.volume > available {
                    return Err(SubmitReject::NoAvailability);
                }
            }
            Side::Bid => {
                if view.balance(&o.agent) < amount(o.volume, o.limit_price) {
                    return Err(SubmitReject::InsufficientFunds);
                }
            }
        }
        self.last_seq += 1;
        let mut order = signed.order.clone();
        order.arrival_seq = self.last_seq;
        let ack = Ack { order_id: order.order_id, arrival_seq: order.arrival_seq };
        self.signed.insert(order.order_id, signed);
        self.orders.push(order);
        Ok(ack)
    }

    fn agent_volume(&self, agent: &AgentId, side: Side) -> u64 {
        self.orders
            .iter()
            .filter(|o| o.agent == *agent && o.side == side)
            .map(|o| o.volume)
            .sum()
    }

    /// Orders of every agent not in `excluded`.
    pub fn orders_without(&self, excluded: &[AgentId]) -> Vec<Order> {
        self.orders
            .iter()
            .filter(|o| !excluded.contains(&o.agent))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{KeyPair, PublicKey};
    use crate::units::{Centi, Wh};

    struct View {
        keys: Vec<KeyPair>,
        balance: Centi,
        available: Wh,
    }

    impl ClearingView for View {
        fn balance(&self, _: &AgentId) -> Centi {
            self.balance
        }
        fn available(&self, _: &AgentId, _: TimeSlot, _: Direction) -> Wh {
            self.available
        }
        fn public_key(&self, a: &AgentId) -> Option<PublicKey> {
            self.keys.iter().find(|k| k.agent_id() == *a).map(|k| k.public_key())
        }
    }

    fn signed(k: &KeyPair, side: Side, volume: u64, price: u64, seq: u64) -> SignedOrder {
        let o = Order::new(k.agent_id(), side, MarketKind::DayAhead, TimeSlot(1), Direction::Injection, volume, price, seq);
        SignedOrder::sign(o, k)
    }

    fn setup(balance: Centi, available: Wh) -> (OrderBook, View) {
        let view = View { keys: vec![KeyPair::derive(0, "a"), KeyPair::derive(0, "b")], balance, available };
        (OrderBook::new(MarketKind::DayAhead, TimeSlot(1), Direction::Injection), view)
    }

    use alloc::vec;

    #[test]
    fn ask_needs_registered_availability() {
        let (mut book, view) = setup(0, 500);
        let k = view.keys[0].clone();
        assert_eq!(book.submit(signed(&k, Side::Ask, 1000, 6, 1), &view), Err(SubmitReject::NoAvailability));
        book.submit(signed(&k, Side::Ask, 500, 6, 2), &view).unwrap();
        // availability already booked by the first ask
        assert_eq!(book.submit(signed(&k, Side::Ask, 100, 6, 3), &view), Err(SubmitReject::NoAvailability));
    }

    #[test]
    fn bid_needs_funds_for_full_volume() {
        let (mut book, view) = setup(5, 0);
        let k = view.keys[0].clone();
        // 1 kWh at 10 needs 10
        assert_eq!(book.submit(signed(&k, Side::Bid, 1000, 10, 1), &view), Err(SubmitReject::InsufficientFunds));
    }

    #[test]
    fn arrival_sequence_increments() {
        let (mut book, view) = setup(1000, 0);
        let a = book.submit(signed(&view.keys[0], Side::Bid, 100, 10, 1), &view).unwrap();
        let b = book.submit(signed(&view.keys[1], Side::Bid, 100, 10, 1), &view).unwrap();
        assert_eq!(b.arrival_seq, a.arrival_seq + 1);
        // resubmission is idempotent
        let again = book.submit(signed(&view.keys[0], Side::Bid, 100, 10, 1), &view).unwrap();
        assert_eq!(again, a);
        assert_eq!(book.len(), 2);
    }

    #[test]
    fn closed_round_and_granularity() {
        let (mut book, view) = setup(1000, 0);
        let k = view.keys[0].clone();
        assert_eq!(book.submit(signed(&k, Side::Bid, 150, 10, 1), &view), Err(SubmitReject::BadGranularity));
        book.close();
        assert_eq!(book.submit(signed(&k, Side::Bid, 100, 10, 2), &view), Err(SubmitReject::RoundClosed));
    }

    #[test]
    fn forged_signature_rejected() {
        let (mut book, view) = setup(1000, 0);
        let mut s = signed(&view.keys[0], Side::Bid, 100, 10, 1);
        s.signature = crate::crypto::Signature::ZERO;
        assert_eq!(book.submit(s, &view), Err(SubmitReject::BadSignature));
    }
}
