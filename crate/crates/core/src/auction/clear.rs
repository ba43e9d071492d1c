use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::book::OrderBook;
use super::call::match_call;
use super::contract::ContractTerms;
use super::mda::{match_mda, MatchResult};
use super::order::MarketKind;
use crate::crypto::{AgentId, PublicKey};
use crate::tokens::Direction;
use crate::units::{amount, Centi, TimeSlot, Wh};

/// Read access to the ledger that clearing needs.
pub trait ClearingView {
    fn balance(&self, agent: &AgentId) -> Centi;
    /// Registered, uncommitted token volume.
    fn available(&self, agent: &AgentId, slot: TimeSlot, direction: Direction) -> Wh;
    fn public_key(&self, agent: &AgentId) -> Option<PublicKey>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClearOutcome {
    pub result: MatchResult,
    pub contracts: Vec<ContractTerms>,
    /// Participants dropped because their funds or tokens no longer cover
    /// their allocation, in exclusion order.
    pub excluded: Vec<AgentId>,
}

fn run_match(book: &OrderBook, excluded: &[AgentId]) -> MatchResult {
    let orders = book.orders_without(excluded);
    match book.market {
        MarketKind::Flexibility => match_call(book.market, book.slot, book.direction, &orders),
        _ => match_mda(book.market, book.slot, book.direction, &orders),
    }
}

/// First participant whose allocations the current ledger cannot cover.
fn first_shortfall(result: &MatchResult, view: &dyn ClearingView) -> Option<AgentId> {
    let mut spend: BTreeMap<AgentId, Centi> = BTreeMap::new();
    let mut sell: BTreeMap<AgentId, Wh> = BTreeMap::new();
    for a in &result.allocations {
        let s = spend.entry(a.buyer).or_insert(0);
        *s += amount(a.volume, a.buyer_price);
        if *s > view.balance(&a.buyer) {
            return Some(a.buyer);
        }
        let v = sell.entry(a.seller).or_insert(0);
        *v += a.volume;
        if *v > view.available(&a.seller, result.slot, result.direction) {
            return Some(a.seller);
        }
    }
    None
}

/// Matches a closed book and turns the allocations into contract terms the
/// ledger will accept. A participant whose balance or tokens fail the
/// re-check is excluded and the book re-matched without it; each participant
/// is excluded at most once, so this terminates.
pub fn clear(book: &OrderBook, view: &dyn ClearingView) -> ClearOutcome {
    let mut excluded = Vec::new();
    let mut result = run_match(book, &excluded);
    while let Some(bad) = first_shortfall(&result, view) {
        debug_assert!(!excluded.contains(&bad));
        excluded.push(bad);
        result = run_match(book, &excluded);
    }
    let contracts = result
        .allocations
        .iter()
        .map(|a| ContractTerms {
            market: book.market,
            slot: book.slot,
            direction: book.direction,
            volume: a.volume,
            buyer_price: a.buyer_price,
            seller_price: a.seller_price,
            bid: book.signed(&a.buy_order).expect("allocated order is in the book").clone(),
            ask: book.signed(&a.sell_order).expect("allocated order is in the book").clone(),
            objective: None,
        })
        .collect();
    ClearOutcome { result, contracts, excluded }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::order::{Order, Side, SignedOrder};
    use crate::crypto::KeyPair;
    use alloc::format;
    use alloc::vec;

    struct View {
        keys: Vec<KeyPair>,
        balances: BTreeMap<AgentId, Centi>,
        avail: BTreeMap<AgentId, Wh>,
    }

    impl ClearingView for View {
        fn balance(&self, a: &AgentId) -> Centi {
            self.balances.get(a).copied().unwrap_or(0)
        }
        fn available(&self, a: &AgentId, _: TimeSlot, _: Direction) -> Wh {
            self.avail.get(a).copied().unwrap_or(0)
        }
        fn public_key(&self, a: &AgentId) -> Option<PublicKey> {
            self.keys.iter().find(|k| k.agent_id() == *a).map(|k| k.public_key())
        }
    }

    fn view(n: usize) -> View {
        let keys: Vec<KeyPair> = (0..n).map(|i| KeyPair::derive(9, &format!("a{i}"))).collect();
        let balances = keys.iter().map(|k| (k.agent_id(), 1_000)).collect();
        let avail = keys.iter().map(|k| (k.agent_id(), 10_000)).collect();
        View { keys, balances, avail }
    }

    fn submit(book: &mut OrderBook, v: &View, i: usize, side: Side, vol: Wh, price: u64) {
        let k = &v.keys[i];
        let o = Order::new(k.agent_id(), side, book.market, book.slot, book.direction, vol, price, 0);
        book.submit(SignedOrder::sign(o, k), v).unwrap();
    }

    fn book() -> OrderBook {
        OrderBook::new(MarketKind::DayAhead, TimeSlot(0), Direction::Injection)
    }

    #[test]
    fn one_unit_trade_escrows_buyer_price() {
        let v = view(4);
        let mut b = book();
        submit(&mut b, &v, 0, Side::Bid, 100, 12);
        submit(&mut b, &v, 1, Side::Bid, 100, 10);
        submit(&mut b, &v, 2, Side::Ask, 100, 5);
        submit(&mut b, &v, 3, Side::Ask, 100, 6);
        b.close();
        let out = clear(&b, &v);
        assert_eq!(out.contracts.len(), 1);
        let c = &out.contracts[0];
        assert_eq!((c.volume, c.buyer_price, c.seller_price), (100, 10, 6));
        assert_eq!(c.escrow(), 1);
        assert!(out.excluded.is_empty());
    }

    #[test]
    fn no_trades_no_contracts() {
        let v = view(2);
        let mut b = book();
        submit(&mut b, &v, 0, Side::Bid, 100, 4);
        submit(&mut b, &v, 1, Side::Ask, 100, 5);
        b.close();
        let out = clear(&b, &v);
        assert!(out.contracts.is_empty());
    }

    #[test]
    fn broke_buyer_excluded_and_book_rematched() {
        let mut v = view(6);
        let mut b = book();
        // buyers 0,1,2 ; sellers 3,4,5
        submit(&mut b, &v, 0, Side::Bid, 100, 20);
        submit(&mut b, &v, 1, Side::Bid, 100, 18);
        submit(&mut b, &v, 2, Side::Bid, 100, 16);
        submit(&mut b, &v, 3, Side::Ask, 100, 2);
        submit(&mut b, &v, 4, Side::Ask, 100, 3);
        submit(&mut b, &v, 5, Side::Ask, 100, 4);
        b.close();
        // buyer 0 spends its balance after submitting
        v.balances.insert(v.keys[0].agent_id(), 0);
        let out = clear(&b, &v);
        assert_eq!(out.excluded, vec![v.keys[0].agent_id()]);
        // re-match over buyers 1,2: k = 2, buyer 1 trades at 16 with seller 3 at 3
        assert_eq!(out.contracts.len(), 1);
        assert_eq!(out.contracts[0].bid.order.agent, v.keys[1].agent_id());
        assert_eq!((out.contracts[0].buyer_price, out.contracts[0].seller_price), (16, 3));
    }
}
