//! Multi-unit double auction with trade reduction.
//!
//! Orders are expanded into 100 Wh units. Unit bids are sorted by price
//! descending and unit asks ascending, ties broken by arrival then agent id.
//! `k` is the last position where the unit bid still covers the unit ask.
//! The agents owning bid unit `k` and ask unit `k` set the prices (buyers
//! pay `bid_k`, sellers receive `ask_k`) and are themselves excluded from
//! trade, together with every unit they offered. Buyers and sellers ranked
//! ahead of them trade; if one side offers more units than the other, the
//! long side is rationed by arrival order, which no price report can change.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::order::{MarketKind, Order, Side};
use crate::crypto::{AgentId, Hash32};
use crate::tokens::Direction;
use crate::units::{amount, units_in, Centi, PricePerKwh, TimeSlot, Wh, TRADE_UNIT_WH};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub buyer: AgentId,
    pub seller: AgentId,
    pub buy_order: Hash32,
    pub sell_order: Hash32,
    pub volume: Wh,
    pub buyer_price: PricePerKwh,
    pub seller_price: PricePerKwh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub market: MarketKind,
    pub slot: TimeSlot,
    pub direction: Direction,
    pub bids: u32,
    pub asks: u32,
    /// Last crossing unit position (0 when nothing crosses).
    pub crossing_units: u64,
    pub traded_units: u64,
    pub buyer_price: PricePerKwh,
    pub seller_price: PricePerKwh,
    pub allocations: Vec<Allocation>,
    /// Buyer payments minus seller receipts, each leg rounded per contract.
    pub market_surplus: Centi,
}

impl MatchResult {
    pub fn empty(market: MarketKind, slot: TimeSlot, direction: Direction) -> Self {
        MatchResult {
            market,
            slot,
            direction,
            bids: 0,
            asks: 0,
            crossing_units: 0,
            traded_units: 0,
            buyer_price: 0,
            seller_price: 0,
            allocations: Vec::new(),
            market_surplus: 0,
        }
    }

    pub fn traded_volume(&self) -> Wh {
        self.traded_units * TRADE_UNIT_WH
    }

    pub fn buyer_payments(&self) -> Centi {
        self.allocations.iter().map(|a| amount(a.volume, a.buyer_price)).sum()
    }

    pub fn seller_receipts(&self) -> Centi {
        self.allocations.iter().map(|a| amount(a.volume, a.seller_price)).sum()
    }

    /// Units bought per buyer agent.
    pub fn bought_units(&self) -> BTreeMap<AgentId, u64> {
        let mut m = BTreeMap::new();
        for a in &self.allocations {
            *m.entry(a.buyer).or_insert(0) += units_in(a.volume);
        }
        m
    }

    pub fn sold_units(&self) -> BTreeMap<AgentId, u64> {
        let mut m = BTreeMap::new();
        for a in &self.allocations {
            *m.entry(a.seller).or_insert(0) += units_in(a.volume);
        }
        m
    }
}

pub(crate) fn sorted_side(orders: &[Order], side: Side) -> Vec<&Order> {
    let mut v: Vec<&Order> = orders
        .iter()
        .filter(|o| o.side == side && units_in(o.volume) > 0)
        .collect();
    match side {
        Side::Bid => v.sort_by(|a, b| {
            b.limit_price
                .cmp(&a.limit_price)
                .then(a.arrival_seq.cmp(&b.arrival_seq))
                .then(a.agent.cmp(&b.agent))
        }),
        Side::Ask => v.sort_by(|a, b| {
            a.limit_price
                .cmp(&b.limit_price)
                .then(a.arrival_seq.cmp(&b.arrival_seq))
                .then(a.agent.cmp(&b.agent))
        }),
    }
    v
}

/// Index into `sorted` of the order that owns unit number `k` (1-based).
fn owner_of_unit(sorted: &[&Order], k: u64) -> usize {
    let mut seen = 0;
    for (i, o) in sorted.iter().enumerate() {
        seen += units_in(o.volume);
        if seen >= k {
            return i;
        }
    }
    unreachable!("unit {k} beyond book depth")
}

/// Allocates `target` units over `orders` (already in price order) by
/// arrival order. Returns units per order, aligned with `orders`.
fn ration(orders: &[&Order], target: u64) -> Vec<u64> {
    let total: u64 = orders.iter().map(|o| units_in(o.volume)).sum();
    if total <= target {
        return orders.iter().map(|o| units_in(o.volume)).collect();
    }
    let mut idx: Vec<usize> = (0..orders.len()).collect();
    idx.sort_by(|&a, &b| {
        orders[a]
            .arrival_seq
            .cmp(&orders[b].arrival_seq)
            .then(orders[a].agent.cmp(&orders[b].agent))
    });
    let mut out = alloc::vec![0; orders.len()];
    let mut left = target;
    for i in idx {
        let take = units_in(orders[i].volume).min(left);
        out[i] = take;
        left -= take;
    }
    out
}

/// Pairs the i-th buyer unit with the i-th seller unit and merges runs.
pub(crate) fn pair_units(
    buyers: &[(&Order, u64)],
    sellers: &[(&Order, u64)],
    buyer_price: PricePerKwh,
    seller_price: PricePerKwh,
) -> Vec<Allocation> {
    let expand = |side: &[(&Order, u64)]| -> Vec<usize> {
        side.iter()
            .enumerate()
            .flat_map(|(i, (_, n))| std::iter::repeat_n(i, *n as usize))
            .collect()
    };
    let bu = expand(buyers);
    let su = expand(sellers);
    let mut out: Vec<Allocation> = Vec::new();
    for (&b, &s) in bu.iter().zip(su.iter()) {
        let (bo, so) = (buyers[b].0, sellers[s].0);
        match out.last_mut() {
            Some(last) if last.buy_order == bo.order_id && last.sell_order == so.order_id => {
                last.volume += TRADE_UNIT_WH;
            }
            _ => out.push(Allocation {
                buyer: bo.agent,
                seller: so.agent,
                buy_order: bo.order_id,
                sell_order: so.order_id,
                volume: TRADE_UNIT_WH,
                buyer_price,
                seller_price,
            }),
        }
    }
    out
}

/// Clears a closed book with the trade-reduction rule.
pub fn match_mda(
    market: MarketKind,
    slot: TimeSlot,
    direction: Direction,
    orders: &[Order],
) -> MatchResult {
    let bids = sorted_side(orders, Side::Bid);
    let asks = sorted_side(orders, Side::Ask);
    let mut result = MatchResult::empty(market, slot, direction);
    result.bids = bids.len() as u32;
    result.asks = asks.len() as u32;

    let bid_units: Vec<PricePerKwh> = bids
        .iter()
        .flat_map(|o| std::iter::repeat_n(o.limit_price, units_in(o.volume) as usize))
        .collect();
    let ask_units: Vec<PricePerKwh> = asks
        .iter()
        .flat_map(|o| std::iter::repeat_n(o.limit_price, units_in(o.volume) as usize))
        .collect();
    let k = bid_units
        .iter()
        .zip(ask_units.iter())
        .take_while(|(b, a)| b >= a)
        .count() as u64;
    result.crossing_units = k;
    if k == 0 {
        return result;
    }

    let marginal_bid = owner_of_unit(&bids, k);
    let marginal_ask = owner_of_unit(&asks, k);
    let buyer_price = bids[marginal_bid].limit_price;
    let seller_price = asks[marginal_ask].limit_price;
    let excluded_buyer = bids[marginal_bid].agent;
    let excluded_seller = asks[marginal_ask].agent;
    result.buyer_price = buyer_price;
    result.seller_price = seller_price;

    let trading_bids: Vec<&Order> = bids[..marginal_bid]
        .iter()
        .copied()
        .filter(|o| o.agent != excluded_buyer)
        .collect();
    let trading_asks: Vec<&Order> = asks[..marginal_ask]
        .iter()
        .copied()
        .filter(|o| o.agent != excluded_seller)
        .collect();
    let demand: u64 = trading_bids.iter().map(|o| units_in(o.volume)).sum();
    let supply: u64 = trading_asks.iter().map(|o| units_in(o.volume)).sum();
    let q = demand.min(supply);
    if q == 0 {
        return result;
    }

    let bq = ration(&trading_bids, q);
    let aq = ration(&trading_asks, q);
    let buyers: Vec<(&Order, u64)> = trading_bids.iter().copied().zip(bq).collect();
    let sellers: Vec<(&Order, u64)> = trading_asks.iter().copied().zip(aq).collect();
    result.allocations = pair_units(&buyers, &sellers, buyer_price, seller_price);
    result.traded_units = q;
    result.market_surplus = result.buyer_payments() - result.seller_receipts();
    result
}
