//! Clearing for standing flexibility calls.
//!
//! A call is a bid from a single procurer (aggregator or DSO) for a target
//! volume under a price cap. With one buyer the trade-reduction rule would
//! exclude the caller itself, so calls clear as a uniform-price procurement:
//! each call, highest cap first, takes the cheapest remaining ask units not
//! above its cap until its target is met, and pays every accepted unit
//! `min(cap, first ask unit left behind)`.

use alloc::vec::Vec;

use super::mda::{pair_units, sorted_side, MatchResult};
use super::order::{MarketKind, Order, Side};
use crate::tokens::Direction;
use crate::units::{units_in, TimeSlot};

pub fn match_call(
    market: MarketKind,
    slot: TimeSlot,
    direction: Direction,
    orders: &[Order],
) -> MatchResult {
    let calls = sorted_side(orders, Side::Bid);
    let asks = sorted_side(orders, Side::Ask);
    let mut result = MatchResult::empty(market, slot, direction);
    result.bids = calls.len() as u32;
    result.asks = asks.len() as u32;

    // remaining units per ask, in price order
    let mut remaining: Vec<u64> = asks.iter().map(|o| units_in(o.volume)).collect();
    let mut first = true;
    for call in calls {
        let mut want = units_in(call.volume);
        let mut taken: Vec<(&Order, u64)> = Vec::new();
        let mut cursor = 0;
        while want > 0 && cursor < asks.len() {
            if remaining[cursor] == 0 {
                cursor += 1;
                continue;
            }
            if asks[cursor].limit_price > call.limit_price {
                break;
            }
            let take = remaining[cursor].min(want);
            taken.push((asks[cursor], take));
            remaining[cursor] -= take;
            want -= take;
        }
        if taken.is_empty() {
            continue;
        }
        let next_ask = asks
            .iter()
            .zip(remaining.iter())
            .find(|(_, &r)| r > 0)
            .map(|(o, _)| o.limit_price);
        let price = next_ask.map_or(call.limit_price, |p| p.min(call.limit_price));
        let units: u64 = taken.iter().map(|(_, n)| n).sum();
        let allocs = pair_units(&[(call, units)], &taken, price, price);
        if first {
            result.buyer_price = price;
            result.seller_price = price;
            first = false;
        }
        result.traded_units += units;
        result.allocations.extend(allocs);
    }
    result.crossing_units = result.traded_units;
    result.market_surplus = result.buyer_payments() - result.seller_receipts();
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::AgentId;

    fn order(agent: u8, side: Side, volume: u64, price: u64, seq: u64) -> Order {
        let mut o = Order::new(
            AgentId([agent; 20]),
            side,
            MarketKind::Flexibility,
            TimeSlot(18),
            Direction::ExtractionReduction,
            volume,
            price,
            seq,
        );
        o.arrival_seq = seq;
        o
    }

    fn run(orders: &[Order]) -> MatchResult {
        match_call(MarketKind::Flexibility, TimeSlot(18), Direction::ExtractionReduction, orders)
    }

    #[test]
    fn call_fills_from_cheapest_offers() {
        let r = run(&[
            order(1, Side::Bid, 2000, 20, 1),
            order(10, Side::Ask, 1000, 10, 2),
            order(11, Side::Ask, 1000, 15, 3),
            order(12, Side::Ask, 1000, 25, 4),
        ]);
        assert_eq!(r.traded_volume(), 2000);
        let sold = r.sold_units();
        assert_eq!(sold.get(&AgentId([10; 20])), Some(&10));
        assert_eq!(sold.get(&AgentId([11; 20])), Some(&10));
        assert_eq!(sold.get(&AgentId([12; 20])), None);
        // first ask left behind is 25, capped at 20
        assert_eq!(r.buyer_price, 20);
        assert_eq!(r.market_surplus, 0);
    }

    #[test]
    fn zero_target_or_no_offers_leaves_call_unfilled() {
        assert_eq!(run(&[order(1, Side::Bid, 0, 20, 1), order(10, Side::Ask, 1000, 10, 2)]).traded_units, 0);
        assert_eq!(run(&[order(1, Side::Bid, 2000, 20, 1)]).traded_units, 0);
    }

    #[test]
    fn partial_fill_prices_at_marginal_ask() {
        let r = run(&[
            order(1, Side::Bid, 1500, 20, 1),
            order(10, Side::Ask, 1000, 10, 2),
            order(11, Side::Ask, 1000, 15, 3),
        ]);
        assert_eq!(r.traded_volume(), 1500);
        assert_eq!(r.buyer_price, 15);
        for a in &r.allocations {
            assert!(a.seller_price >= 10);
        }
    }
}
