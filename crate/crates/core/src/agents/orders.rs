use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::auction::{MarketKind, Order, Side};
use crate::crypto::AgentId;
use crate::tokens::Direction;
use crate::units::{floor_to_unit, PricePerKwh, SignedWh, TimeSlot, Wh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    /// Added to the feed-in tariff for asks.
    pub ask: PricePerKwh,
    /// Taken off the retail price for bids.
    pub bid: PricePerKwh,
}

impl Default for Margins {
    fn default() -> Self {
        Margins { ask: 1, bid: 1 }
    }
}

pub fn ask_limit(feed_in: PricePerKwh, m: Margins) -> PricePerKwh {
    feed_in + m.ask
}

pub fn bid_limit(retail: PricePerKwh, m: Margins) -> PricePerKwh {
    retail.saturating_sub(m.bid)
}

/// What one slot's net position turns into: nothing, an ask, or a bid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Intent {
    pub side: Side,
    pub volume: Wh,
    pub limit_price: PricePerKwh,
}

pub fn intent_for(net: SignedWh, retail: PricePerKwh, feed_in: PricePerKwh, m: Margins) -> Option<Intent> {
    let (side, volume, limit_price) = if net > 0 {
        (Side::Ask, floor_to_unit(net as Wh), ask_limit(feed_in, m))
    } else {
        (Side::Bid, floor_to_unit(net.unsigned_abs()), bid_limit(retail, m))
    };
    (volume > 0).then_some(Intent { side, volume, limit_price })
}

/// Day-ahead orders, one per slot with a tradeable position. `first_seq`
/// seeds the client sequence numbers.
#[allow(clippy::too_many_arguments)]
pub fn build_orders(
    agent: AgentId,
    day: u32,
    net: &[SignedWh],
    retail: PricePerKwh,
    feed_in: PricePerKwh,
    m: Margins,
    market: MarketKind,
    first_seq: u64,
) -> Vec<Order> {
    let mut seq = first_seq;
    let mut out = Vec::new();
    for (h, &n) in net.iter().enumerate() {
        if let Some(i) = intent_for(n, retail, feed_in, m) {
            out.push(Order::new(agent, i.side, market, TimeSlot::new(day, h as u32), Direction::Injection, i.volume, i.limit_price, seq));
            seq += 1;
        }
    }
    out
}

/// A standing call for flexibility: one bid per slot for the target volume.
pub fn call_orders(
    agent: AgentId,
    slots: &[TimeSlot],
    target: Wh,
    price_cap: PricePerKwh,
    first_seq: u64,
) -> Vec<Order> {
    let volume = floor_to_unit(target);
    if volume == 0 {
        return Vec::new();
    }
    slots
        .iter()
        .enumerate()
        .map(|(i, &slot)| {
            Order::new(agent, Side::Bid, MarketKind::Flexibility, slot, Direction::ExtractionReduction, volume, price_cap, first_seq + i as u64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::match_call;
    use crate::crypto::KeyPair;

    const A: AgentId = AgentId([1; 20]);

    #[test]
    fn surplus_rounds_down_to_units() {
        let o = build_orders(A, 0, &[1234, 0, -50, -777], 15, 5, Margins::default(), MarketKind::DayAhead, 0);
        assert_eq!(o.len(), 2);
        assert_eq!((o[0].side, o[0].volume, o[0].limit_price), (Side::Ask, 1200, 6));
        assert_eq!((o[1].side, o[1].volume, o[1].limit_price), (Side::Bid, 700, 14));
        assert_eq!(o[1].slot, TimeSlot::new(0, 3));
        assert_ne!(o[0].order_id, o[1].order_id);
    }

    #[test]
    fn zero_target_no_call() {
        assert!(call_orders(A, &[TimeSlot(3)], 0, 20, 0).is_empty());
    }

    #[test]
    fn call_fills_from_cheapest_asks() {
        let slot = TimeSlot(5);
        let mut orders = call_orders(A, &[slot], 2000, 20, 0);
        for (i, p) in [10u64, 15, 25].into_iter().enumerate() {
            let k = KeyPair::derive(1, &alloc::format!("h{i}"));
            let mut o = Order::new(k.agent_id(), Side::Ask, MarketKind::Flexibility, slot, Direction::ExtractionReduction, 1000, p, 0);
            o.arrival_seq = i as u64 + 2;
            orders.push(o);
        }
        orders[0].arrival_seq = 1;
        let r = match_call(MarketKind::Flexibility, slot, Direction::ExtractionReduction, &orders);
        assert_eq!(r.traded_volume(), 2000);
        let sellers: Vec<AgentId> = r.sold_units().into_keys().collect();
        assert_eq!(sellers.len(), 2);
        assert!(!sellers.contains(&KeyPair::derive(1, "h2").agent_id()));
    }
}
