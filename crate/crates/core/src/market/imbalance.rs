//! When a seller delivers less than it sold, the utility supplies the gap to
//! the buyer at retail. The buyer gets its escrow back for the shortfall and
//! the seller pays the buyer the difference between retail and the contract
//! price, so the buyer ends up paying retail for that volume out of the
//! seller's pocket rather than its own.

use serde::{Deserialize, Serialize};

use crate::auction::TradeContract;
use crate::crypto::Hash32;
use crate::units::{amount, Centi, PricePerKwh, TimeSlot, Wh};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImbalanceRecord {
    pub contract_id: Hash32,
    pub slot: TimeSlot,
    pub shortfall: Wh,
    pub overdelivery: Wh,
    /// Escrow returned to the buyer.
    pub refund: Centi,
    /// Owed by the seller to the buyer.
    pub penalty: Centi,
    /// Part of `penalty` actually paid at settlement; the rest is debt.
    pub penalty_paid: Centi,
}

/// Refund and penalty for a contract that delivered `shortfall` Wh less
/// than agreed.
pub fn settle_imbalance(
    contract: &TradeContract,
    shortfall: Wh,
    retail_price: PricePerKwh,
) -> ImbalanceRecord {
    let refund = amount(shortfall, contract.buyer_price).min(contract.escrow);
    let penalty = amount(shortfall, retail_price.saturating_sub(contract.buyer_price));
    ImbalanceRecord {
        contract_id: contract.contract_id,
        slot: contract.slot,
        shortfall,
        overdelivery: 0,
        refund,
        penalty,
        penalty_paid: 0,
    }
}

/// Energy injected beyond what was sold earns only the feed-in tariff.
pub fn settle_overdelivery(excess: Wh, feed_in_tariff: PricePerKwh) -> Centi {
    amount(excess, feed_in_tariff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::ContractState;

    fn contract(volume: Wh, price: PricePerKwh) -> TradeContract {
        let mut c = crate::auction::contract::tests::contract(volume, price, price);
        c.state = ContractState::Verified;
        c
    }

    #[test]
    fn shortfall_refund_and_penalty() {
        // 1 kWh short, contract 10, retail 15
        let r = settle_imbalance(&contract(1000, 10), 1000, 15);
        assert_eq!(r.refund, 10);
        assert_eq!(r.penalty, 5);
        // buyer receives exactly the retail cost of the missing kWh
        assert_eq!(r.refund + r.penalty, amount(1000, 15));
    }

    #[test]
    fn no_shortfall_no_money() {
        let r = settle_imbalance(&contract(1000, 10), 0, 15);
        assert_eq!((r.refund, r.penalty), (0, 0));
    }

    #[test]
    fn penalty_clamped_when_contract_at_or_above_retail() {
        let r = settle_imbalance(&contract(1000, 15), 1000, 15);
        assert_eq!(r.penalty, 0);
        let r = settle_imbalance(&contract(1000, 18), 1000, 15);
        assert_eq!(r.penalty, 0);
        assert_eq!(r.refund, 18);
    }

    #[test]
    fn overdelivery_at_feed_in_only() {
        assert_eq!(settle_overdelivery(2000, 5), 10);
        assert_eq!(settle_overdelivery(0, 5), 0);
    }
}
