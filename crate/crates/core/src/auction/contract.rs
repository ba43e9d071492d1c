use serde::{Deserialize, Serialize};

use super::order::{MarketKind, SignedOrder};
use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::crypto::{AgentId, Hash32};
use crate::market::imbalance::{settle_imbalance, ImbalanceRecord};
use crate::market::realtime::ObjectiveKind;
use crate::tokens::Direction;
use crate::units::{amount, Centi, PricePerKwh, TimeSlot, Wh};

/// What the auctioneer asks the ledger to open: a matched pair of signed
/// orders, a volume, and the two leg prices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractTerms {
    pub market: MarketKind,
    pub slot: TimeSlot,
    pub direction: Direction,
    pub volume: Wh,
    pub buyer_price: PricePerKwh,
    pub seller_price: PricePerKwh,
    pub bid: SignedOrder,
    pub ask: SignedOrder,
    /// Real-time objective for flexibility contracts.
    pub objective: Option<ObjectiveKind>,
}

impl ContractTerms {
    pub fn buyer(&self) -> AgentId {
        self.bid.order.agent
    }

    pub fn seller(&self) -> AgentId {
        self.ask.order.agent
    }

    /// Currency moved from the buyer into escrow at clearing.
    pub fn escrow(&self) -> Centi {
        amount(self.volume, self.buyer_price)
    }
}

impl Encode for ContractTerms {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.market)
            .put(&self.slot)
            .put(&self.direction)
            .u64(self.volume)
            .u64(self.buyer_price)
            .u64(self.seller_price)
            .put(&self.bid)
            .put(&self.ask)
            .opt(&self.objective);
    }
}

impl Decode for ContractTerms {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ContractTerms {
            market: r.get()?,
            slot: r.get()?,
            direction: r.get()?,
            volume: r.u64()?,
            buyer_price: r.u64()?,
            seller_price: r.u64()?,
            bid: r.get()?,
            ask: r.get()?,
            objective: r.opt()?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractState {
    Cleared,
    /// Every committed token has been minted or voided.
    Verified,
    Settled,
    Defaulted,
}

impl ContractState {
    pub fn as_str(self) -> &'static str {
        match self {
            ContractState::Cleared => "cleared",
            ContractState::Verified => "verified",
            ContractState::Settled => "settled",
            ContractState::Defaulted => "defaulted",
        }
    }

    pub fn is_final(self) -> bool {
        matches!(self, ContractState::Settled | ContractState::Defaulted)
    }
}

/// A cleared forward agreement for delivery in one slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeContract {
    pub contract_id: Hash32,
    pub market: MarketKind,
    pub buyer: AgentId,
    pub seller: AgentId,
    pub slot: TimeSlot,
    pub direction: Direction,
    pub volume: Wh,
    pub buyer_price: PricePerKwh,
    pub seller_price: PricePerKwh,
    pub state: ContractState,
    /// Currency still held for this contract.
    pub escrow: Centi,
    /// Contract-time order.
    pub seq: u64,
    pub buy_order: Hash32,
    pub sell_order: Hash32,
    pub objective: Option<ObjectiveKind>,
    /// Set on the defaulted leg split off a partially delivered contract.
    pub parent: Option<Hash32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementPlan {
    pub delivered: Wh,
    pub shortfall: Wh,
    /// Paid to the seller out of escrow.
    pub seller_pay: Centi,
    /// Buyer/seller price spread, paid to the market fund.
    pub market_fund: Centi,
    pub imbalance: ImbalanceRecord,
}

impl SettlementPlan {
    pub fn state(&self) -> ContractState {
        if self.shortfall == 0 {
            ContractState::Settled
        } else {
            ContractState::Defaulted
        }
    }
}

/// Splits a verified contract's escrow between seller, market fund and
/// buyer refund. Delivery is pro-rata: `delivered` Wh settle at the contract
/// rate and the `shortfall` goes through imbalance settlement.
pub fn settle(
    contract: &TradeContract,
    delivered: Wh,
    shortfall: Wh,
    buyer_retail: PricePerKwh,
) -> SettlementPlan {
    debug_assert_eq!(delivered + shortfall, contract.volume);
    let imbalance = settle_imbalance(contract, shortfall, buyer_retail);
    let remaining = contract.escrow - imbalance.refund;
    let seller_pay = amount(delivered, contract.seller_price).min(remaining);
    SettlementPlan {
        delivered,
        shortfall,
        seller_pay,
        market_fund: remaining - seller_pay,
        imbalance,
    }
}
