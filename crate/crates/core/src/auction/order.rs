use core::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::crypto::{tagged_hash, AgentId, Hash32, KeyPair, PublicKey, Signature};
use crate::tokens::Direction;
use crate::units::{PricePerKwh, TimeSlot, Wh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Bid,
    Ask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarketKind {
    DayAhead,
    Intraday,
    /// Standing flexibility calls from aggregators and the DSO.
    Flexibility,
}

impl MarketKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MarketKind::DayAhead => "day-ahead",
            MarketKind::Intraday => "intraday",
            MarketKind::Flexibility => "flexibility",
        }
    }
}

impl fmt::Display for MarketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A limit order for energy (or flexibility) in one slot. For a bid the
/// limit is the most the agent pays per kWh, for an ask the least it accepts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: Hash32,
    pub agent: AgentId,
    pub side: Side,
    pub market: MarketKind,
    pub slot: TimeSlot,
    pub direction: Direction,
    pub volume: Wh,
    pub limit_price: PricePerKwh,
    /// Agent-chosen counter that keeps order ids unique.
    pub client_seq: u64,
    /// Position in the book, assigned by the auctioneer on receipt.
    pub arrival_seq: u64,
}

impl Order {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        agent: AgentId,
        side: Side,
        market: MarketKind,
        slot: TimeSlot,
        direction: Direction,
        volume: Wh,
        limit_price: PricePerKwh,
        client_seq: u64,
    ) -> Self {
        let mut o = Order {
            order_id: Hash32::ZERO,
            agent,
            side,
            market,
            slot,
            direction,
            volume,
            limit_price,
            client_seq,
            arrival_seq: 0,
        };
        o.order_id = tagged_hash("vdg/order", &[&o.signing_bytes()]);
        o
    }

    /// Canonical bytes of the agent-controlled fields.
    pub fn signing_bytes(&self) -> alloc::vec::Vec<u8> {
        let mut w = Writer::new();
        w.put(&self.agent)
            .u8(self.side as u8)
            .u8(self.market as u8)
            .put(&self.slot)
            .put(&self.direction)
            .u64(self.volume)
            .u64(self.limit_price)
            .u64(self.client_seq);
        w.finish()
    }

    pub fn id_is_consistent(&self) -> bool {
        self.order_id == tagged_hash("vdg/order", &[&self.signing_bytes()])
    }
}

fn side_from(tag: u8) -> Result<Side, DecodeError> {
    match tag {
        0 => Ok(Side::Bid),
        1 => Ok(Side::Ask),
        tag => Err(DecodeError::BadTag { what: "side", tag }),
    }
}

impl Encode for MarketKind {
    fn encode(&self, w: &mut Writer) {
        w.u8(*self as u8);
    }
}

impl Decode for MarketKind {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(MarketKind::DayAhead),
            1 => Ok(MarketKind::Intraday),
            2 => Ok(MarketKind::Flexibility),
            tag => Err(DecodeError::BadTag { what: "market", tag }),
        }
    }
}

/// An order together with its author's signature, as embedded in contract
/// transactions so that validators can check authorization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedOrder {
    pub order: Order,
    pub signature: Signature,
}

impl SignedOrder {
    pub fn sign(order: Order, key: &KeyPair) -> Self {
        let signature = key.sign(&order.signing_bytes());
        SignedOrder { order, signature }
    }

    pub fn verify(&self, key: &PublicKey) -> bool {
        self.order.id_is_consistent()
            && key.agent_id() == self.order.agent
            && key.verify(&self.order.signing_bytes(), &self.signature)
    }
}

impl Encode for SignedOrder {
    fn encode(&self, w: &mut Writer) {
        w.raw(&self.order.signing_bytes()).put(&self.signature);
    }
}

impl Decode for SignedOrder {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let agent = r.get()?;
        let side = side_from(r.u8()?)?;
        let market = r.get()?;
        let slot = r.get()?;
        let direction = r.get()?;
        let volume = r.u64()?;
        let limit_price = r.u64()?;
        let client_seq = r.u64()?;
        let signature = r.get()?;
        let order = Order::new(agent, side, market, slot, direction, volume, limit_price, client_seq);
        Ok(SignedOrder { order, signature })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_order_round_trip_and_verification() {
        let k = KeyPair::derive(1, "h01");
        let o = Order::new(
            k.agent_id(),
            Side::Ask,
            MarketKind::DayAhead,
            TimeSlot(3),
            Direction::Injection,
            1200,
            6,
            1,
        );
        let s = SignedOrder::sign(o, &k);
        assert!(s.verify(&k.public_key()));
        let back = SignedOrder::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back, s);

        let other = KeyPair::derive(1, "h02");
        assert!(!s.verify(&other.public_key()));
        let mut tampered = s.clone();
        tampered.order.limit_price = 1;
        assert!(!tampered.verify(&k.public_key()));
    }
}
