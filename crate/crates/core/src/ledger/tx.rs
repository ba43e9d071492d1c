use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::auction::{ContractTerms, MarketKind};
use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::control::ControlResource;
use crate::crypto::{tagged_hash, AgentId, Hash32, KeyPair, PublicKey, Signature};
use crate::tokens::Direction;
use crate::units::{Centi, PricePerKwh, Tick, TimeSlot, Wh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Runs the auctioneer: opens and settles contracts.
    Operator,
    Dso,
    Household,
    Aggregator,
    Validator,
    Controller,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Operator => "operator",
            Role::Dso => "dso",
            Role::Household => "household",
            Role::Aggregator => "aggregator",
            Role::Validator => "validator",
            Role::Controller => "controller",
        }
    }
}

impl Encode for Role {
    fn encode(&self, w: &mut Writer) {
        w.u8(*self as u8);
    }
}

impl Decode for Role {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            0 => Role::Operator,
            1 => Role::Dso,
            2 => Role::Household,
            3 => Role::Aggregator,
            4 => Role::Validator,
            5 => Role::Controller,
            tag => return Err(DecodeError::BadTag { what: "role", tag }),
        })
    }
}

/// A registered participant and its opening position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub name: String,
    pub public_key: PublicKey,
    pub role: Role,
    pub balance: Centi,
    pub retail_price: PricePerKwh,
    pub feed_in_tariff: PricePerKwh,
    /// Per-slot volume the participant may register, by direction.
    pub injection_capacity: Wh,
    pub reduction_capacity: Wh,
}

impl Participant {
    pub fn agent_id(&self) -> AgentId {
        self.public_key.agent_id()
    }

    pub fn capacity(&self, direction: Direction) -> Wh {
        match direction {
            Direction::Injection => self.injection_capacity,
            Direction::ExtractionReduction => self.reduction_capacity,
        }
    }
}

impl Encode for Participant {
    fn encode(&self, w: &mut Writer) {
        w.str(&self.name)
            .put(&self.public_key)
            .put(&self.role)
            .u64(self.balance)
            .u64(self.retail_price)
            .u64(self.feed_in_tariff)
            .u64(self.injection_capacity)
            .u64(self.reduction_capacity);
    }
}

impl Decode for Participant {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Participant {
            name: r.string()?,
            public_key: r.get()?,
            role: r.get()?,
            balance: r.u64()?,
            retail_price: r.u64()?,
            feed_in_tariff: r.u64()?,
            injection_capacity: r.u64()?,
            reduction_capacity: r.u64()?,
        })
    }
}

/// Everything fixed at chain creation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisConfig {
    pub chain_id: String,
    pub ticks_per_day: u64,
    pub round_ticks: u64,
    /// Ticks after a slot ends before unverified contracts may be defaulted.
    pub verify_timeout: Tick,
    pub validators: Vec<AgentId>,
    pub participants: Vec<Participant>,
    pub resources: Vec<ControlResource>,
}

impl Encode for GenesisConfig {
    fn encode(&self, w: &mut Writer) {
        w.str(&self.chain_id)
            .u64(self.ticks_per_day)
            .u64(self.round_ticks)
            .u64(self.verify_timeout)
            .list(&self.validators)
            .list(&self.participants)
            .list(&self.resources);
    }
}

impl Decode for GenesisConfig {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(GenesisConfig {
            chain_id: r.string()?,
            ticks_per_day: r.u64()?,
            round_ticks: r.u64()?,
            verify_timeout: r.u64()?,
            validators: r.list()?,
            participants: r.list()?,
            resources: r.list()?,
        })
    }
}

/// DSO attestation of what a meter did during one slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofOfFlow {
    pub meter: AgentId,
    pub slot: TimeSlot,
    pub measured_injection: Wh,
    pub measured_extraction: Wh,
    /// Flexibility delivered against the meter's real-time objectives.
    pub reduction_delivered: Wh,
}

impl Encode for ProofOfFlow {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.meter)
            .put(&self.slot)
            .u64(self.measured_injection)
            .u64(self.measured_extraction)
            .u64(self.reduction_delivered);
    }
}

impl Decode for ProofOfFlow {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(ProofOfFlow {
            meter: r.get()?,
            slot: r.get()?,
            measured_injection: r.u64()?,
            measured_extraction: r.u64()?,
            reduction_delivered: r.u64()?,
        })
    }
}

/// Public summary of one cleared book.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketRecord {
    pub market: MarketKind,
    pub slot: TimeSlot,
    pub direction: Direction,
    pub close_tick: Tick,
    pub bids: u32,
    pub asks: u32,
    pub traded_volume: Wh,
    pub buyer_price: PricePerKwh,
    pub seller_price: PricePerKwh,
    pub surplus: Centi,
    pub excluded: u32,
}

impl Encode for MarketRecord {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.market)
            .put(&self.slot)
            .put(&self.direction)
            .u64(self.close_tick)
            .u32(self.bids)
            .u32(self.asks)
            .u64(self.traded_volume)
            .u64(self.buyer_price)
            .u64(self.seller_price)
            .u64(self.surplus)
            .u32(self.excluded);
    }
}

impl Decode for MarketRecord {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(MarketRecord {
            market: r.get()?,
            slot: r.get()?,
            direction: r.get()?,
            close_tick: r.u64()?,
            bids: r.u32()?,
            asks: r.u32()?,
            traded_volume: r.u64()?,
            buyer_price: r.u64()?,
            seller_price: r.u64()?,
            surplus: r.u64()?,
            excluded: r.u32()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Payload {
    Genesis(GenesisConfig),
    Transfer { to: AgentId, amount: Centi },
    RegisterEcoin { slot: TimeSlot, volume: Wh, direction: Direction },
    OpenContract(ContractTerms),
    ProofOfFlow(ProofOfFlow),
    Settle { contract_id: Hash32 },
    MarketRecord(MarketRecord),
    AcquireLease { resource: String, start: Tick, end: Tick },
    ReleaseLease { lease_id: Hash32, at: Tick },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Genesis(_) => "genesis",
            Payload::Transfer { .. } => "transfer",
            Payload::RegisterEcoin { .. } => "register-ecoin",
            Payload::OpenContract(_) => "open-contract",
            Payload::ProofOfFlow(_) => "proof-of-flow",
            Payload::Settle { .. } => "settle",
            Payload::MarketRecord(_) => "market-record",
            Payload::AcquireLease { .. } => "acquire-lease",
            Payload::ReleaseLease { .. } => "release-lease",
        }
    }
}

impl Encode for Payload {
    fn encode(&self, w: &mut Writer) {
        match self {
            Payload::Genesis(g) => {
                w.u8(0).put(g);
            }
            Payload::Transfer { to, amount } => {
                w.u8(1).put(to).u64(*amount);
            }
            Payload::RegisterEcoin { slot, volume, direction } => {
                w.u8(2).put(slot).u64(*volume).put(direction);
            }
            Payload::OpenContract(t) => {
                w.u8(3).put(t);
            }
            Payload::ProofOfFlow(p) => {
                w.u8(4).put(p);
            }
            Payload::Settle { contract_id } => {
                w.u8(5).put(contract_id);
            }
            Payload::MarketRecord(m) => {
                w.u8(6).put(m);
            }
            Payload::AcquireLease { resource, start, end } => {
                w.u8(7).str(resource).u64(*start).u64(*end);
            }
            Payload::ReleaseLease { lease_id, at } => {
                w.u8(8).put(lease_id).u64(*at);
            }
        }
    }
}

impl Decode for Payload {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            0 => Payload::Genesis(r.get()?),
            1 => Payload::Transfer { to: r.get()?, amount: r.u64()? },
            2 => Payload::RegisterEcoin { slot: r.get()?, volume: r.u64()?, direction: r.get()? },
            3 => Payload::OpenContract(r.get()?),
            4 => Payload::ProofOfFlow(r.get()?),
            5 => Payload::Settle { contract_id: r.get()? },
            6 => Payload::MarketRecord(r.get()?),
            7 => Payload::AcquireLease { resource: r.string()?, start: r.u64()?, end: r.u64()? },
            8 => Payload::ReleaseLease { lease_id: r.get()?, at: r.u64()? },
            tag => return Err(DecodeError::BadTag { what: "payload", tag }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedTransaction {
    pub tx_id: Hash32,
    pub sender: AgentId,
    pub nonce: u64,
    pub payload: Payload,
    pub signature: Signature,
}

impl SignedTransaction {
    /// Bytes covered by the sender's signature.
    pub fn signing_bytes(sender: &AgentId, nonce: u64, payload: &Payload) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"vdg/tx/v1").put(sender).u64(nonce).put(payload);
        w.finish()
    }

    pub fn new(key: &KeyPair, nonce: u64, payload: Payload) -> Self {
        let sender = key.agent_id();
        let signature = key.sign(&Self::signing_bytes(&sender, nonce, &payload));
        Self::assemble(sender, nonce, payload, signature)
    }

    /// Builds a transaction around an existing signature, computing its id.
    pub fn assemble(sender: AgentId, nonce: u64, payload: Payload, signature: Signature) -> Self {
        let mut tx = SignedTransaction { tx_id: Hash32::ZERO, sender, nonce, payload, signature };
        tx.tx_id = tx.compute_id();
        tx
    }

    pub fn compute_id(&self) -> Hash32 {
        let mut w = Writer::new();
        w.put(&self.sender).u64(self.nonce).put(&self.payload).put(&self.signature);
        tagged_hash("vdg/txid", &[&w.finish()])
    }

    pub fn verify(&self, key: &PublicKey) -> bool {
        self.tx_id == self.compute_id()
            && key.verify(&Self::signing_bytes(&self.sender, self.nonce, &self.payload), &self.signature)
    }
}

impl Encode for SignedTransaction {
    fn encode(&self, w: &mut Writer) {
        w.put(&self.tx_id).put(&self.sender).u64(self.nonce).put(&self.payload).put(&self.signature);
    }
}

impl Decode for SignedTransaction {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(SignedTransaction {
            tx_id: r.get()?,
            sender: r.get()?,
            nonce: r.u64()?,
            payload: r.get()?,
            signature: r.get()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_covers_every_field() {
        let k = KeyPair::derive(1, "h");
        let tx = SignedTransaction::new(&k, 1, Payload::Transfer { to: AgentId([2; 20]), amount: 5 });
        assert!(tx.verify(&k.public_key()));
        let mut t2 = tx.clone();
        t2.nonce = 2;
        assert_ne!(t2.compute_id(), tx.tx_id);
        assert!(!t2.verify(&k.public_key()));
        let mut t3 = tx.clone();
        t3.signature = Signature::ZERO;
        assert_ne!(t3.compute_id(), tx.tx_id);
        t3.tx_id = t3.compute_id();
        assert!(!t3.verify(&k.public_key()));
    }

    #[test]
    fn payload_round_trip() {
        let k = KeyPair::derive(1, "h");
        let payloads = [
            Payload::Transfer { to: AgentId([2; 20]), amount: 5 },
            Payload::RegisterEcoin { slot: TimeSlot(30), volume: 800, direction: Direction::Injection },
            Payload::Settle { contract_id: Hash32([7; 32]) },
            Payload::AcquireLease { resource: "heater".into(), start: 10, end: 20 },
            Payload::ReleaseLease { lease_id: Hash32([1; 32]), at: 15 },
            Payload::ProofOfFlow(ProofOfFlow {
                meter: AgentId([3; 20]),
                slot: TimeSlot(4),
                measured_injection: 1200,
                measured_extraction: 0,
                reduction_delivered: 0,
            }),
        ];
        for p in payloads {
            let tx = SignedTransaction::new(&k, 9, p);
            let back = SignedTransaction::from_bytes(&tx.to_bytes()).unwrap();
            assert_eq!(back, tx);
            assert!(back.verify(&k.public_key()));
        }
    }
}
