//! Energy-token (ecoin) registry.
//!
//! A token is a claim on energy flow for one owner in one slot. It is
//! registered against the owner's declared capacity, committed to a trade
//! contract at clearing, and minted or voided once the distribution operator
//! attests the measured flow. Minted tokens are redeemed for currency at the
//! contract rate and stay on chain, owned by the buyer, as a certificate.
//!
//! Currency balances live in the ledger state next to this registry; the
//! registry never touches money.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::crypto::{tagged_hash, AgentId, Hash32};
use crate::units::{TimeSlot, Wh, TRADE_UNIT_WH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Energy injected into the grid.
    Injection,
    /// Reduction of extraction relative to an objective (flexibility).
    ExtractionReduction,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Injection => "injection",
            Direction::ExtractionReduction => "extraction-reduction",
        }
    }
}

impl Encode for Direction {
    fn encode(&self, w: &mut Writer) {
        w.u8(match self {
            Direction::Injection => 0,
            Direction::ExtractionReduction => 1,
        });
    }
}

impl Decode for Direction {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(Direction::Injection),
            1 => Ok(Direction::ExtractionReduction),
            tag => Err(DecodeError::BadTag { what: "direction", tag }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenStatus {
    Registered,
    Committed,
    Minted,
    Redeemed,
    Voided,
}

impl TokenStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenStatus::Registered => "registered",
            TokenStatus::Committed => "committed",
            TokenStatus::Minted => "minted",
            TokenStatus::Redeemed => "redeemed",
            TokenStatus::Voided => "voided",
        }
    }

    /// Allowed lifecycle edges.
    pub fn can_become(self, next: TokenStatus) -> bool {
        use TokenStatus::*;
        matches!(
            (self, next),
            (Registered, Committed)
                | (Committed, Minted)
                | (Committed, Voided)
                | (Minted, Redeemed)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyToken {
    pub token_id: Hash32,
    /// Registrant; capacity bounds are charged here even after redemption.
    pub issuer: AgentId,
    pub owner: AgentId,
    pub slot: TimeSlot,
    pub volume: Wh,
    pub status: TokenStatus,
    pub contract_ref: Option<Hash32>,
    pub direction: Direction,
    /// Registration order.
    pub seq: u64,
    /// Contract-time order, set on commitment.
    pub commit_seq: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub token_id: Hash32,
    pub from: TokenStatus,
    pub to: TokenStatus,
    pub volume: Wh,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("volume below one trade unit")]
    Degenerate,
    #[error("registration exceeds declared capacity ({requested} Wh requested, {remaining} Wh left)")]
    OverCapacity { requested: Wh, remaining: Wh },
    #[error("unknown token")]
    UnknownToken,
    #[error("token already committed or spent")]
    AlreadyCommitted,
    #[error("insufficient registered volume ({available} Wh available)")]
    Insufficient { available: Wh },
    #[error("token is not minted")]
    NotMinted,
    #[error("token already redeemed")]
    AlreadyRedeemed,
    #[error("token belongs to another contract")]
    WrongContract,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitOutcome {
    pub committed: Hash32,
    pub residual: Option<Hash32>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRegistry {
    tokens: BTreeMap<Hash32, EnergyToken>,
    next_seq: u64,
}

pub fn registration_token_id(tx_id: &Hash32) -> Hash32 {
    tagged_hash("vdg/token", &[&tx_id.0])
}

fn residual_id(id: &Hash32) -> Hash32 {
    tagged_hash("vdg/token/residual", &[&id.0])
}

fn voided_id(id: &Hash32) -> Hash32 {
    tagged_hash("vdg/token/void", &[&id.0])
}

impl TokenRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &Hash32) -> Option<&EnergyToken> {
        self.tokens.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EnergyToken> {
        self.tokens.values()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Volume ever registered by `issuer` for `slot`, in every status.
    pub fn issued_volume(&self, issuer: &AgentId, slot: TimeSlot, direction: Direction) -> Wh {
        self.tokens
            .values()
            .filter(|t| t.issuer == *issuer && t.slot == slot && t.direction == direction)
            .map(|t| t.volume)
            .sum()
    }

    /// Registered, uncommitted volume `owner` can still sell in `slot`.
    pub fn available(&self, owner: &AgentId, slot: TimeSlot, direction: Direction) -> Wh {
        self.tokens
            .values()
            .filter(|t| {
                t.owner == *owner
                    && t.slot == slot
                    && t.direction == direction
                    && t.status == TokenStatus::Registered
            })
            .map(|t| t.volume)
            .sum()
    }

    pub fn check_register(
        &self,
        issuer: &AgentId,
        slot: TimeSlot,
        volume: Wh,
        direction: Direction,
        capacity: Wh,
    ) -> Result<(), TokenError> {
        if volume < TRADE_UNIT_WH {
            return Err(TokenError::Degenerate);
        }
        let used = self.issued_volume(issuer, slot, direction);
        let remaining = capacity.saturating_sub(used);
        if volume > remaining {
            return Err(TokenError::OverCapacity { requested: volume, remaining });
        }
        Ok(())
    }

    /// Records availability. Callers check capacity first with
    /// [`check_register`](Self::check_register).
    pub fn register(
        &mut self,
        token_id: Hash32,
        issuer: AgentId,
        slot: TimeSlot,
        volume: Wh,
        direction: Direction,
    ) -> &EnergyToken {
        let seq = self.bump();
        self.tokens.entry(token_id).or_insert(EnergyToken {
            token_id,
            issuer,
            owner: issuer,
            slot,
            volume,
            status: TokenStatus::Registered,
            contract_ref: None,
            direction,
            seq,
            commit_seq: None,
        })
    }

    fn bump(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    pub fn check_commit(&self, token_id: &Hash32, volume: Wh) -> Result<(), TokenError> {
        let t = self.tokens.get(token_id).ok_or(TokenError::UnknownToken)?;
        if t.status != TokenStatus::Registered {
            return Err(TokenError::AlreadyCommitted);
        }
        if volume == 0 {
            return Err(TokenError::Degenerate);
        }
        if t.volume < volume {
            return Err(TokenError::Insufficient { available: t.volume });
        }
        Ok(())
    }

    /// Binds `volume` of a registered token to a contract. Any residual stays
    /// registered under a derived id.
    pub fn commit_to_contract(
        &mut self,
        token_id: &Hash32,
        contract: Hash32,
        volume: Wh,
        commit_seq: u64,
    ) -> Result<CommitOutcome, TokenError> {
        self.check_commit(token_id, volume)?;
        let residual = {
            let t = self.tokens.get(token_id).expect("checked");
            (t.volume > volume).then(|| (residual_id(token_id), t.volume - volume))
        };
        let residual = match residual {
            Some((rid, rest)) => {
                let seq = self.bump();
                let t = self.tokens.get(token_id).expect("checked");
                let split = EnergyToken {
                    token_id: rid,
                    volume: rest,
                    seq,
                    ..t.clone()
                };
                self.tokens.insert(rid, split);
                Some(rid)
            }
            None => None,
        };
        let t = self.tokens.get_mut(token_id).expect("checked");
        t.volume = volume;
        t.status = TokenStatus::Committed;
        t.contract_ref = Some(contract);
        t.commit_seq = Some(commit_seq);
        Ok(CommitOutcome { committed: *token_id, residual })
    }

    /// Commits `volume` from `owner`'s registered tokens for the slot,
    /// oldest registration first.
    pub fn commit_volume(
        &mut self,
        owner: &AgentId,
        slot: TimeSlot,
        direction: Direction,
        contract: Hash32,
        volume: Wh,
        commit_seq: u64,
    ) -> Result<Vec<Hash32>, TokenError> {
        let available = self.available(owner, slot, direction);
        if available < volume {
            return Err(TokenError::Insufficient { available });
        }
        let mut candidates: Vec<(u64, Hash32, Wh)> = self
            .tokens
            .values()
            .filter(|t| {
                t.owner == *owner
                    && t.slot == slot
                    && t.direction == direction
                    && t.status == TokenStatus::Registered
            })
            .map(|t| (t.seq, t.token_id, t.volume))
            .collect();
        candidates.sort();
        let mut left = volume;
        let mut committed = Vec::new();
        for (_, id, vol) in candidates {
            if left == 0 {
                break;
            }
            let take = vol.min(left);
            let out = self.commit_to_contract(&id, contract, take, commit_seq)?;
            committed.push(out.committed);
            left -= take;
        }
        Ok(committed)
    }

    /// Applies a proof of flow: committed tokens of the meter for the slot
    /// are minted up to `covered` Wh in contract-time order; the uncovered
    /// remainder is voided. A token straddling the boundary is split.
    pub fn mint_on_pof(
        &mut self,
        meter: &AgentId,
        slot: TimeSlot,
        direction: Direction,
        covered: Wh,
    ) -> Vec<Transition> {
        let mut committed: Vec<(u64, u64, Hash32)> = self
            .tokens
            .values()
            .filter(|t| {
                t.owner == *meter
                    && t.slot == slot
                    && t.direction == direction
                    && t.status == TokenStatus::Committed
            })
            .map(|t| (t.commit_seq.unwrap_or(u64::MAX), t.seq, t.token_id))
            .collect();
        committed.sort();

        let mut left = covered;
        let mut out = Vec::new();
        for (_, _, id) in committed {
            let vol = self.tokens[&id].volume;
            if left >= vol {
                left -= vol;
                self.set_status(&id, TokenStatus::Minted, &mut out);
            } else if left == 0 {
                self.set_status(&id, TokenStatus::Voided, &mut out);
            } else {
                let vid = voided_id(&id);
                let seq = self.bump();
                let t = self.tokens.get_mut(&id).expect("present");
                let short = t.volume - left;
                t.volume = left;
                let mut voided = t.clone();
                voided.token_id = vid;
                voided.volume = short;
                voided.status = TokenStatus::Voided;
                voided.seq = seq;
                self.tokens.insert(vid, voided);
                out.push(Transition {
                    token_id: vid,
                    from: TokenStatus::Committed,
                    to: TokenStatus::Voided,
                    volume: short,
                });
                self.set_status(&id, TokenStatus::Minted, &mut out);
                left = 0;
            }
        }
        out
    }

    fn set_status(&mut self, id: &Hash32, to: TokenStatus, log: &mut Vec<Transition>) {
        let t = self.tokens.get_mut(id).expect("present");
        debug_assert!(t.status.can_become(to), "{:?} -> {:?}", t.status, to);
        log.push(Transition { token_id: *id, from: t.status, to, volume: t.volume });
        t.status = to;
    }

    /// Voids every still-committed token of a contract (verification timeout).
    pub fn void_committed(&mut self, contract: &Hash32) -> Vec<Transition> {
        let ids: Vec<Hash32> = self
            .tokens
            .values()
            .filter(|t| t.contract_ref == Some(*contract) && t.status == TokenStatus::Committed)
            .map(|t| t.token_id)
            .collect();
        let mut out = Vec::new();
        for id in ids {
            self.set_status(&id, TokenStatus::Voided, &mut out);
        }
        out
    }

    /// Moves the voided tokens of `from` onto the contract `to`; used when a
    /// partially delivered contract is split into a settled and a defaulted leg.
    pub fn rebind_voided(&mut self, from: &Hash32, to: Hash32) {
        for t in self.tokens.values_mut() {
            if t.contract_ref == Some(*from) && t.status == TokenStatus::Voided {
                t.contract_ref = Some(to);
            }
        }
    }

    pub fn check_redeem(&self, token_id: &Hash32, contract: &Hash32) -> Result<(), TokenError> {
        let t = self.tokens.get(token_id).ok_or(TokenError::UnknownToken)?;
        if t.contract_ref != Some(*contract) {
            return Err(TokenError::WrongContract);
        }
        match t.status {
            TokenStatus::Minted => Ok(()),
            TokenStatus::Redeemed => Err(TokenError::AlreadyRedeemed),
            _ => Err(TokenError::NotMinted),
        }
    }

    /// Marks a minted token redeemed and hands it to the buyer as a
    /// consumption certificate. The currency leg is applied by the ledger.
    pub fn redeem(
        &mut self,
        token_id: &Hash32,
        contract: &Hash32,
        buyer: AgentId,
    ) -> Result<Transition, TokenError> {
        self.check_redeem(token_id, contract)?;
        let mut log = Vec::new();
        self.set_status(token_id, TokenStatus::Redeemed, &mut log);
        self.tokens.get_mut(token_id).expect("present").owner = buyer;
        Ok(log.pop().expect("one transition"))
    }

    /// Token ids bound to a contract, in registry order.
    pub fn tokens_of(&self, contract: &Hash32) -> Vec<&EnergyToken> {
        let mut v: Vec<&EnergyToken> = self
            .tokens
            .values()
            .filter(|t| t.contract_ref == Some(*contract))
            .collect();
        v.sort_by_key(|t| t.seq);
        v
    }

    /// `(minted or redeemed, voided, still committed)` volume of a contract.
    pub fn contract_volumes(&self, contract: &Hash32) -> (Wh, Wh, Wh) {
        let mut out = (0, 0, 0);
        for t in self.tokens.values().filter(|t| t.contract_ref == Some(*contract)) {
            match t.status {
                TokenStatus::Minted | TokenStatus::Redeemed => out.0 += t.volume,
                TokenStatus::Voided => out.1 += t.volume,
                TokenStatus::Committed => out.2 += t.volume,
                TokenStatus::Registered => {}
            }
        }
        out
    }
}
