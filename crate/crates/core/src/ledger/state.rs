use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tx::{GenesisConfig, MarketRecord, Payload, ProofOfFlow, Role, SignedTransaction};
use crate::auction::{settle, ClearingView, ContractState, ContractTerms, MarketKind, Side, TradeContract};
use crate::control::lease::{LeaseError, LeaseTable};
use crate::crypto::{tagged_hash, AgentId, Hash32, PublicKey};
use crate::market::calendar::Calendar;
use crate::market::ImbalanceRecord;
use crate::tokens::{registration_token_id, Direction, TokenError, TokenRegistry, TokenStatus};
use crate::units::{Centi, PricePerKwh, Tick, TimeSlot, Wh, TRADE_UNIT_WH};

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum Reject {
    #[error("bad signature")]
    BadSignature,
    #[error("nonce replay")]
    NonceReplay,
    #[error("double spend: {0}")]
    DoubleSpend(String),
    #[error("unknown sender")]
    UnknownSender,
    #[error("sender not authorized for this payload")]
    Unauthorized,
    #[error("lease conflict")]
    Conflict,
    #[error("not the lease holder")]
    NotHolder,
    #[error("invalid: {0}")]
    Invalid(String),
}

impl Reject {
    pub fn code(&self) -> &'static str {
        match self {
            Reject::BadSignature => "bad-signature",
            Reject::NonceReplay => "nonce-replay",
            Reject::DoubleSpend(_) => "double-spend",
            Reject::UnknownSender => "unknown-sender",
            Reject::Unauthorized => "unauthorized",
            Reject::Conflict => "conflict",
            Reject::NotHolder => "not-holder",
            Reject::Invalid(_) => "invalid",
        }
    }

    /// Whether the same transaction could become valid in a later block.
    pub fn is_transient(&self) -> bool {
        matches!(self, Reject::Invalid(_))
    }
}

fn invalid(s: &str) -> Reject {
    Reject::Invalid(s.into())
}

fn double_spend(s: &str) -> Reject {
    Reject::DoubleSpend(s.into())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub name: String,
    pub public_key: PublicKey,
    pub role: Role,
    pub balance: Centi,
    /// Highest nonce accepted so far; 0 before the first transaction.
    pub nonce: u64,
    pub retail_price: PricePerKwh,
    pub feed_in_tariff: PricePerKwh,
    pub injection_capacity: Wh,
    pub reduction_capacity: Wh,
}

impl Account {
    pub fn capacity(&self, direction: Direction) -> Wh {
        match direction {
            Direction::Injection => self.injection_capacity,
            Direction::ExtractionReduction => self.reduction_capacity,
        }
    }
}

/// Imbalance penalty a seller could not pay at settlement. Paid off, oldest
/// first, from the seller's later contract income.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Debt {
    pub debtor: AgentId,
    pub creditor: AgentId,
    pub amount: Centi,
    pub contract_id: Hash32,
}

/// Where in the chain a transaction is being applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockContext {
    pub height: u64,
    pub time: Tick,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("invariant {name} violated: {detail}")]
pub struct InvariantViolation {
    pub name: &'static str,
    pub detail: String,
}

fn violation(name: &'static str, detail: String) -> InvariantViolation {
    InvariantViolation { name, detail }
}

/// The deterministic fold of a chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerState {
    pub chain_id: String,
    pub calendar: Calendar,
    pub round_ticks: u64,
    pub verify_timeout: Tick,
    pub validators: Vec<AgentId>,
    pub accounts: BTreeMap<AgentId, Account>,
    pub tokens: TokenRegistry,
    pub contracts: BTreeMap<Hash32, TradeContract>,
    pub contract_seq: u64,
    /// Volume already contracted against each signed order.
    pub order_fills: BTreeMap<Hash32, Wh>,
    pub pofs: BTreeMap<(AgentId, TimeSlot), ProofOfFlow>,
    pub market_fund: Centi,
    pub debts: Vec<Debt>,
    pub imbalances: Vec<ImbalanceRecord>,
    pub market_records: Vec<MarketRecord>,
    pub leases: LeaseTable,
    pub genesis_supply: Centi,
    pub tx_count: u64,
}

pub fn contract_id_for(tx_id: &Hash32) -> Hash32 {
    tagged_hash("vdg/contract", &[&tx_id.0])
}

pub fn leg_id_for(contract_id: &Hash32) -> Hash32 {
    tagged_hash("vdg/contract/leg", &[&contract_id.0])
}

pub fn lease_id_for(tx_id: &Hash32) -> Hash32 {
    tagged_hash("vdg/lease", &[&tx_id.0])
}

impl LedgerState {
    pub fn genesis(config: &GenesisConfig) -> Result<Self, String> {
        let mut accounts = BTreeMap::new();
        let mut supply: Centi = 0;
        for p in &config.participants {
            let id = p.agent_id();
            let acct = Account {
                name: p.name.clone(),
                public_key: p.public_key,
                role: p.role,
                balance: p.balance,
                nonce: 0,
                retail_price: p.retail_price,
                feed_in_tariff: p.feed_in_tariff,
                injection_capacity: p.injection_capacity,
                reduction_capacity: p.reduction_capacity,
            };
            if accounts.insert(id, acct).is_some() {
                return Err(format!("duplicate participant {}", p.name));
            }
            supply = supply.checked_add(p.balance).ok_or("genesis supply overflows")?;
        }
        if config.validators.is_empty() {
            return Err("no validators".into());
        }
        for v in &config.validators {
            match accounts.get(v) {
                Some(a) if a.role == Role::Validator => {}
                _ => return Err(format!("validator {v:?} is not a registered validator")),
            }
        }
        let calendar = Calendar { ticks_per_day: config.ticks_per_day, ..Calendar::default() };
        if calendar.slot_ticks() == 0 || config.round_ticks == 0 {
            return Err("degenerate clock".into());
        }
        Ok(LedgerState {
            chain_id: config.chain_id.clone(),
            calendar,
            round_ticks: config.round_ticks,
            verify_timeout: config.verify_timeout,
            validators: config.validators.clone(),
            accounts,
            tokens: TokenRegistry::new(),
            contracts: BTreeMap::new(),
            contract_seq: 0,
            order_fills: BTreeMap::new(),
            pofs: BTreeMap::new(),
            market_fund: 0,
            debts: Vec::new(),
            imbalances: Vec::new(),
            market_records: Vec::new(),
            leases: LeaseTable::new(&config.resources),
            genesis_supply: supply,
            tx_count: 0,
        })
    }

    pub fn balance(&self, agent: &AgentId) -> Centi {
        self.accounts.get(agent).map_or(0, |a| a.balance)
    }

    pub fn nonce(&self, agent: &AgentId) -> u64 {
        self.accounts.get(agent).map_or(0, |a| a.nonce)
    }

    pub fn total_escrow(&self) -> Centi {
        self.contracts.values().map(|c| c.escrow).sum()
    }

    pub fn total_balances(&self) -> Centi {
        self.accounts.values().map(|a| a.balance).sum()
    }

    pub fn debt_of(&self, agent: &AgentId) -> Centi {
        self.debts.iter().filter(|d| d.debtor == *agent).map(|d| d.amount).sum()
    }

    /// Full validation: signature, nonce and payload rules.
    pub fn validate(&self, tx: &SignedTransaction, ctx: BlockContext) -> Result<(), Reject> {
        self.validate_with(tx, ctx, true)
    }

    /// `validate` with the signature check optional. Only a deliberately
    /// faulty validator turns it off.
    pub fn validate_with(&self, tx: &SignedTransaction, ctx: BlockContext, check_signature: bool) -> Result<(), Reject> {
        if let Payload::Genesis(_) = tx.payload {
            return Err(invalid("genesis outside block 0"));
        }
        let acct = self.accounts.get(&tx.sender).ok_or(Reject::UnknownSender)?;
        if check_signature && !tx.verify(&acct.public_key) {
            return Err(Reject::BadSignature);
        }
        if tx.nonce <= acct.nonce {
            return Err(Reject::NonceReplay);
        }
        self.check_payload(tx, acct, ctx)
    }

    /// Validates and, if accepted, applies a transaction.
    pub fn apply(&mut self, tx: &SignedTransaction, ctx: BlockContext) -> Result<(), Reject> {
        self.apply_with(tx, ctx, true)
    }

    pub fn apply_with(&mut self, tx: &SignedTransaction, ctx: BlockContext, check_signature: bool) -> Result<(), Reject> {
        self.validate_with(tx, ctx, check_signature)?;
        self.mutate(tx);
        Ok(())
    }

    fn require(&self, acct: &Account, role: Role) -> Result<(), Reject> {
        if acct.role == role {
            Ok(())
        } else {
            Err(Reject::Unauthorized)
        }
    }

    fn check_payload(&self, tx: &SignedTransaction, acct: &Account, ctx: BlockContext) -> Result<(), Reject> {
        match &tx.payload {
            Payload::Genesis(_) => unreachable!("rejected above"),
            Payload::Transfer { to, amount } => {
                if *amount == 0 {
                    return Err(invalid("zero transfer"));
                }
                if *to == tx.sender {
                    return Err(invalid("transfer to self"));
                }
                if !self.accounts.contains_key(to) {
                    return Err(invalid("unknown recipient"));
                }
                if acct.balance < *amount {
                    return Err(double_spend("insufficient balance"));
                }
                Ok(())
            }
            Payload::RegisterEcoin { slot, volume, direction } => {
                self.require(acct, Role::Household)?;
                if ctx.time >= self.calendar.slot_start(*slot) {
                    return Err(invalid("slot already started"));
                }
                if volume % TRADE_UNIT_WH != 0 {
                    return Err(invalid("volume not a whole number of trade units"));
                }
                self.tokens
                    .check_register(&tx.sender, *slot, *volume, *direction, acct.capacity(*direction))
                    .map_err(|e| match e {
                        TokenError::Degenerate => invalid("degenerate volume"),
                        _ => double_spend("registration exceeds capacity"),
                    })
            }
            Payload::OpenContract(terms) => {
                self.require(acct, Role::Operator)?;
                self.check_open(terms, ctx)
            }
            Payload::ProofOfFlow(p) => {
                self.require(acct, Role::Dso)?;
                if !self.accounts.contains_key(&p.meter) {
                    return Err(invalid("unknown meter"));
                }
                if self.pofs.contains_key(&(p.meter, p.slot)) {
                    return Err(double_spend("duplicate proof of flow"));
                }
                if ctx.time < self.calendar.slot_end(p.slot) {
                    return Err(invalid("slot not elapsed"));
                }
                Ok(())
            }
            Payload::Settle { contract_id } => {
                self.require(acct, Role::Operator)?;
                let c = self.contracts.get(contract_id).ok_or_else(|| invalid("unknown contract"))?;
                if c.state.is_final() {
                    return Err(double_spend("contract already settled"));
                }
                if ctx.time < self.calendar.slot_end(c.slot) {
                    return Err(invalid("slot not elapsed"));
                }
                let (_, _, committed) = self.tokens.contract_volumes(contract_id);
                if committed > 0 && ctx.time < self.calendar.slot_end(c.slot) + self.verify_timeout {
                    return Err(invalid("awaiting proof of flow"));
                }
                Ok(())
            }
            Payload::MarketRecord(_) => self.require(acct, Role::Operator),
            Payload::AcquireLease { resource, start, end } => {
                if *start < ctx.time {
                    return Err(invalid("lease starts in the past"));
                }
                self.leases.check_acquire(&tx.sender, resource, *start, *end).map(|_| ()).map_err(lease_reject)
            }
            Payload::ReleaseLease { lease_id, at } => {
                if *at < ctx.time {
                    return Err(invalid("release in the past"));
                }
                self.leases.check_release(&tx.sender, lease_id).map_err(lease_reject)
            }
        }
    }

    fn check_open(&self, t: &ContractTerms, ctx: BlockContext) -> Result<(), Reject> {
        let (bid, ask) = (&t.bid.order, &t.ask.order);
        if t.volume == 0 || !t.volume.is_multiple_of(TRADE_UNIT_WH) {
            return Err(invalid("contract volume not a whole number of trade units"));
        }
        if bid.side != Side::Bid || ask.side != Side::Ask {
            return Err(invalid("order sides"));
        }
        for o in [bid, ask] {
            if o.market != t.market || o.slot != t.slot || o.direction != t.direction {
                return Err(invalid("order does not match contract"));
            }
        }
        if bid.agent == ask.agent {
            return Err(invalid("self trade"));
        }
        if ctx.time >= self.calendar.slot_start(t.slot) {
            return Err(invalid("delivery already started"));
        }
        let buyer = self.accounts.get(&bid.agent).ok_or(Reject::UnknownSender)?;
        let seller = self.accounts.get(&ask.agent).ok_or(Reject::UnknownSender)?;
        if !t.bid.verify(&buyer.public_key) || !t.ask.verify(&seller.public_key) {
            return Err(Reject::BadSignature);
        }
        if t.seller_price > t.buyer_price || t.buyer_price > bid.limit_price || t.seller_price < ask.limit_price {
            return Err(invalid("price outside order limits"));
        }
        if t.objective.is_some() != (t.direction == Direction::ExtractionReduction) {
            return Err(invalid("objective must accompany exactly the flexibility contracts"));
        }
        for o in [bid, ask] {
            let filled = self.order_fills.get(&o.order_id).copied().unwrap_or(0);
            if filled + t.volume > o.volume {
                return Err(double_spend("order overfilled"));
            }
        }
        if buyer.balance < t.escrow() {
            return Err(double_spend("insufficient balance for escrow"));
        }
        if self.tokens.available(&ask.agent, t.slot, t.direction) < t.volume {
            return Err(double_spend("ecoins not available"));
        }
        Ok(())
    }

    fn mutate(&mut self, tx: &SignedTransaction) {
        self.accounts.get_mut(&tx.sender).expect("validated").nonce = tx.nonce;
        self.tx_count += 1;
        match &tx.payload {
            Payload::Genesis(_) => unreachable!(),
            Payload::Transfer { to, amount } => {
                self.debit(&tx.sender, *amount);
                self.credit(to, *amount);
            }
            Payload::RegisterEcoin { slot, volume, direction } => {
                self.tokens.register(registration_token_id(&tx.tx_id), tx.sender, *slot, *volume, *direction);
            }
            Payload::OpenContract(t) => self.open_contract(&tx.tx_id, t),
            Payload::ProofOfFlow(p) => self.record_pof(p),
            Payload::Settle { contract_id } => self.settle_contract(contract_id),
            Payload::MarketRecord(m) => self.market_records.push(m.clone()),
            Payload::AcquireLease { resource, start, end } => {
                self.leases
                    .acquire(lease_id_for(&tx.tx_id), tx.sender, resource, *start, *end)
                    .expect("validated");
            }
            Payload::ReleaseLease { lease_id, at } => {
                self.leases.release(&tx.sender, lease_id, *at).expect("validated");
            }
        }
    }

    fn debit(&mut self, who: &AgentId, amount: Centi) {
        let a = self.accounts.get_mut(who).expect("known account");
        a.balance = a.balance.checked_sub(amount).expect("validated balance");
    }

    fn credit(&mut self, who: &AgentId, amount: Centi) {
        self.accounts.get_mut(who).expect("known account").balance += amount;
    }

    fn open_contract(&mut self, tx_id: &Hash32, t: &ContractTerms) {
        let contract_id = contract_id_for(tx_id);
        let seq = self.contract_seq;
        self.contract_seq += 1;
        let escrow = t.escrow();
        self.debit(&t.buyer(), escrow);
        for id in [t.bid.order.order_id, t.ask.order.order_id] {
            *self.order_fills.entry(id).or_insert(0) += t.volume;
        }
        self.tokens
            .commit_volume(&t.seller(), t.slot, t.direction, contract_id, t.volume, seq)
            .expect("validated availability");
        self.contracts.insert(
            contract_id,
            TradeContract {
                contract_id,
                market: t.market,
                buyer: t.buyer(),
                seller: t.seller(),
                slot: t.slot,
                direction: t.direction,
                volume: t.volume,
                buyer_price: t.buyer_price,
                seller_price: t.seller_price,
                state: ContractState::Cleared,
                escrow,
                seq,
                buy_order: t.bid.order.order_id,
                sell_order: t.ask.order.order_id,
                objective: t.objective,
                parent: None,
            },
        );
    }

    /// Injection volume `meter` bought locally for `slot`; delivered to it by
    /// other sellers and therefore available to cover its own sales.
    pub fn bought_volume(&self, meter: &AgentId, slot: TimeSlot) -> Wh {
        self.contracts
            .values()
            .filter(|c| c.buyer == *meter && c.slot == slot && c.direction == Direction::Injection)
            .map(|c| c.volume)
            .sum()
    }

    fn record_pof(&mut self, p: &ProofOfFlow) {
        self.pofs.insert((p.meter, p.slot), p.clone());
        let covered = p.measured_injection + self.bought_volume(&p.meter, p.slot);
        self.tokens.mint_on_pof(&p.meter, p.slot, Direction::Injection, covered);
        self.tokens
            .mint_on_pof(&p.meter, p.slot, Direction::ExtractionReduction, p.reduction_delivered);
        let ids: Vec<Hash32> = self
            .contracts
            .values()
            .filter(|c| c.seller == p.meter && c.slot == p.slot && c.state == ContractState::Cleared)
            .map(|c| c.contract_id)
            .collect();
        for id in ids {
            if self.tokens.contract_volumes(&id).2 == 0 {
                self.contracts.get_mut(&id).expect("present").state = ContractState::Verified;
            }
        }
    }

    fn settle_contract(&mut self, id: &Hash32) {
        self.tokens.void_committed(id);
        let (delivered, _, _) = self.tokens.contract_volumes(id);
        let contract = self.contracts[id].clone();
        let shortfall = contract.volume - delivered;
        let retail = self.accounts[&contract.buyer].retail_price;
        let plan = settle(&contract, delivered, shortfall, retail);

        // Seller income first clears outstanding penalty debt.
        let mut income = plan.seller_pay;
        for d in self.debts.iter_mut().filter(|d| d.debtor == contract.seller) {
            if income == 0 {
                break;
            }
            let x = income.min(d.amount);
            d.amount -= x;
            income -= x;
            let creditor = d.creditor;
            self.accounts.get_mut(&creditor).expect("known").balance += x;
        }
        self.debts.retain(|d| d.amount > 0);
        self.credit(&contract.seller, income);
        self.market_fund += plan.market_fund;
        self.credit(&contract.buyer, plan.imbalance.refund);

        let mut record = plan.imbalance.clone();
        let paid = record.penalty.min(self.balance(&contract.seller));
        self.debit(&contract.seller, paid);
        self.credit(&contract.buyer, paid);
        record.penalty_paid = paid;
        if record.penalty > paid {
            self.debts.push(Debt {
                debtor: contract.seller,
                creditor: contract.buyer,
                amount: record.penalty - paid,
                contract_id: *id,
            });
        }

        let minted: Vec<Hash32> = self
            .tokens
            .tokens_of(id)
            .iter()
            .filter(|t| t.status == TokenStatus::Minted)
            .map(|t| t.token_id)
            .collect();
        for t in minted {
            self.tokens.redeem(&t, id, contract.buyer).expect("minted token of this contract");
        }

        let c = self.contracts.get_mut(id).expect("present");
        c.escrow = 0;
        if shortfall == 0 {
            c.state = ContractState::Settled;
        } else if delivered == 0 {
            c.state = ContractState::Defaulted;
        } else {
            c.state = ContractState::Settled;
            c.volume = delivered;
            let leg_id = leg_id_for(id);
            let mut leg = c.clone();
            leg.contract_id = leg_id;
            leg.volume = shortfall;
            leg.state = ContractState::Defaulted;
            leg.parent = Some(*id);
            self.contracts.insert(leg_id, leg);
            self.tokens.rebind_voided(id, leg_id);
            record.contract_id = leg_id;
        }
        if shortfall > 0 {
            self.imbalances.push(record);
        }
    }

    /// Checks every state invariant the ledger promises.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let total = self.total_balances() + self.total_escrow() + self.market_fund;
        if total != self.genesis_supply {
            return Err(violation(
                "currency-conservation",
                format!("balances+escrow+fund = {total}, genesis supply {}", self.genesis_supply),
            ));
        }

        let mut issued: BTreeMap<(AgentId, TimeSlot, Direction), Wh> = BTreeMap::new();
        let mut minted: BTreeMap<(AgentId, TimeSlot, Direction), Wh> = BTreeMap::new();
        let mut ids = BTreeSet::new();
        for t in self.tokens.iter() {
            if !ids.insert(t.token_id) {
                return Err(violation("single-ownership", format!("token {:?} twice", t.token_id)));
            }
            *issued.entry((t.issuer, t.slot, t.direction)).or_insert(0) += t.volume;
            if matches!(t.status, TokenStatus::Minted | TokenStatus::Redeemed) {
                *minted.entry((t.issuer, t.slot, t.direction)).or_insert(0) += t.volume;
            }
            if t.status != TokenStatus::Registered && t.contract_ref.is_none() {
                return Err(violation("token-lifecycle", format!("token {:?} bound to no contract", t.token_id)));
            }
        }
        for ((issuer, slot, dir), vol) in &issued {
            let cap = self.accounts.get(issuer).map_or(0, |a| a.capacity(*dir));
            if *vol > cap {
                return Err(violation(
                    "ecoin-capacity",
                    format!("{issuer:?} slot {slot} {} issued {vol} Wh over capacity {cap}", dir.as_str()),
                ));
            }
        }
        for ((meter, slot, dir), vol) in &minted {
            let Some(p) = self.pofs.get(&(*meter, *slot)) else {
                return Err(violation("minting-bound", format!("{meter:?} slot {slot} minted without proof of flow")));
            };
            let bound = match dir {
                Direction::Injection => p.measured_injection + self.bought_volume(meter, *slot),
                Direction::ExtractionReduction => p.reduction_delivered,
            };
            if *vol > bound {
                return Err(violation(
                    "minting-bound",
                    format!("{meter:?} slot {slot} minted {vol} Wh, proof covers {bound}"),
                ));
            }
        }

        for c in self.contracts.values() {
            let (done, voided, committed) = self.tokens.contract_volumes(&c.contract_id);
            let bad = match c.state {
                ContractState::Settled => c.escrow != 0 || done == 0,
                ContractState::Defaulted => c.escrow != 0 || voided == 0,
                ContractState::Verified => committed != 0,
                ContractState::Cleared => false,
            };
            if bad {
                return Err(violation(
                    "contract-state",
                    format!("contract {:?} is {} but tokens say ({done}, {voided}, {committed})", c.contract_id, c.state.as_str()),
                ));
            }
        }

        let leases: Vec<_> = self.leases.leases.values().filter(|l| l.start < l.end).collect();
        for (i, a) in leases.iter().enumerate() {
            for b in &leases[i + 1..] {
                if a.resource_id == b.resource_id && a.overlaps(b.start, b.end) {
                    return Err(violation(
                        "lease-exclusivity",
                        format!("{} held by {:?} and {:?} at once", a.resource_id, a.holder, b.holder),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Contracts of one market kind, in contract-time order.
    pub fn contracts_of(&self, market: MarketKind) -> Vec<&TradeContract> {
        let mut v: Vec<&TradeContract> = self.contracts.values().filter(|c| c.market == market).collect();
        v.sort_by_key(|c| (c.seq, c.parent.is_some()));
        v
    }
}

fn lease_reject(e: LeaseError) -> Reject {
    match e {
        LeaseError::UnknownResource => invalid("unknown resource"),
        LeaseError::NoPriority => Reject::Unauthorized,
        LeaseError::Empty => invalid("empty lease interval"),
        LeaseError::Conflict => Reject::Conflict,
        LeaseError::UnknownLease => invalid("unknown lease"),
        LeaseError::NotHolder => Reject::NotHolder,
    }
}

impl ClearingView for LedgerState {
    fn balance(&self, agent: &AgentId) -> Centi {
        LedgerState::balance(self, agent)
    }

    fn available(&self, agent: &AgentId, slot: TimeSlot, direction: Direction) -> Wh {
        self.tokens.available(agent, slot, direction)
    }

    fn public_key(&self, agent: &AgentId) -> Option<PublicKey> {
        self.accounts.get(agent).map(|a| a.public_key)
    }
}
