use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::auction::{ContractState, ContractTerms, MarketKind, Order, Side, SignedOrder};
use crate::control::{ControlResource, ResourceKind};
use crate::crypto::{AgentId, Hash32, KeyPair, Signature};
use crate::tokens::{Direction, TokenStatus};
use crate::units::TimeSlot;

pub(crate) struct Fixture {
    pub config: GenesisConfig,
    pub operator: KeyPair,
    pub dso: KeyPair,
    pub households: Vec<KeyPair>,
    pub validators: Vec<KeyPair>,
    pub controllers: Vec<KeyPair>,
}

pub(crate) const TPD: u64 = 2880;

impl Fixture {
    pub fn new(n_validators: usize) -> Self {
        let operator = KeyPair::derive(1, "operator");
        let dso = KeyPair::derive(1, "dso");
        let households: Vec<KeyPair> = (0..3).map(|i| KeyPair::derive(1, &alloc::format!("h{i}"))).collect();
        let validators: Vec<KeyPair> = (0..n_validators).map(|i| KeyPair::derive(1, &alloc::format!("v{i}"))).collect();
        let controllers: Vec<KeyPair> = (0..2).map(|i| KeyPair::derive(1, &alloc::format!("c{i}"))).collect();
        let p = |k: &KeyPair, name: &str, role, balance, cap| Participant {
            name: name.to_string(),
            public_key: k.public_key(),
            role,
            balance,
            retail_price: 15,
            feed_in_tariff: 5,
            injection_capacity: cap,
            reduction_capacity: cap / 2,
        };
        let mut participants = vec![p(&operator, "operator", Role::Operator, 0, 0), p(&dso, "dso", Role::Dso, 500, 0)];
        for (i, h) in households.iter().enumerate() {
            participants.push(p(h, &alloc::format!("h{i}"), Role::Household, 3, 3000));
        }
        for (i, v) in validators.iter().enumerate() {
            participants.push(p(v, &alloc::format!("v{i}"), Role::Validator, 0, 0));
        }
        for (i, c) in controllers.iter().enumerate() {
            participants.push(p(c, &alloc::format!("c{i}"), Role::Controller, 0, 0));
        }
        let config = GenesisConfig {
            chain_id: "test".into(),
            ticks_per_day: TPD,
            round_ticks: 10,
            verify_timeout: 240,
            validators: validators.iter().map(|v| v.agent_id()).collect(),
            participants,
            resources: vec![ControlResource {
                resource_id: "thermostat".into(),
                kind: ResourceKind::EnvironmentVariable,
                scope: None,
                priorities: vec![(controllers[0].agent_id(), 1), (controllers[1].agent_id(), 2)],
            }],
        };
        Fixture { config, operator, dso, households, validators, controllers }
    }

    pub fn state(&self) -> LedgerState {
        LedgerState::genesis(&self.config).unwrap()
    }

    pub fn h(&self, i: usize) -> &KeyPair {
        &self.households[i]
    }

    pub fn fund(&mut self, i: usize, amount: u64) {
        let id = self.households[i].agent_id();
        for p in &mut self.config.participants {
            if p.agent_id() == id {
                p.balance = amount;
            }
        }
    }
}

pub(crate) fn at(time: u64) -> BlockContext {
    BlockContext { height: 1, time }
}

const EARLY: BlockContext = BlockContext { height: 1, time: 0 };

fn slot() -> TimeSlot {
    TimeSlot::new(0, 12)
}

fn after_slot() -> BlockContext {
    let c = crate::market::Calendar { ticks_per_day: TPD, ..Default::default() };
    at(c.slot_end(slot()) + 1)
}

fn signed_order(k: &KeyPair, side: Side, volume: u64, price: u64, direction: Direction) -> SignedOrder {
    let market = if direction == Direction::Injection { MarketKind::DayAhead } else { MarketKind::Flexibility };
    SignedOrder::sign(Order::new(k.agent_id(), side, market, slot(), direction, volume, price, 1), k)
}

fn terms(buyer: &KeyPair, seller: &KeyPair, volume: u64, bp: u64, sp: u64) -> ContractTerms {
    ContractTerms {
        market: MarketKind::DayAhead,
        slot: slot(),
        direction: Direction::Injection,
        volume,
        buyer_price: bp,
        seller_price: sp,
        bid: signed_order(buyer, Side::Bid, volume, bp, Direction::Injection),
        ask: signed_order(seller, Side::Ask, volume, sp, Direction::Injection),
        objective: None,
    }
}

fn register(k: &KeyPair, nonce: u64, volume: u64) -> SignedTransaction {
    SignedTransaction::new(k, nonce, Payload::RegisterEcoin { slot: slot(), volume, direction: Direction::Injection })
}

fn pof(f: &Fixture, nonce: u64, meter: &KeyPair, injection: u64) -> SignedTransaction {
    SignedTransaction::new(
        &f.dso,
        nonce,
        Payload::ProofOfFlow(ProofOfFlow {
            meter: meter.agent_id(),
            slot: slot(),
            measured_injection: injection,
            measured_extraction: 0,
            reduction_delivered: 0,
        }),
    )
}

#[test]
fn zeroed_signature_is_rejected() {
    let f = Fixture::new(1);
    let mut tx = SignedTransaction::new(f.h(0), 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 1 });
    tx.signature = Signature::ZERO;
    tx.tx_id = tx.compute_id();
    assert_eq!(f.state().validate(&tx, EARLY), Err(Reject::BadSignature));
}

#[test]
fn unknown_sender_rejected() {
    let f = Fixture::new(1);
    let stranger = KeyPair::derive(99, "x");
    let tx = SignedTransaction::new(&stranger, 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 1 });
    assert_eq!(f.state().validate(&tx, EARLY), Err(Reject::UnknownSender));
}

#[test]
fn overdraft_is_double_spend() {
    let f = Fixture::new(1);
    let tx = SignedTransaction::new(f.h(0), 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 5 });
    assert!(matches!(f.state().validate(&tx, EARLY), Err(Reject::DoubleSpend(_))));
}

#[test]
fn transfer_conserves_and_replay_fails() {
    let f = Fixture::new(1);
    let mut s = f.state();
    let tx = SignedTransaction::new(f.h(0), 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 2 });
    s.apply(&tx, EARLY).unwrap();
    assert_eq!(s.balance(&f.h(0).agent_id()), 1);
    assert_eq!(s.balance(&f.h(1).agent_id()), 5);
    assert_eq!(s.total_balances(), s.genesis_supply);
    assert_eq!(s.apply(&tx, EARLY), Err(Reject::NonceReplay));
}

#[test]
fn nonces_may_skip_but_not_repeat() {
    let f = Fixture::new(1);
    let mut s = f.state();
    let to = f.h(1).agent_id();
    s.apply(&SignedTransaction::new(f.h(0), 5, Payload::Transfer { to, amount: 1 }), EARLY).unwrap();
    let stale = SignedTransaction::new(f.h(0), 3, Payload::Transfer { to, amount: 1 });
    assert_eq!(s.apply(&stale, EARLY), Err(Reject::NonceReplay));
}

#[test]
fn registration_capacity_bound() {
    let f = Fixture::new(1);
    let mut s = f.state();
    s.apply(&register(f.h(0), 1, 2000), EARLY).unwrap();
    s.apply(&register(f.h(0), 2, 1000), EARLY).unwrap();
    assert!(matches!(s.apply(&register(f.h(0), 3, 100), EARLY), Err(Reject::DoubleSpend(_))));
    assert!(matches!(s.apply(&register(f.h(1), 1, 0), EARLY), Err(Reject::Invalid(_))));
    assert!(matches!(s.apply(&register(f.h(1), 1, 150), EARLY), Err(Reject::Invalid(_))));
}

#[test]
fn duplicate_registration_of_same_availability() {
    let f = Fixture::new(1);
    let mut s = f.state();
    s.apply(&register(f.h(0), 1, 3000), EARLY).unwrap();
    assert!(matches!(s.apply(&register(f.h(0), 2, 3000), EARLY), Err(Reject::DoubleSpend(_))));
}

#[test]
fn only_households_register_and_only_dso_attests() {
    let f = Fixture::new(1);
    let mut s = f.state();
    assert_eq!(s.apply(&register(&f.operator, 1, 100), EARLY), Err(Reject::Unauthorized));
    let fake = SignedTransaction::new(
        f.h(0),
        1,
        Payload::ProofOfFlow(ProofOfFlow {
            meter: f.h(0).agent_id(),
            slot: slot(),
            measured_injection: 9999,
            measured_extraction: 0,
            reduction_delivered: 0,
        }),
    );
    assert_eq!(s.apply(&fake, after_slot()), Err(Reject::Unauthorized));
}

fn opened(f: &Fixture, volume: u64, bp: u64, sp: u64) -> (LedgerState, Hash32) {
    let mut s = f.state();
    s.apply(&register(f.h(0), 1, 3000), EARLY).unwrap();
    let tx = SignedTransaction::new(&f.operator, 1, Payload::OpenContract(terms(f.h(1), f.h(0), volume, bp, sp)));
    s.apply(&tx, EARLY).unwrap();
    (s, state::contract_id_for(&tx.tx_id))
}

#[test]
fn open_contract_escrows_and_commits() {
    let mut f = Fixture::new(1);
    f.fund(1, 100);
    let (s, cid) = opened(&f, 1500, 14, 12);
    let c = &s.contracts[&cid];
    assert_eq!(c.escrow, 21);
    assert_eq!(s.balance(&f.h(1).agent_id()), 79);
    assert_eq!(s.tokens.available(&f.h(0).agent_id(), slot(), Direction::Injection), 1500);
    assert_eq!(s.tokens.contract_volumes(&cid), (0, 0, 1500));
    s.check_invariants().unwrap();
}

#[test]
fn open_contract_requires_funds_and_tokens() {
    let f = Fixture::new(1);
    let mut s = f.state();
    s.apply(&register(f.h(0), 1, 1000), EARLY).unwrap();
    // buyer holds 3, escrow would be 15
    let tx = SignedTransaction::new(&f.operator, 1, Payload::OpenContract(terms(f.h(1), f.h(0), 1000, 15, 10)));
    assert!(matches!(s.apply(&tx, EARLY), Err(Reject::DoubleSpend(_))));
    let mut f = Fixture::new(1);
    f.fund(1, 100);
    let mut s = f.state();
    s.apply(&register(f.h(0), 1, 1000), EARLY).unwrap();
    let tx = SignedTransaction::new(&f.operator, 1, Payload::OpenContract(terms(f.h(1), f.h(0), 2000, 15, 10)));
    assert!(matches!(s.apply(&tx, EARLY), Err(Reject::Invalid(_)) | Err(Reject::DoubleSpend(_))));
}

#[test]
fn open_contract_rejects_tampered_order_and_overfill() {
    let mut f = Fixture::new(1);
    f.fund(1, 1000);
    let mut s = f.state();
    s.apply(&register(f.h(0), 1, 3000), EARLY).unwrap();
    let mut t = terms(f.h(1), f.h(0), 1000, 14, 12);
    t.bid.order.limit_price = 99;
    let tx = SignedTransaction::new(&f.operator, 1, Payload::OpenContract(t));
    assert_eq!(s.apply(&tx, EARLY), Err(Reject::BadSignature));

    let t = terms(f.h(1), f.h(0), 1000, 14, 12);
    s.apply(&SignedTransaction::new(&f.operator, 2, Payload::OpenContract(t.clone())), EARLY).unwrap();
    let again = SignedTransaction::new(&f.operator, 3, Payload::OpenContract(t));
    assert!(matches!(s.apply(&again, EARLY), Err(Reject::DoubleSpend(_))));
}

#[test]
fn full_delivery_settles_and_redeems() {
    let mut f = Fixture::new(1);
    f.fund(1, 100);
    let (mut s, cid) = opened(&f, 1500, 14, 12);
    s.apply(&pof(&f, 1, f.h(0), 1500), after_slot()).unwrap();
    assert_eq!(s.contracts[&cid].state, ContractState::Verified);
    s.apply(&SignedTransaction::new(&f.operator, 2, Payload::Settle { contract_id: cid }), after_slot()).unwrap();
    assert_eq!(s.contracts[&cid].state, ContractState::Settled);
    assert_eq!(s.balance(&f.h(0).agent_id()), 3 + 18);
    assert_eq!(s.market_fund, 3);
    let t = s.tokens.tokens_of(&cid);
    assert!(t.iter().all(|t| t.status == TokenStatus::Redeemed && t.owner == f.h(1).agent_id()));
    s.check_invariants().unwrap();
    let twice = SignedTransaction::new(&f.operator, 3, Payload::Settle { contract_id: cid });
    assert!(matches!(s.apply(&twice, after_slot()), Err(Reject::DoubleSpend(_))));
}

#[test]
fn zero_delivery_refunds_and_penalizes_with_debt() {
    let mut f = Fixture::new(1);
    f.fund(1, 100);
    let (mut s, cid) = opened(&f, 1000, 10, 10);
    s.apply(&pof(&f, 1, f.h(0), 0), after_slot()).unwrap();
    s.apply(&SignedTransaction::new(&f.operator, 2, Payload::Settle { contract_id: cid }), after_slot()).unwrap();
    assert_eq!(s.contracts[&cid].state, ContractState::Defaulted);
    let rec = &s.imbalances[0];
    assert_eq!((rec.refund, rec.penalty), (10, 5));
    // seller held 3: pays 3 now, owes 2
    assert_eq!(rec.penalty_paid, 3);
    assert_eq!(s.balance(&f.h(0).agent_id()), 0);
    assert_eq!(s.balance(&f.h(1).agent_id()), 103);
    assert_eq!(s.debt_of(&f.h(0).agent_id()), 2);
    s.check_invariants().unwrap();
}

#[test]
fn debt_is_repaid_from_later_income() {
    let mut f = Fixture::new(1);
    f.fund(1, 100);
    let (mut s, cid) = opened(&f, 1000, 10, 10);
    s.apply(&pof(&f, 1, f.h(0), 0), after_slot()).unwrap();
    s.apply(&SignedTransaction::new(&f.operator, 2, Payload::Settle { contract_id: cid }), after_slot()).unwrap();
    assert_eq!(s.debt_of(&f.h(0).agent_id()), 2);

    let next = TimeSlot::new(0, 20);
    let reg = SignedTransaction::new(f.h(0), 2, Payload::RegisterEcoin { slot: next, volume: 1000, direction: Direction::Injection });
    s.apply(&reg, after_slot()).unwrap();
    let mut t = terms(f.h(1), f.h(0), 1000, 10, 10);
    t.slot = next;
    t.bid = SignedOrder::sign(Order::new(f.h(1).agent_id(), Side::Bid, MarketKind::DayAhead, next, Direction::Injection, 1000, 10, 2), f.h(1));
    t.ask = SignedOrder::sign(Order::new(f.h(0).agent_id(), Side::Ask, MarketKind::DayAhead, next, Direction::Injection, 1000, 10, 2), f.h(0));
    let open = SignedTransaction::new(&f.operator, 3, Payload::OpenContract(t));
    s.apply(&open, after_slot()).unwrap();
    let cid2 = state::contract_id_for(&open.tx_id);
    let c = crate::market::Calendar { ticks_per_day: TPD, ..Default::default() };
    let later = at(c.slot_end(next) + 1);
    let p = SignedTransaction::new(
        &f.dso,
        4,
        Payload::ProofOfFlow(ProofOfFlow { meter: f.h(0).agent_id(), slot: next, measured_injection: 1000, measured_extraction: 0, reduction_delivered: 0 }),
    );
    s.apply(&p, later).unwrap();
    let buyer_before = s.balance(&f.h(1).agent_id());
    s.apply(&SignedTransaction::new(&f.operator, 5, Payload::Settle { contract_id: cid2 }), later).unwrap();
    assert_eq!(s.debt_of(&f.h(0).agent_id()), 0);
    assert_eq!(s.balance(&f.h(0).agent_id()), 10 - 2);
    assert_eq!(s.balance(&f.h(1).agent_id()), buyer_before + 2);
    s.check_invariants().unwrap();
}

#[test]
fn partial_delivery_splits_legs() {
    let mut f = Fixture::new(1);
    f.fund(1, 100);
    f.fund(0, 100);
    let (mut s, cid) = opened(&f, 2000, 10, 8);
    s.apply(&pof(&f, 1, f.h(0), 1000), after_slot()).unwrap();
    s.apply(&SignedTransaction::new(&f.operator, 2, Payload::Settle { contract_id: cid }), after_slot()).unwrap();
    let parent = &s.contracts[&cid];
    assert_eq!((parent.state, parent.volume), (ContractState::Settled, 1000));
    let leg = &s.contracts[&state::leg_id_for(&cid)];
    assert_eq!((leg.state, leg.volume, leg.parent), (ContractState::Defaulted, 1000, Some(cid)));
    assert_eq!(s.tokens.contract_volumes(&leg.contract_id), (0, 1000, 0));
    assert_eq!(s.imbalances[0].contract_id, leg.contract_id);
    assert_eq!(s.imbalances[0].refund, 10);
    assert_eq!(s.imbalances[0].penalty, 5);
    s.check_invariants().unwrap();
}

#[test]
fn settlement_waits_for_pof_until_timeout() {
    let mut f = Fixture::new(1);
    f.fund(1, 100);
    let (mut s, cid) = opened(&f, 1000, 10, 10);
    let settle = SignedTransaction::new(&f.operator, 2, Payload::Settle { contract_id: cid });
    assert!(matches!(s.validate(&settle, after_slot()), Err(Reject::Invalid(_))));
    let c = crate::market::Calendar { ticks_per_day: TPD, ..Default::default() };
    let late = at(c.slot_end(slot()) + 240);
    s.apply(&settle, late).unwrap();
    assert_eq!(s.contracts[&cid].state, ContractState::Defaulted);
    s.check_invariants().unwrap();
}

#[test]
fn duplicate_pof_rejected_and_pof_waits_for_slot_end() {
    let mut f = Fixture::new(1);
    f.fund(1, 100);
    let (mut s, _) = opened(&f, 1000, 10, 10);
    assert!(matches!(s.apply(&pof(&f, 1, f.h(0), 1000), EARLY), Err(Reject::Invalid(_))));
    s.apply(&pof(&f, 1, f.h(0), 1000), after_slot()).unwrap();
    assert!(matches!(s.apply(&pof(&f, 2, f.h(0), 1000), after_slot()), Err(Reject::DoubleSpend(_))));
}

#[test]
fn leases_through_ledger() {
    let f = Fixture::new(1);
    let mut s = f.state();
    let (a, b) = (&f.controllers[0], &f.controllers[1]);
    let acq = |k: &KeyPair, n, start, end| SignedTransaction::new(k, n, Payload::AcquireLease { resource: "thermostat".into(), start, end });
    let first = acq(a, 1, 100, 200);
    s.apply(&first, EARLY).unwrap();
    // lower-ranked controller cannot take over
    let lid = state::lease_id_for(&first.tx_id);
    let b_first = acq(b, 1, 150, 250);
    s.apply(&b_first, EARLY).unwrap();
    assert_eq!(s.leases.leases[&lid].end, 150);
    assert_eq!(s.apply(&acq(a, 2, 160, 170), EARLY), Err(Reject::Conflict));
    let rel = SignedTransaction::new(a, 3, Payload::ReleaseLease { lease_id: state::lease_id_for(&b_first.tx_id), at: 200 });
    assert_eq!(s.apply(&rel, EARLY), Err(Reject::NotHolder));
    assert_eq!(s.apply(&acq(&f.operator, 1, 0, 10), EARLY), Err(Reject::Unauthorized));
    s.check_invariants().unwrap();
}

// ---- chain ----

fn chain(f: &Fixture) -> Chain {
    Chain::from_config(&f.config).unwrap()
}

#[test]
fn genesis_then_valid_block() {
    let f = Fixture::new(4);
    let mut c = chain(&f);
    assert_eq!(c.height(), 0);
    let s = c.tip_state();
    assert_eq!(s.balance(&f.h(0).agent_id()), 3);
    let (b, rejected) = c.propose(&f.validators[1], 1, &[], 100);
    assert!(rejected.is_empty() && b.transactions.is_empty());
    assert!(matches!(c.append(b), AppendVerdict::Accepted { tip_changed: true, .. }));
    assert_eq!(c.height(), 1);
}

#[test]
fn wrong_parent_and_wrong_proposer() {
    let f = Fixture::new(4);
    let mut c = chain(&f);
    let b = LedgerBlock::new(&f.validators[1], 1, 1, Hash32([9; 32]), vec![]);
    assert_eq!(c.append(b), AppendVerdict::Rejected(BlockReject::BadParent));
    let b = LedgerBlock::new(&f.validators[2], 1, 1, c.tip_hash(), vec![]);
    assert_eq!(c.append(b), AppendVerdict::Rejected(BlockReject::WrongProposer));
}

#[test]
fn proposal_excludes_conflicting_spend() {
    let f = Fixture::new(1);
    let c = chain(&f);
    let t1 = SignedTransaction::new(f.h(0), 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 3 });
    let t2 = SignedTransaction::new(f.h(0), 2, Payload::Transfer { to: f.h(2).agent_id(), amount: 3 });
    let (b, rejected) = c.propose(&f.validators[0], 1, &[t2.clone(), t1.clone()], 100);
    assert_eq!(b.transactions, vec![t1]);
    assert_eq!(rejected.len(), 1);
    assert_eq!(rejected[0].0.tx_id, t2.tx_id);
}

#[test]
fn proposal_picks_up_dependent_transactions() {
    let f = Fixture::new(1);
    let c = chain(&f);
    // h2 can only pay 5 after receiving 3 from h0; h2 sorts first by id or not, either way both land
    let give = SignedTransaction::new(f.h(0), 1, Payload::Transfer { to: f.h(2).agent_id(), amount: 3 });
    let spend = SignedTransaction::new(f.h(2), 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 5 });
    let (b, rejected) = c.propose(&f.validators[0], 1, &[spend, give], 100);
    assert_eq!(b.transactions.len(), 2);
    assert!(rejected.is_empty());
}

#[test]
fn block_with_invalid_tx_rejected() {
    let f = Fixture::new(1);
    let mut c = chain(&f);
    let mut bad = SignedTransaction::new(f.h(0), 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 1 });
    bad.signature = Signature::ZERO;
    bad.tx_id = bad.compute_id();
    let b = LedgerBlock::new(&f.validators[0], 1, 1, c.tip_hash(), vec![bad]);
    assert!(matches!(
        c.append(b),
        AppendVerdict::Rejected(BlockReject::InvalidTxInBlock { index: 0, reason: Reject::BadSignature })
    ));
    assert_eq!(c.height(), 0);
}

#[test]
fn same_transaction_twice_in_chain_is_replay() {
    let f = Fixture::new(1);
    let mut c = chain(&f);
    let t = SignedTransaction::new(f.h(0), 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 1 });
    let b1 = LedgerBlock::new(&f.validators[0], 1, 1, c.tip_hash(), vec![t.clone()]);
    assert!(matches!(c.append(b1), AppendVerdict::Accepted { .. }));
    let b2 = LedgerBlock::new(&f.validators[0], 2, 2, c.tip_hash(), vec![t]);
    assert!(matches!(
        c.append(b2),
        AppendVerdict::Rejected(BlockReject::InvalidTxInBlock { reason: Reject::NonceReplay, .. })
    ));
}

#[test]
fn fork_choice_longest_then_lowest_hash_and_reorg_returns_txs() {
    let f = Fixture::new(2);
    let mut c = chain(&f);
    let g = c.tip_hash();
    let t = SignedTransaction::new(f.h(0), 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 1 });
    let a = LedgerBlock::new(&f.validators[1], 1, 1, g, vec![t.clone()]);
    let b = LedgerBlock::new(&f.validators[0], 1, 2, g, vec![]);
    let (lo, hi) = if a.block_hash < b.block_hash { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
    c.append(hi.clone());
    c.append(lo.clone());
    assert_eq!(c.tip_hash(), lo.block_hash);
    // extend the empty branch: the transfer must come back as abandoned if it was on the tip
    let ext = LedgerBlock::new(&f.validators[1], 2, 3, b.block_hash, vec![]);
    let v = c.append(ext.clone());
    assert_eq!(c.tip_hash(), ext.block_hash);
    if c.main_hash_at(1) == Some(b.block_hash) && lo.block_hash == a.block_hash {
        assert!(matches!(v, AppendVerdict::Accepted { ref abandoned, .. } if abandoned == &vec![t.clone()]));
    }
    assert_eq!(c.tx_height(&t.tx_id), None);
}

#[test]
fn replayed_state_matches_retained_state() {
    let f = Fixture::new(1);
    let mut c = chain(&f);
    for r in 1..200u64 {
        let txs = if r % 3 == 0 {
            vec![SignedTransaction::new(f.h((r % 3) as usize), r, Payload::Transfer { to: f.h(1).agent_id(), amount: 1 })]
        } else {
            vec![]
        };
        let (b, _) = c.propose(&f.validators[0], r, &txs, 10);
        c.append(b);
    }
    let early = c.main_hash_at(5).unwrap();
    let replayed = c.state_at(&early).unwrap();
    assert_eq!(replayed.genesis_supply, c.tip_state().genesis_supply);
    assert_eq!(c.tip_state().total_balances(), c.tip_state().genesis_supply);
}

#[test]
fn blocks_round_trip_through_codec() {
    let f = Fixture::new(1);
    let c = chain(&f);
    use crate::codec::{Decode, Encode};
    let g = c.tip().clone();
    assert_eq!(LedgerBlock::from_bytes(&g.to_bytes()).unwrap(), g);
    let t = SignedTransaction::new(f.h(0), 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 1 });
    let (b, _) = c.propose(&f.validators[0], 1, &[t], 10);
    assert_eq!(LedgerBlock::from_bytes(&b.to_bytes()).unwrap(), b);
}

#[test]
fn validator_nodes_converge_and_skip_byzantine() {
    let f = Fixture::new(4);
    let mut nodes: Vec<ValidatorNode<usize>> = f
        .validators
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let behavior = if i == 2 { ValidatorBehavior::Byzantine } else { ValidatorBehavior::Honest };
            ValidatorNode::new(i, k.clone(), chain(&f), behavior)
        })
        .collect();
    let t = SignedTransaction::new(f.h(0), 1, Payload::Transfer { to: f.h(1).agent_id(), amount: 2 });
    for n in nodes.iter_mut() {
        n.handle(99, LedgerMsg::Tx(t.clone()));
    }
    for round in 1..=40u64 {
        let mut queue: Vec<(usize, Target<usize>, LedgerMsg)> = Vec::new();
        for (i, n) in nodes.iter_mut().enumerate() {
            for (to, m) in n.on_round(round) {
                queue.push((i, to, m));
            }
        }
        while let Some((from, to, m)) = queue.pop() {
            let targets: Vec<usize> = match to {
                Target::AllValidators => (0..4).filter(|&j| j != from).collect(),
                Target::Peer(p) => vec![p],
            };
            for j in targets {
                for (to2, m2) in nodes[j].handle(from, m.clone()) {
                    queue.push((j, to2, m2));
                }
            }
        }
    }
    let tip = nodes[0].chain.tip_hash();
    for n in &nodes {
        assert_eq!(n.chain.tip_hash(), tip);
    }
    assert_eq!(nodes[0].chain.height(), 30);
    assert!(nodes[0].chain.tx_height(&t.tx_id).is_some());
    assert_eq!(nodes[0].stats.blocks_rejected, 10);
    let _ = AgentId::default();
}
