//! Market operator, distribution operator, aggregators and on-premises
//! controllers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use super::node::{Msg, OrderDesk, Out, Outbox};
use super::Ctx;
use crate::agents::{assess_reduction, call_orders, proof_of_flow};
use crate::auction::{clear, MarketKind, Order, OrderBook, Side, SignedOrder, SubmitReject};
use crate::control::{ControlLease, EcaRule};
use crate::crypto::{AgentId, Hash32};
use crate::ledger::{Chain, MarketRecord, Payload, Role};
use crate::market::ObjectiveKind;
use crate::scenario::{AggregatorSpec, ReserveSpec};
use crate::simnet::NodeId;
use crate::tokens::Direction;
use crate::market::calendar::RT_TICKS_PER_SLOT;
use crate::units::{Centi, PricePerKwh, SignedWh, Tick, TimeSlot, Wh};

pub fn direction_of(market: MarketKind) -> Direction {
    match market {
        MarketKind::Flexibility => Direction::ExtractionReduction,
        _ => Direction::Injection,
    }
}

/// One cleared book.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoundRow {
    pub market: &'static str,
    pub slot: u32,
    pub day: u32,
    pub hour: u32,
    pub close_tick: Tick,
    pub bids: u32,
    pub asks: u32,
    pub traded_volume: Wh,
    pub buyer_price: PricePerKwh,
    pub seller_price: PricePerKwh,
    pub surplus: Centi,
    pub excluded: u32,
    pub contracts: u32,
}

/// Runs the books and settles.
pub struct Operator {
    pub node: NodeId,
    pub out: Outbox,
    books: BTreeMap<(MarketKind, TimeSlot), OrderBook>,
    pub rounds: Vec<RoundRow>,
}

impl Operator {
    pub fn new(node: NodeId, out: Outbox) -> Self {
        Operator { node, out, books: BTreeMap::new(), rounds: Vec::new() }
    }

    pub fn open(&mut self, market: MarketKind, slot: TimeSlot) {
        self.books.entry((market, slot)).or_insert_with(|| OrderBook::new(market, slot, direction_of(market)));
    }

    pub fn on_order(&mut self, view: &Chain, from: NodeId, signed: SignedOrder) -> Vec<Out> {
        let order_id = signed.order.order_id;
        let state = view.tip_state();
        let result = match self.books.get_mut(&(signed.order.market, signed.order.slot)) {
            Some(book) => book.submit(signed, &*state).map(|a| a.arrival_seq),
            None => Err(SubmitReject::RoundClosed),
        };
        alloc::vec![Out::To(from, Msg::OrderAck { order_id, result })]
    }

    /// Whether anyone is buying flexibility for `slot`.
    pub fn has_call(&self, slot: TimeSlot) -> bool {
        self.books
            .get(&(MarketKind::Flexibility, slot))
            .is_some_and(|b| b.orders().iter().any(|o| o.side == Side::Bid))
    }

    /// Closes, clears and records one book.
    pub fn close(&mut self, ctx: &Ctx<'_>, view: &Chain, market: MarketKind, slot: TimeSlot) -> Vec<Out> {
        let Some(mut book) = self.books.remove(&(market, slot)) else { return Vec::new() };
        book.close();
        let state = view.tip_state();
        let outcome = clear(&book, &*state);
        let r = &outcome.result;
        let mut out = Vec::new();
        let deadline = ctx.cal.slot_start(slot);
        for mut terms in outcome.contracts.clone() {
            if terms.direction == Direction::ExtractionReduction {
                let buyer_role = state.accounts.get(&terms.buyer()).map(|a| a.role);
                terms.objective = Some(if buyer_role == Some(Role::Dso) {
                    ObjectiveKind::DsoCurve
                } else {
                    ObjectiveKind::BaselineReduction
                });
            }
            out.push(Out::Tx(self.out.submit(Payload::OpenContract(terms), &state, ctx.now, deadline)));
        }
        let record = MarketRecord {
            market,
            slot,
            direction: book.direction,
            close_tick: ctx.now,
            bids: r.bids,
            asks: r.asks,
            traded_volume: r.traded_volume(),
            buyer_price: r.buyer_price,
            seller_price: r.seller_price,
            surplus: r.market_surplus,
            excluded: outcome.excluded.len() as u32,
        };
        out.push(Out::Tx(self.out.submit(Payload::MarketRecord(record.clone()), &state, ctx.now, ctx.end)));
        self.rounds.push(RoundRow {
            market: market.as_str(),
            slot: slot.0,
            day: slot.day(),
            hour: slot.hour(),
            close_tick: ctx.now,
            bids: record.bids,
            asks: record.asks,
            traded_volume: record.traded_volume,
            buyer_price: record.buyer_price,
            seller_price: record.seller_price,
            surplus: record.surplus,
            excluded: record.excluded,
            contracts: outcome.contracts.len() as u32,
        });
        out
    }

    /// Settles every contract whose slot is past settlement time and that
    /// is verified or out of time.
    pub fn sweep(&mut self, ctx: &Ctx<'_>, view: &Chain) -> Vec<Out> {
        let mut out: Vec<Out> = self.out.poll(view, ctx.now, ctx.resend).into_iter().map(Out::Tx).collect();
        let state = view.tip_state();
        let pending: BTreeSet<Hash32> = self
            .out
            .pending()
            .filter_map(|p| match p {
                Payload::Settle { contract_id } => Some(*contract_id),
                _ => None,
            })
            .collect();
        let due: Vec<Hash32> = state
            .contracts
            .values()
            .filter(|c| !c.state.is_final() && ctx.now >= ctx.cal.settle_time(c.slot) && !pending.contains(&c.contract_id))
            .filter(|c| {
                state.tokens.contract_volumes(&c.contract_id).2 == 0 || ctx.now >= ctx.cal.verify_deadline(c.slot)
            })
            .map(|c| c.contract_id)
            .collect();
        for contract_id in due {
            out.push(Out::Tx(self.out.submit(Payload::Settle { contract_id }, &state, ctx.now, ctx.end)));
        }
        out
    }
}

/// The distribution operator: meter attestation and reserve purchases.
pub struct Dso {
    pub node: NodeId,
    pub out: Outbox,
    pub desk: OrderDesk,
    seq: u64,
    pub reserves: Vec<ReserveSpec>,
    pub withheld: u64,
}

impl Dso {
    pub fn new(node: NodeId, out: Outbox, reserves: Vec<ReserveSpec>) -> Self {
        Dso { node, out, desk: OrderDesk::default(), seq: 0, reserves, withheld: 0 }
    }

    pub fn da_open(&mut self, ctx: &Ctx<'_>, day: u32) -> Vec<Out> {
        let agent = self.out.agent();
        let mut out = Vec::new();
        for r in self.reserves.iter().filter(|r| r.day == day) {
            let slot = TimeSlot::new(day, r.hour);
            self.seq += 1;
            let mut orders = call_orders(agent, &[slot], r.volume, r.price_cap, self.seq);
            for o in orders.drain(..) {
                let close = ctx.cal.intraday_close(slot);
                let s = self.desk.submit(SignedOrder::sign(o, self.out.key()), close, ctx.now);
                out.push(Out::To(ctx.operator, Msg::Order(s)));
            }
        }
        out
    }

    /// Proofs of flow for every meter in `slot`. `meters[i]` is the tick
    /// series of meter `agents[i]`; `skip` lists meters with no reading.
    pub fn pof(
        &mut self,
        ctx: &Ctx<'_>,
        view: &Chain,
        slot: TimeSlot,
        agents: &[AgentId],
        meters: &[Vec<SignedWh>],
        skip: &BTreeSet<usize>,
    ) -> Vec<Out> {
        let state = view.tip_state();
        let mut contracted: BTreeMap<(AgentId, TimeSlot), (Wh, bool)> = BTreeMap::new();
        for c in state.contracts.values() {
            if c.direction == Direction::ExtractionReduction && c.parent.is_none() && c.slot <= slot {
                let e = contracted.entry((c.seller, c.slot)).or_insert((0, false));
                e.0 += c.volume;
                e.1 |= c.objective == Some(ObjectiveKind::DsoCurve);
            }
        }
        let per = RT_TICKS_PER_SLOT as usize;
        let mut out = Vec::new();
        for (i, agent) in agents.iter().enumerate() {
            if skip.contains(&i) {
                self.withheld += 1;
                continue;
            }
            let lo = slot.0 as usize * per;
            let hist = &meters[i][..lo + per];
            let reduction = match contracted.get(&(*agent, slot)) {
                Some(&(volume, curve)) => {
                    let mut first = slot;
                    while first.0 > 0 && contracted.contains_key(&(*agent, TimeSlot(first.0 - 1))) {
                        first = TimeSlot(first.0 - 1);
                    }
                    let kind = if curve { ObjectiveKind::DsoCurve } else { ObjectiveKind::BaselineReduction };
                    let event = first.0 as usize * per..lo + per;
                    assess_reduction(hist, event, lo..lo + per, volume, kind, ctx.sc.tolerance_wh).delivered
                }
                None => 0,
            };
            let p = proof_of_flow(*agent, slot, &hist[lo..], reduction);
            out.push(Out::Tx(self.out.submit(Payload::ProofOfFlow(p), &state, ctx.now, ctx.end)));
        }
        out
    }
}

pub struct Aggregator {
    pub node: NodeId,
    pub key_out: Outbox,
    pub desk: OrderDesk,
    pub spec: AggregatorSpec,
    seq: u64,
}

impl Aggregator {
    pub fn new(node: NodeId, key_out: Outbox, spec: AggregatorSpec) -> Self {
        Aggregator { node, key_out, desk: OrderDesk::default(), spec, seq: 0 }
    }

    pub fn da_open(&mut self, ctx: &Ctx<'_>, day: u32) -> Vec<Out> {
        let agent = self.key_out.agent();
        let mut out = Vec::new();
        let calls: Vec<_> = self.spec.calls.iter().filter(|c| c.day == day).cloned().collect();
        for c in calls {
            let slots: Vec<TimeSlot> = (c.first_hour..=c.last_hour).map(|h| TimeSlot::new(day, h)).collect();
            let orders: Vec<Order> = call_orders(agent, &slots, c.target, c.price_cap, self.seq + 1);
            self.seq += slots.len() as u64;
            for o in orders {
                let close = ctx.cal.intraday_close(o.slot);
                let s = self.desk.submit(SignedOrder::sign(o, self.key_out.key()), close, ctx.now);
                out.push(Out::To(ctx.operator, Msg::Order(s)));
            }
        }
        out
    }
}

/// A local controller sharing a resource with the HEMS.
pub struct Controller {
    pub household: usize,
    pub node: NodeId,
    pub name: String,
    pub out: Outbox,
    pub rules: Vec<EcaRule>,
    pub resource: String,
}

impl Controller {
    pub fn agent(&self) -> AgentId {
        self.out.agent()
    }

    /// Keeps a lease on the resource whenever nobody else holds it.
    pub fn maintain(&mut self, ctx: &Ctx<'_>, hub: &Chain) -> Vec<Out> {
        let mut out: Vec<Out> = self.out.poll(hub, ctx.now, ctx.resend).into_iter().map(Out::HubTx).collect();
        if self.out.pending().any(|p| matches!(p, Payload::AcquireLease { .. })) {
            return out;
        }
        let state = hub.tip_state();
        let me = self.agent();
        let mut start = ctx.now + ctx.lead;
        let held = |t: Tick| -> Option<ControlLease> { state.leases.holder_at(&self.resource, t).cloned() };
        if held(start).is_some_and(|l| l.holder == me) {
            return out;
        }
        while let Some(l) = held(start) {
            if l.holder == me {
                return out;
            }
            start = l.end;
        }
        let tpd = ctx.cal.ticks_per_day;
        let mut end = (start / tpd + 1) * tpd;
        for l in state.leases.leases.values() {
            if l.resource_id == self.resource && l.holder != me && l.start > start && l.start < l.end {
                end = end.min(l.start);
            }
        }
        if end >= start + ctx.cal.rt_tick() {
            let payload = Payload::AcquireLease { resource: self.resource.clone(), start, end };
            out.push(Out::HubTx(self.out.submit(payload, &state, ctx.now, start)));
        }
        out
    }
}
