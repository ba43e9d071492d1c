//! The household node: home energy management and trading.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use super::node::{Msg, OrderDesk, Out, Outbox};
use super::Ctx;
use crate::agents::{
    ask_limit, bid_limit, forecast_day, intraday_estimate, price_expectation, schedule_day, DayTrace, Schedule,
    SlotPrice,
};
use crate::auction::{MarketKind, Order, Side, SignedOrder};
use crate::crypto::AgentId;
use crate::ledger::{Chain, LedgerState, Payload};
use crate::market::absorb_deviation;
use crate::scenario::{HouseholdSpec, Scenario};
use crate::simnet::NodeId;
use crate::tokens::Direction;
use crate::units::{floor_to_unit, SignedWh, Tick, TimeSlot, Wh, SLOTS_PER_DAY};

const HOURS: usize = SLOTS_PER_DAY as usize;

/// One delivery day as the household sees it.
#[derive(Clone, Debug)]
pub struct DayPlan {
    pub day: u32,
    pub forecast: DayTrace,
    /// What will happen, before any unforeseeable derating.
    pub realized: DayTrace,
    pub pv_physical: Vec<Wh>,
    pub device: Wh,
    pub schedule: Schedule,
    pub da_net: Vec<SignedWh>,
    pub da_orders: Vec<Order>,
    pub deviation: Vec<SignedWh>,
    pub storage_adjust: Vec<SignedWh>,
    pub id_orders: Vec<Option<Order>>,
    /// Built by the engine for a node that never planned the day.
    pub fallback: bool,
}

impl DayPlan {
    pub fn build(spec: &HouseholdSpec, sc: &Scenario, day: u32, history: &[Option<SlotPrice>], soc0: Wh) -> Self {
        let p = &spec.profile;
        let f = forecast_day(p, &spec.name, day, sc.seed);
        let mut pv_physical = f.realized.pv.clone();
        for d in sc.events.pv_derate.iter().filter(|d| d.household == spec.name && d.day == day) {
            for v in &mut pv_physical {
                *v = *v * d.numerator / d.denominator;
            }
        }
        let device = p.device_load();
        let prices = price_expectation(history, p.retail_price, p.feed_in_tariff);
        let base = f.forecast.base_net(device);
        let schedule = schedule_day(&p.appliances, p.storage.as_ref(), soc0, &base, &prices);
        let da_net = schedule.net(&base, p.storage.as_ref());
        DayPlan {
            day,
            forecast: f.forecast,
            realized: f.realized,
            pv_physical,
            device,
            schedule,
            da_net,
            da_orders: Vec::new(),
            deviation: vec![0; HOURS],
            storage_adjust: vec![0; HOURS],
            id_orders: vec![None; HOURS],
            fallback: false,
        }
    }

    pub fn appliance_energy(&self, h: usize) -> Wh {
        let mut e = 0;
        for r in &self.schedule.runs {
            for (&s, &x) in r.slots.iter().zip(&r.energy) {
                if s as usize == h {
                    e += x;
                }
            }
        }
        e
    }

    pub fn storage_flow(&self, h: usize, spec: &HouseholdSpec) -> SignedWh {
        match (&self.schedule.storage, &spec.profile.storage) {
            (Some(plan), Some(s)) => plan.flow(h, s),
            _ => 0,
        }
    }

    /// Expected net position with everything except derating and
    /// curtailment, positive for surplus.
    pub fn realized_net(&self, h: usize, spec: &HouseholdSpec) -> SignedWh {
        self.realized.pv[h] as SignedWh
            - (self.realized.load[h] + self.device + self.appliance_energy(h)) as SignedWh
            - self.storage_flow(h, spec)
    }
}

pub fn close_of(ctx: &Ctx<'_>, market: MarketKind, slot: TimeSlot) -> Tick {
    match market {
        MarketKind::DayAhead => ctx.cal.day_ahead_close(slot.day()),
        MarketKind::Intraday | MarketKind::Flexibility => ctx.cal.intraday_close(slot),
    }
}

pub struct Household {
    pub node: NodeId,
    pub agent: AgentId,
    pub spec: HouseholdSpec,
    pub out: Outbox,
    pub hems: Option<Outbox>,
    pub desk: OrderDesk,
    seq: u64,
    pub plans: BTreeMap<u32, DayPlan>,
    waiting: Vec<Order>,
    reg_target: BTreeMap<(TimeSlot, Direction), Wh>,
    pub flex_offered: BTreeSet<TimeSlot>,
    lease_pending: BTreeSet<TimeSlot>,
}

impl Household {
    pub fn new(node: NodeId, spec: HouseholdSpec, out: Outbox, hems: Option<Outbox>) -> Self {
        Household {
            node,
            agent: out.agent(),
            spec,
            out,
            hems,
            desk: OrderDesk::default(),
            seq: 0,
            plans: BTreeMap::new(),
            waiting: Vec::new(),
            reg_target: BTreeMap::new(),
            flex_offered: BTreeSet::new(),
            lease_pending: BTreeSet::new(),
        }
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn order(&mut self, side: Side, market: MarketKind, slot: TimeSlot, direction: Direction, volume: Wh, limit: u64) -> Order {
        let seq = self.next_seq();
        Order::new(self.agent, side, market, slot, direction, volume, limit, seq)
    }

    fn send_order(&mut self, ctx: &Ctx<'_>, o: Order) -> Out {
        let close = close_of(ctx, o.market, o.slot);
        let signed = self.desk.submit(SignedOrder::sign(o, self.out.key()), close, ctx.now);
        Out::To(ctx.operator, Msg::Order(signed))
    }

    /// Registers whatever tokens the ask still needs and parks it until the
    /// registration is visible. Returns the volume actually offered.
    fn offer(&mut self, ctx: &Ctx<'_>, state: &LedgerState, mut o: Order, out: &mut Vec<Out>) -> Wh {
        let key = (o.slot, o.direction);
        let issued = state.tokens.issued_volume(&self.agent, o.slot, o.direction);
        let available = state.tokens.available(&self.agent, o.slot, o.direction);
        let target = self.reg_target.get(&key).copied().unwrap_or(0).max(issued);
        let pending = target - issued;
        let cap = state.accounts.get(&self.agent).map_or(0, |a| a.capacity(o.direction));
        let room = cap.saturating_sub(target);
        let extra = floor_to_unit(o.volume.saturating_sub(available + pending).min(room));
        o.volume = floor_to_unit(o.volume.min(available + pending + extra));
        if o.volume == 0 {
            return 0;
        }
        if extra > 0 {
            let payload = Payload::RegisterEcoin { slot: o.slot, volume: extra, direction: o.direction };
            let deadline = ctx.cal.slot_start(o.slot);
            out.push(Out::Tx(self.out.submit(payload, state, ctx.now, deadline)));
        }
        self.reg_target.insert(key, target + extra);
        let v = o.volume;
        self.waiting.push(o);
        v
    }

    fn price_history(&self, state: &LedgerState, day: u32) -> Vec<Option<SlotPrice>> {
        let mut h = vec![None; HOURS];
        if day == 0 {
            return h;
        }
        for r in &state.market_records {
            if r.market == MarketKind::DayAhead && r.slot.day() == day - 1 && r.traded_volume > 0 {
                h[r.slot.hour() as usize] = Some(SlotPrice { buy: r.buyer_price, sell: r.seller_price });
            }
        }
        h
    }

    /// Day-ahead session open for delivery day `day`.
    pub fn da_open(&mut self, ctx: &Ctx<'_>, view: &Chain, day: u32) -> Vec<Out> {
        let state = view.tip_state();
        let mut soc0 = self.spec.profile.storage.as_ref().map_or(0, |s| s.initial);
        if day > 0 {
            if let Some(prev) = self.plans.get_mut(&(day - 1)) {
                if let Some(sp) = &mut prev.schedule.storage {
                    soc0 = sp.final_soc();
                    sp.reserve = soc0;
                }
            }
        }
        let history = self.price_history(&state, day);
        let mut plan = DayPlan::build(&self.spec, ctx.sc, day, &history, soc0);
        let p = &self.spec.profile;
        let (retail, fit) = (p.retail_price, p.feed_in_tariff);
        let mut out = Vec::new();
        let mut orders = Vec::new();
        for h in 0..HOURS {
            let n = plan.da_net[h];
            let slot = TimeSlot::new(day, h as u32);
            if n > 0 {
                let v = floor_to_unit(n as Wh);
                if v > 0 {
                    let o = self.order(Side::Ask, MarketKind::DayAhead, slot, Direction::Injection, v, ask_limit(fit, ctx.sc.margins));
                    let offered = self.offer(ctx, &state, o.clone(), &mut out);
                    if offered > 0 {
                        orders.push(Order { volume: offered, ..o });
                        if self.spec.byzantine {
                            let cap = state.accounts.get(&self.agent).map_or(0, |a| a.injection_capacity);
                            let dup = Payload::RegisterEcoin { slot, volume: floor_to_unit(cap), direction: Direction::Injection };
                            out.push(Out::Tx(self.out.sign(dup, &state)));
                        }
                    }
                }
            } else {
                let v = floor_to_unit(n.unsigned_abs());
                if v > 0 {
                    let o = self.order(Side::Bid, MarketKind::DayAhead, slot, Direction::Injection, v, bid_limit(retail, ctx.sc.margins));
                    orders.push(o.clone());
                    out.push(self.send_order(ctx, o));
                }
            }
        }
        plan.da_orders = orders;
        self.plans.insert(day, plan);
        out
    }

    /// Intraday session open for `slot`: re-forecast, lean on storage, trade
    /// the rest.
    pub fn id_open(&mut self, ctx: &Ctx<'_>, view: &Chain, slot: TimeSlot) -> Vec<Out> {
        let h = slot.hour() as usize;
        let Some(plan) = self.plans.get_mut(&slot.day()) else { return Vec::new() };
        let da = plan.da_net[h];
        let dev = intraday_estimate(da, plan.realized_net(h, &self.spec)) - da;
        let mut achieved = 0;
        if let (Some(sp), Some(s)) = (&mut plan.schedule.storage, &self.spec.profile.storage) {
            let a = absorb_deviation(dev, sp.headroom(h, s));
            if a.storage != 0 {
                achieved = sp.adjust(h, a.storage, s);
            }
        }
        plan.deviation[h] = dev;
        plan.storage_adjust[h] = achieved;
        let residual = dev - achieved;
        let p = &self.spec.profile;
        let (retail, fit) = (p.retail_price, p.feed_in_tariff);
        let state = view.tip_state();
        let mut out = Vec::new();
        let v = floor_to_unit(residual.unsigned_abs());
        if v == 0 {
            return out;
        }
        let o = if residual > 0 {
            let o = self.order(Side::Ask, MarketKind::Intraday, slot, Direction::Injection, v, ask_limit(fit, ctx.sc.margins));
            let offered = self.offer(ctx, &state, o.clone(), &mut out);
            if offered == 0 {
                return out;
            }
            Order { volume: offered, ..o }
        } else {
            let o = self.order(Side::Bid, MarketKind::Intraday, slot, Direction::Injection, v, bid_limit(retail, ctx.sc.margins));
            out.push(self.send_order(ctx, o.clone()));
            o
        };
        if let Some(plan) = self.plans.get_mut(&slot.day()) {
            plan.id_orders[h] = Some(o);
        }
        out
    }

    pub fn on_msg(&mut self, ctx: &Ctx<'_>, view: &Chain, msg: Msg) -> Vec<Out> {
        match msg {
            Msg::OrderAck { order_id, result } => {
                self.desk.ack(&order_id, &result);
                Vec::new()
            }
            Msg::FlexCall { slot } => self.on_flex_call(ctx, view, slot),
            _ => Vec::new(),
        }
    }

    fn on_flex_call(&mut self, ctx: &Ctx<'_>, view: &Chain, slot: TimeSlot) -> Vec<Out> {
        let Some(dev) = self.spec.profile.flex_device.clone() else { return Vec::new() };
        if self.flex_offered.contains(&slot) || ctx.now + ctx.lead >= ctx.cal.intraday_close(slot) {
            return Vec::new();
        }
        let v = floor_to_unit(dev.load);
        if v == 0 {
            return Vec::new();
        }
        self.flex_offered.insert(slot);
        let state = view.tip_state();
        let o = self.order(Side::Ask, MarketKind::Flexibility, slot, Direction::ExtractionReduction, v, dev.ask_price);
        let mut out = Vec::new();
        self.offer(ctx, &state, o, &mut out);
        out
    }

    /// Reduction contracted for `slot` as far as `state` shows.
    pub fn contracted_reduction(&self, state: &LedgerState, slot: TimeSlot) -> Wh {
        if !self.flex_offered.contains(&slot) {
            return 0;
        }
        state
            .contracts
            .values()
            .filter(|c| c.seller == self.agent && c.slot == slot && c.direction == Direction::ExtractionReduction && c.parent.is_none())
            .map(|c| c.volume)
            .sum()
    }

    /// Periodic housekeeping: rebroadcasts, parked asks, resent orders,
    /// and control leases for contracted reductions.
    pub fn poll(&mut self, ctx: &Ctx<'_>, view: &Chain, hub: Option<&Chain>) -> Vec<Out> {
        let mut out: Vec<Out> = self.out.poll(view, ctx.now, ctx.resend).into_iter().map(Out::Tx).collect();
        let state = view.tip_state();

        let waiting = core::mem::take(&mut self.waiting);
        for o in waiting {
            if ctx.now >= close_of(ctx, o.market, o.slot) {
                continue;
            }
            let issued = state.tokens.issued_volume(&self.agent, o.slot, o.direction);
            if issued >= self.reg_target.get(&(o.slot, o.direction)).copied().unwrap_or(0) {
                out.push(self.send_order(ctx, o));
            } else {
                self.waiting.push(o);
            }
        }
        for s in self.desk.poll(ctx.now, ctx.resend) {
            out.push(Out::To(ctx.operator, Msg::Order(s)));
        }

        if let (Some(hems), Some(hub), Some(control)) = (&mut self.hems, hub, &self.spec.control) {
            out.extend(hems.poll(hub, ctx.now, ctx.resend).into_iter().map(Out::HubTx));
            let upcoming: Vec<TimeSlot> = self
                .flex_offered
                .iter()
                .copied()
                .filter(|s| !self.lease_pending.contains(s) && ctx.now + ctx.lead <= ctx.cal.slot_start(*s))
                .collect();
            let hub_state = hub.tip_state();
            for slot in upcoming {
                let contracted = state.contracts.values().any(|c| {
                    c.seller == self.agent && c.slot == slot && c.direction == Direction::ExtractionReduction
                });
                if contracted {
                    self.lease_pending.insert(slot);
                    let payload = Payload::AcquireLease {
                        resource: control.resource.clone(),
                        start: ctx.cal.slot_start(slot),
                        end: ctx.cal.slot_end(slot),
                    };
                    out.push(Out::HubTx(hems.submit(payload, &hub_state, ctx.now, ctx.cal.slot_start(slot))));
                }
            }
        }
        out
    }
}
