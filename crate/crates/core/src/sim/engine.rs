use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::actors::{Aggregator, Controller, Dso, Operator};
use super::household::{DayPlan, Household};
use super::node::{Msg, Out, Outbox};
use super::report::{self, ControlRow};
use super::{Ctx, RunOptions, RunOutput};
use crate::agents::spread;
use crate::auction::MarketKind;
use crate::control::{execute_eca, Action, ControlResource, EcaRule, Event, Outcome};
use crate::crypto::{AgentId, KeyPair};
use crate::ledger::{
    Chain, GenesisConfig, LedgerBlock, LedgerMsg, Participant, Role, Target, ValidatorBehavior, ValidatorNode,
};
use crate::market::calendar::RT_TICKS_PER_SLOT;
use crate::scenario::{controller_name, hub_name, validator_name, Scenario, DSO, OPERATOR};
use crate::simnet::{Envelope, NetConfig, NodeFault, NodeId, Partition, SimNet};
use crate::units::{floor_to_unit, SignedWh, Tick, TimeSlot, Wh, SLOTS_PER_DAY};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Timer {
    Round,
    RealTime,
    DaOpen(u32),
    DaClose(u32),
    IdOpen(TimeSlot),
    IdClose(TimeSlot),
    Pof(TimeSlot),
    Poll,
}

impl Timer {
    fn phase(self) -> u8 {
        match self {
            Timer::Round => 0,
            Timer::RealTime => 1,
            Timer::Poll => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum Kind {
    Validator(usize),
    Operator,
    Dso,
    Aggregator(usize),
    Household(usize),
    Hub(usize),
    Controller(usize),
}

pub(super) struct Hub {
    pub node: NodeId,
    pub household: usize,
    pub resource: String,
    pub v: ValidatorNode<NodeId>,
}

pub(super) struct Engine<'a> {
    pub sc: &'a Scenario,
    pub now: Tick,
    pub start: Tick,
    pub end: Tick,
    pub round_ticks: Tick,
    resend: Tick,
    lead: Tick,
    pub net: SimNet<Msg>,
    timers: BTreeMap<(Tick, u8, u64), Timer>,
    tseq: u64,
    pub names: Vec<String>,
    kinds: Vec<Kind>,
    pub validators: Vec<ValidatorNode<NodeId>>,
    validator_nodes: Vec<NodeId>,
    pub hubs: Vec<Hub>,
    hub_of: Vec<Option<usize>>,
    pub operator: Operator,
    pub dso: Dso,
    pub aggregators: Vec<Aggregator>,
    pub households: Vec<Household>,
    pub controllers: Vec<Controller>,
    pub meters: Vec<Vec<SignedWh>>,
    curtail: Vec<Wh>,
    pub curtailed: Vec<BTreeMap<TimeSlot, Wh>>,
    pub control_log: Vec<ControlRow>,
    pub agent_names: BTreeMap<AgentId, String>,
    pub crash: BTreeMap<NodeId, Tick>,
    pub byzantine: BTreeSet<usize>,
}

fn signed_spread(v: SignedWh, k: usize) -> SignedWh {
    let s = spread(v.unsigned_abs(), RT_TICKS_PER_SLOT as usize)[k] as SignedWh;
    if v < 0 {
        -s
    } else {
        s
    }
}

impl<'a> Engine<'a> {
    fn new(sc: &'a Scenario, opts: RunOptions) -> Self {
        let cal = &sc.calendar;
        let names = sc.node_names();
        let ids: BTreeMap<String, NodeId> = names.iter().enumerate().map(|(i, n)| (n.clone(), NodeId(i as u32))).collect();
        let key = |n: &str| KeyPair::derive(sc.seed, n);
        let round_ticks = sc.round_ticks();
        let nv = sc.validators.count as usize;
        let verify_timeout = cal.minutes(cal.verify_timeout_min);
        let mut agent_names = BTreeMap::new();

        let participant = |name: &str, role: Role, balance| Participant {
            name: name.into(),
            public_key: key(name).public_key(),
            role,
            balance,
            retail_price: 0,
            feed_in_tariff: 0,
            injection_capacity: 0,
            reduction_capacity: 0,
        };
        let mut participants = Vec::new();
        for i in 0..nv {
            participants.push(participant(&validator_name(i), Role::Validator, 0));
        }
        participants.push(participant(OPERATOR, Role::Operator, sc.operator_balance));
        participants.push(participant(DSO, Role::Dso, sc.dso.balance));
        for a in &sc.aggregators {
            participants.push(participant(&a.name, Role::Aggregator, a.balance));
        }
        for h in &sc.households {
            let p = &h.profile;
            participants.push(Participant {
                retail_price: p.retail_price,
                feed_in_tariff: p.feed_in_tariff,
                injection_capacity: floor_to_unit(p.injection_capacity()),
                reduction_capacity: floor_to_unit(p.device_load()),
                ..participant(&h.name, Role::Household, h.balance)
            });
        }
        for p in &participants {
            agent_names.insert(p.agent_id(), p.name.clone());
        }
        let genesis = GenesisConfig {
            chain_id: format!("vdg:{}", sc.name),
            ticks_per_day: cal.ticks_per_day,
            round_ticks,
            verify_timeout,
            validators: (0..nv).map(|i| key(&validator_name(i)).agent_id()).collect(),
            participants,
            resources: Vec::new(),
        };

        let mut crash = BTreeMap::new();
        let mut byzantine = BTreeSet::new();
        let mut validators = Vec::new();
        let mut validator_nodes = Vec::new();
        for i in 0..nv {
            let behavior = if sc.validators.byzantine.contains(&(i as u32)) {
                byzantine.insert(i);
                ValidatorBehavior::Byzantine
            } else {
                ValidatorBehavior::Honest
            };
            let mut chain = Chain::from_config(&genesis).expect("scenario genesis is valid");
            chain.check_signatures = !sc.validators.unchecked_signatures;
            validators.push(ValidatorNode::new(i, key(&validator_name(i)), chain, behavior));
            validator_nodes.push(ids[&validator_name(i)]);
        }
        for c in &sc.validators.crashed {
            crash.insert(ids[&validator_name(c.index as usize)], sc.ticks(c.at_s));
        }

        let rt = cal.rt_tick();
        let base_delay = sc.ticks(sc.network.base_delay_s).max(1);
        let jitter = sc.ticks(sc.network.jitter_s);
        let resend = 4 * round_ticks + 2 * (base_delay + jitter);
        let lead = rt.max(3 * round_ticks + 2 * (base_delay + jitter));

        let mut kinds = vec![Kind::Operator; names.len()];
        for (i, n) in validator_nodes.iter().enumerate() {
            kinds[n.0 as usize] = Kind::Validator(i);
        }
        kinds[ids[DSO].0 as usize] = Kind::Dso;
        let operator = Operator::new(ids[OPERATOR], Outbox::new(key(OPERATOR)));
        let dso = Dso::new(ids[DSO], Outbox::new(key(DSO)), sc.dso.reserves.clone());
        let mut aggregators = Vec::new();
        for (j, a) in sc.aggregators.iter().enumerate() {
            kinds[ids[&a.name].0 as usize] = Kind::Aggregator(j);
            aggregators.push(Aggregator::new(ids[&a.name], Outbox::new(key(&a.name)), a.clone()));
        }

        let mut households = Vec::new();
        let mut hubs = Vec::new();
        let mut hub_of = Vec::new();
        let mut controllers = Vec::new();
        for (i, h) in sc.households.iter().enumerate() {
            let node = ids[&h.name];
            kinds[node.0 as usize] = Kind::Household(i);
            if let Some(at) = h.crash_at_s {
                crash.insert(node, sc.ticks(at));
            }
            let hems = h.control.as_ref().map(|_| Outbox::new(key(&h.name)));
            households.push(Household::new(node, h.clone(), Outbox::new(key(&h.name)), hems));
            let Some(c) = &h.control else {
                hub_of.push(None);
                continue;
            };
            let hname = hub_name(&h.name);
            let hub_key = key(&hname);
            let mut parts = vec![participant(&hname, Role::Validator, 0), participant(&h.name, Role::Household, 0)];
            let mut priorities = vec![(key(&h.name).agent_id(), c.hems_rank)];
            for ctl in &c.controllers {
                let cname = controller_name(&h.name, &ctl.name);
                parts.push(participant(&cname, Role::Controller, 0));
                priorities.push((key(&cname).agent_id(), ctl.rank));
                agent_names.insert(key(&cname).agent_id(), cname.clone());
                let cnode = ids[&cname];
                kinds[cnode.0 as usize] = Kind::Controller(controllers.len());
                let owner = key(&cname).agent_id();
                let rules = ctl
                    .rules
                    .iter()
                    .map(|r| EcaRule {
                        rule_id: r.rule_id.clone(),
                        owner,
                        event: r.event.clone(),
                        condition: r.condition.clone(),
                        action: Action { resource: c.resource.clone(), command: r.command.clone(), value: r.value },
                    })
                    .collect();
                controllers.push(Controller {
                    household: i,
                    node: cnode,
                    name: ctl.name.clone(),
                    out: Outbox::new(key(&cname)),
                    rules,
                    resource: c.resource.clone(),
                });
            }
            let hub_genesis = GenesisConfig {
                chain_id: format!("vdg:{}:{}", sc.name, hname),
                ticks_per_day: cal.ticks_per_day,
                round_ticks,
                verify_timeout,
                validators: vec![hub_key.agent_id()],
                participants: parts,
                resources: vec![ControlResource {
                    resource_id: c.resource.clone(),
                    kind: c.kind,
                    scope: c.scope.clone(),
                    priorities,
                }],
            };
            let chain = Chain::new(LedgerBlock::genesis(&hub_genesis)).expect("hub genesis is valid");
            let hnode = ids[&hname];
            kinds[hnode.0 as usize] = Kind::Hub(hubs.len());
            hub_of.push(Some(hubs.len()));
            hubs.push(Hub {
                node: hnode,
                household: i,
                resource: c.resource.clone(),
                v: ValidatorNode::new(0, hub_key, chain, ValidatorBehavior::Honest),
            });
        }

        let mut faults = BTreeMap::new();
        for (&n, &t) in &crash {
            faults.insert(n, NodeFault { crash_at: Some(t), byzantine: false });
        }
        for &i in &byzantine {
            faults.entry(validator_nodes[i]).or_insert(NodeFault { crash_at: None, byzantine: true }).byzantine = true;
        }
        for h in &households {
            if h.spec.byzantine {
                faults.entry(h.node).or_insert(NodeFault { crash_at: None, byzantine: true }).byzantine = true;
            }
        }
        let partitions = sc
            .network
            .partitions
            .iter()
            .map(|p| Partition {
                start: sc.ticks(p.start_s),
                end: sc.ticks(p.end_s),
                groups: p.groups.iter().map(|g| g.iter().map(|n| ids[n]).collect()).collect(),
            })
            .collect();
        let config = NetConfig { base_delay, jitter, drop_rate: sc.network.drop_rate, partitions, faults };
        let mut net = SimNet::new(config, sc.seed);
        if opts.trace_messages {
            net.enable_trace();
        }

        let nh = households.len();
        let start = cal.day_ahead_open(0).saturating_sub(cal.minutes(10));
        let end = cal.day_start(sc.days) + cal.minutes(cal.verify_timeout_min + 90);
        Engine {
            sc,
            now: start,
            start,
            end,
            round_ticks,
            resend,
            lead,
            net,
            timers: BTreeMap::new(),
            tseq: 0,
            names,
            kinds,
            validators,
            validator_nodes,
            hubs,
            hub_of,
            operator,
            dso,
            aggregators,
            households,
            controllers,
            meters: vec![Vec::new(); nh],
            curtail: vec![0; nh],
            curtailed: vec![BTreeMap::new(); nh],
            control_log: Vec::new(),
            agent_names,
            crash,
            byzantine,
        }
    }

    fn ctx(&self) -> Ctx<'a> {
        Ctx {
            sc: self.sc,
            cal: &self.sc.calendar,
            now: self.now,
            end: self.end,
            operator: self.operator.node,
            resend: self.resend,
            lead: self.lead,
        }
    }

    fn at(&mut self, t: Tick, timer: Timer) {
        self.tseq += 1;
        self.timers.insert((t, timer.phase(), self.tseq), timer);
    }

    pub fn alive(&self, n: NodeId) -> bool {
        self.crash.get(&n).is_none_or(|&c| self.now < c)
    }

    /// The validator a node with home `home` reads from: the first live
    /// one from there on.
    pub fn view_idx(&self, home: usize) -> usize {
        let n = self.validators.len();
        (0..n).map(|k| (home + k) % n).find(|&i| self.alive(self.validator_nodes[i])).unwrap_or(home % n)
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: Msg) {
        self.net.send(from, to, self.now, msg.kind(), msg);
    }

    fn emit(&mut self, from: NodeId, outs: Vec<Out>, household: Option<usize>) {
        for o in outs {
            match o {
                Out::Tx(tx) => {
                    for i in 0..self.validator_nodes.len() {
                        let to = self.validator_nodes[i];
                        self.send(from, to, Msg::Ledger(LedgerMsg::Tx(tx.clone())));
                    }
                }
                Out::HubTx(tx) => {
                    if let Some(j) = household.and_then(|h| self.hub_of[h]) {
                        let to = self.hubs[j].node;
                        self.send(from, to, Msg::Ledger(LedgerMsg::Tx(tx)));
                    }
                }
                Out::To(to, m) => self.send(from, to, m),
            }
        }
    }

    fn route_ledger(&mut self, from: NodeId, outs: Vec<(Target<NodeId>, LedgerMsg)>, main: bool) {
        for (target, m) in outs {
            match target {
                Target::AllValidators if main => {
                    for i in 0..self.validator_nodes.len() {
                        let to = self.validator_nodes[i];
                        if to != from {
                            self.send(from, to, Msg::Ledger(m.clone()));
                        }
                    }
                }
                Target::AllValidators => {}
                Target::Peer(p) => self.send(from, p, Msg::Ledger(m)),
            }
        }
    }

    fn schedule_calendar(&mut self) {
        let cal = self.sc.calendar.clone();
        let first_round = self.start.div_ceil(self.round_ticks).max(1) * self.round_ticks;
        self.at(first_round, Timer::Round);
        self.at(first_round, Timer::Poll);
        self.at(cal.day_start(0), Timer::RealTime);
        for d in 0..self.sc.days {
            self.at(cal.day_ahead_open(d), Timer::DaOpen(d));
            self.at(cal.day_ahead_close(d), Timer::DaClose(d));
            for h in 0..SLOTS_PER_DAY {
                let slot = TimeSlot::new(d, h);
                self.at(cal.intraday_open(slot), Timer::IdOpen(slot));
                self.at(cal.intraday_close(slot), Timer::IdClose(slot));
                self.at(cal.pof_time(slot), Timer::Pof(slot));
            }
        }
    }

    fn main_loop(&mut self) {
        loop {
            let tt = self.timers.keys().next().map(|k| k.0);
            let tn = self.net.next_delivery();
            let t = match (tt, tn) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => break,
            };
            if t > self.end {
                break;
            }
            self.now = t;
            while let Some((&k, _)) = self.timers.first_key_value() {
                if k.0 != t || k.1 != 0 {
                    break;
                }
                let timer = self.timers.remove(&k).expect("present");
                self.fire(timer);
            }
            for env in self.net.advance(t) {
                self.deliver(env);
            }
            while let Some((&k, _)) = self.timers.first_key_value() {
                if k.0 != t {
                    break;
                }
                let timer = self.timers.remove(&k).expect("present");
                self.fire(timer);
            }
        }
    }

    fn fire(&mut self, timer: Timer) {
        let now = self.now;
        match timer {
            Timer::Round => {
                let round = now / self.round_ticks;
                for i in 0..self.validators.len() {
                    let node = self.validator_nodes[i];
                    if self.alive(node) {
                        let outs = self.validators[i].on_round(round);
                        self.route_ledger(node, outs, true);
                    }
                }
                for j in 0..self.hubs.len() {
                    let node = self.hubs[j].node;
                    if self.alive(node) {
                        let outs = self.hubs[j].v.on_round(round);
                        self.route_ledger(node, outs, false);
                    }
                }
                if now + self.round_ticks <= self.end {
                    self.at(now + self.round_ticks, Timer::Round);
                }
            }
            Timer::Poll => {
                self.poll_all();
                if now + self.round_ticks <= self.end {
                    self.at(now + self.round_ticks, Timer::Poll);
                }
            }
            Timer::RealTime => {
                self.real_time();
                let next = now + self.sc.calendar.rt_tick();
                if next < self.sc.calendar.day_start(self.sc.days) {
                    self.at(next, Timer::RealTime);
                }
            }
            Timer::DaOpen(d) => self.da_open(d),
            Timer::DaClose(d) => {
                if self.alive(self.operator.node) {
                    let ctx = self.ctx();
                    let v = self.view_idx(0);
                    let mut outs = Vec::new();
                    for h in 0..SLOTS_PER_DAY {
                        outs.extend(self.operator.close(&ctx, &self.validators[v].chain, MarketKind::DayAhead, TimeSlot::new(d, h)));
                    }
                    let from = self.operator.node;
                    self.emit(from, outs, None);
                }
            }
            Timer::IdOpen(slot) => self.id_open(slot),
            Timer::IdClose(slot) => {
                if self.alive(self.operator.node) {
                    let ctx = self.ctx();
                    let v = self.view_idx(0);
                    let mut outs = self.operator.close(&ctx, &self.validators[v].chain, MarketKind::Intraday, slot);
                    outs.extend(self.operator.close(&ctx, &self.validators[v].chain, MarketKind::Flexibility, slot));
                    let from = self.operator.node;
                    self.emit(from, outs, None);
                }
            }
            Timer::Pof(slot) => {
                if self.alive(self.dso.node) {
                    let ctx = self.ctx();
                    let v = self.view_idx(1);
                    let skip: BTreeSet<usize> = self
                        .sc
                        .events
                        .missing_readings
                        .iter()
                        .filter(|g| TimeSlot::new(g.day, g.hour) == slot)
                        .filter_map(|g| self.sc.household_index(&g.household))
                        .collect();
                    let agents: Vec<AgentId> = self.households.iter().map(|h| h.agent).collect();
                    let outs = self.dso.pof(&ctx, &self.validators[v].chain, slot, &agents, &self.meters, &skip);
                    let from = self.dso.node;
                    self.emit(from, outs, None);
                }
            }
        }
    }

    fn da_open(&mut self, d: u32) {
        let ctx = self.ctx();
        if self.alive(self.operator.node) {
            for h in 0..SLOTS_PER_DAY {
                self.operator.open(MarketKind::DayAhead, TimeSlot::new(d, h));
                self.operator.open(MarketKind::Flexibility, TimeSlot::new(d, h));
            }
        }
        for i in 0..self.households.len() {
            if !self.alive(self.households[i].node) {
                continue;
            }
            let v = self.view_idx(i);
            let outs = self.households[i].da_open(&ctx, &self.validators[v].chain, d);
            let from = self.households[i].node;
            self.emit(from, outs, Some(i));
        }
        if self.alive(self.dso.node) {
            let outs = self.dso.da_open(&ctx, d);
            let from = self.dso.node;
            self.emit(from, outs, None);
        }
        for j in 0..self.aggregators.len() {
            if self.alive(self.aggregators[j].node) {
                let outs = self.aggregators[j].da_open(&ctx, d);
                let from = self.aggregators[j].node;
                self.emit(from, outs, None);
            }
        }
    }

    fn id_open(&mut self, slot: TimeSlot) {
        let ctx = self.ctx();
        if self.alive(self.operator.node) {
            self.operator.open(MarketKind::Intraday, slot);
            if self.operator.has_call(slot) {
                let from = self.operator.node;
                for i in 0..self.households.len() {
                    if self.households[i].spec.profile.flex_device.is_some() {
                        let to = self.households[i].node;
                        self.send(from, to, Msg::FlexCall { slot });
                    }
                }
            }
        }
        for i in 0..self.households.len() {
            if !self.alive(self.households[i].node) {
                continue;
            }
            let v = self.view_idx(i);
            let outs = self.households[i].id_open(&ctx, &self.validators[v].chain, slot);
            let from = self.households[i].node;
            self.emit(from, outs, Some(i));
        }
    }

    fn poll_all(&mut self) {
        let ctx = self.ctx();
        for i in 0..self.households.len() {
            if !self.alive(self.households[i].node) {
                continue;
            }
            let v = self.view_idx(i);
            let hub = self.hub_of[i].map(|j| &self.hubs[j].v.chain);
            let outs = self.households[i].poll(&ctx, &self.validators[v].chain, hub);
            let from = self.households[i].node;
            self.emit(from, outs, Some(i));
        }
        if self.alive(self.operator.node) {
            let v = self.view_idx(0);
            let outs = self.operator.sweep(&ctx, &self.validators[v].chain);
            let from = self.operator.node;
            self.emit(from, outs, None);
        }
        if self.alive(self.dso.node) {
            let v = self.view_idx(1);
            let mut outs: Vec<Out> =
                self.dso.out.poll(&self.validators[v].chain, self.now, self.resend).into_iter().map(Out::Tx).collect();
            for s in self.dso.desk.poll(self.now, self.resend) {
                outs.push(Out::To(self.operator.node, Msg::Order(s)));
            }
            let from = self.dso.node;
            self.emit(from, outs, None);
        }
        for j in 0..self.aggregators.len() {
            if !self.alive(self.aggregators[j].node) {
                continue;
            }
            let outs: Vec<Out> = self.aggregators[j]
                .desk
                .poll(self.now, self.resend)
                .into_iter()
                .map(|s| Out::To(self.operator.node, Msg::Order(s)))
                .collect();
            let from = self.aggregators[j].node;
            self.emit(from, outs, None);
        }
        for c in 0..self.controllers.len() {
            if !self.alive(self.controllers[c].node) {
                continue;
            }
            let hh = self.controllers[c].household;
            let j = self.hub_of[hh].expect("controlled household has a hub");
            let outs = self.controllers[c].maintain(&ctx, &self.hubs[j].v.chain);
            let from = self.controllers[c].node;
            self.emit(from, outs, Some(hh));
        }
    }

    fn deliver(&mut self, env: Envelope<Msg>) {
        let to = env.to;
        match self.kinds[to.0 as usize] {
            Kind::Validator(i) => {
                if let Msg::Ledger(m) = env.payload {
                    let outs = self.validators[i].handle(env.from, m);
                    self.route_ledger(to, outs, true);
                }
            }
            Kind::Hub(j) => {
                if let Msg::Ledger(m) = env.payload {
                    let outs = self.hubs[j].v.handle(env.from, m);
                    self.route_ledger(to, outs, false);
                }
            }
            Kind::Operator => {
                if let Msg::Order(s) = env.payload {
                    let v = self.view_idx(0);
                    let outs = self.operator.on_order(&self.validators[v].chain, env.from, s);
                    self.emit(to, outs, None);
                }
            }
            Kind::Household(i) => {
                let ctx = self.ctx();
                let v = self.view_idx(i);
                let outs = self.households[i].on_msg(&ctx, &self.validators[v].chain, env.payload);
                self.emit(to, outs, Some(i));
            }
            Kind::Dso => {
                if let Msg::OrderAck { order_id, result } = env.payload {
                    self.dso.desk.ack(&order_id, &result);
                }
            }
            Kind::Aggregator(j) => {
                if let Msg::OrderAck { order_id, result } = env.payload {
                    self.aggregators[j].desk.ack(&order_id, &result);
                }
            }
            Kind::Controller(_) => {}
        }
    }

    fn ensure_plan(&mut self, i: usize, day: u32) {
        if self.households[i].plans.contains_key(&day) {
            return;
        }
        let spec = &self.households[i].spec;
        let soc0 = match (day.checked_sub(1).and_then(|p| self.households[i].plans.get(&p)), &spec.profile.storage) {
            (Some(prev), Some(_)) => prev.schedule.storage.as_ref().map_or(0, |s| s.final_soc()),
            (None, Some(s)) => s.initial,
            _ => 0,
        };
        let mut plan = DayPlan::build(spec, self.sc, day, &vec![None; SLOTS_PER_DAY as usize], soc0);
        plan.fallback = true;
        self.households[i].plans.insert(day, plan);
    }

    /// One real-time tick of physics and on-premises control.
    fn real_time(&mut self) {
        let cal = &self.sc.calendar;
        let t = self.now;
        let per = RT_TICKS_PER_SLOT as u64;
        let idx = (t - cal.day_start(0)) / cal.rt_tick();
        let slot = TimeSlot((idx / per) as u32);
        let k = (idx % per) as usize;
        let h = slot.hour() as usize;
        let minute = ((t % cal.ticks_per_day) * 1440 / cal.ticks_per_day) as i64;
        for i in 0..self.households.len() {
            self.ensure_plan(i, slot.day());
            let node = self.households[i].node;
            if k == 0 {
                let total = if self.alive(node) {
                    let v = self.view_idx(i);
                    let state = self.validators[v].chain.tip_state();
                    let device = self.households[i].spec.profile.device_load();
                    self.households[i].contracted_reduction(&state, slot).min(device)
                } else {
                    0
                };
                self.curtail[i] = total;
            }
            let hub_state = self.hub_of[i].map(|j| self.hubs[j].v.chain.tip_state());
            let hh = &self.households[i];
            let agent = hh.agent;
            let want = spread(self.curtail[i], per as usize)[k];
            let holder = |state: &crate::ledger::LedgerState, res: &str| state.leases.holder_at(res, t).map(|l| l.holder);
            let mut rows = Vec::new();
            let mut curtail = 0;
            if want > 0 {
                match (&hub_state, &hh.spec.control) {
                    (Some(st), Some(c)) => {
                        let who = holder(st, &c.resource);
                        let ok = who == Some(agent);
                        if ok {
                            curtail = want;
                        }
                        rows.push(ControlRow {
                            tick: t,
                            household: hh.spec.name.clone(),
                            controller: "hems".into(),
                            rule_id: "curtail".into(),
                            outcome: if ok { "emitted" } else { "suppressed" },
                            reason: if ok { "" } else { "no-lease" },
                            value: want as i64,
                            lease_holder: who.map(|a| self.agent_names[&a].clone()).unwrap_or_default(),
                        });
                    }
                    _ => curtail = want,
                }
            }
            let mut boost: i64 = 0;
            if let (Some(st), Some(c)) = (&hub_state, &hh.spec.control) {
                let event = Event { kind: "temperature".into(), value: c.temperature[h] };
                let mut local = BTreeMap::new();
                local.insert("hour".to_string(), h as i64);
                local.insert("minute".to_string(), minute);
                for ctl in self.controllers.iter().filter(|c| c.household == i) {
                    if !self.alive(ctl.node) {
                        continue;
                    }
                    for rule in &ctl.rules {
                        let outcome = execute_eca(rule, &event, t, &local, &st.leases);
                        let (o, reason, value) = match &outcome {
                            Outcome::Emitted(a) => ("emitted", "", a.value),
                            Outcome::Suppressed(s) if s.as_str() == "no-match" => continue,
                            Outcome::Suppressed(s) => ("suppressed", s.as_str(), rule.action.value),
                        };
                        if o == "emitted" {
                            boost += value;
                        }
                        let who = holder(st, &c.resource);
                        rows.push(ControlRow {
                            tick: t,
                            household: hh.spec.name.clone(),
                            controller: ctl.name.clone(),
                            rule_id: rule.rule_id.clone(),
                            outcome: o,
                            reason,
                            value,
                            lease_holder: who.map(|a| self.agent_names[&a].clone()).unwrap_or_default(),
                        });
                    }
                }
            }
            let plan = &hh.plans[&slot.day()];
            let n = per as usize;
            let load = spread(plan.realized.load[h] + plan.device, n)[k] as SignedWh;
            let appl = spread(plan.appliance_energy(h), n)[k] as SignedWh;
            let flow = signed_spread(plan.storage_flow(h, &hh.spec), k);
            let pv = spread(plan.pv_physical[h], n)[k] as SignedWh;
            let value = load + appl + flow - pv - curtail as SignedWh + boost;
            self.meters[i].push(value);
            *self.curtailed[i].entry(slot).or_insert(0) += curtail;
            self.control_log.extend(rows);
        }
    }
}

pub fn run(sc: &Scenario, opts: RunOptions) -> RunOutput {
    let mut e = Engine::new(sc, opts);
    e.schedule_calendar();
    e.main_loop();
    report::finish(e)
}
