//! Accounting, output rows and the post-run audit.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::engine::Engine;
use super::RunOutput;
use crate::auction::{ContractState, MarketKind, Side};
use crate::crypto::AgentId;
use crate::ledger::{AppendVerdict, Chain, LedgerBlock, LedgerState, ValidatorStats};
use crate::market::boundary_flow;
use crate::market::calendar::RT_TICKS_PER_SLOT;
use crate::scenario::{controller_name, hub_name, validator_name};
use crate::simnet::NetStats;
use crate::tokens::Direction;
use crate::units::{Centi, PricePerKwh, SignedWh, Tick, TimeSlot, Wh, SLOTS_PER_DAY};

/// Blocks this far below the shorter tip must agree between honest nodes.
pub const FINALITY_DEPTH: u64 = 6;

/// One invariant or audit check that did not hold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub check: String,
    pub detail: String,
}

fn fail(check: &str, detail: String) -> Failure {
    Failure { check: check.into(), detail }
}

/// A node's best chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainDump {
    pub name: String,
    pub blocks: Vec<LedgerBlock>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ControlRow {
    pub tick: Tick,
    pub household: String,
    pub controller: String,
    pub rule_id: String,
    pub outcome: &'static str,
    pub reason: &'static str,
    pub value: i64,
    pub lease_holder: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MetricRow {
    pub slot: u32,
    pub day: u32,
    pub hour: u32,
    pub net_load: SignedWh,
    pub da_traded: Wh,
    pub id_traded: Wh,
    pub flex_traded: Wh,
    pub local_delivered: Wh,
    pub import: Wh,
    pub export: Wh,
    pub shortfall: Wh,
    pub refund: Centi,
    pub penalty: Centi,
    pub flex_delivered: Wh,
    pub curtailed: Wh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TokenRow {
    pub slot: u32,
    pub owner: String,
    pub direction: &'static str,
    pub status: &'static str,
    pub count: u32,
    pub volume: Wh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecisionRow {
    pub household: String,
    pub slot: u32,
    pub day: u32,
    pub hour: u32,
    pub forecast_pv: Wh,
    pub forecast_load: Wh,
    pub planned_net: SignedWh,
    pub da_side: &'static str,
    pub da_volume: Wh,
    pub da_limit: PricePerKwh,
    pub deviation: SignedWh,
    pub storage_adjust: SignedWh,
    pub id_side: &'static str,
    pub id_volume: Wh,
    pub id_limit: PricePerKwh,
    pub metered_net: SignedWh,
    pub curtailed: Wh,
    pub fallback: bool,
}

/// Costs are positive when the household pays.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseholdRow {
    pub name: String,
    pub has_pv: bool,
    pub initial_balance: Centi,
    pub final_balance: Centi,
    pub locked_escrow: Centi,
    pub debt_owed: Centi,
    pub debt_receivable: Centi,
    pub local_sold: Wh,
    pub local_bought: Wh,
    pub import: Wh,
    pub export: Wh,
    pub import_cost: Centi,
    pub export_revenue: Centi,
    pub cost: i64,
    pub counterfactual_cost: i64,
    pub saving: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub days: u32,
    pub ticks_per_day: u64,
    pub round_ticks: u64,
    pub validators: u32,
    pub reference_chain: String,
    pub chain_height: u64,
    pub transactions: u64,
    pub da_rounds_expected: u32,
    pub da_rounds_recorded: u32,
    pub da_rounds_on_calendar: u32,
    pub da_traded: Wh,
    pub id_traded: Wh,
    pub flex_traded: Wh,
    pub local_delivered: Wh,
    pub import: Wh,
    pub export: Wh,
    pub local_balancing_ratio: f64,
    pub shortfall: Wh,
    pub refund: Centi,
    pub penalty: Centi,
    pub penalty_paid: Centi,
    pub outstanding_debt: Centi,
    pub flex_delivered: Wh,
    pub market_fund: Centi,
    pub control_emitted: u64,
    pub control_suppressed: u64,
    pub dual_lease_ticks: u64,
    pub unleased_actions: u64,
    pub households: Vec<HouseholdRow>,
    pub network: NetStats,
    pub validator_stats: Vec<ValidatorStats>,
    pub invariants_held: bool,
    pub failures: Vec<Failure>,
}

/// Replays `blocks` from genesis with full signature checks, verifying
/// every state invariant after each block.
pub fn audit_chain(blocks: &[LedgerBlock]) -> Result<(), Failure> {
    let first = blocks.first().ok_or_else(|| fail("ledger-safety", "empty chain".into()))?;
    let mut chain = Chain::new(first.clone()).map_err(|e| fail("ledger-safety", e))?;
    chain.check_signatures = true;
    chain.tip_state().check_invariants().map_err(|v| fail(v.name, v.detail))?;
    for b in &blocks[1..] {
        match chain.append(b.clone()) {
            AppendVerdict::Accepted { .. } if chain.tip_hash() == b.block_hash => {}
            AppendVerdict::Rejected(r) => {
                return Err(fail("ledger-safety", format!("block {} rejected on replay: {r}", b.height)));
            }
            _ => return Err(fail("ledger-safety", format!("block {} does not extend the chain", b.height))),
        }
        chain
            .tip_state()
            .check_invariants()
            .map_err(|v| fail(v.name, format!("after block {}: {}", b.height, v.detail)))?;
    }
    Ok(())
}

/// Locally traded energy over all energy exchanged, in parts per million.
pub fn balancing_ppm(local: Wh, import: Wh, export: Wh) -> u64 {
    let total = local + import + export;
    if total == 0 {
        return 0;
    }
    crate::units::div_round_half_even(local as u128 * 1_000_000, total as u128) as u64
}

fn side_str(s: Side) -> &'static str {
    match s {
        Side::Bid => "bid",
        Side::Ask => "ask",
    }
}

fn name_of(state: &LedgerState, a: &AgentId) -> String {
    state.accounts.get(a).map_or_else(|| format!("{a:?}"), |x| x.name.clone())
}

pub(super) fn finish(mut e: Engine<'_>) -> RunOutput {
    let sc = e.sc;
    let cal = &sc.calendar;
    let per = RT_TICKS_PER_SLOT as usize;
    let nslots = sc.days * SLOTS_PER_DAY;
    let mut failures = Vec::new();

    let mut chains = Vec::new();
    for (i, v) in e.validators.iter().enumerate() {
        chains.push(ChainDump { name: validator_name(i), blocks: v.chain.main_chain().cloned().collect() });
    }
    for h in &e.hubs {
        chains.push(ChainDump { name: hub_name(&sc.households[h.household].name), blocks: h.v.chain.main_chain().cloned().collect() });
    }

    let honest: Vec<usize> = (0..e.validators.len()).filter(|i| !e.byzantine.contains(i)).collect();
    let crashed = |i: usize| e.crash.contains_key(&e.names.iter().position(|n| *n == validator_name(i)).map_or(crate::simnet::NodeId(u32::MAX), |p| crate::simnet::NodeId(p as u32)));
    let pool: Vec<usize> = {
        let live: Vec<usize> = honest.iter().copied().filter(|&i| !crashed(i)).collect();
        if live.is_empty() {
            honest.clone()
        } else {
            live
        }
    };
    let reference = pool
        .iter()
        .copied()
        .max_by_key(|&i| (e.validators[i].chain.height(), core::cmp::Reverse(i)))
        .unwrap_or(0);

    for &i in &honest {
        if let Err(f) = audit_chain(&chains[i].blocks) {
            failures.push(Failure { detail: format!("{}: {}", chains[i].name, f.detail), ..f });
        }
    }
    for (j, _) in e.hubs.iter().enumerate() {
        let c = &chains[e.validators.len() + j];
        if let Err(f) = audit_chain(&c.blocks) {
            failures.push(Failure { detail: format!("{}: {}", c.name, f.detail), ..f });
        }
    }
    for (x, &a) in pool.iter().enumerate() {
        for &b in &pool[x + 1..] {
            let (ca, cb) = (&e.validators[a].chain, &e.validators[b].chain);
            let h = ca.height().min(cb.height()).saturating_sub(FINALITY_DEPTH);
            if ca.main_hash_at(h) != cb.main_hash_at(h) {
                failures.push(fail(
                    "chain-agreement",
                    format!("{} and {} differ at height {h}", validator_name(a), validator_name(b)),
                ));
            }
        }
    }

    let state = e.validators[reference].chain.tip_state();
    for c in state.contracts.values().filter(|c| !c.state.is_final()) {
        failures.push(fail(
            "contract-finality",
            format!("contract {:?} for slot {} still {}", c.contract_id, c.slot, c.state.as_str()),
        ));
    }

    // Control: leases on each hub, and every emitted action against them.
    let mut dual_lease_ticks = 0u64;
    let mut unleased_actions = 0u64;
    let (mut control_emitted, mut control_suppressed) = (0u64, 0u64);
    let horizon = cal.day_start(0)..cal.day_start(sc.days);
    let mut hub_states = BTreeMap::new();
    for h in &e.hubs {
        let hs = h.v.chain.tip_state();
        let mut t = horizon.start;
        while t < horizon.end {
            let mut active: BTreeMap<&str, u32> = BTreeMap::new();
            for l in hs.leases.leases.values().filter(|l| l.start < l.end && l.active_at(t)) {
                *active.entry(l.resource_id.as_str()).or_insert(0) += 1;
            }
            dual_lease_ticks += active.values().filter(|&&n| n > 1).count() as u64;
            t += cal.rt_tick();
        }
        hub_states.insert(sc.households[h.household].name.clone(), (hs, h.resource.clone()));
    }
    let by_name: BTreeMap<&String, AgentId> = e.agent_names.iter().map(|(a, n)| (n, *a)).collect();
    for r in &e.control_log {
        if r.outcome != "emitted" {
            control_suppressed += 1;
            continue;
        }
        control_emitted += 1;
        let emitter = if r.controller == "hems" { r.household.clone() } else { controller_name(&r.household, &r.controller) };
        let ok = match (hub_states.get(&r.household), by_name.get(&emitter)) {
            (Some((hs, res)), Some(a)) => hs.leases.holder_at(res, r.tick).is_some_and(|l| l.holder == *a),
            _ => false,
        };
        if !ok {
            unleased_actions += 1;
        }
    }
    if dual_lease_ticks > 0 {
        failures.push(fail("lease-exclusivity", format!("{dual_lease_ticks} ticks with two active leases")));
    }
    if unleased_actions > 0 {
        failures.push(fail("control-gating", format!("{unleased_actions} actions emitted without a lease")));
    }

    // Metrics and accounting.
    let mut metrics: Vec<MetricRow> = (0..nslots)
        .map(|s| {
            let slot = TimeSlot(s);
            MetricRow { slot: s, day: slot.day(), hour: slot.hour(), ..MetricRow::default() }
        })
        .collect();
    for r in &e.operator.rounds {
        if let Some(m) = metrics.get_mut(r.slot as usize) {
            match r.market {
                "day-ahead" => m.da_traded += r.traded_volume,
                "intraday" => m.id_traded += r.traded_volume,
                _ => m.flex_traded += r.traded_volume,
            }
        }
    }
    let mut sold: BTreeMap<(AgentId, u32), Wh> = BTreeMap::new();
    let mut bought: BTreeMap<(AgentId, u32), Wh> = BTreeMap::new();
    for c in state.contracts.values() {
        let Some(m) = metrics.get_mut(c.slot.0 as usize) else { continue };
        if c.state == ContractState::Settled {
            match c.direction {
                Direction::Injection => {
                    m.local_delivered += c.volume;
                    *sold.entry((c.seller, c.slot.0)).or_insert(0) += c.volume;
                    *bought.entry((c.buyer, c.slot.0)).or_insert(0) += c.volume;
                }
                Direction::ExtractionReduction => m.flex_delivered += c.volume,
            }
        }
    }
    let mut penalty_paid = 0;
    for r in &state.imbalances {
        if let Some(m) = metrics.get_mut(r.slot.0 as usize) {
            m.shortfall += r.shortfall;
            m.refund += r.refund;
            m.penalty += r.penalty;
        }
        penalty_paid += r.penalty_paid;
    }

    let mut households = Vec::new();
    for (i, h) in e.households.iter().enumerate() {
        let spec = &h.spec;
        let (retail, fit) = (spec.profile.retail_price, spec.profile.feed_in_tariff);
        let mut row = HouseholdRow {
            name: spec.name.clone(),
            has_pv: spec.profile.pv_peak > 0,
            initial_balance: spec.balance,
            final_balance: state.balance(&h.agent),
            ..HouseholdRow::default()
        };
        row.locked_escrow =
            state.contracts.values().filter(|c| c.buyer == h.agent && !c.state.is_final()).map(|c| c.escrow).sum();
        row.debt_owed = state.debts.iter().filter(|d| d.debtor == h.agent).map(|d| d.amount).sum();
        row.debt_receivable = state.debts.iter().filter(|d| d.creditor == h.agent).map(|d| d.amount).sum();
        let mut cf_cost: i64 = 0;
        for s in 0..nslots {
            let lo = s as usize * per;
            let metered: SignedWh = e.meters[i].get(lo..lo + per).map_or(0, |x| x.iter().sum());
            let net = -metered;
            let so = sold.get(&(h.agent, s)).copied().unwrap_or(0);
            let bo = bought.get(&(h.agent, s)).copied().unwrap_or(0);
            let f = boundary_flow(net, so, bo, retail, fit);
            let cf = boundary_flow(net, 0, 0, retail, fit);
            row.local_sold += so;
            row.local_bought += bo;
            row.import += f.import;
            row.export += f.export;
            row.import_cost += f.import_cost;
            row.export_revenue += f.export_revenue;
            cf_cost += cf.import_cost as i64 - cf.export_revenue as i64;
            let m = &mut metrics[s as usize];
            m.net_load += metered;
            m.import += f.import;
            m.export += f.export;
            m.curtailed += e.curtailed[i].get(&TimeSlot(s)).copied().unwrap_or(0);
        }
        let ledger_spend =
            row.initial_balance as i64 - row.final_balance as i64 - row.locked_escrow as i64;
        row.cost = ledger_spend + row.import_cost as i64 - row.export_revenue as i64 + row.debt_owed as i64
            - row.debt_receivable as i64;
        row.counterfactual_cost = cf_cost;
        row.saving = cf_cost - row.cost;
        households.push(row);
    }

    let mut tokens: BTreeMap<(u32, String, &'static str, &'static str), (u32, Wh)> = BTreeMap::new();
    for t in state.tokens.iter() {
        let e = tokens.entry((t.slot.0, name_of(&state, &t.owner), t.direction.as_str(), t.status.as_str())).or_insert((0, 0));
        e.0 += 1;
        e.1 += t.volume;
    }
    let tokens = tokens
        .into_iter()
        .map(|((slot, owner, direction, status), (count, volume))| TokenRow { slot, owner, direction, status, count, volume })
        .collect();

    let mut decisions = Vec::new();
    for (i, h) in e.households.iter().enumerate() {
        for (&day, plan) in &h.plans {
            for hour in 0..SLOTS_PER_DAY {
                let slot = TimeSlot::new(day, hour);
                let hu = hour as usize;
                let da = plan.da_orders.iter().find(|o| o.slot == slot);
                let id = plan.id_orders.get(hu).and_then(|o| o.as_ref());
                let lo = slot.0 as usize * per;
                decisions.push(DecisionRow {
                    household: h.spec.name.clone(),
                    slot: slot.0,
                    day,
                    hour,
                    forecast_pv: plan.forecast.pv[hu],
                    forecast_load: plan.forecast.load[hu],
                    planned_net: plan.da_net[hu],
                    da_side: da.map_or("", |o| side_str(o.side)),
                    da_volume: da.map_or(0, |o| o.volume),
                    da_limit: da.map_or(0, |o| o.limit_price),
                    deviation: plan.deviation[hu],
                    storage_adjust: plan.storage_adjust[hu],
                    id_side: id.map_or("", |o| side_str(o.side)),
                    id_volume: id.map_or(0, |o| o.volume),
                    id_limit: id.map_or(0, |o| o.limit_price),
                    metered_net: -e.meters[i].get(lo..lo + per).map_or(0, |x| x.iter().sum::<SignedWh>()),
                    curtailed: e.curtailed[i].get(&slot).copied().unwrap_or(0),
                    fallback: plan.fallback,
                });
            }
        }
    }

    let da_records: Vec<_> = state.market_records.iter().filter(|r| r.market == MarketKind::DayAhead).collect();
    let da_slots: BTreeSet<TimeSlot> = da_records.iter().map(|r| r.slot).collect();
    let da_on_calendar: BTreeSet<TimeSlot> = da_records
        .iter()
        .filter(|r| r.close_tick == cal.day_ahead_close(r.slot.day()))
        .map(|r| r.slot)
        .collect();

    let sum = |f: fn(&MetricRow) -> Wh| metrics.iter().map(f).sum::<Wh>();
    let local_delivered = sum(|m| m.local_delivered);
    let import = sum(|m| m.import);
    let export = sum(|m| m.export);
    let ratio_ppm = balancing_ppm(local_delivered, import, export);
    let summary = Summary {
        scenario: sc.name.clone(),
        seed: sc.seed,
        days: sc.days,
        ticks_per_day: cal.ticks_per_day,
        round_ticks: e.round_ticks,
        validators: sc.validators.count,
        reference_chain: validator_name(reference),
        chain_height: e.validators[reference].chain.height(),
        transactions: state.tx_count,
        da_rounds_expected: nslots,
        da_rounds_recorded: da_slots.len() as u32,
        da_rounds_on_calendar: da_on_calendar.len() as u32,
        da_traded: sum(|m| m.da_traded),
        id_traded: sum(|m| m.id_traded),
        flex_traded: sum(|m| m.flex_traded),
        local_delivered,
        import,
        export,
        local_balancing_ratio: ratio_ppm as f64 / 1e6,
        shortfall: sum(|m| m.shortfall),
        refund: metrics.iter().map(|m| m.refund).sum(),
        penalty: metrics.iter().map(|m| m.penalty).sum(),
        penalty_paid,
        outstanding_debt: state.debts.iter().map(|d| d.amount).sum(),
        flex_delivered: sum(|m| m.flex_delivered),
        market_fund: state.market_fund,
        control_emitted,
        control_suppressed,
        dual_lease_ticks,
        unleased_actions,
        households: households.clone(),
        network: e.net.stats.clone(),
        validator_stats: e.validators.iter().map(|v| v.stats.clone()).collect(),
        invariants_held: failures.is_empty(),
        failures: failures.clone(),
    };

    let meters = e.households.iter().zip(&e.meters).map(|(h, m)| (h.spec.name.clone(), m.clone())).collect();
    let mut rounds = core::mem::take(&mut e.operator.rounds);
    rounds.sort_by_key(|r| (r.slot, r.market, r.close_tick));
    RunOutput {
        summary,
        metrics,
        rounds,
        tokens,
        decisions,
        households,
        control: core::mem::take(&mut e.control_log),
        messages: e.net.take_trace(),
        chains,
        reference,
        meters,
        node_names: e.names.iter().map(ToString::to_string).collect(),
        failures,
    }
}
