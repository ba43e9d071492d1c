//! Day-ahead appliance and storage scheduling against expected prices.
//!
//! Cost of a slot with net position `n` (surplus positive) is `-n * sell`
//! when `n >= 0` and `-n * buy` otherwise, in Wh x centi/kWh. Appliances are
//! placed greedily, largest first, then improved by coordinate descent.
//! Storage then moves own surplus into later deficits where that pays.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::profile::{spread, FlexibleAppliance, Storage};
use crate::market::StorageHeadroom;
use crate::units::{PricePerKwh, SignedWh, Wh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotPrice {
    pub buy: PricePerKwh,
    pub sell: PricePerKwh,
}

/// Yesterday's local prices clamped to the utility band, or the band
/// midpoint when there is no history for a slot.
pub fn price_expectation(
    history: &[Option<SlotPrice>],
    retail: PricePerKwh,
    feed_in: PricePerKwh,
) -> Vec<SlotPrice> {
    let mid = (retail + feed_in) / 2;
    history
        .iter()
        .map(|h| match h {
            Some(p) => SlotPrice { buy: p.buy.clamp(feed_in, retail), sell: p.sell.clamp(feed_in, retail) },
            None => SlotPrice { buy: mid, sell: mid },
        })
        .collect()
}

pub fn slot_cost(net: SignedWh, p: SlotPrice) -> i128 {
    if net >= 0 {
        -(net as i128) * p.sell as i128
    } else {
        -(net as i128) * p.buy as i128
    }
}

pub fn schedule_cost(net: &[SignedWh], prices: &[SlotPrice]) -> i128 {
    net.iter().zip(prices).map(|(&n, &p)| slot_cost(n, p)).sum()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplianceRun {
    pub appliance_id: String,
    /// Increasing slot indexes.
    pub slots: Vec<u32>,
    pub energy: Vec<Wh>,
}

impl ApplianceRun {
    pub fn new(a: &FlexibleAppliance, slots: Vec<u32>) -> Self {
        let energy = spread(a.energy_per_run, slots.len());
        ApplianceRun { appliance_id: a.appliance_id.clone(), slots, energy }
    }

    pub fn start(&self) -> u32 {
        self.slots[0]
    }
}

/// Adds (`sign` = -1) or removes (`sign` = 1) a run's consumption.
fn shift(net: &mut [SignedWh], run: &ApplianceRun, sign: SignedWh) {
    for (&s, &e) in run.slots.iter().zip(&run.energy) {
        net[s as usize] += sign * e as SignedWh;
    }
}

pub fn apply_runs(base_net: &[SignedWh], runs: &[ApplianceRun]) -> Vec<SignedWh> {
    let mut net = base_net.to_vec();
    for r in runs {
        shift(&mut net, r, -1);
    }
    net
}

fn run_cost(net: &[SignedWh], run: &ApplianceRun, prices: &[SlotPrice]) -> i128 {
    run.slots
        .iter()
        .zip(&run.energy)
        .map(|(&s, &e)| {
            let s = s as usize;
            slot_cost(net[s] - e as SignedWh, prices[s]) - slot_cost(net[s], prices[s])
        })
        .sum()
}

/// Cheapest placement of one appliance on top of `net`.
fn best_run(a: &FlexibleAppliance, net: &[SignedWh], prices: &[SlotPrice]) -> ApplianceRun {
    if a.interruptible {
        // one slot at a time, each time the one that adds least cost
        let chunk = a.energy_per_run.div_ceil(a.duration as u64) as SignedWh;
        let mut chosen: Vec<u32> = Vec::new();
        for _ in 0..a.duration {
            let mut best: Option<(i128, u32)> = None;
            for s in a.earliest..=a.latest {
                if chosen.contains(&s) {
                    continue;
                }
                let i = s as usize;
                let c = slot_cost(net[i] - chunk, prices[i]) - slot_cost(net[i], prices[i]);
                if best.is_none_or(|(bc, _)| c < bc) {
                    best = Some((c, s));
                }
            }
            chosen.push(best.expect("window fits").1);
        }
        chosen.sort_unstable();
        ApplianceRun::new(a, chosen)
    } else {
        let mut best: Option<(i128, ApplianceRun)> = None;
        for start in a.earliest..=a.latest + 1 - a.duration {
            let run = ApplianceRun::new(a, (start..start + a.duration).collect());
            let c = run_cost(net, &run, prices);
            if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
                best = Some((c, run));
            }
        }
        best.expect("window fits").1
    }
}

fn orderings(first: &[usize]) -> Vec<Vec<usize>> {
    if first.len() > 4 {
        return alloc::vec![first.to_vec()];
    }
    let mut out = alloc::vec![first.to_vec()];
    let mut p = first.to_vec();
    // Heap's algorithm, iterative
    let mut c = alloc::vec![0usize; p.len()];
    let mut i = 0;
    while i < p.len() {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            out.push(p.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

fn place_and_descend(
    appliances: &[FlexibleAppliance],
    order: &[usize],
    base_net: &[SignedWh],
    prices: &[SlotPrice],
) -> Vec<ApplianceRun> {
    let mut net = base_net.to_vec();
    let mut runs: Vec<Option<ApplianceRun>> = alloc::vec![None; appliances.len()];
    for &i in order {
        let r = best_run(&appliances[i], &net, prices);
        shift(&mut net, &r, -1);
        runs[i] = Some(r);
    }
    for _ in 0..8 {
        let mut improved = false;
        for &i in order {
            let cur = runs[i].take().expect("placed");
            shift(&mut net, &cur, 1);
            let cand = best_run(&appliances[i], &net, prices);
            let keep = if run_cost(&net, &cand, prices) < run_cost(&net, &cur, prices) {
                improved = true;
                cand
            } else {
                cur
            };
            shift(&mut net, &keep, -1);
            runs[i] = Some(keep);
        }
        if !improved {
            break;
        }
    }
    runs.into_iter().map(|r| r.expect("placed")).collect()
}

/// Runs in the order of `appliances`. Each placement order (largest first,
/// then the other permutations for up to four appliances) is placed greedily
/// and improved by coordinate descent; the cheapest result wins.
pub fn schedule_appliances(
    appliances: &[FlexibleAppliance],
    base_net: &[SignedWh],
    prices: &[SlotPrice],
) -> Vec<ApplianceRun> {
    let mut first: Vec<usize> = (0..appliances.len()).collect();
    first.sort_by(|&a, &b| {
        appliances[b]
            .energy_per_run
            .cmp(&appliances[a].energy_per_run)
            .then_with(|| appliances[a].appliance_id.cmp(&appliances[b].appliance_id))
    });
    let mut best: Option<(i128, Vec<ApplianceRun>)> = None;
    for order in orderings(&first) {
        let runs = place_and_descend(appliances, &order, base_net, prices);
        let cost = schedule_cost(&apply_runs(base_net, &runs), prices);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, runs));
        }
    }
    best.map(|b| b.1).unwrap_or_default()
}

/// Storage plan for a day. Charging is counted in state-of-charge units;
/// discharging `d` of charge delivers `d * efficiency / 100`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoragePlan {
    pub initial: Wh,
    pub charge: Vec<Wh>,
    pub discharge: Vec<Wh>,
    /// State of charge at the end of each slot.
    pub soc: Vec<Wh>,
    /// Charge promised to the following day; adjustments never dip below it.
    #[serde(default)]
    pub reserve: Wh,
}

impl StoragePlan {
    pub fn idle(initial: Wh, slots: usize) -> Self {
        StoragePlan {
            initial,
            charge: alloc::vec![0; slots],
            discharge: alloc::vec![0; slots],
            soc: alloc::vec![initial; slots],
            reserve: 0,
        }
    }

    fn output(&self, t: usize, eff: u32) -> Wh {
        self.discharge[t] * eff as u64 / 100
    }

    /// Grid-side consumption of the storage in slot `t`; negative when it
    /// supplies the house.
    pub fn flow(&self, t: usize, storage: &Storage) -> SignedWh {
        self.charge[t] as SignedWh - self.output(t, storage.efficiency_pct) as SignedWh
    }

    pub fn final_soc(&self) -> Wh {
        self.soc.last().copied().unwrap_or(self.initial)
    }

    fn min_soc_from(&self, t: usize) -> Wh {
        self.soc[t..].iter().copied().min().unwrap_or(0).saturating_sub(self.reserve)
    }

    fn max_soc_in(&self, from: usize, to: usize) -> Wh {
        self.soc[from..to].iter().copied().max().unwrap_or(0)
    }

    pub fn headroom(&self, t: usize, storage: &Storage) -> StorageHeadroom {
        let charge = (storage.max_rate - self.charge[t]).min(storage.capacity - self.max_soc_in(t, self.soc.len()));
        let soc_room = (storage.max_rate - self.discharge[t]).min(self.min_soc_from(t));
        let discharge = (self.discharge[t] + soc_room) * storage.efficiency_pct as u64 / 100 - self.output(t, storage.efficiency_pct);
        StorageHeadroom { charge, discharge }
    }

    /// Moves extra energy in slot `t`: positive charges, negative
    /// discharges. Returns the change in grid-side flow actually achieved,
    /// which never exceeds the request in magnitude.
    pub fn adjust(&mut self, t: usize, delta: SignedWh, storage: &Storage) -> SignedWh {
        let eff = storage.efficiency_pct;
        if delta >= 0 {
            let room = self.headroom(t, storage).charge;
            let x = (delta as Wh).min(room);
            self.charge[t] += x;
            for s in &mut self.soc[t..] {
                *s += x;
            }
            x as SignedWh
        } else {
            let want = delta.unsigned_abs();
            let before = self.output(t, eff);
            let limit = (storage.max_rate - self.discharge[t]).min(self.min_soc_from(t));
            // largest extra charge drawn whose output stays within the request
            let mut extra = (want * 100).div_ceil(eff as u64).min(limit);
            while extra > 0 && (self.discharge[t] + extra) * eff as u64 / 100 - before > want {
                extra -= 1;
            }
            self.discharge[t] += extra;
            for s in &mut self.soc[t..] {
                *s -= extra;
            }
            -((self.output(t, eff) - before) as SignedWh)
        }
    }
}

/// Self-consumption plan: spend the initial charge on the dearest deficits,
/// then move surplus into later deficits, best price spread first.
pub fn plan_storage(storage: &Storage, initial: Wh, net: &[SignedWh], prices: &[SlotPrice]) -> StoragePlan {
    let n = net.len();
    let eff = storage.efficiency_pct as u64;
    let mut plan = StoragePlan::idle(initial.min(storage.capacity), n);
    let remaining = |plan: &StoragePlan, t: usize| net[t] - plan.flow(t, storage);

    let mut deficits: Vec<usize> = (0..n).filter(|&t| net[t] < 0).collect();
    deficits.sort_by(|&a, &b| prices[b].buy.cmp(&prices[a].buy).then(a.cmp(&b)));
    for &j in &deficits {
        let need = (-remaining(&plan, j)).max(0);
        if need > 0 {
            plan.adjust(j, -need, storage);
        }
    }

    let mut pairs: Vec<(i128, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if net[i] > 0 && net[j] < 0 {
                let value = prices[j].buy as i128 * eff as i128 - prices[i].sell as i128 * 100;
                if value > 0 {
                    pairs.push((value, i, j));
                }
            }
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, i, j) in pairs {
        let surplus = remaining(&plan, i).max(0) as Wh;
        let deficit = (-remaining(&plan, j)).max(0) as Wh;
        let y = surplus
            .min(storage.max_rate - plan.charge[i])
            .min(storage.max_rate - plan.discharge[j])
            .min(storage.capacity - plan.max_soc_in(i, j))
            .min(deficit * 100 / eff);
        if y == 0 {
            continue;
        }
        plan.charge[i] += y;
        plan.discharge[j] += y;
        for s in &mut plan.soc[i..j] {
            *s += y;
        }
    }
    plan
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub runs: Vec<ApplianceRun>,
    pub storage: Option<StoragePlan>,
}

impl Schedule {
    /// Net position after appliances and storage.
    pub fn net(&self, base_net: &[SignedWh], storage: Option<&Storage>) -> Vec<SignedWh> {
        let mut net = apply_runs(base_net, &self.runs);
        if let (Some(plan), Some(s)) = (&self.storage, storage) {
            for (t, n) in net.iter_mut().enumerate() {
                *n -= plan.flow(t, s);
            }
        }
        net
    }
}

pub fn schedule_day(
    appliances: &[FlexibleAppliance],
    storage: Option<&Storage>,
    soc0: Wh,
    base_net: &[SignedWh],
    prices: &[SlotPrice],
) -> Schedule {
    let runs = schedule_appliances(appliances, base_net, prices);
    let after = apply_runs(base_net, &runs);
    let storage = storage.map(|s| plan_storage(s, soc0, &after, prices));
    Schedule { runs, storage }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn flat(p: u64) -> Vec<SlotPrice> {
        vec![SlotPrice { buy: p, sell: p }; 24]
    }

    fn app(id: &str, e: Wh, d: u32, lo: u32, hi: u32) -> FlexibleAppliance {
        FlexibleAppliance { appliance_id: id.into(), energy_per_run: e, duration: d, earliest: lo, latest: hi, interruptible: false }
    }

    #[test]
    fn goes_to_cheapest_slot_in_window() {
        let mut prices = flat(20);
        prices[12] = SlotPrice { buy: 10, sell: 10 };
        prices[3] = SlotPrice { buy: 1, sell: 1 };
        let runs = schedule_appliances(&[app("wash", 1000, 1, 10, 14)], &[0; 24], &prices);
        assert_eq!(runs[0].slots, vec![12]);
    }

    #[test]
    fn one_slot_window_is_forced() {
        let mut prices = flat(5);
        prices[7] = SlotPrice { buy: 99, sell: 99 };
        let runs = schedule_appliances(&[app("a", 500, 1, 7, 7)], &[0; 24], &prices);
        assert_eq!(runs[0].slots, vec![7]);
    }

    #[test]
    fn nothing_to_schedule() {
        let base = vec![-500; 24];
        let s = schedule_day(&[], None, 0, &base, &flat(10));
        assert!(s.runs.is_empty());
        assert_eq!(s.net(&base, None), base);
    }

    #[test]
    fn surplus_absorbs_load_first() {
        // selling pays 5, buying costs 25: run the appliance on own surplus
        let prices = vec![SlotPrice { buy: 25, sell: 5 }; 24];
        let mut base = vec![-200; 24];
        base[11] = 1000;
        let runs = schedule_appliances(&[app("dish", 900, 1, 6, 20)], &base, &prices);
        assert_eq!(runs[0].slots, vec![11]);
    }

    #[test]
    fn storage_shifts_noon_surplus_to_evening() {
        let s = Storage { capacity: 3000, max_rate: 2000, efficiency_pct: 90, initial: 0 };
        let prices = vec![SlotPrice { buy: 30, sell: 8 }; 24];
        let mut net = vec![0; 24];
        net[12] = 2500;
        net[19] = -900;
        let plan = plan_storage(&s, 0, &net, &prices);
        assert_eq!(plan.charge[12], 1000);
        assert_eq!(plan.flow(19, &s), -900);
        assert!(plan.soc.iter().all(|&x| x <= s.capacity));
        assert_eq!(plan.final_soc(), 0);
    }

    #[test]
    fn headroom_respects_future_soc() {
        let s = Storage { capacity: 1000, max_rate: 1000, efficiency_pct: 100, initial: 0 };
        let mut plan = StoragePlan::idle(0, 4);
        assert_eq!(plan.headroom(1, &s), StorageHeadroom { charge: 1000, discharge: 0 });
        assert_eq!(plan.adjust(1, 600, &s), 600);
        assert_eq!(plan.soc, vec![0, 600, 600, 600]);
        assert_eq!(plan.headroom(0, &s).charge, 400);
        assert_eq!(plan.adjust(2, -800, &s), -600);
        assert_eq!(plan.soc, vec![0, 600, 0, 0]);
    }

    #[test]
    fn lossy_discharge_never_overshoots() {
        let s = Storage { capacity: 5000, max_rate: 5000, efficiency_pct: 90, initial: 2000 };
        let mut plan = StoragePlan::idle(2000, 2);
        let got = plan.adjust(0, -1000, &s);
        assert!((-1000..=-999).contains(&got), "{got}");
        assert!(plan.soc[0] < 2000);
    }
}
