//! Per-day tables computed from the artifacts of a finished run.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use vdg_core::scenario::Scenario;
use vdg_core::sim::{balancing_ppm, HouseholdRow, Summary};

use crate::io;

#[derive(Deserialize)]
struct MetricIn {
    day: u32,
    local_delivered: u64,
    import: u64,
    export: u64,
    shortfall: u64,
    refund: u64,
    penalty: u64,
}

#[derive(Deserialize)]
struct RoundIn {
    market: String,
    day: u32,
    traded_volume: u64,
    buyer_price: u64,
    seller_price: u64,
    surplus: u64,
}

/// Clearing prices of the rounds that traded, in centi per kWh.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceStats {
    pub rounds: u32,
    pub traded_rounds: u32,
    pub volume: u64,
    pub buyer_min: u64,
    pub buyer_max: u64,
    /// Volume-weighted, rounded to a hundredth.
    pub buyer_mean: f64,
    pub seller_min: u64,
    pub seller_max: u64,
    pub seller_mean: f64,
    pub surplus: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub day: u32,
    pub local_delivered: u64,
    pub import: u64,
    pub export: u64,
    pub local_balancing_ratio: f64,
    pub day_ahead: PriceStats,
    pub intraday: PriceStats,
    pub flexibility: PriceStats,
    pub shortfall: u64,
    pub refund: u64,
    pub penalty: u64,
    pub market_surplus: u64,
    /// Reference-chain height at the end of the delivery day.
    pub chain_height: u64,
    pub blocks: u64,
    pub transactions: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub ticks_per_day: u64,
    pub reference_chain: String,
    pub invariants_held: bool,
    pub local_balancing_ratio: f64,
    pub days: Vec<DayReport>,
    pub households: Vec<HouseholdRow>,
}

fn hundredths(num: u64, den: u64) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let x = (num as u128 * 200 + den as u128) / (2 * den as u128);
    x as f64 / 100.0
}

fn stats<'a>(rounds: impl Iterator<Item = &'a RoundIn>) -> PriceStats {
    let mut s = PriceStats { buyer_min: u64::MAX, seller_min: u64::MAX, ..PriceStats::default() };
    let (mut bw, mut sw) = (0u64, 0u64);
    for r in rounds {
        s.rounds += 1;
        s.surplus += r.surplus;
        if r.traded_volume == 0 {
            continue;
        }
        s.traded_rounds += 1;
        s.volume += r.traded_volume;
        s.buyer_min = s.buyer_min.min(r.buyer_price);
        s.buyer_max = s.buyer_max.max(r.buyer_price);
        s.seller_min = s.seller_min.min(r.seller_price);
        s.seller_max = s.seller_max.max(r.seller_price);
        bw += r.buyer_price * r.traded_volume;
        sw += r.seller_price * r.traded_volume;
    }
    if s.traded_rounds == 0 {
        s.buyer_min = 0;
        s.seller_min = 0;
    }
    s.buyer_mean = hundredths(bw, s.volume);
    s.seller_mean = hundredths(sw, s.volume);
    s
}

fn ratio(local: u64, import: u64, export: u64) -> f64 {
    balancing_ppm(local, import, export) as f64 / 1e6
}

/// Builds the report of the run in `dir`.
pub fn report(dir: &Path) -> Result<Report> {
    let summary: Summary = io::read_json(&dir.join(io::SUMMARY))?;
    let sc: Scenario = io::read_json(&dir.join(io::SCENARIO))?;
    let metrics: Vec<MetricIn> = io::read_csv(&dir.join(io::METRICS))?;
    let rounds: Vec<RoundIn> = io::read_csv(&dir.join(io::ROUNDS))?;
    let blocks = io::read_chain(&io::chain_file(dir, &summary.reference_chain))
        .with_context(|| format!("reference chain of {}", dir.display()))?;
    let tpd = summary.ticks_per_day;
    let mut days = Vec::new();
    for d in 0..summary.days {
        let mut r = DayReport { day: d, ..DayReport::default() };
        for m in metrics.iter().filter(|m| m.day == d) {
            r.local_delivered += m.local_delivered;
            r.import += m.import;
            r.export += m.export;
            r.shortfall += m.shortfall;
            r.refund += m.refund;
            r.penalty += m.penalty;
        }
        r.local_balancing_ratio = ratio(r.local_delivered, r.import, r.export);
        let of = |market: &'static str| rounds.iter().filter(move |x| x.day == d && x.market == market);
        r.day_ahead = stats(of("day-ahead"));
        r.intraday = stats(of("intraday"));
        r.flexibility = stats(of("flexibility"));
        r.market_surplus = r.day_ahead.surplus + r.intraday.surplus + r.flexibility.surplus;
        let end = (d as u64 + 2) * tpd;
        let start = (d as u64 + 1) * tpd;
        for b in &blocks {
            let t = b.round * summary.round_ticks;
            if t < end {
                r.chain_height = r.chain_height.max(b.height);
            }
            if t >= start && t < end {
                r.blocks += 1;
                r.transactions += b.transactions.len() as u64;
            }
        }
        days.push(r);
    }
    let (l, i, e) = days.iter().fold((0, 0, 0), |a, d| (a.0 + d.local_delivered, a.1 + d.import, a.2 + d.export));
    Ok(Report {
        scenario: sc.name,
        seed: summary.seed,
        ticks_per_day: tpd,
        reference_chain: summary.reference_chain,
        invariants_held: summary.invariants_held,
        local_balancing_ratio: ratio(l, i, e),
        days,
        households: summary.households,
    })
}

/// Plain-text tables.
pub fn render(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {}  seed {}  ticks/day {}  chain {}", r.scenario, r.seed, r.ticks_per_day, r.reference_chain);
    let _ = writeln!(
        s,
        "invariants {}  local balancing ratio {:.4}\n",
        if r.invariants_held { "held" } else { "VIOLATED" },
        r.local_balancing_ratio
    );
    let _ = writeln!(
        s,
        "{:>3} {:>9} {:>9} {:>9} {:>6} {:>12} {:>12} {:>9} {:>7} {:>7} {:>7} {:>8} {:>7} {:>6}",
        "day", "local Wh", "import", "export", "ratio", "DA buy c/kWh", "ID buy c/kWh", "short Wh", "refund", "penalty", "surplus", "height", "blocks", "txs"
    );
    for d in &r.days {
        let _ = writeln!(
            s,
            "{:>3} {:>9} {:>9} {:>9} {:>6.3} {:>12.2} {:>12.2} {:>9} {:>7} {:>7} {:>7} {:>8} {:>7} {:>6}",
            d.day,
            d.local_delivered,
            d.import,
            d.export,
            d.local_balancing_ratio,
            d.day_ahead.buyer_mean,
            d.intraday.buyer_mean,
            d.shortfall,
            d.refund,
            d.penalty,
            d.market_surplus,
            d.chain_height,
            d.blocks,
            d.transactions
        );
    }
    let _ = writeln!(s, "\n{:<12} {:>10} {:>14} {:>10}", "household", "cost", "counterfactual", "saving");
    for h in &r.households {
        let _ = writeln!(s, "{:<12} {:>10} {:>14} {:>10}", h.name, h.cost, h.counterfactual_cost, h.saving);
    }
    s
}
