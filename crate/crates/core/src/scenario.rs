//! Scenario description: who takes part, what they own, how the network and
//! validators misbehave. Durations in the network and fault sections are
//! simulated seconds; they are scaled to ticks with the calendar.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agents::{HouseholdProfile, Margins};
use crate::control::{Cmp, Condition, ResourceKind};
use crate::market::Calendar;
use crate::units::{Centi, PricePerKwh, Tick, Wh, SLOTS_PER_DAY};

pub const SCHEMA_VERSION: u32 = 1;

fn default_round_s() -> u64 {
    60
}

fn default_tolerance() -> Wh {
    50
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    /// Delivery days.
    pub days: u32,
    #[serde(default)]
    pub calendar: Calendar,
    /// Seconds between ledger rounds.
    #[serde(default = "default_round_s")]
    pub round_s: u64,
    /// Real-time tracking tolerance per tick.
    #[serde(default = "default_tolerance")]
    pub tolerance_wh: Wh,
    #[serde(default)]
    pub margins: Margins,
    pub validators: ValidatorSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub operator_balance: Centi,
    #[serde(default)]
    pub dso: DsoSpec,
    #[serde(default)]
    pub aggregators: Vec<AggregatorSpec>,
    pub households: Vec<HouseholdSpec>,
    #[serde(default)]
    pub events: EventSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidatorSpec {
    pub count: u32,
    #[serde(default)]
    pub byzantine: Vec<u32>,
    #[serde(default)]
    pub crashed: Vec<CrashSpec>,
    /// Test fixture: validators skip signature checks.
    #[serde(default)]
    pub unchecked_signatures: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashSpec {
    pub index: u32,
    #[serde(default)]
    pub at_s: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default = "one")]
    pub base_delay_s: u64,
    #[serde(default)]
    pub jitter_s: u64,
    #[serde(default)]
    pub drop_rate: f64,
    #[serde(default)]
    pub partitions: Vec<PartitionSpec>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec { base_delay_s: 1, jitter_s: 0, drop_rate: 0.0, partitions: Vec::new() }
    }
}

/// Nodes named in different groups cannot talk during `[start_s, end_s)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub start_s: u64,
    pub end_s: u64,
    pub groups: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsoSpec {
    #[serde(default)]
    pub balance: Centi,
    #[serde(default)]
    pub reserves: Vec<ReserveSpec>,
}

/// Flexibility the distribution operator buys for one slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReserveSpec {
    pub day: u32,
    pub hour: u32,
    pub volume: Wh,
    pub price_cap: PricePerKwh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorSpec {
    pub name: String,
    pub balance: Centi,
    #[serde(default)]
    pub calls: Vec<CallSpec>,
}

/// A standing call for reduction over `first_hour..=last_hour` of `day`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallSpec {
    pub day: u32,
    pub first_hour: u32,
    pub last_hour: u32,
    pub target: Wh,
    pub price_cap: PricePerKwh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdSpec {
    pub name: String,
    pub balance: Centi,
    pub profile: HouseholdProfile,
    /// Sends conflicting duplicate registrations.
    #[serde(default)]
    pub byzantine: bool,
    #[serde(default)]
    pub crash_at_s: Option<u64>,
    #[serde(default)]
    pub control: Option<ControlSpec>,
}

/// An on-premises resource shared by the HEMS and local controllers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub resource: String,
    #[serde(default = "device_kind")]
    pub kind: ResourceKind,
    #[serde(default)]
    pub scope: Option<String>,
    pub hems_rank: u32,
    pub controllers: Vec<ControllerSpec>,
    /// Indoor temperature per hour, in tenths of a degree.
    pub temperature: Vec<i64>,
}

fn device_kind() -> ResourceKind {
    ResourceKind::Device
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub name: String,
    pub rank: u32,
    pub rules: Vec<RuleSpec>,
}

/// Extra consumption of `value` Wh on the tick the rule fires.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub rule_id: String,
    pub event: String,
    #[serde(default = "Condition::always")]
    pub condition: Condition,
    pub command: String,
    pub value: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    /// Realized PV scaled by `numerator / denominator`; forecasts never see it.
    #[serde(default)]
    pub pv_derate: Vec<DerateSpec>,
    #[serde(default)]
    pub missing_readings: Vec<ReadingGap>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerateSpec {
    pub household: String,
    pub day: u32,
    pub numerator: u64,
    pub denominator: u64,
}

/// The distribution operator never receives this meter reading.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadingGap {
    pub household: String,
    pub day: u32,
    pub hour: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

pub fn validator_name(i: usize) -> String {
    format!("validator-{i}")
}

pub const OPERATOR: &str = "operator";
pub const DSO: &str = "dso";

pub fn hub_name(household: &str) -> String {
    format!("{household}/hub")
}

pub fn controller_name(household: &str, controller: &str) -> String {
    format!("{household}/{controller}")
}

impl Scenario {
    /// Simulated seconds to ticks.
    pub fn ticks(&self, seconds: u64) -> Tick {
        seconds * self.calendar.ticks_per_day / 86_400
    }

    pub fn round_ticks(&self) -> Tick {
        self.ticks(self.round_s).max(1)
    }

    /// Every node in the run, in node-id order.
    pub fn node_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.validators.count as usize).map(validator_name).collect();
        v.push(OPERATOR.into());
        v.push(DSO.into());
        v.extend(self.aggregators.iter().map(|a| a.name.clone()));
        v.extend(self.households.iter().map(|h| h.name.clone()));
        for h in &self.households {
            if let Some(c) = &h.control {
                v.push(hub_name(&h.name));
                v.extend(c.controllers.iter().map(|k| controller_name(&h.name, &k.name)));
            }
        }
        v
    }

    pub fn household_index(&self, name: &str) -> Option<usize> {
        self.households.iter().position(|h| h.name == name)
    }

    /// Every violation, with the path of the offending field.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut push = |path: String, message: String| v.push(Violation { path, message });
        if self.schema_version != SCHEMA_VERSION {
            push("schema_version".into(), format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        if self.name.is_empty() {
            push("name".into(), "must not be empty".into());
        }
        if self.days == 0 || self.days > 366 {
            push("days".into(), "must be within 1..=366".into());
        }
        if let Err(e) = self.calendar.check() {
            push("calendar".into(), e.into());
        }
        let calendar_ok = self.calendar.check().is_ok();
        if self.round_s == 0 {
            push("round_s".into(), "must be positive".into());
        } else if calendar_ok && self.round_ticks() > self.calendar.rt_tick() {
            push("round_s".into(), "rounds must be no longer than a real-time tick".into());
        }

        let vc = self.validators.count;
        if vc == 0 {
            push("validators.count".into(), "at least one validator is required".into());
        }
        let mut faulty = BTreeSet::new();
        for (i, &b) in self.validators.byzantine.iter().enumerate() {
            if b >= vc {
                push(format!("validators.byzantine[{i}]"), format!("no validator {b}"));
            }
            faulty.insert(b);
        }
        for (i, c) in self.validators.crashed.iter().enumerate() {
            if c.index >= vc {
                push(format!("validators.crashed[{i}].index"), format!("no validator {}", c.index));
            }
            if !faulty.insert(c.index) {
                push(format!("validators.crashed[{i}].index"), format!("validator {} is already faulty", c.index));
            }
        }
        if vc > 0 && faulty.len() as u32 >= vc {
            push("validators".into(), "at least one validator must stay honest and alive".into());
        }

        let n = &self.network;
        if n.base_delay_s == 0 {
            push("network.base_delay_s".into(), "must be at least one second".into());
        }
        if !(n.drop_rate.is_finite() && (0.0..1.0).contains(&n.drop_rate)) {
            push("network.drop_rate".into(), "must be within [0, 1)".into());
        }

        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        let mut claim = |name: &str, path: String, push: &mut dyn FnMut(String, String)| {
            if name.is_empty() || name.contains('/') {
                push(path.clone(), format!("invalid name {name:?}"));
            }
            if let Some(first) = seen.insert(name.into(), path.clone()) {
                push(path, format!("duplicate agent id {name:?}, first used at {first}"));
            }
        };
        for i in 0..vc as usize {
            claim(&validator_name(i), "validators".into(), &mut push);
        }
        claim(OPERATOR, "operator".into(), &mut push);
        claim(DSO, "dso".into(), &mut push);
        for (i, a) in self.aggregators.iter().enumerate() {
            claim(&a.name, format!("aggregators[{i}].name"), &mut push);
        }
        for (i, h) in self.households.iter().enumerate() {
            claim(&h.name, format!("households[{i}].name"), &mut push);
        }
        let names: BTreeSet<String> = self.node_names().into_iter().collect();

        for (i, p) in n.partitions.iter().enumerate() {
            let at = format!("network.partitions[{i}]");
            if p.start_s >= p.end_s {
                push(format!("{at}.end_s"), "must be after start_s".into());
            }
            if p.groups.len() < 2 {
                push(format!("{at}.groups"), "a partition needs at least two groups".into());
            }
            let mut placed = BTreeSet::new();
            for (g, group) in p.groups.iter().enumerate() {
                for (k, name) in group.iter().enumerate() {
                    if !names.contains(name) {
                        push(format!("{at}.groups[{g}][{k}]"), format!("unknown node {name:?}"));
                    } else if !placed.insert(name) {
                        push(format!("{at}.groups[{g}][{k}]"), format!("node {name:?} is in two groups"));
                    }
                }
            }
        }

        if self.households.is_empty() {
            push("households".into(), "at least one household is required".into());
        }
        for (i, h) in self.households.iter().enumerate() {
            let at = format!("households[{i}]");
            for (path, msg) in h.profile.violations() {
                push(format!("{at}.profile.{path}"), msg);
            }
            if let Some(c) = &h.control {
                let at = format!("{at}.control");
                if c.resource.is_empty() {
                    push(format!("{at}.resource"), "must not be empty".into());
                }
                if c.temperature.len() != SLOTS_PER_DAY as usize {
                    push(format!("{at}.temperature"), format!("needs {SLOTS_PER_DAY} hourly values, got {}", c.temperature.len()));
                }
                if h.profile.flex_device.is_none() {
                    push(at.to_string(), "a controlled resource needs a flex_device to act on".into());
                }
                let mut ids = BTreeSet::new();
                for (k, ctl) in c.controllers.iter().enumerate() {
                    let cat = format!("{at}.controllers[{k}]");
                    if ctl.name.is_empty() || ctl.name.contains('/') || ctl.name == "hub" {
                        push(format!("{cat}.name"), format!("invalid controller name {:?}", ctl.name));
                    }
                    if !ids.insert(ctl.name.as_str()) {
                        push(format!("{cat}.name"), format!("duplicate controller {:?}", ctl.name));
                    }
                    for (r, rule) in ctl.rules.iter().enumerate() {
                        if rule.condition.cmp != Cmp::Always && rule.condition.variable.is_empty() {
                            push(format!("{cat}.rules[{r}].condition.variable"), "must name a variable".into());
                        }
                        if rule.value < 0 {
                            push(format!("{cat}.rules[{r}].value"), "must not be negative".into());
                        }
                    }
                }
            }
        }

        for (i, r) in self.dso.reserves.iter().enumerate() {
            let at = format!("dso.reserves[{i}]");
            if r.day >= self.days {
                push(format!("{at}.day"), format!("day {} outside the {}-day horizon", r.day, self.days));
            }
            if r.hour >= SLOTS_PER_DAY {
                push(format!("{at}.hour"), "must be within 0..24".into());
            }
            if r.volume < crate::units::TRADE_UNIT_WH {
                push(format!("{at}.volume"), "below one trade unit".into());
            }
        }
        for (i, a) in self.aggregators.iter().enumerate() {
            for (k, c) in a.calls.iter().enumerate() {
                let at = format!("aggregators[{i}].calls[{k}]");
                if c.day >= self.days {
                    push(format!("{at}.day"), format!("day {} outside the {}-day horizon", c.day, self.days));
                }
                if c.first_hour > c.last_hour || c.last_hour >= SLOTS_PER_DAY {
                    push(at.to_string(), format!("hours {}..={} outside the day", c.first_hour, c.last_hour));
                }
                if c.target < crate::units::TRADE_UNIT_WH {
                    push(format!("{at}.target"), "below one trade unit".into());
                }
            }
        }

        for (i, d) in self.events.pv_derate.iter().enumerate() {
            let at = format!("events.pv_derate[{i}]");
            if self.household_index(&d.household).is_none() {
                push(format!("{at}.household"), format!("unknown household {:?}", d.household));
            }
            if d.day >= self.days {
                push(format!("{at}.day"), format!("day {} outside the {}-day horizon", d.day, self.days));
            }
            if d.denominator == 0 || d.numerator > d.denominator {
                push(at.to_string(), "factor must be within [0, 1]".into());
            }
        }
        for (i, g) in self.events.missing_readings.iter().enumerate() {
            let at = format!("events.missing_readings[{i}]");
            if self.household_index(&g.household).is_none() {
                push(format!("{at}.household"), format!("unknown household {:?}", g.household));
            }
            if g.day >= self.days {
                push(format!("{at}.day"), format!("day {} outside the {}-day horizon", g.day, self.days));
            }
            if g.hour >= SLOTS_PER_DAY {
                push(format!("{at}.hour"), "must be within 0..24".into());
            }
        }
        v
    }

    /// The validated scenario or every violation.
    pub fn validated(self) -> Result<Self, Vec<Violation>> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(v)
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::agents::FlexibleAppliance;

    pub fn minimal() -> Scenario {
        let mut pv = HouseholdProfile::flat(300, 30, 10);
        pv.pv_peak = 3000;
        Scenario {
            schema_version: SCHEMA_VERSION,
            name: "t".into(),
            seed: 1,
            days: 1,
            calendar: Calendar::default(),
            round_s: 60,
            tolerance_wh: 50,
            margins: Margins { ask: 5, bid: 5 },
            validators: ValidatorSpec { count: 1, byzantine: Vec::new(), crashed: Vec::new(), unchecked_signatures: false },
            network: NetworkSpec::default(),
            operator_balance: 0,
            dso: DsoSpec::default(),
            aggregators: Vec::new(),
            households: alloc::vec![
                HouseholdSpec { name: "pv".into(), balance: 10_000, profile: pv, byzantine: false, crash_at_s: None, control: None },
                HouseholdSpec {
                    name: "load".into(),
                    balance: 10_000,
                    profile: HouseholdProfile::flat(600, 30, 10),
                    byzantine: false,
                    crash_at_s: None,
                    control: None,
                },
            ],
            events: EventSpec::default(),
        }
    }

    #[test]
    fn minimal_is_valid() {
        assert_eq!(minimal().violations(), Vec::new());
    }

    #[test]
    fn reports_every_violation() {
        let mut s = minimal();
        s.households[1].name = "pv".into();
        s.households[0].profile.appliances.push(FlexibleAppliance {
            appliance_id: "washer".into(),
            energy_per_run: 900,
            duration: 3,
            earliest: 20,
            latest: 25,
            interruptible: false,
        });
        s.network.drop_rate = 1.5;
        let v = s.violations();
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v.iter().any(|x| x.message.contains("duplicate agent id")));
        assert!(v.iter().any(|x| x.path == "households[0].profile.appliances[0]" && x.message.contains("washer")));
        assert!(v.iter().any(|x| x.path == "network.drop_rate"));
    }

    #[test]
    fn seconds_scale_with_the_day() {
        let mut s = minimal();
        assert_eq!(s.ticks(60), 60);
        s.calendar.ticks_per_day = 1440;
        assert_eq!(s.ticks(600), 10);
        assert_eq!(s.round_ticks(), 1);
    }
}
