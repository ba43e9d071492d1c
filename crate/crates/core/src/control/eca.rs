//! On-premises event-condition-action rules.

use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::lease::LeaseTable;
use crate::crypto::AgentId;
use crate::units::Tick;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub kind: String,
    pub value: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cmp {
    Always,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

/// `variable cmp threshold`, where `variable` is a key of the local state or
/// `"event"` for the triggering event's value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub variable: String,
    pub cmp: Cmp,
    pub threshold: i64,
}

impl Condition {
    pub fn always() -> Self {
        Condition { variable: String::new(), cmp: Cmp::Always, threshold: 0 }
    }

    pub fn holds(&self, event: &Event, local: &BTreeMap<String, i64>) -> bool {
        if self.cmp == Cmp::Always {
            return true;
        }
        let v = if self.variable == "event" {
            event.value
        } else {
            match local.get(&self.variable) {
                Some(v) => *v,
                None => return false,
            }
        };
        match self.cmp {
            Cmp::Always => true,
            Cmp::Lt => v < self.threshold,
            Cmp::Le => v <= self.threshold,
            Cmp::Gt => v > self.threshold,
            Cmp::Ge => v >= self.threshold,
            Cmp::Eq => v == self.threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub resource: String,
    pub command: String,
    pub value: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcaRule {
    pub rule_id: String,
    pub owner: AgentId,
    /// Event kind this rule reacts to.
    pub event: String,
    pub condition: Condition,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suppressed {
    NoMatch,
    Condition,
    NoLease,
}

impl Suppressed {
    pub fn as_str(&self) -> &'static str {
        match self {
            Suppressed::NoMatch => "no-match",
            Suppressed::Condition => "condition",
            Suppressed::NoLease => "no-lease",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Emitted(Action),
    Suppressed(Suppressed),
}

/// Runs one rule against one event. The action is emitted only if the
/// condition holds and the rule's owner holds the lease on the target
/// resource at `clock`.
pub fn execute_eca(
    rule: &EcaRule,
    event: &Event,
    clock: Tick,
    local: &BTreeMap<String, i64>,
    leases: &LeaseTable,
) -> Outcome {
    if rule.event != event.kind {
        return Outcome::Suppressed(Suppressed::NoMatch);
    }
    if !rule.condition.holds(event, local) {
        return Outcome::Suppressed(Suppressed::Condition);
    }
    match leases.holder_at(&rule.action.resource, clock) {
        Some(l) if l.holder == rule.owner => Outcome::Emitted(rule.action.clone()),
        _ => Outcome::Suppressed(Suppressed::NoLease),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::lease::{ControlResource, ResourceKind};
    use crate::crypto::sha256;
    use alloc::vec;

    const OWNER: AgentId = AgentId([1; 20]);
    const OTHER: AgentId = AgentId([2; 20]);

    fn setup(holder: AgentId) -> (EcaRule, LeaseTable) {
        let mut t = LeaseTable::new(&[ControlResource {
            resource_id: "heater".into(),
            kind: ResourceKind::Device,
            scope: None,
            priorities: vec![(OWNER, 1), (OTHER, 1)],
        }]);
        t.acquire(sha256(b"l"), holder, "heater", 0, 100).unwrap();
        let rule = EcaRule {
            rule_id: "warm-up".into(),
            owner: OWNER,
            event: "temperature".into(),
            condition: Condition { variable: "event".into(), cmp: Cmp::Lt, threshold: 19 },
            action: Action { resource: "heater".into(), command: "on".into(), value: 1 },
        };
        (rule, t)
    }

    fn cold() -> Event {
        Event { kind: "temperature".into(), value: 17 }
    }

    #[test]
    fn emits_when_condition_and_lease_hold() {
        let (rule, t) = setup(OWNER);
        assert_eq!(execute_eca(&rule, &cold(), 10, &BTreeMap::new(), &t), Outcome::Emitted(rule.action.clone()));
    }

    #[test]
    fn suppressed_without_lease() {
        let (rule, t) = setup(OTHER);
        assert_eq!(execute_eca(&rule, &cold(), 10, &BTreeMap::new(), &t), Outcome::Suppressed(Suppressed::NoLease));
        let (rule, t) = setup(OWNER);
        assert_eq!(execute_eca(&rule, &cold(), 100, &BTreeMap::new(), &t), Outcome::Suppressed(Suppressed::NoLease));
    }

    #[test]
    fn suppressed_on_false_condition() {
        let (rule, t) = setup(OWNER);
        let warm = Event { kind: "temperature".into(), value: 22 };
        assert_eq!(execute_eca(&rule, &warm, 10, &BTreeMap::new(), &t), Outcome::Suppressed(Suppressed::Condition));
        let other = Event { kind: "price".into(), value: 0 };
        assert_eq!(execute_eca(&rule, &other, 10, &BTreeMap::new(), &t), Outcome::Suppressed(Suppressed::NoMatch));
    }

    #[test]
    fn local_state_conditions() {
        let c = Condition { variable: "occupancy".into(), cmp: Cmp::Ge, threshold: 1 };
        let mut local = BTreeMap::new();
        assert!(!c.holds(&cold(), &local));
        local.insert("occupancy".into(), 2);
        assert!(c.holds(&cold(), &local));
        assert!(Condition::always().holds(&cold(), &local));
    }
}
