use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::crypto::{AgentId, Hash32};
use crate::units::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceKind {
    Device,
    DeviceSet,
    EnvironmentVariable,
}

impl Encode for ResourceKind {
    fn encode(&self, w: &mut Writer) {
        w.u8(*self as u8);
    }
}

impl Decode for ResourceKind {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(ResourceKind::Device),
            1 => Ok(ResourceKind::DeviceSet),
            2 => Ok(ResourceKind::EnvironmentVariable),
            tag => Err(DecodeError::BadTag { what: "resource kind", tag }),
        }
    }
}

/// Something a controller can own, with the priority table fixed when the
/// device was deployed. Higher rank preempts lower.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlResource {
    pub resource_id: String,
    pub kind: ResourceKind,
    pub scope: Option<String>,
    pub priorities: Vec<(AgentId, u32)>,
}

impl ControlResource {
    pub fn rank(&self, controller: &AgentId) -> Option<u32> {
        self.priorities.iter().find(|(a, _)| a == controller).map(|(_, r)| *r)
    }
}

impl Encode for ControlResource {
    fn encode(&self, w: &mut Writer) {
        w.str(&self.resource_id).put(&self.kind).opt(&self.scope).u32(self.priorities.len() as u32);
        for (a, r) in &self.priorities {
            w.put(a).u32(*r);
        }
    }
}

impl Decode for ControlResource {
    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let resource_id = r.string()?;
        let kind = r.get()?;
        let scope = r.opt()?;
        let n = r.u32()?;
        let mut priorities = Vec::new();
        for _ in 0..n {
            priorities.push((r.get()?, r.u32()?));
        }
        Ok(ControlResource { resource_id, kind, scope, priorities })
    }
}

/// Exclusive control of a resource over `[start, end)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlLease {
    pub lease_id: Hash32,
    pub resource_id: String,
    pub holder: AgentId,
    pub start: Tick,
    pub end: Tick,
    pub rank: u32,
}

impl ControlLease {
    pub fn active_at(&self, t: Tick) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, start: Tick, end: Tick) -> bool {
        self.start < end && start < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LeaseError {
    UnknownResource,
    NoPriority,
    Empty,
    Conflict,
    UnknownLease,
    NotHolder,
}

/// The lease table folded from a chain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaseTable {
    pub resources: BTreeMap<String, ControlResource>,
    pub leases: BTreeMap<Hash32, ControlLease>,
}

impl LeaseTable {
    pub fn new(resources: &[ControlResource]) -> Self {
        LeaseTable {
            resources: resources.iter().map(|r| (r.resource_id.clone(), r.clone())).collect(),
            leases: BTreeMap::new(),
        }
    }

    fn overlapping<'a>(&'a self, resource: &'a str, start: Tick, end: Tick) -> impl Iterator<Item = &'a ControlLease> {
        self.leases
            .values()
            .filter(move |l| l.resource_id == resource && l.overlaps(start, end))
    }

    /// Leases that a grant of `[start, end)` to `controller` would cut short.
    pub fn check_acquire(&self, controller: &AgentId, resource: &str, start: Tick, end: Tick) -> Result<Vec<Hash32>, LeaseError> {
        let res = self.resources.get(resource).ok_or(LeaseError::UnknownResource)?;
        let rank = res.rank(controller).ok_or(LeaseError::NoPriority)?;
        if end <= start {
            return Err(LeaseError::Empty);
        }
        let mut preempted = Vec::new();
        for l in self.overlapping(resource, start, end) {
            if l.rank >= rank {
                return Err(LeaseError::Conflict);
            }
            preempted.push(l.lease_id);
        }
        Ok(preempted)
    }

    pub fn acquire(&mut self, lease_id: Hash32, controller: AgentId, resource: &str, start: Tick, end: Tick) -> Result<Vec<Hash32>, LeaseError> {
        let preempted = self.check_acquire(&controller, resource, start, end)?;
        for id in &preempted {
            let l = self.leases.get_mut(id).expect("overlapping lease");
            l.end = start.max(l.start);
        }
        let rank = self.resources[resource].rank(&controller).expect("checked");
        self.leases.insert(
            lease_id,
            ControlLease { lease_id, resource_id: resource.into(), holder: controller, start, end, rank },
        );
        Ok(preempted)
    }

    pub fn check_release(&self, controller: &AgentId, lease_id: &Hash32) -> Result<(), LeaseError> {
        let l = self.leases.get(lease_id).ok_or(LeaseError::UnknownLease)?;
        if l.holder != *controller {
            return Err(LeaseError::NotHolder);
        }
        Ok(())
    }

    /// Frees the resource from `at`. Releasing an expired lease changes nothing.
    pub fn release(&mut self, controller: &AgentId, lease_id: &Hash32, at: Tick) -> Result<(), LeaseError> {
        self.check_release(controller, lease_id)?;
        let l = self.leases.get_mut(lease_id).expect("checked");
        if at < l.end {
            l.end = at.max(l.start);
        }
        Ok(())
    }

    pub fn holder_at(&self, resource: &str, t: Tick) -> Option<&ControlLease> {
        self.leases.values().find(|l| l.resource_id == resource && l.active_at(t))
    }
}
