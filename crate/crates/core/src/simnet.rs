//! Deterministic discrete-event message transport with seeded delay, loss,
//! partitions and node crashes.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::crypto::tagged_hash;
use crate::units::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

/// During `[start, end)` nodes in different groups cannot reach each other.
/// A node listed in no group is reachable by everyone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub start: Tick,
    pub end: Tick,
    pub groups: Vec<Vec<NodeId>>,
}

impl Partition {
    fn group_of(&self, n: NodeId) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&n))
    }

    pub fn separates(&self, a: NodeId, b: NodeId, t: Tick) -> bool {
        if t < self.start || t >= self.end {
            return false;
        }
        match (self.group_of(a), self.group_of(b)) {
            (Some(x), Some(y)) => x != y,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeFault {
    pub crash_at: Option<Tick>,
    pub byzantine: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub base_delay: Tick,
    pub jitter: Tick,
    pub drop_rate: f64,
    pub partitions: Vec<Partition>,
    pub faults: BTreeMap<NodeId, NodeFault>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { base_delay: 1, jitter: 0, drop_rate: 0.0, partitions: Vec::new(), faults: BTreeMap::new() }
    }
}

impl NetConfig {
    pub fn crashed(&self, n: NodeId, t: Tick) -> bool {
        self.faults.get(&n).and_then(|f| f.crash_at).is_some_and(|c| t >= c)
    }

    pub fn byzantine(&self, n: NodeId) -> bool {
        self.faults.get(&n).is_some_and(|f| f.byzantine)
    }

    pub fn partitioned(&self, a: NodeId, b: NodeId, t: Tick) -> bool {
        self.partitions.iter().any(|p| p.separates(a, b, t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fate {
    Delivered,
    Dropped,
    Partitioned,
    Crashed,
}

impl Fate {
    pub fn as_str(self) -> &'static str {
        match self {
            Fate::Delivered => "delivered",
            Fate::Dropped => "dropped",
            Fate::Partitioned => "partitioned",
            Fate::Crashed => "crashed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope<M> {
    pub from: NodeId,
    pub to: NodeId,
    pub seq: u64,
    pub send_tick: Tick,
    pub deliver_tick: Tick,
    pub kind: &'static str,
    pub payload: M,
}

/// One line of the optional message trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub from: u32,
    pub to: u32,
    pub kind: &'static str,
    pub send_tick: Tick,
    pub deliver_tick: Option<Tick>,
    pub fate: Fate,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub partitioned: u64,
    pub crashed: u64,
}

pub struct SimNet<M> {
    pub config: NetConfig,
    rng: ChaCha8Rng,
    queue: BTreeMap<(Tick, NodeId, u64), Envelope<M>>,
    last_delivery: BTreeMap<(NodeId, NodeId), Tick>,
    next_seq: u64,
    pub stats: NetStats,
    trace: Option<Vec<TraceRecord>>,
}

impl<M> SimNet<M> {
    pub fn new(config: NetConfig, seed: u64) -> Self {
        let seed = tagged_hash("vdg/simnet", &[&seed.to_be_bytes()]);
        SimNet {
            config,
            rng: ChaCha8Rng::from_seed(seed.0),
            queue: BTreeMap::new(),
            last_delivery: BTreeMap::new(),
            next_seq: 0,
            stats: NetStats::default(),
            trace: None,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(core::mem::take).unwrap_or_default()
    }

    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn record(&mut self, seq: u64, from: NodeId, to: NodeId, kind: &'static str, send: Tick, deliver: Option<Tick>, fate: Fate) {
        match fate {
            Fate::Delivered => self.stats.delivered += 1,
            Fate::Dropped => self.stats.dropped += 1,
            Fate::Partitioned => self.stats.partitioned += 1,
            Fate::Crashed => self.stats.crashed += 1,
        }
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceRecord { seq, from: from.0, to: to.0, kind, send_tick: send, deliver_tick: deliver, fate });
        }
    }

    /// Schedules a message. Returns the delivery tick, or `None` if the
    /// message was lost. The random draws happen for every send so the
    /// schedule of later messages does not depend on earlier fates.
    pub fn send(&mut self, from: NodeId, to: NodeId, now: Tick, kind: &'static str, payload: M) -> Option<Tick> {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.stats.sent += 1;
        let jitter = if self.config.jitter == 0 { 0 } else { self.rng.next_u64() % (self.config.jitter + 1) };
        let lost = self.unit() < self.config.drop_rate;

        let fate = if self.config.crashed(from, now) {
            Fate::Crashed
        } else if self.config.partitioned(from, to, now) {
            Fate::Partitioned
        } else if lost {
            Fate::Dropped
        } else {
            Fate::Delivered
        };
        if fate != Fate::Delivered {
            self.record(seq, from, to, kind, now, None, fate);
            return None;
        }
        let earliest = now + self.config.base_delay + jitter;
        let last = self.last_delivery.entry((from, to)).or_insert(0);
        let deliver_tick = earliest.max(*last);
        *last = deliver_tick;
        self.queue.insert(
            (deliver_tick, from, seq),
            Envelope { from, to, seq, send_tick: now, deliver_tick, kind, payload },
        );
        Some(deliver_tick)
    }

    pub fn next_delivery(&self) -> Option<Tick> {
        self.queue.keys().next().map(|k| k.0)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Removes and returns everything due by `clock`, in (tick, sender,
    /// sequence) order. Messages whose receiver has crashed or is cut off by
    /// a partition at delivery time are discarded.
    pub fn advance(&mut self, clock: Tick) -> Vec<Envelope<M>> {
        let mut out = Vec::new();
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > clock {
                break;
            }
            let env = entry.remove();
            let fate = if self.config.crashed(env.to, env.deliver_tick) {
                Fate::Crashed
            } else if self.config.partitioned(env.from, env.to, env.deliver_tick) {
                Fate::Partitioned
            } else {
                Fate::Delivered
            };
            let delivered = (fate == Fate::Delivered).then_some(env.deliver_tick);
            self.record(env.seq, env.from, env.to, env.kind, env.send_tick, delivered, fate);
            if fate == Fate::Delivered {
                out.push(env);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn net(cfg: NetConfig) -> SimNet<u32> {
        SimNet::new(cfg, 42)
    }

    #[test]
    fn no_loss_no_jitter_is_base_delay() {
        let mut n = net(NetConfig { base_delay: 3, ..NetConfig::default() });
        assert_eq!(n.send(NodeId(1), NodeId(2), 10, "m", 7), Some(13));
        assert!(n.advance(12).is_empty());
        let d = n.advance(13);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].payload, 7);
    }

    #[test]
    fn drop_rate_one_drops_everything() {
        let mut n = net(NetConfig { drop_rate: 1.0, ..NetConfig::default() });
        for i in 0..100 {
            assert_eq!(n.send(NodeId(1), NodeId(2), i, "m", 0), None);
        }
        assert!(n.advance(1000).is_empty());
        assert_eq!(n.stats.dropped, 100);
    }

    fn drop_set(seed: u64) -> Vec<u64> {
        let mut n: SimNet<u32> = SimNet::new(NetConfig { drop_rate: 0.3, jitter: 5, ..NetConfig::default() }, seed);
        (0..1000).filter(|&i| n.send(NodeId(i as u32 % 7), NodeId(9), i, "m", 0).is_none()).collect()
    }

    #[test]
    fn same_seed_same_drops() {
        let a = drop_set(5);
        assert_eq!(a, drop_set(5));
        assert_ne!(a, drop_set(6));
        // roughly 30 %
        assert!((200..400).contains(&a.len()), "{}", a.len());
    }

    #[test]
    fn same_tick_ordered_by_sender() {
        let mut n = net(NetConfig::default());
        n.send(NodeId(5), NodeId(0), 0, "m", 50);
        n.send(NodeId(2), NodeId(0), 0, "m", 20);
        n.send(NodeId(2), NodeId(0), 0, "m", 21);
        let got: Vec<u32> = n.advance(1).into_iter().map(|e| e.payload).collect();
        assert_eq!(got, vec![20, 21, 50]);
        assert!(n.advance(100).is_empty());
    }

    #[test]
    fn fifo_per_channel_under_jitter() {
        let mut n = net(NetConfig { jitter: 20, ..NetConfig::default() });
        for i in 0..200u32 {
            n.send(NodeId(1), NodeId(2), i as u64, "m", i);
            n.send(NodeId(3), NodeId(2), i as u64, "m", 1000 + i);
        }
        let got = n.advance(10_000);
        let a: Vec<u32> = got.iter().filter(|e| e.from == NodeId(1)).map(|e| e.payload).collect();
        let b: Vec<u32> = got.iter().filter(|e| e.from == NodeId(3)).map(|e| e.payload).collect();
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        assert!(got.windows(2).all(|w| w[0].deliver_tick <= w[1].deliver_tick));
    }

    #[test]
    fn partition_blocks_cross_traffic_only_inside_window() {
        let p = Partition { start: 10, end: 20, groups: vec![vec![NodeId(1), NodeId(2)], vec![NodeId(3)]] };
        let mut n = net(NetConfig { partitions: vec![p], ..NetConfig::default() });
        assert!(n.send(NodeId(1), NodeId(3), 5, "m", 0).is_some());
        assert!(n.send(NodeId(1), NodeId(3), 12, "m", 1).is_none());
        assert!(n.send(NodeId(1), NodeId(2), 12, "m", 2).is_some());
        assert!(n.send(NodeId(3), NodeId(4), 12, "m", 3).is_some());
        // sent before the partition, due inside it: lost
        assert!(n.send(NodeId(3), NodeId(1), 9, "m", 4).is_some());
        assert!(n.send(NodeId(1), NodeId(3), 25, "m", 5).is_some());
        let got: Vec<u32> = n.advance(100).into_iter().map(|e| e.payload).collect();
        assert_eq!(got, vec![0, 2, 3, 5]);
        assert_eq!(n.stats.partitioned, 2);
    }

    #[test]
    fn crashed_node_neither_sends_nor_receives() {
        let mut faults = BTreeMap::new();
        faults.insert(NodeId(2), NodeFault { crash_at: Some(10), byzantine: false });
        let mut n = net(NetConfig { faults, ..NetConfig::default() });
        assert!(n.send(NodeId(2), NodeId(1), 9, "m", 0).is_some());
        assert!(n.send(NodeId(2), NodeId(1), 10, "m", 1).is_none());
        assert!(n.send(NodeId(1), NodeId(2), 8, "m", 2).is_some());
        assert!(n.send(NodeId(1), NodeId(2), 9, "m", 3).is_some());
        let got: Vec<u32> = n.advance(100).into_iter().map(|e| e.payload).collect();
        assert_eq!(got, vec![2, 0]);
    }

    #[test]
    fn trace_records_every_fate() {
        let mut n = net(NetConfig { drop_rate: 0.5, ..NetConfig::default() });
        n.enable_trace();
        for i in 0..50 {
            n.send(NodeId(1), NodeId(2), i, "m", 0);
        }
        n.advance(1000);
        let t = n.take_trace();
        assert_eq!(t.len(), 50);
        assert_eq!(n.stats.sent, n.stats.delivered + n.stats.dropped);
    }
}
