//! The discrete-event loop for the distributed algorithms.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::energy::Meter;
use super::metrics::RunMetrics;
use super::oracle;
use super::scenario::{Algorithm, Setup};
use super::topology::Topology;
use super::{wire, SimError};
use crate::protocol::{NodeEvent, NodeState, Packet, PacketEntry};
use crate::rating::{DataPoint, NodeId};
use crate::semiglobal::{self, HopConfig};

#[derive(Debug, Clone)]
enum Kind {
    Link {
        a: NodeId,
        b: NodeId,
        up: bool,
    },
    Deliver(Packet),
    /// The sender is told one recipient missed a broadcast.
    Undelivered(PacketEntry),
    Start,
    Sample(DataPoint),
    Tick,
    Measure,
}

impl Kind {
    /// Same-instant order: topology first, then traffic, then local
    /// sensing, then timers, then measurement.
    fn class(&self) -> u8 {
        match self {
            Self::Link { .. } => 0,
            Self::Deliver(_) | Self::Undelivered(_) => 1,
            Self::Start | Self::Sample(_) => 2,
            Self::Tick => 3,
            Self::Measure => 4,
        }
    }
}

#[derive(Debug, Clone)]
struct Event {
    time: f64,
    node: NodeId,
    seq: u64,
    kind: Kind,
}

impl Event {
    fn key(&self) -> (f64, u8, NodeId, u64) {
        (self.time, self.kind.class(), self.node, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(b.2.cmp(&a.2))
            .then(b.3.cmp(&a.3))
    }
}

/// A broadcast as it left its sender.
#[derive(Debug, Clone, PartialEq)]
pub struct SentPacket {
    pub time: f64,
    pub packet: Packet,
}

/// A running network of protocol nodes.
pub struct Network<'s> {
    setup: &'s Setup,
    topology: Topology,
    nodes: BTreeMap<NodeId, NodeState>,
    meters: BTreeMap<NodeId, Meter>,
    heap: BinaryHeap<Event>,
    seq: u64,
    rng: ChaCha8Rng,
    events: u64,
    cap: u64,
    measurements: u64,
    correct: u64,
    last_time: f64,
    log: Option<Vec<SentPacket>>,
}

impl<'s> Network<'s> {
    pub fn new(setup: &'s Setup) -> Self {
        let topology = setup.topology.clone();
        let window = setup.window;
        let nodes: BTreeMap<NodeId, NodeState> = topology
            .ids()
            .map(|i| {
                let mut s = NodeState::new(i, setup.spec.clone(), window, topology.neighbors(i).iter().copied());
                s.set_invariant_checks(setup.invariant_checks);
                (i, s)
            })
            .collect();
        let meters = topology.ids().map(|i| (i, Meter::default())).collect();
        let total: u64 = setup.data.points().values().map(|v| v.len() as u64).sum();
        let degree = topology
            .ids()
            .map(|i| topology.neighbors(i).len() as u64)
            .max()
            .unwrap_or(0);
        let cap = setup.max_events.unwrap_or_else(|| {
            if setup.data.is_static() {
                (topology.len() as u64 * total.max(1) * degree.max(1)).max(10_000)
            } else {
                50_000_000
            }
        });
        let mut net = Self {
            setup,
            topology,
            nodes,
            meters,
            heap: BinaryHeap::new(),
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(setup.seed),
            events: 0,
            cap,
            measurements: 0,
            correct: 0,
            last_time: 0.0,
            log: None,
        };
        net.schedule_inputs();
        net
    }

    /// Keeps a copy of every broadcast.
    pub fn record_packets(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn packets(&self) -> &[SentPacket] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, NodeState> {
        &self.nodes
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    fn push(&mut self, time: f64, node: NodeId, kind: Kind) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            node,
            seq: self.seq,
            kind,
        });
    }

    fn schedule_inputs(&mut self) {
        let setup = self.setup;
        for lc in &setup.link_changes {
            self.push(
                lc.time,
                lc.a.min(lc.b),
                Kind::Link {
                    a: lc.a,
                    b: lc.b,
                    up: lc.up,
                },
            );
        }
        if setup.data.is_static() {
            for (id, pts) in setup.data.points() {
                if let Some(s) = self.nodes.get_mut(id) {
                    s.load_own(pts.iter().cloned());
                }
            }
            let starters: Vec<NodeId> = match &setup.init_nodes {
                Some(set) => set.iter().copied().collect(),
                None => self.topology.ids().collect(),
            };
            for i in starters {
                self.push(0.0, i, Kind::Start);
            }
            return;
        }
        let period = setup.sample_period_s;
        let intervals = setup.intervals();
        let ids: Vec<NodeId> = self.topology.ids().collect();
        for i in ids {
            let pts = setup.data.points().get(&i).cloned().unwrap_or_default();
            let mut slots = BTreeSet::new();
            for p in pts {
                if p.timestamp <= setup.duration_s {
                    slots.insert((p.timestamp / period).round() as u64);
                    self.push(p.timestamp, i, Kind::Sample(p));
                }
            }
            for k in 0..=intervals {
                if !slots.contains(&k) {
                    self.push(k as f64 * period, i, Kind::Tick);
                }
            }
        }
        for k in 0..intervals {
            self.push((k as f64 + 0.5) * period, 0, Kind::Measure);
        }
    }

    /// The sampling instant a node's window is anchored to. Sensors share a
    /// clock, so a packet landing mid-period must not age a window further
    /// than the last sample did.
    fn window_clock(&self, now: f64) -> f64 {
        if self.setup.data.is_static() {
            return now;
        }
        let p = self.setup.sample_period_s;
        (now / p).floor() * p
    }

    fn step(&mut self, id: NodeId, event: &NodeEvent, now: f64) -> Result<(), SimError> {
        let setup = self.setup;
        let clock = self.window_clock(now);
        let Some(state) = self.nodes.get_mut(&id) else {
            return Ok(());
        };
        let out = match (setup.algorithm, setup.hop) {
            (Algorithm::Semiglobal, hop) => semiglobal::handle_event_semiglobal(state, event, clock, hop),
            (Algorithm::NaiveSemiglobal, HopConfig::Bounded(d)) => {
                semiglobal::handle_event_naive(state, event, clock, d)
            }
            _ => state.handle_event(event, clock),
        }
        .map_err(|source| SimError::Protocol {
            node: id,
            time: now,
            source,
        })?;
        if let Some(p) = out {
            self.broadcast(p, now);
        }
        Ok(())
    }

    fn broadcast(&mut self, packet: Packet, now: f64) {
        let model = &self.setup.energy;
        let bytes = wire::encoded_len(&packet);
        let from = packet.sender;
        self.meters
            .get_mut(&from)
            .expect("sender metered")
            .transmit(model, bytes, wire::distinct_points(&packet));
        let arrival = now + model.airtime(bytes);
        let hearers: Vec<NodeId> = self.topology.neighbors(from).iter().copied().collect();
        for v in hearers {
            self.meters.get_mut(&v).expect("node metered").receive(model, bytes);
            let Some(entry) = packet.entry_for(v) else {
                continue;
            };
            if self.setup.p_drop > 0.0 && self.rng.gen_bool(self.setup.p_drop) {
                debug!("drop {from} -> {v} at {now}");
                let entry = entry.clone();
                self.push(arrival, from, Kind::Undelivered(entry));
                continue;
            }
            self.push(arrival, v, Kind::Deliver(packet.clone()));
        }
        if let Some(log) = &mut self.log {
            log.push(SentPacket { time: now, packet });
        }
    }

    fn own_windows(&self) -> BTreeMap<NodeId, Vec<DataPoint>> {
        self.nodes
            .iter()
            .map(|(&i, s)| {
                let pts = s.own().iter().filter_map(|k| s.held().get(k).cloned()).collect();
                (i, pts)
            })
            .collect()
    }

    /// Compares every node's estimate with the oracle for the current
    /// windows and topology.
    fn measure(&mut self) -> Result<(), SimError> {
        let d = match (self.setup.algorithm, self.setup.hop) {
            (Algorithm::Semiglobal | Algorithm::NaiveSemiglobal, HopConfig::Bounded(d)) => Some(d),
            _ => None,
        };
        let want = oracle::expected_estimates(self.topology.adjacency(), &self.own_windows(), d, &self.setup.spec)
            .map_err(|e| SimError::Protocol {
                node: 0,
                time: self.last_time,
                source: e.into(),
            })?;
        for (i, s) in &self.nodes {
            let got: BTreeSet<_> = s
                .estimate()
                .map_err(|source| SimError::Protocol {
                    node: *i,
                    time: self.last_time,
                    source,
                })?
                .iter()
                .map(DataPoint::key)
                .collect();
            self.measurements += 1;
            if want.get(i) == Some(&got) {
                self.correct += 1;
            }
        }
        Ok(())
    }

    /// Processes events until none remain.
    pub fn run(&mut self) -> Result<(), SimError> {
        while let Some(ev) = self.heap.pop() {
            self.events += 1;
            if self.events > self.cap {
                return Err(SimError::EventCap { cap: self.cap });
            }
            let now = ev.time;
            self.last_time = now;
            match ev.kind {
                Kind::Start => self.step(ev.node, &NodeEvent::Init, now)?,
                Kind::Sample(p) => {
                    let e = NodeEvent::LocalDataChange {
                        added: vec![p],
                        evicted: Vec::new(),
                    };
                    self.step(ev.node, &e, now)?;
                }
                Kind::Tick => {
                    if self
                        .nodes
                        .get(&ev.node)
                        .is_some_and(|s| s.has_expired(self.window_clock(now)))
                    {
                        let e = NodeEvent::LocalDataChange {
                            added: Vec::new(),
                            evicted: Vec::new(),
                        };
                        self.step(ev.node, &e, now)?;
                    }
                }
                Kind::Deliver(p) => self.step(ev.node, &NodeEvent::PacketArrival(p), now)?,
                Kind::Undelivered(entry) => {
                    if let Some(s) = self.nodes.get_mut(&ev.node) {
                        s.delivery_failed(&entry);
                    }
                }
                Kind::Link { a, b, up } => {
                    let changed = self.topology.set_link(a, b, up).map_err(SimError::Topology)?;
                    if changed {
                        for (x, y) in [(a.min(b), a.max(b)), (a.max(b), a.min(b))] {
                            let e = if up {
                                NodeEvent::NeighborhoodChange {
                                    added: vec![y],
                                    removed: vec![],
                                }
                            } else {
                                NodeEvent::NeighborhoodChange {
                                    added: vec![],
                                    removed: vec![y],
                                }
                            };
                            self.step(x, &e, now)?;
                        }
                    }
                }
                Kind::Measure => self.measure()?,
            }
        }
        if self.setup.data.is_static() {
            self.measure()?;
        }
        Ok(())
    }

    pub fn metrics(&self) -> RunMetrics {
        let quiet = self.setup.data.is_static().then_some(self.last_time);
        RunMetrics::assemble(
            self.setup,
            &self.meters,
            self.measurements,
            self.correct,
            self.events,
            None,
            quiet,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rating::RatingSpec;
    use crate::simnet::scenario::two_node_family;

    fn two_node(a: u32, b: u32) -> Setup {
        let topo = Topology::build(&[(0, 0.0, 0.0), (1, 5.0, 0.0)], 6.77).unwrap();
        let mut s = Setup::static_run(
            topo,
            two_node_family(a, b),
            RatingSpec::nearest_neighbor(1),
            Algorithm::Global,
            HopConfig::Unbounded,
        );
        s.init_nodes = Some(BTreeSet::from([1]));
        s
    }

    fn vals(ps: &[DataPoint]) -> Vec<f64> {
        ps.iter().map(|p| p.values()[0]).collect()
    }

    #[test]
    fn events_pop_in_time_class_node_seq_order() {
        let mut h = BinaryHeap::new();
        let ev = |time, node, seq, kind| Event { time, node, seq, kind };
        h.push(ev(1.0, 0, 1, Kind::Measure));
        h.push(ev(1.0, 5, 2, Kind::Start));
        h.push(ev(1.0, 2, 3, Kind::Start));
        h.push(ev(0.5, 9, 4, Kind::Tick));
        h.push(ev(1.0, 7, 5, Kind::Link { a: 7, b: 8, up: true }));
        let order: Vec<(f64, NodeId)> = std::iter::from_fn(|| h.pop()).map(|e| (e.time, e.node)).collect();
        assert_eq!(order, vec![(0.5, 9), (1.0, 7), (1.0, 2), (1.0, 5), (1.0, 0)]);
    }

    #[test]
    fn two_node_family_reaches_the_answer_with_four_points() {
        let setup = two_node(30, 30);
        let mut net = Network::new(&setup);
        net.record_packets();
        net.run().unwrap();
        let m = net.metrics();
        assert_eq!(m.points_sent_total, 4);
        assert_eq!(m.accuracy, 1.0);
        for s in net.nodes().values() {
            assert_eq!(vals(&s.estimate().unwrap()), vec![0.5]);
        }
        let msgs: Vec<Vec<f64>> = net
            .packets()
            .iter()
            .map(|p| {
                let mut v = vals(&p.packet.entries[0].points);
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        assert_eq!(msgs, vec![vec![0.5, 3.0, 6.0], vec![5.0]]);
    }

    #[test]
    fn energy_is_charged_to_sender_and_every_hearer() {
        let setup = two_node(30, 30);
        let mut net = Network::new(&setup);
        net.run().unwrap();
        let m = net.metrics();
        let model = &setup.energy;
        let first = model.airtime(16 + 2 + 3 * (wire::point_bytes(1) + 1));
        let second = model.airtime(16 + 2 + wire::point_bytes(1) + 1);
        let n1 = &m.nodes[1];
        assert!((n1.tx_j - model.tx_power * first).abs() < 1e-15);
        assert!((n1.rx_j - model.rx_power * second).abs() < 1e-15);
        let busy = first + second;
        assert!((n1.idle_j - (setup.duration_s - busy) * model.idle_power).abs() < 1e-15);
    }

    #[test]
    fn silent_start_stays_silent() {
        let mut setup = two_node(30, 30);
        setup.init_nodes = Some(BTreeSet::new());
        let mut net = Network::new(&setup);
        net.run().unwrap();
        assert_eq!(net.metrics().packets_sent_total, 0);
    }

    #[test]
    fn event_cap_is_enforced() {
        let mut setup = two_node(30, 30);
        setup.max_events = Some(2);
        let mut net = Network::new(&setup);
        assert!(matches!(net.run(), Err(SimError::EventCap { cap: 2 })));
    }
}
