//! Per-sensor state machine for global in-network outlier detection.
//!
//! Each sensor holds its own samples plus whatever its neighbors have told
//! it. On every event it works out, per neighbor, a *sufficient* set of
//! held points: enough that the neighbor's estimate cannot be improved by
//! anything this sensor knows. The part of that set the neighbor is not
//! already known to hold goes into one broadcast packet, tagged with the
//! neighbor's id.
//!
//! With static data and links, every sensor's estimate converges to the
//! top-`n` outliers of the union of all sensors' data.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rating::{self, DataPoint, Indexed, NodeId, PointKey, PointSet, RatingError, RatingSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error("malformed packet from {sender}: {reason}")]
    MalformedPacket { sender: NodeId, reason: String },
    #[error("sufficient-set fixed point for neighbor {neighbor} did not settle within {cap} rounds")]
    FixedPointOverrun { neighbor: NodeId, cap: usize },
    #[error("invariant violated at node {node}: {what}")]
    Invariant { node: NodeId, what: String },
}

/// Points one neighbor is known to hold.
///
/// Keys map to the hop count at which the neighbor is known to hold the
/// point (an upper bound). The global algorithm ignores the hop values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Exchange {
    pub sent: BTreeMap<PointKey, u32>,
    pub received: BTreeMap<PointKey, u32>,
}

impl Exchange {
    /// Keys of `sent ∪ received`.
    pub fn common(&self) -> BTreeSet<PointKey> {
        self.sent.keys().chain(self.received.keys()).copied().collect()
    }

    pub fn contains(&self, key: &PointKey) -> bool {
        self.sent.contains_key(key) || self.received.contains_key(key)
    }

    /// Lowest hop at which the neighbor is known to hold `key`.
    pub fn known_hop(&self, key: &PointKey) -> Option<u32> {
        match (self.sent.get(key), self.received.get(key)) {
            (Some(a), Some(b)) => Some(*a.min(b)),
            (a, b) => a.or(b).copied(),
        }
    }

    fn forget(&mut self, key: &PointKey) {
        self.sent.remove(key);
        self.received.remove(key);
    }

    pub fn is_empty(&self) -> bool {
        self.sent.is_empty() && self.received.is_empty()
    }
}

/// Points addressed to one recipient inside a broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketEntry {
    pub recipient: NodeId,
    pub points: Vec<DataPoint>,
}

/// One broadcast. Every neighbor hears it; each keeps only its own entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub sender: NodeId,
    pub entries: Vec<PacketEntry>,
}

impl Packet {
    pub fn entry_for(&self, id: NodeId) -> Option<&PacketEntry> {
        self.entries.iter().find(|e| e.recipient == id)
    }

    pub fn point_count(&self) -> usize {
        self.entries.iter().map(|e| e.points.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    Init,
    LocalDataChange {
        added: Vec<DataPoint>,
        evicted: Vec<PointKey>,
    },
    PacketArrival(Packet),
    NeighborhoodChange {
        added: Vec<NodeId>,
        removed: Vec<NodeId>,
    },
}

/// A sensor's complete protocol state.
#[derive(Debug, Clone)]
pub struct NodeState {
    id: NodeId,
    spec: RatingSpec,
    /// Sliding window length in seconds; `None` keeps everything.
    window: Option<f64>,
    own: BTreeSet<PointKey>,
    held: PointSet,
    exchange: BTreeMap<NodeId, Exchange>,
    check_invariants: bool,
}

impl NodeState {
    pub fn new(id: NodeId, spec: RatingSpec, window: Option<f64>, neighbors: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            id,
            spec,
            window,
            own: BTreeSet::new(),
            held: PointSet::new(),
            exchange: neighbors
                .into_iter()
                .filter(|&j| j != id)
                .map(|j| (j, Exchange::default()))
                .collect(),
            check_invariants: cfg!(debug_assertions),
        }
    }

    /// Turns the per-event closure check on or off. On by default in debug
    /// builds.
    pub fn set_invariant_checks(&mut self, on: bool) {
        self.check_invariants = on;
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn spec(&self) -> &RatingSpec {
        &self.spec
    }

    pub fn window(&self) -> Option<f64> {
        self.window
    }

    /// `P_i`: every live point this sensor holds.
    pub fn held(&self) -> &PointSet {
        &self.held
    }

    /// `D_i`: keys of the points that originated here.
    pub fn own(&self) -> &BTreeSet<PointKey> {
        &self.own
    }

    pub fn neighbors(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.exchange.keys().copied()
    }

    pub fn exchange(&self, j: NodeId) -> Option<&Exchange> {
        self.exchange.get(&j)
    }

    /// Adds locally sampled points without running the protocol. Use before
    /// `Init` to preload a static dataset.
    pub fn load_own(&mut self, points: impl IntoIterator<Item = DataPoint>) {
        for p in points {
            self.add_own(p);
        }
    }

    fn add_own(&mut self, mut p: DataPoint) {
        p.hop = 0;
        self.own.insert(p.key());
        self.held.insert(p);
    }

    /// Current estimate `O_n(P_i)`.
    pub fn estimate(&self) -> Result<Vec<DataPoint>, ProtocolError> {
        Ok(rating::top_n(&self.held, &self.spec)?)
    }

    /// Support of the current estimate, `[P_i|O_n(P_i)]`.
    pub fn estimate_support(&self) -> Result<PointSet, ProtocolError> {
        let top = self.estimate()?;
        Ok(rating::support_of_set(&self.held, &top, &self.spec)?)
    }

    /// True when some held point has aged out of the window at `now`.
    /// The sender learns that `entry` never reached its recipient. Records
    /// of points that entry carried are dropped so the next event sends
    /// them again; records since rewritten by a later send stay.
    pub fn delivery_failed(&mut self, entry: &PacketEntry) {
        let Some(ex) = self.exchange.get_mut(&entry.recipient) else {
            return;
        };
        for p in &entry.points {
            if ex.sent.get(&p.key()) == Some(&p.hop) {
                ex.sent.remove(&p.key());
            }
        }
    }

    pub fn has_expired(&self, now: f64) -> bool {
        match self.window {
            Some(w) => self.held.iter().any(|p| p.timestamp < now - w),
            None => false,
        }
    }

    /// Drops every point stamped before `now - w` from all sets. Points
    /// stamped exactly `now - w` stay.
    pub fn evict_expired(&mut self, now: f64) -> Vec<PointKey> {
        let Some(w) = self.window else {
            return Vec::new();
        };
        let cutoff = now - w;
        let gone: Vec<PointKey> = self
            .held
            .iter()
            .filter(|p| p.timestamp < cutoff)
            .map(DataPoint::key)
            .collect();
        for k in &gone {
            self.forget(k);
        }
        gone
    }

    fn forget(&mut self, key: &PointKey) {
        self.held.remove(key);
        self.own.remove(key);
        for ex in self.exchange.values_mut() {
            ex.forget(key);
        }
    }

    pub fn on_neighbor_added(&mut self, j: NodeId) {
        if j != self.id {
            self.exchange.entry(j).or_default();
        }
    }

    pub fn on_neighbor_removed(&mut self, j: NodeId) {
        self.exchange.remove(&j);
    }

    /// Whether `packet` counts as an event here.
    pub fn is_addressed(&self, packet: &Packet) -> bool {
        packet.entry_for(self.id).is_some()
    }

    /// Merges the entry addressed to this node. Points already held are not
    /// duplicated, but are still recorded as received from the sender so the
    /// two sides keep identical records of what they exchanged.
    pub fn ingest(&mut self, packet: &Packet) -> Result<(), ProtocolError> {
        let Some(entry) = self.validate_packet(packet)? else {
            return Ok(());
        };
        let sender = packet.sender;
        let mut fresh = Vec::new();
        for x in &entry.points {
            let key = x.key();
            if !self.held.contains(&key) {
                fresh.push(x.clone());
            }
            if let Some(ex) = self.exchange.get_mut(&sender) {
                ex.received.insert(key, x.hop.saturating_sub(1));
            }
        }
        self.held.extend(fresh);
        Ok(())
    }

    /// Checks sender, tags and dimensions. `Ok(None)` means the packet is
    /// not for us or comes from a non-neighbor and should be ignored.
    pub(crate) fn validate_packet<'p>(&self, packet: &'p Packet) -> Result<Option<&'p PacketEntry>, ProtocolError> {
        let mut seen = BTreeSet::new();
        for e in &packet.entries {
            if !seen.insert(e.recipient) {
                return Err(ProtocolError::MalformedPacket {
                    sender: packet.sender,
                    reason: format!("recipient {} tagged twice", e.recipient),
                });
            }
        }
        let Some(entry) = packet.entry_for(self.id) else {
            return Ok(None);
        };
        if !self.exchange.contains_key(&packet.sender) {
            warn!("node {} ignoring packet from non-neighbor {}", self.id, packet.sender);
            return Ok(None);
        }
        let dim = self.held.iter().next().map(|p| p.rest.dim());
        let mut keys = BTreeSet::new();
        for p in &entry.points {
            if !keys.insert(p.key()) {
                return Err(ProtocolError::MalformedPacket {
                    sender: packet.sender,
                    reason: format!("point {} repeated", p.key()),
                });
            }
            if let Some(d) = dim {
                if p.rest.dim() != d {
                    return Err(ProtocolError::MalformedPacket {
                        sender: packet.sender,
                        reason: format!("point {} has {} features, expected {d}", p.key(), p.rest.dim()),
                    });
                }
            }
        }
        Ok(Some(entry))
    }

    /// Applies local (non-packet) parts of an event. Returns `false` when
    /// the event should not trigger the main loop.
    pub(crate) fn apply_local(&mut self, event: &NodeEvent) -> bool {
        match event {
            NodeEvent::Init => true,
            NodeEvent::LocalDataChange { added, evicted } => {
                for k in evicted {
                    if self.own.contains(k) {
                        self.forget(k);
                    }
                }
                for p in added {
                    self.add_own(p.clone());
                }
                true
            }
            NodeEvent::NeighborhoodChange { added, removed } => {
                for &j in removed {
                    self.on_neighbor_removed(j);
                }
                for &j in added {
                    self.on_neighbor_added(j);
                }
                true
            }
            NodeEvent::PacketArrival(_) => true,
        }
    }

    /// Handles one event and returns the packet to broadcast, if any.
    pub fn handle_event(&mut self, event: &NodeEvent, now: f64) -> Result<Option<Packet>, ProtocolError> {
        if let NodeEvent::PacketArrival(packet) = event {
            if self.validate_packet(packet)?.is_none() {
                return Ok(None);
            }
            self.ingest(packet)?;
        } else {
            self.apply_local(event);
        }
        self.evict_expired(now);
        let packet = self.main_loop()?;
        if self.check_invariants {
            self.check_closure()?;
        }
        Ok(packet)
    }

    fn main_loop(&mut self) -> Result<Option<Packet>, ProtocolError> {
        let pool = Indexed::new(&self.held, &self.spec)?;
        let seed = seed_over(&pool)?;
        let mut fresh_by = Vec::new();
        for (&j, ex) in &self.exchange {
            let z = close_over(&pool, ex, seed.clone(), j)?;
            let fresh: Vec<PointKey> = z.into_iter().filter(|k| !ex.contains(k)).collect();
            fresh_by.push((j, fresh));
        }
        let mut entries = Vec::new();
        for (j, fresh) in fresh_by {
            if fresh.is_empty() {
                continue;
            }
            let ex = self.exchange.get_mut(&j).expect("neighbor present");
            let mut points = Vec::with_capacity(fresh.len());
            for k in fresh {
                let p = self.held.get(&k).expect("sufficient set within held").clone();
                ex.sent.insert(k, p.hop);
                points.push(p);
            }
            entries.push(PacketEntry { recipient: j, points });
        }
        Ok((!entries.is_empty()).then_some(Packet {
            sender: self.id,
            entries,
        }))
    }

    /// `Z_j`: a set satisfying the sufficiency fixed point for neighbor `j`.
    pub fn compute_sufficient_set(&self, j: NodeId) -> Result<PointSet, ProtocolError> {
        let pool = Indexed::new(&self.held, &self.spec)?;
        // `O_n(P_i) ∪ [P_i|O_n(P_i)]`, grown to the fixed point
        let seed = seed_over(&pool)?;
        let ex = self.exchange.get(&j).cloned().unwrap_or_default();
        let z = close_over(&pool, &ex, seed, j)?;
        Ok(z.iter().map(|k| self.held.get(k).expect("held").clone()).collect())
    }

    /// Checks `[P_i|O_n(common_j)] ⊆ common_j` for every neighbor `j`.
    pub fn check_closure(&self) -> Result<(), ProtocolError> {
        for (j, ex) in &self.exchange {
            let common = ex.common();
            let set = materialize(&self.held, &common);
            let top = rating::top_n(&set, &self.spec)?;
            let sup = rating::support_of_set(&self.held, &top, &self.spec)?;
            if let Some(k) = sup.keys().find(|k| !common.contains(k)) {
                return Err(ProtocolError::Invariant {
                    node: self.id,
                    what: format!("support point {k} for neighbor {j} not in exchanged set"),
                });
            }
        }
        Ok(())
    }

    /// Structural invariants: `D_i ⊆ P_i`, exchange sets within `P_i`.
    pub fn check_structure(&self) -> Result<(), ProtocolError> {
        let bad = |what: String| ProtocolError::Invariant { node: self.id, what };
        if let Some(k) = self.own.iter().find(|k| !self.held.contains(k)) {
            return Err(bad(format!("own point {k} not held")));
        }
        for (j, ex) in &self.exchange {
            if let Some(k) = ex.common().iter().find(|k| !self.held.contains(k)) {
                return Err(bad(format!("point {k} exchanged with {j} not held")));
            }
        }
        Ok(())
    }

    pub(crate) fn held_mut(&mut self) -> &mut PointSet {
        &mut self.held
    }

    pub(crate) fn exchange_mut(&mut self, j: NodeId) -> Option<&mut Exchange> {
        self.exchange.get_mut(&j)
    }

    pub(crate) fn neighbor_ids(&self) -> Vec<NodeId> {
        self.exchange.keys().copied().collect()
    }

    pub(crate) fn invariant_checks(&self) -> bool {
        self.check_invariants
    }
}

pub(crate) fn materialize(held: &PointSet, keys: &BTreeSet<PointKey>) -> PointSet {
    keys.iter().filter_map(|k| held.get(k).cloned()).collect()
}

pub(crate) fn seed_over(pool: &Indexed) -> Result<BTreeSet<PointKey>, ProtocolError> {
    let mut out = BTreeSet::new();
    for i in pool.top_positions(None)? {
        out.insert(pool.key(i));
        out.extend(pool.support_at(i)?.iter().map(|&s| pool.key(s)));
    }
    Ok(out)
}

/// Grows `z` until `[pool|O_n(common ∪ z)] ⊆ z`. Keys of `common` are
/// resolved against `pool`.
pub(crate) fn close_over(
    pool: &Indexed,
    ex: &Exchange,
    mut z: BTreeSet<PointKey>,
    neighbor: NodeId,
) -> Result<BTreeSet<PointKey>, ProtocolError> {
    let mut view = vec![false; pool.len()];
    pool.mark(ex.sent.keys(), &mut view);
    pool.mark(ex.received.keys(), &mut view);
    pool.mark(z.iter(), &mut view);
    let cap = pool.len() + 1;
    for _ in 0..cap {
        let before = z.len();
        for x in pool.top_positions(Some(&view))? {
            for &s in pool.support_at(x)? {
                if z.insert(pool.key(s)) {
                    view[s] = true;
                }
            }
        }
        if z.len() == before {
            return Ok(z);
        }
    }
    Err(ProtocolError::FixedPointOverrun { neighbor, cap })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(origin: NodeId, v: f64) -> DataPoint {
        DataPoint::new(origin, (v * 10.0) as u64, 0.0, vec![v]).unwrap()
    }

    fn vals(ps: &[DataPoint]) -> Vec<f64> {
        let mut v: Vec<f64> = ps.iter().map(|p| p.values()[0]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    fn entry_vals(p: &Packet, to: NodeId) -> Vec<f64> {
        vals(&p.entry_for(to).unwrap().points)
    }

    fn node(id: NodeId, nbrs: &[NodeId], data: &[f64]) -> NodeState {
        let mut s = NodeState::new(id, RatingSpec::nearest_neighbor(1), None, nbrs.iter().copied());
        s.load_own(data.iter().map(|&v| pt(id, v)));
        s
    }

    fn first_data(a: u32) -> Vec<f64> {
        let mut v = vec![0.5, 3.0, 6.0];
        v.extend((10..=a).map(f64::from));
        v
    }

    #[test]
    fn init_sends_outlier_and_support() {
        let mut i = node(0, &[1], &first_data(30));
        let pkt = i.handle_event(&NodeEvent::Init, 0.0).unwrap().unwrap();
        // {6} ∪ [P|6] = {3,6}; the closure then rates {3,6} where 3 wins the
        // tie and pulls in its own nearest neighbor 0.5
        assert_eq!(entry_vals(&pkt, 1), vec![0.5, 3.0, 6.0]);
        assert_eq!(i.exchange(1).unwrap().sent.len(), 3);
        // with {0.5,3,6} now shared, the seed {3,6} is already closed
        let z = i.compute_sufficient_set(1).unwrap();
        assert_eq!(vals(&z.into_iter().collect::<Vec<_>>()), vec![3.0, 6.0]);
    }

    #[test]
    fn failed_delivery_is_sent_again_on_the_next_event() {
        let mut i = node(0, &[1], &first_data(30));
        let pkt = i.handle_event(&NodeEvent::Init, 0.0).unwrap().unwrap();
        assert!(i.handle_event(&NodeEvent::Init, 0.0).unwrap().is_none());
        i.delivery_failed(pkt.entry_for(1).unwrap());
        assert!(i.exchange(1).unwrap().sent.is_empty());
        let again = i.handle_event(&NodeEvent::Init, 0.0).unwrap().unwrap();
        assert_eq!(entry_vals(&again, 1), vec![0.5, 3.0, 6.0]);
    }

    #[test]
    fn init_without_data_is_silent() {
        let mut i = node(0, &[1], &[]);
        assert!(i.handle_event(&NodeEvent::Init, 0.0).unwrap().is_none());
        assert!(i.estimate().unwrap().is_empty());
    }

    #[test]
    fn quiescent_node_sends_nothing_again() {
        let mut i = node(0, &[1], &first_data(20));
        assert!(i.handle_event(&NodeEvent::Init, 0.0).unwrap().is_some());
        assert!(i.handle_event(&NodeEvent::Init, 0.0).unwrap().is_none());
    }

    #[test]
    fn ingest_records_received_points() {
        let mut j = node(1, &[0], &[4.0, 5.0]);
        let pkt = Packet {
            sender: 0,
            entries: vec![PacketEntry {
                recipient: 1,
                points: vec![pt(0, 3.0), pt(0, 6.0)],
            }],
        };
        j.ingest(&pkt).unwrap();
        assert_eq!(j.exchange(0).unwrap().received.len(), 2);
        assert_eq!(j.held().len(), 4);
        let before = j.held().clone();
        j.ingest(&pkt).unwrap();
        assert_eq!(j.held(), &before);
    }

    #[test]
    fn own_point_echoed_back_stays_own() {
        let mut j = node(1, &[0], &[4.0, 5.0]);
        let pkt = Packet {
            sender: 0,
            entries: vec![PacketEntry {
                recipient: 1,
                points: vec![pt(1, 4.0)],
            }],
        };
        j.ingest(&pkt).unwrap();
        assert_eq!(j.own().len(), 2);
        assert_eq!(j.held().len(), 2);
    }

    #[test]
    fn packet_not_addressed_is_not_an_event() {
        let mut j = node(1, &[0, 2], &[4.0, 5.0]);
        let pkt = Packet {
            sender: 0,
            entries: vec![PacketEntry {
                recipient: 2,
                points: vec![pt(0, 3.0)],
            }],
        };
        assert!(j.handle_event(&NodeEvent::PacketArrival(pkt), 0.0).unwrap().is_none());
        assert_eq!(j.held().len(), 2);
        assert!(j.exchange(2).unwrap().is_empty());
    }

    #[test]
    fn packet_from_stranger_is_ignored() {
        let mut j = node(1, &[0], &[4.0, 5.0]);
        let pkt = Packet {
            sender: 7,
            entries: vec![PacketEntry {
                recipient: 1,
                points: vec![pt(7, 3.0)],
            }],
        };
        assert!(j.handle_event(&NodeEvent::PacketArrival(pkt), 0.0).unwrap().is_none());
        assert_eq!(j.held().len(), 2);
    }

    #[test]
    fn malformed_packet_is_an_error() {
        let mut j = node(1, &[0], &[4.0]);
        let bad_dim = Packet {
            sender: 0,
            entries: vec![PacketEntry {
                recipient: 1,
                points: vec![DataPoint::new(0, 1, 0.0, vec![1.0, 2.0]).unwrap()],
            }],
        };
        assert!(matches!(
            j.handle_event(&NodeEvent::PacketArrival(bad_dim), 0.0),
            Err(ProtocolError::MalformedPacket { .. })
        ));
        let twice = Packet {
            sender: 0,
            entries: vec![
                PacketEntry {
                    recipient: 1,
                    points: vec![],
                },
                PacketEntry {
                    recipient: 1,
                    points: vec![],
                },
            ],
        };
        assert!(j.handle_event(&NodeEvent::PacketArrival(twice), 0.0).is_err());
    }

    #[test]
    fn eviction_boundary_is_closed() {
        let mut s = NodeState::new(0, RatingSpec::nearest_neighbor(1), Some(10.0), [1]);
        s.load_own([
            DataPoint::new(0, 1, 14.0, vec![1.0]).unwrap(),
            DataPoint::new(0, 2, 15.0, vec![2.0]).unwrap(),
            DataPoint::new(0, 3, 20.0, vec![3.0]).unwrap(),
        ]);
        s.exchange_mut(1)
            .unwrap()
            .sent
            .insert(PointKey { origin: 0, epoch: 1 }, 0);
        assert!(s.has_expired(25.0));
        let gone = s.evict_expired(25.0);
        assert_eq!(gone, vec![PointKey { origin: 0, epoch: 1 }]);
        assert_eq!(s.held().len(), 2);
        assert!(s.exchange(1).unwrap().is_empty());
        assert!(!s.has_expired(25.0));
    }

    #[test]
    fn new_neighbor_gets_outlier_and_support() {
        let mut i = node(0, &[1], &first_data(20));
        i.handle_event(&NodeEvent::Init, 0.0).unwrap();
        let ev = NodeEvent::NeighborhoodChange {
            added: vec![2],
            removed: vec![],
        };
        let pkt = i.handle_event(&ev, 0.0).unwrap().unwrap();
        assert!(pkt.entry_for(1).is_none());
        let to_new = entry_vals(&pkt, 2);
        let est = vals(&i.estimate().unwrap());
        let sup = vals(&i.estimate_support().unwrap().iter().cloned().collect::<Vec<_>>());
        for v in est.iter().chain(&sup) {
            assert!(to_new.contains(v));
        }
    }

    #[test]
    fn removing_silent_neighbor_only_shrinks_neighbor_list() {
        let mut i = node(0, &[1, 2], &[1.0, 2.0]);
        let held = i.held().clone();
        i.on_neighbor_removed(2);
        assert_eq!(i.neighbors().collect::<Vec<_>>(), vec![1]);
        assert_eq!(i.held(), &held);
    }

    #[test]
    fn local_data_change_adds_and_removes_own() {
        let mut i = node(0, &[1], &[1.0, 2.0, 3.0]);
        let ev = NodeEvent::LocalDataChange {
            added: vec![pt(0, 9.0)],
            evicted: vec![pt(0, 1.0).key()],
        };
        let pkt = i.handle_event(&ev, 0.0).unwrap().unwrap();
        assert_eq!(vals(&i.estimate().unwrap()), vec![9.0]);
        assert!(entry_vals(&pkt, 1).contains(&9.0));
        assert_eq!(i.own().len(), 3);
        i.check_structure().unwrap();
    }
}
