//! Hop-bounded detection: each sensor converges to the outliers among data
//! that originated within `d` hops of it.
//!
//! Every held point carries the hop count of the shortest path it is known
//! to have travelled. The sufficiency fixed point runs once per hop stratum
//! `P^{≤h}`, `h < d`, so a point seen at hop `h` is only ever forwarded at
//! hop `h + 1 ≤ d`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::protocol::{self, NodeEvent, NodeState, Packet, PacketEntry, ProtocolError};
use crate::rating::{self, DataPoint, Indexed, NodeId, PointKey, PointSet, RatingError, RatingSpec};

/// Undirected communication graph as sorted neighbor lists.
pub type Adjacency = BTreeMap<NodeId, BTreeSet<NodeId>>;

/// Hop diameter. `Unbounded` is the global problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HopConfig {
    Bounded(u32),
    Unbounded,
}

impl HopConfig {
    pub fn bounded(d: u32) -> Result<Self, RatingError> {
        if d == 0 {
            return Err(RatingError::InvalidParameter("hop diameter must be at least 1".into()));
        }
        Ok(Self::Bounded(d))
    }

    pub fn diameter(&self) -> Option<u32> {
        match self {
            Self::Bounded(d) => Some(*d),
            Self::Unbounded => None,
        }
    }
}

/// `[Q]^min`: one copy per point identity, the one with the smallest hop.
pub fn min_hop_dedup(q: impl IntoIterator<Item = DataPoint>) -> PointSet {
    let mut out = PointSet::new();
    for x in q {
        match out.get_mut(&x.key()) {
            Some(y) if y.hop <= x.hop => {}
            Some(y) => *y = x,
            None => {
                out.insert(x);
            }
        }
    }
    out
}

/// Merges the entry addressed to `state`. A copy arriving with a smaller hop
/// than the held one replaces it in place; exchange records keep whatever
/// hop the neighbor was known to hold the point at.
pub fn ingest_semiglobal(state: &mut NodeState, packet: &Packet) -> Result<(), ProtocolError> {
    let Some(entry) = state.validate_packet(packet)? else {
        return Ok(());
    };
    let sender = packet.sender;
    let entry = entry.clone();
    for x in entry.points {
        let key = x.key();
        let wire = x.hop;
        match state.held_mut().get_mut(&key) {
            Some(y) if wire < y.hop => y.hop = wire,
            Some(_) => {}
            None => {
                state.held_mut().insert(x);
            }
        }
        if let Some(ex) = state.exchange_mut(sender) {
            let at = wire.saturating_sub(1);
            let slot = ex.received.entry(key).or_insert(at);
            *slot = (*slot).min(at);
        }
    }
    Ok(())
}

/// Shared front half of every event handler: packet merge or local change,
/// then eviction. Returns `false` when the event is to be ignored.
fn absorb(
    state: &mut NodeState,
    event: &NodeEvent,
    now: f64,
    merge: fn(&mut NodeState, &Packet) -> Result<(), ProtocolError>,
) -> Result<bool, ProtocolError> {
    if let NodeEvent::PacketArrival(packet) = event {
        if state.validate_packet(packet)?.is_none() {
            return Ok(false);
        }
        merge(state, packet)?;
    } else {
        state.apply_local(event);
    }
    state.evict_expired(now);
    Ok(true)
}

/// Handles one event under hop diameter `cfg` and returns the packet to
/// broadcast, if any.
pub fn handle_event_semiglobal(
    state: &mut NodeState,
    event: &NodeEvent,
    now: f64,
    cfg: HopConfig,
) -> Result<Option<Packet>, ProtocolError> {
    let Some(d) = cfg.diameter() else {
        return state.handle_event(event, now);
    };
    if !absorb(state, event, now, ingest_semiglobal)? {
        return Ok(None);
    }
    let spec = state.spec().clone();
    let strata: Vec<PointSet> = (0..d).map(|h| stratum(state.held(), h)).collect();
    let indexed = strata
        .iter()
        .map(|s| Indexed::new(s, &spec))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds = indexed.iter().map(protocol::seed_over).collect::<Result<Vec<_>, _>>()?;

    let mut entries = Vec::new();
    for j in state.neighbor_ids() {
        let ex = state.exchange(j).cloned().unwrap_or_default();
        // Every stratum must be closed over what all strata send, so keep
        // sweeping until no stratum adds anything.
        let mut all: BTreeSet<PointKey> = BTreeSet::new();
        loop {
            let before = all.len();
            for (pool, seed) in indexed.iter().zip(&seeds) {
                let mut z = seed.clone();
                z.extend(all.iter().copied());
                all.extend(protocol::close_over(pool, &ex, z, j)?);
            }
            if all.len() == before {
                break;
            }
        }
        let mut out: BTreeMap<PointKey, u32> = all
            .into_iter()
            .map(|k| (k, state.held().get(&k).expect("held").hop + 1))
            .collect();
        out.retain(|k, wire| ex.known_hop(k).is_none_or(|known| known > *wire));
        if out.is_empty() {
            continue;
        }
        let mut points = Vec::with_capacity(out.len());
        let exm = state.exchange_mut(j).expect("neighbor present");
        for (k, wire) in &out {
            exm.sent.insert(*k, *wire);
        }
        for (k, wire) in out {
            points.push(state.held().get(&k).expect("held").clone().with_hop(wire));
        }
        entries.push(PacketEntry { recipient: j, points });
    }
    if state.invariant_checks() {
        check_strata_closure(state, d)?;
    }
    Ok((!entries.is_empty()).then(|| Packet {
        sender: state.id(),
        entries,
    }))
}

/// `P^{≤h}`.
pub fn stratum(held: &PointSet, h: u32) -> PointSet {
    held.iter().filter(|p| p.hop <= h).cloned().collect()
}

/// Per-stratum form of the closure containment: for every neighbor `j` and
/// `h < d`, `[P^{≤h}|O_n(C_j ∩ P^{≤h})]` lies inside the exchanged keys.
pub fn check_strata_closure(state: &NodeState, d: u32) -> Result<(), ProtocolError> {
    for j in state.neighbors() {
        let common = state.exchange(j).expect("neighbor").common();
        for h in 0..d {
            let pool = stratum(state.held(), h);
            let view = protocol::materialize(&pool, &common);
            let top = rating::top_n(&view, state.spec())?;
            let sup = rating::support_of_set(&pool, &top, state.spec())?;
            if let Some(k) = sup.keys().find(|k| !common.contains(k)) {
                return Err(ProtocolError::Invariant {
                    node: state.id(),
                    what: format!("stratum {h} support point {k} for neighbor {j} not exchanged"),
                });
            }
        }
    }
    Ok(())
}

/// The obvious but wrong hop-bounded variant: run the global algorithm and
/// drop any point whose incremented hop would exceed `d`. Kept only as a
/// regression baseline.
pub fn handle_event_naive(
    state: &mut NodeState,
    event: &NodeEvent,
    now: f64,
    d: u32,
) -> Result<Option<Packet>, ProtocolError> {
    fn merge(state: &mut NodeState, packet: &Packet) -> Result<(), ProtocolError> {
        state.ingest(packet)
    }
    if !absorb(state, event, now, merge)? {
        return Ok(None);
    }
    let spec = state.spec().clone();
    let held = state.held().clone();
    let pool = Indexed::new(&held, &spec)?;
    let seed = protocol::seed_over(&pool)?;
    let mut entries = Vec::new();
    for j in state.neighbor_ids() {
        let ex = state.exchange(j).cloned().unwrap_or_default();
        let z = protocol::close_over(&pool, &ex, seed.clone(), j)?;
        let points: Vec<DataPoint> = z
            .into_iter()
            .filter(|k| !ex.contains(k))
            .map(|k| {
                let p = state.held().get(&k).expect("held");
                p.clone().with_hop(p.hop + 1)
            })
            .filter(|p| p.hop <= d)
            .collect();
        if points.is_empty() {
            continue;
        }
        let exm = state.exchange_mut(j).expect("neighbor present");
        for p in &points {
            exm.sent.insert(p.key(), p.hop);
        }
        entries.push(PacketEntry { recipient: j, points });
    }
    Ok((!entries.is_empty()).then(|| Packet {
        sender: state.id(),
        entries,
    }))
}

/// Hop distance from `from` to every reachable node.
pub fn hop_distances(adj: &Adjacency, from: NodeId) -> BTreeMap<NodeId, u32> {
    let mut dist = BTreeMap::from([(from, 0u32)]);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        for &v in adj.get(&u).into_iter().flatten() {
            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Test oracle: `O_n` over the data of every node within `d` hops of `i`.
pub fn hop_ball_oracle(
    adj: &Adjacency,
    data: &BTreeMap<NodeId, Vec<DataPoint>>,
    i: NodeId,
    d: u32,
    spec: &RatingSpec,
) -> Result<Vec<DataPoint>, RatingError> {
    let ball: PointSet = hop_distances(adj, i)
        .into_iter()
        .filter(|&(_, h)| h <= d)
        .flat_map(|(j, _)| data.get(&j).into_iter().flatten().cloned())
        .collect();
    if ball.is_empty() && !adj.contains_key(&i) {
        warn!("hop-ball oracle asked about unknown node {i}");
    }
    rating::top_n(&ball, spec)
}
