//! Disk-graph topologies and shortest-path routing.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::rating::NodeId;
use crate::semiglobal::Adjacency;

const INTEL_LAB_COORDS: &str = include_str!("../../data/intel_lab_coords.csv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("topology has no nodes")]
    Empty,
    #[error("node id {0} listed twice")]
    DuplicateId(NodeId),
    #[error("radio range must be positive and finite, got {0}")]
    BadRange(f64),
    #[error("network is disconnected; components: {}", fmt_components(.0))]
    Disconnected(Vec<Vec<NodeId>>),
    #[error("edge {0}-{1} names an unknown node")]
    UnknownNode(NodeId, NodeId),
    #[error("coordinate table line {line}: {reason}")]
    BadCoords { line: usize, reason: String },
}

fn fmt_components(cs: &[Vec<NodeId>]) -> String {
    cs.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: BTreeMap<NodeId, (f64, f64)>,
    radio_range: Option<f64>,
    adj: Adjacency,
}

impl Topology {
    /// Disk graph: an edge joins every pair at most `radio_range` apart.
    /// Rejects empty and disconnected layouts.
    pub fn build(coords: &[(NodeId, f64, f64)], radio_range: f64) -> Result<Self, TopologyError> {
        let t = Self::build_unchecked(coords, radio_range)?;
        t.require_connected()?;
        Ok(t)
    }

    /// As [`Topology::build`] but tolerates a disconnected graph.
    pub fn build_unchecked(coords: &[(NodeId, f64, f64)], radio_range: f64) -> Result<Self, TopologyError> {
        if coords.is_empty() {
            return Err(TopologyError::Empty);
        }
        if !(radio_range.is_finite() && radio_range > 0.0) {
            return Err(TopologyError::BadRange(radio_range));
        }
        let mut positions = BTreeMap::new();
        for &(id, x, y) in coords {
            if positions.insert(id, (x, y)).is_some() {
                return Err(TopologyError::DuplicateId(id));
            }
        }
        let mut adj: Adjacency = positions.keys().map(|&i| (i, BTreeSet::new())).collect();
        for (&a, &(ax, ay)) in &positions {
            for (&b, &(bx, by)) in positions.range(a + 1..) {
                if (ax - bx).hypot(ay - by) <= radio_range {
                    adj.get_mut(&a).expect("node").insert(b);
                    adj.get_mut(&b).expect("node").insert(a);
                }
            }
        }
        Ok(Self {
            positions,
            radio_range: Some(radio_range),
            adj,
        })
    }

    /// A graph given by explicit edges, without positions.
    pub fn from_edges(
        ids: impl IntoIterator<Item = NodeId>,
        edges: &[(NodeId, NodeId)],
    ) -> Result<Self, TopologyError> {
        let mut adj: Adjacency = Adjacency::new();
        for i in ids {
            if adj.insert(i, BTreeSet::new()).is_some() {
                return Err(TopologyError::DuplicateId(i));
            }
        }
        if adj.is_empty() {
            return Err(TopologyError::Empty);
        }
        for &(a, b) in edges {
            if a == b {
                continue;
            }
            if !adj.contains_key(&a) || !adj.contains_key(&b) {
                return Err(TopologyError::UnknownNode(a, b));
            }
            adj.get_mut(&a).expect("node").insert(b);
            adj.get_mut(&b).expect("node").insert(a);
        }
        Ok(Self {
            positions: BTreeMap::new(),
            radio_range: None,
            adj,
        })
    }

    /// A random connected graph on `n` nodes: a random spanning tree plus
    /// each remaining pair with probability `extra`.
    pub fn random_connected(n: usize, extra: f64, rng: &mut impl Rng) -> Self {
        let ids: Vec<NodeId> = (0..n as NodeId).collect();
        let mut order = ids.clone();
        order.shuffle(rng);
        let mut edges = Vec::new();
        for i in 1..order.len() {
            let parent = order[rng.gen_range(0..i)];
            edges.push((order[i], parent));
        }
        for a in 0..n as NodeId {
            for b in a + 1..n as NodeId {
                if rng.gen_bool(extra) {
                    edges.push((a, b));
                }
            }
        }
        Self::from_edges(ids, &edges).expect("generated ids are distinct")
    }

    /// The bundled 53-sensor lab layout.
    pub fn intel_lab_coords() -> Vec<(NodeId, f64, f64)> {
        parse_coords(INTEL_LAB_COORDS).expect("bundled layout parses")
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adj.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.adj.contains_key(&id)
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adj
    }

    pub fn neighbors(&self, id: NodeId) -> &BTreeSet<NodeId> {
        static NONE: BTreeSet<NodeId> = BTreeSet::new();
        self.adj.get(&id).unwrap_or(&NONE)
    }

    pub fn position(&self, id: NodeId) -> Option<(f64, f64)> {
        self.positions.get(&id).copied()
    }

    pub fn radio_range(&self) -> Option<f64> {
        self.radio_range
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn set_link(&mut self, a: NodeId, b: NodeId, up: bool) -> Result<bool, TopologyError> {
        if !self.contains(a) || !self.contains(b) {
            return Err(TopologyError::UnknownNode(a, b));
        }
        if a == b {
            return Ok(false);
        }
        let changed = if up {
            self.adj.get_mut(&a).expect("node").insert(b)
        } else {
            self.adj.get_mut(&a).expect("node").remove(&b)
        };
        if up {
            self.adj.get_mut(&b).expect("node").insert(a);
        } else {
            self.adj.get_mut(&b).expect("node").remove(&a);
        }
        Ok(changed)
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &s in self.adj.keys() {
            if seen.contains(&s) {
                continue;
            }
            let comp: Vec<NodeId> = crate::semiglobal::hop_distances(&self.adj, s).into_keys().collect();
            seen.extend(comp.iter().copied());
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    pub fn require_connected(&self) -> Result<(), TopologyError> {
        let cs = self.components();
        if cs.len() > 1 {
            return Err(TopologyError::Disconnected(cs));
        }
        Ok(())
    }

    /// Node nearest to a point, ties to the lower id.
    pub fn nearest_node(&self, x: f64, y: f64) -> Option<NodeId> {
        self.positions
            .iter()
            .min_by(|a, b| {
                let da = (a.1 .0 - x).hypot(a.1 .1 - y);
                let db = (b.1 .0 - x).hypot(b.1 .1 - y);
                da.total_cmp(&db).then(a.0.cmp(b.0))
            })
            .map(|(&id, _)| id)
    }

    /// Next hop toward `to` for every node that can reach it: BFS from
    /// `to`, each node routing via its lowest-id neighbor one hop closer.
    pub fn routes_to(&self, to: NodeId) -> BTreeMap<NodeId, NodeId> {
        let mut dist = BTreeMap::from([(to, 0u32)]);
        let mut queue = VecDeque::from([to]);
        while let Some(u) = queue.pop_front() {
            let du = dist[&u];
            for &v in self.neighbors(u) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(du + 1);
                    queue.push_back(v);
                }
            }
        }
        let mut next = BTreeMap::new();
        for (&v, &dv) in &dist {
            if v == to {
                continue;
            }
            let hop = self
                .neighbors(v)
                .iter()
                .copied()
                .find(|u| dist.get(u) == Some(&(dv - 1)))
                .expect("BFS parent exists");
            next.insert(v, hop);
        }
        next
    }

    /// Hop path from `from` to `to`, both ends included.
    pub fn path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        let next = self.routes_to(to);
        let mut path = vec![from];
        let mut at = from;
        while at != to {
            at = *next.get(&at)?;
            path.push(at);
        }
        Some(path)
    }
}

/// Parses `id,x,y` lines. Blank lines, `#` comments and a header line whose
/// first field is not a number are skipped.
pub fn parse_coords(text: &str) -> Result<Vec<(NodeId, f64, f64)>, TopologyError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split([',', ' ', '\t']).filter(|s| !s.is_empty()).collect();
        if out.is_empty() && f.first().is_some_and(|s| s.parse::<f64>().is_err()) {
            continue;
        }
        let bad = |reason: &str| TopologyError::BadCoords {
            line: n + 1,
            reason: reason.to_string(),
        };
        if f.len() < 3 {
            return Err(bad("expected id,x,y"));
        }
        let id = f[0].parse().map_err(|_| bad("bad id"))?;
        let x: f64 = f[1].parse().map_err(|_| bad("bad x"))?;
        let y: f64 = f[2].parse().map_err(|_| bad("bad y"))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(bad("non-finite coordinate"));
        }
        out.push((id, x, y));
    }
    Ok(out)
}
