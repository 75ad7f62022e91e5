//! Baseline: every node ships its window to a sink, which answers for all.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::energy::Meter;
use super::metrics::RunMetrics;
use super::scenario::Setup;
use super::topology::Topology;
use super::{oracle, wire, SimError};
use crate::protocol::{Packet, PacketEntry};
use crate::rating::{self, DataPoint, NodeId, PointKey, PointSet};

struct Round<'a> {
    setup: &'a Setup,
    topology: &'a Topology,
    meters: &'a mut BTreeMap<NodeId, Meter>,
    rng: &'a mut ChaCha8Rng,
    relayed: u64,
}

impl Round<'_> {
    /// One transmission `from -> to`. Every neighbor of the sender pays to
    /// listen; only `to` can lose it. Returns whether `to` got it.
    fn hop(&mut self, from: NodeId, to: NodeId, points: &[DataPoint]) -> bool {
        let packet = Packet {
            sender: from,
            entries: vec![PacketEntry {
                recipient: to,
                points: points.to_vec(),
            }],
        };
        let bytes = if points.is_empty() {
            wire::HEADER_BYTES
        } else {
            wire::encoded_len(&packet)
        };
        let model = &self.setup.energy;
        self.meters
            .get_mut(&from)
            .expect("metered")
            .transmit(model, bytes, points.len());
        for v in self.topology.neighbors(from) {
            self.meters.get_mut(v).expect("metered").receive(model, bytes);
        }
        let p = self.setup.p_drop;
        !(p > 0.0 && self.rng.gen_bool(p))
    }

    /// Walks `path`, stopping at the first loss.
    fn along(&mut self, path: &[NodeId], points: &[DataPoint], count_relay: bool) -> bool {
        for w in path.windows(2) {
            if count_relay {
                self.relayed += points.len() as u64;
            }
            if !self.hop(w[0], w[1], points) {
                return false;
            }
        }
        true
    }
}

fn window_at(points: &[DataPoint], now: f64, w: Option<f64>) -> Vec<DataPoint> {
    points
        .iter()
        .filter(|p| p.timestamp <= now && w.is_none_or(|w| p.timestamp >= now - w))
        .cloned()
        .collect()
}

/// Runs the sink-based baseline: one round per sampling interval, or a
/// single round for static data.
pub fn run(setup: &Setup) -> Result<RunMetrics, SimError> {
    let mut topology = setup.topology.clone();
    let sink = setup
        .sink
        .or_else(|| topology.ids().next())
        .ok_or_else(|| SimError::Config(super::ConfigError::one("centralized run has no nodes")))?;
    let mut meters: BTreeMap<NodeId, Meter> = topology.ids().map(|i| (i, Meter::default())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut estimates: BTreeMap<NodeId, BTreeSet<PointKey>> = BTreeMap::new();
    let (mut measurements, mut correct, mut relayed, mut events) = (0u64, 0u64, 0u64, 0u64);
    let mut changes = setup.link_changes.clone();
    changes.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut pending = changes.into_iter().peekable();
    let rounds = if setup.data.is_static() { 1 } else { setup.intervals() };
    let mut last = 0.0;

    for k in 0..rounds {
        let now = k as f64 * setup.sample_period_s;
        while let Some(lc) = pending.next_if(|lc| lc.time <= now) {
            topology.set_link(lc.a, lc.b, lc.up).map_err(SimError::Topology)?;
        }
        let windows: BTreeMap<NodeId, Vec<DataPoint>> = topology
            .ids()
            .map(|i| {
                let pts = setup.data.points().get(&i).map(Vec::as_slice).unwrap_or(&[]);
                let w = if setup.data.is_static() {
                    pts.to_vec()
                } else {
                    window_at(pts, now, setup.window)
                };
                (i, w)
            })
            .collect();
        let routes = topology.routes_to(sink);
        let path = |from: NodeId| {
            let mut p = vec![from];
            let mut at = from;
            while at != sink {
                at = *routes.get(&at)?;
                p.push(at);
            }
            Some(p)
        };

        let mut round = Round {
            setup,
            topology: &topology,
            meters: &mut meters,
            rng: &mut rng,
            relayed: 0,
        };
        let mut gathered: PointSet = windows.get(&sink).cloned().unwrap_or_default().into_iter().collect();
        for (&i, w) in &windows {
            if i == sink {
                continue;
            }
            let Some(up) = path(i) else { continue };
            events += 1;
            if round.along(&up, w, true) {
                gathered.extend(w.iter().cloned());
                let back: Vec<NodeId> = up.iter().rev().copied().collect();
                round.along(&back, &[], false);
            }
        }
        let answer = rating::top_n(&gathered, &setup.spec).map_err(|e| SimError::Protocol {
            node: sink,
            time: now,
            source: e.into(),
        })?;
        estimates.insert(sink, answer.iter().map(DataPoint::key).collect());
        for i in windows.keys().copied().filter(|&i| i != sink) {
            let Some(up) = path(i) else { continue };
            events += 1;
            let down: Vec<NodeId> = up.into_iter().rev().collect();
            if round.along(&down, &answer, false) {
                estimates.insert(i, answer.iter().map(DataPoint::key).collect());
            }
        }
        relayed += round.relayed;

        let want = oracle::global_oracle(windows.values().flatten(), &setup.spec).map_err(|e| SimError::Protocol {
            node: sink,
            time: now,
            source: e.into(),
        })?;
        let want: BTreeSet<PointKey> = want.iter().map(DataPoint::key).collect();
        for i in topology.ids() {
            measurements += 1;
            if estimates.get(&i) == Some(&want) {
                correct += 1;
            }
        }
        last = now;
    }
    let quiet = setup.data.is_static().then_some(last);
    Ok(RunMetrics::assemble(
        setup,
        &meters,
        measurements,
        correct,
        events,
        Some(relayed),
        quiet,
    ))
}
