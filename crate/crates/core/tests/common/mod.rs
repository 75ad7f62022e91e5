//! Shared generators and checks for the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsn_outlier::protocol::{NodeEvent, NodeState, Packet, PacketEntry};
use wsn_outlier::rating::{self, DataPoint, NodeId, PointKey, PointSet, RatingSpec};
use wsn_outlier::semiglobal::{self, HopConfig};
use wsn_outlier::simnet::{Algorithm, Network, Setup, Topology};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A coordinate drawn either from a coarse grid (plenty of exact ties) or
/// from a fine one.
fn coord(rng: &mut impl Rng, coarse: bool) -> f64 {
    if coarse {
        f64::from(rng.gen_range(0..12))
    } else {
        f64::from(rng.gen_range(0..10_000)) / 100.0
    }
}

pub fn random_points(rng: &mut impl Rng, origin: NodeId, count: usize, dim: usize, coarse: bool) -> Vec<DataPoint> {
    (0..count)
        .map(|e| {
            let v = (0..dim).map(|_| coord(rng, coarse)).collect();
            DataPoint::new(origin, e as u64, 0.0, v).expect("finite")
        })
        .collect()
}

pub fn random_spec(rng: &mut impl Rng) -> RatingSpec {
    let n = [1, 2, 4][rng.gen_range(0..3)];
    if rng.gen_bool(0.5) {
        RatingSpec::nearest_neighbor(n)
    } else {
        RatingSpec::avg_k_nearest([1, 2, 4][rng.gen_range(0..3)], n)
    }
}

/// A random static instance: connected graph on 3..=20 nodes, up to 50
/// points per node in 1..=3 dimensions, NN or kNN.
pub fn random_trial(seed: u64, algorithm: Algorithm, hop: HopConfig) -> Setup {
    let mut r = rng(seed);
    let nodes = r.gen_range(3..=20);
    let topo = Topology::random_connected(nodes, r.gen_range(0.0..0.3), &mut r);
    let dim = r.gen_range(1..=3);
    let coarse = r.gen_bool(0.3);
    let most = r.gen_range(1..=50);
    let data: BTreeMap<NodeId, Vec<DataPoint>> = topo
        .ids()
        .map(|i| {
            let count = r.gen_range(0..=most);
            (i, random_points(&mut r, i, count, dim, coarse))
        })
        .collect();
    let spec = random_spec(&mut r);
    let mut s = Setup::static_run(topo, data, spec, algorithm, hop);
    s.seed = seed;
    s
}

fn keys<'a>(ps: impl IntoIterator<Item = &'a DataPoint>) -> BTreeSet<PointKey> {
    ps.into_iter().map(DataPoint::key).collect()
}

fn settle(setup: &Setup) -> Result<Network<'_>, String> {
    let mut net = Network::new(setup);
    net.run().map_err(|e| format!("seed {}: {e}", setup.seed))?;
    Ok(net)
}

/// Runs a global instance to quiescence and checks that every estimate
/// and support equals the brute-force answer over all data, and that all
/// sensors agree with each other.
pub fn check_global(setup: &Setup) -> Result<(), String> {
    let net = settle(setup)?;
    let all: PointSet = setup.data.points().values().flatten().cloned().collect();
    let want = rating::top_n(&all, &setup.spec).map_err(|e| e.to_string())?;
    let want_support = keys(&rating::support_of_set(&all, &want, &setup.spec).map_err(|e| e.to_string())?);
    let want = keys(&want);
    let mut first: Option<(BTreeSet<PointKey>, BTreeSet<PointKey>)> = None;
    for (i, s) in net.nodes() {
        let est = keys(&s.estimate().map_err(|e| e.to_string())?);
        let sup = keys(&s.estimate_support().map_err(|e| e.to_string())?);
        if est != want {
            return Err(format!(
                "seed {}: node {i} estimate {est:?}, oracle {want:?}",
                setup.seed
            ));
        }
        if sup != want_support {
            return Err(format!(
                "seed {}: node {i} support differs from the oracle's",
                setup.seed
            ));
        }
        match &first {
            Some(f) if *f != (est.clone(), sup.clone()) => {
                return Err(format!("seed {}: node {i} disagrees with its peers", setup.seed));
            }
            None => first = Some((est, sup)),
            _ => {}
        }
    }
    Ok(())
}

/// Runs a hop-bounded instance to quiescence and compares each estimate
/// with the hop-ball answer.
pub fn check_semiglobal(setup: &Setup) -> Result<(), String> {
    let d = setup.hop.diameter().expect("bounded");
    let net = settle(setup)?;
    let adj = setup.topology.adjacency();
    for (i, s) in net.nodes() {
        let est = keys(&s.estimate().map_err(|e| e.to_string())?);
        let want =
            semiglobal::hop_ball_oracle(adj, setup.data.points(), *i, d, &setup.spec).map_err(|e| e.to_string())?;
        if est != keys(&want) {
            return Err(format!(
                "seed {} d={d}: node {i} estimate differs from the hop-ball oracle",
                setup.seed
            ));
        }
    }
    Ok(())
}

/// A small random point set plus a spec, for the rating axioms.
pub fn small_instance(seed: u64) -> (PointSet, RatingSpec, ChaCha8Rng) {
    let mut r = rng(seed);
    let dim = r.gen_range(1..=3);
    let coarse = r.gen_bool(0.4);
    let count = r.gen_range(1..=14);
    let q: PointSet = random_points(&mut r, 0, count, dim, coarse).into_iter().collect();
    let spec = random_spec(&mut r);
    (q, spec, r)
}

fn random_subset(r: &mut impl Rng, q: &PointSet) -> PointSet {
    q.iter().filter(|_| r.gen_bool(0.5)).cloned().collect()
}

/// More data never raises a rating.
pub fn anti_monotone(seed: u64) -> Result<(), String> {
    let (q, spec, mut r) = small_instance(seed);
    let p = random_subset(&mut r, &q);
    for x in &p {
        let (small, big) = (rating::rank(x, &p, &spec), rating::rank(x, &q, &spec));
        let (small, big) = (small.map_err(|e| e.to_string())?, big.map_err(|e| e.to_string())?);
        if big > small {
            return Err(format!("seed {seed}: rank of {} rose from {small} to {big}", x.key()));
        }
    }
    Ok(())
}

/// Any drop in rating between a subset and a superset is already caused
/// by adding a single point of the difference.
pub fn smooth(seed: u64) -> Result<(), String> {
    let (q, spec, mut r) = small_instance(seed);
    let p = random_subset(&mut r, &q);
    for x in &p {
        let before = rating::rank(x, &p, &spec).map_err(|e| e.to_string())?;
        let after = rating::rank(x, &q, &spec).map_err(|e| e.to_string())?;
        if after >= before {
            continue;
        }
        let witness = q.iter().filter(|y| !p.contains(&y.key())).any(|y| {
            let mut one = p.clone();
            one.insert(y.clone());
            rating::rank(x, &one, &spec).is_ok_and(|rk| rk < before)
        });
        if !witness {
            return Err(format!(
                "seed {seed}: no single point explains the drop for {}",
                x.key()
            ));
        }
    }
    Ok(())
}

/// `[Q|x]` keeps the rating, and dropping any member of it changes the
/// rating, for points of `Q` and for outside points alike.
pub fn support_is_minimal(seed: u64) -> Result<(), String> {
    let (q, spec, mut r) = small_instance(seed);
    let dim = q.iter().next().map_or(1, |p| p.rest.dim());
    let outsider = random_points(&mut r, 1, 1, dim, false).remove(0);
    for x in q.iter().chain([&outsider]) {
        let full = rating::rank(x, &q, &spec).map_err(|e| e.to_string())?;
        let sup = rating::min_support(&q, x, &spec).map_err(|e| e.to_string())?;
        if sup.contains(&x.key()) {
            return Err(format!("seed {seed}: support of {} contains the point itself", x.key()));
        }
        if rating::rank(x, &sup, &spec).map_err(|e| e.to_string())? != full {
            return Err(format!("seed {seed}: support of {} changes its rating", x.key()));
        }
        for y in &sup {
            let mut less = sup.clone();
            less.remove(&y.key());
            if rating::rank(x, &less, &spec).map_err(|e| e.to_string())? == full {
                return Err(format!("seed {seed}: support of {} is not minimal", x.key()));
            }
        }
    }
    Ok(())
}

/// For an outlier `x` of `P` and any `z` in `P`, rating `x` against the
/// support of the whole estimate, with or without `z`, gives `R(x, P)`.
pub fn rank_kept_by_estimate_support(seed: u64) -> Result<(), String> {
    let (p, spec, mut r) = small_instance(seed);
    let top = rating::top_n(&p, &spec).map_err(|e| e.to_string())?;
    let sup = rating::support_of_set(&p, &top, &spec).map_err(|e| e.to_string())?;
    let z = p.iter().nth(r.gen_range(0..p.len())).expect("non-empty").clone();
    let mut with_z = sup.clone();
    with_z.insert(z);
    for x in &top {
        let whole = rating::rank(x, &p, &spec).map_err(|e| e.to_string())?;
        for part in [&sup, &with_z] {
            if rating::rank(x, part, &spec).map_err(|e| e.to_string())? != whole {
                return Err(format!("seed {seed}: restricting to the support moved {}", x.key()));
            }
        }
    }
    Ok(())
}

/// For `P ⊆ Q` with `O_n(Q) ⊆ P`, a change of estimate is always
/// witnessed by some outlier of `P` whose rating drops in `Q`.
///
/// Without `O_n(Q) ⊆ P` the claim is false: a new far point of `Q` can
/// displace an outlier of `P` whose rating did not move (see
/// `unwitnessed_change_needs_an_outside_outlier`).
pub fn estimate_change_is_witnessed(seed: u64) -> Result<(), String> {
    let (q, spec, mut r) = small_instance(seed);
    let p = random_subset(&mut r, &q);
    if p.len() < spec.n {
        return Ok(());
    }
    let (tp, tq) = (rating::top_n(&p, &spec), rating::top_n(&q, &spec));
    let (tp, tq) = (tp.map_err(|e| e.to_string())?, tq.map_err(|e| e.to_string())?);
    if keys(&tp) == keys(&tq) || tq.iter().any(|y| !p.contains(&y.key())) {
        return Ok(());
    }
    for x in &tp {
        if rating::rank(x, &p, &spec).map_err(|e| e.to_string())?
            > rating::rank(x, &q, &spec).map_err(|e| e.to_string())?
        {
            return Ok(());
        }
    }
    Err(format!("seed {seed}: estimate changed with no outlier losing rank"))
}

/// After any event a sensor has shared, with every neighbor, the support
/// of the estimate over what the two have in common.
pub fn closure_after_event(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let dim = r.gen_range(1..=2);
    let coarse = r.gen_bool(0.4);
    let spec = random_spec(&mut r);
    let nbrs: Vec<NodeId> = (1..=r.gen_range(1..=3)).collect();
    let mut s = NodeState::new(0, spec, None, nbrs.iter().copied());
    s.set_invariant_checks(false);
    let own = r.gen_range(0..=8);
    s.load_own(random_points(&mut r, 0, own, dim, coarse));
    let mut events = vec![NodeEvent::Init];
    for _ in 0..r.gen_range(1..=3) {
        let from = nbrs[r.gen_range(0..nbrs.len())];
        let count = r.gen_range(1..=6);
        let base = r.gen_range(0..1000u64);
        let pts: Vec<DataPoint> = random_points(&mut r, from, count, dim, coarse)
            .into_iter()
            .map(|mut p| {
                p.epoch += base;
                p
            })
            .collect();
        events.push(NodeEvent::PacketArrival(Packet {
            sender: from,
            entries: vec![PacketEntry {
                recipient: 0,
                points: pts,
            }],
        }));
    }
    if r.gen_bool(0.5) {
        let extra = random_points(&mut r, 0, 2, dim, coarse)
            .into_iter()
            .map(|mut p| {
                p.epoch += 100;
                p
            })
            .collect();
        events.push(NodeEvent::LocalDataChange {
            added: extra,
            evicted: Vec::new(),
        });
    }
    for (t, ev) in events.iter().enumerate() {
        s.handle_event(ev, t as f64).map_err(|e| format!("seed {seed}: {e}"))?;
        s.check_closure()
            .map_err(|e| format!("seed {seed} after event {t}: {e}"))?;
    }
    Ok(())
}

/// Runs `check` over `count` consecutive seeds and returns the failures.
pub fn failures(seeds: std::ops::Range<u64>, check: impl Fn(u64) -> Result<(), String>) -> Vec<String> {
    seeds.filter_map(|s| check(s).err()).collect()
}
