mod common;

use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;
use rand::Rng;
use wsn_outlier::rating::NodeId;
use wsn_outlier::semiglobal::{self, HopConfig};
use wsn_outlier::simnet::{self, Algorithm, LinkChange, Network, Scenario, Setup, Topology};

fn scenario(name: &str, edit: impl FnOnce(&mut Scenario)) -> Setup {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let (mut s, dir) = Scenario::load(&path).unwrap();
    edit(&mut s);
    s.resolve(&dir).unwrap()
}

fn short_reference(p_drop: f64, seed: u64) -> Setup {
    scenario("reference-10.toml", |s| {
        s.duration_s = 200.0;
        s.p_drop = p_drop;
        s.seed = seed;
    })
}

#[test]
fn reference_run_is_frozen() {
    let m = simnet::run(&short_reference(0.0, 7)).unwrap();
    assert_eq!(m.accuracy, 1.0);
    assert_eq!(m.measurements, 2000);
    assert_eq!(m.points_sent_total, 9373);
    assert_eq!(m.packets_sent_total, 7167);
    assert_eq!(m.events, 17271);
}

#[test]
fn lossy_reference_stays_accurate() {
    let m = simnet::run(&short_reference(0.02, 7)).unwrap();
    assert!(m.accuracy >= 0.9, "{}", m.accuracy);
    assert_eq!(m.measurements, 2000);
}

#[test]
fn reruns_are_byte_identical_and_seeds_matter() {
    let a = simnet::run(&short_reference(0.02, 3)).unwrap();
    let b = simnet::run(&short_reference(0.02, 3)).unwrap();
    let c = simnet::run(&short_reference(0.02, 4)).unwrap();
    assert_eq!(a.nodes_csv(), b.nodes_csv());
    assert_eq!(a.summary_json(), b.summary_json());
    assert_ne!(a.nodes_csv(), c.nodes_csv());
}

/// All-pairs hop counts by repeated relaxation, independent of the BFS in
/// the library.
fn relaxed_hops(t: &Topology) -> BTreeMap<(NodeId, NodeId), u32> {
    let ids: Vec<NodeId> = t.ids().collect();
    let mut d: BTreeMap<(NodeId, NodeId), u32> = BTreeMap::new();
    for &a in &ids {
        d.insert((a, a), 0);
        for &b in t.neighbors(a) {
            d.insert((a, b), 1);
        }
    }
    for &m in &ids {
        for &a in &ids {
            for &b in &ids {
                if let (Some(&x), Some(&y)) = (d.get(&(a, m)), d.get(&(m, b))) {
                    let e = d.entry((a, b)).or_insert(u32::MAX);
                    *e = (*e).min(x + y);
                }
            }
        }
    }
    d
}

#[test]
fn lab_hop_balls_match_relaxation() {
    let lab = Topology::build(&Topology::intel_lab_coords(), 6.77).unwrap();
    let all = relaxed_hops(&lab);
    let mut sums = [0usize; 3];
    for i in lab.ids() {
        let bfs = semiglobal::hop_distances(lab.adjacency(), i);
        for j in lab.ids() {
            assert_eq!(bfs.get(&j).copied(), all.get(&(i, j)).copied(), "{i}->{j}");
        }
        for (d, s) in sums.iter_mut().enumerate() {
            *s += bfs.values().filter(|&&h| h <= d as u32 + 1).count();
        }
    }
    assert_eq!(lab.len(), 53);
    assert_eq!(sums, [303, 765, 1327]);
}

/// Random link flips that keep the graph connected, spread over a second.
fn churn(t: &Topology, rng: &mut impl Rng, count: usize) -> Vec<LinkChange> {
    let ids: Vec<NodeId> = t.ids().collect();
    let mut live = t.clone();
    let mut out = Vec::new();
    while out.len() < count {
        let a = ids[rng.gen_range(0..ids.len())];
        let b = ids[rng.gen_range(0..ids.len())];
        if a == b {
            continue;
        }
        let up = !live.neighbors(a).contains(&b);
        let mut next = live.clone();
        next.set_link(a, b, up).unwrap();
        if !next.is_connected() {
            continue;
        }
        live = next;
        out.push(LinkChange {
            time: 0.1 * (out.len() + 1) as f64,
            a,
            b,
            up,
        });
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn link_churn_reconverges_to_the_oracle(seed in 0u64..1_000_000) {
        let mut setup = common::random_trial(seed, Algorithm::Global, HopConfig::Unbounded);
        let mut rng = common::rng(seed ^ 0x5eed);
        setup.link_changes = churn(&setup.topology, &mut rng, 6);
        let mut net = Network::new(&setup);
        net.run().unwrap();
        prop_assert_eq!(net.metrics().accuracy, 1.0);
    }
}
