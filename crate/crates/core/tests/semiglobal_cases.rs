//! Frozen hop-bounded instances.

use std::collections::{BTreeMap, BTreeSet};

use wsn_outlier::rating::{DataPoint, NodeId, PointKey, RatingSpec};
use wsn_outlier::semiglobal::{self, HopConfig};
use wsn_outlier::simnet::{Algorithm, Network, Setup, Topology};

fn data(rows: &[(NodeId, &[f64])]) -> BTreeMap<NodeId, Vec<DataPoint>> {
    rows.iter()
        .map(|&(i, vs)| {
            let pts = vs
                .iter()
                .enumerate()
                .map(|(e, &v)| DataPoint::new(i, e as u64, 0.0, vec![v]).unwrap())
                .collect();
            (i, pts)
        })
        .collect()
}

/// Nodes whose settled estimate differs from the hop-ball answer.
fn wrong(topo: &Topology, data: &BTreeMap<NodeId, Vec<DataPoint>>, algorithm: Algorithm, d: u32) -> Vec<NodeId> {
    let spec = RatingSpec::nearest_neighbor(1);
    let setup = Setup::static_run(
        topo.clone(),
        data.clone(),
        spec.clone(),
        algorithm,
        HopConfig::Bounded(d),
    );
    let mut net = Network::new(&setup);
    net.run().unwrap();
    net.nodes()
        .iter()
        .filter(|(i, s)| {
            let want: BTreeSet<PointKey> = semiglobal::hop_ball_oracle(topo.adjacency(), data, **i, d, &spec)
                .unwrap()
                .iter()
                .map(DataPoint::key)
                .collect();
            let got: BTreeSet<PointKey> = s.estimate().unwrap().iter().map(DataPoint::key).collect();
            want != got
        })
        .map(|(i, _)| *i)
        .collect()
}

/// Chain 1 - 0 - 2 - 3 with d = 2. Capping hops on the global algorithm
/// leaves node 1 wrong; the stratified algorithm gets every node right.
#[test]
fn hop_capping_alone_is_wrong() {
    let topo = Topology::from_edges([0, 1, 2, 3], &[(0, 1), (0, 2), (2, 3)]).unwrap();
    let d = data(&[
        (0, &[2.0, 5.0]),
        (1, &[10.0, 5.0]),
        (2, &[28.0, 24.0]),
        (3, &[20.0, 11.0]),
    ]);
    assert_eq!(wrong(&topo, &d, Algorithm::NaiveSemiglobal, 2), vec![1]);
    assert!(wrong(&topo, &d, Algorithm::Semiglobal, 2).is_empty());
}

#[test]
fn support_seen_only_at_the_last_hop_is_never_forwarded() {
    // 4 reaches node 0 at hop 2, outside every stratum node 0 sends from,
    // so its support 6 never leaves node 0 and 4 wins a tie it should lose.
    let topo = Topology::from_edges([0, 1, 2], &[(0, 2), (1, 2)]).unwrap();
    let d = data(&[
        (0, &[13.0, 15.0, 6.0, 29.0]),
        (1, &[38.0, 24.0, 4.0, 26.0]),
        (2, &[14.0]),
    ]);
    assert_eq!(wrong(&topo, &d, Algorithm::Semiglobal, 2), vec![0, 1, 2]);
    assert!(wrong(&topo, &d, Algorithm::Global, 2).is_empty());
}
