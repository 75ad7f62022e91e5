//! Brute-force answers computed with global knowledge.

use std::collections::{BTreeMap, BTreeSet};

use crate::rating::{self, DataPoint, NodeId, PointKey, PointSet, RatingError, RatingSpec};
use crate::semiglobal::{self, Adjacency};

/// `O_n` over the union of every node's live window.
pub fn global_oracle<'a>(
    windows: impl IntoIterator<Item = &'a DataPoint>,
    spec: &RatingSpec,
) -> Result<Vec<DataPoint>, RatingError> {
    let all: PointSet = windows.into_iter().cloned().collect();
    rating::top_n(&all, spec)
}

/// Expected estimate of every node: the global answer for `None`, the
/// hop-ball answer for `Some(d)`.
pub fn expected_estimates(
    adj: &Adjacency,
    windows: &BTreeMap<NodeId, Vec<DataPoint>>,
    d: Option<u32>,
    spec: &RatingSpec,
) -> Result<BTreeMap<NodeId, BTreeSet<PointKey>>, RatingError> {
    let keys = |v: Vec<DataPoint>| v.iter().map(DataPoint::key).collect::<BTreeSet<_>>();
    match d {
        None => {
            let g = keys(global_oracle(windows.values().flatten(), spec)?);
            Ok(adj.keys().map(|&i| (i, g.clone())).collect())
        }
        Some(d) => adj
            .keys()
            .map(|&i| Ok((i, keys(semiglobal::hop_ball_oracle(adj, windows, i, d, spec)?))))
            .collect(),
    }
}
