//! Outlier rating functions and the set operations built on them.
//!
//! A rating `R(x, Q)` scores how much of an outlier `x` is relative to a
//! finite point set `Q`. Two ratings are provided: distance to the nearest
//! neighbor and the average distance to the `k` nearest neighbors. Both are
//! anti-monotone (adding points never raises a rating) and smooth (every
//! drop in rating is witnessed by a single added point), which is what the
//! in-network protocols rely on for convergence.
//!
//! Ties between equal ratings are broken by a fixed total order over points
//! (see [`tie_order`]), so every ranking produced here is strict.
//!
//! When fewer than `k` neighbors exist the rating is *deficient*. A deficient
//! rating orders above every complete rating, and deficient ratings order
//! first by the number of missing neighbors and then by the sum of the
//! distances that do exist. This keeps both axioms intact on small sets.

use std::cell::OnceCell;
use std::cmp::Ordering;
use std::collections::btree_map;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sensor identifier.
pub type NodeId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RatingError {
    #[error("dimension mismatch: point {point} has {found} features, expected {expected}")]
    DimensionMismatch {
        point: PointKey,
        expected: usize,
        found: usize,
    },
    #[error("feature vector contains a non-finite value")]
    NonFinite,
    #[error("invalid rating parameter: {0}")]
    InvalidParameter(String),
}

/// Network-wide identity of a sampled point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PointKey {
    pub origin: NodeId,
    pub epoch: u64,
}

impl fmt::Display for PointKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin, self.epoch)
    }
}

/// The features a rating function looks at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RatingError> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(RatingError::NonFinite)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = RatingError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// One sensed sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub origin: NodeId,
    pub epoch: u64,
    /// Sampling time in seconds on the shared window clock.
    pub timestamp: f64,
    pub rest: FeatureVector,
    /// Hops travelled from the origin. Zero at birth.
    #[serde(default)]
    pub hop: u32,
}

impl DataPoint {
    pub fn new(origin: NodeId, epoch: u64, timestamp: f64, values: Vec<f64>) -> Result<Self, RatingError> {
        Ok(Self {
            origin,
            epoch,
            timestamp,
            rest: FeatureVector::new(values)?,
            hop: 0,
        })
    }

    pub fn key(&self) -> PointKey {
        PointKey {
            origin: self.origin,
            epoch: self.epoch,
        }
    }

    pub fn values(&self) -> &[f64] {
        self.rest.values()
    }

    pub fn with_hop(mut self, hop: u32) -> Self {
        self.hop = hop;
        self
    }
}

/// The fixed tie-breaking order: lexicographic over the feature values,
/// then origin, then epoch. `Less` means `a` precedes `b`.
pub fn tie_order(a: &DataPoint, b: &DataPoint) -> Ordering {
    for (x, y) in a.values().iter().zip(b.values()) {
        match x.total_cmp(y) {
            Ordering::Equal => {}
            other => return other,
        }
    }
    a.values()
        .len()
        .cmp(&b.values().len())
        .then(a.origin.cmp(&b.origin))
        .then(a.epoch.cmp(&b.epoch))
}

/// A set of points keyed by identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    points: BTreeMap<PointKey, DataPoint>,
}

impl PointSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `p`, replacing any point with the same key. Returns the
    /// replaced point.
    pub fn insert(&mut self, p: DataPoint) -> Option<DataPoint> {
        self.points.insert(p.key(), p)
    }

    pub fn remove(&mut self, key: &PointKey) -> Option<DataPoint> {
        self.points.remove(key)
    }

    pub fn get(&self, key: &PointKey) -> Option<&DataPoint> {
        self.points.get(key)
    }

    pub fn get_mut(&mut self, key: &PointKey) -> Option<&mut DataPoint> {
        self.points.get_mut(key)
    }

    pub fn contains(&self, key: &PointKey) -> bool {
        self.points.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> btree_map::Values<'_, PointKey, DataPoint> {
        self.points.values()
    }

    pub fn keys(&self) -> btree_map::Keys<'_, PointKey, DataPoint> {
        self.points.keys()
    }

    pub fn retain(&mut self, mut f: impl FnMut(&DataPoint) -> bool) {
        self.points.retain(|_, p| f(p));
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = DataPoint>) {
        for p in other {
            self.insert(p);
        }
    }

    /// Union with `other`; on key collision the copy already in `self` wins.
    pub fn union(&self, other: &PointSet) -> PointSet {
        let mut out = self.clone();
        for p in other.iter() {
            out.points.entry(p.key()).or_insert_with(|| p.clone());
        }
        out
    }

    pub fn is_subset(&self, other: &PointSet) -> bool {
        self.keys().all(|k| other.contains(k))
    }

    /// Members sorted by the tie-breaking order.
    pub fn sorted(&self) -> Vec<&DataPoint> {
        let mut v: Vec<&DataPoint> = self.iter().collect();
        v.sort_by(|a, b| tie_order(a, b));
        v
    }
}

impl IntoIterator for PointSet {
    type Item = DataPoint;
    type IntoIter = btree_map::IntoValues<PointKey, DataPoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.into_values()
    }
}

impl FromIterator<DataPoint> for PointSet {
    fn from_iter<I: IntoIterator<Item = DataPoint>>(iter: I) -> Self {
        let mut s = PointSet::new();
        s.extend(iter);
        s
    }
}

impl<'a> IntoIterator for &'a PointSet {
    type Item = &'a DataPoint;
    type IntoIter = btree_map::Values<'a, PointKey, DataPoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RatingKind {
    NearestNeighbor,
    AvgKNearest { k: usize },
}

/// Which rating to use, how many outliers to report, and optional
/// per-dimension weights for the Euclidean metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSpec {
    pub kind: RatingKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl RatingSpec {
    pub fn nearest_neighbor(n: usize) -> Self {
        Self {
            kind: RatingKind::NearestNeighbor,
            n,
            weights: None,
        }
    }

    pub fn avg_k_nearest(k: usize, n: usize) -> Self {
        Self {
            kind: RatingKind::AvgKNearest { k },
            n,
            weights: None,
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    /// Number of neighbor distances the rating averages.
    pub fn neighbors(&self) -> usize {
        match self.kind {
            RatingKind::NearestNeighbor => 1,
            RatingKind::AvgKNearest { k } => k,
        }
    }

    pub fn validate(&self) -> Result<(), RatingError> {
        if self.n == 0 {
            return Err(RatingError::InvalidParameter("n must be positive".into()));
        }
        if let RatingKind::AvgKNearest { k: 0 } = self.kind {
            return Err(RatingError::InvalidParameter("k must be positive".into()));
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(RatingError::InvalidParameter(
                    "weights must be finite and positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn distance(&self, a: &DataPoint, b: &DataPoint) -> Result<f64, RatingError> {
        let (av, bv) = (a.values(), b.values());
        if av.len() != bv.len() {
            return Err(RatingError::DimensionMismatch {
                point: b.key(),
                expected: av.len(),
                found: bv.len(),
            });
        }
        let sq: f64 = match &self.weights {
            None => av.iter().zip(bv).map(|(x, y)| (x - y) * (x - y)).sum(),
            Some(w) => {
                if w.len() != av.len() {
                    return Err(RatingError::DimensionMismatch {
                        point: a.key(),
                        expected: w.len(),
                        found: av.len(),
                    });
                }
                av.iter().zip(bv).zip(w).map(|((x, y), w)| w * (x - y) * (x - y)).sum()
            }
        };
        Ok(sq.sqrt())
    }
}

/// An outlier score. Larger means more outlying.
#[derive(Debug, Clone, Copy)]
pub struct Rank {
    missing: usize,
    sum: f64,
    slots: usize,
}

impl Rank {
    /// The score as a real number: the mean neighbor distance, or positive
    /// infinity when fewer neighbors exist than the rating needs.
    pub fn value(&self) -> f64 {
        if self.missing > 0 {
            f64::INFINITY
        } else {
            self.sum / self.slots as f64
        }
    }

    pub fn is_complete(&self) -> bool {
        self.missing == 0
    }

    /// Neighbors the rating needed but did not find.
    pub fn missing(&self) -> usize {
        self.missing
    }
}

impl PartialEq for Rank {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Rank {}

impl PartialOrd for Rank {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rank {
    fn cmp(&self, other: &Self) -> Ordering {
        self.missing.cmp(&other.missing).then(self.sum.total_cmp(&other.sum))
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Neighbors of `x` in `pool` (excluding `x` itself), nearest first with
/// ties broken by [`tie_order`], truncated to the rating's neighbor count.
fn nearest<'a>(
    x: &DataPoint,
    pool: impl IntoIterator<Item = &'a DataPoint>,
    spec: &RatingSpec,
) -> Result<Vec<(f64, &'a DataPoint)>, RatingError> {
    let key = x.key();
    let mut cands = Vec::new();
    for q in pool {
        if q.key() == key {
            continue;
        }
        cands.push((spec.distance(x, q)?, q));
    }
    let k = spec.neighbors();
    let by = |a: &(f64, &DataPoint), b: &(f64, &DataPoint)| a.0.total_cmp(&b.0).then_with(|| tie_order(a.1, b.1));
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, by);
        cands.truncate(k);
    }
    cands.sort_by(by);
    Ok(cands)
}

fn rank_of(neigh: &[(f64, &DataPoint)], spec: &RatingSpec) -> Rank {
    let slots = spec.neighbors();
    Rank {
        missing: slots - neigh.len(),
        // ascending order keeps the sum reproducible for equal multisets
        sum: neigh.iter().map(|(d, _)| *d).sum(),
        slots,
    }
}

/// `R(x, Q)`: the outlier score of `x` with respect to `q`.
pub fn rank(x: &DataPoint, q: &PointSet, spec: &RatingSpec) -> Result<Rank, RatingError> {
    Ok(rank_of(&nearest(x, q, spec)?, spec))
}

/// Orders `x` before `y` (`Less`) when `x` is the stronger outlier in `q`.
pub fn compare(x: &DataPoint, y: &DataPoint, q: &PointSet, spec: &RatingSpec) -> Result<Ordering, RatingError> {
    let rx = rank(x, q, spec)?;
    let ry = rank(y, q, spec)?;
    Ok(outlier_order(x, rx, y, ry))
}

fn outlier_order(x: &DataPoint, rx: Rank, y: &DataPoint, ry: Rank) -> Ordering {
    ry.cmp(&rx).then_with(|| tie_order(x, y))
}

/// Points in a k-d tree, for pruned neighbor searches. Fails on mixed
/// dimensions.
struct KdIndex<'a> {
    /// Points in tree order; every node covers a contiguous range.
    pts: Vec<&'a DataPoint>,
    /// Coordinates in tree order, `dim` per point.
    xs: Vec<f64>,
    dim: usize,
    nodes: Vec<KdNode>,
    /// Per node, `dim` lower corners then `dim` upper corners.
    boxes: Vec<f64>,
    weights: Option<Vec<f64>>,
    /// Input index of the point at each tree position.
    orig: Vec<usize>,
    k: usize,
    mates: OnceCell<Mates>,
}

#[derive(Debug, Clone, Copy)]
struct KdNode {
    start: usize,
    end: usize,
    kids: Option<(usize, usize)>,
}

/// For every position, the other points of its leaf sorted by distance.
struct Mates {
    rows: Vec<(f64, u32)>,
    span: Vec<(u32, u32)>,
}

const LEAF: usize = 8;

impl<'a> KdIndex<'a> {
    fn new(pts: Vec<&'a DataPoint>, spec: &RatingSpec) -> Result<Option<Self>, RatingError> {
        let Some(first) = pts.first() else {
            return Ok(None);
        };
        let dim = first.rest.dim();
        if let Some(p) = pts.iter().find(|p| p.rest.dim() != dim) {
            return Err(RatingError::DimensionMismatch {
                point: p.key(),
                expected: dim,
                found: p.rest.dim(),
            });
        }
        spec.distance(first, first)?;
        if dim == 0 {
            return Ok(None);
        }
        let src: Vec<f64> = pts.iter().flat_map(|p| p.values().iter().copied()).collect();
        let mut index = Self {
            pts: Vec::new(),
            xs: Vec::new(),
            dim,
            nodes: Vec::new(),
            boxes: Vec::new(),
            weights: spec.weights.clone(),
            orig: (0..pts.len()).collect(),
            k: spec.neighbors(),
            mates: OnceCell::new(),
        };
        let mut order = std::mem::take(&mut index.orig);
        index.build(&src, &mut order, 0);
        index.xs = order
            .iter()
            .flat_map(|&i| src[i * dim..(i + 1) * dim].iter().copied())
            .collect();
        index.pts = order.iter().map(|&i| pts[i]).collect();
        index.orig = order;
        Ok(Some(index))
    }

    fn build(&mut self, src: &[f64], order: &mut [usize], start: usize) -> usize {
        let dim = self.dim;
        let at = self.nodes.len();
        let base = self.boxes.len();
        self.boxes.extend(std::iter::repeat_n(f64::INFINITY, dim));
        self.boxes.extend(std::iter::repeat_n(f64::NEG_INFINITY, dim));
        for &i in order.iter() {
            for (d, &v) in src[i * dim..(i + 1) * dim].iter().enumerate() {
                let lo = &mut self.boxes[base + d];
                *lo = lo.min(v);
                let hi = &mut self.boxes[base + dim + d];
                *hi = hi.max(v);
            }
        }
        let w = |d: usize| self.weights.as_ref().map_or(1.0, |w| w[d]);
        let (split, spread) = (0..dim)
            .map(|d| {
                let side = self.boxes[base + dim + d] - self.boxes[base + d];
                (d, w(d) * side * side)
            })
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        let end = start + order.len();
        self.nodes.push(KdNode { start, end, kids: None });
        if order.len() <= LEAF || spread <= 0.0 {
            return at;
        }
        // cut at the middle of the widest side so runs of equal coordinates
        // stay together; fall back to the median if rounding empties a side
        let (a, b) = (self.boxes[base + split], self.boxes[base + dim + split]);
        let cut = a + (b - a) / 2.0;
        let coord = |i: usize| src[i * dim + split];
        let mut mid = 0;
        for i in 0..order.len() {
            if coord(order[i]) <= cut {
                order.swap(i, mid);
                mid += 1;
            }
        }
        if mid == 0 || mid == order.len() {
            mid = order.len() / 2;
            order.select_nth_unstable_by(mid, |&a, &b| coord(a).total_cmp(&coord(b)));
        }
        let (l, r) = order.split_at_mut(mid);
        let left = self.build(src, l, start);
        let right = self.build(src, r, start + mid);
        self.nodes[at].kids = Some((left, right));
        at
    }

    fn at(&self, pos: usize) -> &[f64] {
        &self.xs[pos * self.dim..(pos + 1) * self.dim]
    }

    /// Same arithmetic as [`RatingSpec::distance`], so results agree bit
    /// for bit.
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut sq = 0.0;
        match &self.weights {
            None => {
                for (x, y) in a.iter().zip(b) {
                    sq += (x - y) * (x - y);
                }
            }
            Some(w) => {
                for ((x, y), w) in a.iter().zip(b).zip(w) {
                    sq += w * (x - y) * (x - y);
                }
            }
        }
        sq.sqrt()
    }

    /// Lower bound on the distance from `x` to anything under `node`,
    /// evaluated like the distance itself so rounding cannot lift it above
    /// a true distance.
    fn bound(&self, x: &[f64], node: usize) -> f64 {
        let b = &self.boxes[node * 2 * self.dim..(node + 1) * 2 * self.dim];
        let (lo, hi) = b.split_at(self.dim);
        let mut sq = 0.0;
        for (d, &v) in x.iter().enumerate() {
            let g = if v < lo[d] {
                lo[d] - v
            } else if v > hi[d] {
                v - hi[d]
            } else {
                0.0
            };
            sq += match &self.weights {
                None => g * g,
                Some(w) => w[d] * g * g,
            };
        }
        sq.sqrt()
    }

    /// Children nearest first.
    fn ordered(&self, x: &[f64], node: usize) -> Option<[(f64, usize); 2]> {
        let (a, b) = self.nodes[node].kids?;
        let (ba, bb) = (self.bound(x, a), self.bound(x, b));
        Some(if bb < ba {
            [(bb, b), (ba, a)]
        } else {
            [(ba, a), (bb, b)]
        })
    }

    fn partial(&self, best: &[f64]) -> Rank {
        Rank {
            missing: self.k - best.len(),
            sum: best.iter().sum(),
            slots: self.k,
        }
    }

    /// Rank of the point at tree position `pos` among the positions `mask`
    /// admits. Gives up and returns `None` as soon as the rank is certain
    /// to fall strictly below `floor`.
    fn rank_at(&self, pos: usize, mask: Option<&[bool]>, floor: Option<Rank>, best: &mut Vec<f64>) -> Option<Rank> {
        best.clear();
        self.rank_walk(0, pos, mask, floor, best).then(|| self.partial(best))
    }

    fn rank_walk(
        &self,
        node: usize,
        pos: usize,
        mask: Option<&[bool]>,
        floor: Option<Rank>,
        best: &mut Vec<f64>,
    ) -> bool {
        let x = self.at(pos);
        match self.ordered(x, node) {
            Some(kids) => {
                for (b, c) in kids {
                    // nothing in there can shorten the k-th distance
                    if best.len() == self.k && b >= best[self.k - 1] {
                        continue;
                    }
                    if !self.rank_walk(c, pos, mask, floor, best) {
                        return false;
                    }
                }
            }
            None => {
                let n = self.nodes[node];
                for q in n.start..n.end {
                    if q == pos || mask.is_some_and(|m| !m[q]) {
                        continue;
                    }
                    let dist = self.distance(x, self.at(q));
                    if best.len() < self.k || dist < best[self.k - 1] {
                        let at = best.partition_point(|&b| b <= dist);
                        best.insert(at, dist);
                        best.truncate(self.k);
                        // more neighbors only ever lower the rank
                        if floor.is_some_and(|f| self.partial(best) < f) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    fn mates(&self) -> &Mates {
        self.mates.get_or_init(|| {
            let mut rows = Vec::new();
            let mut span = vec![(0, 0); self.pts.len()];
            for n in self.nodes.iter().filter(|n| n.kids.is_none()) {
                for (a, out) in span.iter_mut().enumerate().take(n.end).skip(n.start) {
                    let from = rows.len();
                    for b in (n.start..n.end).filter(|&b| b != a) {
                        rows.push((self.distance(self.at(a), self.at(b)), b as u32));
                    }
                    rows[from..].sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
                    *out = (from as u32, rows.len() as u32);
                }
            }
            Mates { rows, span }
        })
    }

    /// Tree positions of `O_n` over the admitted points, strongest first.
    ///
    /// A candidate's rank among its admitted leaf-mates bounds its true rank
    /// from above. Candidates are searched loosest bound first, and the
    /// sweep stops once the bound drops below the n-th best rank found.
    fn top(&self, n: usize, mask: Option<&[bool]>) -> Vec<usize> {
        if n == 0 {
            return Vec::new();
        }
        let mates = self.mates();
        let mut buf = Vec::with_capacity(self.k + 1);
        let mut open: Vec<(Rank, usize)> = Vec::with_capacity(self.pts.len());
        for pos in 0..self.pts.len() {
            if mask.is_some_and(|m| !m[pos]) {
                continue;
            }
            buf.clear();
            let (from, to) = mates.span[pos];
            for &(d, q) in &mates.rows[from as usize..to as usize] {
                if mask.is_none_or(|m| m[q as usize]) {
                    buf.push(d);
                    if buf.len() == self.k {
                        break;
                    }
                }
            }
            open.push((self.partial(&buf), pos));
        }
        let loosest = |a: &(Rank, usize), b: &(Rank, usize)| b.0.cmp(&a.0).then(a.1.cmp(&b.1));
        let mut top: Vec<(Rank, usize)> = Vec::with_capacity(n + 1);
        // order the candidates a chunk at a time; most sweeps end in the first
        let (mut done, mut chunk) = (0, n + 8);
        'sweep: while done < open.len() {
            let end = (done + chunk).min(open.len());
            if end < open.len() {
                open[done..].select_nth_unstable_by(end - done - 1, loosest);
            }
            open[done..end].sort_unstable_by(loosest);
            for &(upper, pos) in &open[done..end] {
                let floor = (top.len() == n).then(|| top[n - 1].0);
                if floor.is_some_and(|f| upper < f) {
                    break 'sweep;
                }
                let Some(r) = self.rank_at(pos, mask, floor, &mut buf) else {
                    continue;
                };
                let x = self.pts[pos];
                let at = top.partition_point(|&(rb, b)| outlier_order(self.pts[b], rb, x, r) == Ordering::Less);
                if at < n {
                    top.insert(at, (r, pos));
                    top.truncate(n);
                }
            }
            done = end;
            chunk *= 2;
        }
        top.into_iter().map(|(_, pos)| pos).collect()
    }

    /// Tree positions of the rating's nearest neighbors of `x`, nearest
    /// first, ties by [`tie_order`]. Same answer as a full scan.
    fn nearest(&self, x: &DataPoint) -> Vec<(f64, usize)> {
        let mut best = Vec::with_capacity(self.k + 1);
        self.nearest_walk(0, x, &mut best);
        best
    }

    fn nearest_walk(&self, node: usize, x: &DataPoint, best: &mut Vec<(f64, usize)>) {
        let k = self.k;
        let by = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.total_cmp(&b.0)
                .then_with(|| tie_order(self.pts[a.1], self.pts[b.1]))
        };
        match self.ordered(x.values(), node) {
            Some(kids) => {
                for (b, c) in kids {
                    // equal bounds stay in play: an equidistant point may win the tie
                    if best.len() == k && b > best[k - 1].0 {
                        continue;
                    }
                    self.nearest_walk(c, x, best);
                }
            }
            None => {
                let n = self.nodes[node];
                let key = x.key();
                for q in n.start..n.end {
                    if self.pts[q].key() == key {
                        continue;
                    }
                    let cand = (self.distance(x.values(), self.at(q)), q);
                    if best.len() < k || by(&cand, &best[k - 1]) == Ordering::Less {
                        let at = best.partition_point(|b| by(b, &cand) == Ordering::Less);
                        best.insert(at, cand);
                        best.truncate(k);
                    }
                }
            }
        }
    }
}

fn brute_ranked<'a>(pts: &[&'a DataPoint], spec: &RatingSpec) -> Result<Vec<(Rank, &'a DataPoint)>, RatingError> {
    let mut out = Vec::with_capacity(pts.len());
    for &x in pts {
        out.push((rank_of(&nearest(x, pts.iter().copied(), spec)?, spec), x));
    }
    out.sort_by(|a, b| outlier_order(a.1, a.0, b.1, b.0));
    Ok(out)
}

/// Every point of `q` with its rank, strongest outlier first.
pub fn ranked<'a>(q: &'a PointSet, spec: &RatingSpec) -> Result<Vec<(Rank, &'a DataPoint)>, RatingError> {
    let pts: Vec<&DataPoint> = q.iter().collect();
    let Some(index) = KdIndex::new(pts.clone(), spec)? else {
        return brute_ranked(&pts, spec);
    };
    let mut out = Vec::with_capacity(pts.len());
    let mut buf = Vec::new();
    for pos in 0..index.pts.len() {
        let r = index.rank_at(pos, None, None, &mut buf).expect("no floor, no pruning");
        out.push((r, index.pts[pos]));
    }
    out.sort_by(|a, b| outlier_order(a.1, a.0, b.1, b.0));
    Ok(out)
}

/// `O_n` of a borrowed collection of distinct points, strongest first.
pub fn top_of<'a>(pts: Vec<&'a DataPoint>, spec: &RatingSpec) -> Result<Vec<&'a DataPoint>, RatingError> {
    match KdIndex::new(pts.clone(), spec)? {
        Some(index) => Ok(index.top(spec.n, None).into_iter().map(|p| index.pts[p]).collect()),
        None => Ok(brute_ranked(&pts, spec)?
            .into_iter()
            .take(spec.n)
            .map(|(_, p)| p)
            .collect()),
    }
}

/// A point set with a search index built once, for repeated top-`n` and
/// support queries against the same pool. Points are addressed by their
/// position in ascending key order.
pub struct Indexed<'a> {
    set: &'a PointSet,
    pts: Vec<&'a DataPoint>,
    keys: Vec<PointKey>,
    tree: Option<KdIndex<'a>>,
    spec: RatingSpec,
    supports: Vec<OnceCell<Vec<usize>>>,
}

impl<'a> Indexed<'a> {
    pub fn new(set: &'a PointSet, spec: &RatingSpec) -> Result<Self, RatingError> {
        let pts: Vec<&DataPoint> = set.iter().collect();
        Ok(Self {
            set,
            keys: pts.iter().map(|p| p.key()).collect(),
            tree: KdIndex::new(pts.clone(), spec)?,
            spec: spec.clone(),
            supports: (0..pts.len()).map(|_| OnceCell::new()).collect(),
            pts,
        })
    }

    pub fn set(&self) -> &'a PointSet {
        self.set
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn key(&self, i: usize) -> PointKey {
        self.keys[i]
    }

    /// Position of `key`, if held.
    pub fn position(&self, key: &PointKey) -> Option<usize> {
        self.keys.binary_search(key).ok()
    }

    /// Sets `mask` at the position of every held key. `keys` must ascend.
    pub fn mark<'k>(&self, keys: impl Iterator<Item = &'k PointKey>, mask: &mut [bool]) {
        let mut i = 0;
        for k in keys {
            while i < self.keys.len() && self.keys[i] < *k {
                i += 1;
            }
            if i == self.keys.len() {
                return;
            }
            if self.keys[i] == *k {
                mask[i] = true;
            }
        }
    }

    /// Positions of `O_n` over the points `mask` admits (all when `None`),
    /// strongest first.
    pub fn top_positions(&self, mask: Option<&[bool]>) -> Result<Vec<usize>, RatingError> {
        match &self.tree {
            Some(t) => {
                let by_tree: Option<Vec<bool>> = mask.map(|m| t.orig.iter().map(|&i| m[i]).collect());
                Ok(t.top(self.spec.n, by_tree.as_deref())
                    .into_iter()
                    .map(|p| t.orig[p])
                    .collect())
            }
            None => {
                let pts = self.pts.iter().enumerate().filter(|(i, _)| mask.is_none_or(|m| m[*i]));
                let top = top_of(pts.map(|(_, &p)| p).collect(), &self.spec)?;
                Ok(top.iter().map(|p| self.position(&p.key()).expect("held")).collect())
            }
        }
    }

    /// `O_n` of the whole set.
    pub fn top(&self) -> Result<Vec<&'a DataPoint>, RatingError> {
        Ok(self.top_positions(None)?.into_iter().map(|i| self.pts[i]).collect())
    }

    /// `O_n` of the subset named by `keys`. Keys outside the set are
    /// ignored.
    pub fn top_among<'k>(&self, keys: impl Iterator<Item = &'k PointKey>) -> Result<Vec<&'a DataPoint>, RatingError> {
        let mut mask = vec![false; self.len()];
        for k in keys {
            if let Some(i) = self.position(k) {
                mask[i] = true;
            }
        }
        Ok(self
            .top_positions(Some(&mask))?
            .into_iter()
            .map(|i| self.pts[i])
            .collect())
    }

    /// Positions of `[P|x]` for the point at position `i`, computed once.
    pub fn support_at(&self, i: usize) -> Result<&[usize], RatingError> {
        if let Some(s) = self.supports[i].get() {
            return Ok(s);
        }
        let found = self.nearest_positions(self.pts[i])?;
        Ok(self.supports[i].get_or_init(|| found))
    }

    fn nearest_positions(&self, x: &DataPoint) -> Result<Vec<usize>, RatingError> {
        Ok(match &self.tree {
            Some(t) => {
                if x.rest.dim() != t.dim {
                    return Err(RatingError::DimensionMismatch {
                        point: x.key(),
                        expected: t.dim,
                        found: x.rest.dim(),
                    });
                }
                t.nearest(x).into_iter().map(|(_, p)| t.orig[p]).collect()
            }
            None => nearest(x, self.set, &self.spec)?
                .into_iter()
                .map(|(_, p)| self.position(&p.key()).expect("held"))
                .collect(),
        })
    }

    /// `[P|x]` as keys.
    pub fn support(&self, x: &DataPoint) -> Result<Vec<PointKey>, RatingError> {
        let at = self.position(&x.key()).filter(|&i| self.pts[i] == x);
        let pos = match at {
            Some(i) => self.support_at(i)?.to_vec(),
            None => self.nearest_positions(x)?,
        };
        Ok(pos.into_iter().map(|i| self.keys[i]).collect())
    }
}

/// Reference form of [`ranked`]: rates every point against every other.
pub fn ranked_brute<'a>(q: &'a PointSet, spec: &RatingSpec) -> Result<Vec<(Rank, &'a DataPoint)>, RatingError> {
    let mut out = Vec::with_capacity(q.len());
    for x in q {
        out.push((rank(x, q, spec)?, x));
    }
    out.sort_by(|a, b| outlier_order(a.1, a.0, b.1, b.0));
    Ok(out)
}

/// `O_n(Q)`: the `n` strongest outliers of `q`, strongest first. Returns
/// all of `q` when it holds fewer than `n` points.
pub fn top_n(q: &PointSet, spec: &RatingSpec) -> Result<Vec<DataPoint>, RatingError> {
    Ok(top_of(q.iter().collect(), spec)?.into_iter().cloned().collect())
}

/// `[P|x]`: the smallest support set of `x` over `p`, lexicographically
/// least under the tie order among those of minimal size.
pub fn min_support(p: &PointSet, x: &DataPoint, spec: &RatingSpec) -> Result<PointSet, RatingError> {
    Ok(nearest(x, p, spec)?.into_iter().map(|(_, q)| q.clone()).collect())
}

/// `[P|Q]`: union of the minimal supports of every point of `q`.
pub fn support_of_set<'a>(
    p: &PointSet,
    q: impl IntoIterator<Item = &'a DataPoint>,
    spec: &RatingSpec,
) -> Result<PointSet, RatingError> {
    let mut out = PointSet::new();
    for x in q {
        out.extend(min_support(p, x, spec)?);
    }
    Ok(out)
}
