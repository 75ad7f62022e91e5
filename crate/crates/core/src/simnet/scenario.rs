//! Scenario files and their resolution into a runnable [`Setup`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::energy::EnergyModel;
use super::topology::{parse_coords, Topology};
use crate::ingest::{self, SyntheticParams, TraceSchema};
use crate::rating::{DataPoint, NodeId, RatingSpec};
use crate::semiglobal::HopConfig;

/// Every problem found in a scenario, not just the first.
#[derive(Debug, Error, Clone, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario: {}", self.violations.join("; "))
    }
}

impl ConfigError {
    pub fn one(msg: impl Into<String>) -> Self {
        Self {
            violations: vec![msg.into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Global,
    Semiglobal,
    Centralized,
    /// Hop-capped global algorithm. Known to be wrong; for comparison only.
    NaiveSemiglobal,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Global => "global",
            Self::Semiglobal => "semiglobal",
            Self::Centralized => "centralized",
            Self::NaiveSemiglobal => "naive_semiglobal",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "global" => Ok(Self::Global),
            "semiglobal" => Ok(Self::Semiglobal),
            "centralized" => Ok(Self::Centralized),
            "naive_semiglobal" => Ok(Self::NaiveSemiglobal),
            _ => Err(format!("unknown algorithm {s:?}")),
        }
    }
}

/// Rating function by name. `lof` parses so it can be rejected with a
/// reason: it is not anti-monotone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingName {
    Nn,
    Knn,
    Lof,
}

impl std::str::FromStr for RatingName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nn" => Ok(Self::Nn),
            "knn" => Ok(Self::Knn),
            "lof" => Ok(Self::Lof),
            _ => Err(format!("unknown rating {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySource {
    /// The bundled 53-sensor layout.
    IntelLab {
        #[serde(default = "default_range")]
        radio_range: f64,
        #[serde(default)]
        base_station: Option<[f64; 2]>,
    },
    /// Inline `[id, x, y]` triples or an `id,x,y` file.
    Coords {
        #[serde(default = "default_range")]
        radio_range: f64,
        #[serde(default)]
        coords: Vec<(NodeId, f64, f64)>,
        #[serde(default)]
        file: Option<PathBuf>,
        #[serde(default)]
        base_station: Option<[f64; 2]>,
    },
    Edges {
        nodes: Vec<NodeId>,
        #[serde(default)]
        edges: Vec<(NodeId, NodeId)>,
    },
    /// Random spanning tree plus extra edges, drawn from the scenario seed.
    Random {
        nodes: usize,
        #[serde(default = "default_extra")]
        extra: f64,
    },
}

fn default_range() -> f64 {
    6.77
}

fn default_extra() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Fixed per-node feature vectors, all present from the start.
    Static { points: BTreeMap<String, Vec<Vec<f64>>> },
    /// The two-sensor family with parameters `a, b ≥ 12`. Sensor 1 holds
    /// `{0.5, 3, 6, 10..=a}`, sensor 0 holds `{4, 5, 7, 8, 9, a+1..=a+b}`.
    TwoNode { a: u32, b: u32 },
    /// Synthetic lab-like temperature streams, one reading per node per
    /// sampling period.
    Synthetic {
        #[serde(flatten)]
        params: SyntheticParams,
        #[serde(default)]
        impute_window: Option<usize>,
    },
    /// A recorded trace. Coordinates come from the schema's columns or,
    /// failing that, from the topology.
    Trace {
        path: PathBuf,
        #[serde(default = "TraceSchema::intel_lab")]
        schema: TraceSchema,
        #[serde(default)]
        impute_window: Option<usize>,
        #[serde(default)]
        start_epoch: Option<u64>,
    },
}

impl DataSource {
    pub fn is_static(&self) -> bool {
        matches!(self, Self::Static { .. } | Self::TwoNode { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkChange {
    pub time: f64,
    pub a: NodeId,
    pub b: NodeId,
    pub up: bool,
}

/// A scenario as written in a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub algorithm: Algorithm,
    #[serde(default = "default_rating")]
    pub rating: RatingName,
    #[serde(default = "default_four")]
    pub n: usize,
    #[serde(default = "default_four")]
    pub k: usize,
    #[serde(default)]
    pub d: Option<u32>,
    /// Window length in seconds. Required for streaming data.
    #[serde(default)]
    pub w: Option<f64>,
    #[serde(default)]
    pub p_drop: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_period")]
    pub sample_period_s: f64,
    #[serde(default)]
    pub sink: Option<NodeId>,
    /// Nodes that get an initial event in static runs. All by default.
    #[serde(default)]
    pub init_nodes: Option<Vec<NodeId>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub max_events: Option<u64>,
    #[serde(default)]
    pub invariant_checks: Option<bool>,
    pub topology: TopologySource,
    pub data: DataSource,
    #[serde(default)]
    pub energy: EnergyModel,
    #[serde(default)]
    pub link_changes: Vec<LinkChange>,
}

fn default_rating() -> RatingName {
    RatingName::Nn
}

fn default_four() -> usize {
    4
}

fn default_duration() -> f64 {
    1000.0
}

fn default_period() -> f64 {
    1.0
}

/// Data as the simulator consumes it.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeData {
    /// Loaded before the first event; never changes.
    Static(BTreeMap<NodeId, Vec<DataPoint>>),
    /// Each point is sampled at its timestamp.
    Stream(BTreeMap<NodeId, Vec<DataPoint>>),
}

impl NodeData {
    pub fn points(&self) -> &BTreeMap<NodeId, Vec<DataPoint>> {
        match self {
            Self::Static(p) | Self::Stream(p) => p,
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, Self::Static(_))
    }
}

/// A fully resolved, validated scenario.
#[derive(Debug, Clone)]
pub struct Setup {
    pub name: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub spec: RatingSpec,
    pub hop: HopConfig,
    /// Window in seconds; `None` for static data.
    pub window: Option<f64>,
    pub p_drop: f64,
    pub duration_s: f64,
    pub sample_period_s: f64,
    pub topology: Topology,
    pub sink: Option<NodeId>,
    pub init_nodes: Option<BTreeSet<NodeId>>,
    pub data: NodeData,
    pub energy: EnergyModel,
    pub link_changes: Vec<LinkChange>,
    pub max_events: Option<u64>,
    pub invariant_checks: bool,
}

impl Setup {
    /// A lossless static run over the given graph and data.
    pub fn static_run(
        topology: Topology,
        data: BTreeMap<NodeId, Vec<DataPoint>>,
        spec: RatingSpec,
        algorithm: Algorithm,
        hop: HopConfig,
    ) -> Self {
        Self {
            name: String::new(),
            seed: 0,
            algorithm,
            spec,
            hop,
            window: None,
            p_drop: 0.0,
            duration_s: 1.0,
            sample_period_s: 1.0,
            topology,
            sink: None,
            init_nodes: None,
            data: NodeData::Static(data),
            energy: EnergyModel::default(),
            link_changes: Vec::new(),
            max_events: None,
            invariant_checks: cfg!(debug_assertions),
        }
    }

    /// Number of sampling intervals energy is averaged over.
    pub fn intervals(&self) -> u64 {
        if self.data.is_static() {
            1
        } else {
            ((self.duration_s / self.sample_period_s).floor() as u64).max(1)
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.data.points().values().flatten().next().map(|p| p.rest.dim())
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::one(e.to_string().trim().to_string()))
    }

    /// Reads a scenario file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::one(format!("cannot read {}: {e}", path.display())))?;
        let s = Self::from_toml(&text)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((s, dir))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn rating_spec(&self) -> RatingSpec {
        let spec = match self.rating {
            RatingName::Knn => RatingSpec::avg_k_nearest(self.k, self.n),
            _ => RatingSpec::nearest_neighbor(self.n),
        };
        match &self.weights {
            Some(w) => spec.with_weights(w.clone()),
            None => spec,
        }
    }

    /// Parameter checks that need no files or topology.
    pub fn parameter_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n == 0 {
            v.push("n must be at least 1".into());
        }
        match self.rating {
            RatingName::Knn if self.k == 0 => v.push("k must be at least 1 for knn".into()),
            RatingName::Lof => v.push("rating \"lof\" is not admissible: adding data can raise a point's score".into()),
            _ => {}
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                v.push("weights must be finite and positive".into());
            }
        }
        match (self.algorithm, self.d) {
            (Algorithm::Semiglobal | Algorithm::NaiveSemiglobal, None) => {
                v.push(format!("d is required for algorithm {}", self.algorithm.name()))
            }
            (_, Some(0)) => v.push("d must be at least 1".into()),
            _ => {}
        }
        if self.data.is_static() {
            if self.w.is_some_and(|w| !(w > 0.0)) {
                v.push("w must be positive".into());
            }
        } else {
            match self.w {
                None => v.push("w is required for streaming data".into()),
                Some(w) if !(w.is_finite() && w > 0.0) => v.push(format!("w must be positive, got {w}")),
                _ => {}
            }
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            v.push(format!("p_drop must be in [0, 1), got {}", self.p_drop));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            v.push(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(self.sample_period_s.is_finite() && self.sample_period_s > 0.0) {
            v.push(format!(
                "sample_period_s must be positive, got {}",
                self.sample_period_s
            ));
        }
        v.extend(self.energy.violations());
        if let DataSource::Synthetic { params, .. } = &self.data {
            v.extend(params.violations());
        }
        if let DataSource::TwoNode { a, b } = self.data {
            if a < 12 || b < 12 {
                v.push("two_node data needs a and b of at least 12".into());
            }
        }
        for lc in &self.link_changes {
            if !(lc.time.is_finite() && lc.time >= 0.0) {
                v.push(format!("link change {}-{} has a bad time", lc.a, lc.b));
            }
        }
        v
    }

    fn build_topology(&self, dir: &Path, v: &mut Vec<String>) -> Option<(Topology, Option<[f64; 2]>)> {
        let built = match &self.topology {
            TopologySource::IntelLab {
                radio_range,
                base_station,
            } => Topology::build_unchecked(&Topology::intel_lab_coords(), *radio_range)
                .map(|t| (t, Some(base_station.unwrap_or(LAB_BASE_STATION)))),
            TopologySource::Coords {
                radio_range,
                coords,
                file,
                base_station,
            } => {
                let mut all = coords.clone();
                if let Some(f) = file {
                    let p = dir.join(f);
                    match std::fs::read_to_string(&p) {
                        Ok(text) => match parse_coords(&text) {
                            Ok(c) => all.extend(c),
                            Err(e) => {
                                v.push(format!("topology.file {}: {e}", p.display()));
                                return None;
                            }
                        },
                        Err(e) => {
                            v.push(format!("topology.file {}: {e}", p.display()));
                            return None;
                        }
                    }
                }
                Topology::build_unchecked(&all, *radio_range).map(|t| (t, *base_station))
            }
            TopologySource::Edges { nodes, edges } => {
                Topology::from_edges(nodes.iter().copied(), edges).map(|t| (t, None))
            }
            TopologySource::Random { nodes, extra } => {
                if *nodes == 0 || !(0.0..=1.0).contains(extra) {
                    v.push("topology.random needs nodes ≥ 1 and extra in [0, 1]".into());
                    return None;
                }
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
                Ok((Topology::random_connected(*nodes, *extra, &mut rng), None))
            }
        };
        match built {
            Ok((t, bs)) => {
                if let Err(e) = t.require_connected() {
                    v.push(format!("topology: {e}"));
                }
                Some((t, bs))
            }
            Err(e) => {
                v.push(format!("topology: {e}"));
                None
            }
        }
    }

    fn build_data(&self, dir: &Path, topo: &Topology, v: &mut Vec<String>) -> Option<NodeData> {
        let period = self.sample_period_s;
        let window_epochs = self.w.map(|w| ((w / period).round() as usize).max(1)).unwrap_or(1);
        let streams: BTreeMap<NodeId, Vec<ingest::TraceRecord>> = match &self.data {
            DataSource::Static { points } => {
                let mut out = BTreeMap::new();
                for (key, vecs) in points {
                    let Ok(id) = key.parse::<NodeId>() else {
                        v.push(format!("data.points key {key:?} is not a node id"));
                        continue;
                    };
                    let mut pts = Vec::new();
                    for (e, f) in vecs.iter().enumerate() {
                        match DataPoint::new(id, e as u64, 0.0, f.clone()) {
                            Ok(p) => pts.push(p),
                            Err(err) => v.push(format!("data.points.{key}[{e}]: {err}")),
                        }
                    }
                    out.insert(id, pts);
                }
                return Some(NodeData::Static(out));
            }
            DataSource::TwoNode { a, b } => return Some(NodeData::Static(two_node_family(*a, *b))),
            DataSource::Synthetic { params, impute_window } => {
                let positions: BTreeMap<NodeId, (f64, f64)> = topo
                    .ids()
                    .map(|i| (i, topo.position(i).unwrap_or((f64::from(i), 0.0))))
                    .collect();
                let samples = (self.duration_s / period).floor() as u64 + 1;
                let raw = ingest::synthetic_streams(&positions, samples, period, params);
                let w = impute_window.unwrap_or(window_epochs);
                raw.into_iter()
                    .map(|(id, s)| (id, ingest::impute_missing(&s, w, Some(0))))
                    .collect()
            }
            DataSource::Trace {
                path,
                schema,
                impute_window,
                start_epoch,
            } => {
                let p = dir.join(path);
                let mut t = match ingest::load_trace(&p, schema) {
                    Ok(t) => t,
                    Err(e) => {
                        v.push(format!("data.path: {e}"));
                        return None;
                    }
                };
                if schema.x.is_none() || schema.y.is_none() {
                    let coords: BTreeMap<_, _> = topo.ids().filter_map(|i| Some((i, topo.position(i)?))).collect();
                    t.streams.retain(|id, _| coords.contains_key(id));
                    if let Err(e) = t.attach_coords(&coords) {
                        v.push(format!("data: {e}"));
                        return None;
                    }
                }
                let start = start_epoch.unwrap_or_else(|| {
                    t.streams
                        .values()
                        .filter_map(|s| s.first())
                        .map(|r| r.epoch)
                        .min()
                        .unwrap_or(0)
                });
                let w = impute_window.unwrap_or(window_epochs);
                let span = (self.duration_s / period).floor() as u64;
                t.streams
                    .into_iter()
                    .map(|(id, s)| {
                        let s: Vec<_> = s
                            .into_iter()
                            .filter(|r| r.epoch >= start && r.epoch <= start + span)
                            .collect();
                        let filled = ingest::impute_missing(&s, w, Some(start));
                        (id, filled)
                    })
                    .collect()
            }
        };
        let origin = match &self.data {
            DataSource::Trace { .. } => streams
                .values()
                .filter_map(|s| s.first())
                .map(|r| r.epoch)
                .min()
                .unwrap_or(0),
            _ => 0,
        };
        match ingest::to_points(&streams, origin, period) {
            Ok(p) => Some(NodeData::Stream(p)),
            Err(e) => {
                v.push(format!("data: {e}"));
                None
            }
        }
    }

    /// Validates everything and resolves files, topology and data.
    pub fn resolve(&self, dir: &Path) -> Result<Setup, ConfigError> {
        let mut v = self.parameter_violations();
        let topo = self.build_topology(dir, &mut v);
        let data = topo.as_ref().and_then(|(t, _)| self.build_data(dir, t, &mut v));
        if let (Some((t, _)), Some(data)) = (&topo, &data) {
            for id in data.points().keys() {
                if !t.contains(*id) {
                    v.push(format!("data names node {id}, which is not in the topology"));
                }
            }
            if let Some(w) = &self.weights {
                if let Some(dim) = data.points().values().flatten().next().map(|p| p.rest.dim()) {
                    if w.len() != dim {
                        v.push(format!(
                            "weights has {} entries but points have {dim} features",
                            w.len()
                        ));
                    }
                }
            }
            let dims: BTreeSet<usize> = data.points().values().flatten().map(|p| p.rest.dim()).collect();
            if dims.len() > 1 {
                v.push(format!("points have mixed feature counts {dims:?}"));
            }
            if let Some(s) = self.sink {
                if !t.contains(s) {
                    v.push(format!("sink {s} is not in the topology"));
                }
            }
            for i in self.init_nodes.iter().flatten() {
                if !t.contains(*i) {
                    v.push(format!("init_nodes names unknown node {i}"));
                }
            }
            for lc in &self.link_changes {
                if !t.contains(lc.a) || !t.contains(lc.b) {
                    v.push(format!("link change {}-{} names an unknown node", lc.a, lc.b));
                }
            }
        }
        if !v.is_empty() {
            return Err(ConfigError { violations: v });
        }
        let (topology, base_station) = topo.expect("no violations");
        let data = data.expect("no violations");
        let sink = self.sink.or_else(|| match self.algorithm {
            Algorithm::Centralized => base_station
                .and_then(|[x, y]| topology.nearest_node(x, y))
                .or_else(|| topology.ids().next()),
            _ => None,
        });
        Ok(Setup {
            name: self.name.clone(),
            seed: self.seed,
            algorithm: self.algorithm,
            spec: self.rating_spec(),
            hop: match self.d {
                Some(d) if matches!(self.algorithm, Algorithm::Semiglobal | Algorithm::NaiveSemiglobal) => {
                    HopConfig::Bounded(d)
                }
                _ => HopConfig::Unbounded,
            },
            window: if data.is_static() { None } else { self.w },
            p_drop: self.p_drop,
            duration_s: self.duration_s,
            sample_period_s: self.sample_period_s,
            topology,
            sink,
            init_nodes: self.init_nodes.as_ref().map(|v| v.iter().copied().collect()),
            data,
            energy: self.energy.clone(),
            link_changes: self.link_changes.clone(),
            max_events: self.max_events,
            invariant_checks: self.invariant_checks.unwrap_or(cfg!(debug_assertions)),
        })
    }
}

/// Where the bundled lab layout's base station sits.
pub const LAB_BASE_STATION: [f64; 2] = [20.0, 14.5];

/// The two-sensor family: sensor 1 holds `{0.5, 3, 6, 10..=a}`, sensor 0
/// holds `{4, 5, 7, 8, 9, a+1..=a+b}`.
pub fn two_node_family(a: u32, b: u32) -> BTreeMap<NodeId, Vec<DataPoint>> {
    let pts = |id: NodeId, vals: Vec<f64>| -> Vec<DataPoint> {
        vals.into_iter()
            .enumerate()
            .map(|(e, v)| DataPoint::new(id, e as u64, 0.0, vec![v]).expect("finite"))
            .collect()
    };
    let mut first = vec![0.5, 3.0, 6.0];
    first.extend((10..=a).map(f64::from));
    let mut second = vec![4.0, 5.0, 7.0, 8.0, 9.0];
    second.extend((a + 1..=a + b).map(f64::from));
    BTreeMap::from([(1, pts(1, first)), (0, pts(0, second))])
}
