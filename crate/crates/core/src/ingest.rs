//! Sensor trace loading, gap imputation and a synthetic trace generator.
//!
//! A trace is one record per line: sensor id, epoch, temperature and
//! optionally the sensor's coordinates, in whatever column order the
//! [`TraceSchema`] says. Records are grouped per sensor and sorted by epoch.

use std::collections::{btree_map, BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rating::{DataPoint, NodeId, RatingError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: no valid records ({malformed} malformed lines)")]
    NoRecords { path: String, malformed: usize },
    #[error("sensor {0} has no coordinates")]
    MissingCoords(NodeId),
    #[error(transparent)]
    Rating(#[from] RatingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sensor: NodeId,
    pub epoch: u64,
    pub temperature: f64,
    pub x: f64,
    pub y: f64,
}

/// Column layout of a trace file. Columns are zero-based. Without a
/// delimiter, fields are split on runs of whitespace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSchema {
    #[serde(default)]
    pub delimiter: Option<char>,
    pub sensor: usize,
    pub epoch: usize,
    pub temperature: usize,
    #[serde(default)]
    pub x: Option<usize>,
    #[serde(default)]
    pub y: Option<usize>,
}

impl TraceSchema {
    /// The lab dataset's `date time epoch moteid temperature ...` layout.
    /// Coordinates live in a separate file.
    pub fn intel_lab() -> Self {
        Self {
            delimiter: None,
            sensor: 3,
            epoch: 2,
            temperature: 4,
            x: None,
            y: None,
        }
    }

    /// `sensor,epoch,temperature,x,y`, the format [`export_trace`] writes.
    pub fn canonical() -> Self {
        Self {
            delimiter: Some(','),
            sensor: 0,
            epoch: 1,
            temperature: 2,
            x: Some(3),
            y: Some(4),
        }
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self.delimiter {
            Some(d) => line.split(d).map(str::trim).collect(),
            None => line.split_whitespace().collect(),
        }
    }

    fn parse(&self, line: &str) -> Option<TraceRecord> {
        let f = self.split(line);
        let get = |i: usize| f.get(i).copied();
        let num = |i: usize| get(i)?.parse::<f64>().ok().filter(|v| v.is_finite());
        let sensor = get(self.sensor)?.parse().ok()?;
        let epoch = get(self.epoch)?.parse().ok()?;
        let temperature = num(self.temperature)?;
        let x = match self.x {
            Some(c) => num(c)?,
            None => f64::NAN,
        };
        let y = match self.y {
            Some(c) => num(c)?,
            None => f64::NAN,
        };
        Some(TraceRecord {
            sensor,
            epoch,
            temperature,
            x,
            y,
        })
    }
}

/// Per-sensor streams plus what was thrown away on the way in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedTrace {
    pub streams: BTreeMap<NodeId, Vec<TraceRecord>>,
    pub malformed: usize,
    pub duplicates: usize,
}

impl LoadedTrace {
    pub fn record_count(&self) -> usize {
        self.streams.values().map(Vec::len).sum()
    }

    /// Fills coordinates from a table, for schemas without coordinate
    /// columns. Sensors missing from the table are an error.
    pub fn attach_coords(&mut self, coords: &BTreeMap<NodeId, (f64, f64)>) -> Result<(), IngestError> {
        for (id, recs) in &mut self.streams {
            let &(x, y) = coords.get(id).ok_or(IngestError::MissingCoords(*id))?;
            for r in recs {
                r.x = x;
                r.y = y;
            }
        }
        Ok(())
    }
}

/// Parses trace text. Malformed lines are counted and skipped; a repeated
/// (sensor, epoch) keeps the first record.
pub fn parse_trace(text: &str, schema: &TraceSchema) -> LoadedTrace {
    let mut out = LoadedTrace::default();
    let mut seen: BTreeMap<NodeId, BTreeMap<u64, TraceRecord>> = BTreeMap::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        match schema.parse(t) {
            Some(r) => match seen.entry(r.sensor).or_default().entry(r.epoch) {
                btree_map::Entry::Occupied(_) => out.duplicates += 1,
                btree_map::Entry::Vacant(e) => {
                    e.insert(r);
                }
            },
            None => {
                out.malformed += 1;
                debug!("skipping malformed trace line: {t}");
            }
        }
    }
    out.streams = seen
        .into_iter()
        .map(|(id, recs)| (id, recs.into_values().collect()))
        .collect();
    out
}

pub fn load_trace(path: &Path, schema: &TraceSchema) -> Result<LoadedTrace, IngestError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: shown.clone(),
        source,
    })?;
    let out = parse_trace(&text, schema);
    if out.record_count() == 0 {
        return Err(IngestError::NoRecords {
            path: shown,
            malformed: out.malformed,
        });
    }
    if out.malformed > 0 {
        warn!("{shown}: skipped {} malformed lines", out.malformed);
    }
    Ok(out)
}

/// Fills every epoch gap with the mean temperature of the preceding
/// `window` records, imputed ones included. Epochs before the first
/// observation (from `start`, if given) take the first observed value.
/// The stream must be sorted by epoch.
pub fn impute_missing(stream: &[TraceRecord], window: usize, start: Option<u64>) -> Vec<TraceRecord> {
    let Some(first) = stream.first() else {
        return Vec::new();
    };
    let window = window.max(1);
    let last = stream.last().expect("non-empty").epoch;
    let from = start.unwrap_or(first.epoch).min(first.epoch);
    let mut out = Vec::with_capacity((last - from + 1) as usize);
    for e in from..first.epoch {
        out.push(TraceRecord { epoch: e, ..*first });
    }
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(window);
    let push = |out: &mut Vec<TraceRecord>, r: TraceRecord, recent: &mut VecDeque<f64>| {
        if recent.len() == window {
            recent.pop_front();
        }
        recent.push_back(r.temperature);
        out.push(r);
    };
    let mut prev: Option<TraceRecord> = None;
    for &r in stream {
        if let Some(p) = prev {
            for e in p.epoch + 1..r.epoch {
                let mean = recent.iter().sum::<f64>() / recent.len() as f64;
                push(
                    &mut out,
                    TraceRecord {
                        epoch: e,
                        temperature: mean,
                        ..p
                    },
                    &mut recent,
                );
            }
        }
        push(&mut out, r, &mut recent);
        prev = Some(r);
    }
    out
}

/// Knobs for the synthetic lab-like temperature field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub seed: u64,
    /// Mean temperature at the origin, °C.
    pub base_c: f64,
    /// °C per meter along x and y.
    pub gradient: [f64; 2],
    pub diurnal_amplitude_c: f64,
    pub diurnal_period_s: f64,
    /// AR(1) coefficient of the per-sensor noise.
    pub ar_coefficient: f64,
    pub noise_sd_c: f64,
    /// Chance that one reading is a spike.
    pub spike_probability: f64,
    pub spike_range_c: [f64; 2],
    /// Chance that one reading is lost.
    pub missing_probability: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            seed: 1,
            base_c: 19.0,
            gradient: [0.05, 0.03],
            diurnal_amplitude_c: 1.5,
            diurnal_period_s: 900.0,
            ar_coefficient: 0.9,
            noise_sd_c: 0.15,
            spike_probability: 0.002,
            spike_range_c: [4.0, 12.0],
            missing_probability: 0.03,
        }
    }
}

impl SyntheticParams {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let prob = |name: &str, p: f64, v: &mut Vec<String>| {
            if !(0.0..1.0).contains(&p) {
                v.push(format!("data.{name} must be in [0, 1), got {p}"));
            }
        };
        prob("spike_probability", self.spike_probability, &mut v);
        prob("missing_probability", self.missing_probability, &mut v);
        if !(self.noise_sd_c >= 0.0 && self.noise_sd_c.is_finite()) {
            v.push(format!("data.noise_sd_c must be non-negative, got {}", self.noise_sd_c));
        }
        if !(self.diurnal_period_s > 0.0) {
            v.push("data.diurnal_period_s must be positive".into());
        }
        if !(self.spike_range_c[0] <= self.spike_range_c[1]) {
            v.push("data.spike_range_c must be [low, high]".into());
        }
        if !(self.ar_coefficient.abs() < 1.0) {
            v.push("data.ar_coefficient must lie strictly between -1 and 1".into());
        }
        v
    }
}

/// One stream per sensor, epochs `0..samples` spaced `period` seconds
/// apart, with lost readings already removed. Temperatures are rounded to
/// 0.01 °C.
pub fn synthetic_streams(
    positions: &BTreeMap<NodeId, (f64, f64)>,
    samples: u64,
    period: f64,
    params: &SyntheticParams,
) -> BTreeMap<NodeId, Vec<TraceRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, params.noise_sd_c.max(0.0)).expect("finite sd");
    let mut out = BTreeMap::new();
    for (&id, &(x, y)) in positions {
        let phase = rng.gen_range(0.0..std::f64::consts::TAU) * 0.1;
        let mut ar = 0.0;
        let mut recs = Vec::with_capacity(samples as usize);
        for e in 0..samples {
            ar = params.ar_coefficient * ar + noise.sample(&mut rng);
            let t = e as f64 * period;
            let mut temp = params.base_c
                + params.gradient[0] * x
                + params.gradient[1] * y
                + params.diurnal_amplitude_c * (std::f64::consts::TAU * t / params.diurnal_period_s + phase).sin()
                + ar;
            if rng.gen_bool(params.spike_probability) {
                temp += rng.gen_range(params.spike_range_c[0]..=params.spike_range_c[1]);
            }
            if rng.gen_bool(params.missing_probability) {
                continue;
            }
            recs.push(TraceRecord {
                sensor: id,
                epoch: e,
                temperature: (temp * 100.0).round() / 100.0,
                x,
                y,
            });
        }
        out.insert(id, recs);
    }
    out
}

/// Turns records into data points with features (temperature, x, y). The
/// epoch `origin_epoch` is stamped at time zero.
pub fn to_points(
    streams: &BTreeMap<NodeId, Vec<TraceRecord>>,
    origin_epoch: u64,
    period: f64,
) -> Result<BTreeMap<NodeId, Vec<DataPoint>>, IngestError> {
    let mut out = BTreeMap::new();
    for (&id, recs) in streams {
        let mut pts = Vec::with_capacity(recs.len());
        for r in recs.iter().filter(|r| r.epoch >= origin_epoch) {
            let t = (r.epoch - origin_epoch) as f64 * period;
            pts.push(DataPoint::new(id, r.epoch, t, vec![r.temperature, r.x, r.y])?);
        }
        out.insert(id, pts);
    }
    Ok(out)
}

/// Writes streams in the [`TraceSchema::canonical`] layout.
pub fn export_trace(streams: &BTreeMap<NodeId, Vec<TraceRecord>>) -> String {
    let mut s = String::from("# sensor,epoch,temperature,x,y\n");
    for r in streams.values().flatten() {
        writeln!(s, "{},{},{},{},{}", r.sensor, r.epoch, r.temperature, r.x, r.y).expect("string write");
    }
    s
}
