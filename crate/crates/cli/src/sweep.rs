//! Parameter sweeps over a base scenario.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wsn_outlier::simnet::{self, Algorithm, RatingName, RunMetrics, Scenario};

use crate::CliError;

/// First line of every sweep CSV.
pub const SWEEP_CSV_VERSION: &str = "# wsn-outlier sweep v1: energies in joules per node per sampling interval";
pub const TOTALS_CSV_VERSION: &str = "# wsn-outlier sweep-totals v1: energies in joules per node over the whole run";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    W,
    N,
    K,
    D,
    PDrop,
}

impl Param {
    fn apply(self, s: &mut Scenario, v: f64) -> Result<(), String> {
        let whole = |v: f64| {
            if v.fract() == 0.0 && v >= 0.0 {
                Ok(v as u32)
            } else {
                Err(format!("{} needs whole values, got {v}", self.name()))
            }
        };
        match self {
            Self::W => s.w = Some(v),
            Self::N => s.n = whole(v)? as usize,
            Self::K => s.k = whole(v)? as usize,
            Self::D => s.d = Some(whole(v)?),
            Self::PDrop => s.p_drop = v,
        }
        Ok(())
    }

    fn name(self) -> &'static str {
        match self {
            Self::W => "w",
            Self::N => "n",
            Self::K => "k",
            Self::D => "d",
            Self::PDrop => "p_drop",
        }
    }
}

/// One plotted line: an algorithm with its own fixed settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub label: String,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub rating: Option<RatingName>,
    #[serde(default)]
    pub d: Option<u32>,
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub name: String,
    /// Base scenario, relative to the sweep file.
    pub base: PathBuf,
    pub param: Param,
    pub values: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    pub series: Vec<Series>,
}

fn default_repeats() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub value: f64,
    pub label: String,
    pub runs: Vec<RunMetrics>,
}

impl Row {
    fn mean(&self, f: impl Fn(&RunMetrics) -> f64) -> f64 {
        self.runs.iter().map(f).sum::<f64>() / self.runs.len() as f64
    }
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let spec: Self = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut v = Vec::new();
        if spec.values.is_empty() {
            v.push("values must not be empty".to_string());
        }
        if spec.repeats == 0 {
            v.push("repeats must be at least 1".to_string());
        }
        if spec.series.is_empty() {
            v.push("at least one [[series]] is required".to_string());
        }
        if !v.is_empty() {
            return Err(CliError::Config(v.join("\n")));
        }
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((spec, dir))
    }

    /// Runs every (value, series, repeat) cell. Repeat `i` uses seed
    /// `base_seed + i`. Cell order, and hence output, does not depend on
    /// scheduling.
    pub fn run(&self, dir: &Path, base_seed: Option<u64>, jobs: usize) -> Result<Vec<Row>, CliError> {
        let (base, base_dir) = Scenario::load(&dir.join(&self.base)).map_err(|e| CliError::Config(e.to_string()))?;
        let seed0 = base_seed.unwrap_or(base.seed);
        let mut cells = Vec::new();
        for &value in &self.values {
            for series in &self.series {
                for i in 0..self.repeats {
                    let mut s = base.clone();
                    s.algorithm = series.algorithm;
                    if let Some(r) = series.rating {
                        s.rating = r;
                    }
                    if series.d.is_some() {
                        s.d = series.d;
                    }
                    if let Some(n) = series.n {
                        s.n = n;
                    }
                    self.param.apply(&mut s, value).map_err(CliError::Config)?;
                    s.seed = seed0 + u64::from(i);
                    s.name = format!(
                        "{}/{}={}/{}/seed{}",
                        self.name,
                        self.param.name(),
                        value,
                        series.label,
                        s.seed
                    );
                    cells.push((value, series.label.clone(), s));
                }
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?;
        let results: Vec<Result<RunMetrics, CliError>> = pool.install(|| {
            cells
                .par_iter()
                .map(|(_, _, s)| {
                    let setup = s
                        .resolve(&base_dir)
                        .map_err(|e| CliError::Config(format!("cell {}: {e}", s.name)))?;
                    simnet::run(&setup).map_err(|e| CliError::from_sim(e, Some(&s.name)))
                })
                .collect()
        });
        let mut rows: Vec<Row> = Vec::new();
        for ((value, label, _), r) in cells.into_iter().zip(results) {
            let m = r?;
            match rows.last_mut() {
                Some(row) if row.value == value && row.label == label => row.runs.push(m),
                _ => rows.push(Row {
                    value,
                    label,
                    runs: vec![m],
                }),
            }
        }
        Ok(rows)
    }
}

pub fn csv(rows: &[Row]) -> String {
    let mut s = String::new();
    writeln!(s, "{SWEEP_CSV_VERSION}").expect("string write");
    writeln!(
        s,
        "param_value,algorithm,avg_tx_J_per_node_per_interval,avg_rx_J,min_J,avg_J,max_J,accuracy"
    )
    .expect("string write");
    for r in rows {
        let per = |f: fn(&RunMetrics) -> f64| r.mean(|m| m.per_interval(f(m)));
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.value,
            r.label,
            per(|m| m.avg_tx_j),
            per(|m| m.avg_rx_j),
            per(|m| m.min_j),
            per(|m| m.avg_j),
            per(|m| m.max_j),
            r.mean(|m| m.accuracy),
        )
        .expect("string write");
    }
    s
}

pub fn totals_csv(rows: &[Row]) -> String {
    let mut s = String::new();
    writeln!(s, "{TOTALS_CSV_VERSION}").expect("string write");
    writeln!(
        s,
        "param_value,algorithm,seed,avg_tx_J,avg_rx_J,avg_idle_J,min_J,avg_J,max_J,accuracy,points_sent,packets_sent,points_relayed,events"
    )
    .expect("string write");
    for r in rows {
        for m in &r.runs {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.value,
                r.label,
                m.seed,
                m.avg_tx_j,
                m.avg_rx_j,
                m.avg_idle_j,
                m.min_j,
                m.avg_j,
                m.max_j,
                m.accuracy,
                m.points_sent_total,
                m.packets_sent_total,
                m.points_relayed.map(|p| p.to_string()).unwrap_or_default(),
                m.events,
            )
            .expect("string write");
        }
    }
    s
}
