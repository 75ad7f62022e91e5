//! Run metrics and their on-disk forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::energy::Meter;
use super::scenario::{Algorithm, Setup};
use crate::rating::NodeId;

/// First line of every `nodes.csv`.
pub const NODES_CSV_VERSION: &str = "# wsn-outlier nodes v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub id: NodeId,
    pub tx_j: f64,
    pub rx_j: f64,
    pub idle_j: f64,
    pub points_sent: u64,
    pub packets_sent: u64,
    pub bytes_sent: u64,
}

impl NodeMetrics {
    pub fn total_j(&self) -> f64 {
        self.tx_j + self.rx_j + self.idle_j
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub nodes: Vec<NodeMetrics>,
    /// Sampling intervals the run covered; 1 for static data.
    pub intervals: u64,
    pub duration_s: f64,
    /// Per-node total energy, joules.
    pub min_j: f64,
    pub avg_j: f64,
    pub max_j: f64,
    pub avg_tx_j: f64,
    pub avg_rx_j: f64,
    pub avg_idle_j: f64,
    /// Fraction of (node, measurement) pairs whose estimate matched the
    /// oracle.
    pub accuracy: f64,
    pub measurements: u64,
    pub correct: u64,
    pub points_sent_total: u64,
    pub packets_sent_total: u64,
    /// Centralized only: window points carried toward the sink, counted
    /// once per hop.
    pub points_relayed: Option<u64>,
    pub events: u64,
    /// Static runs: time of the last event before the network fell silent.
    pub quiescence_time_s: Option<f64>,
}

impl RunMetrics {
    pub(crate) fn assemble(
        setup: &Setup,
        meters: &BTreeMap<NodeId, Meter>,
        measurements: u64,
        correct: u64,
        events: u64,
        points_relayed: Option<u64>,
        quiescence_time_s: Option<f64>,
    ) -> Self {
        let nodes: Vec<NodeMetrics> = meters
            .iter()
            .map(|(&id, m)| NodeMetrics {
                id,
                tx_j: m.tx_j,
                rx_j: m.rx_j,
                idle_j: m.idle_j(&setup.energy, setup.duration_s),
                points_sent: m.points_sent,
                packets_sent: m.packets_sent,
                bytes_sent: m.bytes_sent,
            })
            .collect();
        let count = nodes.len().max(1) as f64;
        let totals: Vec<f64> = nodes.iter().map(NodeMetrics::total_j).collect();
        let mean = |f: fn(&NodeMetrics) -> f64| nodes.iter().map(f).sum::<f64>() / count;
        Self {
            name: setup.name.clone(),
            algorithm: setup.algorithm,
            seed: setup.seed,
            intervals: setup.intervals(),
            duration_s: setup.duration_s,
            min_j: totals.iter().copied().fold(f64::INFINITY, f64::min),
            avg_j: totals.iter().sum::<f64>() / count,
            max_j: totals.iter().copied().fold(0.0, f64::max),
            avg_tx_j: mean(|n| n.tx_j),
            avg_rx_j: mean(|n| n.rx_j),
            avg_idle_j: mean(|n| n.idle_j),
            accuracy: if measurements == 0 {
                1.0
            } else {
                correct as f64 / measurements as f64
            },
            measurements,
            correct,
            points_sent_total: nodes.iter().map(|n| n.points_sent).sum(),
            packets_sent_total: nodes.iter().map(|n| n.packets_sent).sum(),
            points_relayed,
            events,
            quiescence_time_s,
            nodes,
        }
    }

    /// Average transmit plus receive energy per node, joules.
    pub fn avg_radio_j(&self) -> f64 {
        self.avg_tx_j + self.avg_rx_j
    }

    /// Highest per-node transmit plus receive energy, joules.
    pub fn max_radio_j(&self) -> f64 {
        self.nodes.iter().map(|n| n.tx_j + n.rx_j).fold(0.0, f64::max)
    }

    pub fn per_interval(&self, joules: f64) -> f64 {
        joules / self.intervals as f64
    }

    pub fn nodes_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{NODES_CSV_VERSION}").expect("string write");
        writeln!(s, "id,tx_J,rx_J,idle_J,points_sent,packets_sent").expect("string write");
        for n in &self.nodes {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                n.id, n.tx_j, n.rx_j, n.idle_j, n.points_sent, n.packets_sent
            )
            .expect("string write");
        }
        s
    }

    pub fn summary(&self) -> Summary {
        Summary {
            name: self.name.clone(),
            algorithm: self.algorithm.name().to_string(),
            seed: self.seed,
            nodes: self.nodes.len(),
            intervals: self.intervals,
            duration_s: self.duration_s,
            min_j: self.min_j,
            avg_j: self.avg_j,
            max_j: self.max_j,
            avg_tx_j: self.avg_tx_j,
            avg_rx_j: self.avg_rx_j,
            avg_idle_j: self.avg_idle_j,
            accuracy: self.accuracy,
            measurements: self.measurements,
            points_sent_total: self.points_sent_total,
            packets_sent_total: self.packets_sent_total,
            points_relayed: self.points_relayed,
            events: self.events,
            quiescence_time_s: self.quiescence_time_s,
        }
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// The network-level numbers written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub algorithm: String,
    pub seed: u64,
    pub nodes: usize,
    pub intervals: u64,
    pub duration_s: f64,
    #[serde(rename = "min_J")]
    pub min_j: f64,
    #[serde(rename = "avg_J")]
    pub avg_j: f64,
    #[serde(rename = "max_J")]
    pub max_j: f64,
    #[serde(rename = "avg_tx_J")]
    pub avg_tx_j: f64,
    #[serde(rename = "avg_rx_J")]
    pub avg_rx_j: f64,
    #[serde(rename = "avg_idle_J")]
    pub avg_idle_j: f64,
    pub accuracy: f64,
    pub measurements: u64,
    pub points_sent_total: u64,
    pub packets_sent_total: u64,
    pub points_relayed: Option<u64>,
    pub events: u64,
    pub quiescence_time_s: Option<f64>,
}
