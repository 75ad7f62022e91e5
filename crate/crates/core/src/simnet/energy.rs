//! Three-state radio energy model: transmit, receive and idle power.

use serde::{Deserialize, Serialize};

/// Radio power draw and link speed. Energy for one radio operation is
/// power × airtime, airtime = bits / bitrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub tx_power: f64,
    pub rx_power: f64,
    pub idle_power: f64,
    /// Supply voltage. Informational only.
    pub voltage: f64,
    pub bitrate: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            tx_power: 0.0159,
            rx_power: 0.021,
            idle_power: 3e-6,
            voltage: 3.0,
            bitrate: 250_000.0,
        }
    }
}

impl EnergyModel {
    pub fn airtime(&self, bytes: usize) -> f64 {
        (bytes * 8) as f64 / self.bitrate
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, x) in [
            ("energy.tx_power", self.tx_power),
            ("energy.rx_power", self.rx_power),
            ("energy.idle_power", self.idle_power),
            ("energy.bitrate", self.bitrate),
        ] {
            if !(x.is_finite() && x > 0.0) {
                v.push(format!("{name} must be positive, got {x}"));
            }
        }
        v
    }
}

/// Radio bookkeeping for one node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meter {
    pub tx_j: f64,
    pub rx_j: f64,
    pub busy_s: f64,
    pub points_sent: u64,
    pub packets_sent: u64,
    pub bytes_sent: u64,
}

impl Meter {
    pub fn transmit(&mut self, model: &EnergyModel, bytes: usize, points: usize) {
        let t = model.airtime(bytes);
        self.tx_j += model.tx_power * t;
        self.busy_s += t;
        self.packets_sent += 1;
        self.points_sent += points as u64;
        self.bytes_sent += bytes as u64;
    }

    pub fn receive(&mut self, model: &EnergyModel, bytes: usize) {
        let t = model.airtime(bytes);
        self.rx_j += model.rx_power * t;
        self.busy_s += t;
    }

    /// Idle energy over a run of `duration` seconds: whatever time the
    /// radio was not sending or receiving.
    pub fn idle_j(&self, model: &EnergyModel, duration: f64) -> f64 {
        (duration - self.busy_s).max(0.0) * model.idle_power
    }
}
