//! Deterministic discrete-event simulation of a sensor network.

pub mod centralized;
pub mod energy;
pub mod engine;
pub mod metrics;
pub mod oracle;
pub mod scenario;
pub mod topology;
pub mod wire;

use thiserror::Error;

use crate::protocol::ProtocolError;
use crate::rating::NodeId;

pub use energy::{EnergyModel, Meter};
pub use engine::{Network, SentPacket};
pub use metrics::{NodeMetrics, RunMetrics, Summary};
pub use scenario::{Algorithm, ConfigError, LinkChange, NodeData, RatingName, Scenario, Setup};
pub use topology::{Topology, TopologyError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(TopologyError),
    #[error("node {node} at t={time}: {source}")]
    Protocol {
        node: NodeId,
        time: f64,
        #[source]
        source: ProtocolError,
    },
    #[error("event cap of {cap} reached before the network went quiet")]
    EventCap { cap: u64 },
}

impl SimError {
    /// True for failures that point at a bug rather than bad input.
    pub fn is_invariant_breach(&self) -> bool {
        matches!(
            self,
            Self::EventCap { .. }
                | Self::Protocol {
                    source: ProtocolError::Invariant { .. } | ProtocolError::FixedPointOverrun { .. },
                    ..
                }
        )
    }
}

/// Runs a resolved scenario to completion.
pub fn run(setup: &Setup) -> Result<RunMetrics, SimError> {
    if setup.algorithm == Algorithm::Centralized {
        return centralized::run(setup);
    }
    let mut net = Network::new(setup);
    net.run()?;
    Ok(net.metrics())
}
