//! In-network outlier detection for wireless sensor networks.
//!
//! - [`rating`]: rating functions, top-`n` selection and support sets.
//! - [`protocol`]: the per-sensor global detection state machine.
//! - [`semiglobal`]: the hop-bounded variant.
//! - [`simnet`]: a deterministic discrete-event network simulator with an
//!   energy model, a centralized baseline and brute-force oracles.
//! - [`ingest`]: sensor trace loading and gap imputation.

pub mod ingest;
pub mod protocol;
pub mod rating;
pub mod semiglobal;
pub mod simnet;

pub use protocol::{NodeEvent, NodeState, Packet, PacketEntry, ProtocolError};
pub use rating::{DataPoint, FeatureVector, NodeId, PointKey, PointSet, Rank, RatingKind, RatingSpec};
