//! Wearable-network traffic safety: per-agent sensing and intent pipeline,
//! intent-conditioned reachable sets, BSM exchange over latency-modelled
//! channels, and a centralized conflict detector issuing complementary
//! resolution advisories with reversals.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod coordinator;
pub mod geom;
pub mod harness;
pub mod intent;
pub mod netsim;
pub mod reachset;
pub mod rng;
pub mod sensing;
pub mod world;

pub use geom::Vec2;

/// 32-bit agent identifier as carried on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
