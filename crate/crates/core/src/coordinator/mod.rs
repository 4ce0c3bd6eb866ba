//! Centralized detection and resolution service.
//!
//! BSMs are filtered for kinematic plausibility, kept in a registry, scanned
//! pairwise for reachable-set conflicts and resolved with complementary
//! advisory pairs. Compliance is checked after a grace period; a
//! non-compliant active party triggers a single reversal, and any further
//! non-compliance escalates to an alarm.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::SelectionConfig;
use crate::reachset::{ConflictParams, ReachParams};
use crate::world::{default_limits, ModeLimits, TransportMode};
use crate::AgentId;

mod detect;
mod plausibility;
mod registry;
mod resolution;
mod service;

pub use detect::{detect_conflicts, detect_conflicts_brute_force};
pub use plausibility::{plausibility_filter, Plausibility, RejectReason};
pub use registry::{Registry, RegistryEntry};
pub use resolution::{
    agent_compliance, alarm, assess_compliance, conflict_id, monitor_compliance, resolve, reverse, Compliance,
    ConflictRecord, IssueKind, IssuedPair, RecordState, Resolution, ResolutionKind,
};
pub use service::{Coordinator, CoordinatorEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoordinatorError {
    #[error("agent {0} has no fresh registry entry")]
    StaleConflict(AgentId),
    #[error("conflict {0:#018x} was already reversed")]
    AlreadyReversed(u64),
    #[error("illegal record transition {from:?} -> {to:?}")]
    IllegalTransition { from: RecordState, to: RecordState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorConfig {
    pub reach: ReachParams,
    pub conflict: ConflictParams,
    pub selection: SelectionConfig,
    /// Registry entries older than this are ignored, seconds.
    pub t_stale: f64,
    /// Compliance grace period, seconds.
    pub t_grace: f64,
    /// Lookahead used when verifying a candidate resolution, seconds.
    pub verify_horizon: f64,
    /// Consecutive quiet ticks before a record clears.
    pub clear_ticks: u32,
    pub plausibility: bool,
    pub advisories: bool,
    pub gaze_suppression: bool,
    /// How much accepted BSM history to keep per agent, milliseconds.
    pub history_ms: u64,
    pub limits: BTreeMap<TransportMode, ModeLimits>,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        let reach = ReachParams::default();
        Self {
            reach,
            conflict: ConflictParams::default(),
            selection: SelectionConfig::default(),
            t_stale: 2.0,
            t_grace: 1.0,
            verify_horizon: 2.0 * reach.horizon,
            clear_ticks: 3,
            plausibility: true,
            advisories: true,
            gaze_suppression: true,
            history_ms: 5000,
            limits: TransportMode::ALL.iter().map(|m| (*m, default_limits(*m))).collect(),
        }
    }
}

impl CoordinatorConfig {
    pub fn limits(&self, mode: TransportMode) -> ModeLimits {
        self.limits.get(&mode).copied().unwrap_or_else(|| default_limits(mode))
    }
}
