//! JSON-lines trace records.
//!
//! Every line is one object with a `type` tag. Times `t` are simulation
//! milliseconds. Field dictionary:
//!
//! | type      | fields |
//! |-----------|--------|
//! | header    | scenario, seed, duration_ms, tick_ms, channel_profile, toggles, agents[{id, mode, footprint}] |
//! | truth     | t, agent, x, y, heading, speed, maneuver (applied over the last tick), est_x, est_y, pos_std, intent (argmax), intent_p |
//! | send      | t, msg, kind (bsm, spoof, advisory), agent (sender uplink, target downlink), channel, bytes, seq, dropped, due |
//! | deliver   | t, msg, kind, agent, channel, latency_ms |
//! | coord     | t, event (coordinator event object, tagged by `event`) |
//! | advice    | t, agent, conflict_id, action, is_reversal, expiry_ms, complied |
//! | applied   | t, agent, conflict_id, action, expiry_ms |
//! | contact   | t, a, b (footprints start to overlap) |
//! | dump      | t, state (coordinator state, only with dumps enabled) |

use serde::{Deserialize, Serialize};

use crate::coordinator::CoordinatorEvent;
use crate::netsim::ChannelKind;
use crate::world::{Maneuver, TransportMode};
use crate::AgentId;

use super::scenario::Toggles;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentInfo {
    pub id: AgentId,
    pub mode: TransportMode,
    pub footprint: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgKind {
    Bsm,
    Spoof,
    Advisory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Header {
        scenario: String,
        seed: u64,
        duration_ms: u64,
        tick_ms: u64,
        channel_profile: String,
        toggles: Toggles,
        agents: Vec<AgentInfo>,
    },
    Truth {
        t: u64,
        agent: AgentId,
        x: f64,
        y: f64,
        heading: f64,
        speed: f64,
        maneuver: Maneuver,
        est_x: f64,
        est_y: f64,
        pos_std: f64,
        intent: Maneuver,
        intent_p: f64,
    },
    Send {
        t: u64,
        msg: u64,
        kind: MsgKind,
        agent: AgentId,
        channel: ChannelKind,
        bytes: usize,
        seq: Option<u32>,
        dropped: bool,
        due: Option<u64>,
    },
    Deliver {
        t: u64,
        msg: u64,
        kind: MsgKind,
        agent: AgentId,
        channel: ChannelKind,
        latency_ms: u64,
    },
    Coord {
        t: u64,
        event: CoordinatorEvent,
    },
    Advice {
        t: u64,
        agent: AgentId,
        conflict_id: u64,
        action: Maneuver,
        is_reversal: bool,
        expiry_ms: u64,
        complied: bool,
    },
    Applied {
        t: u64,
        agent: AgentId,
        conflict_id: u64,
        action: Maneuver,
        expiry_ms: u64,
    },
    Contact {
        t: u64,
        a: AgentId,
        b: AgentId,
    },
    Dump {
        t: u64,
        state: serde_json::Value,
    },
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace records are plain data")
    }
}
