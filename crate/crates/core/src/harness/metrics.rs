use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::coordinator::{CoordinatorEvent, IssueKind};
use crate::netsim::ChannelKind;
use crate::{AgentId, Vec2};

use super::trace::{MsgKind, TraceRecord};

/// Footprint gap below which a contact-free encounter is a near miss, meters.
pub const NEAR_MISS_GAP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub count: u64,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Self {
            count: n as u64,
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChannelStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Latency of delivered messages, milliseconds.
    pub latency_ms: Stats,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub seed: u64,
    pub advisories_enabled: bool,
    pub collisions: u64,
    pub near_misses: u64,
    pub conflicts_detected: u64,
    pub informational_warnings: u64,
    /// Conflicts that received advisories (an original pair, or an alarm
    /// when no complementary pair verified).
    pub advisories_issued: u64,
    pub reversals: u64,
    /// Alarm pairs (escalations).
    pub escalations: u64,
    pub max_reversals_per_record: u64,
    /// Predicted seconds from the first advisory of a conflict to the
    /// conflict itself.
    pub lead_time_s: Stats,
    pub advisory_latency_ms: Stats,
    pub channels: BTreeMap<ChannelKind, ChannelStats>,
    pub bytes_transmitted: u64,
    pub messages_dropped: u64,
    pub bsm_sent: u64,
    pub bsm_rejected: u64,
    pub spoof_sent: u64,
    pub spoof_delivered: u64,
    pub spoof_rejected: u64,
    /// Minimum true center distance per agent pair, keyed `"a-b"` with a < b.
    pub min_separation: BTreeMap<String, f64>,
    /// Conflicts with advisories per agent pair.
    pub advisories_by_pair: BTreeMap<String, u64>,
}

pub fn pair_key(a: AgentId, b: AgentId) -> String {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    format!("{lo}-{hi}")
}

impl RunMetrics {
    /// Named scalar columns in a fixed order.
    pub fn scalars(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = vec![
            ("collisions".into(), self.collisions as f64),
            ("near_misses".into(), self.near_misses as f64),
            ("conflicts_detected".into(), self.conflicts_detected as f64),
            ("informational_warnings".into(), self.informational_warnings as f64),
            ("advisories_issued".into(), self.advisories_issued as f64),
            ("reversals".into(), self.reversals as f64),
            ("escalations".into(), self.escalations as f64),
            ("max_reversals_per_record".into(), self.max_reversals_per_record as f64),
            ("lead_time_s.count".into(), self.lead_time_s.count as f64),
            ("lead_time_s.mean".into(), self.lead_time_s.mean),
            ("lead_time_s.median".into(), self.lead_time_s.median),
            (
                "advisory_latency_ms.count".into(),
                self.advisory_latency_ms.count as f64,
            ),
            ("advisory_latency_ms.median".into(), self.advisory_latency_ms.median),
            ("bytes_transmitted".into(), self.bytes_transmitted as f64),
            ("messages_dropped".into(), self.messages_dropped as f64),
            ("bsm_sent".into(), self.bsm_sent as f64),
            ("bsm_rejected".into(), self.bsm_rejected as f64),
            ("spoof_sent".into(), self.spoof_sent as f64),
            ("spoof_delivered".into(), self.spoof_delivered as f64),
            ("spoof_rejected".into(), self.spoof_rejected as f64),
        ];
        for kind in ChannelKind::ALL {
            let c = self.channels.get(&kind).copied().unwrap_or_default();
            let n = kind.name();
            out.push((format!("{n}.sent"), c.sent as f64));
            out.push((format!("{n}.delivered"), c.delivered as f64));
            out.push((format!("{n}.dropped"), c.dropped as f64));
            out.push((format!("{n}.latency_ms.median"), c.latency_ms.median));
        }
        let min_sep = self.min_separation.values().copied().fold(f64::INFINITY, f64::min);
        out.push(("min_separation".into(), if min_sep.is_finite() { min_sep } else { 0.0 }));
        out
    }

    pub fn csv(&self) -> String {
        let cols = self.scalars();
        let mut s = String::from("scenario,seed,advisories_enabled");
        for (k, _) in &cols {
            s.push(',');
            s.push_str(k);
        }
        s.push('\n');
        s.push_str(&format!("{},{},{}", self.scenario, self.seed, self.advisories_enabled));
        for (_, v) in &cols {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
struct PairState {
    in_contact: bool,
    contacted: bool,
    min_gap: f64,
    min_dist: f64,
}

/// Folds trace records into [`RunMetrics`]. The simulator and the report
/// both use it, so a run's summary is reproducible from its trace alone.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    m: RunMetrics,
    footprints: BTreeMap<AgentId, f64>,
    frame_t: Option<u64>,
    frame: BTreeMap<AgentId, Vec2>,
    pairs: BTreeMap<(AgentId, AgentId), PairState>,
    issued: BTreeSet<(u64, IssueKind)>,
    reversals_per_record: BTreeMap<u64, u64>,
    leads: Vec<f64>,
    adv_latency: Vec<f64>,
    latencies: BTreeMap<ChannelKind, Vec<f64>>,
    spoof_seqs: BTreeSet<(AgentId, u32)>,
    spoof_msgs: BTreeSet<u64>,
    record_pairs: BTreeMap<u64, String>,
    advised: Vec<u64>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    fn flush_frame(&mut self) {
        let ids: Vec<(AgentId, Vec2)> = self.frame.iter().map(|(k, v)| (*k, *v)).collect();
        for (i, (a, pa)) in ids.iter().enumerate() {
            for (b, pb) in &ids[i + 1..] {
                let d = pa.distance(*pb);
                let gap = d - self.footprints.get(a).unwrap_or(&0.0) - self.footprints.get(b).unwrap_or(&0.0);
                let st = self.pairs.entry((*a, *b)).or_insert(PairState {
                    in_contact: false,
                    contacted: false,
                    min_gap: f64::INFINITY,
                    min_dist: f64::INFINITY,
                });
                let touching = gap < 0.0;
                if touching && !st.in_contact {
                    self.m.collisions += 1;
                    st.contacted = true;
                }
                st.in_contact = touching;
                st.min_gap = st.min_gap.min(gap);
                st.min_dist = st.min_dist.min(d);
            }
        }
        self.frame.clear();
    }

    pub fn push(&mut self, rec: &TraceRecord) {
        match rec {
            TraceRecord::Header {
                scenario,
                seed,
                toggles,
                agents,
                ..
            } => {
                self.m.scenario = scenario.clone();
                self.m.seed = *seed;
                self.m.advisories_enabled = toggles.advisories;
                self.footprints = agents.iter().map(|a| (a.id, a.footprint)).collect();
            }
            TraceRecord::Truth { t, agent, x, y, .. } => {
                if self.frame_t != Some(*t) {
                    self.flush_frame();
                    self.frame_t = Some(*t);
                }
                self.frame.insert(*agent, Vec2::new(*x, *y));
            }
            TraceRecord::Send {
                kind,
                agent,
                channel,
                bytes,
                seq,
                dropped,
                msg,
                ..
            } => {
                let c = self.m.channels.entry(*channel).or_default();
                c.sent += 1;
                if *dropped {
                    c.dropped += 1;
                    self.m.messages_dropped += 1;
                }
                self.m.bytes_transmitted += *bytes as u64;
                match kind {
                    MsgKind::Bsm => self.m.bsm_sent += 1,
                    MsgKind::Spoof => {
                        self.m.spoof_sent += 1;
                        self.spoof_msgs.insert(*msg);
                        if let Some(s) = seq {
                            self.spoof_seqs.insert((*agent, *s));
                        }
                    }
                    MsgKind::Advisory => {}
                }
            }
            TraceRecord::Deliver {
                kind,
                channel,
                latency_ms,
                msg,
                ..
            } => {
                self.m.channels.entry(*channel).or_default().delivered += 1;
                self.latencies.entry(*channel).or_default().push(*latency_ms as f64);
                if *kind == MsgKind::Advisory {
                    self.adv_latency.push(*latency_ms as f64);
                }
                if self.spoof_msgs.contains(msg) {
                    self.m.spoof_delivered += 1;
                }
            }
            TraceRecord::Coord { event, .. } => match event {
                CoordinatorEvent::BsmRejected { sender, seq, .. } => {
                    self.m.bsm_rejected += 1;
                    if self.spoof_seqs.contains(&(*sender, *seq)) {
                        self.m.spoof_rejected += 1;
                    }
                }
                CoordinatorEvent::ConflictOpened {
                    conflict_id,
                    conflict,
                    informational,
                } => {
                    self.record_pairs
                        .insert(*conflict_id, pair_key(conflict.agent_a, conflict.agent_b));
                    self.m.conflicts_detected += 1;
                    if *informational {
                        self.m.informational_warnings += 1;
                    }
                }
                CoordinatorEvent::SendAdvisory {
                    advisory,
                    kind,
                    t_conflict,
                    ..
                } => {
                    if !self.issued.iter().any(|(id, _)| *id == advisory.conflict_id) {
                        self.m.advisories_issued += 1;
                        self.leads.push(t_conflict.max(0.0));
                        self.advised.push(advisory.conflict_id);
                    }
                    if self.issued.insert((advisory.conflict_id, *kind)) {
                        match kind {
                            IssueKind::Original => {}
                            IssueKind::Reversal => {
                                self.m.reversals += 1;
                                *self.reversals_per_record.entry(advisory.conflict_id).or_default() += 1;
                            }
                            IssueKind::Alarm => self.m.escalations += 1,
                        }
                    }
                }
                _ => {}
            },
            TraceRecord::Advice { .. }
            | TraceRecord::Applied { .. }
            | TraceRecord::Contact { .. }
            | TraceRecord::Dump { .. } => {}
        }
    }

    pub fn finish(mut self) -> RunMetrics {
        self.flush_frame();
        for ((a, b), st) in &self.pairs {
            if !st.contacted && st.min_gap < NEAR_MISS_GAP {
                self.m.near_misses += 1;
            }
            self.m.min_separation.insert(pair_key(*a, *b), st.min_dist);
        }
        for id in &self.advised {
            if let Some(k) = self.record_pairs.get(id) {
                *self.m.advisories_by_pair.entry(k.clone()).or_default() += 1;
            }
        }
        self.m.max_reversals_per_record = self.reversals_per_record.values().copied().max().unwrap_or(0);
        self.m.lead_time_s = Stats::from_values(&self.leads);
        self.m.advisory_latency_ms = Stats::from_values(&self.adv_latency);
        for (kind, lat) in &self.latencies {
            self.m.channels.entry(*kind).or_default().latency_ms = Stats::from_values(lat);
        }
        self.m
    }
}

/// Metrics for a full record sequence.
pub fn metrics_from_records<'a>(records: impl IntoIterator<Item = &'a TraceRecord>) -> RunMetrics {
    let mut acc = MetricsAccumulator::new();
    for r in records {
        acc.push(r);
    }
    acc.finish()
}
