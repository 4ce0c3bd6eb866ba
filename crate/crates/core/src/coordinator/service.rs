use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::netsim::{decode_frame, Advisory, Bsm, Frame};
use crate::reachset::Conflict;
use crate::AgentId;

use super::resolution::alarm;
use super::{
    detect_conflicts, monitor_compliance, plausibility_filter, resolve, reverse, Compliance, ConflictRecord,
    CoordinatorConfig, IssueKind, Plausibility, RecordState, Registry, RejectReason, ResolutionKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum CoordinatorEvent {
    BsmAccepted {
        sender: AgentId,
        seq: u32,
    },
    BsmRejected {
        sender: AgentId,
        seq: u32,
        reason: RejectReason,
    },
    FrameError {
        error: String,
    },
    ConflictOpened {
        conflict_id: u64,
        conflict: Conflict,
        informational: bool,
    },
    SendAdvisory {
        advisory: Advisory,
        kind: IssueKind,
        /// Seconds from now until the predicted first conflict step.
        t_conflict: f64,
        /// Distance between the two parties' latest reported positions.
        distance: f64,
    },
    Transition {
        conflict_id: u64,
        from: RecordState,
        to: RecordState,
    },
    RecordClosed {
        conflict_id: u64,
        state: RecordState,
    },
}

/// Deterministic coordinator state machine. It is driven only by frame
/// deliveries and periodic ticks.
#[derive(Debug, Clone)]
pub struct Coordinator {
    cfg: CoordinatorConfig,
    registry: Registry,
    open: BTreeMap<(AgentId, AgentId), ConflictRecord>,
    closed: Vec<ConflictRecord>,
    tick: u64,
    rejected: u64,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    tick: u64,
    now_ms: u64,
    rejected: u64,
    registry: &'a Registry,
    open: Vec<&'a ConflictRecord>,
    closed: usize,
}

impl Coordinator {
    pub fn new(cfg: CoordinatorConfig) -> Self {
        let registry = Registry::new(cfg.history_ms);
        Self {
            cfg,
            registry,
            open: BTreeMap::new(),
            closed: Vec::new(),
            tick: 0,
            rejected: 0,
        }
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Every record ever opened: archived first, then the open ones in pair
    /// order.
    pub fn records(&self) -> impl Iterator<Item = &ConflictRecord> {
        self.closed.iter().chain(self.open.values())
    }

    pub fn ingest_frame(&mut self, bytes: &[u8], arrival_ms: u64) -> CoordinatorEvent {
        match decode_frame(bytes) {
            Ok(Frame::Bsm(b)) => self.ingest_bsm(b, arrival_ms),
            Ok(Frame::Advisory(_)) => CoordinatorEvent::FrameError {
                error: "unexpected advisory frame on uplink".into(),
            },
            Err(e) => CoordinatorEvent::FrameError { error: e.to_string() },
        }
    }

    pub fn ingest_bsm(&mut self, bsm: Bsm, arrival_ms: u64) -> CoordinatorEvent {
        let (sender, seq) = (bsm.sender, bsm.seq);
        if self.cfg.plausibility {
            let prev = self.registry.latest(sender).map(|e| &e.bsm);
            if let Plausibility::Reject(reason) = plausibility_filter(prev, &bsm, &self.cfg.limits(bsm.mode)) {
                self.rejected += 1;
                return CoordinatorEvent::BsmRejected { sender, seq, reason };
            }
        }
        self.registry.insert(bsm, arrival_ms);
        CoordinatorEvent::BsmAccepted { sender, seq }
    }

    fn suppressed(&self, c: &Conflict, now_ms: u64) -> bool {
        if !self.cfg.gaze_suppression {
            return false;
        }
        let gaze = |id| self.registry.latest(id).is_some_and(|e| e.bsm.gaze_covers_conflict);
        gaze(c.agent_a) && gaze(c.agent_b) && c.t_first - now_ms as f64 / 1000.0 > self.cfg.selection.tau_imminent
    }

    fn distance(&self, a: AgentId, b: AgentId) -> f64 {
        match (self.registry.latest(a), self.registry.latest(b)) {
            (Some(x), Some(y)) => x.bsm.state.position.distance(y.bsm.state.position),
            _ => f64::INFINITY,
        }
    }

    fn send(
        &self,
        rec: &ConflictRecord,
        kind: IssueKind,
        advisories: [Advisory; 2],
        now_ms: u64,
        out: &mut Vec<CoordinatorEvent>,
    ) {
        let t_conflict = (rec.conflict.t_first - now_ms as f64 / 1000.0).max(0.0);
        let (a, b) = rec.pair();
        let distance = self.distance(a, b);
        for advisory in advisories {
            out.push(CoordinatorEvent::SendAdvisory {
                advisory,
                kind,
                t_conflict,
                distance,
            });
        }
    }

    fn issue_original(&self, rec: &mut ConflictRecord, now_ms: u64, out: &mut Vec<CoordinatorEvent>) {
        let Ok(res) = resolve(&rec.conflict, &self.registry, now_ms, rec.conflict_id, &self.cfg) else {
            return;
        };
        rec.informational = false;
        if res.kind == ResolutionKind::Alarm {
            let from = rec.state;
            if rec.transition(RecordState::Escalated).is_ok() {
                out.push(CoordinatorEvent::Transition {
                    conflict_id: rec.conflict_id,
                    from,
                    to: RecordState::Escalated,
                });
            }
            rec.push_issue(IssueKind::Alarm, res.advisories, self.cfg.t_grace);
            self.send(rec, IssueKind::Alarm, res.advisories, now_ms, out);
        } else {
            rec.push_issue(IssueKind::Original, res.advisories, self.cfg.t_grace);
            self.send(rec, IssueKind::Original, res.advisories, now_ms, out);
        }
    }

    /// One processing tick: detection, record bookkeeping and compliance
    /// monitoring, in that order.
    pub fn tick(&mut self, now_ms: u64) -> Vec<CoordinatorEvent> {
        self.tick += 1;
        let mut out = Vec::new();
        let conflicts = detect_conflicts(&self.registry, now_ms, &self.cfg);
        let mut seen = BTreeSet::new();
        for c in conflicts {
            let key = (c.agent_a, c.agent_b);
            seen.insert(key);
            let suppressed = self.suppressed(&c, now_ms);
            let mut rec = match self.open.remove(&key) {
                Some(mut rec) => {
                    rec.conflict = c;
                    rec.quiet_ticks = 0;
                    if rec.informational && !suppressed {
                        self.issue_original(&mut rec, now_ms, &mut out);
                    }
                    rec
                }
                None => {
                    let mut rec = ConflictRecord::new(c, self.tick);
                    let informational = self.cfg.advisories && suppressed;
                    out.push(CoordinatorEvent::ConflictOpened {
                        conflict_id: rec.conflict_id,
                        conflict: c,
                        informational,
                    });
                    if self.cfg.advisories {
                        if informational {
                            rec.informational = true;
                        } else {
                            self.issue_original(&mut rec, now_ms, &mut out);
                        }
                    }
                    rec
                }
            };
            rec.conflict = c;
            self.open.insert(key, rec);
        }

        let quiet: Vec<_> = self.open.keys().filter(|k| !seen.contains(k)).copied().collect();
        for key in quiet {
            let rec = self.open.get_mut(&key).expect("key taken from map");
            rec.quiet_ticks += 1;
            if rec.quiet_ticks >= self.cfg.clear_ticks {
                let mut rec = self.open.remove(&key).expect("key taken from map");
                if rec.is_open() {
                    let from = rec.state;
                    rec.transition(RecordState::Cleared).expect("open records may clear");
                    out.push(CoordinatorEvent::Transition {
                        conflict_id: rec.conflict_id,
                        from,
                        to: RecordState::Cleared,
                    });
                }
                out.push(CoordinatorEvent::RecordClosed {
                    conflict_id: rec.conflict_id,
                    state: rec.state,
                });
                self.closed.push(rec);
            }
        }

        let keys: Vec<_> = self.open.keys().copied().collect();
        for key in keys {
            let mut rec = self.open.remove(&key).expect("key taken from map");
            self.monitor(&mut rec, now_ms, &mut out);
            self.open.insert(key, rec);
        }
        out
    }

    fn monitor(&self, rec: &mut ConflictRecord, now_ms: u64, out: &mut Vec<CoordinatorEvent>) {
        if !rec.is_open() || rec.issued.is_empty() || rec.compliance_settled {
            return;
        }
        let (verdict, offender) = monitor_compliance(rec, &self.registry, &self.cfg);
        match verdict {
            Compliance::Pending => {}
            Compliance::Compliant => rec.compliance_settled = true,
            Compliance::NonCompliant => {
                rec.compliance_settled = true;
                let from = rec.state;
                if rec.state == RecordState::Active {
                    let offender = offender.expect("non-compliance names an agent");
                    if let Ok(pair) = reverse(rec, offender, now_ms, &self.cfg) {
                        out.push(CoordinatorEvent::Transition {
                            conflict_id: rec.conflict_id,
                            from,
                            to: RecordState::Reversed,
                        });
                        self.send(rec, IssueKind::Reversal, pair, now_ms, out);
                    }
                } else {
                    let pair = alarm(rec, now_ms, &self.cfg);
                    rec.transition(RecordState::Escalated)
                        .expect("reversed records may escalate");
                    rec.push_issue(IssueKind::Alarm, pair, self.cfg.t_grace);
                    out.push(CoordinatorEvent::Transition {
                        conflict_id: rec.conflict_id,
                        from,
                        to: RecordState::Escalated,
                    });
                    self.send(rec, IssueKind::Alarm, pair, now_ms, out);
                }
            }
        }
    }

    /// JSON view of the full coordinator state.
    pub fn state_dump(&self, now_ms: u64) -> serde_json::Value {
        serde_json::to_value(Snapshot {
            tick: self.tick,
            now_ms,
            rejected: self.rejected,
            registry: &self.registry,
            open: self.open.values().collect(),
            closed: self.closed.len(),
        })
        .expect("coordinator state is plain data")
    }
}
