use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::intent::{IntentDistribution, DEFAULT_FLOOR};
use crate::netsim::{Advisory, Bsm};
use crate::reachset::{compute_reachable_set, conflict_scan, Conflict, ReachParams, ReachableSet};
use crate::sensing::FusedEstimate;
use crate::world::{normalize_angle, Maneuver};
use crate::AgentId;

use super::{CoordinatorConfig, CoordinatorError, Registry, RegistryEntry};

/// Heading tolerance for MaintainCourse compliance, degrees.
pub const MAINTAIN_HEADING_TOL_DEG: f64 = 15.0;
/// Speed tolerance for MaintainCourse compliance, m/s.
pub const MAINTAIN_SPEED_TOL: f64 = 1.0;
/// Minimum heading change for turn compliance, degrees.
pub const TURN_MIN_DEG: f64 = 5.0;
/// A reported speed at or below this counts as stopped, m/s.
pub const STOPPED_SPEED: f64 = 0.5;

/// 64-bit record id from the canonical pair and the tick of first detection.
pub fn conflict_id(a: AgentId, b: AgentId, tick: u64) -> u64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut h = Sha256::new();
    h.update(lo.0.to_le_bytes());
    h.update(hi.0.to_le_bytes());
    h.update(tick.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordState {
    Active,
    Reversed,
    Cleared,
    Escalated,
}

impl RecordState {
    pub fn can_transition(self, to: RecordState) -> bool {
        use RecordState::*;
        matches!(
            (self, to),
            (Active, Reversed) | (Active, Cleared) | (Active, Escalated) | (Reversed, Cleared) | (Reversed, Escalated)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionKind {
    /// One party brakes, the other holds its course.
    BrakeYield,
    /// Both parties turn to their own right.
    Lateral,
    /// Verification failed; both parties brake.
    Alarm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Original,
    Reversal,
    Alarm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedPair {
    pub kind: IssueKind,
    pub advisories: [Advisory; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub kind: ResolutionKind,
    pub advisories: [Advisory; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub conflict_id: u64,
    pub conflict: Conflict,
    pub state: RecordState,
    pub issued: Vec<IssuedPair>,
    pub grace_deadline_ms: Option<u64>,
    pub first_tick: u64,
    /// Downgraded to an informational warning; no advisories sent yet.
    pub informational: bool,
    /// The compliance check for the newest issued pair has been decided.
    pub compliance_settled: bool,
    pub quiet_ticks: u32,
}

impl ConflictRecord {
    pub fn new(conflict: Conflict, tick: u64) -> Self {
        Self {
            conflict_id: conflict_id(conflict.agent_a, conflict.agent_b, tick),
            conflict,
            state: RecordState::Active,
            issued: Vec::new(),
            grace_deadline_ms: None,
            first_tick: tick,
            informational: false,
            compliance_settled: false,
            quiet_ticks: 0,
        }
    }

    pub fn pair(&self) -> (AgentId, AgentId) {
        (self.conflict.agent_a, self.conflict.agent_b)
    }

    pub fn transition(&mut self, to: RecordState) -> Result<(), CoordinatorError> {
        if !self.state.can_transition(to) {
            return Err(CoordinatorError::IllegalTransition { from: self.state, to });
        }
        self.state = to;
        Ok(())
    }

    pub fn latest_issue(&self) -> Option<&IssuedPair> {
        self.issued.last()
    }

    pub fn reversals(&self) -> usize {
        self.issued.iter().filter(|p| p.kind == IssueKind::Reversal).count()
    }

    pub fn is_open(&self) -> bool {
        matches!(self.state, RecordState::Active | RecordState::Reversed)
    }

    /// Records a newly issued pair and restarts the grace period.
    pub fn push_issue(&mut self, kind: IssueKind, advisories: [Advisory; 2], t_grace: f64) {
        let issued = advisories[0].issued_at_ms;
        self.grace_deadline_ms = Some(issued + (t_grace * 1000.0).round() as u64);
        self.compliance_settled = false;
        self.issued.push(IssuedPair { kind, advisories });
    }
}

fn pair(id: u64, acts: [(AgentId, Maneuver); 2], now_ms: u64, horizon: f64, is_reversal: bool) -> [Advisory; 2] {
    let expiry_ms = now_ms + (horizon * 1000.0).round() as u64;
    acts.map(|(target, action)| Advisory {
        conflict_id: id,
        target,
        action,
        issued_at_ms: now_ms,
        is_reversal,
        expiry_ms,
    })
}

/// Estimate implied by a registry entry: the reported state with the
/// positional spread recovered from the step-zero disc radius.
fn entry_estimate(e: &RegistryEntry, cfg: &CoordinatorConfig) -> FusedEstimate {
    let limits = cfg.limits(e.bsm.mode);
    let r0 = e.reach().steps[0].iter().map(|d| d.radius).fold(0.0, f64::max);
    let pos_std = if cfg.reach.sigma_scale > 0.0 {
        ((r0 - limits.footprint_radius) / cfg.reach.sigma_scale).max(0.0)
    } else {
        0.0
    };
    FusedEstimate {
        time: e.reach().t0,
        mean: e.bsm.state,
        pos_std,
        speed_std: 0.0,
    }
}

fn advised_set(e: &RegistryEntry, m: Maneuver, cfg: &CoordinatorConfig) -> Option<ReachableSet> {
    let params = ReachParams {
        horizon: cfg.verify_horizon,
        ..cfg.reach
    };
    compute_reachable_set(
        e.bsm.sender,
        &entry_estimate(e, cfg),
        &IntentDistribution::concentrated(m, DEFAULT_FLOOR),
        &cfg.limits(e.bsm.mode),
        &params,
    )
    .ok()
}

/// Whether the pair is conflict-free when each agent follows its advised
/// maneuver.
fn verify(ea: &RegistryEntry, ma: Maneuver, eb: &RegistryEntry, mb: Maneuver, cfg: &CoordinatorConfig) -> bool {
    match (advised_set(ea, ma, cfg), advised_set(eb, mb, cfg)) {
        (Some(sa), Some(sb)) => matches!(conflict_scan(&sa, &sb, &cfg.conflict), Ok(None)),
        _ => false,
    }
}

/// Complementary advisory pair for a detected conflict.
///
/// The less vulnerable party brakes (lower id on a tie) while the other
/// holds its course. If that still conflicts, both turn right; if that
/// conflicts too, both are told to brake and the resolution is an alarm.
pub fn resolve(
    c: &Conflict,
    reg: &Registry,
    now_ms: u64,
    id: u64,
    cfg: &CoordinatorConfig,
) -> Result<Resolution, CoordinatorError> {
    let stale_ms = (cfg.t_stale * 1000.0).round() as u64;
    for agent in [c.agent_a, c.agent_b] {
        if !reg.is_fresh(agent, now_ms, stale_ms) {
            return Err(CoordinatorError::StaleConflict(agent));
        }
    }
    let (ea, eb) = reg
        .aligned_pair(c.agent_a, c.agent_b, cfg.reach.dt_reach)
        .or_else(|| Some((reg.latest(c.agent_a)?, reg.latest(c.agent_b)?)))
        .ok_or(CoordinatorError::StaleConflict(c.agent_a))?;

    let (ra, rb) = (ea.bsm.mode.vulnerability_rank(), eb.bsm.mode.vulnerability_rank());
    let a_brakes = if ra != rb {
        ra < rb
    } else {
        ea.bsm.sender < eb.bsm.sender
    };
    let (ma, mb) = if a_brakes {
        (Maneuver::Brake, Maneuver::MaintainCourse)
    } else {
        (Maneuver::MaintainCourse, Maneuver::Brake)
    };

    let (kind, ma, mb) = if verify(ea, ma, eb, mb, cfg) {
        (ResolutionKind::BrakeYield, ma, mb)
    } else if verify(ea, Maneuver::TurnRight, eb, Maneuver::TurnRight, cfg) {
        (ResolutionKind::Lateral, Maneuver::TurnRight, Maneuver::TurnRight)
    } else {
        (ResolutionKind::Alarm, Maneuver::Brake, Maneuver::Brake)
    };
    Ok(Resolution {
        kind,
        advisories: pair(
            id,
            [(ea.bsm.sender, ma), (eb.bsm.sender, mb)],
            now_ms,
            cfg.reach.horizon,
            false,
        ),
    })
}

/// Alarm pair: both parties brake.
pub fn alarm(rec: &ConflictRecord, now_ms: u64, cfg: &CoordinatorConfig) -> [Advisory; 2] {
    let (a, b) = rec.pair();
    pair(
        rec.conflict_id,
        [(a, Maneuver::Brake), (b, Maneuver::Brake)],
        now_ms,
        cfg.reach.horizon,
        false,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compliance {
    Compliant,
    NonCompliant,
    Pending,
}

/// Compares the state observed after the grace period with the baseline at
/// issuance.
pub fn assess_compliance(action: Maneuver, baseline: &Bsm, observed: &Bsm, cfg: &CoordinatorConfig) -> Compliance {
    let dv = observed.state.speed - baseline.state.speed;
    let dh = normalize_angle(observed.state.heading - baseline.state.heading).to_degrees();
    let ok = match action {
        Maneuver::Brake => {
            let required = 0.5 * cfg.limits(baseline.mode).a_min.abs() * cfg.t_grace;
            -dv >= required || observed.state.speed <= STOPPED_SPEED
        }
        Maneuver::MaintainCourse => dh.abs() <= MAINTAIN_HEADING_TOL_DEG && dv.abs() <= MAINTAIN_SPEED_TOL,
        Maneuver::TurnLeft => dh >= TURN_MIN_DEG,
        Maneuver::TurnRight => dh <= -TURN_MIN_DEG,
        // Never advised; judged like MaintainCourse on speed growth.
        Maneuver::Accelerate => dv > 0.0,
    };
    if ok {
        Compliance::Compliant
    } else {
        Compliance::NonCompliant
    }
}

/// Verdict for one advised agent: Pending until a BSM stamped at or after
/// the grace deadline has been accepted.
pub fn agent_compliance(adv: &Advisory, reg: &Registry, cfg: &CoordinatorConfig) -> Compliance {
    let deadline = adv.issued_at_ms + (cfg.t_grace * 1000.0).round() as u64;
    let hist: Vec<&RegistryEntry> = reg.history(adv.target).collect();
    let baseline = hist.iter().rev().find(|e| e.bsm.timestamp_ms <= adv.issued_at_ms);
    let observed = hist.iter().find(|e| e.bsm.timestamp_ms >= deadline);
    match (baseline, observed) {
        (Some(b), Some(o)) => assess_compliance(adv.action, &b.bsm, &o.bsm, cfg),
        // No pre-issuance reference survives in the window: judge against
        // the oldest report we still hold.
        (None, Some(o)) => match hist.first() {
            Some(b) if b.bsm.timestamp_ms < o.bsm.timestamp_ms => assess_compliance(adv.action, &b.bsm, &o.bsm, cfg),
            _ => Compliance::Pending,
        },
        _ => Compliance::Pending,
    }
}

/// Compliance of the active (braking or turning) parties of the newest
/// issued pair. Returns the first non-compliant active agent, if any.
pub fn monitor_compliance(
    rec: &ConflictRecord,
    reg: &Registry,
    cfg: &CoordinatorConfig,
) -> (Compliance, Option<AgentId>) {
    let Some(issue) = rec.latest_issue() else {
        return (Compliance::Pending, None);
    };
    let mut verdict = Compliance::Compliant;
    for adv in issue.advisories.iter().filter(|a| a.action != Maneuver::MaintainCourse) {
        match agent_compliance(adv, reg, cfg) {
            Compliance::NonCompliant => return (Compliance::NonCompliant, Some(adv.target)),
            Compliance::Pending => verdict = Compliance::Pending,
            Compliance::Compliant => {}
        }
    }
    (verdict, None)
}

/// Reversal pair for a record whose active party `offender` did not comply:
/// the offender is told to hold its course and the other party brakes.
pub fn reverse(
    rec: &mut ConflictRecord,
    offender: AgentId,
    now_ms: u64,
    cfg: &CoordinatorConfig,
) -> Result<[Advisory; 2], CoordinatorError> {
    if rec.state != RecordState::Active {
        return Err(CoordinatorError::AlreadyReversed(rec.conflict_id));
    }
    let (a, b) = rec.pair();
    let other = if offender == a { b } else { a };
    let advisories = pair(
        rec.conflict_id,
        [(offender, Maneuver::MaintainCourse), (other, Maneuver::Brake)],
        now_ms,
        cfg.reach.horizon,
        true,
    );
    rec.transition(RecordState::Reversed)?;
    rec.push_issue(IssueKind::Reversal, advisories, cfg.t_grace);
    Ok(advisories)
}
