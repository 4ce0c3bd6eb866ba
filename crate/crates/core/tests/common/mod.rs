#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

use wearsafe_core::coordinator::CoordinatorEvent;
use wearsafe_core::harness::{MsgKind, TraceRecord};
use wearsafe_core::intent::IntentDistribution;
use wearsafe_core::netsim::wire::Bsm;
use wearsafe_core::reachset::{compute_reachable_set, ReachParams};
use wearsafe_core::rng::RngStream;
use wearsafe_core::sensing::FusedEstimate;
use wearsafe_core::world::{default_limits, KinematicState, TransportMode};
use wearsafe_core::{AgentId, Vec2};

/// A BSM with every field drawn at random inside the wire ranges.
pub fn random_bsm(rng: &mut RngStream) -> Bsm {
    let pick = |rng: &mut RngStream, lo: f64, hi: f64| lo + (hi - lo) * rng.uniform();
    let mode = TransportMode::ALL[(rng.next_u64() % 4) as usize];
    let limits = default_limits(mode);
    let mut state = KinematicState::new(
        Vec2::new(pick(rng, -5000.0, 5000.0), pick(rng, -5000.0, 5000.0)),
        pick(rng, -PI, PI),
        pick(rng, 0.0, limits.v_max),
    );
    state.accel = pick(rng, limits.a_min, limits.a_max);
    state.yaw_rate = pick(rng, -limits.yaw_rate_max, limits.yaw_rate_max);
    let timestamp_ms = rng.next_u64() % 10_000_000;
    let est = FusedEstimate {
        time: timestamp_ms as f64 / 1000.0,
        mean: state,
        pos_std: pick(rng, 0.1, 5.0),
        speed_std: 0.5,
    };
    let scores = [(); 5].map(|_| rng.uniform());
    let intent = IntentDistribution::from_scores(scores, 0.01).unwrap();
    let params = ReachParams {
        horizon: pick(rng, 1.0, 8.0),
        ..ReachParams::default()
    };
    let sender = AgentId(rng.next_u64() as u32);
    let reach = compute_reachable_set(sender, &est, &intent, &limits, &params).unwrap();
    Bsm {
        sender,
        seq: rng.next_u64() as u32,
        timestamp_ms,
        state,
        mode,
        gaze_covers_conflict: rng.uniform() < 0.5,
        intent,
        reach,
    }
}

pub fn records(trace: &[String]) -> Vec<TraceRecord> {
    trace.iter().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Advisories sent by the coordinator as (issued_at_ms, target, action, reversal).
pub fn advisory_set(trace: &[String]) -> BTreeSet<(u64, u32, String, bool)> {
    records(trace)
        .into_iter()
        .filter_map(|r| match r {
            TraceRecord::Coord {
                event: CoordinatorEvent::SendAdvisory { advisory, .. },
                ..
            } => Some((
                advisory.issued_at_ms,
                advisory.target.0,
                advisory.action.name().to_string(),
                advisory.is_reversal,
            )),
            _ => None,
        })
        .collect()
}

pub fn advisory_latencies(trace: &[String]) -> Vec<f64> {
    records(trace)
        .into_iter()
        .filter_map(|r| match r {
            TraceRecord::Deliver {
                kind: MsgKind::Advisory,
                latency_ms,
                ..
            } => Some(latency_ms as f64),
            _ => None,
        })
        .collect()
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// First field where `b` differs from `a` by more than one quantization step.
pub fn quantization_error(a: &Bsm, b: &Bsm) -> Option<String> {
    let close = |x: f64, y: f64, tol: f64| (x - y).abs() <= tol + 1e-9;
    let cm = 0.005 * 2f64.sqrt();
    let dh = (a.state.heading - b.state.heading).rem_euclid(2.0 * PI);
    let checks = [
        (
            "ids",
            (a.sender, a.seq, a.timestamp_ms) == (b.sender, b.seq, b.timestamp_ms),
        ),
        (
            "mode",
            (a.mode, a.gaze_covers_conflict) == (b.mode, b.gaze_covers_conflict),
        ),
        ("position", a.state.position.distance(b.state.position) <= cm + 1e-9),
        ("heading", dh.min(2.0 * PI - dh) <= PI / 65536.0 + 1e-9),
        ("speed", close(a.state.speed, b.state.speed, 0.005)),
        ("accel", close(a.state.accel, b.state.accel, 0.005)),
        ("yaw_rate", close(a.state.yaw_rate, b.state.yaw_rate, 0.0005)),
        (
            "intent",
            a.intent
                .probs()
                .iter()
                .zip(b.intent.probs())
                .all(|(p, q)| close(*p, *q, 1.0 / 65535.0)),
        ),
        ("t0", close(a.reach.t0, b.reach.t0, 0.0005)),
        ("dt_reach", close(a.reach.dt_reach, b.reach.dt_reach, 0.0005)),
        (
            "discs",
            a.reach.steps.len() == b.reach.steps.len()
                && a.reach.steps.iter().zip(&b.reach.steps).all(|(sa, sb)| {
                    sa.len() == sb.len()
                        && sa.iter().zip(sb).all(|(da, db)| {
                            da.center.distance(db.center) <= cm + 1e-9
                                && close(da.radius, db.radius, 0.005)
                                && close(da.prob, db.prob, 1.0 / 65535.0)
                        })
                }),
        ),
    ];
    checks.iter().find(|(_, ok)| !ok).map(|(f, _)| f.to_string())
}
