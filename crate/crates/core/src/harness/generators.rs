//! Seeded scenario families used by the acceptance suite, the CLI and the
//! bundled examples.

use std::f64::consts::PI;

use crate::rng::{RngStream, GLOBAL_OWNER};
use crate::world::{Maneuver, TransportMode};
use crate::Vec2;

use super::scenario::{
    AgentSpec, InitialState, Periods, Scenario, Thresholds, TimelineEntry, Toggles, DEFAULT_WARMUP, SCHEMA_VERSION,
};

fn rng(seed: u64, family: &str) -> RngStream {
    RngStream::derive(seed, GLOBAL_OWNER, &format!("scenario/{family}"))
}

fn pick<T: Copy>(r: &mut RngStream, items: &[T]) -> T {
    items[((r.uniform() * items.len() as f64) as usize).min(items.len() - 1)]
}

fn range(r: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.uniform()
}

/// Typical cruising speed band per mode, m/s.
pub fn speed_band(mode: TransportMode) -> (f64, f64) {
    match mode {
        TransportMode::Pedestrian => (1.0, 1.8),
        TransportMode::Bicycle => (4.0, 7.0),
        TransportMode::Motorcycle => (8.0, 15.0),
        TransportMode::Car => (8.0, 14.0),
    }
}

/// Spec for an agent that reaches `meet` after `t` seconds along `heading`.
fn arriving(id: u32, mode: TransportMode, meet: Vec2, heading: f64, speed: f64, t: f64) -> AgentSpec {
    let start = meet - Vec2::from_heading(heading) * (speed * t);
    AgentSpec::new(
        id,
        mode,
        InitialState {
            x: start.x,
            y: start.y,
            heading,
            speed,
        },
    )
}

fn scenario(name: String, seed: u64, duration: f64, agents: Vec<AgentSpec>) -> Scenario {
    Scenario {
        schema_version: SCHEMA_VERSION,
        name,
        seed,
        duration,
        tick: 0.1,
        channel_profile: "default".into(),
        thresholds: Thresholds::default(),
        toggles: Toggles::default(),
        periods: Periods::default(),
        warmup: DEFAULT_WARMUP,
        agents,
    }
}

fn two_ids(r: &mut RngStream) -> (u32, u32) {
    let a = 1 + (r.uniform() * 50.0) as u32;
    let b = 51 + (r.uniform() * 50.0) as u32;
    if r.uniform() < 0.5 {
        (a, b)
    } else {
        (b, a)
    }
}

const VEHICLES: [TransportMode; 3] = [TransportMode::Car, TransportMode::Motorcycle, TransportMode::Bicycle];

/// Two agents on a head-on or crossing course that meet at a tick between
/// 6.5 and 9 s with at most 0.3 m of lateral offset, so that without
/// intervention their footprints overlap.
pub fn collision_course(seed: u64) -> Scenario {
    let mut r = rng(seed, "collision");
    let (ia, ib) = two_ids(&mut r);
    let t = (range(&mut r, 6.5, 9.0) * 10.0).round() / 10.0;
    let theta = range(&mut r, -PI, PI);
    let head_on = r.uniform() < 0.5;
    let (ma, mb) = if head_on {
        (pick(&mut r, &VEHICLES), pick(&mut r, &VEHICLES))
    } else {
        (pick(&mut r, &VEHICLES), pick(&mut r, &TransportMode::ALL))
    };
    let (lo, hi) = speed_band(ma);
    let va = range(&mut r, lo, hi);
    let (lo, hi) = speed_band(mb);
    let vb = range(&mut r, lo, hi);
    let offset = range(&mut r, -0.3, 0.3);
    let hb = if head_on {
        theta + PI
    } else {
        theta + range(&mut r, PI / 3.0, 2.0 * PI / 3.0) * pick(&mut r, &[1.0, -1.0])
    };
    let a = arriving(ia, ma, Vec2::ZERO, theta, va, t);
    let b = arriving(ib, mb, Vec2::from_heading(theta + PI / 2.0) * offset, hb, vb, t);
    let kind = if head_on { "head_on" } else { "crossing" };
    scenario(format!("collide-{kind}-{seed}"), seed, 20.0, vec![a, b])
}

/// Two agents on parallel lanes 20 to 30 m apart passing each other in
/// opposite or equal directions. They never come within 10 m.
pub fn pass_by(seed: u64) -> Scenario {
    let mut r = rng(seed, "passby");
    let (ia, ib) = two_ids(&mut r);
    let theta = range(&mut r, -PI, PI);
    let lane = range(&mut r, 20.0, 30.0);
    let ma = pick(&mut r, &TransportMode::ALL);
    let mb = pick(&mut r, &TransportMode::ALL);
    let (lo, hi) = speed_band(ma);
    let va = range(&mut r, lo, hi);
    let (lo, hi) = speed_band(mb);
    let vb = range(&mut r, lo, hi);
    let t = range(&mut r, 5.0, 9.0);
    let opposite = r.uniform() < 0.7;
    let side = Vec2::from_heading(theta + PI / 2.0) * lane;
    let a = arriving(ia, ma, Vec2::ZERO, theta, va, t);
    let hb = if opposite { theta + PI } else { theta };
    let b = arriving(ib, mb, side, hb, vb, t);
    scenario(format!("passby-{seed}"), seed, 20.0, vec![a, b])
}

/// Parallel same-direction lanes `spacing` meters apart at equal speed.
pub fn parallel_lanes(seed: u64, spacing: f64) -> Scenario {
    let a = arriving(1, TransportMode::Car, Vec2::ZERO, 0.0, 10.0, 0.0);
    let b = arriving(2, TransportMode::Car, Vec2::new(0.0, spacing), 0.0, 10.0, 0.0);
    scenario(format!("lanes-{spacing}-{seed}"), seed, 20.0, vec![a, b])
}

/// A conflict that is already imminent when first reported: crossing paths
/// meeting 2.0 to 2.8 s after the start, starting less than 50 m apart.
pub fn imminent(seed: u64) -> Scenario {
    let mut r = rng(seed, "imminent");
    let (ia, ib) = two_ids(&mut r);
    let t = (range(&mut r, 2.0, 2.8) * 10.0).round() / 10.0;
    let theta = range(&mut r, -PI, PI);
    let mb = pick(&mut r, &TransportMode::ALL);
    let va = range(&mut r, 8.0, 12.0);
    let (lo, hi) = speed_band(mb);
    let vb = range(&mut r, lo, hi);
    let a = arriving(ia, TransportMode::Car, Vec2::ZERO, theta, va, t);
    let b = arriving(ib, mb, Vec2::ZERO, theta + PI / 2.0, vb, t);
    scenario(format!("imminent-{seed}"), seed, 8.0, vec![a, b])
}

/// Two cars crossing at right angles, meeting at 7 s. Car 1 ignores every
/// advisory; car 2 complies.
pub fn reversal(seed: u64) -> Scenario {
    let mut a = arriving(1, TransportMode::Car, Vec2::ZERO, 0.0, 10.0, 7.0);
    a.compliance_prob = 0.0;
    let b = arriving(2, TransportMode::Car, Vec2::ZERO, PI / 2.0, 10.0, 7.0);
    scenario(format!("reversal-{seed}"), seed, 20.0, vec![a, b])
}

/// A colliding pair plus a distant pedestrian who, when `spoofing`, also
/// reports fabricated positions in front of the nearest agent.
pub fn spoof(seed: u64, spoofing: bool) -> Scenario {
    let mut s = collision_course(seed);
    let mut r = rng(seed, "spoof");
    let far = Vec2::from_heading(range(&mut r, -PI, PI)) * range(&mut r, 400.0, 600.0);
    let mut p = AgentSpec::new(
        200,
        TransportMode::Pedestrian,
        InitialState {
            x: far.x,
            y: far.y,
            heading: range(&mut r, -PI, PI),
            speed: 1.4,
        },
    );
    p.spoof = spoofing;
    s.agents.push(p);
    s.name = format!("spoof-{seed}");
    s
}

/// Random multi-agent scene for determinism and robustness checks.
pub fn fuzz(seed: u64) -> Scenario {
    let mut r = rng(seed, "fuzz");
    let n = 2 + (r.uniform() * 4.0) as u32;
    let mut agents = Vec::new();
    for k in 0..n {
        let mode = pick(&mut r, &TransportMode::ALL);
        let (lo, hi) = speed_band(mode);
        let mut a = AgentSpec::new(
            k * 7 + 1 + (r.uniform() * 5.0) as u32,
            mode,
            InitialState {
                x: range(&mut r, -80.0, 80.0),
                y: range(&mut r, -80.0, 80.0),
                heading: range(&mut r, -PI, PI),
                speed: range(&mut r, lo, hi),
            },
        );
        let mut start = 0.0;
        for _ in 0..(r.uniform() * 4.0) as usize {
            start += (range(&mut r, 0.5, 4.0) * 10.0).round() / 10.0;
            a.timeline.push(TimelineEntry {
                start,
                maneuver: pick(&mut r, &Maneuver::ALL),
            });
        }
        a.compliance_prob = pick(&mut r, &[0.0, 0.5, 1.0, 1.0]);
        a.gaze_covers_conflict = r.uniform() < 0.2;
        a.spoof = r.uniform() < 0.1;
        agents.push(a);
    }
    let mut s = scenario(format!("fuzz-{seed}"), seed, 15.0, agents);
    s.channel_profile = pick(&mut r, &["default", "cellular-only", "bluetooth-only", "ideal"]).to_string();
    s.toggles.plausibility = r.uniform() < 0.8;
    s
}
