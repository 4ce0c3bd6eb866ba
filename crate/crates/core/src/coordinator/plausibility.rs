use serde::{Deserialize, Serialize};

use crate::netsim::Bsm;
use crate::world::ModeLimits;

/// Extra displacement allowed between consecutive messages, meters.
pub const DISPLACEMENT_SLACK: f64 = 5.0;
/// Multiplier on the mode's speed limit before a report is implausible.
pub const ENVELOPE_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    SeqRegress,
    TimestampRegress,
    Overspeed,
    Teleport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plausibility {
    Accept,
    Reject(RejectReason),
}

/// Kinematic sanity check of `next` against the sender's last accepted BSM.
pub fn plausibility_filter(prev: Option<&Bsm>, next: &Bsm, limits: &ModeLimits) -> Plausibility {
    if next.state.speed > ENVELOPE_FACTOR * limits.v_max {
        return Plausibility::Reject(RejectReason::Overspeed);
    }
    let Some(prev) = prev else {
        return Plausibility::Accept;
    };
    if next.seq <= prev.seq {
        return Plausibility::Reject(RejectReason::SeqRegress);
    }
    if next.timestamp_ms < prev.timestamp_ms {
        return Plausibility::Reject(RejectReason::TimestampRegress);
    }
    let dt = (next.timestamp_ms - prev.timestamp_ms) as f64 / 1000.0;
    let moved = next.state.position.distance(prev.state.position);
    if moved > ENVELOPE_FACTOR * limits.v_max * dt + DISPLACEMENT_SLACK {
        return Plausibility::Reject(RejectReason::Teleport);
    }
    Plausibility::Accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::world::{default_limits, TransportMode};

    fn bsm(seq: u32, t_ms: u64, x: f64, speed: f64) -> Bsm {
        let mut b = Bsm::zero();
        b.mode = TransportMode::Car;
        b.seq = seq;
        b.timestamp_ms = t_ms;
        b.state.position = Vec2::new(x, 0.0);
        b.state.speed = speed;
        b
    }

    #[test]
    fn examples() {
        let car = default_limits(TransportMode::Car);
        let a = bsm(1, 1000, 0.0, 10.0);
        assert_eq!(
            plausibility_filter(Some(&a), &bsm(2, 1100, 200.0, 10.0), &car),
            Plausibility::Reject(RejectReason::Teleport)
        );
        // 1.5 * 30 = 45 < 50
        assert_eq!(
            plausibility_filter(None, &bsm(1, 0, 0.0, 50.0), &car),
            Plausibility::Reject(RejectReason::Overspeed)
        );
        assert_eq!(
            plausibility_filter(None, &bsm(1, 0, 0.0, 45.0), &car),
            Plausibility::Accept
        );
        assert_eq!(
            plausibility_filter(Some(&a), &bsm(2, 1100, 1.0, 10.0), &car),
            Plausibility::Accept
        );
    }

    #[test]
    fn ordering_checks() {
        let car = default_limits(TransportMode::Car);
        let a = bsm(5, 1000, 0.0, 10.0);
        assert_eq!(
            plausibility_filter(Some(&a), &bsm(5, 1100, 1.0, 10.0), &car),
            Plausibility::Reject(RejectReason::SeqRegress)
        );
        assert_eq!(
            plausibility_filter(Some(&a), &bsm(6, 900, 1.0, 10.0), &car),
            Plausibility::Reject(RejectReason::TimestampRegress)
        );
    }

    #[test]
    fn envelope_boundary() {
        let ped = default_limits(TransportMode::Pedestrian);
        let a = bsm(1, 0, 0.0, 1.0);
        // 1.5 * 2.5 * 1.0 + 5 = 8.75 m allowed over one second
        assert_eq!(
            plausibility_filter(Some(&a), &bsm(2, 1000, 8.7, 1.0), &ped),
            Plausibility::Accept
        );
        assert_eq!(
            plausibility_filter(Some(&a), &bsm(2, 1000, 8.8, 1.0), &ped),
            Plausibility::Reject(RejectReason::Teleport)
        );
    }
}
