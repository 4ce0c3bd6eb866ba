//! Transport modes, kinematic state and the unicycle motion model.
//!
//! All four transport modes share one exact-arc unicycle model; they differ
//! only through [`ModeLimits`].

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;

/// Fraction of `yaw_rate_max` used by the turn maneuvers.
pub const TURN_FRACTION: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("invalid state: {0}")]
    InvalidState(&'static str),
    #[error("invalid limits: {0}")]
    InvalidLimits(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    Pedestrian,
    Bicycle,
    Motorcycle,
    Car,
}

impl TransportMode {
    pub const ALL: [TransportMode; 4] = [
        TransportMode::Pedestrian,
        TransportMode::Bicycle,
        TransportMode::Motorcycle,
        TransportMode::Car,
    ];

    /// Higher is more vulnerable: Pedestrian > Bicycle > Motorcycle > Car.
    pub fn vulnerability_rank(self) -> u8 {
        match self {
            TransportMode::Pedestrian => 3,
            TransportMode::Bicycle => 2,
            TransportMode::Motorcycle => 1,
            TransportMode::Car => 0,
        }
    }

    /// Wire code, also the declaration order.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TransportMode::Pedestrian => "pedestrian",
            TransportMode::Bicycle => "bicycle",
            TransportMode::Motorcycle => "motorcycle",
            TransportMode::Car => "car",
        }
    }
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Discrete maneuver vocabulary. The declaration order is the canonical
/// serialization order used on the wire and in probability vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    MaintainCourse,
    TurnLeft,
    TurnRight,
    Brake,
    Accelerate,
}

impl Maneuver {
    pub const ALL: [Maneuver; 5] = [
        Maneuver::MaintainCourse,
        Maneuver::TurnLeft,
        Maneuver::TurnRight,
        Maneuver::Brake,
        Maneuver::Accelerate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Left/right mirror image; other maneuvers map to themselves.
    pub fn mirrored(self) -> Self {
        match self {
            Maneuver::TurnLeft => Maneuver::TurnRight,
            Maneuver::TurnRight => Maneuver::TurnLeft,
            m => m,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Maneuver::MaintainCourse => "maintain_course",
            Maneuver::TurnLeft => "turn_left",
            Maneuver::TurnRight => "turn_right",
            Maneuver::Brake => "brake",
            Maneuver::Accelerate => "accelerate",
        }
    }
}

impl fmt::Display for Maneuver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub position: Vec2,
    /// Radians in `[-pi, pi)`.
    pub heading: f64,
    /// m/s, never negative.
    pub speed: f64,
    pub yaw_rate: f64,
    /// Signed acceleration along the heading.
    pub accel: f64,
}

impl KinematicState {
    pub fn new(position: Vec2, heading: f64, speed: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
            speed,
            yaw_rate: 0.0,
            accel: 0.0,
        }
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_heading(self.heading) * self.speed
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.position.is_finite()
            && self.heading.is_finite()
            && self.speed.is_finite()
            && self.yaw_rate.is_finite()
            && self.accel.is_finite())
        {
            return Err(WorldError::NonFinite("state"));
        }
        if self.speed < 0.0 {
            return Err(WorldError::InvalidState("negative speed"));
        }
        if !(-PI..PI).contains(&self.heading) {
            return Err(WorldError::InvalidState("heading not normalized"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeLimits {
    pub v_max: f64,
    pub a_max: f64,
    /// Maximum braking, negative.
    pub a_min: f64,
    pub yaw_rate_max: f64,
    pub footprint_radius: f64,
}

impl ModeLimits {
    pub fn validate(&self) -> Result<(), WorldError> {
        let all = [
            self.v_max,
            self.a_max,
            self.a_min,
            self.yaw_rate_max,
            self.footprint_radius,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(WorldError::NonFinite("limits"));
        }
        if self.v_max <= 0.0 {
            return Err(WorldError::InvalidLimits("v_max must be > 0"));
        }
        if self.a_max <= 0.0 {
            return Err(WorldError::InvalidLimits("a_max must be > 0"));
        }
        if self.a_min >= 0.0 {
            return Err(WorldError::InvalidLimits("a_min must be < 0"));
        }
        if self.yaw_rate_max <= 0.0 {
            return Err(WorldError::InvalidLimits("yaw_rate_max must be > 0"));
        }
        if self.footprint_radius <= 0.0 {
            return Err(WorldError::InvalidLimits("footprint_radius must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub accel_cmd: f64,
    pub yaw_rate_cmd: f64,
}

impl ControlInput {
    pub const fn new(accel_cmd: f64, yaw_rate_cmd: f64) -> Self {
        Self {
            accel_cmd,
            yaw_rate_cmd,
        }
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r -= 2.0 * PI;
    }
    if r < -PI {
        r = -PI;
    }
    r
}

/// Fixed per-mode parameter table. Mirrored by `assets/mode_limits.json`.
pub fn default_limits(mode: TransportMode) -> ModeLimits {
    let (v_max, a_max, a_min, yaw_rate_max, footprint_radius) = match mode {
        TransportMode::Pedestrian => (2.5, 1.5, -2.0, 3.0, 0.4),
        TransportMode::Bicycle => (10.0, 2.0, -4.0, 0.8, 0.6),
        TransportMode::Motorcycle => (30.0, 4.0, -7.0, 0.6, 0.8),
        TransportMode::Car => (30.0, 3.0, -8.0, 0.5, 1.2),
    };
    ModeLimits {
        v_max,
        a_max,
        a_min,
        yaw_rate_max,
        footprint_radius,
    }
}

/// Documented JSON reference for the default table, keyed by mode name.
pub const DEFAULT_LIMITS_JSON: &str = include_str!("../assets/mode_limits.json");

pub fn maneuver_to_control(m: Maneuver, limits: &ModeLimits) -> ControlInput {
    match m {
        Maneuver::MaintainCourse => ControlInput::new(0.0, 0.0),
        Maneuver::Brake => ControlInput::new(limits.a_min, 0.0),
        Maneuver::Accelerate => ControlInput::new(limits.a_max, 0.0),
        Maneuver::TurnLeft => ControlInput::new(0.0, limits.yaw_rate_max * TURN_FRACTION),
        Maneuver::TurnRight => ControlInput::new(0.0, -limits.yaw_rate_max * TURN_FRACTION),
    }
}

/// Final speed and distance covered under constant acceleration with the
/// speed held inside `[0, v_max]`.
fn speed_profile(v: f64, a: f64, v_max: f64, dt: f64) -> (f64, f64) {
    let v = v.min(v_max);
    if a > 0.0 {
        let t_sat = (v_max - v) / a;
        if t_sat >= dt {
            (v + a * dt, v * dt + 0.5 * a * dt * dt)
        } else {
            (v_max, v * t_sat + 0.5 * a * t_sat * t_sat + v_max * (dt - t_sat))
        }
    } else if a < 0.0 {
        let t_stop = v / -a;
        if t_stop >= dt {
            ((v + a * dt).max(0.0), v * dt + 0.5 * a * dt * dt)
        } else {
            (0.0, 0.5 * v * t_stop)
        }
    } else {
        (v, v * dt)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Advances a state by `dt` seconds under a constant control.
///
/// Speed follows the clamped acceleration profile. The position moves along
/// a circular arc whose length is the distance covered and whose turning
/// angle is `yaw_rate_cmd * dt`; with a zero yaw rate the arc degenerates to
/// a straight segment, continuously.
pub fn step(
    state: &KinematicState,
    u: ControlInput,
    limits: &ModeLimits,
    dt: f64,
) -> Result<KinematicState, WorldError> {
    if !dt.is_finite() {
        return Err(WorldError::NonFinite("dt"));
    }
    if dt <= 0.0 {
        return Err(WorldError::BadTimeStep(dt));
    }
    if !(u.accel_cmd.is_finite() && u.yaw_rate_cmd.is_finite()) {
        return Err(WorldError::NonFinite("control"));
    }
    state.validate()?;

    let (speed, dist) = speed_profile(state.speed, u.accel_cmd, limits.v_max, dt);
    let turn = u.yaw_rate_cmd * dt;
    let half = 0.5 * turn;
    let chord = dist * sinc(half);
    let position = state.position + Vec2::from_heading(state.heading + half) * chord;

    let next = KinematicState {
        position,
        heading: normalize_angle(state.heading + turn),
        speed: speed.clamp(0.0, limits.v_max),
        yaw_rate: u.yaw_rate_cmd,
        accel: u.accel_cmd,
    };
    if !next.position.is_finite() {
        return Err(WorldError::NonFinite("position"));
    }
    Ok(next)
}
