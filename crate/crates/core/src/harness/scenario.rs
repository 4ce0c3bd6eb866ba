use serde::{Deserialize, Serialize};

use crate::netsim::ChannelProfile;
use crate::sensing::{CueNoise, ImuBias, ImuNoise, DEFAULT_SIGMA_GPS};
use crate::world::{KinematicState, Maneuver, TransportMode};
use crate::Vec2;

use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_tick() -> f64 {
    0.1
}
fn default_profile() -> String {
    "default".to_string()
}
fn default_name() -> String {
    "unnamed".to_string()
}
fn default_warmup() -> f64 {
    10.0
}
pub(crate) const DEFAULT_WARMUP: f64 = 10.0;
fn one() -> f64 {
    1.0
}
fn default_reaction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    /// Simulated time, seconds.
    pub duration: f64,
    #[serde(default = "default_tick")]
    pub tick: f64,
    #[serde(default = "default_profile")]
    pub channel_profile: String,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub toggles: Toggles,
    #[serde(default)]
    pub periods: Periods,
    /// Sensing pre-roll before t = 0 along each agent's initial straight
    /// track, so filters start converged, seconds.
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    pub agents: Vec<AgentSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub tau_imminent: f64,
    pub p_min: f64,
    pub t_grace: f64,
    pub horizon: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            tau_imminent: 3.0,
            p_min: 0.05,
            t_grace: 1.0,
            horizon: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Toggles {
    pub advisories: bool,
    pub plausibility: bool,
    pub gaze_suppression: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            advisories: true,
            plausibility: true,
            gaze_suppression: true,
        }
    }
}

/// Sampling periods, seconds. Each must be a whole number of ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Periods {
    pub gps: f64,
    pub imu: f64,
    pub cue: f64,
    pub bsm: f64,
    pub coordinator: f64,
}

impl Default for Periods {
    fn default() -> Self {
        Self {
            gps: 1.0,
            imu: 0.1,
            cue: 0.1,
            bsm: 0.5,
            coordinator: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl InitialState {
    pub fn to_state(self) -> KinematicState {
        KinematicState::new(Vec2::new(self.x, self.y), self.heading, self.speed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineEntry {
    pub start: f64,
    pub maneuver: Maneuver,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorOverrides {
    pub sigma_gps: Option<f64>,
    pub imu_bias: ImuBias,
    pub imu_noise: Option<ImuNoise>,
    pub cue_noise: Option<CueNoise>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u32,
    pub mode: TransportMode,
    pub initial: InitialState,
    #[serde(default)]
    pub timeline: Vec<TimelineEntry>,
    #[serde(default = "one")]
    pub compliance_prob: f64,
    /// Seconds between receiving an advisory and acting on it.
    #[serde(default = "default_reaction")]
    pub reaction_delay: f64,
    #[serde(default)]
    pub sensors: SensorOverrides,
    /// Scripted scene-detection flag reported in every BSM.
    #[serde(default)]
    pub gaze_covers_conflict: bool,
    /// Also emits teleporting BSMs under its own id.
    #[serde(default)]
    pub spoof: bool,
}

impl AgentSpec {
    pub fn new(id: u32, mode: TransportMode, initial: InitialState) -> Self {
        Self {
            id,
            mode,
            initial,
            timeline: Vec::new(),
            compliance_prob: 1.0,
            reaction_delay: default_reaction(),
            sensors: SensorOverrides::default(),
            gaze_covers_conflict: false,
            spoof: false,
        }
    }

    pub fn sigma_gps(&self) -> f64 {
        self.sensors.sigma_gps.unwrap_or(DEFAULT_SIGMA_GPS)
    }

    /// Scripted maneuver in force at time `t`.
    pub fn scripted(&self, t: f64) -> Maneuver {
        self.timeline
            .iter()
            .rev()
            .find(|e| e.start <= t + 1e-9)
            .map_or(Maneuver::MaintainCourse, |e| e.maneuver)
    }
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Whole milliseconds in `secs`, if it is a positive multiple of a millisecond.
pub(crate) fn to_ms(secs: f64) -> Option<u64> {
    let ms = secs * 1000.0;
    (ms.is_finite() && ms >= 0.0 && (ms - ms.round()).abs() < 1e-6).then_some(ms.round() as u64)
}

impl Scenario {
    /// Parses and validates a scenario document. Syntax and type errors carry
    /// the line, column and field path; semantic errors name the field.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            HarnessError::Schema {
                line: inner.line(),
                column: inner.column(),
                path,
                message: inner.to_string(),
            }
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario is plain data")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) || to_ms(self.duration).is_none() {
            return Err(invalid(
                "duration",
                "must be a non-negative whole number of milliseconds",
            ));
        }
        let tick = to_ms(self.tick)
            .filter(|t| *t > 0)
            .ok_or_else(|| invalid("tick", "must be a positive whole number of milliseconds"))?;
        let p = &self.periods;
        for (name, v) in [
            ("periods.gps", p.gps),
            ("periods.imu", p.imu),
            ("periods.cue", p.cue),
            ("periods.bsm", p.bsm),
            ("periods.coordinator", p.coordinator),
        ] {
            match to_ms(v) {
                Some(ms) if ms > 0 && ms % tick == 0 => {}
                _ => {
                    return Err(invalid(
                        name,
                        format!("must be a positive multiple of the tick ({tick} ms)"),
                    ))
                }
            }
        }
        let gps = to_ms(p.gps).unwrap_or(1);
        match to_ms(self.warmup) {
            Some(w) if w % gps == 0 => {}
            _ => return Err(invalid("warmup", "must be a non-negative multiple of the GPS period")),
        }
        if ChannelProfile::by_name(&self.channel_profile).is_none() {
            return Err(invalid(
                "channel_profile",
                format!(
                    "unknown profile {:?}; expected one of {:?}",
                    self.channel_profile,
                    ChannelProfile::NAMES
                ),
            ));
        }
        let t = &self.thresholds;
        if !(t.tau_imminent.is_finite() && t.tau_imminent >= 0.0) {
            return Err(invalid("thresholds.tau_imminent", "must be finite and non-negative"));
        }
        if !(t.p_min > 0.0 && t.p_min <= 1.0) {
            return Err(invalid("thresholds.p_min", "must be in (0, 1]"));
        }
        if !(t.t_grace.is_finite() && t.t_grace > 0.0) {
            return Err(invalid("thresholds.t_grace", "must be positive"));
        }
        if !(t.horizon.is_finite() && t.horizon > 0.0 && t.horizon <= 60.0) {
            return Err(invalid("thresholds.horizon", "must be in (0, 60]"));
        }
        if self.agents.is_empty() {
            return Err(invalid("agents", "at least one agent is required"));
        }
        let mut ids: Vec<u32> = self.agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid("agents", format!("duplicate agent id {}", w[0])));
        }
        for (i, a) in self.agents.iter().enumerate() {
            let f = |name: &str| format!("agents[{i}].{name}");
            let init = a.initial;
            if ![init.x, init.y, init.heading, init.speed].iter().all(|v| v.is_finite()) || init.speed < 0.0 {
                return Err(invalid(f("initial"), "must be finite with non-negative speed"));
            }
            if !(0.0..=1.0).contains(&a.compliance_prob) {
                return Err(invalid(f("compliance_prob"), "must be in [0, 1]"));
            }
            if to_ms(a.reaction_delay).is_none() {
                return Err(invalid(
                    f("reaction_delay"),
                    "must be a non-negative whole number of milliseconds",
                ));
            }
            if a.timeline.iter().any(|e| !(e.start.is_finite() && e.start >= 0.0)) {
                return Err(invalid(f("timeline"), "start times must be finite and non-negative"));
            }
            if a.timeline.windows(2).any(|w| w[1].start <= w[0].start) {
                return Err(invalid(f("timeline"), "start times must be strictly increasing"));
            }
            if a.sensors.sigma_gps.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
                return Err(invalid(f("sensors.sigma_gps"), "must be positive"));
            }
            if let Some(n) = a.sensors.imu_noise {
                if !(n.sigma_accel >= 0.0 && n.sigma_yaw_rate >= 0.0) {
                    return Err(invalid(f("sensors.imu_noise"), "must be non-negative"));
                }
            }
            if let Some(n) = a.sensors.cue_noise {
                if !(n.head_sigma >= 0.0 && n.wrist_sigma >= 0.0 && (0.0..=1.0).contains(&n.decel_flip_prob)) {
                    return Err(invalid(
                        f("sensors.cue_noise"),
                        "sigmas must be non-negative, flip probability in [0, 1]",
                    ));
                }
            }
            if !(a.sensors.imu_bias.accel.is_finite() && a.sensors.imu_bias.yaw_rate.is_finite()) {
                return Err(invalid(f("sensors.imu_bias"), "must be finite"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "schema_version": 1,
  "seed": 3,
  "duration": 10,
  "agents": [
    {"id": 1, "mode": "car", "initial": {"x": 0, "y": 0, "heading": 0, "speed": 10}}
  ]
}"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.tick, 0.1);
        assert_eq!(s.channel_profile, "default");
        assert_eq!(s.agents[0].compliance_prob, 1.0);
        assert!(s.toggles.advisories);
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn unknown_field_reports_line_and_path() {
        let doc = MINIMAL.replace("\"speed\": 10}", "\"speed\": 10, \"colour\": 1}");
        match Scenario::from_json(&doc) {
            Err(HarnessError::Schema {
                line, path, message, ..
            }) => {
                assert_eq!(line, 6);
                assert_eq!(path, "agents[0].initial.colour");
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_error_reports_path() {
        let doc = MINIMAL.replace("\"seed\": 3", "\"seed\": \"three\"");
        match Scenario::from_json(&doc) {
            Err(HarnessError::Schema { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, "seed");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_checks() {
        let cases = [
            (
                MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2"),
                "schema_version",
            ),
            (
                MINIMAL.replace("\"seed\": 3,", "\"seed\": 3, \"tick\": 0.3,"),
                "periods.gps",
            ),
            (
                MINIMAL.replace("\"seed\": 3,", "\"seed\": 3, \"channel_profile\": \"wifi\","),
                "channel_profile",
            ),
            (
                MINIMAL.replace("\"speed\": 10}", "\"speed\": 10}, \"compliance_prob\": 1.5"),
                "agents[0].compliance_prob",
            ),
            (MINIMAL.replace("\"duration\": 10", "\"duration\": -1"), "duration"),
        ];
        for (doc, field) in cases {
            match Scenario::from_json(&doc) {
                Err(HarnessError::Invalid { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: {other:?}"),
            }
        }
    }

    #[test]
    fn duplicate_ids_and_empty_agents_rejected() {
        let mut s = Scenario::from_json(MINIMAL).unwrap();
        s.agents.push(s.agents[0].clone());
        assert!(matches!(s.validate(), Err(HarnessError::Invalid { .. })));
        s.agents.clear();
        assert!(matches!(s.validate(), Err(HarnessError::Invalid { .. })));
    }

    #[test]
    fn timeline_lookup() {
        let mut a = AgentSpec::new(
            1,
            TransportMode::Car,
            InitialState {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
                speed: 1.0,
            },
        );
        a.timeline = vec![
            TimelineEntry {
                start: 2.0,
                maneuver: Maneuver::TurnLeft,
            },
            TimelineEntry {
                start: 4.0,
                maneuver: Maneuver::MaintainCourse,
            },
        ];
        assert_eq!(a.scripted(1.9), Maneuver::MaintainCourse);
        assert_eq!(a.scripted(2.0), Maneuver::TurnLeft);
        assert_eq!(a.scripted(4.5), Maneuver::MaintainCourse);
    }
}
