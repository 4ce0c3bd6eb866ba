//! Simulated wearable sensors and the GPS/IMU fusion filter.
//!
//! Position fusion is a decoupled scalar-gain Kalman filter per axis: the
//! IMU drives the prediction through [`world::step`], GPS fixes correct the
//! position with gain `P / (P + sigma_gps^2)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::rng::RngStream;
use crate::world::{self, ControlInput, KinematicState, Maneuver, ModeLimits, WorldError};

pub const DEFAULT_SIGMA_GPS: f64 = 3.0;
pub const DEFAULT_Q_PROC: f64 = 0.5;
pub const DEFAULT_Q_SPEED: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("fix at t={fix} precedes estimate at t={est}")]
    FixFromPast { fix: f64, est: f64 },
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub time: f64,
    pub measured_position: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub time: f64,
    pub accel_meas: f64,
    pub yaw_rate_meas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CueSample {
    pub time: f64,
    /// Signed, positive to the left.
    pub head_yaw_delta: f64,
    /// In `[-1, 1]`, positive to the left.
    pub wrist_flexion: f64,
    pub decel_cue: bool,
    pub gaze_covers_conflict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedEstimate {
    pub time: f64,
    pub mean: KinematicState,
    pub pos_std: f64,
    pub speed_std: f64,
}

impl FusedEstimate {
    /// Starts a filter from a first fix; heading and speed are taken as known.
    pub fn from_fix(fix: &GpsFix, heading: f64, speed: f64, sigma_gps: f64) -> Self {
        let mut mean = KinematicState::new(fix.measured_position, heading, speed);
        mean.speed = speed.max(0.0);
        Self {
            time: fix.time,
            mean,
            pos_std: sigma_gps.max(1e-3),
            speed_std: 0.5,
        }
    }
}

/// Constant per-agent IMU bias.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuBias {
    #[serde(default)]
    pub accel: f64,
    #[serde(default)]
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImuNoise {
    pub sigma_accel: f64,
    pub sigma_yaw_rate: f64,
}

impl Default for ImuNoise {
    fn default() -> Self {
        Self {
            sigma_accel: 0.05,
            sigma_yaw_rate: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionParams {
    /// Positional process-noise intensity, m^2/s.
    pub q_proc: f64,
    /// Speed process-noise intensity, (m/s)^2/s.
    pub q_speed: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            q_proc: DEFAULT_Q_PROC,
            q_speed: DEFAULT_Q_SPEED,
        }
    }
}

pub fn sample_gps(time: f64, truth: &KinematicState, sigma_gps: f64, rng: &mut RngStream) -> GpsFix {
    let nx = rng.gaussian(sigma_gps);
    let ny = rng.gaussian(sigma_gps);
    GpsFix {
        time,
        measured_position: truth.position + Vec2::new(nx, ny),
    }
}

pub fn sample_imu(
    time: f64,
    true_accel: f64,
    true_yaw_rate: f64,
    bias: &ImuBias,
    noise: &ImuNoise,
    rng: &mut RngStream,
) -> ImuSample {
    let na = rng.gaussian(noise.sigma_accel);
    let nw = rng.gaussian(noise.sigma_yaw_rate);
    ImuSample {
        time,
        accel_meas: true_accel + bias.accel + na,
        yaw_rate_meas: true_yaw_rate + bias.yaw_rate + nw,
    }
}

/// Propagates the estimate with IMU-measured controls.
pub fn fuse_predict(
    est: &FusedEstimate,
    imu: &ImuSample,
    dt: f64,
    limits: &ModeLimits,
    params: &FusionParams,
) -> Result<FusedEstimate, SensingError> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(SensingError::BadTimeStep(dt));
    }
    if !(imu.accel_meas.is_finite() && imu.yaw_rate_meas.is_finite()) {
        return Err(SensingError::NonFinite("imu sample"));
    }
    let u = ControlInput::new(imu.accel_meas, imu.yaw_rate_meas);
    let mean = world::step(&est.mean, u, limits, dt)?;
    Ok(FusedEstimate {
        time: est.time + dt,
        mean,
        pos_std: (est.pos_std * est.pos_std + params.q_proc * dt).sqrt(),
        speed_std: (est.speed_std * est.speed_std + params.q_speed * dt).sqrt(),
    })
}

/// Scalar-gain position correction, applied identically on each axis.
pub fn fuse_update(est: &FusedEstimate, fix: &GpsFix, sigma_gps: f64) -> Result<FusedEstimate, SensingError> {
    if !fix.measured_position.is_finite() || !fix.time.is_finite() {
        return Err(SensingError::NonFinite("gps fix"));
    }
    if sigma_gps.is_nan() {
        return Err(SensingError::NonFinite("sigma_gps"));
    }
    // Tolerate float drift from accumulating dt on the estimate clock.
    if fix.time + 1e-9 < est.time {
        return Err(SensingError::FixFromPast {
            fix: fix.time,
            est: est.time,
        });
    }
    let p = est.pos_std * est.pos_std;
    let g = p / (p + sigma_gps * sigma_gps);
    let mut mean = est.mean;
    mean.position = est.mean.position + (fix.measured_position - est.mean.position) * g;
    Ok(FusedEstimate {
        time: est.time.max(fix.time),
        mean,
        pos_std: est.pos_std * (1.0 - g).sqrt(),
        speed_std: est.speed_std,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueShape {
    pub head_yaw_delta: f64,
    pub wrist_flexion: f64,
    pub decel_cue: bool,
}

/// Body-cue profile per upcoming maneuver, active within `cue_lead` seconds
/// before (and during) the maneuver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueProfile {
    pub cue_lead: f64,
    pub profiles: BTreeMap<Maneuver, CueShape>,
}

pub const CUE_PROFILE_JSON: &str = include_str!("../assets/cue_profile.json");

impl Default for CueProfile {
    fn default() -> Self {
        serde_json::from_str(CUE_PROFILE_JSON).expect("bundled cue profile parses")
    }
}

impl CueProfile {
    fn shape(&self, m: Maneuver) -> CueShape {
        self.profiles.get(&m).copied().unwrap_or(CueShape {
            head_yaw_delta: 0.0,
            wrist_flexion: 0.0,
            decel_cue: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CueNoise {
    pub head_sigma: f64,
    pub wrist_sigma: f64,
    /// Probability of a spurious (or missed) deceleration cue.
    pub decel_flip_prob: f64,
}

impl Default for CueNoise {
    fn default() -> Self {
        Self {
            head_sigma: 0.005,
            wrist_sigma: 0.01,
            decel_flip_prob: 0.01,
        }
    }
}

impl CueNoise {
    pub const OFF: CueNoise = CueNoise {
        head_sigma: 0.0,
        wrist_sigma: 0.0,
        decel_flip_prob: 0.0,
    };
}

/// Generates one cue sample for an agent whose next (or current) maneuver is
/// `intent`, starting `lead_time` seconds from now (0 when already active).
pub fn sample_cues(
    time: f64,
    intent: Maneuver,
    lead_time: f64,
    gaze_covers_conflict: bool,
    profile: &CueProfile,
    noise: &CueNoise,
    rng: &mut RngStream,
) -> CueSample {
    let shape = if lead_time >= 0.0 && lead_time <= profile.cue_lead {
        profile.shape(intent)
    } else {
        profile.shape(Maneuver::MaintainCourse)
    };
    let nh = rng.gaussian(noise.head_sigma);
    let nw = rng.gaussian(noise.wrist_sigma);
    let flip = rng.uniform() < noise.decel_flip_prob;
    CueSample {
        time,
        head_yaw_delta: shape.head_yaw_delta + nh,
        wrist_flexion: (shape.wrist_flexion + nw).clamp(-1.0, 1.0),
        decel_cue: shape.decel_cue ^ flip,
        gaze_covers_conflict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::tags;
    use crate::world::{default_limits, TransportMode};

    fn rng() -> RngStream {
        RngStream::derive(42, 0, tags::GPS)
    }

    #[test]
    fn zero_sigma_gps_is_exact() {
        let truth = KinematicState::new(Vec2::new(12.5, -3.0), 0.2, 4.0);
        let fix = sample_gps(1.0, &truth, 0.0, &mut rng());
        assert_eq!(fix.measured_position, truth.position);
    }

    #[test]
    fn gps_rmse_matches_sigma() {
        let truth = KinematicState::default();
        let mut r = rng();
        let n = 10_000;
        let sq: f64 = (0..n)
            .map(|_| {
                let f = sample_gps(0.0, &truth, 3.0, &mut r);
                f.measured_position.dot(f.measured_position)
            })
            .sum();
        let rmse = (sq / n as f64).sqrt();
        let expected = 3.0 * 2f64.sqrt();
        assert!((rmse - expected).abs() / expected < 0.05, "rmse {rmse}");
    }

    #[test]
    fn gps_is_deterministic() {
        let truth = KinematicState::default();
        let (mut a, mut b) = (rng(), rng());
        for _ in 0..10 {
            assert_eq!(
                sample_gps(0.0, &truth, 3.0, &mut a),
                sample_gps(0.0, &truth, 3.0, &mut b)
            );
        }
    }

    #[test]
    fn imu_bias_and_noise() {
        let mut r = rng();
        let quiet = ImuNoise {
            sigma_accel: 0.0,
            sigma_yaw_rate: 0.0,
        };
        let s = sample_imu(0.0, 1.0, 0.1, &ImuBias::default(), &quiet, &mut r);
        assert_eq!((s.accel_meas, s.yaw_rate_meas), (1.0, 0.1));
        let bias = ImuBias {
            accel: 0.2,
            yaw_rate: 0.0,
        };
        let s = sample_imu(0.0, 1.0, 0.0, &bias, &quiet, &mut r);
        assert!((s.accel_meas - 1.2).abs() < 1e-15);

        let noisy = ImuNoise {
            sigma_accel: 0.1,
            sigma_yaw_rate: 0.1,
        };
        let xs: Vec<f64> = (0..10_000)
            .map(|_| sample_imu(0.0, 0.0, 0.0, &ImuBias::default(), &noisy, &mut r).accel_meas)
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.005, "std {}", var.sqrt());
    }

    fn est(pos_std: f64) -> FusedEstimate {
        FusedEstimate {
            time: 0.0,
            mean: KinematicState::new(Vec2::new(1.0, 2.0), 0.0, 10.0),
            pos_std,
            speed_std: 0.5,
        }
    }

    #[test]
    fn predict_growth_law() {
        let l = default_limits(TransportMode::Car);
        let imu = ImuSample {
            time: 1.0,
            accel_meas: 0.0,
            yaw_rate_meas: 0.0,
        };
        let p = FusionParams {
            q_proc: 0.5,
            q_speed: 0.0,
        };
        let n = fuse_predict(&est(1.0), &imu, 1.0, &l, &p).unwrap();
        assert!((n.pos_std - 1.5f64.sqrt()).abs() < 1e-12);
        let mut cur = est(1.0);
        for _ in 0..20 {
            let next = fuse_predict(&cur, &imu, 0.1, &l, &p).unwrap();
            assert!(next.pos_std > cur.pos_std);
            cur = next;
        }
        assert!(fuse_predict(&cur, &imu, 0.0, &l, &p).is_err());
    }

    #[test]
    fn update_laws() {
        let e = est(2.0);
        let fix = GpsFix {
            time: 0.0,
            measured_position: Vec2::new(5.0, 5.0),
        };
        let n = fuse_update(&e, &fix, 1e9).unwrap();
        assert!(n.mean.position.distance(e.mean.position) < 1e-6);
        assert!((n.pos_std - e.pos_std).abs() < 1e-6);

        let n = fuse_update(&e, &fix, 2.0).unwrap();
        assert!((n.pos_std - 2.0 * 0.5f64.sqrt()).abs() < 1e-12);
        assert!((n.mean.position.x - 3.0).abs() < 1e-12);

        let bad = GpsFix {
            time: 0.0,
            measured_position: Vec2::new(f64::NAN, 0.0),
        };
        assert!(fuse_update(&e, &bad, 3.0).is_err());
        let stale = GpsFix {
            time: -1.0,
            measured_position: Vec2::ZERO,
        };
        assert!(matches!(
            fuse_update(&e, &stale, 3.0),
            Err(SensingError::FixFromPast { .. })
        ));
    }

    #[test]
    fn update_never_increases_std() {
        let mut r = rng();
        for i in 0..200 {
            let prior = 0.05 + (i as f64) * 0.05;
            let sigma = 0.1 + ((i * 7) % 50) as f64 * 0.2;
            let fix = GpsFix {
                time: 0.0,
                measured_position: Vec2::new(r.gaussian(5.0), r.gaussian(5.0)),
            };
            let n = fuse_update(&est(prior), &fix, sigma).unwrap();
            assert!(n.pos_std <= prior.min(sigma) + 1e-12);
        }
    }

    #[test]
    fn cue_profiles() {
        let p = CueProfile::default();
        let mut r = RngStream::derive(1, 1, tags::CUES);
        let c = sample_cues(0.0, Maneuver::MaintainCourse, 0.0, false, &p, &CueNoise::OFF, &mut r);
        assert_eq!((c.head_yaw_delta, c.wrist_flexion, c.decel_cue), (0.0, 0.0, false));

        let l = sample_cues(0.0, Maneuver::TurnLeft, 1.0, false, &p, &CueNoise::OFF, &mut r);
        assert_eq!((l.head_yaw_delta, l.wrist_flexion), (0.3, 0.8));
        let rt = sample_cues(0.0, Maneuver::TurnRight, 1.0, false, &p, &CueNoise::OFF, &mut r);
        assert_eq!((rt.head_yaw_delta, rt.wrist_flexion), (-0.3, -0.8));

        let far = sample_cues(0.0, Maneuver::TurnLeft, 2.0, false, &p, &CueNoise::OFF, &mut r);
        assert_eq!((far.head_yaw_delta, far.wrist_flexion), (0.0, 0.0));
        let b = sample_cues(0.0, Maneuver::Brake, 0.5, true, &p, &CueNoise::OFF, &mut r);
        assert!(b.decel_cue && b.gaze_covers_conflict);
    }

    #[test]
    fn cue_mirror_antisymmetry() {
        let p = CueProfile::default();
        let mut r = RngStream::derive(1, 1, tags::CUES);
        for m in Maneuver::ALL {
            for lead in [0.0, 0.7, 1.5, 3.0] {
                let a = sample_cues(0.0, m, lead, false, &p, &CueNoise::OFF, &mut r);
                let b = sample_cues(0.0, m.mirrored(), lead, false, &p, &CueNoise::OFF, &mut r);
                assert_eq!(a.head_yaw_delta, -b.head_yaw_delta);
                assert_eq!(a.wrist_flexion, -b.wrist_flexion);
                assert_eq!(a.decel_cue, b.decel_cue);
            }
        }
    }

    #[test]
    fn turn_cues_exceed_thresholds_within_lead() {
        let p = CueProfile::default();
        assert_eq!(p.cue_lead, 1.5);
        let mut r = RngStream::derive(3, 1, tags::CUES);
        for i in 0..=15 {
            let lead = i as f64 * 0.1;
            let c = sample_cues(0.0, Maneuver::TurnLeft, lead, false, &p, &CueNoise::OFF, &mut r);
            assert!(c.head_yaw_delta > 0.15 && c.wrist_flexion > 0.5);
        }
    }
}
