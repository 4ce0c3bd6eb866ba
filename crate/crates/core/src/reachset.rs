//! Intent-conditioned reachable sets, pairwise conflict scans and extended
//! time-to-collision.
//!
//! A reachable set holds, for every lookahead step, one disc per maneuver in
//! canonical order. Disc centers follow the unicycle model under that
//! maneuver's control; the radius is the footprint plus a positional
//! uncertainty margin plus linear dispersion growth.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::intent::IntentDistribution;
use crate::sensing::FusedEstimate;
use crate::world::{self, maneuver_to_control, KinematicState, Maneuver, ModeLimits, WorldError};
use crate::AgentId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReachError {
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("dt_reach must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("reachable sets use different grids ({0} vs {1})")]
    MismatchedGrid(f64, f64),
    #[error("reachable set start times differ by {0} s, more than one grid step")]
    SkewTooLarge(f64),
    #[error("malformed reachable set: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedDisc {
    pub center: Vec2,
    pub radius: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachableSet {
    pub agent: AgentId,
    pub t0: f64,
    pub dt_reach: f64,
    pub steps: Vec<Vec<WeightedDisc>>,
}

impl ReachableSet {
    pub fn validate(&self) -> Result<(), ReachError> {
        if !(self.dt_reach.is_finite() && self.dt_reach > 0.0) {
            return Err(ReachError::BadStep(self.dt_reach));
        }
        if self.steps.is_empty() {
            return Err(ReachError::Malformed("no steps"));
        }
        for step in &self.steps {
            if step.is_empty() {
                return Err(ReachError::Malformed("empty step"));
            }
            let mass: f64 = step.iter().map(|d| d.prob).sum();
            if (mass - 1.0).abs() > 1e-9 {
                return Err(ReachError::Malformed("step probabilities do not sum to one"));
            }
            if step
                .iter()
                .any(|d| !(d.radius > 0.0 && d.prob > 0.0 && d.prob <= 1.0 && d.center.is_finite()))
            {
                return Err(ReachError::Malformed("bad disc"));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        (self.steps.len() - 1) as f64 * self.dt_reach
    }

    /// Axis-aligned bounds over every disc of every step: (min, max).
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for d in self.steps.iter().flatten() {
            lo.x = lo.x.min(d.center.x - d.radius);
            lo.y = lo.y.min(d.center.y - d.radius);
            hi.x = hi.x.max(d.center.x + d.radius);
            hi.y = hi.y.max(d.center.y + d.radius);
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachParams {
    pub horizon: f64,
    pub dt_reach: f64,
    /// Radius growth per second of lookahead, m/s.
    pub beta: f64,
    /// Multiplier on the positional standard deviation in the radius.
    pub sigma_scale: f64,
}

impl Default for ReachParams {
    fn default() -> Self {
        Self {
            horizon: 6.0,
            dt_reach: 0.2,
            beta: 0.3,
            sigma_scale: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConflictParams {
    /// Joint probability threshold for a disc pair to count as a conflict.
    pub p_min: f64,
    /// Extra clearance added to the sum of radii, meters.
    pub d_safe: f64,
}

impl Default for ConflictParams {
    fn default() -> Self {
        Self {
            p_min: 0.05,
            d_safe: 0.5,
        }
    }
}

/// Number of lookahead steps after step 0.
pub fn step_count(horizon: f64, dt_reach: f64) -> usize {
    ((horizon / dt_reach) - 1e-9).ceil().max(1.0) as usize
}

pub fn compute_reachable_set(
    agent: AgentId,
    est: &FusedEstimate,
    intent: &IntentDistribution,
    limits: &ModeLimits,
    params: &ReachParams,
) -> Result<ReachableSet, ReachError> {
    if !(params.horizon.is_finite() && params.horizon > 0.0) {
        return Err(ReachError::BadHorizon(params.horizon));
    }
    if !(params.dt_reach.is_finite() && params.dt_reach > 0.0) {
        return Err(ReachError::BadStep(params.dt_reach));
    }
    est.mean.validate()?;
    let n = step_count(params.horizon, params.dt_reach);
    let base_radius = limits.footprint_radius + params.sigma_scale * est.pos_std;

    let mut tracks: Vec<Vec<Vec2>> = Vec::with_capacity(5);
    for m in Maneuver::ALL {
        let u = maneuver_to_control(m, limits);
        let mut s: KinematicState = est.mean;
        let mut centers = Vec::with_capacity(n + 1);
        centers.push(s.position);
        for _ in 0..n {
            s = world::step(&s, u, limits, params.dt_reach)?;
            centers.push(s.position);
        }
        tracks.push(centers);
    }

    let steps = (0..=n)
        .map(|k| {
            let radius = base_radius + params.beta * k as f64 * params.dt_reach;
            Maneuver::ALL
                .iter()
                .map(|m| WeightedDisc {
                    center: tracks[m.index()][k],
                    radius,
                    prob: intent.prob(*m),
                })
                .collect()
        })
        .collect();

    Ok(ReachableSet {
        agent,
        t0: est.time,
        dt_reach: params.dt_reach,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub agent_a: AgentId,
    pub agent_b: AgentId,
    /// Absolute time of the first conflicting step, seconds.
    pub t_first: f64,
    pub prob: f64,
    pub separation_at_t: f64,
}

/// Step offsets that put two sets on a common grid: step `i` of the later
/// set lines up with step `i + shift` of the earlier one.
fn alignment(a: &ReachableSet, b: &ReachableSet) -> Result<(usize, usize, f64), ReachError> {
    if (a.dt_reach - b.dt_reach).abs() > 1e-9 {
        return Err(ReachError::MismatchedGrid(a.dt_reach, b.dt_reach));
    }
    let skew = b.t0 - a.t0;
    if skew.abs() > a.dt_reach + 1e-9 {
        return Err(ReachError::SkewTooLarge(skew.abs()));
    }
    let shift = (skew.abs() / a.dt_reach).round() as usize;
    if skew >= 0.0 {
        Ok((shift, 0, b.t0))
    } else {
        Ok((0, shift, a.t0))
    }
}

/// Earliest step at which some disc pair overlaps (with `d_safe` clearance)
/// and carries joint probability of at least `p_min`. Among qualifying pairs
/// at that step the most probable wins.
pub fn conflict_scan(
    a: &ReachableSet,
    b: &ReachableSet,
    params: &ConflictParams,
) -> Result<Option<Conflict>, ReachError> {
    // Iterate in canonical agent order so scan(a, b) == scan(b, a).
    let (a, b) = if b.agent < a.agent { (b, a) } else { (a, b) };
    let (off_a, off_b, t_ref) = alignment(a, b)?;
    let len = (a.steps.len().saturating_sub(off_a)).min(b.steps.len().saturating_sub(off_b));
    for k in 0..len {
        let sa = &a.steps[k + off_a];
        let sb = &b.steps[k + off_b];
        let mut best: Option<(f64, f64)> = None;
        for da in sa {
            for db in sb {
                let joint = da.prob * db.prob;
                if joint < params.p_min {
                    continue;
                }
                let sep = da.center.distance(db.center);
                if sep < da.radius + db.radius + params.d_safe && best.is_none_or(|(p, _)| joint > p) {
                    best = Some((joint, sep));
                }
            }
        }
        if let Some((prob, sep)) = best {
            return Ok(Some(Conflict {
                agent_a: a.agent,
                agent_b: b.agent,
                t_first: t_ref + k as f64 * a.dt_reach,
                prob,
                separation_at_t: sep,
            }));
        }
    }
    Ok(None)
}

/// Time until two straight-line extrapolated footprints touch, measured
/// along the line of sight. `None` when the pair is not closing.
pub fn extended_ttc(sa: &KinematicState, sb: &KinematicState, ra: f64, rb: f64) -> Option<f64> {
    let d = sb.position - sa.position;
    let dist = d.norm();
    let v = sb.velocity() - sa.velocity();
    if dist == 0.0 {
        return Some(0.0);
    }
    let closing = -d.dot(v) / dist;
    if closing <= 0.0 {
        return None;
    }
    Some(((dist - (ra + rb)) / closing).max(0.0))
}

/// Area covered at each step by the discs that carry at least `p_min` of
/// probability (the only discs that can take part in a conflict), summed
/// over steps. Intent concentration drops discs from the union, so the
/// measure falls as the distribution sharpens.
pub fn weighted_area(set: &ReachableSet, p_min: f64) -> f64 {
    set.steps
        .iter()
        .map(|step| {
            let live: Vec<(Vec2, f64)> = step
                .iter()
                .filter(|d| d.prob >= p_min)
                .map(|d| (d.center, d.radius))
                .collect();
            union_area(&live)
        })
        .sum()
}

/// Exact area of a union of circles by integrating the uncovered boundary
/// arcs (Green's theorem).
pub fn union_area(circles: &[(Vec2, f64)]) -> f64 {
    let n = circles.len();
    let mut area = 0.0;
    for i in 0..n {
        let (ci, ri) = circles[i];
        if ri <= 0.0 {
            continue;
        }
        let mut swallowed = false;
        let mut covered: Vec<(f64, f64)> = Vec::new();
        for (j, &(cj, rj)) in circles.iter().enumerate() {
            if i == j || rj <= 0.0 {
                continue;
            }
            let d = ci.distance(cj);
            // identical circles: keep only the lowest index
            if d < 1e-12 && (ri - rj).abs() < 1e-12 {
                if j < i {
                    swallowed = true;
                    break;
                }
                continue;
            }
            if d + ri <= rj {
                swallowed = true;
                break;
            }
            if d >= ri + rj || d + rj <= ri {
                continue;
            }
            let phi = (cj.y - ci.y).atan2(cj.x - ci.x);
            let cos_a = ((ri * ri + d * d - rj * rj) / (2.0 * ri * d)).clamp(-1.0, 1.0);
            let alpha = cos_a.acos();
            let (mut lo, mut hi) = (phi - alpha, phi + alpha);
            // normalize into [-pi, pi), splitting wrapped intervals
            while lo < -PI {
                lo += 2.0 * PI;
                hi += 2.0 * PI;
            }
            while lo >= PI {
                lo -= 2.0 * PI;
                hi -= 2.0 * PI;
            }
            if hi > PI {
                covered.push((lo, PI));
                covered.push((-PI, hi - 2.0 * PI));
            } else {
                covered.push((lo, hi));
            }
        }
        if swallowed {
            continue;
        }
        covered.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut cursor = -PI;
        let arc = |t1: f64, t2: f64| {
            0.5 * (ri * ri * (t2 - t1) + ri * (ci.x * (t2.sin() - t1.sin()) - ci.y * (t2.cos() - t1.cos())))
        };
        for (lo, hi) in covered {
            if lo > cursor {
                area += arc(cursor, lo);
            }
            cursor = cursor.max(hi);
        }
        if cursor < PI {
            area += arc(cursor, PI);
        }
    }
    area
}
