//! Bit-exact little-endian frames for BSMs and advisories.
//!
//! ```text
//! header   magic 0xB5 0x53 | version u8 = 1 | msg_type u8 (0 = BSM, 1 = advisory)
//! BSM      sender u32 | seq u32 | timestamp_ms u64
//!          pos_x i32 cm | pos_y i32 cm | heading u16 (2pi/65536 rad) | speed u16 cm/s
//!          accel i16 cm/s^2 | yaw_rate i16 mrad/s
//!          mode u8 (bits 0-6 mode code, bit 7 gaze-covers-conflict flag)
//!          intent 5 x u16 (probability * 65535, canonical maneuver order)
//!          reach: t0_ms u64 | dt_reach_ms u16 | n_steps u8
//!                 per step: n_discs u8, then per disc cx i32 cm | cy i32 cm | r u16 cm | p u16
//! advisory conflict_id u64 | target u32 | action u8 | issued_at_ms u64
//!          is_reversal u8 | expiry_ms u64
//! trailer  CRC-32 (IEEE) over every preceding byte, u32
//! ```
//!
//! Probability vectors are quantized with a largest-remainder rule so the
//! integers of a vector always sum to exactly 65535.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::intent::{IntentDistribution, DEFAULT_FLOOR};
use crate::reachset::{ReachableSet, WeightedDisc};
use crate::world::{normalize_angle, KinematicState, Maneuver, TransportMode};
use crate::AgentId;

pub const MAGIC: [u8; 2] = [0xB5, 0x53];
pub const VERSION: u8 = 1;
pub const MSG_BSM: u8 = 0;
pub const MSG_ADVISORY: u8 = 1;

pub const HEADER_LEN: usize = 4;
pub const CRC_LEN: usize = 4;
const BSM_FIXED_LEN: usize = 43;
const REACH_HEADER_LEN: usize = 11;
const DISC_LEN: usize = 12;
pub const ADVISORY_LEN: usize = HEADER_LEN + 30 + CRC_LEN;

/// Largest representable |coordinate|, meters.
pub const MAX_COORD: f64 = 20_000.0;
const PROB_SCALE: f64 = 65535.0;
const GAZE_BIT: u8 = 0x80;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated: need {needed} bytes, have {got}")]
    TruncatedFrame { needed: usize, got: usize },
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 2]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("crc mismatch: frame says {expected:#010x}, computed {computed:#010x}")]
    BadCrc { expected: u32, computed: u32 },
    #[error("field out of range: {0}")]
    RangeViolation(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bsm {
    pub sender: AgentId,
    pub seq: u32,
    pub timestamp_ms: u64,
    pub state: KinematicState,
    pub mode: TransportMode,
    /// Scene-detection summary from the smart glasses.
    pub gaze_covers_conflict: bool,
    pub intent: IntentDistribution,
    pub reach: ReachableSet,
}

impl Bsm {
    /// The canonical all-zero message pinned by the golden file.
    pub fn zero() -> Self {
        Bsm {
            sender: AgentId(0),
            seq: 0,
            timestamp_ms: 0,
            state: KinematicState::default(),
            mode: TransportMode::Pedestrian,
            gaze_covers_conflict: false,
            intent: IntentDistribution::uniform(),
            reach: ReachableSet {
                agent: AgentId(0),
                t0: 0.0,
                dt_reach: 0.2,
                steps: vec![vec![WeightedDisc {
                    center: Vec2::ZERO,
                    radius: 0.01,
                    prob: 1.0,
                }]],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advisory {
    pub conflict_id: u64,
    pub target: AgentId,
    pub action: Maneuver,
    pub issued_at_ms: u64,
    pub is_reversal: bool,
    pub expiry_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Bsm(Bsm),
    Advisory(Advisory),
}

/// Encoded length of a BSM whose reach set has the given per-step disc counts.
pub fn bsm_frame_len(discs_per_step: impl IntoIterator<Item = usize>) -> usize {
    HEADER_LEN
        + BSM_FIXED_LEN
        + REACH_HEADER_LEN
        + discs_per_step.into_iter().map(|n| 1 + n * DISC_LEN).sum::<usize>()
        + CRC_LEN
}

/// Integer probabilities summing to exactly 65535, each at least 1 and
/// within one unit of `p * 65535`.
pub fn quantize_probs(probs: &[f64]) -> Result<Vec<u16>, WireError> {
    if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p > 0.0 && *p <= 1.0)) {
        return Err(WireError::RangeViolation("probability"));
    }
    let scaled: Vec<f64> = probs.iter().map(|p| p * PROB_SCALE).collect();
    let mut q: Vec<i64> = scaled.iter().map(|s| (s.round() as i64).max(1)).collect();
    let mut diff = PROB_SCALE as i64 - q.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..q.len()).collect();
    while diff != 0 {
        if diff > 0 {
            // give to the entries furthest below their exact value
            order.sort_by(|&a, &b| {
                (scaled[b] - q[b] as f64)
                    .total_cmp(&(scaled[a] - q[a] as f64))
                    .then(a.cmp(&b))
            });
            q[order[0]] += 1;
            diff -= 1;
        } else {
            order.sort_by(|&a, &b| {
                (q[b] as f64 - scaled[b])
                    .total_cmp(&(q[a] as f64 - scaled[a]))
                    .then(a.cmp(&b))
            });
            match order.iter().find(|&&i| q[i] > 1) {
                Some(&i) => {
                    q[i] -= 1;
                    diff += 1;
                }
                None => return Err(WireError::RangeViolation("probability vector")),
            }
        }
    }
    q.into_iter()
        .map(|v| u16::try_from(v).map_err(|_| WireError::RangeViolation("probability")))
        .collect()
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(capacity: usize, msg_type: u8) -> Self {
        let mut buf = Vec::with_capacity(capacity);
        buf.extend_from_slice(&MAGIC);
        buf.push(VERSION);
        buf.push(msg_type);
        Self { buf }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i16(&mut self, v: i16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

fn coord_cm(v: f64, field: &'static str) -> Result<i32, WireError> {
    if !v.is_finite() || v.abs() > MAX_COORD {
        return Err(WireError::RangeViolation(field));
    }
    Ok((v * 100.0).round() as i32)
}

fn unsigned_cm(v: f64, field: &'static str) -> Result<u16, WireError> {
    let q = (v * 100.0).round();
    if !q.is_finite() || !(0.0..=u16::MAX as f64).contains(&q) {
        return Err(WireError::RangeViolation(field));
    }
    Ok(q as u16)
}

fn signed_scaled(v: f64, scale: f64, field: &'static str) -> Result<i16, WireError> {
    let q = (v * scale).round();
    if !q.is_finite() || !(i16::MIN as f64..=i16::MAX as f64).contains(&q) {
        return Err(WireError::RangeViolation(field));
    }
    Ok(q as i16)
}

fn heading_units(h: f64) -> Result<u16, WireError> {
    if !h.is_finite() {
        return Err(WireError::RangeViolation("heading"));
    }
    let turns = h.rem_euclid(2.0 * PI) / (2.0 * PI);
    Ok(((turns * 65536.0).round() as u32 % 65536) as u16)
}

fn ms(t: f64, field: &'static str) -> Result<u64, WireError> {
    let q = (t * 1000.0).round();
    if !q.is_finite() || q < 0.0 || q > u64::MAX as f64 {
        return Err(WireError::RangeViolation(field));
    }
    Ok(q as u64)
}

pub fn encode_bsm(b: &Bsm) -> Result<Vec<u8>, WireError> {
    let reach = &b.reach;
    if reach.steps.is_empty() || reach.steps.len() > u8::MAX as usize {
        return Err(WireError::RangeViolation("n_steps"));
    }
    if reach.steps.iter().any(|s| s.is_empty() || s.len() > u8::MAX as usize) {
        return Err(WireError::RangeViolation("n_discs"));
    }
    let len = bsm_frame_len(reach.steps.iter().map(Vec::len));
    let mut w = Writer::new(len, MSG_BSM);
    w.u32(b.sender.0);
    w.u32(b.seq);
    w.u64(b.timestamp_ms);
    w.i32(coord_cm(b.state.position.x, "pos_x")?);
    w.i32(coord_cm(b.state.position.y, "pos_y")?);
    w.u16(heading_units(b.state.heading)?);
    w.u16(unsigned_cm(b.state.speed, "speed")?);
    w.i16(signed_scaled(b.state.accel, 100.0, "accel")?);
    w.i16(signed_scaled(b.state.yaw_rate, 1000.0, "yaw_rate")?);
    w.u8(b.mode.code() | if b.gaze_covers_conflict { GAZE_BIT } else { 0 });
    for q in quantize_probs(b.intent.probs())? {
        w.u16(q);
    }
    w.u64(ms(reach.t0, "reach_t0")?);
    let dt_ms = (reach.dt_reach * 1000.0).round();
    if !(1.0..=u16::MAX as f64).contains(&dt_ms) {
        return Err(WireError::RangeViolation("dt_reach"));
    }
    w.u16(dt_ms as u16);
    w.u8(reach.steps.len() as u8);
    for step in &reach.steps {
        w.u8(step.len() as u8);
        let probs: Vec<f64> = step.iter().map(|d| d.prob).collect();
        let qp = quantize_probs(&probs)?;
        for (d, p) in step.iter().zip(qp) {
            w.i32(coord_cm(d.center.x, "disc_x")?);
            w.i32(coord_cm(d.center.y, "disc_y")?);
            let r = unsigned_cm(d.radius, "disc_radius")?;
            if r == 0 {
                return Err(WireError::RangeViolation("disc_radius"));
            }
            w.u16(r);
            w.u16(p);
        }
    }
    let out = w.finish();
    debug_assert_eq!(out.len(), len);
    Ok(out)
}

pub fn encode_advisory(a: &Advisory) -> Result<Vec<u8>, WireError> {
    if a.expiry_ms <= a.issued_at_ms {
        return Err(WireError::RangeViolation("expiry"));
    }
    let mut w = Writer::new(ADVISORY_LEN, MSG_ADVISORY);
    w.u64(a.conflict_id);
    w.u32(a.target.0);
    w.u8(a.action.index() as u8);
    w.u64(a.issued_at_ms);
    w.u8(a.is_reversal as u8);
    w.u64(a.expiry_ms);
    Ok(w.finish())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let end = self.pos + N;
        if end > self.buf.len() {
            return Err(WireError::TruncatedFrame {
                needed: end + CRC_LEN,
                got: self.buf.len() + CRC_LEN,
            });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn i16(&mut self) -> Result<i16, WireError> {
        Ok(i16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn i32(&mut self) -> Result<i32, WireError> {
        Ok(i32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
}

/// Checks header and CRC; returns the message type and the body between
/// header and trailer.
fn open_frame(bytes: &[u8]) -> Result<(u8, &[u8]), WireError> {
    if bytes.len() < HEADER_LEN + CRC_LEN {
        return Err(WireError::TruncatedFrame {
            needed: HEADER_LEN + CRC_LEN,
            got: bytes.len(),
        });
    }
    if bytes[..2] != MAGIC {
        return Err(WireError::BadMagic([bytes[0], bytes[1]]));
    }
    if bytes[2] != VERSION {
        return Err(WireError::BadVersion(bytes[2]));
    }
    let split = bytes.len() - CRC_LEN;
    let expected = u32::from_le_bytes(bytes[split..].try_into().expect("4-byte trailer"));
    let computed = crc32fast::hash(&bytes[..split]);
    if expected != computed {
        return Err(WireError::BadCrc { expected, computed });
    }
    Ok((bytes[3], &bytes[HEADER_LEN..split]))
}

fn coord(cm: i32, field: &'static str) -> Result<f64, WireError> {
    let v = cm as f64 / 100.0;
    if v.abs() > MAX_COORD {
        return Err(WireError::RangeViolation(field));
    }
    Ok(v)
}

fn dequantize(q: &[u16], field: &'static str) -> Result<Vec<f64>, WireError> {
    if q.iter().map(|v| *v as u64).sum::<u64>() != PROB_SCALE as u64 || q.contains(&0) {
        return Err(WireError::RangeViolation(field));
    }
    Ok(q.iter().map(|v| *v as f64 / PROB_SCALE).collect())
}

fn read_bsm(body: &[u8]) -> Result<Bsm, WireError> {
    let mut r = Reader { buf: body, pos: 0 };
    let sender = AgentId(r.u32()?);
    let seq = r.u32()?;
    let timestamp_ms = r.u64()?;
    let x = coord(r.i32()?, "pos_x")?;
    let y = coord(r.i32()?, "pos_y")?;
    let heading = normalize_angle(r.u16()? as f64 * 2.0 * PI / 65536.0);
    let speed = r.u16()? as f64 / 100.0;
    let accel = r.i16()? as f64 / 100.0;
    let yaw_rate = r.i16()? as f64 / 1000.0;
    let mode_byte = r.u8()?;
    let mode = TransportMode::from_code(mode_byte & !GAZE_BIT).ok_or(WireError::RangeViolation("mode"))?;
    let gaze_covers_conflict = mode_byte & GAZE_BIT != 0;
    let mut iq = [0u16; 5];
    for q in iq.iter_mut() {
        *q = r.u16()?;
    }
    let ip = dequantize(&iq, "intent")?;
    let intent = IntentDistribution::from_probs([ip[0], ip[1], ip[2], ip[3], ip[4]], DEFAULT_FLOOR, 1.0 / PROB_SCALE)
        .map_err(|_| WireError::RangeViolation("intent"))?;

    let t0 = r.u64()? as f64 / 1000.0;
    let dt_ms = r.u16()?;
    if dt_ms == 0 {
        return Err(WireError::RangeViolation("dt_reach"));
    }
    let n_steps = r.u8()?;
    if n_steps == 0 {
        return Err(WireError::RangeViolation("n_steps"));
    }
    let mut steps = Vec::with_capacity(n_steps as usize);
    for _ in 0..n_steps {
        let n_discs = r.u8()?;
        if n_discs == 0 {
            return Err(WireError::RangeViolation("n_discs"));
        }
        let mut raw = Vec::with_capacity(n_discs as usize);
        for _ in 0..n_discs {
            let cx = coord(r.i32()?, "disc_x")?;
            let cy = coord(r.i32()?, "disc_y")?;
            let rad = r.u16()?;
            if rad == 0 {
                return Err(WireError::RangeViolation("disc_radius"));
            }
            raw.push((Vec2::new(cx, cy), rad as f64 / 100.0, r.u16()?));
        }
        let probs = dequantize(&raw.iter().map(|d| d.2).collect::<Vec<_>>(), "disc_prob")?;
        steps.push(
            raw.into_iter()
                .zip(probs)
                .map(|((center, radius, _), prob)| WeightedDisc { center, radius, prob })
                .collect(),
        );
    }
    if r.pos != body.len() {
        return Err(WireError::RangeViolation("frame_length"));
    }
    Ok(Bsm {
        sender,
        seq,
        timestamp_ms,
        state: KinematicState {
            position: Vec2::new(x, y),
            heading,
            speed,
            yaw_rate,
            accel,
        },
        mode,
        gaze_covers_conflict,
        intent,
        reach: ReachableSet {
            agent: sender,
            t0,
            dt_reach: dt_ms as f64 / 1000.0,
            steps,
        },
    })
}

fn read_advisory(body: &[u8]) -> Result<Advisory, WireError> {
    let mut r = Reader { buf: body, pos: 0 };
    let conflict_id = r.u64()?;
    let target = AgentId(r.u32()?);
    let action = Maneuver::from_index(r.u8()? as usize).ok_or(WireError::RangeViolation("action"))?;
    let issued_at_ms = r.u64()?;
    let is_reversal = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(WireError::RangeViolation("is_reversal")),
    };
    let expiry_ms = r.u64()?;
    if r.pos != body.len() {
        return Err(WireError::RangeViolation("frame_length"));
    }
    if expiry_ms <= issued_at_ms {
        return Err(WireError::RangeViolation("expiry"));
    }
    Ok(Advisory {
        conflict_id,
        target,
        action,
        issued_at_ms,
        is_reversal,
        expiry_ms,
    })
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    let (msg_type, body) = open_frame(bytes)?;
    match msg_type {
        MSG_BSM => read_bsm(body).map(Frame::Bsm),
        MSG_ADVISORY => read_advisory(body).map(Frame::Advisory),
        _ => Err(WireError::RangeViolation("msg_type")),
    }
}

pub fn decode_bsm(bytes: &[u8]) -> Result<Bsm, WireError> {
    match decode_frame(bytes)? {
        Frame::Bsm(b) => Ok(b),
        Frame::Advisory(_) => Err(WireError::RangeViolation("msg_type")),
    }
}

pub fn decode_advisory(bytes: &[u8]) -> Result<Advisory, WireError> {
    match decode_frame(bytes)? {
        Frame::Advisory(a) => Ok(a),
        Frame::Bsm(_) => Err(WireError::RangeViolation("msg_type")),
    }
}
