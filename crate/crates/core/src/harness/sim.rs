use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::coordinator::{Coordinator, CoordinatorConfig, CoordinatorEvent};
use crate::intent::{estimate_intent, CueWindow, IntentDistribution, IntentWeights};
use crate::netsim::{
    decode_advisory, encode_advisory, encode_bsm, transmit, Advisory, Bsm, ChannelKind, ChannelProfile, EventQueue,
    SelectionPolicy, TransmitOutcome,
};
use crate::reachset::{compute_reachable_set, ReachParams};
use crate::rng::{tags, RngStream};
use crate::sensing::{
    fuse_predict, fuse_update, sample_cues, sample_gps, sample_imu, CueNoise, CueProfile, FusedEstimate, FusionParams,
    ImuNoise,
};
use crate::world::{self, default_limits, maneuver_to_control, KinematicState, Maneuver, ModeLimits, TransportMode};
use crate::{AgentId, Vec2};

use super::metrics::{MetricsAccumulator, RunMetrics};
use super::scenario::{to_ms, AgentSpec, Scenario};
use super::trace::{AgentInfo, MsgKind, TraceRecord};
use super::HarnessError;

/// Time the coordinator spends handling one incoming message, ms.
pub const HANDLING_MS: u64 = 5;
/// Spoofers start lying at this time, ms.
pub const SPOOF_START_MS: u64 = 1000;
/// Distance ahead of the victim at which spoofed positions are placed, m.
pub const SPOOF_AHEAD: f64 = 15.0;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Emit a coordinator state dump after every coordinator tick.
    pub dump_coordinator: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// Trace lines without terminators.
    pub trace: Vec<String>,
    /// Every record ever opened by the coordinator, for invariant checks.
    pub records: Vec<crate::coordinator::ConflictRecord>,
}

impl RunOutput {
    pub fn trace_text(&self) -> String {
        let mut s = String::new();
        for l in &self.trace {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    pub fn trace_sha256(&self) -> String {
        let d = Sha256::digest(self.trace_text().as_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes `trace.jsonl`, `summary.json` and `summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join("trace.jsonl"), self.trace_text()).map_err(io)?;
        let json = serde_json::to_string_pretty(&self.metrics).expect("metrics are plain data");
        fs::write(dir.join("summary.json"), json + "\n").map_err(io)?;
        fs::write(dir.join("summary.csv"), self.metrics.csv()).map_err(io)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Payload {
    AgentTick(usize),
    CoordTick,
    Deliver(Box<InFlight>),
    Apply { agent: usize, advisory: Advisory },
}

#[derive(Debug, Clone)]
struct InFlight {
    msg: u64,
    kind: MsgKind,
    /// Agent index: sender for uplink, target for downlink.
    agent: usize,
    channel: ChannelKind,
    sent_ms: u64,
    bytes: Vec<u8>,
}

struct Agent {
    spec: AgentSpec,
    id: AgentId,
    limits: ModeLimits,
    truth: KinematicState,
    last_maneuver: Maneuver,
    est: Option<FusedEstimate>,
    window: CueWindow,
    intent: IntentDistribution,
    seq: u32,
    advised: Option<Advisory>,
    uplink_hint: Option<(ChannelKind, u64)>,
    imu_noise: ImuNoise,
    cue_noise: CueNoise,
    rng_gps: RngStream,
    rng_imu: RngStream,
    rng_cues: RngStream,
    rng_comp: RngStream,
    rng_up: RngStream,
    rng_down: RngStream,
    rng_spoof: RngStream,
}

impl Agent {
    fn new(spec: &AgentSpec, seed: u64) -> Self {
        let owner = spec.id as u64;
        let s = |tag| RngStream::derive(seed, owner, tag);
        Self {
            id: AgentId(spec.id),
            limits: default_limits(spec.mode),
            truth: spec.initial.to_state(),
            last_maneuver: Maneuver::MaintainCourse,
            est: None,
            window: CueWindow::default(),
            intent: IntentDistribution::uniform(),
            seq: 0,
            advised: None,
            uplink_hint: None,
            imu_noise: spec.sensors.imu_noise.unwrap_or_default(),
            cue_noise: spec.sensors.cue_noise.unwrap_or_default(),
            rng_gps: s(tags::GPS),
            rng_imu: s(tags::IMU),
            rng_cues: s(tags::CUES),
            rng_comp: s(tags::COMPLIANCE),
            rng_up: s(tags::UPLINK),
            rng_down: s(tags::DOWNLINK),
            rng_spoof: s(tags::SPOOF),
            spec: spec.clone(),
        }
    }

    /// IMU prediction and GPS correction due at `t_ms` against the current
    /// ground truth. The first fix initializes the filter.
    fn sense(&mut self, t_ms: i64, imu_ms: u64, gps_ms: u64, fusion: &FusionParams) -> Result<(), HarnessError> {
        let t = t_ms as f64 / 1000.0;
        if let Some(est) = self.est {
            if t_ms.rem_euclid(imu_ms as i64) == 0 && est.time + 1e-9 < t {
                let bias = self.spec.sensors.imu_bias;
                let imu = sample_imu(
                    t,
                    self.truth.accel,
                    self.truth.yaw_rate,
                    &bias,
                    &self.imu_noise,
                    &mut self.rng_imu,
                );
                let mut next = fuse_predict(&est, &imu, t - est.time, &self.limits, fusion).map_err(fault)?;
                next.time = t;
                self.est = Some(next);
            }
        }
        if t_ms.rem_euclid(gps_ms as i64) == 0 {
            let sigma = self.spec.sigma_gps();
            let fix = sample_gps(t, &self.truth, sigma, &mut self.rng_gps);
            self.est = Some(match self.est {
                None => FusedEstimate::from_fix(&fix, self.truth.heading, self.truth.speed, sigma),
                Some(e) => fuse_update(&e, &fix, sigma).map_err(fault)?,
            });
        }
        Ok(())
    }

    /// Runs the sensors over `warmup_ms` of constant-velocity motion ending
    /// at the initial state, then restores the initial ground truth.
    fn warm_up(
        &mut self,
        warmup_ms: u64,
        tick_ms: u64,
        imu_ms: u64,
        gps_ms: u64,
        fusion: &FusionParams,
    ) -> Result<(), HarnessError> {
        let start = self.spec.initial.to_state();
        let mut t_ms = -(warmup_ms as i64);
        while t_ms < 0 {
            let mut s = start;
            s.position = start.position + start.velocity() * (t_ms as f64 / 1000.0);
            self.truth = s;
            self.sense(t_ms, imu_ms, gps_ms, fusion)?;
            t_ms += tick_ms as i64;
        }
        self.truth = start;
        Ok(())
    }

    fn advised_at(&self, t_ms: u64) -> Option<&Advisory> {
        self.advised.as_ref().filter(|a| t_ms < a.expiry_ms)
    }

    fn maneuver_at(&self, t_ms: u64) -> Maneuver {
        match self.advised_at(t_ms) {
            Some(a) => a.action,
            None => self.spec.scripted(t_ms as f64 / 1000.0),
        }
    }

    /// Maneuver the body cues announce at `t_ms` and its lead time.
    fn cue_target(&self, t_ms: u64, cue_lead: f64) -> (Maneuver, f64) {
        let t = t_ms as f64 / 1000.0;
        let now = self.maneuver_at(t_ms);
        if now != Maneuver::MaintainCourse || self.advised_at(t_ms).is_some() {
            return (now, 0.0);
        }
        match self.spec.timeline.iter().find(|e| e.start > t + 1e-9) {
            Some(e) if e.maneuver != Maneuver::MaintainCourse && e.start - t <= cue_lead => (e.maneuver, e.start - t),
            _ => (Maneuver::MaintainCourse, 0.0),
        }
    }
}

struct Sim<'a> {
    scenario: &'a Scenario,
    opts: RunOptions,
    profile: ChannelProfile,
    reach: ReachParams,
    fusion: FusionParams,
    cues: CueProfile,
    weights: IntentWeights,
    tick_ms: u64,
    gps_ms: u64,
    imu_ms: u64,
    cue_ms: u64,
    bsm_ms: u64,
    coord_ms: u64,
    agents: Vec<Agent>,
    coordinator: Coordinator,
    queue: EventQueue<Payload>,
    next_msg: u64,
    contact: std::collections::BTreeSet<(usize, usize)>,
    trace: Vec<String>,
    acc: MetricsAccumulator,
}

fn ms(secs: f64) -> u64 {
    to_ms(secs).unwrap_or_else(|| (secs * 1000.0).round().max(0.0) as u64)
}

fn fault(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

impl<'a> Sim<'a> {
    fn new(s: &'a Scenario, opts: RunOptions) -> Result<Self, HarnessError> {
        s.validate()?;
        let mut cfg = CoordinatorConfig::default();
        cfg.reach.horizon = s.thresholds.horizon;
        cfg.verify_horizon = 2.0 * s.thresholds.horizon;
        cfg.conflict.p_min = s.thresholds.p_min;
        cfg.t_grace = s.thresholds.t_grace;
        cfg.selection.tau_imminent = s.thresholds.tau_imminent;
        cfg.advisories = s.toggles.advisories;
        cfg.plausibility = s.toggles.plausibility;
        cfg.gaze_suppression = s.toggles.gaze_suppression;
        let reach = cfg.reach;
        let mut specs = s.agents.clone();
        specs.sort_by_key(|a| a.id);
        Ok(Self {
            scenario: s,
            opts,
            profile: ChannelProfile::by_name(&s.channel_profile).expect("validated profile"),
            reach,
            fusion: FusionParams::default(),
            cues: CueProfile::default(),
            weights: IntentWeights::default(),
            tick_ms: ms(s.tick),
            gps_ms: ms(s.periods.gps),
            imu_ms: ms(s.periods.imu),
            cue_ms: ms(s.periods.cue),
            bsm_ms: ms(s.periods.bsm),
            coord_ms: ms(s.periods.coordinator),
            agents: specs.iter().map(|a| Agent::new(a, s.seed)).collect(),
            coordinator: Coordinator::new(cfg),
            queue: EventQueue::new(),
            next_msg: 0,
            contact: Default::default(),
            trace: Vec::new(),
            acc: MetricsAccumulator::new(),
        })
    }

    fn emit(&mut self, rec: TraceRecord) {
        self.acc.push(&rec);
        self.trace.push(rec.to_line());
    }

    #[allow(clippy::too_many_arguments)]
    fn send(
        &mut self,
        now: u64,
        kind: MsgKind,
        agent: usize,
        channel: ChannelKind,
        bytes: Vec<u8>,
        seq: Option<u32>,
        extra_ms: u64,
    ) {
        let msg = self.next_msg;
        self.next_msg += 1;
        let len = bytes.len();
        let ch = *self.profile.channel(channel);
        let flight = InFlight {
            msg,
            kind,
            agent,
            channel,
            sent_ms: now,
            bytes,
        };
        let a = &mut self.agents[agent];
        let rng = match kind {
            MsgKind::Bsm => &mut a.rng_up,
            MsgKind::Spoof => &mut a.rng_spoof,
            MsgKind::Advisory => &mut a.rng_down,
        };
        let outcome = transmit(
            Payload::Deliver(Box::new(flight)),
            &ch,
            now + extra_ms,
            rng,
            &mut self.queue,
        );
        let (dropped, due) = match outcome {
            TransmitOutcome::Dropped => (true, None),
            TransmitOutcome::Scheduled { due_ms, .. } => (false, Some(due_ms)),
        };
        let agent_id = self.agents[agent].id;
        self.emit(TraceRecord::Send {
            t: now,
            msg,
            kind,
            agent: agent_id,
            channel,
            bytes: len,
            seq,
            dropped,
            due,
        });
    }

    fn uplink_channel(&self, a: &Agent, now: u64) -> ChannelKind {
        match self.profile.policy {
            SelectionPolicy::ForceCellular => ChannelKind::Cellular,
            SelectionPolicy::ForceBluetooth => ChannelKind::Bluetooth,
            SelectionPolicy::Imminence => match a.uplink_hint {
                Some((kind, until)) if now < until => kind,
                _ => ChannelKind::Cellular,
            },
        }
    }

    fn agent_tick(&mut self, i: usize, now: u64) -> Result<(), HarnessError> {
        let tick_s = self.tick_ms as f64 / 1000.0;
        let t = now as f64 / 1000.0;
        {
            let a = &mut self.agents[i];
            if now > 0 {
                let m = a.maneuver_at(now - self.tick_ms);
                a.truth = world::step(&a.truth, maneuver_to_control(m, &a.limits), &a.limits, tick_s).map_err(fault)?;
                a.last_maneuver = m;
            }
            a.sense(now as i64, self.imu_ms, self.gps_ms, &self.fusion)?;
            if now.is_multiple_of(self.cue_ms) {
                let (m, lead) = a.cue_target(now, self.cues.cue_lead);
                let c = sample_cues(
                    t,
                    m,
                    lead,
                    a.spec.gaze_covers_conflict,
                    &self.cues,
                    &a.cue_noise,
                    &mut a.rng_cues,
                );
                a.window.push(c, self.weights.window).map_err(fault)?;
                if let Some(est) = a.est {
                    a.intent = estimate_intent(&a.window, &est).map_err(fault)?;
                }
            }
        }

        if now.is_multiple_of(self.bsm_ms) {
            if let Some(est) = self.agents[i].est {
                let a = &mut self.agents[i];
                let reach = compute_reachable_set(a.id, &est, &a.intent, &a.limits, &self.reach).map_err(fault)?;
                a.seq = a.seq.wrapping_add(1);
                let bsm = Bsm {
                    sender: a.id,
                    seq: a.seq,
                    timestamp_ms: now,
                    state: est.mean,
                    mode: a.spec.mode,
                    gaze_covers_conflict: a.spec.gaze_covers_conflict,
                    intent: a.intent,
                    reach,
                };
                let seq = a.seq;
                let bytes = encode_bsm(&bsm).map_err(fault)?;
                let ch = self.uplink_channel(&self.agents[i], now);
                self.send(now, MsgKind::Bsm, i, ch, bytes, Some(seq), HANDLING_MS);
                if self.agents[i].spec.spoof && now >= SPOOF_START_MS {
                    self.spoof(i, now)?;
                }
            }
        }

        let a = &self.agents[i];
        let est = a.est.expect("initialized by the first fix at t = 0");
        let rec = TraceRecord::Truth {
            t: now,
            agent: a.id,
            x: a.truth.position.x,
            y: a.truth.position.y,
            heading: a.truth.heading,
            speed: a.truth.speed,
            maneuver: a.last_maneuver,
            est_x: est.mean.position.x,
            est_y: est.mean.position.y,
            pos_std: est.pos_std,
            intent: a.intent.argmax(),
            intent_p: a.intent.max_prob(),
        };
        self.emit(rec);
        if i + 1 == self.agents.len() {
            self.contacts(now);
        }
        Ok(())
    }

    /// A fabricated BSM under the spoofer's own id placing it head-on in
    /// front of the nearest other agent.
    fn spoof(&mut self, i: usize, now: u64) -> Result<(), HarnessError> {
        let me = self.agents[i].truth.position;
        let victim = self
            .agents
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .min_by(|(_, x), (_, y)| x.truth.position.distance(me).total_cmp(&y.truth.position.distance(me)))
            .map(|(_, v)| v.truth);
        let Some(victim) = victim else {
            return Ok(());
        };
        let a = &mut self.agents[i];
        let jitter = Vec2::new(a.rng_spoof.gaussian(1.0), a.rng_spoof.gaussian(1.0));
        let pos = victim.position + Vec2::from_heading(victim.heading) * SPOOF_AHEAD + jitter;
        let claimed_mode = TransportMode::Car;
        let limits = default_limits(claimed_mode);
        let state = KinematicState::new(pos, victim.heading + std::f64::consts::PI, 8.0);
        let est = FusedEstimate {
            time: now as f64 / 1000.0,
            mean: state,
            pos_std: 1.0,
            speed_std: 0.1,
        };
        let intent = IntentDistribution::concentrated(Maneuver::MaintainCourse, self.weights.floor);
        let reach = compute_reachable_set(a.id, &est, &intent, &limits, &self.reach).map_err(fault)?;
        a.seq = a.seq.wrapping_add(1);
        let bsm = Bsm {
            sender: a.id,
            seq: a.seq,
            timestamp_ms: now,
            state,
            mode: claimed_mode,
            gaze_covers_conflict: false,
            intent,
            reach,
        };
        let seq = a.seq;
        let bytes = encode_bsm(&bsm).map_err(fault)?;
        self.send(
            now,
            MsgKind::Spoof,
            i,
            ChannelKind::Cellular,
            bytes,
            Some(seq),
            HANDLING_MS,
        );
        Ok(())
    }

    fn contacts(&mut self, now: u64) {
        let n = self.agents.len();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&self.agents[i], &self.agents[j]);
                let gap =
                    a.truth.position.distance(b.truth.position) - a.limits.footprint_radius - b.limits.footprint_radius;
                let touching = gap < 0.0;
                let was = self.contact.contains(&(i, j));
                if touching && !was {
                    let (ida, idb) = (a.id, b.id);
                    self.contact.insert((i, j));
                    self.emit(TraceRecord::Contact { t: now, a: ida, b: idb });
                } else if !touching && was {
                    self.contact.remove(&(i, j));
                }
            }
        }
    }

    fn coord_tick(&mut self, now: u64) -> Result<(), HarnessError> {
        let events = self.coordinator.tick(now);
        for ev in events {
            if let CoordinatorEvent::SendAdvisory {
                advisory,
                t_conflict,
                distance,
                ..
            } = &ev
            {
                let target = self
                    .agents
                    .iter()
                    .position(|a| a.id == advisory.target)
                    .ok_or_else(|| fault(format!("advisory for unknown agent {}", advisory.target)))?;
                let ch = self
                    .profile
                    .choose(Some(*t_conflict), *distance, &self.coordinator.config().selection);
                let bytes = encode_advisory(advisory).map_err(fault)?;
                self.emit(TraceRecord::Coord {
                    t: now,
                    event: ev.clone(),
                });
                self.send(now, MsgKind::Advisory, target, ch, bytes, None, 0);
            } else {
                self.emit(TraceRecord::Coord { t: now, event: ev });
            }
        }
        if self.opts.dump_coordinator {
            let state = self.coordinator.state_dump(now);
            self.emit(TraceRecord::Dump { t: now, state });
        }
        Ok(())
    }

    fn deliver(&mut self, f: InFlight, now: u64, process: bool) -> Result<(), HarnessError> {
        let id = self.agents[f.agent].id;
        self.emit(TraceRecord::Deliver {
            t: now,
            msg: f.msg,
            kind: f.kind,
            agent: id,
            channel: f.channel,
            latency_ms: now - f.sent_ms,
        });
        if !process {
            return Ok(());
        }
        match f.kind {
            MsgKind::Bsm | MsgKind::Spoof => {
                let ev = self.coordinator.ingest_frame(&f.bytes, now);
                self.emit(TraceRecord::Coord { t: now, event: ev });
            }
            MsgKind::Advisory => {
                let adv = decode_advisory(&f.bytes).map_err(fault)?;
                let reaction = ms(self.agents[f.agent].spec.reaction_delay);
                let a = &mut self.agents[f.agent];
                let complied = a.rng_comp.uniform() < a.spec.compliance_prob;
                a.uplink_hint = Some((f.channel, adv.expiry_ms));
                self.emit(TraceRecord::Advice {
                    t: now,
                    agent: id,
                    conflict_id: adv.conflict_id,
                    action: adv.action,
                    is_reversal: adv.is_reversal,
                    expiry_ms: adv.expiry_ms,
                    complied,
                });
                if complied {
                    self.queue.schedule(
                        now + reaction,
                        Payload::Apply {
                            agent: f.agent,
                            advisory: adv,
                        },
                    );
                }
            }
        }
        Ok(())
    }

    fn run(mut self) -> Result<RunOutput, HarnessError> {
        let s = self.scenario;
        let duration_ms = ms(s.duration);
        self.emit(TraceRecord::Header {
            scenario: s.name.clone(),
            seed: s.seed,
            duration_ms,
            tick_ms: self.tick_ms,
            channel_profile: s.channel_profile.clone(),
            toggles: s.toggles,
            agents: self
                .agents
                .iter()
                .map(|a| AgentInfo {
                    id: a.id,
                    mode: a.spec.mode,
                    footprint: a.limits.footprint_radius,
                })
                .collect(),
        });
        let warmup_ms = ms(s.warmup);
        for a in &mut self.agents {
            a.warm_up(warmup_ms, self.tick_ms, self.imu_ms, self.gps_ms, &self.fusion)?;
        }
        for i in 0..self.agents.len() {
            self.queue.schedule(0, Payload::AgentTick(i));
        }
        self.queue.schedule(0, Payload::CoordTick);

        while self.queue.peek_due().is_some_and(|d| d < duration_ms) {
            let ev = self.queue.pop().map_err(fault)?;
            let now = ev.due_ms;
            match ev.payload {
                Payload::AgentTick(i) => {
                    self.agent_tick(i, now)?;
                    self.queue.schedule(now + self.tick_ms, Payload::AgentTick(i));
                }
                Payload::CoordTick => {
                    self.coord_tick(now)?;
                    self.queue.schedule(now + self.coord_ms, Payload::CoordTick);
                }
                Payload::Deliver(f) => self.deliver(*f, now, true)?,
                Payload::Apply { agent, advisory } => {
                    let a = &mut self.agents[agent];
                    a.advised = Some(advisory);
                    let id = a.id;
                    self.emit(TraceRecord::Applied {
                        t: now,
                        agent: id,
                        conflict_id: advisory.conflict_id,
                        action: advisory.action,
                        expiry_ms: advisory.expiry_ms,
                    });
                }
            }
        }
        // Messages still in flight are delivered but not acted upon, so every
        // sent message ends up either delivered or dropped.
        while let Ok(ev) = self.queue.pop() {
            if let Payload::Deliver(f) = ev.payload {
                self.deliver(*f, ev.due_ms, false)?;
            }
        }

        let records = self.coordinator.records().cloned().collect();
        Ok(RunOutput {
            metrics: self.acc.finish(),
            trace: self.trace,
            records,
        })
    }
}

/// Runs one scenario to completion.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutput, HarnessError> {
    Sim::new(scenario, *opts)?.run()
}
