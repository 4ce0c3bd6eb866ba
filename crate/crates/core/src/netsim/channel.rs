//! Channel latency/loss models and imminence-based channel selection.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::queue::EventQueue;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Bluetooth,
    Cellular,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 2] = [ChannelKind::Bluetooth, ChannelKind::Cellular];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Bluetooth => "bluetooth",
            ChannelKind::Cellular => "cellular",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub kind: ChannelKind,
    pub latency_mean: f64,
    pub latency_std: f64,
    pub latency_floor: f64,
    pub loss_prob: f64,
    /// Meters; `None` is unlimited.
    pub range: Option<f64>,
}

impl Channel {
    pub fn bluetooth() -> Self {
        Self {
            kind: ChannelKind::Bluetooth,
            latency_mean: 30.0,
            latency_std: 10.0,
            latency_floor: 5.0,
            loss_prob: 0.01,
            range: Some(50.0),
        }
    }

    /// Cellular/WiFi class link; also stands in for DSRC.
    pub fn cellular() -> Self {
        Self {
            kind: ChannelKind::Cellular,
            latency_mean: 150.0,
            latency_std: 50.0,
            latency_floor: 20.0,
            loss_prob: 0.02,
            range: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.latency_floor > 0.0
            && self.latency_mean.is_finite()
            && self.latency_std >= 0.0
            && (0.0..=1.0).contains(&self.loss_prob)
            && self.range.is_none_or(|r| r > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Conflicts closer than this (seconds) are imminent.
    pub tau_imminent: f64,
    pub bluetooth_range: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            tau_imminent: 3.0,
            bluetooth_range: 50.0,
        }
    }
}

/// Bluetooth only for an imminent conflict within Bluetooth range.
pub fn select_channel(t_conflict: Option<f64>, distance: f64, cfg: &SelectionConfig) -> ChannelKind {
    match t_conflict {
        Some(t) if t <= cfg.tau_imminent && distance <= cfg.bluetooth_range => ChannelKind::Bluetooth,
        _ => ChannelKind::Cellular,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    Imminence,
    ForceCellular,
    ForceBluetooth,
}

/// A named pair of channel models plus the policy choosing between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub name: String,
    pub bluetooth: Channel,
    pub cellular: Channel,
    pub policy: SelectionPolicy,
}

impl ChannelProfile {
    pub const NAMES: [&'static str; 4] = ["default", "cellular-only", "bluetooth-only", "ideal"];

    pub fn by_name(name: &str) -> Option<Self> {
        let (bluetooth, cellular, policy) = match name {
            "default" => (Channel::bluetooth(), Channel::cellular(), SelectionPolicy::Imminence),
            "cellular-only" => (
                Channel::bluetooth(),
                Channel::cellular(),
                SelectionPolicy::ForceCellular,
            ),
            "bluetooth-only" => (
                Channel::bluetooth(),
                Channel::cellular(),
                SelectionPolicy::ForceBluetooth,
            ),
            "ideal" => {
                let mut bt = Channel::bluetooth();
                let mut cell = Channel::cellular();
                for c in [&mut bt, &mut cell] {
                    c.latency_std = 0.0;
                    c.loss_prob = 0.0;
                }
                (bt, cell, SelectionPolicy::Imminence)
            }
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            bluetooth,
            cellular,
            policy,
        })
    }

    pub fn channel(&self, kind: ChannelKind) -> &Channel {
        match kind {
            ChannelKind::Bluetooth => &self.bluetooth,
            ChannelKind::Cellular => &self.cellular,
        }
    }

    pub fn choose(&self, t_conflict: Option<f64>, distance: f64, cfg: &SelectionConfig) -> ChannelKind {
        match self.policy {
            SelectionPolicy::Imminence => select_channel(t_conflict, distance, cfg),
            SelectionPolicy::ForceCellular => ChannelKind::Cellular,
            SelectionPolicy::ForceBluetooth => ChannelKind::Bluetooth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransmitOutcome {
    Scheduled { due_ms: u64, latency_ms: u64 },
    Dropped,
}

/// Draws loss and latency from `rng` and schedules the delivery.
///
/// Both draws are taken on every call so the stream position depends only on
/// the number of transmissions.
pub fn transmit<P>(
    payload: P,
    channel: &Channel,
    now_ms: u64,
    rng: &mut RngStream,
    queue: &mut EventQueue<P>,
) -> TransmitOutcome {
    let lost = rng.uniform() < channel.loss_prob;
    let jitter = rng.gaussian(channel.latency_std);
    if lost {
        return TransmitOutcome::Dropped;
    }
    let latency = (channel.latency_mean + jitter).max(channel.latency_floor);
    let latency_ms = latency.round().max(channel.latency_floor.ceil()) as u64;
    let due_ms = now_ms + latency_ms;
    queue.schedule(due_ms, payload);
    TransmitOutcome::Scheduled { due_ms, latency_ms }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SelectionConfig {
        SelectionConfig::default()
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_channel(Some(2.0), 30.0, &cfg()), ChannelKind::Bluetooth);
        assert_eq!(select_channel(Some(20.0), 400.0, &cfg()), ChannelKind::Cellular);
        assert_eq!(select_channel(Some(2.0), 200.0, &cfg()), ChannelKind::Cellular);
        assert_eq!(select_channel(None, 1.0, &cfg()), ChannelKind::Cellular);
    }

    #[test]
    fn selection_is_monotone_in_imminence() {
        for d in [0.0, 10.0, 49.9, 50.0] {
            let mut prev = ChannelKind::Cellular;
            for i in (0..100).rev() {
                let k = select_channel(Some(i as f64 * 0.1), d, &cfg());
                assert!(!(prev == ChannelKind::Bluetooth && k == ChannelKind::Cellular));
                prev = k;
            }
        }
    }

    #[test]
    fn degenerate_latency_is_exact() {
        let ch = Channel {
            kind: ChannelKind::Bluetooth,
            latency_mean: 30.0,
            latency_std: 0.0,
            latency_floor: 5.0,
            loss_prob: 0.0,
            range: None,
        };
        let mut q = EventQueue::new();
        let mut rng = RngStream::derive(1, 1, "test");
        let out = transmit((), &ch, 1000, &mut rng, &mut q);
        assert_eq!(
            out,
            TransmitOutcome::Scheduled {
                due_ms: 1030,
                latency_ms: 30
            }
        );
        assert_eq!(q.pop().unwrap().due_ms, 1030);
    }

    #[test]
    fn total_loss_always_drops() {
        let mut ch = Channel::bluetooth();
        ch.loss_prob = 1.0;
        let mut q = EventQueue::new();
        let mut rng = RngStream::derive(1, 1, "test");
        for _ in 0..1000 {
            assert_eq!(transmit((), &ch, 0, &mut rng, &mut q), TransmitOutcome::Dropped);
        }
        assert!(q.is_empty());
    }

    #[test]
    fn latency_never_below_floor() {
        let mut ch = Channel::bluetooth();
        ch.latency_std = 100.0;
        let mut q = EventQueue::new();
        let mut rng = RngStream::derive(2, 1, "test");
        for _ in 0..2000 {
            if let TransmitOutcome::Scheduled { latency_ms, .. } = transmit((), &ch, 0, &mut rng, &mut q) {
                assert!(latency_ms >= 5);
            }
        }
    }

    fn median_latency(ch: &Channel, seed: u64) -> f64 {
        let mut q = EventQueue::new();
        let mut rng = RngStream::derive(seed, 1, "test");
        let mut lat: Vec<u64> = (0..10_000)
            .filter_map(|_| match transmit((), ch, 0, &mut rng, &mut q) {
                TransmitOutcome::Scheduled { latency_ms, .. } => Some(latency_ms),
                TransmitOutcome::Dropped => None,
            })
            .collect();
        lat.sort_unstable();
        lat[lat.len() / 2] as f64
    }

    #[test]
    fn bluetooth_median_well_below_cellular() {
        let bt = median_latency(&Channel::bluetooth(), 9);
        let cell = median_latency(&Channel::cellular(), 9);
        assert!(bt < 0.5 * cell, "bt {bt} cell {cell}");
    }

    #[test]
    fn profiles_resolve_by_name() {
        for n in ChannelProfile::NAMES {
            let p = ChannelProfile::by_name(n).unwrap();
            assert!(p.bluetooth.is_valid() && p.cellular.is_valid());
        }
        assert!(ChannelProfile::by_name("dsrc-5g").is_none());
        let forced = ChannelProfile::by_name("cellular-only").unwrap();
        assert_eq!(forced.choose(Some(0.1), 1.0, &cfg()), ChannelKind::Cellular);
    }
}
