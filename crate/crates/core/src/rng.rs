//! Deterministic, splittable random streams.
//!
//! Every consumer of randomness owns a stream derived from the master seed,
//! an owner id and a purpose tag:
//!
//! ```text
//! key = SHA-256("wearsafe-rng-v1" || seed_le64 || owner_le64 || tag_utf8)
//! stream = ChaCha8(key)
//! ```
//!
//! Owners are agent ids for per-agent streams and [`GLOBAL_OWNER`] for
//! streams that belong to no agent. Adding an agent therefore never shifts
//! the draws seen by any other agent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

/// Owner id used for streams that are not tied to an agent.
pub const GLOBAL_OWNER: u64 = u64::MAX;

/// Named purpose tags. Keeping them in one place keeps the derivation documented.
pub mod tags {
    pub const GPS: &str = "sensor/gps";
    pub const IMU: &str = "sensor/imu";
    pub const CUES: &str = "sensor/cues";
    pub const COMPLIANCE: &str = "human/compliance";
    pub const UPLINK: &str = "net/uplink";
    pub const DOWNLINK: &str = "net/downlink";
    pub const SPOOF: &str = "net/spoof";
}

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn derive(seed: u64, owner: u64, tag: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"wearsafe-rng-v1");
        h.update(seed.to_le_bytes());
        h.update(owner.to_le_bytes());
        h.update(tag.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest[..32]);
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Zero-mean Gaussian draw with the given standard deviation.
    /// A zero `std` still consumes one draw so stream positions do not depend
    /// on noise settings.
    pub fn gaussian(&mut self, std: f64) -> f64 {
        let z: f64 = self.inner.sample(StandardNormal);
        z * std
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }
}
