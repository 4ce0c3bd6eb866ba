use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::netsim::Bsm;
use crate::reachset::ReachableSet;
use crate::AgentId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub bsm: Bsm,
    pub arrival_ms: u64,
}

impl RegistryEntry {
    pub fn reach(&self) -> &ReachableSet {
        &self.bsm.reach
    }
}

/// The live registry: one entry per agent holding its newest accepted BSM.
///
/// A short window of earlier accepted BSMs is kept alongside. It is used for
/// compliance checks and to find a time-aligned partner set when two agents'
/// newest sets are more than one grid step apart.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Registry {
    live: BTreeMap<AgentId, RegistryEntry>,
    history: BTreeMap<AgentId, VecDeque<RegistryEntry>>,
    keep_ms: u64,
}

impl Registry {
    pub fn new(keep_ms: u64) -> Self {
        Self {
            keep_ms,
            ..Self::default()
        }
    }

    pub fn insert(&mut self, bsm: Bsm, arrival_ms: u64) {
        let id = bsm.sender;
        let newest = bsm.timestamp_ms;
        let entry = RegistryEntry { bsm, arrival_ms };
        let hist = self.history.entry(id).or_default();
        hist.push_back(entry.clone());
        while hist.front().is_some_and(|e| e.bsm.timestamp_ms + self.keep_ms < newest) {
            hist.pop_front();
        }
        self.live.insert(id, entry);
    }

    pub fn latest(&self, id: AgentId) -> Option<&RegistryEntry> {
        self.live.get(&id)
    }

    /// Accepted entries for `id`, oldest first, newest included.
    pub fn history(&self, id: AgentId) -> impl Iterator<Item = &RegistryEntry> {
        self.history.get(&id).into_iter().flatten()
    }

    pub fn is_fresh(&self, id: AgentId, now_ms: u64, t_stale_ms: u64) -> bool {
        self.latest(id)
            .is_some_and(|e| now_ms.saturating_sub(e.bsm.timestamp_ms) <= t_stale_ms)
    }

    pub fn fresh_agents(&self, now_ms: u64, t_stale_ms: u64) -> Vec<AgentId> {
        self.live
            .keys()
            .copied()
            .filter(|id| self.is_fresh(*id, now_ms, t_stale_ms))
            .collect()
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.live.keys().copied()
    }

    /// Reachable sets for a pair whose start times are at most `max_skew`
    /// seconds apart. The newest set of the staler agent is paired with the
    /// closest earlier set of the other agent when the newest sets are too
    /// far apart.
    pub fn aligned_pair(&self, a: AgentId, b: AgentId, max_skew: f64) -> Option<(&RegistryEntry, &RegistryEntry)> {
        let ea = self.latest(a)?;
        let eb = self.latest(b)?;
        let (ta, tb) = (ea.reach().t0, eb.reach().t0);
        if (ta - tb).abs() <= max_skew + 1e-9 {
            return Some((ea, eb));
        }
        let (older, newer_id, flip) = if ta < tb { (ea, b, false) } else { (eb, a, true) };
        let t_old = older.reach().t0;
        let partner = self
            .history(newer_id)
            .filter(|e| (e.reach().t0 - t_old).abs() <= max_skew + 1e-9)
            .min_by(|x, y| {
                (x.reach().t0 - t_old)
                    .abs()
                    .total_cmp(&(y.reach().t0 - t_old).abs())
                    .then(y.reach().t0.total_cmp(&x.reach().t0))
            })?;
        Some(if flip { (partner, older) } else { (older, partner) })
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bsm(id: u32, t_ms: u64) -> Bsm {
        let mut b = Bsm::zero();
        b.sender = AgentId(id);
        b.reach.agent = AgentId(id);
        b.timestamp_ms = t_ms;
        b.reach.t0 = t_ms as f64 / 1000.0;
        b
    }

    #[test]
    fn one_live_entry_per_agent() {
        let mut r = Registry::new(1000);
        for k in 0..10 {
            r.insert(bsm(1, k * 500), k * 500 + 30);
        }
        assert_eq!(r.len(), 1);
        assert_eq!(r.latest(AgentId(1)).unwrap().bsm.timestamp_ms, 4500);
        assert_eq!(r.history(AgentId(1)).count(), 3);
    }

    #[test]
    fn staleness() {
        let mut r = Registry::new(1000);
        r.insert(bsm(1, 1000), 1030);
        assert!(r.is_fresh(AgentId(1), 3000, 2000));
        assert!(!r.is_fresh(AgentId(1), 3001, 2000));
        assert!(r.fresh_agents(3001, 2000).is_empty());
    }

    #[test]
    fn alignment_falls_back_to_history() {
        let mut r = Registry::new(5000);
        r.insert(bsm(1, 1000), 0);
        r.insert(bsm(1, 1500), 0);
        r.insert(bsm(2, 1000), 0);
        let (a, b) = r.aligned_pair(AgentId(1), AgentId(2), 0.2).unwrap();
        assert_eq!(a.bsm.timestamp_ms, 1000);
        assert_eq!(b.bsm.timestamp_ms, 1000);
        let (a, b) = r.aligned_pair(AgentId(2), AgentId(1), 0.2).unwrap();
        assert_eq!((a.bsm.sender, b.bsm.sender), (AgentId(2), AgentId(1)));
        r.insert(bsm(3, 2500), 0);
        assert!(r.aligned_pair(AgentId(1), AgentId(3), 0.2).is_none());
    }
}
