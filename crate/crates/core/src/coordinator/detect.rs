use std::collections::{BTreeMap, BTreeSet};

use crate::geom::Vec2;
use crate::reachset::{conflict_scan, Conflict};
use crate::AgentId;

use super::{CoordinatorConfig, Registry};

fn stale_ms(cfg: &CoordinatorConfig) -> u64 {
    (cfg.t_stale * 1000.0).round() as u64
}

fn scan_pair(reg: &Registry, a: AgentId, b: AgentId, cfg: &CoordinatorConfig) -> Option<Conflict> {
    let (ea, eb) = reg.aligned_pair(a, b, cfg.reach.dt_reach)?;
    conflict_scan(ea.reach(), eb.reach(), &cfg.conflict).ok().flatten()
}

fn canonical_order(out: &mut [Conflict]) {
    out.sort_by(|x, y| {
        x.t_first
            .total_cmp(&y.t_first)
            .then(x.agent_a.cmp(&y.agent_a))
            .then(x.agent_b.cmp(&y.agent_b))
    });
}

/// All-pairs scan with no spatial filtering; the reference for
/// [`detect_conflicts`].
pub fn detect_conflicts_brute_force(reg: &Registry, now_ms: u64, cfg: &CoordinatorConfig) -> Vec<Conflict> {
    let ids = reg.fresh_agents(now_ms, stale_ms(cfg));
    let mut out = Vec::new();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            out.extend(scan_pair(reg, *a, *b, cfg));
        }
    }
    canonical_order(&mut out);
    out
}

/// Bounds of every set an agent could be scanned with.
fn agent_bounds(reg: &Registry, id: AgentId) -> (Vec2, Vec2) {
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for e in reg.history(id) {
        let (l, h) = e.reach().bounds();
        lo = Vec2::new(lo.x.min(l.x), lo.y.min(l.y));
        hi = Vec2::new(hi.x.max(h.x), hi.y.max(h.y));
    }
    (lo, hi)
}

/// Pairwise conflicts among fresh registry entries, ordered by
/// `(t_first, agent_a, agent_b)`.
///
/// Agents are bucketed on a uniform grid whose cell is at least as large as
/// any agent's reach extent, so each agent touches at most four cells and a
/// conflicting pair always shares one.
pub fn detect_conflicts(reg: &Registry, now_ms: u64, cfg: &CoordinatorConfig) -> Vec<Conflict> {
    let ids = reg.fresh_agents(now_ms, stale_ms(cfg));
    if ids.len() < 2 {
        return Vec::new();
    }
    let margin = cfg.conflict.d_safe;
    let boxes: Vec<(AgentId, Vec2, Vec2)> = ids
        .iter()
        .map(|id| {
            let (lo, hi) = agent_bounds(reg, *id);
            (*id, lo, hi + Vec2::new(margin, margin))
        })
        .collect();
    let cell = boxes
        .iter()
        .map(|(_, lo, hi)| (hi.x - lo.x).max(hi.y - lo.y))
        .fold(margin, f64::max);

    let mut grid: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, (_, lo, hi)) in boxes.iter().enumerate() {
        let (x0, y0) = ((lo.x / cell).floor() as i64, (lo.y / cell).floor() as i64);
        let (x1, y1) = ((hi.x / cell).floor() as i64, (hi.y / cell).floor() as i64);
        for cx in x0..=x1 {
            for cy in y0..=y1 {
                grid.entry((cx, cy)).or_default().push(i);
            }
        }
    }

    let mut candidates = BTreeSet::new();
    for members in grid.values() {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                let (_, lo_i, hi_i) = boxes[i];
                let (_, lo_j, hi_j) = boxes[j];
                let overlap = lo_i.x <= hi_j.x && lo_j.x <= hi_i.x && lo_i.y <= hi_j.y && lo_j.y <= hi_i.y;
                if overlap {
                    candidates.insert((i.min(j), i.max(j)));
                }
            }
        }
    }

    let mut out: Vec<Conflict> = candidates
        .into_iter()
        .filter_map(|(i, j)| scan_pair(reg, boxes[i].0, boxes[j].0, cfg))
        .collect();
    canonical_order(&mut out);
    out
}
