//! Team knowledge carried with leadership: room registry, per-agent entries
//! and per-target progress.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grid::Pos;
use crate::rooms::RoomDescription;
use crate::world::AgentId;

/// Team-wide room reference. Rooms are keyed by an anchor cell inside their
/// mask; frontier pseudo-rooms by the frontier cell to head for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoomRef {
    Room(Pos),
    Frontier(Pos),
}

impl RoomRef {
    pub fn cell(self) -> Pos {
        match self {
            RoomRef::Room(p) | RoomRef::Frontier(p) => p,
        }
    }

    pub fn is_frontier(self) -> bool {
        matches!(self, RoomRef::Frontier(_))
    }
}

impl fmt::Display for RoomRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoomRef::Room(p) => write!(f, "room({},{})", p.x, p.y),
            RoomRef::Frontier(p) => write!(f, "frontier({},{})", p.x, p.y),
        }
    }
}

impl FromStr for RoomRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, rest) = s
            .split_once('(')
            .ok_or_else(|| format!("bad room reference {s:?}"))?;
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| format!("bad room reference {s:?}"))?;
        let (x, y) = inner
            .split_once(',')
            .ok_or_else(|| format!("bad room reference {s:?}"))?;
        let p = Pos::new(
            x.trim().parse().map_err(|_| format!("bad x in {s:?}"))?,
            y.trim().parse().map_err(|_| format!("bad y in {s:?}"))?,
        );
        match kind {
            "room" => Ok(RoomRef::Room(p)),
            "frontier" => Ok(RoomRef::Frontier(p)),
            _ => Err(format!("bad room reference {s:?}")),
        }
    }
}

impl Serialize for RoomRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RoomRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Optional action rendered as `"none"` when absent.
pub mod opt_room {
    use super::RoomRef;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<RoomRef>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(r) => s.collect_str(r),
            None => s.serialize_str("none"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<RoomRef>, D::Error> {
        let s = String::deserialize(d)?;
        if s == "none" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(serde::de::Error::custom)
        }
    }
}

/// Mask cell nearest the mask centroid; ties in raster order.
pub fn anchor_of(mask: &BTreeSet<Pos>) -> Option<Pos> {
    if mask.is_empty() {
        return None;
    }
    let n = mask.len() as f64;
    let cx = mask.iter().map(|p| f64::from(p.x)).sum::<f64>() / n;
    let cy = mask.iter().map(|p| f64::from(p.y)).sum::<f64>() / n;
    mask.iter().copied().min_by(|a, b| {
        let da = (f64::from(a.x) - cx).powi(2) + (f64::from(a.y) - cy).powi(2);
        let db = (f64::from(b.x) - cx).powi(2) + (f64::from(b.y) - cy).powi(2);
        da.total_cmp(&db).then(a.cmp(b))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStatus {
    Unclaimed,
    LockedBy(AgentId),
    Found,
}

/// Per-target status as one holder of the state sees it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalProgress {
    pub targets: BTreeMap<String, TargetStatus>,
}

impl GlobalProgress {
    pub fn new<'a>(classes: impl IntoIterator<Item = &'a String>) -> Self {
        Self {
            targets: classes
                .into_iter()
                .map(|c| (c.clone(), TargetStatus::Unclaimed))
                .collect(),
        }
    }

    pub fn status(&self, target: &str) -> Option<TargetStatus> {
        self.targets.get(target).copied()
    }

    pub fn remaining(&self) -> BTreeSet<String> {
        self.targets
            .iter()
            .filter(|(_, s)| **s != TargetStatus::Found)
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn found(&self) -> BTreeSet<String> {
        self.targets
            .iter()
            .filter(|(_, s)| **s == TargetStatus::Found)
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn locks_of(&self, agent: AgentId) -> BTreeSet<String> {
        self.targets
            .iter()
            .filter(|(_, s)| **s == TargetStatus::LockedBy(agent))
            .map(|(t, _)| t.clone())
            .collect()
    }

    /// Targets locked by anyone other than `agent`.
    pub fn locked_by_others(&self, agent: AgentId) -> BTreeSet<String> {
        self.targets
            .iter()
            .filter(|(_, s)| matches!(s, TargetStatus::LockedBy(a) if *a != agent))
            .map(|(t, _)| t.clone())
            .collect()
    }

    /// Locks an unclaimed target; false if it is found or held by another.
    pub fn lock(&mut self, target: &str, agent: AgentId) -> bool {
        match self.targets.get_mut(target) {
            Some(s @ TargetStatus::Unclaimed) => {
                *s = TargetStatus::LockedBy(agent);
                true
            }
            Some(TargetStatus::LockedBy(a)) => *a == agent,
            _ => false,
        }
    }

    pub fn release(&mut self, agent: AgentId) {
        for s in self.targets.values_mut() {
            if *s == TargetStatus::LockedBy(agent) {
                *s = TargetStatus::Unclaimed;
            }
        }
    }

    /// Found is terminal.
    pub fn mark_found(&mut self, target: &str) {
        if let Some(s) = self.targets.get_mut(target) {
            *s = TargetStatus::Found;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentEntry {
    pub cell: Pos,
    #[serde(with = "opt_room")]
    pub assigned: Option<RoomRef>,
    pub rooms: BTreeSet<Pos>,
    pub alive: bool,
    pub tick: u64,
    /// Id of the last request served for this agent.
    #[serde(default)]
    pub served: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomEntry {
    pub anchor: Pos,
    pub mask: BTreeSet<Pos>,
    pub explored: f64,
    pub description: Option<RoomDescription>,
    pub contributors: BTreeSet<AgentId>,
}

impl RoomEntry {
    pub fn label(&self) -> &str {
        self.description
            .as_ref()
            .map_or(crate::rooms::UNKNOWN_ROOM, |d| d.label.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    pub version: u64,
    pub agents: BTreeMap<AgentId, AgentEntry>,
    #[serde(with = "rooms_by_anchor")]
    pub rooms: BTreeMap<Pos, RoomEntry>,
}

/// The room registry travels as a list; keys are the entries' anchors.
mod rooms_by_anchor {
    use super::{BTreeMap, Pos, RoomEntry};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<Pos, RoomEntry>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.values())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Pos, RoomEntry>, D::Error> {
        let list = Vec::<RoomEntry>::deserialize(d)?;
        Ok(list.into_iter().map(|e| (e.anchor, e)).collect())
    }
}

/// One room as a member reports it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomReport {
    pub anchor: Pos,
    pub mask: BTreeSet<Pos>,
    pub explored: f64,
    pub description: Option<RoomDescription>,
}

/// A member's share of the team knowledge, sent with its request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub agent: AgentId,
    pub cell: Pos,
    pub tick: u64,
    pub rooms: Vec<RoomReport>,
    pub found: BTreeSet<String>,
}

impl GlobalState {
    pub fn new(agents: impl IntoIterator<Item = (AgentId, Pos)>) -> Self {
        Self {
            version: 0,
            agents: agents
                .into_iter()
                .map(|(a, cell)| {
                    (
                        a,
                        AgentEntry {
                            cell,
                            assigned: None,
                            rooms: BTreeSet::new(),
                            alive: true,
                            tick: 0,
                            served: 0,
                        },
                    )
                })
                .collect(),
            rooms: BTreeMap::new(),
        }
    }

    /// Registry key for a room with this mask: the smallest registered anchor
    /// lying inside it, else a fresh anchor.
    pub fn resolve(&self, mask: &BTreeSet<Pos>) -> Option<Pos> {
        self.rooms
            .keys()
            .find(|a| mask.contains(a))
            .copied()
            .or_else(|| anchor_of(mask))
    }

    /// Folds a contribution in and returns how the reporter's anchors map to
    /// registry keys.
    pub fn merge(&mut self, c: &Contribution, progress: &mut GlobalProgress) -> BTreeMap<Pos, Pos> {
        let mut remap = BTreeMap::new();
        let mut keys = BTreeSet::new();
        for r in &c.rooms {
            let Some(key) = self.resolve(&r.mask) else {
                continue;
            };
            remap.insert(r.anchor, key);
            keys.insert(key);
            let entry = self.rooms.entry(key).or_insert_with(|| RoomEntry {
                anchor: key,
                mask: BTreeSet::new(),
                explored: 0.0,
                description: None,
                contributors: BTreeSet::new(),
            });
            entry.mask = r.mask.clone();
            entry.explored = entry.explored.max(r.explored);
            if r.description.is_some() {
                entry.description = r.description.clone();
            }
            entry.contributors.insert(c.agent);
        }
        if let Some(entry) = self.agents.get_mut(&c.agent) {
            entry.cell = c.cell;
            entry.tick = c.tick;
            entry.rooms.extend(keys);
        }
        for t in &c.found {
            progress.mark_found(t);
        }
        remap
    }

    /// Standing room assignments of alive agents other than `except`.
    pub fn assignments_except(&self, except: AgentId) -> BTreeMap<RoomRef, AgentId> {
        self.agents
            .iter()
            .filter(|(a, e)| **a != except && e.alive)
            .filter_map(|(a, e)| e.assigned.map(|r| (r, *a)))
            .collect()
    }

    /// Marks an agent dead and drops its assignment and locks.
    pub fn retire(&mut self, agent: AgentId, progress: &mut GlobalProgress) {
        if let Some(e) = self.agents.get_mut(&agent) {
            e.alive = false;
            e.assigned = None;
        }
        progress.release(agent);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn room_ref_text_round_trip() {
        for r in [RoomRef::Room(Pos::new(3, 4)), RoomRef::Frontier(Pos::new(-1, 12))] {
            assert_eq!(r.to_string().parse::<RoomRef>().unwrap(), r);
        }
        assert_eq!(RoomRef::Room(Pos::new(3, 4)).to_string(), "room(3,4)");
        assert!("hall(1,2)".parse::<RoomRef>().is_err());
        assert!(RoomRef::Room(Pos::new(9, 9)) < RoomRef::Frontier(Pos::new(0, 0)));
    }

    #[test]
    fn anchor_is_central() {
        let mask: BTreeSet<Pos> = (0..5).flat_map(|x| (0..3).map(move |y| Pos::new(x, y))).collect();
        assert_eq!(anchor_of(&mask), Some(Pos::new(2, 1)));
    }

    #[test]
    fn locks_are_exclusive_and_found_is_final() {
        let targets = vec!["cup".to_string(), "tv".to_string()];
        let mut p = GlobalProgress::new(&targets);
        assert!(p.lock("cup", AgentId(1)));
        assert!(!p.lock("cup", AgentId(2)));
        assert!(p.lock("cup", AgentId(1)));
        p.mark_found("tv");
        assert!(!p.lock("tv", AgentId(2)));
        p.release(AgentId(1));
        assert_eq!(p.status("cup"), Some(TargetStatus::Unclaimed));
        assert_eq!(p.remaining(), BTreeSet::from(["cup".to_string()]));
    }

    #[test]
    fn merge_reuses_registered_anchor() {
        let mut g = GlobalState::new([(AgentId(0), Pos::new(0, 0)), (AgentId(1), Pos::new(5, 5))]);
        let mut p = GlobalProgress::new(&["cup".to_string()]);
        let small: BTreeSet<Pos> = (0..3).map(|x| Pos::new(x, 0)).collect();
        let c0 = Contribution {
            agent: AgentId(0),
            cell: Pos::new(0, 0),
            tick: 1,
            rooms: vec![RoomReport {
                anchor: Pos::new(1, 0),
                mask: small,
                explored: 0.4,
                description: None,
            }],
            found: BTreeSet::new(),
        };
        g.merge(&c0, &mut p);
        let big: BTreeSet<Pos> = (0..8).map(|x| Pos::new(x, 0)).collect();
        let c1 = Contribution {
            agent: AgentId(1),
            cell: Pos::new(5, 0),
            tick: 2,
            rooms: vec![RoomReport {
                anchor: Pos::new(4, 0),
                mask: big.clone(),
                explored: 0.3,
                description: None,
            }],
            found: BTreeSet::from(["cup".to_string()]),
        };
        let remap = g.merge(&c1, &mut p);
        assert_eq!(remap[&Pos::new(4, 0)], Pos::new(1, 0));
        assert_eq!(g.rooms.len(), 1);
        let e = &g.rooms[&Pos::new(1, 0)];
        assert_eq!(e.mask, big);
        assert_eq!(e.explored, 0.4);
        assert_eq!(p.status("cup"), Some(TargetStatus::Found));
    }
}
