//! Room segmentation of a known map, stable room identities, panorama
//! frames and room descriptions.

mod describe;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Heading, Pos};
use crate::mapping::{Occupancy, SemanticMap};
use crate::world::{AgentId, Observation};

pub use describe::{
    describe, CooccurrenceTable, DescribeError, DescribeRequest, RemoteDescriber, RoomDescriber,
    RoomDescription, RuleDescriber, UNKNOWN_ROOM,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoomId(pub u32);

impl std::fmt::Display for RoomId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoomError {
    #[error("room unseen: no frame covers room {0}")]
    Unseen(RoomId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Widest free run (cells) that still counts as a doorway.
    pub door_width: usize,
    /// Components smaller than this fold into their largest neighbour.
    pub min_room_cells: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            door_width: 2,
            min_room_cells: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSegment {
    pub room_id: RoomId,
    pub mask: BTreeSet<Pos>,
    pub door_cells: BTreeSet<Pos>,
    pub explored: f64,
    pub description: Option<RoomDescription>,
}

/// Segmentation before identities are assigned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSegment {
    pub mask: BTreeSet<Pos>,
    pub door_cells: BTreeSet<Pos>,
}

/// Length of the free run through `p` along one axis, and whether both
/// ends stop at a known obstacle.
fn run(map: &SemanticMap, p: Pos, dx: i32, dy: i32) -> (usize, bool) {
    let mut len = 1;
    let mut walled = true;
    for sign in [-1, 1] {
        let mut q = p.offset(sign * dx, sign * dy);
        while map.is_free(q) {
            len += 1;
            q = q.offset(sign * dx, sign * dy);
        }
        walled &= map.at(q) == Occupancy::Obstacle;
    }
    (len, walled)
}

/// A doorway cell: the free run across it is at most `door_width` and walled
/// at both ends, and along the perpendicular axis it opens into wider or
/// unseen space on both sides within a few cells.
pub fn is_door(map: &SemanticMap, p: Pos, door_width: usize) -> bool {
    if !map.is_free(p) {
        return false;
    }
    for (dx, dy) in [(1, 0), (0, 1)] {
        let (len, walled) = run(map, p, dx, dy);
        if len > door_width || !walled {
            continue;
        }
        // Perpendicular: step (dy, dx) both ways.
        // Unseen space beyond the gap counts as opening up.
        let opens = [-1, 1].iter().all(|&sign| {
            let mut q = p;
            for _ in 0..=door_width {
                q = q.offset(sign * dy, sign * dx);
                match map.at(q) {
                    Occupancy::Free => {}
                    Occupancy::Unknown => return true,
                    Occupancy::Obstacle => return false,
                }
                let (len, walled) = run(map, q, dx, dy);
                if len > door_width || !walled {
                    return true;
                }
            }
            false
        });
        if opens {
            return true;
        }
    }
    false
}

fn components(cells: &BTreeSet<Pos>) -> Vec<BTreeSet<Pos>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &s in cells {
        if seen.contains(&s) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut stack = vec![s];
        seen.insert(s);
        while let Some(p) = stack.pop() {
            comp.insert(p);
            for n in p.neighbors4() {
                if cells.contains(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Splits the known free space into rooms at doorways. Masks partition the
/// known-free cells; door cells join the room they are closest to.
pub fn segment(map: &SemanticMap, params: &SegmentParams) -> Vec<RawSegment> {
    let free: BTreeSet<Pos> = map
        .occupancy()
        .iter()
        .filter(|(_, o)| **o == Occupancy::Free)
        .map(|(p, _)| p)
        .collect();
    let doors: BTreeSet<Pos> = free
        .iter()
        .copied()
        .filter(|&p| is_door(map, p, params.door_width))
        .collect();
    let inner: BTreeSet<Pos> = free.difference(&doors).copied().collect();
    let mut rooms = components(&inner);
    let door_clusters = components(&doors);

    // Rooms touching each door cluster.
    let touching = |rooms: &Vec<BTreeSet<Pos>>, cluster: &BTreeSet<Pos>| -> BTreeSet<usize> {
        rooms
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                cluster
                    .iter()
                    .any(|p| p.neighbors4().iter().any(|n| r.contains(n)))
            })
            .map(|(i, _)| i)
            .collect()
    };

    // Fold small rooms into their largest neighbour across a door.
    loop {
        let mut small: Vec<usize> = (0..rooms.len())
            .filter(|&i| rooms[i].len() < params.min_room_cells)
            .collect();
        small.sort_by_key(|&i| (rooms[i].len(), *rooms[i].first().unwrap()));
        let mut merged = false;
        for i in small {
            let mut neighbours = BTreeSet::new();
            for cluster in &door_clusters {
                let t = touching(&rooms, cluster);
                if t.contains(&i) {
                    neighbours.extend(t.into_iter().filter(|&j| j != i));
                }
            }
            let Some(&target) = neighbours
                .iter()
                .max_by_key(|&&j| (rooms[j].len(), std::cmp::Reverse(*rooms[j].first().unwrap())))
            else {
                continue;
            };
            let cells = std::mem::take(&mut rooms[i]);
            rooms[target].extend(cells);
            rooms.remove(i);
            merged = true;
            break;
        }
        if !merged {
            break;
        }
    }

    // Hand door cells to rooms by breadth-first growth through doors.
    let mut owner: BTreeMap<Pos, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for (i, r) in rooms.iter().enumerate() {
        for &p in r {
            owner.insert(p, i);
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        let o = owner[&p];
        for n in p.neighbors4() {
            if doors.contains(&n) && !owner.contains_key(&n) {
                owner.insert(n, o);
                queue.push_back(n);
            }
        }
    }
    let mut out: Vec<RawSegment> = rooms
        .into_iter()
        .map(|mask| RawSegment {
            mask,
            door_cells: BTreeSet::new(),
        })
        .collect();
    // Door cells with no room around them form their own segment.
    for stray in components(&doors.iter().copied().filter(|p| !owner.contains_key(p)).collect()) {
        out.push(RawSegment {
            mask: stray.clone(),
            door_cells: stray,
        });
    }
    for (&p, &o) in &owner {
        if doors.contains(&p) {
            out[o].mask.insert(p);
            out[o].door_cells.insert(p);
        }
    }
    out.retain(|s| !s.mask.is_empty());
    out.sort_by_key(|s| *s.mask.first().unwrap());
    out
}

/// Fraction of a room's reach that is known: mask cells plus the unknown
/// cells bordering its non-door cells.
pub fn explored_fraction(map: &SemanticMap, mask: &BTreeSet<Pos>, doors: &BTreeSet<Pos>) -> f64 {
    let mut unknown = BTreeSet::new();
    for p in mask.difference(doors) {
        for n in p.neighbors8() {
            if map.occupancy().contains(n) && map.at(n) == Occupancy::Unknown {
                unknown.insert(n);
            }
        }
    }
    mask.len() as f64 / (mask.len() + unknown.len()) as f64
}

/// Unknown-bordering cells of a room that an agent can stand on to see more.
pub fn room_frontier(map: &SemanticMap, mask: &BTreeSet<Pos>, doors: &BTreeSet<Pos>) -> Vec<Pos> {
    mask.difference(doors)
        .copied()
        .filter(|&p| map.is_frontier(p))
        .collect()
}

/// Assigns persistent ids to successive segmentations by greedy maximum
/// overlap with the previous ones. Rooms of full size never merge: a
/// segment that now spans several of them is split back along their old
/// masks.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RoomTracker {
    next_id: u32,
    rooms: Vec<RoomSegment>,
}

impl RoomTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rooms(&self) -> &[RoomSegment] {
        &self.rooms
    }

    pub fn get(&self, id: RoomId) -> Option<&RoomSegment> {
        self.rooms.iter().find(|r| r.room_id == id)
    }

    pub fn get_mut(&mut self, id: RoomId) -> Option<&mut RoomSegment> {
        self.rooms.iter_mut().find(|r| r.room_id == id)
    }

    pub fn room_of(&self, p: Pos) -> Option<&RoomSegment> {
        self.rooms.iter().find(|r| r.mask.contains(&p))
    }

    /// Splits `seg` between the established rooms it overlaps; new cells go
    /// to the nearest one by breadth-first growth inside the segment.
    fn keep_apart(&self, seg: RawSegment, min_cells: usize) -> Vec<RawSegment> {
        let olds: Vec<&RoomSegment> = self
            .rooms
            .iter()
            .filter(|r| r.mask.len() >= min_cells && r.mask.iter().any(|p| seg.mask.contains(p)))
            .collect();
        if olds.len() < 2 {
            return vec![seg];
        }
        let mut owner: BTreeMap<Pos, usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        for (i, r) in olds.iter().enumerate() {
            for p in r.mask.iter().filter(|p| seg.mask.contains(p)) {
                if owner.insert(*p, i).is_none() {
                    queue.push_back(*p);
                }
            }
        }
        while let Some(p) = queue.pop_front() {
            let o = owner[&p];
            for n in p.neighbors4() {
                if seg.mask.contains(&n) && !owner.contains_key(&n) {
                    owner.insert(n, o);
                    queue.push_back(n);
                }
            }
        }
        let mut parts = vec![RawSegment { mask: BTreeSet::new(), door_cells: BTreeSet::new() }; olds.len()];
        for (p, o) in owner {
            parts[o].mask.insert(p);
            if seg.door_cells.contains(&p) {
                parts[o].door_cells.insert(p);
            }
        }
        parts.retain(|s| !s.mask.is_empty());
        parts
    }

    /// Re-segments `map` and carries ids (and descriptions of rooms whose
    /// mask did not change) over from the previous segmentation.
    pub fn update(&mut self, map: &SemanticMap, params: &SegmentParams) -> &[RoomSegment] {
        let segs = segment(map, params)
            .into_iter()
            .flat_map(|s| self.keep_apart(s, params.min_room_cells))
            .collect::<Vec<_>>();
        let mut pairs: Vec<(usize, RoomId, usize)> = Vec::new();
        for (si, s) in segs.iter().enumerate() {
            for old in &self.rooms {
                let overlap = s.mask.intersection(&old.mask).count();
                if overlap > 0 {
                    pairs.push((overlap, old.room_id, si));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut ids: Vec<Option<RoomId>> = vec![None; segs.len()];
        let mut used = BTreeSet::new();
        for (_, old, si) in pairs {
            if ids[si].is_none() && !used.contains(&old) {
                ids[si] = Some(old);
                used.insert(old);
            }
        }
        let mut rooms = Vec::with_capacity(segs.len());
        for (si, s) in segs.into_iter().enumerate() {
            let id = ids[si].unwrap_or_else(|| {
                let id = RoomId(self.next_id);
                self.next_id += 1;
                id
            });
            let description = self
                .get(id)
                .filter(|old| old.mask == s.mask)
                .and_then(|old| old.description.clone());
            let explored = explored_fraction(map, &s.mask, &s.door_cells);
            rooms.push(RoomSegment {
                room_id: id,
                mask: s.mask,
                door_cells: s.door_cells,
                explored,
                description,
            });
        }
        rooms.sort_by_key(|r| r.room_id);
        self.rooms = rooms;
        &self.rooms
    }
}

/// One heading-indexed capture from a waypoint panorama.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub agent: AgentId,
    pub waypoint_cell: Pos,
    pub heading: Heading,
    pub visible_cells: Vec<Pos>,
    pub visible_objects: Vec<(String, Pos)>,
    pub tick: u64,
}

impl FrameRecord {
    pub fn from_observation(obs: &Observation) -> Self {
        Self {
            agent: obs.agent,
            waypoint_cell: obs.pose.cell,
            heading: obs.pose.heading,
            visible_cells: obs.visible_cells.iter().map(|(p, _)| *p).collect(),
            visible_objects: obs.visible_objects.clone(),
            tick: obs.tick,
        }
    }
}

/// The frame that sees the most of `mask`; ties go to the earlier tick,
/// then the lower heading.
pub fn best_frame<'a>(
    room: RoomId,
    mask: &BTreeSet<Pos>,
    frames: impl IntoIterator<Item = &'a FrameRecord>,
) -> Result<&'a FrameRecord, RoomError> {
    let mut best: Option<(usize, &FrameRecord)> = None;
    for f in frames {
        let seen = f.visible_cells.iter().filter(|p| mask.contains(p)).count();
        if seen == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((s, b)) => {
                seen > s || (seen == s && (f.tick, f.heading) < (b.tick, b.heading))
            }
        };
        if better {
            best = Some((seen, f));
        }
    }
    best.map(|(_, f)| f).ok_or(RoomError::Unseen(room))
}
