//! Travel-time fields, waypoint routing and discrete action selection.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, Heading, Pos, HEADINGS};
use crate::mapping::SemanticMap;
use crate::rooms::FrameRecord;
use crate::topology::{TopoGraph, WaypointId};
use crate::world::{Action, Observation};

/// Ticks before the same waypoint may trigger another panorama.
pub const PANORAMA_COOLDOWN: u64 = 25;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MotionError {
    #[error("empty goal set")]
    EmptyGoals,
    #[error("goal {0} is not known-free")]
    GoalNotFree(Pos),
    #[error("no topo path from waypoint {0} to {1}")]
    NoTopoPath(WaypointId, WaypointId),
    #[error("no waypoint in room")]
    NoWaypointInRoom,
    #[error("trapped at {0}")]
    Trapped(Pos),
    #[error("pose {0} is not reachable in the field")]
    Unreachable(Pos),
}

/// Travel time (cells at unit speed) to the nearest goal; `f64::INFINITY`
/// marks unreachable cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    pub values: Grid<f64>,
    pub goals: BTreeSet<Pos>,
}

impl DistanceField {
    pub fn at(&self, p: Pos) -> f64 {
        self.values.get(p).copied().unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Front(f64, Pos);

impl Eq for Front {}

impl Ord for Front {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Front {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// First-order upwind update from the smaller accepted neighbour on each axis.
fn eikonal(a: f64, b: f64) -> f64 {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if b - a >= 1.0 {
        a + 1.0
    } else {
        (a + b + (2.0 - (a - b) * (a - b)).sqrt()) / 2.0
    }
}

/// Fast-marching solve over the cells where `passable` is true.
pub fn fmm_on(passable: &Grid<bool>, goals: &BTreeSet<Pos>) -> Result<DistanceField, MotionError> {
    if goals.is_empty() {
        return Err(MotionError::EmptyGoals);
    }
    if let Some(&g) = goals.iter().find(|&&g| passable.get(g) != Some(&true)) {
        return Err(MotionError::GoalNotFree(g));
    }
    let mut t = Grid::filled(passable.width(), passable.height(), f64::INFINITY);
    let mut accepted = Grid::filled(passable.width(), passable.height(), false);
    let mut heap = BinaryHeap::new();
    for &g in goals {
        t.set(g, 0.0);
        heap.push(Reverse(Front(0.0, g)));
    }
    let val = |t: &Grid<f64>, accepted: &Grid<bool>, p: Pos| {
        if accepted.get(p) == Some(&true) {
            t[p]
        } else {
            f64::INFINITY
        }
    };
    while let Some(Reverse(Front(v, p))) = heap.pop() {
        if accepted[p] || v > t[p] {
            continue;
        }
        accepted.set(p, true);
        for n in p.neighbors4() {
            if passable.get(n) != Some(&true) || accepted[n] {
                continue;
            }
            let [up, right, down, left] = n.neighbors4();
            let a = val(&t, &accepted, left).min(val(&t, &accepted, right));
            let b = val(&t, &accepted, up).min(val(&t, &accepted, down));
            let cand = eikonal(a, b);
            if cand < t[n] {
                t.set(n, cand);
                heap.push(Reverse(Front(cand, n)));
            }
        }
    }
    Ok(DistanceField {
        values: t,
        goals: goals.clone(),
    })
}

/// Field over the agent's known free space; unknown and obstacle cells are
/// impassable.
pub fn fmm(map: &SemanticMap, goals: &BTreeSet<Pos>) -> Result<DistanceField, MotionError> {
    let passable = map.occupancy().map(|o| *o == crate::mapping::Occupancy::Free);
    fmm_on(&passable, goals)
}

/// Greedy descent: step toward the 4-neighbour with the smallest field value
/// (ties N, E, S, W), turning first when not already facing it.
pub fn next_action(cell: Pos, heading: Heading, field: &DistanceField) -> Result<Action, MotionError> {
    let here = field.at(cell);
    if !here.is_finite() {
        return Err(MotionError::Unreachable(cell));
    }
    if here == 0.0 {
        return Ok(Action::NoOp);
    }
    let mut best: Option<(f64, Pos)> = None;
    for n in cell.neighbors4() {
        let v = field.at(n);
        if v.is_finite() && best.is_none_or(|(b, _)| v < b) {
            best = Some((v, n));
        }
    }
    let (_, target) = best.ok_or(MotionError::Trapped(cell))?;
    let want = Heading::toward(cell, target).expect("4-neighbour");
    Ok(turn_toward(heading, want))
}

/// Forward when facing `want`, else the turn on the shorter side.
pub fn turn_toward(heading: Heading, want: Heading) -> Action {
    let diff = (want.index() + HEADINGS - heading.index()) % HEADINGS;
    match diff {
        0 => Action::Forward,
        1..=6 => Action::TurnRight,
        _ => Action::TurnLeft,
    }
}

/// Shortest waypoint path; among equal-cost paths the lexicographically
/// smallest id sequence.
pub fn dijkstra(graph: &TopoGraph, src: WaypointId, dst: WaypointId) -> Result<Vec<WaypointId>, MotionError> {
    let adj = graph.adjacency();
    let from_src = distances(&adj, src);
    let from_dst = distances(&adj, dst);
    let total = from_src.get(dst).copied().flatten().ok_or(MotionError::NoTopoPath(src, dst))?;
    let mut path = vec![src];
    let mut u = src;
    while u != dst {
        let du = from_src[u].expect("on a shortest path");
        let next = adj[u]
            .iter()
            .filter(|&&(v, len)| {
                from_src[v] == Some(du + u64::from(len))
                    && from_dst[v].is_some_and(|d| du + u64::from(len) + d == total)
            })
            .map(|&(v, _)| v)
            .min()
            .expect("shortest path continues");
        path.push(next);
        u = next;
    }
    Ok(path)
}

fn distances(adj: &[Vec<(WaypointId, u32)>], src: WaypointId) -> Vec<Option<u64>> {
    let mut dist = vec![None; adj.len()];
    if src >= adj.len() {
        return dist;
    }
    let mut heap = BinaryHeap::new();
    dist[src] = Some(0);
    heap.push(Reverse((0u64, src)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist[u].is_some_and(|best| d > best) {
            continue;
        }
        for &(v, len) in &adj[u] {
            let nd = d + u64::from(len);
            if dist[v].is_none_or(|old| nd < old) {
                dist[v] = Some(nd);
                heap.push(Reverse((nd, v)));
            }
        }
    }
    dist
}

/// Among waypoints inside `mask`, the one with the smallest travel time in
/// `from_pose` (a field seeded at the agent's cell); ties to the lower id.
pub fn select_entry_waypoint(
    graph: &TopoGraph,
    mask: &BTreeSet<Pos>,
    from_pose: &DistanceField,
) -> Result<WaypointId, MotionError> {
    let mut best: Option<(f64, WaypointId)> = None;
    let mut any = false;
    for w in &graph.waypoints {
        if !mask.contains(&w.cell) {
            continue;
        }
        any = true;
        let v = from_pose.at(w.cell);
        if v.is_finite() && best.is_none_or(|(b, _)| v < b) {
            best = Some((v, w.id));
        }
    }
    match best {
        Some((_, id)) => Ok(id),
        None if any => Err(MotionError::Unreachable(
            from_pose.goals.first().copied().unwrap_or(Pos::new(0, 0)),
        )),
        None => Err(MotionError::NoWaypointInRoom),
    }
}

/// Route toward a destination: waypoint cells along the topo path, then the
/// final cell. Fields are recomputed by the caller whenever the map changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanState {
    pub destination: Pos,
    pub topo_path: Vec<WaypointId>,
    /// Remaining mid-term goals, nearest first; the last is `destination`.
    pub goals: Vec<Pos>,
}

impl PlanState {
    /// Plans from `cell` to `destination` through the waypoint graph. When the
    /// graph offers no usable path the plan is the destination alone.
    pub fn new(map: &SemanticMap, graph: &TopoGraph, cell: Pos, destination: Pos) -> Result<Self, MotionError> {
        let from_pose = fmm(map, &BTreeSet::from([cell]))?;
        if !from_pose.at(destination).is_finite() {
            return Err(MotionError::Unreachable(destination));
        }
        let nearest = |field: &DistanceField| {
            graph
                .waypoints
                .iter()
                .filter(|w| field.at(w.cell).is_finite())
                .min_by(|a, b| field.at(a.cell).total_cmp(&field.at(b.cell)).then(a.id.cmp(&b.id)))
                .map(|w| w.id)
        };
        let to_dest = fmm(map, &BTreeSet::from([destination]))?;
        let direct = from_pose.at(destination);
        let mut topo_path = Vec::new();
        if let (Some(src), Some(dst)) = (nearest(&from_pose), nearest(&to_dest)) {
            if let Ok(path) = dijkstra(graph, src, dst) {
                topo_path = path;
            }
        }
        let mut goals: Vec<Pos> = topo_path.iter().map(|&id| graph.waypoints[id].cell).collect();
        // Skip leading waypoints that would send the agent backwards.
        while let Some(&first) = goals.first() {
            if from_pose.at(first) + to_dest.at(first) > direct + 2.0 || first == cell {
                goals.remove(0);
            } else {
                break;
            }
        }
        // Trailing waypoints past the destination are detours too.
        while let Some(&last) = goals.last() {
            if from_pose.at(last) + to_dest.at(last) > direct + 2.0 {
                goals.pop();
            } else {
                break;
            }
        }
        goals.push(destination);
        goals.dedup();
        Ok(Self {
            destination,
            topo_path,
            goals,
        })
    }

    pub fn mid_term_goal(&self) -> Pos {
        self.goals[0]
    }

    /// Drops the current mid-term goal once reached; true when the whole
    /// plan is done.
    pub fn advance(&mut self, cell: Pos) -> bool {
        while self.goals.len() > 1 && self.goals[0] == cell {
            self.goals.remove(0);
        }
        self.goals.len() == 1 && self.goals[0] == cell
    }
}

/// Twelve-frame rotation at a waypoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Panorama {
    pub waypoint: Pos,
    pub frames: Vec<FrameRecord>,
}

impl Panorama {
    pub fn new(waypoint: Pos) -> Self {
        Self {
            waypoint,
            frames: Vec::with_capacity(HEADINGS as usize),
        }
    }

    /// Records the frame for this tick and returns the turn to take.
    pub fn on_tick(&mut self, obs: &Observation) -> Action {
        self.frames.push(FrameRecord::from_observation(obs));
        Action::TurnRight
    }

    pub fn complete(&self) -> bool {
        self.frames.len() >= HEADINGS as usize
    }
}

/// Per-agent record of when each waypoint last hosted a panorama.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanoramaLog {
    last: BTreeMap<Pos, u64>,
}

impl PanoramaLog {
    pub fn due(&self, waypoint: Pos, tick: u64) -> bool {
        self.last
            .get(&waypoint)
            .is_none_or(|&t| tick >= t + PANORAMA_COOLDOWN)
    }

    pub fn record(&mut self, waypoint: Pos, tick: u64) {
        self.last.insert(waypoint, tick);
    }
}
