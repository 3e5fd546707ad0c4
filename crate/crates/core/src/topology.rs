//! Medial-axis waypoints and the topological graph over known free space.
//!
//! The skeleton comes from distance-ordered homotopic thinning: free cells
//! are peeled in increasing clearance order, deleting only simple points
//! (4-connected foreground, 8-connected background) that are not line
//! ends. What survives is one cell wide, stays centred between boundaries
//! and has the same connected components as the free space it came from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, Pos};
use crate::mapping::SemanticMap;

/// Default spacing of sample waypoints along skeleton chains.
pub const DEFAULT_SAMPLE_SPACING: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("map has no known free space")]
    NoFreeSpace,
}

pub type WaypointId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Waypoint {
    pub id: WaypointId,
    pub cell: Pos,
    pub clearance: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: WaypointId,
    pub b: WaypointId,
    /// Steps along the skeleton between the two waypoints.
    pub length: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopoGraph {
    pub waypoints: Vec<Waypoint>,
    pub edges: Vec<Edge>,
}

impl TopoGraph {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn waypoint_at(&self, cell: Pos) -> Option<WaypointId> {
        self.waypoints
            .binary_search_by(|w| w.cell.cmp(&cell))
            .ok()
    }

    /// Neighbor lists `(other, length)` indexed by waypoint id.
    pub fn adjacency(&self) -> Vec<Vec<(WaypointId, u32)>> {
        let mut adj = vec![Vec::new(); self.waypoints.len()];
        for e in &self.edges {
            adj[e.a].push((e.b, e.length));
            adj[e.b].push((e.a, e.length));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Component label per waypoint (labels are the smallest member id).
    pub fn components(&self) -> Vec<WaypointId> {
        let adj = self.adjacency();
        let mut label = vec![usize::MAX; self.waypoints.len()];
        for start in 0..self.waypoints.len() {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = start;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &(v, _) in &adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = start;
                        stack.push(v);
                    }
                }
            }
        }
        label
    }

    /// Plain-text adjacency list:
    ///
    /// ```text
    /// waypoints <n>
    /// <id> <x> <y> <clearance>
    /// edges <m>
    /// <a> <b> <length>
    /// ```
    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "waypoints {}", self.waypoints.len());
        for w in &self.waypoints {
            let _ = writeln!(out, "{} {} {} {}", w.id, w.cell.x, w.cell.y, w.clearance);
        }
        let _ = writeln!(out, "edges {}", self.edges.len());
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {}", e.a, e.b, e.length);
        }
        out
    }
}

/// Chebyshev distance from each known-free cell to the nearest cell that is
/// not known-free (obstacle, unknown, or off the map). Non-free cells get 0.
pub fn clearance(map: &SemanticMap) -> Grid<u32> {
    let (w, h) = (map.width(), map.height());
    let mut dist = Grid::filled(w, h, u32::MAX);
    let mut frontier = Vec::new();
    for p in map.occupancy().positions() {
        if !map.is_free(p) {
            dist.set(p, 0);
            frontier.push(p);
        }
    }
    let mut level = 0;
    loop {
        let mut next = Vec::new();
        if level == 0 {
            // The off-map ring acts as a level-0 source too.
            for p in map.occupancy().positions() {
                if dist[p] == u32::MAX && p.neighbors8().iter().any(|&n| !dist.contains(n)) {
                    dist.set(p, 1);
                    next.push(p);
                }
            }
        }
        for p in frontier {
            for n in p.neighbors8() {
                if dist.get(n) == Some(&u32::MAX) {
                    dist.set(n, level + 1);
                    next.push(n);
                }
            }
        }
        if next.is_empty() {
            return dist;
        }
        frontier = next;
        level += 1;
    }
}

/// One-cell-wide skeleton of the known free space.
pub fn skeletonize(map: &SemanticMap) -> Result<BTreeSet<Pos>, TopologyError> {
    let clear = clearance(map);
    let mut fg = map.occupancy().map(|o| *o == crate::mapping::Occupancy::Free);
    let mut order: Vec<(u32, Pos)> = fg
        .iter()
        .filter(|(_, f)| **f)
        .map(|(p, _)| (clear[p], p))
        .collect();
    if order.is_empty() {
        return Err(TopologyError::NoFreeSpace);
    }
    order.sort();
    let mut start = 0;
    while start < order.len() {
        let level = order[start].0;
        let end = order[start..]
            .iter()
            .position(|(d, _)| *d != level)
            .map_or(order.len(), |k| start + k);
        loop {
            let mut changed = false;
            for &(_, p) in &order[start..end] {
                let anchored = is_line_end(&fg, p) && is_ridge(&clear, p);
                if fg[p] && !anchored && is_simple(&fg, p) {
                    fg.set(p, false);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        start = end;
    }
    Ok(fg.iter().filter(|(_, f)| **f).map(|(p, _)| p).collect())
}

fn on(fg: &Grid<bool>, p: Pos) -> bool {
    fg.get(p).copied().unwrap_or(false)
}

/// Clearance at `p` is not exceeded by any 8-neighbor.
fn is_ridge(clear: &Grid<u32>, p: Pos) -> bool {
    p.neighbors8()
        .iter()
        .all(|&n| clear.get(n).is_none_or(|&c| c <= clear[p]))
}

fn is_line_end(fg: &Grid<bool>, p: Pos) -> bool {
    p.neighbors4().iter().filter(|&&n| on(fg, n)).count() == 1
}

/// Simple-point test for 4-connected foreground / 8-connected background,
/// evaluated on the 3x3 window around `p`.
fn is_simple(fg: &Grid<bool>, p: Pos) -> bool {
    // Ring order from neighbors8: N, NE, E, SE, S, SW, W, NW.
    let ring = p.neighbors8();
    let f: [bool; 8] = std::array::from_fn(|i| on(fg, ring[i]));
    // Foreground: 4-components of the ring that touch an edge neighbor.
    // In the ring, a corner joins its two edge neighbours only through
    // them, so components are runs of consecutive set cells, where runs
    // may only continue through a corner if both sides are set.
    let mut label = [usize::MAX; 8];
    let mut fg_components = 0;
    for s in [0usize, 2, 4, 6] {
        if !f[s] || label[s] != usize::MAX {
            continue;
        }
        fg_components += 1;
        let mut stack = vec![s];
        label[s] = s;
        while let Some(i) = stack.pop() {
            for j in [(i + 1) % 8, (i + 7) % 8] {
                if f[j] && label[j] == usize::MAX {
                    label[j] = s;
                    stack.push(j);
                }
            }
        }
    }
    if fg_components != 1 {
        return false;
    }
    // Background: 8-components of the ring. Within the ring, 8-adjacency
    // links consecutive cells, plus edge cells two apart around a corner.
    let b: [bool; 8] = std::array::from_fn(|i| !f[i]);
    let mut seen = [false; 8];
    let mut bg_components = 0;
    for s in 0..8 {
        if !b[s] || seen[s] {
            continue;
        }
        bg_components += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(i) = stack.pop() {
            let mut next = vec![(i + 1) % 8, (i + 7) % 8];
            if i % 2 == 0 {
                next.push((i + 2) % 8);
                next.push((i + 6) % 8);
            }
            for j in next {
                if b[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    bg_components == 1
}

/// Waypoints at skeleton junctions and line ends, plus one every
/// `spacing` cells along chains; edges follow the chains.
pub fn build_graph(skeleton: &BTreeSet<Pos>, map: &SemanticMap, spacing: usize) -> TopoGraph {
    let spacing = spacing.max(1);
    if skeleton.is_empty() {
        return TopoGraph::default();
    }
    let clear = clearance(map);
    let degree = |p: Pos| p.neighbors4().iter().filter(|n| skeleton.contains(n)).count();
    let mut nodes: BTreeSet<Pos> = skeleton.iter().copied().filter(|&p| degree(p) != 2).collect();
    let mut visited: BTreeSet<Pos> = BTreeSet::new();
    let mut cell_edges: Vec<(Pos, Pos, u32)> = Vec::new();

    let trace = |start: Pos,
                     first: Pos,
                     nodes: &mut BTreeSet<Pos>,
                     visited: &mut BTreeSet<Pos>,
                     edges: &mut Vec<(Pos, Pos, u32)>| {
        let mut last_node = start;
        let mut since = 1u32;
        let mut prev = start;
        let mut cur = first;
        let mut walked = 1usize;
        loop {
            if nodes.contains(&cur) && !visited.contains(&cur) {
                edges.push((last_node, cur, since));
                return;
            }
            if cur == start {
                edges.push((last_node, cur, since));
                return;
            }
            visited.insert(cur);
            if walked.is_multiple_of(spacing) {
                nodes.insert(cur);
                edges.push((last_node, cur, since));
                last_node = cur;
                since = 0;
            }
            let next = cur
                .neighbors4()
                .into_iter()
                .find(|&n| n != prev && skeleton.contains(&n))
                .expect("chain cells have two skeleton neighbours");
            prev = cur;
            cur = next;
            since += 1;
            walked += 1;
        }
    };

    let junctions: Vec<Pos> = nodes.iter().copied().collect();
    for &j in &junctions {
        for n in j.neighbors4() {
            if !skeleton.contains(&n) {
                continue;
            }
            if junctions.binary_search(&n).is_ok() {
                if j < n {
                    cell_edges.push((j, n, 1));
                }
                continue;
            }
            if visited.contains(&n) {
                continue;
            }
            trace(j, n, &mut nodes, &mut visited, &mut cell_edges);
        }
    }
    // Pure cycles have no junction; anchor each at its smallest cell.
    for &p in skeleton {
        if nodes.contains(&p) || visited.contains(&p) {
            continue;
        }
        nodes.insert(p);
        visited.insert(p);
        let first = p
            .neighbors4()
            .into_iter()
            .find(|n| skeleton.contains(n))
            .expect("cycle cell has neighbours");
        trace(p, first, &mut nodes, &mut visited, &mut cell_edges);
    }

    let waypoints: Vec<Waypoint> = nodes
        .iter()
        .enumerate()
        .map(|(id, &cell)| Waypoint {
            id,
            cell,
            clearance: clear[cell],
        })
        .collect();
    let id_of: BTreeMap<Pos, WaypointId> = waypoints.iter().map(|w| (w.cell, w.id)).collect();
    let mut edges: Vec<Edge> = cell_edges
        .into_iter()
        .filter(|(a, b, _)| a != b)
        .map(|(a, b, length)| {
            let (a, b) = (id_of[&a], id_of[&b]);
            Edge {
                a: a.min(b),
                b: a.max(b),
                length,
            }
        })
        .collect();
    edges.sort_by_key(|e| (e.a, e.b, e.length));
    edges.dedup();
    TopoGraph { waypoints, edges }
}

/// Skeleton plus graph in one call.
pub fn topo_graph(map: &SemanticMap, spacing: usize) -> Result<TopoGraph, TopologyError> {
    let skeleton = skeletonize(map)?;
    Ok(build_graph(&skeleton, map, spacing))
}
