//! One agent's controller: perception, room bookkeeping, the help trigger
//! and action selection.

use std::collections::{BTreeMap, BTreeSet};

use crate::grid::Pos;
use crate::mapping::SemanticMap;
use crate::motion::{self, DistanceField, Panorama, PanoramaLog, PlanState};
use crate::oracle::{
    room_summary, HistoryEntry, MemberContext, MemberState, Proposal, RoomOption,
};
use crate::protocol::state::{anchor_of, Contribution, RoomRef, RoomReport};
use crate::protocol::{Node, NodeEvent, Timing};
use crate::rooms::{
    self, best_frame, CooccurrenceTable, FrameRecord, RoomDescriber, RoomSegment, RoomTracker,
    SegmentParams, UNKNOWN_ROOM,
};
use crate::topology::{topo_graph, DEFAULT_SAMPLE_SPACING};
use crate::world::{Action, AgentId, Observation};

/// Ticks after which an idle agent asks again even if its map is unchanged.
pub const REPOLL_TICKS: u64 = 40;
const HISTORY_LEN: usize = 4;

/// What the agent is doing this tick.
#[derive(Clone, Debug, PartialEq)]
enum Intent {
    Panorama,
    Declare(String),
    Go(BTreeSet<Pos>),
    /// Approach a sighted target instance.
    Approach(Pos, BTreeSet<Pos>),
    Idle,
}

#[derive(Debug)]
pub struct AgentCtl {
    pub id: AgentId,
    pub map: SemanticMap,
    pub tracker: RoomTracker,
    params: SegmentParams,
    rooms_dirty: bool,
    pub frames: Vec<FrameRecord>,
    panorama: Option<Panorama>,
    panoramas: PanoramaLog,
    pub node: Node,
    pub history: Vec<HistoryEntry>,
    last_proposal: Option<Proposal>,
    plan: Option<(RoomRef, PlanState)>,
    entered: BTreeSet<RoomRef>,
    /// Assignment given up on because nothing of it is reachable.
    stuck: Option<Option<RoomRef>>,
    /// Frontier cells stood on whose unknown neighbours stayed hidden.
    dead_frontier: BTreeSet<Pos>,
    /// Sighted instances with no known route, keyed to the map signature at the time.
    unreachable: BTreeMap<Pos, usize>,
    last_request: Option<(u64, usize)>,
    pub trigger_at: Option<u64>,
    pub path_length: u64,
    cell: Pos,
    heading: crate::grid::Heading,
}

impl AgentCtl {
    pub fn new(
        id: AgentId,
        width: usize,
        height: usize,
        starts: &BTreeMap<AgentId, Pos>,
        goals: &[String],
        timing: Timing,
    ) -> Self {
        let cell = starts[&id];
        Self {
            id,
            map: SemanticMap::new(width, height),
            tracker: RoomTracker::new(),
            params: SegmentParams::default(),
            rooms_dirty: true,
            frames: Vec::new(),
            // Preliminary look around before the first request.
            panorama: Some(Panorama::new(cell)),
            panoramas: PanoramaLog::default(),
            node: Node::new(id, starts, goals, timing),
            history: Vec::new(),
            last_proposal: None,
            plan: None,
            entered: BTreeSet::new(),
            stuck: None,
            dead_frontier: BTreeSet::new(),
            unreachable: BTreeMap::new(),
            last_request: None,
            trigger_at: None,
            path_length: 0,
            cell,
            heading: crate::grid::Heading::NORTH,
        }
    }

    pub fn cell(&self) -> Pos {
        self.cell
    }

    pub fn perceive(&mut self, obs: &Observation) {
        self.cell = obs.pose.cell;
        self.heading = obs.pose.heading;
        let summary = self.map.integrate(obs).expect("observation lies inside the map");
        if summary.changed() {
            self.rooms_dirty = true;
        }
        self.node.holding.cell = self.cell;
        if self.map.is_frontier(self.cell) {
            self.dead_frontier.insert(self.cell);
        }
    }

    fn live_frontier(&self, p: Pos) -> bool {
        self.map.is_frontier(p) && !self.dead_frontier.contains(&p)
    }

    fn frontier(&self) -> Vec<Pos> {
        self.map
            .frontier_cells()
            .into_iter()
            .filter(|p| !self.dead_frontier.contains(p))
            .collect()
    }

    /// Targets this agent still believes are missing.
    pub fn remaining(&self) -> BTreeSet<String> {
        self.node
            .progress
            .remaining()
            .difference(&self.node.holding.found)
            .cloned()
            .collect()
    }

    pub fn note_found(&mut self, class: &str) {
        self.node.note_found(class);
    }

    /// Re-segments after map changes and describes rooms that lack a
    /// description.
    pub fn refresh_rooms(&mut self, describer: &dyn RoomDescriber) -> usize {
        if !self.rooms_dirty {
            return 0;
        }
        self.rooms_dirty = false;
        self.tracker.update(&self.map, &self.params);
        let targets: Vec<String> = self.remaining().into_iter().collect();
        let mut described = Vec::new();
        let mut degraded = 0;
        for room in self.tracker.rooms().iter().filter(|r| r.description.is_none()) {
            let empty;
            let frame = match best_frame(room.room_id, &room.mask, &self.frames) {
                Ok(f) => f,
                Err(_) => {
                    empty = FrameRecord {
                        agent: self.id,
                        waypoint_cell: self.cell,
                        heading: self.heading,
                        visible_cells: Vec::new(),
                        visible_objects: Vec::new(),
                        tick: 0,
                    };
                    &empty
                }
            };
            if let Ok(d) = rooms::describe(room, frame, &self.map, &targets, describer) {
                degraded += usize::from(d.degraded);
                described.push((room.room_id, d));
            }
        }
        for (id, d) in described {
            if let Some(r) = self.tracker.get_mut(id) {
                r.description = Some(d);
            }
        }
        degraded
    }

    fn map_signature(&self) -> usize {
        self.map.known_cells() + self.node.holding.found.len()
    }

    /// Nearest known instance of a missing target.
    fn visible_target(&self) -> Option<(String, Pos)> {
        let mut best: Option<(u32, String, Pos)> = None;
        let sig = self.map_signature();
        for t in self.remaining() {
            for &p in self.map.instances(&t).into_iter().flatten() {
                if self.unreachable.get(&p) == Some(&sig) {
                    continue;
                }
                let d = p.manhattan(self.cell);
                if best.as_ref().is_none_or(|(bd, _, bp)| (d, p) < (*bd, *bp)) {
                    best = Some((d, t.clone(), p));
                }
            }
        }
        best.map(|(_, t, p)| (t, p))
    }

    /// Explored fraction, counting a room whose frontier is all dead as done.
    fn explored(&self, room: &RoomSegment) -> f64 {
        let live = rooms::room_frontier(&self.map, &room.mask, &room.door_cells)
            .into_iter()
            .any(|p| !self.dead_frontier.contains(&p));
        if live { room.explored } else { 1.0 }
    }

    fn local_room(&self, anchor: Pos) -> Option<&RoomSegment> {
        self.tracker.rooms().iter().find(|r| r.mask.contains(&anchor))
    }

    fn intent(&mut self, now: u64) -> Intent {
        if self.panorama.is_some() {
            return Intent::Panorama;
        }
        if let Some((class, p)) = self.visible_target() {
            if p.manhattan(self.cell) <= 1 {
                return Intent::Declare(class);
            }
            let goals: BTreeSet<Pos> = std::iter::once(p)
                .chain(p.neighbors4())
                .filter(|&c| self.map.is_free(c))
                .collect();
            if !goals.is_empty() {
                return Intent::Approach(p, goals);
            }
        }
        let assigned = self.node.holding.assigned;
        if self.stuck == Some(assigned) {
            return Intent::Idle;
        }
        match assigned {
            None => Intent::Idle,
            Some(RoomRef::Frontier(c)) => {
                if self.live_frontier(c) {
                    Intent::Go(BTreeSet::from([c]))
                } else {
                    Intent::Idle
                }
            }
            Some(r @ RoomRef::Room(anchor)) => {
                let Some(room) = self.local_room(anchor) else {
                    if self.map.is_free(anchor) {
                        return Intent::Go(BTreeSet::from([anchor]));
                    }
                    // Head for the frontier closest to a room only teammates know.
                    return self
                        .frontier()
                        .into_iter()
                        .min_by(|a, b| a.euclidean(anchor).total_cmp(&b.euclidean(anchor)).then(a.cmp(b)))
                        .map_or(Intent::Idle, |f| Intent::Go(BTreeSet::from([f])));
                };
                if self.explored(room) >= 1.0 {
                    return Intent::Idle;
                }
                let (mask, doors) = (room.mask.clone(), room.door_cells.clone());
                if mask.contains(&self.cell) {
                    self.plan = None;
                    if self.entered.insert(r) && self.panoramas.due(self.cell, now) {
                        self.panorama = Some(Panorama::new(self.cell));
                        return Intent::Panorama;
                    }
                    let goals: BTreeSet<Pos> = rooms::room_frontier(&self.map, &mask, &doors)
                        .into_iter()
                        .filter(|p| !self.dead_frontier.contains(p))
                        .collect();
                    return if goals.is_empty() { Intent::Idle } else { Intent::Go(goals) };
                }
                self.travel(r, &mask)
            }
        }
    }

    /// Follows the waypoint route toward a room, planning it on first use.
    fn travel(&mut self, r: RoomRef, mask: &BTreeSet<Pos>) -> Intent {
        if self.plan.as_ref().is_none_or(|(p, _)| *p != r) {
            self.plan = self.plan_to(mask).map(|p| (r, p));
        }
        match &mut self.plan {
            Some((_, plan)) => {
                plan.advance(self.cell);
                let goal = plan.mid_term_goal();
                if self.map.is_free(goal) {
                    Intent::Go(BTreeSet::from([goal]))
                } else {
                    self.plan = None;
                    Intent::Go(mask.clone())
                }
            }
            None => Intent::Go(mask.clone()),
        }
    }

    fn plan_to(&self, mask: &BTreeSet<Pos>) -> Option<PlanState> {
        let graph = topo_graph(&self.map, DEFAULT_SAMPLE_SPACING).ok()?;
        let from_pose = motion::fmm(&self.map, &BTreeSet::from([self.cell])).ok()?;
        let destination = match motion::select_entry_waypoint(&graph, mask, &from_pose) {
            Ok(w) => graph.waypoints[w].cell,
            Err(_) => mask
                .iter()
                .copied()
                .filter(|p| from_pose.at(*p).is_finite())
                .min_by(|a, b| from_pose.at(*a).total_cmp(&from_pose.at(*b)).then(a.cmp(b)))?,
        };
        PlanState::new(&self.map, &graph, self.cell, destination).ok()
    }

    fn navigate(&mut self, goals: &BTreeSet<Pos>) -> Option<Action> {
        let goals: BTreeSet<Pos> = goals.iter().copied().filter(|p| self.map.is_free(*p)).collect();
        if goals.is_empty() {
            return None;
        }
        let field = motion::fmm(&self.map, &goals).ok()?;
        motion::next_action(self.cell, self.heading, &field).ok()
    }

    /// True when the agent has nothing left to do and may ask for help.
    pub fn idle(&mut self, now: u64) -> bool {
        self.intent(now) == Intent::Idle
    }

    /// Whether to send a request now: idle, not already waiting, and with
    /// something new to report.
    pub fn wants_help(&mut self, now: u64) -> bool {
        if self.node.awaiting() || self.node.recovering() || !self.idle(now) {
            return false;
        }
        match self.last_request {
            None => true,
            Some((t, sig)) => sig != self.map_signature() || now >= t + REPOLL_TICKS,
        }
    }

    pub fn mark_requested(&mut self, now: u64) {
        self.last_request = Some((now, self.map_signature()));
        self.trigger_at = None;
    }

    pub fn act(&mut self, now: u64, obs: &Observation) -> Action {
        let i = self.intent(now);
        match i {
            Intent::Panorama => {
                let p = self.panorama.as_mut().expect("panorama active");
                let action = p.on_tick(obs);
                if p.complete() {
                    let p = self.panorama.take().expect("panorama active");
                    self.panoramas.record(p.waypoint, now);
                    self.frames.extend(p.frames);
                    self.rooms_dirty = true;
                }
                action
            }
            Intent::Declare(class) => Action::Declare(class),
            Intent::Go(goals) => match self.navigate(&goals) {
                Some(Action::NoOp) | None => {
                    // Unreachable, or arrived without the goal resolving.
                    self.stuck = Some(self.node.holding.assigned);
                    Action::NoOp
                }
                Some(a) => a,
            },
            Intent::Approach(p, goals) => match self.navigate(&goals) {
                Some(Action::NoOp) | None => {
                    self.unreachable.insert(p, self.map_signature());
                    Action::NoOp
                }
                Some(a) => a,
            },
            Intent::Idle => Action::NoOp,
        }
    }

    fn reset_plan(&mut self) {
        self.plan = None;
        self.stuck = None;
    }

    pub fn on_event(&mut self, now: u64, e: &NodeEvent) {
        match e {
            NodeEvent::Directive { directive, .. } => {
                if let Some(p) = self.last_proposal.take() {
                    self.history.push(HistoryEntry {
                        tick: now,
                        proposal: p,
                        directive: directive.clone(),
                    });
                    if self.history.len() > HISTORY_LEN {
                        self.history.remove(0);
                    }
                }
                self.reset_plan();
            }
            NodeEvent::Interrupted { .. } => self.reset_plan(),
            _ => {}
        }
    }

    pub fn set_proposal(&mut self, p: Proposal) {
        self.last_proposal = Some(p);
    }

    fn room_ref(room: &RoomSegment) -> Option<RoomRef> {
        anchor_of(&room.mask).map(RoomRef::Room)
    }

    fn label(room: &RoomSegment) -> &str {
        room.description.as_ref().map_or(UNKNOWN_ROOM, |d| d.label.as_str())
    }

    /// Member-side inputs for a proposal, the options to forward and the
    /// knowledge to contribute.
    pub fn member_context(&self, now: u64, goals: &[String], table: &CooccurrenceTable) -> (MemberContext, Contribution) {
        let remaining = self.remaining();
        let from_pose: Option<DistanceField> = motion::fmm(&self.map, &BTreeSet::from([self.cell])).ok();
        let dist = |cells: &mut dyn Iterator<Item = Pos>| -> f64 {
            from_pose
                .as_ref()
                .map_or(f64::INFINITY, |f| cells.map(|p| f.at(p)).fold(f64::INFINITY, f64::min))
        };
        let mut options = Vec::new();
        for room in self.tracker.rooms().iter().filter(|r| self.explored(r) < 1.0) {
            let d = dist(&mut room.mask.iter().copied());
            if let (Some(r), true) = (Self::room_ref(room), d.is_finite()) {
                options.push(RoomOption {
                    room: r,
                    label: Self::label(room).to_string(),
                    explored: self.explored(room),
                    distance: d,
                });
            }
        }
        if let Some(f) = from_pose.as_ref() {
            let nearest = self
                .frontier()
                .into_iter()
                .filter(|p| f.at(*p).is_finite())
                .min_by(|a, b| f.at(*a).total_cmp(&f.at(*b)).then(a.cmp(b)));
            if let Some(c) = nearest {
                options.push(RoomOption {
                    room: RoomRef::Frontier(c),
                    label: UNKNOWN_ROOM.to_string(),
                    explored: 0.0,
                    distance: f.at(c),
                });
            }
        }
        let summaries = self
            .tracker
            .rooms()
            .iter()
            .filter_map(|room| {
                Some(room_summary(
                    Self::room_ref(room)?,
                    Self::label(room),
                    self.explored(room),
                    room.mask.len(),
                    room.description.as_ref(),
                    &remaining,
                    table,
                ))
            })
            .collect();
        let current_room = self
            .tracker
            .room_of(self.cell)
            .and_then(Self::room_ref);
        let mut progress = self.node.progress.clone();
        for t in &self.node.holding.found {
            progress.mark_found(t);
        }
        let ctx = MemberContext {
            agent: self.id,
            progress,
            state: MemberState {
                cell: self.cell,
                current_room,
                assigned: self.node.holding.assigned,
                rooms: summaries,
            },
            goals: goals.to_vec(),
            history: self.history.clone(),
            options,
        };
        let contribution = Contribution {
            agent: self.id,
            cell: self.cell,
            tick: now,
            rooms: self
                .tracker
                .rooms()
                .iter()
                .filter_map(|room| {
                    Some(RoomReport {
                        anchor: anchor_of(&room.mask)?,
                        mask: room.mask.clone(),
                        explored: self.explored(room),
                        description: room.description.clone(),
                    })
                })
                .collect(),
            found: self.node.holding.found.clone(),
        };
        (ctx, contribution)
    }
}
