//! Ground-truth environment: terrain, rooms, objects, agent poses, sensing,
//! lockstep action dynamics and sub-task adjudication.

pub mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{line, Grid, Heading, Pos};

pub use scenario::{Diagnostic, ScenarioDoc};

/// Agent identifier; agents are numbered in scenario order.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terrain {
    Free,
    Wall,
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {}", join_diags(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("agent crashed: {0}")]
    AgentCrashed(AgentId),
    #[error("episode already finished at tick {0}")]
    EpisodeOver(u64),
}

fn join_diags(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Ground-truth room.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomGt {
    pub index: usize,
    pub id: String,
    pub kind: Option<String>,
    pub mask: BTreeSet<Pos>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub class: String,
    pub cell: Pos,
    pub room: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPose {
    pub cell: Pos,
    pub heading: Heading,
    pub alive: bool,
}

/// The common target classes and the subset still to be found.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSet {
    classes: Vec<String>,
    remaining: BTreeSet<String>,
}

impl TargetSet {
    pub fn new(classes: Vec<String>) -> Self {
        let remaining = classes.iter().cloned().collect();
        Self { classes, remaining }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn remaining(&self) -> &BTreeSet<String> {
        &self.remaining
    }

    pub fn is_remaining(&self, class: &str) -> bool {
        self.remaining.contains(class)
    }

    fn mark_found(&mut self, class: &str) -> bool {
        self.remaining.remove(class)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "class")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Declare(String),
    NoOp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtaskResult {
    Success,
    Failure,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskOutcome {
    pub agent: AgentId,
    pub declared_class: String,
    pub result: SubtaskResult,
    pub tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    AllFound,
    MaxSteps,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum WorldEvent {
    Moved {
        agent: AgentId,
        from: Pos,
        to: Pos,
    },
    Bump {
        agent: AgentId,
        at: Pos,
        heading: Heading,
    },
    Turned {
        agent: AgentId,
        heading: Heading,
    },
    Subtask(SubtaskOutcome),
    DeclareCooldown {
        agent: AgentId,
        class: String,
        until: u64,
    },
    Rejected {
        agent: AgentId,
        reason: String,
    },
    Crashed {
        agent: AgentId,
        tick: u64,
    },
    EpisodeDone {
        tick: u64,
        reason: DoneReason,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub agent: AgentId,
    pub visible_cells: Vec<(Pos, Terrain)>,
    pub visible_objects: Vec<(String, Pos)>,
    pub pose: AgentPose,
    pub tick: u64,
}

/// Sensor and adjudication parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Sensing range as Chebyshev distance in cells.
    pub sensor_range: u32,
    /// Field of view in degrees centred on the heading; 360 sees all around.
    pub fov_deg: f64,
    /// Manhattan distance within which a declared instance counts as reached.
    pub success_radius: u32,
    /// Ticks an agent must wait after a failed declaration.
    pub declare_cooldown: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            sensor_range: 5,
            fov_deg: 360.0,
            success_radius: 1,
            declare_cooldown: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AgentSlot {
    pose: AgentPose,
    declare_ready_at: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub name: String,
    pub resolution_m: f64,
    pub seed: u64,
    pub max_steps: u64,
    pub config: WorldConfig,
    grid: Grid<Terrain>,
    rooms: Vec<RoomGt>,
    room_of: Grid<Option<usize>>,
    objects: Vec<ObjectInstance>,
    agents: Vec<AgentSlot>,
    targets: TargetSet,
    tick: u64,
    done: Option<DoneReason>,
}

impl World {
    pub fn load(path: impl AsRef<Path>) -> Result<World, WorldError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut world = Self::from_str_doc(&text)?;
        if world.name.is_empty() {
            world.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(world)
    }

    /// Parses and validates a scenario document.
    pub fn from_str_doc(text: &str) -> Result<World, WorldError> {
        let doc = scenario::parse(text).map_err(WorldError::Parse)?;
        Self::from_doc(&doc)
    }

    pub fn from_doc(doc: &ScenarioDoc) -> Result<World, WorldError> {
        let (resolved, diags) = scenario::validate(doc);
        let resolved = match resolved {
            Some(r) if diags.is_empty() => r,
            _ => return Err(WorldError::Invalid(diags)),
        };
        let grid = resolved.grid;
        let mut room_of = Grid::filled(grid.width(), grid.height(), None);
        let rooms: Vec<RoomGt> = doc
            .rooms
            .iter()
            .zip(resolved.room_masks)
            .enumerate()
            .map(|(index, (r, mask))| {
                for &p in &mask {
                    room_of.set(p, Some(index));
                }
                RoomGt {
                    index,
                    id: r.id.clone(),
                    kind: r.kind.clone(),
                    mask,
                }
            })
            .collect();
        let objects = doc
            .objects
            .iter()
            .map(|o| {
                let cell = Pos::new(o.x, o.y);
                ObjectInstance {
                    class: o.class.clone(),
                    cell,
                    room: room_of[cell].expect("validated: every free cell has a room"),
                }
            })
            .collect();
        let agents = doc
            .agents
            .iter()
            .map(|a| AgentSlot {
                pose: AgentPose {
                    cell: Pos::new(a.x, a.y),
                    heading: Heading::new(a.heading).expect("validated heading"),
                    alive: true,
                },
                declare_ready_at: 0,
            })
            .collect();
        let free = grid.cells().iter().filter(|t| **t == Terrain::Free).count();
        let max_steps = doc
            .max_steps
            .unwrap_or_else(|| default_max_steps(free));
        Ok(World {
            name: doc.name.clone().unwrap_or_default(),
            resolution_m: doc.resolution_m,
            seed: doc.seed,
            max_steps,
            config: WorldConfig::default(),
            grid,
            rooms,
            room_of,
            objects,
            agents,
            targets: TargetSet::new(doc.targets.clone()),
            tick: 0,
            done: None,
        })
    }

    /// Keeps only the first `n` agent slots.
    pub fn truncate_team(&mut self, n: usize) {
        self.agents.truncate(n);
    }

    pub fn grid(&self) -> &Grid<Terrain> {
        &self.grid
    }

    pub fn rooms(&self) -> &[RoomGt] {
        &self.rooms
    }

    pub fn room_at(&self, p: Pos) -> Option<usize> {
        self.room_of.get(p).copied().flatten()
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn targets(&self) -> &TargetSet {
        &self.targets
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn done(&self) -> Option<&DoneReason> {
        self.done.as_ref()
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        (0..self.agents.len() as u32).map(AgentId)
    }

    pub fn team_size(&self) -> usize {
        self.agents.len()
    }

    pub fn pose(&self, id: AgentId) -> Result<AgentPose, WorldError> {
        self.agents
            .get(id.0 as usize)
            .map(|a| a.pose)
            .ok_or(WorldError::UnknownAgent(id))
    }

    pub fn is_free(&self, p: Pos) -> bool {
        self.grid.get(p) == Some(&Terrain::Free)
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Pos> + '_ {
        self.grid
            .iter()
            .filter(|(_, t)| **t == Terrain::Free)
            .map(|(p, _)| p)
    }

    /// Crash-stop an agent; its later actions are rejected.
    pub fn kill(&mut self, id: AgentId) -> Result<WorldEvent, WorldError> {
        let slot = self
            .agents
            .get_mut(id.0 as usize)
            .ok_or(WorldError::UnknownAgent(id))?;
        slot.pose.alive = false;
        Ok(WorldEvent::Crashed {
            agent: id,
            tick: self.tick,
        })
    }

    /// Raycast sensing from the agent's current pose. Never mutates.
    pub fn sense(&self, id: AgentId) -> Result<Observation, WorldError> {
        let pose = self.pose(id)?;
        if !pose.alive {
            return Err(WorldError::AgentCrashed(id));
        }
        let visible_cells = self.visible_from(pose.cell, pose.heading);
        let visible: BTreeSet<Pos> = visible_cells.iter().map(|(p, _)| *p).collect();
        let visible_objects = self
            .objects
            .iter()
            .filter(|o| visible.contains(&o.cell))
            .map(|o| (o.class.clone(), o.cell))
            .collect();
        Ok(Observation {
            agent: id,
            visible_cells,
            visible_objects,
            pose,
            tick: self.tick,
        })
    }

    fn visible_from(&self, origin: Pos, heading: Heading) -> Vec<(Pos, Terrain)> {
        let r = self.config.sensor_range as i32;
        let half_fov = self.config.fov_deg / 2.0;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let p = origin.offset(dx, dy);
                let Some(&terrain) = self.grid.get(p) else {
                    continue;
                };
                if (dx, dy) != (0, 0) && half_fov < 180.0 {
                    let angle = f64::from(dx).atan2(f64::from(-dy)).to_degrees();
                    let diff = ((angle - heading.degrees()).rem_euclid(360.0) + 180.0)
                        .rem_euclid(360.0)
                        - 180.0;
                    if diff.abs() > half_fov + 1e-9 {
                        continue;
                    }
                }
                if self.line_of_sight(origin, p) {
                    out.push((p, terrain));
                }
            }
        }
        out
    }

    /// True when every cell strictly between `a` and `b` is free.
    pub fn line_of_sight(&self, a: Pos, b: Pos) -> bool {
        let cells = line(a, b);
        if cells.len() <= 2 {
            return true;
        }
        cells[1..cells.len() - 1].iter().all(|&p| self.is_free(p))
    }

    /// Applies one lockstep tick. Actions run in ascending agent order;
    /// agents without an entry idle.
    pub fn step(
        &mut self,
        actions: &BTreeMap<AgentId, Action>,
    ) -> Result<Vec<WorldEvent>, WorldError> {
        if self.done.is_some() {
            return Err(WorldError::EpisodeOver(self.tick));
        }
        let mut events = Vec::new();
        for (&id, action) in actions {
            let Some(slot) = self.agents.get(id.0 as usize) else {
                events.push(WorldEvent::Rejected {
                    agent: id,
                    reason: "unknown agent".into(),
                });
                continue;
            };
            if !slot.pose.alive {
                events.push(WorldEvent::Rejected {
                    agent: id,
                    reason: "agent crashed".into(),
                });
                continue;
            }
            self.apply(id, action, &mut events);
        }
        self.tick += 1;
        let reason = if self.targets.remaining.is_empty() {
            Some(DoneReason::AllFound)
        } else if self.tick >= self.max_steps {
            Some(DoneReason::MaxSteps)
        } else {
            None
        };
        if let Some(reason) = reason {
            events.push(WorldEvent::EpisodeDone {
                tick: self.tick,
                reason: reason.clone(),
            });
            self.done = Some(reason);
        }
        Ok(events)
    }

    fn apply(&mut self, id: AgentId, action: &Action, events: &mut Vec<WorldEvent>) {
        let idx = id.0 as usize;
        let pose = self.agents[idx].pose;
        match action {
            Action::NoOp => {}
            Action::TurnLeft | Action::TurnRight => {
                let heading = if *action == Action::TurnLeft {
                    pose.heading.left()
                } else {
                    pose.heading.right()
                };
                self.agents[idx].pose.heading = heading;
                events.push(WorldEvent::Turned { agent: id, heading });
            }
            Action::Forward => {
                let next = pose
                    .heading
                    .step()
                    .map(|(dx, dy)| pose.cell.offset(dx, dy))
                    .filter(|&p| self.is_free(p));
                match next {
                    Some(to) => {
                        self.agents[idx].pose.cell = to;
                        events.push(WorldEvent::Moved {
                            agent: id,
                            from: pose.cell,
                            to,
                        });
                    }
                    None => events.push(WorldEvent::Bump {
                        agent: id,
                        at: pose.cell,
                        heading: pose.heading,
                    }),
                }
            }
            Action::Declare(class) => {
                let slot = &self.agents[idx];
                if self.tick < slot.declare_ready_at {
                    events.push(WorldEvent::DeclareCooldown {
                        agent: id,
                        class: class.clone(),
                        until: slot.declare_ready_at,
                    });
                    return;
                }
                let near = self.objects.iter().any(|o| {
                    &o.class == class && o.cell.manhattan(pose.cell) <= self.config.success_radius
                });
                let result = if near && self.targets.mark_found(class) {
                    SubtaskResult::Success
                } else {
                    self.agents[idx].declare_ready_at = self.tick + self.config.declare_cooldown;
                    SubtaskResult::Failure
                };
                events.push(WorldEvent::Subtask(SubtaskOutcome {
                    agent: id,
                    declared_class: class.clone(),
                    result,
                    tick: self.tick,
                }));
            }
        }
    }

    /// Free cells reachable (4-connected) from `start`.
    pub fn reachable_from(&self, start: Pos) -> BTreeSet<Pos> {
        let mut seen = BTreeSet::new();
        if !self.is_free(start) {
            return seen;
        }
        let mut stack = vec![start];
        seen.insert(start);
        while let Some(p) = stack.pop() {
            for n in p.neighbors4() {
                if self.is_free(n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen
    }
}

/// `ceil(10 * sqrt(free_cells))`.
pub fn default_max_steps(free_cells: usize) -> u64 {
    (10.0 * (free_cells as f64).sqrt()).ceil() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r##"
resolution_m = 0.25
targets = ["cup"]
grid = [".....", ".....", ".....", ".....", "....."]
[[rooms]]
id = "all"
rects = [[0, 0, 4, 4]]
[[objects]]
class = "cup"
x = 0
y = 0
[[agents]]
x = 2
y = 2
"##;

    fn tiny() -> World {
        World::from_str_doc(TINY).unwrap()
    }

    fn act(world: &mut World, a: Action) -> Vec<WorldEvent> {
        world
            .step(&BTreeMap::from([(AgentId(0), a)]))
            .unwrap()
    }

    #[test]
    fn minimal_scenario_loads() {
        let w = tiny();
        assert_eq!(w.targets().classes().len(), 1);
        assert_eq!(w.rooms().len(), 1);
        assert_eq!(w.pose(AgentId(0)).unwrap().cell, Pos::new(2, 2));
        assert_eq!(w.max_steps, default_max_steps(25));
    }

    #[test]
    fn agent_on_wall_rejected() {
        let doc = TINY.replace(r#"".....", ".....", ".....", ".....", "....."]"#, r#"".....", ".....", "..#..", ".....", "....."]"#);
        let err = World::from_str_doc(&doc).unwrap_err();
        match err {
            WorldError::Invalid(d) => {
                assert!(d.iter().any(|d| d.message.contains("agent 0 on non-free cell")
                    && d.cells == vec![Pos::new(2, 2)]));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn overlapping_rooms_name_both() {
        let doc = format!(
            "{TINY}\n[[rooms]]\nid = \"dup\"\nrects = [[0, 0, 1, 1]]\n"
        );
        let WorldError::Invalid(d) = World::from_str_doc(&doc).unwrap_err() else {
            panic!("expected invalid");
        };
        assert!(d
            .iter()
            .any(|d| d.message.contains("\"all\"") && d.message.contains("\"dup\"")));
    }

    #[test]
    fn forward_into_wall_bumps() {
        let mut w = tiny();
        // Heading north from (2,2): two free cells then the grid edge.
        act(&mut w, Action::Forward);
        act(&mut w, Action::Forward);
        let ev = act(&mut w, Action::Forward);
        assert!(matches!(ev[0], WorldEvent::Bump { .. }));
        assert_eq!(w.pose(AgentId(0)).unwrap().cell, Pos::new(2, 0));
    }

    #[test]
    fn diagonal_heading_cannot_move() {
        let mut w = tiny();
        act(&mut w, Action::TurnRight);
        let ev = act(&mut w, Action::Forward);
        assert!(matches!(ev[0], WorldEvent::Bump { .. }));
    }

    #[test]
    fn declare_far_fails_and_cools_down() {
        let mut w = tiny();
        let ev = act(&mut w, Action::Declare("cup".into()));
        let WorldEvent::Subtask(out) = &ev[0] else {
            panic!("expected outcome");
        };
        assert_eq!(out.result, SubtaskResult::Failure);
        assert!(w.targets().is_remaining("cup"));
        let ev = act(&mut w, Action::Declare("cup".into()));
        assert!(matches!(ev[0], WorldEvent::DeclareCooldown { until: 10, .. }));
        assert!(w.done().is_none());
    }

    #[test]
    fn declare_adjacent_succeeds_and_ends() {
        let mut w = tiny();
        w.agents[0].pose.cell = Pos::new(1, 0);
        let ev = act(&mut w, Action::Declare("cup".into()));
        assert!(matches!(
            &ev[0],
            WorldEvent::Subtask(SubtaskOutcome { result: SubtaskResult::Success, .. })
        ));
        assert!(w.targets().remaining().is_empty());
        assert!(matches!(
            ev.last(),
            Some(WorldEvent::EpisodeDone { reason: DoneReason::AllFound, .. })
        ));
        assert!(matches!(
            w.step(&BTreeMap::new()),
            Err(WorldError::EpisodeOver(1))
        ));
    }

    #[test]
    fn crashed_agent_rejected() {
        let mut w = tiny();
        w.kill(AgentId(0)).unwrap();
        assert!(matches!(w.sense(AgentId(0)), Err(WorldError::AgentCrashed(_))));
        let ev = act(&mut w, Action::Forward);
        assert!(matches!(ev[0], WorldEvent::Rejected { .. }));
        assert_eq!(w.pose(AgentId(0)).unwrap().cell, Pos::new(2, 2));
    }

    #[test]
    fn object_outside_range_not_seen() {
        let mut w = tiny();
        w.config.sensor_range = 1;
        let obs = w.sense(AgentId(0)).unwrap();
        assert!(obs.visible_objects.is_empty());
        w.config.sensor_range = 2;
        let obs = w.sense(AgentId(0)).unwrap();
        assert_eq!(obs.visible_objects, vec![("cup".to_string(), Pos::new(0, 0))]);
    }

    #[test]
    fn narrow_fov_cone() {
        let mut w = tiny();
        w.config.fov_deg = 90.0;
        let obs = w.sense(AgentId(0)).unwrap();
        // Facing north: nothing below the agent's row is visible.
        assert!(obs.visible_cells.iter().all(|(p, _)| p.y <= 2));
        assert!(obs.visible_cells.iter().any(|(p, _)| *p == Pos::new(2, 0)));
        assert!(!obs.visible_cells.iter().any(|(p, _)| *p == Pos::new(0, 2)));
    }

    fn open_room(n: usize, agent: (i32, i32), walls: &[(i32, i32)]) -> World {
        let m = n - 1;
        let grid: Vec<String> = (0..n as i32)
            .map(|y| {
                (0..n as i32)
                    .map(|x| if walls.contains(&(x, y)) { '#' } else { '.' })
                    .collect::<String>()
            })
            .map(|row| format!("{row:?}"))
            .collect();
        let doc = format!(
            "resolution_m = 0.25\ntargets = [\"cup\"]\ngrid = [{}]\n[[rooms]]\nid = \"all\"\nrects = [[0, 0, {m}, {m}]]\n\
             [[objects]]\nclass = \"cup\"\nx = 0\ny = 0\n[[agents]]\nx = {}\ny = {}\n",
            grid.join(", "),
            agent.0,
            agent.1
        );
        World::from_str_doc(&doc).unwrap()
    }

    #[test]
    fn open_grid_sees_the_chebyshev_ball() {
        let mut w = open_room(9, (4, 4), &[]);
        w.config.sensor_range = 3;
        let seen: BTreeSet<Pos> = w.sense(AgentId(0)).unwrap().visible_cells.iter().map(|(p, _)| *p).collect();
        let ball: BTreeSet<Pos> = (0..9)
            .flat_map(|y| (0..9).map(move |x| Pos::new(x, y)))
            .filter(|p| (p.x - 4).abs().max((p.y - 4).abs()) <= 3)
            .collect();
        assert_eq!(seen, ball);
    }

    #[test]
    fn wall_ahead_hides_cells_behind_it() {
        let w = open_room(9, (4, 4), &[(4, 3)]);
        let seen: BTreeSet<Pos> = w.sense(AgentId(0)).unwrap().visible_cells.iter().map(|(p, _)| *p).collect();
        assert!(seen.contains(&Pos::new(4, 3)));
        for y in 0..3 {
            assert!(!seen.contains(&Pos::new(4, y)), "(4,{y}) is behind the wall");
        }
    }

    #[test]
    fn house3_rooms_partition_the_free_cells() {
        let w = World::load(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/house3.scn")).unwrap();
        assert_eq!(w.rooms().len(), 3);
        let mut union = BTreeSet::new();
        for r in w.rooms() {
            for p in &r.mask {
                assert!(union.insert(*p), "{p:?} is in two rooms");
            }
        }
        assert_eq!(union, w.free_cells().collect::<BTreeSet<_>>());
    }
}
