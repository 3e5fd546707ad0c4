//! Scenario documents (TOML) and their validation.
//!
//! ```toml
//! name = "tiny"
//! resolution_m = 0.25
//! seed = 7
//! max_steps = 400          # optional
//! targets = ["cup"]
//! grid = ["#####", "#...#", "#####"]
//!
//! [[rooms]]
//! id = "hall"
//! rects = [[1, 1, 3, 1]]   # x0, y0, x1, y1 inclusive; wall cells are ignored
//! cells = []               # explicit extra cells
//!
//! [[objects]]
//! class = "cup"
//! x = 1
//! y = 1
//!
//! [[agents]]
//! x = 2
//! y = 1
//! heading = 0
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::{Grid, Heading, Pos};

use super::Terrain;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub name: Option<String>,
    pub grid: Vec<String>,
    pub resolution_m: f64,
    #[serde(default)]
    pub rooms: Vec<RoomDoc>,
    #[serde(default)]
    pub objects: Vec<ObjectDoc>,
    #[serde(default)]
    pub agents: Vec<AgentDoc>,
    pub targets: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_steps: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomDoc {
    pub id: String,
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub rects: Vec<[i32; 4]>,
    #[serde(default)]
    pub cells: Vec<[i32; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDoc {
    pub class: String,
    pub x: i32,
    pub y: i32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDoc {
    pub x: i32,
    pub y: i32,
    #[serde(default)]
    pub heading: u8,
}

/// One validation finding, with the cells it concerns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub message: String,
    pub cells: Vec<Pos>,
}

impl Diagnostic {
    fn new(message: impl Into<String>, cells: Vec<Pos>) -> Self {
        Self {
            message: message.into(),
            cells,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)?;
        if !self.cells.is_empty() {
            let cells: Vec<String> = self.cells.iter().map(ToString::to_string).collect();
            write!(f, " at {}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Validated, resolved scenario content.
pub(crate) struct Resolved {
    pub grid: Grid<Terrain>,
    pub room_masks: Vec<BTreeSet<Pos>>,
}

pub fn parse(text: &str) -> Result<ScenarioDoc, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

pub(crate) fn parse_grid(rows: &[String], diags: &mut Vec<Diagnostic>) -> Option<Grid<Terrain>> {
    let height = rows.len();
    let width = rows.first().map_or(0, |r| r.chars().count());
    if height == 0 || width == 0 {
        diags.push(Diagnostic::new("grid is empty", vec![]));
        return None;
    }
    let mut cells = Vec::with_capacity(width * height);
    let mut ok = true;
    for (y, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            diags.push(Diagnostic::new(
                format!("grid row {y} has {} columns, expected {width}", row.chars().count()),
                vec![],
            ));
            ok = false;
            continue;
        }
        for (x, ch) in row.chars().enumerate() {
            match ch {
                '.' => cells.push(Terrain::Free),
                '#' => cells.push(Terrain::Wall),
                other => {
                    diags.push(Diagnostic::new(
                        format!("unknown grid character {other:?}"),
                        vec![Pos::new(x as i32, y as i32)],
                    ));
                    cells.push(Terrain::Wall);
                }
            }
        }
    }
    ok.then(|| Grid::from_vec(width, height, cells))
}

/// Checks every world invariant; returns all findings rather than the first.
pub(crate) fn validate(doc: &ScenarioDoc) -> (Option<Resolved>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    if !(doc.resolution_m.is_finite() && doc.resolution_m > 0.0) {
        diags.push(Diagnostic::new("resolution_m must be positive", vec![]));
    }
    let Some(grid) = parse_grid(&doc.grid, &mut diags) else {
        return (None, diags);
    };
    let is_free = |p: Pos| grid.get(p) == Some(&Terrain::Free);

    // Room masks: free cells covered by the rects plus explicit cells.
    let mut masks = Vec::with_capacity(doc.rooms.len());
    let mut ids = BTreeSet::new();
    for room in &doc.rooms {
        if !ids.insert(room.id.as_str()) {
            diags.push(Diagnostic::new(format!("duplicate room id {:?}", room.id), vec![]));
        }
        let mut mask = BTreeSet::new();
        for &[x0, y0, x1, y1] in &room.rects {
            if x0 > x1 || y0 > y1 {
                diags.push(Diagnostic::new(
                    format!("room {:?} has an inverted rect", room.id),
                    vec![Pos::new(x0, y0), Pos::new(x1, y1)],
                ));
                continue;
            }
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = Pos::new(x, y);
                    if !grid.contains(p) {
                        diags.push(Diagnostic::new(
                            format!("room {:?} rect leaves the grid", room.id),
                            vec![p],
                        ));
                    } else if is_free(p) {
                        mask.insert(p);
                    }
                }
            }
        }
        for &[x, y] in &room.cells {
            let p = Pos::new(x, y);
            if !is_free(p) {
                diags.push(Diagnostic::new(
                    format!("room {:?} lists non-free cell", room.id),
                    vec![p],
                ));
            } else {
                mask.insert(p);
            }
        }
        if mask.is_empty() {
            diags.push(Diagnostic::new(format!("room {:?} has no free cells", room.id), vec![]));
        }
        masks.push(mask);
    }

    // Partition: pairwise disjoint and covering every free cell.
    let mut owner: BTreeMap<Pos, usize> = BTreeMap::new();
    let mut overlaps: BTreeMap<(usize, usize), Vec<Pos>> = BTreeMap::new();
    for (i, mask) in masks.iter().enumerate() {
        for &p in mask {
            if let Some(&j) = owner.get(&p) {
                overlaps.entry((j, i)).or_default().push(p);
            } else {
                owner.insert(p, i);
            }
        }
    }
    for ((a, b), cells) in overlaps {
        diags.push(Diagnostic::new(
            format!(
                "rooms {:?} and {:?} overlap",
                doc.rooms[a].id, doc.rooms[b].id
            ),
            cells,
        ));
    }
    let uncovered: Vec<Pos> = grid
        .positions()
        .filter(|&p| is_free(p) && !owner.contains_key(&p))
        .collect();
    if !uncovered.is_empty() && !doc.rooms.is_empty() {
        diags.push(Diagnostic::new("free cells not covered by any room", uncovered));
    } else if doc.rooms.is_empty() {
        diags.push(Diagnostic::new("scenario defines no rooms", vec![]));
    }

    for obj in &doc.objects {
        let p = Pos::new(obj.x, obj.y);
        if !grid.contains(p) {
            diags.push(Diagnostic::new(format!("object {:?} outside grid", obj.class), vec![p]));
        } else if !is_free(p) {
            diags.push(Diagnostic::new(format!("object {:?} on wall", obj.class), vec![p]));
        }
    }
    if doc.agents.is_empty() {
        diags.push(Diagnostic::new("scenario has no agents", vec![]));
    }
    for (i, agent) in doc.agents.iter().enumerate() {
        let p = Pos::new(agent.x, agent.y);
        if !is_free(p) {
            diags.push(Diagnostic::new(format!("agent {i} on non-free cell"), vec![p]));
        }
        if Heading::new(agent.heading).is_none() {
            diags.push(Diagnostic::new(
                format!("agent {i} heading {} outside [0,12)", agent.heading),
                vec![p],
            ));
        }
    }
    if doc.targets.is_empty() {
        diags.push(Diagnostic::new("target set is empty", vec![]));
    }
    let mut seen = BTreeSet::new();
    for t in &doc.targets {
        if !seen.insert(t) {
            diags.push(Diagnostic::new(format!("target {t:?} listed twice"), vec![]));
        }
        if !doc.objects.iter().any(|o| &o.class == t) {
            diags.push(Diagnostic::new(format!("target {t:?} has no instance"), vec![]));
        }
    }
    if doc.max_steps == Some(0) {
        diags.push(Diagnostic::new("max_steps must be positive", vec![]));
    }

    if diags.is_empty() {
        (
            Some(Resolved {
                grid,
                room_masks: masks,
            }),
            diags,
        )
    } else {
        (None, diags)
    }
}
