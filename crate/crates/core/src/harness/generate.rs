//! Random house layouts: recursive splits of a walled rectangle, one door
//! per split wall, objects drawn from the co-occurrence table.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::Pos;
use crate::rooms::CooccurrenceTable;
use crate::world::scenario::{AgentDoc, ObjectDoc, RoomDoc};
use crate::world::ScenarioDoc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HouseParams {
    pub width: usize,
    pub height: usize,
    /// Smallest interior side of a room.
    pub min_side: i32,
    pub agents: usize,
    pub max_steps: u64,
}

impl Default for HouseParams {
    fn default() -> Self {
        Self {
            width: 18,
            height: 12,
            min_side: 3,
            agents: 4,
            max_steps: 2000,
        }
    }
}

/// Inclusive interior rectangle.
#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    walls: BTreeSet<Pos>,
    doors: Vec<Pos>,
    leaves: Vec<Rect>,
    min_side: i32,
}

impl Builder<'_> {
    /// A split line at `c` must not end next to an existing door.
    fn clear_of_doors(&self, vertical: bool, c: i32, r: Rect) -> bool {
        self.doors.iter().all(|d| {
            if vertical {
                !((d.y == r.y0 - 1 || d.y == r.y1 + 1) && (d.x - c).abs() < 2)
            } else {
                !((d.x == r.x0 - 1 || d.x == r.x1 + 1) && (d.y - c).abs() < 2)
            }
        })
    }

    fn split(&mut self, r: Rect, depth: u32) {
        let (w, h) = (r.x1 - r.x0 + 1, r.y1 - r.y0 + 1);
        let m = self.min_side;
        let can_v = w > 2 * m;
        let can_h = h > 2 * m;
        let stop = depth >= 2 && self.rng.random_bool(0.3);
        if (!can_v && !can_h) || stop {
            self.leaves.push(r);
            return;
        }
        let vertical = match (can_v, can_h) {
            (true, true) => w > h || (w == h && self.rng.random_bool(0.5)),
            (v, _) => v,
        };
        let (lo, hi) = if vertical { (r.x0 + m, r.x1 - m) } else { (r.y0 + m, r.y1 - m) };
        let mut lines: Vec<i32> = (lo..=hi).filter(|&c| self.clear_of_doors(vertical, c, r)).collect();
        lines.shuffle(self.rng);
        let Some(&c) = lines.first() else {
            self.leaves.push(r);
            return;
        };
        let door = if vertical {
            for y in r.y0..=r.y1 {
                self.walls.insert(Pos::new(c, y));
            }
            Pos::new(c, self.rng.random_range(r.y0..=r.y1))
        } else {
            for x in r.x0..=r.x1 {
                self.walls.insert(Pos::new(x, c));
            }
            Pos::new(self.rng.random_range(r.x0..=r.x1), c)
        };
        self.walls.remove(&door);
        self.doors.push(door);
        let (a, b) = if vertical {
            (Rect { x1: c - 1, ..r }, Rect { x0: c + 1, ..r })
        } else {
            (Rect { y1: c - 1, ..r }, Rect { y0: c + 1, ..r })
        };
        self.split(a, depth + 1);
        self.split(b, depth + 1);
    }
}

/// A valid multi-room scenario. Every room is reachable through doors and
/// holds at least one object; door cells belong to an adjacent room.
pub fn generate_house(seed: u64, p: &HouseParams) -> ScenarioDoc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (p.width as i32, p.height as i32);
    let mut b = Builder {
        rng: &mut rng,
        walls: BTreeSet::new(),
        doors: Vec::new(),
        leaves: Vec::new(),
        min_side: p.min_side,
    };
    b.split(Rect { x0: 1, y0: 1, x1: w - 2, y1: h - 2 }, 0);
    let Builder { walls, doors, leaves, .. } = b;

    let grid: Vec<String> = (0..h)
        .map(|y| {
            (0..w)
                .map(|x| {
                    let edge = x == 0 || y == 0 || x == w - 1 || y == h - 1;
                    if edge || walls.contains(&Pos::new(x, y)) { '#' } else { '.' }
                })
                .collect()
        })
        .collect();

    let inside = |r: &Rect, q: Pos| q.x >= r.x0 && q.x <= r.x1 && q.y >= r.y0 && q.y <= r.y1;
    let mut door_of: Vec<Vec<[i32; 2]>> = vec![Vec::new(); leaves.len()];
    for d in &doors {
        let owner = leaves
            .iter()
            .position(|r| d.neighbors4().iter().any(|n| inside(r, *n)))
            .expect("a door touches a room");
        door_of[owner].push([d.x, d.y]);
    }

    let table = CooccurrenceTable::bundled();
    let kinds: Vec<&str> = table.kinds().collect();
    let all_classes: Vec<&str> = table.classes().into_iter().collect();
    let mut rooms = Vec::new();
    let mut objects = Vec::new();
    let mut taken = BTreeSet::new();
    for (i, r) in leaves.iter().enumerate() {
        let kind = *kinds.choose(&mut rng).expect("table has kinds");
        let likely: Vec<&str> = all_classes
            .iter()
            .copied()
            .filter(|c| table.weight(kind, c) >= 0.5)
            .collect();
        let pool = if likely.is_empty() { &all_classes } else { &likely };
        let mut cells: Vec<Pos> = (r.y0..=r.y1)
            .flat_map(|y| (r.x0..=r.x1).map(move |x| Pos::new(x, y)))
            .filter(|q| !doors.iter().any(|d| d.manhattan(*q) <= 1))
            .collect();
        cells.shuffle(&mut rng);
        let count = rng.random_range(1..=2usize).min(cells.len());
        for q in cells.into_iter().take(count) {
            let class = *pool.choose(&mut rng).expect("pool is not empty");
            objects.push(ObjectDoc { class: class.to_string(), x: q.x, y: q.y });
            taken.insert(q);
        }
        rooms.push(RoomDoc {
            id: format!("r{i}"),
            kind: Some(kind.to_string()),
            rects: vec![[r.x0, r.y0, r.x1, r.y1]],
            cells: door_of[i].clone(),
        });
    }

    let mut classes: Vec<String> = objects.iter().map(|o| o.class.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    classes.shuffle(&mut rng);
    let n_targets = rng.random_range(1..=3usize).min(classes.len());
    let mut targets: Vec<String> = classes.into_iter().take(n_targets).collect();
    targets.sort();

    let mut free: Vec<Pos> = leaves
        .iter()
        .flat_map(|r| (r.y0..=r.y1).flat_map(move |y| (r.x0..=r.x1).map(move |x| Pos::new(x, y))))
        .filter(|q| !walls.contains(q))
        .collect();
    free.shuffle(&mut rng);
    let agents = free
        .into_iter()
        .take(p.agents)
        .map(|q| AgentDoc {
            x: q.x,
            y: q.y,
            heading: [0u8, 3, 6, 9][rng.random_range(0..4)],
        })
        .collect();

    ScenarioDoc {
        name: Some(format!("house-{seed}")),
        grid,
        resolution_m: 0.25,
        rooms,
        objects,
        agents,
        targets,
        seed,
        max_steps: Some(p.max_steps),
    }
}
