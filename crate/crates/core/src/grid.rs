//! Cell coordinates, dense 2-D arrays and the 12-way heading ring.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Grid coordinate; `x` is the column and `y` the row (row 0 at the top).
///
/// Ordering is raster order (row-major), which every deterministic
/// tie-break in the crate relies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    /// 4-neighbors in N, E, S, W order.
    pub fn neighbors4(self) -> [Pos; 4] {
        [
            self.offset(0, -1),
            self.offset(1, 0),
            self.offset(0, 1),
            self.offset(-1, 0),
        ]
    }

    /// 8-neighbors, clockwise starting north.
    pub fn neighbors8(self) -> [Pos; 8] {
        [
            self.offset(0, -1),
            self.offset(1, -1),
            self.offset(1, 0),
            self.offset(1, 1),
            self.offset(0, 1),
            self.offset(-1, 1),
            self.offset(-1, 0),
            self.offset(-1, -1),
        ]
    }

    pub fn manhattan(self, other: Pos) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn chebyshev(self, other: Pos) -> u32 {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }

    pub fn euclidean(self, other: Pos) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        dx.hypot(dy)
    }
}

impl Ord for Pos {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Pos {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Dense row-major 2-D array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    cells: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            cells: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, cells: Vec<T>) -> Self {
        assert_eq!(cells.len(), width * height, "grid size mismatch");
        Self {
            width,
            height,
            cells,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    pub fn index_of(&self, p: Pos) -> Option<usize> {
        self.contains(p)
            .then(|| p.y as usize * self.width + p.x as usize)
    }

    pub fn pos_of(&self, index: usize) -> Pos {
        Pos::new((index % self.width) as i32, (index / self.width) as i32)
    }

    pub fn get(&self, p: Pos) -> Option<&T> {
        self.index_of(p).map(|i| &self.cells[i])
    }

    pub fn get_mut(&mut self, p: Pos) -> Option<&mut T> {
        self.index_of(p).map(move |i| &mut self.cells[i])
    }

    /// Writes `value` at `p`; out-of-bounds writes are ignored.
    pub fn set(&mut self, p: Pos, value: T) {
        if let Some(slot) = self.get_mut(p) {
            *slot = value;
        }
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    /// All positions in raster order.
    pub fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.cells.len()).map(|i| self.pos_of(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pos, &T)> + '_ {
        self.cells.iter().enumerate().map(|(i, v)| (self.pos_of(i), v))
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            cells: self.cells.iter().map(f).collect(),
        }
    }
}

impl<T> std::ops::Index<Pos> for Grid<T> {
    type Output = T;

    fn index(&self, p: Pos) -> &T {
        let i = self
            .index_of(p)
            .unwrap_or_else(|| panic!("{p} outside {}x{} grid", self.width, self.height));
        &self.cells[i]
    }
}

/// Number of discrete headings (30 degree increments).
pub const HEADINGS: u8 = 12;

/// One of 12 headings, clockwise from north: 0 = N, 3 = E, 6 = S, 9 = W.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Heading(u8);

impl Heading {
    pub const NORTH: Heading = Heading(0);
    pub const EAST: Heading = Heading(3);
    pub const SOUTH: Heading = Heading(6);
    pub const WEST: Heading = Heading(9);

    pub fn new(index: u8) -> Option<Self> {
        (index < HEADINGS).then_some(Heading(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn right(self) -> Self {
        Heading((self.0 + 1) % HEADINGS)
    }

    pub fn left(self) -> Self {
        Heading((self.0 + HEADINGS - 1) % HEADINGS)
    }

    /// Unit step for the axis-aligned headings; `None` for diagonals.
    pub fn step(self) -> Option<(i32, i32)> {
        match self.0 {
            0 => Some((0, -1)),
            3 => Some((1, 0)),
            6 => Some((0, 1)),
            9 => Some((-1, 0)),
            _ => None,
        }
    }

    /// Axis heading pointing from `from` to the 4-neighbor `to`.
    pub fn toward(from: Pos, to: Pos) -> Option<Self> {
        match (to.x - from.x, to.y - from.y) {
            (0, -1) => Some(Self::NORTH),
            (1, 0) => Some(Self::EAST),
            (0, 1) => Some(Self::SOUTH),
            (-1, 0) => Some(Self::WEST),
            _ => None,
        }
    }

    /// Compass angle in degrees, clockwise from north.
    pub fn degrees(self) -> f64 {
        f64::from(self.0) * 30.0
    }
}

impl TryFrom<u8> for Heading {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Heading::new(value).ok_or_else(|| format!("heading {value} outside [0,12)"))
    }
}

impl From<Heading> for u8 {
    fn from(h: Heading) -> u8 {
        h.0
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bresenham cells from `a` to `b`, both endpoints included.
pub fn line(a: Pos, b: Pos) -> Vec<Pos> {
    let dx = (b.x - a.x).abs();
    let dy = -(b.y - a.y).abs();
    let sx = if a.x < b.x { 1 } else { -1 };
    let sy = if a.y < b.y { 1 } else { -1 };
    let mut err = dx + dy;
    let mut p = a;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push(p);
        if p == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            p.x += sx;
        }
        if e2 <= dx {
            err += dx;
            p.y += sy;
        }
    }
    out
}
