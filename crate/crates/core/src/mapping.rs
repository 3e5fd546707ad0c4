//! Per-agent semantic map: occupancy, per-class object layers and
//! last-seen ticks, built from noise-free observations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, Pos};
use crate::world::{Observation, Terrain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    Unknown,
    Free,
    Obstacle,
}

impl From<Terrain> for Occupancy {
    fn from(t: Terrain) -> Self {
        match t {
            Terrain::Free => Occupancy::Free,
            Terrain::Wall => Occupancy::Obstacle,
        }
    }
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("observed cell {0} outside the {1}x{2} map")]
    OutOfBounds(Pos, usize, usize),
    #[error("coverage of an empty mask is undefined")]
    EmptyMask,
    #[error("map dump i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed map dump: {0}")]
    Dump(String),
}

/// What one integration changed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IntegrateSummary {
    pub newly_known: usize,
    pub new_objects: usize,
}

impl IntegrateSummary {
    pub fn changed(&self) -> bool {
        self.newly_known > 0 || self.new_objects > 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticMap {
    occupancy: Grid<Occupancy>,
    semantics: BTreeMap<String, BTreeSet<Pos>>,
    observed_ticks: Grid<Option<u64>>,
    known: usize,
    known_free: usize,
}

impl SemanticMap {
    /// All-unknown map sized to the world bounds.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            occupancy: Grid::filled(width, height, Occupancy::Unknown),
            semantics: BTreeMap::new(),
            observed_ticks: Grid::filled(width, height, None),
            known: 0,
            known_free: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.occupancy.width()
    }

    pub fn height(&self) -> usize {
        self.occupancy.height()
    }

    pub fn occupancy(&self) -> &Grid<Occupancy> {
        &self.occupancy
    }

    pub fn at(&self, p: Pos) -> Occupancy {
        self.occupancy.get(p).copied().unwrap_or(Occupancy::Unknown)
    }

    pub fn is_free(&self, p: Pos) -> bool {
        self.at(p) == Occupancy::Free
    }

    pub fn semantics(&self) -> &BTreeMap<String, BTreeSet<Pos>> {
        &self.semantics
    }

    pub fn instances(&self, class: &str) -> Option<&BTreeSet<Pos>> {
        self.semantics.get(class)
    }

    pub fn last_seen(&self, p: Pos) -> Option<u64> {
        self.observed_ticks.get(p).copied().flatten()
    }

    /// Number of non-unknown cells.
    pub fn known_cells(&self) -> usize {
        self.known
    }

    pub fn known_free_cells(&self) -> usize {
        self.known_free
    }

    /// Free cells with at least one unknown 8-neighbor (in bounds).
    pub fn is_frontier(&self, p: Pos) -> bool {
        self.is_free(p)
            && p.neighbors8()
                .iter()
                .any(|&n| self.occupancy.get(n) == Some(&Occupancy::Unknown))
    }

    pub fn frontier_cells(&self) -> Vec<Pos> {
        self.occupancy
            .positions()
            .filter(|&p| self.is_frontier(p))
            .collect()
    }

    /// Folds an observation in. All cells are bounds-checked before any
    /// write, so a rejected observation leaves the map untouched.
    pub fn integrate(&mut self, obs: &Observation) -> Result<IntegrateSummary, MapError> {
        let (w, h) = (self.width(), self.height());
        for &(p, _) in &obs.visible_cells {
            if !self.occupancy.contains(p) {
                return Err(MapError::OutOfBounds(p, w, h));
            }
        }
        for (_, p) in &obs.visible_objects {
            if !self.occupancy.contains(*p) {
                return Err(MapError::OutOfBounds(*p, w, h));
            }
        }
        let mut summary = IntegrateSummary::default();
        for &(p, terrain) in &obs.visible_cells {
            let occ = Occupancy::from(terrain);
            let slot = self.occupancy.get_mut(p).expect("checked");
            if *slot == Occupancy::Unknown {
                summary.newly_known += 1;
                self.known += 1;
                if occ == Occupancy::Free {
                    self.known_free += 1;
                }
            }
            *slot = occ;
            self.observed_ticks.set(p, Some(obs.tick));
        }
        for (class, p) in &obs.visible_objects {
            // Objects sit on observed free cells; an object reported on a
            // cell the observation did not cover still marks it known.
            if self.at(*p) == Occupancy::Unknown {
                self.occupancy.set(*p, Occupancy::Free);
                self.observed_ticks.set(*p, Some(obs.tick));
                self.known += 1;
                self.known_free += 1;
                summary.newly_known += 1;
            }
            if self.semantics.entry(class.clone()).or_default().insert(*p) {
                summary.new_objects += 1;
            }
        }
        Ok(summary)
    }

    /// Fraction of `mask` cells that are no longer unknown.
    pub fn coverage_fraction<'a>(
        &self,
        mask: impl IntoIterator<Item = &'a Pos>,
    ) -> Result<f64, MapError> {
        let mut total = 0usize;
        let mut known = 0usize;
        for &p in mask {
            total += 1;
            if self.at(p) != Occupancy::Unknown {
                known += 1;
            }
        }
        if total == 0 {
            return Err(MapError::EmptyMask);
        }
        Ok(known as f64 / total as f64)
    }

    /// Classes with an instance on any of `cells`.
    pub fn classes_in(&self, cells: &BTreeSet<Pos>) -> BTreeSet<String> {
        self.semantics
            .iter()
            .filter(|(_, at)| at.iter().any(|p| cells.contains(p)))
            .map(|(c, _)| c.clone())
            .collect()
    }

    /// Writes one binary PGM per channel plus `index.json`.
    ///
    /// Byte layout: `P5\n<w> <h>\n255\n` followed by `w*h` bytes in row-major
    /// order. `occupancy.pgm` uses 0 = obstacle, 128 = unknown, 255 = free;
    /// each `semantic_<n>.pgm` is 255 on cells holding that class and 0
    /// elsewhere. The index lists the class for each semantic channel and
    /// the last-seen tick per cell (`null` when never observed).
    pub fn dump(&self, dir: &Path) -> Result<(), MapError> {
        fs::create_dir_all(dir)?;
        let (w, h) = (self.width(), self.height());
        let occ: Vec<u8> = self
            .occupancy
            .cells()
            .iter()
            .map(|o| match o {
                Occupancy::Obstacle => 0,
                Occupancy::Unknown => 128,
                Occupancy::Free => 255,
            })
            .collect();
        fs::write(dir.join("occupancy.pgm"), pgm(w, h, &occ))?;
        let mut channels = vec![DumpChannel {
            name: "occupancy".into(),
            file: "occupancy.pgm".into(),
            class: None,
        }];
        for (i, (class, cells)) in self.semantics.iter().enumerate() {
            let mut bytes = vec![0u8; w * h];
            for p in cells {
                if let Some(idx) = self.occupancy.index_of(*p) {
                    bytes[idx] = 255;
                }
            }
            let file = format!("semantic_{i}.pgm");
            fs::write(dir.join(&file), pgm(w, h, &bytes))?;
            channels.push(DumpChannel {
                name: format!("semantic_{i}"),
                file,
                class: Some(class.clone()),
            });
        }
        let index = DumpIndex {
            format: DUMP_FORMAT.into(),
            width: w,
            height: h,
            channels,
            observed_ticks: self.observed_ticks.cells().to_vec(),
        };
        let json = serde_json::to_string_pretty(&index).map_err(|e| MapError::Dump(e.to_string()))?;
        fs::write(dir.join("index.json"), json)?;
        Ok(())
    }

    /// Reads a directory written by [`SemanticMap::dump`].
    pub fn load_dump(dir: &Path) -> Result<SemanticMap, MapError> {
        let index: DumpIndex = serde_json::from_slice(&fs::read(dir.join("index.json"))?)
            .map_err(|e| MapError::Dump(e.to_string()))?;
        if index.format != DUMP_FORMAT {
            return Err(MapError::Dump(format!("unsupported format {}", index.format)));
        }
        let (w, h) = (index.width, index.height);
        if index.observed_ticks.len() != w * h {
            return Err(MapError::Dump("observed_ticks length mismatch".into()));
        }
        let mut map = SemanticMap::new(w, h);
        for ch in &index.channels {
            let bytes = read_pgm(&dir.join(&ch.file), w, h)?;
            match &ch.class {
                None => {
                    for (i, b) in bytes.iter().enumerate() {
                        let occ = match b {
                            0 => Occupancy::Obstacle,
                            128 => Occupancy::Unknown,
                            255 => Occupancy::Free,
                            other => {
                                return Err(MapError::Dump(format!("occupancy byte {other}")))
                            }
                        };
                        let p = map.occupancy.pos_of(i);
                        map.occupancy.set(p, occ);
                        if occ != Occupancy::Unknown {
                            map.known += 1;
                        }
                        if occ == Occupancy::Free {
                            map.known_free += 1;
                        }
                    }
                }
                Some(class) => {
                    let cells: BTreeSet<Pos> = bytes
                        .iter()
                        .enumerate()
                        .filter(|(_, b)| **b != 0)
                        .map(|(i, _)| map.occupancy.pos_of(i))
                        .collect();
                    map.semantics.insert(class.clone(), cells);
                }
            }
        }
        map.observed_ticks = Grid::from_vec(w, h, index.observed_ticks);
        Ok(map)
    }
}

const DUMP_FORMAT: &str = "multinav-map-dump/1";

#[derive(Debug, Serialize, Deserialize)]
struct DumpIndex {
    format: String,
    width: usize,
    height: usize,
    channels: Vec<DumpChannel>,
    observed_ticks: Vec<Option<u64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpChannel {
    name: String,
    file: String,
    class: Option<String>,
}

fn pgm(w: usize, h: usize, bytes: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    out
}

fn read_pgm(path: &Path, w: usize, h: usize) -> Result<Vec<u8>, MapError> {
    let data = fs::read(path)?;
    let header = format!("P5\n{w} {h}\n255\n");
    if !data.starts_with(header.as_bytes()) || data.len() != header.len() + w * h {
        return Err(MapError::Dump(format!("bad PGM {}", path.display())));
    }
    Ok(data[header.len()..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Heading;
    use crate::world::{AgentId, AgentPose};

    fn obs(cells: &[(i32, i32, Terrain)], objects: &[(&str, i32, i32)], tick: u64) -> Observation {
        Observation {
            agent: AgentId(0),
            visible_cells: cells.iter().map(|&(x, y, t)| (Pos::new(x, y), t)).collect(),
            visible_objects: objects
                .iter()
                .map(|&(c, x, y)| (c.to_string(), Pos::new(x, y)))
                .collect(),
            pose: AgentPose {
                cell: Pos::new(0, 0),
                heading: Heading::NORTH,
                alive: true,
            },
            tick,
        }
    }

    #[test]
    fn first_integration_marks_only_seen_cells() {
        let mut map = SemanticMap::new(4, 4);
        let o = obs(
            &[(0, 0, Terrain::Free), (1, 0, Terrain::Free), (2, 0, Terrain::Free), (0, 1, Terrain::Free), (1, 1, Terrain::Free)],
            &[],
            3,
        );
        let s = map.integrate(&o).unwrap();
        assert_eq!(s.newly_known, 5);
        assert_eq!(map.known_cells(), 5);
        assert_eq!(map.at(Pos::new(3, 3)), Occupancy::Unknown);
        assert_eq!(map.last_seen(Pos::new(1, 1)), Some(3));
    }

    #[test]
    fn integrate_is_idempotent() {
        let mut once = SemanticMap::new(4, 4);
        let o = obs(&[(0, 0, Terrain::Free), (1, 0, Terrain::Wall)], &[("cup", 0, 0)], 1);
        once.integrate(&o).unwrap();
        let mut twice = once.clone();
        let s = twice.integrate(&o).unwrap();
        assert!(!s.changed());
        assert_eq!(once, twice);
    }

    #[test]
    fn out_of_bounds_rejected_atomically() {
        let mut map = SemanticMap::new(2, 2);
        let o = obs(&[(0, 0, Terrain::Free), (5, 0, Terrain::Free)], &[], 1);
        let err = map.integrate(&o).unwrap_err();
        assert!(matches!(err, MapError::OutOfBounds(p, 2, 2) if p == Pos::new(5, 0)));
        assert_eq!(map.known_cells(), 0);
    }

    #[test]
    fn coverage_fractions() {
        let mut map = SemanticMap::new(10, 1);
        let mask: BTreeSet<Pos> = (0..10).map(|x| Pos::new(x, 0)).collect();
        assert_eq!(map.coverage_fraction(&mask).unwrap(), 0.0);
        let cells: Vec<(i32, i32, Terrain)> = (0..7).map(|x| (x, 0, Terrain::Free)).collect();
        map.integrate(&obs(&cells, &[], 0)).unwrap();
        assert!((map.coverage_fraction(&mask).unwrap() - 0.7).abs() < 1e-12);
        let all: Vec<(i32, i32, Terrain)> = (0..10).map(|x| (x, 0, Terrain::Free)).collect();
        map.integrate(&obs(&all, &[], 1)).unwrap();
        assert_eq!(map.coverage_fraction(&mask).unwrap(), 1.0);
        assert!(matches!(
            map.coverage_fraction(&BTreeSet::new()),
            Err(MapError::EmptyMask)
        ));
    }

    #[test]
    fn dump_round_trip() {
        let mut map = SemanticMap::new(3, 2);
        map.integrate(&obs(
            &[(0, 0, Terrain::Free), (1, 0, Terrain::Wall), (2, 1, Terrain::Free)],
            &[("cup", 0, 0), ("tv", 2, 1)],
            4,
        ))
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        map.dump(dir.path()).unwrap();
        let bytes = fs::read(dir.path().join("occupancy.pgm")).unwrap();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[255, 0, 128, 128, 128, 255]);
        assert_eq!(SemanticMap::load_dump(dir.path()).unwrap(), map);
    }
}
