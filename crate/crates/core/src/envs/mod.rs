//! Deterministic gridworld environments and their labelling functions.
//!
//! Two worlds ship: the office (a fixed hand-made map with coffee, mail,
//! office, decoration and four patrol corners) and the craft world (randomly
//! generated maps with raw materials and workstations). The agent walks in
//! the four cardinal directions; walking into a wall leaves it in place.
//! Locations are permanent — task progress lives entirely in the attached
//! reward machine, which keeps the environment Markovian over position.
//!
//! The labelling function is positional: a step emits `{p}` when the arrival
//! cell is the location of proposition `p`, and the empty assignment
//! otherwise.

mod craft;
mod tasks;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::rm::{Prop, PropSet, TruthAssignment};

pub use craft::{generate_craft_map, CraftCounts, CraftGenParams, GenError};
pub use tasks::{craft_tasks, office_tasks, TaskSpec};

/// Text of the default office map, shipped at `maps/office_default.map`.
pub const OFFICE_DEFAULT_MAP: &str = include_str!("../../../../maps/office_default.map");

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EnvId {
    Office,
    Craft,
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvId::Office => write!(f, "office"),
            EnvId::Craft => write!(f, "craft"),
        }
    }
}

/// Map legend: the proposition alphabet of a world and which glyph marks
/// which location.
#[derive(Clone, Debug)]
pub struct Legend {
    pub env: EnvId,
    props: PropSet,
}

impl Legend {
    pub fn office() -> Legend {
        Legend {
            env: EnvId::Office,
            props: PropSet::new(["c", "m", "o", "d", "A", "B", "C", "D"]).unwrap(),
        }
    }

    /// w g i t b f r x G M: wood, grass, iron, toolshed, workbench, factory,
    /// bridge, axe, gold, gem.
    pub fn craft() -> Legend {
        Legend {
            env: EnvId::Craft,
            props: PropSet::new(["w", "g", "i", "t", "b", "f", "r", "x", "G", "M"]).unwrap(),
        }
    }

    pub fn for_env(env: EnvId) -> Legend {
        match env {
            EnvId::Office => Legend::office(),
            EnvId::Craft => Legend::craft(),
        }
    }

    pub fn props(&self) -> &PropSet {
        &self.props
    }

    fn prop_for_glyph(&self, glyph: char) -> Option<Prop> {
        let mut buf = [0u8; 4];
        self.props.get(glyph.encode_utf8(&mut buf))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Cell {
    Wall,
    Empty,
    Start,
    Location(Prop),
}

/// Agent position: `x` is the column, `y` the row, both zero-based.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct GridState {
    pub x: u8,
    pub y: u8,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum GridAction {
    North,
    South,
    East,
    West,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::North,
        GridAction::South,
        GridAction::East,
        GridAction::West,
    ];

    pub fn index(self) -> usize {
        match self {
            GridAction::North => 0,
            GridAction::South => 1,
            GridAction::East => 2,
            GridAction::West => 3,
        }
    }

    pub fn from_index(i: usize) -> GridAction {
        GridAction::ALL[i]
    }

    fn delta(self) -> (i16, i16) {
        match self {
            GridAction::North => (0, -1),
            GridAction::South => (0, 1),
            GridAction::East => (1, 0),
            GridAction::West => (-1, 0),
        }
    }
}

impl fmt::Display for GridAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            GridAction::North => 'N',
            GridAction::South => 'S',
            GridAction::East => 'E',
            GridAction::West => 'W',
        };
        write!(f, "{c}")
    }
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("row {row} has {got} columns, expected {want}")]
    NotRectangular { row: usize, got: usize, want: usize },
    #[error("map has no start cell")]
    NoStart,
    #[error("more than one start cell (second at row {row}, column {col})")]
    MultipleStarts { row: usize, col: usize },
    #[error("border is open at row {row}, column {col}")]
    OpenBorder { row: usize, col: usize },
    #[error("unknown glyph `{glyph}` at row {row}, column {col}")]
    UnknownGlyph { glyph: char, row: usize, col: usize },
    #[error("map must be at least 3x3, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
}

/// A parsed grid. Cells are stored row-major; the border is all wall.
#[derive(Clone, Debug)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    start: GridState,
    props: PropSet,
    env: EnvId,
}

impl GridMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn env(&self) -> EnvId {
        self.env
    }

    /// The environment's proposition alphabet (from the legend).
    pub fn props(&self) -> &PropSet {
        &self.props
    }

    pub fn start(&self) -> GridState {
        self.start
    }

    pub fn cell(&self, s: GridState) -> Cell {
        self.cells[s.y as usize * self.width + s.x as usize]
    }

    pub fn is_open(&self, s: GridState) -> bool {
        !matches!(self.cell(s), Cell::Wall)
    }

    /// Dense index of a position; used to key q-tables and value vectors.
    pub fn state_index(&self, s: GridState) -> usize {
        s.y as usize * self.width + s.x as usize
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn open_cells(&self) -> impl Iterator<Item = GridState> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).filter_map(move |x| {
                let s = GridState { x: x as u8, y: y as u8 };
                self.is_open(s).then_some(s)
            })
        })
    }

    /// Positions of every location cell carrying proposition `p`.
    pub fn locations_of(&self, p: Prop) -> Vec<GridState> {
        self.open_cells()
            .filter(|&s| matches!(self.cell(s), Cell::Location(q) if q == p))
            .collect()
    }

    /// Renders back to the ASCII format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let s = GridState { x: x as u8, y: y as u8 };
                let ch = match self.cell(s) {
                    Cell::Wall => 'X',
                    Cell::Empty => '.',
                    Cell::Start => 'S',
                    Cell::Location(p) => self.props.name(p).chars().next().unwrap(),
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Parses an ASCII map under the given legend. `X` is wall, `.` empty, `S`
/// the unique start, any other letter the location of the proposition with
/// that name.
pub fn load_map(text: &str, legend: &Legend) -> Result<GridMap, MapError> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let height = rows.len();
    let width = rows.first().map_or(0, |r| r.chars().count());
    if height < 3 || width < 3 {
        return Err(MapError::TooSmall { width, height });
    }
    let mut cells = Vec::with_capacity(width * height);
    let mut start = None;
    for (y, row) in rows.iter().enumerate() {
        let chars: Vec<char> = row.chars().collect();
        if chars.len() != width {
            return Err(MapError::NotRectangular { row: y + 1, got: chars.len(), want: width });
        }
        for (x, &ch) in chars.iter().enumerate() {
            let border = y == 0 || y == height - 1 || x == 0 || x == width - 1;
            let cell = match ch {
                'X' => Cell::Wall,
                '.' => Cell::Empty,
                'S' => {
                    if start.is_some() {
                        return Err(MapError::MultipleStarts { row: y + 1, col: x + 1 });
                    }
                    start = Some(GridState { x: x as u8, y: y as u8 });
                    Cell::Start
                }
                other => match legend.prop_for_glyph(other) {
                    Some(p) => Cell::Location(p),
                    None => {
                        return Err(MapError::UnknownGlyph { glyph: other, row: y + 1, col: x + 1 })
                    }
                },
            };
            if border && cell != Cell::Wall {
                return Err(MapError::OpenBorder { row: y + 1, col: x + 1 });
            }
            cells.push(cell);
        }
    }
    let start = start.ok_or(MapError::NoStart)?;
    Ok(GridMap {
        width,
        height,
        cells,
        start,
        props: legend.props.clone(),
        env: legend.env,
    })
}

/// One deterministic move: one cell in direction `a`, staying put when the
/// destination is a wall. There are no environment-terminal states.
pub fn env_step(map: &GridMap, s: GridState, a: GridAction) -> GridState {
    let (dx, dy) = a.delta();
    let nx = s.x as i16 + dx;
    let ny = s.y as i16 + dy;
    // border is wall, so in-range is guaranteed for open states
    let next = GridState { x: nx as u8, y: ny as u8 };
    if map.is_open(next) {
        next
    } else {
        s
    }
}

/// Positional labelling: the truth assignment of a step depends only on the
/// arrival cell.
pub fn label(map: &GridMap, _s: GridState, _a: GridAction, s_next: GridState) -> TruthAssignment {
    match map.cell(s_next) {
        Cell::Location(p) => TruthAssignment::singleton(p),
        _ => TruthAssignment::EMPTY,
    }
}

/// An environment bundle: the grid plus its (identified) labelling function.
#[derive(Clone, Debug)]
pub struct GridEnv {
    pub map: Arc<GridMap>,
    pub labelling_id: String,
}

impl GridEnv {
    pub fn new(map: Arc<GridMap>) -> GridEnv {
        let labelling_id = format!("{}:arrival", map.env());
        GridEnv { map, labelling_id }
    }

    /// The default office world.
    pub fn office_default() -> GridEnv {
        let map = load_map(OFFICE_DEFAULT_MAP, &Legend::office())
            .expect("shipped office map is well formed");
        GridEnv::new(Arc::new(map))
    }

    pub fn label(&self, s: GridState, a: GridAction, s_next: GridState) -> TruthAssignment {
        label(&self.map, s, a, s_next)
    }

    pub fn props(&self) -> &PropSet {
        self.map.props()
    }
}

/// Grid BFS distance from `from` to the nearest position satisfying `goal`,
/// treating walls and any position failing `passable` as blocked. Used by
/// path oracles and the map generator.
pub fn bfs_distance(
    map: &GridMap,
    from: GridState,
    goal: impl Fn(GridState) -> bool,
    passable: impl Fn(GridState) -> bool,
) -> Option<usize> {
    use std::collections::VecDeque;
    if goal(from) {
        return Some(0);
    }
    let mut seen = vec![false; map.n_cells()];
    let mut queue = VecDeque::new();
    seen[map.state_index(from)] = true;
    queue.push_back((from, 0usize));
    while let Some((s, dist)) = queue.pop_front() {
        for a in GridAction::ALL {
            let n = env_step(map, s, a);
            if n == s || seen[map.state_index(n)] {
                continue;
            }
            if goal(n) {
                return Some(dist + 1);
            }
            if !passable(n) {
                // goal cells may be impassable-through; mark visited anyway
                seen[map.state_index(n)] = true;
                continue;
            }
            seen[map.state_index(n)] = true;
            queue.push_back((n, dist + 1));
        }
    }
    None
}

#[cfg(test)]
mod env_tests;
