//! Random craft-world map generation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{bfs_distance, Cell, GridMap, GridState, Legend};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("cannot place {needed} cells on {free} free interior cells")]
    GenerationFailed { needed: usize, free: usize },
}

/// How many of each location to place.
#[derive(Clone, Copy, Debug)]
pub struct CraftCounts {
    pub wood: usize,
    pub grass: usize,
    pub iron: usize,
    pub toolshed: usize,
    pub workbench: usize,
    pub factory: usize,
    pub bridge: usize,
    pub axe: usize,
    pub gold: usize,
    pub gem: usize,
}

impl Default for CraftCounts {
    fn default() -> Self {
        CraftCounts {
            wood: 5,
            grass: 5,
            iron: 5,
            toolshed: 2,
            workbench: 2,
            factory: 2,
            bridge: 1,
            axe: 1,
            gold: 1,
            gem: 1,
        }
    }
}

impl CraftCounts {
    fn glyph_counts(&self) -> [(char, usize); 10] {
        [
            ('w', self.wood),
            ('g', self.grass),
            ('i', self.iron),
            ('t', self.toolshed),
            ('b', self.workbench),
            ('f', self.factory),
            ('r', self.bridge),
            ('x', self.axe),
            ('G', self.gold),
            ('M', self.gem),
        ]
    }

    pub fn total(&self) -> usize {
        self.glyph_counts().iter().map(|&(_, n)| n).sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CraftGenParams {
    pub width: usize,
    pub height: usize,
    pub counts: CraftCounts,
}

impl Default for CraftGenParams {
    fn default() -> Self {
        CraftGenParams { width: 21, height: 21, counts: CraftCounts::default() }
    }
}

const MAX_ATTEMPTS: usize = 64;

/// Deterministically generates a craft map from a seed: a walled rectangle
/// whose interior holds the start cell plus the configured location counts,
/// placed uniformly at random on distinct cells. Regenerates (bounded) until
/// every location is reachable from the start.
pub fn generate_craft_map(seed: u64, params: &CraftGenParams) -> Result<GridMap, GenError> {
    let legend = Legend::craft();
    let interior = (params.width.saturating_sub(2)) * (params.height.saturating_sub(2));
    let needed = params.counts.total() + 1; // locations plus the start
    if needed > interior {
        return Err(GenError::GenerationFailed { needed, free: interior });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let map = place_once(&mut rng, params, &legend);
        if all_reachable(&map) {
            return Ok(map);
        }
    }
    Err(GenError::GenerationFailed { needed, free: interior })
}

fn place_once(rng: &mut ChaCha8Rng, params: &CraftGenParams, legend: &Legend) -> GridMap {
    let (w, h) = (params.width, params.height);
    let mut cells = vec![Cell::Empty; w * h];
    for y in 0..h {
        for x in 0..w {
            if y == 0 || y == h - 1 || x == 0 || x == w - 1 {
                cells[y * w + x] = Cell::Wall;
            }
        }
    }

    let mut free: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == Cell::Empty).collect();
    free.shuffle(rng);
    let mut free = free.into_iter();

    let start_idx = free.next().expect("interior is non-empty");
    cells[start_idx] = Cell::Start;
    for (glyph, count) in params.counts.glyph_counts() {
        let prop = legend.prop_for_glyph(glyph).expect("craft legend glyph");
        for _ in 0..count {
            let idx = free.next().expect("count checked against free cells");
            cells[idx] = Cell::Location(prop);
        }
    }

    let start = GridState { x: (start_idx % w) as u8, y: (start_idx / w) as u8 };
    GridMap {
        width: w,
        height: h,
        cells,
        start,
        props: legend.props().clone(),
        env: legend.env,
    }
}

fn all_reachable(map: &GridMap) -> bool {
    map.open_cells()
        .filter(|&s| matches!(map.cell(s), Cell::Location(_)))
        .all(|loc| bfs_distance(map, map.start(), |s| s == loc, |_| true).is_some())
}
