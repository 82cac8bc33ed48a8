use serde::{Deserialize, Serialize};

use crate::geometry::{Cell, GridMask, GRID_CELLS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardProfile {
    /// Robot-friendly component reward.
    #[default]
    Shaped,
    /// +100 on completion, +10 per valid placement, −5 for a placement only the
    /// relaxed (unmasked) rules allow.
    Sparse,
}

pub mod coeff {
    pub const BASE: i32 = 10;
    pub const GROUND_FIRST: i32 = 30;
    pub const GROUND_CONSECUTIVE: i32 = 25;
    pub const GROUND_CONSECUTIVE_MAX: usize = 6;
    pub const ACCESS_CLEAR: i32 = 8;
    pub const ACCESS_BLOCKED: i32 = -30;
    pub const HEIGHT_PER_LEVEL: i32 = -8;
    pub const LOGIC: i32 = 15;
    pub const STRUCTURE_PER_NEIGHBOUR: i32 = 2;

    pub const SPARSE_COMPLETE: i32 = 100;
    pub const SPARSE_VALID: i32 = 10;
    pub const SPARSE_OTHERWISE: i32 = -5;
}

/// Per-component reward of one placement; all values are integers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub base: i32,
    pub ground: i32,
    pub access: i32,
    pub height: i32,
    pub logic: i32,
    pub structure: i32,
}

impl RewardBreakdown {
    pub fn total(&self) -> i32 {
        self.base + self.ground + self.access + self.height + self.logic + self.structure
    }

    pub fn sparse(value: i32) -> Self {
        Self {
            base: value,
            ..Self::default()
        }
    }
}

/// What the shaped reward needs to know about the episode so far.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PlacementHistory {
    pub placements: usize,
    pub ground_placements: usize,
    /// Sum and count of z over the previous placement's cells.
    pub prev_height: Option<(u32, u32)>,
}

pub(crate) fn neighbour_table() -> &'static [GridMask; GRID_CELLS] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[GridMask; GRID_CELLS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|i| {
            let c = Cell::from_index(i);
            let mut m = GridMask::EMPTY;
            for d in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                if let Some(j) = c.offset(Cell::new(d.0, d.1, d.2)).index() {
                    m = m.with(j);
                }
            }
            m
        })
    })
}

/// Distinct occupied cells sharing a face with some cell of `cells`.
pub fn adjacent_blocks(occupied: GridMask, cells: GridMask) -> u32 {
    let table = neighbour_table();
    let around = cells
        .indices()
        .fold(GridMask::EMPTY, |acc, i| acc.union(table[i]));
    GridMask(around.0 & occupied.0 & !cells.0).count()
}

/// Sum and count of z over `cells`.
pub fn height_stats(cells: GridMask) -> (u32, u32) {
    cells
        .cells()
        .fold((0, 0), |(s, n), c| (s + c.z as u32, n + 1))
}

/// Shaped reward for placing `cells` onto `occupied`.
pub fn shaped_reward(
    occupied: GridMask,
    cells: GridMask,
    history: &PlacementHistory,
    vertical_clear: bool,
) -> RewardBreakdown {
    use coeff::*;
    let touches_ground = cells.intersects(GridMask::GROUND);
    let placement_no = history.placements + 1;
    let all_prior_ground = history.ground_placements == history.placements;
    let ground = if !touches_ground {
        0
    } else if history.ground_placements == 0 {
        GROUND_FIRST
    } else if all_prior_ground && (2..=GROUND_CONSECUTIVE_MAX).contains(&placement_no) {
        GROUND_CONSECUTIVE
    } else {
        0
    };

    let max_z = cells.cells().map(|c| c.z).max().unwrap_or(0);
    let (sum, n) = height_stats(cells);
    let logic = match history.prev_height {
        None => 0,
        // mean_now <= mean_prev, cross-multiplied
        Some((ps, pn)) if u64::from(sum) * u64::from(pn) <= u64::from(ps) * u64::from(n) => LOGIC,
        Some(_) => -LOGIC,
    };

    RewardBreakdown {
        base: BASE,
        ground,
        access: if vertical_clear {
            ACCESS_CLEAR
        } else {
            ACCESS_BLOCKED
        },
        height: HEIGHT_PER_LEVEL * max_z,
        logic,
        structure: STRUCTURE_PER_NEIGHBOUR * adjacent_blocks(occupied, cells) as i32,
    }
}
