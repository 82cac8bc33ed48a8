//! Exhaustive exact-cover search over the Soma pieces, used as ground truth for
//! the environment's mask and for solvability of curriculum levels.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ActionIndex, Env, EnvState, Level, OrderPolicy, NUM_ACTIONS};
use crate::geometry::{
    enumerate_rotations, Cell, GridMask, OrientationTable, PieceId, GRID_CELLS, RAW_ORIENTATIONS,
};
use crate::rng::{stream, Stream};

/// Owner of each cell; `None` outside the solved region.
pub type OwnerMap = [Option<PieceId>; GRID_CELLS];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PiecePlacement {
    pub piece: PieceId,
    /// Global orientation id.
    pub orientation: usize,
    pub anchor: Cell,
}

impl PiecePlacement {
    pub fn action(&self) -> ActionIndex {
        ActionIndex::from_parts(self.orientation, self.anchor.index().expect("anchor in grid"))
            .expect("valid orientation id")
    }

    pub fn cells(&self) -> Option<GridMask> {
        self.action().cells()
    }
}

/// One piece placement per piece, sorted by piece.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Solution {
    pub placements: Vec<PiecePlacement>,
}

impl Solution {
    pub fn new(mut placements: Vec<PiecePlacement>) -> Self {
        placements.sort();
        Self { placements }
    }

    pub fn owner_map(&self) -> OwnerMap {
        let mut owners = [None; GRID_CELLS];
        for p in &self.placements {
            if let Some(cells) = p.cells() {
                for i in cells.indices() {
                    owners[i] = Some(p.piece);
                }
            }
        }
        owners
    }

    pub fn covered(&self) -> GridMask {
        self.placements
            .iter()
            .filter_map(PiecePlacement::cells)
            .fold(GridMask::EMPTY, GridMask::union)
    }
}

/// Completeness and non-overlap over the whole grid.
pub fn verify(sol: &Solution) -> bool {
    verify_region(sol, GridMask::FULL)
}

/// Every placement lies in the grid, none overlap, each piece appears once,
/// and together they cover exactly `region`.
pub fn verify_region(sol: &Solution, region: GridMask) -> bool {
    let mut seen = [false; 7];
    let mut covered = GridMask::EMPTY;
    let table = OrientationTable::get();
    for p in &sol.placements {
        if p.orientation >= table.len() || table.entry(p.orientation).piece != p.piece {
            return false;
        }
        if std::mem::replace(&mut seen[p.piece.index()], true) {
            return false;
        }
        let Some(cells) = p.anchor.index().and_then(|_| p.cells()) else {
            return false;
        };
        if cells.intersects(covered) {
            return false;
        }
        covered = covered.union(cells);
    }
    covered == region
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchOrder {
    /// Place pieces one after another, trying every placement of each.
    #[default]
    PieceMajor,
    /// Always cover the lowest empty cell of the region next.
    CellMajor,
}

/// Every in-grid placement of `piece` lying inside `region`.
fn placements_in(piece: PieceId, region: GridMask) -> Vec<(PiecePlacement, GridMask)> {
    let table = OrientationTable::get();
    let mut out = Vec::new();
    for o in table.range(piece) {
        for pos in 0..GRID_CELLS {
            if let Some(cells) = table.placement(o, pos) {
                if cells.is_subset_of(region) {
                    out.push((
                        PiecePlacement {
                            piece,
                            orientation: o,
                            anchor: Cell::from_index(pos),
                        },
                        cells,
                    ));
                }
            }
        }
    }
    out
}

/// All solutions for the whole grid and all seven pieces.
pub fn solve_all(pieces: &[PieceId]) -> Vec<Solution> {
    solve_region(pieces, GridMask::FULL, SearchOrder::PieceMajor)
}

/// All ways to tile `region` exactly with `pieces`, each used once, in sorted order.
///
/// Returns nothing when the cell counts don't add up.
pub fn solve_region(pieces: &[PieceId], region: GridMask, order: SearchOrder) -> Vec<Solution> {
    let total: usize = pieces.iter().map(|p| p.cell_count()).sum();
    let distinct: BTreeSet<_> = pieces.iter().collect();
    if total != region.count() as usize || distinct.len() != pieces.len() {
        return Vec::new();
    }
    let options: Vec<Vec<(PiecePlacement, GridMask)>> =
        pieces.iter().map(|&p| placements_in(p, region)).collect();
    let mut found = Vec::new();
    let mut chosen = Vec::with_capacity(pieces.len());
    match order {
        SearchOrder::PieceMajor => piece_major(&options, 0, GridMask::EMPTY, &mut chosen, &mut found),
        SearchOrder::CellMajor => {
            // bucket each piece's placements by their lowest cell
            let by_cell: Vec<Vec<Vec<(PiecePlacement, GridMask)>>> = options
                .iter()
                .map(|opts| {
                    let mut buckets = vec![Vec::new(); GRID_CELLS];
                    for &(p, m) in opts {
                        buckets[m.0.trailing_zeros() as usize].push((p, m));
                    }
                    buckets
                })
                .collect();
            let mut used = vec![false; pieces.len()];
            cell_major(&by_cell, region, GridMask::EMPTY, &mut used, &mut chosen, &mut found);
        }
    }
    found.sort();
    found
}

fn piece_major(
    options: &[Vec<(PiecePlacement, GridMask)>],
    depth: usize,
    filled: GridMask,
    chosen: &mut Vec<PiecePlacement>,
    found: &mut Vec<Solution>,
) {
    if depth == options.len() {
        found.push(Solution::new(chosen.clone()));
        return;
    }
    for &(p, m) in &options[depth] {
        if !m.intersects(filled) {
            chosen.push(p);
            piece_major(options, depth + 1, filled.union(m), chosen, found);
            chosen.pop();
        }
    }
}

fn cell_major(
    by_cell: &[Vec<Vec<(PiecePlacement, GridMask)>>],
    region: GridMask,
    filled: GridMask,
    used: &mut [bool],
    chosen: &mut Vec<PiecePlacement>,
    found: &mut Vec<Solution>,
) {
    let empty = region.0 & !filled.0;
    if empty == 0 {
        found.push(Solution::new(chosen.clone()));
        return;
    }
    let lowest = empty.trailing_zeros() as usize;
    for k in 0..by_cell.len() {
        if used[k] {
            continue;
        }
        used[k] = true;
        for &(p, m) in &by_cell[k][lowest] {
            if !m.intersects(filled) {
                chosen.push(p);
                cell_major(by_cell, region, filled.union(m), used, chosen, found);
                chosen.pop();
            }
        }
        used[k] = false;
    }
}

/// Rotates a grid cell about the cube centre.
fn rotate_cell(r: &crate::geometry::Rotation, c: Cell) -> Cell {
    let v = r.apply(Cell::new(c.x - 1, c.y - 1, c.z - 1));
    Cell::new(v.x + 1, v.y + 1, v.z + 1)
}

/// Count of solutions distinct up to rotations of the cube that map `region` onto itself.
pub fn rotation_distinct_count(solutions: &[Solution], region: GridMask) -> usize {
    let perms: Vec<[usize; GRID_CELLS]> = enumerate_rotations()
        .iter()
        .map(|r| std::array::from_fn(|i| rotate_cell(r, Cell::from_index(i)).index().unwrap()))
        .filter(|perm: &[usize; GRID_CELLS]| {
            region.indices().all(|i| region.contains(perm[i]))
        })
        .collect();
    let canonical: BTreeSet<OwnerMap> = solutions
        .iter()
        .map(|s| {
            let owners = s.owner_map();
            perms
                .iter()
                .map(|perm| {
                    let mut rotated = [None; GRID_CELLS];
                    for i in 0..GRID_CELLS {
                        rotated[perm[i]] = owners[i];
                    }
                    rotated
                })
                .min()
                .expect("identity is always present")
        })
        .collect();
    canonical.len()
}

/// A solution together with a placement order the robot can execute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedSolution {
    pub solution: Solution,
    /// Indices into `solution.placements`, in placement order.
    pub order: Vec<usize>,
}

impl OrderedSolution {
    pub fn pieces(&self) -> Vec<PieceId> {
        self.order.iter().map(|&i| self.solution.placements[i].piece).collect()
    }

    pub fn actions(&self) -> Vec<ActionIndex> {
        self.order
            .iter()
            .map(|&i| self.solution.placements[i].action())
            .collect()
    }

    /// Env state that places the pieces in this order.
    pub fn initial_state(&self) -> EnvState {
        EnvState::with_order(self.pieces())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no placement order satisfies support and vertical access")]
pub struct Unorderable;

/// Depth-first search over placement orders; lower mean height first, every
/// prefix supported and every piece lowered into a clear column.
pub fn order_robot_friendly(sol: &Solution) -> Result<OrderedSolution, Unorderable> {
    let cells: Vec<GridMask> = sol
        .placements
        .iter()
        .map(|p| p.cells().ok_or(Unorderable))
        .collect::<Result<_, _>>()?;
    let mut order = Vec::with_capacity(cells.len());
    let mut used = vec![false; cells.len()];
    if order_dfs(&cells, GridMask::EMPTY, &mut used, &mut order) {
        Ok(OrderedSolution {
            solution: sol.clone(),
            order,
        })
    } else {
        Err(Unorderable)
    }
}

fn order_dfs(cells: &[GridMask], filled: GridMask, used: &mut [bool], order: &mut Vec<usize>) -> bool {
    if order.len() == cells.len() {
        return true;
    }
    let mut candidates: Vec<(u32, u32, usize)> = (0..cells.len())
        .filter(|&i| !used[i])
        .filter(|&i| {
            let m = cells[i];
            let lifted = GridMask(m.0 & !GridMask::GROUND.0);
            lifted.layer_below().is_subset_of(filled.union(m))
                && !m.column_above().intersects(filled)
        })
        .map(|i| {
            let (sum, n) = crate::env::height_stats(cells[i]);
            (sum, n, i)
        })
        .collect();
    // ascending mean z, compared exactly
    candidates.sort_by(|a, b| {
        (u64::from(a.0) * u64::from(b.1))
            .cmp(&(u64::from(b.0) * u64::from(a.1)))
            .then(a.2.cmp(&b.2))
    });
    for (_, _, i) in candidates {
        used[i] = true;
        order.push(i);
        if order_dfs(cells, filled.union(cells[i]), used, order) {
            return true;
        }
        order.pop();
        used[i] = false;
    }
    false
}

/// Per-state legal-action statistics over random reachable level-3 states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRatioReport {
    pub samples: usize,
    pub mean_legal: f64,
    pub min_legal: usize,
    pub max_legal: usize,
    /// `action_space / mean_legal`.
    pub ratio: f64,
    pub paper_ref_ratio: f64,
    pub action_space: usize,
    /// Action count if orientations were not deduplicated (24 per piece).
    pub raw_action_space: usize,
    pub per_sample: Vec<MaskSample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSample {
    pub placed: usize,
    pub legal: usize,
}

pub const PAPER_REF_RATIO: f64 = 1.26;

/// Samples states by playing a uniformly random number of uniformly random
/// legal placements from a shuffled level-3 reset.
pub fn mask_ratio_report(env: &Env, samples: usize, seed: u64) -> MaskRatioReport {
    assert!(samples > 0, "need at least one sample");
    let mut rng = stream(seed, Stream::Audit);
    let mut per_sample = Vec::with_capacity(samples);
    for k in 0..samples {
        let mut s = env.reset(Level::Three, crate::rng::mix(seed, k as u64), OrderPolicy::Shuffled);
        let depth = rng.random_range(0..7);
        for _ in 0..depth {
            let m = env.legal_mask(&s);
            if m.is_empty() {
                break;
            }
            let pick = rng.random_range(0..m.count());
            let a = m.iter().nth(pick).expect("pick < count");
            s = env.step(&s, a).expect("masked action is legal").state;
        }
        per_sample.push(MaskSample {
            placed: s.history().len(),
            legal: env.legal_mask(&s).count(),
        });
    }
    let sum: usize = per_sample.iter().map(|s| s.legal).sum();
    let mean = sum as f64 / samples as f64;
    MaskRatioReport {
        samples,
        mean_legal: mean,
        min_legal: per_sample.iter().map(|s| s.legal).min().unwrap_or(0),
        max_legal: per_sample.iter().map(|s| s.legal).max().unwrap_or(0),
        ratio: if mean > 0.0 {
            NUM_ACTIONS as f64 / mean
        } else {
            f64::INFINITY
        },
        paper_ref_ratio: PAPER_REF_RATIO,
        action_space: NUM_ACTIONS,
        raw_action_space: RAW_ORIENTATIONS * GRID_CELLS,
        per_sample,
    }
}

/// Summary of a full enumeration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub raw_solutions: usize,
    pub rotation_distinct: usize,
    pub orderable: usize,
    pub unorderable: usize,
}

pub fn summarize(solutions: &[Solution], region: GridMask) -> SolveSummary {
    let orderable = solutions
        .iter()
        .filter(|s| order_robot_friendly(s).is_ok())
        .count();
    SolveSummary {
        raw_solutions: solutions.len(),
        rotation_distinct: rotation_distinct_count(solutions, region),
        orderable,
        unorderable: solutions.len() - orderable,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Done;

    fn region(cells: &[(i32, i32, i32)]) -> GridMask {
        let v: Vec<Cell> = cells.iter().map(|&(x, y, z)| Cell::new(x, y, z)).collect();
        GridMask::from_cells(&v).unwrap()
    }

    #[test]
    fn count_mismatch_gives_nothing() {
        assert!(solve_all(&PieceId::ALL[..6]).is_empty());
        assert!(solve_region(&[PieceId::Three], region(&[(0, 0, 0)]), SearchOrder::CellMajor).is_empty());
    }

    #[test]
    fn three_into_small_regions() {
        // the 3-cell piece is bent, so a straight 1×3 strip cannot hold it
        let strip = region(&[(0, 0, 0), (1, 0, 0), (2, 0, 0)]);
        assert!(solve_region(&[PieceId::Three], strip, SearchOrder::PieceMajor).is_empty());
        let corner = region(&[(0, 0, 0), (1, 0, 0), (0, 1, 0)]);
        let sols = solve_region(&[PieceId::Three], corner, SearchOrder::PieceMajor);
        assert_eq!(sols.len(), 1);
        assert!(verify_region(&sols[0], corner));
        // within one 2×2 square there are four bends
        let square = region(&[(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)]);
        let in_square = (0..4)
            .filter(|&skip| {
                let cells: Vec<usize> = square.indices().filter(|&i| i != [0, 1, 3, 4][skip]).collect();
                let m = cells.iter().fold(GridMask::EMPTY, |m, &i| m.with(i));
                solve_region(&[PieceId::Three], m, SearchOrder::CellMajor).len() == 1
            })
            .count();
        assert_eq!(in_square, 4);
    }

    #[test]
    fn level_regions_are_solvable_and_orderable() {
        for level in [Level::One, Level::Two] {
            let sols = solve_region(&level.pieces(), level.target_region(), SearchOrder::PieceMajor);
            assert!(!sols.is_empty(), "{level:?}");
            let cm = solve_region(&level.pieces(), level.target_region(), SearchOrder::CellMajor);
            assert_eq!(sols, cm);
            for s in &sols {
                assert!(verify_region(s, level.target_region()));
            }
            assert!(sols.iter().any(|s| order_robot_friendly(s).is_ok()));
        }
    }

    #[test]
    fn verify_rejects_overlap_and_gaps() {
        let corner = region(&[(0, 0, 0), (1, 0, 0), (0, 1, 0)]);
        let sol = solve_region(&[PieceId::Three], corner, SearchOrder::PieceMajor).remove(0);
        assert!(!verify(&sol));
        let mut twice = sol.clone();
        twice.placements.push(sol.placements[0]);
        assert!(!verify_region(&twice, corner));
        let mut bad_piece = sol.clone();
        bad_piece.placements[0].piece = PieceId::Tee;
        assert!(!verify_region(&bad_piece, corner));
    }

    #[test]
    fn ordering_prefix_properties() {
        let sols = solve_region(&Level::Two.pieces(), Level::Two.target_region(), SearchOrder::CellMajor);
        for s in &sols {
            let Ok(o) = order_robot_friendly(s) else { continue };
            let first = s.placements[o.order[0]].cells().unwrap();
            assert!(first.intersects(GridMask::GROUND));
            let env = Env::default();
            let mut st = o.initial_state();
            let mut done = Done::Running;
            for a in o.actions() {
                assert!(env.legal_mask(&st).get(a));
                let r = env.step(&st, a).unwrap();
                st = r.state;
                done = r.done;
            }
            assert_eq!(done, Done::Complete);
            assert_eq!(st.occupancy(), Level::Two.target_region());
        }
    }

    #[test]
    fn floating_piece_is_unorderable() {
        let find = |m: GridMask| {
            placements_in(PieceId::Three, m)
                .into_iter()
                .find(|&(_, c)| c == m)
                .unwrap()
                .0
        };
        let high = region(&[(0, 0, 1), (1, 0, 1), (0, 1, 1)]);
        assert_eq!(order_robot_friendly(&Solution::new(vec![find(high)])), Err(Unorderable));
        let low = region(&[(0, 0, 0), (1, 0, 0), (0, 1, 0)]);
        assert!(order_robot_friendly(&Solution::new(vec![find(low)])).is_ok());
    }

    #[test]
    fn asymmetric_region_has_no_rotation_duplicates() {
        // only the identity maps the level-1 region onto itself
        let r = Level::One.target_region();
        let sols = solve_region(&Level::One.pieces(), r, SearchOrder::PieceMajor);
        assert_eq!(rotation_distinct_count(&sols, r), sols.len());
        assert_eq!(rotation_distinct_count(&[], GridMask::FULL), 0);
    }

    #[test]
    fn mask_report_shape() {
        let env = Env::default();
        let r = mask_ratio_report(&env, 50, 3);
        assert_eq!(r.samples, 50);
        assert_eq!(r.per_sample.len(), 50);
        assert!(r.min_legal as f64 <= r.mean_legal && r.mean_legal <= r.max_legal as f64);
        assert_eq!(r.paper_ref_ratio, 1.26);
        assert_eq!(r.raw_action_space, 4536);
        assert_eq!(r, mask_ratio_report(&env, 50, 3));
    }
}
