//! Piece shapes, the proper rotation group of the cube, and placement on the 3×3×3 grid.

use std::fmt;
use std::ops::Range;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Edge length of the assembly grid.
pub const GRID: i32 = 3;
/// Number of cells in the assembly grid.
pub const GRID_CELLS: usize = 27;
/// Number of deduplicated orientations over all seven pieces.
pub const NUM_ORIENTATIONS: usize = 116;
/// Orientation count before deduplication (7 pieces × 24 rotations).
pub const RAW_ORIENTATIONS: usize = 7 * 24;

/// A lattice point. Inside the grid each coordinate is in `0..3`; rotation math
/// may take cells anywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn in_grid(self) -> bool {
        (0..GRID).contains(&self.x) && (0..GRID).contains(&self.y) && (0..GRID).contains(&self.z)
    }

    /// Flat index `x + 3y + 9z`, or `None` outside the grid.
    pub fn index(self) -> Option<usize> {
        self.in_grid()
            .then(|| (self.x + GRID * self.y + GRID * GRID * self.z) as usize)
    }

    /// Inverse of [`Cell::index`].
    ///
    /// Panics if `index >= 27`.
    pub fn from_index(index: usize) -> Self {
        assert!(index < GRID_CELLS, "grid index {index} out of range");
        let i = index as i32;
        Self::new(i % GRID, (i / GRID) % GRID, i / (GRID * GRID))
    }

    pub fn offset(self, by: Cell) -> Self {
        Self::new(self.x + by.x, self.y + by.y, self.z + by.z)
    }

    fn coords(self) -> [i32; 3] {
        [self.x, self.y, self.z]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

/// Occupancy of the 27 grid cells as a bit set; bit `i` is the cell with flat index `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridMask(pub u32);

impl GridMask {
    pub const EMPTY: GridMask = GridMask(0);
    pub const FULL: GridMask = GridMask((1 << GRID_CELLS) - 1);
    /// Cells with `z == 0`.
    pub const GROUND: GridMask = GridMask(0x1ff);

    pub fn from_cells<'a>(cells: impl IntoIterator<Item = &'a Cell>) -> Option<Self> {
        let mut bits = 0u32;
        for c in cells {
            bits |= 1 << c.index()?;
        }
        Some(GridMask(bits))
    }

    pub fn contains(self, index: usize) -> bool {
        self.0 >> index & 1 == 1
    }

    pub fn with(self, index: usize) -> Self {
        GridMask(self.0 | 1 << index)
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersects(self, other: GridMask) -> bool {
        self.0 & other.0 != 0
    }

    pub fn union(self, other: GridMask) -> Self {
        GridMask(self.0 | other.0)
    }

    pub fn is_subset_of(self, other: GridMask) -> bool {
        self.0 & !other.0 == 0
    }

    /// Indices of set cells in increasing order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(i)
        })
    }

    pub fn cells(self) -> impl Iterator<Item = Cell> {
        self.indices().map(Cell::from_index)
    }

    /// Every cell lying strictly above some cell of `self` in the same column.
    pub fn column_above(self) -> Self {
        GridMask(((self.0 << 9) | (self.0 << 18)) & Self::FULL.0)
    }

    /// Each cell shifted one layer down; ground cells drop out.
    pub fn layer_below(self) -> Self {
        GridMask(self.0 >> 9)
    }
}

/// The seven Soma pieces, in the order used for one-hot encodings and orientation ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PieceId {
    Corner,
    Positive,
    Negative,
    Zee,
    Tee,
    Ell,
    Three,
}

impl PieceId {
    pub const ALL: [PieceId; 7] = [
        PieceId::Corner,
        PieceId::Positive,
        PieceId::Negative,
        PieceId::Zee,
        PieceId::Tee,
        PieceId::Ell,
        PieceId::Three,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PieceId::Corner => "corner",
            PieceId::Positive => "positive",
            PieceId::Negative => "negative",
            PieceId::Zee => "zee",
            PieceId::Tee => "tee",
            PieceId::Ell => "ell",
            PieceId::Three => "three",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name.trim()))
    }

    pub fn cell_count(self) -> usize {
        PieceShape::canonical(self).cells.len()
    }
}

impl fmt::Display for PieceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A piece in its canonical local frame (min corner at the origin).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PieceShape {
    pub id: PieceId,
    pub cells: Vec<Cell>,
}

impl PieceShape {
    /// Canonical cell lists.
    ///
    /// `Positive` and `Negative` are L-tetrominoes (mirror images in the plane,
    /// congruent under rotation). The chiral screw shapes have a two-fold axis and
    /// only 12 orientations, which would not give the 8/24/24/12/12/24/12 table.
    pub fn canonical(id: PieceId) -> Self {
        let c = Cell::new;
        let cells = match id {
            PieceId::Corner => vec![c(0, 0, 0), c(1, 0, 0), c(0, 1, 0), c(0, 0, 1)],
            PieceId::Positive => vec![c(0, 0, 0), c(1, 0, 0), c(2, 0, 0), c(2, 1, 0)],
            PieceId::Negative => vec![c(0, 0, 0), c(1, 0, 0), c(2, 0, 0), c(0, 1, 0)],
            PieceId::Zee => vec![c(0, 0, 0), c(1, 0, 0), c(1, 1, 0), c(2, 1, 0)],
            PieceId::Tee => vec![c(0, 0, 0), c(1, 0, 0), c(2, 0, 0), c(1, 1, 0)],
            PieceId::Ell => vec![c(0, 0, 0), c(0, 1, 0), c(0, 2, 0), c(1, 0, 0)],
            PieceId::Three => vec![c(0, 0, 0), c(1, 0, 0), c(0, 1, 0)],
        };
        Self { id, cells }
    }

    pub fn all() -> Vec<PieceShape> {
        PieceId::ALL.into_iter().map(Self::canonical).collect()
    }
}

/// A proper rotation of the cube as a signed axis permutation:
/// output axis `i` is `sign[i] * input[perm[i]]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rotation {
    perm: [u8; 3],
    sign: [i8; 3],
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        perm: [0, 1, 2],
        sign: [1, 1, 1],
    };

    pub fn apply(&self, cell: Cell) -> Cell {
        let v = cell.coords();
        let out: [i32; 3] =
            std::array::from_fn(|i| i32::from(self.sign[i]) * v[usize::from(self.perm[i])]);
        Cell::new(out[0], out[1], out[2])
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let mut perm = [0u8; 3];
        let mut sign = [0i8; 3];
        for i in 0..3 {
            let j = usize::from(self.perm[i]);
            perm[i] = other.perm[j];
            sign[i] = self.sign[i] * other.sign[j];
        }
        Rotation { perm, sign }
    }

    pub fn inverse(&self) -> Rotation {
        let mut perm = [0u8; 3];
        let mut sign = [0i8; 3];
        for i in 0..3 {
            let j = usize::from(self.perm[i]);
            perm[j] = i as u8;
            sign[j] = self.sign[i];
        }
        Rotation { perm, sign }
    }

    /// Integer matrix with `m[i][perm[i]] = sign[i]`.
    pub fn matrix(&self) -> [[i32; 3]; 3] {
        let mut m = [[0; 3]; 3];
        for i in 0..3 {
            m[i][usize::from(self.perm[i])] = i32::from(self.sign[i]);
        }
        m
    }

    pub fn determinant(&self) -> i32 {
        let m = self.matrix();
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

const PERMUTATIONS: [[u8; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// All 24 proper cube rotations: permutations in lexicographic order, and for each
/// the sign patterns from `(+,+,+)` to `(-,-,-)` in binary order, keeping det = +1.
pub fn enumerate_rotations() -> Vec<Rotation> {
    let mut out = Vec::with_capacity(24);
    for perm in PERMUTATIONS {
        for bits in 0..8u8 {
            let sign = std::array::from_fn(|i| if bits >> (2 - i) & 1 == 1 { -1 } else { 1 });
            let r = Rotation { perm, sign };
            if r.determinant() == 1 {
                out.push(r);
            }
        }
    }
    out
}

/// Translates so the bounding-box min corner is at the origin and sorts the cells.
pub fn normalize(cells: &[Cell]) -> Vec<Cell> {
    let min = |f: fn(&Cell) -> i32| cells.iter().map(f).min().unwrap_or(0);
    let shift = Cell::new(-min(|c| c.x), -min(|c| c.y), -min(|c| c.z));
    let mut out: Vec<Cell> = cells.iter().map(|c| c.offset(shift)).collect();
    out.sort_unstable();
    out
}

/// Distinct translation-normalized images of `cells` under the 24 rotations, in
/// first-seen order over [`enumerate_rotations`].
pub fn orientations_of(cells: &[Cell]) -> Vec<Vec<Cell>> {
    let mut seen: Vec<Vec<Cell>> = Vec::new();
    for r in enumerate_rotations() {
        let rotated: Vec<Cell> = cells.iter().map(|&c| r.apply(c)).collect();
        let n = normalize(&rotated);
        if !seen.contains(&n) {
            seen.push(n);
        }
    }
    seen
}

pub fn canonical_orientations(piece: &PieceShape) -> Vec<Vec<Cell>> {
    orientations_of(&piece.cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("placement leaves the 3x3x3 grid")]
pub struct OutOfBounds;

/// Translates a normalized orientation so its min corner lands on `anchor`.
pub fn place(orientation_cells: &[Cell], anchor: Cell) -> Result<Vec<Cell>, OutOfBounds> {
    orientation_cells
        .iter()
        .map(|c| {
            let p = c.offset(anchor);
            if p.in_grid() {
                Ok(p)
            } else {
                Err(OutOfBounds)
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct OrientationEntry {
    pub piece: PieceId,
    /// Index within the piece's own orientation list.
    pub local: usize,
    pub cells: Vec<Cell>,
}

/// Flat orientation ids `0..116`, grouped by piece in [`PieceId::ALL`] order,
/// with every (orientation, anchor) placement precomputed.
#[derive(Clone, Debug)]
pub struct OrientationTable {
    entries: Vec<OrientationEntry>,
    ranges: [Range<usize>; 7],
    placements: Vec<[Option<GridMask>; GRID_CELLS]>,
}

impl OrientationTable {
    fn build() -> Self {
        let mut entries = Vec::with_capacity(NUM_ORIENTATIONS);
        let mut ranges: [Range<usize>; 7] = Default::default();
        for piece in PieceId::ALL {
            let start = entries.len();
            for (local, cells) in canonical_orientations(&PieceShape::canonical(piece))
                .into_iter()
                .enumerate()
            {
                entries.push(OrientationEntry { piece, local, cells });
            }
            ranges[piece.index()] = start..entries.len();
        }
        let placements = entries
            .iter()
            .map(|e| {
                std::array::from_fn(|pos| {
                    place(&e.cells, Cell::from_index(pos))
                        .ok()
                        .and_then(|cells| GridMask::from_cells(&cells))
                })
            })
            .collect();
        Self {
            entries,
            ranges,
            placements,
        }
    }

    /// The process-wide table.
    pub fn get() -> &'static OrientationTable {
        static TABLE: OnceLock<OrientationTable> = OnceLock::new();
        TABLE.get_or_init(Self::build)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: usize) -> &OrientationEntry {
        &self.entries[id]
    }

    pub fn entries(&self) -> &[OrientationEntry] {
        &self.entries
    }

    /// Global orientation ids owned by `piece`.
    pub fn range(&self, piece: PieceId) -> Range<usize> {
        self.ranges[piece.index()].clone()
    }

    pub fn count(&self, piece: PieceId) -> usize {
        self.ranges[piece.index()].len()
    }

    pub fn global_id(&self, piece: PieceId, local: usize) -> Option<usize> {
        let r = self.range(piece);
        (local < r.len()).then(|| r.start + local)
    }

    /// Occupied cells for orientation `id` anchored at grid cell `position`, or
    /// `None` if the placement leaves the grid.
    pub fn placement(&self, id: usize, position: usize) -> Option<GridMask> {
        self.placements[id][position]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn rotations_form_a_group() {
        let rots = enumerate_rotations();
        assert_eq!(rots.len(), 24);
        assert!(rots.contains(&Rotation::IDENTITY));
        let set: HashSet<_> = rots.iter().copied().collect();
        assert_eq!(set.len(), 24);
        for a in &rots {
            assert_eq!(a.compose(&a.inverse()), Rotation::IDENTITY);
            assert!(set.contains(&a.inverse()));
            for b in &rots {
                assert!(set.contains(&a.compose(b)));
            }
        }
    }

    #[test]
    fn compose_matches_sequential_application() {
        let rots = enumerate_rotations();
        let p = Cell::new(1, -2, 3);
        for a in &rots {
            for b in &rots {
                assert_eq!(a.compose(b).apply(p), a.apply(b.apply(p)));
            }
        }
    }

    #[test]
    fn orientation_counts_per_piece() {
        let t = OrientationTable::get();
        let counts: Vec<usize> = PieceId::ALL.iter().map(|&p| t.count(p)).collect();
        assert_eq!(counts, vec![8, 24, 24, 12, 12, 24, 12]);
        assert_eq!(t.len(), NUM_ORIENTATIONS);
        assert_eq!(t.len() * GRID_CELLS, 3132);
        let mut next = 0;
        for p in PieceId::ALL {
            let r = t.range(p);
            assert_eq!(r.start, next);
            next = r.end;
            for id in r {
                assert_eq!(t.entry(id).piece, p);
                assert_eq!(t.global_id(p, t.entry(id).local), Some(id));
            }
        }
        assert_eq!(next, 116);
    }

    #[test]
    fn piece_cells_total_27_and_connected() {
        let total: usize = PieceShape::all().iter().map(|p| p.cells.len()).sum();
        assert_eq!(total, 27);
        for shape in PieceShape::all() {
            assert_eq!(normalize(&shape.cells), {
                let mut c = shape.cells.clone();
                c.sort();
                c
            });
            // flood fill over face neighbours
            let mut reached = vec![shape.cells[0]];
            let mut frontier = vec![shape.cells[0]];
            while let Some(c) = frontier.pop() {
                for n in &shape.cells {
                    let d = (n.x - c.x).abs() + (n.y - c.y).abs() + (n.z - c.z).abs();
                    if d == 1 && !reached.contains(n) {
                        reached.push(*n);
                        frontier.push(*n);
                    }
                }
            }
            assert_eq!(reached.len(), shape.cells.len(), "{} not connected", shape.id);
        }
    }

    #[test]
    fn orientations_are_distinct_and_normalized() {
        let t = OrientationTable::get();
        for p in PieceId::ALL {
            let sets: HashSet<Vec<Cell>> = t.range(p).map(|id| t.entry(id).cells.clone()).collect();
            assert_eq!(sets.len(), t.count(p));
            for cells in &sets {
                assert_eq!(&normalize(cells), cells);
            }
        }
    }

    #[test]
    fn dedup_is_idempotent_on_outputs() {
        for shape in PieceShape::all() {
            let outs = canonical_orientations(&shape);
            for o in &outs {
                assert_eq!(orientations_of(o).len(), outs.len());
            }
        }
    }

    #[test]
    fn place_examples() {
        assert_eq!(
            place(&[Cell::new(0, 0, 0)], Cell::new(2, 2, 2)),
            Ok(vec![Cell::new(2, 2, 2)])
        );
        let bar: Vec<Cell> = (0..4).map(|x| Cell::new(x, 0, 0)).collect();
        assert_eq!(place(&bar, Cell::new(0, 0, 0)), Err(OutOfBounds));
        let l = [Cell::new(0, 0, 0), Cell::new(1, 0, 0), Cell::new(1, 1, 0)];
        assert_eq!(
            place(&l, Cell::new(1, 1, 0)),
            Ok(vec![Cell::new(1, 1, 0), Cell::new(2, 1, 0), Cell::new(2, 2, 0)])
        );
    }

    #[test]
    fn three_piece_has_that_orientation() {
        let t = OrientationTable::get();
        let l = vec![Cell::new(0, 0, 0), Cell::new(1, 0, 0), Cell::new(1, 1, 0)];
        assert!(t.range(PieceId::Three).any(|id| t.entry(id).cells == l));
    }

    #[test]
    fn index_bijection() {
        for i in 0..GRID_CELLS {
            assert_eq!(Cell::from_index(i).index(), Some(i));
        }
        assert_eq!(Cell::new(1, 2, 0).index(), Some(7));
        assert_eq!(Cell::new(3, 0, 0).index(), None);
    }

    #[test]
    fn piece_names_round_trip() {
        for p in PieceId::ALL {
            assert_eq!(PieceId::from_name(p.name()), Some(p));
        }
        assert_eq!(PieceId::from_name("Corner"), Some(PieceId::Corner));
        assert_eq!(PieceId::from_name("dragon"), None);
    }

    proptest! {
        #[test]
        fn place_stays_in_grid(id in 0usize..NUM_ORIENTATIONS, pos in 0usize..GRID_CELLS) {
            let t = OrientationTable::get();
            let cells = &t.entry(id).cells;
            match place(cells, Cell::from_index(pos)) {
                Ok(out) => {
                    prop_assert_eq!(out.len(), cells.len());
                    prop_assert!(out.iter().all(|c| c.in_grid()));
                    prop_assert_eq!(t.placement(id, pos), GridMask::from_cells(&out));
                }
                Err(_) => prop_assert!(t.placement(id, pos).is_none()),
            }
        }

        #[test]
        fn column_above_matches_cellwise(bits in 0u32..(1 << 27)) {
            let m = GridMask(bits);
            let mut expect = 0u32;
            for c in m.cells() {
                for z in c.z + 1..GRID {
                    expect |= 1 << Cell::new(c.x, c.y, z).index().unwrap();
                }
            }
            prop_assert_eq!(m.column_above(), GridMask(expect));
        }
    }
}
