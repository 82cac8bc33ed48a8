//! The assembly MDP: state, legal-action mask, transition and reward.
//!
//! The piece to place next is fixed by the episode's piece order; an action picks
//! only an orientation (which must belong to that piece) and an anchor cell.

mod mask;
mod reach;
mod reward;

pub use mask::{check_collision, check_support, check_vertical_access, LegalMask};
pub use reach::{GridFrame, Reachability};
pub use reward::{
    adjacent_blocks, coeff, height_stats, shaped_reward, PlacementHistory, RewardBreakdown,
    RewardProfile,
};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Cell, GridMask, OrientationTable, PieceId, GRID_CELLS, NUM_ORIENTATIONS};
use crate::rng::{stream, Stream};

pub const NUM_POSITIONS: usize = GRID_CELLS;
pub const NUM_ACTIONS: usize = NUM_ORIENTATIONS * NUM_POSITIONS;
pub const STATE_DIM: usize = 36;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("action {0} is not legal in this state")]
    IllegalAction(usize),
    #[error("episode is already over")]
    EpisodeOver,
    #[error("empty legal mask in a non-terminal state")]
    EmptyMask,
}

/// Flat action id `orientation × 27 + position`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionIndex(u16);

impl ActionIndex {
    pub fn new(id: usize) -> Option<Self> {
        (id < NUM_ACTIONS).then_some(Self(id as u16))
    }

    pub(crate) fn from_id_unchecked(id: usize) -> Self {
        debug_assert!(id < NUM_ACTIONS);
        Self(id as u16)
    }

    pub fn from_parts(orientation: usize, position: usize) -> Option<Self> {
        (orientation < NUM_ORIENTATIONS && position < NUM_POSITIONS)
            .then(|| Self((orientation * NUM_POSITIONS + position) as u16))
    }

    pub fn id(self) -> usize {
        usize::from(self.0)
    }

    pub fn orientation(self) -> usize {
        self.id() / NUM_POSITIONS
    }

    pub fn position(self) -> usize {
        self.id() % NUM_POSITIONS
    }

    pub fn anchor(self) -> Cell {
        Cell::from_index(self.position())
    }

    pub fn piece(self) -> PieceId {
        OrientationTable::get().entry(self.orientation()).piece
    }

    /// Cells covered, or `None` when the placement leaves the grid.
    pub fn cells(self) -> Option<GridMask> {
        OrientationTable::get().placement(self.orientation(), self.position())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Level {
    One = 1,
    Two = 2,
    Three = 3,
}

impl From<Level> for u8 {
    fn from(l: Level) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Level {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Level::One),
            2 => Ok(Level::Two),
            3 => Ok(Level::Three),
            _ => Err(format!("level must be 1, 2 or 3, got {v}")),
        }
    }
}

impl Level {
    pub const ALL: [Level; 3] = [Level::One, Level::Two, Level::Three];

    pub fn number(self) -> u8 {
        self as u8
    }

    /// Pieces in canonical order.
    pub fn pieces(self) -> Vec<PieceId> {
        match self {
            Level::One => vec![PieceId::Ell, PieceId::Three],
            Level::Two => vec![PieceId::Zee, PieceId::Tee, PieceId::Three],
            Level::Three => PieceId::ALL.to_vec(),
        }
    }

    /// A flat, self-supporting region the level's pieces tile exactly.
    pub fn target_region(self) -> GridMask {
        match self {
            // ground layer minus (1,2,0) and (2,2,0)
            Level::One => GridMask(GridMask::GROUND.0 & !(1 << 7) & !(1 << 8)),
            // ground layer plus (0,0,1) and (1,0,1)
            Level::Two => GridMask(GridMask::GROUND.0 | 1 << 9 | 1 << 10),
            Level::Three => GridMask::FULL,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderPolicy {
    #[default]
    Fixed,
    Shuffled,
}

/// Which constraints the mask enforces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Bounds, collision, support, reachability and vertical access.
    #[default]
    Full,
    /// Ablation: bounds and collision only. Floating and blocked placements are
    /// allowed and penalised through the reward instead.
    Unmasked,
}

/// One executed placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub piece: PieceId,
    pub action: ActionIndex,
    pub cells: GridMask,
}

/// Immutable episode state; [`Env::step`] returns a new one.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EnvState {
    occupancy: GridMask,
    owner: [Option<PieceId>; GRID_CELLS],
    placed: [bool; 7],
    order: Vec<PieceId>,
    cursor: usize,
    history: Vec<Placement>,
    prev_height: Option<(u32, u32)>,
    ground_placements: usize,
}

impl EnvState {
    /// Fresh state placing `order` front to back.
    pub fn with_order(order: Vec<PieceId>) -> Self {
        Self {
            occupancy: GridMask::EMPTY,
            owner: [None; GRID_CELLS],
            placed: [false; 7],
            order,
            cursor: 0,
            history: Vec::new(),
            prev_height: None,
            ground_placements: 0,
        }
    }

    pub fn occupancy(&self) -> GridMask {
        self.occupancy
    }

    pub fn owner(&self, cell: usize) -> Option<PieceId> {
        self.owner[cell]
    }

    pub fn is_placed(&self, piece: PieceId) -> bool {
        self.placed[piece.index()]
    }

    pub fn order(&self) -> &[PieceId] {
        &self.order
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn history(&self) -> &[Placement] {
        &self.history
    }

    pub fn current_piece(&self) -> Option<PieceId> {
        self.order.get(self.cursor).copied()
    }

    pub fn all_placed(&self) -> bool {
        self.cursor >= self.order.len()
    }

    pub fn prev_mean_height(&self) -> Option<f64> {
        self.prev_height.map(|(s, n)| f64::from(s) / f64::from(n))
    }

    pub fn placement_history(&self) -> PlacementHistory {
        PlacementHistory {
            placements: self.history.len(),
            ground_placements: self.ground_placements,
            prev_height: self.prev_height,
        }
    }

    /// Layout `[occupancy × 27, current piece one-hot × 7, placed ratio, index ratio]`.
    pub fn encode(&self) -> StateVector {
        let mut v = [0f32; STATE_DIM];
        for i in self.occupancy.indices() {
            v[i] = 1.0;
        }
        if let Some(p) = self.current_piece() {
            v[GRID_CELLS + p.index()] = 1.0;
        }
        let n = self.order.len().max(1) as f32;
        v[34] = self.history.len() as f32 / n;
        v[35] = self.cursor as f32 / n;
        StateVector(v)
    }

    /// FNV-1a over occupancy, owners and cursor.
    pub fn hash64(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |b: u8| {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for b in self.occupancy.0.to_le_bytes() {
            eat(b);
        }
        for o in &self.owner {
            eat(o.map_or(0xff, |p| p.index() as u8));
        }
        eat(self.cursor as u8);
        h
    }

    fn apply(&self, piece: PieceId, action: ActionIndex, cells: GridMask) -> EnvState {
        let mut next = self.clone();
        next.occupancy = self.occupancy.union(cells);
        for i in cells.indices() {
            next.owner[i] = Some(piece);
        }
        next.placed[piece.index()] = true;
        next.cursor += 1;
        next.history.push(Placement {
            piece,
            action,
            cells,
        });
        next.prev_height = Some(height_stats(cells));
        if cells.intersects(GridMask::GROUND) {
            next.ground_placements += 1;
        }
        next
    }
}

/// `encode_state` as a free function.
pub fn encode_state(s: &EnvState) -> StateVector {
    s.encode()
}

/// Network input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVector(pub [f32; STATE_DIM]);

impl StateVector {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn occupancy(&self) -> GridMask {
        let mut m = GridMask::EMPTY;
        for i in 0..GRID_CELLS {
            if self.0[i] != 0.0 {
                m = m.with(i);
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Done {
    Running,
    Complete,
    DeadEnd,
}

impl Done {
    pub fn is_terminal(self) -> bool {
        self != Done::Running
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub state: EnvState,
    pub reward: RewardBreakdown,
    pub done: Done,
    /// Mask of the returned state (empty when terminal).
    pub next_mask: LegalMask,
    pub cells: GridMask,
}

/// One JSON-lines record of an episode trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub state_hash: String,
    pub action: usize,
    pub piece: PieceId,
    pub reward: RewardBreakdown,
    pub total: i32,
    pub done: Done,
}

#[derive(Clone, Debug, Default)]
pub struct EnvConfig {
    pub reward: RewardProfile,
    pub mask_mode: MaskMode,
    pub reach: Reachability,
}

#[derive(Clone, Debug, Default)]
pub struct Env {
    config: EnvConfig,
}

impl Env {
    pub fn new(config: EnvConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Empty grid with the level's pieces; shuffled orders are a pure function of `seed`.
    pub fn reset(&self, level: Level, seed: u64, policy: OrderPolicy) -> EnvState {
        let mut order = level.pieces();
        if policy == OrderPolicy::Shuffled {
            order.shuffle(&mut stream(seed, Stream::Env));
        }
        EnvState::with_order(order)
    }

    pub fn check_reachable(&self, action: ActionIndex) -> bool {
        self.config.reach.cell(action.position())
    }

    /// Whether `action` passes every predicate of the full mask, ignoring piece ownership.
    pub fn fully_legal(&self, s: &EnvState, action: ActionIndex) -> bool {
        action.cells().is_some_and(|cells| {
            check_collision(s, cells)
                && check_support(s, cells)
                && self.check_reachable(action)
                && check_vertical_access(s, cells)
        })
    }

    fn admits(&self, s: &EnvState, action: ActionIndex, cells: GridMask) -> bool {
        match self.config.mask_mode {
            MaskMode::Full => {
                check_collision(s, cells)
                    && check_support(s, cells)
                    && self.check_reachable(action)
                    && check_vertical_access(s, cells)
            }
            MaskMode::Unmasked => check_collision(s, cells),
        }
    }

    /// Only the current piece's orientation rows can be set.
    pub fn legal_mask(&self, s: &EnvState) -> LegalMask {
        let mut mask = LegalMask::none();
        let Some(piece) = s.current_piece() else {
            return mask;
        };
        let table = OrientationTable::get();
        for o in table.range(piece) {
            for pos in 0..NUM_POSITIONS {
                if let Some(cells) = table.placement(o, pos) {
                    let a = ActionIndex::from_id_unchecked(o * NUM_POSITIONS + pos);
                    if self.admits(s, a, cells) {
                        mask.set(a);
                    }
                }
            }
        }
        mask
    }

    /// Places the current piece. `action` must be legal in `s`.
    pub fn step(&self, s: &EnvState, action: ActionIndex) -> Result<StepResult, EnvError> {
        let piece = s.current_piece().ok_or(EnvError::EpisodeOver)?;
        let cells = action
            .cells()
            .filter(|&c| action.piece() == piece && self.admits(s, action, c))
            .ok_or(EnvError::IllegalAction(action.id()))?;

        let fully_legal = self.fully_legal(s, action);
        let vertical_clear = check_vertical_access(s, cells);
        let next = s.apply(piece, action, cells);
        let (done, next_mask) = if next.all_placed() {
            (Done::Complete, LegalMask::none())
        } else {
            let m = self.legal_mask(&next);
            if m.is_empty() {
                (Done::DeadEnd, m)
            } else {
                (Done::Running, m)
            }
        };

        let reward = match self.config.reward {
            RewardProfile::Shaped => {
                shaped_reward(s.occupancy, cells, &s.placement_history(), vertical_clear)
            }
            RewardProfile::Sparse => RewardBreakdown::sparse(if done == Done::Complete {
                coeff::SPARSE_COMPLETE
            } else if fully_legal {
                coeff::SPARSE_VALID
            } else {
                coeff::SPARSE_OTHERWISE
            }),
        };

        Ok(StepResult {
            state: next,
            reward,
            done,
            next_mask,
            cells,
        })
    }
}

/// Masked Bellman target: `r` when terminal, else `r + gamma · max` over legal
/// entries of `q_next`.
pub fn bellman_target(
    r: f64,
    gamma: f64,
    q_next: &[f32],
    mask_next: &LegalMask,
    terminal: bool,
) -> Result<f64, EnvError> {
    if terminal {
        return Ok(r);
    }
    if mask_next.is_empty() {
        return Err(EnvError::EmptyMask);
    }
    let best = mask_next
        .iter()
        .map(|a| q_next[a.id()])
        .fold(f32::NEG_INFINITY, f32::max);
    Ok(r + gamma * f64::from(best))
}
