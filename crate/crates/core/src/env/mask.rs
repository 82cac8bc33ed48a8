use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ActionIndex, EnvState, NUM_ACTIONS};
use crate::geometry::GridMask;

const WORDS: usize = NUM_ACTIONS.div_ceil(64);

/// One bit per action id.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LegalMask {
    #[serde(with = "words")]
    bits: [u64; WORDS],
}

mod words {
    use super::WORDS;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(w: &[u64; WORDS], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(w.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u64; WORDS], D::Error> {
        let v = Vec::<u64>::deserialize(d)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("wrong mask length"))
    }
}

impl Default for LegalMask {
    fn default() -> Self {
        Self::none()
    }
}

impl LegalMask {
    pub const fn none() -> Self {
        Self { bits: [0; WORDS] }
    }

    pub fn from_bools(flags: &[bool]) -> Self {
        let mut m = Self::none();
        for (i, _) in flags.iter().enumerate().filter(|(_, &f)| f) {
            m.set(ActionIndex::new(i).expect("flag index within action space"));
        }
        m
    }

    pub fn set(&mut self, a: ActionIndex) {
        let i = a.id();
        self.bits[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, a: ActionIndex) -> bool {
        self.contains(a.id())
    }

    pub fn contains(&self, id: usize) -> bool {
        id < NUM_ACTIONS && self.bits[id / 64] >> (id % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Legal action ids in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = ActionIndex> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(ActionIndex::from_id_unchecked(w * 64 + b))
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..NUM_ACTIONS).map(|i| self.contains(i)).collect()
    }
}

impl fmt::Debug for LegalMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LegalMask({} legal)", self.count())
    }
}

/// `cells ∩ occupied(s) = ∅`.
pub fn check_collision(s: &EnvState, cells: GridMask) -> bool {
    !cells.intersects(s.occupancy())
}

/// Every cell above the ground rests on an occupied cell or on another cell of
/// the same piece.
pub fn check_support(s: &EnvState, cells: GridMask) -> bool {
    let lifted = GridMask(cells.0 & !GridMask::GROUND.0);
    lifted
        .layer_below()
        .is_subset_of(s.occupancy().union(cells))
}

/// No occupied cell lies in the column above any cell of the piece; the piece's
/// own cells may sit above each other since it descends as one body.
pub fn check_vertical_access(s: &EnvState, cells: GridMask) -> bool {
    !cells.column_above().intersects(s.occupancy())
}
