use rand::seq::index;
use rand::Rng;

use crate::env::{ActionIndex, LegalMask, StateVector};

/// One stored step, with the next state's legal mask captured at push time.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: ActionIndex,
    pub reward: f32,
    pub next_state: StateVector,
    pub next_mask: LegalMask,
    pub terminal: bool,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    /// Slot the next push overwrites once full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            items: Vec::with_capacity(capacity.min(4096)),
            capacity,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (a, b) = self.items.split_at(self.head);
        b.iter().chain(a)
    }

    /// `n` distinct transitions chosen uniformly; `None` if fewer are stored.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        (n <= self.items.len()).then(|| {
            index::sample(rng, self.items.len(), n)
                .into_iter()
                .map(|i| &self.items[i])
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::STATE_DIM;
    use crate::rng::{stream, Stream};

    fn t(r: f32) -> Transition {
        Transition {
            state: StateVector([0.0; STATE_DIM]),
            action: ActionIndex::new(0).unwrap(),
            reward: r,
            next_state: StateVector([0.0; STATE_DIM]),
            next_mask: LegalMask::none(),
            terminal: true,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(t(i as f32));
        }
        assert_eq!(b.len(), 3);
        let r: Vec<f32> = b.iter().map(|t| t.reward).collect();
        assert_eq!(r, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..100 {
            b.push(t(i as f32));
        }
        let mut rng = stream(0, Stream::Replay);
        let s = b.sample(100, &mut rng).unwrap();
        let mut seen: Vec<i32> = s.iter().map(|t| t.reward as i32).collect();
        seen.sort();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
        assert!(b.sample(101, &mut rng).is_none());
    }
}
