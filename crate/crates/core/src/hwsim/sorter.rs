use thiserror::Error;

/// Reorder buffer indexed by tag. Results enter in completion order and
/// leave in arrival order.
#[derive(Debug, Clone)]
pub struct Sorter<T> {
    slots: Vec<Option<T>>,
    head: usize,
}

impl<T> Sorter<T> {
    pub fn new(depth: usize) -> Self {
        assert!(depth > 0, "sorter depth must be positive");
        Sorter {
            slots: (0..depth).map(|_| None).collect(),
            head: 0,
        }
    }

    pub fn depth(&self) -> usize {
        self.slots.len()
    }

    /// Stores the result for `tag`. The dispatcher guarantees the slot is free.
    pub fn complete(&mut self, tag: usize, value: T) {
        let slot = &mut self.slots[tag];
        assert!(slot.is_none(), "tag {tag} completed twice while in flight");
        *slot = Some(value);
    }

    /// Releases every result ready at the head, in arrival order.
    pub fn drain(&mut self) -> Vec<T> {
        let mut out = Vec::new();
        while let Some(v) = self.slots[self.head].take() {
            out.push(v);
            self.head = (self.head + 1) % self.slots.len();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SorterError {
    #[error("completion order is not a permutation of 0..{0}")]
    NotPermutation(usize),
    #[error("packet {arrival} completes while packet {oldest} is still outstanding beyond the {depth}-entry window")]
    Window {
        arrival: usize,
        oldest: usize,
        depth: usize,
    },
}

/// Feeds packets `0..n` to a depth-`depth` sorter, completing them in the
/// order given, and returns the emitted order.
///
/// Packet `a` may only complete once every packet before `a - depth + 1`
/// has been emitted, as the dispatcher would enforce.
pub fn sorter_check(completion: &[usize], depth: usize) -> Result<Vec<usize>, SorterError> {
    let n = completion.len();
    let mut seen = vec![false; n];
    for &a in completion {
        if a >= n || std::mem::replace(&mut seen[a], true) {
            return Err(SorterError::NotPermutation(n));
        }
    }
    let mut sorter = Sorter::new(depth);
    let mut emitted = Vec::with_capacity(n);
    for &a in completion {
        let oldest = emitted.len();
        if a >= oldest + depth {
            return Err(SorterError::Window {
                arrival: a,
                oldest,
                depth,
            });
        }
        sorter.complete(a % depth, a);
        emitted.extend(sorter.drain());
    }
    Ok(emitted)
}
