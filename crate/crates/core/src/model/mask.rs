use std::fmt;

/// Set of active feature kinds, one bit per kind id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FeatureMask(u8);

impl FeatureMask {
    pub const EMPTY: FeatureMask = FeatureMask(0);

    pub fn from_bits(bits: u8) -> Self {
        FeatureMask(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn single(kind: usize) -> Self {
        Self::EMPTY.with(kind)
    }

    pub fn all(k: usize) -> Self {
        assert!(k <= 8, "at most 8 kinds");
        FeatureMask(((1u16 << k) - 1) as u8)
    }

    pub fn with(self, kind: usize) -> Self {
        assert!(kind < 8, "kind id {kind} out of range");
        FeatureMask(self.0 | (1 << kind))
    }

    pub fn contains(self, kind: usize) -> bool {
        kind < 8 && self.0 & (1 << kind) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Kind ids in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..8).filter(move |&k| self.contains(k))
    }

    /// All 2^k - 1 nonempty masks over `k` kinds, ascending by bit pattern.
    pub fn nonempty_subsets(k: usize) -> impl Iterator<Item = FeatureMask> {
        (1..=Self::all(k).0 as u16).map(|b| FeatureMask(b as u8))
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}
