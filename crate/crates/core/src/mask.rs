//! Fixed-capacity bit-set over hypothesis-class indices.
//!
//! Classes up to 128 members stay inline; larger classes spill to the heap.

use smallvec::{smallvec, SmallVec};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mask {
    words: SmallVec<[u64; 2]>,
}

impl Mask {
    pub fn empty(len: usize) -> Self {
        Mask {
            words: smallvec![0; len.div_ceil(64)],
        }
    }

    pub fn full(len: usize) -> Self {
        let mut m = Mask::empty(len);
        for i in 0..len {
            m.insert(i);
        }
        m
    }

    pub fn from_indices(len: usize, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Mask::empty(len);
        for i in idx {
            m.insert(i);
        }
        m
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.words
            .get(i / 64)
            .is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            words: self
                .words
                .iter()
                .zip(other.words.iter())
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    pub fn is_subset(&self, other: &Mask) -> bool {
        self.words
            .iter()
            .zip(other.words.iter())
            .all(|(a, b)| a & !b == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn first(&self) -> Option<usize> {
        self.iter().next()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_operations() {
        let a = Mask::from_indices(130, [0, 5, 64, 129]);
        let b = Mask::from_indices(130, [5, 129, 7]);
        assert_eq!(a.and(&b).iter().collect::<Vec<_>>(), vec![5, 129]);
        assert_eq!(a.count(), 4);
        assert!(a.and(&b).is_subset(&a));
        assert!(!b.is_subset(&a));
        assert!(Mask::empty(3).is_empty());
        assert_eq!(Mask::full(3).iter().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(!a.contains(1000));
    }
}
