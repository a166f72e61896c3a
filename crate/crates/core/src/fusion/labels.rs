use std::fmt;

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 18;

/// Class ids in slot order: 1..=19 without 12.
pub const CLASS_IDS: [u32; NUM_CLASSES] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 14, 15, 16, 17, 18, 19];

/// Slot of a class id: `id − 1` below 12, `id − 2` above.
pub fn class_index(id: u32) -> Result<usize> {
    match id {
        1..=11 => Ok(id as usize - 1),
        13..=19 => Ok(id as usize - 2),
        _ => Err(Error::LabelDomain(id.to_string())),
    }
}

pub fn class_id(index: usize) -> u32 {
    CLASS_IDS[index]
}

/// Multi-hot set over the 18 class slots.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LabelVector([bool; NUM_CLASSES]);

impl LabelVector {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_bits(bits: [bool; NUM_CLASSES]) -> Self {
        Self(bits)
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let mut v = Self::empty();
        for &i in indices {
            if i >= NUM_CLASSES {
                return Err(Error::IndexOutOfRange {
                    op: "LabelVector::from_indices",
                    index: i,
                    len: NUM_CLASSES,
                });
            }
            v.0[i] = true;
        }
        Ok(v)
    }

    pub fn from_class_ids(ids: &[u32]) -> Result<Self> {
        let mut v = Self::empty();
        for &id in ids {
            v.0[class_index(id)?] = true;
        }
        Ok(v)
    }

    pub fn bits(&self) -> &[bool; NUM_CLASSES] {
        &self.0
    }

    pub fn get(&self, index: usize) -> bool {
        self.0[index]
    }

    pub fn set(&mut self, index: usize, on: bool) {
        self.0[index] = on;
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..NUM_CLASSES).filter(|&i| self.0[i])
    }

    /// Set class ids in ascending order.
    pub fn class_ids(&self) -> Vec<u32> {
        self.indices().map(class_id).collect()
    }

    pub fn to_multi_hot(&self) -> [f64; NUM_CLASSES] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }

    /// True when every label of `self` is also in `other`.
    pub fn is_subset_of(&self, other: &LabelVector) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| !a || *b)
    }
}

impl fmt::Debug for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.class_ids()).finish()
    }
}
