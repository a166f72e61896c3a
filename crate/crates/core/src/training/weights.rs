//! Log-ratio class weights: with `x = log n_i / log T`, `w_i = (x + 1/x) / 2`.

use crate::error::{Error, Result};
use crate::fusion::{LabelVector, NUM_CLASSES};

/// Logarithm base used for the ratio. The weights do not depend on it; the
/// choice exists so that can be checked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }
}

/// Smallest class count used in the ratio; keeps `log n_i` positive.
pub const MIN_COUNT: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    pub weights: [f64; NUM_CLASSES],
    pub total: u64,
    pub counts: [u64; NUM_CLASSES],
}

/// Weight for a single class count against total `t`.
pub fn class_weight(n: u64, t: u64, base: LogBase) -> Result<f64> {
    if t < 3 {
        return Err(Error::domain("class_weights", format!("total {t} < 3")));
    }
    let n = n.max(MIN_COUNT);
    if n > t {
        return Err(Error::domain("class_weights", format!("class count {n} exceeds total {t}")));
    }
    let x = base.log(n as f64) / base.log(t as f64);
    Ok((x + 1.0 / x) / 2.0)
}

impl ClassWeights {
    pub fn uniform() -> Self {
        Self {
            weights: [1.0; NUM_CLASSES],
            total: 0,
            counts: [0; NUM_CLASSES],
        }
    }

    pub fn from_counts(counts: [u64; NUM_CLASSES], total: u64) -> Result<Self> {
        Self::from_counts_with_base(counts, total, LogBase::Natural)
    }

    pub fn from_counts_with_base(counts: [u64; NUM_CLASSES], total: u64, base: LogBase) -> Result<Self> {
        let mut weights = [0.0; NUM_CLASSES];
        for (w, &n) in weights.iter_mut().zip(&counts) {
            *w = class_weight(n, total, base)?;
        }
        Ok(Self {
            weights,
            total,
            counts,
        })
    }

    /// Counts positives per class; `T` is the total number of positive labels.
    pub fn from_labels(labels: &[LabelVector]) -> Result<Self> {
        let mut counts = [0u64; NUM_CLASSES];
        for l in labels {
            for i in l.indices() {
                counts[i] += 1;
            }
        }
        Self::from_counts(counts, counts.iter().sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_points() {
        let w = |n| class_weight(n, 10_000, LogBase::Natural).unwrap();
        assert_eq!(w(10_000), 1.0);
        assert!((w(100) - 1.25).abs() < 1e-12);
        assert!((w(10) - 2.125).abs() < 1e-12);
        assert!(w(0) == w(2) && w(1) == w(2));
    }

    #[test]
    fn domain_errors() {
        assert!(class_weight(2, 2, LogBase::Natural).is_err());
        assert!(class_weight(11, 10, LogBase::Natural).is_err());
        assert!(ClassWeights::from_labels(&[LabelVector::from_indices(&[0]).unwrap()]).is_err());
    }

    #[test]
    fn from_labels_counts() {
        let l = |ix: &[usize]| LabelVector::from_indices(ix).unwrap();
        let w = ClassWeights::from_labels(&[l(&[0, 1]), l(&[0]), l(&[0, 5])]).unwrap();
        assert_eq!(w.total, 5);
        assert_eq!(w.counts[0], 3);
        assert_eq!(w.counts[1], 1);
        assert!(w.weights[0] < w.weights[1]);
        assert_eq!(w.weights[1], w.weights[17]);
    }
}
