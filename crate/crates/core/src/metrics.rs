//! Per-class confusion counts, mean accuracy and macro F1.

use crate::error::{Error, Result};
use crate::fusion::{LabelVector, NUM_CLASSES};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Zero whenever precision or recall is undefined or both are zero.
    pub fn f1(&self) -> f64 {
        if self.tp + self.fp == 0 || self.tp + self.fn_ == 0 {
            return 0.0;
        }
        let p = self.tp as f64 / (self.tp + self.fp) as f64;
        let r = self.tp as f64 / (self.tp + self.fn_) as f64;
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub classes: [ClassCounts; NUM_CLASSES],
}

impl ConfusionCounts {
    pub fn samples(&self) -> u64 {
        self.classes[0].total()
    }
}

pub fn confusion_counts(pred: &[LabelVector], truth: &[LabelVector]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::shape(
            "confusion_counts",
            format!("{} predictions for {} labels", pred.len(), truth.len()),
        ));
    }
    let mut counts = ConfusionCounts::default();
    for (index, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.is_empty() {
            return Err(Error::EmptyPrediction { index });
        }
        for (c, slot) in counts.classes.iter_mut().enumerate() {
            match (p.get(c), t.get(c)) {
                (true, true) => slot.tp += 1,
                (true, false) => slot.fp += 1,
                (false, false) => slot.tn += 1,
                (false, true) => slot.fn_ += 1,
            }
        }
    }
    Ok(counts)
}

fn check_samples(op: &'static str, counts: &ConfusionCounts) -> Result<()> {
    if counts.samples() == 0 {
        return Err(Error::domain(op, "no samples"));
    }
    Ok(())
}

pub fn mean_accuracy(counts: &ConfusionCounts) -> Result<f64> {
    check_samples("mean_accuracy", counts)?;
    Ok(counts.classes.iter().map(ClassCounts::accuracy).sum::<f64>() / NUM_CLASSES as f64)
}

/// Per-class F1 and their unweighted mean.
pub fn macro_f1(counts: &ConfusionCounts) -> Result<([f64; NUM_CLASSES], f64)> {
    check_samples("macro_f1", counts)?;
    let per_class = counts.classes.map(|c| c.f1());
    Ok((per_class, per_class.iter().sum::<f64>() / NUM_CLASSES as f64))
}

/// Macro F1 and mean accuracy of predictions against truth.
pub fn score(pred: &[LabelVector], truth: &[LabelVector]) -> Result<(f64, f64)> {
    let counts = confusion_counts(pred, truth)?;
    Ok((macro_f1(&counts)?.1, mean_accuracy(&counts)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(tp: u64, fp: u64, tn: u64, fn_: u64) -> ClassCounts {
        ClassCounts { tp, fp, tn, fn_ }
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(one(3, 1, 5, 1).accuracy(), 0.8);
        assert!((one(2, 1, 0, 1).f1() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(one(0, 0, 9, 0).f1(), 0.0);
        assert_eq!(one(0, 3, 6, 0).f1(), 0.0);
        assert_eq!(one(0, 0, 6, 3).f1(), 0.0);
        assert_eq!(one(4, 0, 0, 0).f1(), 1.0);
    }

    #[test]
    fn macro_is_mean_over_all_classes() {
        let mut counts = ConfusionCounts::default();
        for c in counts.classes.iter_mut() {
            *c = one(0, 0, 4, 0);
        }
        counts.classes[0] = one(4, 0, 0, 0);
        counts.classes[1] = one(1, 1, 1, 1);
        let (per, m) = macro_f1(&counts).unwrap();
        assert_eq!(per[0], 1.0);
        assert_eq!(per[1], 0.5);
        assert!((m - 1.5 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let v: Vec<LabelVector> = (0..18)
            .map(|i| LabelVector::from_indices(&[i]).unwrap())
            .collect();
        let counts = confusion_counts(&v, &v).unwrap();
        assert!(counts.classes.iter().all(|c| c.fp == 0 && c.fn_ == 0));
        assert_eq!(mean_accuracy(&counts).unwrap(), 1.0);
        assert_eq!(macro_f1(&counts).unwrap().1, 1.0);
    }

    #[test]
    fn contract_errors() {
        let a = LabelVector::from_indices(&[1]).unwrap();
        assert!(confusion_counts(&[a], &[]).is_err());
        assert!(matches!(
            confusion_counts(&[a, LabelVector::empty()], &[a, a]),
            Err(Error::EmptyPrediction { index: 1 })
        ));
        let empty = confusion_counts(&[], &[]).unwrap();
        assert!(mean_accuracy(&empty).is_err());
        assert!(macro_f1(&empty).is_err());
    }
}
