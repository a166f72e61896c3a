//! Classification heads, logit fusion and label assignment.

mod head;
mod labels;

pub use head::{
    concat_features, image_to_tokens, image_to_tokens_with, ForwardCache, FusionModel, HeadDims,
    HeadKind, ModelGrads, DEFAULT_KEY_DIM, IMAGE_DIM, TEXT_DIM,
};
pub use labels::{class_id, class_index, LabelVector, CLASS_IDS, NUM_CLASSES};

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, softmax_rows, Tensor};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Logits for one sample, single-element shorthand for [`FusionModel::forward`].
pub fn head_forward(model: &FusionModel, text: &Tensor, image: &Tensor) -> Result<Tensor> {
    model.forward(text, image)
}

/// Elementwise mean of two or more equally shaped logit tensors.
pub fn fuse_logits(logits: &[Tensor]) -> Result<Tensor> {
    if logits.len() < 2 {
        return Err(Error::Arity {
            op: "fuse_logits",
            min: 2,
            got: logits.len(),
        });
    }
    let shape = logits[0].shape();
    if let Some(bad) = logits.iter().find(|t| t.shape() != shape) {
        return Err(Error::shape(
            "fuse_logits",
            format!("{:?} vs {:?}", shape, bad.shape()),
        ));
    }
    let mut sum = Tensor::zeros(shape);
    for t in logits {
        sum.add_scaled(t, 1.0);
    }
    Ok(sum.scale(1.0 / logits.len() as f64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProbMode {
    /// Independent per-class probabilities.
    #[default]
    Sigmoid,
    /// One distribution over all classes.
    Softmax,
}

/// Rows of `logits` (last dimension) become probabilities.
pub fn logits_to_probs(logits: &Tensor, mode: ProbMode) -> Tensor {
    match mode {
        ProbMode::Sigmoid => logits.map(sigmoid),
        ProbMode::Softmax => softmax_rows(logits),
    }
}

/// Every class above `threshold`; when none is, the single most likely class
/// (lowest index on ties).
pub fn assign_labels(probs: &[f64], threshold: f64) -> Result<LabelVector> {
    if probs.len() != NUM_CLASSES {
        return Err(Error::shape(
            "assign_labels",
            format!("expected {NUM_CLASSES} probabilities, got {}", probs.len()),
        ));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::domain(
            "assign_labels",
            format!("probability {p} outside [0, 1]"),
        ));
    }
    let mut labels = LabelVector::empty();
    for (i, &p) in probs.iter().enumerate() {
        if p > threshold {
            labels.set(i, true);
        }
    }
    if labels.is_empty() {
        labels.set(argmax(probs), true);
    }
    Ok(labels)
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Sigmoid, threshold and fallback applied to each row of a `[B, 18]` logit matrix.
pub fn predict_labels(logits: &Tensor, threshold: f64) -> Result<Vec<LabelVector>> {
    if logits.rank() != 2 || logits.cols() != NUM_CLASSES {
        return Err(Error::shape(
            "predict_labels",
            format!("expected [_, {NUM_CLASSES}], got {:?}", logits.shape()),
        ));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite { op: "predict_labels" });
    }
    let probs = logits_to_probs(logits, ProbMode::Sigmoid);
    (0..probs.rows())
        .map(|i| assign_labels(probs.row(i), threshold))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fuse_examples() {
        let a = Tensor::vector([1.0, 3.0].repeat(9));
        let b = Tensor::vector([3.0, 1.0].repeat(9));
        assert_eq!(fuse_logits(&[a.clone(), b]).unwrap().data(), &[2.0; 18]);
        assert_eq!(fuse_logits(&[a.clone(), a.clone()]).unwrap(), a);
        assert!(matches!(fuse_logits(std::slice::from_ref(&a)), Err(Error::Arity { got: 1, .. })));
        assert!(fuse_logits(&[]).is_err());
        assert!(fuse_logits(&[a, Tensor::zeros(&[17])]).is_err());
    }

    #[test]
    fn fuse_matches_sum_and_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v = || Tensor::vector((0..18).map(|_| rng.random_range(-5.0..5.0)).collect());
        let list: Vec<Tensor> = (0..5).map(|_| v()).collect();
        let fused = fuse_logits(&list).unwrap();
        for c in 0..18 {
            let want = list.iter().map(|t| t.data()[c]).sum::<f64>() / 5.0;
            assert!((fused.data()[c] - want).abs() < 1e-12);
        }
        let mut rev = list.clone();
        rev.reverse();
        let r = fuse_logits(&rev).unwrap();
        assert!(r.sub(&fused).unwrap().max_abs() < 1e-12);

        let c = v();
        let shifted: Vec<Tensor> = list.iter().map(|t| t.add(&c).unwrap()).collect();
        let lhs = fuse_logits(&shifted).unwrap();
        let rhs = fused.add(&c).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn probs_modes() {
        let z = Tensor::zeros(&[18]);
        assert!(logits_to_probs(&z, ProbMode::Sigmoid).data().iter().all(|p| *p == 0.5));
        for p in logits_to_probs(&z, ProbMode::Softmax).data() {
            assert!((p - 1.0 / 18.0).abs() < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let l = Tensor::vector((0..18).map(|_| rng.random_range(-30.0..30.0)).collect());
            let s = logits_to_probs(&l, ProbMode::Softmax).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn assign_examples() {
        let mut p = [0.0; 18];
        p[..4].copy_from_slice(&[0.6, 0.2, 0.7, 0.1]);
        let l = assign_labels(&p, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(l.indices().collect::<Vec<_>>(), vec![0, 2]);

        let mut p = [0.3; 18];
        p[5] = 0.4;
        assert_eq!(assign_labels(&p, 0.5).unwrap().indices().collect::<Vec<_>>(), vec![5]);
        assert_eq!(assign_labels(&[0.3; 18], 0.5).unwrap().indices().collect::<Vec<_>>(), vec![0]);
        // exactly at threshold is not above it
        assert_eq!(assign_labels(&[0.5; 18], 0.5).unwrap().count(), 1);
    }

    #[test]
    fn assign_rejects_bad_input() {
        let mut p = [0.2; 18];
        p[3] = 1.5;
        assert!(matches!(assign_labels(&p, 0.5), Err(Error::Domain { .. })));
        p[3] = f64::NAN;
        assert!(assign_labels(&p, 0.5).is_err());
        assert!(assign_labels(&[0.2; 17], 0.5).is_err());
    }

    #[test]
    fn predict_rows() {
        let mut logits = Tensor::filled(&[2, 18], -3.0);
        logits.row_mut(0)[4] = 2.0;
        logits.row_mut(1)[7] = -1.0;
        let out = predict_labels(&logits, 0.5).unwrap();
        assert_eq!(out[0].indices().collect::<Vec<_>>(), vec![4]);
        assert_eq!(out[1].indices().collect::<Vec<_>>(), vec![7]);
    }
}
