use crate::error::{Error, Result};
use crate::fusion::{LabelVector, NUM_CLASSES};
use crate::tensor::{sigmoid, Tensor};

/// Multi-hot `[B, 18]` target matrix.
pub fn targets_from_labels(labels: &[LabelVector]) -> Tensor {
    let data = labels.iter().flat_map(|l| l.to_multi_hot()).collect();
    Tensor::new(&[labels.len(), NUM_CLASSES], data).expect("18 columns per row")
}

/// Class-weighted binary cross-entropy on logits, averaged over the batch:
/// `−(1/B) Σ_b Σ_c w_c [y log σ(z) + (1 − y) log(1 − σ(z))]`.
///
/// Each term is evaluated as `max(z, 0) − z·y + ln(1 + e^{−|z|})`. Returns
/// the loss and its gradient `w_c (σ(z) − y) / B`.
pub fn weighted_bce_loss(logits: &Tensor, targets: &Tensor, weights: &[f64; NUM_CLASSES]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 || logits.cols() != NUM_CLASSES || logits.shape() != targets.shape() {
        return Err(Error::shape(
            "weighted_bce_loss",
            format!("logits {:?}, targets {:?}", logits.shape(), targets.shape()),
        ));
    }
    if !logits.is_finite() {
        return Err(Error::domain("weighted_bce_loss", "non-finite logit"));
    }
    let b = logits.rows();
    if b == 0 {
        return Ok((0.0, Tensor::zeros(logits.shape())));
    }
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (zr, yr) in logits.data().chunks(NUM_CLASSES).zip(targets.data().chunks(NUM_CLASSES)) {
        for ((&z, &y), &w) in zr.iter().zip(yr).zip(weights) {
            loss += w * (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p());
            grad.push(w * (sigmoid(z) - y) * inv_b);
        }
    }
    Ok((loss * inv_b, Tensor::new(logits.shape(), grad)?))
}
