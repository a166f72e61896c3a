//! Self-training with pseudo-labels on an unlabelled split.

use crate::data::{check_disjoint, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::fusion::{fuse_logits, predict_labels, FusionModel, LabelVector};
use crate::metrics::score;
use crate::tensor::Tensor;

use super::config::TrainConfig;
use super::train::{predict_logits, train_head};

/// Averaged logits of `heads` (a single head's logits pass through unchanged).
pub fn fused_logits(heads: &[FusionModel], data: &EmbeddingDataset) -> Result<Tensor> {
    let logits = heads
        .iter()
        .map(|h| predict_logits(h, data))
        .collect::<Result<Vec<_>>>()?;
    match logits.len() {
        0 => Err(Error::Arity {
            op: "fused_logits",
            min: 1,
            got: 0,
        }),
        1 => Ok(logits.into_iter().next().expect("one")),
        _ => fuse_logits(&logits),
    }
}

pub fn fused_predict(heads: &[FusionModel], data: &EmbeddingDataset, threshold: f64) -> Result<Vec<LabelVector>> {
    predict_labels(&fused_logits(heads, data)?, threshold)
}

pub fn train_fusion_set(train: &EmbeddingDataset, val: &EmbeddingDataset, config: &TrainConfig) -> Result<Vec<FusionModel>> {
    config
        .fusion_set
        .iter()
        .map(|&k| train_head(train, val, k, config).map(|(m, _)| m))
        .collect()
}

#[derive(Clone, Debug)]
pub struct PseudoLabelOutcome {
    /// Heads of the best round, in fusion-set order.
    pub heads: Vec<FusionModel>,
    /// Pseudo-labels the best heads were trained with, aligned with the
    /// unlabelled ids; empty when round 0 stayed best.
    pub pseudo_labels: Vec<LabelVector>,
    /// Fused predictions of the best heads on the unlabelled split.
    pub predictions: Vec<LabelVector>,
    /// Fused validation macro F1 per completed round, round 0 first.
    pub round_f1: Vec<f64>,
    pub best_round: usize,
}

impl PseudoLabelOutcome {
    pub fn best_f1(&self) -> f64 {
        self.round_f1[self.best_round]
    }
}

/// Round 0 trains the fusion set on `train`. Each later round labels
/// `unlabelled` with the current best heads, retrains from scratch on
/// `train` plus those pseudo-labels, and is kept only if fused validation
/// macro F1 beats the best so far by more than `config.pseudo_eps`. The loop
/// ends at the first round that does not, or after `config.pseudo_rounds`.
pub fn pseudo_label_loop(
    train: &EmbeddingDataset,
    unlabelled: &EmbeddingDataset,
    val: &EmbeddingDataset,
    config: &TrainConfig,
) -> Result<PseudoLabelOutcome> {
    config.validate()?;
    check_disjoint(&[train, unlabelled, val])?;
    if val.is_empty() {
        return Err(Error::Dataset("pseudo-label loop needs a validation split".into()));
    }
    let val_labels = val.require_labels()?;
    let unlabelled = unlabelled.clone().with_labels(None)?;
    let val_f1 = |heads: &[FusionModel]| -> Result<f64> {
        Ok(score(&fused_predict(heads, val, config.threshold)?, val_labels)?.0)
    };

    let mut heads = train_fusion_set(train, val, config)?;
    let mut round_f1 = vec![val_f1(&heads)?];
    let mut best_f1 = round_f1[0];
    let mut best_round = 0;
    let mut pseudo_labels = Vec::new();

    for round in 1..=config.pseudo_rounds {
        if unlabelled.is_empty() {
            break;
        }
        let candidate = fused_predict(&heads, &unlabelled, config.threshold)?;
        let merged = train.concat(&unlabelled.clone().with_labels(Some(candidate.clone()))?)?;
        let next = train_fusion_set(&merged, val, config)?;
        let f1 = val_f1(&next)?;
        round_f1.push(f1);
        if f1 > best_f1 + config.pseudo_eps {
            heads = next;
            best_f1 = f1;
            best_round = round;
            pseudo_labels = candidate;
        } else {
            break;
        }
    }
    let predictions = fused_predict(&heads, &unlabelled, config.threshold)?;
    Ok(PseudoLabelOutcome {
        heads,
        pseudo_labels,
        predictions,
        round_f1,
        best_round,
    })
}
