use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::fusion::{predict_labels, FusionModel, HeadDims, HeadKind, LabelVector};
use crate::metrics::score;
use crate::tensor::Tensor;

use super::adam::Adam;
use super::config::TrainConfig;
use super::loss::{targets_from_labels, weighted_bce_loss};
use super::weights::ClassWeights;

/// Rows per forward pass when scoring a whole dataset.
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_macro_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl History {
    pub fn best_val_f1(&self) -> Option<f64> {
        self.epochs
            .iter()
            .filter_map(|e| e.val_macro_f1)
            .fold(None, |acc, f| Some(acc.map_or(f, |a: f64| a.max(f))))
    }

    /// `epoch,train_loss,val_loss,val_macro_f1` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_macro_f1\n");
        let opt = |v: Option<f64>| v.map_or_else(|| "na".to_string(), |v| format!("{v:.17e}"));
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.17e},{},{}\n",
                e.epoch,
                e.train_loss,
                opt(e.val_loss),
                opt(e.val_macro_f1)
            ));
        }
        out
    }
}

fn round_to_storage(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = *v as f32 as f64;
    }
}

/// Logits `[N, 18]` for every row of `data`.
pub fn predict_logits(model: &FusionModel, data: &EmbeddingDataset) -> Result<Tensor> {
    let n = data.len();
    let mut parts = Vec::new();
    for start in (0..n).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(n);
        parts.push(model.forward_batch(&data.text().slice_rows(start, end), &data.image().slice_rows(start, end))?);
    }
    if parts.is_empty() {
        return Ok(Tensor::zeros(&[0, crate::fusion::NUM_CLASSES]));
    }
    Tensor::vstack(&parts.iter().collect::<Vec<_>>())
}

pub fn predict(model: &FusionModel, data: &EmbeddingDataset, threshold: f64) -> Result<Vec<LabelVector>> {
    predict_labels(&predict_logits(model, data)?, threshold)
}

/// Macro F1 and mean accuracy of `model` on a labelled dataset.
pub fn evaluate_model(model: &FusionModel, data: &EmbeddingDataset, threshold: f64) -> Result<(f64, f64)> {
    score(&predict(model, data, threshold)?, data.require_labels()?)
}

/// Trains one head with Adam on mini-batches and keeps the parameters of the
/// epoch with the best validation macro F1 (the last epoch when `val` is
/// empty). Parameters are held at `f32` precision after every step so the
/// returned model saves and reloads without change.
pub fn train_head(
    train: &EmbeddingDataset,
    val: &EmbeddingDataset,
    kind: HeadKind,
    config: &TrainConfig,
) -> Result<(FusionModel, History)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let train_labels = train.require_labels()?;
    let has_val = !val.is_empty();
    let val_targets = if has_val {
        Some(targets_from_labels(val.require_labels()?))
    } else {
        None
    };
    let weights = if config.weighting {
        ClassWeights::from_labels(train_labels)?
    } else {
        ClassWeights::uniform()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = FusionModel::with_dims(kind, HeadDims::default(), config.key_dim, &mut rng)?.round_to_storage();
    let mut opt = Adam::new(config.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, FusionModel)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let part = train.select(batch);
            let (logits, cache) = model.forward_train(part.text(), part.image())?;
            let targets = targets_from_labels(part.require_labels()?);
            let (loss, grad) = weighted_bce_loss(&logits, &targets, &weights.weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite { op: "train_head" });
            }
            loss_sum += loss * batch.len() as f64;
            let grads = model.backward(&cache, &grad)?;
            let mut params = model.parameters_mut();
            opt.step(params.iter_mut().map(|p| &mut **p).collect(), &grads)?;
            for p in params {
                round_to_storage(p);
            }
        }
        let train_loss = loss_sum / train.len() as f64;

        let mut record = EpochRecord {
            epoch,
            train_loss,
            val_loss: None,
            val_macro_f1: None,
        };
        if let Some(targets) = &val_targets {
            let logits = predict_logits(&model, val)?;
            let (val_loss, _) = weighted_bce_loss(&logits, targets, &weights.weights)?;
            let (f1, _) = score(&predict_labels(&logits, config.threshold)?, val.require_labels()?)?;
            record.val_loss = Some(val_loss);
            record.val_macro_f1 = Some(f1);
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, model.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
            }
        } else {
            history.best_epoch = epoch;
        }
        history.epochs.push(record);
        if has_val && since_best > config.patience {
            break;
        }
    }
    let model = best.map_or(model, |(_, m)| m);
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    fn quick() -> TrainConfig {
        TrainConfig {
            max_epochs: 4,
            batch_size: 16,
            lr: 5e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn deterministic_and_best_epoch_returned() {
        let (train, _, val) = gen_synthetic(1, 120, 1, 60, 0.3).unwrap();
        let (m1, h1) = train_head(&train, &val, HeadKind::TextLinear, &quick()).unwrap();
        let (m2, h2) = train_head(&train, &val, HeadKind::TextLinear, &quick()).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
        let (f1, _) = evaluate_model(&m1, &val, 0.5).unwrap();
        assert_eq!(Some(f1), h1.best_val_f1());
        for (i, e) in h1.epochs.iter().enumerate() {
            assert_eq!(e.epoch, i + 1);
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (train, _, val) = gen_synthetic(2, 50, 1, 20, 0.3).unwrap();
        let cfg = TrainConfig { lr: 0.0, patience: 10, ..quick() };
        let (m, h) = train_head(&train, &val, HeadKind::VisionLinear, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = FusionModel::with_dims(HeadKind::VisionLinear, HeadDims::default(), cfg.key_dim, &mut rng)
            .unwrap()
            .round_to_storage();
        assert_eq!(m, init);
        let l0 = h.epochs[0].train_loss;
        assert!(h.epochs.iter().all(|e| ((e.train_loss - l0) / l0).abs() < 1e-12));
    }

    #[test]
    fn patience_zero_stops_at_first_plateau() {
        let (train, _, val) = gen_synthetic(3, 40, 1, 20, 0.3).unwrap();
        let cfg = TrainConfig { lr: 0.0, patience: 0, ..quick() };
        let (_, h) = train_head(&train, &val, HeadKind::TextLinear, &cfg).unwrap();
        assert_eq!(h.epochs.len(), 2);
        assert_eq!(h.best_epoch, 1);
    }

    #[test]
    fn empty_val_runs_all_epochs() {
        let (train, _, val) = gen_synthetic(4, 30, 1, 5, 0.3).unwrap();
        let empty = val.select(&[]);
        let (_, h) = train_head(&train, &empty, HeadKind::TextLinear, &quick()).unwrap();
        assert_eq!(h.epochs.len(), 4);
        assert_eq!(h.best_epoch, 4);
        assert!(h.epochs.iter().all(|e| e.val_macro_f1.is_none()));
    }

    #[test]
    fn errors() {
        let (train, _, val) = gen_synthetic(5, 10, 1, 5, 0.3).unwrap();
        assert!(matches!(
            train_head(&train.select(&[]), &val, HeadKind::TextLinear, &quick()),
            Err(Error::Dataset(_))
        ));
        let unlabelled = train.clone().with_labels(None).unwrap();
        assert!(train_head(&unlabelled, &val, HeadKind::TextLinear, &quick()).is_err());
    }
}
