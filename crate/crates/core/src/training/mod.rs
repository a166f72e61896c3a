//! Class weighting, loss, optimizer, the epoch loop and pseudo-labelling.

mod adam;
mod config;
mod loss;
mod pseudo;
mod train;
mod weights;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use config::{parse_fusion_set, TrainConfig, CONFIG_KEYS};
pub use loss::{targets_from_labels, weighted_bce_loss};
pub use pseudo::{fused_logits, fused_predict, pseudo_label_loop, train_fusion_set, PseudoLabelOutcome};
pub use train::{evaluate_model, predict, predict_logits, train_head, EpochRecord, History};
pub use weights::{class_weight, ClassWeights, LogBase, MIN_COUNT};
