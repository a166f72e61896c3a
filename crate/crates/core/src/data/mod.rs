//! On-disk formats and the synthetic dataset generator.

mod dataset;
mod femb;
mod labels;
mod model;
mod synthetic;

pub use dataset::{
    check_disjoint, read_ids, write_ids, EmbeddingDataset, IDS_FILE, IMAGE_FILE, LABELS_FILE,
    TEXT_FILE,
};
pub use femb::{
    decode_embeddings, encode_embeddings, read_embeddings, write_embeddings, FEMB_MAGIC,
    FEMB_VERSION,
};
pub use labels::{
    format_label_field, parse_label_field, read_labels, read_labels_from, write_labels_to,
    write_predictions,
};
pub use model::{
    decode_model, encode_model, load_model, load_model_as, save_model, FUS1_MAGIC, FUS1_VERSION,
};
pub use synthetic::{gen_synthetic, MAX_LABELS, TEXT_CLASSES};
