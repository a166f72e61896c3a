use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{LabelVector, IMAGE_DIM, TEXT_DIM};
use crate::tensor::Tensor;

use super::femb::{read_embeddings, write_embeddings};
use super::labels::{read_labels, write_predictions};

pub const IDS_FILE: &str = "ids.csv";
pub const TEXT_FILE: &str = "text.femb";
pub const IMAGE_FILE: &str = "image.femb";
pub const LABELS_FILE: &str = "labels.csv";

/// Row-aligned ids, text embeddings `[N, 128]`, image embeddings `[N, 1792]`
/// and optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    ids: Vec<String>,
    text: Tensor,
    image: Tensor,
    labels: Option<Vec<LabelVector>>,
}

impl EmbeddingDataset {
    pub fn new(
        ids: Vec<String>,
        text: Tensor,
        image: Tensor,
        labels: Option<Vec<LabelVector>>,
    ) -> Result<Self> {
        let n = ids.len();
        let dims_ok = text.rank() == 2
            && image.rank() == 2
            && text.shape() == [n, TEXT_DIM]
            && image.shape() == [n, IMAGE_DIM];
        if !dims_ok {
            return Err(Error::Dataset(format!(
                "{n} ids need text [{n}, {TEXT_DIM}] and image [{n}, {IMAGE_DIM}], got {:?} and {:?}",
                text.shape(),
                image.shape()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Dataset(format!("{} label rows for {n} ids", l.len())));
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            ids,
            text,
            image,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn text(&self) -> &Tensor {
        &self.text
    }

    pub fn image(&self) -> &Tensor {
        &self.image
    }

    pub fn labels(&self) -> Option<&[LabelVector]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[LabelVector]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Dataset("dataset has no labels".into()))
    }

    pub fn with_labels(self, labels: Option<Vec<LabelVector>>) -> Result<Self> {
        Self::new(self.ids, self.text, self.image, labels)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            text: self.text.select_rows(indices),
            image: self.image.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Rows of `self` followed by rows of `other`; both must be labelled or
    /// both unlabelled, and ids must stay unique.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some([a.as_slice(), b].concat()),
            (None, None) => None,
            _ => {
                return Err(Error::Dataset(
                    "cannot merge labelled and unlabelled datasets".into(),
                ))
            }
        };
        Self::new(
            [self.ids.as_slice(), &other.ids].concat(),
            Tensor::vstack(&[&self.text, &other.text])?,
            Tensor::vstack(&[&self.image, &other.image])?,
            labels,
        )
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_ids(&dir.join(IDS_FILE), &self.ids)?;
        write_embeddings(&self.text, &dir.join(TEXT_FILE))?;
        write_embeddings(&self.image, &dir.join(IMAGE_FILE))?;
        if let Some(labels) = &self.labels {
            write_predictions(&dir.join(LABELS_FILE), &self.ids, labels)?;
        }
        Ok(())
    }

    /// Loads a dataset directory. Labels are read when `labels.csv` exists and
    /// must cover every id.
    pub fn load(dir: &Path) -> Result<Self> {
        let ids = read_ids(&dir.join(IDS_FILE))?;
        let text = read_embeddings(&dir.join(TEXT_FILE))?;
        let image = read_embeddings(&dir.join(IMAGE_FILE))?;
        let label_path = dir.join(LABELS_FILE);
        let labels = if label_path.exists() {
            let map = read_labels(&label_path)?;
            let rows = ids
                .iter()
                .map(|id| {
                    map.get(id)
                        .copied()
                        .ok_or_else(|| Error::Dataset(format!("no labels for id `{id}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(rows)
        } else {
            None
        };
        Self::new(ids, text, image, labels)
    }
}

/// One id per line, no header.
pub fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for id in ids {
        w.write_record([id])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)?;
    let mut ids = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 1 {
            return Err(Error::Parse(format!("id row with {} fields", rec.len())));
        }
        ids.push(rec[0].to_string());
    }
    Ok(ids)
}

/// Ensures no id occurs in more than one of `splits`.
pub fn check_disjoint(splits: &[&EmbeddingDataset]) -> Result<()> {
    let mut seen = HashSet::new();
    for s in splits {
        for id in s.ids() {
            if !seen.insert(id.as_str()) {
                return Err(Error::Dataset(format!("id `{id}` appears in more than one split")));
            }
        }
    }
    Ok(())
}
