//! `ImageID,Labels` CSV files; labels are space-separated class ids.

use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::fusion::LabelVector;

const HEADER: [&str; 2] = ["ImageID", "Labels"];

pub fn parse_label_field(field: &str) -> Result<LabelVector> {
    let mut ids = Vec::new();
    for tok in field.split_whitespace() {
        let id: u32 = tok.parse().map_err(|_| Error::LabelDomain(tok.to_string()))?;
        ids.push(id);
    }
    LabelVector::from_class_ids(&ids)
}

pub fn format_label_field(labels: &LabelVector) -> String {
    labels
        .class_ids()
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn read_labels_from<R: std::io::Read>(reader: R) -> Result<IndexMap<String, LabelVector>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?;
    if header.len() != 2 || header.iter().zip(HEADER).any(|(a, b)| a.trim() != b) {
        return Err(Error::Parse(format!(
            "expected header `ImageID,Labels`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = IndexMap::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Parse(format!(
                "line {}: expected 2 fields, got {}",
                record.position().map_or(0, |p| p.line()),
                record.len()
            )));
        }
        let id = record[0].to_string();
        let labels = parse_label_field(&record[1])?;
        if out.insert(id.clone(), labels).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<IndexMap<String, LabelVector>> {
    read_labels_from(std::fs::File::open(path)?)
}

pub fn write_labels_to<W: std::io::Write>(writer: W, ids: &[String], labels: &[LabelVector]) -> Result<()> {
    if ids.len() != labels.len() {
        return Err(Error::shape(
            "write_predictions",
            format!("{} ids for {} label rows", ids.len(), labels.len()),
        ));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &format_label_field(l)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per id with its label set in ascending class-id order.
pub fn write_predictions(path: &Path, ids: &[String], labels: &[LabelVector]) -> Result<()> {
    write_labels_to(std::fs::File::create(path)?, ids, labels)
}
