//! File formats.
//!
//! Datasets are long CSV with header
//! `object_id,label,attribute_id,judgment_index,value`, one row per judgment.
//! Repeat vectors, predictors and models are JSON.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JudgmentDataset, RepeatVector};

pub const DATASET_HEADER: [&str; 5] = ["object_id", "label", "attribute_id", "judgment_index", "value"];

#[derive(Debug, Deserialize)]
struct JudgmentRow {
    object_id: u64,
    label: f64,
    attribute_id: usize,
    judgment_index: u32,
    value: f64,
}

pub fn write_dataset<W: Write>(data: &JudgmentDataset, out: W) -> Result<()> {
    if data.repeats().total_count() == 0 {
        return Err(Error::InvalidDataset("a dataset without judgments has no CSV representation".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DATASET_HEADER)?;
    for (i, (&id, &label)) in data.object_ids().iter().zip(data.labels()).enumerate() {
        for a in 0..data.num_attributes() {
            for (j, &x) in data.judgments(i, a).iter().enumerate() {
                w.write_record([id.to_string(), label.to_string(), a.to_string(), j.to_string(), x.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a long-format dataset. Objects keep their order of first appearance.
///
/// The attribute count is the largest `attribute_id` plus one unless
/// `attributes` is given, which allows trailing attributes with no judgments.
pub fn read_dataset<R: Read>(input: R, attributes: Option<usize>) -> Result<JudgmentDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(Error::MalformedFile(format!(
            "expected header `{}`, found `{}`",
            DATASET_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut order: Vec<u64> = Vec::new();
    let mut labels: BTreeMap<u64, f64> = BTreeMap::new();
    let mut cells: BTreeMap<(u64, usize), BTreeMap<u32, f64>> = BTreeMap::new();
    let mut max_attr = 0;
    for (line, row) in reader.deserialize::<JudgmentRow>().enumerate() {
        let row = row.map_err(|e| Error::MalformedFile(format!("row {}: {e}", line + 2)))?;
        match labels.get(&row.object_id) {
            None => {
                labels.insert(row.object_id, row.label);
                order.push(row.object_id);
            }
            Some(&y) if y.to_bits() != row.label.to_bits() => {
                return Err(Error::MalformedFile(format!(
                    "object {} has conflicting labels {y} and {}",
                    row.object_id, row.label
                )));
            }
            Some(_) => {}
        }
        max_attr = max_attr.max(row.attribute_id + 1);
        let cell = cells.entry((row.object_id, row.attribute_id)).or_default();
        if cell.insert(row.judgment_index, row.value).is_some() {
            return Err(Error::MalformedFile(format!(
                "duplicate judgment {} of attribute {} on object {}",
                row.judgment_index, row.attribute_id, row.object_id
            )));
        }
    }
    if order.is_empty() {
        return Err(Error::MalformedFile("no judgment rows".into()));
    }
    let d = match attributes {
        Some(d) if d < max_attr => {
            return Err(Error::MalformedFile(format!("attribute id {} exceeds declared count {d}", max_attr - 1)))
        }
        Some(d) => d,
        None => max_attr,
    };

    let mut judgments = Vec::with_capacity(order.len());
    for &id in &order {
        let mut row = Vec::with_capacity(d);
        for a in 0..d {
            let values = match cells.remove(&(id, a)) {
                None => Vec::new(),
                Some(cell) => {
                    if cell.keys().enumerate().any(|(pos, &j)| pos as u32 != j) {
                        return Err(Error::MalformedFile(format!(
                            "judgment indices of attribute {a} on object {id} are not 0..n"
                        )));
                    }
                    cell.into_values().collect()
                }
            };
            row.push(values);
        }
        judgments.push(row);
    }
    let counts: Vec<u32> = judgments[0].iter().map(|v| v.len() as u32).collect();
    let ids = order.clone();
    let labels = order.iter().map(|id| labels[id]).collect();
    JudgmentDataset::with_ids(ids, labels, judgments, RepeatVector::new(counts))
        .map_err(|e| Error::MalformedFile(e.to_string()))
}

pub fn save_dataset(data: &JudgmentDataset, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    write_dataset(data, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path, attributes: Option<usize>) -> Result<JudgmentDataset> {
    read_dataset(File::open(path)?, attributes)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
