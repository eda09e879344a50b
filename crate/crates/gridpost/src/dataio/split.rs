//! Chronological train/validation/test partitioning.

use chrono::NaiveDate;

use super::{Dataset, DatasetSplit};
use crate::error::{Error, Result};

/// Splits samples and grids into three contiguous date ranges:
/// train up to and including `train_end`, validation up to and including
/// `val_end`, test afterwards. Input order does not matter (sort-then-split);
/// an empty partition is a configuration error.
pub fn chronological_split(
    dataset: &Dataset,
    train_end: NaiveDate,
    val_end: NaiveDate,
) -> Result<DatasetSplit> {
    if val_end <= train_end {
        return Err(Error::config(format!(
            "validation end {val_end} must come after train end {train_end}"
        )));
    }
    let mut parts = [
        empty_like(dataset),
        empty_like(dataset),
        empty_like(dataset),
    ];
    let part_of = |date: NaiveDate| -> usize {
        if date <= train_end {
            0
        } else if date <= val_end {
            1
        } else {
            2
        }
    };
    let mut samples = dataset.samples.clone();
    samples.sort_by_key(|s| (s.date, s.station));
    for sample in samples {
        let p = part_of(sample.date);
        parts[p].samples.push(sample);
    }
    for (var, fields) in &dataset.grids {
        let mut sorted = fields.clone();
        sorted.sort_by_key(|f| f.valid_date);
        for field in sorted {
            let p = part_of(field.valid_date);
            parts[p]
                .grids
                .entry(var.clone())
                .or_default()
                .push(field);
        }
    }
    let [train, validation, test] = parts;
    for (name, part) in [("train", &train), ("validation", &validation), ("test", &test)] {
        if part.samples.is_empty() && part.grids.values().all(|g| g.is_empty()) {
            return Err(Error::config(format!("{name} partition is empty")));
        }
    }
    Ok(DatasetSplit {
        train,
        validation,
        test,
    })
}

fn empty_like(dataset: &Dataset) -> Dataset {
    Dataset {
        stations: dataset.stations.clone(),
        predictor_names: dataset.predictor_names.clone(),
        samples: Vec::new(),
        grids: Default::default(),
    }
}
