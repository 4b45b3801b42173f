use chrono::{DateTime, Utc};

use super::{AlignedSample, NormalizedSample};
use crate::error::{CoreError, Result};

pub trait Timestamped {
    fn timestamp(&self) -> DateTime<Utc>;
    fn key(&self) -> &str;
}

impl Timestamped for AlignedSample {
    fn timestamp(&self) -> DateTime<Utc> {
        self.event_timestamp
    }
    fn key(&self) -> &str {
        &self.event_id
    }
}

impl Timestamped for NormalizedSample {
    fn timestamp(&self) -> DateTime<Utc> {
        self.event_timestamp
    }
    fn key(&self) -> &str {
        &self.event_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

impl<T> DatasetSplit<T> {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Sorts by event time (then id) and cuts `floor(0.6 N)` train,
/// `floor(0.2 N)` validation and the remainder test.
pub fn split_dataset<T: Timestamped>(mut samples: Vec<T>) -> Result<DatasetSplit<T>> {
    let n = samples.len();
    if n < 5 {
        return Err(CoreError::Dataset(format!("need at least 5 samples to split, have {n}")));
    }
    samples.sort_by(|a, b| (a.timestamp(), a.key()).cmp(&(b.timestamp(), b.key())));
    let n_train = n * 6 / 10;
    let n_val = n * 2 / 10;
    let test = samples.split_off(n_train + n_val);
    let validation = samples.split_off(n_train);
    Ok(DatasetSplit {
        train: samples,
        validation,
        test,
    })
}
